//! Distributed baseline: every cluster member trains alone.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::fl::{evaluate, train_local, ClientState, ModelParams};
use crate::lesc::{Membership, RoundLog, SimInputs};
use crate::orbits::SatIndex;
use crate::rng::{substream, Stream};

/// Runs isolated local training over the cluster membership of the
/// federated run. New members start from the initial model with a fresh
/// shard. Reported accuracy and loss are means over the current members'
/// own test results (NaN when the cluster is empty). No link is ever used.
pub fn run_dl(inputs: &SimInputs<'_>) -> Result<Vec<RoundLog>> {
    inputs.validate()?;
    let initial = inputs.initial_model();
    let mut membership = Membership::new(inputs.env, inputs.lesc, initial.clone());
    let mut clients: BTreeMap<SatIndex, ClientState> = BTreeMap::new();
    let mut logs = Vec::with_capacity(inputs.lesc.rounds as usize);

    for round in 1..=inputs.lesc.rounds {
        let step = membership.advance(round, inputs.time_of(round))?;
        let Some(state) = membership.state() else {
            logs.push(inputs.empty_log(round, &initial)?);
            continue;
        };
        let edge = state.edge;
        for sat in &step.removed {
            clients.remove(sat);
        }
        for &sat in &step.admitted {
            clients.insert(
                sat,
                ClientState {
                    sat,
                    shard: inputs.shard_for(sat, round)?,
                    local_model: initial.clone(),
                },
            );
        }

        let results: Vec<(ModelParams, f64, f64)> = clients
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|c| {
                let mut rng = substream(inputs.seed, Stream::Train, &[u64::from(round), c.sat.key()]);
                let model = train_local(&c.shard, &c.local_model, inputs.train, &mut rng)?;
                let (acc, loss) = evaluate(&model, inputs.test)?;
                Ok((model, acc, loss))
            })
            .collect::<Result<_>>()?;

        let n = results.len();
        let (mut acc_sum, mut loss_sum) = (0.0, 0.0);
        for (c, (model, acc, loss)) in clients.values_mut().zip(results) {
            c.local_model = model;
            acc_sum += acc;
            loss_sum += loss;
        }
        let (accuracy, global_loss) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (acc_sum / n as f64, loss_sum / n as f64)
        };
        logs.push(RoundLog {
            round,
            edge: Some(edge),
            cluster_size: n,
            reclustered: step.reclustered,
            handover: step.handover,
            accuracy,
            global_loss,
            mean_link_snr_db: None,
            round_delay_s: if n > 0 { inputs.round_delay_s } else { 0.0 },
        });
    }
    Ok(logs)
}
