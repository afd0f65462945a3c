//! Centralized baseline: clients ship raw shards to the edge, which trains
//! one model on the pooled data.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::fl::{corrupt_values, evaluate, train_epochs, Corruption, Dataset};
use crate::lesc::{Membership, RoundLog, SimInputs};
use crate::orbits::SatIndex;
use crate::rng::{substream, SimRng, Stream};

/// Stream driving the edge's SGD across all rounds of a centralized run.
pub fn edge_training_rng(seed: u64) -> SimRng {
    substream(seed, Stream::Train, &[u64::MAX])
}

/// Runs the centralized baseline with the same membership dynamics and
/// round boundaries as the federated run.
///
/// Each client ships its shard once per clustering epoch: on admission, and
/// again to a new edge after a handover. Feature vectors pass through the
/// same channel impairment as models do, with zeros standing in for values
/// that never arrive, and are clamped back into [0, 1]. Each round the edge
/// trains `local_epochs` epochs on the pool.
pub fn run_cl(inputs: &SimInputs<'_>) -> Result<Vec<RoundLog>> {
    inputs.validate()?;
    let env = inputs.env;
    let initial = inputs.initial_model();
    let mut membership = Membership::new(env, inputs.lesc, initial.clone());
    let mut shards: BTreeMap<SatIndex, Dataset> = BTreeMap::new();
    let mut pool: BTreeMap<SatIndex, Dataset> = BTreeMap::new();
    let mut rng = edge_training_rng(inputs.seed);
    let mut logs = Vec::with_capacity(inputs.lesc.rounds as usize);

    for round in 1..=inputs.lesc.rounds {
        let t = inputs.time_of(round);
        let step = membership.advance(round, t)?;
        let Some(state) = membership.state() else {
            logs.push(inputs.empty_log(round, &initial)?);
            continue;
        };
        let edge = state.edge;
        for sat in &step.removed {
            shards.remove(sat);
            pool.remove(sat);
        }
        for &sat in &step.admitted {
            shards.insert(sat, inputs.shard_for(sat, round)?);
        }
        if step.edge_changed {
            pool.clear();
        }

        let edge_pos = env.walker.position_at(edge, t)?;
        let members: Vec<(&SatIndex, &Dataset)> = shards.iter().collect();
        let received: Vec<(SatIndex, Option<Dataset>, f64)> = members
            .par_iter()
            .map(|&(&sat, shard)| {
                let d = env.walker.position_at(sat, t)?.distance_to(&edge_pos);
                let link = env.isl_link(round, edge, sat, d)?;
                if pool.contains_key(&sat) {
                    return Ok((sat, None, link.snr_linear));
                }
                let data = match inputs.corruption {
                    Corruption::None => shard.clone(),
                    mode => {
                        let values = shard.flat_features();
                        let zeros = vec![0.0; values.len()];
                        let key = [u64::from(round), sat.key()];
                        let mut r = substream(inputs.seed, Stream::DataTransfer, &key);
                        shard.with_features(&corrupt_values(&values, &zeros, &link, mode, &mut r)?)?
                    }
                };
                Ok((sat, Some(data), link.snr_linear))
            })
            .collect::<Result<_>>()?;

        let mut shipped = false;
        let mut snrs = Vec::with_capacity(received.len());
        for (sat, data, snr) in received {
            snrs.push(snr);
            if let Some(data) = data {
                pool.insert(sat, data);
                shipped = true;
            }
        }

        let mut model = state.global_model.clone();
        let trained = !pool.is_empty();
        if trained {
            let data = Dataset::concat(pool.values())?;
            model = train_epochs(&model, &data, inputs.train, inputs.train.local_epochs, &mut rng)?;
        }
        let (accuracy, global_loss) = evaluate(&model, inputs.test)?;
        if let Some(s) = membership.state_mut() {
            s.global_model = model;
        }
        let mut delay = 0.0;
        if trained {
            delay += inputs.round_delay_s;
        }
        if shipped {
            delay += inputs.transfer_delay_s;
        }
        logs.push(RoundLog {
            round,
            edge: Some(edge),
            cluster_size: shards.len(),
            reclustered: step.reclustered,
            handover: step.handover,
            accuracy,
            global_loss,
            mean_link_snr_db: crate::lesc::mean_db(&snrs),
            round_delay_s: delay,
        });
    }
    Ok(logs)
}
