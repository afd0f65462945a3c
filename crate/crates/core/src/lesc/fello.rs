//! Federated training over the edge-managed cluster.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{Environment, LescConfig, Membership, RoundLog};
use crate::error::{Error, Result};
use crate::fl::{
    aggregate_with, corrupt_model, evaluate, sample_shard, train_local, ClientState, Corruption, Dataset, MlpArch,
    ModelParams, TrainConfig, Weighting,
};
use crate::optical::to_db;
use crate::orbits::SatIndex;
use crate::rng::{substream, Stream};

/// Everything one simulated run needs besides the architecture itself.
#[derive(Debug, Clone)]
pub struct SimInputs<'a> {
    pub env: &'a Environment,
    pub lesc: &'a LescConfig,
    pub train: &'a TrainConfig,
    pub weighting: Weighting,
    pub corruption: Corruption,
    pub hidden_size: usize,
    /// Pool that client shards are drawn from.
    pub train_pool: &'a Dataset,
    pub test: &'a Dataset,
    /// N_k, samples per client.
    pub shard_size: usize,
    /// Orbital time between consecutive rounds.
    pub round_interval_s: f64,
    /// Wall-clock delay charged per training round.
    pub round_delay_s: f64,
    /// Extra delay charged in rounds that move raw data (centralized only).
    pub transfer_delay_s: f64,
    pub seed: u64,
}

impl SimInputs<'_> {
    pub fn arch(&self) -> MlpArch {
        MlpArch::new(self.train_pool.n_features(), self.hidden_size, self.train_pool.n_classes())
    }

    pub fn initial_model(&self) -> ModelParams {
        ModelParams::init(self.arch(), &mut substream(self.seed, Stream::Init, &[]))
    }

    /// Orbital time of round `round`: `round · Δt`.
    pub fn time_of(&self, round: u32) -> f64 {
        f64::from(round) * self.round_interval_s
    }

    /// Shard of the client `sat` admitted in `round`.
    pub fn shard_for(&self, sat: SatIndex, round: u32) -> Result<Dataset> {
        let mut rng = substream(self.seed, Stream::Shard, &[sat.key(), u64::from(round)]);
        sample_shard(self.train_pool, self.shard_size, &mut rng)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.test.n_features() != self.train_pool.n_features() || self.test.n_classes() != self.train_pool.n_classes() {
            return Err(Error::Shape("train and test sets differ in shape".into()));
        }
        if self.test.is_empty() {
            return Err(Error::Domain("empty test set".into()));
        }
        if self.shard_size == 0 || self.shard_size > self.train_pool.len() {
            return Err(Error::Domain(format!(
                "shard size {} must be between 1 and the pool size {}",
                self.shard_size,
                self.train_pool.len()
            )));
        }
        if !(self.round_interval_s.is_finite() && self.round_interval_s >= 0.0) {
            return Err(Error::Domain("round interval must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn empty_log(&self, round: u32, model: &ModelParams) -> Result<RoundLog> {
        let (accuracy, global_loss) = evaluate(model, self.test)?;
        Ok(RoundLog {
            round,
            edge: None,
            cluster_size: 0,
            reclustered: false,
            handover: false,
            accuracy,
            global_loss,
            mean_link_snr_db: None,
            round_delay_s: 0.0,
        })
    }
}

pub(crate) fn mean_db(snrs: &[f64]) -> Option<f64> {
    if snrs.is_empty() {
        None
    } else {
        Some(snrs.iter().map(|&g| to_db(g)).sum::<f64>() / snrs.len() as f64)
    }
}

struct ClientUpdate {
    trained: ModelParams,
    uploaded: ModelParams,
    snr: f64,
}

/// Runs the edge-managed federated protocol for `lesc.rounds` rounds.
///
/// Each round: membership update, then every client receives the global
/// model over its link, trains locally, and sends the result back; the edge
/// aggregates in ascending satellite order. Client work runs on the current
/// rayon pool and every random draw is keyed by (round, client), so results
/// do not depend on the number of workers.
pub fn run_fello(inputs: &SimInputs<'_>) -> Result<Vec<RoundLog>> {
    inputs.validate()?;
    let env = inputs.env;
    let mut membership = Membership::new(env, inputs.lesc, inputs.initial_model());
    let mut clients: BTreeMap<SatIndex, ClientState> = BTreeMap::new();
    let mut logs = Vec::with_capacity(inputs.lesc.rounds as usize);

    for round in 1..=inputs.lesc.rounds {
        let t = inputs.time_of(round);
        let step = membership.advance(round, t)?;
        let Some(state) = membership.state() else {
            logs.push(inputs.empty_log(round, &inputs.initial_model())?);
            continue;
        };
        let global = state.global_model.clone();
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
                    local_model: global.clone(),
                },
            );
        }

        let edge_pos = env.walker.position_at(edge, t)?;
        let members: Vec<&ClientState> = clients.values().collect();
        let updates: Vec<ClientUpdate> = members
            .par_iter()
            .map(|c| {
                let key = [u64::from(round), c.sat.key()];
                let d = env.walker.position_at(c.sat, t)?.distance_to(&edge_pos);
                let link = env.isl_link(round, edge, c.sat, d)?;
                let mut down = substream(inputs.seed, Stream::Downlink, &key);
                let received = corrupt_model(&global, &c.local_model, &link, inputs.corruption, &mut down)?;
                let mut train_rng = substream(inputs.seed, Stream::Train, &key);
                let trained = train_local(&c.shard, &received, inputs.train, &mut train_rng)?;
                let mut up = substream(inputs.seed, Stream::Uplink, &key);
                let uploaded = corrupt_model(&trained, &global, &link, inputs.corruption, &mut up)?;
                Ok(ClientUpdate {
                    trained,
                    uploaded,
                    snr: link.snr_linear,
                })
            })
            .collect::<Result<_>>()?;

        let snrs: Vec<f64> = updates.iter().map(|u| u.snr).collect();
        let next_global = if updates.is_empty() {
            global
        } else {
            let pairs: Vec<(&ModelParams, usize)> = updates
                .iter()
                .zip(clients.values())
                .map(|(u, c)| (&u.uploaded, c.shard.len()))
                .collect();
            aggregate_with(&pairs, inputs.weighting)?
        };
        let trained_any = !updates.is_empty();
        for (c, u) in clients.values_mut().zip(updates) {
            c.local_model = u.trained;
        }

        let (accuracy, global_loss) = evaluate(&next_global, inputs.test)?;
        let cluster_size = clients.len();
        if let Some(s) = membership.state_mut() {
            s.global_model = next_global;
        }
        logs.push(RoundLog {
            round,
            edge: Some(edge),
            cluster_size,
            reclustered: step.reclustered,
            handover: step.handover,
            accuracy,
            global_loss,
            mean_link_snr_db: mean_db(&snrs),
            round_delay_s: if trained_any { inputs.round_delay_s } else { 0.0 },
        });
    }
    Ok(logs)
}
