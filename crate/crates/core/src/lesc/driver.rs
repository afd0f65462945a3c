//! Round-by-round cluster membership shared by every architecture.

use std::collections::BTreeSet;

use super::{cluster, maybe_handover, maybe_recluster, prune_clients, select_edge, ClusterState, Environment, LescConfig};
use crate::error::{Error, Result};
use crate::fl::ModelParams;
use crate::orbits::SatIndex;

/// Membership changes produced by one round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MembershipStep {
    pub round: u32,
    /// False when no edge could be selected this round.
    pub covered: bool,
    /// The edge was selected for the first time or replaced this round.
    pub edge_changed: bool,
    pub handover: bool,
    pub reclustered: bool,
    pub admitted: Vec<SatIndex>,
    pub removed: Vec<SatIndex>,
}

/// Tracks the edge and cluster across rounds: initial selection, then
/// handover, pruning and re-clustering each round.
///
/// While no satellite is visible before the first selection, rounds are
/// reported as uncovered and selection is retried. Once an edge exists, a
/// handover that finds no visible replacement leaves the current edge in
/// charge.
#[derive(Debug, Clone)]
pub struct Membership<'a> {
    env: &'a Environment,
    cfg: &'a LescConfig,
    initial_model: ModelParams,
    state: Option<ClusterState>,
}

impl<'a> Membership<'a> {
    pub fn new(env: &'a Environment, cfg: &'a LescConfig, initial_model: ModelParams) -> Self {
        Self {
            env,
            cfg,
            initial_model,
            state: None,
        }
    }

    pub fn state(&self) -> Option<&ClusterState> {
        self.state.as_ref()
    }

    pub fn state_mut(&mut self) -> Option<&mut ClusterState> {
        self.state.as_mut()
    }

    pub fn advance(&mut self, round: u32, t_s: f64) -> Result<MembershipStep> {
        let (env, cfg) = (self.env, self.cfg);
        let before: BTreeSet<SatIndex> = self.state.as_ref().map(|s| s.clients.clone()).unwrap_or_default();
        let mut step = MembershipStep {
            round,
            ..MembershipStep::default()
        };

        let next = match self.state.take() {
            None => match select_edge(env, cfg, t_s) {
                Ok(edge) => {
                    let clients = cluster(env, cfg, edge, t_s, round)?;
                    step.edge_changed = true;
                    ClusterState {
                        round,
                        edge,
                        baseline_size: clients.len(),
                        clients,
                        global_model: self.initial_model.clone(),
                    }
                }
                Err(Error::NoCoverage { .. }) => return Ok(step),
                Err(e) => return Err(e),
            },
            Some(current) => {
                let current = match maybe_handover(&current, env, cfg, t_s, round) {
                    Ok((s, fired)) => {
                        step.handover = fired;
                        step.edge_changed = fired;
                        s
                    }
                    Err(Error::NoCoverage { .. }) => current,
                    Err(e) => return Err(e),
                };
                let (pruned, _) = prune_clients(&current, env, cfg, t_s, round)?;
                let (s, reclustered) = maybe_recluster(&pruned, env, cfg, t_s, round)?;
                step.reclustered = reclustered;
                s
            }
        };

        step.covered = true;
        step.admitted = next.clients.difference(&before).copied().collect();
        step.removed = before.difference(&next.clients).copied().collect();
        self.state = Some(ClusterState { round, ..next });
        Ok(step)
    }
}
