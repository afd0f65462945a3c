//! Edge selection and client clustering.
//!
//! The ground station picks the visible satellite nearest to it as edge
//! server. The edge admits every satellite whose inter-satellite link meets
//! the clustering threshold, drops members that stop meeting it, rebuilds the
//! cluster when attrition crosses a fraction of the last clustered size (only
//! on re-clustering rounds), and hands the task to a new edge once its
//! ground link degrades.

mod driver;
mod fello;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::ModelParams;
use crate::optical::{LinkBudget, LinkSample};
use crate::orbits::{elevation_angle, ground_station_position, EcefPosition, SatIndex, WalkerConfig};
use crate::rng::{substream, Stream};

pub use driver::{Membership, MembershipStep};
pub use fello::{run_fello, SimInputs};
pub(crate) use fello::mean_db;

/// Link-quality criterion for admitting and keeping clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterThreshold {
    /// Admit when closer than `delta_d_km`; drop when farther.
    Distance { delta_d_km: f64 },
    /// Admit when SNR exceeds `delta_gamma` (linear); drop when below.
    Snr { delta_gamma: f64 },
}

/// Rounds between re-clustering opportunities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReclusterPeriod {
    Every(u32),
    Never,
}

impl ReclusterPeriod {
    pub fn is_due(self, round: u32) -> bool {
        match self {
            ReclusterPeriod::Every(p) => p > 0 && round % p == 0,
            ReclusterPeriod::Never => false,
        }
    }
}

impl fmt::Display for ReclusterPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReclusterPeriod::Every(p) => write!(f, "{p}"),
            ReclusterPeriod::Never => f.write_str("inf"),
        }
    }
}

impl Serialize for ReclusterPeriod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ReclusterPeriod::Every(p) => s.serialize_u32(*p),
            ReclusterPeriod::Never => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ReclusterPeriod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(p) if p >= 1 && p <= i64::from(u32::MAX) => Ok(ReclusterPeriod::Every(p as u32)),
            Raw::Int(p) => Err(serde::de::Error::custom(format!(
                "re-clustering period must be at least 1, got {p}"
            ))),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "never") => Ok(ReclusterPeriod::Never),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a positive integer or \"inf\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LescConfig {
    pub threshold: ClusterThreshold,
    pub recluster_period: ReclusterPeriod,
    /// ε: re-cluster when the cluster falls below this fraction of K'.
    pub recluster_fraction: f64,
    /// γ_th (linear): hand over when the edge's ground link drops below it.
    pub gsl_snr_threshold: f64,
    pub rounds: u32,
    pub gs_lat: f64,
    pub gs_lon: f64,
    pub min_elevation: f64,
}

impl Default for LescConfig {
    fn default() -> Self {
        Self {
            threshold: ClusterThreshold::Distance { delta_d_km: 2600.0 },
            recluster_period: ReclusterPeriod::Every(1),
            recluster_fraction: 0.7,
            gsl_snr_threshold: 100.0,
            rounds: 40,
            gs_lat: 0.0,
            gs_lon: 0.0,
            min_elevation: 10f64.to_radians(),
        }
    }
}

/// Physical environment of one run: constellation, link budgets and the
/// seed that keys per-round link draws.
#[derive(Debug, Clone)]
pub struct Environment {
    pub walker: WalkerConfig,
    pub isl: LinkBudget,
    pub gsl: LinkBudget,
    pub seed: u64,
}

impl Environment {
    /// The link between `a` and `b` in `round`. Pointing errors are drawn
    /// from a substream keyed by the round and the unordered pair, so every
    /// use of a link within one round sees the same sample.
    pub fn isl_link(&self, round: u32, a: SatIndex, b: SatIndex, distance_km: f64) -> Result<LinkSample> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut rng = substream(self.seed, Stream::Link, &[u64::from(round), lo.key(), hi.key()]);
        self.isl.evaluate(distance_km, &mut rng)
    }

    pub fn ground_station(&self, cfg: &LescConfig) -> EcefPosition {
        ground_station_position(cfg.gs_lat, cfg.gs_lon, self.walker.earth_radius_km)
    }
}

/// Ground-link quality of one satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GslQuality {
    /// Linear SNR; zero below the elevation mask.
    pub snr: f64,
    pub elevation: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub round: u32,
    pub edge: SatIndex,
    pub clients: BTreeSet<SatIndex>,
    /// K': cluster size at the most recent (re-)clustering.
    pub baseline_size: usize,
    pub global_model: ModelParams,
}

/// One record per round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: u32,
    pub edge: Option<SatIndex>,
    pub cluster_size: usize,
    pub reclustered: bool,
    pub handover: bool,
    pub accuracy: f64,
    pub global_loss: f64,
    pub mean_link_snr_db: Option<f64>,
    pub round_delay_s: f64,
}

/// SNR and elevation of the ground link to `sat`, evaluated with perfect
/// pointing through the ground link budget.
pub fn gsl_quality(
    env: &Environment,
    gs: &EcefPosition,
    sat: SatIndex,
    t_s: f64,
    min_elevation: f64,
) -> Result<GslQuality> {
    let pos = env.walker.position_at(sat, t_s)?;
    gsl_from_position(env, gs, &pos, min_elevation)
}

fn gsl_from_position(env: &Environment, gs: &EcefPosition, pos: &EcefPosition, min_elevation: f64) -> Result<GslQuality> {
    let distance_km = gs.distance_to(pos);
    let elevation = elevation_angle(gs, pos);
    let snr = if elevation < min_elevation {
        0.0
    } else {
        env.gsl.evaluate_aligned(distance_km)?.snr_linear
    };
    Ok(GslQuality {
        snr,
        elevation,
        distance_km,
    })
}

/// The visible satellite nearest the ground station; ties go to the lowest
/// index.
pub fn select_edge(env: &Environment, cfg: &LescConfig, t_s: f64) -> Result<SatIndex> {
    let gs = env.ground_station(cfg);
    let mut best: Option<(SatIndex, f64)> = None;
    for (sat, pos) in env.walker.snapshot(t_s)? {
        if elevation_angle(&gs, &pos) < cfg.min_elevation {
            continue;
        }
        let d = gs.distance_to(&pos);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((sat, d));
        }
    }
    best.map(|(s, _)| s).ok_or(Error::NoCoverage { t_s })
}

fn meets_threshold(
    env: &Environment,
    cfg: &LescConfig,
    round: u32,
    edge: SatIndex,
    sat: SatIndex,
    distance_km: f64,
) -> Result<bool> {
    Ok(match cfg.threshold {
        ClusterThreshold::Distance { delta_d_km } => distance_km < delta_d_km,
        ClusterThreshold::Snr { delta_gamma } => {
            env.isl_link(round, edge, sat, distance_km)?.snr_linear > delta_gamma
        }
    })
}

fn violates_threshold(
    env: &Environment,
    cfg: &LescConfig,
    round: u32,
    edge: SatIndex,
    sat: SatIndex,
    distance_km: f64,
) -> Result<bool> {
    Ok(match cfg.threshold {
        ClusterThreshold::Distance { delta_d_km } => distance_km > delta_d_km,
        ClusterThreshold::Snr { delta_gamma } => {
            env.isl_link(round, edge, sat, distance_km)?.snr_linear < delta_gamma
        }
    })
}

/// Every satellite whose link to `edge` meets the threshold, edge excluded.
pub fn cluster(env: &Environment, cfg: &LescConfig, edge: SatIndex, t_s: f64, round: u32) -> Result<BTreeSet<SatIndex>> {
    env.walker.check_index(edge)?;
    let edge_pos = env.walker.position_at(edge, t_s)?;
    let mut members = BTreeSet::new();
    for (sat, pos) in env.walker.snapshot(t_s)? {
        if sat != edge && meets_threshold(env, cfg, round, edge, sat, edge_pos.distance_to(&pos))? {
            members.insert(sat);
        }
    }
    Ok(members)
}

/// Drops clients whose link no longer meets the threshold. Returns the new
/// state and the removed clients.
pub fn prune_clients(
    state: &ClusterState,
    env: &Environment,
    cfg: &LescConfig,
    t_s: f64,
    round: u32,
) -> Result<(ClusterState, Vec<SatIndex>)> {
    let edge_pos = env.walker.position_at(state.edge, t_s)?;
    let mut kept = BTreeSet::new();
    let mut removed = Vec::new();
    for &sat in &state.clients {
        let d = env.walker.position_at(sat, t_s)?.distance_to(&edge_pos);
        if violates_threshold(env, cfg, round, state.edge, sat, d)? {
            removed.push(sat);
        } else {
            kept.insert(sat);
        }
    }
    let next = ClusterState {
        round,
        clients: kept,
        ..state.clone()
    };
    Ok((next, removed))
}

/// Re-clustering predicate: attrition below `fraction · K'` on a due round.
pub fn should_recluster(cluster_size: usize, baseline_size: usize, fraction: f64, round: u32, period: ReclusterPeriod) -> bool {
    (cluster_size as f64) < fraction * baseline_size as f64 && period.is_due(round)
}

/// Rebuilds the cluster around the current edge when [`should_recluster`]
/// holds; K' becomes the new size.
pub fn maybe_recluster(
    state: &ClusterState,
    env: &Environment,
    cfg: &LescConfig,
    t_s: f64,
    round: u32,
) -> Result<(ClusterState, bool)> {
    if !should_recluster(
        state.clients.len(),
        state.baseline_size,
        cfg.recluster_fraction,
        round,
        cfg.recluster_period,
    ) {
        return Ok((state.clone(), false));
    }
    let clients = cluster(env, cfg, state.edge, t_s, round)?;
    let next = ClusterState {
        round,
        baseline_size: clients.len(),
        clients,
        ..state.clone()
    };
    Ok((next, true))
}

/// Hands the task to the best visible satellite when the edge's ground link
/// falls below γ_th. The global model moves unchanged; the new edge clusters
/// afresh and K' is reset. If the best candidate is the current edge nothing
/// changes.
pub fn maybe_handover(
    state: &ClusterState,
    env: &Environment,
    cfg: &LescConfig,
    t_s: f64,
    round: u32,
) -> Result<(ClusterState, bool)> {
    let gs = env.ground_station(cfg);
    let q = gsl_quality(env, &gs, state.edge, t_s, cfg.min_elevation)?;
    if q.snr >= cfg.gsl_snr_threshold {
        return Ok((state.clone(), false));
    }
    let edge = select_edge(env, cfg, t_s)?;
    if edge == state.edge {
        return Ok((state.clone(), false));
    }
    let clients = cluster(env, cfg, edge, t_s, round)?;
    let next = ClusterState {
        round,
        edge,
        baseline_size: clients.len(),
        clients,
        global_model: state.global_model.clone(),
    };
    Ok((next, true))
}
