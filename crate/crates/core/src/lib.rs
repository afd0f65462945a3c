//! Federated learning over a LEO Walker Delta constellation with optical
//! inter-satellite links.
//!
//! A ground station picks the nearest visible satellite as edge server; the
//! edge clusters neighbouring satellites by link distance or SNR and runs
//! federated averaging with them, re-clustering under attrition and handing
//! the task over when its ground link degrades. Centralized and distributed
//! baselines share the same membership dynamics, and an analytic model
//! reports delay, compute and memory overhead for all three.

pub mod baselines;
pub mod error;
pub mod fl;
pub mod lesc;
pub mod optical;
pub mod orbits;
pub mod rng;
pub mod scenario;

pub use baselines::{Architecture, OverheadReport};
pub use error::{Error, Result};
pub use lesc::{ClusterState, LescConfig, RoundLog};
pub use optical::{LinkBudget, LinkSample, OpticalParams};
pub use orbits::{EcefPosition, SatIndex, WalkerConfig};
pub use scenario::{load_config, run_scenario, ScenarioConfig};
