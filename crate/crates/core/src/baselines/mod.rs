//! Centralized and distributed baselines, and the delay/compute/memory
//! overhead model for all three architectures.

mod cl;
mod dl;
pub mod overhead;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cl::{edge_training_rng, run_cl};
pub use dl::run_dl;
pub use overhead::{
    analytic_reports, derive_times, overhead_cl, overhead_dl, overhead_fello, table2_inputs, table2_reports,
    AnalyticSetup, OverheadInputs, OverheadReport, Workload,
};

/// Training architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Edge-managed federated learning.
    Fello,
    /// Raw data pooled at the edge.
    Cl,
    /// Isolated local training.
    Dl,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Fello, Architecture::Cl, Architecture::Dl];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Fello => "fello",
            Architecture::Cl => "cl",
            Architecture::Dl => "dl",
        }
    }

    /// Stable numeric tag used in seed derivation.
    pub fn tag(self) -> u64 {
        match self {
            Architecture::Fello => 0,
            Architecture::Cl => 1,
            Architecture::Dl => 2,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown architecture `{s}` (expected fello, cl or dl)")))
    }
}
