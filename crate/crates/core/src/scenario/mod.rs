//! Scenario files: TOML configuration with reference defaults, parameter
//! sweeps, and conversion into the simulation's domain types.

mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Architecture;
use crate::error::{Error, Result};
use crate::fl::{load_mnist, mnist_paths, Corruption, Dataset, MnistSplit, SyntheticSpec, TrainConfig, Weighting};
use crate::lesc::{ClusterThreshold, Environment, LescConfig, ReclusterPeriod};
use crate::optical::{from_db, BerScheme, LinkBudget, OpticalParams, SnrForm};
use crate::orbits::{Phasing, PositionForm, WalkerConfig, EARTH_RADIUS_KM, EARTH_ROTATION_RATE};
use crate::rng::{derive_seed, Stream};

pub use run::{
    emit_overhead_report, format_metric, link_report, overhead_reports, run_scenario, LinkReport, RunSummary,
    METRICS_HEADER, METRICS_VERSION_LINE,
};

/// Largest seed that survives a round trip through TOML's signed integers.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub architectures: Vec<Architecture>,
    pub constellation: ConstellationSection,
    pub isl: OpticalParams,
    pub gsl: OpticalParams,
    pub link: LinkSection,
    pub lesc: LescSection,
    pub train: TrainSection,
    pub corruption: Corruption,
    pub dataset: DatasetSection,
    pub overhead: OverheadSection,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            output_dir: PathBuf::from("out"),
            architectures: Architecture::ALL.to_vec(),
            constellation: ConstellationSection::default(),
            isl: OpticalParams::default(),
            gsl: OpticalParams::default(),
            link: LinkSection::default(),
            lesc: LescSection::default(),
            train: TrainSection::default(),
            corruption: Corruption::None,
            dataset: DatasetSection::default(),
            overhead: OverheadSection::default(),
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationSection {
    pub n_orbits: u32,
    pub sats_per_orbit: u32,
    pub inclination_deg: f64,
    pub altitude_km: f64,
    pub earth_radius_km: f64,
    /// Node drift, rad/s.
    pub earth_rotation_rate: f64,
    pub phasing: Phasing,
    pub position_form: PositionForm,
    /// In-plane rate, rad/s; two-body value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_motion_override: Option<f64>,
}

impl Default for ConstellationSection {
    fn default() -> Self {
        Self {
            n_orbits: 36,
            sats_per_orbit: 20,
            inclination_deg: 70.0,
            altitude_km: 570.0,
            earth_radius_km: EARTH_RADIUS_KM,
            earth_rotation_rate: EARTH_ROTATION_RATE,
            phasing: Phasing::Standard,
            position_form: PositionForm::Standard,
            mean_motion_override: None,
        }
    }
}

impl ConstellationSection {
    pub fn walker(&self) -> WalkerConfig {
        WalkerConfig {
            n_orbits: self.n_orbits,
            sats_per_orbit: self.sats_per_orbit,
            inclination: self.inclination_deg.to_radians(),
            altitude_km: self.altitude_km,
            earth_radius_km: self.earth_radius_km,
            earth_rotation_rate: self.earth_rotation_rate,
            phasing: self.phasing,
            position_form: self.position_form,
            mean_motion_override: self.mean_motion_override,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(Error::config(
                "constellation.inclination_deg",
                format!("must lie in [0, 180], got {}", self.inclination_deg),
            ));
        }
        self.walker().validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("constellation.{field}"),
                reason,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub snr_form: SnrForm,
    pub ber: BerScheme,
}

impl LinkSection {
    fn validate(&self) -> Result<()> {
        if let BerScheme::Fixed(p) = self.ber {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("link.ber", format!("fixed bit error rate must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    Distance,
    Snr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrUnits {
    #[default]
    Db,
    Linear,
}

impl SnrUnits {
    fn to_linear(self, v: f64) -> f64 {
        match self {
            SnrUnits::Db => from_db(v),
            SnrUnits::Linear => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LescSection {
    pub threshold_mode: ThresholdMode,
    pub delta_d_km: f64,
    /// In `snr_units`.
    pub delta_gamma: f64,
    pub snr_units: SnrUnits,
    pub recluster_period: ReclusterPeriod,
    pub recluster_fraction: f64,
    /// Ground-link handover threshold, in `snr_units`.
    pub gsl_snr_threshold: f64,
    pub rounds: u32,
    pub gs_lat_deg: f64,
    pub gs_lon_deg: f64,
    pub min_elevation_deg: f64,
    /// Orbital time per round; the per-round delay of the overhead model
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_interval_s: Option<f64>,
}

impl Default for LescSection {
    fn default() -> Self {
        Self {
            threshold_mode: ThresholdMode::Distance,
            delta_d_km: 2600.0,
            delta_gamma: 52.0,
            snr_units: SnrUnits::Db,
            recluster_period: ReclusterPeriod::Every(1),
            recluster_fraction: 0.7,
            gsl_snr_threshold: 20.0,
            rounds: 40,
            gs_lat_deg: 0.0,
            gs_lon_deg: 0.0,
            min_elevation_deg: 10.0,
            round_interval_s: None,
        }
    }
}

impl LescSection {
    pub fn lesc_config(&self) -> LescConfig {
        let threshold = match self.threshold_mode {
            ThresholdMode::Distance => ClusterThreshold::Distance {
                delta_d_km: self.delta_d_km,
            },
            ThresholdMode::Snr => ClusterThreshold::Snr {
                delta_gamma: self.snr_units.to_linear(self.delta_gamma),
            },
        };
        LescConfig {
            threshold,
            recluster_period: self.recluster_period,
            recluster_fraction: self.recluster_fraction,
            gsl_snr_threshold: self.snr_units.to_linear(self.gsl_snr_threshold),
            rounds: self.rounds,
            gs_lat: self.gs_lat_deg.to_radians(),
            gs_lon: self.gs_lon_deg.to_radians(),
            min_elevation: self.min_elevation_deg.to_radians(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_d_km.is_finite() && self.delta_d_km > 0.0) {
            return Err(Error::config("lesc.delta_d_km", "must be positive"));
        }
        let snr_ok = |v: f64| match self.snr_units {
            SnrUnits::Db => v.is_finite(),
            SnrUnits::Linear => v.is_finite() && v >= 0.0,
        };
        if !snr_ok(self.delta_gamma) {
            return Err(Error::config("lesc.delta_gamma", "must be finite (and non-negative when linear)"));
        }
        if !snr_ok(self.gsl_snr_threshold) {
            return Err(Error::config("lesc.gsl_snr_threshold", "must be finite (and non-negative when linear)"));
        }
        if !(self.recluster_fraction > 0.0 && self.recluster_fraction <= 1.0) {
            return Err(Error::config(
                "lesc.recluster_fraction",
                format!("must lie in (0, 1], got {}", self.recluster_fraction),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("lesc.rounds", "must be at least 1"));
        }
        if !(-90.0..=90.0).contains(&self.gs_lat_deg) {
            return Err(Error::config("lesc.gs_lat_deg", "must lie in [-90, 90]"));
        }
        if !(-360.0..=360.0).contains(&self.gs_lon_deg) {
            return Err(Error::config("lesc.gs_lon_deg", "must lie in [-360, 360]"));
        }
        if !(-90.0..=90.0).contains(&self.min_elevation_deg) {
            return Err(Error::config("lesc.min_elevation_deg", "must lie in [-90, 90]"));
        }
        if let Some(dt) = self.round_interval_s {
            if !(dt.is_finite() && dt >= 0.0) {
                return Err(Error::config("lesc.round_interval_s", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Weights renormalised over the clients of the round.
    #[default]
    Participating,
    /// Weights `N_k / total_samples`.
    FixedTotal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub local_epochs: u32,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub aggregation: AggregationMode,
    /// N, used by fixed-total aggregation.
    pub total_samples: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            hidden_size: 64,
            aggregation: AggregationMode::Participating,
            total_samples: 60_000,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn weighting(&self) -> Weighting {
        match self.aggregation {
            AggregationMode::Participating => Weighting::Participating,
            AggregationMode::FixedTotal => Weighting::FixedTotal(self.total_samples),
        }
    }

    fn validate(&self) -> Result<()> {
        self.train_config().validate("train")?;
        if self.hidden_size == 0 {
            return Err(Error::config("train.hidden_size", "must be at least 1"));
        }
        if self.total_samples == 0 {
            return Err(Error::config("train.total_samples", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Directory with the four uncompressed IDX files.
    pub mnist_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    /// N_k.
    pub samples_per_client: usize,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Mnist,
            mnist_dir: PathBuf::from("data/mnist"),
            train_limit: None,
            test_limit: None,
            samples_per_client: 2208,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl DatasetSection {
    fn validate(&self) -> Result<()> {
        if self.samples_per_client == 0 {
            return Err(Error::config("dataset.samples_per_client", "must be at least 1"));
        }
        for (name, limit) in [("train_limit", self.train_limit), ("test_limit", self.test_limit)] {
            if limit == Some(0) {
                return Err(Error::config(format!("dataset.{name}"), "must be at least 1"));
            }
        }
        self.synthetic.validate("dataset.synthetic")?;
        if self.synthetic.seed > MAX_SEED {
            return Err(Error::config("dataset.synthetic.seed", format!("must not exceed {MAX_SEED}")));
        }
        Ok(())
    }

    /// Input dimensions (features, classes) without loading any data.
    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            DatasetKind::Mnist => (784, 10),
            DatasetKind::Synthetic => (self.synthetic.n_features, self.synthetic.n_classes),
        }
    }

    /// Fails with a configuration error naming the first missing input file.
    pub fn check_files(&self) -> Result<()> {
        if self.kind != DatasetKind::Mnist {
            return Ok(());
        }
        for split in [MnistSplit::Train, MnistSplit::Test] {
            let (images, labels) = mnist_paths(&self.mnist_dir, split);
            for p in [images, labels] {
                if !p.is_file() {
                    return Err(Error::config("dataset.mnist_dir", format!("missing file {}", p.display())));
                }
            }
        }
        Ok(())
    }

    /// (training pool, test set).
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (pool, test) = match self.kind {
            DatasetKind::Mnist => (
                load_mnist(&self.mnist_dir, MnistSplit::Train, self.train_limit)?,
                load_mnist(&self.mnist_dir, MnistSplit::Test, self.test_limit)?,
            ),
            DatasetKind::Synthetic => {
                let train = self.synthetic.train();
                let test = self.synthetic.test();
                (
                    self.train_limit.map_or_else(|| train.clone(), |n| train.head(n)),
                    self.test_limit.map_or_else(|| test.clone(), |n| test.head(n)),
                )
            }
        };
        if self.samples_per_client > pool.len() {
            return Err(Error::config(
                "dataset.samples_per_client",
                format!("{} exceeds the {} training samples available", self.samples_per_client, pool.len()),
            ));
        }
        Ok((pool, test))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadMode {
    /// Measured component times of the reference deployment.
    #[default]
    Table2,
    /// Times derived from layer sizes, link rate and device throughput.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverheadSection {
    pub mode: OverheadMode,
    pub device_flops: f64,
    /// ISL rate; the aligned link at `lesc.delta_d_km` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_rate_bps: Option<f64>,
    /// Cluster size for aggregation and pooling; the initial cluster when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_size: Option<usize>,
}

impl Default for OverheadSection {
    fn default() -> Self {
        Self {
            mode: OverheadMode::Table2,
            device_flops: 1e12,
            link_rate_bps: None,
            cluster_size: None,
        }
    }
}

impl OverheadSection {
    fn validate(&self) -> Result<()> {
        if !(self.device_flops.is_finite() && self.device_flops > 0.0) {
            return Err(Error::config("overhead.device_flops", "must be positive"));
        }
        if let Some(r) = self.link_rate_bps {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("overhead.link_rate_bps", format!("must be positive, got {r}")));
            }
        }
        if self.cluster_size == Some(0) {
            return Err(Error::config("overhead.cluster_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// One swept parameter: a dotted path into the configuration and the values
/// it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

/// One fully resolved configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// Value of the swept parameter(s) as written to the metrics file.
    pub label: String,
    pub config: ScenarioConfig,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => format!("{f}"),
        toml::Value::Boolean(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let bad = || Error::config("sweep.parameter", format!("`{path}` does not name a configuration field"));
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(bad)?;
    if last.is_empty() || parents.is_empty() && *last == "sweep" {
        return Err(bad());
    }
    let mut table = root;
    for p in parents {
        table = table.get_mut(*p).and_then(toml::Value::as_table_mut).ok_or_else(bad)?;
    }
    table.insert((*last).to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.master_seed > MAX_SEED {
            return Err(Error::config("master_seed", format!("must not exceed {MAX_SEED}")));
        }
        if self.architectures.is_empty() {
            return Err(Error::config("architectures", "must name at least one of fello, cl, dl"));
        }
        for (i, a) in self.architectures.iter().enumerate() {
            if self.architectures[..i].contains(a) {
                return Err(Error::config("architectures", format!("`{a}` listed twice")));
            }
        }
        self.constellation.validate()?;
        self.isl.validate("isl")?;
        self.gsl.validate("gsl")?;
        self.link.validate()?;
        self.lesc.validate()?;
        self.train.validate()?;
        self.corruption.validate("corruption")?;
        self.dataset.validate()?;
        self.overhead.validate()?;
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::config("sweep.values", format!("no values for `{}`", axis.parameter)));
            }
            for v in &axis.values {
                self.with_value(&axis.parameter, v.clone())?;
            }
        }
        Ok(())
    }

    /// Copy with one field replaced, revalidated.
    pub fn with_value(&self, path: &str, value: toml::Value) -> Result<ScenarioConfig> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        set_path(&mut table, path, value.clone())?;
        let mut next: ScenarioConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            Error::config("sweep", format!("value {} for `{path}`: {}", value_label(&value), e.message()))
        })?;
        next.sweep.clear();
        let checked = next.validate();
        next.sweep = self.sweep.clone();
        checked?;
        Ok(next)
    }

    /// Every point of the sweep, first axis varying slowest. A scenario
    /// without sweep has one point with an empty label.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let mut points = vec![(Vec::<String>::new(), self.clone())];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (labels, cfg) in &points {
                for v in &axis.values {
                    let mut l = labels.clone();
                    l.push(if self.sweep.len() == 1 {
                        value_label(v)
                    } else {
                        format!("{}={}", axis.parameter, value_label(v))
                    });
                    next.push((l, cfg.with_value(&axis.parameter, v.clone())?));
                }
            }
            points = next;
        }
        Ok(points
            .into_iter()
            .enumerate()
            .map(|(index, (labels, config))| SweepPoint {
                index,
                label: labels.join(";"),
                config,
            })
            .collect())
    }

    /// Seed for one architecture at one sweep point.
    pub fn job_seed(&self, arch: Architecture, sweep_index: usize) -> u64 {
        derive_seed(self.master_seed, &[Stream::Architecture as u64, arch.tag(), sweep_index as u64])
    }

    pub fn environment(&self, seed: u64) -> Environment {
        Environment {
            walker: self.constellation.walker(),
            isl: LinkBudget::new(self.isl.clone(), self.link.snr_form, self.link.ber),
            gsl: LinkBudget::new(self.gsl.clone(), self.link.snr_form, self.link.ber),
            seed,
        }
    }

    /// Switches on the literal reading of the model: the minus-sign position
    /// form, half-ring phasing, fixed-total aggregation and the
    /// power-over-variance SNR.
    pub fn apply_paper_literal(&mut self) {
        self.constellation.position_form = PositionForm::PaperLiteral;
        self.constellation.phasing = Phasing::PaperLiteral;
        self.train.aggregation = AggregationMode::FixedTotal;
        self.link.snr_form = SnrForm::PaperLiteral;
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
