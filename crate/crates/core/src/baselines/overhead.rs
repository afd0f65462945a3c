//! Joint communication and computation delay, plus compute and memory
//! footprints, for the three architectures.

use super::Architecture;
use crate::error::{Error, Result};
use crate::fl::MlpArch;

const MS: f64 = 1e-3;
const MB: f64 = 1e6;
const TFLOP: f64 = 1e12;
const BYTES_PER_VALUE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadInputs {
    pub rounds: u32,
    pub local_epochs: u32,
    /// One model (or, for CL, one raw-data shard) transfer over an ISL.
    pub t_send_s: f64,
    /// One training epoch.
    pub t_epoch_s: f64,
    /// One aggregation.
    pub t_agg_s: f64,
    pub mode: Architecture,
}

impl OverheadInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_send_s", self.t_send_s), ("t_epoch_s", self.t_epoch_s), ("t_agg_s", self.t_agg_s)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Total delay under the formula of `self.mode`.
    pub fn total_delay(&self) -> f64 {
        match self.mode {
            Architecture::Fello => overhead_fello(self),
            Architecture::Cl => overhead_cl(self),
            Architecture::Dl => overhead_dl(self),
        }
    }

    /// Delay of one training round. For CL the one-off data transfer is
    /// excluded.
    pub fn round_delay(&self) -> f64 {
        let e = f64::from(self.local_epochs);
        match self.mode {
            Architecture::Fello => 2.0 * self.t_send_s + e * self.t_epoch_s + self.t_agg_s,
            Architecture::Cl | Architecture::Dl => e * self.t_epoch_s,
        }
    }
}

/// `A·(2·T_s + E·T_e + T_a)`.
pub fn overhead_fello(i: &OverheadInputs) -> f64 {
    f64::from(i.rounds) * (2.0 * i.t_send_s + f64::from(i.local_epochs) * i.t_epoch_s + i.t_agg_s)
}

/// `(A·E)·T_e`.
pub fn overhead_dl(i: &OverheadInputs) -> f64 {
    f64::from(i.rounds) * f64::from(i.local_epochs) * i.t_epoch_s
}

/// `T_s + (A·E)·T_e`, with `T_s` the raw-data transfer time.
pub fn overhead_cl(i: &OverheadInputs) -> f64 {
    i.t_send_s + f64::from(i.rounds) * f64::from(i.local_epochs) * i.t_epoch_s
}

/// Payload and work for one architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    pub payload_bytes: f64,
    pub flops_per_epoch: f64,
    pub aggregation_flops: f64,
}

/// Component times from payload size, link rate and device throughput.
pub fn derive_times(
    mode: Architecture,
    rounds: u32,
    local_epochs: u32,
    work: &Workload,
    link_rate_bps: f64,
    device_flops: f64,
) -> Result<OverheadInputs> {
    if !(link_rate_bps.is_finite() && link_rate_bps > 0.0) {
        return Err(Error::config("overhead.link_rate_bps", format!("must be positive, got {link_rate_bps}")));
    }
    if !(device_flops.is_finite() && device_flops > 0.0) {
        return Err(Error::config("overhead.device_flops", format!("must be positive, got {device_flops}")));
    }
    let inputs = OverheadInputs {
        rounds,
        local_epochs,
        t_send_s: 8.0 * work.payload_bytes / link_rate_bps,
        t_epoch_s: work.flops_per_epoch / device_flops,
        t_agg_s: work.aggregation_flops / device_flops,
        mode,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// Measured component times of the reference deployment.
pub fn table2_inputs(mode: Architecture, rounds: u32, local_epochs: u32) -> OverheadInputs {
    let (t_send_s, t_epoch_s, t_agg_s) = match mode {
        Architecture::Fello => (0.101 * MS, 29.38 * MS, 0.089 * MS),
        Architecture::Cl => (0.445 * MS, 195.88 * MS, 0.0),
        Architecture::Dl => (0.0, 29.38 * MS, 0.0),
    };
    OverheadInputs {
        rounds,
        local_epochs,
        t_send_s,
        t_epoch_s,
        t_agg_s,
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadReport {
    pub inputs: OverheadInputs,
    pub total_delay_s: f64,
    pub compute_flops: f64,
    /// `None` when the architecture has no server.
    pub server_memory_bytes: Option<f64>,
    pub client_memory_bytes: f64,
}

impl OverheadReport {
    pub fn architecture(&self) -> Architecture {
        self.inputs.mode
    }

    fn new(inputs: OverheadInputs, compute_flops: f64, server_memory_bytes: Option<f64>, client_memory_bytes: f64) -> Self {
        Self {
            inputs,
            total_delay_s: inputs.total_delay(),
            compute_flops,
            server_memory_bytes,
            client_memory_bytes,
        }
    }
}

/// Reference-deployment reports in FELLO, CL, DL order.
pub fn table2_reports(rounds: u32, local_epochs: u32) -> [OverheadReport; 3] {
    let r = |mode, tflops: f64, server_mb: Option<f64>, client_mb: f64| {
        OverheadReport::new(
            table2_inputs(mode, rounds, local_epochs),
            tflops * TFLOP,
            server_mb.map(|m| m * MB),
            client_mb * MB,
        )
    };
    [
        r(Architecture::Fello, 0.878, Some(0.52), 7.04),
        r(Architecture::Cl, 17.56, Some(140.28), 7.01),
        r(Architecture::Dl, 0.878, None, 7.04),
    ]
}

/// Model, data and hardware description for analytic reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSetup {
    pub arch: MlpArch,
    pub samples_per_client: usize,
    pub cluster_size: usize,
    pub rounds: u32,
    pub local_epochs: u32,
    pub link_rate_bps: f64,
    pub device_flops: f64,
}

/// Reports derived from layer dimensions, in FELLO, CL, DL order.
///
/// Training one sample costs three forward passes; a model or sample value
/// is four bytes; CL clients ship their shards in parallel and the edge
/// trains on the pooled data.
pub fn analytic_reports(s: &AnalyticSetup) -> Result<[OverheadReport; 3]> {
    let params = s.arch.n_params() as f64;
    let model_bytes = BYTES_PER_VALUE * params;
    let shard_bytes = BYTES_PER_VALUE * (s.arch.n_features * s.samples_per_client) as f64;
    let pool_bytes = shard_bytes * s.cluster_size as f64;
    let train_flops = 3.0 * s.arch.forward_flops();
    let client_epoch = train_flops * s.samples_per_client as f64;
    let pooled_epoch = client_epoch * s.cluster_size as f64;
    let epochs = f64::from(s.rounds) * f64::from(s.local_epochs);

    let times = |mode, work: Workload| derive_times(mode, s.rounds, s.local_epochs, &work, s.link_rate_bps, s.device_flops);
    let fello = times(
        Architecture::Fello,
        Workload {
            payload_bytes: model_bytes,
            flops_per_epoch: client_epoch,
            aggregation_flops: 2.0 * params * s.cluster_size as f64,
        },
    )?;
    let cl = times(
        Architecture::Cl,
        Workload {
            payload_bytes: shard_bytes,
            flops_per_epoch: pooled_epoch,
            aggregation_flops: 0.0,
        },
    )?;
    let dl = times(
        Architecture::Dl,
        Workload {
            payload_bytes: 0.0,
            flops_per_epoch: client_epoch,
            aggregation_flops: 0.0,
        },
    )?;
    Ok([
        OverheadReport::new(fello, epochs * client_epoch, Some(model_bytes), model_bytes + shard_bytes),
        OverheadReport::new(cl, epochs * pooled_epoch, Some(model_bytes + pool_bytes), shard_bytes),
        OverheadReport::new(dl, epochs * client_epoch, None, model_bytes + shard_bytes),
    ])
}

/// One row of the rendered comparison.
struct Row {
    metric: &'static str,
    unit: &'static str,
    value: fn(&OverheadReport) -> Option<f64>,
}

const ROWS: [Row; 7] = [
    Row {
        metric: "transmission_time",
        unit: "ms",
        value: |r| applies(r.inputs.mode != Architecture::Dl, r.inputs.t_send_s / MS),
    },
    Row {
        metric: "epoch_time",
        unit: "ms",
        value: |r| Some(r.inputs.t_epoch_s / MS),
    },
    Row {
        metric: "aggregation_time",
        unit: "ms",
        value: |r| applies(r.inputs.mode == Architecture::Fello, r.inputs.t_agg_s / MS),
    },
    Row {
        metric: "total_delay",
        unit: "s",
        value: |r| Some(r.total_delay_s),
    },
    Row {
        metric: "compute",
        unit: "TFLOPs",
        value: |r| Some(r.compute_flops / TFLOP),
    },
    Row {
        metric: "server_memory",
        unit: "MB",
        value: |r| r.server_memory_bytes.map(|b| b / MB),
    },
    Row {
        metric: "client_memory",
        unit: "MB",
        value: |r| Some(r.client_memory_bytes / MB),
    },
];

fn applies(cond: bool, v: f64) -> Option<f64> {
    cond.then_some(v)
}

/// Number formatting shared by the text and CSV renderings.
pub fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

/// Aligned text table, one column per architecture.
pub fn render_text(reports: &[OverheadReport]) -> String {
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.architecture().name().to_uppercase()));
    let mut lines = vec![header];
    for row in &ROWS {
        let mut line = vec![format!("{} ({})", row.metric, row.unit)];
        line.extend(reports.iter().map(|r| format_value((row.value)(r))));
        lines.push(line);
    }
    let n_cols = lines[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// CSV with columns `metric,unit,<architecture...>`.
pub fn render_csv(reports: &[OverheadReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string(), "unit".to_string()];
    header.extend(reports.iter().map(|r| r.architecture().name().to_string()));
    w.write_record(&header)?;
    for row in &ROWS {
        let mut rec = vec![row.metric.to_string(), row.unit.to_string()];
        rec.extend(reports.iter().map(|r| format_value((row.value)(r))));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}
