//! Scenario execution and output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{OverheadMode, ScenarioConfig};
use crate::baselines::overhead::{render_csv, render_text};
use crate::baselines::{analytic_reports, run_cl, run_dl, table2_reports, AnalyticSetup, Architecture, OverheadReport};
use crate::error::{Error, Result};
use crate::fl::{Dataset, MlpArch};
use crate::lesc::{cluster, run_fello, select_edge, RoundLog, SimInputs};
use crate::optical::LinkSample;
use crate::orbits::SatIndex;
use crate::rng::{substream, Stream};

pub const METRICS_VERSION_LINE: &str = "# fello-sim metrics v1";
pub const METRICS_HEADER: [&str; 10] = [
    "architecture",
    "sweep_value",
    "round",
    "accuracy",
    "loss",
    "cluster_size",
    "reclustered",
    "handover",
    "mean_snr_db",
    "cumulative_delay_s",
];

const METRICS_FILE: &str = "metrics.csv";
const MANIFEST_FILE: &str = "manifest.toml";
const OVERHEAD_TEXT_FILE: &str = "overhead.txt";
const OVERHEAD_CSV_FILE: &str = "overhead.csv";
const FAILED_FILE: &str = "FAILED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub rows: usize,
}

/// Shortest decimal that reads back to the same value; `NaN` for NaN.
pub fn format_metric(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn report_for(reports: &[OverheadReport; 3], arch: Architecture) -> &OverheadReport {
    reports
        .iter()
        .find(|r| r.architecture() == arch)
        .expect("one report per architecture")
}

/// Size of the cluster formed at the first round, or 1 without coverage.
fn initial_cluster_size(cfg: &ScenarioConfig) -> Result<usize> {
    let env = cfg.environment(cfg.master_seed);
    let lesc = cfg.lesc.lesc_config();
    match select_edge(&env, &lesc, 0.0) {
        Ok(edge) => Ok(cluster(&env, &lesc, edge, 0.0, 1)?.len().max(1)),
        Err(Error::NoCoverage { .. }) => Ok(1),
        Err(e) => Err(e),
    }
}

/// Overhead reports in FELLO, CL, DL order.
pub fn overhead_reports(cfg: &ScenarioConfig) -> Result<[OverheadReport; 3]> {
    let (rounds, epochs) = (cfg.lesc.rounds, cfg.train.local_epochs);
    match cfg.overhead.mode {
        OverheadMode::Table2 => Ok(table2_reports(rounds, epochs)),
        OverheadMode::Analytic => {
            let (n_features, n_classes) = cfg.dataset.shape();
            let link_rate_bps = match cfg.overhead.link_rate_bps {
                Some(r) => r,
                None => cfg.environment(cfg.master_seed).isl.evaluate_aligned(cfg.lesc.delta_d_km)?.rate_bps,
            };
            let cluster_size = match cfg.overhead.cluster_size {
                Some(k) => k,
                None => initial_cluster_size(cfg)?,
            };
            analytic_reports(&AnalyticSetup {
                arch: MlpArch::new(n_features, cfg.train.hidden_size, n_classes),
                samples_per_client: cfg.dataset.samples_per_client,
                cluster_size,
                rounds,
                local_epochs: epochs,
                link_rate_bps,
                device_flops: cfg.overhead.device_flops,
            })
        }
    }
}

/// Writes `overhead.txt` and `overhead.csv` into `out_dir`.
pub fn emit_overhead_report(cfg: &ScenarioConfig, out_dir: &Path) -> Result<[OverheadReport; 3]> {
    let reports = overhead_reports(cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(OVERHEAD_TEXT_FILE), render_text(&reports))?;
    fs::write(out_dir.join(OVERHEAD_CSV_FILE), render_csv(&reports)?)?;
    Ok(reports)
}

/// One link evaluated with perfect pointing and with drawn pointing errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub from: SatIndex,
    pub to: SatIndex,
    pub t_s: f64,
    pub aligned: LinkSample,
    pub sampled: LinkSample,
}

pub fn link_report(cfg: &ScenarioConfig, from: SatIndex, to: SatIndex, t_s: f64) -> Result<LinkReport> {
    let env = cfg.environment(cfg.master_seed);
    let d = env.walker.distance(from, to, t_s)?;
    let mut rng = substream(cfg.master_seed, Stream::Link, &[0, from.min(to).key(), from.max(to).key()]);
    Ok(LinkReport {
        from,
        to,
        t_s,
        aligned: env.isl.evaluate_aligned(d)?,
        sampled: env.isl.evaluate(d, &mut rng)?,
    })
}

struct Job<'a> {
    point: usize,
    label: &'a str,
    arch: Architecture,
    cfg: &'a ScenarioConfig,
    data: &'a (Dataset, Dataset),
    reports: &'a [OverheadReport; 3],
}

fn run_job(job: &Job<'_>, master: &ScenarioConfig) -> Result<Vec<RoundLog>> {
    let cfg = job.cfg;
    let seed = master.job_seed(job.arch, job.point);
    let env = cfg.environment(seed);
    let lesc = cfg.lesc.lesc_config();
    let train = cfg.train.train_config();
    let report = report_for(job.reports, job.arch);
    let fello = report_for(job.reports, Architecture::Fello);
    let inputs = SimInputs {
        env: &env,
        lesc: &lesc,
        train: &train,
        weighting: cfg.train.weighting(),
        corruption: cfg.corruption,
        hidden_size: cfg.train.hidden_size,
        train_pool: &job.data.0,
        test: &job.data.1,
        shard_size: cfg.dataset.samples_per_client,
        round_interval_s: cfg.lesc.round_interval_s.unwrap_or_else(|| fello.inputs.round_delay()),
        round_delay_s: report.inputs.round_delay(),
        transfer_delay_s: if job.arch == Architecture::Cl { report.inputs.t_send_s } else { 0.0 },
        seed,
    };
    match job.arch {
        Architecture::Fello => run_fello(&inputs),
        Architecture::Cl => run_cl(&inputs),
        Architecture::Dl => run_dl(&inputs),
    }
}

fn write_rows(w: &mut csv::Writer<impl Write>, arch: Architecture, label: &str, logs: &[RoundLog]) -> Result<usize> {
    let mut cumulative = 0.0;
    for log in logs {
        cumulative += log.round_delay_s;
        w.write_record([
            arch.name().to_string(),
            label.to_string(),
            log.round.to_string(),
            format_metric(log.accuracy),
            format_metric(log.global_loss),
            log.cluster_size.to_string(),
            log.reclustered.to_string(),
            log.handover.to_string(),
            log.mean_link_snr_db.map(format_metric).unwrap_or_default(),
            format_metric(cumulative),
        ])?;
    }
    Ok(logs.len())
}

/// Runs every requested architecture at every sweep point and writes
/// `metrics.csv`, the overhead report and `manifest.toml` into the output
/// directory. Jobs run in parallel; rows are written in sweep-point order,
/// then architecture order. On failure the rows of jobs that completed
/// before the failing one are kept and a `FAILED` file holds the error.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    let failed = out.join(FAILED_FILE);
    if failed.exists() {
        fs::remove_file(&failed)?;
    }
    fs::write(out.join(MANIFEST_FILE), manifest(cfg)?)?;
    execute(cfg, &out).inspect_err(|e| {
        // Best effort: the original error matters more than a failed marker write.
        let _ = fs::write(&failed, format!("{e}\n"));
    })
}

fn manifest(cfg: &ScenarioConfig) -> Result<String> {
    let mut text = String::from("# Resolved scenario; rerun with `fello-sim run manifest.toml`.\n");
    for point in 0..cfg.sweep_points()?.len() {
        for &arch in &cfg.architectures {
            text.push_str(&format!("# seed {arch}[{point}] = {}\n", cfg.job_seed(arch, point)));
        }
    }
    text.push('\n');
    text.push_str(&cfg.to_toml_string()?);
    Ok(text)
}

fn execute(cfg: &ScenarioConfig, out: &Path) -> Result<RunSummary> {
    let points = cfg.sweep_points()?;
    for p in &points {
        p.config.dataset.check_files()?;
    }
    emit_overhead_report(cfg, out)?;

    let base_data = cfg.dataset.load()?;
    let mut data = Vec::with_capacity(points.len());
    let mut reports = Vec::with_capacity(points.len());
    for p in &points {
        data.push(if p.config.dataset == cfg.dataset {
            None
        } else {
            Some(p.config.dataset.load()?)
        });
        reports.push(overhead_reports(&p.config)?);
    }

    let jobs: Vec<Job<'_>> = points
        .iter()
        .flat_map(|p| {
            let (data, reports) = (&data, &reports);
            let base = &base_data;
            cfg.architectures.iter().map(move |&arch| Job {
                point: p.index,
                label: &p.label,
                arch,
                cfg: &p.config,
                data: data[p.index].as_ref().unwrap_or(base),
                reports: &reports[p.index],
            })
        })
        .collect();
    let results: Vec<Result<Vec<RoundLog>>> = jobs.par_iter().map(|j| run_job(j, cfg)).collect();

    let file = fs::File::create(out.join(METRICS_FILE))?;
    let mut raw = std::io::BufWriter::new(file);
    writeln!(raw, "{METRICS_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(raw);
    w.write_record(METRICS_HEADER)?;
    let mut rows = 0;
    let mut failure = None;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(logs) => rows += write_rows(&mut w, job.arch, job.label, &logs)?,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    w.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunSummary {
        output_dir: out.to_owned(),
        jobs: jobs.len(),
        rows,
    })
}
