//! `fello-sim`: runs scenarios, prints overhead reports and link budgets.
//!
//! Exit status: 0 on success, 1 for configuration or usage errors, 2 for
//! failures while running.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fello_core::baselines::overhead::render_text;
use fello_core::scenario::{emit_overhead_report, link_report};
use fello_core::{load_config, run_scenario, Error, Result, SatIndex, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "fello-sim", version, about = "Federated learning over a LEO constellation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use the literal model: minus-sign positions, half-ring phasing,
    /// fixed-total aggregation and power-over-variance SNR.
    #[arg(long, global = true)]
    paper_literal: bool,

    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every architecture at every sweep point.
    Run { config: PathBuf },
    /// Write and print the delay, compute and memory comparison.
    Overhead { config: PathBuf },
    /// Evaluate one inter-satellite link.
    Linkbudget {
        config: PathBuf,
        /// Transmitter as `plane,slot`.
        #[arg(long)]
        from: SatIndex,
        /// Receiver as `plane,slot`.
        #[arg(long)]
        to: SatIndex,
        /// Time since epoch, seconds.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Check a scenario file and its input files.
    Validate { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.paper_literal {
        cfg.apply_paper_literal();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cli.workers {
                pool = pool.num_threads(n);
            }
            let pool = pool
                .build()
                .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
            let summary = pool.install(|| run_scenario(&cfg))?;
            println!(
                "wrote {} rows from {} runs to {}",
                summary.rows,
                summary.jobs,
                summary.output_dir.display()
            );
        }
        Command::Overhead { config } => {
            let cfg = load(cli, config)?;
            let reports = emit_overhead_report(&cfg, &cfg.output_dir)?;
            print!("{}", render_text(&reports));
        }
        Command::Linkbudget { config, from, to, time } => {
            let cfg = load(cli, config)?;
            let r = link_report(&cfg, *from, *to, *time)?;
            println!("link {} -> {} at t = {} s", r.from, r.to, r.t_s);
            println!("distance_km        {:.3}", r.aligned.distance_km);
            println!("received_power_w   {:.6e}", r.aligned.received_power_w);
            println!("snr_aligned_db     {:.3}", r.aligned.snr_db());
            println!("snr_sampled_db     {:.3}", r.sampled.snr_db());
            println!("theta_t_rad        {:.6e}", r.sampled.theta_t_rad);
            println!("theta_r_rad        {:.6e}", r.sampled.theta_r_rad);
            println!("ber_sampled        {:.6e}", r.sampled.ber);
            println!("rate_sampled_bps   {:.6e}", r.sampled.rate_bps);
        }
        Command::Validate { config } => {
            let cfg = load(cli, config)?;
            let points = cfg.sweep_points()?;
            for p in &points {
                p.config.dataset.check_files()?;
            }
            println!(
                "ok: {} sweep point(s) x {} architecture(s), {} rounds each",
                points.len(),
                cfg.architectures.len(),
                cfg.lesc.rounds
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
