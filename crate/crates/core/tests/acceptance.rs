//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fello_core::baselines::{run_dl, table2_reports, Architecture};
use fello_core::fl::{aggregate, Corruption, MlpArch, ModelParams};
use fello_core::lesc::{cluster, run_fello, select_edge, ReclusterPeriod, SimInputs};
use fello_core::optical::{antenna_gain, pointing_loss, received_power, thermal_noise, OpticalParams};
use fello_core::rng::{substream, Stream};
use fello_core::scenario::{load_config, DatasetKind, ScenarioConfig};
use fello_core::{run_scenario, SatIndex, WalkerConfig};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn overhead_reproduction() -> Outcome {
    let start = Instant::now();
    let [fello, cl, dl] = table2_reports(40, 2);
    let got = [round2(fello.total_delay_s), round2(cl.total_delay_s), round2(dl.total_delay_s)];
    let elapsed = start.elapsed();
    check(
        got == [2.36, 15.67, 2.35] && elapsed < Duration::from_secs(1),
        format!(
            "FELLO {:.2} s, CL {:.2} s, DL {:.2} s (expected 2.36 / 15.67 / 2.35) in {elapsed:?}",
            got[0], got[1], got[2]
        ),
    )
}

fn link_budget_oracles() -> Outcome {
    let p = OpticalParams::default();
    // One-line oracles, written out from the physical formulas.
    let g_oracle = (PI * 0.06 / 1500e-9).powi(2);
    let th_oracle = 4.0 * 1.380649e-23 * 500.0 * 1.25e9 / 1000.0;
    let pr_oracle = 30e-3 * 0.8 * 0.8 * g_oracle * g_oracle * (1500e-9 / (4.0 * PI * 1.0e6)).powi(2);
    let l_oracle = (-g_oracle * 3e-6f64.powi(2)).exp();

    let g = antenna_gain(p.telescope_diameter_m, p.wavelength_m);
    let th = thermal_noise(&p);
    let pr = received_power(&p, 1000.0, 0.0, 0.0).map_err(|e| e.to_string())?;
    let l = pointing_loss(g, 3e-6);
    let agree = [(g, g_oracle), (th, th_oracle), (pr, pr_oracle), (l, l_oracle)]
        .iter()
        .all(|&(v, o)| within(v, o, 1e-12));
    check(
        agree
            && within(g, 1.5791e10, 1e-4)
            && within(th, 3.4516e-14, 1e-4)
            && within(pr, 6.823e-8, 1e-3)
            && within(l, 0.8675, 1e-3),
        format!("G = {g:.6e}, sigma_th^2 = {th:.6e}, P_R(1000 km) = {pr:.6e} W, L(3 urad) = {l:.6}"),
    )
}

fn orbit_invariants() -> Outcome {
    let start = Instant::now();
    let w = WalkerConfig::default();
    let r_s = w.orbit_radius_km();
    let period = TAU / w.mean_motion();
    let mut rng = substream(2024, Stream::Edge, &[3]);
    let (mut worst_radius, mut worst_period) = (0f64, 0f64);
    for _ in 0..10_000 {
        let sat = SatIndex::new(rng.random_range(1..=w.n_orbits), rng.random_range(1..=w.sats_per_orbit));
        let t = rng.random_range(0.0..100_000.0);
        let pos = w.position_at(sat, t).map_err(|e| e.to_string())?;
        worst_radius = worst_radius.max((pos.norm() / r_s - 1.0).abs());
        let (_, a0) = w.angular_state(sat, t).map_err(|e| e.to_string())?;
        let (_, a1) = w.angular_state(sat, t + period).map_err(|e| e.to_string())?;
        let d = (a1 - a0).rem_euclid(TAU);
        worst_period = worst_period.max(d.min(TAU - d));
    }
    let elapsed = start.elapsed();
    check(
        worst_radius < 1e-9 && worst_period < 1e-9 && elapsed < Duration::from_secs(5),
        format!("max |r/R_S - 1| = {worst_radius:.2e}, max anomaly drift over one period = {worst_period:.2e} rad, {elapsed:?}"),
    )
}

fn fedavg_correctness() -> Outcome {
    let scalar = |v: f64| ModelParams::from_flat(MlpArch::new(1, 1, 2), vec![v; 6]).unwrap();
    let a = scalar(1.7);
    let single = aggregate(&[(&a, 5)]).map_err(|e| e.to_string())? == a;
    let b = scalar(-1.7);
    let symmetric = aggregate(&[(&a, 4), (&b, 4)])
        .map_err(|e| e.to_string())?
        .as_slice()
        .iter()
        .all(|&v| v == 0.0);
    let (m6, m3, m2) = (scalar(6.0), scalar(3.0), scalar(2.0));
    let three = aggregate(&[(&m6, 1), (&m3, 2), (&m2, 3)])
        .map_err(|e| e.to_string())?
        .as_slice()
        .iter()
        .all(|&v| v == 3.0);

    let arch = MlpArch::new(1, 2, 2);
    let m = ModelParams::from_flat(arch, vec![0.8, -0.6, 0.3, 0.4, 0.5, -0.7, 0.9, 0.2, 0.1, -0.2]).unwrap();
    let x = ndarray::array![[0.3], [0.9], [0.6]];
    let labels = [0, 1, 1];
    let (_, grad) = m.loss_and_grad(x.view(), &labels).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0f64;
    for (i, &g) in grad.iter().enumerate() {
        let mut plus = m.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = m.clone();
        minus.as_mut_slice()[i] -= h;
        let fd = (plus.loss_sum(x.view(), &labels) - minus.loss_sum(x.view(), &labels)) / (2.0 * h * 3.0);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
    }
    check(
        single && symmetric && three && worst < 1e-4,
        format!("single {single}, symmetric {symmetric}, weighted 3-client = 3 {three}, max FD rel. error {worst:.2e}"),
    )
}

fn desk_config(seed: u64, period: ReclusterPeriod) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        master_seed: seed,
        corruption: Corruption::Awgn { kappa: 5.0 },
        ..ScenarioConfig::default()
    };
    cfg.dataset.kind = DatasetKind::Synthetic;
    cfg.dataset.synthetic.seed = seed;
    cfg.dataset.samples_per_client = 600;
    cfg.lesc.delta_d_km = 2200.0;
    cfg.lesc.recluster_period = period;
    cfg.lesc.round_interval_s = Some(60.0);
    cfg
}

fn final_accuracy(cfg: &ScenarioConfig, arch: Architecture) -> Result<(f64, usize), String> {
    let (pool, test) = cfg.dataset.load().map_err(|e| e.to_string())?;
    let seed = cfg.job_seed(arch, 0);
    let env = cfg.environment(seed);
    let lesc = cfg.lesc.lesc_config();
    let train = cfg.train.train_config();
    let inputs = SimInputs {
        env: &env,
        lesc: &lesc,
        train: &train,
        weighting: cfg.train.weighting(),
        corruption: cfg.corruption,
        hidden_size: cfg.train.hidden_size,
        train_pool: &pool,
        test: &test,
        shard_size: cfg.dataset.samples_per_client,
        round_interval_s: cfg.lesc.round_interval_s.unwrap_or(0.0),
        round_delay_s: 0.0,
        transfer_delay_s: 0.0,
        seed,
    };
    let logs = match arch {
        Architecture::Dl => run_dl(&inputs),
        _ => run_fello(&inputs),
    }
    .map_err(|e| e.to_string())?;
    let last = logs.last().ok_or("no rounds")?;
    let first_size = logs.first().map_or(0, |l| l.cluster_size);
    Ok((last.accuracy, first_size))
}

fn ordering() -> Outcome {
    let start = Instant::now();
    let seeds = 1..=5u64;
    let n = seeds.clone().count() as f64;
    let (mut fello, mut dl, mut fello_never, mut clients) = (0.0, 0.0, 0.0, 0.0);
    for seed in seeds {
        let every = desk_config(seed, ReclusterPeriod::Every(1));
        let (f, k) = final_accuracy(&every, Architecture::Fello)?;
        fello += f / n;
        clients += k as f64 / n;
        dl += final_accuracy(&every, Architecture::Dl)?.0 / n;
        fello_never += final_accuracy(&desk_config(seed, ReclusterPeriod::Never), Architecture::Fello)?.0 / n;
    }
    let elapsed = start.elapsed();
    check(
        fello - dl >= 0.05 && fello >= fello_never && elapsed < Duration::from_secs(600),
        format!(
            "mean final accuracy FELLO {fello:.4} vs DL {dl:.4} (gap {:.1} pp), T_rc=1 {fello:.4} vs T_rc=inf {fello_never:.4}, \
             {clients:.1} initial clients, {elapsed:.1?}",
            100.0 * (fello - dl)
        ),
    )
}

fn small_scenario(out: &std::path::Path) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        output_dir: out.to_owned(),
        corruption: Corruption::Awgn { kappa: 5.0 },
        ..ScenarioConfig::default()
    };
    cfg.lesc.rounds = 8;
    cfg.lesc.round_interval_s = Some(90.0);
    cfg.dataset.kind = DatasetKind::Synthetic;
    cfg.dataset.samples_per_client = 100;
    cfg.dataset.synthetic.samples_per_class = 60;
    cfg.dataset.synthetic.test_samples_per_class = 20;
    cfg.dataset.synthetic.n_features = 16;
    cfg.train.hidden_size = 16;
    cfg
}

fn dl_channel_invariance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for sd in [2e-6, 3e-6, 4e-6, 5e-6] {
        let mut cfg = small_scenario(&dir.path().join(format!("sd{sd}")));
        cfg.architectures = vec![Architecture::Dl];
        cfg.isl.pointing_sd_rad = sd;
        run_scenario(&cfg).map_err(|e| e.to_string())?;
        outputs.push(fs::read(cfg.output_dir.join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    let identical = outputs.iter().all(|o| o == &outputs[0]);
    check(
        identical,
        format!("DL metrics.csv for sigma_theta in {{2,3,4,5}} urad identical: {identical} ({} bytes)", outputs[0].len()),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = small_scenario(&dir.path().join("first"));
    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| e.to_string());
    pool(1)?.install(|| run_scenario(&cfg)).map_err(|e| e.to_string())?;

    let mut replay = load_config(&cfg.output_dir.join("manifest.toml")).map_err(|e| e.to_string())?;
    replay.output_dir = dir.path().join("second");
    pool(4)?.install(|| run_scenario(&replay)).map_err(|e| e.to_string())?;

    let a = fs::read(cfg.output_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    let b = fs::read(replay.output_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    check(
        a == b && !a.is_empty(),
        format!("metrics.csv from 1 worker vs manifest replay on 4 workers identical: {} ({} bytes)", a == b, a.len()),
    )
}

fn cluster_size_sanity() -> Outcome {
    let cfg = ScenarioConfig::default();
    let env = cfg.environment(cfg.master_seed);
    let lesc = cfg.lesc.lesc_config();
    let edge = select_edge(&env, &lesc, 0.0).map_err(|e| e.to_string())?;
    let size = cluster(&env, &lesc, edge, 0.0, 1).map_err(|e| e.to_string())?.len();
    check((12..=24).contains(&size), format!("delta_d = 2600 km, edge {edge}: {size} clients"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("overhead reproduction", overhead_reproduction),
        ("link-budget oracles", link_budget_oracles),
        ("orbit invariants", orbit_invariants),
        ("FedAvg correctness", fedavg_correctness),
        ("FELLO vs baselines ordering", ordering),
        ("DL channel invariance", dl_channel_invariance),
        ("determinism", determinism),
        ("cluster-size sanity", cluster_size_sanity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
