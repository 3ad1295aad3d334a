//! `guidebot`: synthesize and verify distance-controller gains, run
//! simulator scenarios and replay their logs.
//!
//! Every command exits 0 on success and 1 on any error, failed check or
//! unmet scenario expectation.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use guidebot_core::dynamics::{discretize, DiscreteMode, DiscreteModePair, SwitchedLongitudinalModel};
use guidebot_core::sim::log::{read_csv, write_csv, SPEED_CAP};
use guidebot_core::sim::{check_expectations, compute_metrics, run_scenario, Metrics, ScenarioFile};
use guidebot_core::synthesis::gains::{design_gains, DesignWeights, GainSet, GainsFile};
use guidebot_core::synthesis::{
    synthesize, verify_gain, PerformanceSpec, VerificationReport, DEFAULT_INTEGRATOR_WEIGHT, DEFAULT_Q4,
    DEFAULT_R, DEFAULT_TOL,
};
use nalgebra::DMatrix;
use serde::Serialize;

const OUT_ENV: &str = "GUIDEBOT_OUT";
const DEFAULT_OUT_ROOT: &str = "guidebot-out";

#[derive(Parser)]
#[command(name = "guidebot", version, about = "Guide-robot controller synthesis and closed-loop simulation")]
struct Cli {
    /// Default output root; subcommands write below it unless --out is given.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT_ROOT)]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design both distance controllers and write a gains file and residual report.
    Synth(SynthArgs),
    /// Re-check a gains file: closed-loop stability and a fresh performance certificate.
    Verify(VerifyArgs),
    /// Run a scenario and write its tick log, metrics and optional plots.
    Run(RunArgs),
    /// Recompute metrics from an existing tick log.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory [default: <out-root>/synth].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model parameters as TOML (fields acc, dec, ts); defaults to the identified model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Diagonal state weight of the four-state design.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = DEFAULT_Q4)]
    q: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_R)]
    r: f64,
    /// Multiplies R.
    #[arg(long, default_value_t = 1.0)]
    r_scale: f64,
    /// Weight on the distance-error integral in the second design.
    #[arg(long, default_value_t = DEFAULT_INTEGRATOR_WEIGHT)]
    integrator_weight: f64,
    /// Speed cap stored with the gains [m/s].
    #[arg(long, default_value_t = SPEED_CAP)]
    v_max: f64,
    /// Synthesize for an unstable, uncontrollable scalar system instead; always fails.
    #[arg(long)]
    toy_uncontrollable: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    gains: PathBuf,
    /// Check only this controller.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    controller: Option<u8>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory [default: <out-root>/<scenario name>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gains file overriding the scenario's.
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    controller: Option<u8>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Tick log written by `run`.
    log: PathBuf,
    /// Check the metrics against this scenario's expectations.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for metrics.json and plots; metrics go to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plots: bool,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    seed: u64,
    controller: u8,
    passed: bool,
    failures: &'a [String],
    metrics: &'a Metrics,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a, &cli.out_root),
        Command::Verify(a) => verify(a),
        Command::Run(a) => run(a, &cli.out_root),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs, root: &Path) -> Result<()> {
    if a.toy_uncontrollable {
        let toy = DiscreteMode {
            a: DMatrix::from_element(1, 1, 2.0),
            b: DMatrix::zeros(1, 1),
        };
        let pair = DiscreteModePair {
            acc: toy.clone(),
            dec: toy,
            ts: 0.1,
        };
        let perf = PerformanceSpec::diagonal(&[1.0], 1.0)?;
        let sol = synthesize(&pair, &perf, DEFAULT_TOL).context("toy synthesis")?;
        bail!("toy synthesis unexpectedly succeeded with K = {}", sol.k);
    }
    let model = match &a.model {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SwitchedLongitudinalModel>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SwitchedLongitudinalModel::default(),
    };
    let weights = DesignWeights {
        q4: a.q.clone(),
        integrator_weight: a.integrator_weight,
        r: a.r * a.r_scale,
    };
    let out = a.out.unwrap_or_else(|| root.join("synth"));
    create_dir(&out)?;
    let file = design_gains(&model, &weights, a.v_max).context("synthesis failed")?;
    let gains_path = out.join("gains.toml");
    file.save(&gains_path)
        .with_context(|| format!("writing {}", gains_path.display()))?;
    let report = synth_report(&file);
    write_file(&out.join("synth_report.txt"), &report)?;
    print!("{report}");
    println!("wrote {}", gains_path.display());
    Ok(())
}

fn gain_lines(name: &str, g: &GainSet) -> String {
    let mut s = format!(
        "{name}\n  K = [{:.6}, {:.6}, {:.6}, {:.6}, {:.6}]\n  trace(S) = {:.6}\n  spectral radius acc = {:.6}, dec = {:.6}\n",
        g.k1, g.k2, g.k3, g.k4, g.k5, g.cost, g.spectral_radius_acc, g.spectral_radius_dec
    );
    for r in &g.residuals {
        s += &format!("  block {:<16} min eigenvalue {:.3e}\n", r.block, r.margin);
    }
    s
}

fn synth_report(f: &GainsFile) -> String {
    let diag = |m: &[Vec<f64>]| (0..m.len()).map(|i| m[i][i]).collect::<Vec<_>>();
    format!(
        "weights: Q4 diag {:?}, Q5 diag {:?}, R {:?}\n{}{}",
        diag(&f.q4),
        diag(&f.q5),
        diag(&f.r),
        gain_lines("controller 1", &f.controller1),
        gain_lines("controller 2", &f.controller2)
    )
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("weight matrix must be square and non-empty");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn verify(a: VerifyArgs) -> Result<()> {
    let file = GainsFile::load(&a.gains).with_context(|| format!("loading {}", a.gains.display()))?;
    let modes = discretize(&file.model).context("discretizing the stored model")?;
    let r = matrix(&file.r)?;
    let mut ok = true;
    for ctrl in [1u8, 2] {
        if a.controller.is_some_and(|c| c != ctrl) {
            continue;
        }
        let (g, q, pair, n) = match ctrl {
            1 => (&file.controller1, matrix(&file.q4)?, modes.clone(), 4),
            _ => (&file.controller2, matrix(&file.q5)?, modes.with_distance_integrator(), 5),
        };
        let perf = PerformanceSpec::new(q, r.clone())?;
        let k = DMatrix::from_row_slice(1, n, &g.k()[..n]);
        let report = verify_gain(&k, &pair, &perf, DEFAULT_TOL);
        ok &= print_verification(ctrl, g, &report);
    }
    if !ok {
        bail!("verification failed");
    }
    Ok(())
}

/// Relative slack allowed between the stored cost and the re-solved one.
const COST_SLACK: f64 = 1e-2;

fn print_verification(ctrl: u8, g: &GainSet, report: &VerificationReport) -> bool {
    println!("controller {ctrl}");
    for (mode, rho) in &report.spectral_radii {
        println!("  spectral radius {:<4} {rho:.6}", mode.name());
    }
    let mut ok = report.is_valid();
    match report.certificate_cost {
        Some(c) => {
            println!("  certificate trace(S) {c:.6} (stored {:.6})", g.cost);
            if c > g.cost * (1.0 + COST_SLACK) + 1e-9 {
                println!("  stored cost is not achieved by the stored gain");
                ok = false;
            }
        }
        None => println!("  no common certificate"),
    }
    for v in &report.violations {
        println!("  violation: {v:?}");
    }
    println!("  {}", if ok { "OK" } else { "FAILED" });
    ok
}

fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    ScenarioFile::parse(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn run(a: RunArgs, root: &Path) -> Result<()> {
    let mut file = load_scenario_file(&a.scenario)?;
    if let Some(seed) = a.seed {
        file.seed = seed;
    }
    if let Some(c) = a.controller {
        file.controller = c;
    }
    let scenario = file
        .resolve(base_dir(&a.scenario))
        .with_context(|| format!("resolving scenario {}", a.scenario.display()))?;
    let gains = match &a.gains {
        Some(p) => Some(GainsFile::load(p).with_context(|| format!("loading gains {}", p.display()))?),
        None => None,
    };
    let name = if scenario.name.is_empty() {
        a.scenario.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    } else {
        scenario.name.clone()
    };
    let out = a.out.unwrap_or_else(|| root.join(&name));
    create_dir(&out)?;
    let (seed, controller) = (scenario.seed, scenario.controller);
    let result = run_scenario(scenario, gains).context("simulation aborted")?;

    let log_path = out.join("log.csv");
    let mut buf = Vec::new();
    write_csv(&mut buf, &result.log)?;
    write_file(&log_path, buf)?;
    let summary = RunSummary {
        scenario: &name,
        seed,
        controller,
        passed: result.passed(),
        failures: &result.failures,
        metrics: &result.metrics,
    };
    write_file(&out.join("metrics.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    if a.plots {
        plot::write_all(&out, &result.log)?;
    }
    print_metrics(&result.metrics);
    println!("wrote {}", out.display());
    if !result.passed() {
        bail!("scenario {name} failed: {}", result.failures.join("; "));
    }
    Ok(())
}

fn print_metrics(m: &Metrics) {
    println!("duration            {:.1} s", m.duration);
    for s in &m.steps {
        let settle = s.settling_time.map_or("never".into(), |t| format!("{t:.1} s"));
        println!(
            "  step at {:>6.1} s to {:.2} m: settling {settle}, steady-state {:.4} m, overshoot {:.3} m",
            s.t_step, s.d_ref, s.steady_state_error, s.overshoot
        );
    }
    println!("max |d - d_ref|     {:.4} m", m.max_abs_error);
    println!("collisions          {}", m.collisions);
    println!("time at speed cap   {:.1} %", 100.0 * m.cap_fraction);
    println!("track switches      {}", m.track_switches);
}

fn replay(a: ReplayArgs) -> Result<()> {
    let f = fs::File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let log = read_csv(f).with_context(|| format!("reading log {}", a.log.display()))?;
    let metrics = compute_metrics(&log);
    let json = serde_json::to_string_pretty(&metrics)? + "\n";
    match &a.out {
        Some(out) => {
            create_dir(out)?;
            write_file(&out.join("metrics.json"), &json)?;
            if a.plots {
                plot::write_all(out, &log)?;
            }
            print_metrics(&metrics);
        }
        None => print!("{json}"),
    }
    if let Some(p) = &a.scenario {
        let scenario = load_scenario_file(p)?.resolve(base_dir(p))?;
        let failures = check_expectations(&scenario, &metrics);
        if !failures.is_empty() {
            bail!("expectations not met: {}", failures.join("; "));
        }
    }
    Ok(())
}
