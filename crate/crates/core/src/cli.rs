//! Command-line front end. This is the only part of the crate that touches
//! the filesystem.
//!
//! Exit codes: 0 success, 1 usage or validation error (including a failed
//! `check`), 2 solver abort.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    convergence_study, heat_oracle_comparison, mach_sweep, weak_strong_experiment, ErrorReference, InitialData,
    Scenario, Sweep,
};
use crate::fields::{l2_norm_vector, GridSpec};
use crate::functionals::{energy_primitive, energy_rate_primitive, DiagnosticsRecord};
use crate::io::{parse_config, parse_config_with, write_csv, InitialSpec, RunConfig, Snapshot};
use crate::model::{korteweg_force_compact, korteweg_force_expanded, tensor_t_defect, FluidParams};
use crate::oracles::WaveTarget;
use crate::solver::{run, BasicObserver, StepControl};

pub const THREADS_ENV: &str = "KORTEWEG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "korteweg", version, about = "Navier-Stokes-Korteweg solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write diagnostics.
    Run(RunArgs),
    /// Perturb the initial data and track the relative entropy.
    WeakStrong(WeakStrongArgs),
    /// Approach the pressureless limit over a list of Mach weights.
    MachSweep(MachSweepArgs),
    /// Measure spatial or temporal convergence.
    Converge(ConvergeArgs),
    /// Compare a pressureless run from irrotational data with the heat solution.
    OracleHeat(OracleHeatArgs),
    /// Fast invariant suite.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `outputs.csv`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Overrides `outputs.snapshot`.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WeakStrongArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    deltas: Vec<f64>,
    /// Directory for one diagnostics CSV per run.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MachSweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1, 0.05])]
    eps: Vec<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Grid sizes for a spatial sweep.
    #[arg(long, value_delimiter = ',', conflicts_with = "dts", required_unless_present = "dts")]
    resolutions: Option<Vec<usize>>,
    /// Step sizes for a temporal sweep.
    #[arg(long, value_delimiter = ',')]
    dts: Option<Vec<f64>>,
    /// Compare against a refined run instead of a closed form.
    #[arg(long)]
    self_convergence: bool,
    /// Drive the runs with a manufactured travelling wave built from the
    /// `single_mode` initial data; the value is its angular frequency.
    #[arg(long)]
    mms_omega: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleHeatArgs {
    #[arg(long)]
    nu: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    amplitude: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Scenario for the short dynamic checks; a built-in 1D run otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NanDetected { .. }
            | Error::DensityBelowFloor { .. }
            | Error::FloorMassChange { .. }
            | Error::Aborted(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

/// Runs the command line `args` (including the program name) and returns the
/// exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{text}");
                0
            } else {
                let _ = write!(err, "{text}");
                1
            };
        }
    };
    if let Err(f) = configure_threads() {
        let _ = writeln!(err, "error: {}", f.message);
        return f.code;
    }
    let res = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::WeakStrong(a) => cmd_weak_strong(a, out),
        Command::MachSweep(a) => cmd_mach_sweep(a, out),
        Command::Converge(a) => cmd_converge(a, out),
        Command::OracleHeat(a) => cmd_oracle_heat(a, out),
        Command::Check(a) => cmd_check(a, out),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| fail(1, format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    #[cfg(feature = "parallel")]
    {
        // A pool that already exists (repeated calls in one process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    fail(1, format!("{}: {e}", path.display()))
}

fn load_config(path: &Path) -> std::result::Result<(RunConfig, Scenario), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = parse_config_with(&text, &|p| base.join(p).exists())?;
    let loaded = match &cfg.initial {
        InitialSpec::Snapshot(p) => {
            let p = base.join(p);
            let bytes = fs::read(&p).map_err(|e| io_fail(&p, e))?;
            Some(Snapshot::decode(&bytes).and_then(|s| s.to_primitive(&cfg.params)).map_err(|e| io_fail(&p, e))?)
        }
        InitialSpec::Data(_) => None,
    };
    let scenario = cfg.scenario(loaded)?;
    Ok((cfg, scenario))
}

fn save_csv(path: &Path, records: &[DiagnosticsRecord]) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| io_fail(path, e))?;
    write_csv(std::io::BufWriter::new(file), records).map_err(|e| io_fail(path, e))
}

fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| fail(1, e.to_string()))?;
    fs::write(path, text).map_err(|e| io_fail(path, e))
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> CliResult {
    let (cfg, scenario) = load_config(&a.config)?;
    let s0 = scenario.initial_state()?;
    let csv = a.csv.unwrap_or(cfg.outputs.csv.clone());
    let snap = a.snapshot.or(cfg.outputs.snapshot.clone());
    match run(&s0, &cfg.params, &cfg.ctrl, &mut BasicObserver) {
        Ok(traj) => {
            save_csv(&csv, &traj.records)?;
            if let Some(p) = &snap {
                fs::write(p, Snapshot::from_primitive(&traj.final_state).encode()).map_err(|e| io_fail(p, e))?;
            }
            let (first, last) = (&traj.records[0], traj.records.last().expect("at least one sample"));
            let _ = writeln!(out, "model {}, {} steps to t = {}", cfg.model.as_str(), traj.steps, last.t);
            let _ = writeln!(out, "relative mass drift {:.3e}", (last.mass - first.mass).abs() / first.mass.abs());
            let _ = writeln!(out, "energy {:.6e} -> {:.6e}", first.energy, last.energy);
            let _ = writeln!(out, "diagnostics written to {}", csv.display());
            Ok(())
        }
        Err(aborted) => {
            if !aborted.partial.records.is_empty() {
                save_csv(&csv, &aborted.partial.records)?;
            }
            Err(fail(2, aborted.to_string()))
        }
    }
}

fn write_family(dir: &Path, stem: &str, records: &[Vec<DiagnosticsRecord>]) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    for (i, recs) in records.iter().enumerate().filter(|(_, r)| !r.is_empty()) {
        save_csv(&dir.join(format!("{stem}_{i}.csv")), recs)?;
    }
    Ok(())
}

fn any_failed(failures: &[Option<String>], out: &mut dyn Write) -> CliResult {
    let msgs: Vec<&String> = failures.iter().flatten().collect();
    if msgs.is_empty() {
        return Ok(());
    }
    for m in &msgs {
        let _ = writeln!(out, "run failed: {m}");
    }
    Err(fail(2, format!("{} run(s) aborted", msgs.len())))
}

fn cmd_weak_strong(a: WeakStrongArgs, out: &mut dyn Write) -> CliResult {
    let (_, scenario) = load_config(&a.config)?;
    let r = weak_strong_experiment(&scenario, &a.deltas)?;
    let _ = writeln!(out, "reference: {:?}", r.reference);
    let _ = writeln!(out, "{:>10} {:>14} {:>14} {:>12} {:>14}", "delta", "E(0)", "E(T)", "E(T)/E(0)", "E(0)/delta^2");
    for (i, d) in r.deltas.iter().enumerate() {
        let series = &r.entropy[i];
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>10.1e} {:>14} {:>14} {:>12} {:>14}",
            d,
            cell(series.first().copied()),
            cell(series.last().copied()),
            cell(r.ratios[i]),
            cell(r.initial_over_delta2[i]),
        );
    }
    let _ = writeln!(out, "noise floor (delta = 0): {:.3e}", r.floor);
    let _ = writeln!(out, "fitted growth rate C: {:.4}", r.gronwall_c);
    let _ = writeln!(out, "worst E(T)/E(0) over exp(CT): {:.3}", r.worst_gronwall_excess());
    let _ = writeln!(out, "spread of E(0)/delta^2: {:.3e}", r.quadratic_spread());
    if let Some(dir) = &a.out_dir {
        write_family(dir, "weak_strong", &r.records)?;
    }
    if let Some(p) = &a.report {
        save_json(p, &r)?;
    }
    any_failed(&r.failures, out)
}

fn cmd_mach_sweep(a: MachSweepArgs, out: &mut dyn Write) -> CliResult {
    let (_, scenario) = load_config(&a.config)?;
    let r = mach_sweep(&scenario, &a.eps)?;
    let _ = writeln!(out, "{:>8} {:>14} {:>14} {:>14}", "eps", "n_vel", "n_gradrho", "n_rho");
    for (e, s) in r.eps.iter().zip(&r.sup_norms) {
        match s {
            Some(s) => {
                let _ = writeln!(out, "{e:>8} {:>14.6e} {:>14.6e} {:>14.6e}", s[0], s[1], s[2]);
            }
            None => {
                let _ = writeln!(out, "{e:>8} {:>14} {:>14} {:>14}", "-", "-", "-");
            }
        }
    }
    let _ = writeln!(out, "log-log slopes: {:.3} {:.3} {:.3}", r.slopes[0], r.slopes[1], r.slopes[2]);
    if let Some(dir) = &a.out_dir {
        write_family(dir, "mach_sweep", &r.records)?;
    }
    if let Some(p) = &a.report {
        save_json(p, &r)?;
    }
    any_failed(&r.failures, out)
}

fn cmd_converge(a: ConvergeArgs, out: &mut dyn Write) -> CliResult {
    let (_, scenario) = load_config(&a.config)?;
    let sweep = match (a.resolutions, a.dts) {
        (Some(ns), _) => Sweep::Resolution(ns),
        (None, Some(dts)) => Sweep::TimeStep(dts),
        (None, None) => return Err(fail(1, "give --resolutions or --dts")),
    };
    let reference = if a.self_convergence { ErrorReference::SelfConvergence } else { ErrorReference::Exact };
    let target = match a.mms_omega {
        None => None,
        Some(omega) => match &scenario.initial {
            InitialData::SingleMode { mean, amplitude, wavenumber, velocity, sharpness } => {
                let dim = scenario.grid.dim();
                let mut wavevector = vec![0.0; dim];
                wavevector[0] = *wavenumber as f64;
                let mut direction = vec![0.0; dim];
                direction[0] = 1.0;
                Some(WaveTarget {
                    mean: *mean,
                    rho_amplitude: *amplitude,
                    u_amplitude: *velocity,
                    wavevector,
                    direction,
                    omega,
                    sharpness: *sharpness,
                })
            }
            _ => return Err(fail(1, "--mms-omega needs single_mode initial data")),
        },
    };
    let r = convergence_study(&scenario, &sweep, reference, target.as_ref().map(|t| t as _))?;
    let labels: Vec<String> = match &r.sweep {
        Sweep::Resolution(ns) => ns.iter().map(|n| format!("n = {n}")).collect(),
        Sweep::TimeStep(dts) => dts.iter().map(|d| format!("dt = {d:e}")).collect(),
    };
    for (i, (l, e)) in labels.iter().zip(&r.errors).enumerate() {
        let ratio = if i > 0 { format!("  ratio {:.2}", r.ratios[i - 1]) } else { String::new() };
        let _ = writeln!(out, "{l:>14}  error {e:.6e}{ratio}");
    }
    let _ = writeln!(out, "log-log slope {:.3}", r.slope);
    if let Some(p) = &a.report {
        save_json(p, &r)?;
    }
    Ok(())
}

fn cmd_oracle_heat(a: OracleHeatArgs, out: &mut dyn Write) -> CliResult {
    let params = FluidParams { nu: a.nu, kappa: a.kappa, eps: 0.0, ..FluidParams::default() };
    let grid = GridSpec::new(1, a.n)?;
    let ctrl = StepControl { cfl: 0.9, dt_max: 1e-3, t_end: a.t_end, sample_every: a.t_end / 10.0 };
    let initial = InitialData::Irrotational { mean: 1.0, amplitude: a.amplitude, wavenumber: 1, sharpness: 0.0 };
    let scenario = Scenario { params, grid, initial, ctrl, seed: 0 };
    let r = heat_oracle_comparison(&scenario)?;
    let _ = writeln!(out, "{:>8} {:>14} {:>14}", "t", "rho_err", "drift_defect");
    for ((t, e), d) in r.times.iter().zip(&r.rho_errors).zip(&r.drift_defects) {
        let _ = writeln!(out, "{t:>8.4} {e:>14.6e} {d:>14.6e}");
    }
    let _ = writeln!(out, "max L-inf density error: {:.6e}", r.max_rho_error());
    let _ = writeln!(out, "max L-inf drift defect: {:.6e}", r.max_drift_defect());
    if let Some(p) = &a.csv {
        save_csv(p, &r.records)?;
    }
    Ok(())
}

fn default_check_scenario() -> Scenario {
    Scenario {
        params: FluidParams::default(),
        grid: GridSpec::new(1, 64).expect("valid grid"),
        initial: InitialData::SingleMode { mean: 1.0, amplitude: 0.1, wavenumber: 1, velocity: 0.1, sharpness: 0.0 },
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end: 0.02, sample_every: 0.005 },
        seed: 0,
    }
}

fn check_suite(scenario: &Scenario) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    let p = scenario.params;

    let mut worst_identity = 0.0f64;
    for seed in 0..4 {
        let g = GridSpec::new(1 + (seed as usize % 2), 64)?;
        let data = InitialData::Random { mean: 1.0, amplitude: 0.3, velocity: 0.5, max_mode: 3, seed };
        let s = data.build(g, &p)?;
        let e = korteweg_force_expanded(&s.rho, &p);
        let c = korteweg_force_compact(&s.rho, &p);
        let scale = l2_norm_vector(&c).max(f64::MIN_POSITIVE);
        worst_identity = worst_identity.max(l2_norm_vector(&(&e - &c)) / scale);
        let defect = tensor_t_defect(&s.rho, &s.velocity(), &p)?;
        out.push((format!("tensor defect, seed {seed}: {defect:.2e}"), defect <= 1e-9));
    }
    out.push((format!("Korteweg identity: {worst_identity:.2e}"), worst_identity <= 1e-9));

    let ctrl = StepControl { t_end: scenario.ctrl.t_end.min(0.02), ..scenario.ctrl };
    let s0 = scenario.initial_state()?;
    let traj = run(&s0, &p, &ctrl, &mut BasicObserver).map_err(|a| Error::Aborted(a.to_string()))?;
    let (first, last) = (&traj.records[0], traj.records.last().expect("samples"));
    let mass = (last.mass - first.mass).abs() / first.mass.abs();
    out.push((format!("mass drift over {} steps: {mass:.2e}", traj.steps), mass <= 1e-11));
    let mom = first.momentum.iter().zip(&last.momentum).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.push((format!("momentum drift: {mom:.2e}"), mom <= 1e-9));
    let rate = energy_rate_primitive(&traj.final_state, &p)?;
    out.push((format!("primitive energy rate: {rate:.3e}"), rate <= 1e-6));
    let energies: Vec<f64> = traj.records.iter().map(|r| r.energy).collect();
    let monotone = energies.windows(2).all(|w| w[1] <= w[0] + 1e-6 * ctrl.sample_every);
    out.push((
        format!("energy {:.6e} -> {:.6e}", energy_primitive(&s0, &p), energies.last().copied().unwrap_or(f64::NAN)),
        monotone,
    ));

    let snap = Snapshot::from_primitive(&traj.final_state);
    let back = Snapshot::decode(&snap.encode())?;
    out.push(("snapshot round trip".into(), back.encode() == snap.encode()));
    let bad = r#"{"model":"pressureless","params":{"nu":0.1,"kappa":0,"gamma":0.5,"eps":0.3},
        "grid":{"dim":1,"n":16},"initial":{"kind":"constant","rho":1,"velocity":[0]},
        "ctrl":{"cfl":0.5,"dt_max":1e-3,"t_end":0.1,"sample_every":0.1}}"#;
    let rejected = matches!(parse_config(bad), Err(Error::Config(v)) if v.len() == 2);
    out.push(("config validation".into(), rejected));

    let heat = Scenario {
        params: FluidParams { nu: 0.1, kappa: 0.0, eps: 0.0, ..p },
        grid: GridSpec::new(1, 64)?,
        initial: InitialData::Irrotational { mean: 1.0, amplitude: 0.5, wavenumber: 1, sharpness: 0.0 },
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end: 0.02, sample_every: 0.01 },
        seed: 0,
    };
    let h = heat_oracle_comparison(&heat)?;
    let err = h.max_rho_error().max(h.max_drift_defect());
    out.push((format!("heat oracle: {err:.2e}"), err <= 1e-6));
    Ok(out)
}

fn cmd_check(a: CheckArgs, out: &mut dyn Write) -> CliResult {
    let scenario = match &a.config {
        Some(p) => load_config(p)?.1,
        None => default_check_scenario(),
    };
    let results = check_suite(&scenario)?;
    let mut failed = 0;
    for (label, ok) in &results {
        let _ = writeln!(out, "{} {label}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        return Err(fail(1, format!("{failed} check(s) failed")));
    }
    Ok(())
}
