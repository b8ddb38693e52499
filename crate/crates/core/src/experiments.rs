//! Numerical experiments: strong references, weak-strong stability, the
//! high-Mach sweep, formulation consistency and discretization convergence.
//!
//! Independent runs inside one experiment are executed in parallel when the
//! `parallel` feature is on; results are always assembled in input order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{l2_norm, l2_norm_vector, resample, resample_vector, GridSpec, ScalarField, VectorField};
use crate::functionals::{full_record, DiagnosticsRecord, ReferenceState};
use crate::model::{drift_velocity, AugmentedState, FluidParams, PrimitiveState};
use crate::oracles::{
    heat_family_defect, heat_family_state, heat_solution, irrotational_initial_data, wave_profile, ManufacturedForcing, Target,
};
use crate::solver::{run, run_with, stable_dt, BasicObserver, Evolve, RunOptions, StepControl, Trajectory};

/// Defect below which the irrotational family is treated as an exact solution.
pub const HEAT_FAMILY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// Uniform density and velocity.
    Constant { rho: f64, velocity: Vec<f64> },
    /// `ϱ = mean + a·f(2πk x₀)`, `u₀ = velocity · g(2πk x₀)` with the
    /// profiles of [`wave_profile`]; `sharpness = 0` is a pure cosine.
    SingleMode {
        mean: f64,
        amplitude: f64,
        wavenumber: usize,
        velocity: f64,
        #[serde(default)]
        sharpness: f64,
    },
    /// Density as in `SingleMode` with `u = −2ν∇log ϱ`.
    Irrotational {
        mean: f64,
        amplitude: f64,
        wavenumber: usize,
        #[serde(default)]
        sharpness: f64,
    },
    /// Seeded band-limited fields: `ϱ = mean + amplitude · η/‖η‖∞`,
    /// `u = velocity · ξ/‖ξ‖∞`, all modes `|k_a| ≤ max_mode`.
    Random { mean: f64, amplitude: f64, velocity: f64, max_mode: usize, seed: u64 },
    /// Explicit fields, resampled spectrally when the grid differs.
    #[serde(skip)]
    Fields(PrimitiveState),
}

impl InitialData {
    pub fn is_irrotational(&self) -> bool {
        matches!(self, InitialData::Irrotational { .. })
    }

    pub fn build(&self, grid: GridSpec, params: &FluidParams) -> Result<PrimitiveState> {
        match self {
            InitialData::Constant { rho, velocity } => {
                if velocity.len() != grid.dim() {
                    return Err(Error::Experiment(format!(
                        "constant velocity has {} components on a {}-dimensional grid",
                        velocity.len(),
                        grid.dim()
                    )));
                }
                let r = ScalarField::constant(grid, *rho);
                PrimitiveState::from_velocity(r, &VectorField::uniform(grid, velocity), params)
            }
            InitialData::SingleMode { mean, amplitude, wavenumber, velocity, sharpness } => {
                check_sharpness(*sharpness)?;
                let k = *wavenumber as f64;
                let rho = ScalarField::from_fn(grid, |x| mean + amplitude * wave_profile(2.0 * PI * k * x[0], *sharpness).0);
                let u = VectorField::from_fn(grid, |a, x| {
                    if a == 0 {
                        velocity * wave_profile(2.0 * PI * k * x[0], *sharpness).1
                    } else {
                        0.0
                    }
                });
                PrimitiveState::from_velocity(rho, &u, params)
            }
            InitialData::Irrotational { mean, amplitude, wavenumber, sharpness } => {
                check_sharpness(*sharpness)?;
                let k = *wavenumber as f64;
                let rho = ScalarField::from_fn(grid, |x| mean + amplitude * wave_profile(2.0 * PI * k * x[0], *sharpness).0);
                irrotational_initial_data(&rho, params)
            }
            InitialData::Random { mean, amplitude, velocity, max_mode, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let eta = random_shape(grid, *max_mode, &mut rng);
                let eta = eta.scale(1.0 / eta.max_abs().max(f64::MIN_POSITIVE));
                let rho = ScalarField::from_fn(grid, |_| *mean);
                let rho = &rho + &eta.scale(*amplitude);
                let comps: Vec<ScalarField> = (0..grid.dim()).map(|_| random_shape(grid, *max_mode, &mut rng)).collect();
                let xi = VectorField::new(comps)?;
                let xi = xi.scale(velocity / xi.max_norm().max(f64::MIN_POSITIVE));
                PrimitiveState::from_velocity(rho, &xi, params)
            }
            InitialData::Fields(state) => {
                if state.grid() == grid {
                    PrimitiveState::new(state.rho.clone(), state.mom.clone(), params)
                } else {
                    PrimitiveState::new(resample(&state.rho, grid)?, resample_vector(&state.mom, grid)?, params)
                }
            }
        }
    }
}

fn check_sharpness(r: f64) -> Result<()> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::Experiment(format!("sharpness must lie in [0, 1), got {r}")))
    }
}

/// Zero-mean smooth random field with modes `1 ≤ |k|∞ ≤ max_mode`,
/// coefficients decaying like `1/(1+|k|²)`.
fn random_shape(grid: GridSpec, max_mode: usize, rng: &mut ChaCha8Rng) -> ScalarField {
    let d = grid.dim();
    let m = max_mode.max(1) as i64;
    let mut terms = Vec::new();
    let mut k = vec![-m; d];
    loop {
        // One representative of each ±k pair.
        let first_nonzero = k.iter().find(|&&v| v != 0).copied();
        if matches!(first_nonzero, Some(v) if v > 0) {
            let k2: i64 = k.iter().map(|v| v * v).sum();
            let amp = rng.gen_range(-1.0..1.0) / (1.0 + k2 as f64);
            let phase = rng.gen_range(0.0..2.0 * PI);
            terms.push((k.clone(), amp, phase));
        }
        let mut a = d;
        loop {
            if a == 0 {
                return ScalarField::from_fn(grid, |x| {
                    terms
                        .iter()
                        .map(|(k, amp, ph)| {
                            let arg: f64 = k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum();
                            amp * (2.0 * PI * arg + ph).cos()
                        })
                        .sum()
                });
            }
            a -= 1;
            if k[a] < m {
                k[a] += 1;
                break;
            }
            k[a] = -m;
        }
    }
}

/// Smooth zero-mean shapes with unit L² norm, reproducible from `seed`.
pub fn perturbation_shapes(grid: GridSpec, seed: u64) -> (ScalarField, VectorField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = random_shape(grid, 3, &mut rng);
    let eta = eta.scale(1.0 / l2_norm(&eta));
    let comps: Vec<ScalarField> = (0..grid.dim()).map(|_| random_shape(grid, 3, &mut rng)).collect();
    let xi = VectorField::new(comps).expect("shared grid");
    let xi = xi.scale(1.0 / l2_norm_vector(&xi));
    (eta, xi)
}

/// One simulation setup.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub params: FluidParams,
    pub grid: GridSpec,
    pub initial: InitialData,
    pub ctrl: StepControl,
    pub seed: u64,
}

impl Scenario {
    pub fn initial_state(&self) -> Result<PrimitiveState> {
        self.initial.build(self.grid, &self.params)
    }

    fn validate(&self) -> Result<()> {
        let mut v = self.params.violations();
        v.extend(self.ctrl.violations());
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    /// True when the heat oracle is an exact solution for this setup.
    pub fn heat_oracle_applies(&self) -> Result<bool> {
        if self.params.eps != 0.0 || !self.initial.is_irrotational() {
            return Ok(false);
        }
        let s = self.initial_state()?;
        Ok(heat_family_defect(&s.rho, &self.params)? < HEAT_FAMILY_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    HeatOracle,
    /// Same solver at twice the resolution and a quarter of `dt_max`.
    Refined,
}

/// Strong reference sampled on the working grid.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    pub kind: ReferenceKind,
    pub times: Vec<f64>,
    pub states: Vec<ReferenceState>,
}

impl ReferenceTrajectory {
    pub fn primitive(&self, i: usize) -> PrimitiveState {
        self.states[i].to_primitive()
    }
}

pub fn make_reference(scenario: &Scenario) -> Result<ReferenceTrajectory> {
    scenario.validate()?;
    let p = &scenario.params;
    let times = scenario.ctrl.sample_times();
    if scenario.heat_oracle_applies()? {
        let rho0 = scenario.initial_state()?.rho;
        let states = times
            .iter()
            .map(|&t| ReferenceState::from_primitive(&heat_family_state(&rho0, p, t)?, p))
            .collect::<Result<Vec<_>>>()?;
        return Ok(ReferenceTrajectory { kind: ReferenceKind::HeatOracle, times, states });
    }
    let fine = scenario.grid.with_n(2 * scenario.grid.n())?;
    let s0 = scenario.initial.build(fine, p)?;
    let ctrl = StepControl { dt_max: scenario.ctrl.dt_max / 4.0, ..scenario.ctrl };
    let traj = run_with(&s0, p, &ctrl, &mut BasicObserver, RunOptions { forcing: None, store_snapshots: true })
        .map_err(|a| Error::Aborted(format!("reference run: {a}")))?;
    let states = traj
        .snapshots
        .unwrap_or_default()
        .iter()
        .map(|s| {
            let rho = resample(&s.rho, scenario.grid)?;
            let mom = resample_vector(&s.mom, scenario.grid)?;
            ReferenceState::from_primitive(&PrimitiveState::new(rho, mom, p)?, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceTrajectory { kind: ReferenceKind::Refined, times: traj.times, states })
}

#[cfg(feature = "parallel")]
fn ordered_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn ordered_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Runs `state0` and records diagnostics against `reference` at each sample.
pub fn run_against_reference(
    state0: &PrimitiveState,
    params: &FluidParams,
    ctrl: &StepControl,
    reference: &ReferenceTrajectory,
) -> std::result::Result<Trajectory<PrimitiveState>, String> {
    let pressureless = params.eps == 0.0;
    let mut i = 0usize;
    let mut obs = |t: f64, s: &PrimitiveState, p: &FluidParams| -> Result<DiagnosticsRecord> {
        let r = reference
            .states
            .get(i)
            .ok_or_else(|| Error::Experiment("reference has fewer samples than the run".into()))?;
        i += 1;
        full_record(t, s, r, p, pressureless)
    };
    run(state0, params, ctrl, &mut obs).map_err(|a| a.to_string())
}

/// A pressureless run from irrotational data measured against the heat
/// solution at every sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatComparison {
    pub times: Vec<f64>,
    /// `‖ϱ − ϱ_heat‖∞` per sample.
    pub rho_errors: Vec<f64>,
    /// `‖u + 2ν∇log ϱ‖∞` per sample.
    pub drift_defects: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<DiagnosticsRecord>,
    #[serde(skip)]
    pub final_state: Option<PrimitiveState>,
}

impl HeatComparison {
    pub fn max_rho_error(&self) -> f64 {
        self.rho_errors.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn max_drift_defect(&self) -> f64 {
        self.drift_defects.iter().fold(0.0, |m: f64, v| m.max(*v))
    }
}

pub fn heat_oracle_comparison(scenario: &Scenario) -> Result<HeatComparison> {
    scenario.validate()?;
    if scenario.params.eps != 0.0 || !scenario.initial.is_irrotational() {
        return Err(Error::Experiment("the heat comparison needs eps = 0 and irrotational data".into()));
    }
    let p = scenario.params;
    let s0 = scenario.initial_state()?;
    let traj = run_with(&s0, &p, &scenario.ctrl, &mut BasicObserver, RunOptions { forcing: None, store_snapshots: true })
        .map_err(|a| Error::Aborted(a.to_string()))?;
    let mut rho_errors = Vec::new();
    let mut drift_defects = Vec::new();
    for (t, s) in traj.times.iter().zip(traj.snapshots.as_deref().unwrap_or_default()) {
        let exact = heat_solution(&s0.rho, &p, *t);
        rho_errors.push((&s.rho - &exact).max_abs());
        drift_defects.push((&s.velocity() + &drift_velocity(&s.rho, &p)?).max_norm());
    }
    Ok(HeatComparison {
        times: traj.times,
        rho_errors,
        drift_defects,
        records: traj.records,
        final_state: Some(traj.final_state),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakStrongReport {
    pub reference: ReferenceKind,
    pub deltas: Vec<f64>,
    pub times: Vec<f64>,
    /// `entropy[i][j]` is the relative entropy of run `i` at `times[j]`.
    pub entropy: Vec<Vec<f64>>,
    /// Noise floor: the largest relative entropy of the `δ = 0` run.
    pub floor: f64,
    pub gronwall_c: f64,
    /// `𝓔(T)/𝓔(0)` per run (`None` for `δ = 0`).
    pub ratios: Vec<Option<f64>>,
    /// `𝓔(0)/δ²` per run (`None` for `δ = 0`).
    pub initial_over_delta2: Vec<Option<f64>>,
    /// Solver failures per run.
    pub failures: Vec<Option<String>>,
    /// Full diagnostics per run (empty for failed runs).
    #[serde(skip)]
    pub records: Vec<Vec<DiagnosticsRecord>>,
}

impl WeakStrongReport {
    /// Largest `𝓔(T)/𝓔(0)` divided by `e^{CT}`.
    pub fn worst_gronwall_excess(&self) -> f64 {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        let bound = (self.gronwall_c * t_end).exp();
        self.ratios.iter().flatten().fold(0.0, |m: f64, r| m.max(r / bound))
    }

    /// Largest relative deviation of `𝓔(0)/δ²` from its mean over `δ > 0`.
    pub fn quadratic_spread(&self) -> f64 {
        let v: Vec<f64> = self.initial_over_delta2.iter().flatten().copied().collect();
        if v.is_empty() {
            return f64::NAN;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().fold(0.0, |m: f64, x| m.max((x - mean).abs() / mean.abs()))
    }

    pub fn sup_zero_delta(&self) -> f64 {
        self.floor
    }
}

/// Perturbs the initial data as `(ϱ₀(1+δη), u₀+δξ)` and tracks the relative
/// entropy against the unperturbed strong reference. `δ = 0` is always run.
pub fn weak_strong_experiment(scenario: &Scenario, deltas: &[f64]) -> Result<WeakStrongReport> {
    if deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::Experiment("perturbation sizes must be non-negative".into()));
    }
    let p = scenario.params;
    let reference = make_reference(scenario)?;
    let base = scenario.initial_state()?;
    let (eta, xi) = perturbation_shapes(scenario.grid, scenario.seed);
    let mut all = vec![0.0];
    all.extend(deltas.iter().copied().filter(|d| *d != 0.0));

    let u0 = base.velocity();
    let runs = ordered_map(&all, |&delta| {
        let rho = base.rho.zip_map(&eta, |r, e| r * (1.0 + delta * e)).expect("same grid");
        let u = &u0 + &xi.scale(delta);
        let s0 = PrimitiveState::from_velocity(rho, &u, &p).map_err(|e| e.to_string())?;
        run_against_reference(&s0, &p, &scenario.ctrl, &reference)
    });

    let times = reference.times.clone();
    let mut entropy = Vec::with_capacity(all.len());
    let mut failures = Vec::with_capacity(all.len());
    let mut records = Vec::with_capacity(all.len());
    for r in runs {
        match r {
            Ok(traj) => {
                entropy.push(traj.records.iter().map(|r| r.rel_entropy.unwrap_or(f64::NAN)).collect());
                failures.push(None);
                records.push(traj.records);
            }
            Err(e) => {
                entropy.push(Vec::new());
                failures.push(Some(e));
                records.push(Vec::new());
            }
        }
    }
    let floor = entropy[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // Pooled least squares of log(𝓔(t)/𝓔(0)) = C t through the origin.
    let threshold = 100.0 * floor.max(f64::MIN_POSITIVE);
    let (mut num, mut den) = (0.0, 0.0);
    for series in entropy.iter().skip(1) {
        let Some(&e0) = series.first() else { continue };
        if e0 <= threshold {
            continue;
        }
        for (t, e) in times.iter().zip(series).skip(1) {
            if *e > threshold {
                num += t * (e / e0).ln();
                den += t * t;
            }
        }
    }
    let gronwall_c = if den > 0.0 { num / den } else { 0.0 };

    let mut ratios = vec![None];
    let mut initial_over_delta2 = vec![None];
    for (delta, series) in all.iter().zip(&entropy).skip(1) {
        match (series.first(), series.last()) {
            (Some(e0), Some(et)) if series.len() == times.len() => {
                ratios.push(Some(et / e0));
                initial_over_delta2.push(Some(e0 / (delta * delta)));
            }
            _ => {
                ratios.push(None);
                initial_over_delta2.push(None);
            }
        }
    }

    Ok(WeakStrongReport {
        reference: reference.kind,
        deltas: all,
        times,
        entropy,
        floor,
        gronwall_c,
        ratios,
        initial_over_delta2,
        failures,
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MachSweepReport {
    pub eps: Vec<f64>,
    /// Sup-in-time `(n_velocity, n_gradrho, n_rho)` per ε; `None` on failure.
    pub sup_norms: Vec<Option<[f64; 3]>>,
    /// Log-log slopes of each norm against ε over the successful `ε > 0` runs.
    pub slopes: [f64; 3],
    pub failures: Vec<Option<String>>,
    /// Full diagnostics per ε (empty for failed runs).
    #[serde(skip)]
    pub records: Vec<Vec<DiagnosticsRecord>>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Runs the rescaled system for each ε from the same data and measures the
/// distance to the pressureless strong reference.
pub fn mach_sweep(scenario: &Scenario, eps_list: &[f64]) -> Result<MachSweepReport> {
    if eps_list.len() < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: eps_list.len() });
    }
    for (i, e) in eps_list.iter().enumerate() {
        let last = i + 1 == eps_list.len();
        if !(*e > 0.0 && *e <= 1.0 || last && *e == 0.0) {
            return Err(Error::Experiment(format!("eps values must lie in (0, 1], got {e}")));
        }
        if i > 0 && *e >= eps_list[i - 1] {
            return Err(Error::Experiment("eps values must be strictly decreasing".into()));
        }
    }
    let limit = Scenario { params: scenario.params.with_eps(0.0), ..scenario.clone() };
    let reference = make_reference(&limit)?;
    let runs = ordered_map(eps_list, |&eps| {
        let p = scenario.params.with_eps(eps);
        let s0 = scenario.initial.build(scenario.grid, &p).map_err(|e| e.to_string())?;
        let traj = run_against_reference(&s0, &p, &scenario.ctrl, &reference)?;
        let mut sup = [0.0f64; 3];
        for r in &traj.records {
            let n = r.thm53_norms.unwrap_or([f64::NAN; 3]);
            for k in 0..3 {
                sup[k] = sup[k].max(n[k]);
            }
        }
        Ok::<_, String>((sup, traj.records))
    });
    let mut sup_norms = Vec::new();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for r in runs {
        match r {
            Ok((s, recs)) => {
                sup_norms.push(Some(s));
                failures.push(None);
                records.push(recs);
            }
            Err(e) => {
                sup_norms.push(None);
                failures.push(Some(e));
                records.push(Vec::new());
            }
        }
    }
    let mut slopes = [f64::NAN; 3];
    for (k, slope) in slopes.iter_mut().enumerate() {
        let (x, y): (Vec<f64>, Vec<f64>) = eps_list
            .iter()
            .zip(&sup_norms)
            .filter_map(|(e, s)| s.map(|s| (*e, s[k])))
            .filter(|(e, _)| *e > 0.0)
            .unzip();
        *slope = loglog_slope(&x, &y).unwrap_or(f64::NAN);
    }
    Ok(MachSweepReport { eps: eps_list.to_vec(), sup_norms, slopes, failures, records })
}

/// What a convergence study varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Grid sizes at a common step size (the stable step of the finest grid).
    Resolution(Vec<usize>),
    /// Fixed step sizes at the scenario's grid.
    TimeStep(Vec<f64>),
}

/// What the errors are measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    /// Closed form: the heat oracle, or the manufactured target when given.
    Exact,
    /// The finest sweep point refined once more (twice the finest grid, or an
    /// eighth of the smallest step).
    SelfConvergence,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub sweep: Sweep,
    /// Sup over samples of `(‖Δϱ‖² + ‖Δm‖²)^{1/2}` per sweep point.
    pub errors: Vec<f64>,
    /// `errors[i] / errors[i+1]`.
    pub ratios: Vec<f64>,
    /// Log-log slope of error against `dt` (temporal sweeps) or `1/n`.
    pub slope: f64,
}

impl ConvergenceReport {
    /// Every refinement either drops the error by `factor` or has already
    /// reached `floor`.
    pub fn spectral_ok(&self, factor: f64, floor: f64) -> bool {
        self.errors.windows(2).all(|w| w[0] <= floor || w[1] <= floor || w[0] / w[1] >= factor)
    }
}

pub fn state_distance(a: &PrimitiveState, b: &PrimitiveState) -> f64 {
    let dr = l2_norm(&(&a.rho - &b.rho));
    let dm = l2_norm_vector(&(&a.mom - &b.mom));
    (dr * dr + dm * dm).sqrt()
}

fn run_samples(
    s0: &PrimitiveState,
    p: &FluidParams,
    ctrl: &StepControl,
    forcing: Option<&ManufacturedForcing<'_>>,
) -> Result<Vec<PrimitiveState>> {
    let opts = RunOptions { forcing: forcing.map(|f| f as _), store_snapshots: true };
    let traj = run_with(s0, p, ctrl, &mut BasicObserver, opts)
        .map_err(|a| Error::Aborted(a.to_string()))?;
    Ok(traj.snapshots.unwrap_or_default())
}

fn exact_samples(
    scenario: &Scenario,
    grid: GridSpec,
    target: Option<&dyn Target>,
) -> Result<Vec<PrimitiveState>> {
    let times = scenario.ctrl.sample_times();
    if let Some(tg) = target {
        return Ok(times.iter().map(|&t| tg.state(grid, t)).collect());
    }
    let sc = Scenario { grid, ..scenario.clone() };
    if !sc.heat_oracle_applies()? {
        return Err(Error::Experiment(
            "no exact solution: needs pressureless irrotational data with an exact heat family, or a target".into(),
        ));
    }
    let rho0 = sc.initial_state()?.rho;
    times.iter().map(|&t| heat_family_state(&rho0, &scenario.params, t)).collect()
}

fn sup_distance(a: &[PrimitiveState], b: &[PrimitiveState]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Experiment("sample counts differ".into()));
    }
    Ok(a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max(state_distance(x, y))))
}

fn restrict(states: &[PrimitiveState], grid: GridSpec) -> Result<Vec<PrimitiveState>> {
    states
        .iter()
        .map(|s| Ok(PrimitiveState { rho: resample(&s.rho, grid)?, mom: resample_vector(&s.mom, grid)? }))
        .collect()
}

/// Error against an exact or self-converged reference over a resolution or
/// step-size sweep. With a `target`, its manufactured source drives every run.
pub fn convergence_study(
    scenario: &Scenario,
    sweep: &Sweep,
    reference: ErrorReference,
    target: Option<&dyn Target>,
) -> Result<ConvergenceReport> {
    scenario.validate()?;
    let p = scenario.params;
    let (errors, h): (Vec<f64>, Vec<f64>) = match sweep {
        Sweep::Resolution(ns) => {
            if ns.len() < 3 {
                return Err(Error::InsufficientPoints { need: 3, got: ns.len() });
            }
            let grids = ns.iter().map(|&n| scenario.grid.with_n(n)).collect::<Result<Vec<_>>>()?;
            let n_max = *ns.iter().max().expect("non-empty");
            let finest = scenario.grid.with_n(2 * n_max)?;
            let s_fine = scenario.initial.build(finest, &p)?;
            let dt = stable_dt(&s_fine, &p, &scenario.ctrl);
            let ctrl = StepControl { cfl: 1.0, dt_max: dt, ..scenario.ctrl };
            let refs = match reference {
                ErrorReference::SelfConvergence => {
                    let forcing = target.map(|t| ManufacturedForcing { target: t, grid: finest, params: p });
                    Some(run_samples(&s_fine, &p, &ctrl, forcing.as_ref())?)
                }
                ErrorReference::Exact => None,
            };
            let errs = ordered_map(&grids, |&g| -> Result<f64> {
                let s0 = match target {
                    Some(t) => t.state(g, 0.0),
                    None => scenario.initial.build(g, &p)?,
                };
                let forcing = target.map(|t| ManufacturedForcing { target: t, grid: g, params: p });
                let run = run_samples(&s0, &p, &ctrl, forcing.as_ref())?;
                let exact = match &refs {
                    Some(r) => restrict(r, g)?,
                    None => exact_samples(scenario, g, target)?,
                };
                sup_distance(&run, &exact)
            });
            let errs = errs.into_iter().collect::<Result<Vec<_>>>()?;
            (errs, ns.iter().map(|&n| 1.0 / n as f64).collect())
        }
        Sweep::TimeStep(dts) => {
            if dts.len() < 3 {
                return Err(Error::InsufficientPoints { need: 3, got: dts.len() });
            }
            if dts.iter().any(|d| !(*d > 0.0)) {
                return Err(Error::Experiment("step sizes must be positive".into()));
            }
            let g = scenario.grid;
            let s0 = match target {
                Some(t) => t.state(g, 0.0),
                None => scenario.initial.build(g, &p)?,
            };
            let forcing = target.map(|t| ManufacturedForcing { target: t, grid: g, params: p });
            let fixed = |dt: f64| StepControl { cfl: 1.0, dt_max: dt, ..scenario.ctrl };
            let exact = match reference {
                ErrorReference::Exact => exact_samples(scenario, g, target)?,
                ErrorReference::SelfConvergence => {
                    let dt_min = dts.iter().copied().fold(f64::INFINITY, f64::min);
                    run_samples(&s0, &p, &fixed(dt_min / 8.0), forcing.as_ref())?
                }
            };
            let errs = ordered_map(dts, |&dt| -> Result<f64> {
                let run = run_samples(&s0, &p, &fixed(dt), forcing.as_ref())?;
                sup_distance(&run, &exact)
            });
            (errs.into_iter().collect::<Result<Vec<_>>>()?, dts.clone())
        }
    };
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let slope = loglog_slope(&h, &errors).unwrap_or(f64::NAN);
    Ok(ConvergenceReport { sweep: sweep.clone(), errors, ratios, slope })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n: Vec<usize>,
    pub dt: Vec<f64>,
    /// Sup over samples of the L² distance between `(ϱ, m)` and
    /// `(ϱ, ϱw − ϱv)`.
    pub discrepancy: Vec<f64>,
}

impl ConsistencyReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.discrepancy.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Evolves the primitive and augmented formulations side by side. Level `l`
/// uses `n₀·2^l` points and `dt₀/4^l`, where `dt₀` is the scenario's stable
/// step at the coarsest grid.
pub fn consistency_study(scenario: &Scenario, levels: usize) -> Result<ConsistencyReport> {
    if levels < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: levels });
    }
    scenario.validate()?;
    let p = scenario.params;
    let s_coarse = scenario.initial_state()?;
    let dt0 = stable_dt(&s_coarse, &p, &scenario.ctrl);
    let plan: Vec<(usize, f64)> =
        (0..levels).map(|l| (scenario.grid.n() << l, dt0 / 4f64.powi(l as i32))).collect();
    let out = ordered_map(&plan, |&(n, dt)| -> Result<f64> {
        let g = scenario.grid.with_n(n)?;
        let ctrl = StepControl { cfl: 1.0, dt_max: dt, ..scenario.ctrl };
        let s0 = scenario.initial.build(g, &p)?;
        let a0 = AugmentedState::from_primitive(&s0, &p)?;
        let prim = run_with(&s0, &p, &ctrl, &mut BasicObserver, RunOptions { forcing: None, store_snapshots: true }).map_err(|a| Error::Aborted(a.to_string()))?;
        let aug = run_with(&a0, &p, &ctrl, &mut BasicObserver, RunOptions { forcing: None, store_snapshots: true }).map_err(|a| Error::Aborted(a.to_string()))?;
        let ps = prim.snapshots.unwrap_or_default();
        let as_: Vec<PrimitiveState> = aug.snapshots.unwrap_or_default().iter().map(Evolve::to_primitive).collect();
        sup_distance(&ps, &as_)
    });
    Ok(ConsistencyReport {
        n: plan.iter().map(|p| p.0).collect(),
        dt: plan.iter().map(|p| p.1).collect(),
        discrepancy: out.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
