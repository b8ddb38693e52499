//! Right-hand sides and explicit RK4 time integration for the primitive
//! `(ϱ, m)` and augmented `(ϱ, ϱw, ϱv)` formulations.
//!
//! Every flux is assembled pointwise on the grid and differentiated with the
//! 2/3 mask, so the density and momentum rates have zero mean exactly (up to
//! roundoff) and masked initial data stay masked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{self, div_dealiased, div_tensor_dealiased, jacobian, GridSpec, ScalarField, VectorField};
use crate::functionals::{self, DiagnosticsRecord};
use crate::model::{
    check_floor, korteweg_stress, pressure, viscous_stress, AugmentedState, FluidParams, PrimitiveState,
};

/// Relative mass change tolerated when clamping to the density floor.
pub const FLOOR_MASS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub sample_every: f64,
}

impl StepControl {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            out.push(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            out.push(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            out.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.sample_every > 0.0 && self.sample_every.is_finite()) {
            out.push(format!("sample_every must be positive, got {}", self.sample_every));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    /// Sample times `0, s, 2s, …, t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut k = 1u64;
        loop {
            let t = k as f64 * self.sample_every;
            if t >= self.t_end * (1.0 - 1e-12) {
                out.push(self.t_end);
                return out;
            }
            out.push(t);
            k += 1;
        }
    }
}

/// A state the integrator can advance. Rates share the state's shape.
pub trait Evolve: Clone + Send + Sync {
    fn grid(&self) -> GridSpec;
    fn rho(&self) -> &ScalarField;
    fn rho_mut(&mut self) -> &mut ScalarField;
    fn velocity(&self) -> VectorField;
    fn rhs(&self, params: &FluidParams) -> Result<Self>;
    /// `self += a * rate`.
    fn axpy(&mut self, a: f64, rate: &Self);
    fn is_finite(&self) -> bool;
    fn to_primitive(&self) -> PrimitiveState;
    fn to_augmented(&self, params: &FluidParams) -> Result<AugmentedState>;
}

impl Evolve for PrimitiveState {
    fn grid(&self) -> GridSpec {
        self.rho.grid()
    }
    fn rho(&self) -> &ScalarField {
        &self.rho
    }
    fn rho_mut(&mut self) -> &mut ScalarField {
        &mut self.rho
    }
    fn velocity(&self) -> VectorField {
        PrimitiveState::velocity(self)
    }
    fn rhs(&self, params: &FluidParams) -> Result<Self> {
        let (rho, mom) = rhs_primitive(self, params)?;
        Ok(PrimitiveState { rho, mom })
    }
    fn axpy(&mut self, a: f64, rate: &Self) {
        self.rho.axpy(a, &rate.rho);
        self.mom.axpy(a, &rate.mom);
    }
    fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.mom.is_finite()
    }
    fn to_primitive(&self) -> PrimitiveState {
        self.clone()
    }
    fn to_augmented(&self, params: &FluidParams) -> Result<AugmentedState> {
        AugmentedState::from_primitive(self, params)
    }
}

impl Evolve for AugmentedState {
    fn grid(&self) -> GridSpec {
        self.rho.grid()
    }
    fn rho(&self) -> &ScalarField {
        &self.rho
    }
    fn rho_mut(&mut self) -> &mut ScalarField {
        &mut self.rho
    }
    fn velocity(&self) -> VectorField {
        self.u()
    }
    fn rhs(&self, params: &FluidParams) -> Result<Self> {
        rhs_augmented(self, params)
    }
    fn axpy(&mut self, a: f64, rate: &Self) {
        self.rho.axpy(a, &rate.rho);
        self.mw.axpy(a, &rate.mw);
        self.mv.axpy(a, &rate.mv);
    }
    fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.mw.is_finite() && self.mv.is_finite()
    }
    fn to_primitive(&self) -> PrimitiveState {
        AugmentedState::to_primitive(self)
    }
    fn to_augmented(&self, _params: &FluidParams) -> Result<AugmentedState> {
        Ok(self.clone())
    }
}

/// `(∂tϱ, ∂tm)` for the primitive system:
/// `∂tϱ = −div m`,
/// `∂tm = −div(m⊗u) − ε²∇p + 2ν div(ϱDu) + Korteweg`.
pub fn rhs_primitive(state: &PrimitiveState, params: &FluidParams) -> Result<(ScalarField, VectorField)> {
    let rho = &state.rho;
    check_floor(rho, params.rho_floor)?;
    let u = state.velocity();
    let grad_u = jacobian(&u);

    let mut flux = state.mom.outer(&u);
    flux.axpy(-1.0, &viscous_stress(rho, &grad_u, params));
    if params.kappa > 0.0 {
        flux.axpy(-1.0, &korteweg_stress(rho, params));
    }
    if params.eps > 0.0 {
        flux.add_diagonal(&pressure(rho, params).scale(params.eps2()));
    }
    let drho = div_dealiased(&state.mom).scale(-1.0);
    let dmom = div_tensor_dealiased(&flux).scale(-1.0);
    Ok((drho, dmom))
}

/// Rates of the augmented system, with `u = (ϱw − ϱv)/ϱ`:
/// `∂tϱ = −div(ϱu)`,
/// `∂t(ϱw) = −div(ϱw⊗u) − ε²∇p + 2ν div(ϱA(w)) + Korteweg`,
/// `∂t(ϱv) = −div(ϱv⊗u) − 2ν div(ϱ∇ᵗu)`.
///
/// Since `v` is a gradient, `A(w) = A(u)`, so `ϱw − ϱv` obeys the primitive
/// momentum balance: `2ν div(ϱA(u)) + 2ν div(ϱ∇ᵗu) = 2ν div(ϱDu)`. The
/// discrete `ϱv` only stays a gradient up to aliasing error, which is where
/// the two formulations differ in more than one dimension.
pub fn rhs_augmented(state: &AugmentedState, params: &FluidParams) -> Result<AugmentedState> {
    let rho = &state.rho;
    check_floor(rho, params.rho_floor)?;
    let m = &state.mw - &state.mv;
    let u = m.div_by(rho);
    let grad_u = jacobian(&u);
    let two_nu = 2.0 * params.nu;

    let mut flux_w = state.mw.outer(&u);
    flux_w.axpy(-two_nu, &jacobian(&state.w()).antisym().scale_by(rho));
    if params.kappa > 0.0 {
        flux_w.axpy(-1.0, &korteweg_stress(rho, params));
    }
    if params.eps > 0.0 {
        flux_w.add_diagonal(&pressure(rho, params).scale(params.eps2()));
    }

    let mut flux_v = state.mv.outer(&u);
    flux_v.axpy(two_nu, &grad_u.transpose().scale_by(rho));

    Ok(AugmentedState {
        rho: div_dealiased(&m).scale(-1.0),
        mw: div_tensor_dealiased(&flux_w).scale(-1.0),
        mv: div_tensor_dealiased(&flux_v).scale(-1.0),
    })
}

/// Heuristic explicit step bound:
/// `cfl · min(Δx/(|u|max + ε c), Δx²/(8ν), 1/(√(2ϱmax) κ (πn)²), dt_max)`.
pub fn stable_dt<S: Evolve>(state: &S, params: &FluidParams, ctrl: &StepControl) -> f64 {
    let grid = state.grid();
    let n = grid.n() as f64;
    let dx = grid.dx();
    let rho_max = state.rho().max();
    let umax = state.velocity().max_norm();
    let c_max = (params.gamma * rho_max.powf(params.gamma - 1.0)).sqrt();
    let mut dt = ctrl.dt_max;
    let adv = umax + params.eps * c_max;
    if adv > 0.0 {
        dt = dt.min(dx / adv);
    }
    if params.nu > 0.0 {
        dt = dt.min(dx * dx / (8.0 * params.nu));
    }
    if params.kappa > 0.0 {
        let k = std::f64::consts::PI * n;
        dt = dt.min(1.0 / ((2.0 * rho_max).sqrt() * params.kappa * k * k));
    }
    ctrl.cfl * dt
}

/// External forcing added to the rates, e.g. manufactured sources.
pub trait Forcing<S>: Sync {
    fn at(&self, t: f64) -> Result<S>;
}

fn rates<S: Evolve>(state: &S, params: &FluidParams, t: f64, forcing: Option<&dyn Forcing<S>>) -> Result<S> {
    let mut k = state.rhs(params)?;
    if let Some(f) = forcing {
        k.axpy(1.0, &f.at(t)?);
    }
    Ok(k)
}

/// One classical RK4 step from time `t`.
pub fn rk4_step<S: Evolve>(
    state: &S,
    params: &FluidParams,
    dt: f64,
    t: f64,
    forcing: Option<&dyn Forcing<S>>,
) -> Result<S> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let k1 = rates(state, params, t, forcing)?;
    let mut y = state.clone();
    y.axpy(0.5 * dt, &k1);
    let k2 = rates(&y, params, t + 0.5 * dt, forcing)?;
    let mut y = state.clone();
    y.axpy(0.5 * dt, &k2);
    let k3 = rates(&y, params, t + 0.5 * dt, forcing)?;
    let mut y = state.clone();
    y.axpy(dt, &k3);
    let k4 = rates(&y, params, t + dt, forcing)?;

    let mut out = state.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

/// Clamps `ϱ ← max(ϱ, floor)`; fails if that moves the mass by more than
/// [`FLOOR_MASS_TOL`].
pub fn enforce_floor<S: Evolve>(state: &mut S, floor: f64) -> Result<()> {
    if state.rho().min() >= floor {
        return Ok(());
    }
    let before = fields::integrate(state.rho());
    for v in state.rho_mut().values_mut() {
        *v = v.max(floor);
    }
    let after = fields::integrate(state.rho());
    let relative = ((after - before) / before).abs();
    if relative > FLOOR_MASS_TOL || before <= 0.0 {
        return Err(Error::FloorMassChange { relative });
    }
    Ok(())
}

/// Produces one diagnostics record per sample time.
pub trait Observer<S> {
    fn observe(&mut self, t: f64, state: &S, params: &FluidParams) -> Result<DiagnosticsRecord>;
}

impl<S, F> Observer<S> for F
where
    F: FnMut(f64, &S, &FluidParams) -> Result<DiagnosticsRecord>,
{
    fn observe(&mut self, t: f64, state: &S, params: &FluidParams) -> Result<DiagnosticsRecord> {
        self(t, state, params)
    }
}

/// Mass, momentum, energies and dissipation; no reference comparison.
#[derive(Clone, Copy, Debug, Default)]
pub struct BasicObserver;

impl<S: Evolve> Observer<S> for BasicObserver {
    fn observe(&mut self, t: f64, state: &S, params: &FluidParams) -> Result<DiagnosticsRecord> {
        functionals::basic_record(t, state, params)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: S,
    /// States at the sample times, when requested.
    pub snapshots: Option<Vec<S>>,
    pub steps: usize,
}

/// A run that stopped early; `partial.final_state` is the last good state.
#[derive(Clone, Debug)]
pub struct Aborted<S> {
    pub error: Error,
    pub partial: Trajectory<S>,
}

impl<S> std::fmt::Display for Aborted<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = self.partial.times.last().copied().unwrap_or(0.0);
        write!(f, "run aborted after t = {t}: {}", self.error)
    }
}

impl<S: std::fmt::Debug> std::error::Error for Aborted<S> {}

pub struct RunOptions<'a, S> {
    pub forcing: Option<&'a dyn Forcing<S>>,
    pub store_snapshots: bool,
}

impl<S> Default for RunOptions<'_, S> {
    fn default() -> Self {
        Self { forcing: None, store_snapshots: false }
    }
}

pub type RunResult<S> = std::result::Result<Trajectory<S>, Box<Aborted<S>>>;

pub fn run<S: Evolve>(
    state0: &S,
    params: &FluidParams,
    ctrl: &StepControl,
    observer: &mut dyn Observer<S>,
) -> RunResult<S> {
    run_with(state0, params, ctrl, observer, RunOptions::default())
}

/// Advances to `ctrl.t_end`, landing exactly on every sample time. Within a
/// sample interval the step is the stable step shrunk so that a whole number
/// of steps fits.
pub fn run_with<S: Evolve>(
    state0: &S,
    params: &FluidParams,
    ctrl: &StepControl,
    observer: &mut dyn Observer<S>,
    opts: RunOptions<'_, S>,
) -> RunResult<S> {
    let mut traj = Trajectory {
        times: Vec::new(),
        records: Vec::new(),
        final_state: state0.clone(),
        snapshots: opts.store_snapshots.then(Vec::new),
        steps: 0,
    };
    let abort = |error: Error, traj: Trajectory<S>| Box::new(Aborted { error, partial: traj });

    if let Err(e) = params.validate().and_then(|_| ctrl.validate()) {
        return Err(abort(e, traj));
    }
    let mut state = state0.clone();
    let samples = ctrl.sample_times();
    let mut t = 0.0;
    for (i, &t_next) in samples.iter().enumerate() {
        while i > 0 && t < t_next {
            let remaining = t_next - t;
            let dt_stable = stable_dt(&state, params, ctrl);
            if !(dt_stable > 0.0 && dt_stable.is_finite()) {
                return Err(abort(Error::NanDetected { t }, traj));
            }
            let steps = (remaining / dt_stable - 1e-9).ceil().max(1.0);
            let dt = remaining / steps;
            let next = rk4_step(&state, params, dt, t, opts.forcing)
                .and_then(|mut s| {
                    if !s.is_finite() {
                        return Err(Error::NanDetected { t: t + dt });
                    }
                    enforce_floor(&mut s, params.rho_floor)?;
                    Ok(s)
                })
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NanDetected { t: t + dt },
                    e => e,
                });
            match next {
                Ok(s) => state = s,
                Err(e) => return Err(abort(e, traj)),
            }
            traj.steps += 1;
            traj.final_state = state.clone();
            t = if steps <= 1.0 { t_next } else { t + dt };
        }
        match observer.observe(t_next, &state, params) {
            Ok(rec) => {
                traj.times.push(t_next);
                traj.records.push(rec);
                if let Some(s) = traj.snapshots.as_mut() {
                    s.push(state.clone());
                }
            }
            Err(e) => return Err(abort(e, traj)),
        }
    }
    traj.final_state = state;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::integrate;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(1, n).unwrap()
    }

    fn smooth_state(g: GridSpec, p: &FluidParams) -> PrimitiveState {
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).cos() + 0.05 * (4.0 * PI * x[0]).sin());
        let u = VectorField::from_fn(g, |_, x| 0.1 * (2.0 * PI * x[0]).sin() + 0.03);
        PrimitiveState::from_velocity(rho, &u, p).unwrap()
    }

    #[test]
    fn uniform_state_is_steady() {
        let g = grid(32);
        let p = FluidParams::default();
        let s = PrimitiveState::new(ScalarField::constant(g, 1.3), VectorField::zeros(g), &p).unwrap();
        let (dr, dm) = rhs_primitive(&s, &p).unwrap();
        assert!(dr.max_abs() < 1e-14 && dm.max_norm() < 1e-13);
        let a = AugmentedState::from_primitive(&s, &p).unwrap();
        let r = rhs_augmented(&a, &p).unwrap();
        assert!(r.rho.max_abs() < 1e-14 && r.mw.max_norm() < 1e-13 && r.mv.max_norm() < 1e-13);
    }

    #[test]
    fn rates_integrate_to_zero() {
        let g = GridSpec::new(2, 32).unwrap();
        let p = FluidParams::default();
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin());
        let u = VectorField::from_fn(g, |a, x| 0.1 * (2.0 * PI * (x[0] + a as f64 * x[1])).sin());
        let s = PrimitiveState::from_velocity(rho, &u, &p).unwrap();
        let (dr, dm) = rhs_primitive(&s, &p).unwrap();
        assert!(integrate(&dr).abs() < 1e-11);
        for c in dm.comps() {
            assert!(integrate(c).abs() < 1e-11);
        }
    }

    #[test]
    fn augmented_continuity_matches_primitive() {
        let g = grid(64);
        let p = FluidParams::default();
        let s = smooth_state(g, &p);
        let a = AugmentedState::from_primitive(&s, &p).unwrap();
        let (dr, dm) = rhs_primitive(&s, &p).unwrap();
        let ra = rhs_augmented(&a, &p).unwrap();
        assert!((&dr - &ra.rho).max_abs() < 1e-11);
        let dm_aug = &ra.mw - &ra.mv;
        assert!((&dm - &dm_aug).max_norm() < 1e-8 * dm.max_norm().max(1.0));
    }

    #[test]
    fn stable_dt_examples() {
        let g = grid(64);
        let ctrl = StepControl { cfl: 0.5, dt_max: 1e-2, t_end: 1.0, sample_every: 0.1 };
        let s = PrimitiveState {
            rho: ScalarField::constant(g, 1.0),
            mom: VectorField::zeros(g),
        };
        let p = FluidParams { nu: 1e-300, kappa: 0.0, eps: 0.0, ..FluidParams::default() };
        assert_eq!(stable_dt(&s, &p, &ctrl), 0.5 * 1e-2);

        let pk = FluidParams { kappa: 0.5, ..FluidParams::default() };
        let fine = PrimitiveState { rho: ScalarField::constant(grid(128), 1.0), mom: VectorField::zeros(grid(128)) };
        let big = StepControl { dt_max: 1.0, ..ctrl };
        let ratio = stable_dt(&s, &pk, &big) / stable_dt(&fine, &pk, &big);
        assert!((ratio - 4.0).abs() < 1e-12);

        let pa = FluidParams { nu: 1e-12, kappa: 0.0, eps: 0.0, ..FluidParams::default() };
        let s1 = PrimitiveState { rho: ScalarField::constant(g, 1.0), mom: VectorField::uniform(g, &[1.0]) };
        let s2 = PrimitiveState { rho: ScalarField::constant(g, 1.0), mom: VectorField::uniform(g, &[2.0]) };
        let r = stable_dt(&s1, &pa, &big) / stable_dt(&s2, &pa, &big);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_step_is_identity() {
        let g = grid(32);
        let p = FluidParams::default();
        let s = smooth_state(g, &p);
        assert_eq!(rk4_step(&s, &p, 0.0, 0.0, None).unwrap(), s);
    }

    #[test]
    fn sample_times_end_exactly() {
        let c = StepControl { cfl: 1.0, dt_max: 1.0, t_end: 0.1, sample_every: 0.03 };
        let t = c.sample_times();
        assert_eq!(t.len(), 5);
        assert_eq!(*t.last().unwrap(), 0.1);
        let c = StepControl { sample_every: 0.025, ..c };
        assert_eq!(c.sample_times().len(), 5);
    }

    #[test]
    fn run_conserves_mass_and_lands_on_samples() {
        let g = grid(32);
        let p = FluidParams { kappa: 0.1, ..FluidParams::default() };
        let s = smooth_state(g, &p);
        let ctrl = StepControl { cfl: 0.8, dt_max: 1e-3, t_end: 0.02, sample_every: 0.005 };
        let traj = run(&s, &p, &ctrl, &mut BasicObserver).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.005, 0.01, 0.015, 0.02]);
        let m0 = traj.records[0].mass;
        for r in &traj.records {
            assert!(((r.mass - m0) / m0).abs() < 1e-13);
        }
    }

    #[test]
    fn nan_aborts_with_last_good_state() {
        let g = grid(16);
        let p = FluidParams::default();
        let s = smooth_state(g, &p);
        struct Bad;
        impl Forcing<PrimitiveState> for Bad {
            fn at(&self, t: f64) -> Result<PrimitiveState> {
                let g = GridSpec::new(1, 16).unwrap();
                let v = if t > 0.0015 { f64::NAN } else { 0.0 };
                Ok(PrimitiveState { rho: ScalarField::constant(g, 0.0), mom: VectorField::uniform(g, &[v]) })
            }
        }
        let ctrl = StepControl { cfl: 1.0, dt_max: 1e-3, t_end: 0.01, sample_every: 0.001 };
        let err = run_with(&s, &p, &ctrl, &mut BasicObserver, RunOptions { forcing: Some(&Bad), store_snapshots: false })
            .unwrap_err();
        assert!(matches!(err.error, Error::NanDetected { .. }), "{:?}", err.error);
        assert!(err.partial.final_state.is_finite());
        assert!(!err.partial.times.is_empty());
    }

    #[test]
    fn floor_clamp_rejects_large_mass_change() {
        let g = grid(16);
        let mut rho = ScalarField::constant(g, 1.0);
        rho.values_mut()[0] = -0.5;
        let mut s = PrimitiveState { rho, mom: VectorField::zeros(g) };
        assert!(matches!(enforce_floor(&mut s, 1e-8), Err(Error::FloorMassChange { .. })));
        let mut rho = ScalarField::constant(g, 1.0);
        rho.values_mut()[0] = 1e-8 - 1e-12;
        let mut s = PrimitiveState { rho, mom: VectorField::zeros(g) };
        enforce_floor(&mut s, 1e-8).unwrap();
        assert_eq!(s.rho.min(), 1e-8);
    }
}
