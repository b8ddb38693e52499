//! Closed-form reference solutions.
//!
//! The irrotational family `u = −2ν∇log ϱ` with `∂tϱ = 2νΔϱ` solves the
//! pressureless system without capillarity exactly. Manufactured targets turn
//! any smooth closed-form pair `(ϱ, u)` into an exact solution by adding the
//! residual as a source.

use std::f64::consts::PI;

use crate::error::Result;
use crate::fields::{
    self, dealias, dealias_vector, div, div_tensor, fourier_multiplier, grad, jacobian, laplacian, resample,
    resample_vector, GridSpec, ScalarField, TensorField, VectorField,
};
use crate::model::{check_floor, korteweg_stress, pressure, viscous_stress, FluidParams, PrimitiveState};
use crate::solver::Forcing;

/// `(ϱ₀, −2ν∇ϱ₀)`, i.e. `u₀ = −2ν∇log ϱ₀`.
pub fn irrotational_initial_data(rho0: &ScalarField, params: &FluidParams) -> Result<PrimitiveState> {
    check_floor(rho0, params.rho_floor)?;
    let mom = grad(rho0).scale(-2.0 * params.nu);
    Ok(PrimitiveState { rho: rho0.clone(), mom })
}

/// Exact Fourier solution of `∂tϱ = 2νΔϱ`: mode `k` decays as
/// `exp(−8π²ν|k|²t)`.
pub fn heat_solution(rho0: &ScalarField, params: &FluidParams, t: f64) -> ScalarField {
    if t == 0.0 {
        return rho0.clone();
    }
    let c = -8.0 * PI * PI * params.nu * t;
    fourier_multiplier(rho0, |k| {
        let k2: i64 = k.iter().map(|v| v * v).sum();
        (c * k2 as f64).exp()
    })
}

/// Irrotational state carried by the heat solution at time `t`.
pub fn heat_family_state(rho0: &ScalarField, params: &FluidParams, t: f64) -> Result<PrimitiveState> {
    irrotational_initial_data(&heat_solution(rho0, params, t), params)
}

/// Smooth closed-form space-time fields.
pub trait Target: Sync {
    fn rho(&self, t: f64, x: &[f64]) -> f64;
    fn rho_t(&self, t: f64, x: &[f64]) -> f64;
    fn u(&self, t: f64, x: &[f64], axis: usize) -> f64;
    fn u_t(&self, t: f64, x: &[f64], axis: usize) -> f64;

    fn state(&self, grid: GridSpec, t: f64) -> PrimitiveState {
        let rho = ScalarField::from_fn(grid, |x| self.rho(t, x));
        let u = VectorField::from_fn(grid, |a, x| self.u(t, x, a));
        let mom = u.scale_by(&rho);
        PrimitiveState { rho, mom }
    }
}

fn dot(k: &[f64], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `ϱ = ϱ̄ + a·e^{−8π²ν|k|²t}cos(2πk·x)`, `u = −2ν∇log ϱ`.
#[derive(Clone, Debug)]
pub struct HeatFamilyTarget {
    pub mean: f64,
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    pub nu: f64,
}

impl HeatFamilyTarget {
    fn decay(&self) -> f64 {
        8.0 * PI * PI * self.nu * dot(&self.wavevector, &self.wavevector)
    }

    fn phase(&self, x: &[f64]) -> f64 {
        2.0 * PI * dot(&self.wavevector, x)
    }

    fn grad_rho(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        let a = self.amplitude * (-self.decay() * t).exp();
        -a * 2.0 * PI * self.wavevector[axis] * self.phase(x).sin()
    }
}

impl Target for HeatFamilyTarget {
    fn rho(&self, t: f64, x: &[f64]) -> f64 {
        self.mean + self.amplitude * (-self.decay() * t).exp() * self.phase(x).cos()
    }

    fn rho_t(&self, t: f64, x: &[f64]) -> f64 {
        -self.decay() * (self.rho(t, x) - self.mean)
    }

    fn u(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        -2.0 * self.nu * self.grad_rho(t, x, axis) / self.rho(t, x)
    }

    fn u_t(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        // ∇ϱ_t = −λ∇ϱ, hence u_t = −2ν(−λ∇ϱ/ϱ − ∇ϱ ϱ_t/ϱ²).
        let r = self.rho(t, x);
        let g = self.grad_rho(t, x, axis);
        let rt = self.rho_t(t, x);
        -2.0 * self.nu * (-self.decay() * g / r - g * rt / (r * r))
    }
}

/// Periodic profiles `f(θ) = Σ r^{k−1} cos kθ = (cos θ − r)/D` and
/// `g(θ) = Σ r^{k−1} sin kθ = sin θ/D` with `D = 1 − 2r cos θ + r²`,
/// returned with their derivatives as `(f, g, f', g')`. Mode `k` has
/// amplitude `r^{k−1}`; `r = 0` gives `(cos θ, sin θ)`.
pub fn wave_profile(theta: f64, r: f64) -> (f64, f64, f64, f64) {
    let (s, c) = theta.sin_cos();
    let d = 1.0 - 2.0 * r * c + r * r;
    let d2 = d * d;
    ((c - r) / d, s / d, -s * (1.0 - r * r) / d2, ((1.0 + r * r) * c - 2.0 * r) / d2)
}

/// Travelling wave `ϱ = ϱ̄ + a f(θ)`, `u = b g(θ) e`, `θ = 2πk·x − ωt`, with
/// the profiles of [`wave_profile`].
#[derive(Clone, Debug)]
pub struct WaveTarget {
    pub mean: f64,
    pub rho_amplitude: f64,
    pub u_amplitude: f64,
    pub wavevector: Vec<f64>,
    pub direction: Vec<f64>,
    pub omega: f64,
    pub sharpness: f64,
}

impl WaveTarget {
    fn profile(&self, t: f64, x: &[f64]) -> (f64, f64, f64, f64) {
        wave_profile(2.0 * PI * dot(&self.wavevector, x) - self.omega * t, self.sharpness)
    }
}

impl Target for WaveTarget {
    fn rho(&self, t: f64, x: &[f64]) -> f64 {
        self.mean + self.rho_amplitude * self.profile(t, x).0
    }

    fn rho_t(&self, t: f64, x: &[f64]) -> f64 {
        -self.omega * self.rho_amplitude * self.profile(t, x).2
    }

    fn u(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        self.u_amplitude * self.direction[axis] * self.profile(t, x).1
    }

    fn u_t(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        -self.omega * self.u_amplitude * self.direction[axis] * self.profile(t, x).3
    }
}

/// Residual of the primitive system at `target`, returned as `(S_ϱ, S_m)` in
/// a [`PrimitiveState`]. Adding it to the rates makes the target exact.
///
/// Spatial terms are evaluated on a grid with at least `max(4n, 256)` points
/// per axis, then restricted to `grid` and masked.
pub fn manufactured_source(
    target: &dyn Target,
    grid: GridSpec,
    t: f64,
    params: &FluidParams,
) -> Result<PrimitiveState> {
    let fine_n = (4 * grid.n()).max(256);
    let fine = grid.with_n(fine_n)?;
    let (s_rho, s_mom) = residual(target, fine, t, params)?;
    Ok(PrimitiveState {
        rho: dealias(&resample(&s_rho, grid)?),
        mom: dealias_vector(&resample_vector(&s_mom, grid)?),
    })
}

fn residual(target: &dyn Target, grid: GridSpec, t: f64, params: &FluidParams) -> Result<(ScalarField, VectorField)> {
    let st = target.state(grid, t);
    check_floor(&st.rho, params.rho_floor)?;
    let rho = &st.rho;
    let u = VectorField::from_fn(grid, |a, x| target.u(t, x, a));
    let rho_t = ScalarField::from_fn(grid, |x| target.rho_t(t, x));
    let u_t = VectorField::from_fn(grid, |a, x| target.u_t(t, x, a));
    let m_t = &u.scale_by(&rho_t) + &u_t.scale_by(rho);

    let s_rho = &rho_t + &div(&st.mom);
    let mut flux: TensorField = st.mom.outer(&u);
    flux.axpy(-1.0, &viscous_stress(rho, &jacobian(&u), params));
    if params.kappa > 0.0 {
        flux.axpy(-1.0, &korteweg_stress(rho, params));
    }
    if params.eps > 0.0 {
        flux.add_diagonal(&pressure(rho, params).scale(params.eps2()));
    }
    let s_mom = &m_t + &div_tensor(&flux);
    Ok((s_rho, s_mom))
}

/// Momentum residual of the irrotational family through `rho0` at `t = 0`,
/// relative to the size of `∂t m`, evaluated on a `max(4n, 256)` grid. Zero
/// (to roundoff) exactly when the family solves the system with the given
/// parameters.
pub fn heat_family_defect(rho0: &ScalarField, params: &FluidParams) -> Result<f64> {
    let grid = rho0.grid();
    let fine = grid.with_n((4 * grid.n()).max(256))?;
    let state = irrotational_initial_data(&resample(rho0, fine)?, params)?;
    let rho = &state.rho;
    let rho_t = laplacian(rho).scale(2.0 * params.nu);
    let m_t = grad(&rho_t).scale(-2.0 * params.nu);
    let u = state.velocity();
    let mut flux = state.mom.outer(&u);
    flux.axpy(-1.0, &viscous_stress(rho, &jacobian(&u), params));
    if params.kappa > 0.0 {
        flux.axpy(-1.0, &korteweg_stress(rho, params));
    }
    if params.eps > 0.0 {
        flux.add_diagonal(&pressure(rho, params).scale(params.eps2()));
    }
    let res = &m_t + &div_tensor(&flux);
    let scale = fields::l2_norm_vector(&m_t);
    let r = fields::l2_norm_vector(&res);
    Ok(if scale > 0.0 { r / scale } else { r })
}

/// Source term of a manufactured target as an RK4 forcing.
pub struct ManufacturedForcing<'a> {
    pub target: &'a dyn Target,
    pub grid: GridSpec,
    pub params: FluidParams,
}

impl Forcing<PrimitiveState> for ManufacturedForcing<'_> {
    fn at(&self, t: f64) -> Result<PrimitiveState> {
        manufactured_source(self.target, self.grid, t, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{integrate, l2_norm, linf_norm, linf_norm_vector};

    fn g1(n: usize) -> GridSpec {
        GridSpec::new(1, n).unwrap()
    }

    fn cos_profile(g: GridSpec) -> ScalarField {
        ScalarField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos())
    }

    #[test]
    fn irrotational_examples() {
        let g = g1(64);
        let p = FluidParams { nu: 0.1, ..FluidParams::default() };
        let s = irrotational_initial_data(&ScalarField::constant(g, 2.0), &p).unwrap();
        assert!(s.mom.max_norm() < 1e-15);

        let s = irrotational_initial_data(&cos_profile(g), &p).unwrap();
        let expect = ScalarField::from_fn(g, |x| 0.2 * PI * (2.0 * PI * x[0]).sin());
        assert!((s.mom.comp(0) - &expect).max_abs() < 1e-13);
        let w = crate::model::effective_velocity(&s.velocity(), &s.rho, &p).unwrap();
        assert!(w.max_norm() < 1e-14);
    }

    #[test]
    fn heat_examples() {
        let g = g1(64);
        let p = FluidParams { nu: 0.1, ..FluidParams::default() };
        let r0 = cos_profile(g);
        assert_eq!(heat_solution(&r0, &p, 0.0), r0);
        let t = 0.3;
        let exact = ScalarField::from_fn(g, |x| {
            1.0 + 0.5 * (-8.0 * PI * PI * 0.1 * t).exp() * (2.0 * PI * x[0]).cos()
        });
        assert!((&heat_solution(&r0, &p, t) - &exact).max_abs() < 1e-14);
        for t in [0.01, 0.1, 1.0] {
            assert!((integrate(&heat_solution(&r0, &p, t)) - integrate(&r0)).abs() < 1e-14);
        }
    }

    #[test]
    fn heat_target_matches_heat_solution() {
        let g = g1(32);
        let p = FluidParams { nu: 0.1, ..FluidParams::default() };
        let target = HeatFamilyTarget { mean: 1.0, amplitude: 0.5, wavevector: vec![1.0], nu: 0.1 };
        let t = 0.07;
        let s = target.state(g, t);
        let h = heat_family_state(&cos_profile(g), &p, t).unwrap();
        assert!((&s.rho - &h.rho).max_abs() < 1e-14);
        assert!((&s.mom - &h.mom).max_norm() < 1e-12);
    }

    #[test]
    fn target_time_derivatives_match_differences() {
        let tg = WaveTarget {
            mean: 1.0,
            rho_amplitude: 0.2,
            u_amplitude: 0.3,
            wavevector: vec![1.0, 2.0],
            direction: vec![0.6, 0.8],
            omega: 7.0,
            sharpness: 0.4,
        };
        let ht = HeatFamilyTarget { mean: 1.0, amplitude: 0.4, wavevector: vec![1.0, 1.0], nu: 0.05 };
        let x = [0.3, 0.7];
        let h = 1e-6;
        for target in [&tg as &dyn Target, &ht] {
            let fd = (target.rho(0.2 + h, &x) - target.rho(0.2 - h, &x)) / (2.0 * h);
            assert!((fd - target.rho_t(0.2, &x)).abs() < 1e-7);
            for a in 0..2 {
                let fd = (target.u(0.2 + h, &x, a) - target.u(0.2 - h, &x, a)) / (2.0 * h);
                assert!((fd - target.u_t(0.2, &x, a)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn profile_matches_its_series() {
        let r = 0.4;
        for theta in [0.0, 0.7, 2.0, 4.5] {
            let (f, g, fp, gp) = wave_profile(theta, r);
            let (mut sf, mut sg, mut sfp, mut sgp) = (0.0, 0.0, 0.0, 0.0);
            for k in 1..200 {
                let w = r.powi(k - 1);
                let kt = k as f64 * theta;
                sf += w * kt.cos();
                sg += w * kt.sin();
                sfp -= w * k as f64 * kt.sin();
                sgp += w * k as f64 * kt.cos();
            }
            assert!((f - sf).abs() < 1e-13 && (g - sg).abs() < 1e-13);
            assert!((fp - sfp).abs() < 1e-12 && (gp - sgp).abs() < 1e-12);
        }
        let (f, g, _, _) = wave_profile(1.1, 0.0);
        assert!((f - 1.1f64.cos()).abs() < 1e-15 && (g - 1.1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn heat_family_source_vanishes_without_capillarity() {
        let g = g1(64);
        let p = FluidParams { nu: 0.1, kappa: 0.0, eps: 0.0, ..FluidParams::default() };
        let target = HeatFamilyTarget { mean: 1.0, amplitude: 0.5, wavevector: vec![1.0], nu: 0.1 };
        let src = manufactured_source(&target, g, 0.05, &p).unwrap();
        assert!(linf_norm(&src.rho) <= 1e-9);
        assert!(linf_norm_vector(&src.mom) <= 1e-9);
        assert!(heat_family_defect(&cos_profile(g), &p).unwrap() < 1e-10);
    }

    #[test]
    fn capillarity_breaks_the_heat_family() {
        let g = g1(64);
        let p = FluidParams { nu: 0.1, kappa: 0.5, eps: 0.0, ..FluidParams::default() };
        let d = heat_family_defect(&cos_profile(g), &p).unwrap();
        assert!(d > 1e-2, "defect {d}");
    }

    #[test]
    fn constant_target_has_no_source() {
        let g = GridSpec::new(2, 16).unwrap();
        let p = FluidParams::default();
        let tg = WaveTarget {
            mean: 1.3,
            rho_amplitude: 0.0,
            u_amplitude: 0.0,
            wavevector: vec![1.0, 0.0],
            direction: vec![1.0, 0.0],
            omega: 3.0,
            sharpness: 0.0,
        };
        let src = manufactured_source(&tg, g, 0.4, &p).unwrap();
        assert!(l2_norm(&src.rho) < 1e-14 && fields::l2_norm_vector(&src.mom) < 1e-12);
    }
}
