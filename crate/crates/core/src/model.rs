//! Constitutive laws and the algebra of the capillary system: pressure
//! `p = ϱ^γ`, pressure potential `H`, its Bregman divergence, drift and
//! effective velocities, viscous and Korteweg forces, and the `𝒯` tensor.
//!
//! Viscosity is `μ(ϱ) = 2νϱ` entering the momentum balance as
//! `2ν div(ϱ Du)`; capillarity is the constant `κ²`. Pressure carries the
//! Mach weight `ε²` (`ε = 1` unscaled, `ε = 0` pressureless).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    self, div_tensor_dealiased, grad, grad_laplacian, jacobian, laplacian, same_grid, ScalarField,
    TensorField, VectorField,
};

pub const DEFAULT_RHO_FLOOR: f64 = 1e-8;

/// Which member of the family is being solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `ε = 1`.
    Pressured,
    /// `ε = 0`.
    Pressureless,
    /// `0 < ε < 1`.
    Rescaled,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Pressured => "pressured",
            ModelKind::Pressureless => "pressureless",
            ModelKind::Rescaled => "rescaled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub nu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub eps: f64,
    pub rho_floor: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self { nu: 0.05, kappa: 0.5, gamma: 2.0, eps: 1.0, rho_floor: DEFAULT_RHO_FLOOR }
    }
}

impl FluidParams {
    /// Every violated invariant, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            out.push(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            out.push(format!("kappa must be non-negative, got {}", self.kappa));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            out.push(format!("eps must lie in [0, 1], got {}", self.eps));
        }
        if !(self.rho_floor > 0.0 && self.rho_floor < 1e-2) {
            out.push(format!("rho_floor must lie in (0, 1e-2), got {}", self.rho_floor));
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

    pub fn kind(&self) -> ModelKind {
        if self.eps == 0.0 {
            ModelKind::Pressureless
        } else if self.eps == 1.0 {
            ModelKind::Pressured
        } else {
            ModelKind::Rescaled
        }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Self { eps, ..self }
    }

    pub fn eps2(&self) -> f64 {
        self.eps * self.eps
    }
}

/// Conservative variables `(ϱ, m = ϱu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveState {
    pub rho: ScalarField,
    pub mom: VectorField,
}

impl PrimitiveState {
    pub fn new(rho: ScalarField, mom: VectorField, params: &FluidParams) -> Result<Self> {
        same_grid(rho.grid(), mom.grid())?;
        check_floor(&rho, params.rho_floor)?;
        Ok(Self { rho, mom })
    }

    /// Builds the state from a density and a velocity field.
    pub fn from_velocity(rho: ScalarField, u: &VectorField, params: &FluidParams) -> Result<Self> {
        same_grid(rho.grid(), u.grid())?;
        let mom = u.scale_by(&rho);
        Self::new(rho, mom, params)
    }

    pub fn grid(&self) -> fields::GridSpec {
        self.rho.grid()
    }

    pub fn velocity(&self) -> VectorField {
        self.mom.div_by(&self.rho)
    }

    pub fn mass(&self) -> f64 {
        fields::integrate(&self.rho)
    }

    pub fn momentum(&self) -> Vec<f64> {
        self.mom.comps().iter().map(fields::integrate).collect()
    }
}

/// Augmented variables `(ϱ, ϱw, ϱv)` with `v = 2ν∇log ϱ` and `w = u + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub rho: ScalarField,
    pub mw: VectorField,
    pub mv: VectorField,
}

impl AugmentedState {
    /// `ϱv = 2ν∇ϱ`, `ϱw = m + ϱv`.
    pub fn from_primitive(state: &PrimitiveState, params: &FluidParams) -> Result<Self> {
        check_floor(&state.rho, params.rho_floor)?;
        let mv = grad(&state.rho).scale(2.0 * params.nu);
        let mw = &state.mom + &mv;
        Ok(Self { rho: state.rho.clone(), mw, mv })
    }

    /// `m = ϱw − ϱv`.
    pub fn to_primitive(&self) -> PrimitiveState {
        PrimitiveState { rho: self.rho.clone(), mom: &self.mw - &self.mv }
    }

    pub fn grid(&self) -> fields::GridSpec {
        self.rho.grid()
    }

    pub fn w(&self) -> VectorField {
        self.mw.div_by(&self.rho)
    }

    pub fn v(&self) -> VectorField {
        self.mv.div_by(&self.rho)
    }

    pub fn u(&self) -> VectorField {
        (&self.mw - &self.mv).div_by(&self.rho)
    }
}

pub(crate) fn check_floor(rho: &ScalarField, floor: f64) -> Result<()> {
    let min = rho.min();
    if min.is_nan() || !rho.is_finite() {
        return Err(Error::NonFinite { what: "density" });
    }
    if min < floor {
        return Err(Error::DensityBelowFloor { min, floor });
    }
    Ok(())
}

pub fn pressure(rho: &ScalarField, params: &FluidParams) -> ScalarField {
    let g = params.gamma;
    rho.map(|r| r.powf(g))
}

/// `p'(ϱ)/ϱ = γϱ^{γ−2}`, which is also `H''(ϱ)`.
pub fn pressure_derivative_over_rho(rho: &ScalarField, params: &FluidParams) -> ScalarField {
    let g = params.gamma;
    rho.map(|r| g * r.powf(g - 2.0))
}

/// `H(ϱ) = ϱ^γ/(γ−1)`, normalized so `H(0) = 0`.
pub fn pressure_potential(rho: &ScalarField, params: &FluidParams) -> ScalarField {
    let g = params.gamma;
    rho.map(|r| h_scalar(r, g))
}

fn h_scalar(r: f64, g: f64) -> f64 {
    r.max(0.0).powf(g) / (g - 1.0)
}

fn h_prime(r: f64, g: f64) -> f64 {
    g / (g - 1.0) * r.max(0.0).powf(g - 1.0)
}

/// `H(ϱ|r) = H(ϱ) − H(r) − H'(r)(ϱ − r)`.
pub fn bregman(rho: &ScalarField, r: &ScalarField, params: &FluidParams) -> Result<ScalarField> {
    let g = params.gamma;
    rho.zip_map(r, |a, b| bregman_scalar(a, b, g))
}

pub(crate) fn bregman_scalar(a: f64, b: f64, g: f64) -> f64 {
    h_scalar(a, g) - h_scalar(b, g) - h_prime(b, g) * (a - b)
}

pub(crate) fn h_prime_field(rho: &ScalarField, params: &FluidParams) -> ScalarField {
    let g = params.gamma;
    rho.map(|r| h_prime(r, g))
}

/// `v = 2ν∇log ϱ`, evaluated as `2ν∇ϱ/ϱ`.
pub fn drift_velocity(rho: &ScalarField, params: &FluidParams) -> Result<VectorField> {
    check_floor(rho, params.rho_floor)?;
    Ok(grad(rho).div_by(rho).scale(2.0 * params.nu))
}

/// `w = u + v`.
pub fn effective_velocity(
    u: &VectorField,
    rho: &ScalarField,
    params: &FluidParams,
) -> Result<VectorField> {
    same_grid(u.grid(), rho.grid())?;
    Ok(u + &drift_velocity(rho, params)?)
}

/// Capillary stress `2κ²[(ϱΔϱ + ½|∇ϱ|²) I − ∇ϱ ⊗ ∇ϱ]`, whose divergence is
/// the bracketed Korteweg force `2κ²[∇(ϱΔϱ) + ½∇|∇ϱ|² − div(∇ϱ⊗∇ϱ)]`.
/// The `4ϱ∇√ϱ⊗∇√ϱ` term is written as `∇ϱ⊗∇ϱ`, which avoids square roots.
pub fn korteweg_stress(rho: &ScalarField, params: &FluidParams) -> TensorField {
    let k2 = 2.0 * params.kappa * params.kappa;
    let grid = rho.grid();
    if k2 == 0.0 {
        return TensorField::zeros(grid);
    }
    let g = grad(rho);
    let lap = laplacian(rho);
    let iso = rho.zip_map(&lap, |r, l| r * l).expect("same grid");
    let iso = &iso + &g.norm_sq().scale(0.5);
    let mut t = g.outer(&g).scale(-k2);
    t.add_diagonal(&iso.scale(k2));
    t
}

/// Korteweg force in the expanded (stress-divergence) form, products dealiased.
pub fn korteweg_force_expanded(rho: &ScalarField, params: &FluidParams) -> VectorField {
    if params.kappa == 0.0 {
        return VectorField::zeros(rho.grid());
    }
    div_tensor_dealiased(&korteweg_stress(rho, params))
}

/// Korteweg force in the compact form `2κ² ϱ∇Δϱ`, product dealiased.
pub fn korteweg_force_compact(rho: &ScalarField, params: &FluidParams) -> VectorField {
    let k2 = 2.0 * params.kappa * params.kappa;
    if k2 == 0.0 {
        return VectorField::zeros(rho.grid());
    }
    fields::dealias_vector(&grad_laplacian(rho).scale_by(rho).scale(k2))
}

/// Viscous stress `2νϱ Du` given `∇u`.
pub fn viscous_stress(rho: &ScalarField, grad_u: &TensorField, params: &FluidParams) -> TensorField {
    grad_u.sym().scale_by(rho).scale(2.0 * params.nu)
}

/// `2ν div(ϱ Du)`, signed so it is added to `∂t(ϱu)`.
pub fn viscous_force(rho: &ScalarField, u: &VectorField, params: &FluidParams) -> Result<VectorField> {
    same_grid(rho.grid(), u.grid())?;
    Ok(div_tensor_dealiased(&viscous_stress(rho, &jacobian(u), params)))
}

/// `𝒯` divided out by `√ϱ`: entry `(k, j)` is
/// `[∂_j(ϱu_k) − 2∂_j√ϱ · √ϱu_k] / √ϱ`, stored with the same layout as
/// [`jacobian`] so that `𝒯 = √ϱ∇u` for smooth positive states.
pub fn tensor_t(rho: &ScalarField, u: &VectorField, params: &FluidParams) -> Result<TensorField> {
    same_grid(rho.grid(), u.grid())?;
    check_floor(rho, params.rho_floor)?;
    let grid = rho.grid();
    let d = grid.dim();
    let sqrt_rho = rho.map(f64::sqrt);
    let grad_sqrt = grad(&sqrt_rho);
    let m = u.scale_by(rho);
    let grad_m = jacobian(&m);
    let mut comps = Vec::with_capacity(d * d);
    for k in 0..d {
        let sqrt_m_k = u.comp(k) * &sqrt_rho;
        for j in 0..d {
            let num = grad_m.get(k, j) - &(grad_sqrt.comp(j) * &sqrt_m_k).scale(2.0);
            comps.push(num.zip_map(&sqrt_rho, |a, s| a / s)?);
        }
    }
    TensorField::from_comps(grid, comps)
}

/// Relative L² distance between `𝒯` and `√ϱ∇u`.
pub fn tensor_t_defect(rho: &ScalarField, u: &VectorField, params: &FluidParams) -> Result<f64> {
    let t = tensor_t(rho, u, params)?;
    let direct = jacobian(u).scale_by(&rho.map(f64::sqrt));
    let diff = fields::l2_norm_tensor(&(&t - &direct));
    let scale = fields::l2_norm_tensor(&direct);
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{l2_norm_vector, GridSpec};
    use std::f64::consts::PI;

    fn params() -> FluidParams {
        FluidParams { nu: 0.1, kappa: 1.0, gamma: 2.0, eps: 1.0, rho_floor: 1e-8 }
    }

    fn g1(n: usize) -> GridSpec {
        GridSpec::new(1, n).unwrap()
    }

    #[test]
    fn pressure_examples() {
        let g = g1(16);
        let p = params();
        assert!((pressure(&ScalarField::constant(g, 1.0), &p).max() - 1.0).abs() < 1e-15);
        assert!((pressure(&ScalarField::constant(g, 2.0), &p).max() - 4.0).abs() < 1e-15);
        let p14 = FluidParams { gamma: 1.4, ..p };
        let v = pressure(&ScalarField::constant(g, 2.0), &p14).max();
        assert!((v - 2.639_015_821_545_788_5).abs() < 1e-12);
    }

    #[test]
    fn pressure_potential_examples() {
        let g = g1(16);
        let p = params();
        assert_eq!(pressure_potential(&ScalarField::constant(g, 1.0), &p).max(), 1.0);
        assert_eq!(pressure_potential(&ScalarField::zeros(g), &p).max(), 0.0);
        let p3 = FluidParams { gamma: 3.0, ..p };
        assert_eq!(pressure_potential(&ScalarField::constant(g, 2.0), &p3).max(), 4.0);
    }

    #[test]
    fn pressure_potential_second_derivative_matches_p_prime_over_rho() {
        for gamma in [1.4, 2.0, 3.0] {
            let p = FluidParams { gamma, ..params() };
            for r in [0.3, 1.0, 2.5] {
                let h = 1e-4;
                let f = |x: f64| h_scalar(x, gamma);
                let fd = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
                let exact = gamma * r.powf(gamma - 2.0);
                assert!((fd - exact).abs() / exact < 1e-6, "gamma {gamma} r {r}");
                let _ = p;
            }
        }
    }

    #[test]
    fn bregman_examples() {
        let g = g1(16);
        let p = params();
        let two = ScalarField::constant(g, 2.0);
        let one = ScalarField::constant(g, 1.0);
        assert!((bregman(&two, &one, &p).unwrap().max() - 1.0).abs() < 1e-14);
        assert!(bregman(&two, &two, &p).unwrap().max_abs() < 1e-15);
        assert_eq!(bregman(&two, &ScalarField::zeros(g1(8)), &p), Err(Error::GridMismatch));
    }

    #[test]
    fn drift_velocity_examples() {
        let g = g1(64);
        let p = FluidParams { nu: 0.5, ..params() };
        let rho = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin().exp());
        let v = drift_velocity(&rho, &p).unwrap();
        let exact = ScalarField::from_fn(g, |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!((v.comp(0) - &exact).max_abs() < 1e-9);
        assert!(drift_velocity(&ScalarField::constant(g, 3.0), &p).unwrap().max_norm() < 1e-14);
        let low = ScalarField::constant(g, 1e-10);
        assert!(matches!(drift_velocity(&low, &p), Err(Error::DensityBelowFloor { .. })));
    }

    #[test]
    fn drift_velocity_quotient_rule() {
        let g = g1(64);
        let p = FluidParams { nu: 0.3, ..params() };
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).sin());
        let v = drift_velocity(&rho, &p).unwrap();
        let exact = ScalarField::from_fn(g, |x| {
            2.0 * 0.3 * 0.2 * PI * (2.0 * PI * x[0]).cos() / (1.0 + 0.1 * (2.0 * PI * x[0]).sin())
        });
        assert!((v.comp(0) - &exact).max_abs() < 1e-12);
    }

    #[test]
    fn effective_velocity_cancels_for_irrotational_family() {
        let g = GridSpec::new(2, 32).unwrap();
        let p = params();
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * (x[0] + x[1])).cos());
        let u = drift_velocity(&rho, &p).unwrap().scale(-1.0);
        assert!(effective_velocity(&u, &rho, &p).unwrap().max_norm() < 1e-14);
        let c = ScalarField::constant(g, 1.0);
        let one = VectorField::uniform(g, &[1.0, 0.0]);
        let w = effective_velocity(&one, &c, &p).unwrap();
        assert!((w.comp(0).min() - 1.0).abs() < 1e-15 && w.comp(1).max_abs() < 1e-15);
    }

    #[test]
    fn korteweg_forms_vanish_for_constant_density_or_zero_kappa() {
        let g = g1(32);
        let p = params();
        let c = ScalarField::constant(g, 1.3);
        assert!(korteweg_force_expanded(&c, &p).max_norm() < 1e-12);
        assert!(korteweg_force_compact(&c, &p).max_norm() < 1e-12);
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let p0 = FluidParams { kappa: 0.0, ..p };
        assert_eq!(korteweg_force_expanded(&rho, &p0).max_norm(), 0.0);
    }

    #[test]
    fn korteweg_compact_matches_analytic_third_derivative() {
        let g = g1(128);
        let p = params();
        let a = 0.1;
        let rho = ScalarField::from_fn(g, |x| 1.0 + a * (2.0 * PI * x[0]).sin());
        let exact = ScalarField::from_fn(g, |x| {
            let r = 1.0 + a * (2.0 * PI * x[0]).sin();
            2.0 * r * (-a * (2.0 * PI).powi(3) * (2.0 * PI * x[0]).cos())
        });
        let f = korteweg_force_compact(&rho, &p);
        assert!((f.comp(0) - &exact).max_abs() < 1e-10 * exact.max_abs());
        let e = korteweg_force_expanded(&rho, &p);
        let rel = l2_norm_vector(&(&e - &f)) / l2_norm_vector(&f);
        assert!(rel < 1e-10, "relative gap {rel}");
    }

    #[test]
    fn viscous_force_examples() {
        let g = g1(64);
        let p = params();
        let one = ScalarField::constant(g, 1.0);
        let u = VectorField::from_fn(g, |_, x| (2.0 * PI * x[0]).sin());
        let f = viscous_force(&one, &u, &p).unwrap();
        let exact = ScalarField::from_fn(g, |x| -2.0 * 0.1 * (2.0 * PI).powi(2) * (2.0 * PI * x[0]).sin());
        assert!((f.comp(0) - &exact).max_abs() < 1e-11);
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).cos());
        let shifted = &u + &VectorField::uniform(g, &[0.7]);
        let a = viscous_force(&rho, &u, &p).unwrap();
        let b = viscous_force(&rho, &shifted, &p).unwrap();
        assert!((&a - &b).max_norm() < 1e-11);
        assert!(viscous_force(&rho, &VectorField::uniform(g, &[2.0]), &p).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn tensor_t_reduces_to_velocity_gradient() {
        let g = GridSpec::new(2, 32).unwrap();
        let p = params();
        let u = VectorField::from_fn(g, |a, x| {
            (2.0 * PI * x[0]).sin() * if a == 0 { 1.0 } else { (2.0 * PI * x[1]).cos() }
        });
        let one = ScalarField::constant(g, 1.0);
        let t = tensor_t(&one, &u, &p).unwrap();
        let j = jacobian(&u);
        assert!(fields::l2_norm_tensor(&(&t - &j)) < 1e-12);
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin());
        assert!(tensor_t_defect(&rho, &u, &p).unwrap() < 1e-9);
        let zero = tensor_t(&rho, &VectorField::zeros(g), &p).unwrap();
        assert!(fields::l2_norm_tensor(&zero) < 1e-15);
        let s = t.sym();
        let a = t.antisym();
        assert!(fields::l2_norm_tensor(&(&(&s + &a) - &t)) <= 1e-15 * fields::l2_norm_tensor(&t));
    }
}
