//! Energies, dissipation, relative entropy and the high-Mach convergence norms.
//!
//! Conventions: kinetic terms are `½ϱ|·|²`, the capillary energy is
//! `κ²|∇ϱ|²`, and pressure terms carry the Mach weight `ε²`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{
    grad, integrate, jacobian, l2_norm, l2_norm_vector, laplacian, same_grid, ScalarField, VectorField,
};
use crate::model::{
    bregman, check_floor, drift_velocity, h_prime_field, pressure_derivative_over_rho, pressure_potential,
    AugmentedState, FluidParams, PrimitiveState,
};
use crate::solver::{rhs_augmented, rhs_primitive, Evolve};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub aug_energy: f64,
    pub dissipation: f64,
    pub rel_entropy: Option<f64>,
    /// `(n_velocity, n_gradrho, n_rho)`.
    pub thm53_norms: Option<[f64; 3]>,
}

/// Smooth reference `(r, U)` together with `V = 2ν∇log r` and `W = U + V`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceState {
    pub r: ScalarField,
    pub u: VectorField,
    pub w: VectorField,
    pub v: VectorField,
}

impl ReferenceState {
    pub fn new(r: ScalarField, u: VectorField, params: &FluidParams) -> Result<Self> {
        same_grid(r.grid(), u.grid())?;
        let v = drift_velocity(&r, params)?;
        let w = &u + &v;
        Ok(Self { r, u, w, v })
    }

    pub fn from_primitive(state: &PrimitiveState, params: &FluidParams) -> Result<Self> {
        Self::new(state.rho.clone(), state.velocity(), params)
    }

    pub fn to_primitive(&self) -> PrimitiveState {
        PrimitiveState { rho: self.r.clone(), mom: self.u.scale_by(&self.r) }
    }
}

fn capillary_energy(rho: &ScalarField, params: &FluidParams) -> f64 {
    let k2 = params.kappa * params.kappa;
    if k2 == 0.0 {
        return 0.0;
    }
    k2 * integrate(&grad(rho).norm_sq())
}

fn internal_energy(rho: &ScalarField, params: &FluidParams) -> f64 {
    let e2 = params.eps2();
    if e2 == 0.0 {
        return 0.0;
    }
    e2 * integrate(&pressure_potential(rho, params))
}

/// `∫ ½|m|²/ϱ + ε²H(ϱ) + κ²|∇ϱ|²`.
pub fn energy_primitive(state: &PrimitiveState, params: &FluidParams) -> f64 {
    let kinetic = integrate(&state.mom.norm_sq().zip_map(&state.rho, |m2, r| 0.5 * m2 / r).expect("same grid"));
    kinetic + internal_energy(&state.rho, params) + capillary_energy(&state.rho, params)
}

/// `∫ ½ϱ(|w|² + |v|²) + ε²H(ϱ) + κ²|∇ϱ|²`.
pub fn energy_augmented(state: &AugmentedState, params: &FluidParams) -> f64 {
    let m2 = &state.mw.norm_sq() + &state.mv.norm_sq();
    let kinetic = integrate(&m2.zip_map(&state.rho, |m2, r| 0.5 * m2 / r).expect("same grid"));
    kinetic + internal_energy(&state.rho, params) + capillary_energy(&state.rho, params)
}

/// `2ν∫ϱ(|Du|² + |Aw|²) + 2νε²∫(p'(ϱ)/ϱ)|∇ϱ|² + 4νκ²∫|Δϱ|²`.
pub fn dissipation(state: &AugmentedState, params: &FluidParams) -> f64 {
    let two_nu = 2.0 * params.nu;
    let rho = &state.rho;
    let du = jacobian(&state.u()).sym();
    let aw = jacobian(&state.w()).antisym();
    let visc = integrate(&(&du.frob_sq() + &aw.frob_sq()).zip_map(rho, |a, r| a * r).expect("same grid"));
    let mut total = two_nu * visc;
    let e2 = params.eps2();
    if e2 > 0.0 {
        let g2 = grad(rho).norm_sq();
        total += two_nu * e2 * integrate(&(&pressure_derivative_over_rho(rho, params) * &g2));
    }
    let k2 = params.kappa * params.kappa;
    if k2 > 0.0 {
        total += 2.0 * two_nu * k2 * integrate(&laplacian(rho).map(|l| l * l));
    }
    total
}

/// Rate of change of the density-dependent part `ε²H(ϱ) + κ²|∇ϱ|²`.
fn potential_rate(rho: &ScalarField, drho: &ScalarField, params: &FluidParams) -> f64 {
    let mut rate = 0.0;
    let e2 = params.eps2();
    if e2 > 0.0 {
        rate += e2 * integrate(&(&h_prime_field(rho, params) * drho));
    }
    let k2 = params.kappa * params.kappa;
    if k2 > 0.0 {
        rate += 2.0 * k2 * integrate(&grad(rho).dot(&grad(drho)));
    }
    rate
}

/// Kinetic rate `∫ m·∂tm/ϱ − ½|m|²∂tϱ/ϱ²` for a momentum-like field.
fn kinetic_rate(rho: &ScalarField, drho: &ScalarField, m: &VectorField, dm: &VectorField) -> f64 {
    let a = m.dot(dm).zip_map(rho, |x, r| x / r).expect("same grid");
    let b = m.norm_sq().zip_map(rho, |x, r| 0.5 * x / (r * r)).expect("same grid");
    integrate(&a) - integrate(&(&b * drho))
}

/// Instantaneous `dE/dt` of [`energy_primitive`] along the semi-discrete flow.
pub fn energy_rate_primitive(state: &PrimitiveState, params: &FluidParams) -> Result<f64> {
    let (drho, dm) = rhs_primitive(state, params)?;
    Ok(kinetic_rate(&state.rho, &drho, &state.mom, &dm) + potential_rate(&state.rho, &drho, params))
}

/// Instantaneous `dE_aug/dt` of [`energy_augmented`] along the semi-discrete
/// augmented flow.
pub fn energy_rate_augmented(state: &AugmentedState, params: &FluidParams) -> Result<f64> {
    let rate = rhs_augmented(state, params)?;
    let rho = &state.rho;
    Ok(kinetic_rate(rho, &rate.rho, &state.mw, &rate.mw)
        + kinetic_rate(rho, &rate.rho, &state.mv, &rate.mv)
        + potential_rate(rho, &rate.rho, params))
}

/// `∫ ½ϱ(|w−W|² + |v−V|²) + κ²|∇ϱ−∇r|² + ε²H(ϱ|r)`; the Bregman term is
/// dropped when `pressureless` is set.
pub fn rel_entropy(
    state: &AugmentedState,
    reference: &ReferenceState,
    params: &FluidParams,
    pressureless: bool,
) -> Result<f64> {
    same_grid(state.grid(), reference.r.grid())?;
    let rho = &state.rho;
    let dw = &state.w() - &reference.w;
    let dv = &state.v() - &reference.v;
    let kin = (&dw.norm_sq() + &dv.norm_sq()).zip_map(rho, |a, r| 0.5 * r * a)?;
    let mut total = integrate(&kin);
    let k2 = params.kappa * params.kappa;
    if k2 > 0.0 {
        total += k2 * integrate(&(&grad(rho) - &grad(&reference.r)).norm_sq());
    }
    let e2 = params.eps2();
    if !pressureless && e2 > 0.0 {
        total += e2 * integrate(&bregman(rho, &reference.r, params)?);
    }
    Ok(total)
}

/// `‖f·1{|f|≤1}‖_{L²} + ‖f·1{|f|>1}‖_{L^γ}`.
pub fn l2_plus_lgamma(f: &ScalarField, gamma: f64) -> f64 {
    let small = f.map(|v| if v.abs() <= 1.0 { v } else { 0.0 });
    let large = f.map(|v| if v.abs() > 1.0 { v } else { 0.0 });
    l2_norm(&small) + crate::fields::lgamma_norm(&large, gamma)
}

/// `(‖m/√ϱ − √r U‖_{L²}, ‖∇ϱ − ∇r‖_{L²}, ‖ϱ − r‖_{L²+L^γ})`.
pub fn thm53_norms(state: &PrimitiveState, reference: &ReferenceState, params: &FluidParams) -> Result<[f64; 3]> {
    same_grid(state.grid(), reference.r.grid())?;
    check_floor(&state.rho, params.rho_floor)?;
    let a = state.mom.div_by(&state.rho.map(f64::sqrt));
    let b = reference.u.scale_by(&reference.r.map(|r| r.max(0.0).sqrt()));
    let n_vel = l2_norm_vector(&(&a - &b));
    let n_grad = l2_norm_vector(&(&grad(&state.rho) - &grad(&reference.r)));
    let n_rho = l2_plus_lgamma(&(&state.rho - &reference.r), params.gamma);
    Ok([n_vel, n_grad, n_rho])
}

/// Record without reference comparisons.
pub fn basic_record<S: Evolve>(t: f64, state: &S, params: &FluidParams) -> Result<DiagnosticsRecord> {
    let prim = state.to_primitive();
    let aug = state.to_augmented(params)?;
    Ok(DiagnosticsRecord {
        t,
        mass: prim.mass(),
        momentum: prim.momentum(),
        energy: energy_primitive(&prim, params),
        aug_energy: energy_augmented(&aug, params),
        dissipation: dissipation(&aug, params),
        rel_entropy: None,
        thm53_norms: None,
    })
}

/// Record including the relative entropy and norms against `reference`.
pub fn full_record<S: Evolve>(
    t: f64,
    state: &S,
    reference: &ReferenceState,
    params: &FluidParams,
    pressureless: bool,
) -> Result<DiagnosticsRecord> {
    let mut rec = basic_record(t, state, params)?;
    let aug = state.to_augmented(params)?;
    rec.rel_entropy = Some(rel_entropy(&aug, reference, params, pressureless)?);
    rec.thm53_norms = Some(thm53_norms(&state.to_primitive(), reference, params)?);
    Ok(rec)
}
