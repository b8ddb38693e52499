use std::f64::consts::PI;

use korteweg::experiments::{
    convergence_study, make_reference, mach_sweep, state_distance, ErrorReference, InitialData, ReferenceKind,
    Scenario, Sweep,
};
use korteweg::fields::integrate;
use korteweg::solver::{run_with, BasicObserver, RunOptions, StepControl};
use korteweg::{FluidParams, GridSpec, ScalarField};

fn single_mode(amplitude: f64, velocity: f64) -> InitialData {
    InitialData::SingleMode { mean: 1.0, amplitude, wavenumber: 1, velocity, sharpness: 0.0 }
}

#[test]
fn small_perturbation_follows_linear_dispersion() {
    let (gamma, kappa, rho_bar) = (2.0f64, 0.5f64, 1.0f64);
    let p = FluidParams { nu: 1e-12, kappa, gamma, eps: 1.0, ..FluidParams::default() };
    let g = GridSpec::new(1, 32).unwrap();
    let s0 = single_mode(1e-4, 0.0).build(g, &p).unwrap();
    let kk = 2.0 * PI;
    let omega = (gamma * rho_bar.powf(gamma - 1.0) * kk * kk + 2.0 * kappa * kappa * rho_bar * kk.powi(4)).sqrt();
    let period = 2.0 * PI / omega;
    let ctrl = StepControl { cfl: 0.5, dt_max: 1e-4, t_end: 3.2 * period, sample_every: period / 200.0 };
    let traj = run_with(&s0, &p, &ctrl, &mut BasicObserver, RunOptions { forcing: None, store_snapshots: true })
        .unwrap();
    let basis = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
    let coeff: Vec<f64> = traj
        .snapshots
        .unwrap()
        .iter()
        .map(|s| integrate(&s.rho.zip_map(&basis, |r, c| (r - rho_bar) * c).unwrap()))
        .collect();
    let crossings: Vec<f64> = coeff
        .windows(2)
        .zip(traj.times.windows(2))
        .filter(|(c, _)| c[0] * c[1] < 0.0)
        .map(|(c, t)| t[0] + (t[1] - t[0]) * c[0] / (c[0] - c[1]))
        .collect();
    assert!(crossings.len() >= 5, "only {} zero crossings", crossings.len());
    let half = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let measured = PI / half;
    assert!((measured / omega - 1.0).abs() < 0.01, "measured {measured}, expected {omega}");
}

fn pressured(n: usize) -> Scenario {
    Scenario {
        params: FluidParams { nu: 0.05, kappa: 0.3, gamma: 2.0, eps: 1.0, ..FluidParams::default() },
        grid: GridSpec::new(1, n).unwrap(),
        initial: single_mode(0.1, 0.1),
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end: 0.1, sample_every: 0.02 },
        seed: 0,
    }
}

#[test]
fn refined_reference_is_resolution_independent() {
    let coarse = make_reference(&pressured(32)).unwrap();
    let fine = make_reference(&pressured(128)).unwrap();
    assert_eq!(coarse.kind, ReferenceKind::Refined);
    assert_eq!(coarse.times.len(), fine.times.len());
    let g = GridSpec::new(1, 32).unwrap();
    let mut worst = 0.0f64;
    for i in 0..coarse.times.len() {
        let f = fine.primitive(i);
        let f = korteweg::PrimitiveState {
            rho: korteweg::fields::resample(&f.rho, g).unwrap(),
            mom: korteweg::fields::resample_vector(&f.mom, g).unwrap(),
        };
        worst = worst.max(state_distance(&coarse.primitive(i), &f));
    }
    assert!(worst <= 1e-8, "reference changed by {worst:e}");
}

#[test]
fn pressured_self_convergence_is_spectral() {
    let mut sc = pressured(32);
    sc.initial = InitialData::SingleMode { mean: 1.0, amplitude: 0.3, wavenumber: 1, velocity: 0.3, sharpness: 0.6 };
    let r = convergence_study(&sc, &Sweep::Resolution(vec![32, 64, 128]), ErrorReference::SelfConvergence, None)
        .unwrap();
    assert!(r.spectral_ok(8.0, 1e-10), "errors {:?}", r.errors);
    assert!(r.errors[0] > 1e-10, "sweep starts at the floor: {:?}", r.errors);
}

#[test]
fn mach_norms_shrink_with_eps() {
    let sc = Scenario {
        params: FluidParams { nu: 0.05, kappa: 0.1, gamma: 2.0, eps: 1.0, ..FluidParams::default() },
        grid: GridSpec::new(1, 64).unwrap(),
        initial: single_mode(0.2, 0.1),
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end: 0.1, sample_every: 0.01 },
        seed: 0,
    };
    let r = mach_sweep(&sc, &[0.4, 0.2, 0.1, 0.05]).unwrap();
    let sups: Vec<[f64; 3]> = r.sup_norms.iter().map(|s| s.expect("run failed")).collect();
    for w in sups.windows(2) {
        for (k, (new, old)) in w[1].iter().zip(&w[0]).enumerate() {
            assert!(*new <= 1.05 * old, "norm {k} grew: {:?}", sups);
        }
    }
}
