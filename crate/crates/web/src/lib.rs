//! WebAssembly bindings for the browser demo. Each exported function takes
//! plain numbers or a JSON config and returns a JSON string; the `*_json`
//! functions underneath are ordinary Rust and are what the tests call.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use korteweg::experiments::{heat_oracle_comparison, mach_sweep, InitialData, Scenario};
use korteweg::io::{parse_config, InitialSpec};
use korteweg::solver::{run, BasicObserver, StepControl};
use korteweg::oracles::heat_solution;
use korteweg::{FluidParams, GridSpec, PrimitiveState, ScalarField};

/// Largest grid the demo will run, counted in points.
pub const MAX_POINTS: usize = 64 * 64;

#[derive(Serialize)]
struct Series {
    t: Vec<f64>,
    mass: Vec<f64>,
    energy: Vec<f64>,
    aug_energy: Vec<f64>,
    dissipation: Vec<f64>,
}

#[derive(Serialize)]
struct SimulateOut {
    x: Vec<f64>,
    rho_initial: Vec<f64>,
    rho_final: Vec<f64>,
    steps: usize,
    series: Series,
}

#[derive(Serialize)]
struct HeatOut {
    x: Vec<f64>,
    rho_final: Vec<f64>,
    rho_exact: Vec<f64>,
    times: Vec<f64>,
    rho_errors: Vec<f64>,
    drift_defects: Vec<f64>,
    max_rho_error: f64,
    max_drift_defect: f64,
}

#[derive(Serialize)]
struct MachOut {
    eps: Vec<f64>,
    n_vel: Vec<Option<f64>>,
    n_gradrho: Vec<Option<f64>>,
    n_rho: Vec<Option<f64>>,
    slopes: [f64; 3],
}

fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

/// Values along the first axis through the origin.
fn first_line(f: &ScalarField) -> Vec<f64> {
    let g = f.grid();
    let stride = g.n().pow(g.dim() as u32 - 1);
    (0..g.n()).map(|i| f.values()[i * stride]).collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Runs a config (snapshot initial data is not available in the browser).
pub fn simulate_json(config: &str) -> Result<String, String> {
    let cfg = parse_config(config).map_err(|e| e.to_string())?;
    if matches!(cfg.initial, InitialSpec::Snapshot(_)) {
        return Err("snapshot initial data needs the command-line tool".into());
    }
    if cfg.grid.len() > MAX_POINTS {
        return Err(format!("grid too large for the demo ({} points, limit {MAX_POINTS})", cfg.grid.len()));
    }
    let scenario = cfg.scenario(None).map_err(|e| e.to_string())?;
    let s0: PrimitiveState = scenario.initial_state().map_err(|e| e.to_string())?;
    let traj = run(&s0, &cfg.params, &cfg.ctrl, &mut BasicObserver).map_err(|a| a.to_string())?;
    let r = &traj.records;
    to_json(&SimulateOut {
        x: grid_points(cfg.grid.n()),
        rho_initial: first_line(&s0.rho),
        rho_final: first_line(&traj.final_state.rho),
        steps: traj.steps,
        series: Series {
            t: r.iter().map(|x| x.t).collect(),
            mass: r.iter().map(|x| x.mass).collect(),
            energy: r.iter().map(|x| x.energy).collect(),
            aug_energy: r.iter().map(|x| x.aug_energy).collect(),
            dissipation: r.iter().map(|x| x.dissipation).collect(),
        },
    })
}

/// Pressureless run from `ϱ₀ = 1 + a cos 2πx` with irrotational velocity,
/// compared with the heat solution.
pub fn heat_oracle_json(nu: f64, kappa: f64, amplitude: f64, n: usize, t_end: f64) -> Result<String, String> {
    if n > 256 {
        return Err("n is limited to 256 in the demo".into());
    }
    let params = FluidParams { nu, kappa, eps: 0.0, ..FluidParams::default() };
    let scenario = Scenario {
        params,
        grid: GridSpec::new(1, n).map_err(|e| e.to_string())?,
        initial: InitialData::Irrotational { mean: 1.0, amplitude, wavenumber: 1, sharpness: 0.0 },
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end, sample_every: t_end / 10.0 },
        seed: 0,
    };
    let s0 = scenario.initial_state().map_err(|e| e.to_string())?;
    let r = heat_oracle_comparison(&scenario).map_err(|e| e.to_string())?;
    let t = r.times.last().copied().unwrap_or(0.0);
    let exact = heat_solution(&s0.rho, &params, t);
    let final_rho = r.final_state.as_ref().map(|s| s.rho.values().to_vec()).unwrap_or_default();
    to_json(&HeatOut {
        x: grid_points(n),
        rho_final: final_rho,
        rho_exact: exact.values().to_vec(),
        max_rho_error: r.max_rho_error(),
        max_drift_defect: r.max_drift_defect(),
        times: r.times,
        rho_errors: r.rho_errors,
        drift_defects: r.drift_defects,
    })
}

/// Rescaled runs from a single-mode state at each ε, measured against the
/// pressureless limit.
pub fn mach_sweep_json(eps: &[f64], n: usize, t_end: f64) -> Result<String, String> {
    if n > 256 {
        return Err("n is limited to 256 in the demo".into());
    }
    let scenario = Scenario {
        params: FluidParams { nu: 0.05, kappa: 0.1, ..FluidParams::default() },
        grid: GridSpec::new(1, n).map_err(|e| e.to_string())?,
        initial: InitialData::SingleMode { mean: 1.0, amplitude: 0.2, wavenumber: 1, velocity: 0.1, sharpness: 0.0 },
        ctrl: StepControl { cfl: 0.9, dt_max: 1e-3, t_end, sample_every: t_end / 10.0 },
        seed: 0,
    };
    let r = mach_sweep(&scenario, eps).map_err(|e| e.to_string())?;
    let pick = |k: usize| r.sup_norms.iter().map(|s| s.map(|s| s[k])).collect::<Vec<_>>();
    to_json(&MachOut { eps: r.eps.clone(), n_vel: pick(0), n_gradrho: pick(1), n_rho: pick(2), slopes: r.slopes })
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(config: &str) -> Result<String, JsValue> {
    js(simulate_json(config))
}

#[wasm_bindgen]
pub fn heat_oracle(nu: f64, kappa: f64, amplitude: f64, n: usize, t_end: f64) -> Result<String, JsValue> {
    js(heat_oracle_json(nu, kappa, amplitude, n, t_end))
}

#[wasm_bindgen]
pub fn mach_sweep_demo(eps: &[f64], n: usize, t_end: f64) -> Result<String, JsValue> {
    js(mach_sweep_json(eps, n, t_end))
}
