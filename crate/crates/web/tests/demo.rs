use korteweg_web::{heat_oracle_json, mach_sweep_json, simulate_json};
use serde_json::Value;

const CONFIG: &str = r#"{
  "model": "pressured",
  "params": { "nu": 0.05, "kappa": 0.2, "gamma": 2.0 },
  "grid": { "dim": 1, "n": 32 },
  "initial": { "kind": "single_mode", "mean": 1.0, "amplitude": 0.3, "wavenumber": 1, "velocity": 0.3 },
  "ctrl": { "cfl": 0.9, "dt_max": 1e-3, "t_end": 0.02, "sample_every": 0.01 }
}"#;

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn simulate_reports_profiles_and_series() {
    let v: Value = serde_json::from_str(&simulate_json(CONFIG).unwrap()).unwrap();
    assert_eq!(floats(&v["x"]).len(), 32);
    assert_eq!(floats(&v["rho_final"]).len(), 32);
    let mass = floats(&v["series"]["mass"]);
    assert_eq!(mass.len(), 3);
    assert!((mass[2] - mass[0]).abs() < 1e-12);
    let energy = floats(&v["series"]["energy"]);
    assert!(energy[2] <= energy[0]);
}

#[test]
fn simulate_takes_the_first_line_of_a_2d_grid() {
    let cfg = CONFIG.replace(r#""dim": 1, "n": 32"#, r#""dim": 2, "n": 16"#);
    let v: Value = serde_json::from_str(&simulate_json(&cfg).unwrap()).unwrap();
    assert_eq!(floats(&v["rho_initial"]).len(), 16);
}

#[test]
fn simulate_rejects_bad_configs() {
    let err = simulate_json(&CONFIG.replace("2.0", "0.5")).unwrap_err();
    assert!(err.contains("gamma must exceed 1"), "{err}");
    let big = CONFIG.replace(r#""dim": 1, "n": 32"#, r#""dim": 3, "n": 32"#);
    assert!(simulate_json(&big).unwrap_err().contains("too large"));
}

#[test]
fn heat_oracle_matches() {
    let v: Value = serde_json::from_str(&heat_oracle_json(0.1, 0.0, 0.5, 32, 0.02).unwrap()).unwrap();
    assert!(v["max_rho_error"].as_f64().unwrap() < 1e-10);
    assert!(v["max_drift_defect"].as_f64().unwrap() < 1e-10);
    assert_eq!(floats(&v["rho_final"]).len(), 32);
}

#[test]
fn mach_sweep_gives_slopes() {
    let v: Value = serde_json::from_str(&mach_sweep_json(&[0.4, 0.2, 0.1], 32, 0.02).unwrap()).unwrap();
    let slopes = floats(&v["slopes"]);
    assert_eq!(slopes.len(), 3);
    assert!(slopes.iter().all(|s| s.is_finite() && *s > 0.5), "{slopes:?}");
    assert!(mach_sweep_json(&[0.1, 0.2], 32, 0.02).is_err());
}
