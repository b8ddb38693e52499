//! Strict JSON run configuration.
//!
//! Every violation is collected before returning; unknown keys are errors.
//! Only `outputs`, `seed` and `params.rho_floor` have defaults, and `params.eps`
//! may be left out when the model fixes it.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{InitialData, Scenario};
use crate::fields::GridSpec;
use crate::model::{FluidParams, ModelKind, PrimitiveState, DEFAULT_RHO_FLOOR};
use crate::solver::StepControl;

pub const DEFAULT_CSV: &str = "diagnostics.csv";

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    Data(InitialData),
    /// Fields read from a snapshot file at run time.
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub csv: PathBuf,
    /// Final state, when set.
    pub snapshot: Option<PathBuf>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { csv: PathBuf::from(DEFAULT_CSV), snapshot: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub params: FluidParams,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    pub ctrl: StepControl,
    pub outputs: Outputs,
    pub seed: u64,
}

impl RunConfig {
    /// The experiment setup; `loaded` supplies the fields of a snapshot
    /// initial condition.
    pub fn scenario(&self, loaded: Option<PrimitiveState>) -> Result<Scenario> {
        let initial = match (&self.initial, loaded) {
            (InitialSpec::Data(d), _) => d.clone(),
            (InitialSpec::Snapshot(_), Some(s)) => InitialData::Fields(s),
            (InitialSpec::Snapshot(p), None) => {
                return Err(Error::Config(vec![format!("snapshot {} was not loaded", p.display())]))
            }
        };
        Ok(Scenario { params: self.params, grid: self.grid, initial, ctrl: self.ctrl, seed: self.seed })
    }
}

/// Parses without checking that referenced files exist.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &|_| true)
}

/// Parses and validates; `exists` decides whether a referenced path is present.
pub fn parse_config_with(text: &str, exists: &dyn Fn(&Path) -> bool) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    let mut errs = Vec::new();
    let cfg = parse_root(&root, exists, &mut errs);
    match cfg {
        Some(c) if errs.is_empty() => Ok(c),
        _ => Err(Error::Config(errs)),
    }
}

fn parse_root(root: &Value, exists: &dyn Fn(&Path) -> bool, errs: &mut Vec<String>) -> Option<RunConfig> {
    let map = object(root, "config", errs)?;
    check_keys(map, "", &["$schema", "model", "params", "grid", "initial", "ctrl", "outputs", "seed"], errs);

    let model = match map.get("model") {
        None => {
            errs.push("model is required".into());
            None
        }
        Some(Value::String(s)) => match s.as_str() {
            "pressured" => Some(ModelKind::Pressured),
            "pressureless" => Some(ModelKind::Pressureless),
            "rescaled" => Some(ModelKind::Rescaled),
            _ => {
                errs.push(format!("model must be one of pressured, pressureless, rescaled; got {s:?}"));
                None
            }
        },
        Some(_) => {
            errs.push("model must be a string".into());
            None
        }
    };
    let params = section(map, "params", errs).and_then(|m| parse_params(m, model, errs));
    let grid = section(map, "grid", errs).and_then(|m| {
        check_keys(m, "grid.", &["dim", "n"], errs);
        let dim = uint(m, "grid.", "dim", errs);
        let n = uint(m, "grid.", "n", errs);
        let (dim, n) = (dim? as usize, n? as usize);
        match GridSpec::new(dim, n) {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(format!("grid: {e}"));
                // a bad dim hides the check on n
                if !(1..=3).contains(&dim) {
                    if let Err(e) = GridSpec::new(1, n) {
                        errs.push(format!("grid: {e}"));
                    }
                }
                None
            }
        }
    });
    let initial = section(map, "initial", errs).and_then(|m| parse_initial(m, exists, errs));
    let ctrl = section(map, "ctrl", errs).and_then(|m| {
        check_keys(m, "ctrl.", &["cfl", "dt_max", "t_end", "sample_every"], errs);
        let c = StepControl {
            cfl: number(m, "ctrl.", "cfl", errs)?,
            dt_max: number(m, "ctrl.", "dt_max", errs)?,
            t_end: number(m, "ctrl.", "t_end", errs)?,
            sample_every: number(m, "ctrl.", "sample_every", errs)?,
        };
        let v = c.violations();
        errs.extend(v.iter().map(|s| format!("ctrl: {s}")));
        v.is_empty().then_some(c)
    });
    let outputs = match map.get("outputs") {
        None => Some(Outputs::default()),
        Some(v) => object(v, "outputs", errs).and_then(|m| {
            check_keys(m, "outputs.", &["csv", "snapshot"], errs);
            let csv = optional_string(m, "outputs.", "csv", errs)?.unwrap_or_else(|| DEFAULT_CSV.into());
            let snapshot = optional_string(m, "outputs.", "snapshot", errs)?;
            Some(Outputs { csv: csv.into(), snapshot: snapshot.map(PathBuf::from) })
        }),
    };
    let seed = match map.get("seed") {
        None => Some(0),
        Some(_) => uint(map, "", "seed", errs),
    };

    let (model, params, grid, initial, ctrl, outputs, seed) = (model?, params?, grid?, initial?, ctrl?, outputs?, seed?);
    if let InitialSpec::Data(d) = &initial {
        if let Err(e) = d.build(grid, &params) {
            errs.push(format!("initial: {e}"));
            return None;
        }
    }
    Some(RunConfig { model, params, grid, initial, ctrl, outputs, seed })
}

fn parse_params(m: &Map<String, Value>, model: Option<ModelKind>, errs: &mut Vec<String>) -> Option<FluidParams> {
    check_keys(m, "params.", &["nu", "kappa", "gamma", "eps", "rho_floor"], errs);
    let nu = number(m, "params.", "nu", errs);
    let kappa = number(m, "params.", "kappa", errs);
    let gamma = number(m, "params.", "gamma", errs);
    let eps = optional_number(m, "params.", "eps", errs);
    let rho_floor = optional_number(m, "params.", "rho_floor", errs).map(|v| v.unwrap_or(DEFAULT_RHO_FLOOR));

    let eps = match (model, eps) {
        (_, None) | (None, _) => None,
        (Some(ModelKind::Pressureless), Some(None)) => Some(0.0),
        (Some(ModelKind::Pressured), Some(None)) => Some(1.0),
        (Some(ModelKind::Rescaled), Some(None)) => {
            errs.push("params.eps is required for model rescaled".into());
            None
        }
        (Some(kind), Some(Some(e))) => {
            let ok = match kind {
                ModelKind::Pressureless => e == 0.0,
                ModelKind::Pressured => e == 1.0,
                ModelKind::Rescaled => e > 0.0 && e < 1.0,
            };
            if !ok {
                let need = match kind {
                    ModelKind::Pressureless => "eps = 0",
                    ModelKind::Pressured => "eps = 1",
                    ModelKind::Rescaled => "0 < eps < 1",
                };
                errs.push(format!("model {} requires {need}, but params.eps = {e}", kind.as_str()));
            }
            ok.then_some(e)
        }
    };

    // Check the remaining fields even when eps is unusable.
    let probe = FluidParams { nu: nu?, kappa: kappa?, gamma: gamma?, eps: eps.unwrap_or(0.5), rho_floor: rho_floor? };
    let v = probe.violations();
    errs.extend(v.iter().map(|s| format!("params: {s}")));
    let eps = eps?;
    v.is_empty().then_some(FluidParams { eps, ..probe })
}

fn parse_initial(m: &Map<String, Value>, exists: &dyn Fn(&Path) -> bool, errs: &mut Vec<String>) -> Option<InitialSpec> {
    let kind = match m.get("kind") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => {
            errs.push("initial.kind must be a string".into());
            return None;
        }
        None => {
            errs.push("initial.kind is required".into());
            return None;
        }
    };
    let allowed: &[&str] = match kind {
        "constant" => &["kind", "rho", "velocity"],
        "single_mode" => &["kind", "mean", "amplitude", "wavenumber", "velocity", "sharpness"],
        "irrotational" => &["kind", "mean", "amplitude", "wavenumber", "sharpness"],
        "random" => &["kind", "mean", "amplitude", "velocity", "max_mode", "seed"],
        "snapshot" => &["kind", "path"],
        other => {
            errs.push(format!(
                "initial.kind must be one of constant, single_mode, irrotational, random, snapshot; got {other:?}"
            ));
            return None;
        }
    };
    check_keys(m, "initial.", allowed, errs);
    if kind == "snapshot" {
        let path = PathBuf::from(optional_string(m, "initial.", "path", errs)?.or_else(|| {
            errs.push("initial.path is required".into());
            None
        })?);
        if !exists(&path) {
            errs.push(format!("initial.path {} does not exist", path.display()));
            return None;
        }
        return Some(InitialSpec::Snapshot(path));
    }
    match serde_json::from_value::<InitialData>(Value::Object(m.clone())) {
        Ok(d) => Some(InitialSpec::Data(d)),
        Err(e) => {
            errs.push(format!("initial: {e}"));
            None
        }
    }
}

fn object<'a>(v: &'a Value, what: &str, errs: &mut Vec<String>) -> Option<&'a Map<String, Value>> {
    let m = v.as_object();
    if m.is_none() {
        errs.push(format!("{what} must be an object"));
    }
    m
}

fn section<'a>(map: &'a Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<&'a Map<String, Value>> {
    match map.get(key) {
        None => {
            errs.push(format!("{key} is required"));
            None
        }
        Some(v) => object(v, key, errs),
    }
}

fn check_keys(m: &Map<String, Value>, prefix: &str, allowed: &[&str], errs: &mut Vec<String>) {
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            errs.push(format!("unknown key {prefix}{k}"));
        }
    }
}

fn optional_number(m: &Map<String, Value>, prefix: &str, key: &str, errs: &mut Vec<String>) -> Option<Option<f64>> {
    match m.get(key) {
        None => Some(None),
        Some(v) => match v.as_f64() {
            Some(x) => Some(Some(x)),
            None => {
                errs.push(format!("{prefix}{key} must be a number"));
                None
            }
        },
    }
}

fn number(m: &Map<String, Value>, prefix: &str, key: &str, errs: &mut Vec<String>) -> Option<f64> {
    let v = optional_number(m, prefix, key, errs)?;
    if v.is_none() {
        errs.push(format!("{prefix}{key} is required"));
    }
    v
}

fn uint(m: &Map<String, Value>, prefix: &str, key: &str, errs: &mut Vec<String>) -> Option<u64> {
    match m.get(key) {
        None => {
            errs.push(format!("{prefix}{key} is required"));
            None
        }
        Some(v) => {
            let x = v.as_u64();
            if x.is_none() {
                errs.push(format!("{prefix}{key} must be a non-negative integer"));
            }
            x
        }
    }
}

fn optional_string(m: &Map<String, Value>, prefix: &str, key: &str, errs: &mut Vec<String>) -> Option<Option<String>> {
    match m.get(key) {
        None | Some(Value::Null) => Some(None),
        Some(Value::String(s)) => Some(Some(s.clone())),
        Some(_) => {
            errs.push(format!("{prefix}{key} must be a string"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": "pressureless",
        "params": {"nu": 0.1, "kappa": 0.5, "gamma": 2},
        "grid": {"dim": 1, "n": 64},
        "initial": {"kind": "irrotational", "mean": 1, "amplitude": 0.5, "wavenumber": 1},
        "ctrl": {"cfl": 0.9, "dt_max": 1e-3, "t_end": 0.1, "sample_every": 0.01}
    }"#;

    fn violations(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    fn edit(f: impl FnOnce(&mut Value)) -> String {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn minimal_pressureless() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.model, ModelKind::Pressureless);
        assert_eq!(c.params.eps, 0.0);
        assert_eq!(c.params.rho_floor, DEFAULT_RHO_FLOOR);
        assert_eq!(c.outputs, Outputs::default());
        assert_eq!(c.seed, 0);
        assert!(c.scenario(None).unwrap().initial_state().is_ok());
    }

    #[test]
    fn gamma_below_one() {
        let v = violations(&edit(|v| v["params"]["gamma"] = 0.5.into()));
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("gamma must exceed 1"), "{v:?}");
    }

    #[test]
    fn pressureless_with_eps() {
        let v = violations(&edit(|v| v["params"]["eps"] = 0.3.into()));
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("pressureless") && v[0].contains("eps"), "{v:?}");
    }

    #[test]
    fn rescaled_needs_eps() {
        let v = violations(&edit(|v| v["model"] = "rescaled".into()));
        assert!(v[0].contains("eps is required"), "{v:?}");
        let c = parse_config(&edit(|v| {
            v["model"] = "rescaled".into();
            v["params"]["eps"] = 0.25.into();
        }))
        .unwrap();
        assert_eq!(c.params.eps, 0.25);
        let v = violations(&edit(|v| {
            v["model"] = "rescaled".into();
            v["params"]["eps"] = 1.0.into();
        }));
        assert!(v[0].contains("0 < eps < 1"), "{v:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let v = violations(&edit(|v| {
            v["params"]["gamma"] = 1.0.into();
            v["params"]["nu"] = (-1.0).into();
            v["grid"]["n"] = 7.into();
            v["ctrl"]["cfl"] = 0.0.into();
            v["colour"] = "blue".into();
            v["initial"]["extra"] = 1.into();
        }));
        assert_eq!(v.len(), 6, "{v:?}");
        assert!(v.iter().any(|s| s == "unknown key colour"));
        assert!(v.iter().any(|s| s == "unknown key initial.extra"));
    }

    #[test]
    fn missing_sections() {
        let v = violations(r#"{"model": "pressured"}"#);
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn snapshot_path_must_exist() {
        let text = edit(|v| v["initial"] = serde_json::json!({"kind": "snapshot", "path": "nowhere.nskf"}));
        let v = match parse_config_with(&text, &|_| false) {
            Err(Error::Config(v)) => v,
            other => panic!("{other:?}"),
        };
        assert!(v[0].contains("does not exist"));
        let c = parse_config_with(&text, &|_| true).unwrap();
        assert_eq!(c.initial, InitialSpec::Snapshot("nowhere.nskf".into()));
        assert!(c.scenario(None).is_err());
    }

    #[test]
    fn bad_initial_data_is_reported() {
        let v = violations(&edit(|v| v["initial"]["amplitude"] = 2.0.into()));
        assert!(v[0].starts_with("initial:"), "{v:?}");
    }
}
