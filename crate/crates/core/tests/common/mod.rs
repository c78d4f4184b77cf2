#![allow(dead_code)]

use std::path::PathBuf;

use spde_fk::noise::{NoisePlan, StreamId, WienerPath};
use spde_fk::scenario::{load_scenario, ScenarioConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_file(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn parse(text: &str) -> ScenarioConfig {
    load_scenario(text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

/// w path `path` together with auxiliary replicate 0.
pub fn joint(cfg: &ScenarioConfig, path: u64) -> WienerPath {
    let plan = NoisePlan::new(cfg.seed);
    let grid = cfg.grid();
    let w = plan.sample_w(&grid, cfg.modes, StreamId::W(path));
    let aux = plan.sample_aux(&grid, cfg.dim(), NoisePlan::aux_id(path, 0));
    w.with_aux(&aux).unwrap()
}

/// Unit interval scenario with constant coefficients and the given data and time grid.
pub fn interval(
    id: &str,
    modes: usize,
    t_final: f64,
    n_steps: usize,
    coefficients: &str,
    data: &str,
) -> ScenarioConfig {
    parse(&format!(
        r#"
id = "{id}"
modes = {modes}
seed = 5
[domain]
kind = "interval"
a = 0.0
b = 1.0
[time]
t_final = {t_final}
n_steps = {n_steps}
[coefficients]
{coefficients}
{data}
"#
    ))
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
