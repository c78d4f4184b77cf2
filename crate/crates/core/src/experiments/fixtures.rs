//! Discrete-exact identities checked on random paths of a scenario.

use crate::coefficients::{DataProfile, DataSpec};
use crate::error::Result;
use crate::flow::{flatten, seed_lattice, Characteristics};
use crate::noise::{NoisePlan, StreamId, WienerPath};
use crate::representation::{build_bundle, Query};
use crate::scenario::ScenarioConfig;
use crate::weights::{concatenation_check, relative_gap};

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl FixtureResult {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Relative tolerance of the discrete-exact identities.
pub const EXACT_TOLERANCE: f64 = 1e-12;

fn joint_path(cfg: &ScenarioConfig, case: u64) -> Result<WienerPath> {
    let plan = NoisePlan::new(cfg.seed);
    let grid = cfg.grid();
    let w = plan.sample_w(&grid, cfg.modes, StreamId::W(case));
    let aux = plan.sample_aux(
        &grid,
        cfg.dim(),
        StreamId::Aux {
            path: case,
            replicate: 0,
            attempt: 0,
        },
    );
    w.with_aux(&aux)
}

fn split_node(n: usize, case: usize, cases: usize) -> usize {
    (case + 1) * n / (cases + 1)
}

/// Flow on [0, t_i] with the restricted noise, continued from t_i on the full
/// window, against the flow on [0, T]; maximum absolute deviation.
pub fn flow_split(cfg: &ScenarioConfig, cases: usize) -> Result<FixtureResult> {
    let set = cfg.coefficient_set()?;
    let grid = cfg.grid();
    let n = grid.n_steps();
    let seeds = seed_lattice(&cfg.domain, 8);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let path = joint_path(cfg, case as u64)?;
        let field = set.realize(&path);
        let full = Characteristics::new(&field, &path)?.integrate_flow(&seeds, false)?;
        let split = split_node(n, case, cases);
        let first = path.restrict(0, split)?;
        let head = Characteristics::windowed(&field, grid, 0, &first)?.integrate_flow(&seeds, false)?;
        let middle: Vec<Vec<f64>> = (0..seeds.len()).map(|j| head.state(split, j).to_vec()).collect();
        let tail = Characteristics::new(&field, &path)?.integrate_flow_from(split, &middle, false)?;
        for j in 0..seeds.len() {
            for (a, b) in tail.state(n, j).iter().zip(full.state(n, j)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(FixtureResult {
        name: "flow_split_composition",
        cases,
        max_deviation: worst,
        tolerance: 0.0,
    })
}

/// Concatenation identities for eta and U at a grid split.
pub fn weight_concatenation(cfg: &ScenarioConfig, cases: usize) -> Result<FixtureResult> {
    let set = cfg.coefficient_set()?;
    let n = cfg.grid().n_steps();
    let y = cfg.domain.center();
    let mut worst = 0.0f64;
    for case in 0..cases {
        let path = joint_path(cfg, case as u64)?;
        let field = set.realize(&path);
        let report = concatenation_check(&field, &path, split_node(n, case, cases), &y)?;
        worst = worst
            .max(report.eta_deviation)
            .max(report.u_deviation)
            .max(report.flow_deviation);
    }
    Ok(FixtureResult {
        name: "weights_concatenation",
        cases,
        max_deviation: worst,
        tolerance: EXACT_TOLERANCE,
    })
}

/// Payoffs at the domain centre for the data split into its psi, f and g
/// parts (plus zero data) along one realized characteristic.
fn payoffs(cfg: &ScenarioConfig, case: u64, parts: &[DataSpec]) -> Result<Vec<f64>> {
    let set = cfg.coefficient_set()?;
    let path = joint_path(cfg, case)?;
    let node = cfg.grid().n_steps();
    let query = Query {
        node,
        x: cfg.domain.center(),
    };
    let seeds = flatten(&seed_lattice(&cfg.domain, 32));
    let mut out = Vec::with_capacity(parts.len());
    for data in parts {
        let field = set.with_data(data.clone()).realize(&path);
        let ch = Characteristics::new(&field, &path)?;
        let mut ws = ch.workspace();
        let table = ch.seed_images(&seeds, node, true, &mut ws)?;
        let bundle = build_bundle(&ch, &cfg.domain, &table, &query, cfg.inversion_tolerance)?;
        out.push(bundle.payoff());
    }
    Ok(out)
}

fn parts(data: &DataSpec) -> Vec<DataSpec> {
    vec![
        data.clone(),
        DataSpec {
            psi: data.psi.clone(),
            ..DataSpec::default()
        },
        DataSpec {
            f: data.f.clone(),
            ..DataSpec::default()
        },
        DataSpec {
            g: data.g.clone(),
            ..DataSpec::default()
        },
        DataSpec {
            psi: DataProfile::Zero,
            f: DataProfile::Zero,
            g: DataProfile::Zero,
        },
    ]
}

/// payoff(psi, f, g) = payoff(psi, 0, 0) + payoff(0, f, 0) + payoff(0, 0, g).
pub fn payoff_linearity(cfg: &ScenarioConfig, cases: usize) -> Result<FixtureResult> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let p = payoffs(cfg, case as u64, &parts(&cfg.data))?;
        worst = worst.max(relative_gap(p[0], p[1] + p[2] + p[3]));
    }
    Ok(FixtureResult {
        name: "payoff_linearity",
        cases,
        max_deviation: worst,
        tolerance: EXACT_TOLERANCE,
    })
}

/// Zero data gives a zero payoff.
pub fn zero_data(cfg: &ScenarioConfig, cases: usize) -> Result<FixtureResult> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let p = payoffs(cfg, case as u64, &parts(&cfg.data)[4..])?;
        worst = worst.max(p[0].abs());
    }
    Ok(FixtureResult {
        name: "zero_data_annihilation",
        cases,
        max_deviation: worst,
        tolerance: 0.0,
    })
}

pub fn run_fixtures(cfg: &ScenarioConfig, cases: usize) -> Result<Vec<FixtureResult>> {
    Ok(vec![
        flow_split(cfg, cases)?,
        weight_concatenation(cfg, cases)?,
        payoff_linearity(cfg, cases)?,
        zero_data(cfg, cases)?,
    ])
}
