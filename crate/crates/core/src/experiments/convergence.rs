//! Time-step convergence of the tilde inversion identity and stability of the
//! flow under coefficient perturbations.

use rayon::prelude::*;

use crate::coefficients::{CoefficientField, CoefficientSet, CoefficientSpec, DataSpec, FamilyName, Perturbed};
use crate::error::{Error, Result};
use crate::flow::{seed_lattice, Characteristics};
use crate::noise::{NoisePlan, StreamId, WienerPath};
use crate::scenario::{lattice, ScenarioConfig, TimeGrid};
use crate::weights::{characteristic_with_weights, TildeScheme};

#[derive(Clone, Debug, PartialEq)]
pub struct InversionOptions {
    pub paths: usize,
    /// Starting points per axis on the closure of D.
    pub starts: usize,
    /// Step counts, coarse to fine; each must halve the previous step.
    pub steps: Vec<usize>,
    pub scheme: TildeScheme,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            paths: 3,
            starts: 17,
            steps: vec![256, 512, 1024],
            scheme: TildeScheme::Milstein,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InversionConvergence {
    pub scenario: String,
    pub scheme: TildeScheme,
    pub dts: Vec<f64>,
    /// max over paths, starting points and nodes of |eta eta_tilde - 1|.
    pub gaps: Vec<f64>,
}

impl InversionConvergence {
    /// gap(dt) / gap(dt / 2) for consecutive levels.
    pub fn ratios(&self) -> Vec<f64> {
        self.gaps.windows(2).map(|g| g[0] / g[1]).collect()
    }

    pub fn finest_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(f64::NAN)
    }

    pub fn passed(&self, min_ratio: f64, max_gap: f64) -> bool {
        self.ratios().iter().all(|r| *r >= min_ratio) && self.finest_gap() <= max_gap
    }
}

fn joint(plan: &NoisePlan, grid: &TimeGrid, m: usize, d: usize, path: u64) -> Result<WienerPath> {
    let w = plan.sample_w(grid, m, StreamId::W(path));
    let aux = plan.sample_aux(
        grid,
        d,
        StreamId::Aux {
            path,
            replicate: 0,
            attempt: 0,
        },
    );
    w.with_aux(&aux)
}

/// The coarser levels are pairwise sums of the finest increments, so every
/// level sees the same Brownian path.
pub fn run_inversion_convergence(cfg: &ScenarioConfig, opts: &InversionOptions) -> Result<InversionConvergence> {
    if opts.steps.len() < 2 || opts.steps.windows(2).any(|s| s[1] != 2 * s[0]) {
        return Err(Error::Validation("step counts must double from level to level".into()));
    }
    if opts.paths == 0 || opts.starts < 2 {
        return Err(Error::Validation("need at least one path and two starts per axis".into()));
    }
    let set = cfg.coefficient_set()?;
    let t = cfg.grid().t_final();
    let finest = TimeGrid::new(t, *opts.steps.last().unwrap())?;
    let plan = NoisePlan::new(cfg.seed);
    let (lo, hi) = cfg.domain.bounding_box();
    let starts: Vec<Vec<f64>> = lattice(&lo, &hi, opts.starts)
        .into_iter()
        .filter(|y| cfg.domain.contains(y))
        .collect();
    let per_path: Vec<Vec<f64>> = (0..opts.paths as u64)
        .into_par_iter()
        .map(|path| -> Result<Vec<f64>> {
            let mut levels = vec![joint(&plan, &finest, cfg.modes, cfg.dim(), path)?];
            while levels.len() < opts.steps.len() {
                let next = levels.last().unwrap().coarsen()?;
                levels.push(next);
            }
            levels.reverse();
            levels
                .iter()
                .map(|noise| {
                    let field = set.realize(noise);
                    let ch = Characteristics::new(&field, noise)?;
                    let mut gap = 0.0f64;
                    for y in &starts {
                        let (_, weights) = characteristic_with_weights(&ch, 0, y, Some(opts.scheme))?;
                        gap = gap.max(weights.inversion_gap_eta());
                    }
                    Ok(gap)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let gaps = (0..opts.steps.len())
        .map(|l| per_path.iter().map(|g| g[l]).fold(0.0, f64::max))
        .collect();
    Ok(InversionConvergence {
        scenario: cfg.id.clone(),
        scheme: opts.scheme,
        dts: opts.steps.iter().map(|n| t / *n as f64).collect(),
        gaps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityOptions {
    pub seeds: usize,
    pub ns: Vec<u32>,
    /// Flow seeds per unit length of the domain's diameter.
    pub per_diameter: usize,
    /// Direction of the perturbation; scaled by 1/n.
    pub delta: CoefficientSpec,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            seeds: 20,
            ns: vec![2, 4, 8],
            per_diameter: 16,
            delta: CoefficientSpec {
                family: FamilyName::Trig,
                sigma: 1.0,
                rho: 0.5,
                b: 1.0,
                c: 1.0,
                mu: 1.0,
                ..CoefficientSpec::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub scenario: String,
    pub ns: Vec<u32>,
    /// `distances[seed][level]`: sup over nodes and flow seeds of |Y^n - Y|.
    pub distances: Vec<Vec<f64>>,
}

impl StabilityReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.distances
            .iter()
            .all(|d| d.windows(2).all(|p| p[1] < p[0]))
    }

    pub fn mean(&self) -> Vec<f64> {
        let s = self.distances.len().max(1) as f64;
        (0..self.ns.len())
            .map(|l| self.distances.iter().map(|d| d[l]).sum::<f64>() / s)
            .collect()
    }

    pub fn passed(&self) -> bool {
        !self.distances.is_empty() && self.strictly_decreasing()
    }
}

fn flow_distance<A: CoefficientField, B: CoefficientField>(a: &A, b: &B, noise: &WienerPath, seeds: &[Vec<f64>]) -> Result<f64> {
    let fa = Characteristics::new(a, noise)?.integrate_flow(seeds, false)?;
    let fb = Characteristics::new(b, noise)?.integrate_flow(seeds, false)?;
    let mut worst = 0.0f64;
    for i in 0..=fa.end() {
        for j in 0..seeds.len() {
            for (x, y) in fa.state(i, j).iter().zip(fb.state(i, j)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}

/// sup_t |Y^n_{0,t}(y) - Y_{0,t}(y)| over a seed lattice of D, with the
/// coefficients `base + delta / n` driven by the same joint noise.
pub fn run_flow_stability(cfg: &ScenarioConfig, opts: &StabilityOptions) -> Result<StabilityReport> {
    if opts.ns.iter().any(|n| *n == 0) {
        return Err(Error::Validation("perturbation levels must be positive".into()));
    }
    let set = cfg.coefficient_set()?;
    let delta = CoefficientSet::new(
        cfg.domain.clone(),
        cfg.modes,
        opts.delta.clone(),
        DataSpec::default(),
        cfg.constants.k,
    )?;
    let grid = cfg.grid();
    let plan = NoisePlan::new(cfg.seed);
    let seeds = seed_lattice(&cfg.domain, opts.per_diameter);
    let distances = (0..opts.seeds as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let noise = joint(&plan, &grid, cfg.modes, cfg.dim(), s)?;
            let base = set.realize(&noise);
            opts.ns
                .iter()
                .map(|n| {
                    let perturbed = Perturbed {
                        base: base.clone(),
                        delta: delta.realize(&noise),
                        scale: 1.0 / *n as f64,
                    };
                    flow_distance(&base, &perturbed, &noise, &seeds)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(StabilityReport {
        scenario: cfg.id.clone(),
        ns: opts.ns.clone(),
        distances,
    })
}
