//! Experiment drivers: pathwise validation of the representation against the
//! finite-difference solver, the artificial-boundary localization sweep, and
//! the exit-probability decay.

mod convergence;
pub mod fixtures;
mod report;

pub use convergence::{
    run_flow_stability, run_inversion_convergence, InversionConvergence, InversionOptions, StabilityOptions,
    StabilityReport,
};

pub use report::{write_exitprob, write_localization, write_validation, Format, ReportFiles};

use rayon::prelude::*;

use crate::coefficients::{CoefficientField, CoefficientSet, DataProfile, DataSpec, Realized};
use crate::error::{Error, Result};
use crate::flow::Characteristics;
use crate::noise::{NoisePlan, StreamId, WienerPath};
use crate::reference::{compare, fd_solve, Boundary, ErrorReport, FdOptions, GridSolution, Norm, SpaceGrid};
use crate::representation::{estimate_v, EstimatorOptions, Query, RepresentationEstimate};
use crate::scenario::{check_coercivity, coercivity_probes, lattice, CoercivityReport, DomainSpec, ScenarioConfig};
use crate::stats::{fit_line, mean_stderr, LineFit};

/// The scenario's coefficients bound to one w path.
pub fn realize(set: &CoefficientSet, w: &WienerPath) -> Realized {
    set.realize(w)
}

/// Coercivity on D^{1/2}; an error naming the assumption when it fails.
pub fn check_assumptions(cfg: &ScenarioConfig, field: &dyn CoefficientField) -> Result<Option<CoercivityReport>> {
    if !cfg.constants.check_coercivity {
        return Ok(None);
    }
    let grid = cfg.grid();
    let probes = coercivity_probes(&cfg.domain, &grid, 9);
    let report = check_coercivity(field, &grid, &probes, cfg.constants.lambda);
    if !report.passed() {
        return Err(Error::Assumption(format!(
            "coercivity: smallest eigenvalue of rho rho^T is {:.6} < lambda = {} at {} of {} probes",
            report.min_eigenvalue,
            report.lambda,
            report.violations.len(),
            report.probes
        )));
    }
    Ok(Some(report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOptions {
    /// Number of w paths S.
    pub paths: usize,
    pub samples: usize,
    /// Query points per axis; the lattice must sit on the finite-difference nodes.
    pub lattice: usize,
    /// Time node of the queries; `None` is the final node.
    pub node: Option<usize>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            paths: 3,
            samples: 1000,
            lattice: 33,
            node: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathComparison {
    pub path: u64,
    pub checksum: String,
    pub estimates: Vec<RepresentationEstimate>,
    /// Finite-difference values at the query points.
    pub reference: Vec<f64>,
    pub sup: ErrorReport,
    pub l2: ErrorReport,
    pub max_residual: f64,
    pub failures: usize,
}

impl PathComparison {
    /// Relative L2 error within `tolerance`, or inside the Monte Carlo band.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.l2.relative <= tolerance || self.l2.error <= self.l2.band
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub scenario: String,
    pub master_seed: u64,
    pub t: f64,
    pub coercivity: Option<CoercivityReport>,
    pub paths: Vec<PathComparison>,
}

impl ValidationReport {
    pub fn max_relative_l2(&self) -> f64 {
        self.paths.iter().map(|p| p.l2.relative).fold(0.0, f64::max)
    }

    pub fn max_sup(&self) -> f64 {
        self.paths.iter().map(|p| p.sup.error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.paths.iter().all(|p| p.passed(tolerance))
    }
}

/// Query lattice on the finite-difference nodes of `grid` covering the closure of D.
pub fn query_lattice(grid: &SpaceGrid, per_axis: usize, node: usize) -> Result<Vec<Query>> {
    if per_axis < 2 || grid.cells() % (per_axis - 1) != 0 {
        return Err(Error::Validation(format!(
            "a {per_axis}-point lattice does not sit on {} cells",
            grid.cells()
        )));
    }
    let (lo, hi) = grid.domain().bounding_box();
    let domain = grid.domain();
    Ok(lattice(&lo, &hi, per_axis)
        .into_iter()
        .filter(|x| domain.is_whole_space() || domain.signed_distance(x) >= 0.0)
        .map(|x| {
            // snap onto the node to remove rounding in the lattice arithmetic
            let p = grid.index_of(&x).expect("lattice point is a node");
            Query { node, x: grid.point(p) }
        })
        .collect())
}

/// For each of `paths` w paths: finite-difference solution and representation
/// estimates on a shared query lattice at one time node.
pub fn run_validation(cfg: &ScenarioConfig, opts: &ValidationOptions) -> Result<ValidationReport> {
    let set = cfg.coefficient_set()?;
    let time = cfg.grid();
    let plan = NoisePlan::new(cfg.seed);
    let node = opts.node.unwrap_or(time.n_steps());
    if node == 0 || node > time.n_steps() {
        return Err(Error::Validation(format!("query node {node} is not in 1..={}", time.n_steps())));
    }
    let space = SpaceGrid::new(cfg.domain.clone(), cfg.space_cells)?;
    let queries = query_lattice(&space, opts.lattice, node)?;
    let fd_opts = FdOptions {
        k: cfg.constants.k,
        ..FdOptions::default()
    };
    let mut coercivity = None;
    let mut paths = Vec::with_capacity(opts.paths);
    for path in 0..opts.paths as u64 {
        let w = plan.sample_w(&time, cfg.modes, StreamId::W(path));
        let field = realize(&set, &w);
        if path == 0 {
            coercivity = check_assumptions(cfg, &field)?;
        }
        let u = fd_solve(&field, &w, &space, Boundary::DirichletZero, &fd_opts)?;
        let est_opts = EstimatorOptions {
            samples: opts.samples,
            tolerance: cfg.inversion_tolerance,
            exit: cfg.exit_detection,
            master_seed: cfg.seed,
            path_index: path,
            ..EstimatorOptions::default()
        };
        let estimates = estimate_v(&cfg.domain, &field, &w, &queries, &est_opts)?;
        paths.push(summarize(path, &w, &u, estimates)?);
    }
    Ok(ValidationReport {
        scenario: cfg.id.clone(),
        master_seed: cfg.seed,
        t: time.node(node),
        coercivity,
        paths,
    })
}

fn summarize(path: u64, w: &WienerPath, u: &GridSolution, estimates: Vec<RepresentationEstimate>) -> Result<PathComparison> {
    let sup = compare(u, &estimates, Norm::Sup)?;
    let l2 = compare(u, &estimates, Norm::L2)?;
    let i = u.time.index_of(estimates.first().map_or(0.0, |e| e.t)).unwrap_or(0);
    let reference = estimates
        .iter()
        .map(|e| u.value_at(i, &e.query.x))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathComparison {
        path,
        checksum: w.checksum(),
        max_residual: estimates.iter().map(|e| e.max_residual).fold(0.0, f64::max),
        failures: estimates.first().map_or(0, |e| e.failures),
        estimates,
        reference,
        sup,
        l2,
    })
}

/// Sobolev data norm K_{1,p}(psi, f, g) = |psi|_{W^1_p} + ||f||_{L_p(W^1_p)} + ||g||_{L_p(W^2_p)}.
#[derive(Clone, Debug, PartialEq)]
pub struct DataNorm {
    pub p: f64,
    pub psi: f64,
    pub f: f64,
    pub g: f64,
    pub total: f64,
}

/// Trapezoid quadrature of the data norms over the nodes of `grid`; f and g
/// are time-independent, so the time integral is a factor T^{1/p}.
pub fn data_norm(set: &CoefficientSet, grid: &SpaceGrid, t_final: f64, p: f64) -> DataNorm {
    let d = grid.dim();
    let m = set.modes() as f64;
    let mut sums = [0.0f64; 3];
    for q in 0..grid.len() {
        let idx = grid.multi_index(q);
        let weight: f64 = idx
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                let edge = i == 0 || i == grid.cells();
                grid.dx(a) * if edge { 0.5 } else { 1.0 }
            })
            .product();
        let x = grid.point(q);
        let psi = set.psi_jet(&x);
        let f = set.f_jet(&x);
        let g = set.g_jet(&x);
        let mut acc = [psi.v.abs().powf(p), f.v.abs().powf(p), (m.sqrt() * g.v).abs().powf(p)];
        for i in 0..d {
            acc[0] += psi.g[i].abs().powf(p);
            acc[1] += f.g[i].abs().powf(p);
            acc[2] += (m.sqrt() * g.g[i]).abs().powf(p);
            for j in 0..d {
                acc[2] += (m.sqrt() * g.h[i][j]).abs().powf(p);
            }
        }
        for k in 0..3 {
            sums[k] += weight * acc[k];
        }
    }
    let psi = sums[0].powf(1.0 / p);
    let f = (t_final * sums[1]).powf(1.0 / p);
    let g = (t_final * sums[2]).powf(1.0 / p);
    DataNorm {
        p,
        psi,
        f,
        g,
        total: psi + f + g,
    }
}

/// Radius of a ball about the origin containing the supports of psi, f and g;
/// `None` when some profile is not compactly supported.
pub fn data_support_radius(data: &DataSpec, center: &[f64]) -> Option<f64> {
    let mut radius = 0.0f64;
    for profile in [&data.psi, &data.f, &data.g] {
        match profile {
            DataProfile::Zero => {}
            DataProfile::Bump { center: c, width, .. } => {
                let c = c.as_deref().unwrap_or(center);
                let offset = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                radius = radius.max(offset + width);
            }
            _ => return None,
        }
    }
    Some(radius)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderOptions {
    pub radii: Vec<f64>,
    pub epsilon: f64,
    pub nu: f64,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            radii: vec![1.5, 2.0, 2.5, 3.0],
            epsilon: 1.0,
            nu: 0.25,
        }
    }
}

impl LadderOptions {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::Validation("the radius ladder is empty".into()));
        }
        if !self.radii.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation("radii must be strictly increasing".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Validation("epsilon must lie in (0, 1]".into()));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Validation("nu must lie in (0, 1)".into()));
        }
        for &r in &self.radii {
            if !(r > 1.0) {
                return Err(Error::Validation(format!("radius {r} must exceed 1")));
            }
            if !(self.inner(r) > 0.0) {
                return Err(Error::Validation(format!("R - nu R^eps <= 0 at R = {r}")));
            }
        }
        Ok(())
    }

    /// R - nu R^eps
    pub fn inner(&self, r: f64) -> f64 {
        r - self.nu * r.powf(self.epsilon)
    }

    /// R - (nu/2) R^eps
    pub fn middle(&self, r: f64) -> f64 {
        r - 0.5 * self.nu * r.powf(self.epsilon)
    }

    /// Abscissa R^{2 eps} of the decay fit.
    pub fn abscissa(&self, r: f64) -> f64 {
        r.powf(2.0 * self.epsilon)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationOptions {
    pub ladder: LadderOptions,
    pub paths: usize,
    pub p_values: Vec<f64>,
    /// Allows the d = 2 ball version.
    pub allow_2d: bool,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self {
            ladder: LadderOptions::default(),
            paths: 8,
            p_values: vec![2.0, 4.0],
            allow_2d: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationPath {
    pub path: u64,
    pub checksum: String,
    /// e(R) per ladder entry.
    pub errors: Vec<f64>,
    /// sup |u - u_box2| over [0,T] x B_{R_max} when the box is doubled.
    pub box_change: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport {
    pub scenario: String,
    pub master_seed: u64,
    pub radii: Vec<f64>,
    pub epsilon: f64,
    pub nu: f64,
    pub inner: Vec<f64>,
    pub dx: f64,
    pub half_width: f64,
    pub paths: Vec<LocalizationPath>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Least-squares fit of log e(R) against R^{2 eps}.
    pub fit: Option<LineFit>,
    pub data_norms: Vec<DataNorm>,
}

impl LocalizationReport {
    /// Every consecutive drop exceeds three combined standard errors.
    pub fn strictly_decreasing(&self) -> bool {
        (1..self.mean.len()).all(|k| {
            let band = 3.0 * (self.stderr[k - 1].powi(2) + self.stderr[k].powi(2)).sqrt();
            self.mean[k - 1] - self.mean[k] > band
        })
    }

    /// e(R_max) <= e(R_min) / factor with both ends pushed by three standard errors.
    pub fn shrinks_by(&self, factor: f64) -> bool {
        let n = self.mean.len();
        n >= 2 && self.mean[n - 1] + 3.0 * self.stderr[n - 1] <= (self.mean[0] - 3.0 * self.stderr[0]) / factor
    }

    pub fn slope_negative(&self) -> bool {
        self.fit.map_or(false, |f| f.slope < 0.0)
    }

    pub fn max_box_change(&self) -> f64 {
        self.paths.iter().map(|p| p.box_change).fold(0.0, f64::max)
    }

    /// Box truncation below 10% of the smallest measured localization error.
    pub fn box_negligible(&self) -> bool {
        let smallest = self.mean.iter().cloned().fold(f64::INFINITY, f64::min);
        self.max_box_change() < 0.1 * smallest
    }

    pub fn passed(&self) -> bool {
        self.strictly_decreasing() && self.slope_negative() && self.shrinks_by(5.0)
    }
}

fn truncated_domain(d: usize, r: f64) -> DomainSpec {
    if d == 1 {
        DomainSpec::Interval { a: -r, b: r }
    } else {
        DomainSpec::Ball {
            center: vec![0.0; d],
            radius: r,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// sup over time nodes and nodes of `inner` within radius `r` of |a - b|.
fn sup_difference(a: &GridSolution, b: &GridSolution, r: f64) -> Result<f64> {
    let mut sup = 0.0f64;
    let nodes: Vec<(usize, usize)> = (0..a.space.len())
        .filter_map(|p| {
            let x = a.space.point(p);
            (norm(&x) <= r + 1e-12).then(|| b.space.index_of(&x).map(|q| (p, q)))
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::GridMismatch("truncated grid is not a sub-grid of the whole-space grid".into()))?;
    for i in 0..=a.time.n_steps() {
        let (ua, ub) = (a.at(i), b.at(i));
        for &(p, q) in &nodes {
            sup = sup.max((ua[p] - ub[q]).abs());
        }
    }
    Ok(sup)
}

/// Whole-space solution against Dirichlet truncations on B_R, all driven by
/// the same w on each path.
pub fn run_localization(cfg: &ScenarioConfig, opts: &LocalizationOptions) -> Result<LocalizationReport> {
    let ladder = &opts.ladder;
    ladder.validate()?;
    let d = cfg.dim();
    let half_width = match cfg.domain {
        DomainSpec::WholeSpace { half_width, .. } => half_width,
        _ => return Err(Error::Validation("localization needs a whole_space scenario".into())),
    };
    if d == 2 && !opts.allow_2d {
        return Err(Error::Validation("the d = 2 localization run must be enabled explicitly".into()));
    }
    if d > 2 {
        return Err(Error::Validation("localization runs in d = 1 or 2".into()));
    }
    for &p in &opts.p_values {
        if !(p > d as f64) {
            return Err(Error::Assumption(format!("integrability exponent p = {p} must exceed d = {d}")));
        }
    }
    let support = data_support_radius(&cfg.data, &vec![0.0; d])
        .ok_or_else(|| Error::Assumption("data must be compactly supported".into()))?;
    if support > 1.0 {
        return Err(Error::Assumption(format!("data support radius {support} exceeds 1")));
    }
    let r_max = *ladder.radii.last().unwrap();
    if r_max >= half_width {
        return Err(Error::Validation(format!("radius {r_max} does not fit in the box of half-width {half_width}")));
    }
    let set = cfg.coefficient_set()?;
    let time = cfg.grid();
    let dx = 2.0 * half_width / cfg.space_cells as f64;
    let whole = SpaceGrid::with_spacing(cfg.domain.clone(), dx)?;
    let doubled = SpaceGrid::with_spacing(
        DomainSpec::WholeSpace {
            dim: d,
            half_width: 2.0 * half_width,
        },
        dx,
    )?;
    let truncated = ladder
        .radii
        .iter()
        .map(|&r| SpaceGrid::with_spacing(truncated_domain(d, r), dx))
        .collect::<Result<Vec<_>>>()?;
    let fd_opts = FdOptions {
        k: cfg.constants.k,
        ..FdOptions::default()
    };
    let plan = NoisePlan::new(cfg.seed);
    {
        let w = plan.sample_w(&time, cfg.modes, StreamId::W(0));
        check_assumptions(cfg, &realize(&set, &w))?;
    }
    let paths = (0..opts.paths as u64)
        .into_par_iter()
        .map(|path| -> Result<LocalizationPath> {
            let w = plan.sample_w(&time, cfg.modes, StreamId::W(path));
            let checksum = w.checksum();
            let field = realize(&set, &w);
            let u = fd_solve(&field, &w, &whole, Boundary::None, &fd_opts)?;
            let u2 = fd_solve(&field, &w, &doubled, Boundary::None, &fd_opts)?;
            let box_change = sup_difference(&u, &u2, r_max)?;
            let mut errors = Vec::with_capacity(truncated.len());
            for (grid, &r) in truncated.iter().zip(&ladder.radii) {
                // every solve of this path reads the same increments
                debug_assert_eq!(w.checksum(), checksum);
                let ur = fd_solve(&field, &w, grid, Boundary::DirichletZero, &fd_opts)?;
                errors.push(sup_difference(&ur, &u, ladder.inner(r))?);
            }
            Ok(LocalizationPath {
                path,
                checksum,
                errors,
                box_change,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut mean, mut stderr) = (Vec::new(), Vec::new());
    for k in 0..ladder.radii.len() {
        let column: Vec<f64> = paths.iter().map(|p| p.errors[k]).collect();
        let (m, s) = mean_stderr(&column);
        mean.push(m);
        stderr.push(s);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = ladder
        .radii
        .iter()
        .zip(&mean)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| (ladder.abscissa(*r), e.ln()))
        .unzip();
    let fit = (xs.len() >= 2).then(|| fit_line(&xs, &ys));
    let data_norms = opts
        .p_values
        .iter()
        .map(|&p| data_norm(&set, &whole, time.t_final(), p))
        .collect();
    Ok(LocalizationReport {
        scenario: cfg.id.clone(),
        master_seed: cfg.seed,
        radii: ladder.radii.clone(),
        epsilon: ladder.epsilon,
        nu: ladder.nu,
        inner: ladder.radii.iter().map(|&r| ladder.inner(r)).collect(),
        dx,
        half_width,
        paths,
        mean,
        stderr,
        fit,
        data_norms,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitOptions {
    pub ladder: LadderOptions,
    pub samples: usize,
    /// Spacing of the probe lattice.
    pub probe_spacing: f64,
    /// Points on each probe sphere (d >= 2).
    pub sphere_points: usize,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self {
            ladder: LadderOptions::default(),
            samples: 10_000,
            probe_spacing: 1.0 / 16.0,
            sphere_points: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitProbabilityReport {
    pub scenario: String,
    pub master_seed: u64,
    pub radii: Vec<f64>,
    pub epsilon: f64,
    pub nu: f64,
    pub inner: Vec<f64>,
    pub middle: Vec<f64>,
    pub samples: usize,
    pub probes: usize,
    pub hits: Vec<usize>,
    pub probability: Vec<f64>,
    pub stderr: Vec<f64>,
    /// One-sided 95% bound 3 / M when no sample hits.
    pub rule_of_three: f64,
    pub fit: Option<LineFit>,
}

impl ExitProbabilityReport {
    /// No increase beyond three combined standard errors.
    pub fn non_increasing(&self) -> bool {
        (1..self.probability.len()).all(|k| {
            let band = 3.0 * (self.stderr[k - 1].powi(2) + self.stderr[k].powi(2)).sqrt();
            self.probability[k] <= self.probability[k - 1] + band
        })
    }

    /// P(H_{R_max}) <= P(H_{R_min}) / factor, or both below the rule-of-three bound.
    pub fn shrinks_by(&self, factor: f64) -> bool {
        let (first, last) = (self.probability[0], *self.probability.last().unwrap());
        last <= first / factor || (first <= self.rule_of_three && last <= self.rule_of_three)
    }

    pub fn passed(&self) -> bool {
        self.non_increasing() && self.shrinks_by(5.0)
    }
}

/// Probe particles: a lattice of the given spacing over the box of half-width
/// `extent` plus, for every radius, points on the sphere of that radius.
pub fn exit_probes(d: usize, extent: f64, spacing: f64, radii: &[f64], sphere_points: usize) -> Vec<Vec<f64>> {
    let per_axis = (2.0 * extent / spacing).round() as usize + 1;
    let mut probes = lattice(&vec![-extent; d], &vec![extent; d], per_axis);
    for &r in radii {
        match d {
            1 => {
                probes.push(vec![-r]);
                probes.push(vec![r]);
            }
            2 => {
                for k in 0..sphere_points {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / sphere_points as f64;
                    probes.push(vec![r * a.cos(), r * a.sin()]);
                }
            }
            _ => {
                for axis in 0..d {
                    for s in [-r, r] {
                        let mut x = vec![0.0; d];
                        x[axis] = s;
                        probes.push(x);
                    }
                }
            }
        }
    }
    probes
}

/// Monte Carlo frequency of H_R over joint (w, w_hat) draws. On the probe
/// particles, H_R occurs when a particle starting outside B_{R - nu/2 R^eps}
/// visits the closed ball B_{R - nu R^eps} (the inverse flow leaves the middle
/// ball from the inner one), or one starting in the closed middle ball leaves B_R.
pub fn run_exit_probability(cfg: &ScenarioConfig, opts: &ExitOptions) -> Result<ExitProbabilityReport> {
    let ladder = &opts.ladder;
    ladder.validate()?;
    if opts.samples == 0 {
        return Err(Error::Validation("samples must be at least 1".into()));
    }
    if !(opts.probe_spacing > 0.0) {
        return Err(Error::Validation("probe spacing must be positive".into()));
    }
    let d = cfg.dim();
    let set = cfg.coefficient_set()?;
    let time = cfg.grid();
    let r_max = *ladder.radii.last().unwrap();
    let middles: Vec<f64> = ladder.radii.iter().map(|&r| ladder.middle(r)).collect();
    let inners: Vec<f64> = ladder.radii.iter().map(|&r| ladder.inner(r)).collect();
    let probes = exit_probes(d, r_max + 1.0, opts.probe_spacing, &middles, opts.sphere_points);
    let start: Vec<f64> = probes.iter().map(|p| norm(p)).collect();
    let plan = NoisePlan::new(cfg.seed);
    {
        let w = plan.sample_w(&time, cfg.modes, StreamId::W(0));
        check_assumptions(cfg, &realize(&set, &w))?;
    }
    let events = (0..opts.samples as u64)
        .into_par_iter()
        .map(|draw| -> Result<Vec<bool>> {
            let w = plan.sample_w(&time, cfg.modes, StreamId::W(draw));
            let aux = plan.sample_aux(
                &time,
                d,
                StreamId::Aux {
                    path: draw,
                    replicate: 0,
                    attempt: 0,
                },
            );
            let path = w.with_aux(&aux)?;
            let field = realize(&set, &w);
            let flow = Characteristics::new(&field, &path)?.integrate_flow(&probes, false)?;
            // per probe: smallest and largest distance to the origin over the grid
            let mut closest = start.clone();
            let mut farthest = start.clone();
            for i in 1..=time.n_steps() {
                for j in 0..probes.len() {
                    let r = norm(flow.state(i, j));
                    closest[j] = closest[j].min(r);
                    farthest[j] = farthest[j].max(r);
                }
            }
            Ok((0..ladder.radii.len())
                .map(|k| {
                    let (r, mid, inner) = (ladder.radii[k], middles[k], inners[k]);
                    (0..probes.len()).any(|j| {
                        let outside = start[j] > mid + 1e-12;
                        (outside && closest[j] <= inner) || (!outside && farthest[j] > r)
                    })
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let m = opts.samples as f64;
    let hits: Vec<usize> = (0..ladder.radii.len())
        .map(|k| events.iter().filter(|e| e[k]).count())
        .collect();
    let probability: Vec<f64> = hits.iter().map(|&h| h as f64 / m).collect();
    let stderr: Vec<f64> = probability.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ladder
        .radii
        .iter()
        .zip(&probability)
        .filter(|(_, p)| **p > 0.0)
        .map(|(r, p)| (ladder.abscissa(*r), p.ln()))
        .unzip();
    Ok(ExitProbabilityReport {
        scenario: cfg.id.clone(),
        master_seed: cfg.seed,
        radii: ladder.radii.clone(),
        epsilon: ladder.epsilon,
        nu: ladder.nu,
        inner: inners,
        middle: middles,
        samples: opts.samples,
        probes: probes.len(),
        hits,
        probability,
        stderr,
        rule_of_three: 3.0 / m,
        fit: (xs.len() >= 2).then(|| fit_line(&xs, &ys)),
    })
}
