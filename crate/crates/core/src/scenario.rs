//! Scenario configuration: domain geometry, time grid, coefficient selection
//! and the constants used for assumption checks.
//!
//! A scenario is one TOML document. Minimal example:
//!
//! ```toml
//! id = "heat"
//! samples = 20000
//!
//! [domain]
//! kind = "interval"
//! a = 0.0
//! b = 1.0
//!
//! [time]
//! t_final = 0.5
//! n_steps = 512
//!
//! [coefficients]
//! family = "constant"
//! rho = 1.0
//!
//! [data.psi]
//! kind = "sine"
//! amplitude = 1.0
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    CoefficientField, CoefficientSet, CoefficientSpec, DataSpec, Local, Order, MAX_DIM,
};
use crate::error::{Error, Result};

/// Environment variable that overrides the master seed of a loaded scenario.
pub const SEED_ENV: &str = "SPDE_FK_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// The open interval (a, b); always one-dimensional.
    Interval { a: f64, b: f64 },
    /// Open ball; the dimension is the length of `center`.
    Ball { center: Vec<f64>, radius: f64 },
    /// All of R^d. The box [-half_width, half_width]^d is used only by the
    /// finite-difference solver.
    WholeSpace { dim: usize, half_width: f64 },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Ball { center, .. } => center.len(),
            DomainSpec::WholeSpace { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite()) || a >= b {
                    return Err(Error::Validation("interval requires a < b".into()));
                }
            }
            DomainSpec::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Validation("ball center must be a finite point".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Validation("radius > 0".into()));
                }
            }
            DomainSpec::WholeSpace { dim, half_width } => {
                if *dim == 0 {
                    return Err(Error::Validation("dimension must be positive".into()));
                }
                if !(*half_width > 0.0) || !half_width.is_finite() {
                    return Err(Error::Validation("half_width > 0".into()));
                }
            }
        }
        if self.dim() > MAX_DIM {
            return Err(Error::Validation(format!("dimension must be at most {MAX_DIM}")));
        }
        Ok(())
    }

    /// Positive inside, negative outside, zero on the boundary.
    /// The whole space has no boundary and returns `+inf`.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => (x[0] - a).min(b - x[0]),
            DomainSpec::Ball { center, radius } => radius - norm_diff(x, center),
            DomainSpec::WholeSpace { .. } => f64::INFINITY,
        }
    }

    /// Membership in the open domain: a point with zero signed distance is outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 0.0
    }

    /// Unit gradient of the signed distance (inward normal near the boundary).
    /// Writes zeros for the whole space and at the centre of a ball.
    pub fn distance_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            DomainSpec::Interval { a, b } => {
                out[0] = if x[0] - a <= b - x[0] { 1.0 } else { -1.0 };
            }
            DomainSpec::Ball { center, .. } => {
                let r = norm_diff(x, center);
                if r > 0.0 {
                    for i in 0..center.len() {
                        out[i] = -(x[i] - center[i]) / r;
                    }
                }
            }
            DomainSpec::WholeSpace { .. } => {}
        }
    }

    /// Axis-aligned box enclosing the closure of D (the solver box for the whole space).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Interval { a, b } => (vec![*a], vec![*b]),
            DomainSpec::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainSpec::WholeSpace { dim, half_width } => {
                (vec![-half_width; *dim], vec![*half_width; *dim])
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match self {
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            _ => lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| (h - l) * (h - l))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn is_whole_space(&self) -> bool {
        matches!(self, DomainSpec::WholeSpace { .. })
    }
}

fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Uniform time grid on [0, T].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Validation("n_steps must be positive".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::Validation("t_final must be positive".into()));
        }
        Ok(Self {
            t_final,
            n_steps,
            dt: t_final / n_steps as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Node i, computed as i*T/n so that the last node is exactly T.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_final
        } else {
            i as f64 * self.t_final / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    /// Grid of the sub-interval [t_i, t_j], re-indexed to start at 0. The step
    /// size is carried over unchanged so that nested restrictions compose exactly.
    pub fn sub(&self, i: usize, j: usize) -> TimeGrid {
        assert!(i < j && j <= self.n_steps, "sub-grid indices out of range");
        if i == 0 && j == self.n_steps {
            return *self;
        }
        TimeGrid {
            t_final: (j - i) as f64 * self.dt,
            n_steps: j - i,
            dt: self.dt,
        }
    }

    /// Same horizon with twice as many steps.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid::new(self.t_final, 2 * self.n_steps).expect("refining a valid grid")
    }

    /// Index of the node equal to `t` (within a relative 1e-9 of a step), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.node(k) - t).abs() <= 1e-9 * self.dt).then_some(k)
    }

    /// Step index whose interval [t_i, t_{i+1}) contains `t`.
    pub fn step_of(&self, t: f64) -> usize {
        let k = (t / self.dt).floor().max(0.0) as usize;
        k.min(self.n_steps - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_final: f64,
    pub n_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientMode {
    Analytic,
    /// Central differences; `h = None` uses 1e-5 * (1 + |x|).
    CentralDifference { h: Option<f64> },
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::Analytic
    }
}

/// How the exit time is detected between grid nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitDetection {
    /// Only the grid nodes are tested for membership.
    Grid,
    /// Grid nodes plus the Brownian-bridge probability of an excursion
    /// between two inside nodes, integrated out analytically.
    #[default]
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Coercivity constant: rho rho^T >= lambda I on D^{1/2}.
    #[serde(default)]
    pub lambda: f64,
    /// Uniform bound on the coefficients.
    #[serde(default = "default_k")]
    pub k: f64,
    /// Hoelder exponent of the regularity assumptions (recorded, not checked).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub check_coercivity: bool,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            k: default_k(),
            alpha: default_alpha(),
            check_coercivity: false,
        }
    }
}

fn default_k() -> f64 {
    10.0
}
fn default_alpha() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_samples() -> usize {
    1000
}
fn default_cells() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    /// Number of adapted Wiener components m.
    #[serde(default)]
    pub modes: usize,
    #[serde(default = "default_tolerance")]
    pub inversion_tolerance: f64,
    /// Monte Carlo replicate count.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exit_detection: ExitDetection,
    /// Finite-difference cells per axis.
    #[serde(default = "default_cells")]
    pub space_cells: usize,
    pub domain: DomainSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub gradient: GradientMode,
    #[serde(default)]
    pub constants: Constants,
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig =
        toml::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        load_scenario(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Applies the master-seed override from the environment, if set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{SEED_ENV} is not a 64-bit integer: {v}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        TimeGrid::new(self.time.t_final, self.time.n_steps)?;
        if self.samples == 0 {
            return Err(Error::Validation("samples must be at least 1".into()));
        }
        if !(self.inversion_tolerance > 0.0) {
            return Err(Error::Validation("inversion tolerance must be positive".into()));
        }
        if self.space_cells < 2 {
            return Err(Error::Validation("space_cells must be at least 2".into()));
        }
        if let GradientMode::CentralDifference { h: Some(h) } = self.gradient {
            if !(h > 0.0) {
                return Err(Error::Validation("central-difference step must be positive".into()));
            }
        }
        if self.constants.check_coercivity && !(self.constants.lambda > 0.0) {
            return Err(Error::Validation(
                "lambda > 0 is required when a coercivity check is requested".into(),
            ));
        }
        if !(self.constants.k > 0.0) {
            return Err(Error::Validation("k must be positive".into()));
        }
        self.coefficient_set().map(|_| ())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.time.t_final, self.time.n_steps).expect("validated time grid")
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet> {
        CoefficientSet::new(
            self.domain.clone(),
            self.modes,
            self.coefficients.clone(),
            self.data.clone(),
            self.constants.k,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityViolation {
    pub t: f64,
    pub x: Vec<f64>,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    pub lambda: f64,
    pub probes: usize,
    pub min_eigenvalue: f64,
    pub violations: Vec<CoercivityViolation>,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Smallest eigenvalue of rho rho^T at each probe, compared against lambda.
pub fn check_coercivity(
    coeffs: &dyn CoefficientField,
    grid: &TimeGrid,
    probes: &[(f64, Vec<f64>)],
    lambda: f64,
) -> CoercivityReport {
    let d = coeffs.dim();
    let mut local = Local::new(d, coeffs.modes());
    let mut report = CoercivityReport {
        lambda,
        probes: probes.len(),
        min_eigenvalue: f64::INFINITY,
        violations: Vec::new(),
    };
    for (t, x) in probes {
        coeffs.eval(grid.step_of(*t), *t, x, Order::Values, &mut local);
        let rho = DMatrix::from_fn(d, d, |i, r| local.rho[i * d + r]);
        let rrt = &rho * rho.transpose();
        let eig = SymmetricEigen::new(rrt).eigenvalues.min();
        report.min_eigenvalue = report.min_eigenvalue.min(eig);
        if eig < lambda {
            report.violations.push(CoercivityViolation {
                t: *t,
                x: x.clone(),
                min_eigenvalue: eig,
            });
        }
    }
    report
}

/// Probe lattice covering D^{1/2} = {x : d(x, D) <= 1/2} at a few times.
pub fn coercivity_probes(domain: &DomainSpec, grid: &TimeGrid, per_axis: usize) -> Vec<(f64, Vec<f64>)> {
    let (mut lo, mut hi) = domain.bounding_box();
    if !domain.is_whole_space() {
        lo.iter_mut().for_each(|v| *v -= 0.5);
        hi.iter_mut().for_each(|v| *v += 0.5);
    }
    let points: Vec<Vec<f64>> = lattice(&lo, &hi, per_axis)
        .into_iter()
        .filter(|x| domain.is_whole_space() || domain.signed_distance(x) >= -0.5)
        .collect();
    let times = [0.0, 0.5 * grid.t_final(), grid.node(grid.n_steps() - 1)];
    times
        .iter()
        .flat_map(|&t| points.iter().map(move |x| (t, x.clone())))
        .collect()
}

/// Tensor lattice with `per_axis` points per axis spanning [lo, hi].
pub fn lattice(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|axis| {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    lo[axis] + (hi[axis] - lo[axis]) * k as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect()
}
