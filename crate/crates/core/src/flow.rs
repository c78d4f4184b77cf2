//! Forward characteristics
//!
//! ```text
//! dY = beta(Y) dt - sigma^k(Y) dw^k - rho^r(Y) dw_hat^r
//! ```
//!
//! integrated by Euler-Maruyama, their Jacobians (variational equation) and
//! Newton inversion of y -> Y_{0,t}(y) that re-integrates with the same increments.
//!
//! Coefficients vanish outside D^1, so the flow is the identity there; seeds
//! and inversions are therefore confined to D^1.

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{CoefficientField, Local, Order, MAX_DIM};
use crate::error::{Error, Result};
use crate::noise::WienerPath;
use crate::scenario::{lattice, DomainSpec, TimeGrid};

/// Newton iteration cap for [`Characteristics::invert`].
pub const MAX_NEWTON_ITERATIONS: usize = 50;

/// Step of the finite-difference fallback for the drift Jacobian.
const BETA_FD_STEP: f64 = 1e-6;

/// Receives every node and every step of an integration. Node and step
/// indices are relative to the start of the noise window.
pub trait Observer {
    /// Called before each (re-)integration.
    fn begin(&mut self, _start: usize) {}
    /// State at node `i`.
    fn node(&mut self, _i: usize, _z: &[f64]) {}
    /// Coefficients at node `i`, evaluated before the step from i to i+1.
    fn step(&mut self, _i: usize, _local: &Local, _dw: &[f64]) {}
    /// Whether `step` reads f and g; when false they are not evaluated.
    fn uses_data(&self) -> bool {
        true
    }
}

impl Observer for () {
    fn uses_data(&self) -> bool {
        false
    }
}

/// Stores the visited nodes.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    pub start: usize,
    pub states: Vec<f64>,
}

impl Observer for Recorder {
    fn uses_data(&self) -> bool {
        false
    }

    fn begin(&mut self, start: usize) {
        self.start = start;
        self.states.clear();
    }
    fn node(&mut self, _i: usize, z: &[f64]) {
        self.states.extend_from_slice(z);
    }
}

/// Scratch space reused across integrations.
#[derive(Clone, Debug)]
pub struct Workspace {
    local: Local,
    probe: Local,
    jac_step: [f64; MAX_DIM * MAX_DIM],
    tmp: [f64; MAX_DIM * MAX_DIM],
}

impl Workspace {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            local: Local::new(d, m),
            probe: Local::new(d, m),
            jac_step: [0.0; MAX_DIM * MAX_DIM],
            tmp: [0.0; MAX_DIM * MAX_DIM],
        }
    }
}

/// Coefficients bound to a window of noise.
///
/// `clock` is the global time grid; the noise rows are the global steps
/// `offset .. offset + noise.n_steps()`. Coefficients are always evaluated at
/// global step indices and times, so a restricted window reproduces the
/// corresponding part of a full integration exactly.
pub struct Characteristics<'a, C: ?Sized> {
    coeffs: &'a C,
    clock: TimeGrid,
    offset: usize,
    noise: &'a WienerPath,
}

impl<'a, C: CoefficientField + ?Sized> Characteristics<'a, C> {
    pub fn new(coeffs: &'a C, noise: &'a WienerPath) -> Result<Self> {
        Self::windowed(coeffs, *noise.grid(), 0, noise)
    }

    pub fn windowed(coeffs: &'a C, clock: TimeGrid, offset: usize, noise: &'a WienerPath) -> Result<Self> {
        if noise.modes() != coeffs.modes() || noise.aux_dim() != coeffs.dim() {
            return Err(Error::GridMismatch(format!(
                "noise has {} adapted and {} auxiliary components, coefficients need {} and {}",
                noise.modes(),
                noise.aux_dim(),
                coeffs.modes(),
                coeffs.dim()
            )));
        }
        if noise.grid().dt() != clock.dt() || offset + noise.grid().n_steps() > clock.n_steps() {
            return Err(Error::GridMismatch("noise window does not fit the clock".into()));
        }
        Ok(Self {
            coeffs,
            clock,
            offset,
            noise,
        })
    }

    pub fn coeffs(&self) -> &'a C {
        self.coeffs
    }

    pub fn noise(&self) -> &'a WienerPath {
        self.noise
    }

    pub fn clock(&self) -> &TimeGrid {
        &self.clock
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn modes(&self) -> usize {
        self.coeffs.modes()
    }

    /// Number of steps in the window.
    pub fn steps(&self) -> usize {
        self.noise.grid().n_steps()
    }

    /// Global time of window node `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.clock.node(self.offset + i)
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.dim(), self.modes())
    }

    /// Integrates `y` from window node `from` to `to`; when `jac` is given it
    /// holds a d x d row-major matrix that is advanced by the variational equation.
    pub fn integrate(
        &self,
        y: &mut [f64],
        from: usize,
        to: usize,
        mut jac: Option<&mut [f64]>,
        observer: &mut impl Observer,
        ws: &mut Workspace,
        seed_index: usize,
    ) -> Result<()> {
        let d = self.dim();
        let m = self.modes();
        let dt = self.clock.dt();
        let order = if jac.is_some() { Order::Hessians } else { Order::Gradients };
        let analytic = self.coeffs.has_hessians();
        let mut beta = [0.0; MAX_DIM];
        ws.local.data = observer.uses_data();
        observer.begin(from);
        observer.node(from, y);
        for i in from..to {
            let step = self.offset + i;
            let t = self.time(i);
            let dw = self.noise.dw(i);
            let dwh = self.noise.dw_hat(i);
            self.coeffs.eval(step, t, y, order, &mut ws.local);
            observer.step(i, &ws.local, dw);
            let local = &ws.local;
            local.beta(&mut beta[..d]);

            if let Some(j) = jac.as_deref_mut() {
                let a = &mut ws.jac_step;
                if analytic {
                    local.beta_jacobian(&mut a[..d * d]);
                } else {
                    beta_jacobian_fd(self.coeffs, step, t, y, &mut ws.probe, &mut a[..d * d]);
                }
                for r in 0..d {
                    for l in 0..d {
                        let mut v = a[r * d + l] * dt;
                        for k in 0..m {
                            v -= local.dsigma[(l * d + r) * m + k] * dw[k];
                        }
                        for q in 0..d {
                            v -= local.drho[(l * d + r) * d + q] * dwh[q];
                        }
                        if r == l {
                            v += 1.0;
                        }
                        a[r * d + l] = v;
                    }
                }
                let tmp = &mut ws.tmp;
                for r in 0..d {
                    for c in 0..d {
                        let mut v = 0.0;
                        for l in 0..d {
                            v += a[r * d + l] * j[l * d + c];
                        }
                        tmp[r * d + c] = v;
                    }
                }
                j[..d * d].copy_from_slice(&tmp[..d * d]);
            }

            for r in 0..d {
                let mut v = y[r] + beta[r] * dt;
                for k in 0..m {
                    v -= local.sigma[r * m + k] * dw[k];
                }
                for q in 0..d {
                    v -= local.rho[r * d + q] * dwh[q];
                }
                y[r] = v;
            }
            if y[..d].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step: step + 1,
                    seed: seed_index,
                });
            }
            observer.node(i + 1, y);
        }
        Ok(())
    }

    /// Y_{0,t_i}(y_j) for every seed and every node of the window.
    pub fn integrate_flow(&self, seeds: &[Vec<f64>], jacobians: bool) -> Result<FlowField> {
        self.integrate_flow_from(0, seeds, jacobians)
    }

    /// Y_{t_start,t_i}(y_j) for i >= start.
    pub fn integrate_flow_from(&self, start: usize, seeds: &[Vec<f64>], jacobians: bool) -> Result<FlowField> {
        let d = self.dim();
        let n = self.steps();
        if start > n {
            return Err(Error::Index(format!("start node {start} beyond {n}")));
        }
        let nodes = n - start + 1;
        let count = seeds.len();
        let mut states = vec![0.0; nodes * count * d];
        let mut jacs = jacobians.then(|| vec![0.0; nodes * count * d * d]);
        let mut ws = self.workspace();
        let mut collect = FlowCollector {
            start,
            d,
            count,
            seed: 0,
            states: &mut states,
        };
        for (j, seed) in seeds.iter().enumerate() {
            if seed.len() != d {
                return Err(Error::Validation(format!("seed {j} has wrong dimension")));
            }
            let mut y = [0.0; MAX_DIM];
            y[..d].copy_from_slice(seed);
            collect.seed = j;
            match jacs.as_mut() {
                Some(store) => {
                    let mut jac = [0.0; MAX_DIM * MAX_DIM];
                    identity(&mut jac[..d * d], d);
                    let base = j * d * d;
                    store[base..base + d * d].copy_from_slice(&jac[..d * d]);
                    if n == start {
                        collect.node(start, &y[..d]);
                    }
                    for i in start..n {
                        self.integrate(&mut y[..d], i, i + 1, Some(&mut jac[..d * d]), &mut collect, &mut ws, j)?;
                        let off = ((i + 1 - start) * count + j) * d * d;
                        store[off..off + d * d].copy_from_slice(&jac[..d * d]);
                    }
                }
                None => {
                    self.integrate(&mut y[..d], start, n, None, &mut collect, &mut ws, j)?;
                }
            }
        }
        Ok(FlowField {
            clock: self.clock,
            offset: self.offset,
            start,
            d,
            seeds: seeds.iter().flatten().copied().collect(),
            states,
            jacobians: jacs,
        })
    }

    /// Images of the seeds at window node `node`, without storing paths;
    /// Jacobians only when asked for.
    pub fn seed_images(&self, seeds: &[f64], node: usize, jacobians: bool, ws: &mut Workspace) -> Result<ImageTable> {
        let d = self.dim();
        let count = seeds.len() / d;
        let mut images = seeds.to_vec();
        let mut jacs = if jacobians { vec![0.0; count * d * d] } else { Vec::new() };
        for j in 0..count {
            let image = &mut images[j * d..(j + 1) * d];
            if jacobians {
                let jac = &mut jacs[j * d * d..(j + 1) * d * d];
                identity(jac, d);
                self.integrate(image, 0, node, Some(jac), &mut (), ws, j)?;
            } else {
                self.integrate(image, 0, node, None, &mut (), ws, j)?;
            }
        }
        Ok(ImageTable {
            d,
            node,
            seeds: seeds.to_vec(),
            images,
            jacobians: jacs,
        })
    }

    /// Newton inversion of y -> Y_{0,t_node}(y) at `x`, started from the seed
    /// whose image is nearest to `x`.
    pub fn invert(
        &self,
        table: &ImageTable,
        x: &[f64],
        tolerance: f64,
        observer: &mut impl Observer,
        ws: &mut Workspace,
    ) -> Result<Inversion> {
        if !table.covers(x) {
            return Err(Error::OutOfRange { node: self.offset + table.node });
        }
        let j = table.nearest(x);
        let guess = Guess {
            y: table.seed(j),
            image: table.image(j),
            jacobian: table.has_jacobians().then(|| table.jacobian(j)),
        };
        self.invert_from(table.node, guess, x, tolerance, observer, ws)
    }

    /// Newton inversion from an explicit starting point. A known Jacobian at
    /// the guess is used for the first update; otherwise the guess is
    /// re-integrated once to obtain it. Every iterate is re-integrated with
    /// the same noise. The observer is attached only to passes expected to be
    /// final (and to one extra pass if the guess was wrong), so on success its
    /// last pass is the trajectory through the returned point.
    pub fn invert_from(
        &self,
        node: usize,
        guess: Guess<'_>,
        x: &[f64],
        tolerance: f64,
        observer: &mut impl Observer,
        ws: &mut Workspace,
    ) -> Result<Inversion> {
        let d = self.dim();
        // contraction constant of the quadratic convergence, r_{k+1} ~ c r_k^2
        let mut contraction = 1.0f64;
        let mut y = [0.0; MAX_DIM];
        y[..d].copy_from_slice(guess.y);
        let mut image = [0.0; MAX_DIM];
        let mut jac = [0.0; MAX_DIM * MAX_DIM];
        match guess.jacobian {
            Some(j) => {
                jac[..d * d].copy_from_slice(j);
                image[..d].copy_from_slice(guess.image);
            }
            None => {
                identity(&mut jac[..d * d], d);
                image = y;
                self.integrate(&mut image[..d], 0, node, Some(&mut jac[..d * d]), &mut (), ws, 0)?;
            }
        }
        let mut observed = false;
        let mut residual = [0.0; MAX_DIM];
        for l in 0..d {
            residual[l] = image[l] - x[l];
        }
        let mut norm = euclid(&residual[..d]);
        let mut iterations = 0;
        while norm > tolerance {
            if iterations >= MAX_NEWTON_ITERATIONS {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: norm,
                });
            }
            iterations += 1;
            let delta = solve(&jac[..d * d], &residual[..d], d)?;
            let watch = contraction * norm * norm <= 0.5 * tolerance;
            let mut scale = 1.0;
            loop {
                let mut trial = y;
                for l in 0..d {
                    trial[l] -= scale * delta[l];
                }
                let mut trial_jac = [0.0; MAX_DIM * MAX_DIM];
                identity(&mut trial_jac[..d * d], d);
                let mut trial_image = trial;
                let tj = Some(&mut trial_jac[..d * d]);
                if watch {
                    self.integrate(&mut trial_image[..d], 0, node, tj, observer, ws, 0)?;
                } else {
                    self.integrate(&mut trial_image[..d], 0, node, tj, &mut (), ws, 0)?;
                }
                observed = watch;
                let mut trial_res = [0.0; MAX_DIM];
                for l in 0..d {
                    trial_res[l] = trial_image[l] - x[l];
                }
                let trial_norm = euclid(&trial_res[..d]);
                if trial_norm < norm || trial_norm <= tolerance || scale < 1e-3 {
                    if scale == 1.0 {
                        contraction = (trial_norm / (norm * norm)).max(1e-3);
                    }
                    y = trial;
                    jac = trial_jac;
                    image = trial_image;
                    residual = trial_res;
                    norm = trial_norm;
                    break;
                }
                scale *= 0.5;
            }
        }
        if !observed {
            let mut pass = y;
            self.integrate(&mut pass[..d], 0, node, None, observer, ws, 0)?;
        }
        Ok(Inversion {
            y: y[..d].to_vec(),
            image: image[..d].to_vec(),
            jacobian: jac[..d * d].to_vec(),
            residual: norm,
            iterations,
        })
    }

    /// Y_{0,s}(y*) for s = 0..=node with y* the inverse image of `x`; the
    /// trajectory of the inverse flow Y^{-1}_{s,t}(x) on the grid.
    pub fn inverse_trajectory(&self, table: &ImageTable, x: &[f64], tolerance: f64) -> Result<(Inversion, Vec<Vec<f64>>)> {
        let mut ws = self.workspace();
        let mut rec = Recorder::default();
        let inv = self.invert(table, x, tolerance, &mut rec, &mut ws)?;
        let d = self.dim();
        let path = rec.states.chunks(d).map(|c| c.to_vec()).collect();
        Ok((inv, path))
    }
}

struct FlowCollector<'s> {
    start: usize,
    d: usize,
    count: usize,
    seed: usize,
    states: &'s mut [f64],
}

impl Observer for FlowCollector<'_> {
    fn uses_data(&self) -> bool {
        false
    }

    fn node(&mut self, i: usize, z: &[f64]) {
        let off = ((i - self.start) * self.count + self.seed) * self.d;
        self.states[off..off + self.d].copy_from_slice(z);
    }
}

fn beta_jacobian_fd<C: CoefficientField + ?Sized>(
    coeffs: &C,
    step: usize,
    t: f64,
    y: &[f64],
    probe: &mut Local,
    out: &mut [f64],
) {
    let d = y.len();
    let mut z = [0.0; MAX_DIM];
    z[..d].copy_from_slice(y);
    let mut plus = [0.0; MAX_DIM];
    let mut minus = [0.0; MAX_DIM];
    for l in 0..d {
        z[l] = y[l] + BETA_FD_STEP;
        coeffs.eval(step, t, &z[..d], Order::Gradients, probe);
        probe.beta(&mut plus[..d]);
        z[l] = y[l] - BETA_FD_STEP;
        coeffs.eval(step, t, &z[..d], Order::Gradients, probe);
        probe.beta(&mut minus[..d]);
        z[l] = y[l];
        for j in 0..d {
            out[j * d + l] = (plus[j] - minus[j]) / (2.0 * BETA_FD_STEP);
        }
    }
}

fn identity(m: &mut [f64], d: usize) {
    m.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve(jac: &[f64], rhs: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 1 {
        if jac[0] == 0.0 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: rhs[0].abs(),
            });
        }
        return Ok(vec![rhs[0] / jac[0]]);
    }
    let a = DMatrix::from_row_slice(d, d, jac);
    let b = DVector::from_column_slice(rhs);
    a.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(Error::NoConvergence {
            iterations: 0,
            residual: euclid(rhs),
        })
}

/// Determinant of a d x d row-major matrix.
pub fn determinant(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => DMatrix::from_row_slice(d, d, m).determinant(),
    }
}

/// Result of a flow inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub y: Vec<f64>,
    /// Y_{0,t}(y), within the tolerance of the target.
    pub image: Vec<f64>,
    /// Jacobian of the flow at `y`, row-major.
    pub jacobian: Vec<f64>,
    pub residual: f64,
    /// Newton updates taken; 0 when the starting point already matched.
    pub iterations: usize,
}

/// Starting point for [`Characteristics::invert_from`].
#[derive(Clone, Copy, Debug)]
pub struct Guess<'g> {
    pub y: &'g [f64],
    /// Y_{0,t}(y).
    pub image: &'g [f64],
    pub jacobian: Option<&'g [f64]>,
}

/// Seed images (and Jacobians) at one node: the warm-start table for inversion.
#[derive(Clone, Debug)]
pub struct ImageTable {
    d: usize,
    node: usize,
    seeds: Vec<f64>,
    images: Vec<f64>,
    jacobians: Vec<f64>,
}

impl ImageTable {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn len(&self) -> usize {
        self.seeds.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn seed(&self, j: usize) -> &[f64] {
        &self.seeds[j * self.d..(j + 1) * self.d]
    }

    pub fn image(&self, j: usize) -> &[f64] {
        &self.images[j * self.d..(j + 1) * self.d]
    }

    pub fn has_jacobians(&self) -> bool {
        !self.jacobians.is_empty()
    }

    pub fn jacobian(&self, j: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.jacobians[j * dd..(j + 1) * dd]
    }

    /// Whether `x` lies in the coordinate-wise hull of the images.
    pub fn covers(&self, x: &[f64]) -> bool {
        (0..self.d).all(|l| {
            let (lo, hi) = self
                .images
                .iter()
                .skip(l)
                .step_by(self.d)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            lo <= x[l] && x[l] <= hi
        })
    }

    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for j in 0..self.len() {
            let dist: f64 = self.image(j).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.0 {
                best = (dist, j);
            }
        }
        best.1
    }

    /// Smallest |det| over the stored Jacobians (infinite when none are stored).
    pub fn min_abs_det(&self) -> f64 {
        if !self.has_jacobians() {
            return f64::INFINITY;
        }
        (0..self.len())
            .map(|j| determinant(self.jacobian(j), self.d).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Seed images in d = 1 computed on demand. The discrete flow is increasing
/// in y while every step's derivative stays positive, so the hull of the
/// images is spanned by the two end seeds and the nearest image is found by
/// bisection.
#[derive(Clone, Debug)]
pub struct LazyImages {
    node: usize,
    seeds: Vec<f64>,
    images: Vec<Option<f64>>,
}

impl LazyImages {
    /// `seeds` must be increasing.
    pub fn new(seeds: &[f64], node: usize) -> Self {
        Self {
            node,
            seeds: seeds.to_vec(),
            images: vec![None; seeds.len()],
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn seed(&self, j: usize) -> f64 {
        self.seeds[j]
    }

    /// Number of images integrated so far.
    pub fn evaluated(&self) -> usize {
        self.images.iter().filter(|v| v.is_some()).count()
    }

    pub fn image<C: CoefficientField + ?Sized>(
        &mut self,
        ch: &Characteristics<'_, C>,
        j: usize,
        ws: &mut Workspace,
    ) -> Result<f64> {
        if let Some(v) = self.images[j] {
            return Ok(v);
        }
        let mut y = [self.seeds[j]];
        ch.integrate(&mut y, 0, self.node, None, &mut (), ws, j)?;
        self.images[j] = Some(y[0]);
        Ok(y[0])
    }

    /// Index of the seed whose image is nearest to `x`; `None` when `x` is
    /// outside the images of the end seeds.
    pub fn nearest<C: CoefficientField + ?Sized>(
        &mut self,
        ch: &Characteristics<'_, C>,
        x: f64,
        ws: &mut Workspace,
    ) -> Result<Option<usize>> {
        let last = self.seeds.len() - 1;
        let (lo_img, hi_img) = (self.image(ch, 0, ws)?, self.image(ch, last, ws)?);
        if !(lo_img <= x && x <= hi_img) {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.image(ch, mid, ws)? <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (self.image(ch, lo, ws)?, self.image(ch, hi, ws)?);
        Ok(Some(if x - a <= b - x { lo } else { hi }))
    }
}

/// Stored flow on every node of a window, for a set of seeds.
#[derive(Clone, Debug)]
pub struct FlowField {
    clock: TimeGrid,
    offset: usize,
    start: usize,
    d: usize,
    seeds: Vec<f64>,
    states: Vec<f64>,
    jacobians: Option<Vec<f64>>,
}

impl FlowField {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn n_seeds(&self) -> usize {
        self.seeds.len() / self.d
    }

    /// Last window node stored.
    pub fn end(&self) -> usize {
        self.start + self.states.len() / (self.d * self.n_seeds().max(1)) - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.clock.node(self.offset + i)
    }

    pub fn seed(&self, j: usize) -> &[f64] {
        &self.seeds[j * self.d..(j + 1) * self.d]
    }

    /// State of seed `j` at window node `i` (i >= start).
    pub fn state(&self, i: usize, j: usize) -> &[f64] {
        let off = ((i - self.start) * self.n_seeds() + j) * self.d;
        &self.states[off..off + self.d]
    }

    pub fn jacobian(&self, i: usize, j: usize) -> Option<&[f64]> {
        let dd = self.d * self.d;
        self.jacobians.as_ref().map(|js| {
            let off = ((i - self.start) * self.n_seeds() + j) * dd;
            &js[off..off + dd]
        })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Warm-start table at node `i`; needs stored Jacobians.
    pub fn table(&self, i: usize) -> Result<ImageTable> {
        if self.jacobians.is_none() {
            return Err(Error::Validation("flow was integrated without Jacobians".into()));
        }
        if self.start != 0 {
            return Err(Error::Validation("inversion needs a flow started at node 0".into()));
        }
        let count = self.n_seeds();
        let mut images = Vec::with_capacity(count * self.d);
        let mut jacobians = Vec::with_capacity(count * self.d * self.d);
        for j in 0..count {
            images.extend_from_slice(self.state(i, j));
            jacobians.extend_from_slice(self.jacobian(i, j).unwrap());
        }
        Ok(ImageTable {
            d: self.d,
            node: i,
            seeds: self.seeds.clone(),
            images,
            jacobians,
        })
    }

    /// Smallest |det| of the stored Jacobians over all nodes and seeds.
    pub fn min_abs_det(&self) -> Option<f64> {
        let dd = self.d * self.d;
        self.jacobians.as_ref().map(|js| {
            js.chunks(dd)
                .map(|m| determinant(m, self.d).abs())
                .fold(f64::INFINITY, f64::min)
        })
    }
}

/// Default seed lattice: the bounding box of D^1 with spacing about diam(D)/32.
/// For the whole space the solver box is used instead.
pub fn seed_lattice(domain: &DomainSpec, per_diameter: usize) -> Vec<Vec<f64>> {
    let (mut lo, mut hi) = domain.bounding_box();
    if !domain.is_whole_space() {
        lo.iter_mut().for_each(|v| *v -= 1.0);
        hi.iter_mut().for_each(|v| *v += 1.0);
    }
    let spacing = domain.diameter() / per_diameter.max(1) as f64;
    let extent = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| b - a)
        .fold(0.0f64, f64::max);
    let per_axis = (extent / spacing).ceil() as usize + 1;
    lattice(&lo, &hi, per_axis)
}

/// Flat copy of a lattice for [`Characteristics::seed_images`].
pub fn flatten(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSet, CoefficientSpec, DataSpec, FamilyName};
    use crate::noise::{NoisePlan, StreamId};

    fn field(spec: CoefficientSpec, modes: usize) -> crate::coefficients::Realized {
        CoefficientSet::new(
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            modes,
            spec,
            DataSpec::default(),
            10.0,
        )
        .unwrap()
        .realize_static()
        .unwrap()
    }

    fn noise(grid: &TimeGrid, m: usize, d: usize, seed: u64) -> WienerPath {
        let plan = NoisePlan::new(seed);
        plan.sample_w(grid, m, StreamId::W(0))
            .with_aux(&plan.sample_aux(grid, d, NoisePlan::aux_id(0, 0)))
            .unwrap()
    }

    #[test]
    fn zero_coefficients_give_identity_flow() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let c = field(CoefficientSpec::default(), 1);
        let w = noise(&grid, 1, 1, 1);
        let ch = Characteristics::new(&c, &w).unwrap();
        let flow = ch.integrate_flow(&[vec![0.3], vec![0.8]], true).unwrap();
        for i in 0..=20 {
            assert_eq!(flow.state(i, 0), &[0.3]);
            assert_eq!(flow.jacobian(i, 1).unwrap(), &[1.0]);
        }
        let table = flow.table(20).unwrap();
        let (inv, path) = ch.inverse_trajectory(&table, &[0.8], 1e-10).unwrap();
        assert_eq!(inv.y, vec![0.8]);
        assert_eq!(inv.iterations, 0);
        assert!(path.iter().all(|z| z == &vec![0.8]));
        let (inv, path) = ch.inverse_trajectory(&table, &[0.55], 1e-10).unwrap();
        assert!((inv.y[0] - 0.55).abs() < 1e-15);
        assert_eq!(path.len(), 21);
    }

    #[test]
    fn additive_noise_is_a_translation() {
        let grid = TimeGrid::new(0.5, 64).unwrap();
        let spec = CoefficientSpec {
            family: FamilyName::Constant,
            rho: 1.0,
            ..CoefficientSpec::default()
        };
        let c = field(spec, 0);
        let w = noise(&grid, 0, 1, 2);
        let ch = Characteristics::new(&c, &w).unwrap();
        let flow = ch.integrate_flow(&[vec![0.4]], false).unwrap();
        let what = w.cumulative_w_hat(0);
        for i in 0..=64 {
            assert!((flow.state(i, 0)[0] - (0.4 - what[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_drift() {
        let grid = TimeGrid::new(0.25, 10).unwrap();
        let spec = CoefficientSpec {
            family: FamilyName::Constant,
            b: 1.0,
            ..CoefficientSpec::default()
        };
        let c = field(spec, 0);
        let w = noise(&grid, 0, 1, 3);
        let ch = Characteristics::new(&c, &w).unwrap();
        let flow = ch.integrate_flow(&[vec![0.5]], false).unwrap();
        assert!((flow.state(10, 0)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lattice_covers_unit_distance_neighbourhood() {
        let seeds = seed_lattice(&DomainSpec::Interval { a: 0.0, b: 1.0 }, 32);
        assert_eq!(seeds.len(), 97);
        assert_eq!(seeds[0], vec![-1.0]);
        assert_eq!(seeds[96], vec![2.0]);
    }
}
