//! Pathwise finite-difference reference solver.
//!
//! One step of the scheme reads
//!
//! ```text
//! (I - dt L_h(t_i)) u_{i+1} = u_i + dt f(t_i) + sum_k (M^k_h u_i + g^k(t_i)) dw^k_i
//! ```
//!
//! with central differences for every derivative and the pinned (Dirichlet)
//! nodes held at zero after the initial time. The second-order part is
//! implicit, the noise part explicit, so the scheme is Ito-consistent.

use std::io::Write;

use crate::coefficients::{CoefficientField, Local, Order};
use crate::error::{Error, Result};
use crate::noise::WienerPath;
use crate::representation::RepresentationEstimate;
use crate::scenario::{DomainSpec, TimeGrid};

/// Boundary tag of a [`GridSolution`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    DirichletZero,
    /// Whole-space problem; the solver box is still pinned to zero but the
    /// box is an artefact of truncation, not part of the problem.
    None,
}

/// Uniform node grid over the bounding box of a domain (d = 1 or 2).
///
/// Nodes are numbered with axis 0 fastest. A node is pinned when it lies on
/// the box faces or, for a ball, when its signed distance is not positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceGrid {
    domain: DomainSpec,
    cells: usize,
    lo: Vec<f64>,
    dx: Vec<f64>,
    pinned: Vec<bool>,
}

impl SpaceGrid {
    pub fn new(domain: DomainSpec, cells: usize) -> Result<Self> {
        domain.validate()?;
        let d = domain.dim();
        if !(1..=2).contains(&d) {
            return Err(Error::Validation(format!(
                "the finite-difference solver supports d = 1, 2 (got {d})"
            )));
        }
        if cells < 2 {
            return Err(Error::Validation("space grid needs at least 2 cells per axis".into()));
        }
        let (lo, hi) = domain.bounding_box();
        let dx: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / cells as f64).collect();
        let mut grid = SpaceGrid {
            domain,
            cells,
            lo,
            dx,
            pinned: Vec::new(),
        };
        let n = grid.len();
        let mut x = vec![0.0; d];
        grid.pinned = (0..n)
            .map(|p| {
                let idx = grid.multi_index(p);
                let face = idx.iter().any(|&i| i == 0 || i == cells);
                grid.coords(p, &mut x);
                face || (matches!(grid.domain, DomainSpec::Ball { .. })
                    && grid.domain.signed_distance(&x) <= 0.0)
            })
            .collect();
        Ok(grid)
    }

    /// Grid whose spacing is exactly `dx` on every axis; the box width must be
    /// an integer multiple of `dx`.
    pub fn with_spacing(domain: DomainSpec, dx: f64) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        let width = hi[0] - lo[0];
        let cells = (width / dx).round();
        if !(dx > 0.0) || (cells * dx - width).abs() > 1e-9 * dx.max(width) {
            return Err(Error::Validation(format!(
                "box width {width} is not a multiple of dx = {dx}"
            )));
        }
        Self::new(domain, cells as usize)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        (self.cells + 1).pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.dx[axis]
    }

    pub fn min_dx(&self) -> f64 {
        self.dx.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        let n = self.cells + 1;
        (0..self.dim()).map(|a| (p / n.pow(a as u32)) % n).collect()
    }

    pub fn coords(&self, p: usize, out: &mut [f64]) {
        let n = self.cells + 1;
        let mut rest = p;
        for a in 0..self.dim() {
            out[a] = self.lo[a] + (rest % n) as f64 * self.dx[a];
            rest /= n;
        }
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords(p, &mut x);
        x
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    pub fn is_pinned(&self, p: usize) -> bool {
        self.pinned[p]
    }

    /// The node at `x`, if `x` is a node up to 1e-9 of the spacing.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let n = self.cells + 1;
        let mut p = 0;
        for a in (0..self.dim()).rev() {
            let s = (x[a] - self.lo[a]) / self.dx[a];
            let i = s.round();
            if (s - i).abs() > 1e-9 || i < 0.0 || i > self.cells as f64 {
                return None;
            }
            p = p * n + i as usize;
        }
        Some(p)
    }

    fn stride(&self, axis: usize) -> usize {
        (self.cells + 1).pow(axis as u32)
    }
}

/// Values u[i][p] on every time node i and space node p.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSolution {
    pub space: SpaceGrid,
    pub time: TimeGrid,
    pub boundary: Boundary,
    values: Vec<f64>,
}

impl GridSolution {
    pub fn at(&self, i: usize) -> &[f64] {
        let n = self.space.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn value(&self, i: usize, p: usize) -> f64 {
        self.values[i * self.space.len() + p]
    }

    /// Value at time node `i` and the grid node at `x`.
    pub fn value_at(&self, i: usize, x: &[f64]) -> Result<f64> {
        let p = self
            .space
            .index_of(x)
            .ok_or_else(|| Error::GridMismatch(format!("{x:?} is not a grid node")))?;
        Ok(self.value(i, p))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// CSV dump `t,x0[,x1],u`, every `stride`-th time node (and always the last).
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> Result<()> {
        let d = self.space.dim();
        let xs: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        writeln!(out, "t,{},u", xs.join(","))?;
        let n = self.time.n_steps();
        let stride = stride.max(1);
        let mut x = vec![0.0; d];
        for i in (0..=n).filter(|i| i % stride == 0 || *i == n) {
            let t = self.time.node(i);
            for p in 0..self.space.len() {
                self.space.coords(p, &mut x);
                let coords: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{t:.16e},{},{:.16e}", coords.join(","), self.value(i, p))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdOptions {
    /// Coefficient bound K of the stability guard dt <= dx / (K m).
    pub k: f64,
    pub enforce_guard: bool,
    /// Relative residual target of the iterative solver (d = 2).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            k: 1.0,
            enforce_guard: true,
            tolerance: 1e-13,
            max_iterations: 2000,
        }
    }
}

/// Compressed sparse rows.
#[derive(Clone, Debug, Default)]
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn clear(&mut self) {
        self.ptr.clear();
        self.col.clear();
        self.val.clear();
        self.ptr.push(0);
    }

    fn push(&mut self, c: usize, v: f64) {
        self.col.push(c);
        self.val.push(v);
    }

    fn end_row(&mut self) {
        self.ptr.push(self.col.len());
    }

    fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in self.ptr[r]..self.ptr[r + 1] {
                acc += self.val[e] * x[self.col[e]];
            }
            *o = acc;
        }
    }

    fn diagonal(&self, r: usize) -> f64 {
        (self.ptr[r]..self.ptr[r + 1])
            .find(|&e| self.col[e] == r)
            .map_or(0.0, |e| self.val[e])
    }
}

/// Tridiagonal solve (no pivoting) of a matrix whose rows only touch r-1, r, r+1.
fn thomas(a: &Csr, rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let n = a.rows();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for r in 0..n {
        for e in a.ptr[r]..a.ptr[r + 1] {
            let c = a.col[e];
            if c + 1 == r {
                lower[r] = a.val[e];
            } else if c == r {
                diag[r] = a.val[e];
            } else if c == r + 1 {
                upper[r] = a.val[e];
            } else {
                return Err(Error::LinearSolve("matrix is not tridiagonal".into()));
            }
        }
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for r in 0..n {
        let pivot = diag[r] - if r > 0 { lower[r] * c[r - 1] } else { 0.0 };
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot in row {r}")));
        }
        c[r] = upper[r] / pivot;
        d[r] = (rhs[r] - if r > 0 { lower[r] * d[r - 1] } else { 0.0 }) / pivot;
    }
    x[n - 1] = d[n - 1];
    for r in (0..n - 1).rev() {
        x[r] = d[r] - c[r] * x[r + 1];
    }
    Ok(())
}

/// Jacobi-preconditioned BiCGSTAB; `x` holds the initial guess on entry.
fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_it: usize) -> Result<usize> {
    let n = a.rows();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let inv_diag: Vec<f64> = (0..n)
        .map(|r| {
            let d = a.diagonal(r);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_it {
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok(it);
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolve("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.mul(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
            z[i] = s[i] * inv_diag[i];
        }
        a.mul(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::LinearSolve("BiCGSTAB produced non-finite iterates".into()));
        }
    }
    if dot(&r, &r).sqrt() <= tol * b_norm {
        return Ok(max_it);
    }
    Err(Error::LinearSolve(format!(
        "BiCGSTAB did not reach {tol:e} in {max_it} iterations"
    )))
}

/// Solves the Dirichlet problem on `grid` (or the whole-space problem on its
/// box) along the adapted path `w`.
pub fn fd_solve<C: CoefficientField + ?Sized>(
    coeffs: &C,
    w: &WienerPath,
    grid: &SpaceGrid,
    boundary: Boundary,
    opts: &FdOptions,
) -> Result<GridSolution> {
    let d = grid.dim();
    let m = coeffs.modes();
    if coeffs.dim() != d {
        return Err(Error::GridMismatch(format!(
            "coefficients have dimension {}, grid has {d}",
            coeffs.dim()
        )));
    }
    if w.modes() != m {
        return Err(Error::GridMismatch("w path width differs from the number of modes".into()));
    }
    let time = *w.grid();
    let dt = time.dt();
    if opts.enforce_guard && m > 0 && dt > grid.min_dx() / (opts.k * m as f64) {
        return Err(Error::Stability(format!(
            "dt = {dt:e} exceeds dx / (K m) = {:e}",
            grid.min_dx() / (opts.k * m as f64)
        )));
    }
    let n = grid.len();
    let steps = time.n_steps();
    let mut values = vec![0.0; n * (steps + 1)];
    let mut x = vec![0.0; d];
    for p in 0..n {
        grid.coords(p, &mut x);
        values[p] = coeffs.psi(&x);
    }
    let mut local = Local::new(d, m);
    let mut matrix = Csr::default();
    let mut rhs = vec![0.0; n];
    let mut next = vec![0.0; n];
    let strides: Vec<usize> = (0..d).map(|a| grid.stride(a)).collect();
    let dx: Vec<f64> = (0..d).map(|a| grid.dx(a)).collect();
    for i in 0..steps {
        let t = time.node(i);
        let dw = w.dw(i);
        let (done, rest) = values.split_at_mut((i + 1) * n);
        let u = &done[i * n..];
        matrix.clear();
        for p in 0..n {
            if grid.is_pinned(p) {
                matrix.push(p, 1.0);
                matrix.end_row();
                rhs[p] = 0.0;
                continue;
            }
            grid.coords(p, &mut x);
            coeffs.eval(i, t, &x, Order::Values, &mut local);
            let mut diag = 1.0 - dt * local.c;
            let mut explicit = u[p] + dt * local.f;
            for k in 0..m {
                let mut mk = local.mu[k] * u[p] + local.g[k];
                for a in 0..d {
                    let s = strides[a];
                    mk += local.sigma[a * m + k] * (u[p + s] - u[p - s]) / (2.0 * dx[a]);
                }
                explicit += mk * dw[k];
            }
            rhs[p] = explicit;
            let mut entries: [(usize, f64); 9] = [(0, 0.0); 9];
            let mut count = 0;
            for a in 0..d {
                let s = strides[a];
                let aa = 0.5 * local.diffusion(a, a) / (dx[a] * dx[a]);
                let ba = local.b[a] / (2.0 * dx[a]);
                diag += dt * 2.0 * aa;
                entries[count] = (p - s, -dt * (aa - ba));
                entries[count + 1] = (p + s, -dt * (aa + ba));
                count += 2;
            }
            if d == 2 {
                let (s0, s1) = (strides[0], strides[1]);
                let cross = -dt * local.diffusion(0, 1) / (4.0 * dx[0] * dx[1]);
                for (q, sign) in [
                    (p + s0 + s1, 1.0),
                    (p + s0 - s1, -1.0),
                    (p - s0 + s1, -1.0),
                    (p - s0 - s1, 1.0),
                ] {
                    if cross != 0.0 {
                        entries[count] = (q, sign * cross);
                        count += 1;
                    }
                }
            }
            entries[count] = (p, diag);
            count += 1;
            entries[..count].sort_unstable_by_key(|e| e.0);
            for &(q, v) in &entries[..count] {
                // pinned neighbours hold zero at the new time
                if q == p || !grid.is_pinned(q) {
                    matrix.push(q, v);
                }
            }
            matrix.end_row();
        }
        if d == 1 {
            thomas(&matrix, &rhs, &mut next)?;
        } else {
            next.copy_from_slice(u);
            bicgstab(&matrix, &rhs, &mut next, opts.tolerance, opts.max_iterations)?;
        }
        if let Some(bad) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: i, seed: bad });
        }
        rest[..n].copy_from_slice(&next);
    }
    Ok(GridSolution {
        space: grid.clone(),
        time,
        boundary,
        values,
    })
}

/// Box half-width heuristic for the whole-space solver: data support radius
/// plus six diffusion lengths.
pub fn whole_space_half_width(support: f64, k: f64, t_final: f64) -> f64 {
    support + 6.0 * (k * t_final).sqrt()
}

/// Whole-space solution on the box [-half_width, half_width]^d with spacing `dx`.
pub fn fd_solve_whole_space<C: CoefficientField + ?Sized>(
    coeffs: &C,
    w: &WienerPath,
    half_width: f64,
    dx: f64,
    opts: &FdOptions,
) -> Result<GridSolution> {
    let domain = DomainSpec::WholeSpace {
        dim: coeffs.dim(),
        half_width,
    };
    let grid = SpaceGrid::with_spacing(domain, dx)?;
    fd_solve(coeffs, w, &grid, Boundary::None, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    Sup,
    L2,
}

/// Difference between a grid solution and representation estimates on the
/// same nodes. `band` is the Monte Carlo band at three standard errors,
/// measured in the same norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub norm: Norm,
    pub points: usize,
    pub error: f64,
    /// Norm of u over the query points.
    pub reference: f64,
    pub relative: f64,
    pub band: f64,
}

pub fn compare(u: &GridSolution, estimates: &[RepresentationEstimate], norm: Norm) -> Result<ErrorReport> {
    let mut diff = Vec::with_capacity(estimates.len());
    let mut refs = Vec::with_capacity(estimates.len());
    let mut errs = Vec::with_capacity(estimates.len());
    for e in estimates {
        let i = u
            .time
            .index_of(e.t)
            .ok_or_else(|| Error::GridMismatch(format!("t = {} is not a time node", e.t)))?;
        let value = u.value_at(i, &e.query.x)?;
        diff.push(value - e.mean);
        refs.push(value);
        errs.push(e.stderr);
    }
    let measure = |v: &[f64]| match norm {
        Norm::Sup => v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    };
    let error = measure(&diff);
    let reference = measure(&refs);
    let band = 3.0 * measure(&errs);
    Ok(ErrorReport {
        norm,
        points: estimates.len(),
        error,
        reference,
        relative: if reference > 0.0 { error / reference } else { error },
        band,
    })
}
