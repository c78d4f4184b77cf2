//! Coefficient fields sigma, rho, b, c, mu and data psi, f, g of
//!
//! ```text
//! du = [L u + f] dt + [M^k u + g^k] dw^k,
//! L = 1/2 (sigma sigma^T + rho rho^T)^{ij} D_i D_j + b^i D_i + c,
//! M^k = sigma^{ik} D_i + mu^k,
//! ```
//!
//! together with the composite quantities the characteristics need: the
//! drift `beta`, and the corrected zeroth-order and forcing terms `c_bar`, `f_bar`.
//!
//! Index conventions: `sigma^{ik}` is row i (space) and column k (mode), so
//! `sigma^k` is a column vector; `rho^{ir}` likewise.

mod family;
pub mod jet;

pub use family::{
    builtin_family, AdaptedModulation, CoefficientSet, CoefficientSpec, DataProfile, DataSpec,
    FamilyName, Realized,
};

/// Largest spatial dimension supported by the builtin families.
pub const MAX_DIM: usize = 4;

/// How many spatial derivatives an evaluation has to fill in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Values,
    Gradients,
    Hessians,
}

/// All coefficient and data values at one (t, x), with spatial derivatives.
///
/// Flat row-major layouts (d = dimension, m = modes):
/// `sigma[i*m + k]`, `dsigma[(l*d + i)*m + k] = D_l sigma^{ik}`,
/// `d2sigma[((p*d + l)*d + i)*m + k] = D_p D_l sigma^{ik}`; `rho` the same with
/// m replaced by d; `db[l*d + i] = D_l b^i`; `dmu[l*m + k] = D_l mu^k`, `dg` likewise.
#[derive(Clone, Debug, PartialEq)]
pub struct Local {
    pub d: usize,
    pub m: usize,
    /// When false, evaluations leave f, g and their gradients at zero.
    pub data: bool,
    pub sigma: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub d2sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
    pub d2rho: Vec<f64>,
    pub b: Vec<f64>,
    pub db: Vec<f64>,
    pub c: f64,
    pub mu: Vec<f64>,
    pub dmu: Vec<f64>,
    pub f: f64,
    pub df: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
}

impl Local {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            data: true,
            sigma: vec![0.0; d * m],
            dsigma: vec![0.0; d * d * m],
            d2sigma: vec![0.0; d * d * d * m],
            rho: vec![0.0; d * d],
            drho: vec![0.0; d * d * d],
            d2rho: vec![0.0; d * d * d * d],
            b: vec![0.0; d],
            db: vec![0.0; d * d],
            c: 0.0,
            mu: vec![0.0; m],
            dmu: vec![0.0; d * m],
            f: 0.0,
            df: vec![0.0; d],
            g: vec![0.0; m],
            dg: vec![0.0; d * m],
        }
    }

    pub fn clear(&mut self) {
        for v in [
            &mut self.sigma,
            &mut self.dsigma,
            &mut self.d2sigma,
            &mut self.rho,
            &mut self.drho,
            &mut self.d2rho,
            &mut self.b,
            &mut self.db,
            &mut self.mu,
            &mut self.dmu,
            &mut self.df,
            &mut self.g,
            &mut self.dg,
        ] {
            // short slices are cheaper to zero inline than through memset
            match v.len() {
                1 => v[0] = 0.0,
                2 => v[..2].copy_from_slice(&[0.0; 2]),
                4 => v[..4].copy_from_slice(&[0.0; 4]),
                _ => v.fill(0.0),
            }
        }
        self.c = 0.0;
        self.f = 0.0;
    }

    /// `self += s * other`, field by field.
    pub fn add_scaled(&mut self, other: &Local, s: f64) {
        fn axpy(a: &mut [f64], b: &[f64], s: f64) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        axpy(&mut self.sigma, &other.sigma, s);
        axpy(&mut self.dsigma, &other.dsigma, s);
        axpy(&mut self.d2sigma, &other.d2sigma, s);
        axpy(&mut self.rho, &other.rho, s);
        axpy(&mut self.drho, &other.drho, s);
        axpy(&mut self.d2rho, &other.d2rho, s);
        axpy(&mut self.b, &other.b, s);
        axpy(&mut self.db, &other.db, s);
        axpy(&mut self.mu, &other.mu, s);
        axpy(&mut self.dmu, &other.dmu, s);
        axpy(&mut self.df, &other.df, s);
        axpy(&mut self.g, &other.g, s);
        axpy(&mut self.dg, &other.dg, s);
        self.c += s * other.c;
        self.f += s * other.f;
    }

    /// Drift of the forward characteristics:
    /// `beta^j = -b^j + sigma^{ik} D_i sigma^{jk} + rho^{ir} D_i rho^{jr} + sigma^{jk} mu^k`.
    pub fn beta(&self, out: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        if d == 1 && m == 1 {
            out[0] = -self.b[0] + self.sigma[0] * (self.mu[0] + self.dsigma[0]) + self.rho[0] * self.drho[0];
            return;
        }
        for j in 0..d {
            let mut acc = -self.b[j];
            for k in 0..m {
                acc += self.sigma[j * m + k] * self.mu[k];
                for i in 0..d {
                    acc += self.sigma[i * m + k] * self.dsigma[(i * d + j) * m + k];
                }
            }
            for r in 0..d {
                for i in 0..d {
                    acc += self.rho[i * d + r] * self.drho[(i * d + j) * d + r];
                }
            }
            out[j] = acc;
        }
    }

    /// `out[j*d + l] = D_l beta^j`; needs an evaluation at `Order::Hessians`.
    pub fn beta_jacobian(&self, out: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        if d == 1 && m == 1 {
            let (s, ds) = (self.sigma[0], self.dsigma[0]);
            let (r, dr) = (self.rho[0], self.drho[0]);
            out[0] = -self.db[0] + ds * self.mu[0] + s * self.dmu[0] + ds * ds + s * self.d2sigma[0] + dr * dr + r * self.d2rho[0];
            return;
        }
        for j in 0..d {
            for l in 0..d {
                let mut acc = -self.db[l * d + j];
                for k in 0..m {
                    acc += self.dsigma[(l * d + j) * m + k] * self.mu[k]
                        + self.sigma[j * m + k] * self.dmu[l * m + k];
                    for i in 0..d {
                        acc += self.dsigma[(l * d + i) * m + k] * self.dsigma[(i * d + j) * m + k]
                            + self.sigma[i * m + k] * self.d2sigma[((l * d + i) * d + j) * m + k];
                    }
                }
                for r in 0..d {
                    for i in 0..d {
                        acc += self.drho[(l * d + i) * d + r] * self.drho[(i * d + j) * d + r]
                            + self.rho[i * d + r] * self.d2rho[((l * d + i) * d + j) * d + r];
                    }
                }
                out[j * d + l] = acc;
            }
        }
    }

    /// `sigma^{ik} D_i mu^k`
    pub fn sigma_dmu(&self) -> f64 {
        let (d, m) = (self.d, self.m);
        let mut acc = 0.0;
        for k in 0..m {
            for i in 0..d {
                acc += self.sigma[i * m + k] * self.dmu[i * m + k];
            }
        }
        acc
    }

    /// `sigma^{ik} D_i g^k`
    pub fn sigma_dg(&self) -> f64 {
        let (d, m) = (self.d, self.m);
        let mut acc = 0.0;
        for k in 0..m {
            for i in 0..d {
                acc += self.sigma[i * m + k] * self.dg[i * m + k];
            }
        }
        acc
    }

    pub fn c_bar(&self) -> f64 {
        self.c - self.sigma_dmu()
    }

    pub fn f_bar(&self) -> f64 {
        self.f - self.sigma_dg()
    }

    pub fn mu_squared(&self) -> f64 {
        self.mu.iter().map(|v| v * v).sum()
    }

    pub fn g_dot_mu(&self) -> f64 {
        self.g.iter().zip(&self.mu).map(|(a, b)| a * b).sum()
    }

    /// `(sigma sigma^T + rho rho^T)^{ij}`, i.e. twice the diffusion matrix of L.
    pub fn diffusion(&self, i: usize, j: usize) -> f64 {
        let (d, m) = (self.d, self.m);
        let mut acc = 0.0;
        for k in 0..m {
            acc += self.sigma[i * m + k] * self.sigma[j * m + k];
        }
        for r in 0..d {
            acc += self.rho[i * d + r] * self.rho[j * d + r];
        }
        acc
    }

    /// Largest absolute value over all stored fields (values only).
    pub fn sup_norm(&self) -> f64 {
        self.sigma
            .iter()
            .chain(&self.rho)
            .chain(&self.b)
            .chain(&self.mu)
            .chain(&self.g)
            .chain([&self.c, &self.f])
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// A realized set of coefficient fields, evaluable at (grid step, time, point).
///
/// `step` is the index of the grid interval [t_step, t_step+1) containing t;
/// path-dependent coefficients use it to look up their predictable modulation.
pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;
    fn modes(&self) -> usize;

    /// Whether `Order::Hessians` fills the second derivatives of sigma and rho.
    fn has_hessians(&self) -> bool {
        true
    }

    fn eval(&self, step: usize, t: f64, x: &[f64], order: Order, out: &mut Local);

    fn psi(&self, x: &[f64]) -> f64;

    fn psi_gradient(&self, x: &[f64], out: &mut [f64]) {
        let h = 1e-6;
        let mut y = x.to_vec();
        for l in 0..x.len() {
            y[l] = x[l] + h;
            let plus = self.psi(&y);
            y[l] = x[l] - h;
            let minus = self.psi(&y);
            y[l] = x[l];
            out[l] = (plus - minus) / (2.0 * h);
        }
    }
}

impl<T: CoefficientField + ?Sized> CoefficientField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn modes(&self) -> usize {
        (**self).modes()
    }
    fn has_hessians(&self) -> bool {
        (**self).has_hessians()
    }
    fn eval(&self, step: usize, t: f64, x: &[f64], order: Order, out: &mut Local) {
        (**self).eval(step, t, x, order, out)
    }
    fn psi(&self, x: &[f64]) -> f64 {
        (**self).psi(x)
    }
    fn psi_gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).psi_gradient(x, out)
    }
}

/// Drift of the characteristics at (step, t, y).
pub fn beta(coeffs: &dyn CoefficientField, step: usize, t: f64, y: &[f64]) -> Vec<f64> {
    let mut local = Local::new(coeffs.dim(), coeffs.modes());
    coeffs.eval(step, t, y, Order::Gradients, &mut local);
    let mut out = vec![0.0; coeffs.dim()];
    local.beta(&mut out);
    out
}

pub fn c_bar(coeffs: &dyn CoefficientField, step: usize, t: f64, x: &[f64]) -> f64 {
    let mut local = Local::new(coeffs.dim(), coeffs.modes());
    coeffs.eval(step, t, x, Order::Gradients, &mut local);
    local.c_bar()
}

pub fn f_bar(coeffs: &dyn CoefficientField, step: usize, t: f64, x: &[f64]) -> f64 {
    let mut local = Local::new(coeffs.dim(), coeffs.modes());
    coeffs.eval(step, t, x, Order::Gradients, &mut local);
    local.f_bar()
}

/// Replaces analytic first derivatives by central differences of the values.
/// Second derivatives are not provided.
pub struct CentralDifference<C> {
    inner: C,
    h: Option<f64>,
}

impl<C: CoefficientField> CentralDifference<C> {
    /// `h = None` uses the step 1e-5 * (1 + |x|).
    pub fn new(inner: C, h: Option<f64>) -> Self {
        Self { inner, h }
    }

    fn step(&self, x: &[f64]) -> f64 {
        self.h.unwrap_or_else(|| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            1e-5 * (1.0 + norm)
        })
    }
}

impl<C: CoefficientField> CoefficientField for CentralDifference<C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn modes(&self) -> usize {
        self.inner.modes()
    }
    fn has_hessians(&self) -> bool {
        false
    }

    fn eval(&self, step: usize, t: f64, x: &[f64], order: Order, out: &mut Local) {
        self.inner.eval(step, t, x, Order::Values, out);
        if order == Order::Values {
            return;
        }
        let (d, m) = (out.d, out.m);
        let h = self.step(x);
        let mut plus = Local::new(d, m);
        let mut minus = Local::new(d, m);
        let mut y = x.to_vec();
        for l in 0..d {
            y[l] = x[l] + h;
            self.inner.eval(step, t, &y, Order::Values, &mut plus);
            y[l] = x[l] - h;
            self.inner.eval(step, t, &y, Order::Values, &mut minus);
            y[l] = x[l];
            let diff = |p: f64, q: f64| (p - q) / (2.0 * h);
            for i in 0..d {
                for k in 0..m {
                    out.dsigma[(l * d + i) * m + k] =
                        diff(plus.sigma[i * m + k], minus.sigma[i * m + k]);
                }
                for r in 0..d {
                    out.drho[(l * d + i) * d + r] = diff(plus.rho[i * d + r], minus.rho[i * d + r]);
                }
                out.db[l * d + i] = diff(plus.b[i], minus.b[i]);
            }
            for k in 0..m {
                out.dmu[l * m + k] = diff(plus.mu[k], minus.mu[k]);
                out.dg[l * m + k] = diff(plus.g[k], minus.g[k]);
            }
            out.df[l] = diff(plus.f, minus.f);
        }
    }

    fn psi(&self, x: &[f64]) -> f64 {
        self.inner.psi(x)
    }
}

/// `base + scale * delta`, field by field (coefficients and data).
pub struct Perturbed<A, B> {
    pub base: A,
    pub delta: B,
    pub scale: f64,
}

impl<A: CoefficientField, B: CoefficientField> CoefficientField for Perturbed<A, B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn modes(&self) -> usize {
        self.base.modes()
    }
    fn has_hessians(&self) -> bool {
        self.base.has_hessians() && self.delta.has_hessians()
    }
    fn eval(&self, step: usize, t: f64, x: &[f64], order: Order, out: &mut Local) {
        self.base.eval(step, t, x, order, out);
        if self.scale != 0.0 {
            let mut extra = Local::new(out.d, out.m);
            self.delta.eval(step, t, x, order, &mut extra);
            out.add_scaled(&extra, self.scale);
        }
    }
    fn psi(&self, x: &[f64]) -> f64 {
        self.base.psi(x) + self.scale * self.delta.psi(x)
    }
}
