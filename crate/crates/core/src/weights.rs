//! Weight processes along a characteristic z_s = Y_{0,s}(y):
//!
//! ```text
//! d eta = c_bar eta dt + mu^k eta dw^k,                 eta_0 = 1
//! d U   = (c_bar U + f_bar) dt + (mu^k U + g^k) dw^k,    U_0 = 0
//! ```
//!
//! `eta = exp(phi)` with the log-weight phi stepped by Euler. U is stepped as
//! `U_{i+1} = (eta_{i+1}/eta_i) U_i + f_bar dt + g . dw`, which is consistent
//! with the U equation and composes exactly across a split of the grid.
//!
//! The tilde processes (inverses of eta and of U/eta) are only needed for
//! identity checks.

use crate::coefficients::{CoefficientField, Local, Order};
use crate::error::{Error, Result};
use crate::flow::{Characteristics, Observer, Recorder};
use crate::noise::WienerPath;
use crate::scenario::TimeGrid;

/// Discretization of the tilde processes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TildeScheme {
    /// Euler on log(eta_tilde). Along a shared trajectory this is exactly -phi,
    /// so eta * eta_tilde = 1 up to rounding.
    #[default]
    LogEuler,
    /// Euler on eta_tilde itself; eta * eta_tilde - 1 is a genuine
    /// discretization error.
    Euler,
    /// Euler plus the second-order Ito term of the multiplicative noise; the
    /// noise commutes, so no Levy areas are needed.
    Milstein,
}

/// eta, phi, U and optionally the tilde processes on the nodes of a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightPaths {
    pub phi: Vec<f64>,
    pub eta: Vec<f64>,
    pub u: Vec<f64>,
    pub eta_tilde: Vec<f64>,
    pub u_tilde: Vec<f64>,
}

impl WeightPaths {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// max_s |eta_s eta_tilde_s - 1|
    pub fn inversion_gap_eta(&self) -> f64 {
        self.eta
            .iter()
            .zip(&self.eta_tilde)
            .map(|(a, b)| (a * b - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// max_s |U_tilde_s + U_s eta_tilde_s|
    pub fn inversion_gap_u(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.u_tilde)
            .zip(&self.eta_tilde)
            .map(|((u, ut), et)| (ut + u * et).abs())
            .fold(0.0, f64::max)
    }
}

/// Accumulates the weights step by step; plugs into a flow integration as an
/// [`Observer`] so that the coefficients are evaluated once per step.
#[derive(Clone, Debug)]
pub struct WeightAccumulator {
    dt: f64,
    tilde: Option<TildeScheme>,
    pub paths: WeightPaths,
    failed_at: Option<usize>,
}

impl WeightAccumulator {
    pub fn new(dt: f64, tilde: Option<TildeScheme>) -> Self {
        Self {
            dt,
            tilde,
            paths: WeightPaths::default(),
            failed_at: None,
        }
    }

    pub fn reset(&mut self) {
        let p = &mut self.paths;
        p.phi.clear();
        p.eta.clear();
        p.u.clear();
        p.eta_tilde.clear();
        p.u_tilde.clear();
        p.phi.push(0.0);
        p.eta.push(1.0);
        p.u.push(0.0);
        if self.tilde.is_some() {
            p.eta_tilde.push(1.0);
            p.u_tilde.push(0.0);
        }
        self.failed_at = None;
    }

    /// Step index at which a non-finite weight appeared, if any.
    pub fn failed_at(&self) -> Option<usize> {
        self.failed_at
    }

    pub fn check(&self) -> Result<()> {
        match self.failed_at {
            Some(step) => Err(Error::NonFinite { step, seed: 0 }),
            None => Ok(()),
        }
    }

    /// Advances by one step using the coefficients at the current node.
    pub fn advance(&mut self, step: usize, local: &Local, dw: &[f64]) {
        let dt = self.dt;
        let c_bar = local.c_bar();
        let f_bar = local.f_bar();
        let mu_sq = local.mu_squared();
        let mu_dw: f64 = local.mu.iter().zip(dw).map(|(a, b)| a * b).sum();
        let g_dw: f64 = local.g.iter().zip(dw).map(|(a, b)| a * b).sum();

        let p = &mut self.paths;
        let phi = *p.phi.last().unwrap();
        let u = *p.u.last().unwrap();
        let increment = (c_bar - 0.5 * mu_sq) * dt + mu_dw;
        let next_phi = phi + increment;
        let next_u = increment.exp() * u + f_bar * dt + g_dw;
        p.phi.push(next_phi);
        p.eta.push(next_phi.exp());
        p.u.push(next_u);

        if let Some(scheme) = self.tilde {
            let et = *p.eta_tilde.last().unwrap();
            let ut = *p.u_tilde.last().unwrap();
            let next_et = match scheme {
                TildeScheme::LogEuler => (et.ln() - increment).exp(),
                TildeScheme::Euler => et * (1.0 + (-c_bar + mu_sq) * dt - mu_dw),
                TildeScheme::Milstein => {
                    et * (1.0 + (-c_bar + mu_sq) * dt - mu_dw + 0.5 * (mu_dw * mu_dw - mu_sq * dt))
                }
            };
            let drift = -local.f + local.sigma_dg() + local.g_dot_mu();
            p.eta_tilde.push(next_et);
            p.u_tilde.push(ut + drift * et * dt - g_dw * et);
        }
        if self.failed_at.is_none() && !(next_phi.is_finite() && next_u.is_finite()) {
            self.failed_at = Some(step + 1);
        }
    }
}

impl Observer for WeightAccumulator {
    fn begin(&mut self, _start: usize) {
        self.reset();
    }

    fn step(&mut self, i: usize, local: &Local, dw: &[f64]) {
        self.advance(i, local, dw);
    }
}

/// Weights along a stored trajectory (`nodes x d`, starting at window node
/// `start`), with coefficients evaluated at the trajectory's nodes.
pub fn integrate_weights<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    start: usize,
    trajectory: &[f64],
    tilde: Option<TildeScheme>,
) -> Result<WeightPaths> {
    let d = ch.dim();
    let nodes = trajectory.len() / d;
    if nodes == 0 || start + nodes - 1 > ch.steps() {
        return Err(Error::GridMismatch("trajectory does not fit the noise window".into()));
    }
    let mut acc = WeightAccumulator::new(ch.clock().dt(), tilde);
    acc.reset();
    let mut local = crate::coefficients::Local::new(d, ch.modes());
    for s in 0..nodes - 1 {
        let i = start + s;
        ch.coeffs().eval(
            ch.offset() + i,
            ch.time(i),
            &trajectory[s * d..(s + 1) * d],
            Order::Gradients,
            &mut local,
        );
        acc.advance(i, &local, ch.noise().dw(i));
    }
    acc.check()?;
    Ok(acc.paths)
}

/// (eta, phi) along a trajectory from window node 0.
pub fn integrate_eta<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    trajectory: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = integrate_weights(ch, 0, trajectory, None)?;
    Ok((w.eta, w.phi))
}

pub fn integrate_u<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    trajectory: &[f64],
) -> Result<Vec<f64>> {
    Ok(integrate_weights(ch, 0, trajectory, None)?.u)
}

/// (eta_tilde, U_tilde) along a trajectory from window node 0.
pub fn integrate_tilde<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    trajectory: &[f64],
    scheme: TildeScheme,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = integrate_weights(ch, 0, trajectory, Some(scheme))?;
    Ok((w.eta_tilde, w.u_tilde))
}

/// Integrates the trajectory from `y` at window node `start` to the end of the
/// window together with its weights.
pub fn characteristic_with_weights<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    start: usize,
    y: &[f64],
    tilde: Option<TildeScheme>,
) -> Result<(Vec<f64>, WeightPaths)> {
    struct Both<'r> {
        rec: &'r mut Recorder,
        acc: &'r mut WeightAccumulator,
    }
    impl Observer for Both<'_> {
        fn begin(&mut self, start: usize) {
            self.rec.begin(start);
            self.acc.begin(start);
        }
        fn node(&mut self, i: usize, z: &[f64]) {
            self.rec.node(i, z);
        }
        fn step(&mut self, i: usize, local: &Local, dw: &[f64]) {
            self.acc.step(i, local, dw);
        }
    }
    let mut rec = Recorder::default();
    let mut acc = WeightAccumulator::new(ch.clock().dt(), tilde);
    let mut ws = ch.workspace();
    let mut z = y.to_vec();
    ch.integrate(
        &mut z,
        start,
        ch.steps(),
        None,
        &mut Both {
            rec: &mut rec,
            acc: &mut acc,
        },
        &mut ws,
        0,
    )?;
    acc.check()?;
    Ok((rec.states, acc.paths))
}

/// Maximum relative deviations in the concatenation identities
///
/// ```text
/// eta_t(y) = eta1_{t1}(y) eta2_t(Y_{0,t1}(y))
/// U_t(y)   = U2_t(Y_{0,t1}(y)) + U1_{t1}(y) eta_t(y) / eta_{t1}(y)
/// ```
///
/// over the nodes t in [t1, T].
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatenationReport {
    pub split: usize,
    pub eta_deviation: f64,
    pub u_deviation: f64,
    pub flow_deviation: f64,
}

impl ConcatenationReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.eta_deviation <= tolerance && self.u_deviation <= tolerance && self.flow_deviation <= tolerance
    }
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Integrates the pieces on [0, t1] and [t1, T] with restricted noise and
/// compares with the full integration.
pub fn concatenation_check<C: CoefficientField + ?Sized>(
    coeffs: &C,
    path: &WienerPath,
    split: usize,
    y: &[f64],
) -> Result<ConcatenationReport> {
    let grid: TimeGrid = *path.grid();
    let n = grid.n_steps();
    if split > n {
        return Err(Error::Index(format!("split node {split} beyond {n}")));
    }
    let d = coeffs.dim();
    let full = Characteristics::new(coeffs, path)?;
    let (traj, weights) = characteristic_with_weights(&full, 0, y, None)?;

    let (z1, eta1, u1) = if split == 0 {
        (y.to_vec(), 1.0, 0.0)
    } else {
        let first = path.restrict(0, split)?;
        let ch = Characteristics::windowed(coeffs, grid, 0, &first)?;
        let (t1, w1) = characteristic_with_weights(&ch, 0, y, None)?;
        (t1[split * d..].to_vec(), w1.eta[split], w1.u[split])
    };
    let (traj2, w2) = if split == n {
        (z1.clone(), WeightPaths {
            phi: vec![0.0],
            eta: vec![1.0],
            u: vec![0.0],
            ..WeightPaths::default()
        })
    } else {
        let second = path.restrict(split, n)?;
        let ch = Characteristics::windowed(coeffs, grid, split, &second)?;
        characteristic_with_weights(&ch, 0, &z1, None)?
    };

    let mut report = ConcatenationReport {
        split,
        eta_deviation: 0.0,
        u_deviation: 0.0,
        flow_deviation: 0.0,
    };
    let eta_split = weights.eta[split];
    for (s, node) in (split..=n).enumerate() {
        let eta = weights.eta[node];
        let composed_eta = eta1 * w2.eta[s];
        report.eta_deviation = report.eta_deviation.max(relative_gap(eta, composed_eta));
        let composed_u = w2.u[s] + u1 * eta / eta_split;
        report.u_deviation = report.u_deviation.max(relative_gap(weights.u[node], composed_u));
        for l in 0..d {
            report.flow_deviation = report
                .flow_deviation
                .max(relative_gap(traj[node * d + l], traj2[s * d + l]));
        }
    }
    Ok(report)
}
