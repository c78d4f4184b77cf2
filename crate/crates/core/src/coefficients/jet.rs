//! Second-order jets (value, gradient, Hessian) of the scalar profiles the
//! builtin families are assembled from. The dimension is a const parameter so
//! that one-dimensional evaluations carry three numbers, not twenty-one.

use crate::scenario::DomainSpec;

use super::MAX_DIM;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const D: usize> {
    pub v: f64,
    pub g: [f64; D],
    pub h: [[f64; D]; D],
}

/// Jet padded to the largest supported dimension.
pub type WideJet = Jet<MAX_DIM>;

impl<const D: usize> Jet<D> {
    pub const ZERO: Jet<D> = Jet {
        v: 0.0,
        g: [0.0; D],
        h: [[0.0; D]; D],
    };

    #[inline]
    pub fn constant(v: f64) -> Self {
        Jet { v, ..Self::ZERO }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.v *= s;
        for l in 0..D {
            out.g[l] *= s;
            for p in 0..D {
                out.h[p][l] *= s;
            }
        }
        out
    }

    /// Product rule up to second order.
    #[inline]
    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::ZERO;
        out.v = self.v * o.v;
        for l in 0..D {
            out.g[l] = self.v * o.g[l] + o.v * self.g[l];
            for p in 0..D {
                out.h[p][l] = self.v * o.h[p][l]
                    + o.v * self.h[p][l]
                    + self.g[p] * o.g[l]
                    + o.g[p] * self.g[l];
            }
        }
        out
    }

    #[inline]
    pub fn add(&self, o: &Self) -> Self {
        let mut out = *self;
        out.v += o.v;
        for l in 0..D {
            out.g[l] += o.g[l];
            for p in 0..D {
                out.h[p][l] += o.h[p][l];
            }
        }
        out
    }

    /// Same jet padded with zeros to dimension `E >= D`.
    pub fn widen<const E: usize>(&self) -> Jet<E> {
        let mut out = Jet::<E>::constant(self.v);
        for l in 0..D {
            out.g[l] = self.g[l];
            for p in 0..D {
                out.h[p][l] = self.h[p][l];
            }
        }
        out
    }
}

/// C-infinity bump exp(1 - 1/(1 - r^2)), r = |x - center| / width; equals 1 at
/// the centre and vanishes for r >= 1.
#[inline]
pub fn bump<const D: usize>(x: &[f64], center: &[f64], width: f64) -> Jet<D> {
    let w2 = width * width;
    let mut u = [0.0; D];
    let mut r2 = 0.0;
    for i in 0..D {
        u[i] = x[i] - center[i];
        r2 += u[i] * u[i];
    }
    r2 /= w2;
    if r2 >= 1.0 {
        return Jet::ZERO;
    }
    let q = 1.0 - r2;
    let phi = (1.0 - 1.0 / q).exp();
    let a = -2.0 / (w2 * q * q);
    let b = -8.0 / (w2 * w2 * q * q * q);
    let mut out = Jet::constant(phi);
    for i in 0..D {
        out.g[i] = phi * a * u[i];
        for j in 0..D {
            let delta = if i == j { a } else { 0.0 };
            out.h[i][j] = phi * (a * a * u[i] * u[j] + b * u[i] * u[j] + delta);
        }
    }
    out
}

/// exp(-|x - center|^2 / (2 width^2)).
#[inline]
pub fn gaussian<const D: usize>(x: &[f64], center: &[f64], width: f64) -> Jet<D> {
    let w2 = width * width;
    let mut u = [0.0; D];
    let mut r2 = 0.0;
    for i in 0..D {
        u[i] = x[i] - center[i];
        r2 += u[i] * u[i];
    }
    let phi = (-0.5 * r2 / w2).exp();
    let mut out = Jet::constant(phi);
    for i in 0..D {
        out.g[i] = -phi * u[i] / w2;
        for j in 0..D {
            let delta = if i == j { 1.0 / w2 } else { 0.0 };
            out.h[i][j] = phi * (u[i] * u[j] / (w2 * w2) - delta);
        }
    }
    out
}

/// sin(freq * x[axis] + phase).
#[inline]
pub fn sin_axis<const D: usize>(x: &[f64], axis: usize, freq: f64, phase: f64) -> Jet<D> {
    let arg = freq * x[axis] + phase;
    let (s, c) = arg.sin_cos();
    let mut out = Jet::constant(s);
    out.g[axis] = freq * c;
    out.h[axis][axis] = -freq * freq * s;
    out
}

/// cos(freq * x[axis] + phase).
#[inline]
pub fn cos_axis<const D: usize>(x: &[f64], axis: usize, freq: f64, phase: f64) -> Jet<D> {
    sin_axis(x, axis, freq, phase + std::f64::consts::FRAC_PI_2)
}

/// Product over axes of sin(pi (x_i - lo_i) / (hi_i - lo_i)): the first
/// Dirichlet eigenfunction of the box.
pub fn box_sine<const D: usize>(x: &[f64], lo: &[f64], hi: &[f64]) -> Jet<D> {
    let mut out = Jet::constant(1.0);
    for axis in 0..D {
        let k = std::f64::consts::PI / (hi[axis] - lo[axis]);
        let factor = sin_axis(x, axis, k, -k * lo[axis]);
        out = out.mul(&factor);
    }
    out
}

fn smoothstep(s: f64) -> (f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    )
}

/// C^2 cut-off: 1 on D^{1/2}, 0 outside D^1, quintic smoothstep in between.
/// Identically 1 for the whole space.
pub fn cutoff<const D: usize>(domain: &DomainSpec, x: &[f64]) -> Jet<D> {
    let dist = match domain {
        DomainSpec::WholeSpace { .. } => return Jet::constant(1.0),
        _ => -domain.signed_distance(x),
    };
    if dist <= 0.5 {
        return Jet::constant(1.0);
    }
    if dist >= 1.0 {
        return Jet::ZERO;
    }
    let s = 2.0 * (dist - 0.5);
    let (sv, s1, s2) = smoothstep(s);

    // gradient and Hessian of the distance function outside D
    let mut grad = [0.0; D];
    let mut hess = [[0.0; D]; D];
    match domain {
        DomainSpec::Interval { a, .. } => {
            grad[0] = if x[0] < *a { -1.0 } else { 1.0 };
        }
        DomainSpec::Ball { center, .. } => {
            let r: f64 = (0..D).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>().sqrt();
            for i in 0..D {
                grad[i] = (x[i] - center[i]) / r;
            }
            for i in 0..D {
                for j in 0..D {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    hess[i][j] = (delta - grad[i] * grad[j]) / r;
                }
            }
        }
        DomainSpec::WholeSpace { .. } => unreachable!(),
    }
    let mut out = Jet::constant(1.0 - sv);
    for i in 0..D {
        out.g[i] = -2.0 * s1 * grad[i];
        for j in 0..D {
            out.h[i][j] = -4.0 * s2 * grad[i] * grad[j] - 2.0 * s1 * hess[i][j];
        }
    }
    out
}
