//! Builtin coefficient families and data profiles.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::jet::{self, Jet, WideJet};
use super::{CoefficientField, Local, Order, MAX_DIM};
use crate::error::{Error, Result};
use crate::noise::WienerPath;
use crate::scenario::DomainSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Zero,
    #[default]
    Constant,
    SmoothBump,
    Trig,
    AdaptedPiecewise,
}

impl FromStr for FamilyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => FamilyName::Zero,
            "constant" => FamilyName::Constant,
            "smooth_bump" => FamilyName::SmoothBump,
            "trig" => FamilyName::Trig,
            "adapted_piecewise" => FamilyName::AdaptedPiecewise,
            other => return Err(Error::Validation(format!("unknown family: {other}"))),
        })
    }
}

/// Family selection and parameters, as written in the `[coefficients]` table.
///
/// * `constant`: `sigma^{ik} = sigma` for i = k mod d, `rho = rho I`, `b^i = b`,
///   `c`, `mu^k = mu`.
/// * `smooth_bump`: as `constant` with sigma, mu and b multiplied by a bump of
///   the given `center` and `width`; rho and c stay constant.
/// * `trig`: `sigma^{ik} = sigma sin(freq x_i + time_freq t)`,
///   `rho^{ii} = rho (1 + cos(freq x_i) / 4)`, `b^i = b cos(freq x_i)`,
///   `c = c cos(freq x_0)`, `mu^k = mu cos(freq x_i + time_freq t)`.
/// * `adapted_piecewise`: the `base` family with sigma, b, c, mu, f and g
///   multiplied on every block of `block` steps by `1 + amplitude tanh(w^1)`,
///   where w^1 is read at the first node of the block.
///
/// Every field is finally multiplied by a C^2 cut-off that is 1 within
/// distance 1/2 of D and 0 beyond distance 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientSpec {
    pub family: FamilyName,
    pub sigma: f64,
    pub rho: f64,
    pub b: f64,
    pub c: f64,
    pub mu: f64,
    pub width: f64,
    pub freq: f64,
    pub time_freq: f64,
    pub base: FamilyName,
    pub amplitude: f64,
    pub block: usize,
    pub center: Option<Vec<f64>>,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            family: FamilyName::Zero,
            sigma: 0.0,
            rho: 0.0,
            b: 0.0,
            c: 0.0,
            mu: 0.0,
            width: 1.0,
            freq: PI,
            time_freq: 0.0,
            base: FamilyName::Constant,
            amplitude: 0.5,
            block: 1,
            center: None,
        }
    }
}

/// Spatial profile of a data field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataProfile {
    Zero,
    Constant {
        value: f64,
    },
    Bump {
        amplitude: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        width: f64,
    },
    Gaussian {
        amplitude: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        width: f64,
    },
    /// Product of sin(pi (x_i - lo_i)/(hi_i - lo_i)) over the bounding box of D.
    Sine {
        amplitude: f64,
    },
}

impl Default for DataProfile {
    fn default() -> Self {
        DataProfile::Zero
    }
}

impl DataProfile {
    fn amplitude(&self) -> f64 {
        match self {
            DataProfile::Zero => 0.0,
            DataProfile::Constant { value } => value.abs(),
            DataProfile::Bump { amplitude, .. }
            | DataProfile::Gaussian { amplitude, .. }
            | DataProfile::Sine { amplitude } => amplitude.abs(),
        }
    }

    fn validate(&self, name: &str, d: usize) -> Result<()> {
        let (center, width) = match self {
            DataProfile::Bump { center, width, .. } | DataProfile::Gaussian { center, width, .. } => {
                (center.as_ref(), Some(*width))
            }
            _ => (None, None),
        };
        if let Some(w) = width {
            if !(w > 0.0) {
                return Err(Error::Validation(format!("{name}: width must be positive")));
            }
        }
        if let Some(c) = center {
            if c.len() != d {
                return Err(Error::Validation(format!(
                    "{name}: center has {} components, domain dimension is {d}",
                    c.len()
                )));
            }
        }
        if !self.amplitude().is_finite() {
            return Err(Error::Validation(format!("{name}: amplitude must be finite")));
        }
        Ok(())
    }

    /// Profile jet without the cut-off.
    pub fn jet(&self, domain: &DomainSpec, x: &[f64]) -> WideJet {
        let geo = Geometry::of(domain);
        match x.len() {
            1 => self.jet_in::<1>(&geo, x).widen(),
            2 => self.jet_in::<2>(&geo, x).widen(),
            3 => self.jet_in::<3>(&geo, x).widen(),
            _ => self.jet_in::<MAX_DIM>(&geo, x),
        }
    }

    #[inline]
    fn jet_in<const D: usize>(&self, geo: &Geometry, x: &[f64]) -> Jet<D> {
        match self {
            DataProfile::Zero => Jet::ZERO,
            DataProfile::Constant { value } => Jet::constant(*value),
            DataProfile::Bump {
                amplitude,
                center,
                width,
            } => {
                let c = center.as_deref().unwrap_or(&geo.center[..D]);
                jet::bump(x, c, *width).scale(*amplitude)
            }
            DataProfile::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let c = center.as_deref().unwrap_or(&geo.center[..D]);
                jet::gaussian(x, c, *width).scale(*amplitude)
            }
            DataProfile::Sine { amplitude } => {
                jet::box_sine(x, &geo.lo[..D], &geo.hi[..D]).scale(*amplitude)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude() == 0.0
    }
}

/// Centre and bounding box of the domain, kept inline for evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Geometry {
    center: [f64; MAX_DIM],
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
}

impl Geometry {
    fn of(domain: &DomainSpec) -> Self {
        let d = domain.dim();
        let mut g = Geometry {
            center: [0.0; MAX_DIM],
            lo: [0.0; MAX_DIM],
            hi: [0.0; MAX_DIM],
        };
        let (lo, hi) = domain.bounding_box();
        g.center[..d].copy_from_slice(&domain.center());
        g.lo[..d].copy_from_slice(&lo);
        g.hi[..d].copy_from_slice(&hi);
        g
    }
}

/// Initial condition psi, forcing f, and noise forcing g (every g^k equals `g`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub psi: DataProfile,
    pub f: DataProfile,
    pub g: DataProfile,
}

impl DataSpec {
    pub fn is_zero(&self) -> bool {
        self.psi.is_zero() && self.f.is_zero() && self.g.is_zero()
    }
}

/// Validated family plus data on a fixed domain. Path-independent families
/// evaluate directly through [`CoefficientSet::realize_static`]; the adapted
/// family first needs the realized w path.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    domain: DomainSpec,
    modes: usize,
    spec: CoefficientSpec,
    data: DataSpec,
    center: [f64; MAX_DIM],
    geometry: Geometry,
}

/// Convenience constructor selecting the family by name.
pub fn builtin_family(
    name: &str,
    domain: DomainSpec,
    modes: usize,
    mut params: CoefficientSpec,
    data: DataSpec,
    k: f64,
) -> Result<CoefficientSet> {
    params.family = name.parse()?;
    CoefficientSet::new(domain, modes, params, data, k)
}

impl CoefficientSet {
    pub fn new(
        domain: DomainSpec,
        modes: usize,
        spec: CoefficientSpec,
        data: DataSpec,
        k: f64,
    ) -> Result<Self> {
        domain.validate()?;
        let d = domain.dim();
        let finite = [
            spec.sigma,
            spec.rho,
            spec.b,
            spec.c,
            spec.mu,
            spec.freq,
            spec.time_freq,
            spec.amplitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("coefficient parameters must be finite".into()));
        }
        if !(spec.width > 0.0) {
            return Err(Error::Validation("width must be positive".into()));
        }
        if let Some(c) = &spec.center {
            if c.len() != d {
                return Err(Error::Validation(format!(
                    "center has {} components, domain dimension is {d}",
                    c.len()
                )));
            }
        }
        let mut modulation = 1.0;
        if spec.family == FamilyName::AdaptedPiecewise {
            if spec.base == FamilyName::AdaptedPiecewise {
                return Err(Error::Validation("adapted_piecewise cannot wrap itself".into()));
            }
            if modes == 0 {
                return Err(Error::Validation("adapted_piecewise needs at least one mode".into()));
            }
            if spec.block == 0 {
                return Err(Error::Validation("block must be at least 1".into()));
            }
            if !(spec.amplitude.abs() < 1.0) {
                return Err(Error::Validation("adapted amplitude must lie in (-1, 1)".into()));
            }
            modulation = 1.0 + spec.amplitude.abs();
        }
        let family = effective_family(&spec);
        let trig_rho = if family == FamilyName::Trig { 1.25 } else { 1.0 };
        let bounds = [
            ("sigma", spec.sigma.abs() * modulation),
            ("rho", spec.rho.abs() * trig_rho),
            ("b", spec.b.abs() * modulation),
            ("c", spec.c.abs() * modulation),
            ("mu", spec.mu.abs() * modulation),
            ("psi", data.psi.amplitude()),
            ("f", data.f.amplitude() * modulation),
            ("g", data.g.amplitude() * modulation),
        ];
        if family != FamilyName::Zero {
            for (name, bound) in bounds {
                if bound > k {
                    return Err(Error::Validation(format!(
                        "{name} exceeds the coefficient bound K = {k} (sup {bound})"
                    )));
                }
            }
        } else {
            for (name, bound) in &bounds[5..] {
                if *bound > k {
                    return Err(Error::Validation(format!(
                        "{name} exceeds the coefficient bound K = {k} (sup {bound})"
                    )));
                }
            }
        }
        data.psi.validate("psi", d)?;
        data.f.validate("f", d)?;
        data.g.validate("g", d)?;
        let mut center = [0.0; MAX_DIM];
        let c = spec.center.clone().unwrap_or_else(|| domain.center());
        center[..d].copy_from_slice(&c);
        let geometry = Geometry::of(&domain);
        Ok(Self {
            domain,
            modes,
            spec,
            data,
            center,
            geometry,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn data(&self) -> &DataSpec {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn is_adapted(&self) -> bool {
        self.spec.family == FamilyName::AdaptedPiecewise
    }

    /// Same coefficients with different data.
    pub fn with_data(&self, data: DataSpec) -> CoefficientSet {
        CoefficientSet {
            data,
            ..self.clone()
        }
    }

    /// Evaluable field for a path-independent family.
    pub fn realize_static(&self) -> Result<Realized> {
        if self.is_adapted() {
            return Err(Error::Validation(
                "adapted_piecewise coefficients need a realized w path".into(),
            ));
        }
        Ok(Realized {
            set: self.clone(),
            kappa: Vec::new(),
        })
    }

    /// Evaluable field for the realized w path. The multiplier on step j depends
    /// only on w at the first node of j's block, so it is predictable.
    pub fn realize(&self, w: &WienerPath) -> Realized {
        let kappa = if self.is_adapted() {
            let block = self.spec.block;
            let n = w.grid().n_steps();
            let mut values = Vec::with_capacity(n);
            let mut w1 = 0.0f64;
            let mut held = 1.0;
            for step in 0..n {
                if step % block == 0 {
                    held = 1.0 + self.spec.amplitude * w1.tanh();
                }
                values.push(held);
                w1 += w.dw(step)[0];
            }
            values
        } else {
            Vec::new()
        };
        Realized {
            set: self.clone(),
            kappa,
        }
    }

    pub fn cutoff(&self, x: &[f64]) -> WideJet {
        match x.len() {
            1 => jet::cutoff::<1>(&self.domain, x).widen(),
            2 => jet::cutoff::<2>(&self.domain, x).widen(),
            3 => jet::cutoff::<3>(&self.domain, x).widen(),
            _ => jet::cutoff::<MAX_DIM>(&self.domain, x),
        }
    }

    pub fn psi_jet(&self, x: &[f64]) -> WideJet {
        self.data_jet(&self.data.psi, x)
    }

    pub fn f_jet(&self, x: &[f64]) -> WideJet {
        self.data_jet(&self.data.f, x)
    }

    pub fn g_jet(&self, x: &[f64]) -> WideJet {
        self.data_jet(&self.data.g, x)
    }

    fn data_jet(&self, profile: &DataProfile, x: &[f64]) -> WideJet {
        match x.len() {
            1 => self.data_jet_in::<1>(profile, x).widen(),
            2 => self.data_jet_in::<2>(profile, x).widen(),
            3 => self.data_jet_in::<3>(profile, x).widen(),
            _ => self.data_jet_in::<MAX_DIM>(profile, x),
        }
    }

    fn data_jet_in<const D: usize>(&self, profile: &DataProfile, x: &[f64]) -> Jet<D> {
        if let DataProfile::Zero = profile {
            return Jet::ZERO;
        }
        let chi = jet::cutoff::<D>(&self.domain, x);
        if chi.is_zero() {
            return Jet::ZERO;
        }
        profile.jet_in::<D>(&self.geometry, x).mul(&chi)
    }

    fn eval_scaled(&self, kappa: f64, t: f64, x: &[f64], order: Order, out: &mut Local) {
        match self.dim() {
            1 => self.eval_dim::<1>(kappa, t, x, order, out),
            2 => self.eval_dim::<2>(kappa, t, x, order, out),
            3 => self.eval_dim::<3>(kappa, t, x, order, out),
            _ => self.eval_dim::<MAX_DIM>(kappa, t, x, order, out),
        }
    }

    fn eval_dim<const D: usize>(&self, kappa: f64, t: f64, x: &[f64], order: Order, out: &mut Local) {
        out.clear();
        let d = D;
        let m = self.modes;
        // inside D^{1/2} the cut-off is identically one
        let flat = self.domain.is_whole_space() || self.domain.signed_distance(x) >= -0.5;
        let chi = if flat { Jet::constant(1.0) } else { jet::cutoff::<D>(&self.domain, x) };
        if !flat && chi.is_zero() {
            return;
        }
        let cut = |j: Jet<D>| if flat { j } else { j.mul(&chi) };
        let hess = order >= Order::Hessians;
        let grads = order >= Order::Gradients;
        let spec = &self.spec;
        let family = effective_family(spec);

        let bump = if family == FamilyName::SmoothBump {
            jet::bump(x, &self.center[..d], spec.width)
        } else {
            Jet::constant(1.0)
        };

        let mut put_sigma = |i: usize, k: usize, j: Jet<D>| {
            let j = scaled(cut(j), kappa);
            out.sigma[i * m + k] = j.v;
            if grads {
                for l in 0..d {
                    out.dsigma[(l * d + i) * m + k] = j.g[l];
                    if hess {
                        for p in 0..d {
                            out.d2sigma[((p * d + l) * d + i) * m + k] = j.h[p][l];
                        }
                    }
                }
            }
        };
        match family {
            FamilyName::Zero => {}
            FamilyName::Constant | FamilyName::AdaptedPiecewise => {
                if spec.sigma != 0.0 {
                    for k in 0..m {
                        put_sigma(k % d, k, Jet::constant(spec.sigma));
                    }
                }
            }
            FamilyName::SmoothBump => {
                if spec.sigma != 0.0 {
                    for k in 0..m {
                        put_sigma(k % d, k, bump.scale(spec.sigma));
                    }
                }
            }
            FamilyName::Trig => {
                if spec.sigma != 0.0 {
                    for k in 0..m {
                        let i = k % d;
                        let j = jet::sin_axis(x, i, spec.freq, spec.time_freq * t);
                        put_sigma(i, k, j.scale(spec.sigma));
                    }
                }
            }
        }

        if spec.rho != 0.0 && family != FamilyName::Zero {
            for i in 0..d {
                let base = if family == FamilyName::Trig {
                    jet::cos_axis(x, i, spec.freq, 0.0)
                        .scale(0.25)
                        .add(&Jet::constant(1.0))
                } else {
                    Jet::constant(1.0)
                };
                let j = cut(base.scale(spec.rho));
                out.rho[i * d + i] = j.v;
                if grads {
                    for l in 0..d {
                        out.drho[(l * d + i) * d + i] = j.g[l];
                        if hess {
                            for p in 0..d {
                                out.d2rho[((p * d + l) * d + i) * d + i] = j.h[p][l];
                            }
                        }
                    }
                }
            }
        }

        if spec.b != 0.0 && family != FamilyName::Zero {
            for i in 0..d {
                let base = if family == FamilyName::Trig {
                    jet::cos_axis(x, i, spec.freq, 0.0)
                } else {
                    bump
                };
                let j = scaled(cut(base), spec.b * kappa);
                out.b[i] = j.v;
                if grads {
                    for l in 0..d {
                        out.db[l * d + i] = j.g[l];
                    }
                }
            }
        }

        if spec.c != 0.0 && family != FamilyName::Zero {
            let base = if family == FamilyName::Trig {
                jet::cos_axis::<D>(x, 0, spec.freq, 0.0).v
            } else {
                1.0
            };
            out.c = base * chi.v * spec.c * kappa;
        }

        if spec.mu != 0.0 && family != FamilyName::Zero {
            for k in 0..m {
                let base = if family == FamilyName::Trig {
                    jet::cos_axis(x, k % d, spec.freq, spec.time_freq * t)
                } else {
                    bump
                };
                let j = scaled(cut(base), spec.mu * kappa);
                out.mu[k] = j.v;
                if grads {
                    for l in 0..d {
                        out.dmu[l * m + k] = j.g[l];
                    }
                }
            }
        }

        if !out.data {
            return;
        }
        if !self.data.f.is_zero() {
            let j = scaled(cut(self.data.f.jet_in::<D>(&self.geometry, x)), kappa);
            out.f = j.v;
            if grads {
                out.df[..d].copy_from_slice(&j.g[..d]);
            }
        }
        if m > 0 && !self.data.g.is_zero() {
            let j = scaled(cut(self.data.g.jet_in::<D>(&self.geometry, x)), kappa);
            for k in 0..m {
                out.g[k] = j.v;
                if grads {
                    for l in 0..d {
                        out.dg[l * m + k] = j.g[l];
                    }
                }
            }
        }
    }
}

#[inline]
fn scaled<const D: usize>(j: Jet<D>, s: f64) -> Jet<D> {
    if s == 1.0 {
        j
    } else {
        j.scale(s)
    }
}

fn effective_family(spec: &CoefficientSpec) -> FamilyName {
    if spec.family == FamilyName::AdaptedPiecewise {
        spec.base
    } else {
        spec.family
    }
}

/// A [`CoefficientSet`] bound to a realized w path (or to none, for
/// path-independent families).
#[derive(Clone, Debug)]
pub struct Realized {
    set: CoefficientSet,
    kappa: Vec<f64>,
}

impl Realized {
    pub fn set(&self) -> &CoefficientSet {
        &self.set
    }

    /// Multiplier applied on grid step `step`.
    pub fn modulation(&self, step: usize) -> f64 {
        match self.kappa.len() {
            0 => 1.0,
            n => self.kappa[step.min(n - 1)],
        }
    }
}

/// The adapted multiplier sequence on its own, for predictability checks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedModulation {
    pub block: usize,
    pub amplitude: f64,
    pub factors: Vec<f64>,
}

impl AdaptedModulation {
    pub fn of(realized: &Realized) -> Option<Self> {
        if !realized.set.is_adapted() {
            return None;
        }
        Some(Self {
            block: realized.set.spec.block,
            amplitude: realized.set.spec.amplitude,
            factors: realized.kappa.clone(),
        })
    }
}

impl CoefficientField for Realized {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn modes(&self) -> usize {
        self.set.modes
    }

    fn eval(&self, step: usize, t: f64, x: &[f64], order: Order, out: &mut Local) {
        self.set.eval_scaled(self.modulation(step), t, x, order, out);
    }

    fn psi(&self, x: &[f64]) -> f64 {
        self.set.psi_jet(x).v
    }

    fn psi_gradient(&self, x: &[f64], out: &mut [f64]) {
        let j = self.set.psi_jet(x);
        out.copy_from_slice(&j.g[..x.len()]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CentralDifference;
    use crate::noise::{NoisePlan, StreamId};
    use crate::scenario::{check_coercivity, coercivity_probes, TimeGrid};

    fn unit() -> DomainSpec {
        DomainSpec::Interval { a: 0.0, b: 1.0 }
    }

    fn disc() -> DomainSpec {
        DomainSpec::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
    }

    fn full_data() -> DataSpec {
        DataSpec {
            psi: DataProfile::Bump {
                amplitude: 1.0,
                center: None,
                width: 0.4,
            },
            f: DataProfile::Gaussian {
                amplitude: 0.5,
                center: None,
                width: 0.3,
            },
            g: DataProfile::Sine { amplitude: 0.3 },
        }
    }

    fn spec(family: FamilyName) -> CoefficientSpec {
        CoefficientSpec {
            family,
            sigma: 0.5,
            rho: 0.8,
            b: 0.3,
            c: -0.2,
            mu: 0.1,
            width: 0.8,
            time_freq: 1.0,
            ..CoefficientSpec::default()
        }
    }

    fn families() -> Vec<FamilyName> {
        vec![
            FamilyName::Zero,
            FamilyName::Constant,
            FamilyName::SmoothBump,
            FamilyName::Trig,
        ]
    }

    fn max_gradient_gap(field: &Realized, h: f64, probes: &[Vec<f64>]) -> f64 {
        let fd = CentralDifference::new(field.clone(), Some(h));
        let (d, m) = (field.dim(), field.modes());
        let mut a = Local::new(d, m);
        let mut b = Local::new(d, m);
        let mut gap = 0.0f64;
        for x in probes {
            field.eval(0, 0.1, x, Order::Gradients, &mut a);
            fd.eval(0, 0.1, x, Order::Gradients, &mut b);
            for (u, v) in a
                .dsigma
                .iter()
                .chain(&a.drho)
                .chain(&a.db)
                .chain(&a.dmu)
                .chain(&a.df)
                .chain(&a.dg)
                .zip(
                    b.dsigma
                        .iter()
                        .chain(&b.drho)
                        .chain(&b.db)
                        .chain(&b.dmu)
                        .chain(&b.df)
                        .chain(&b.dg),
                )
            {
                gap = gap.max((u - v).abs());
            }
        }
        gap
    }

    #[test]
    fn central_differences_converge_at_second_order() {
        for domain in [unit(), disc()] {
            let d = domain.dim();
            let probes: Vec<Vec<f64>> = (0..7)
                .map(|j| (0..d).map(|i| -0.8 + 0.37 * j as f64 + 0.11 * i as f64).collect())
                .collect();
            for family in families() {
                let set = CoefficientSet::new(domain.clone(), 2, spec(family), full_data(), 10.0)
                    .unwrap();
                let field = set.realize_static().unwrap();
                let coarse = max_gradient_gap(&field, 1e-3, &probes);
                let fine = max_gradient_gap(&field, 5e-4, &probes);
                if family == FamilyName::Zero && coarse == 0.0 {
                    continue;
                }
                let ratio = coarse / fine;
                assert!(coarse < 1e-3, "{family:?} gap {coarse}");
                assert!(ratio > 3.5 && ratio < 4.5, "{family:?} ratio {ratio}");
            }
        }
    }

    #[test]
    fn hessians_match_differences_of_gradients() {
        let set = CoefficientSet::new(disc(), 2, spec(FamilyName::Trig), full_data(), 10.0).unwrap();
        let field = set.realize_static().unwrap();
        let x = [0.3, -0.6];
        let h = 1e-6;
        let mut base = Local::new(2, 2);
        let mut p = Local::new(2, 2);
        let mut q = Local::new(2, 2);
        field.eval(0, 0.2, &x, Order::Hessians, &mut base);
        for l in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            field.eval(0, 0.2, &xp, Order::Gradients, &mut p);
            field.eval(0, 0.2, &xm, Order::Gradients, &mut q);
            for idx in 0..p.dsigma.len() {
                let fd = (p.dsigma[idx] - q.dsigma[idx]) / (2.0 * h);
                assert!((fd - base.d2sigma[l * 8 + idx]).abs() < 1e-6);
            }
            for idx in 0..p.drho.len() {
                let fd = (p.drho[idx] - q.drho[idx]) / (2.0 * h);
                assert!((fd - base.d2rho[l * 8 + idx]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fields_vanish_beyond_unit_distance() {
        for family in families() {
            let set =
                CoefficientSet::new(unit(), 2, spec(family), full_data(), 10.0).unwrap();
            let field = set.realize_static().unwrap();
            let mut out = Local::new(1, 2);
            for x in [-1.5, -1.01, 2.01, 2.5, 40.0] {
                field.eval(0, 0.0, &[x], Order::Hessians, &mut out);
                assert_eq!(out, Local::new(1, 2), "{family:?} at {x}");
                assert_eq!(field.psi(&[x]), 0.0);
            }
        }
    }

    #[test]
    fn zero_family_has_zero_drift() {
        let set = builtin_family("zero", disc(), 3, CoefficientSpec::default(), DataSpec::default(), 1.0)
            .unwrap();
        let field = set.realize_static().unwrap();
        assert_eq!(super::super::beta(&field, 0, 0.0, &[0.2, 0.1]), vec![0.0, 0.0]);
    }

    #[test]
    fn constant_rho_is_coercive() {
        let spec = CoefficientSpec {
            family: FamilyName::Constant,
            rho: 1.0,
            ..CoefficientSpec::default()
        };
        let set = CoefficientSet::new(unit(), 0, spec, DataSpec::default(), 10.0).unwrap();
        let field = set.realize_static().unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let report = check_coercivity(&field, &grid, &coercivity_probes(&unit(), &grid, 21), 1.0);
        assert!(report.passed(), "{report:?}");
        let weak = check_coercivity(&field, &grid, &coercivity_probes(&unit(), &grid, 21), 1.01);
        assert!(!weak.passed());
    }

    #[test]
    fn support_point_at_distance_one_and_a_half() {
        let set = builtin_family("smooth_bump", unit(), 1, spec(FamilyName::Zero), full_data(), 10.0)
            .unwrap();
        let field = set.realize_static().unwrap();
        let mut out = Local::new(1, 1);
        field.eval(0, 0.0, &[2.5], Order::Gradients, &mut out);
        assert_eq!(out.sup_norm(), 0.0);
    }

    #[test]
    fn unknown_family_and_unbounded_parameters() {
        let err = builtin_family("wavy", unit(), 1, CoefficientSpec::default(), DataSpec::default(), 1.0)
            .unwrap_err();
        assert!(err.to_string().contains("unknown family"), "{err}");
        let big = CoefficientSpec {
            family: FamilyName::Constant,
            sigma: 20.0,
            ..CoefficientSpec::default()
        };
        let err = CoefficientSet::new(unit(), 1, big, DataSpec::default(), 10.0).unwrap_err();
        assert!(err.to_string().contains("sigma exceeds"), "{err}");
    }

    #[test]
    fn adapted_modulation_is_predictable() {
        let spec = CoefficientSpec {
            family: FamilyName::AdaptedPiecewise,
            base: FamilyName::SmoothBump,
            block: 4,
            amplitude: 0.5,
            ..spec(FamilyName::Zero)
        };
        let set = CoefficientSet::new(unit(), 1, spec, full_data(), 10.0).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let plan = NoisePlan::new(11);
        let w = plan.sample_w(&grid, 1, StreamId::W(0));
        let field = set.realize(&w);
        let split = 13;
        let mut perturbed = w.clone();
        for step in split..grid.n_steps() {
            perturbed.dw_mut(step)[0] += 0.7;
        }
        let other = set.realize(&perturbed);
        let mut a = Local::new(1, 1);
        let mut b = Local::new(1, 1);
        for step in 0..=split {
            for x in [0.1, 0.5, 0.93, 1.4] {
                let t = grid.node(step);
                field.eval(step, t, &[x], Order::Hessians, &mut a);
                other.eval(step, t, &[x], Order::Hessians, &mut b);
                assert_eq!(a, b);
            }
        }
        let modulation = AdaptedModulation::of(&field).unwrap();
        assert!(modulation.factors.chunks(4).all(|c| c.iter().all(|v| *v == c[0])));
        assert_eq!(modulation.factors[0], 1.0);
        assert!(modulation.factors.iter().any(|v| *v != 1.0));
        assert!(AdaptedModulation::of(&set.with_data(DataSpec::default()).realize(&w)).is_some());
    }

    #[test]
    fn adapted_requires_path() {
        let spec = CoefficientSpec {
            family: FamilyName::AdaptedPiecewise,
            ..CoefficientSpec::default()
        };
        let set = CoefficientSet::new(unit(), 1, spec, DataSpec::default(), 10.0).unwrap();
        assert!(set.realize_static().is_err());
        assert!(CoefficientSet::new(unit(), 0, set.spec().clone(), DataSpec::default(), 10.0).is_err());
    }
}
