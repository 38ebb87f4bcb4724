//! Moduli of continuity, their Dini integrals `∫_a^b ω(s) ds/s`, and the
//! composite modulus
//!
//! ```text
//! ω̃(t) = t · (a + ∫_t^b ω₁(s) ds/s) · exp(c · ∫_t^b ω₂(s) ds/s)
//! ```
//!
//! together with the radius `t̃₀` below which it is certified to be strictly
//! increasing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{adaptive_gk, QuadratureError};

/// Default relative tolerance of Dini integrals computed by quadrature.
pub const DEFAULT_DINI_RTOL: f64 = 1e-10;
const DINI_MAX_EVALS: usize = 400_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulusError {
    #[error("modulus evaluated at t = {t} outside its domain [0, {t0})")]
    Domain { t: f64, t0: f64 },
    #[error("Dini integral over [{a}, {b}] is not inside (0, {t0}) with a <= b")]
    Interval { a: f64, b: f64, t0: f64 },
    #[error("invalid modulus parameter: {0}")]
    Parameter(String),
    #[error("no t in (0, {b}) satisfies ω₁(t)/a + c·ω₂(t) <= 1/2")]
    Infeasible { b: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Serializable description of a modulus, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusSpec {
    Constant {
        #[serde(rename = "L")]
        value: f64,
        t0: f64,
    },
    Power {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        t0: f64,
    },
    Log {
        #[serde(default = "one")]
        c: f64,
        t0: f64,
    },
    Table {
        t: Vec<f64>,
        w: Vec<f64>,
    },
    Composite {
        a: f64,
        b: f64,
        c: f64,
        omega1: Box<ModulusSpec>,
        omega2: Box<ModulusSpec>,
    },
    Sum {
        terms: Vec<ModulusSpec>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Constant(f64),
    Power { alpha: f64, scale: f64 },
    Log { c: f64 },
    Table { t: Vec<f64>, w: Vec<f64> },
    Composite(Box<CompositeModulus>),
    Sum(Vec<Modulus>),
}

/// An evaluable modulus of continuity on `[0, t0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    kind: Kind,
    t0: f64,
}

fn check_t0(t0: f64) -> Result<(), ModulusError> {
    if t0.is_finite() && t0 > 0.0 {
        Ok(())
    } else {
        Err(ModulusError::Parameter(format!("t0 must be positive and finite, got {t0}")))
    }
}

impl Modulus {
    /// `ω ≡ L`. Models the Lipschitz limit; does not vanish at 0 unless `L = 0`.
    pub fn constant(value: f64, t0: f64) -> Result<Self, ModulusError> {
        check_t0(t0)?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(ModulusError::Parameter(format!("constant L must be >= 0, got {value}")));
        }
        Ok(Self { kind: Kind::Constant(value), t0 })
    }

    /// `ω(t) = scale · t^α`.
    pub fn power(alpha: f64, scale: f64, t0: f64) -> Result<Self, ModulusError> {
        check_t0(t0)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModulusError::Parameter(format!("power alpha must be > 0, got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ModulusError::Parameter(format!("power scale must be > 0, got {scale}")));
        }
        Ok(Self { kind: Kind::Power { alpha, scale }, t0 })
    }

    /// `ω(t) = c / |ln t|`, defined on `[0, t0)` with `t0 <= 1`.
    pub fn log(c: f64, t0: f64) -> Result<Self, ModulusError> {
        check_t0(t0)?;
        if t0 > 1.0 {
            return Err(ModulusError::Parameter(format!("log modulus needs t0 <= 1, got {t0}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModulusError::Parameter(format!("log c must be > 0, got {c}")));
        }
        Ok(Self { kind: Kind::Log { c }, t0 })
    }

    /// Piecewise-linear modulus through `(t[i], w[i])`; `t0` is the last abscissa.
    pub fn table(t: Vec<f64>, w: Vec<f64>) -> Result<Self, ModulusError> {
        if t.len() != w.len() || t.len() < 2 {
            return Err(ModulusError::Parameter(
                "table needs at least two (t, w) samples of equal length".into(),
            ));
        }
        if t[0] != 0.0 || w[0] != 0.0 {
            return Err(ModulusError::Parameter("table must start at (0, 0)".into()));
        }
        if !t.windows(2).all(|p| p[0] < p[1]) {
            return Err(ModulusError::Parameter("table abscissae must be strictly increasing".into()));
        }
        if !w.windows(2).all(|p| p[0] <= p[1]) || w.iter().any(|v| !v.is_finite()) {
            return Err(ModulusError::Parameter("table values must be nondecreasing".into()));
        }
        let t0 = *t.last().unwrap();
        Ok(Self { kind: Kind::Table { t, w }, t0 })
    }

    pub fn composite(c: CompositeModulus) -> Self {
        let t0 = c.t_tilde0;
        Self { kind: Kind::Composite(Box::new(c)), t0 }
    }

    /// Pointwise sum; the domain is the intersection of the terms' domains.
    pub fn sum(terms: Vec<Modulus>) -> Result<Self, ModulusError> {
        if terms.is_empty() {
            return Err(ModulusError::Parameter("sum needs at least one term".into()));
        }
        let t0 = terms.iter().map(|m| m.t0).fold(f64::INFINITY, f64::min);
        Ok(Self { kind: Kind::Sum(terms), t0 })
    }

    pub fn from_spec(spec: &ModulusSpec) -> Result<Self, ModulusError> {
        match spec {
            ModulusSpec::Constant { value, t0 } => Self::constant(*value, *t0),
            ModulusSpec::Power { alpha, scale, t0 } => Self::power(*alpha, *scale, *t0),
            ModulusSpec::Log { c, t0 } => Self::log(*c, *t0),
            ModulusSpec::Table { t, w } => Self::table(t.clone(), w.clone()),
            ModulusSpec::Composite { a, b, c, omega1, omega2 } => {
                let w1 = Self::from_spec(omega1)?;
                let w2 = Self::from_spec(omega2)?;
                Ok(Self::composite(CompositeModulus::new(*a, *b, *c, w1, w2)?))
            }
            ModulusSpec::Sum { terms } => {
                Self::sum(terms.iter().map(Self::from_spec).collect::<Result<_, _>>()?)
            }
        }
    }

    pub fn to_spec(&self) -> ModulusSpec {
        let t0 = self.t0;
        match &self.kind {
            Kind::Constant(value) => ModulusSpec::Constant { value: *value, t0 },
            Kind::Power { alpha, scale } => ModulusSpec::Power { alpha: *alpha, scale: *scale, t0 },
            Kind::Log { c } => ModulusSpec::Log { c: *c, t0 },
            Kind::Table { t, w } => ModulusSpec::Table { t: t.clone(), w: w.clone() },
            Kind::Composite(c) => ModulusSpec::Composite {
                a: c.a,
                b: c.b,
                c: c.c,
                omega1: Box::new(c.omega1.to_spec()),
                omega2: Box::new(c.omega2.to_spec()),
            },
            Kind::Sum(terms) => ModulusSpec::Sum { terms: terms.iter().map(Self::to_spec).collect() },
        }
    }

    /// Right endpoint of the domain `[0, t0)`.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Short human-readable name of the kind.
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Constant(_) => "constant",
            Kind::Power { .. } => "power",
            Kind::Log { .. } => "log",
            Kind::Table { .. } => "table",
            Kind::Composite(_) => "composite",
            Kind::Sum(_) => "sum",
        }
    }

    /// False only for a constant kind with `L > 0` (or a sum containing one).
    pub fn vanishes_at_zero(&self) -> bool {
        match &self.kind {
            Kind::Constant(v) => *v == 0.0,
            Kind::Sum(terms) => terms.iter().all(Self::vanishes_at_zero),
            _ => true,
        }
    }

    /// Whether `∫_0 ω(s) ds/s` is finite.
    pub fn is_dini(&self) -> bool {
        match &self.kind {
            Kind::Constant(v) => *v == 0.0,
            Kind::Power { .. } | Kind::Table { .. } | Kind::Composite(_) => true,
            Kind::Log { .. } => false,
            Kind::Sum(terms) => terms.iter().all(Self::is_dini),
        }
    }

    pub fn has_closed_form_dini(&self) -> bool {
        match &self.kind {
            Kind::Composite(_) => false,
            Kind::Sum(terms) => terms.iter().all(Self::has_closed_form_dini),
            _ => true,
        }
    }

    /// `ω(t)` for `0 <= t < t0`.
    pub fn eval(&self, t: f64) -> Result<f64, ModulusError> {
        if !(t >= 0.0 && t < self.t0) {
            return Err(ModulusError::Domain { t, t0: self.t0 });
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Constant(v) => *v,
            Kind::Power { alpha, scale } => scale * t.powf(*alpha),
            Kind::Log { c } => {
                if t == 0.0 {
                    0.0
                } else {
                    c / (-t.ln())
                }
            }
            Kind::Table { t: ts, w } => {
                let i = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
                let (t1, t2) = (ts[i - 1], ts[i]);
                let (w1, w2) = (w[i - 1], w[i]);
                w1 + (w2 - w1) * (t - t1) / (t2 - t1)
            }
            Kind::Composite(c) => {
                if t == 0.0 {
                    0.0
                } else {
                    c.eval_formula(t).unwrap_or(f64::NAN)
                }
            }
            Kind::Sum(terms) => terms.iter().map(|m| m.eval_unchecked(t)).sum(),
        }
    }

    /// Analytic `ω'(t)` where available (`None` for table, composite, and
    /// sums containing those).
    pub fn derivative(&self, t: f64) -> Option<f64> {
        match &self.kind {
            Kind::Constant(_) => Some(0.0),
            Kind::Power { alpha, scale } => Some(scale * alpha * t.powf(alpha - 1.0)),
            Kind::Log { c } => {
                let l = -t.ln();
                Some(c / (t * l * l))
            }
            Kind::Sum(terms) => terms.iter().map(|m| m.derivative(t)).sum(),
            Kind::Table { .. } | Kind::Composite(_) => None,
        }
    }

    /// `∫_a^b ω(s) ds/s` at the default tolerance.
    pub fn dini_integral(&self, a: f64, b: f64) -> Result<f64, ModulusError> {
        self.dini_integral_rtol(a, b, DEFAULT_DINI_RTOL)
    }

    /// `∫_a^b ω(s) ds/s`, closed form when the kind has one, otherwise
    /// adaptive quadrature to `rtol`.
    pub fn dini_integral_rtol(&self, a: f64, b: f64, rtol: f64) -> Result<f64, ModulusError> {
        self.check_interval(a, b)?;
        match self.closed_form_dini(a, b) {
            Some(v) => Ok(v),
            None => self.dini_quadrature_unchecked(a, b, rtol),
        }
    }

    /// Same integral, always by quadrature. Used to cross-check closed forms.
    pub fn dini_integral_quadrature(&self, a: f64, b: f64, rtol: f64) -> Result<f64, ModulusError> {
        self.check_interval(a, b)?;
        self.dini_quadrature_unchecked(a, b, rtol)
    }

    fn check_interval(&self, a: f64, b: f64) -> Result<(), ModulusError> {
        if !(a > 0.0 && a <= b && b < self.t0) {
            return Err(ModulusError::Interval { a, b, t0: self.t0 });
        }
        Ok(())
    }

    fn dini_quadrature_unchecked(&self, a: f64, b: f64, rtol: f64) -> Result<f64, ModulusError> {
        if a == b {
            return Ok(0.0);
        }
        // With s = e^u the integrand ω(e^u) is bounded and smooth in u.
        let v = adaptive_gk(
            |u| self.eval_unchecked(u.exp().min(b)),
            a.ln(),
            b.ln(),
            rtol,
            0.0,
            DINI_MAX_EVALS,
        )?;
        Ok(v)
    }

    fn closed_form_dini(&self, a: f64, b: f64) -> Option<f64> {
        match &self.kind {
            Kind::Constant(v) => Some(v * (b / a).ln()),
            Kind::Power { alpha, scale } => Some(scale * (b.powf(*alpha) - a.powf(*alpha)) / alpha),
            Kind::Log { c } => Some(c * ((-a.ln()).ln() - (-b.ln()).ln())),
            Kind::Table { t, w } => {
                let mut total = 0.0;
                for i in 0..t.len() - 1 {
                    let lo = t[i].max(a);
                    let hi = t[i + 1].min(b);
                    if lo >= hi {
                        continue;
                    }
                    let m = (w[i + 1] - w[i]) / (t[i + 1] - t[i]);
                    total += (w[i] - m * t[i]) * (hi / lo).ln() + m * (hi - lo);
                }
                Some(total)
            }
            Kind::Composite(_) => None,
            Kind::Sum(terms) => terms.iter().map(|m| m.closed_form_dini(a, b)).sum(),
        }
    }
}

/// The composite modulus `ω̃` built from `(a, b, c, ω₁, ω₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModulus {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub omega1: Modulus,
    pub omega2: Modulus,
    /// Certified radius: `ω₁(t̃₀)/a + c·ω₂(t̃₀) <= 1/2`.
    pub t_tilde0: f64,
}

impl CompositeModulus {
    pub fn new(a: f64, b: f64, c: f64, omega1: Modulus, omega2: Modulus) -> Result<Self, ModulusError> {
        if !(a > 0.0 && a.is_finite()) || !(c > 0.0 && c.is_finite()) {
            return Err(ModulusError::Parameter(format!("composite needs a, c > 0 (a = {a}, c = {c})")));
        }
        let tmax = omega1.t0().min(omega2.t0());
        if !(b > 0.0 && b < tmax) {
            return Err(ModulusError::Parameter(format!(
                "composite needs 0 < b < min(t0) = {tmax}, got b = {b}"
            )));
        }
        let cond = |t: f64| -> Result<bool, ModulusError> {
            Ok(omega1.eval(t)? / a + c * omega2.eval(t)? <= 0.5)
        };
        let t_tilde0 = if cond(b)? {
            b
        } else {
            let mut hi = b;
            let mut lo = None;
            for _ in 0..60 {
                let t = 0.5 * hi;
                if cond(t)? {
                    lo = Some(t);
                    break;
                }
                hi = t;
            }
            let mut lo = lo.ok_or(ModulusError::Infeasible { b })?;
            while hi - lo > 1e-6 * lo {
                let mid = 0.5 * (lo + hi);
                if cond(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        Ok(Self { a, b, c, omega1, omega2, t_tilde0 })
    }

    /// `ω̃(t)` for `0 <= t < t̃₀`.
    pub fn eval(&self, t: f64) -> Result<f64, ModulusError> {
        if !(t >= 0.0 && t < self.t_tilde0) {
            return Err(ModulusError::Domain { t, t0: self.t_tilde0 });
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        self.eval_formula(t)
    }

    /// The defining formula for any `0 < t <= b`, without the certified-radius
    /// restriction. Envelope comparisons use this above `t̃₀`.
    pub fn eval_formula(&self, t: f64) -> Result<f64, ModulusError> {
        let i1 = self.omega1.dini_integral(t, self.b)?;
        let i2 = self.omega2.dini_integral(t, self.b)?;
        Ok(t * (self.a + i1) * (self.c * i2).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let p = Modulus::power(1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        let c = Modulus::constant(0.3, 1.0).unwrap();
        assert_eq!(c.eval(0.05).unwrap(), 0.3);
        assert!(!c.vanishes_at_zero());
        let l = Modulus::log(1.0, 0.5).unwrap();
        let v = l.eval((-4.0f64).exp()).unwrap();
        assert!((v - 0.25).abs() < 1e-15, "{v}");
    }

    #[test]
    fn eval_outside_domain_is_error() {
        let p = Modulus::power(0.5, 1.0, 1.0).unwrap();
        assert!(matches!(p.eval(1.0), Err(ModulusError::Domain { .. })));
        assert!(matches!(p.eval(-1e-9), Err(ModulusError::Domain { .. })));
        assert!(p.eval(f64::NAN).is_err());
    }

    #[test]
    fn constructor_validation() {
        assert!(Modulus::log(1.0, 1.5).is_err());
        assert!(Modulus::power(0.0, 1.0, 1.0).is_err());
        assert!(Modulus::constant(-0.1, 1.0).is_err());
        assert!(Modulus::table(vec![0.0, 0.5, 0.4], vec![0.0, 0.1, 0.2]).is_err());
        assert!(Modulus::table(vec![0.0, 0.5, 1.0], vec![0.0, 0.2, 0.1]).is_err());
        assert!(Modulus::table(vec![0.1, 0.5], vec![0.0, 0.1]).is_err());
    }

    #[test]
    fn table_interpolates_linearly() {
        let m = Modulus::table(vec![0.0, 0.5, 1.0], vec![0.0, 0.1, 0.4]).unwrap();
        assert!((m.eval(0.25).unwrap() - 0.05).abs() < 1e-15);
        assert!((m.eval(0.75).unwrap() - 0.25).abs() < 1e-15);
        let closed = m.dini_integral(0.1, 0.9).unwrap();
        let quad = m.dini_integral_quadrature(0.1, 0.9, 1e-12).unwrap();
        assert!((closed - quad).abs() < 1e-9 * closed, "{closed} vs {quad}");
    }

    #[test]
    fn dini_closed_forms() {
        let c = Modulus::constant(0.2, 1.0).unwrap();
        let (rho, r) = (0.01, 0.3);
        assert!((c.dini_integral(rho, 2.0 * r).unwrap() - 0.2 * (2.0 * r / rho).ln()).abs() < 1e-15);
        let p = Modulus::power(0.5, 1.0, 1.0).unwrap();
        let v = p.dini_integral(0.04, 0.81).unwrap();
        assert!((v - (0.9 - 0.2) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn log_dini_matches_quadrature() {
        let m = Modulus::log(1.0, 0.9).unwrap();
        let (a, b) = (1e-6, 0.5);
        let closed = m.dini_integral(a, b).unwrap();
        let expect = (1.0 / a).ln().ln() - (1.0 / b).ln().ln();
        assert!((closed - expect).abs() < 1e-14);
        let quad = m.dini_integral_quadrature(a, b, 1e-10).unwrap();
        assert!((closed - quad).abs() <= 1e-9 * closed, "{closed} vs {quad}");
    }

    #[test]
    fn dini_interval_errors() {
        let p = Modulus::power(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(p.dini_integral(0.5, 0.1), Err(ModulusError::Interval { .. })));
        assert!(matches!(p.dini_integral(0.0, 0.1), Err(ModulusError::Interval { .. })));
        assert!(matches!(p.dini_integral(0.1, 1.0), Err(ModulusError::Interval { .. })));
    }

    #[test]
    fn log_modulus_is_not_dini() {
        let m = Modulus::log(1.0, 0.9).unwrap();
        assert!(!m.is_dini());
        let vals: Vec<f64> = (2..=12)
            .map(|k| m.dini_integral(10f64.powi(-k), 0.5).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        // ln ln(1/a) grows without bound; at a = 1e-12 it exceeds 3.
        assert!(vals.last().unwrap() > &3.0);
        let p = Modulus::power(0.5, 1.0, 1.0).unwrap();
        let limit = p.dini_integral(1e-300, 0.5).unwrap();
        assert!((limit - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn composite_example() {
        let w = Modulus::power(1.0, 1.0, 2.0).unwrap();
        let c = CompositeModulus::new(1.0, 1.0, 1.0, w.clone(), w).unwrap();
        assert!((c.t_tilde0 - 0.25).abs() <= 1e-6 * 0.25, "{}", c.t_tilde0);
        let exact = |t: f64| t * (2.0 - t) * (1.0 - t).exp();
        for t in [0.01, 0.1, 0.2] {
            let v = c.eval(t).unwrap();
            assert!((v - exact(t)).abs() < 1e-14, "{v} vs {}", exact(t));
        }
        assert!(c.eval(0.1).unwrap() < c.eval(0.2).unwrap());
        assert_eq!(c.eval(0.0).unwrap(), 0.0);
        assert!(c.eval(1e-12).unwrap() < 1e-11);
        assert!(c.eval(0.3).is_err());
    }

    #[test]
    fn composite_infeasible() {
        let big = Modulus::constant(1.0, 2.0).unwrap();
        let err = CompositeModulus::new(1.0, 1.0, 1.0, big.clone(), big).unwrap_err();
        assert!(matches!(err, ModulusError::Infeasible { .. }));
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"kind": "power", "alpha": 0.5, "scale": 1.0, "t0": 1.0}"#;
        let spec: ModulusSpec = serde_json::from_str(json).unwrap();
        let m = Modulus::from_spec(&spec).unwrap();
        assert_eq!(m.to_spec(), spec);
        let json = r#"{"kind": "constant", "L": 0.3, "t0": 1.0}"#;
        let m = Modulus::from_spec(&serde_json::from_str(json).unwrap()).unwrap();
        assert_eq!(m.eval(0.2).unwrap(), 0.3);
    }
}
