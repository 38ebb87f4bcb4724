//! Lipschitz graph domains `Ω = {x_n > Γ(x')}` near the origin.
//!
//! Points are plain slices: `x'` has `dim - 1` entries and a full point has
//! `dim` entries with `x_n` last. Only `dim ∈ {2, 3}` is supported.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulus::{Modulus, ModulusError, ModulusSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    Dimension(usize),
    #[error("invalid graph parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
}

/// Serializable graph family, e.g. `{"family": "cone", "L": 0.2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Zero,
    Linear {
        a: Vec<f64>,
    },
    Cone {
        #[serde(rename = "L")]
        lip: f64,
    },
    /// `Γ(x') = sign · |x'| ω(|x'|)`.
    C1model {
        omega: ModulusSpec,
        #[serde(default = "plus_one")]
        sign: f64,
    },
    /// `Γ(x') = A sin(k x₁)`.
    Sinusoid {
        #[serde(rename = "A")]
        amplitude: f64,
        k: f64,
    },
    /// Monotone cubic interpolation through `(x[i], y[i])`; 2-D only.
    Table {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

fn plus_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Zero,
    Linear(Vec<f64>),
    Cone(f64),
    C1Model { omega: Modulus, sign: f64 },
    Sinusoid { amplitude: f64, k: f64 },
    Table(MonotoneCubic),
}

/// The boundary graph `Γ` of a Lipschitz domain, with `Γ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGraph {
    dim: usize,
    radius: f64,
    family: Family,
    lip_global: f64,
}

/// Which pointwise C¹ condition to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Interior,
    Exterior,
}

/// Outcome of sampling a pointwise C¹ condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Report {
    pub side: Side,
    /// Smallest `margin`; nonnegative means the condition holds on the samples.
    pub worst_margin: f64,
    /// Smallest `margin / |x'|`.
    pub worst_relative_margin: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub holds: bool,
}

impl BoundaryGraph {
    /// Builds a graph over the ball `|x'| <= radius` of `R^{dim-1}`.
    pub fn new(spec: &GraphSpec, dim: usize, radius: f64) -> Result<Self, GeometryError> {
        if !(dim == 2 || dim == 3) {
            return Err(GeometryError::Dimension(dim));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::Parameter(format!("radius must be positive, got {radius}")));
        }
        let family = match spec {
            GraphSpec::Zero => Family::Zero,
            GraphSpec::Linear { a } => {
                if a.len() != dim - 1 || a.iter().any(|v| !v.is_finite()) {
                    return Err(GeometryError::Parameter(format!(
                        "linear slope needs {} finite entries",
                        dim - 1
                    )));
                }
                Family::Linear(a.clone())
            }
            GraphSpec::Cone { lip } => {
                if !(*lip >= 0.0 && lip.is_finite()) {
                    return Err(GeometryError::Parameter(format!("cone L must be >= 0, got {lip}")));
                }
                Family::Cone(*lip)
            }
            GraphSpec::C1model { omega, sign } => {
                let omega = Modulus::from_spec(omega)?;
                if radius >= omega.t0() {
                    return Err(GeometryError::Parameter(format!(
                        "c1model radius {radius} must be below the modulus t0 {}",
                        omega.t0()
                    )));
                }
                if *sign != 1.0 && *sign != -1.0 {
                    return Err(GeometryError::Parameter(format!("c1model sign must be ±1, got {sign}")));
                }
                Family::C1Model { omega, sign: *sign }
            }
            GraphSpec::Sinusoid { amplitude, k } => {
                if !amplitude.is_finite() || !k.is_finite() {
                    return Err(GeometryError::Parameter("sinusoid parameters must be finite".into()));
                }
                Family::Sinusoid { amplitude: *amplitude, k: *k }
            }
            GraphSpec::Table { x, y } => {
                if dim != 2 {
                    return Err(GeometryError::Parameter("table graphs are 2-D only".into()));
                }
                let t = MonotoneCubic::new(x.clone(), y.clone())?;
                if t.x[0] > -radius || *t.x.last().unwrap() < radius {
                    return Err(GeometryError::Parameter(format!(
                        "table must cover [-{radius}, {radius}]"
                    )));
                }
                if t.eval(0.0).abs() > 1e-14 {
                    return Err(GeometryError::Parameter("table graph must satisfy Γ(0) = 0".into()));
                }
                Family::Table(t)
            }
        };
        let mut g = Self { dim, radius, family, lip_global: 0.0 };
        g.lip_global = g.compute_lip_global();
        Ok(g)
    }

    pub fn spec(&self) -> GraphSpec {
        match &self.family {
            Family::Zero => GraphSpec::Zero,
            Family::Linear(a) => GraphSpec::Linear { a: a.clone() },
            Family::Cone(l) => GraphSpec::Cone { lip: *l },
            Family::C1Model { omega, sign } => GraphSpec::C1model { omega: omega.to_spec(), sign: *sign },
            Family::Sinusoid { amplitude, k } => GraphSpec::Sinusoid { amplitude: *amplitude, k: *k },
            Family::Table(t) => GraphSpec::Table { x: t.x.clone(), y: t.y.clone() },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radius of the ball of `R^{dim-1}` on which `Γ` is defined.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Global Lipschitz bound of `Γ` on its ball.
    pub fn lip_global(&self) -> f64 {
        self.lip_global
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Zero => "zero",
            Family::Linear(_) => "linear",
            Family::Cone(_) => "cone",
            Family::C1Model { .. } => "c1model",
            Family::Sinusoid { .. } => "sinusoid",
            Family::Table(_) => "table",
        }
    }

    /// A modulus describing the geometry at the origin: the c1model modulus,
    /// or the constant `|∇Γ|` bound for the other families.
    pub fn geometric_modulus(&self, t0: f64) -> Result<Modulus, ModulusError> {
        match &self.family {
            Family::C1Model { omega, .. } => Ok(omega.clone()),
            Family::Zero => Modulus::constant(0.0, t0),
            _ => Modulus::constant(self.lip_global, t0),
        }
    }

    /// `Γ(x')`.
    pub fn gamma(&self, xp: &[f64]) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Linear(a) => a.iter().zip(xp).map(|(a, x)| a * x).sum(),
            Family::Cone(l) => l * norm(xp),
            Family::C1Model { omega, sign } => {
                let rho = norm(xp);
                sign * rho * omega.eval(rho).unwrap_or(f64::NAN)
            }
            Family::Sinusoid { amplitude, k } => amplitude * (k * xp[0]).sin(),
            Family::Table(t) => t.eval(xp[0]),
        }
    }

    /// `∇Γ(x')`, padded with zeros to length 2.
    pub fn grad(&self, xp: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        match &self.family {
            Family::Zero => {}
            Family::Linear(a) => g[..a.len()].copy_from_slice(a),
            Family::Cone(l) => {
                let rho = norm(xp);
                if rho > 0.0 {
                    for (gi, xi) in g.iter_mut().zip(xp) {
                        *gi = l * xi / rho;
                    }
                }
            }
            Family::C1Model { omega, sign } => {
                let rho = norm(xp);
                if rho > 0.0 {
                    let radial = sign * self.radial_profile_derivative(omega, rho);
                    for (gi, xi) in g.iter_mut().zip(xp) {
                        *gi = radial * xi / rho;
                    }
                }
            }
            Family::Sinusoid { amplitude, k } => g[0] = amplitude * k * (k * xp[0]).cos(),
            Family::Table(t) => g[0] = t.derivative(xp[0]),
        }
        g
    }

    /// `d/dρ [ρ ω(ρ)]`, analytic where `ω'` is known, central differences
    /// with step `1e-6·ρ` otherwise.
    fn radial_profile_derivative(&self, omega: &Modulus, rho: f64) -> f64 {
        let w = omega.eval(rho).unwrap_or(f64::NAN);
        match omega.derivative(rho) {
            Some(dw) if dw.is_finite() => w + rho * dw,
            _ => {
                let h = 1e-6 * rho;
                let hi = (rho + h).min(omega.t0() * (1.0 - 1e-15));
                let lo = rho - h;
                let f = |r: f64| r * omega.eval(r).unwrap_or(f64::NAN);
                (f(hi) - f(lo)) / (hi - lo)
            }
        }
    }

    /// Points in `(lo, hi)` where `Γ` may fail to be smooth (2-D).
    pub fn breakpoints_1d(&self, lo: f64, hi: f64) -> Vec<f64> {
        let inside = |x: f64| x > lo && x < hi;
        match &self.family {
            Family::Cone(_) | Family::C1Model { .. } => {
                if inside(0.0) {
                    vec![0.0]
                } else {
                    vec![]
                }
            }
            Family::Table(t) => t.x.iter().copied().filter(|&x| inside(x)).collect(),
            _ => vec![],
        }
    }

    /// The single non-smooth point of a 3-D graph, if any.
    pub fn kink_point(&self) -> Option<[f64; 2]> {
        match self.family {
            Family::Cone(_) | Family::C1Model { .. } => Some([0.0, 0.0]),
            _ => None,
        }
    }

    /// `x_n > Γ(x')`.
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        x[self.dim - 1] > self.gamma(&x[..self.dim - 1])
    }

    /// `sup |∇Γ|` over the closed ball `B'_radius(center)`.
    ///
    /// The supremum is taken over a quasi-uniform sample augmented with the
    /// family's critical points, refined until two successive refinements
    /// agree within 1%.
    pub fn lip_seminorm_ball(&self, center: &[f64], radius: f64) -> f64 {
        assert!(radius >= 0.0);
        match &self.family {
            Family::Zero => 0.0,
            Family::Linear(a) => norm(a),
            Family::Cone(l) => {
                if radius > 0.0 || norm(center) > 0.0 {
                    *l
                } else {
                    0.0
                }
            }
            Family::C1Model { .. } => {
                let c = norm(center);
                let lo = (c - radius).max(0.0);
                let hi = c + radius;
                self.refine_sup(lo, hi, &[], |rho| {
                    let mut p = [0.0; 2];
                    p[0] = rho;
                    let g = self.grad(&p[..self.dim - 1]);
                    norm(&g)
                })
            }
            Family::Sinusoid { k, .. } => {
                let (lo, hi) = (center[0] - radius, center[0] + radius);
                let mut crit = Vec::new();
                if *k != 0.0 {
                    let period = std::f64::consts::PI / k.abs();
                    let mut m = (lo / period).ceil();
                    while m * period <= hi && crit.len() < 100_000 {
                        crit.push(m * period);
                        m += 1.0;
                    }
                }
                self.refine_sup(lo, hi, &crit, |x| {
                    let mut p = [0.0; 2];
                    p[0] = x;
                    norm(&self.grad(&p[..self.dim - 1]))
                })
            }
            Family::Table(t) => {
                let (lo, hi) = (center[0] - radius, center[0] + radius);
                let crit = t.derivative_critical_points(lo, hi);
                self.refine_sup(lo, hi, &crit, |x| t.derivative(x).abs())
            }
        }
    }

    fn refine_sup<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, extra: &[f64], f: F) -> f64 {
        let base = extra
            .iter()
            .copied()
            .filter(|&x| x >= lo && x <= hi)
            .map(&f)
            .fold(f(lo).max(f(hi)), f64::max);
        if hi <= lo {
            return base;
        }
        let sample = |n: usize| -> f64 {
            (0..=n)
                .map(|i| f(lo + (hi - lo) * i as f64 / n as f64))
                .fold(base, f64::max)
        };
        let mut n = 16;
        let mut prev = sample(n);
        while n < (1 << 16) {
            n *= 2;
            let next = sample(n);
            if (next - prev).abs() <= 0.01 * next.abs() {
                return next;
            }
            prev = next;
        }
        prev
    }

    /// `sup |∇Γ|` over `B'_r` centred at the origin.
    pub fn local_lip_seminorm(&self, r: f64) -> f64 {
        let zero = [0.0; 2];
        self.lip_seminorm_ball(&zero[..self.dim - 1], r)
    }

    /// Samples `x_n = ±|x'| ω(|x'|)` at dyadic radii `r 2^{-j}` and reports
    /// the worst violation margin of the interior or exterior condition.
    pub fn check_c1_conditions(&self, omega: &Modulus, side: Side, r: f64) -> C1Report {
        let r = r.min(omega.t0() * (1.0 - 1e-12)).min(self.radius);
        let dirs: Vec<[f64; 2]> = if self.dim == 2 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..16)
                .map(|m| {
                    let th = std::f64::consts::TAU * m as f64 / 16.0;
                    [th.cos(), th.sin()]
                })
                .collect()
        };
        let mut worst = f64::INFINITY;
        let mut worst_rel = f64::INFINITY;
        let mut worst_point = vec![0.0; self.dim - 1];
        let mut samples = 0;
        for j in 0..48 {
            let rho = r * 0.5f64.powi(j);
            let env = rho * omega.eval(rho).unwrap_or(f64::NAN);
            for d in &dirs {
                let xp: Vec<f64> = d[..self.dim - 1].iter().map(|c| c * rho).collect();
                let g = self.gamma(&xp);
                let margin = match side {
                    Side::Interior => env - g,
                    Side::Exterior => g + env,
                };
                samples += 1;
                if margin / rho < worst_rel {
                    worst_rel = margin / rho;
                    worst = margin;
                    worst_point = xp;
                }
            }
        }
        C1Report {
            side,
            worst_margin: worst,
            worst_relative_margin: worst_rel,
            worst_point,
            samples,
            holds: worst_rel >= -1e-12,
        }
    }

    fn compute_lip_global(&self) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Linear(a) => norm(a),
            Family::Cone(l) => *l,
            Family::Sinusoid { amplitude, k } => (amplitude * k).abs(),
            Family::Table(t) => t.max_abs_derivative(-self.radius, self.radius),
            Family::C1Model { omega, .. } => {
                let n = 4096;
                (1..=n)
                    .map(|i| {
                        let rho = self.radius * i as f64 / n as f64;
                        self.radial_profile_derivative(omega, rho).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson
/// slopes with Fritsch–Butland weighting).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, GeometryError> {
        let n = x.len();
        if n != y.len() || n < 2 {
            return Err(GeometryError::Parameter("table needs >= 2 (x, y) pairs of equal length".into()));
        }
        if !x.windows(2).all(|w| w[0] < w[1]) || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(GeometryError::Parameter("table x must be strictly increasing and finite".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes: d })
    }

    fn locate(&self, t: f64) -> usize {
        self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.slopes[i], self.slopes[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.slopes[i], self.slopes[i + 1]);
        let dh00 = 6.0 * s * (s - 1.0) / h;
        let dh10 = (1.0 - s) * (1.0 - 3.0 * s);
        let dh01 = -dh00;
        let dh11 = s * (3.0 * s - 2.0);
        dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
    }

    /// Knots and derivative extrema inside `[lo, hi]`.
    fn derivative_critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        for i in 0..self.x.len() - 1 {
            let (a, b) = (self.x[i], self.x[i + 1]);
            if b < lo || a > hi {
                continue;
            }
            for p in [a, b] {
                if p >= lo && p <= hi {
                    pts.push(p);
                }
            }
            // The derivative is quadratic on each piece; its vertex is where
            // the second derivative vanishes.
            let h = b - a;
            let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.slopes[i], self.slopes[i + 1]);
            let c2 = 12.0 * (y0 - y1) / h + 6.0 * (d0 + d1);
            let c1 = 6.0 * (y1 - y0) / h - 4.0 * d0 - 2.0 * d1;
            // d/ds of the derivative is c1 + c2 s.
            if c2 != 0.0 {
                let s = -c1 / c2;
                if (0.0..=1.0).contains(&s) {
                    let p = a + s * h;
                    if p >= lo && p <= hi {
                        pts.push(p);
                    }
                }
            }
        }
        pts
    }

    fn max_abs_derivative(&self, lo: f64, hi: f64) -> f64 {
        let crit = self.derivative_critical_points(lo, hi);
        crit.iter()
            .chain([lo, hi].iter())
            .map(|&p| self.derivative(p).abs())
            .fold(0.0, f64::max)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
