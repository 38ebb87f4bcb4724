//! The locally regularized distance.
//!
//! `p(x', t) = ∫ η(s) Γ(x' + t s) ds + t` is a mollification of `Γ` at scale
//! `t`; inverting `t ↦ p(y', t) = y_n` gives `d(y)`. Derivatives of `p` are
//! computed from kernels in the derivatives of `η`, so `Γ` itself is never
//! differentiated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{BoundaryGraph, GeometryError};
use crate::pucci::SymMatrix;
use crate::quadrature::{adaptive_gk, GaussLegendre, QuadratureError};

/// Default Gauss–Legendre order per panel.
pub const DEFAULT_ORDER: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegdistError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("working radius must lie in (0, min(1/2, graph radius)], got {0}")]
    WorkingRadius(f64),
    #[error("Lipschitz constant {lip} too large for the chart: need L·C_p <= 1/2 with C_p = {c_p}")]
    ChartGuard { lip: f64, c_p: f64 },
    #[error("point {point:?} outside the chart: {reason}")]
    OutsideChart { point: Vec<f64>, reason: String },
    #[error("quadrature order doubling changed p from {coarse} to {fine}")]
    QuadratureDisagreement { coarse: f64, fine: f64 },
    #[error("p is not increasing in the vertical variable near t = {t} (slope {slope})")]
    Monotonicity { t: f64, slope: f64 },
    #[error("root-finding for d stalled with residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("finite-difference cross-check of {what} failed: analytic {analytic:e}, difference {difference:e}")]
    CrossCheck { what: &'static str, analytic: f64, difference: f64 },
}

/// Normalized radial bump `c · exp(-1/(1 - |s|²))` on the unit ball of `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    m: usize,
    normalization: f64,
    mass_error: f64,
    first_moment: f64,
    c_p: f64,
}

fn bump(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - q)).exp()
    }
}

/// Values of `η` and the derivative combinations used by the kernels.
#[derive(Debug, Clone, Copy, Default)]
struct KernelJet {
    eta: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
    /// `s·∇η`
    radial: f64,
    /// `s·∇∂_iη`
    radial_grad: [f64; 2],
    /// `sᵀ D²η s`
    radial_hess: f64,
}

impl Mollifier {
    /// Bump on the unit ball of `R^m`, `m ∈ {1, 2}`.
    pub fn new(m: usize) -> Result<Self, RegdistError> {
        assert!(m == 1 || m == 2);
        let radial = |f: &dyn Fn(f64) -> f64| -> Result<f64, QuadratureError> {
            if m == 1 {
                Ok(2.0 * adaptive_gk(f, 0.0, 1.0, 1e-14, 0.0, 1_000_000)?)
            } else {
                Ok(std::f64::consts::TAU * adaptive_gk(|r| r * f(r), 0.0, 1.0, 1e-14, 0.0, 1_000_000)?)
            }
        };
        let raw_mass = radial(&|r| bump(r * r))?;
        let mut moll = Self { m, normalization: 1.0 / raw_mass, mass_error: 0.0, first_moment: 0.0, c_p: 0.0 };
        moll.first_moment = radial(&|r| r * moll.eval_radial(r))?;
        // K = -mη - s·∇η is the kernel of ∂_t p; C_p bounds |∂_t p - 1| / L.
        moll.c_p = radial(&|r| {
            let j = moll.jet([r, 0.0]);
            r * (-(m as f64) * j.eta - j.radial).abs()
        })?;
        let rule = GaussLegendre::new(DEFAULT_ORDER);
        let mass: f64 = if m == 1 {
            panel_nodes_1d(&[], &rule).iter().map(|(s, w)| w * moll.eval(&[*s])).sum()
        } else {
            polar_nodes(&rule, [0.0, 0.0], false).iter().map(|(s, w)| w * moll.eval(s)).sum()
        };
        moll.mass_error = (mass - 1.0).abs();
        if moll.mass_error > 1e-10 {
            return Err(RegdistError::QuadratureDisagreement { coarse: mass, fine: 1.0 });
        }
        Ok(moll)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Factor making `∫η = 1`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `|∫η - 1|` under the panel rule used for `p`.
    pub fn mass_error(&self) -> f64 {
        self.mass_error
    }

    /// `∫ |s| η`.
    pub fn first_moment(&self) -> f64 {
        self.first_moment
    }

    /// `∫ |s| |m η + s·∇η|`.
    pub fn c_p(&self) -> f64 {
        self.c_p
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        self.normalization * bump(s.iter().map(|x| x * x).sum())
    }

    fn eval_radial(&self, r: f64) -> f64 {
        self.normalization * bump(r * r)
    }

    fn jet(&self, s: [f64; 2]) -> KernelJet {
        let q = s[0] * s[0] + s[1] * s[1];
        if q >= 1.0 {
            return KernelJet::default();
        }
        let u = 1.0 / (1.0 - q);
        let phi = self.normalization * (-u).exp();
        if phi == 0.0 {
            return KernelJet::default();
        }
        // η = φ(q): ∂_iη = 2g s_i φ and ∂_ijη = (a s_i s_j + 2g δ_ij) φ,
        // with g = -u² and a = 4(g² + g') = 4(u⁴ - 2u³).
        let g = -u * u;
        let a = 4.0 * (u * u * u * u - 2.0 * u * u * u);
        let mut j = KernelJet { eta: phi, ..Default::default() };
        for i in 0..2 {
            j.grad[i] = 2.0 * g * s[i] * phi;
            for k in 0..2 {
                j.hess[i][k] = (a * s[i] * s[k] + if i == k { 2.0 * g } else { 0.0 }) * phi;
            }
            j.radial_grad[i] = (a * s[i] * q + 2.0 * g * s[i]) * phi;
        }
        j.radial = 2.0 * g * q * phi;
        j.radial_hess = (a * q * q + 2.0 * g * q) * phi;
        j
    }
}

/// Splits `[-1, 1]` at `kinks`, grades geometrically toward each kink and
/// applies `rule` on every panel.
fn panel_nodes_1d(kinks: &[f64], rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = kinks.iter().copied().filter(|&k| k > -1.0 && k < 1.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bounds = vec![(-1.0, false)];
    bounds.extend(cuts.iter().map(|&c| (c, true)));
    bounds.push((1.0, false));

    let mut panels = Vec::new();
    for w in bounds.windows(2) {
        let ((a, ka), (b, kb)) = (w[0], w[1]);
        if ka && kb {
            let mid = 0.5 * (a + b);
            graded(a, mid, true, &mut panels);
            graded(mid, b, false, &mut panels);
        } else if ka {
            graded(a, b, true, &mut panels);
        } else if kb {
            graded(a, b, false, &mut panels);
        } else {
            uniform(a, b, &mut panels);
        }
    }
    let mut nodes = Vec::with_capacity(panels.len() * rule.order());
    for (a, b) in panels {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            nodes.push((c + h * x, w * h));
        }
    }
    nodes
}

fn uniform(a: f64, b: f64, panels: &mut Vec<(f64, f64)>) {
    let n = ((4.0 * (b - a)).ceil() as usize).max(1);
    for i in 0..n {
        panels.push((a + (b - a) * i as f64 / n as f64, a + (b - a) * (i + 1) as f64 / n as f64));
    }
}

/// Panels on `[a, b]` shrinking by 4 toward `a` (`toward_left`) or `b`.
fn graded(a: f64, b: f64, toward_left: bool, panels: &mut Vec<(f64, f64)>) {
    const LEVELS: i32 = 5;
    let len = b - a;
    let at = |f: f64| if toward_left { a + len * f } else { b - len * f };
    let mut pieces = vec![(at(0.0), at(0.25f64.powi(LEVELS)))];
    for j in (1..=LEVELS).rev() {
        pieces.push((at(0.25f64.powi(j)), at(0.25f64.powi(j - 1))));
    }
    // The last graded piece spans [1/4, 1]; split it uniformly.
    let (p, q) = pieces.pop().unwrap();
    for (x, y) in pieces {
        panels.push(if x < y { (x, y) } else { (y, x) });
    }
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    uniform(lo, hi, panels);
}

/// Polar rule on the unit disk centred at `center` (`|center| < 1`), graded
/// toward the centre when `graded_center` is set.
fn polar_nodes(rule: &GaussLegendre, center: [f64; 2], graded_center: bool) -> Vec<([f64; 2], f64)> {
    let mut panels = Vec::new();
    if graded_center {
        graded(0.0, 1.0, true, &mut panels);
    } else {
        uniform(0.0, 1.0, &mut panels);
    }
    let radial: Vec<(f64, f64)> = panels
        .iter()
        .flat_map(|&(a, b)| {
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            rule.nodes.iter().zip(&rule.weights).map(move |(x, w)| (c + h * x, w * h))
        })
        .collect();
    let n_theta = 2 * rule.order();
    let c2 = center[0] * center[0] + center[1] * center[1];
    let dtheta = std::f64::consts::TAU / n_theta as f64;
    let mut nodes = Vec::with_capacity(n_theta * radial.len());
    for j in 0..n_theta {
        let th = dtheta * j as f64;
        let e = [th.cos(), th.sin()];
        let b = center[0] * e[0] + center[1] * e[1];
        let rho_max = -b + (b * b + 1.0 - c2).sqrt();
        for &(u, w) in &radial {
            let rho = rho_max * u;
            nodes.push(([center[0] + rho * e[0], center[1] + rho * e[1]], w * rho_max * rho_max * u * dtheta));
        }
    }
    nodes
}

/// `p` with its first and second derivatives in `(x', t)`; `t` is the last
/// variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PJet {
    pub p: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
}

/// `d` with gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceJet {
    pub d: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
}

/// The map `d` built from a boundary graph.
#[derive(Debug, Clone)]
pub struct RegularizedDistanceField {
    graph: BoundaryGraph,
    mollifier: Mollifier,
    rule: GaussLegendre,
    rule_fine: GaussLegendre,
    working_radius: f64,
}

impl RegularizedDistanceField {
    pub fn new(graph: BoundaryGraph, working_radius: f64, order: usize) -> Result<Self, RegdistError> {
        if !(working_radius > 0.0 && working_radius <= 0.5 && working_radius <= graph.radius()) {
            return Err(RegdistError::WorkingRadius(working_radius));
        }
        let mollifier = Mollifier::new(graph.dim() - 1)?;
        if graph.lip_global() * mollifier.c_p() > 0.5 {
            return Err(RegdistError::ChartGuard { lip: graph.lip_global(), c_p: mollifier.c_p() });
        }
        Ok(Self { graph, mollifier, rule: GaussLegendre::new(order), rule_fine: GaussLegendre::new(2 * order), working_radius })
    }

    pub fn graph(&self) -> &BoundaryGraph {
        &self.graph
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn working_radius(&self) -> f64 {
        self.working_radius
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    fn dim(&self) -> usize {
        self.graph.dim()
    }

    fn check_chart(&self, xp: &[f64], t: f64) -> Result<(), RegdistError> {
        let reach = xp.iter().map(|x| x * x).sum::<f64>().sqrt() + t;
        if !(t > 0.0) || reach > self.working_radius * (1.0 + 1e-12) {
            let mut point = xp.to_vec();
            point.push(t);
            return Err(RegdistError::OutsideChart {
                point,
                reason: format!("need t > 0 and |x'| + t <= {}", self.working_radius),
            });
        }
        Ok(())
    }

    fn p_jet_with(&self, xp: &[f64], t: f64, rule: &GaussLegendre) -> PJet {
        let n = self.dim();
        let m = n - 1;
        let nf = n as f64;
        let g0 = self.graph.gamma(xp);
        let mut acc_p = 0.0;
        let mut acc_d1 = [0.0; 2];
        let mut acc_dt = 0.0;
        let mut acc_d2 = [[0.0; 2]; 2];
        let mut acc_dit = [0.0; 2];
        let mut acc_dtt = 0.0;
        let mut point = [0.0; 2];
        let mut visit = |s: [f64; 2], w: f64| {
            for i in 0..m {
                point[i] = xp[i] + t * s[i];
            }
            let delta = self.graph.gamma(&point[..m]) - g0;
            if delta == 0.0 {
                return;
            }
            let j = self.mollifier.jet(s);
            let wd = w * delta;
            acc_p += wd * j.eta;
            acc_dt += wd * (-(m as f64) * j.eta - j.radial);
            acc_dtt += wd * (nf * (nf - 1.0) * j.eta + 2.0 * nf * j.radial + j.radial_hess);
            for i in 0..m {
                acc_d1[i] += wd * j.grad[i];
                acc_dit[i] += wd * (nf * j.grad[i] + j.radial_grad[i]);
                for k in 0..m {
                    acc_d2[i][k] += wd * j.hess[i][k];
                }
            }
        };
        if m == 1 {
            let kinks: Vec<f64> = self
                .graph
                .breakpoints_1d(xp[0] - t, xp[0] + t)
                .into_iter()
                .map(|b| (b - xp[0]) / t)
                .collect();
            for (s, w) in panel_nodes_1d(&kinks, rule) {
                visit([s, 0.0], w);
            }
        } else {
            let (center, graded_center) = match self.graph.kink_point() {
                Some(k) => {
                    let c = [(k[0] - xp[0]) / t, (k[1] - xp[1]) / t];
                    if c[0] * c[0] + c[1] * c[1] < 1.0 {
                        (c, true)
                    } else {
                        ([0.0, 0.0], false)
                    }
                }
                None => ([0.0, 0.0], false),
            };
            for (s, w) in polar_nodes(rule, center, graded_center) {
                visit(s, w);
            }
        }
        let mut grad = vec![0.0; n];
        let mut hess = SymMatrix::zeros(n);
        let t2 = t * t;
        for i in 0..m {
            grad[i] = -acc_d1[i] / t;
            for k in i..m {
                hess.set(i, k, 0.5 * (acc_d2[i][k] + acc_d2[k][i]) / t2);
            }
            hess.set(i, m, acc_dit[i] / t2);
        }
        grad[m] = 1.0 + acc_dt / t;
        hess.set(m, m, acc_dtt / t2);
        PJet { p: g0 + acc_p + t, grad, hess }
    }

    /// `p(x', t)`, certified by order doubling.
    pub fn eval_p(&self, x: &[f64]) -> Result<f64, RegdistError> {
        let (xp, t) = self.split(x);
        self.check_chart(xp, t)?;
        self.certified_p(xp, t)
    }

    fn certified_p(&self, xp: &[f64], t: f64) -> Result<f64, RegdistError> {
        let coarse = self.p_jet_with(xp, t, &self.rule).p;
        let fine = self.p_jet_with(xp, t, &self.rule_fine).p;
        if (coarse - fine).abs() > 1e-6 * fine.abs().max(f64::MIN_POSITIVE) {
            return Err(RegdistError::QuadratureDisagreement { coarse, fine });
        }
        Ok(fine)
    }

    /// `p` and its derivatives at `(x', t)`.
    pub fn p_jet(&self, x: &[f64]) -> Result<PJet, RegdistError> {
        let (xp, t) = self.split(x);
        self.check_chart(xp, t)?;
        Ok(self.p_jet_with(xp, t, &self.rule))
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], f64) {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let n = self.dim();
        (&x[..n - 1], x[n - 1])
    }

    /// Certified bracket for the root of `t ↦ p(y', t) - y_n`.
    fn bracket(&self, y: &[f64]) -> Result<(f64, f64), RegdistError> {
        let (yp, yn) = self.split(y);
        let delta = yn - self.graph.gamma(yp);
        if !(delta > 0.0) {
            return Err(RegdistError::OutsideChart { point: y.to_vec(), reason: "point is not above the graph".into() });
        }
        let lm = self.graph.lip_global() * self.mollifier.first_moment();
        // The bounds are attained for cones centred on the kink, so widen
        // them past rounding.
        Ok((delta / (1.0 + lm) * (1.0 - 1e-12), delta / (1.0 - lm) * (1.0 + 1e-12)))
    }

    fn solve_d(&self, y: &[f64]) -> Result<(f64, PJet), RegdistError> {
        let (yp, yn) = self.split(y);
        let (mut lo, mut hi) = self.bracket(y)?;
        self.check_chart(yp, hi)?;
        let f_lo = self.p_jet_with(yp, lo, &self.rule).p - yn;
        let f_hi = self.p_jet_with(yp, hi, &self.rule).p - yn;
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(RegdistError::Monotonicity { t: lo, slope: (f_hi - f_lo) / (hi - lo) });
        }
        if f_lo == 0.0 {
            return Ok((lo, self.p_jet_with(yp, lo, &self.rule)));
        }
        if f_hi == 0.0 {
            return Ok((hi, self.p_jet_with(yp, hi, &self.rule)));
        }
        let mut t = (yn - self.graph.gamma(yp)).clamp(lo, hi);
        for _ in 0..200 {
            let jet = self.p_jet_with(yp, t, &self.rule);
            let f = jet.p - yn;
            let slope = jet.grad[self.dim() - 1];
            if slope <= 0.0 {
                return Err(RegdistError::Monotonicity { t, slope });
            }
            if f == 0.0 {
                return Ok((t, jet));
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - f / slope;
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - t).abs() <= 4.0 * f64::EPSILON * t || hi - lo <= 4.0 * f64::EPSILON * t {
                if f.abs() <= 1e-12 {
                    return Ok((t, jet));
                }
                return Err(RegdistError::NoConvergence { residual: f.abs() });
            }
            t = next;
        }
        Err(RegdistError::NoConvergence { residual: f64::NAN })
    }

    /// `d(y)`, the root of `p(y', d) = y_n`.
    pub fn eval_d(&self, y: &[f64]) -> Result<f64, RegdistError> {
        let (yp, yn) = self.split(y);
        let (d, _) = self.solve_d(y)?;
        // Certify the quadrature at the root, then confirm the residual.
        let p = self.certified_p(yp, d)?;
        let residual = (p - yn).abs();
        if residual > 1e-12 {
            return Err(RegdistError::NoConvergence { residual });
        }
        Ok(d)
    }

    /// `d`, `∇d` and `D²d` through the inverse-function identities.
    pub fn eval_jet(&self, y: &[f64]) -> Result<DistanceJet, RegdistError> {
        let (d, jet) = self.solve_d(y)?;
        Ok(distance_jet(d, &jet))
    }

    pub fn eval_grad_d(&self, y: &[f64]) -> Result<Vec<f64>, RegdistError> {
        Ok(self.eval_jet(y)?.grad)
    }

    pub fn eval_hess_d(&self, y: &[f64]) -> Result<SymMatrix, RegdistError> {
        Ok(self.eval_jet(y)?.hess)
    }

    /// Evaluates the jet and cross-checks it against central differences
    /// with step `1e-5·d`: the gradient against differences of `d`, the
    /// Hessian against differences of the analytic gradient. Relative
    /// tolerance `1e-3`.
    pub fn eval_jet_checked(&self, y: &[f64]) -> Result<DistanceJet, RegdistError> {
        let jet = self.eval_jet(y)?;
        let n = self.dim();
        let h = 1e-5 * jet.d;
        let hess_scale = jet.hess.spectral_norm();
        for i in 0..n {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[i] += h;
            ym[i] -= h;
            let (dp, jp) = self.solve_d(&yp)?;
            let (dm, jm) = self.solve_d(&ym)?;
            let fd = (dp - dm) / (2.0 * h);
            let diff = (fd - jet.grad[i]).abs();
            // Differences of d lose about eps·d/h ≈ 1e-11 to rounding.
            if diff > 1e-3 * norm(&jet.grad) + 1e-9 {
                return Err(RegdistError::CrossCheck { what: "gradient", analytic: jet.grad[i], difference: diff });
            }
            let gp = distance_jet(dp, &jp).grad;
            let gm = distance_jet(dm, &jm).grad;
            for k in 0..n {
                let fd = (gp[k] - gm[k]) / (2.0 * h);
                let diff = (fd - jet.hess.get(i, k)).abs();
                if diff > 1e-3 * hess_scale + 1e-9 / jet.d {
                    return Err(RegdistError::CrossCheck { what: "hessian", analytic: jet.hess.get(i, k), difference: diff });
                }
            }
        }
        Ok(jet)
    }

    /// Measures the three bounds at `y` against the seminorm over
    /// `B'_{max(d, y_n)}(y')`.
    pub fn sandwich_sample(&self, y: &[f64]) -> Result<SandwichSample, RegdistError> {
        let jet = self.eval_jet(y)?;
        let (yp, yn) = self.split(y);
        let delta = yn - self.graph.gamma(yp);
        let s = self.graph.lip_seminorm_ball(yp, jet.d.max(yn));
        Ok(SandwichSample {
            point: y.to_vec(),
            d: jet.d,
            ratio: jet.d / delta,
            grad_norm: norm(&jet.grad),
            hess_norm: jet.hess.spectral_norm(),
            seminorm: s,
        })
    }

    /// Random points above the graph with heights log-uniform in
    /// `[1e-3, 1] · working_radius / 4` and `|y'| <= working_radius / 2`.
    pub fn random_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let wr = self.working_radius;
        (0..count)
            .map(|_| {
                let mut yp: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = norm(&yp);
                let target = 0.5 * wr * rng.random::<f64>().powf(1.0 / (n - 1) as f64);
                if r > 0.0 {
                    yp.iter_mut().for_each(|x| *x *= target / r);
                }
                let height = 0.25 * wr * 10f64.powf(rng.random_range(-3.0..0.0));
                let mut y = yp.clone();
                y.push(self.graph.gamma(&yp) + height);
                y
            })
            .collect()
    }

    /// Samples every point in parallel; results keep the input order.
    pub fn sandwich_sweep(&self, points: &[Vec<f64>]) -> Result<Vec<SandwichSample>, RegdistError> {
        points.par_iter().map(|y| self.sandwich_sample(y)).collect()
    }
}

fn distance_jet(d: f64, jet: &PJet) -> DistanceJet {
    let n = jet.grad.len();
    let m = n - 1;
    let pt = jet.grad[m];
    let dn = 1.0 / pt;
    let mut grad = vec![0.0; n];
    for i in 0..m {
        grad[i] = -jet.grad[i] / pt;
    }
    grad[m] = dn;
    let ptt = jet.hess.get(m, m);
    let mut hess = SymMatrix::zeros(n);
    for i in 0..m {
        for j in i..m {
            let v = jet.hess.get(i, j)
                + jet.hess.get(i, m) * grad[j]
                + jet.hess.get(j, m) * grad[i]
                + ptt * grad[i] * grad[j];
            hess.set(i, j, -v / pt);
        }
        hess.set(i, m, -dn * (jet.hess.get(i, m) + ptt * grad[i]) / pt);
    }
    hess.set(m, m, -ptt * dn * dn / pt);
    DistanceJet { d, grad, hess }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One point of a sandwich sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichSample {
    pub point: Vec<f64>,
    pub d: f64,
    /// `d / (y_n - Γ(y'))`
    pub ratio: f64,
    pub grad_norm: f64,
    pub hess_norm: f64,
    /// Local seminorm `S`.
    pub seminorm: f64,
}

impl SandwichSample {
    /// Largest of `|ratio - 1|`, `||∇d| - 1|` and `d‖D²d‖`, each divided by `S`.
    /// Zero when all three vanish; infinite when `S = 0` but a deficit does not.
    pub fn normalized_deficit(&self) -> f64 {
        let worst = (self.ratio - 1.0).abs().max((self.grad_norm - 1.0).abs()).max(self.d * self.hess_norm);
        if worst == 0.0 {
            0.0
        } else {
            worst / self.seminorm
        }
    }

    /// The three bounds with constant `c` and absolute slack `slack`.
    pub fn holds(&self, c: f64, slack: f64) -> bool {
        let b = c * self.seminorm + slack;
        (self.ratio - 1.0).abs() <= b && (self.grad_norm - 1.0).abs() <= b && self.d * self.hess_norm <= b
    }

    pub fn csv_header(dim: usize) -> String {
        let mut cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        cols.extend(["d", "grad_norm", "hess_norm", "ratio"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.point
            .iter()
            .chain([self.d, self.grad_norm, self.hess_norm, self.ratio].iter())
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}
