//! Barriers `d^{1+ε}` (sub) and `d^{1-ε}` (super) built on the regularized
//! distance.
//!
//! With `q = 1 ± ε`,
//! `D²(d^q) = q d^{q-2} (d D²d + (q - 1) ∇d ⊗ ∇d)`, so the sign of the Pucci
//! value only depends on `d D²d ± ε ∇d ⊗ ∇d`. Values are reported divided by
//! `d^{ε-1}` (sub) or `d^{-1-ε}` (super).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::sync::Arc;

use crate::pucci::{EllipticityPair, SymMatrix};
use crate::regdist::{DistanceJet, RegdistError, RegularizedDistanceField};
use crate::solver::{zero_fn, BoundaryPiece, GridProblem, GridSolution, Operator, SolverError, Stencil};

/// Pointwise tolerance on the normalized barrier value.
pub const BARRIER_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error(transparent)]
    Regdist(#[from] RegdistError),
    #[error("barrier exponent epsilon must lie in (0, 1/2), got {0}")]
    Epsilon(f64),
    #[error("barrier radius {r} must be positive and leave room in the chart (working radius {working})")]
    Radius { r: f64, working: f64 },
    #[error("no sample points with d >= {0}")]
    NoSamples(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("grid solution and distance field use different charts")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    /// `d^{1+ε}`, expected `M⁻ >= 0`.
    Sub,
    /// `d^{1-ε}`, expected `M⁺ <= 0`.
    Super,
}

/// Sample points together with their precomputed distance jets.
#[derive(Debug, Clone)]
pub struct BarrierSamples {
    pub points: Vec<Vec<f64>>,
    pub jets: Vec<DistanceJet>,
}

impl BarrierSamples {
    /// `count` random points of `Ω ∩ B_r` with `d >= delta_min`; heights
    /// above the graph are log-uniform so the boundary layer is well covered.
    pub fn random(
        field: &RegularizedDistanceField,
        r: f64,
        count: usize,
        delta_min: f64,
        seed: u64,
    ) -> Result<Self, BarrierError> {
        check_radius(field, r)?;
        let g = field.graph();
        let n = g.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut candidates = Vec::with_capacity(count);
        let mut attempts = 0;
        while candidates.len() < count && attempts < 100 * count {
            attempts += 1;
            let xp: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-r..r)).collect();
            let height = delta_min * (r / delta_min).powf(rng.random::<f64>());
            let mut x = xp.clone();
            x.push(g.gamma(&xp) + height);
            if x.iter().map(|v| v * v).sum::<f64>() < r * r {
                candidates.push(x);
            }
        }
        Self::at(field, candidates, delta_min)
    }

    /// Evaluates jets at `points`, dropping those with `d < delta_min`.
    pub fn at(field: &RegularizedDistanceField, points: Vec<Vec<f64>>, delta_min: f64) -> Result<Self, BarrierError> {
        let jets: Vec<DistanceJet> = points
            .par_iter()
            .map(|x| field.eval_jet(x))
            .collect::<Result<_, _>>()?;
        let (points, jets): (Vec<_>, Vec<_>) =
            points.into_iter().zip(jets).filter(|(_, j)| j.d >= delta_min).unzip();
        if points.is_empty() {
            return Err(BarrierError::NoSamples(delta_min));
        }
        Ok(Self { points, jets })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_radius(field: &RegularizedDistanceField, r: f64) -> Result<(), BarrierError> {
    // Points of B_r need |x'| + d <= working radius; d <= 2|x| is ample.
    if !(r > 0.0) || 2.0 * r > field.working_radius() {
        return Err(BarrierError::Radius { r, working: field.working_radius() });
    }
    Ok(())
}

/// `d^{1±ε}` over `Ω ∩ B_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Barrier {
    pub epsilon: f64,
    pub kind: BarrierKind,
    pub ellipticity: EllipticityPair,
    pub r: f64,
}

/// Outcome of [`Barrier::verify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierReport {
    pub pass: bool,
    pub kind: BarrierKind,
    pub epsilon: f64,
    /// Smallest signed margin; negative means the wrong sign.
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub samples: usize,
}

impl Barrier {
    pub fn new(epsilon: f64, kind: BarrierKind, ellipticity: EllipticityPair, r: f64) -> Result<Self, BarrierError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(BarrierError::Epsilon(epsilon));
        }
        Ok(Self { epsilon, kind, ellipticity, r })
    }

    /// `ε = C₀ · sup_{B'_{2r}} |∇Γ|`.
    pub fn select_epsilon(c0: f64, field: &RegularizedDistanceField, r: f64) -> f64 {
        c0 * field.graph().local_lip_seminorm(2.0 * r)
    }

    /// Normalized Pucci value from a distance jet.
    pub fn normalized_value(&self, jet: &DistanceJet) -> f64 {
        normalized_value(self.kind, self.epsilon, &self.ellipticity, jet)
    }

    /// `M⁻ D²(d^{1+ε})` or `M⁺ D²(d^{1-ε})` at `x`, unnormalized.
    pub fn hessian_value(&self, field: &RegularizedDistanceField, x: &[f64]) -> Result<f64, BarrierError> {
        let jet = field.eval_jet(x)?;
        let scale = match self.kind {
            BarrierKind::Sub => jet.d.powf(self.epsilon - 1.0),
            BarrierKind::Super => jet.d.powf(-1.0 - self.epsilon),
        };
        Ok(self.normalized_value(&jet) * scale)
    }

    /// Checks the sign at every sample, with tolerance `BARRIER_TOL` on the
    /// normalized scale. Ties in the minimum go to the lowest index.
    pub fn verify(&self, samples: &BarrierSamples) -> BarrierReport {
        let (idx, min_value) = min_margin(self.kind, self.epsilon, &self.ellipticity, &samples.jets);
        BarrierReport {
            pass: min_value >= -BARRIER_TOL,
            kind: self.kind,
            epsilon: self.epsilon,
            min_value,
            argmin: samples.points[idx].clone(),
            samples: samples.len(),
        }
    }
}

fn normalized_value(kind: BarrierKind, eps: f64, e: &EllipticityPair, jet: &DistanceJet) -> f64 {
    let outer = SymMatrix::outer(&jet.grad);
    match kind {
        BarrierKind::Sub => (1.0 + eps) * e.minus(&jet.hess.scale(jet.d).add(&outer.scale(eps))),
        BarrierKind::Super => (1.0 - eps) * e.plus(&jet.hess.scale(jet.d).add(&outer.scale(-eps))),
    }
}

/// Signed margin: the value for sub barriers, minus the value for super ones.
fn margin(kind: BarrierKind, eps: f64, e: &EllipticityPair, jet: &DistanceJet) -> f64 {
    let v = normalized_value(kind, eps, e, jet);
    match kind {
        BarrierKind::Sub => v,
        BarrierKind::Super => -v,
    }
}

fn min_margin(kind: BarrierKind, eps: f64, e: &EllipticityPair, jets: &[DistanceJet]) -> (usize, f64) {
    jets.par_iter()
        .enumerate()
        .map(|(i, j)| (i, margin(kind, eps, e, j)))
        .reduce(|| (usize::MAX, f64::INFINITY), |a, b| {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
}

/// Smallest `ε` in `(0, 1/2)` for which the barrier passes on `samples`,
/// by bisection to absolute precision `1e-6`. `None` if even `ε → 1/2` fails.
pub fn minimal_epsilon(kind: BarrierKind, e: &EllipticityPair, samples: &BarrierSamples) -> Option<f64> {
    let passes = |eps: f64| min_margin(kind, eps, e, &samples.jets).1 >= -BARRIER_TOL;
    let (mut lo, mut hi) = (0.0, 0.5 - 1e-9);
    if !passes(hi) {
        return None;
    }
    if passes(1e-9) {
        return Some(1e-9);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Through-origin least-squares fit `y ≈ slope · x` with its `R²`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let slope = sxy / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    (slope, 1.0 - ss_res / ss_tot)
}

/// Solves `ℒφ = 0` in `Ω ∩ B_r` with `φ = d` on the boundary.
pub fn special_solution(
    field: &RegularizedDistanceField,
    r: f64,
    h: f64,
    operator: Operator,
) -> Result<GridSolution, BarrierError> {
    check_radius(field, r)?;
    let f = Arc::new(field.clone());
    let dirichlet = Arc::new(move |x: &[f64; 2], piece: BoundaryPiece| match piece {
        BoundaryPiece::Graph => 0.0,
        BoundaryPiece::Arc => f.eval_d(x).unwrap_or(f64::NAN),
    });
    let problem = GridProblem {
        graph: field.graph().clone(),
        r,
        h,
        operator,
        rhs: zero_fn(),
        dirichlet,
        stencil: Stencil::default(),
    };
    Ok(problem.solve()?)
}

/// Worst violations of `(2r)^{-ε} d^{1+ε} <= φ <= (2r)^ε d^{1-ε}` and of
/// `|φ - d| <= K r S` over nodes with `d >= 2h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub epsilon: f64,
    pub slack: f64,
    /// `max (lower - φ)`
    pub lower_violation: f64,
    /// `max (φ - upper)`
    pub upper_violation: f64,
    /// `max |φ - d|`
    pub deviation: f64,
    /// `K r S`
    pub deviation_bound: f64,
    pub seminorm: f64,
    pub nodes_checked: usize,
    /// `φ > 0` at every checked node.
    pub positive: bool,
    pub lower_pass: bool,
    pub upper_pass: bool,
    pub deviation_pass: bool,
}

impl SandwichReport {
    pub fn pass(&self) -> bool {
        self.lower_pass && self.upper_pass && self.deviation_pass
    }
}

/// Compares a special solution with its barriers; `slack_factor · h` is the
/// allowed discretization error.
pub fn check_special_solution_sandwich(
    phi: &GridSolution,
    field: &RegularizedDistanceField,
    epsilon: f64,
    r: f64,
    k_hat: f64,
    slack_factor: f64,
) -> Result<SandwichReport, BarrierError> {
    if phi.graph != *field.graph() || (phi.grid.r - r).abs() > 1e-15 * r {
        return Err(BarrierError::GridMismatch);
    }
    let h = phi.h();
    let slack = slack_factor * h;
    let s = field.graph().local_lip_seminorm(2.0 * r);
    let d: Vec<f64> = (0..phi.values.len())
        .into_par_iter()
        .map(|k| field.eval_d(&phi.point(k)))
        .collect::<Result<_, _>>()?;
    let two_r = 2.0 * r;
    let mut rep = SandwichReport {
        epsilon,
        slack,
        lower_violation: f64::NEG_INFINITY,
        upper_violation: f64::NEG_INFINITY,
        deviation: 0.0,
        deviation_bound: k_hat * r * s,
        seminorm: s,
        nodes_checked: 0,
        positive: true,
        lower_pass: false,
        upper_pass: false,
        deviation_pass: false,
    };
    for (k, &dk) in d.iter().enumerate() {
        if dk < 2.0 * h {
            continue;
        }
        let u = phi.values[k];
        rep.nodes_checked += 1;
        rep.positive &= u > 0.0;
        let lower = two_r.powf(-epsilon) * dk.powf(1.0 + epsilon);
        let upper = two_r.powf(epsilon) * dk.powf(1.0 - epsilon);
        rep.lower_violation = rep.lower_violation.max(lower - u);
        rep.upper_violation = rep.upper_violation.max(u - upper);
        rep.deviation = rep.deviation.max((u - dk).abs());
    }
    rep.lower_pass = rep.lower_violation <= slack;
    rep.upper_pass = rep.upper_violation <= slack;
    rep.deviation_pass = rep.deviation <= rep.deviation_bound + slack;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryGraph, GraphSpec};
    use crate::regdist::DEFAULT_ORDER;

    fn field(json: &str) -> RegularizedDistanceField {
        let spec: GraphSpec = serde_json::from_str(json).unwrap();
        let g = BoundaryGraph::new(&spec, 2, 0.5).unwrap();
        RegularizedDistanceField::new(g, 0.5, DEFAULT_ORDER).unwrap()
    }

    #[test]
    fn flat_barriers_match_closed_form() {
        let f = field(r#"{"family": "zero"}"#);
        let e = EllipticityPair::new(1.0, 2.0).unwrap();
        let eps = 0.1;
        let x = [0.05, 0.1];
        let sub = Barrier::new(eps, BarrierKind::Sub, e, 0.25).unwrap();
        let v = sub.hessian_value(&f, &x).unwrap();
        let expected = (1.0 + eps) * eps * 0.1f64.powf(eps - 1.0);
        assert!((v - expected).abs() < 1e-12 * expected);
        let sup = Barrier::new(eps, BarrierKind::Super, e, 0.25).unwrap();
        let v = sup.hessian_value(&f, &x).unwrap();
        let expected = -(1.0 - eps) * eps * 0.1f64.powf(-1.0 - eps);
        assert!((v - expected).abs() < 1e-12 * expected.abs());

        let samples = BarrierSamples::random(&f, 0.25, 200, 1e-3, 3).unwrap();
        let rep = sub.verify(&samples);
        assert!(rep.pass);
        assert!((rep.min_value - eps * (1.0 + eps)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_is_validated() {
        let e = EllipticityPair::new(1.0, 1.0).unwrap();
        assert!(Barrier::new(0.5, BarrierKind::Sub, e, 0.25).is_err());
        assert!(Barrier::new(0.0, BarrierKind::Super, e, 0.25).is_err());
    }

    #[test]
    fn increasing_epsilon_keeps_passing() {
        let f = field(r#"{"family": "cone", "L": 0.02}"#);
        let e = EllipticityPair::new(1.0, 2.0).unwrap();
        let samples = BarrierSamples::random(&f, 0.25, 300, 1e-3, 5).unwrap();
        let eps = minimal_epsilon(BarrierKind::Sub, &e, &samples).unwrap();
        for k in 1..=10 {
            let trial = eps + (0.49 - eps) * k as f64 / 10.0;
            assert!(Barrier::new(trial, BarrierKind::Sub, e, 0.25).unwrap().verify(&samples).pass);
        }
    }

    #[test]
    fn flat_special_solution_is_the_height() {
        let f = field(r#"{"family": "zero"}"#);
        let phi = special_solution(&f, 0.25, 1.0 / 128.0, Operator::Laplace).unwrap();
        for k in 0..phi.values.len() {
            assert!((phi.values[k] - phi.point(k)[1]).abs() < 1e-13);
        }
        let rep = check_special_solution_sandwich(&phi, &f, 0.01, 0.25, 1.0, 5.0).unwrap();
        assert!(rep.pass() && rep.positive);
        assert!(rep.deviation < 1e-13);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0];
        let (s, r2) = fit_through_origin(&x, &[2.0, 4.0, 6.0]);
        assert!((s - 2.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }
}
