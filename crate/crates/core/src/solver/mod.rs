//! Monotone finite differences for `ℒu = f` on `Ω ∩ B_r` in two dimensions.
//!
//! Every operator is written as a nonnegative combination of directional
//! second differences, one per stencil direction. Arms that leave the domain
//! are shortened to the exact crossing point (Shortley–Weller), where the
//! Dirichlet data is evaluated. Pucci operators are solved by policy
//! iteration over the controls `λΔ`, `λΔ + (Λ-λ)∂²_v` and `ΛΔ`.

mod grid;
mod stencil;

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use grid::{Arm, BoundaryPiece, Grid, Target};
pub use stencil::{decompose, Stencil};

use crate::geometry::BoundaryGraph;
use crate::pucci::{EllipticityPair, SymMatrix};

/// Maximum number of policy-iteration rounds.
pub const MAX_POLICY_ROUNDS: usize = 200;

pub type ScalarFn = Arc<dyn Fn(&[f64; 2]) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(&[f64; 2], BoundaryPiece) -> f64 + Send + Sync>;
pub type CoefficientFn = Arc<dyn Fn(&[f64; 2]) -> SymMatrix + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("grid spacing {h} must be at most r/16 = {}", r / 16.0)]
    Spacing { h: f64, r: f64 },
    #[error("radius {r} exceeds the graph's radius {graph}")]
    Radius { r: f64, graph: f64 },
    #[error("the solver is two-dimensional; got a graph in dimension {0}")]
    Dimension(usize),
    #[error("domain has no interior nodes")]
    Empty,
    #[error("coefficient matrix at {point:?} has eigenvalues {eigs:?} outside [{lambda}, {cap_lambda}]")]
    Ellipticity { point: [f64; 2], eigs: Vec<f64>, lambda: f64, cap_lambda: f64 },
    #[error("coefficient matrix at {point:?} has no nonnegative decomposition over the stencil")]
    NoDecomposition { point: [f64; 2] },
    #[error("assembled weight {weight} at node {node} is negative")]
    Monotonicity { node: usize, weight: f64 },
    #[error("sparse LU factorization failed: {0}")]
    Factorization(String),
    #[error("policy iteration did not converge in {rounds} rounds (residual {residual:e})")]
    NoConvergence { rounds: usize, residual: f64 },
    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// The operator `ℒ`.
#[derive(Clone)]
pub enum Operator {
    Laplace,
    /// `Tr(A(x) D²u)` with `λI <= A <= ΛI` checked at every node.
    Fixed { field: CoefficientFn, ellipticity: EllipticityPair },
    PucciMinus(EllipticityPair),
    PucciPlus(EllipticityPair),
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Laplace => write!(f, "Laplace"),
            Operator::Fixed { ellipticity, .. } => write!(f, "Fixed({ellipticity:?})"),
            Operator::PucciMinus(e) => write!(f, "PucciMinus({e:?})"),
            Operator::PucciPlus(e) => write!(f, "PucciPlus({e:?})"),
        }
    }
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Laplace => "laplace",
            Operator::Fixed { .. } => "fixed",
            Operator::PucciMinus(_) => "pucci_minus",
            Operator::PucciPlus(_) => "pucci_plus",
        }
    }
}

/// A Dirichlet problem `ℒu = f` in `Ω ∩ B_r`, `u = g` on the boundary.
#[derive(Clone)]
pub struct GridProblem {
    pub graph: BoundaryGraph,
    pub r: f64,
    pub h: f64,
    pub operator: Operator,
    pub rhs: ScalarFn,
    pub dirichlet: BoundaryFn,
    pub stencil: Stencil,
}

impl fmt::Debug for GridProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridProblem")
            .field("graph", &self.graph.family_name())
            .field("r", &self.r)
            .field("h", &self.h)
            .field("operator", &self.operator)
            .field("stencil", &self.stencil)
            .finish()
    }
}

pub fn zero_fn() -> ScalarFn {
    Arc::new(|_| 0.0)
}

/// Lifts `g(x)` to boundary data that ignores the piece.
pub fn boundary_from(g: ScalarFn) -> BoundaryFn {
    Arc::new(move |x, _| g(x))
}

/// Evidence that the assembled matrix is a nonsingular M-matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCertificate {
    /// Smallest stencil weight; nonnegative off-diagonals mean this is >= 0.
    pub min_weight: f64,
    /// Smallest `diag - Σ|offdiag|` over rows, relative to the diagonal.
    pub min_row_excess: f64,
    pub strictly_dominant_rows: usize,
    /// Every node reaches a strictly dominant row through nonzero entries.
    pub connected: bool,
    pub holds: bool,
}

/// The linear system for one frozen policy.
struct System {
    matrix: SparseColMat<usize, f64>,
    rhs: Vec<f64>,
    diag: Vec<f64>,
}

/// Controls per node: either one shared list, or a node-specific single
/// coefficient vector.
enum Controls {
    Shared(Vec<Vec<f64>>),
    PerNode(Vec<Vec<f64>>),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sense {
    Linear,
    Min,
    Max,
}

/// The discretized problem: grid, arm weights and boundary values.
pub struct Discretization {
    pub grid: Grid,
    /// Per arm: `2 / (H² θ (θ + θ_opposite))`.
    weights: Vec<f64>,
    /// Per arm: Dirichlet value at the crossing, `NaN` for node targets.
    boundary_values: Vec<f64>,
    rhs: Vec<f64>,
    controls: Controls,
    sense: Sense,
}

impl GridProblem {
    fn validate(&self) -> Result<(), SolverError> {
        if self.graph.dim() != 2 {
            return Err(SolverError::Dimension(self.graph.dim()));
        }
        if !(self.h > 0.0 && self.h <= self.r / 16.0 * (1.0 + 1e-12)) {
            return Err(SolverError::Spacing { h: self.h, r: self.r });
        }
        if self.r > self.graph.radius() * (1.0 + 1e-12) {
            return Err(SolverError::Radius { r: self.r, graph: self.graph.radius() });
        }
        Ok(())
    }

    /// Builds the grid, arm weights, boundary values and controls.
    pub fn discretize(&self) -> Result<Discretization, SolverError> {
        self.validate()?;
        let dirs = self.stencil.directions();
        let nd = dirs.len();
        let grid = Grid::new(&self.graph, self.r, self.h, dirs.clone());
        if grid.is_empty() {
            return Err(SolverError::Empty);
        }
        let h = self.h;
        let per_node: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let arms = grid.arms_of(k);
                let mut w = Vec::with_capacity(2 * nd);
                let mut b = Vec::with_capacity(2 * nd);
                for (m, v) in dirs.iter().enumerate() {
                    let big_h2 = h * h * (v[0] * v[0] + v[1] * v[1]) as f64;
                    let (tf, tb) = (arms[2 * m].theta, arms[2 * m + 1].theta);
                    w.push(2.0 / (big_h2 * tf * (tf + tb)));
                    w.push(2.0 / (big_h2 * tb * (tf + tb)));
                    for arm in [&arms[2 * m], &arms[2 * m + 1]] {
                        b.push(match arm.target {
                            Target::Node(_) => f64::NAN,
                            Target::Boundary { point, piece } => (self.dirichlet)(&point, piece),
                        });
                    }
                }
                (w, b)
            })
            .collect();
        let (weights, boundary_values): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_node.into_iter().unzip();
        let weights: Vec<f64> = weights.into_iter().flatten().collect();
        let boundary_values: Vec<f64> = boundary_values.into_iter().flatten().collect();
        let bad = grid
            .arms
            .iter()
            .zip(&boundary_values)
            .position(|(a, v)| matches!(a.target, Target::Boundary { .. }) && !v.is_finite());
        if let Some(i) = bad {
            return Err(SolverError::NonFinite(format!("boundary data at arm {i}")));
        }
        let rhs: Vec<f64> = (0..grid.len()).map(|k| (self.rhs)(&grid.point(k))).collect();
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("right-hand side".into()));
        }

        let axis = |v: [i64; 2]| dirs.iter().position(|&d| d == v).expect("stencil contains the axes");
        let (e1, e2) = (axis([1, 0]), axis([0, 1]));
        let laplace = |scale: f64| {
            let mut c = vec![0.0; nd];
            c[e1] = scale;
            c[e2] = scale;
            c
        };
        let (controls, sense) = match &self.operator {
            Operator::Laplace => (Controls::Shared(vec![laplace(1.0)]), Sense::Linear),
            Operator::PucciMinus(e) | Operator::PucciPlus(e) => {
                let (l, cap) = (e.lambda(), e.cap_lambda());
                let mut list = vec![laplace(l)];
                for m in 0..nd {
                    let mut c = laplace(l);
                    c[m] += cap - l;
                    list.push(c);
                }
                list.push(laplace(cap));
                let sense = if matches!(self.operator, Operator::PucciMinus(_)) { Sense::Min } else { Sense::Max };
                (Controls::Shared(list), sense)
            }
            Operator::Fixed { field, ellipticity } => {
                let coeffs: Vec<Vec<f64>> = (0..grid.len())
                    .into_par_iter()
                    .map(|k| {
                        let x = grid.point(k);
                        let a = field(&x);
                        let eigs = a.eigenvalues();
                        let slack = 1e-12 * ellipticity.cap_lambda();
                        if eigs[0] < ellipticity.lambda() - slack || eigs[1] > ellipticity.cap_lambda() + slack {
                            return Err(SolverError::Ellipticity {
                                point: x,
                                eigs,
                                lambda: ellipticity.lambda(),
                                cap_lambda: ellipticity.cap_lambda(),
                            });
                        }
                        decompose(&a, &dirs).ok_or(SolverError::NoDecomposition { point: x })
                    })
                    .collect::<Result<_, _>>()?;
                (Controls::PerNode(coeffs), Sense::Linear)
            }
        };
        Ok(Discretization { grid, weights, boundary_values, rhs, controls, sense })
    }

    /// Solves the problem: directly for linear operators, by policy
    /// iteration for the Pucci operators.
    pub fn solve(&self) -> Result<GridSolution, SolverError> {
        let disc = self.discretize()?;
        disc.solve(self)
    }
}

impl Discretization {
    fn ndir(&self) -> usize {
        self.grid.dirs.len()
    }

    fn coeffs(&self, k: usize, control: usize) -> &[f64] {
        match &self.controls {
            Controls::Shared(list) => &list[control],
            Controls::PerNode(c) => &c[k],
        }
    }

    fn n_controls(&self) -> usize {
        match &self.controls {
            Controls::Shared(list) => list.len(),
            Controls::PerNode(_) => 1,
        }
    }

    /// `(Σ_m a_m D_m u)(k)` and a magnitude scale for tie-breaking.
    fn apply(&self, k: usize, coeffs: &[f64], u: &[f64]) -> (f64, f64) {
        let nd = self.ndir();
        let arms = self.grid.arms_of(k);
        let base = k * 2 * nd;
        let mut val = 0.0;
        let mut mag = 0.0;
        for (m, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for s in 0..2 {
                let idx = 2 * m + s;
                let w = self.weights[base + idx];
                let nb = match arms[idx].target {
                    Target::Node(j) => u[j as usize],
                    Target::Boundary { .. } => self.boundary_values[base + idx],
                };
                val += a * w * (nb - u[k]);
                mag += a * w * (nb.abs() + u[k].abs());
            }
        }
        (val, mag)
    }

    fn assemble(&self, policy: &[usize]) -> Result<System, SolverError> {
        let n = self.grid.len();
        let nd = self.ndir();
        let rows: Vec<(Vec<Triplet<usize, usize, f64>>, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let coeffs = self.coeffs(k, policy[k]);
                let arms = self.grid.arms_of(k);
                let base = k * 2 * nd;
                let mut trip = Vec::with_capacity(2 * nd + 1);
                let mut diag = 0.0;
                let mut b = -self.rhs[k];
                for (m, &a) in coeffs.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    if a < 0.0 {
                        return Err(SolverError::Monotonicity { node: k, weight: a });
                    }
                    for s in 0..2 {
                        let idx = 2 * m + s;
                        let w = a * self.weights[base + idx];
                        diag += w;
                        match arms[idx].target {
                            Target::Node(j) => trip.push(Triplet::new(k, j as usize, -w)),
                            Target::Boundary { .. } => b += w * self.boundary_values[base + idx],
                        }
                    }
                }
                trip.push(Triplet::new(k, k, diag));
                Ok((trip, b, diag))
            })
            .collect::<Result<_, _>>()?;
        let mut triplets = Vec::with_capacity(n * (2 * nd + 1));
        let mut rhs = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for (t, b, d) in rows {
            triplets.extend(t);
            rhs.push(b);
            diag.push(d);
        }
        let matrix = SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok(System { matrix, rhs, diag })
    }

    fn linear_solve(&self, sys: &System) -> Result<Vec<f64>, SolverError> {
        let n = sys.rhs.len();
        let lu = sys.matrix.sp_lu().map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let b = Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i]);
        let mut x = lu.solve(&b);
        // Two rounds of iterative refinement.
        for _ in 0..2 {
            let ax = &sys.matrix * &x;
            let r = Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i] - ax[(i, 0)]);
            let dx = lu.solve(&r);
            x += &dx;
        }
        let u: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("linear solve".into()));
        }
        Ok(u)
    }

    /// Best control at node `k` and the operator value under it. Keeps
    /// `current` when it is within tolerance of the optimum, otherwise the
    /// lowest index within tolerance.
    fn improve(&self, k: usize, current: usize, u: &[f64]) -> (usize, f64) {
        let nc = self.n_controls();
        let vals: Vec<(f64, f64)> = (0..nc).map(|c| self.apply(k, self.coeffs(k, c), u)).collect();
        let better = |a: f64, b: f64| match self.sense {
            Sense::Min => a < b,
            _ => a > b,
        };
        let mut best = vals[0].0;
        for &(v, _) in &vals[1..] {
            if better(v, best) {
                best = v;
            }
        }
        let tol = 1e-12 * vals.iter().fold(0.0f64, |m, v| m.max(v.1));
        let near = |c: usize| (vals[c].0 - best).abs() <= tol;
        if near(current) {
            return (current, vals[current].0);
        }
        let c = (0..nc).find(|&c| near(c)).unwrap_or(0);
        (c, vals[c].0)
    }

    /// Max over nodes of `|F(u) - f| / diag`, with `F` the optimal control value.
    fn residual(&self, u: &[f64], policy: &[usize], diag: &[f64]) -> f64 {
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let v = match self.sense {
                    Sense::Linear => self.apply(k, self.coeffs(k, policy[k]), u).0,
                    _ => self.improve(k, policy[k], u).1,
                };
                ((v - self.rhs[k]) / diag[k]).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    fn certificate(&self, sys: &System) -> MonotonicityCertificate {
        let n = self.grid.len();
        let mut min_weight = f64::INFINITY;
        let mut offsum = vec![0.0; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let m = sys.matrix.as_ref();
        for col in 0..n {
            let rows = m.row_idx_of_col_raw(col);
            let vals = m.val_of_col(col);
            for (&row, &v) in rows.iter().zip(vals) {
                if row != col && v != 0.0 {
                    min_weight = min_weight.min(-v);
                    offsum[row] += v.abs();
                    adj[col].push(row);
                }
            }
        }
        let mut min_row_excess = f64::INFINITY;
        let mut strict = vec![false; n];
        for k in 0..n {
            let excess = (sys.diag[k] - offsum[k]) / sys.diag[k];
            min_row_excess = min_row_excess.min(excess);
            strict[k] = excess > 1e-14;
        }
        // Nodes depending on a strictly dominant row: BFS backwards from them.
        let mut seen = strict.clone();
        let mut queue: VecDeque<usize> = (0..n).filter(|&k| strict[k]).collect();
        while let Some(c) = queue.pop_front() {
            for &r in &adj[c] {
                if !seen[r] {
                    seen[r] = true;
                    queue.push_back(r);
                }
            }
        }
        let connected = seen.iter().all(|&s| s);
        let min_weight = if min_weight.is_finite() { min_weight } else { 0.0 };
        let strictly_dominant_rows = strict.iter().filter(|&&s| s).count();
        MonotonicityCertificate {
            min_weight,
            min_row_excess,
            strictly_dominant_rows,
            connected,
            holds: min_weight >= 0.0 && min_row_excess >= -1e-12 && connected,
        }
    }

    pub fn solve(self, problem: &GridProblem) -> Result<GridSolution, SolverError> {
        let n = self.grid.len();
        let mut policy = vec![0usize; n];
        let mut rounds = 0;
        let (u, sys) = loop {
            rounds += 1;
            let sys = self.assemble(&policy)?;
            let u = self.linear_solve(&sys)?;
            if self.sense == Sense::Linear {
                break (u, sys);
            }
            let next: Vec<usize> = (0..n).into_par_iter().map(|k| self.improve(k, policy[k], &u).0).collect();
            if next == policy {
                break (u, sys);
            }
            if rounds >= MAX_POLICY_ROUNDS {
                let residual = self.residual(&u, &policy, &sys.diag);
                return Err(SolverError::NoConvergence { rounds, residual });
            }
            policy = next;
        };
        let certificate = self.certificate(&sys);
        if !certificate.holds {
            return Err(SolverError::Monotonicity { node: 0, weight: certificate.min_weight });
        }
        let residual = self.residual(&u, &policy, &sys.diag);
        let g_max = self
            .boundary_values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tolerance = 1e-10 * g_max + 1e-10;
        if residual > tolerance {
            return Err(SolverError::Residual { residual, tolerance });
        }
        let (bmin, bmax) = self
            .boundary_values
            .iter()
            .filter(|v| !v.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(GridSolution {
            values: u,
            residual,
            tolerance,
            policy_rounds: rounds,
            certificate,
            boundary_min: bmin,
            boundary_max: bmax,
            rhs: self.rhs,
            grid: self.grid,
            graph: problem.graph.clone(),
            dirichlet: problem.dirichlet.clone(),
            operator: problem.operator.name(),
        })
    }
}

/// A solved grid problem.
#[derive(Clone)]
pub struct GridSolution {
    pub values: Vec<f64>,
    /// Largest diagonal-normalized residual.
    pub residual: f64,
    pub tolerance: f64,
    pub policy_rounds: usize,
    pub certificate: MonotonicityCertificate,
    /// Extremes of the Dirichlet data over all crossing points.
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub rhs: Vec<f64>,
    pub grid: Grid,
    pub graph: BoundaryGraph,
    pub dirichlet: BoundaryFn,
    pub operator: &'static str,
}

impl fmt::Debug for GridSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSolution")
            .field("nodes", &self.values.len())
            .field("h", &self.grid.h)
            .field("r", &self.grid.r)
            .field("residual", &self.residual)
            .field("policy_rounds", &self.policy_rounds)
            .finish()
    }
}

/// Sidecar metadata for an exported solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSummary {
    pub operator: &'static str,
    pub nodes: usize,
    pub h: f64,
    pub r: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub monotonicity: MonotonicityCertificate,
    pub abp: AbpReport,
}

/// Discrete ABP check `max u <= max_∂ u + C diam (Σ |f⁻|² h²)^{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbpReport {
    pub max_u: f64,
    pub max_boundary: f64,
    pub diam: f64,
    /// `(Σ_nodes (f⁻)² h²)^{1/2}`
    pub f_minus_norm: f64,
    /// `(max u - max_∂ u)⁺ / (diam · ‖f⁻‖)`, zero when the numerator is.
    pub c_abp: f64,
    /// `max u <= max_∂ u` up to rounding, required when `f⁻ = 0`.
    pub maximum_principle: bool,
}

impl GridSolution {
    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        self.grid.point(k)
    }

    pub fn value_at_node(&self, i: i64, j: i64) -> Option<f64> {
        self.grid.index(i, j).map(|k| self.values[k])
    }

    pub fn abp_check(&self) -> AbpReport {
        let h = self.grid.h;
        let max_u = self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let f_minus_norm = self.rhs.iter().map(|&f| (-f).max(0.0).powi(2) * h * h).sum::<f64>().sqrt();
        let diam = 2.0 * self.grid.r;
        let excess = (max_u - self.boundary_max).max(0.0);
        let scale = 1e-12 * (self.boundary_max.abs() + max_u.abs() + 1e-300);
        let c_abp = if excess <= scale {
            0.0
        } else if f_minus_norm > 0.0 {
            excess / (diam * f_minus_norm)
        } else {
            f64::INFINITY
        };
        AbpReport {
            max_u,
            max_boundary: self.boundary_max,
            diam,
            f_minus_norm,
            c_abp,
            maximum_principle: f_minus_norm > 0.0 || excess <= scale,
        }
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            operator: self.operator,
            nodes: self.values.len(),
            h: self.grid.h,
            r: self.grid.r,
            residual: self.residual,
            tolerance: self.tolerance,
            iterations: self.policy_rounds,
            monotonicity: self.certificate.clone(),
            abp: self.abp_check(),
        }
    }

    /// `x1,x2,u` rows in node order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2,u\n");
        for (k, v) in self.values.iter().enumerate() {
            let p = self.point(k);
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p[0], p[1], v));
        }
        s
    }

    /// Bilinear interpolation from the four surrounding nodes. Cells cut by
    /// the graph fall back to vertical interpolation toward the boundary
    /// data in each of the two grid columns.
    pub fn interpolate(&self, p: [f64; 2]) -> Option<f64> {
        let h = self.grid.h;
        let (fx, fy) = (p[0] / h, p[1] / h);
        let (i0, j0) = (fx.floor() as i64, fy.floor() as i64);
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let corners = [
            self.value_at_node(i0, j0),
            self.value_at_node(i0 + 1, j0),
            self.value_at_node(i0, j0 + 1),
            self.value_at_node(i0 + 1, j0 + 1),
        ];
        if let [Some(a), Some(b), Some(c), Some(d)] = corners {
            return Some((1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d));
        }
        let column = |i: i64| -> Option<f64> {
            let x = i as f64 * h;
            let upper = self.value_at_node(i, j0 + 1)?;
            let y_up = (j0 + 1) as f64 * h;
            let (y_lo, lo) = match self.value_at_node(i, j0) {
                Some(v) => (j0 as f64 * h, v),
                None => {
                    let yb = self.graph.gamma(&[x]);
                    (yb, (self.dirichlet)(&[x, yb], BoundaryPiece::Graph))
                }
            };
            if y_up <= y_lo {
                return None;
            }
            let t = (p[1] - y_lo) / (y_up - y_lo);
            Some(lo + t * (upper - lo))
        };
        let (a, b) = (column(i0)?, column(i0 + 1)?);
        Some((1.0 - tx) * a + tx * b)
    }
}
