//! Dyadic growth experiments.
//!
//! Level `k` solves on `Ω ∩ B_{2^{1-k}}` with spacing `2^{-k} h0`; the outer
//! arc takes its data from level `k - 1`, the graph keeps `g`. Each level
//! contributes `q_k = u(r_k e₂)/r_k` and `m_k = ‖v‖_{L∞(B_{r_k})}/r_k` at
//! `r_k = 2^{-k}`, with `v = u - g(0) - ∂₁g(0) x₁`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::Calibration;
use crate::config::{ConfigError, GrowthConfig};
use crate::geometry::{BoundaryGraph, GeometryError};
use crate::modulus::{CompositeModulus, Modulus, ModulusError};
use crate::solver::{BoundaryPiece, GridProblem, GridSolution, SolverError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error("level {level}: {source}")]
    Solver { level: u32, source: SolverError },
    #[error("level {level} could not take boundary data from level {} at {point:?}", level - 1)]
    ScaleMismatch { level: u32, point: [f64; 2] },
    #[error("level {level}: cannot sample u at {point:?}")]
    Sample { level: u32, point: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    /// Lower growth of a nonnegative solution.
    Growth,
    /// Upper growth of `v` and the boundary modulus `ω̃`.
    BoundaryModulus,
}

/// One row of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthLevel {
    pub k: u32,
    pub r: f64,
    pub h: f64,
    pub nodes: usize,
    pub q: f64,
    pub m: f64,
    /// Lower envelope `(1/C) q_ref exp(-C ∫_{r_k}^{2 r_ref} ω ds/s)`, from the reference level on.
    pub lower: Option<f64>,
    /// Upper envelope for `q` (growth) or `m` (boundary modulus).
    pub upper: Option<f64>,
    pub epsilon: f64,
    pub c: f64,
    pub d: f64,
    /// `m_k r_k / ω̃(r_k)`.
    pub omega_tilde_ratio: Option<f64>,
    pub residual: f64,
    pub policy_rounds: usize,
}

/// Least-squares line with intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// `Σ_{j<k} ω(2^{-j} s)` against `∫_{2^{-k} s}^{2s} ω dt/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumIntegral {
    pub sum: f64,
    pub integral: f64,
    /// `integral / sum`; expected in `[ln 2, 2 ln 2]`.
    pub ratio: f64,
    pub holds: bool,
}

/// The recursions of the iteration with calibrated constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub k: u32,
    pub epsilon: f64,
    /// `c_k = (1 - A ε_{k-1}) c_{k-1}`, `c_{k_min} = 1`.
    pub c: f64,
    /// `4^{-A Σ_{j<k} ε_j}`.
    pub c_product_bound: f64,
    /// `c⁺_k = (1 + A ε_{k-1}) c⁺_{k-1} + A d_{k-1}`.
    pub c_upper: f64,
    /// `ω_g(2^{-k-1}) + C ω_f(2^{-k-1})`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub mode: GrowthMode,
    pub pass: bool,
    pub levels: Vec<GrowthLevel>,
    pub ref_level: u32,
    /// `log q_k` against `log r_k` over `k_min < k < k_max`.
    pub q_fit: Option<LineFit>,
    /// `log m_k` against `log r_k`.
    pub m_fit: Option<LineFit>,
    /// `log m_k` against `log log(1/r_k)`.
    pub m_loglog_fit: Option<LineFit>,
    pub positive: bool,
    /// Levels outside their envelopes.
    pub violations: Vec<u32>,
    /// `|log q_{k_max} - log q_ref|`.
    pub drift: Option<f64>,
    /// `C ∫_{r_{k_max}}^{2 r_ref} ω ds/s`.
    pub drift_bound: f64,
    pub sum_integral: SumIntegral,
    /// `‖u‖_{L∞}` over the first level's nodes.
    pub u_sup: f64,
    pub c_growth: f64,
    pub c0_barrier: f64,
    pub a_recursion: f64,
}

impl GrowthReport {
    pub fn csv_header() -> &'static str {
        "k,r_k,q_k,m_k,E_minus,E_plus,eps_k,c_k,d_k"
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut s = format!("{}\n", Self::csv_header());
        for l in &self.levels {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e}\n",
                l.k,
                l.r,
                l.q,
                l.m,
                opt(l.lower),
                opt(l.upper),
                l.epsilon,
                l.c,
                l.d
            ));
        }
        s
    }
}

/// Least squares `y ≈ slope x + intercept`; `None` with fewer than two
/// finite points.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LineFit { slope, intercept: my - slope * mx, r2, points: n })
}

/// Compares the dyadic sum with the integral; needs `2s` inside the domain of `ω`.
pub fn sum_integral_check(omega: &Modulus, k: u32, s: f64) -> Result<SumIntegral, ModulusError> {
    let mut sum = 0.0;
    for j in 0..k {
        sum += omega.eval(s * 2f64.powi(-(j as i32)))?;
    }
    let integral = omega.dini_integral(s * 2f64.powi(-(k as i32)), 2.0 * s)?;
    let ln2 = std::f64::consts::LN_2;
    let (ratio, holds) = if sum == 0.0 {
        (f64::NAN, integral == 0.0)
    } else {
        let ratio = integral / sum;
        (ratio, ratio >= ln2 * (1.0 - 1e-9) && ratio <= 2.0 * ln2 * (1.0 + 1e-9))
    };
    Ok(SumIntegral { sum, integral, ratio, holds })
}

/// The envelope modulus of a config: `omega` if given, else the graph's own.
pub fn envelope_modulus(cfg: &GrowthConfig, graph: &BoundaryGraph) -> Result<Modulus, HarnessError> {
    Ok(match &cfg.omega {
        Some(spec) => Modulus::from_spec(spec)?,
        None => graph.geometric_modulus(4.0 * cfg.top_radius())?,
    })
}

/// `ε_k`, `c_k`, `d_k` for `k_min <= k <= k_max`, no solves involved.
pub fn diagnostic_sequences(cfg: &GrowthConfig, cal: &Calibration) -> Result<Vec<DiagnosticRow>, HarnessError> {
    cfg.validate()?;
    let graph = BoundaryGraph::new(&cfg.graph, 2, cfg.top_radius())?;
    let a = cal.a_recursion;
    let mut rows: Vec<DiagnosticRow> = Vec::new();
    let mut eps_sum = 0.0;
    for k in cfg.k_min..=cfg.k_max {
        let epsilon = cal.c0_barrier * graph.local_lip_seminorm(2f64.powi(-(k as i32)));
        let d = cfg.data.omega_f(2f64.powi(-(k as i32) - 1)) * cal.c_growth;
        let (c, c_upper) = match rows.last() {
            None => (1.0, 1.0),
            Some(p) => ((1.0 - a * p.epsilon) * p.c, (1.0 + a * p.epsilon) * p.c_upper + a * p.d),
        };
        rows.push(DiagnosticRow { k, epsilon, c, c_product_bound: 4f64.powf(-a * eps_sum), c_upper, d });
        eps_sum += epsilon;
    }
    Ok(rows)
}

/// Value of a solution at `p`, walking up the grid column when the cell is
/// cut by the graph.
fn sample(sol: &GridSolution, p: [f64; 2]) -> Option<f64> {
    if let Some(v) = sol.interpolate(p) {
        return Some(v);
    }
    let h = sol.h();
    let yb = sol.graph.gamma(&[p[0]]);
    let gb = (sol.dirichlet)(&[p[0], yb], BoundaryPiece::Graph);
    let j0 = (p[1] / h).floor();
    for m in 1..=4 {
        let y = (j0 + m as f64) * h;
        if let Some(v) = sol.interpolate([p[0], y]) {
            return Some(gb + (p[1] - yb) / (y - yb) * (v - gb));
        }
    }
    None
}

struct Level {
    k: u32,
    sol: GridSolution,
}

fn cascade(cfg: &GrowthConfig, graph: &BoundaryGraph) -> Result<Vec<Level>, HarnessError> {
    let operator = cfg.operator.build()?;
    let mut levels: Vec<Level> = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let r = 2f64.powi(1 - k as i32);
        let h = 2f64.powi(-(k as i32)) * cfg.h0;
        let dirichlet = match levels.last() {
            None => cfg.data.dirichlet(graph),
            Some(prev) => {
                let prev = Arc::new(prev.sol.clone());
                let g = cfg.data.g;
                Arc::new(move |x: &[f64; 2], piece: BoundaryPiece| match piece {
                    BoundaryPiece::Graph => g.eval(x),
                    BoundaryPiece::Arc => sample(&prev, *x).unwrap_or(f64::NAN),
                }) as crate::solver::BoundaryFn
            }
        };
        let problem = GridProblem {
            graph: graph.clone(),
            r,
            h,
            operator: operator.clone(),
            rhs: cfg.data.rhs(),
            dirichlet,
            stencil: cfg.stencil,
        };
        let sol = problem.solve().map_err(|source| match source {
            SolverError::NonFinite(_) if k > cfg.k_min => {
                HarnessError::ScaleMismatch { level: k, point: [r, 0.0] }
            }
            source => HarnessError::Solver { level: k, source },
        })?;
        levels.push(Level { k, sol });
    }
    Ok(levels)
}

/// Runs the cascade and assembles the report in either mode.
pub fn run_cascade(cfg: &GrowthConfig, cal: &Calibration, mode: GrowthMode) -> Result<GrowthReport, HarnessError> {
    cfg.validate()?;
    let top = cfg.top_radius();
    let graph = BoundaryGraph::new(&cfg.graph, 2, top)?;
    let omega = envelope_modulus(cfg, &graph)?;
    let diag = diagnostic_sequences(cfg, cal)?;
    let levels = cascade(cfg, &graph)?;
    let c = cal.c_growth;

    let mut q = Vec::with_capacity(levels.len());
    let mut m = Vec::with_capacity(levels.len());
    for l in &levels {
        let r = 2f64.powi(-(l.k as i32));
        let v = sample(&l.sol, [0.0, r]).ok_or(HarnessError::Sample { level: l.k, point: [0.0, r] })?;
        q.push(v / r);
        let mut sup: f64 = 0.0;
        for (idx, &u) in l.sol.values.iter().enumerate() {
            let x = l.sol.point(idx);
            if x[0] * x[0] + x[1] * x[1] <= r * r {
                sup = sup.max((u - cfg.data.linear_part(&x)).abs());
            }
        }
        m.push(sup / r);
    }

    let ref_level = cfg.ref_level();
    let iref = (ref_level - cfg.k_min) as usize;
    let r_ref = 2f64.powi(-(ref_level as i32));
    let u_sup = levels[0].sol.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let omega_tilde = if u_sup > 0.0 {
        let forcing = if cfg.data.f == 0.0 {
            Modulus::constant(0.0, 2.0 * top)?
        } else {
            Modulus::power(1.0, cfg.data.omega_f(1.0), 2.0 * top)?
        };
        Some(CompositeModulus::new(u_sup / top, top, c, forcing, omega.clone())?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(levels.len());
    let mut violations = Vec::new();
    for (i, l) in levels.iter().enumerate() {
        let r = 2f64.powi(-(l.k as i32));
        let (lower, upper) = if i >= iref {
            let int = omega.dini_integral(r, 2.0 * r_ref)?;
            let forcing = cfg.data.forcing_integral(r, 2.0 * r_ref);
            let lower = q[iref] / c * (-c * int).exp();
            let base = match mode {
                GrowthMode::Growth => q[iref],
                GrowthMode::BoundaryModulus => m[iref],
            };
            (Some(lower), Some(c * (base + forcing) * (c * int).exp()))
        } else {
            (None, None)
        };
        let omega_tilde_ratio = match &omega_tilde {
            Some(w) if r < top => Some(m[i] * r / w.eval_formula(r)?),
            _ => None,
        };
        if i > iref {
            let inside = match mode {
                GrowthMode::Growth => lower.is_some_and(|lo| q[i] >= lo) && upper.is_some_and(|up| q[i] <= up),
                GrowthMode::BoundaryModulus => {
                    upper.is_some_and(|up| m[i] <= up) && omega_tilde_ratio.is_none_or(|x| x <= c)
                }
            };
            if !inside {
                violations.push(l.k);
            }
        }
        let dg = &diag[i];
        rows.push(GrowthLevel {
            k: l.k,
            r,
            h: l.sol.h(),
            nodes: l.sol.values.len(),
            q: q[i],
            m: m[i],
            lower,
            upper,
            epsilon: dg.epsilon,
            c: dg.c,
            d: dg.d,
            omega_tilde_ratio,
            residual: l.sol.residual,
            policy_rounds: l.sol.policy_rounds,
        });
    }

    let fit_range = 1..levels.len() - 1;
    let log_r: Vec<f64> = rows[fit_range.clone()].iter().map(|l| l.r.ln()).collect();
    let loglog_r: Vec<f64> = rows[fit_range.clone()].iter().map(|l| (1.0 / l.r).ln().ln()).collect();
    let log_q: Vec<f64> = q[fit_range.clone()].iter().map(|v| v.ln()).collect();
    let log_m: Vec<f64> = m[fit_range].iter().map(|v| v.ln()).collect();

    let positive = q.iter().all(|&v| v > 0.0);
    let last = levels.len() - 1;
    let drift = (q[iref] > 0.0 && q[last] > 0.0).then(|| (q[last] / q[iref]).ln().abs());
    let drift_bound = c * omega.dini_integral(rows[last].r, 2.0 * r_ref)?;
    let sum_integral = sum_integral_check(&omega, cfg.k_max - ref_level, r_ref)?;
    let pass = violations.is_empty()
        && match mode {
            GrowthMode::Growth => positive && drift.is_some_and(|d| d <= drift_bound + 1e-12),
            GrowthMode::BoundaryModulus => true,
        };
    Ok(GrowthReport {
        mode,
        pass,
        levels: rows,
        ref_level,
        q_fit: fit_line(&log_r, &log_q),
        m_fit: fit_line(&log_r, &log_m),
        m_loglog_fit: fit_line(&loglog_r, &log_m),
        positive,
        violations,
        drift,
        drift_bound,
        sum_integral,
        u_sup,
        c_growth: c,
        c0_barrier: cal.c0_barrier,
        a_recursion: cal.a_recursion,
    })
}

/// The lower-growth cascade of a nonnegative solution.
pub fn measure_growth(cfg: &GrowthConfig, cal: &Calibration) -> Result<GrowthReport, HarnessError> {
    run_cascade(cfg, cal, GrowthMode::Growth)
}

/// The upper-growth cascade of `v = u - g(0) - ∂₁g(0) x₁`.
pub fn measure_boundary_modulus(cfg: &GrowthConfig, cal: &Calibration) -> Result<GrowthReport, HarnessError> {
    run_cascade(cfg, cal, GrowthMode::BoundaryModulus)
}

/// Largest relative change of `q_k` when `h0` is halved.
pub fn refinement_stability(cfg: &GrowthConfig, cal: &Calibration) -> Result<f64, HarnessError> {
    let coarse = measure_growth(cfg, cal)?;
    let fine = measure_growth(&GrowthConfig { h0: 0.5 * cfg.h0, ..cfg.clone() }, cal)?;
    Ok(coarse
        .levels
        .iter()
        .zip(&fine.levels)
        .map(|(a, b)| ((a.q - b.q) / b.q).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraphSpec;

    fn flat(k_max: u32) -> GrowthConfig {
        serde_json::from_value(serde_json::json!({"graph": {"family": "zero"}, "k_max": k_max, "h0": 0.125})).unwrap()
    }

    #[test]
    fn flat_cascade_is_exact() {
        let rep = measure_growth(&flat(5), &Calibration::example()).unwrap();
        for l in &rep.levels {
            assert!((l.q - 1.0).abs() < 1e-12, "{l:?}");
            assert!((l.m - 1.0).abs() < 1e-12, "{l:?}");
            assert_eq!(l.epsilon, 0.0);
            assert_eq!(l.c, 1.0);
        }
        assert!(rep.pass);
        assert!(rep.q_fit.unwrap().slope.abs() < 1e-10);
    }

    #[test]
    fn linear_data_is_subtracted() {
        let mut cfg = flat(4);
        cfg.data.g.a = [1.0, 0.0];
        cfg.data.amplitude = 0.0;
        let rep = measure_boundary_modulus(&cfg, &Calibration::example()).unwrap();
        assert!(rep.levels.iter().all(|l| l.m < 1e-12), "{:?}", rep.levels);
    }

    #[test]
    fn cone_recursion_is_geometric() {
        let mut cfg = flat(6);
        cfg.graph = GraphSpec::Cone { lip: 0.05 };
        let cal = Calibration::example();
        let rows = diagnostic_sequences(&cfg, &cal).unwrap();
        let rate = 1.0 - cal.a_recursion * cal.c0_barrier * 0.05;
        for w in rows.windows(2) {
            assert!((w[0].epsilon - cal.c0_barrier * 0.05).abs() < 1e-12);
            assert!((w[1].c / w[0].c - rate).abs() < 1e-12);
            assert!(w[1].c >= w[1].c_product_bound);
        }
    }

    #[test]
    fn line_fit() {
        let fit = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14 && (fit.intercept - 1.0).abs() < 1e-14 && fit.r2 == 1.0);
        assert!(fit_line(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn sum_integral_for_constant() {
        let w = Modulus::constant(0.3, 4.0).unwrap();
        let s = sum_integral_check(&w, 6, 1.0).unwrap();
        // ∫ = 0.3 · 7 ln 2 and Σ = 0.3 · 6.
        assert!((s.ratio - 7.0 * std::f64::consts::LN_2 / 6.0).abs() < 1e-12);
        assert!(s.holds);
    }
}
