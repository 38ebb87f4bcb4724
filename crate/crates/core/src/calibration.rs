//! Calibrated constants, kept in their own JSON file so experiments never
//! carry stale copies.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::{
    check_special_solution_sandwich, fit_through_origin, minimal_epsilon, special_solution, BarrierError,
    BarrierKind, BarrierSamples,
};
use crate::config::CalibrateConfig;
use crate::geometry::{BoundaryGraph, GeometryError, GraphSpec};
use crate::modulus::ModulusSpec;
use crate::pucci::EllipticityPair;
use crate::regdist::{RegdistError, RegularizedDistanceField, DEFAULT_ORDER};
use crate::solver::Operator;

pub const CALIBRATION_SCHEMA: &str = "hopflab.calibration/1";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("calibration file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported calibration schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: &'static str },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Regdist(#[from] RegdistError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("no epsilon below 1/2 passes on {0}")]
    NoEpsilon(String),
}

/// The frozen constants plus the raw measurements they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub schema: String,
    pub ellipticity: EllipticityPair,
    pub safety_factor: f64,
    /// Sandwich and derivative constant of the regularized distance, 2-D.
    pub c_regdist_2d: f64,
    /// Same in 3-D.
    pub c_regdist_3d: f64,
    /// Barrier exponent selector `ε = C₀ · seminorm`.
    pub c0_barrier: f64,
    /// `‖φ_r - d‖ <= K r · seminorm` for special solutions.
    pub k_special: f64,
    /// Envelope constant of the growth estimates.
    pub c_growth: f64,
    /// Constant of the dyadic recursions.
    pub a_recursion: f64,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evidence {
    pub regdist_max_deficit_2d: f64,
    pub regdist_max_deficit_3d: f64,
    pub barrier_lips: Vec<f64>,
    /// Minimal passing `ε` on `cone(L)`, both barriers.
    pub barrier_min_cone: Vec<f64>,
    /// Same on the inverted cone `Γ = -L|x'|`.
    pub barrier_min_inverted: Vec<f64>,
    pub barrier_fit_slope: f64,
    pub barrier_fit_r2: f64,
    pub special_max_ratio: f64,
    pub sector_max_ratio: f64,
    pub recursion_max_ratio: f64,
}

/// `γ = π/(π - 2 arctan L)`: `r^γ` is the first sector harmonic of the
/// cone domain. Negative `L` gives the inverted cone.
pub fn sector_exponent(lip: f64) -> f64 {
    PI / (PI - 2.0 * lip.atan())
}

fn inverted_cone(lip: f64) -> GraphSpec {
    GraphSpec::C1model { omega: ModulusSpec::Constant { value: lip, t0: 4.0 }, sign: -1.0 }
}

const BARRIER_LIPS: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1];
const REGDIST_LIPS: [f64; 3] = [0.01, 0.05, 0.1];
const SPECIAL_LIPS: [f64; 3] = [0.02, 0.05, 0.1];
const SECTOR_LIPS: [f64; 4] = [0.05, 0.1, 0.2, 0.3];
/// Radius of barrier and special-solution sweeps.
pub const CALIBRATION_RADIUS: f64 = 0.25;

impl Calibration {
    /// Round illustrative constants of the right size, for examples and unit tests.
    pub fn example() -> Self {
        Self {
            schema: CALIBRATION_SCHEMA.into(),
            ellipticity: EllipticityPair::new(1.0, 2.0).expect("valid pair"),
            safety_factor: 2.0,
            c_regdist_2d: 3.5,
            c_regdist_3d: 3.0,
            c0_barrier: 7.0,
            k_special: 1.0,
            c_growth: 1.5,
            a_recursion: 0.5,
            evidence: Evidence {
                regdist_max_deficit_2d: 1.75,
                regdist_max_deficit_3d: 1.5,
                barrier_lips: vec![],
                barrier_min_cone: vec![],
                barrier_min_inverted: vec![],
                barrier_fit_slope: 3.5,
                barrier_fit_r2: 1.0,
                special_max_ratio: 0.5,
                sector_max_ratio: 0.75,
                recursion_max_ratio: 0.25,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let cal: Self = serde_json::from_str(text)?;
        if cal.schema != CALIBRATION_SCHEMA {
            return Err(CalibrationError::Schema { found: cal.schema, expected: CALIBRATION_SCHEMA });
        }
        Ok(cal)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CalibrationError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| CalibrationError::Io { path: path.display().to_string(), source })
    }

    /// `Ĉ` for dimension `n`.
    pub fn c_regdist(&self, dim: usize) -> f64 {
        if dim == 3 {
            self.c_regdist_3d
        } else {
            self.c_regdist_2d
        }
    }

    /// Runs every sweep. Deterministic given `cfg` and `seed`.
    pub fn compute(cfg: &CalibrateConfig, seed: u64) -> Result<Self, CalibrationError> {
        let s = cfg.safety_factor;
        let deficit_2d = regdist_deficit(2, cfg.regdist_points, seed)?;
        let deficit_3d = regdist_deficit(3, cfg.regdist_points_3d, seed)?;

        let min_cone = barrier_minima(&cfg.ellipticity, cfg.barrier_samples, seed, |l| GraphSpec::Cone { lip: l })?;
        let min_inv = barrier_minima(&cfg.ellipticity, cfg.barrier_samples, seed, inverted_cone)?;
        let (slope, r2) = fit_through_origin(&BARRIER_LIPS, &min_cone);
        let (slope_inv, _) = fit_through_origin(&BARRIER_LIPS, &min_inv);
        let pointwise = BARRIER_LIPS
            .iter()
            .zip(min_cone.iter().zip(&min_inv))
            .map(|(l, (a, b))| a.max(*b) / l)
            .fold(0.0f64, f64::max);
        let c0 = s * slope.max(slope_inv).max(pointwise);

        let special = SPECIAL_LIPS
            .iter()
            .map(|&l| special_ratio(l, cfg.special_h, c0))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0f64, f64::max);

        let sector = SECTOR_LIPS
            .iter()
            .map(|&l| ((sector_exponent(l) - 1.0) / l).max((1.0 - sector_exponent(-l)) / l))
            .fold(0.0f64, f64::max);
        let recursion = SECTOR_LIPS
            .iter()
            .map(|&l| {
                let down = 1.0 - 2f64.powf(1.0 - sector_exponent(l));
                let up = 2f64.powf(1.0 - sector_exponent(-l)) - 1.0;
                down.max(up) / (c0 * l)
            })
            .fold(0.0f64, f64::max);

        Ok(Self {
            schema: CALIBRATION_SCHEMA.into(),
            ellipticity: cfg.ellipticity,
            safety_factor: s,
            c_regdist_2d: s * deficit_2d,
            c_regdist_3d: s * deficit_3d,
            c0_barrier: c0,
            k_special: s * special,
            c_growth: (s * sector).max(1.0),
            a_recursion: s * recursion,
            evidence: Evidence {
                regdist_max_deficit_2d: deficit_2d,
                regdist_max_deficit_3d: deficit_3d,
                barrier_lips: BARRIER_LIPS.to_vec(),
                barrier_min_cone: min_cone,
                barrier_min_inverted: min_inv,
                barrier_fit_slope: slope,
                barrier_fit_r2: r2,
                special_max_ratio: special,
                sector_max_ratio: sector,
                recursion_max_ratio: recursion,
            },
        })
    }
}

fn field(spec: &GraphSpec, dim: usize) -> Result<RegularizedDistanceField, CalibrationError> {
    let graph = BoundaryGraph::new(spec, dim, 1.0)?;
    Ok(RegularizedDistanceField::new(graph, 0.5, DEFAULT_ORDER)?)
}

/// Largest normalized deficit over the zero, linear and cone families.
fn regdist_deficit(dim: usize, points: usize, seed: u64) -> Result<f64, CalibrationError> {
    let mut specs = vec![GraphSpec::Zero];
    for &l in &REGDIST_LIPS {
        let mut a = vec![0.0; dim - 1];
        a[0] = l;
        specs.push(GraphSpec::Linear { a });
        specs.push(GraphSpec::Cone { lip: l });
    }
    let mut worst = 0.0f64;
    for (i, spec) in specs.iter().enumerate() {
        let f = field(spec, dim)?;
        let pts = f.random_points(points, seed.wrapping_add(i as u64));
        for sample in f.sandwich_sweep(&pts)? {
            let v = sample.normalized_deficit();
            if v.is_finite() {
                worst = worst.max(v);
            }
        }
    }
    Ok(worst)
}

/// Minimal `ε` passing both barrier checks, for each `L` of the sweep.
fn barrier_minima(
    e: &EllipticityPair,
    count: usize,
    seed: u64,
    spec: impl Fn(f64) -> GraphSpec + Sync,
) -> Result<Vec<f64>, CalibrationError> {
    BARRIER_LIPS
        .par_iter()
        .enumerate()
        .map(|(i, &l)| {
            let s = spec(l);
            let f = field(&s, 2)?;
            let r = CALIBRATION_RADIUS;
            let samples = BarrierSamples::random(&f, r, count, 1e-3 * r, seed.wrapping_add(i as u64))?;
            let mut worst = 0.0f64;
            for kind in [BarrierKind::Sub, BarrierKind::Super] {
                let eps = minimal_epsilon(kind, e, &samples).ok_or_else(|| CalibrationError::NoEpsilon(format!("{s:?}")))?;
                worst = worst.max(eps);
            }
            Ok(worst)
        })
        .collect()
}

/// `max |φ_r - d| / (r S)` for the Laplacian special solution on `cone(L)`.
fn special_ratio(lip: f64, h: f64, c0: f64) -> Result<f64, CalibrationError> {
    let f = field(&GraphSpec::Cone { lip }, 2)?;
    let r = CALIBRATION_RADIUS;
    let phi = special_solution(&f, r, h, Operator::Laplace)?;
    let rep = check_special_solution_sandwich(&phi, &f, (c0 * lip).min(0.49), r, 0.0, 5.0)?;
    Ok(rep.deviation / (r * rep.seminorm))
}
