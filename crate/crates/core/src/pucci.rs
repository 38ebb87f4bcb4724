//! Ellipticity pairs, small symmetric matrices and the Pucci extremal
//! operators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PucciError {
    #[error("ellipticity field `lambda` must be positive and finite, got {0}")]
    Lambda(f64),
    #[error("ellipticity field `Lambda` must be finite and >= lambda ({lambda}), got {cap}")]
    CapLambda { lambda: f64, cap: f64 },
}

/// `0 < λ <= Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct EllipticityPair {
    lambda: f64,
    cap_lambda: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    lambda: f64,
    #[serde(rename = "Lambda")]
    cap_lambda: f64,
}

impl TryFrom<RawPair> for EllipticityPair {
    type Error = PucciError;
    fn try_from(r: RawPair) -> Result<Self, PucciError> {
        Self::new(r.lambda, r.cap_lambda)
    }
}

impl From<EllipticityPair> for RawPair {
    fn from(e: EllipticityPair) -> Self {
        RawPair { lambda: e.lambda, cap_lambda: e.cap_lambda }
    }
}

impl EllipticityPair {
    pub fn new(lambda: f64, cap_lambda: f64) -> Result<Self, PucciError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(PucciError::Lambda(lambda));
        }
        if !(cap_lambda >= lambda && cap_lambda.is_finite()) {
            return Err(PucciError::CapLambda { lambda, cap: cap_lambda });
        }
        Ok(Self { lambda, cap_lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The upper constant `Λ`.
    pub fn cap_lambda(&self) -> f64 {
        self.cap_lambda
    }

    /// `M⁺(M) = Λ Σ eig⁺ + λ Σ eig⁻`.
    pub fn plus(&self, m: &SymMatrix) -> f64 {
        self.plus_from_eigs(&m.eigenvalues())
    }

    /// `M⁻(M) = λ Σ eig⁺ + Λ Σ eig⁻`.
    pub fn minus(&self, m: &SymMatrix) -> f64 {
        self.minus_from_eigs(&m.eigenvalues())
    }

    pub fn plus_from_eigs(&self, eigs: &[f64]) -> f64 {
        eigs.iter()
            .map(|&e| if e > 0.0 { self.cap_lambda * e } else { self.lambda * e })
            .sum()
    }

    pub fn minus_from_eigs(&self, eigs: &[f64]) -> f64 {
        eigs.iter()
            .map(|&e| if e > 0.0 { self.lambda * e } else { self.cap_lambda * e })
            .sum()
    }
}

/// Symmetric `n x n` matrix, `n <= 3`, stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    n: usize,
    upper: [f64; 6],
}

fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=3).contains(&n), "SymMatrix supports n <= 3");
        Self { n, upper: [0.0; 6] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Symmetrizes `rows` by averaging `(i, j)` and `(j, i)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        m
    }

    /// `a ⊗ a`.
    pub fn outer(a: &[f64]) -> Self {
        let mut m = Self::zeros(a.len());
        for i in 0..a.len() {
            for j in i..a.len() {
                m.set(i, j, a[i] * a[j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[packed(self.n, i, j)] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, t: f64) -> Self {
        let mut m = *self;
        m.upper.iter_mut().for_each(|v| *v *= t);
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = *self;
        m.upper.iter_mut().zip(&other.upper).for_each(|(a, b)| *a += b);
        m
    }

    /// `Tr(A M)`.
    pub fn trace_product(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.get(i, j) * other.get(j, i);
            }
        }
        s
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Cyclic Jacobi: ascending eigenvalues and the matching orthonormal
    /// eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut a = self.to_rows();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
        let frob = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        for _sweep in 0..64 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-12 * frob || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q] == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vkp, vkq) = (row[p], row[q]);
                        row[p] = c * vkp - s * vkq;
                        row[q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
        let eigs = order.iter().map(|&i| a[i][i]).collect();
        let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
        (eigs, vecs)
    }
}
