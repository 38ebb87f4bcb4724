//! Stencil directions and nonnegative decompositions of coefficient
//! matrices over them.

use serde::{Deserialize, Serialize};

use crate::pucci::SymMatrix;

/// Which second-difference directions the scheme may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stencil {
    /// The two axis directions.
    Standard5,
    /// `2w` directions at angles `kπ/(2w)`, snapped to lattice vectors
    /// with sup-norm at most `w`.
    Wide { w: u32 },
}

impl Default for Stencil {
    fn default() -> Self {
        Stencil::Wide { w: 4 }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Stencil {
    /// Lattice directions in `[0, π)`, sorted by angle; index 0 is `e₁` and
    /// `e₂` is always present.
    pub fn directions(&self) -> Vec<[i64; 2]> {
        match *self {
            Stencil::Standard5 => vec![[1, 0], [0, 1]],
            Stencil::Wide { w } => {
                let w = w.max(1) as i64;
                let mut candidates = Vec::new();
                for b in 0..=w {
                    for a in -w..=w {
                        if (b == 0 && a <= 0) || gcd(a, b) != 1 {
                            continue;
                        }
                        candidates.push([a, b]);
                    }
                }
                let mut dirs: Vec<[i64; 2]> = Vec::new();
                for k in 0..2 * w {
                    let target = std::f64::consts::PI * k as f64 / (2 * w) as f64;
                    let mut best = candidates[0];
                    let mut best_err = f64::INFINITY;
                    for &c in &candidates {
                        let ang = (c[1] as f64).atan2(c[0] as f64);
                        let err = (ang - target).abs();
                        let len = c[0] * c[0] + c[1] * c[1];
                        let best_len = best[0] * best[0] + best[1] * best[1];
                        if err < best_err - 1e-9 || ((err - best_err).abs() <= 1e-9 && len < best_len) {
                            best = c;
                            best_err = err;
                        }
                    }
                    if !dirs.contains(&best) {
                        dirs.push(best);
                    }
                }
                dirs
            }
        }
    }
}

/// Unit vector and squared lattice length of a direction.
pub(crate) fn unit(v: [i64; 2]) -> ([f64; 2], f64) {
    let l2 = (v[0] * v[0] + v[1] * v[1]) as f64;
    let l = l2.sqrt();
    ([v[0] as f64 / l, v[1] as f64 / l], l2)
}

/// Nonnegative weights `α` with `Σ α_k û_k û_kᵀ = a`, minimizing
/// `Σ α_k |v_k|²`. Uses at most three directions; ties go to the
/// lexicographically first subset.
pub fn decompose(a: &SymMatrix, dirs: &[[i64; 2]]) -> Option<Vec<f64>> {
    let target = [a.get(0, 0), a.get(0, 1), a.get(1, 1)];
    let scale = target[0].abs() + target[2].abs();
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let rows: Vec<([f64; 3], f64)> = dirs
        .iter()
        .map(|&v| {
            let (u, l2) = unit(v);
            ([u[0] * u[0], u[0] * u[1], u[1] * u[1]], l2)
        })
        .collect();
    let n = dirs.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |subset: &[usize]| {
        let Some(alpha) = solve_subset(&rows, subset, &target) else { return };
        if alpha.iter().any(|&x| x < -tol) {
            return;
        }
        let mut full = vec![0.0; n];
        for (&k, &x) in subset.iter().zip(&alpha) {
            full[k] = x.max(0.0);
        }
        // Reject subsets that only match in a least-squares sense.
        let mut recon = [0.0; 3];
        for (k, &x) in full.iter().enumerate() {
            for c in 0..3 {
                recon[c] += x * rows[k].0[c];
            }
        }
        if recon.iter().zip(&target).any(|(r, t)| (r - t).abs() > 1e-10 * scale.max(1e-300)) {
            return;
        }
        let cost: f64 = full.iter().zip(&rows).map(|(x, r)| x * r.1).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < c - 1e-12 * c.abs()) {
            best = Some((cost, full));
        }
    };
    for i in 0..n {
        consider(&[i]);
        for j in i + 1..n {
            consider(&[i, j]);
            for k in j + 1..n {
                consider(&[i, j, k]);
            }
        }
    }
    best.map(|(_, a)| a)
}

/// Least-squares-free solve of the moment equations restricted to `subset`.
fn solve_subset(rows: &[([f64; 3], f64)], subset: &[usize], target: &[f64; 3]) -> Option<Vec<f64>> {
    match subset.len() {
        1 => {
            let r = rows[subset[0]].0;
            // Pick the largest component to divide by.
            let c = (0..3).max_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).unwrap();
            Some(vec![target[c] / r[c]])
        }
        2 => {
            // Solve on the best-conditioned pair of equations.
            let (r0, r1) = (rows[subset[0]].0, rows[subset[1]].0);
            let mut best: Option<(f64, Vec<f64>)> = None;
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let det = r0[p] * r1[q] - r1[p] * r0[q];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (target[p] * r1[q] - r1[p] * target[q]) / det;
                let y = (r0[p] * target[q] - target[p] * r0[q]) / det;
                if best.as_ref().is_none_or(|(d, _)| det.abs() > *d) {
                    best = Some((det.abs(), vec![x, y]));
                }
            }
            best.map(|(_, v)| v)
        }
        3 => {
            let m: Vec<[f64; 3]> = subset.iter().map(|&k| rows[k].0).collect();
            // Columns are directions, rows are moment components.
            let a = |r: usize, c: usize| m[c][r];
            let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
            if det.abs() < 1e-12 {
                return None;
            }
            let mut out = vec![0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let col = |r: usize, cc: usize| if cc == c { target[r] } else { a(r, cc) };
                let dc = col(0, 0) * (col(1, 1) * col(2, 2) - col(1, 2) * col(2, 1))
                    - col(0, 1) * (col(1, 0) * col(2, 2) - col(1, 2) * col(2, 0))
                    + col(0, 2) * (col(1, 0) * col(2, 1) - col(1, 1) * col(2, 0));
                *o = dc / det;
            }
            Some(out)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_four_directions() {
        let dirs = Stencil::Wide { w: 4 }.directions();
        assert_eq!(dirs, vec![[1, 0], [2, 1], [1, 1], [1, 2], [0, 1], [-1, 2], [-1, 1], [-2, 1]]);
    }

    #[test]
    fn decompositions_reproduce_matrix() {
        let dirs = Stencil::Wide { w: 4 }.directions();
        for a in [
            SymMatrix::identity(2),
            SymMatrix::diag(&[1.0, 2.0]),
            SymMatrix::from_rows(&[vec![1.5, 0.4], vec![0.4, 1.0]]),
            SymMatrix::from_rows(&[vec![1.0, -0.45], vec![-0.45, 1.2]]),
        ] {
            let alpha = decompose(&a, &dirs).unwrap();
            assert!(alpha.iter().all(|&x| x >= 0.0));
            let mut m = SymMatrix::zeros(2);
            for (k, &x) in alpha.iter().enumerate() {
                let (u, _) = unit(dirs[k]);
                m = m.add(&SymMatrix::outer(&u).scale(x));
            }
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m.get(i, j) - a.get(i, j)).abs() < 1e-12);
                }
            }
        }
        // Diagonal matrices use only the axes.
        let alpha = decompose(&SymMatrix::diag(&[1.0, 2.0]), &dirs).unwrap();
        assert_eq!(alpha.iter().filter(|&&x| x > 0.0).count(), 2);
        assert!(alpha[0] > 0.0 && alpha[4] > 0.0);
    }

    #[test]
    fn standard5_rejects_cross_terms() {
        let dirs = Stencil::Standard5.directions();
        assert!(decompose(&SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]), &dirs).is_none());
    }
}
