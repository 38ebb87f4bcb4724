//! Cartesian nodes of `Ω ∩ B_r` and their cut stencil arms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::BoundaryGraph;

/// Which part of `∂(Ω ∩ B_r)` a boundary point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPiece {
    /// `x₂ = Γ(x₁)` inside the ball.
    Graph,
    /// `|x| = r` above the graph.
    Arc,
}

/// Where a stencil arm ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Node(u32),
    Boundary { point: [f64; 2], piece: BoundaryPiece },
}

/// A shortened stencil arm: the neighbour sits at fraction `theta` of the
/// full lattice step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub theta: f64,
    pub target: Target,
}

/// Nodes `(i h, j h)` with `|x| < r` and `x₂ > Γ(x₁)`, in row-major order
/// (by `j`, then `i`).
#[derive(Debug, Clone)]
pub struct Grid {
    pub h: f64,
    pub r: f64,
    pub nodes: Vec<[i64; 2]>,
    pub dirs: Vec<[i64; 2]>,
    /// `2 · dirs.len()` arms per node: forward then backward for each direction.
    pub arms: Vec<Arm>,
    half: i64,
    lookup: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Grid {
    pub fn new(graph: &BoundaryGraph, r: f64, h: f64, dirs: Vec<[i64; 2]>) -> Self {
        let half = (r / h).ceil() as i64 + 1;
        let side = (2 * half + 1) as usize;
        let mut lookup = vec![NONE; side * side];
        let mut nodes = Vec::new();
        for j in -half..=half {
            for i in -half..=half {
                let p = [i as f64 * h, j as f64 * h];
                if inside(graph, r, p) {
                    lookup[((j + half) as usize) * side + (i + half) as usize] = nodes.len() as u32;
                    nodes.push([i, j]);
                }
            }
        }
        let mut grid = Self { h, r, nodes, dirs, arms: Vec::new(), half, lookup };
        let nd = grid.dirs.len();
        let arms: Vec<Vec<Arm>> = grid
            .nodes
            .par_iter()
            .map(|&node| {
                let mut out = Vec::with_capacity(2 * nd);
                for &v in &grid.dirs {
                    out.push(grid.arm(graph, node, v));
                    out.push(grid.arm(graph, node, [-v[0], -v[1]]));
                }
                out
            })
            .collect();
        grid.arms = arms.into_iter().flatten().collect();
        grid
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.nodes[k];
        [i as f64 * self.h, j as f64 * self.h]
    }

    /// Node index of lattice point `(i, j)`, if it is a node.
    pub fn index(&self, i: i64, j: i64) -> Option<usize> {
        if i.abs() > self.half || j.abs() > self.half {
            return None;
        }
        let side = (2 * self.half + 1) as usize;
        let v = self.lookup[((j + self.half) as usize) * side + (i + self.half) as usize];
        (v != NONE).then_some(v as usize)
    }

    pub fn arms_of(&self, k: usize) -> &[Arm] {
        let nd = 2 * self.dirs.len();
        &self.arms[k * nd..(k + 1) * nd]
    }

    fn arm(&self, graph: &BoundaryGraph, node: [i64; 2], v: [i64; 2]) -> Arm {
        let h = self.h;
        let p = [node[0] as f64 * h, node[1] as f64 * h];
        let d = [v[0] as f64 * h, v[1] as f64 * h];
        let end = self.index(node[0] + v[0], node[1] + v[1]);

        // Circle crossing: positive root of |p + θd|² = r².
        let a = d[0] * d[0] + d[1] * d[1];
        let b = 2.0 * (p[0] * d[0] + p[1] * d[1]);
        let c = p[0] * p[0] + p[1] * p[1] - self.r * self.r;
        let theta_c = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
        let limit = theta_c.min(1.0);

        // Graph crossing: first sign change of φ(θ) = p₂ + θd₂ - Γ(p₁ + θd₁).
        let phi = |t: f64| p[1] + t * d[1] - graph.gamma(&[p[0] + t * d[0]]);
        let phi0 = phi(0.0);
        let reach = d[1].abs() + graph.lip_global() * d[0].abs();
        let mut theta_g = f64::INFINITY;
        if phi0 <= reach * limit * (1.0 + 1e-12) {
            const SAMPLES: usize = 16;
            let mut lo = 0.0;
            for s in 1..=SAMPLES {
                let t = (s as f64 / SAMPLES as f64 * limit).min(limit);
                if phi(t) <= 0.0 {
                    let mut hi = t;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if phi(mid) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    theta_g = hi;
                    break;
                }
                lo = t;
            }
        }

        let (theta, piece) = if theta_g <= theta_c { (theta_g, BoundaryPiece::Graph) } else { (theta_c, BoundaryPiece::Arc) };
        match end {
            Some(idx) if theta >= 1.0 - 1e-12 => Arm { theta: 1.0, target: Target::Node(idx as u32) },
            _ => {
                let theta = theta.clamp(f64::MIN_POSITIVE, 1.0);
                let point = match piece {
                    BoundaryPiece::Graph => {
                        let x = p[0] + theta * d[0];
                        [x, graph.gamma(&[x])]
                    }
                    BoundaryPiece::Arc => {
                        let q = [p[0] + theta * d[0], p[1] + theta * d[1]];
                        let s = self.r / (q[0] * q[0] + q[1] * q[1]).sqrt();
                        [q[0] * s, q[1] * s]
                    }
                };
                Arm { theta, target: Target::Boundary { point, piece } }
            }
        }
    }
}

fn inside(graph: &BoundaryGraph, r: f64, p: [f64; 2]) -> bool {
    p[0] * p[0] + p[1] * p[1] < r * r && p[1] > graph.gamma(&[p[0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraphSpec;

    #[test]
    fn half_disk_arms() {
        let g = BoundaryGraph::new(&GraphSpec::Zero, 2, 1.0).unwrap();
        let grid = Grid::new(&g, 1.0, 0.25, vec![[1, 0], [0, 1]]);
        // Rows j = 1..3 of the open half disk.
        assert_eq!(grid.len(), 7 + 7 + 5);
        let k = grid.index(0, 1).unwrap();
        let arms = grid.arms_of(k);
        assert_eq!(arms[0].target, Target::Node(grid.index(1, 1).unwrap() as u32));
        // Downward arm reaches the flat graph exactly one step below.
        match arms[3].target {
            Target::Boundary { point, piece } => {
                assert_eq!(piece, BoundaryPiece::Graph);
                assert!((arms[3].theta - 1.0).abs() < 1e-12 && point[1] == 0.0);
            }
            t => panic!("{t:?}"),
        }
        // Rightward arm from (3h, 2h) hits the unit circle.
        let k = grid.index(3, 2).unwrap();
        let arm = grid.arms_of(k)[0];
        let expected = ((1.0f64 - 0.25).sqrt() - 0.75) / 0.25;
        assert!((arm.theta - expected).abs() < 1e-12, "{arm:?}");
    }
}
