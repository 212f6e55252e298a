//! Directed interaction graphs with leader pinning.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{eigenvalues_general, LinalgError, Mat};
use crate::riccati::Radius;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("adjacency must be square with one pinning gain per agent (got {rows}x{cols}, {pins} gains)")]
    Shape { rows: usize, cols: usize, pins: usize },
    #[error("adjacency entry ({i}, {j}) must be finite and nonnegative, got {value}")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("pinning gain of agent {i} must be finite and nonnegative, got {value}")]
    NegativePin { i: usize, value: f64 },
    #[error("edge ({from} -> {to}) references an agent outside 0..{n}")]
    EdgeOutOfRange { from: usize, to: usize, n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Directed edge: agent `to` receives the state of agent `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Edge {
    pub fn unit(from: usize, to: usize) -> Self {
        Self { from, to, weight: 1.0 }
    }
}

/// `a_ij > 0` means agent `i` listens to agent `j`; `g_i > 0` means agent `i` observes the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    adjacency: Mat,
    pinning: Vec<f64>,
}

impl InteractionGraph {
    pub fn new(adjacency: Mat, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols || pinning.len() != rows {
            return Err(GraphError::Shape { rows, cols, pins: pinning.len() });
        }
        for i in 0..rows {
            for j in 0..cols {
                let value = adjacency[(i, j)];
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(GraphError::NegativeWeight { i, j, value });
                }
                if i == j && value != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
            }
        }
        if let Some((i, &value)) = pinning.iter().enumerate().find(|(_, g)| !(**g >= 0.0) || !g.is_finite()) {
            return Err(GraphError::NegativePin { i, value });
        }
        Ok(Self { adjacency, pinning })
    }

    pub fn from_edges(n: usize, edges: &[Edge], pinning: Vec<f64>) -> Result<Self, GraphError> {
        let mut a = Mat::zeros(n, n);
        for e in edges {
            if e.from >= n || e.to >= n {
                return Err(GraphError::EdgeOutOfRange { from: e.from, to: e.to, n });
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.to));
            }
            a[(e.to, e.from)] = e.weight;
        }
        Self::new(a, pinning)
    }

    pub fn len(&self) -> usize {
        self.pinning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinning.is_empty()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    pub fn in_degree(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.adjacency.row_slice(i).iter().sum()).collect()
    }

    /// `ℒ = 𝒟 − 𝒜`.
    pub fn laplacian(&self) -> Mat {
        &Mat::diag(&self.in_degree()) - &self.adjacency
    }

    /// `Γ = (I + 𝒟 + 𝒢)⁻¹ (ℒ + 𝒢)` by row scaling, with its spectrum.
    pub fn gamma(&self) -> Result<GammaMatrix, GraphError> {
        let n = self.len();
        let d = self.in_degree();
        let mut g = &self.laplacian() + &Mat::diag(&self.pinning);
        for i in 0..n {
            let s = 1.0 / (1.0 + d[i] + self.pinning[i]);
            for j in 0..n {
                g[(i, j)] *= s;
            }
        }
        let eigenvalues = eigenvalues_general(&g)?;
        Ok(GammaMatrix { gamma: g, eigenvalues })
    }

    /// Agents reachable from the leader along directed edges.
    fn reachable_from(&self, sources: &[usize]) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = sources.to_vec();
        for &s in sources {
            seen[s] = true;
        }
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !seen[i] && self.adjacency[(i, j)] > 0.0 {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    }

    /// Whether the leader reaches every agent in the leader-augmented graph.
    ///
    /// The returned root is the lowest-indexed pinned agent that reaches every
    /// other agent on its own, when one exists.
    pub fn pinned_spanning_tree(&self) -> PinningCheck {
        let pinned: Vec<usize> = (0..self.len()).filter(|&i| self.pinning[i] > 0.0).collect();
        let connected = !self.is_empty() && self.reachable_from(&pinned).iter().all(|&r| r);
        let root = pinned.iter().copied().find(|&r| self.reachable_from(&[r]).iter().all(|&x| x));
        PinningCheck { connected, root }
    }

    pub fn has_pinned_spanning_tree(&self) -> bool {
        self.pinned_spanning_tree().connected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinningCheck {
    pub connected: bool,
    pub root: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix {
    pub gamma: Mat,
    pub eigenvalues: Vec<Complex64>,
}

/// Circle `C(c₀, r₀)` in the complex plane centred on the real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub c0: f64,
    pub r0: f64,
}

impl Circle {
    pub fn ratio(&self) -> f64 {
        self.r0 / self.c0
    }

    pub fn strictly_contains(&self, z: Complex64) -> bool {
        (z - self.c0).norm() < self.r0
    }
}

/// All `|Λ_i − c₀| < r₀` and `r₀/c₀ < r`.
pub fn circle_condition(eigenvalues: &[Complex64], circle: Circle, r: Radius) -> bool {
    if !(circle.c0 > 0.0) || !(circle.r0 >= 0.0) {
        return false;
    }
    let inside = eigenvalues.iter().all(|z| circle.strictly_contains(*z));
    let ratio_ok = match r {
        Radius::Finite(r) => circle.ratio() < r,
        Radius::Unconstrained => true,
    };
    inside && ratio_ok
}

/// Circle centred on the positive real axis with the smallest `r₀/c₀` that
/// strictly encloses every eigenvalue.
///
/// In `s = 1/c₀` the squared ratio of each eigenvalue is a convex quadratic,
/// so golden-section search on the pointwise maximum finds the optimum.
pub fn smallest_ratio_circle(eigenvalues: &[Complex64]) -> Option<Circle> {
    if eigenvalues.is_empty() || eigenvalues.iter().any(|z| z.re <= 0.0) {
        return None;
    }
    let ratio_sq = |s: f64| -> f64 {
        eigenvalues.iter().map(|z| (z.norm_sqr() * s - 2.0 * z.re) * s + 1.0).fold(f64::NEG_INFINITY, f64::max)
    };
    let hi = eigenvalues.iter().map(|z| z.re / z.norm_sqr()).fold(0.0, f64::max) * 2.0;
    let (mut a, mut b) = (0.0, hi);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if ratio_sq(x1) < ratio_sq(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let s = 0.5 * (a + b);
    let c0 = 1.0 / s;
    let far = eigenvalues.iter().map(|z| (z - c0).norm()).fold(0.0, f64::max);
    Some(Circle { c0, r0: far * (1.0 + 1e-9) + 1e-12 })
}
