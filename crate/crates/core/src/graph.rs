//! Directed weighted graphs and the signed-graph algebra used by the
//! opinion layer.
//!
//! Entry `(i, j)` of every adjacency matrix is the weight of the edge
//! `v_j → v_i`. Weights with magnitude below [`STRUCTURAL_ZERO`] are treated
//! as absent edges.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

/// Weights below this magnitude are structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("weight ({i}, {j}) = {value} is negative or not finite")]
    InvalidWeight { i: usize, j: usize, value: f64 },
}

fn validate_adjacency(m: &DMatrix<f64>) -> Result<(), GraphError> {
    if m.nrows() != m.ncols() {
        return Err(GraphError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(GraphError::Empty);
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let value = m[(i, j)];
            if !value.is_finite() || value < 0.0 {
                return Err(GraphError::InvalidWeight { i, j, value });
            }
        }
        if m[(i, i)] != 0.0 {
            return Err(GraphError::SelfLoop(i));
        }
    }
    Ok(())
}

/// Graph over which the epidemic spreads. Weights are non-negative with a
/// zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedWeightedGraph {
    adjacency: DMatrix<f64>,
}

impl DirectedWeightedGraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        validate_adjacency(&adjacency)?;
        Ok(Self { adjacency })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Unweighted 0/1 adjacency of the edge support.
    pub fn support(&self) -> DMatrix<f64> {
        support(&self.adjacency)
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(&self.adjacency)
    }
}

/// Magnitudes `|ā_ij|` of the signed opinion graph. The signs are not stored;
/// they come from the gauge of the current opinions.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionMagnitudeGraph {
    magnitudes: DMatrix<f64>,
}

impl OpinionMagnitudeGraph {
    pub fn new(magnitudes: DMatrix<f64>) -> Result<Self, GraphError> {
        validate_adjacency(&magnitudes)?;
        Ok(Self { magnitudes })
    }

    pub fn n(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn magnitudes(&self) -> &DMatrix<f64> {
        &self.magnitudes
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(&self.magnitudes)
    }

    /// Unsigned Laplacian `K̄ - Ā_u`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.magnitudes)
    }

    /// Signed adjacency `Φ Ā_u Φ` for the given gauge.
    pub fn signed_adjacency(&self, gauge: &GaugeVector) -> DMatrix<f64> {
        gauge.conjugate(&self.magnitudes)
    }
}

pub fn support(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|w| if w.abs() > STRUCTURAL_ZERO { 1.0 } else { 0.0 })
}

/// True iff every node reaches every other node over edges of non-negligible
/// weight, i.e. the support of `m` is irreducible.
pub fn is_strongly_connected(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 {
        return false;
    }
    let edge = |from: usize, to: usize| m[(to, from)].abs() > STRUCTURAL_ZERO;
    // Forward and backward reachability from node 0 both cover the graph.
    let reach = |forward: bool| {
        let mut seen = alloc::vec![false; n];
        let mut stack = alloc::vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let linked = if forward { edge(u, v) } else { edge(v, u) };
                if linked && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Graph Laplacian `K - A` with `K_ii = Σ_j |a_ij|`.
pub fn laplacian(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut l = -m.clone();
    for i in 0..n {
        let degree: f64 = m.row(i).iter().map(|w| w.abs()).sum();
        l[(i, i)] = degree - m[(i, i)];
    }
    l
}

/// Modified sign: `+1` for `v >= 0`, `-1` otherwise.
#[inline]
pub fn sgnm(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Diagonal of a gauge transformation `Φ`, one `±1` per community.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GaugeVector {
    signs: Vec<i8>,
}

impl GaugeVector {
    /// Panics if a sign is not `±1`.
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(
            signs.iter().all(|&s| s == 1 || s == -1),
            "gauge entries must be +1 or -1"
        );
        Self { signs }
    }

    pub fn uniform(n: usize, sign: i8) -> Self {
        Self::new(alloc::vec![sign; n])
    }

    pub fn from_opinions<'a>(o: impl IntoIterator<Item = &'a f64>) -> Self {
        Self {
            signs: o.into_iter().map(|&v| sgnm(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.signs[i])
    }

    /// Both camps are non-empty.
    pub fn is_mixed(&self) -> bool {
        self.signs.contains(&1) && self.signs.contains(&-1)
    }

    /// Entrywise `φ_i m_ij φ_j`, i.e. `Φ M Φ`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.len());
        assert_eq!(m.ncols(), self.len());
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            if self.signs[i] == self.signs[j] {
                m[(i, j)]
            } else {
                -m[(i, j)]
            }
        })
    }

    /// Indices whose sign differs from `other`.
    pub fn differences<'a>(&'a self, other: &'a GaugeVector) -> impl Iterator<Item = usize> + 'a {
        self.signs
            .iter()
            .zip(&other.signs)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
    }
}

impl fmt::Debug for GaugeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, s) in self.signs.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            f.write_str(if *s > 0 { "+1" } else { "-1" })?;
        }
        f.write_str(")")
    }
}

/// Gauge of an opinion vector: `sgnm(o_i)` per community.
pub fn gauge_from_opinions(o: &[f64]) -> GaugeVector {
    GaugeVector::from_opinions(o)
}

/// Signed Laplacian `Φ L̄_u Φ`.
pub fn signed_laplacian(gauge: &GaugeVector, lu: &DMatrix<f64>) -> DMatrix<f64> {
    gauge.conjugate(lu)
}

/// Checks the two-camp condition on a signed adjacency: non-negative weights
/// inside each camp of `gauge`, non-positive weights across camps.
pub fn is_structurally_balanced(signed_adjacency: &DMatrix<f64>, gauge: &GaugeVector) -> bool {
    let n = signed_adjacency.nrows();
    (0..n).all(|i| {
        (0..n).all(|j| {
            let w = signed_adjacency[(i, j)];
            if gauge.signs[i] == gauge.signs[j] {
                w >= 0.0
            } else {
                w <= 0.0
            }
        })
    })
}
