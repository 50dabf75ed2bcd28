//! Exact rectangular assignment by the Hungarian method with potentials.

use crate::error::{ParaError, Result};

/// Optimization direction of a score matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Row-major score matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Vec<Vec<f64>>,
    pub sense: Sense,
}

impl ScoreMatrix {
    /// Builds a matrix, rejecting empty, ragged or non-finite input.
    pub fn new(scores: Vec<Vec<f64>>, sense: Sense) -> Result<Self> {
        let cols = scores.first().map_or(0, Vec::len);
        if scores.is_empty() || cols == 0 {
            return Err(ParaError::Dimension("score matrix must be non-empty".into()));
        }
        if scores.iter().any(|r| r.len() != cols) {
            return Err(ParaError::Dimension("score matrix rows differ in length".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ParaError::Domain("score matrix entries must be finite".into()));
        }
        Ok(Self { scores, sense })
    }

    pub fn rows(&self) -> usize {
        self.scores.len()
    }

    pub fn cols(&self) -> usize {
        self.scores[0].len()
    }
}

/// Optimal matching on the zero-padded square matrix with padded pairs removed.
///
/// Returned pairs are sorted by row. Ties resolve towards lower column indices.
pub fn optimal_assignment(m: &ScoreMatrix) -> Vec<(usize, usize)> {
    let (rows, cols) = (m.rows(), m.cols());
    let n = rows.max(cols);
    let sign = match m.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            sign * m.scores[i][j]
        } else {
            0.0
        }
    };
    // 1-based potentials formulation; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] >= 1 && p[j] - 1 < rows && j - 1 < cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total score of a list of pairs.
pub fn total_score(m: &ScoreMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| m.scores[i][j]).sum()
}
