//! Rounding of continuous association scores to one server per user.

use crate::assignment::{optimal_assignment, ScoreMatrix, Sense};
use crate::error::{ParaError, Result};
use crate::model::argmax;

/// Rounds one tier's `N × M` continuous association to one-hot rows.
///
/// Rows whose sum exceeds 1 are divided by it. A zero-padded maximum-score
/// assignment pairs users with distinct servers; users left on padding or
/// matched with a zero score are sent to their highest-scoring server
/// (lowest index on ties).
pub fn round_association(x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let cols = x.first().map_or(0, Vec::len);
    if x.is_empty() || cols == 0 {
        return Err(ParaError::Dimension("cannot round an empty tier".into()));
    }
    if x.iter().any(|r| r.len() != cols) {
        return Err(ParaError::Dimension("association rows have different lengths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ParaError::Domain("association scores must be finite".into()));
    }
    let scores: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s > 1.0 {
                row.iter().map(|v| v / s).collect()
            } else {
                row.clone()
            }
        })
        .collect();
    let pairs = optimal_assignment(&ScoreMatrix::new(scores.clone(), Sense::Maximize)?);
    let mut choice: Vec<Option<usize>> = vec![None; x.len()];
    for (r, c) in pairs {
        choice[r] = Some(c);
    }
    Ok(choice
        .iter()
        .zip(&scores)
        .map(|(c, row)| {
            let m = match *c {
                Some(j) if row[j] > 0.0 => j,
                _ => argmax(row),
            };
            (0..cols).map(|j| if j == m { 1.0 } else { 0.0 }).collect()
        })
        .collect())
}
