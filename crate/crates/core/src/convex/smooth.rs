//! Projected gradient with Barzilai–Borwein steps and Armijo backtracking.

use super::projection::{project_capped_simplex, FeasibleSet};
use crate::error::{ParaError, Result};

/// Objective evaluator: point → value.
pub type ValueFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
/// Gradient evaluator: point → gradient.
pub type GradFn<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

/// Smooth convex minimization over a box with capped-sum groups.
pub struct SmoothConvexProblem<'a> {
    pub value: ValueFn<'a>,
    pub gradient: GradFn<'a>,
    pub set: FeasibleSet,
    pub start: Vec<f64>,
}

/// Outcome of [`minimize_smooth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Projected-gradient infinity norm at the returned point.
    pub pg_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the start value.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

fn pg_norm(x: &[f64], g: &[f64], set: &FeasibleSet) -> Result<f64> {
    let trial: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = project_capped_simplex(&trial, set)?;
    Ok(p.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Minimizes `problem` until the projected-gradient norm is at most `tol` or
/// `max_iter` steps have been taken. Every accepted step decreases the value.
pub fn minimize_smooth(problem: &SmoothConvexProblem<'_>, tol: f64, max_iter: usize) -> Result<SmoothResult> {
    let set = &problem.set;
    if problem.start.len() != set.dim() {
        return Err(ParaError::Dimension("start point and feasible set differ in length".into()));
    }
    if set.violation(&problem.start) > 1e-9 {
        return Err(ParaError::Domain("start point is infeasible".into()));
    }
    let mut x = problem.start.clone();
    let mut fx = (problem.value)(&x);
    let mut g = (problem.gradient)(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(ParaError::Numeric("non-finite objective or gradient at start".into()));
    }
    let mut history = vec![fx];
    let mut step = {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn > 0.0 { 1.0 / gn } else { 1.0 }
    };
    let mut pg = pg_norm(&x, &g, set)?;
    let mut it = 0;
    while it < max_iter && pg > tol {
        it += 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let xn = project_capped_simplex(&trial, set)?;
            let dec: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let fn_ = (problem.value)(&xn);
            if fn_.is_finite() && fn_ <= fx + ARMIJO * dec && fn_ <= fx {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else { break };
        let gn = (problem.gradient)(&xn);
        if gn.iter().any(|v| !v.is_finite()) {
            return Err(ParaError::Numeric("non-finite gradient at feasible point".into()));
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-20, 1e20) } else { (t * 2.0).min(1e20) };
        let stalled = ss == 0.0;
        x = xn;
        fx = fn_;
        g = gn;
        history.push(fx);
        pg = pg_norm(&x, &g, set)?;
        if stalled {
            break;
        }
    }
    Ok(SmoothResult { point: x, value: fx, iterations: it, pg_norm: pg, converged: pg <= tol, history })
}
