//! Euclidean projection onto a box intersected with capped-sum groups.

use crate::error::{ParaError, Result};

/// Constraint `Σ_{i ∈ idx} v_i ≤ cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapGroup {
    pub idx: Vec<usize>,
    pub cap: f64,
}

/// Per-coordinate box plus capped-sum groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub groups: Vec<CapGroup>,
}

impl FeasibleSet {
    /// Box `[lo, hi]` on every coordinate with no groups.
    pub fn boxed(n: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; n], hi: vec![hi; n], groups: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Largest violation of any box bound or group cap.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            worst = worst.max(self.lo[i] - v[i]).max(v[i] - self.hi[i]);
        }
        for g in &self.groups {
            worst = worst.max(g.idx.iter().map(|&i| v[i]).sum::<f64>() - g.cap);
        }
        worst
    }

    fn check(&self) -> Result<()> {
        let n = self.lo.len();
        if self.hi.len() != n {
            return Err(ParaError::Dimension("box bounds differ in length".into()));
        }
        for i in 0..n {
            if !(self.lo[i] <= self.hi[i]) {
                return Err(ParaError::Infeasible(format!("empty box on coordinate {i}")));
            }
        }
        for g in &self.groups {
            if !(g.cap >= 0.0) {
                return Err(ParaError::Infeasible(format!("negative group cap {}", g.cap)));
            }
            if g.idx.iter().any(|&i| i >= n) {
                return Err(ParaError::Dimension("group index out of range".into()));
            }
            let floor: f64 = g.idx.iter().map(|&i| self.lo[i]).sum();
            if floor > g.cap * (1.0 + 1e-12) + 1e-15 {
                return Err(ParaError::Infeasible("group lower bounds exceed cap".into()));
            }
        }
        Ok(())
    }

    fn disjoint(&self) -> bool {
        let mut seen = vec![false; self.lo.len()];
        for g in &self.groups {
            for &i in &g.idx {
                if seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        true
    }
}

/// Exact projection of `v[idx]` onto `{lo ≤ w ≤ hi, Σ w ≤ cap}` by
/// water-filling on the sorted breakpoints of the shift `τ`.
fn project_group(v: &mut [f64], idx: &[usize], lo: &[f64], hi: &[f64], cap: f64) {
    let clamp = |i: usize, x: f64| x.max(lo[i]).min(hi[i]);
    let sum_at = |tau: f64| idx.iter().map(|&i| clamp(i, v[i] - tau)).sum::<f64>();
    if sum_at(0.0) <= cap {
        for &i in idx {
            v[i] = clamp(i, v[i]);
        }
        return;
    }
    // Σ clamp(v_i − τ) is piecewise linear, non-increasing in τ, with kinks at
    // v_i − hi_i and v_i − lo_i.
    let mut kinks: Vec<f64> = idx
        .iter()
        .flat_map(|&i| [v[i] - hi[i], v[i] - lo[i]])
        .filter(|&k| k > 0.0)
        .collect();
    kinks.sort_by(f64::total_cmp);
    let mut left = 0.0;
    let mut s_left = sum_at(0.0);
    let mut tau = *kinks.last().unwrap_or(&0.0);
    for &k in &kinks {
        let s_k = sum_at(k);
        if s_k <= cap {
            tau = if s_left == s_k { k } else { left + (s_left - cap) * (k - left) / (s_left - s_k) };
            break;
        }
        left = k;
        s_left = s_k;
    }
    for &i in idx {
        v[i] = clamp(i, v[i] - tau);
    }
}

/// Euclidean projection of `v` onto `set`.
///
/// Disjoint groups are projected exactly, one group at a time. Overlapping
/// groups fall back to Dykstra's alternating projections, run until the
/// constraint residual is at most `1e-10`.
pub fn project_capped_simplex(v: &[f64], set: &FeasibleSet) -> Result<Vec<f64>> {
    set.check()?;
    if v.len() != set.dim() {
        return Err(ParaError::Dimension("point and feasible set differ in length".into()));
    }
    if set.disjoint() {
        return Ok(project_disjoint(v, set));
    }
    // Dykstra over the sets {box ∩ group_k} and the plain box.
    let k = set.groups.len();
    let mut x = v.to_vec();
    let mut corr = vec![vec![0.0; v.len()]; k];
    for _ in 0..100_000 {
        let mut moved: f64 = 0.0;
        for (g, p) in set.groups.iter().zip(corr.iter_mut()) {
            let mut y: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let before = y.clone();
            let mut member = vec![false; y.len()];
            g.idx.iter().for_each(|&i| member[i] = true);
            for i in (0..y.len()).filter(|&i| !member[i]) {
                y[i] = y[i].max(set.lo[i]).min(set.hi[i]);
            }
            project_group(&mut y, &g.idx, &set.lo, &set.hi, g.cap);
            for i in 0..y.len() {
                p[i] = before[i] - y[i];
                moved = moved.max((y[i] - x[i]).abs());
            }
            x = y;
        }
        if set.violation(&x) <= 1e-10 && moved <= 1e-14 {
            return Ok(x);
        }
    }
    Err(ParaError::Convergence { iterations: 100_000, detail: "overlapping-group projection".into() })
}

fn project_disjoint(v: &[f64], set: &FeasibleSet) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().enumerate().map(|(i, &x)| x.max(set.lo[i]).min(set.hi[i])).collect();
    let mut w = v.to_vec();
    for g in &set.groups {
        project_group(&mut w, &g.idx, &set.lo, &set.hi, g.cap);
        for &i in &g.idx {
            out[i] = w[i];
        }
    }
    out
}
