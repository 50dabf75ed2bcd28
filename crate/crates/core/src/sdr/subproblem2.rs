//! Alternating association and offload update for fixed shares.

use std::cell::RefCell;

use super::coefficients::{assemble_coefficients, pricing_allocation};
use super::lift::lift_and_solve;
use super::qcqp::{build_qcqp, Layout};
use super::round::round_association;
use crate::convex::{minimize_smooth, CapGroup, FeasibleSet, SdpOptions, SmoothConvexProblem};
use crate::error::Result;
use crate::fp::{zero_unassociated, MultiplierState};
use crate::model::{objective, refresh_delay_bounds, user_objective, Allocation, Scenario, TIERS};

/// Offload ratios below this value are set to zero.
pub const PHI_ZERO: f64 = 1e-6;

const STEP_GRID: [f64; 8] = [0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0];
const GOLDEN_ITERS: usize = 30;

/// Settings of the association loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdrOptions {
    /// Relative improvement below which the loop stops.
    pub eps2: f64,
    pub max_iter: usize,
    pub sdp: SdpOptions,
    /// Refine each user's offload by projected gradient after the line search.
    pub polish: bool,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self { eps2: 1e-4, max_iter: 50, sdp: RELAXATION_SDP, polish: true }
    }
}

/// Solver settings for the lifted relaxations. Their solutions only propose
/// candidates that are checked on the exact objective, so a looser accuracy
/// than the solver default is enough.
pub const RELAXATION_SDP: SdpOptions = SdpOptions { tol: 1e-6, max_iter: 60, step_factor: 0.98, accept_tol: 1e-3 };

/// Progress of one call to [`solve_subproblem2`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdrReport {
    pub iterations: usize,
    /// Objective at the start and after every accepted update.
    pub objective_trace: Vec<f64>,
    /// Optimal value of each lifted relaxation.
    pub relaxation_values: Vec<f64>,
    /// Largest `λ₂/λ₁` of each relaxation.
    pub rank_ratios: Vec<f64>,
    pub sdp_iterations: usize,
    /// Relaxations whose solver failed; each one ends the loop without a move.
    pub sdp_failures: usize,
    /// Message of the last solver failure.
    pub last_failure: Option<String>,
}

/// Clamps to `[0, 1]`, zeroes entries below [`PHI_ZERO`] and renormalizes.
/// An all-zero vector becomes the uniform split.
pub fn clean_offload(phi: [f64; 4]) -> [f64; 4] {
    let mut p = phi.map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
    for v in p.iter_mut() {
        if *v < PHI_ZERO {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.map(|v| v / s)
    } else {
        [0.25; 4]
    }
}

/// Replaces the association of `a` by `x`. New links get an equal split of
/// their server, every server resource over capacity is scaled down
/// proportionally, and shares of dropped links are zeroed.
pub fn adopt_association(scn: &Scenario, a: &Allocation, x: &[Vec<Vec<f64>>; 3]) -> Allocation {
    let mut b = a.clone();
    b.x = x.clone();
    let n_users = scn.n_users();
    for tier in TIERS {
        let t = tier.index();
        for m in 0..scn.m(tier) {
            let members = b.members(tier, m);
            if members.is_empty() {
                continue;
            }
            let share = 1.0 / members.len() as f64;
            for &n in &members {
                if a.x[t][n][m] <= 0.5 || !(b.bw[t][n][m] > 0.0) {
                    b.bw[t][n][m] = share;
                }
                if a.x[t][n][m] <= 0.5 || !(b.cpu[t][n][m] > 0.0) {
                    b.cpu[t][n][m] = share;
                }
                if t < 2 && (a.x[t][n][m] <= 0.5 || !(b.pw[t][n][m] > 0.0)) {
                    b.pw[t][n][m] = share;
                }
            }
            let rescale = |s: &mut Vec<Vec<f64>>| {
                let load: f64 = members.iter().map(|&n| s[n][m]).sum();
                if load > 1.0 {
                    for &n in &members {
                        s[n][m] /= load;
                    }
                }
            };
            rescale(&mut b.bw[t]);
            rescale(&mut b.cpu[t]);
            if t < 2 {
                rescale(&mut b.pw[t]);
            }
        }
    }
    debug_assert_eq!(b.phi.len(), n_users);
    zero_unassociated(&mut b);
    b
}

fn mix(from: &[f64; 4], to: &[f64; 4], tau: f64) -> [f64; 4] {
    clean_offload([0, 1, 2, 3].map(|l| (1.0 - tau) * from[l] + tau * to[l]))
}

/// Moves user `n`'s offload along the segment towards `target`, keeping the
/// best objective found on a step grid refined by golden-section search.
fn line_search_user(scn: &Scenario, b: &mut Allocation, n: usize, target: &[f64; 4]) -> f64 {
    let from = b.phi[n];
    let eval = |tau: f64, b: &mut Allocation| {
        b.phi[n] = mix(&from, target, tau);
        user_objective(scn, b, n).unwrap_or(f64::NEG_INFINITY)
    };
    let vals: Vec<f64> = STEP_GRID.iter().map(|&t| eval(t, b)).collect();
    let mut k = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[k] {
            k = i;
        }
    }
    let (mut best_tau, mut best) = (STEP_GRID[k], vals[k]);
    let mut lo = STEP_GRID[k.saturating_sub(1)];
    let mut hi = STEP_GRID[(k + 1).min(STEP_GRID.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = eval(c, b);
    let mut fd = eval(d, b);
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = eval(c, b);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = eval(d, b);
        }
        for (t, v) in [(c, fc), (d, fd)] {
            if v > best {
                best = v;
                best_tau = t;
            }
        }
    }
    b.phi[n] = mix(&from, target, best_tau);
    best
}

const POLISH_TOL: f64 = 1e-9;
const POLISH_MAX_ITER: usize = 200;
/// Resolution of the coarse offload grid that seeds the ascent.
const POLISH_GRID_STEPS: usize = 10;

/// Offload vectors on the simplex with coordinates on a `1/steps` grid.
fn coarse_offloads(steps: usize) -> Vec<[f64; 4]> {
    let u = 1.0 / steps as f64;
    let mut out = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps - i {
            for k in 0..=steps - i - j {
                let l = steps - i - j - k;
                out.push([i as f64 * u, j as f64 * u, k as f64 * u, l as f64 * u]);
            }
        }
    }
    out
}

/// Projected-gradient ascent of user `n`'s summed ratio over its offload
/// simplex with association and shares fixed. The first three ratios are the
/// variables and the last one takes the remainder. The ascent starts from
/// the better of the current offload and the best point of a coarse grid.
/// Returns the user's value, leaving the offload unchanged when no
/// improvement is found.
fn polish_offload(scn: &Scenario, b: &mut Allocation, n: usize) -> f64 {
    let start_val = user_objective(scn, b, n).unwrap_or(f64::NEG_INFINITY);
    if !(start_val > 0.0) {
        return start_val;
    }
    let scale = 1.0 / start_val;
    let work = RefCell::new(b.clone());
    let eval = |v: &[f64]| -> f64 {
        let mut a = work.borrow_mut();
        a.phi[n] = [v[0], v[1], v[2], (1.0 - v[0] - v[1] - v[2]).max(0.0)];
        user_objective(scn, &a, n).map_or(f64::INFINITY, |f| -f * scale)
    };
    let gradient = |v: &[f64]| -> Vec<f64> {
        let f0 = eval(v);
        (0..3)
            .map(|i| {
                let h = 1e-7;
                let step = if v[i] + h <= 1.0 { h } else { -h };
                let mut w = v.to_vec();
                w[i] += step;
                (eval(&w) - f0) / step
            })
            .collect()
    };
    let mut p = b.phi[n];
    let mut seed_val = start_val;
    {
        let mut a = work.borrow_mut();
        for q in coarse_offloads(POLISH_GRID_STEPS) {
            a.phi[n] = q;
            if let Ok(v) = user_objective(scn, &a, n) {
                if v > seed_val {
                    seed_val = v;
                    p = q;
                }
            }
        }
    }
    let start = vec![p[0], p[1], p[2]];
    let set = FeasibleSet { lo: vec![0.0; 3], hi: vec![1.0; 3], groups: vec![CapGroup { idx: vec![0, 1, 2], cap: 1.0 }] };
    let problem = SmoothConvexProblem { value: Box::new(eval), gradient: Box::new(gradient), set, start };
    let val = match minimize_smooth(&problem, POLISH_TOL, POLISH_MAX_ITER) {
        Ok(res) => {
            let v = &res.point;
            let phi = clean_offload([v[0], v[1], v[2], 1.0 - v[0] - v[1] - v[2]]);
            let old = b.phi[n];
            b.phi[n] = phi;
            match user_objective(scn, b, n) {
                Ok(f) if f > start_val => f,
                _ => {
                    b.phi[n] = old;
                    start_val
                }
            }
        }
        Err(_) => start_val,
    };
    prune_offload(scn, b, n, val)
}

/// Ratios below this are candidates for switching their level off.
const PRUNE_BELOW: f64 = 1e-3;

/// Switches off levels that carry a negligible ratio by moving that ratio to
/// the user's largest level, keeping each change only when the user's value
/// increases. A level in use always carries the fixed auxiliary payload, so
/// the gradient ascent can stall just above zero where the value jumps.
fn prune_offload(scn: &Scenario, b: &mut Allocation, n: usize, mut val: f64) -> f64 {
    for l in 0..4 {
        let phi = b.phi[n];
        if !(phi[l] > 0.0 && phi[l] < PRUNE_BELOW) {
            continue;
        }
        let top = (0..4).filter(|&k| k != l).fold(if l == 0 { 1 } else { 0 }, |m, k| if phi[k] > phi[m] { k } else { m });
        let mut q = phi;
        q[top] += q[l];
        q[l] = 0.0;
        b.phi[n] = q;
        match user_objective(scn, b, n) {
            Ok(f) if f > val => val = f,
            _ => b.phi[n] = phi,
        }
    }
    val
}

/// Improves association and offload ratios for fixed shares and multipliers.
///
/// Each round assembles the bilinear objective at the current point, solves
/// its lifted relaxation, rounds the association and moves every user's
/// offload towards the relaxation's offload. The rounded and the current
/// association are both tried and a move is kept only when the objective
/// increases. The loop ends when the relative increase is at most `eps2` or
/// when a relaxation cannot be solved.
pub fn solve_subproblem2(
    scn: &Scenario,
    start: &Allocation,
    mult: &MultiplierState,
    opts: &SdrOptions,
) -> Result<(Allocation, SdrReport)> {
    let layout = Layout::new(scn);
    let mut cur = start.clone();
    let mut cur_val = objective(scn, &cur)?;
    let mut report = SdrReport { objective_trace: vec![cur_val], ..Default::default() };
    for it in 0..opts.max_iter {
        report.iterations = it + 1;
        let pricing = pricing_allocation(scn, &cur);
        let coefs = assemble_coefficients(scn, &pricing, mult)?;
        let qcqp = build_qcqp(scn, &pricing, &coefs)?;
        let lr = match lift_and_solve(&qcqp, &opts.sdp) {
            Ok(lr) => lr,
            Err(e) => {
                report.sdp_failures += 1;
                report.last_failure = Some(e.to_string());
                break;
            }
        };
        report.relaxation_values.push(lr.value);
        report.rank_ratios.push(lr.rank_ratio);
        report.sdp_iterations += lr.solution.iterations;
        let (xc, phic) = layout.unstack(lr.q.as_slice());
        let rounded = [
            round_association(&xc[0])?,
            round_association(&xc[1])?,
            round_association(&xc[2])?,
        ];
        let targets: Vec<[f64; 4]> = phic.into_iter().map(clean_offload).collect();
        let mut candidates = vec![rounded];
        if candidates[0] != cur.x {
            candidates.push(cur.x.clone());
        }
        let mut best: Option<(f64, Allocation)> = None;
        for x in &candidates {
            let mut b = adopt_association(scn, &cur, x);
            let total: f64 = (0..scn.n_users())
                .map(|n| {
                    let v = line_search_user(scn, &mut b, n, &targets[n]);
                    if opts.polish {
                        polish_offload(scn, &mut b, n)
                    } else {
                        v
                    }
                })
                .sum();
            if total.is_finite() && best.as_ref().is_none_or(|(v, _)| total > *v) {
                best = Some((total, b));
            }
        }
        match best {
            Some((val, b)) if val > cur_val => {
                let rel = (val - cur_val) / cur_val.abs().max(f64::MIN_POSITIVE);
                cur = b;
                cur_val = val;
                report.objective_trace.push(val);
                if rel <= opts.eps2 {
                    break;
                }
            }
            _ => break,
        }
    }
    refresh_delay_bounds(scn, &mut cur)?;
    Ok((cur, report))
}
