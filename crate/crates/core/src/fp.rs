//! Share optimization with fixed association and offload ratios.
//!
//! Each transmit-energy term `power·bits/rate` is replaced by the quadratic
//! transform `(power·bits)²·ϱ + 1/(4·rate²·ϱ)`, which is convex in the shares
//! for fixed `ϱ` and touches the true term at `ϱ = 1/(2·power·bits·rate)`.
//! The convex problem in the shares is solved by projected gradient, then
//! `ϱ` is refreshed, until the weighted cost stalls.

use std::f64::consts::LN_2;

use crate::convex::{minimize_smooth, project_capped_simplex, CapGroup, FeasibleSet, SmoothConvexProblem};
use crate::error::{ParaError, Result};
use crate::model::{
    hop_bits, hop_radio, remaining_ratio, user_terms, Allocation, Scenario, Tier, SHARE_FLOOR, TIERS,
};

/// Lower bound on optimized shares.
pub const SHARE_LB: f64 = 1e-6;

/// Dinkelbach-style multipliers per user and level (user, terrestrial, aerial,
/// satellite), attached to the associated server of each tier.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    pub psi: Vec<[f64; 4]>,
    pub alpha: Vec<[f64; 4]>,
}

impl MultiplierState {
    /// Weight `α·ψ` of a level's cost.
    pub fn weight(&self, n: usize, level: usize) -> f64 {
        self.alpha[n][level] * self.psi[n][level]
    }
}

/// Quadratic-transform variables per user and tier for hops that carry data.
#[derive(Debug, Clone, PartialEq)]
pub struct VarrhoState {
    pub varrho: Vec<[Option<f64>; 3]>,
}

/// Settings of the share optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpOptions {
    /// Relative-change threshold of the outer `ϱ` loop.
    pub eps1: f64,
    pub max_outer: usize,
    /// Projected-gradient tolerance of the inner solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { eps1: 1e-4, max_outer: 100, inner_tol: 1e-7, inner_max_iter: 5000 }
    }
}

/// Diagnostics of one share optimization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FpReport {
    /// Maximization-form objective `Σ α(cφd − ψ·tilde_cost)` at the start and
    /// after every inner solve.
    pub p5_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Whether the hop into `tier` carries data for user `n`.
fn hop_active(a: &Allocation, n: usize, tier: Tier) -> bool {
    let m = a.assoc(tier, n);
    a.x[tier.index()][n][m] > 0.0 && remaining_ratio(&a.phi[n], tier) > 0.0
}

/// Tangent `ϱ = 1/(2·power·bits·rate)` for every hop that carries data.
pub fn update_varrho(scn: &Scenario, a: &Allocation) -> Result<VarrhoState> {
    let mut out = Vec::with_capacity(scn.n_users());
    for n in 0..scn.n_users() {
        let mut row = [None; 3];
        for tier in TIERS {
            if !hop_active(a, n, tier) {
                continue;
            }
            let m = a.assoc(tier, n);
            let radio = hop_radio(scn, a, n, tier, m);
            let r = radio.rate(scn.topology.noise_psd);
            let prod = radio.power() * hop_bits(scn, n, &a.phi[n], tier) * r;
            if !(prod > 0.0) || !prod.is_finite() {
                return Err(ParaError::Degenerate(format!("user {n}: zero rate or power on {} hop", tier.name())));
            }
            row[tier.index()] = Some(1.0 / (2.0 * prod));
        }
        out.push(row);
    }
    Ok(VarrhoState { varrho: out })
}

/// Per-user, per-level costs with transmit energy replaced by the quadratic
/// transform at the given `ϱ`. Level 0 is the exact local cost.
pub fn surrogate_cost(scn: &Scenario, a: &Allocation, vr: &VarrhoState) -> Result<Vec<[f64; 4]>> {
    let w = &scn.weights;
    let mut out = Vec::with_capacity(scn.n_users());
    for n in 0..scn.n_users() {
        let phi = a.phi[n];
        let mut c = [user_terms(scn, a, n, &phi)?.cost(w), 0.0, 0.0, 0.0];
        for tier in TIERS {
            let m = a.assoc(tier, n);
            let t = crate::model::tier_terms(scn, a, n, tier, m, &phi, a.x[tier.index()][n][m])?;
            let mut tx_e = t.tx_energy;
            if let Some(v) = vr.varrho[n][tier.index()] {
                if !(v > 0.0) {
                    return Err(ParaError::Domain("ϱ must be positive".into()));
                }
                let radio = hop_radio(scn, a, n, tier, m);
                let r = radio.rate(scn.topology.noise_psd);
                let pb = radio.power() * hop_bits(scn, n, &phi, tier);
                tx_e = pb * pb * v + 1.0 / (4.0 * r * r * v);
            }
            c[tier.level()] = w.w_t * t.delay() + w.w_e_eff() * (tx_e + t.cp_energy);
        }
        out.push(c);
    }
    Ok(out)
}

/// Share variable addressed by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    CpuUser(usize),
    PwUser(usize),
    Bw(usize, usize, usize),
    Cpu(usize, usize, usize),
    Pw(usize, usize, usize),
}

fn read_var(a: &Allocation, v: Var) -> f64 {
    match v {
        Var::CpuUser(n) => a.cpu_user[n],
        Var::PwUser(n) => a.pw_user[n],
        Var::Bw(t, n, m) => a.bw[t][n][m],
        Var::Cpu(t, n, m) => a.cpu[t][n][m],
        Var::Pw(t, n, m) => a.pw[t][n][m],
    }
}

fn write_var(a: &mut Allocation, v: Var, x: f64) {
    match v {
        Var::CpuUser(n) => a.cpu_user[n] = x,
        Var::PwUser(n) => a.pw_user[n] = x,
        Var::Bw(t, n, m) => a.bw[t][n][m] = x,
        Var::Cpu(t, n, m) => a.cpu[t][n][m] = x,
        Var::Pw(t, n, m) => a.pw[t][n][m] = x,
    }
}

/// Constants of one active server level in the share problem.
#[derive(Debug, Clone, Copy)]
struct TierTerm {
    weight: f64,
    bits: f64,
    p: f64,
    /// `p·g/(σ²·b)`.
    k: f64,
    b: f64,
    f: f64,
    kappa: f64,
    work: f64,
    bw: usize,
    cpu: usize,
    pw: usize,
    varrho: f64,
}

/// Constants of an active local level.
#[derive(Debug, Clone, Copy)]
struct UserTerm {
    weight: f64,
    f: f64,
    kappa: f64,
    work: f64,
    cpu: usize,
}

/// The share problem for fixed association, offload and multipliers.
struct ShareProblem {
    vars: Vec<Var>,
    users: Vec<UserTerm>,
    tiers: Vec<TierTerm>,
    set: FeasibleSet,
    w_t: f64,
    w_e: f64,
    /// `Σ α·c·φ·d` over active levels.
    gain: f64,
}

#[inline]
fn rate_and_grad(bw: f64, pw: f64, k: f64, b: f64) -> (f64, f64, f64) {
    let u = k * pw / bw;
    let l = (1.0 + u).log2();
    let r = bw * b * l;
    let dr_dw = b * (l - u / ((1.0 + u) * LN_2));
    let dr_dp = b * k / ((1.0 + u) * LN_2);
    (r, dr_dw, dr_dp)
}

impl ShareProblem {
    fn build(scn: &Scenario, a: &Allocation, mult: &MultiplierState) -> Result<Self> {
        let n_users = scn.n_users();
        let w = &scn.weights;
        let mut vars = Vec::new();
        let mut users = Vec::new();
        let mut tiers = Vec::new();
        let mut gain = 0.0;
        // Resource usage by fixed (inactive-level) links per server and kind.
        let kinds = 3;
        let mut fixed_use: Vec<Vec<[f64; 3]>> = TIERS.iter().map(|&t| vec![[0.0; 3]; scn.m(t)]).collect();
        let mut group_idx: Vec<Vec<[Vec<usize>; 3]>> =
            TIERS.iter().map(|&t| (0..scn.m(t)).map(|_| Default::default()).collect()).collect();
        // Power of terrestrial/aerial servers is used by the next tier's hop.
        for n in 0..n_users {
            let phi = a.phi[n];
            let d = scn.users[n].params;
            let tn = scn.flops_per_param(n);
            if phi[0] > 0.0 {
                let u = &scn.users[n];
                let wt = mult.weight(n, 0);
                gain += mult.alpha[n][0] * u.pref * phi[0] * d;
                vars.push(Var::CpuUser(n));
                users.push(UserTerm { weight: wt, f: u.f_max, kappa: u.kappa, work: u.epochs * tn * phi[0] * d, cpu: vars.len() - 1 });
            }
            for tier in TIERS {
                let t = tier.index();
                let m = a.assoc(tier, n);
                let active = phi[tier.level()] > 0.0 && a.x[t][n][m] > 0.0;
                let (pw_var, pw_srv) = match tier {
                    Tier::Terrestrial => (Var::PwUser(n), None),
                    Tier::Aerial => {
                        let mt = a.assoc(Tier::Terrestrial, n);
                        (Var::Pw(0, n, mt), Some((0usize, mt)))
                    }
                    Tier::Satellite => {
                        let ma = a.assoc(Tier::Aerial, n);
                        (Var::Pw(1, n, ma), Some((1usize, ma)))
                    }
                };
                if !active {
                    if a.x[t][n][m] > 0.0 {
                        fixed_use[t][m][0] += a.bw[t][n][m];
                        fixed_use[t][m][1] += a.cpu[t][n][m];
                        if let Some((pt, pm)) = pw_srv {
                            fixed_use[pt][pm][2] += a.pw[pt][n][pm];
                        }
                    }
                    continue;
                }
                let srv = &scn.servers[t][m];
                let radio = hop_radio(scn, a, n, tier, m);
                let bits = hop_bits(scn, n, &phi, tier);
                gain += mult.alpha[n][tier.level()] * srv.pref[n] * phi[tier.level()] * d;
                vars.push(Var::Bw(t, n, m));
                let bw = vars.len() - 1;
                group_idx[t][m][0].push(bw);
                vars.push(Var::Cpu(t, n, m));
                let cpu = vars.len() - 1;
                group_idx[t][m][1].push(cpu);
                vars.push(pw_var);
                let pw = vars.len() - 1;
                if let Some((pt, pm)) = pw_srv {
                    group_idx[pt][pm][2].push(pw);
                }
                tiers.push(TierTerm {
                    weight: mult.weight(n, tier.level()),
                    bits,
                    p: radio.p_max,
                    k: radio.p_max * radio.gain / (scn.topology.noise_psd * radio.bandwidth),
                    b: radio.bandwidth,
                    f: srv.f_max,
                    kappa: srv.kappa,
                    work: srv.epochs * tn * phi[tier.level()] * d,
                    bw,
                    cpu,
                    pw,
                    varrho: 0.0,
                });
            }
        }
        let nv = vars.len();
        let mut set = FeasibleSet::boxed(nv, SHARE_LB, 1.0);
        for tier in TIERS {
            let t = tier.index();
            for m in 0..scn.m(tier) {
                for kind in 0..kinds {
                    let idx = std::mem::take(&mut group_idx[t][m][kind]);
                    if idx.is_empty() {
                        continue;
                    }
                    let cap = (1.0 - fixed_use[t][m][kind]).max(idx.len() as f64 * SHARE_LB * 2.0);
                    set.groups.push(CapGroup { idx, cap });
                }
            }
        }
        Ok(Self { vars, users, tiers, set, w_t: w.w_t, w_e: w.w_e_eff(), gain })
    }

    fn read(&self, a: &Allocation) -> Vec<f64> {
        self.vars.iter().map(|&v| read_var(a, v)).collect()
    }

    fn set_varrho(&mut self, v: &[f64]) {
        for t in &mut self.tiers {
            let (r, _, _) = rate_and_grad(v[t.bw], v[t.pw], t.k, t.b);
            t.varrho = 1.0 / (2.0 * v[t.pw] * t.p * t.bits * r);
        }
    }

    /// `Σ weight·cost` with the surrogate when `surrogate` is set.
    fn value(&self, v: &[f64], surrogate: bool) -> f64 {
        let mut s = 0.0;
        for u in &self.users {
            let speed = v[u.cpu] * u.f;
            s += u.weight * (self.w_t * u.work / speed + self.w_e * u.kappa * u.work * speed * speed);
        }
        for t in &self.tiers {
            let (r, _, _) = rate_and_grad(v[t.bw], v[t.pw], t.k, t.b);
            let speed = v[t.cpu] * t.f;
            let pb = v[t.pw] * t.p * t.bits;
            let tx_e = if surrogate { pb * pb * t.varrho + 1.0 / (4.0 * r * r * t.varrho) } else { pb / r };
            s += t.weight
                * (self.w_t * (t.bits / r + t.work / speed)
                    + self.w_e * (tx_e + t.kappa * t.work * speed * speed));
        }
        s
    }

    fn gradient(&self, v: &[f64], surrogate: bool) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        for u in &self.users {
            let gam = v[u.cpu];
            g[u.cpu] += u.weight
                * (-self.w_t * u.work / (gam * gam * u.f) + 2.0 * self.w_e * u.kappa * u.work * u.f * u.f * gam);
        }
        for t in &self.tiers {
            let (r, drw, drp) = rate_and_grad(v[t.bw], v[t.pw], t.k, t.b);
            let gam = v[t.cpu];
            let pw = v[t.pw];
            // ∂cost/∂r and the explicit ∂cost/∂ρ.
            let (dc_dr, dc_dp) = if surrogate {
                let pb = pw * t.p * t.bits;
                (
                    -self.w_t * t.bits / (r * r) - self.w_e / (2.0 * r * r * r * t.varrho),
                    self.w_e * 2.0 * pb * t.p * t.bits * t.varrho,
                )
            } else {
                let pb = pw * t.p * t.bits;
                (-self.w_t * t.bits / (r * r) - self.w_e * pb / (r * r), self.w_e * t.p * t.bits / r)
            };
            g[t.bw] += t.weight * dc_dr * drw;
            g[t.pw] += t.weight * (dc_dr * drp + dc_dp);
            g[t.cpu] += t.weight
                * (-self.w_t * t.work / (gam * gam * t.f) + 2.0 * self.w_e * t.kappa * t.work * t.f * t.f * gam);
        }
        g
    }
}

/// Value gap and gradient gap between the exact and surrogate summed costs at
/// `a`, in the share variables of every level with positive offload.
///
/// All levels are weighted by one. The gradient gap compares the analytic
/// surrogate gradient with central differences of the exact cost.
pub fn tangency_check(scn: &Scenario, a: &Allocation, vr: &VarrhoState) -> Result<(f64, f64)> {
    let ones = MultiplierState { psi: vec![[1.0; 4]; scn.n_users()], alpha: vec![[1.0; 4]; scn.n_users()] };
    let mut sp = ShareProblem::build(scn, a, &ones)?;
    let v = sp.read(a);
    for t in sp.tiers.iter_mut() {
        t.varrho = 0.0;
    }
    // Map each tier term to its user's ϱ entry.
    let mut k = 0;
    for n in 0..scn.n_users() {
        for tier in TIERS {
            let m = a.assoc(tier, n);
            if a.phi[n][tier.level()] > 0.0 && a.x[tier.index()][n][m] > 0.0 {
                sp.tiers[k].varrho = vr.varrho[n][tier.index()]
                    .ok_or_else(|| ParaError::Domain(format!("missing ϱ for user {n}")))?;
                k += 1;
            }
        }
    }
    let exact = sp.value(&v, false);
    let surr = sp.value(&v, true);
    let value_gap = (exact - surr).abs() / exact.abs().max(1e-300);
    let grad_gap = crate::convex::check_gradient(|x| sp.value(x, false), |x| sp.gradient(x, true), &v, 1e-6);
    Ok((value_gap, grad_gap))
}

/// Optimizes bandwidth, power and compute shares for fixed association and
/// offload ratios, then refreshes the delay bounds.
pub fn solve_subproblem1(
    scn: &Scenario,
    start: &Allocation,
    mult: &MultiplierState,
    opts: &FpOptions,
) -> Result<(Allocation, FpReport)> {
    let mut a = start.clone();
    zero_unassociated(&mut a);
    let mut sp = ShareProblem::build(scn, &a, mult)?;
    let mut report = FpReport::default();
    if sp.vars.is_empty() {
        crate::model::refresh_delay_bounds(scn, &mut a)?;
        return Ok((a, report));
    }
    let raw: Vec<f64> = sp.read(&a).iter().map(|v| v.clamp(SHARE_LB, 1.0)).collect();
    let mut v = project_capped_simplex(&raw, &sp.set)?;
    sp.set_varrho(&v);
    let mut cur = sp.value(&v, true);
    if !cur.is_finite() || cur <= 0.0 {
        return Err(ParaError::Numeric("share objective is not finite and positive".into()));
    }
    report.p5_trace.push(sp.gain - cur);
    for outer in 0..opts.max_outer {
        report.outer_iterations = outer + 1;
        let scale = 1.0 / cur;
        let res = {
            let spr = &sp;
            let problem = SmoothConvexProblem {
                value: Box::new(move |x| spr.value(x, true) * scale),
                gradient: Box::new(move |x| spr.gradient(x, true).into_iter().map(|g| g * scale).collect()),
                set: sp.set.clone(),
                start: v.clone(),
            };
            minimize_smooth(&problem, opts.inner_tol, opts.inner_max_iter)?
        };
        report.inner_iterations += res.iterations;
        v = res.point;
        let solved = sp.value(&v, true);
        report.p5_trace.push(sp.gain - solved);
        sp.set_varrho(&v);
        let next = sp.value(&v, true);
        let change = (cur - next) / cur;
        cur = next;
        if change <= opts.eps1 {
            break;
        }
    }
    for (&var, &x) in sp.vars.iter().zip(&v) {
        write_var(&mut a, var, x);
    }
    crate::model::refresh_delay_bounds(scn, &mut a)?;
    Ok((a, report))
}

/// Sets every share of a link with `x = 0` to zero.
pub fn zero_unassociated(a: &mut Allocation) {
    for t in 0..3 {
        for n in 0..a.phi.len() {
            for m in 0..a.x[t][n].len() {
                if a.x[t][n][m] <= 0.0 {
                    a.bw[t][n][m] = 0.0;
                    a.cpu[t][n][m] = 0.0;
                }
            }
        }
    }
    // Server power shares follow the sender's own association.
    for t in 0..2 {
        for n in 0..a.phi.len() {
            for m in 0..a.pw[t][n].len() {
                if a.x[t][n][m] <= 0.0 {
                    a.pw[t][n][m] = 0.0;
                }
            }
        }
    }
}

/// Exact weighted cost `Σ α·ψ·cost` over levels with positive offload.
pub fn weighted_cost(scn: &Scenario, a: &Allocation, mult: &MultiplierState) -> Result<f64> {
    let sp = ShareProblem::build(scn, a, mult)?;
    let v: Vec<f64> = sp.read(a).iter().map(|x| x.max(SHARE_FLOOR)).collect();
    Ok(sp.value(&v, false))
}
