//! Reference methods compared against the joint optimizer.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::multipliers::update_multipliers;
use super::para::{average_shares, initial_allocation, p3_value, run_from, run_para, OuterRecord, ParaOptions, RunTrace, ShareMode};
use crate::convex::{minimize_smooth, CapGroup, FeasibleSet, SmoothConvexProblem};
use crate::error::{ParaError, Result};
use crate::fp::solve_subproblem1;
use crate::model::{
    objective, pte_terms, refresh_delay_bounds, tier_terms, user_objective, validate_allocation, Allocation,
    Scenario, Tier, TIERS,
};

/// Baseline methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Random one-hot association, equal shares, quarter offload.
    Rucaa,
    /// Greedy association, equal shares, quarter offload.
    Gucaa,
    /// Equal shares with optimized association and offload.
    Aauco,
    /// Greedy association with optimized shares and a gridded offload refinement.
    Gucro,
    /// Cyclic block ascent over offload and each share type, greedy association.
    Bcd,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] =
        [BaselineKind::Rucaa, BaselineKind::Gucaa, BaselineKind::Aauco, BaselineKind::Gucro, BaselineKind::Bcd];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Rucaa => "RUCAA",
            BaselineKind::Gucaa => "GUCAA",
            BaselineKind::Aauco => "AAUCO",
            BaselineKind::Gucro => "GUCRO",
            BaselineKind::Bcd => "BCD",
        }
    }
}

/// The joint optimizer or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Para,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Para,
        Method::Baseline(BaselineKind::Rucaa),
        Method::Baseline(BaselineKind::Gucaa),
        Method::Baseline(BaselineKind::Aauco),
        Method::Baseline(BaselineKind::Gucro),
        Method::Baseline(BaselineKind::Bcd),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Para => "PARA",
            Method::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ParaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ParaError::Config { field: "method".into(), reason: format!("unknown method `{s}`") })
    }
}

/// Runs `method` on `scn` from `seed`.
pub fn run_method(method: Method, scn: &Scenario, opts: &ParaOptions, seed: u64) -> Result<RunTrace> {
    match method {
        Method::Para => run_para(scn, opts, seed),
        Method::Baseline(k) => run_baseline(k, scn, opts, seed),
    }
}

/// Step of the per-user offload grid of the greedy-refinement baseline.
pub const PHI_GRID_STEP: f64 = 0.05;
/// Relative-change threshold of the block ascent.
pub const BCD_TOL: f64 = 1e-4;
pub const BCD_MAX_CYCLES: usize = 50;
const BCD_INNER_TOL: f64 = 1e-7;
const BCD_INNER_MAX_ITER: usize = 200;
const VAR_LB: f64 = 1e-6;

/// Runs baseline `kind`.
pub fn run_baseline(kind: BaselineKind, scn: &Scenario, opts: &ParaOptions, seed: u64) -> Result<RunTrace> {
    scn.validate()?;
    match kind {
        BaselineKind::Rucaa => {
            let clock = Instant::now();
            let mut a = initial_allocation(scn, seed);
            average_shares(scn, &mut a);
            finish(scn, a, Vec::new(), true, clock)
        }
        BaselineKind::Gucaa => {
            let clock = Instant::now();
            let a = greedy_association(scn)?;
            finish(scn, a, Vec::new(), true, clock)
        }
        BaselineKind::Aauco => {
            let o = ParaOptions { share_mode: ShareMode::Average, ..*opts };
            run_from(scn, initial_allocation(scn, seed), &o)
        }
        BaselineKind::Gucro => run_gucro(scn, opts),
        BaselineKind::Bcd => run_bcd(scn),
    }
}

fn finish(scn: &Scenario, mut a: Allocation, records: Vec<OuterRecord>, converged: bool, clock: Instant) -> Result<RunTrace> {
    refresh_delay_bounds(scn, &mut a)?;
    let mult = update_multipliers(scn, &a)?;
    let report = pte_terms(scn, &a)?;
    let mut p3_trace: Vec<f64> = records.iter().map(|r| r.p3).collect();
    if p3_trace.is_empty() {
        p3_trace.push(p3_value(&mult));
    }
    Ok(RunTrace {
        p3_trace,
        outer_iterations: records.len(),
        records,
        checkpoints: vec![(a.clone(), mult)],
        allocation: a,
        report,
        converged,
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}

fn record(scn: &Scenario, a: &Allocation, wall: Instant) -> Result<OuterRecord> {
    let p1 = objective(scn, a)?;
    Ok(OuterRecord {
        p3: p1,
        p1,
        residual: validate_allocation(scn, a).max(),
        fp_outer: 0,
        fp_inner: 0,
        p5_trace: Vec::new(),
        sdr_iterations: 0,
        sdp_iterations: 0,
        sdp_failures: 0,
        wall_ms: wall.elapsed().as_secs_f64() * 1e3,
    })
}

/// Standalone ratio of user `n`'s level on server `m` of `tier`, with the
/// user's lower tiers already chosen in `a` and a prospective equal share.
fn standalone_ratio(scn: &Scenario, a: &Allocation, n: usize, tier: Tier, m: usize) -> Result<f64> {
    let t = tier.index();
    let others = a.members(tier, m).into_iter().filter(|&u| u != n).count();
    let share = 1.0 / (others + 1) as f64;
    let mut trial = a.clone();
    trial.set_assoc(tier, n, m);
    trial.bw[t][n][m] = share;
    trial.cpu[t][n][m] = share;
    if t < 2 {
        trial.pw[t][n][m] = share;
    }
    let phi = trial.phi[n];
    let cost = tier_terms(scn, &trial, n, tier, m, &phi, 1.0)?.cost(&scn.weights);
    if !(cost > 0.0) {
        return Err(ParaError::Degenerate(format!("user {n}: zero cost on {} server {m}", tier.name())));
    }
    Ok(scn.servers[t][m].pref[n] * phi[tier.level()] * scn.users[n].params / cost)
}

/// Greedy association: users in index order pick, tier by tier from the
/// ground up, the server with the largest standalone ratio. Shares are then
/// split equally and offload is a quarter per level.
pub fn greedy_association(scn: &Scenario) -> Result<Allocation> {
    let n_users = scn.n_users();
    let mut a = Allocation::uniform(scn, 0.0);
    for n in 0..n_users {
        a.pw_user[n] = 1.0;
        a.cpu_user[n] = 1.0;
    }
    for n in 0..n_users {
        for tier in TIERS {
            let mut best = (0, f64::NEG_INFINITY);
            for m in 0..scn.m(tier) {
                let r = standalone_ratio(scn, &a, n, tier, m)?;
                if r > best.1 {
                    best = (m, r);
                }
            }
            let t = tier.index();
            a.set_assoc(tier, n, best.0);
            let k = a.members(tier, best.0).len() as f64;
            a.bw[t][n][best.0] = 1.0 / k;
            a.cpu[t][n][best.0] = 1.0 / k;
            if t < 2 {
                a.pw[t][n][best.0] = 1.0 / k;
            }
        }
    }
    average_shares(scn, &mut a);
    refresh_delay_bounds(scn, &mut a)?;
    Ok(a)
}

/// Share optimization with fixed association and offload, repeated until the
/// summed PTE stalls.
fn fp_rounds(scn: &Scenario, a: &mut Allocation, opts: &ParaOptions, records: &mut Vec<OuterRecord>) -> Result<bool> {
    let mut prev = objective(scn, a)?;
    for it in 0..opts.max_outer {
        let wall = Instant::now();
        let mult = update_multipliers(scn, a)?;
        let (b, rep) = solve_subproblem1(scn, a, &mult, &opts.fp)
            .map_err(|e| ParaError::Outer { iteration: it + 1, source: Box::new(e) })?;
        let next = objective(scn, &b)?;
        if next >= prev {
            *a = b;
        }
        let mut r = record(scn, a, wall)?;
        r.fp_outer = rep.outer_iterations;
        r.fp_inner = rep.inner_iterations;
        r.p5_trace = rep.p5_trace;
        records.push(r);
        let cur = objective(scn, a)?;
        if (cur - prev).abs() <= opts.eps3 * prev.abs() {
            return Ok(true);
        }
        prev = cur;
    }
    Ok(false)
}

/// All offload vectors on the simplex with coordinates on a `step` grid.
pub fn simplex_grid(step: f64) -> Vec<[f64; 4]> {
    let k = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    for i in 0..=k {
        for j in 0..=k - i {
            for l in 0..=k - i - j {
                let s = k - i - j - l;
                out.push([i, j, l, s].map(|v| v as f64 / k as f64));
            }
        }
    }
    out
}

/// Replaces each user's offload vector by the best grid point for that user.
fn refine_phi(scn: &Scenario, a: &mut Allocation) -> Result<()> {
    let grid = simplex_grid(PHI_GRID_STEP);
    for n in 0..scn.n_users() {
        let mut best = (a.phi[n], user_objective(scn, a, n)?);
        for phi in &grid {
            a.phi[n] = *phi;
            if let Ok(v) = user_objective(scn, a, n) {
                if v > best.1 {
                    best = (*phi, v);
                }
            }
        }
        a.phi[n] = best.0;
    }
    refresh_delay_bounds(scn, a)
}

fn run_gucro(scn: &Scenario, opts: &ParaOptions) -> Result<RunTrace> {
    let clock = Instant::now();
    let mut a = greedy_association(scn)?;
    let mut records = vec![record(scn, &a, clock)?];
    fp_rounds(scn, &mut a, opts, &mut records)?;
    let wall = Instant::now();
    refine_phi(scn, &mut a)?;
    records.push(record(scn, &a, wall)?);
    let converged = fp_rounds(scn, &mut a, opts, &mut records)?;
    finish(scn, a, records, converged, clock)
}

/// Location of one block variable inside an allocation.
#[derive(Debug, Clone, Copy)]
enum Slot {
    /// One of the first three offload ratios; the last one absorbs the rest.
    Phi(usize, usize),
    Bw(usize, usize, usize),
    PwUser(usize),
    Pw(usize, usize, usize),
    CpuUser(usize),
    Cpu(usize, usize, usize),
}

impl Slot {
    fn owner(self) -> usize {
        match self {
            Slot::Phi(n, _) | Slot::PwUser(n) | Slot::CpuUser(n) => n,
            Slot::Bw(_, n, _) | Slot::Pw(_, n, _) | Slot::Cpu(_, n, _) => n,
        }
    }

    fn get(self, a: &Allocation) -> f64 {
        match self {
            Slot::Phi(n, l) => a.phi[n][l],
            Slot::Bw(t, n, m) => a.bw[t][n][m],
            Slot::PwUser(n) => a.pw_user[n],
            Slot::Pw(t, n, m) => a.pw[t][n][m],
            Slot::CpuUser(n) => a.cpu_user[n],
            Slot::Cpu(t, n, m) => a.cpu[t][n][m],
        }
    }

    fn set(self, a: &mut Allocation, v: f64) {
        match self {
            Slot::Phi(n, l) => {
                a.phi[n][l] = v;
                a.phi[n][3] = (1.0 - a.phi[n][..3].iter().sum::<f64>()).max(0.0);
            }
            Slot::Bw(t, n, m) => a.bw[t][n][m] = v,
            Slot::PwUser(n) => a.pw_user[n] = v,
            Slot::Pw(t, n, m) => a.pw[t][n][m] = v,
            Slot::CpuUser(n) => a.cpu_user[n] = v,
            Slot::Cpu(t, n, m) => a.cpu[t][n][m] = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Phi,
    Bandwidth,
    Power,
    Compute,
}

/// Variables and feasible set of one block.
fn block_layout(scn: &Scenario, a: &Allocation, block: Block) -> (Vec<Slot>, FeasibleSet) {
    let mut slots = Vec::new();
    let mut groups = Vec::new();
    let per_server = |slots: &mut Vec<Slot>, groups: &mut Vec<CapGroup>, tiers: &[Tier], make: fn(usize, usize, usize) -> Slot| {
        for &tier in tiers {
            for m in 0..scn.m(tier) {
                let members = a.members(tier, m);
                if members.is_empty() {
                    continue;
                }
                let idx = members
                    .iter()
                    .map(|&n| {
                        slots.push(make(tier.index(), n, m));
                        slots.len() - 1
                    })
                    .collect();
                groups.push(CapGroup { idx, cap: 1.0 });
            }
        }
    };
    match block {
        Block::Phi => {
            for n in 0..scn.n_users() {
                let start = slots.len();
                slots.extend((0..3).map(|l| Slot::Phi(n, l)));
                groups.push(CapGroup { idx: (start..start + 3).collect(), cap: 1.0 - VAR_LB });
            }
        }
        Block::Bandwidth => per_server(&mut slots, &mut groups, &TIERS, Slot::Bw),
        Block::Power => {
            slots.extend((0..scn.n_users()).map(Slot::PwUser));
            per_server(&mut slots, &mut groups, &TIERS[..2], Slot::Pw);
        }
        Block::Compute => {
            slots.extend((0..scn.n_users()).map(Slot::CpuUser));
            per_server(&mut slots, &mut groups, &TIERS, Slot::Cpu);
        }
    }
    let dim = slots.len();
    let set = FeasibleSet { lo: vec![VAR_LB; dim], hi: vec![1.0; dim], groups };
    (slots, set)
}

fn with_values(base: &Allocation, slots: &[Slot], v: &[f64]) -> Allocation {
    let mut a = base.clone();
    for (s, &x) in slots.iter().zip(v) {
        s.set(&mut a, x);
    }
    a
}

/// Maximizes the summed PTE over one block with the other blocks fixed.
fn ascend_block(scn: &Scenario, a: &mut Allocation, block: Block) -> Result<()> {
    let (slots, set) = block_layout(scn, a, block);
    if slots.is_empty() {
        return Ok(());
    }
    let start: Vec<f64> = slots.iter().map(|s| s.get(a).clamp(VAR_LB, 1.0)).collect();
    let start = crate::convex::project_capped_simplex(&start, &set)?;
    let base = a.clone();
    let scale = {
        let v = objective(scn, &with_values(&base, &slots, &start))?;
        if v > 0.0 { 1.0 / v } else { 1.0 }
    };
    let value = |v: &[f64]| -> f64 {
        match objective(scn, &with_values(&base, &slots, v)) {
            Ok(p) => -p * scale,
            Err(_) => f64::INFINITY,
        }
    };
    let gradient = |v: &[f64]| -> Vec<f64> {
        let mut cur = with_values(&base, &slots, v);
        let mut g = vec![0.0; v.len()];
        for (i, s) in slots.iter().enumerate() {
            let owner = s.owner();
            let x = v[i];
            let h = 1e-7 * x.abs().max(1e-3);
            let up = if x + h <= 1.0 { h } else { -h };
            let f0 = user_objective(scn, &cur, owner);
            s.set(&mut cur, x + up);
            let f1 = user_objective(scn, &cur, owner);
            s.set(&mut cur, x);
            g[i] = match (f0, f1) {
                (Ok(a0), Ok(a1)) => -(a1 - a0) / up * scale,
                _ => f64::NAN,
            };
        }
        g
    };
    let problem = SmoothConvexProblem { value: Box::new(value), gradient: Box::new(gradient), set, start };
    let res = minimize_smooth(&problem, BCD_INNER_TOL, BCD_INNER_MAX_ITER)?;
    let next = with_values(&base, &slots, &res.point);
    if objective(scn, &next)? >= objective(scn, a)? {
        *a = next;
    }
    Ok(())
}

fn run_bcd(scn: &Scenario) -> Result<RunTrace> {
    let clock = Instant::now();
    let mut a = greedy_association(scn)?;
    let mut records = vec![record(scn, &a, clock)?];
    let mut prev = records[0].p1;
    let mut converged = false;
    for cycle in 0..BCD_MAX_CYCLES {
        let wall = Instant::now();
        for block in [Block::Phi, Block::Bandwidth, Block::Power, Block::Compute] {
            ascend_block(scn, &mut a, block)
                .map_err(|e| ParaError::Outer { iteration: cycle + 1, source: Box::new(e) })?;
        }
        let r = record(scn, &a, wall)?;
        let cur = r.p1;
        records.push(r);
        if (cur - prev).abs() <= BCD_TOL * prev.abs() {
            converged = true;
            break;
        }
        prev = cur;
    }
    finish(scn, a, records, converged, clock)
}
