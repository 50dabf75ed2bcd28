//! Alternating outer loop over shares and association.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::multipliers::update_multipliers;
use crate::error::{ParaError, Result};
use crate::fp::{solve_subproblem1, FpOptions, MultiplierState};
use crate::model::{objective, pte_terms, validate_allocation, Allocation, PteReport, Scenario, TIERS};
use crate::sdr::{solve_subproblem2, SdrOptions};

/// How server shares are set between association updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareMode {
    /// Shares come from the fractional-programming allocator.
    Optimize,
    /// Every server splits each resource equally among its users.
    Average,
}

/// Settings of the outer loop and its two sub-solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaOptions {
    /// Relative change of the outer objective below which the loop stops.
    pub eps3: f64,
    pub max_outer: usize,
    pub fp: FpOptions,
    pub sdr: SdrOptions,
    pub share_mode: ShareMode,
}

impl Default for ParaOptions {
    fn default() -> Self {
        Self {
            eps3: 1e-4,
            max_outer: 100,
            fp: FpOptions::default(),
            sdr: SdrOptions::default(),
            share_mode: ShareMode::Optimize,
        }
    }
}

impl ParaOptions {
    /// Options with the three stopping tolerances set.
    pub fn with_tolerances(eps1: f64, eps2: f64, eps3: f64) -> Self {
        let mut o = Self::default();
        o.fp.eps1 = eps1;
        o.sdr.eps2 = eps2;
        o.eps3 = eps3;
        o
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    /// Outer objective `Σψ` after the closing multiplier update.
    pub p3: f64,
    /// Summed PTE of the allocation.
    pub p1: f64,
    /// Largest constraint residual of the allocation.
    pub residual: f64,
    pub fp_outer: usize,
    pub fp_inner: usize,
    /// Share-surrogate objective after every tangent refresh of this iteration.
    pub p5_trace: Vec<f64>,
    pub sdr_iterations: usize,
    pub sdp_iterations: usize,
    /// Relaxations that could not be solved in this iteration.
    pub sdp_failures: usize,
    pub wall_ms: f64,
}

/// Full record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Outer objective at the start and after every outer iteration.
    pub p3_trace: Vec<f64>,
    pub records: Vec<OuterRecord>,
    /// Allocation and multipliers after every multiplier update, in order.
    pub checkpoints: Vec<(Allocation, MultiplierState)>,
    pub allocation: Allocation,
    pub report: PteReport,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl RunTrace {
    /// Final summed PTE.
    pub fn objective(&self) -> f64 {
        self.report.objective
    }
}

/// Equal split of every server resource among the server's users; user
/// shares set to 1. Shares of unused links are zero.
pub fn average_shares(scn: &Scenario, a: &mut Allocation) {
    for n in 0..scn.n_users() {
        a.pw_user[n] = 1.0;
        a.cpu_user[n] = 1.0;
    }
    for tier in TIERS {
        let t = tier.index();
        for m in 0..scn.m(tier) {
            let members = a.members(tier, m);
            let share = if members.is_empty() { 0.0 } else { 1.0 / members.len() as f64 };
            for n in 0..scn.n_users() {
                let s = if a.x[t][n][m] > 0.5 { share } else { 0.0 };
                a.bw[t][n][m] = s;
                a.cpu[t][n][m] = s;
                if t < 2 {
                    a.pw[t][n][m] = s;
                }
            }
        }
    }
}

/// Outer objective: the sum of the `ψ` multipliers, which equals the summed
/// PTE right after a multiplier update.
pub fn p3_value(mult: &MultiplierState) -> f64 {
    mult.psi.iter().flatten().sum()
}

fn wrap(iteration: usize) -> impl Fn(ParaError) -> ParaError {
    move |e| ParaError::Outer { iteration, source: Box::new(e) }
}

/// Starting point shared by the joint optimizer and the random baseline:
/// random one-hot association, quarter offload, server shares `1/N`.
pub fn initial_allocation(scn: &Scenario, seed: u64) -> Allocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Allocation::initial(scn, &mut rng)
}

/// Runs the alternating optimizer from `start`.
pub fn run_from(scn: &Scenario, start: Allocation, opts: &ParaOptions) -> Result<RunTrace> {
    scn.validate()?;
    let clock = Instant::now();
    let mut a = start;
    if opts.share_mode == ShareMode::Average {
        average_shares(scn, &mut a);
    }
    crate::model::refresh_delay_bounds(scn, &mut a).map_err(wrap(0))?;
    let mut mult = update_multipliers(scn, &a).map_err(wrap(0))?;
    let mut checkpoints = vec![(a.clone(), mult.clone())];
    let mut p3_trace = vec![p3_value(&mult)];
    let mut records = Vec::new();
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let it_clock = Instant::now();
        let before = objective(scn, &a).map_err(wrap(outer))?;
        let (fp_outer, fp_inner, p5_trace) = match opts.share_mode {
            ShareMode::Optimize => {
                let (b, rep) = solve_subproblem1(scn, &a, &mult, &opts.fp).map_err(wrap(outer))?;
                // Guard against a rounding-level loss of the summed PTE.
                if objective(scn, &b).map_err(wrap(outer))? >= before {
                    a = b;
                }
                (rep.outer_iterations, rep.inner_iterations, rep.p5_trace)
            }
            ShareMode::Average => (0, 0, Vec::new()),
        };
        let (b, rep) = solve_subproblem2(scn, &a, &mult, &opts.sdr).map_err(wrap(outer))?;
        a = b;
        if opts.share_mode == ShareMode::Average {
            average_shares(scn, &mut a);
            crate::model::refresh_delay_bounds(scn, &mut a).map_err(wrap(outer))?;
        }
        mult = update_multipliers(scn, &a).map_err(wrap(outer))?;
        checkpoints.push((a.clone(), mult.clone()));
        let p3 = p3_value(&mult);
        let prev = *p3_trace.last().expect("trace starts non-empty");
        p3_trace.push(p3);
        records.push(OuterRecord {
            p3,
            p1: objective(scn, &a).map_err(wrap(outer))?,
            residual: validate_allocation(scn, &a).max(),
            fp_outer,
            fp_inner,
            p5_trace,
            sdr_iterations: rep.iterations,
            sdp_iterations: rep.sdp_iterations,
            sdp_failures: rep.sdp_failures,
            wall_ms: it_clock.elapsed().as_secs_f64() * 1e3,
        });
        if (p3 - prev).abs() <= opts.eps3 * prev.abs() {
            converged = true;
            break;
        }
    }
    let report = pte_terms(scn, &a).map_err(wrap(outer))?;
    Ok(RunTrace {
        p3_trace,
        records,
        checkpoints,
        allocation: a,
        report,
        outer_iterations: outer,
        converged,
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs the joint optimizer from the seeded random start.
pub fn run_para(scn: &Scenario, opts: &ParaOptions, seed: u64) -> Result<RunTrace> {
    run_from(scn, initial_allocation(scn, seed), opts)
}
