//! Experiment harness for the allocator and its baselines.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use para_core::assignment::{optimal_assignment, total_score, ScoreMatrix, Sense};
use para_core::bench::{
    emit_csv, generate_scenario, load_config, load_sweep, run_experiment, RunRow, ScenarioConfig,
};
use para_core::driver::{run_method, run_para, Method, ParaOptions};
use para_core::mobility::{emit_timeline_csv, load_mobility, simulate, MobilityConfig};
use para_core::model::{user_pte, Allocation, Scenario, TIERS};
use para_core::{ParaError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "para-bench", version, about = "Run allocation experiments and write plot-ready CSV files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one generated scenario with one or all methods.
    Run(RunArgs),
    /// Run a sweep specification.
    Sweep(SweepArgs),
    /// Simulate intermittent aerial and satellite coverage.
    Mobility(MobilityArgs),
    /// Check the solvers against exhaustive search on small instances.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Tolerances {
    /// Stopping tolerance of the share optimizer.
    #[arg(long)]
    eps1: Option<f64>,
    /// Stopping tolerance of the association and offload step.
    #[arg(long)]
    eps2: Option<f64>,
    /// Stopping tolerance of the outer loop.
    #[arg(long)]
    eps3: Option<f64>,
}

impl Tolerances {
    fn options(&self) -> ParaOptions {
        let mut o = ParaOptions::default();
        if let Some(v) = self.eps1 {
            o.fp.eps1 = v;
        }
        if let Some(v) = self.eps2 {
            o.sdr.eps2 = v;
        }
        if let Some(v) = self.eps3 {
            o.eps3 = v;
        }
        o
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Method name; every method runs when omitted.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record measured wall time in the output.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification file.
    spec: PathBuf,
    /// Scenario configuration replacing the one embedded in the sweep file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the seed list of the sweep file with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the method list of the sweep file with this single method.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    timing: bool,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct MobilityArgs {
    /// Scenario configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coverage and workload configuration file.
    #[arg(long)]
    mobility: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random assignment matrices to check.
    #[arg(long, default_value_t = 200)]
    matrices: usize,
    /// Single-user scenarios to check against the product grid.
    #[arg(long, default_value_t = 2)]
    scenarios: usize,
    /// Scenario configuration; counts are forced to one user and one server per tier.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tol: Tolerances,
}

fn config_or_default(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn methods(name: &Option<String>) -> Result<Vec<Method>> {
    match name {
        Some(s) => Ok(vec![s.parse()?]),
        None => Ok(Method::ALL.to_vec()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ParaError::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Solves one scenario; returns whether every method succeeded.
fn cmd_run(args: &RunArgs) -> Result<bool> {
    let cfg = config_or_default(&args.config)?;
    let scn = generate_scenario(&cfg, args.seed)?;
    let opts = args.tol.options();
    fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    let mut report = Vec::new();
    let mut ok = true;
    for m in methods(&args.method)? {
        match run_method(m, &scn, &opts, args.seed) {
            Ok(tr) => {
                let row = RunRow::from_trace(0.0, m, args.seed, &scn, &tr, args.timing)?;
                println!("{m:<6} objective {:.6e}  delay {:.4e} s  energy {:.4e} J  iterations {}", row.objective, row.delay_s, row.energy_j, row.iters);
                report.push(json!({
                    "method": m.name(),
                    "objective": row.objective,
                    "delay_s": row.delay_s,
                    "energy_j": row.energy_j,
                    "iterations": row.iters,
                    "converged": tr.converged,
                    "objective_trace": tr.p3_trace,
                    "offload": tr.allocation.phi,
                }));
                rows.push(row);
            }
            Err(e) => {
                eprintln!("{m}: {e}");
                report.push(json!({ "method": m.name(), "error": e.to_string() }));
                rows.push(RunRow::failed(0.0, m, args.seed));
                ok = false;
            }
        }
    }
    emit_csv(&rows, &args.out.join("runs.csv"))?;
    write_json(&args.out.join("run.json"), &json!({ "seed": args.seed, "runs": report }))?;
    Ok(ok)
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let mut spec = load_sweep(&args.spec)?;
    if let Some(p) = &args.config {
        spec.scenario = load_config(p)?;
    }
    if let Some(s) = args.seed {
        spec.seeds = vec![s];
    }
    if let Some(m) = &args.method {
        spec.methods = vec![m.parse::<Method>()?.name().to_string()];
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    spec.timing |= args.timing;
    let out = run_experiment(&spec, &args.tol.options(), &args.out)?;
    for f in &out.failures {
        eprintln!("{} {} seed {}: {}", f.sweep_value, f.method, f.seed, f.error);
    }
    println!("{} runs, {} failed; results in {}", out.rows.len(), out.failures.len(), args.out.display());
    Ok(out.all_succeeded())
}

fn cmd_mobility(args: &MobilityArgs) -> Result<bool> {
    let cfg = config_or_default(&args.config)?;
    let mcfg = match &args.mobility {
        Some(p) => load_mobility(p)?,
        None => MobilityConfig::default(),
    };
    let scn = generate_scenario(&cfg, args.seed)?;
    let opts = args.tol.options();
    fs::create_dir_all(&args.out)?;
    let mut report = Vec::new();
    let mut ok = true;
    for m in methods(&args.method)? {
        let tl = simulate(&scn, &mcfg, m, &opts, args.seed)?;
        emit_timeline_csv(&tl, &args.out.join(format!("timeline_{}.csv", m.name())))?;
        let last = tl.slots.last();
        println!(
            "{m:<6} completion {:.3}  finished at {}  energy {:.4e} J",
            tl.final_completion(),
            tl.completion_time.map_or("-".to_string(), |t| format!("{t} s")),
            tl.total_energy()
        );
        if let Some(e) = &tl.error {
            eprintln!("{m}: {e}");
            ok = false;
        }
        report.push(json!({
            "method": m.name(),
            "completion": tl.final_completion(),
            "completion_time_s": tl.completion_time,
            "pte": last.map(|s| s.pte),
            "delay_s": tl.total_delay(),
            "energy_j": tl.total_energy(),
            "rounds": tl.rounds.len(),
            "solves": tl.solves,
            "error": tl.error,
        }));
    }
    write_json(&args.out.join("mobility.json"), &json!({ "seed": args.seed, "runs": report }))?;
    Ok(ok)
}

/// Best total over every injective row-to-column map of a matrix with at
/// most as many rows as columns.
fn enumerate_best(m: &[Vec<f64>], maximize: bool) -> f64 {
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, maximize: bool, best: &mut f64) {
        if row == m.len() {
            if (maximize && acc > *best) || (!maximize && acc < *best) {
                *best = acc;
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(m, row + 1, used, acc + m[row][j], maximize, best);
                used[j] = false;
            }
        }
    }
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    go(m, 0, &mut vec![false; m[0].len()], 0.0, maximize, &mut best);
    best
}

/// Checks the assignment solver on random matrices; returns the number of mismatches.
fn check_assignment(rng: &mut ChaCha8Rng, count: usize) -> Result<usize> {
    let mut bad = 0;
    for _ in 0..count {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(1..=6);
        let scores: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-10i32..=10) as f64).collect()).collect();
        let maximize = rng.gen::<bool>();
        let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
        let got = total_score(&ScoreMatrix::new(scores.clone(), sense)?, &optimal_assignment(&ScoreMatrix::new(scores.clone(), sense)?));
        // Enumerate over the orientation with fewer rows than columns.
        let want = if rows <= cols {
            enumerate_best(&scores, maximize)
        } else {
            let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| scores[i][j]).collect()).collect();
            enumerate_best(&t, maximize)
        };
        if got != want {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Largest summed ratio of a one-user, one-server-per-tier scenario with
/// offload ratios on a 0.05 grid and every share on a 0.1 grid.
fn single_user_grid(scn: &Scenario) -> Result<f64> {
    const PHI: usize = 20;
    const SHARE: usize = 10;
    let mut a = Allocation::uniform(scn, 1.0);
    for tier in TIERS {
        a.set_assoc(tier, 0, 0);
    }
    let share = |k: usize| k as f64 / SHARE as f64;
    // Each level term depends on its own ratio, the remainder entering the
    // level and that level's shares only.
    let mut memo: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut level_best = |a: &mut Allocation, l: usize, own: usize, rem: usize| -> Result<f64> {
        if let Some(&v) = memo.get(&(l, own, rem)) {
            return Ok(v);
        }
        let mut best = f64::NEG_INFINITY;
        let triples: Vec<(usize, usize, usize)> = if l == 0 {
            (1..=SHARE).map(|c| (SHARE, SHARE, c)).collect()
        } else {
            (1..=SHARE).flat_map(|p| (1..=SHARE).flat_map(move |b| (1..=SHARE).map(move |c| (p, b, c)))).collect()
        };
        for (p, b, c) in triples {
            match l {
                0 => a.cpu_user[0] = share(c),
                1 => {
                    a.pw_user[0] = share(p);
                    a.bw[0][0][0] = share(b);
                    a.cpu[0][0][0] = share(c);
                }
                _ => {
                    a.pw[l - 2][0][0] = share(p);
                    a.bw[l - 1][0][0] = share(b);
                    a.cpu[l - 1][0][0] = share(c);
                }
            }
            best = best.max(user_pte(scn, a, 0)?.1[l]);
        }
        memo.insert((l, own, rem), best);
        Ok(best)
    };
    let mut best = f64::NEG_INFINITY;
    for i in 0..=PHI {
        for j in 0..=PHI - i {
            for k in 0..=PHI - i - j {
                let steps = [i, j, k, PHI - i - j - k];
                a.phi[0] = steps.map(|s| s as f64 / PHI as f64);
                let mut total = 0.0;
                for l in 0..4 {
                    let rem: usize = steps[l..].iter().sum();
                    total += level_best(&mut a, l, steps[l], rem)?;
                }
                best = best.max(total);
            }
        }
    }
    Ok(best)
}

fn cmd_oracle(args: &OracleArgs) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let bad = check_assignment(&mut rng, args.matrices)?;
    println!("assignment: {bad} mismatches on {} matrices", args.matrices);
    let mut ok = bad == 0;
    let mut cfg = config_or_default(&args.config)?;
    cfg.n_users = 1;
    cfg.m_t = 1;
    cfg.m_a = 1;
    cfg.m_s = 1;
    let opts = args.tol.options();
    for s in 0..args.scenarios as u64 {
        let seed = args.seed + s;
        let scn = generate_scenario(&cfg, seed)?;
        let grid = single_user_grid(&scn)?;
        let para = run_para(&scn, &opts, seed)?.objective();
        let pass = para >= 0.95 * grid;
        ok &= pass;
        println!("grid seed {seed}: allocator {para:.6e}, grid {grid:.6e}, ratio {:.4} {}", para / grid, if pass { "ok" } else { "BELOW" });
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Mobility(a) => cmd_mobility(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
