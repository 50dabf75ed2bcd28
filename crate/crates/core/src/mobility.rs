//! Slotted simulation of task rounds under intermittent aerial and satellite
//! coverage.
//!
//! Aerial and satellite server slots alternate between a stay window and an
//! out window. When a stay ends the server leaves, and a replacement with a
//! freshly drawn link distance appears once the out window has elapsed.
//! Before each round every running user's task duration is compared with the
//! remaining stay of the aerial and satellite servers it uses. While some
//! task would outlast its server, the user with the largest overshoot is
//! silenced for the round and the policy is solved again over the others.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{fmt_float, refresh_gains};
use crate::driver::{run_method, Method, ParaOptions};
use crate::error::{ParaError, Result};
use crate::model::{
    level_delays, level_energies, objective, remaining_ratio, Allocation, ChainComponents, Scenario, Tier, Weights,
};

/// Coverage windows, workload and clock settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// Aerial stay window in s.
    pub stay_a: f64,
    /// Satellite stay window in s.
    pub stay_s: f64,
    /// Aerial out window in s; zero keeps aerial servers covered for good.
    pub out_a: f64,
    /// Satellite out window in s; zero keeps satellites covered for good.
    pub out_s: f64,
    pub tasks_per_user: usize,
    /// Slot length in s.
    pub slot: f64,
    /// Simulated time in s.
    pub horizon: f64,
    /// Start every server slot at a random point of its first stay window.
    pub stagger: bool,
    /// Relative spread of the link distance drawn for a replacement server.
    pub distance_jitter: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            stay_a: 600.0,
            stay_s: 420.0,
            out_a: 100.0,
            out_s: 100.0,
            tasks_per_user: 5,
            slot: 1.0,
            horizon: 10800.0,
            stagger: false,
            distance_jitter: 0.0,
        }
    }
}

fn bad(field: &str, reason: &str) -> ParaError {
    ParaError::Config { field: field.into(), reason: reason.into() }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("stay_a", self.stay_a), ("stay_s", self.stay_s), ("slot", self.slot), ("horizon", self.horizon)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(name, "must be positive and finite"));
            }
        }
        for (name, v) in [("out_a", self.out_a), ("out_s", self.out_s)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(bad(name, "must be non-negative and finite"));
            }
        }
        if self.tasks_per_user == 0 {
            return Err(bad("tasks_per_user", "must be positive"));
        }
        let cycle = (self.stay_a + self.out_a).max(self.stay_s + self.out_s);
        if self.horizon < cycle {
            return Err(bad("horizon", "must cover at least one stay and out cycle"));
        }
        if !(0.0..1.0).contains(&self.distance_jitter) {
            return Err(bad("distance_jitter", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Parses and validates a mobility configuration from TOML text.
pub fn parse_mobility(text: &str) -> Result<MobilityConfig> {
    let cfg: MobilityConfig = toml::from_str(text).map_err(|e| ParaError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a mobility configuration file.
pub fn load_mobility(path: &Path) -> Result<MobilityConfig> {
    parse_mobility(&fs::read_to_string(path)?)
}

/// Coverage clock of one aerial or satellite server slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerClock {
    pub stay: f64,
    pub out: f64,
    /// Time at which the first stay window starts, shifted into the past
    /// when staggered.
    pub offset: f64,
}

impl ServerClock {
    fn period(&self) -> f64 {
        self.stay + self.out
    }

    /// Whether the slot is served at `t`.
    pub fn covered(&self, t: f64) -> bool {
        self.remaining(t) > 0.0
    }

    /// Time left in the current stay window, zero while out and infinite
    /// when the out window is empty.
    pub fn remaining(&self, t: f64) -> f64 {
        if self.out == 0.0 {
            return f64::INFINITY;
        }
        let phase = (t - self.offset).rem_euclid(self.period());
        if phase < self.stay {
            self.stay - phase
        } else {
            0.0
        }
    }

    /// Index of the server occupying the slot at `t`; grows by one per cycle.
    pub fn generation(&self, t: f64) -> u64 {
        if self.out == 0.0 {
            return 0;
        }
        ((t - self.offset) / self.period()).floor().max(0.0) as u64
    }

    /// First time after `t` at which coverage switches.
    pub fn next_change(&self, t: f64) -> f64 {
        if self.out == 0.0 {
            return f64::INFINITY;
        }
        let p = self.period();
        let phase = (t - self.offset).rem_euclid(p);
        let base = t - phase;
        if phase < self.stay {
            base + self.stay
        } else {
            base + p
        }
    }
}

/// Clocks of every aerial and satellite server slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub aerial: Vec<ServerClock>,
    pub satellite: Vec<ServerClock>,
}

impl Coverage {
    pub fn new(scn: &Scenario, cfg: &MobilityConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6269_6c69_7479);
        let mut clocks = |count: usize, stay: f64, out: f64| -> Vec<ServerClock> {
            (0..count)
                .map(|_| {
                    let offset = if cfg.stagger { -stay * rng.gen::<f64>() } else { 0.0 };
                    ServerClock { stay, out, offset }
                })
                .collect()
        };
        let aerial = clocks(scn.m(Tier::Aerial), cfg.stay_a, cfg.out_a);
        let satellite = clocks(scn.m(Tier::Satellite), cfg.stay_s, cfg.out_s);
        Self { aerial, satellite }
    }

    /// Clocks of a tier; terrestrial servers have none.
    pub fn tier(&self, tier: Tier) -> &[ServerClock] {
        match tier {
            Tier::Terrestrial => &[],
            Tier::Aerial => &self.aerial,
            Tier::Satellite => &self.satellite,
        }
    }

    /// Covered server slots per tier at `t`.
    pub fn available(&self, scn: &Scenario, t: f64) -> [Vec<usize>; 3] {
        [
            (0..scn.m(Tier::Terrestrial)).collect(),
            (0..self.aerial.len()).filter(|&m| self.aerial[m].covered(t)).collect(),
            (0..self.satellite.len()).filter(|&m| self.satellite[m].covered(t)).collect(),
        ]
    }

    /// Earliest coverage switch after `t`.
    pub fn next_change(&self, t: f64) -> f64 {
        self.aerial.iter().chain(&self.satellite).map(|c| c.next_change(t)).fold(f64::INFINITY, f64::min)
    }
}

/// Work a user plans for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedTask {
    pub user: usize,
    /// Aerial server slot the task needs, if any data reaches the aerial tier.
    pub aerial: Option<usize>,
    /// Satellite server slot the task needs, if any data reaches the satellite tier.
    pub satellite: Option<usize>,
    /// Task duration in s.
    pub duration: f64,
}

/// Users whose aerial or satellite server leaves before their task would
/// finish when the round starts at `t`. A task that ends exactly when the
/// stay ends is kept.
pub fn handover_check(cov: &Coverage, t: f64, tasks: &[PlannedTask]) -> BTreeSet<usize> {
    tasks
        .iter()
        .filter(|task| {
            let short = |clock: Option<&ServerClock>| clock.is_some_and(|c| task.duration > c.remaining(t));
            short(task.aerial.map(|m| &cov.aerial[m])) || short(task.satellite.map(|m| &cov.satellite[m]))
        })
        .map(|task| task.user)
        .collect()
}

/// Time by which a task outlasts the earlier of its servers' remaining stays.
pub fn overshoot(cov: &Coverage, t: f64, task: &PlannedTask) -> f64 {
    let a = task.aerial.map_or(f64::INFINITY, |m| cov.aerial[m].remaining(t));
    let s = task.satellite.map_or(f64::INFINITY, |m| cov.satellite[m].remaining(t));
    task.duration - a.min(s)
}

/// Per-user state during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskState {
    /// Waiting for the next round.
    Queued,
    /// Executing a task.
    Running,
    /// Excluded from the current round by a handover.
    Silent,
    /// All tasks finished.
    Done,
}

/// State of the system during one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Slot start in s.
    pub t: f64,
    /// Covered server slots per tier.
    pub available: [usize; 3],
    pub states: Vec<TaskState>,
    /// Summed duration of completed tasks in s.
    pub cum_delay: f64,
    /// Energy of completed tasks in J.
    pub cum_energy: f64,
    /// Completed tasks over all tasks.
    pub completion: f64,
    /// Trained parameters of completed tasks over their weighted cost.
    pub pte: f64,
}

/// One executed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub start: f64,
    /// Start plus the longest task, rounded up to the slot grid.
    pub end: f64,
    /// Running users, ascending.
    pub users: Vec<usize>,
    pub silenced: Vec<usize>,
    /// Task duration per running user.
    pub durations: Vec<f64>,
    /// Base indices of the covered servers per tier; server `j` of the
    /// round's scenario is `servers[tier][j]`.
    pub servers: [Vec<usize>; 3],
    /// Scenario restricted to running users and covered servers.
    pub scenario: Scenario,
    /// Allocation over `scenario`; row `i` belongs to `users[i]`.
    pub allocation: Allocation,
    /// Summed ratio objective of the allocation.
    pub objective: f64,
}

/// One energy entry: a hop or compute stage of a completed task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEntry {
    pub round: usize,
    pub user: usize,
    /// Stage index in chain order: local compute, user uplink, terrestrial
    /// compute, terrestrial uplink, aerial compute, aerial uplink, satellite
    /// compute.
    pub stage: usize,
    pub energy: f64,
}

/// Chain components as an array in stage order.
pub fn stages(c: &ChainComponents) -> [f64; 7] {
    [c.up, c.ut, c.tp, c.tt, c.ap, c.at, c.sp]
}

/// Full simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub method: Method,
    pub slots: Vec<SlotRecord>,
    pub rounds: Vec<RoundRecord>,
    pub ledger: Vec<EnergyEntry>,
    /// Time at which the last task finished, if all did.
    pub completion_time: Option<f64>,
    /// Tasks finished per user.
    pub tasks_done: Vec<usize>,
    /// Number of policy solves performed.
    pub solves: usize,
    /// Message of a policy failure that ended the run early.
    pub error: Option<String>,
}

impl Timeline {
    pub fn final_completion(&self) -> f64 {
        self.slots.last().map_or(0.0, |s| s.completion)
    }

    pub fn total_energy(&self) -> f64 {
        self.slots.last().map_or(0.0, |s| s.cum_energy)
    }

    pub fn total_delay(&self) -> f64 {
        self.slots.last().map_or(0.0, |s| s.cum_delay)
    }
}

/// Base distances of the replacement for slot `m` of `tier` in generation `gen`.
fn generation_rng(seed: u64, tier: Tier, m: usize, gen: u64) -> ChaCha8Rng {
    let key = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((tier.index() as u64) << 56)
        .wrapping_add((m as u64) << 40)
        .wrapping_add(gen);
    ChaCha8Rng::seed_from_u64(key)
}

fn jitter(rng: &mut ChaCha8Rng, base: f64, j: f64) -> f64 {
    crate::bench::jittered(rng, base, j)
}

/// Scenario over `users` and the covered server slots `servers`, with link
/// distances of the servers' current generations.
pub fn restrict(
    base: &Scenario,
    users: &[usize],
    servers: &[Vec<usize>; 3],
    gens: &[Vec<u64>; 3],
    jitter_rel: f64,
    seed: u64,
) -> Result<Scenario> {
    let top = &base.topology;
    let [st, sa, ss] = servers;
    let mut dist_ta: Vec<Vec<f64>> = st.iter().map(|&i| sa.iter().map(|&j| top.dist_ta_km[i][j]).collect()).collect();
    let mut dist_as: Vec<Vec<f64>> = sa.iter().map(|&i| ss.iter().map(|&j| top.dist_as_km[i][j]).collect()).collect();
    if jitter_rel > 0.0 {
        for (c, &j) in sa.iter().enumerate() {
            if gens[1][c] > 0 {
                let mut rng = generation_rng(seed, Tier::Aerial, j, gens[1][c]);
                for (r, &i) in st.iter().enumerate() {
                    dist_ta[r][c] = jitter(&mut rng, top.dist_ta_km[i][j], jitter_rel);
                }
            }
        }
        for (c, &j) in ss.iter().enumerate() {
            if gens[2][c] > 0 {
                let mut rng = generation_rng(seed, Tier::Satellite, j, gens[2][c]);
                for (r, &i) in sa.iter().enumerate() {
                    dist_as[r][c] = jitter(&mut rng, top.dist_as_km[i][j], jitter_rel);
                }
            }
        }
    }
    let mut topology = top.clone();
    topology.n_users = users.len();
    topology.servers = [st.len(), sa.len(), ss.len()];
    topology.dist_ut_km = users.iter().map(|&n| st.iter().map(|&m| top.dist_ut_km[n][m]).collect()).collect();
    topology.dist_ta_km = dist_ta;
    topology.dist_as_km = dist_as;
    refresh_gains(&mut topology)?;
    let pick = |t: usize, list: &[usize]| {
        list.iter()
            .map(|&m| {
                let mut s = base.servers[t][m].clone();
                s.pref = users.iter().map(|&n| s.pref[n]).collect();
                s
            })
            .collect::<Vec<_>>()
    };
    let scn = Scenario {
        topology,
        users: users.iter().map(|&n| base.users[n].clone()).collect(),
        servers: [pick(0, st), pick(1, sa), pick(2, ss)],
        weights: base.weights,
    };
    scn.validate()?;
    Ok(scn)
}

/// Plans of every user in `alloc`, mapped back to base user and server indices.
fn plan(
    scn: &Scenario,
    alloc: &Allocation,
    users: &[usize],
    servers: &[Vec<usize>; 3],
) -> Result<Vec<PlannedTask>> {
    let delays = level_delays(scn, alloc)?;
    Ok(users
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let phi = &alloc.phi[i];
            let uses = |tier: Tier| {
                (remaining_ratio(phi, tier) > 0.0).then(|| servers[tier.index()][alloc.assoc(tier, i)])
            };
            PlannedTask {
                user: n,
                aerial: uses(Tier::Aerial),
                satellite: uses(Tier::Satellite),
                duration: delays[i].total(),
            }
        })
        .collect())
}

/// Cached policy solutions keyed by running users and server generations.
type SolveKey = (Vec<usize>, [Vec<(usize, u64)>; 3]);

struct Sim<'a> {
    base: &'a Scenario,
    cfg: &'a MobilityConfig,
    method: Method,
    opts: &'a ParaOptions,
    seed: u64,
    cov: Coverage,
    cache: HashMap<SolveKey, (Scenario, Allocation)>,
    solves: usize,
}

impl Sim<'_> {
    fn generations(&self, servers: &[Vec<usize>; 3], t: f64) -> [Vec<u64>; 3] {
        [
            vec![0; servers[0].len()],
            servers[1].iter().map(|&m| self.cov.aerial[m].generation(t)).collect(),
            servers[2].iter().map(|&m| self.cov.satellite[m].generation(t)).collect(),
        ]
    }

    fn solve(&mut self, users: &[usize], servers: &[Vec<usize>; 3], t: f64) -> Result<(Scenario, Allocation)> {
        let gens = self.generations(servers, t);
        let key: SolveKey = (
            users.to_vec(),
            [0, 1, 2].map(|k| servers[k].iter().copied().zip(gens[k].iter().copied()).collect()),
        );
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let scn = restrict(self.base, users, servers, &gens, self.cfg.distance_jitter, self.seed)?;
        let trace = run_method(self.method, &scn, self.opts, self.seed)?;
        self.solves += 1;
        let out = (scn, trace.allocation);
        self.cache.insert(key, out.clone());
        Ok(out)
    }
}

/// Appends one record per slot in `[from, to)`, stopping at the horizon.
#[allow(clippy::too_many_arguments)]
fn fill_slots(
    tl: &mut Timeline,
    cov: &Coverage,
    base: &Scenario,
    cfg: &MobilityConfig,
    from: f64,
    to: f64,
    states: impl Fn(f64) -> Vec<TaskState>,
    acc: (f64, f64, f64, usize),
    total_tasks: f64,
    w: &Weights,
) {
    let (cum_delay, cum_energy, trained, done) = acc;
    let n_slots = (cfg.horizon / cfg.slot).round() as usize;
    let cost = w.w_t * cum_delay + w.w_e_eff() * cum_energy;
    let pte = if cost > 0.0 { trained / cost } else { 0.0 };
    let mut k = (from / cfg.slot).round() as usize;
    while (k as f64) * cfg.slot < to - 1e-9 && k < n_slots {
        let s = k as f64 * cfg.slot;
        let av = cov.available(base, s);
        tl.slots.push(SlotRecord {
            t: s,
            available: [av[0].len(), av[1].len(), av[2].len()],
            states: states(s),
            cum_delay,
            cum_energy,
            completion: done as f64 / total_tasks,
            pte,
        });
        k += 1;
    }
}

fn snap_up(t: f64, slot: f64) -> f64 {
    let k = (t / slot - 1e-9).ceil();
    k.max(0.0) * slot
}

/// Runs the slotted simulation of `method` on `base`.
///
/// A policy failure ends the run and is reported in [`Timeline::error`]; the
/// slots and rounds up to that point are kept.
pub fn simulate(base: &Scenario, cfg: &MobilityConfig, method: Method, opts: &ParaOptions, seed: u64) -> Result<Timeline> {
    cfg.validate()?;
    base.validate()?;
    let n = base.n_users();
    let total_tasks = (n * cfg.tasks_per_user) as f64;
    let mut sim = Sim { base, cfg, method, opts, seed, cov: Coverage::new(base, cfg, seed), cache: HashMap::new(), solves: 0 };
    let mut tl = Timeline {
        method,
        slots: Vec::new(),
        rounds: Vec::new(),
        ledger: Vec::new(),
        completion_time: None,
        tasks_done: vec![0; n],
        solves: 0,
        error: None,
    };
    let w = base.weights;
    let (mut cum_delay, mut cum_energy, mut trained, mut done_tasks) = (0.0, 0.0, 0.0, 0usize);
    let mut t = 0.0;
    let n_slots = (cfg.horizon / cfg.slot).round() as usize;
    loop {
        if done_tasks as f64 >= total_tasks || t >= cfg.horizon - 1e-9 {
            break;
        }
        let pending: Vec<usize> = (0..n).filter(|&u| tl.tasks_done[u] < cfg.tasks_per_user).collect();
        let avail = sim.cov.available(base, t);
        let mut silenced: BTreeSet<usize> = BTreeSet::new();
        let mut round: Option<(Scenario, Allocation, Vec<usize>, Vec<PlannedTask>)> = None;
        if avail.iter().all(|v| !v.is_empty()) {
            let mut running = pending.clone();
            while !running.is_empty() {
                let (scn, alloc) = match sim.solve(&running, &avail, t) {
                    Ok(v) => v,
                    Err(e) => {
                        tl.error = Some(e.to_string());
                        break;
                    }
                };
                let tasks = plan(&scn, &alloc, &running, &avail)?;
                let out = handover_check(&sim.cov, t, &tasks);
                if out.is_empty() {
                    round = Some((scn, alloc, running.clone(), tasks));
                    break;
                }
                let worst = tasks
                    .iter()
                    .filter(|k| out.contains(&k.user))
                    .map(|k| (overshoot(&sim.cov, t, k), k.user))
                    .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a })
                    .1;
                silenced.insert(worst);
                running.retain(|&u| u != worst);
            }
        }
        if tl.error.is_some() {
            break;
        }
        let Some((scn, alloc, running, tasks)) = round else {
            // Nobody can run: wait for the next coverage change.
            let next = snap_up(sim.cov.next_change(t), cfg.slot).min(cfg.horizon);
            let next = if next <= t { t + cfg.slot } else { next };
            let states: Vec<TaskState> = (0..n)
                .map(|u| {
                    if tl.tasks_done[u] >= cfg.tasks_per_user {
                        TaskState::Done
                    } else if silenced.contains(&u) {
                        TaskState::Silent
                    } else {
                        TaskState::Queued
                    }
                })
                .collect();
            fill_slots(&mut tl, &sim.cov, base, cfg, t, next, |_| states.clone(), (cum_delay, cum_energy, trained, done_tasks), total_tasks, &w);
            t = next;
            continue;
        };
        let longest = tasks.iter().map(|k| k.duration).fold(0.0, f64::max);
        let end = snap_up(t + longest, cfg.slot).max(t + cfg.slot);
        if end > cfg.horizon + 1e-9 {
            let states: Vec<TaskState> = (0..n)
                .map(|u| if tl.tasks_done[u] >= cfg.tasks_per_user { TaskState::Done } else { TaskState::Queued })
                .collect();
            fill_slots(&mut tl, &sim.cov, base, cfg, t, cfg.horizon, |_| states.clone(), (cum_delay, cum_energy, trained, done_tasks), total_tasks, &w);
            break;
        }
        let start = t;
        let finish: HashMap<usize, f64> = tasks.iter().map(|k| (k.user, start + k.duration)).collect();
        let done_before = tl.tasks_done.clone();
        let silenced_now = silenced.clone();
        let states_at = move |s: f64| -> Vec<TaskState> {
            (0..n)
                .map(|u| {
                    if done_before[u] >= cfg.tasks_per_user {
                        TaskState::Done
                    } else if let Some(&f) = finish.get(&u) {
                        if s < f {
                            TaskState::Running
                        } else {
                            TaskState::Queued
                        }
                    } else if silenced_now.contains(&u) {
                        TaskState::Silent
                    } else {
                        TaskState::Queued
                    }
                })
                .collect()
        };
        fill_slots(&mut tl, &sim.cov, base, cfg, t, end, states_at, (cum_delay, cum_energy, trained, done_tasks), total_tasks, &w);
        let r = tl.rounds.len();
        let energies = level_energies(&scn, &alloc)?;
        for (i, &u) in running.iter().enumerate() {
            for (stage, e) in stages(&energies[i]).into_iter().enumerate() {
                if e > 0.0 {
                    tl.ledger.push(EnergyEntry { round: r, user: u, stage, energy: e });
                }
                cum_energy += e;
            }
            cum_delay += tasks[i].duration;
            trained += base.users[u].params;
            tl.tasks_done[u] += 1;
            done_tasks += 1;
        }
        tl.rounds.push(RoundRecord {
            start,
            end,
            users: running,
            silenced: silenced.into_iter().collect(),
            durations: tasks.iter().map(|k| k.duration).collect(),
            servers: avail,
            objective: objective(&scn, &alloc)?,
            scenario: scn,
            allocation: alloc,
        });
        t = end;
        if done_tasks as f64 >= total_tasks {
            tl.completion_time = Some(t);
        }
    }
    // The remaining slots up to the horizon report the final counters.
    if tl.slots.len() < n_slots {
        let states: Vec<TaskState> = (0..n)
            .map(|u| if tl.tasks_done[u] >= cfg.tasks_per_user { TaskState::Done } else { TaskState::Queued })
            .collect();
        fill_slots(&mut tl, &sim.cov, base, cfg, t, cfg.horizon, |_| states.clone(), (cum_delay, cum_energy, trained, done_tasks), total_tasks, &w);
    }
    tl.solves = sim.solves;
    Ok(tl)
}

/// Column names of the per-slot timeline CSV.
pub const TIMELINE_COLUMNS: [&str; 5] = ["slot", "completion", "pte", "delay_s", "energy_j"];

/// Writes one line per slot of `tl` with a header line.
pub fn emit_timeline_csv(tl: &Timeline, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TIMELINE_COLUMNS)?;
    for (i, s) in tl.slots.iter().enumerate() {
        w.write_record([i.to_string(), fmt_float(s.completion), fmt_float(s.pte), fmt_float(s.cum_delay), fmt_float(s.cum_energy)])?;
    }
    w.flush()?;
    Ok(())
}
