//! Experiment harness: configuration files, seeded scenario generation,
//! parameter sweeps and CSV output.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{run_method, Method, ParaOptions, RunTrace};
use crate::error::{ParaError, Result};
use crate::model::{
    channel_gain, dbm_per_hz_to_w, level_delays, level_energies, objective, Allocation, LinkKind, Scenario,
    ServerProfile, Tier, Topology, UserProfile, Weights,
};

/// Scenario settings. Every field has a default, so an empty file yields
/// the reference scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub m_t: usize,
    pub m_a: usize,
    pub m_s: usize,
    /// Trainable parameter range per user.
    pub params_min: f64,
    pub params_max: f64,
    /// Token data range per user in bits.
    pub tokens_min: f64,
    pub tokens_max: f64,
    /// Ratio of intermediate-result bits to token bits.
    pub aux_factor: f64,
    /// User maximum transmit power in W.
    pub p_n: f64,
    /// Terrestrial and aerial server maximum transmit power in W.
    pub p_m: f64,
    /// Nominal user compute speed in FLOP/s.
    pub f_n: f64,
    /// Nominal server compute speed in FLOP/s.
    pub f_m: f64,
    /// Fraction of nominal compute speed that is usable.
    pub gpu_utilization: f64,
    /// Server bandwidth in Hz.
    pub b_m: f64,
    /// Noise PSD in dBm/Hz.
    pub noise_dbm_hz: f64,
    pub kappa_n: f64,
    pub kappa_m: f64,
    pub e_n: f64,
    pub e_m: f64,
    pub w_t: f64,
    pub w_e: f64,
    pub w_b: f64,
    pub w_f: f64,
    pub energy_scale: f64,
    /// Local-level preference of every user.
    pub c_n: f64,
    /// Preference of every server for every user.
    pub c_m: f64,
    /// Draw every user and server preference uniformly from (0, 1] instead.
    pub random_preferences: bool,
    /// Radius in km of the disk on which users lie around terrestrial servers.
    pub ut_radius_km: f64,
    /// Terrestrial-aerial distance in km.
    pub d_ta_km: f64,
    /// Aerial-satellite distance in km.
    pub d_as_km: f64,
    /// Relative spread of replacement-server distances in mobility runs.
    pub link_distance_jitter: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: 20,
            m_t: 3,
            m_a: 3,
            m_s: 2,
            params_min: 1.2e6,
            params_max: 1.4e7,
            tokens_min: 1e7,
            tokens_max: 5e7,
            aux_factor: 2.0,
            p_n: 2.0,
            p_m: 20.0,
            f_n: 19.58e12,
            f_m: 1372.8e12,
            gpu_utilization: 0.55,
            b_m: 10e6,
            noise_dbm_hz: -174.0,
            kappa_n: 1e-38,
            kappa_m: 1e-38,
            e_n: 1.0,
            e_m: 1.0,
            w_t: 0.5,
            w_e: 0.5,
            w_b: 32.0,
            w_f: 8.0,
            energy_scale: 1e-3,
            c_n: 1.0,
            c_m: 1.0,
            random_preferences: false,
            ut_radius_km: 1.0,
            d_ta_km: 20.0,
            d_as_km: 550.0,
            link_distance_jitter: 0.0,
            seed: 42,
        }
    }
}

fn bad(field: &str, reason: &str) -> ParaError {
    ParaError::Config { field: field.into(), reason: reason.into() }
}

impl ScenarioConfig {
    /// Checks counts, ranges and positivity; the error names the first bad field.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n_users", self.n_users), ("m_t", self.m_t), ("m_a", self.m_a), ("m_s", self.m_s)] {
            if v == 0 {
                return Err(bad(name, "must be positive"));
            }
        }
        let positive = [
            ("params_min", self.params_min),
            ("tokens_min", self.tokens_min),
            ("aux_factor", self.aux_factor),
            ("p_n", self.p_n),
            ("p_m", self.p_m),
            ("f_n", self.f_n),
            ("f_m", self.f_m),
            ("gpu_utilization", self.gpu_utilization),
            ("b_m", self.b_m),
            ("kappa_n", self.kappa_n),
            ("kappa_m", self.kappa_m),
            ("w_t", self.w_t),
            ("w_e", self.w_e),
            ("w_b", self.w_b),
            ("w_f", self.w_f),
            ("energy_scale", self.energy_scale),
            ("c_n", self.c_n),
            ("c_m", self.c_m),
            ("ut_radius_km", self.ut_radius_km),
            ("d_ta_km", self.d_ta_km),
            ("d_as_km", self.d_as_km),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(name, "must be positive and finite"));
            }
        }
        if self.params_max < self.params_min {
            return Err(bad("params_max", "must not be below params_min"));
        }
        if self.tokens_max < self.tokens_min {
            return Err(bad("tokens_max", "must not be below tokens_min"));
        }
        if self.gpu_utilization > 1.0 {
            return Err(bad("gpu_utilization", "must not exceed 1"));
        }
        if self.e_n < 1.0 {
            return Err(bad("e_n", "must be at least 1"));
        }
        if self.e_m < 1.0 {
            return Err(bad("e_m", "must be at least 1"));
        }
        if !self.noise_dbm_hz.is_finite() {
            return Err(bad("noise_dbm_hz", "must be finite"));
        }
        if !(0.0..1.0).contains(&self.link_distance_jitter) {
            return Err(bad("link_distance_jitter", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Server counts per tier.
    pub fn servers(&self) -> [usize; 3] {
        [self.m_t, self.m_a, self.m_s]
    }
}

/// Parses and validates a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ParaError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Smallest user to terrestrial-server distance in km.
pub const MIN_UT_KM: f64 = 0.05;

/// Distance of a point drawn uniformly on a disk of radius `r`, floored at
/// [`MIN_UT_KM`].
fn disk_distance(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    (r * rng.gen::<f64>().sqrt()).max(MIN_UT_KM)
}

/// Distance around `base` with relative spread `jitter`.
pub fn jittered(rng: &mut ChaCha8Rng, base: f64, jitter: f64) -> f64 {
    if jitter > 0.0 {
        base * (1.0 + jitter * (2.0 * rng.gen::<f64>() - 1.0))
    } else {
        base
    }
}

fn gains(d: &[Vec<f64>], k: LinkKind) -> Result<Vec<Vec<f64>>> {
    d.iter().map(|r| r.iter().map(|&x| channel_gain(x, k)).collect()).collect()
}

/// Recomputes the gain tables from the distance tables.
pub fn refresh_gains(top: &mut Topology) -> Result<()> {
    top.gain_ut = gains(&top.dist_ut_km, LinkKind::UserTerrestrial)?;
    top.gain_ta = gains(&top.dist_ta_km, LinkKind::TerrestrialAerial)?;
    top.gain_as = gains(&top.dist_as_km, LinkKind::AerialSatellite)?;
    Ok(())
}

/// Draws a scenario from `cfg`. Identical inputs give identical scenarios.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_users;
    let users: Vec<UserProfile> = (0..n)
        .map(|_| {
            let params = cfg.params_min + (cfg.params_max - cfg.params_min) * rng.gen::<f64>();
            let tokens = cfg.tokens_min + (cfg.tokens_max - cfg.tokens_min) * rng.gen::<f64>();
            UserProfile {
                params,
                tokens,
                aux_bits: cfg.aux_factor * tokens,
                p_max: cfg.p_n,
                f_max: cfg.f_n * cfg.gpu_utilization,
                kappa: cfg.kappa_n,
                epochs: cfg.e_n,
                pref: cfg.c_n,
            }
        })
        .collect();
    let server = |tier: Tier| ServerProfile {
        tier,
        f_max: cfg.f_m * cfg.gpu_utilization,
        bandwidth: cfg.b_m,
        p_max: (tier != Tier::Satellite).then_some(cfg.p_m),
        kappa: cfg.kappa_m,
        epochs: cfg.e_m,
        pref: vec![cfg.c_m; n],
    };
    let servers = [
        vec![server(Tier::Terrestrial); cfg.m_t],
        vec![server(Tier::Aerial); cfg.m_a],
        vec![server(Tier::Satellite); cfg.m_s],
    ];
    let dist_ut_km: Vec<Vec<f64>> =
        (0..n).map(|_| (0..cfg.m_t).map(|_| disk_distance(&mut rng, cfg.ut_radius_km)).collect()).collect();
    let j = cfg.link_distance_jitter;
    let dist_ta_km: Vec<Vec<f64>> =
        (0..cfg.m_t).map(|_| (0..cfg.m_a).map(|_| jittered(&mut rng, cfg.d_ta_km, j)).collect()).collect();
    let dist_as_km: Vec<Vec<f64>> =
        (0..cfg.m_a).map(|_| (0..cfg.m_s).map(|_| jittered(&mut rng, cfg.d_as_km, j)).collect()).collect();
    let mut topology = Topology {
        n_users: n,
        servers: cfg.servers(),
        dist_ut_km,
        dist_ta_km,
        dist_as_km,
        gain_ut: Vec::new(),
        gain_ta: Vec::new(),
        gain_as: Vec::new(),
        noise_psd: dbm_per_hz_to_w(cfg.noise_dbm_hz),
    };
    refresh_gains(&mut topology)?;
    let mut users = users;
    let mut servers = servers;
    if cfg.random_preferences {
        for u in &mut users {
            u.pref = 1.0 - rng.gen::<f64>();
        }
        for tier in &mut servers {
            for srv in tier.iter_mut() {
                for p in &mut srv.pref {
                    *p = 1.0 - rng.gen::<f64>();
                }
            }
        }
    }
    let weights =
        Weights { w_t: cfg.w_t, w_e: cfg.w_e, w_b: cfg.w_b, w_f: cfg.w_f, energy_scale: cfg.energy_scale };
    let scn = Scenario { topology, users, servers, weights };
    scn.validate()?;
    Ok(scn)
}

/// User and server counts `(N, M_t, M_a, M_s)` of the scaling configurations.
pub const CONFIG_SIZES: [(usize, usize, usize, usize); 5] =
    [(10, 2, 2, 2), (20, 3, 3, 2), (40, 4, 4, 3), (80, 8, 5, 4), (160, 16, 8, 5)];

/// Scenario dimension varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDimension {
    /// Server bandwidth in Hz.
    Bandwidth,
    /// Multiple of the nominal user compute speed.
    UserCompute,
    /// Multiple of the nominal server compute speed.
    ServerCompute,
    /// User transmit power in W.
    UserPower,
    /// Server transmit power in W.
    ServerPower,
    /// Delay weight; the energy weight is one minus it.
    Weights,
    /// User and server preference; zero draws every preference at random.
    Preferences,
    /// One-based row of [`CONFIG_SIZES`].
    ConfigSize,
}

impl SweepDimension {
    pub fn name(self) -> &'static str {
        match self {
            SweepDimension::Bandwidth => "bandwidth",
            SweepDimension::UserCompute => "user_compute",
            SweepDimension::ServerCompute => "server_compute",
            SweepDimension::UserPower => "user_power",
            SweepDimension::ServerPower => "server_power",
            SweepDimension::Weights => "weights",
            SweepDimension::Preferences => "preferences",
            SweepDimension::ConfigSize => "config_size",
        }
    }

    /// Copy of `base` with this dimension set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = base.clone();
        match self {
            SweepDimension::Bandwidth => c.b_m = value,
            SweepDimension::UserCompute => c.f_n = base.f_n * value,
            SweepDimension::ServerCompute => c.f_m = base.f_m * value,
            SweepDimension::UserPower => c.p_n = value,
            SweepDimension::ServerPower => c.p_m = value,
            SweepDimension::Weights => {
                c.w_t = value;
                c.w_e = 1.0 - value;
            }
            SweepDimension::Preferences => {
                if value == 0.0 {
                    c.random_preferences = true;
                } else {
                    c.c_n = value;
                    c.c_m = value;
                }
            }
            SweepDimension::ConfigSize => {
                let k = value.round();
                if (k - value).abs() > 1e-9 || !(1.0..=CONFIG_SIZES.len() as f64).contains(&k) {
                    return Err(bad("grid", "configuration size must be an integer from 1 to 5"));
                }
                let (n, mt, ma, ms) = CONFIG_SIZES[k as usize - 1];
                (c.n_users, c.m_t, c.m_a, c.m_s) = (n, mt, ma, ms);
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

/// A sweep: one run per grid value, method and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub dimension: SweepDimension,
    pub grid: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Base scenario the dimension is applied to.
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Record measured wall time; off by default so output files are reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(dimension: SweepDimension, grid: Vec<f64>, methods: &[Method], seeds: Vec<u64>) -> Self {
        Self {
            dimension,
            grid,
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            seeds,
            scenario: ScenarioConfig::default(),
            timing: false,
            workers: 0,
        }
    }

    /// Parsed method list.
    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(bad("grid", "must be non-empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(bad("grid", "values must be finite"));
        }
        if self.methods.is_empty() {
            return Err(bad("methods", "must be non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must be non-empty"));
        }
        self.parsed_methods()?;
        self.scenario.validate()?;
        for &v in &self.grid {
            self.dimension.apply(&self.scenario, v)?;
        }
        Ok(())
    }
}

/// Parses and validates a sweep specification from TOML text.
pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let spec: SweepSpec = toml::from_str(text).map_err(|e| ParaError::Parse(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads a sweep specification file.
pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    parse_sweep(&fs::read_to_string(path)?)
}

/// Outcome of one run, one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub sweep_value: f64,
    pub method: String,
    pub seed: u64,
    pub objective: f64,
    /// Summed delay over all users and hops in s.
    pub delay_s: f64,
    /// Summed energy over all users and hops in J.
    pub energy_j: f64,
    pub iters: usize,
    pub wall_ms: f64,
}

/// Column names of the per-run CSV.
pub const RUN_COLUMNS: [&str; 8] = ["sweep_value", "method", "seed", "objective", "delay_s", "energy_j", "iters", "wall_ms"];

/// Column names of the per-cell aggregate CSV.
pub const SUMMARY_COLUMNS: [&str; 7] =
    ["sweep_value", "method", "runs", "objective_mean", "delay_s_mean", "energy_j_mean", "failures"];

/// Float rendered with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Summed delay and energy of an allocation.
pub fn totals(scn: &Scenario, a: &Allocation) -> Result<(f64, f64)> {
    let d = level_delays(scn, a)?.iter().map(|c| c.total()).sum();
    let e = level_energies(scn, a)?.iter().map(|c| c.total()).sum();
    Ok((d, e))
}

impl RunRow {
    /// Row for a finished run.
    pub fn from_trace(sweep_value: f64, method: Method, seed: u64, scn: &Scenario, trace: &RunTrace, timing: bool) -> Result<Self> {
        let (delay_s, energy_j) = totals(scn, &trace.allocation)?;
        Ok(Self {
            sweep_value,
            method: method.name().into(),
            seed,
            objective: trace.objective(),
            delay_s,
            energy_j,
            iters: trace.outer_iterations,
            wall_ms: if timing { trace.wall_ms } else { 0.0 },
        })
    }

    /// Row for a run that failed; numeric fields are NaN.
    pub fn failed(sweep_value: f64, method: Method, seed: u64) -> Self {
        Self {
            sweep_value,
            method: method.name().into(),
            seed,
            objective: f64::NAN,
            delay_s: f64::NAN,
            energy_j: f64::NAN,
            iters: 0,
            wall_ms: f64::NAN,
        }
    }

    fn fields(&self) -> [String; 8] {
        [
            fmt_float(self.sweep_value),
            self.method.clone(),
            self.seed.to_string(),
            fmt_float(self.objective),
            fmt_float(self.delay_s),
            fmt_float(self.energy_j),
            self.iters.to_string(),
            fmt_float(self.wall_ms),
        ]
    }
}

/// Writes `rows` with a header line, in the given order.
pub fn emit_csv(rows: &[RunRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_COLUMNS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-run CSV written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != RUN_COLUMNS {
        return Err(ParaError::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| ParaError::Parse(format!("`{s}`: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| ParaError::Parse(format!("`{s}`: {e}")));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(RunRow {
            sweep_value: num(&rec[0])?,
            method: rec[1].to_string(),
            seed: int(&rec[2])?,
            objective: num(&rec[3])?,
            delay_s: num(&rec[4])?,
            energy_j: num(&rec[5])?,
            iters: int(&rec[6])? as usize,
            wall_ms: num(&rec[7])?,
        });
    }
    Ok(out)
}

/// Per-cell means over successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub sweep_value: f64,
    pub method: String,
    pub runs: usize,
    pub objective_mean: f64,
    pub delay_s_mean: f64,
    pub energy_j_mean: f64,
    pub failures: usize,
}

/// Groups rows by (grid value, method) in first-seen order and averages them.
pub fn summarize(rows: &[RunRow]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in rows {
        let idx = match cells.iter().position(|c| c.sweep_value == r.sweep_value && c.method == r.method) {
            Some(i) => i,
            None => {
                cells.push(CellSummary {
                    sweep_value: r.sweep_value,
                    method: r.method.clone(),
                    runs: 0,
                    objective_mean: 0.0,
                    delay_s_mean: 0.0,
                    energy_j_mean: 0.0,
                    failures: 0,
                });
                cells.len() - 1
            }
        };
        let c = &mut cells[idx];
        if r.objective.is_finite() {
            c.runs += 1;
            c.objective_mean += r.objective;
            c.delay_s_mean += r.delay_s;
            c.energy_j_mean += r.energy_j;
        } else {
            c.failures += 1;
        }
    }
    for c in &mut cells {
        let k = c.runs as f64;
        if c.runs > 0 {
            c.objective_mean /= k;
            c.delay_s_mean /= k;
            c.energy_j_mean /= k;
        } else {
            (c.objective_mean, c.delay_s_mean, c.energy_j_mean) = (f64::NAN, f64::NAN, f64::NAN);
        }
    }
    cells
}

/// Writes the aggregate CSV.
pub fn emit_summary_csv(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for c in cells {
        w.write_record([
            fmt_float(c.sweep_value),
            c.method.clone(),
            c.runs.to_string(),
            fmt_float(c.objective_mean),
            fmt_float(c.delay_s_mean),
            fmt_float(c.energy_j_mean),
            c.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A run that raised an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub sweep_value: f64,
    pub method: String,
    pub seed: u64,
    pub error: String,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Rows ordered grid-major, then method, then seed.
    pub rows: Vec<RunRow>,
    /// Final allocation of each successful run, aligned with `rows`.
    pub allocations: Vec<Option<Allocation>>,
    pub failures: Vec<RunFailure>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub errors_csv: PathBuf,
}

impl ExperimentOutput {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Job {
    cell: usize,
    value: f64,
    method: Method,
    seed: u64,
}

/// Runs every (grid value, method, seed) combination on worker threads and
/// writes `runs.csv`, `summary.csv` and `errors.csv` into `out_dir`.
pub fn run_experiment(spec: &SweepSpec, opts: &ParaOptions, out_dir: &Path) -> Result<ExperimentOutput> {
    run_experiment_with(spec, out_dir, |scn, method, seed| run_method(method, scn, opts, seed))
}

/// [`run_experiment`] with a caller-supplied solver for each run.
pub fn run_experiment_with<F>(spec: &SweepSpec, out_dir: &Path, solve: F) -> Result<ExperimentOutput>
where
    F: Fn(&Scenario, Method, u64) -> Result<RunTrace> + Sync,
{
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let methods = spec.parsed_methods()?;
    let mut jobs = Vec::new();
    for &value in &spec.grid {
        for &method in &methods {
            for &seed in &spec.seeds {
                jobs.push(Job { cell: jobs.len(), value, method, seed });
            }
        }
    }
    let results: Mutex<Vec<Option<(RunRow, Option<Allocation>, Option<String>)>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = if spec.workers > 0 {
        spec.workers
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
    .min(jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let out = run_job(spec, &solve, job);
                results.lock().expect("result sink poisoned")[job.cell] = Some(out);
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    let mut allocations = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for r in results.into_inner().expect("result sink poisoned") {
        let (row, alloc, err) = r.expect("every job reports");
        if let Some(error) = err {
            failures.push(RunFailure { sweep_value: row.sweep_value, method: row.method.clone(), seed: row.seed, error });
        }
        rows.push(row);
        allocations.push(alloc);
    }
    let runs_csv = out_dir.join("runs.csv");
    let summary_csv = out_dir.join("summary.csv");
    let errors_csv = out_dir.join("errors.csv");
    emit_csv(&rows, &runs_csv)?;
    emit_summary_csv(&summarize(&rows), &summary_csv)?;
    let mut w = csv::Writer::from_path(&errors_csv)?;
    w.write_record(["sweep_value", "method", "seed", "error"])?;
    for f in &failures {
        w.write_record([fmt_float(f.sweep_value), f.method.clone(), f.seed.to_string(), f.error.clone()])?;
    }
    w.flush()?;
    Ok(ExperimentOutput { rows, allocations, failures, runs_csv, summary_csv, errors_csv })
}

fn run_job<F>(spec: &SweepSpec, solve: &F, job: &Job) -> (RunRow, Option<Allocation>, Option<String>)
where
    F: Fn(&Scenario, Method, u64) -> Result<RunTrace>,
{
    let attempt = || -> Result<(RunRow, Allocation)> {
        let cfg = spec.dimension.apply(&spec.scenario, job.value)?;
        let scn = generate_scenario(&cfg, job.seed)?;
        let clock = Instant::now();
        let trace = solve(&scn, job.method, job.seed)?;
        let mut row = RunRow::from_trace(job.value, job.method, job.seed, &scn, &trace, spec.timing)?;
        if spec.timing {
            row.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        }
        Ok((row, trace.allocation))
    };
    match attempt() {
        Ok((row, a)) => (row, Some(a), None),
        Err(e) => (RunRow::failed(job.value, job.method, job.seed), None, Some(e.to_string())),
    }
}

/// Re-evaluates the objective of a stored allocation under the run's scenario.
pub fn audit_objective(spec: &SweepSpec, row: &RunRow, a: &Allocation) -> Result<f64> {
    let cfg = spec.dimension.apply(&spec.scenario, row.sweep_value)?;
    let scn = generate_scenario(&cfg, row.seed)?;
    objective(&scn, a)
}
