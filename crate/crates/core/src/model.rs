//! Physical-layer and cost model of the four-tier hierarchy.
//!
//! A user trains a fraction of its adapter locally and forwards the rest up a
//! chain user → terrestrial → aerial → satellite. Every formula for rates,
//! delays, energies, per-level costs and the summed parameter-training
//! efficiency (PTE) lives here, together with constraint validation.

use rand::Rng;

use crate::error::{ParaError, Result};

/// Lower clamp for shares that appear in denominators.
pub const SHARE_FLOOR: f64 = 1e-9;

/// Default feasibility tolerance for constraint residuals.
pub const FEAS_TOL: f64 = 1e-8;

/// Server tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Terrestrial,
    Aerial,
    Satellite,
}

/// The three server tiers in chain order.
pub const TIERS: [Tier; 3] = [Tier::Terrestrial, Tier::Aerial, Tier::Satellite];

impl Tier {
    /// Position in chain order (0, 1, 2).
    pub fn index(self) -> usize {
        match self {
            Tier::Terrestrial => 0,
            Tier::Aerial => 1,
            Tier::Satellite => 2,
        }
    }

    /// Offload-ratio level served by this tier (1, 2, 3; level 0 is the user).
    pub fn level(self) -> usize {
        self.index() + 1
    }

    /// Short lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Tier::Terrestrial => "terrestrial",
            Tier::Aerial => "aerial",
            Tier::Satellite => "satellite",
        }
    }
}

/// Link kinds with distinct path-loss laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    UserTerrestrial,
    TerrestrialAerial,
    AerialSatellite,
}

/// Network layout and static channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_users: usize,
    /// Server counts per tier (terrestrial, aerial, satellite).
    pub servers: [usize; 3],
    /// User ↔ terrestrial distances in km, `N × M_t`.
    pub dist_ut_km: Vec<Vec<f64>>,
    /// Terrestrial ↔ aerial distances in km, `M_t × M_a`.
    pub dist_ta_km: Vec<Vec<f64>>,
    /// Aerial ↔ satellite distances in km, `M_a × M_s`.
    pub dist_as_km: Vec<Vec<f64>>,
    /// Linear gains matching the distance tables.
    pub gain_ut: Vec<Vec<f64>>,
    pub gain_ta: Vec<Vec<f64>>,
    pub gain_as: Vec<Vec<f64>>,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
}

/// Per-user training workload and device limits.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    /// Trainable parameters `d_n`.
    pub params: f64,
    /// Input tokens `d_n^(t)`.
    pub tokens: f64,
    /// Intermediate-result and label bits `d_n^(l)`.
    pub aux_bits: f64,
    /// Maximum transmit power in W.
    pub p_max: f64,
    /// Maximum compute speed in FLOP/s.
    pub f_max: f64,
    /// Compute-efficiency coefficient.
    pub kappa: f64,
    /// Training epochs.
    pub epochs: f64,
    /// PTE preference of the local level.
    pub pref: f64,
}

/// Server limits and preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerProfile {
    pub tier: Tier,
    /// Maximum compute speed in FLOP/s.
    pub f_max: f64,
    /// Total bandwidth in Hz.
    pub bandwidth: f64,
    /// Maximum transmit power in W; `None` for satellites.
    pub p_max: Option<f64>,
    pub kappa: f64,
    pub epochs: f64,
    /// PTE preference for each user's work on this server.
    pub pref: Vec<f64>,
}

/// Cost weights and unit conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    /// Delay weight ω_t.
    pub w_t: f64,
    /// Energy weight ω_e.
    pub w_e: f64,
    /// Bits per parameter ω_b.
    pub w_b: f64,
    /// FLOPs per parameter and token ω_f.
    pub w_f: f64,
    /// Multiplier applied to energy inside costs.
    pub energy_scale: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w_t: 0.5, w_e: 0.5, w_b: 32.0, w_f: 8.0, energy_scale: 1e-3 }
    }
}

impl Weights {
    /// Energy weight including the energy scale.
    pub fn w_e_eff(&self) -> f64 {
        self.w_e * self.energy_scale
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub users: Vec<UserProfile>,
    /// Servers grouped by tier in chain order.
    pub servers: [Vec<ServerProfile>; 3],
    pub weights: Weights,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Number of servers in a tier.
    pub fn m(&self, tier: Tier) -> usize {
        self.servers[tier.index()].len()
    }

    /// Total number of servers.
    pub fn m_total(&self) -> usize {
        self.servers.iter().map(Vec::len).sum()
    }

    /// FLOPs per parameter for user `n`, `t_n = ω_f d_n^(t)`.
    pub fn flops_per_param(&self, n: usize) -> f64 {
        self.weights.w_f * self.users[n].tokens
    }

    /// Checks the type invariants of topology and profiles.
    pub fn validate(&self) -> Result<()> {
        let top = &self.topology;
        let n = self.users.len();
        if n == 0 || top.n_users != n {
            return Err(ParaError::Domain("user count must be positive and consistent".into()));
        }
        for tier in TIERS {
            if self.m(tier) == 0 || top.servers[tier.index()] != self.m(tier) {
                return Err(ParaError::Domain(format!("{} tier must be non-empty", tier.name())));
            }
        }
        let tables = [
            (&top.dist_ut_km, &top.gain_ut, n, self.m(Tier::Terrestrial)),
            (&top.dist_ta_km, &top.gain_ta, self.m(Tier::Terrestrial), self.m(Tier::Aerial)),
            (&top.dist_as_km, &top.gain_as, self.m(Tier::Aerial), self.m(Tier::Satellite)),
        ];
        for (dist, gain, rows, cols) in tables {
            if dist.len() != rows || gain.len() != rows {
                return Err(ParaError::Dimension("distance/gain table rows".into()));
            }
            for (dr, gr) in dist.iter().zip(gain) {
                if dr.len() != cols || gr.len() != cols {
                    return Err(ParaError::Dimension("distance/gain table columns".into()));
                }
                if dr.iter().any(|&d| !(d > 0.0)) || gr.iter().any(|&g| !(g > 0.0)) {
                    return Err(ParaError::Domain("distances and gains must be positive".into()));
                }
            }
        }
        if !(top.noise_psd > 0.0) {
            return Err(ParaError::Domain("noise PSD must be positive".into()));
        }
        for u in &self.users {
            let vals = [u.params, u.tokens, u.aux_bits, u.p_max, u.f_max, u.kappa, u.pref];
            if vals.iter().any(|&v| !(v > 0.0)) || u.epochs < 1.0 {
                return Err(ParaError::Domain("user profile values must be positive".into()));
            }
        }
        for tier in TIERS {
            for s in &self.servers[tier.index()] {
                let vals = [s.f_max, s.bandwidth, s.kappa, s.epochs];
                if vals.iter().any(|&v| !(v > 0.0)) || s.pref.len() != n {
                    return Err(ParaError::Domain("server profile values must be positive".into()));
                }
                match (tier, s.p_max) {
                    (Tier::Satellite, Some(_)) => {
                        return Err(ParaError::Domain("satellites carry no transmit power".into()))
                    }
                    (Tier::Satellite, None) => {}
                    (_, Some(p)) if p > 0.0 => {}
                    _ => return Err(ParaError::Domain("server transmit power must be positive".into())),
                }
            }
        }
        let w = &self.weights;
        if [w.w_t, w.w_e, w.w_b, w.w_f, w.energy_scale].iter().any(|&v| !(v > 0.0)) {
            return Err(ParaError::Domain("weights must be positive".into()));
        }
        Ok(())
    }
}

/// Decision variables of the joint problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Association per tier, `N × M_tier`.
    pub x: [Vec<Vec<f64>>; 3],
    /// Offload ratios per user in level order (user, terrestrial, aerial, satellite).
    pub phi: Vec<[f64; 4]>,
    /// Bandwidth shares of the receiving server, per tier `N × M_tier`.
    pub bw: [Vec<Vec<f64>>; 3],
    /// User transmit-power shares.
    pub pw_user: Vec<f64>,
    /// Server transmit-power shares for terrestrial and aerial tiers.
    pub pw: [Vec<Vec<f64>>; 2],
    /// User compute shares.
    pub cpu_user: Vec<f64>,
    /// Server compute shares per tier.
    pub cpu: [Vec<Vec<f64>>; 3],
    /// Delay bounds per user and level at the associated servers.
    pub delay_bounds: Vec<[f64; 4]>,
}

fn grid(rows: usize, cols: usize, v: f64) -> Vec<Vec<f64>> {
    vec![vec![v; cols]; rows]
}

impl Allocation {
    /// Allocation with zero association and uniform offload, all shares set to `share`.
    pub fn uniform(scn: &Scenario, share: f64) -> Self {
        let n = scn.n_users();
        let [mt, ma, ms] = [scn.m(Tier::Terrestrial), scn.m(Tier::Aerial), scn.m(Tier::Satellite)];
        Self {
            x: [grid(n, mt, 0.0), grid(n, ma, 0.0), grid(n, ms, 0.0)],
            phi: vec![[0.25; 4]; n],
            bw: [grid(n, mt, share), grid(n, ma, share), grid(n, ms, share)],
            pw_user: vec![1.0; n],
            pw: [grid(n, mt, share), grid(n, ma, share)],
            cpu_user: vec![1.0; n],
            cpu: [grid(n, mt, share), grid(n, ma, share), grid(n, ms, share)],
            delay_bounds: vec![[0.0; 4]; n],
        }
    }

    /// Starting point of the alternating scheme: random one-hot association,
    /// quarter offload on every level, server shares `1/N`, full user shares.
    pub fn initial<R: Rng>(scn: &Scenario, rng: &mut R) -> Self {
        let n = scn.n_users();
        let mut a = Self::uniform(scn, 1.0 / n as f64);
        for tier in TIERS {
            for u in 0..n {
                let m = rng.gen_range(0..scn.m(tier));
                a.x[tier.index()][u][m] = 1.0;
            }
        }
        a
    }

    /// Sets user `n` to server `m` in `tier` (one-hot).
    pub fn set_assoc(&mut self, tier: Tier, n: usize, m: usize) {
        for (j, v) in self.x[tier.index()][n].iter_mut().enumerate() {
            *v = if j == m { 1.0 } else { 0.0 };
        }
    }

    /// Associated server of user `n` in `tier` (row argmax, lowest index on ties).
    pub fn assoc(&self, tier: Tier, n: usize) -> usize {
        argmax(&self.x[tier.index()][n])
    }

    /// Bandwidth share of user `n` on server `m` of `tier`.
    pub fn bw_share(&self, tier: Tier, n: usize, m: usize) -> f64 {
        self.bw[tier.index()][n][m]
    }

    /// Compute share of user `n` on server `m` of `tier`.
    pub fn cpu_share(&self, tier: Tier, n: usize, m: usize) -> f64 {
        self.cpu[tier.index()][n][m]
    }

    /// Users associated with server `m` of `tier` (x > 0.5).
    pub fn members(&self, tier: Tier, m: usize) -> Vec<usize> {
        (0..self.phi.len()).filter(|&n| self.x[tier.index()][n][m] > 0.5).collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Linear channel gain for a link of the given kind and length in km.
///
/// User ↔ terrestrial links use `128.1 + 37.6 log10(d_km)`. The aerial laws
/// use `116.7 + 15 log10(d / 2.6e3)` with `d` expressed in metres.
pub fn channel_gain(distance_km: f64, link: LinkKind) -> Result<f64> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(ParaError::Domain(format!("distance must be positive, got {distance_km}")));
    }
    let pl_db = match link {
        LinkKind::UserTerrestrial => 128.1 + 37.6 * distance_km.log10(),
        LinkKind::TerrestrialAerial | LinkKind::AerialSatellite => {
            116.7 + 15.0 * (distance_km * 1e3 / 2.6e3).log10()
        }
    };
    Ok(10f64.powf(-pl_db / 10.0))
}

/// Noise PSD in W/Hz for a level given in dBm/Hz.
pub fn dbm_per_hz_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Shannon rate with FDMA bandwidth share and transmit-power share.
pub fn transmission_rate(
    bw_share: f64,
    bandwidth: f64,
    pw_share: f64,
    p_max: f64,
    gain: f64,
    noise_psd: f64,
) -> Result<f64> {
    let vals = [bw_share, bandwidth, pw_share, p_max, gain, noise_psd];
    if vals.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(ParaError::Domain("rate inputs must be finite and non-negative".into()));
    }
    if !(bandwidth > 0.0 && p_max > 0.0 && gain > 0.0 && noise_psd > 0.0) {
        return Err(ParaError::Domain("bandwidth, power, gain and noise must be positive".into()));
    }
    Ok(rate(bw_share, bandwidth, pw_share, p_max, gain, noise_psd))
}

/// Unchecked rate kernel; returns 0 for a zero bandwidth share.
#[inline]
pub fn rate(bw_share: f64, bandwidth: f64, pw_share: f64, p_max: f64, gain: f64, noise_psd: f64) -> f64 {
    if bw_share <= 0.0 {
        return 0.0;
    }
    let w = bw_share * bandwidth;
    w * (1.0 + pw_share * p_max * gain / (noise_psd * w)).log2()
}

/// Delay and energy parts of one level's cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelTerms {
    /// Transmission delay of the incoming hop (s).
    pub tx_delay: f64,
    /// Compute delay at the level (s).
    pub cp_delay: f64,
    /// Transmission energy of the incoming hop (J).
    pub tx_energy: f64,
    /// Compute energy at the level (J).
    pub cp_energy: f64,
}

impl LevelTerms {
    pub fn delay(&self) -> f64 {
        self.tx_delay + self.cp_delay
    }

    pub fn energy(&self) -> f64 {
        self.tx_energy + self.cp_energy
    }

    /// Weighted cost `ω_t·delay + ω_e·scale·energy`.
    pub fn cost(&self, w: &Weights) -> f64 {
        w.w_t * self.delay() + w.w_e_eff() * self.energy()
    }
}

/// Radio parameters of the hop entering server `m` of `tier` for user `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopRadio {
    pub bw_share: f64,
    pub bandwidth: f64,
    pub pw_share: f64,
    pub p_max: f64,
    pub gain: f64,
}

impl HopRadio {
    /// Rate with shares clamped at [`SHARE_FLOOR`].
    pub fn rate(&self, noise_psd: f64) -> f64 {
        rate(
            self.bw_share.max(SHARE_FLOOR),
            self.bandwidth,
            self.pw_share.max(SHARE_FLOOR),
            self.p_max,
            self.gain,
            noise_psd,
        )
    }

    /// Transmit power in W.
    pub fn power(&self) -> f64 {
        self.pw_share * self.p_max
    }
}

/// Radio parameters of the hop into server `m` of `tier` for user `n`.
/// The sending side is the user's currently associated server one tier down.
pub fn hop_radio(scn: &Scenario, a: &Allocation, n: usize, tier: Tier, m: usize) -> HopRadio {
    let top = &scn.topology;
    let srv = &scn.servers[tier.index()][m];
    let (pw_share, p_max, gain) = match tier {
        Tier::Terrestrial => (a.pw_user[n], scn.users[n].p_max, top.gain_ut[n][m]),
        Tier::Aerial => {
            let mt = a.assoc(Tier::Terrestrial, n);
            let p = scn.servers[0][mt].p_max.unwrap_or(0.0);
            (a.pw[0][n][mt], p, top.gain_ta[mt][m])
        }
        Tier::Satellite => {
            let ma = a.assoc(Tier::Aerial, n);
            let p = scn.servers[1][ma].p_max.unwrap_or(0.0);
            (a.pw[1][n][ma], p, top.gain_as[ma][m])
        }
    };
    HopRadio { bw_share: a.bw[tier.index()][n][m], bandwidth: srv.bandwidth, pw_share, p_max, gain }
}

/// Fraction of user `n`'s parameters still untrained when entering `tier`.
pub fn remaining_ratio(phi: &[f64; 4], tier: Tier) -> f64 {
    let done: f64 = phi[..tier.level()].iter().sum();
    (1.0 - done).max(0.0)
}

/// Bits sent on the hop into `tier`: `ω_b·(remaining)·d + d^(l)`.
pub fn hop_bits(scn: &Scenario, n: usize, phi: &[f64; 4], tier: Tier) -> f64 {
    let u = &scn.users[n];
    scn.weights.w_b * remaining_ratio(phi, tier) * u.params + u.aux_bits
}

/// Local level terms of user `n` for offload vector `phi`.
pub fn user_terms(scn: &Scenario, a: &Allocation, n: usize, phi: &[f64; 4]) -> Result<LevelTerms> {
    let u = &scn.users[n];
    let work = u.epochs * scn.flops_per_param(n) * phi[0] * u.params;
    if work <= 0.0 {
        return Ok(LevelTerms::default());
    }
    let g = a.cpu_user[n];
    if !(g > 0.0) {
        return Err(ParaError::Degenerate(format!("user {n} has local work but no compute share")));
    }
    let speed = g.max(SHARE_FLOOR) * u.f_max;
    Ok(LevelTerms {
        tx_delay: 0.0,
        cp_delay: work / speed,
        tx_energy: 0.0,
        cp_energy: u.kappa * work * speed * speed,
    })
}

/// Level terms of user `n` on server `m` of `tier` with association weight `xv`.
///
/// The incoming hop carries data only while untrained parameters remain.
pub fn tier_terms(
    scn: &Scenario,
    a: &Allocation,
    n: usize,
    tier: Tier,
    m: usize,
    phi: &[f64; 4],
    xv: f64,
) -> Result<LevelTerms> {
    if xv <= 0.0 {
        return Ok(LevelTerms::default());
    }
    let mut out = LevelTerms::default();
    if remaining_ratio(phi, tier) > 0.0 {
        let radio = hop_radio(scn, a, n, tier, m);
        if !(radio.bw_share > 0.0) || !(radio.pw_share > 0.0) {
            return Err(ParaError::Degenerate(format!(
                "user {n}: hop into {} server {m} carries data with zero share",
                tier.name()
            )));
        }
        let r = radio.rate(scn.topology.noise_psd);
        out.tx_delay = xv * hop_bits(scn, n, phi, tier) / r;
        out.tx_energy = radio.power() * out.tx_delay;
    }
    let srv = &scn.servers[tier.index()][m];
    let work = srv.epochs * scn.flops_per_param(n) * phi[tier.level()] * scn.users[n].params;
    if work > 0.0 {
        let g = a.cpu[tier.index()][n][m];
        if !(g > 0.0) {
            return Err(ParaError::Degenerate(format!(
                "user {n}: {} server {m} has work but no compute share",
                tier.name()
            )));
        }
        let speed = g.max(SHARE_FLOOR) * srv.f_max;
        out.cp_delay = xv * work / speed;
        out.cp_energy = xv * srv.kappa * work * speed * speed;
    }
    Ok(out)
}

/// Per-user delay components at the associated servers (seconds).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChainComponents {
    /// Local compute.
    pub up: f64,
    /// User → terrestrial transmission.
    pub ut: f64,
    /// Terrestrial compute.
    pub tp: f64,
    /// Terrestrial → aerial transmission.
    pub tt: f64,
    /// Aerial compute.
    pub ap: f64,
    /// Aerial → satellite transmission.
    pub at: f64,
    /// Satellite compute.
    pub sp: f64,
}

impl ChainComponents {
    pub fn total(&self) -> f64 {
        self.up + self.ut + self.tp + self.tt + self.ap + self.at + self.sp
    }
}

fn chains(scn: &Scenario, a: &Allocation, pick: fn(&LevelTerms) -> (f64, f64)) -> Result<Vec<ChainComponents>> {
    (0..scn.n_users())
        .map(|n| {
            let phi = &a.phi[n];
            let (_, up) = pick(&user_terms(scn, a, n, phi)?);
            let mut c = ChainComponents { up, ..Default::default() };
            for tier in TIERS {
                let m = a.assoc(tier, n);
                let xv = a.x[tier.index()][n][m];
                let (tx, cp) = pick(&tier_terms(scn, a, n, tier, m, phi, xv)?);
                match tier {
                    Tier::Terrestrial => (c.ut, c.tp) = (tx, cp),
                    Tier::Aerial => (c.tt, c.ap) = (tx, cp),
                    Tier::Satellite => (c.at, c.sp) = (tx, cp),
                }
            }
            Ok(c)
        })
        .collect()
}

/// Delay components per user at the associated servers.
pub fn level_delays(scn: &Scenario, a: &Allocation) -> Result<Vec<ChainComponents>> {
    chains(scn, a, |t| (t.tx_delay, t.cp_delay))
}

/// Energy components per user at the associated servers (J).
pub fn level_energies(scn: &Scenario, a: &Allocation) -> Result<Vec<ChainComponents>> {
    chains(scn, a, |t| (t.tx_energy, t.cp_energy))
}

/// Level costs, ratios and the total objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PteReport {
    /// Per user, per level cost at the associated servers (0 when the level is idle).
    pub level_cost: Vec<[f64; 4]>,
    /// Per user, per level PTE ratio.
    pub level_ratio: Vec<[f64; 4]>,
    /// Summed ratios.
    pub objective: f64,
    /// Trained parameters per level summed over users.
    pub trained: [f64; 4],
}

/// PTE terms of user `n`: costs and ratios per level, summed over servers with `x > 0`.
pub fn user_pte(scn: &Scenario, a: &Allocation, n: usize) -> Result<([f64; 4], [f64; 4])> {
    let w = &scn.weights;
    let phi = &a.phi[n];
    let d = scn.users[n].params;
    let mut cost = [0.0; 4];
    let mut ratio = [0.0; 4];
    if phi[0] > 0.0 {
        let c = user_terms(scn, a, n, phi)?.cost(w);
        if !(c > 0.0) {
            return Err(ParaError::Degenerate(format!("user {n}: zero local cost")));
        }
        cost[0] = c;
        ratio[0] = scn.users[n].pref * phi[0] * d / c;
    }
    for tier in TIERS {
        let l = tier.level();
        if phi[l] <= 0.0 {
            continue;
        }
        for (m, &xv) in a.x[tier.index()][n].iter().enumerate() {
            if xv <= 0.0 {
                continue;
            }
            let c = tier_terms(scn, a, n, tier, m, phi, xv)?.cost(w);
            if !(c > 0.0) {
                return Err(ParaError::Degenerate(format!("user {n}: zero cost on {}", tier.name())));
            }
            cost[l] += c;
            ratio[l] += scn.servers[tier.index()][m].pref[n] * phi[l] * d / c;
        }
    }
    Ok((cost, ratio))
}

/// Objective contribution of user `n`.
pub fn user_objective(scn: &Scenario, a: &Allocation, n: usize) -> Result<f64> {
    Ok(user_pte(scn, a, n)?.1.iter().sum())
}

/// Full PTE report.
pub fn pte_terms(scn: &Scenario, a: &Allocation) -> Result<PteReport> {
    let mut rep = PteReport {
        level_cost: Vec::with_capacity(scn.n_users()),
        level_ratio: Vec::with_capacity(scn.n_users()),
        objective: 0.0,
        trained: [0.0; 4],
    };
    for n in 0..scn.n_users() {
        let (c, r) = user_pte(scn, a, n)?;
        rep.objective += r.iter().sum::<f64>();
        for l in 0..4 {
            rep.trained[l] += a.phi[n][l] * scn.users[n].params;
        }
        rep.level_cost.push(c);
        rep.level_ratio.push(r);
    }
    Ok(rep)
}

/// Summed PTE objective.
pub fn objective(scn: &Scenario, a: &Allocation) -> Result<f64> {
    (0..scn.n_users()).map(|n| user_objective(scn, a, n)).sum()
}

/// Maximum violation per constraint family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResidualReport {
    /// Distance of association entries from {0, 1}.
    pub x_binary: f64,
    /// Deviation of per-tier association row sums from 1.
    pub x_onehot: f64,
    /// Offload ratios outside [0, 1].
    pub phi_range: f64,
    /// Deviation of per-user offload sums from 1.
    pub phi_sum: f64,
    /// Shares outside [0, 1].
    pub share_range: f64,
    /// Per-server bandwidth overload.
    pub bw_cap: f64,
    /// Per-server compute overload.
    pub cpu_cap: f64,
    /// Per-server power overload.
    pub pw_cap: f64,
}

impl ResidualReport {
    /// Largest residual over all families.
    pub fn max(&self) -> f64 {
        [
            self.x_binary,
            self.x_onehot,
            self.phi_range,
            self.phi_sum,
            self.share_range,
            self.bw_cap,
            self.cpu_cap,
            self.pw_cap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// True when every residual is within `tol`.
    pub fn feasible(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

fn range_violation(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        (-v).max(v - 1.0).max(0.0)
    }
}

/// Constraint residuals of an allocation; never fails.
pub fn validate_allocation(scn: &Scenario, a: &Allocation) -> ResidualReport {
    let mut r = ResidualReport::default();
    let n = scn.n_users();
    for tier in TIERS {
        let t = tier.index();
        for u in 0..n {
            let row = &a.x[t][u];
            for &v in row {
                r.x_binary = r.x_binary.max(v.abs().min((v - 1.0).abs()));
                r.share_range = r.share_range.max(range_violation(v));
            }
            r.x_onehot = r.x_onehot.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        for m in 0..scn.m(tier) {
            let load = |s: &Vec<Vec<f64>>| (0..n).map(|u| a.x[t][u][m] * s[u][m]).sum::<f64>();
            r.bw_cap = r.bw_cap.max(load(&a.bw[t]) - 1.0);
            r.cpu_cap = r.cpu_cap.max(load(&a.cpu[t]) - 1.0);
            if t < 2 {
                r.pw_cap = r.pw_cap.max(load(&a.pw[t]) - 1.0);
            }
        }
        for u in 0..n {
            for m in 0..scn.m(tier) {
                r.share_range = r.share_range.max(range_violation(a.bw[t][u][m]));
                r.share_range = r.share_range.max(range_violation(a.cpu[t][u][m]));
                if t < 2 {
                    r.share_range = r.share_range.max(range_violation(a.pw[t][u][m]));
                }
            }
        }
    }
    for u in 0..n {
        for &p in &a.phi[u] {
            r.phi_range = r.phi_range.max(range_violation(p));
        }
        r.phi_sum = r.phi_sum.max((a.phi[u].iter().sum::<f64>() - 1.0).abs());
        r.share_range = r.share_range.max(range_violation(a.pw_user[u]));
        r.share_range = r.share_range.max(range_violation(a.cpu_user[u]));
    }
    r.bw_cap = r.bw_cap.max(0.0);
    r.cpu_cap = r.cpu_cap.max(0.0);
    r.pw_cap = r.pw_cap.max(0.0);
    r
}

/// Recomputes the per-level delay bounds at the associated servers.
pub fn refresh_delay_bounds(scn: &Scenario, a: &mut Allocation) -> Result<()> {
    let mut bounds = Vec::with_capacity(scn.n_users());
    for n in 0..scn.n_users() {
        let phi = a.phi[n];
        let mut b = [user_terms(scn, a, n, &phi)?.delay(), 0.0, 0.0, 0.0];
        for tier in TIERS {
            let m = a.assoc(tier, n);
            let xv = a.x[tier.index()][n][m];
            if phi[tier.level()] > 0.0 {
                b[tier.level()] = tier_terms(scn, a, n, tier, m, &phi, xv)?.delay();
            }
        }
        bounds.push(b);
    }
    a.delay_bounds = bounds;
    Ok(())
}
