//! Shared fixtures for integration tests.
#![allow(dead_code)]

use para_core::fp::MultiplierState;
use para_core::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noise PSD at -174 dBm/Hz.
pub const NOISE: f64 = 3.981_071_705_534_969e-21;

/// Random scenario with realistic magnitudes.
pub fn random_scenario(n: usize, m: [usize; 3], seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<UserProfile> = (0..n)
        .map(|_| {
            let tokens = rng.gen_range(1e7..5e7);
            UserProfile {
                params: rng.gen_range(1.2e6..1.4e7),
                tokens,
                aux_bits: 2.0 * tokens,
                p_max: 2.0,
                f_max: 19.58e12 * 0.55,
                kappa: 1e-38,
                epochs: 1.0,
                pref: 1.0,
            }
        })
        .collect();
    let mk = |tier: Tier, rng: &mut ChaCha8Rng| ServerProfile {
        tier,
        f_max: 1372.8e12 * 0.55 * rng.gen_range(0.8..1.2),
        bandwidth: 1e7,
        p_max: if tier == Tier::Satellite { None } else { Some(20.0) },
        kappa: 1e-38,
        epochs: 1.0,
        pref: vec![1.0; n],
    };
    let servers = [
        (0..m[0]).map(|_| mk(Tier::Terrestrial, &mut rng)).collect::<Vec<_>>(),
        (0..m[1]).map(|_| mk(Tier::Aerial, &mut rng)).collect(),
        (0..m[2]).map(|_| mk(Tier::Satellite, &mut rng)).collect(),
    ];
    let table = |r: usize, c: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..r).map(|_| (0..c).map(|_| rng.gen_range(lo..hi)).collect()).collect()
    };
    let dist_ut = table(n, m[0], 0.05, 1.0, &mut rng);
    let dist_ta = table(m[0], m[1], 18.0, 22.0, &mut rng);
    let dist_as = table(m[1], m[2], 540.0, 560.0, &mut rng);
    let gains = |d: &Vec<Vec<f64>>, k: LinkKind| -> Vec<Vec<f64>> {
        d.iter().map(|r| r.iter().map(|&x| channel_gain(x, k).unwrap()).collect()).collect()
    };
    let topology = Topology {
        n_users: n,
        servers: m,
        gain_ut: gains(&dist_ut, LinkKind::UserTerrestrial),
        gain_ta: gains(&dist_ta, LinkKind::TerrestrialAerial),
        gain_as: gains(&dist_as, LinkKind::AerialSatellite),
        dist_ut_km: dist_ut,
        dist_ta_km: dist_ta,
        dist_as_km: dist_as,
        noise_psd: NOISE,
    };
    Scenario { topology, users, servers, weights: Weights::default() }
}

/// Random feasible allocation with one-hot association and interior shares.
pub fn random_allocation(scn: &Scenario, seed: u64) -> Allocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut a = Allocation::initial(scn, &mut rng);
    let n = scn.n_users();
    for u in 0..n {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        a.phi[u] = [raw[0] / s, raw[1] / s, raw[2] / s, 1.0 - (raw[0] + raw[1] + raw[2]) / s];
        a.pw_user[u] = rng.gen_range(0.2..1.0);
        a.cpu_user[u] = rng.gen_range(0.2..1.0);
    }
    let scale = 1.0 / n as f64;
    for t in 0..3 {
        for u in 0..n {
            for m in 0..a.bw[t][u].len() {
                a.bw[t][u][m] = scale * rng.gen_range(0.3..1.0);
                a.cpu[t][u][m] = scale * rng.gen_range(0.3..1.0);
                if t < 2 {
                    a.pw[t][u][m] = scale * rng.gen_range(0.3..1.0);
                }
            }
        }
    }
    a
}
/// Relative difference scaled by the larger magnitude.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest relative violation of `ψ·cost = c·φ·d` and `α·cost = 1` over the
/// active levels, with costs recomputed from the model.
pub fn kkt_gap(scn: &Scenario, a: &Allocation, mult: &MultiplierState) -> f64 {
    let rep = pte_terms(scn, a).unwrap();
    let mut worst = 0.0f64;
    for n in 0..scn.n_users() {
        let d = scn.users[n].params;
        for l in 0..4 {
            let phi = a.phi[n][l];
            if phi <= 0.0 {
                assert_eq!(mult.psi[n][l], 0.0);
                continue;
            }
            let c = if l == 0 {
                scn.users[n].pref
            } else {
                let tier = TIERS[l - 1];
                scn.servers[tier.index()][a.assoc(tier, n)].pref[n]
            };
            let cost = rep.level_cost[n][l];
            worst = worst.max(rel_gap(mult.psi[n][l] * cost, c * phi * d));
            worst = worst.max(rel_gap(mult.alpha[n][l] * cost, 1.0));
        }
    }
    worst
}

pub mod grid;
pub mod paths;
pub mod planted;
