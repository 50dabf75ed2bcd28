//! Exhaustive grid optimum for two users on a single chain of servers.
//!
//! Offload ratios take values on a 0.05 grid summing to 1 and every share
//! takes values on a 0.1 grid with per-server sums at most 1. The summed
//! ratio splits into one term per level, and each level term of a user only
//! depends on that level's offload, the untrained remainder entering the
//! level and the three shares used there. The search tabulates every level
//! term once and then combines the two users through prefix maxima, which
//! covers the whole product grid.

use para_core::model::Scenario;

/// Offload grid resolution (steps per unit).
pub const PHI_STEPS: usize = 20;
/// Share grid resolution (steps per unit).
pub const SHARE_STEPS: usize = 10;

const S1: usize = SHARE_STEPS + 1;
const TRIPLES: usize = S1 * S1 * S1;
const KEYS: usize = (PHI_STEPS + 1) * (PHI_STEPS + 1);

fn triple(kp: usize, kb: usize, kc: usize) -> usize {
    (kp * S1 + kb) * S1 + kc
}

fn key(i: usize, j: usize) -> usize {
    i * (PHI_STEPS + 1) + j
}

/// Level ratio written out from the closed-form model terms.
#[allow(clippy::too_many_arguments)]
fn level_ratio(
    scn: &Scenario,
    n: usize,
    level: usize,
    phi_l: f64,
    remaining: f64,
    pw: f64,
    bw: f64,
    cpu: f64,
) -> f64 {
    if phi_l <= 0.0 {
        return 0.0;
    }
    let u = &scn.users[n];
    let w = &scn.weights;
    let we = w.w_e * w.energy_scale;
    let flops = w.w_f * u.tokens * u.params * phi_l;
    if level == 0 {
        if cpu <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let speed = cpu * u.f_max;
        let work = u.epochs * flops;
        let cost = w.w_t * work / speed + we * u.kappa * work * speed * speed;
        return u.pref * phi_l * u.params / cost;
    }
    if pw <= 0.0 || bw <= 0.0 || cpu <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let top = &scn.topology;
    let srv = &scn.servers[level - 1][0];
    let (p_max, gain) = match level {
        1 => (u.p_max, top.gain_ut[n][0]),
        2 => (scn.servers[0][0].p_max.unwrap(), top.gain_ta[0][0]),
        _ => (scn.servers[1][0].p_max.unwrap(), top.gain_as[0][0]),
    };
    let hz = bw * srv.bandwidth;
    let rate = hz * (1.0 + pw * p_max * gain / (top.noise_psd * hz)).log2();
    let bits = w.w_b * remaining * u.params + u.aux_bits;
    let tx = bits / rate;
    let speed = cpu * srv.f_max;
    let work = srv.epochs * flops;
    let cost = w.w_t * (tx + work / speed) + we * (pw * p_max * tx + srv.kappa * work * speed * speed);
    srv.pref[n] * phi_l * u.params / cost
}

/// Every offload vector on the grid, as step counts.
pub fn phi_grid() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..=PHI_STEPS {
        for b in 0..=PHI_STEPS - a {
            for c in 0..=PHI_STEPS - a - b {
                out.push([a, b, c, PHI_STEPS - a - b - c]);
            }
        }
    }
    out
}

/// Level key of an offload vector: own step count and remainder step count.
fn level_key(p: &[usize; 4], level: usize) -> usize {
    let remaining: usize = p[level..].iter().sum();
    key(p[level], remaining)
}

/// Best value of each level term of user `n` per key and share triple.
/// On the local level only the compute share varies. On the terrestrial
/// level the user's own power share is maximized out.
fn tabulate(scn: &Scenario, n: usize, level: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / SHARE_STEPS as f64;
    let unit = 1.0 / PHI_STEPS as f64;
    let mut table = vec![vec![f64::NEG_INFINITY; TRIPLES]; KEYS];
    for i in 0..=PHI_STEPS {
        for j in i..=PHI_STEPS {
            let (phi_l, rem) = (i as f64 * unit, j as f64 * unit);
            let row = &mut table[key(i, j)];
            for kp in 0..S1 {
                for kb in 0..S1 {
                    for kc in 0..S1 {
                        let v = match level {
                            0 => level_ratio(scn, n, 0, phi_l, rem, 0.0, 0.0, kc as f64 * step),
                            1 => (1..S1)
                                .map(|q| {
                                    level_ratio(scn, n, 1, phi_l, rem, q as f64 * step, kb as f64 * step, kc as f64 * step)
                                })
                                .fold(f64::NEG_INFINITY, f64::max),
                            _ => level_ratio(
                                scn,
                                n,
                                level,
                                phi_l,
                                rem,
                                kp as f64 * step,
                                kb as f64 * step,
                                kc as f64 * step,
                            ),
                        };
                        // An idle level uses no resources and adds nothing.
                        row[triple(kp, kb, kc)] = if i == 0 { 0.0 } else { v };
                    }
                }
            }
        }
    }
    table
}

/// Running maximum over every triple componentwise at most the index.
fn prefix_max(row: &[f64]) -> Vec<f64> {
    let mut m = row.to_vec();
    for kp in 0..S1 {
        for kb in 0..S1 {
            for kc in 0..S1 {
                let mut v = m[triple(kp, kb, kc)];
                if kp > 0 {
                    v = v.max(m[triple(kp - 1, kb, kc)]);
                }
                if kb > 0 {
                    v = v.max(m[triple(kp, kb - 1, kc)]);
                }
                if kc > 0 {
                    v = v.max(m[triple(kp, kb, kc - 1)]);
                }
                m[triple(kp, kb, kc)] = v;
            }
        }
    }
    m
}

/// Largest summed ratio on the product grid for a one-user instance with
/// one server per tier.
fn single_user_optimum(scn: &Scenario) -> f64 {
    let best: Vec<Vec<f64>> = (0..4)
        .map(|l| tabulate(scn, 0, l).iter().map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect())
        .collect();
    phi_grid()
        .iter()
        .map(|p| (0..4).map(|l| best[l][level_key(p, l)]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest summed ratio on the product grid for a one- or two-user instance
/// with one server per tier.
pub fn grid_optimum(scn: &Scenario) -> f64 {
    assert!(scn.servers.iter().all(|t| t.len() == 1));
    if scn.n_users() == 1 {
        return single_user_optimum(scn);
    }
    assert_eq!(scn.n_users(), 2);
    let phis = phi_grid();
    let valid: Vec<Vec<usize>> = (0..4)
        .map(|l| {
            let mut ks: Vec<usize> = phis.iter().map(|p| level_key(p, l)).collect();
            ks.sort_unstable();
            ks.dedup();
            ks
        })
        .collect();
    // pair[l][k0 * KEYS + k1]: best joint value of level l for the two keys.
    let mut pair = vec![vec![f64::NEG_INFINITY; KEYS * KEYS]; 4];
    for l in 0..4 {
        let t0 = tabulate(scn, 0, l);
        let t1 = tabulate(scn, 1, l);
        if l == 0 {
            // Local compute is not shared.
            for &k0 in &valid[0] {
                let b0 = t0[k0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for &k1 in &valid[0] {
                    let b1 = t1[k1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    pair[0][k0 * KEYS + k1] = b0 + b1;
                }
            }
            continue;
        }
        let p1: Vec<Option<Vec<f64>>> =
            (0..KEYS).map(|k| valid[l].contains(&k).then(|| prefix_max(&t1[k]))).collect();
        for &k0 in &valid[l] {
            for &k1 in &valid[l] {
                let g1 = p1[k1].as_ref().unwrap();
                let mut best = f64::NEG_INFINITY;
                for kp in 0..S1 {
                    for kb in 0..S1 {
                        for kc in 0..S1 {
                            let v0 = t0[k0][triple(kp, kb, kc)];
                            if v0 == f64::NEG_INFINITY {
                                continue;
                            }
                            let v = v0 + g1[triple(SHARE_STEPS - kp, SHARE_STEPS - kb, SHARE_STEPS - kc)];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                }
                pair[l][k0 * KEYS + k1] = best;
            }
        }
    }
    let keys: Vec<[usize; 4]> = phis.iter().map(|p| [0, 1, 2, 3].map(|l| level_key(p, l))).collect();
    let mut best = f64::NEG_INFINITY;
    for a in &keys {
        for b in &keys {
            let v: f64 = (0..4).map(|l| pair[l][a[l] * KEYS + b[l]]).sum();
            if v > best {
                best = v;
            }
        }
    }
    best
}
