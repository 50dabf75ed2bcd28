//! Coefficient families of the bilinear association objective.
//!
//! For fixed shares every level term `α(c·φ·d − ψ·cost)` is bilinear in the
//! association `x` and the offload ratios `φ`. Candidate links that are not
//! currently used are priced at prospective shares so that every potential
//! link has a positive rate.

use crate::error::{ParaError, Result};
use crate::fp::MultiplierState;
use crate::model::{hop_radio, Allocation, Scenario, Tier, SHARE_FLOOR, TIERS};

/// Local level coefficients of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserCoef {
    /// Credit `α·c·d` on `φ_u`.
    pub c: f64,
    /// Local compute-energy coefficient on `φ_u`.
    pub a_uu: f64,
    /// Delay weight `D = −α·ψ·ω_t` per level.
    pub d: [f64; 4],
    /// Local compute delay per unit of `φ_u`.
    pub delay_u: f64,
}

/// Coefficients of one candidate link `(n, m)` in a tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCoef {
    /// Coefficient on `x·φ_l`. Entries below the tier's level are the
    /// upstream transmit-energy rebates; the entry at the level is the
    /// compute-energy term. Entries above the level are zero.
    pub a: [f64; 4],
    /// Coefficient on `x` (full-payload transmit energy).
    pub b: f64,
    /// Credit `α·c·d` on `x·φ_level`.
    pub c: f64,
    /// Rate of the hop into this server (bit/s).
    pub rate: f64,
    /// Hop delay per unit association: `(ω_b·d + d_l)/r`.
    pub delay_x: f64,
    /// Delay coefficient on `x·φ_l`.
    pub delay_phi: [f64; 4],
}

/// All coefficient families of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub users: Vec<UserCoef>,
    /// Per tier, `N × M_tier`.
    pub links: [Vec<Vec<LinkCoef>>; 3],
}

/// Copy of `a` in which every link without a usable share gets the
/// prospective equal split `1/(k+1)` of its server, `k` being the number of
/// users currently associated with it.
pub fn pricing_allocation(scn: &Scenario, a: &Allocation) -> Allocation {
    let mut p = a.clone();
    let n_users = scn.n_users();
    for tier in TIERS {
        let t = tier.index();
        for m in 0..scn.m(tier) {
            let k = a.members(tier, m).len();
            for n in 0..n_users {
                let member = a.x[t][n][m] > 0.5;
                let share = if member { 1.0 / k as f64 } else { 1.0 / (k + 1) as f64 };
                if !member || !(p.bw[t][n][m] > 0.0) {
                    p.bw[t][n][m] = share;
                }
                if !member || !(p.cpu[t][n][m] > 0.0) {
                    p.cpu[t][n][m] = share;
                }
                if t < 2 && (!member || !(p.pw[t][n][m] > 0.0)) {
                    p.pw[t][n][m] = share;
                }
            }
        }
    }
    p
}

/// Assembles every coefficient family from the shares of `pricing`.
///
/// Cross-tier hops use the sender currently associated in `pricing`.
/// Fails when a potential link has no bandwidth, power or compute share.
pub fn assemble_coefficients(scn: &Scenario, pricing: &Allocation, mult: &MultiplierState) -> Result<Coefficients> {
    let n_users = scn.n_users();
    if mult.psi.len() != n_users || mult.alpha.len() != n_users {
        return Err(ParaError::Dimension("multiplier state does not match the user count".into()));
    }
    let w = &scn.weights;
    let we = w.w_e_eff();
    let noise = scn.topology.noise_psd;
    let mut users = Vec::with_capacity(n_users);
    let mut links: [Vec<Vec<LinkCoef>>; 3] = Default::default();
    for n in 0..n_users {
        let u = &scn.users[n];
        let d = u.params;
        let t = scn.flops_per_param(n);
        let alpha = mult.alpha[n];
        let psi = mult.psi[n];
        let g = pricing.cpu_user[n];
        if !(g > 0.0) {
            return Err(ParaError::Degenerate(format!("user {n} has no local compute share")));
        }
        let speed = g.max(SHARE_FLOOR) * u.f_max;
        let mut dcoef = [0.0; 4];
        for l in 0..4 {
            dcoef[l] = -alpha[l] * psi[l] * w.w_t;
        }
        users.push(UserCoef {
            c: alpha[0] * u.pref * d,
            a_uu: -alpha[0] * psi[0] * we * u.kappa * u.epochs * t * d * speed * speed,
            d: dcoef,
            delay_u: u.epochs * t * d / speed,
        });
        for tier in TIERS {
            let l = tier.level();
            let row = (0..scn.m(tier))
                .map(|m| link_coef(scn, pricing, n, tier, m, alpha[l], psi[l], we, noise))
                .collect::<Result<Vec<_>>>()?;
            links[tier.index()].push(row);
        }
    }
    Ok(Coefficients { users, links })
}

#[allow(clippy::too_many_arguments)]
fn link_coef(
    scn: &Scenario,
    pricing: &Allocation,
    n: usize,
    tier: Tier,
    m: usize,
    alpha: f64,
    psi: f64,
    we: f64,
    noise: f64,
) -> Result<LinkCoef> {
    let u = &scn.users[n];
    let d = u.params;
    let t = scn.flops_per_param(n);
    let l = tier.level();
    let srv = &scn.servers[tier.index()][m];
    let radio = hop_radio(scn, pricing, n, tier, m);
    let g = pricing.cpu[tier.index()][n][m];
    if !(radio.bw_share > 0.0) || !(radio.pw_share > 0.0) || !(g > 0.0) {
        return Err(ParaError::Degenerate(format!(
            "user {n}: potential link to {} server {m} has a zero share",
            tier.name()
        )));
    }
    let r = radio.rate(noise);
    if !(r > 0.0) || !r.is_finite() {
        return Err(ParaError::Degenerate(format!("user {n}: zero rate to {} server {m}", tier.name())));
    }
    let speed = g.max(SHARE_FLOOR) * srv.f_max;
    let wb_d = scn.weights.w_b * d;
    let energy_w = alpha * psi * we;
    let mut a = [0.0; 4];
    let mut delay_phi = [0.0; 4];
    for j in 0..l {
        a[j] = energy_w * radio.power() * wb_d / r;
        delay_phi[j] = -wb_d / r;
    }
    a[l] = -energy_w * srv.kappa * srv.epochs * t * d * speed * speed;
    delay_phi[l] = srv.epochs * t * d / speed;
    Ok(LinkCoef {
        a,
        b: -energy_w * radio.power() * (wb_d + u.aux_bits) / r,
        c: alpha * srv.pref[n] * d,
        rate: r,
        delay_x: (wb_d + u.aux_bits) / r,
        delay_phi,
    })
}

/// Delay of every user and level for association `x` and offload `phi`,
/// evaluated from the coefficient families.
pub fn scalar_delays(coefs: &Coefficients, x: &[Vec<Vec<f64>>; 3], phi: &[[f64; 4]]) -> Vec<[f64; 4]> {
    coefs
        .users
        .iter()
        .enumerate()
        .map(|(n, uc)| {
            let mut out = [uc.delay_u * phi[n][0], 0.0, 0.0, 0.0];
            for tier in TIERS {
                let t = tier.index();
                out[tier.level()] = coefs.links[t][n]
                    .iter()
                    .zip(&x[t][n])
                    .map(|(lc, &xv)| {
                        xv * (lc.delay_x + (0..4).map(|j| lc.delay_phi[j] * phi[n][j]).sum::<f64>())
                    })
                    .sum();
            }
            out
        })
        .collect()
}

/// Scalar objective `Σ (A·x·φ + B·x + C·x·φ + D·T)` plus the local terms.
pub fn scalar_objective(coefs: &Coefficients, x: &[Vec<Vec<f64>>; 3], phi: &[[f64; 4]], delays: &[[f64; 4]]) -> f64 {
    let mut total = 0.0;
    for (n, uc) in coefs.users.iter().enumerate() {
        total += (uc.c + uc.a_uu) * phi[n][0];
        total += (0..4).map(|l| uc.d[l] * delays[n][l]).sum::<f64>();
        for tier in TIERS {
            let t = tier.index();
            let l = tier.level();
            for (lc, &xv) in coefs.links[t][n].iter().zip(&x[t][n]) {
                let bil: f64 = (0..=l).map(|j| lc.a[j] * phi[n][j]).sum::<f64>() + lc.c * phi[n][l];
                total += xv * (bil + lc.b);
            }
        }
    }
    total
}
