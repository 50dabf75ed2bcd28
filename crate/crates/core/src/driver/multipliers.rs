//! Multiplier refresh at the current allocation.

use crate::error::{ParaError, Result};
use crate::fp::MultiplierState;
use crate::model::{tier_terms, user_pte, user_terms, Allocation, Scenario, TIERS};

/// Cost floor for `α` on levels with zero offload.
pub const COST_FLOOR: f64 = 1e-12;

/// Cost of level `l` for user `n` if that level trained the full adapter,
/// keeping shares and the other offload ratios fixed.
fn unit_offload_cost(scn: &Scenario, a: &Allocation, n: usize, l: usize) -> f64 {
    let mut phi = a.phi[n];
    phi[l] = 1.0;
    let terms = if l == 0 {
        user_terms(scn, a, n, &phi)
    } else {
        let tier = TIERS[l - 1];
        let m = a.assoc(tier, n);
        tier_terms(scn, a, n, tier, m, &phi, a.x[tier.index()][n][m])
    };
    match terms {
        Ok(t) => t.cost(&scn.weights),
        Err(_) => 1.0 / COST_FLOOR,
    }
}

/// Sets `ψ = c·φ·d/cost` and `α = 1/cost` per user and level at the
/// associated servers. Idle levels get `ψ = 0` and `α` from the level's cost
/// at unit offload, floored at [`COST_FLOOR`].
pub fn update_multipliers(scn: &Scenario, a: &Allocation) -> Result<MultiplierState> {
    let n = scn.n_users();
    let mut psi = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for u in 0..n {
        let (cost, ratio) = user_pte(scn, a, u)?;
        let mut p = [0.0; 4];
        let mut al = [0.0; 4];
        for l in 0..4 {
            if a.phi[u][l] > 0.0 {
                if !(cost[l] > 0.0) {
                    return Err(ParaError::Degenerate(format!("user {u}: zero cost on active level {l}")));
                }
                p[l] = ratio[l];
                al[l] = 1.0 / cost[l];
            } else {
                al[l] = 1.0 / unit_offload_cost(scn, a, u, l).max(COST_FLOOR);
            }
        }
        psi.push(p);
        alpha.push(al);
    }
    Ok(MultiplierState { psi, alpha })
}
