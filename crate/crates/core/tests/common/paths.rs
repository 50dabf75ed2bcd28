//! Independent evaluations of the association and offload objective.

use super::{random_allocation, random_scenario};
use para_core::driver::update_multipliers;
use para_core::fp::MultiplierState;
use para_core::model::*;
use para_core::sdr::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_phi(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let raw: [f64; 4] = [0; 4].map(|_| rng.gen_range(0.02..1.0));
    let s: f64 = raw.iter().sum();
    raw.map(|v| v / s)
}

pub fn random_onehot(scn: &Scenario, rng: &mut ChaCha8Rng) -> [Vec<Vec<f64>>; 3] {
    [0, 1, 2].map(|t| {
        (0..scn.n_users())
            .map(|_| {
                let ms = scn.topology.servers[t];
                let k = rng.gen_range(0..ms);
                (0..ms).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
            })
            .collect()
    })
}

pub fn random_fractional(scn: &Scenario, rng: &mut ChaCha8Rng) -> [Vec<Vec<f64>>; 3] {
    [0, 1, 2].map(|t| {
        (0..scn.n_users())
            .map(|_| {
                let raw: Vec<f64> = (0..scn.topology.servers[t]).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

/// Bilinear objective evaluated directly from the cost model: every level
/// contributes `α(c·x·φ·d − ψ(ω_t·T + ω_e·E))` with `T` and `E` from the
/// model's delay and energy terms at the pricing shares.
pub fn p6_from_model(scn: &Scenario, pricing: &Allocation, mult: &MultiplierState, x: &[Vec<Vec<f64>>; 3], phi: &[[f64; 4]]) -> f64 {
    let w = &scn.weights;
    let mut total = 0.0;
    for n in 0..scn.n_users() {
        let d = scn.users[n].params;
        let ut = user_terms(scn, pricing, n, &phi[n]).unwrap();
        let (al, ps) = (mult.alpha[n][0], mult.psi[n][0]);
        total += al * (scn.users[n].pref * phi[n][0] * d - ps * (w.w_t * ut.delay() + w.w_e_eff() * ut.energy()));
        for tier in TIERS {
            let t = tier.index();
            let l = tier.level();
            let (al, ps) = (mult.alpha[n][l], mult.psi[n][l]);
            let mut delay = 0.0;
            let mut energy = 0.0;
            let mut credit = 0.0;
            for m in 0..scn.m(tier) {
                let xv = x[t][n][m];
                let tt = tier_terms(scn, pricing, n, tier, m, &phi[n], xv).unwrap();
                delay += tt.delay();
                energy += tt.energy();
                credit += scn.servers[t][m].pref[n] * xv * phi[n][l] * d;
            }
            total += al * (credit - ps * (w.w_t * delay + w.w_e_eff() * energy));
        }
    }
    total
}

pub struct Instance {
    pub scn: Scenario,
    pub pricing: Allocation,
    pub mult: MultiplierState,
    pub coefs: Coefficients,
    pub qcqp: QcqpForm,
}

pub fn instance(n: usize, m: [usize; 3], seed: u64) -> Instance {
    let scn = random_scenario(n, m, seed);
    let a = random_allocation(&scn, seed);
    let mult = update_multipliers(&scn, &a).unwrap();
    let pricing = pricing_allocation(&scn, &a);
    let coefs = assemble_coefficients(&scn, &pricing, &mult).unwrap();
    let qcqp = build_qcqp(&scn, &pricing, &coefs).unwrap();
    Instance { scn, pricing, mult, coefs, qcqp }
}

/// Three evaluations of the same objective: scalar coefficients, the
/// stacked matrix form and the trace of the lifted form.
pub fn three_paths(inst: &Instance, x: &[Vec<Vec<f64>>; 3], phi: &[[f64; 4]]) -> (f64, f64, f64, f64) {
    let model = p6_from_model(&inst.scn, &inst.pricing, &inst.mult, x, phi);
    let t_scalar = scalar_delays(&inst.coefs, x, phi);
    let scalar = scalar_objective(&inst.coefs, x, phi, &t_scalar);
    let layout = inst.qcqp.layout;
    let q = layout.stack(x, phi);
    let t_matrix = inst.qcqp.delays(q.as_slice());
    let matrix = inst.qcqp.objective(&q, &t_matrix);
    let form = lift(&inst.qcqp);
    let s = lift_matrix(&q);
    let t_trace: Vec<[f64; 4]> = (0..layout.n_users).map(|_| [0.0; 4]).collect();
    let mut t_trace = t_trace;
    for row in &form.rows {
        if let Some((n, l)) = row.delay {
            t_trace[n][l] = row.mat.trace(&s);
        }
    }
    let trace = -form.objective(&s, &t_trace);
    (model, scalar, matrix, trace)
}
