mod common;

use common::*;
use common::paths::*;
use nalgebra::DMatrix;
use para_core::convex::ConSense;
use para_core::driver::update_multipliers;
use para_core::fp::MultiplierState;
use para_core::model::*;
use para_core::sdr::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn unit_multipliers_without_energy_weight() {
    let mut scn = random_scenario(2, [2, 1, 1], 3);
    scn.weights.w_e = 0.0;
    let a = random_allocation(&scn, 3);
    let mult = MultiplierState { psi: vec![[1.0; 4]; 2], alpha: vec![[1.0; 4]; 2] };
    let coefs = assemble_coefficients(&scn, &pricing_allocation(&scn, &a), &mult).unwrap();
    for n in 0..2 {
        for t in 0..3 {
            for lc in &coefs.links[t][n] {
                assert_eq!(lc.a[t + 1], 0.0);
                assert_eq!(lc.c, scn.users[n].params);
                assert_eq!(lc.b, 0.0);
            }
        }
        assert!(coefs.users[n].d.iter().all(|&d| d < 0.0));
    }
}

#[test]
fn delay_weights_are_negative_for_positive_multipliers() {
    let inst = instance(3, [2, 2, 1], 5);
    for (n, uc) in inst.coefs.users.iter().enumerate() {
        for l in 0..4 {
            let expect = -inst.mult.alpha[n][l] * inst.mult.psi[n][l] * inst.scn.weights.w_t;
            assert_eq!(uc.d[l], expect);
            if inst.mult.psi[n][l] > 0.0 {
                assert!(uc.d[l] < 0.0);
            }
        }
    }
}

#[test]
fn zero_shares_on_a_potential_link_are_rejected() {
    let scn = random_scenario(2, [2, 1, 1], 4);
    let a = random_allocation(&scn, 4);
    let mult = update_multipliers(&scn, &a).unwrap();
    let mut p = pricing_allocation(&scn, &a);
    p.bw[0][0][1] = 0.0;
    assert!(matches!(
        assemble_coefficients(&scn, &p, &mult),
        Err(para_core::ParaError::Degenerate(_))
    ));
}

#[test]
fn zero_coefficients_give_zero_matrices() {
    let scn = random_scenario(2, [2, 2, 1], 6);
    let a = random_allocation(&scn, 6);
    let mult = MultiplierState { psi: vec![[0.0; 4]; 2], alpha: vec![[0.0; 4]; 2] };
    let p = pricing_allocation(&scn, &a);
    let q = build_qcqp(&scn, &p, &assemble_coefficients(&scn, &p, &mult).unwrap()).unwrap();
    assert!(q.p0.iter().all(|&v| v == 0.0));
    assert!(q.w0.iter().all(|&v| v == 0.0));
}

#[test]
fn mismatched_coefficients_are_a_dimension_error() {
    let inst = instance(2, [2, 1, 1], 7);
    let other = random_scenario(3, [2, 1, 1], 7);
    assert!(matches!(
        build_qcqp(&other, &inst.pricing, &inst.coefs),
        Err(para_core::ParaError::Dimension(_))
    ));
}

#[test]
fn objective_paths_agree_on_random_instances() {
    for seed in 0..5u64 {
        let n = 2 + seed as usize;
        let inst = instance(n, [3, 2, 2], 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..20 {
            let x = if k % 2 == 0 { random_onehot(&inst.scn, &mut rng) } else { random_fractional(&inst.scn, &mut rng) };
            let phi: Vec<[f64; 4]> = (0..n).map(|_| random_phi(&mut rng)).collect();
            let (model, scalar, matrix, trace) = three_paths(&inst, &x, &phi);
            let scale = model.abs().max(scalar.abs());
            assert!((model - scalar).abs() <= 1e-9 * scale, "model {model} scalar {scalar}");
            assert!((scalar - matrix).abs() <= 1e-9 * scale, "scalar {scalar} matrix {matrix}");
            assert!((matrix - trace).abs() <= 1e-9 * scale, "matrix {matrix} trace {trace}");
        }
    }
}

#[test]
fn onehot_rows_satisfy_the_binary_constraints() {
    let inst = instance(3, [2, 2, 2], 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_onehot(&inst.scn, &mut rng);
    let phi: Vec<[f64; 4]> = (0..3).map(|_| random_phi(&mut rng)).collect();
    let form = lift(&inst.qcqp);
    let s = lift_matrix(&inst.qcqp.layout.stack(&x, &phi));
    for row in form.rows.iter().filter(|r| r.family == Family::Binary) {
        assert!(row.mat.trace(&s).abs() < 1e-15);
    }
}

fn family_sum(form: &SdrForm, s: &DMatrix<f64>, fam: Family) -> f64 {
    form.rows.iter().filter(|r| r.family == fam).map(|r| r.mat.trace(s)).sum()
}

#[test]
fn lifted_rows_reproduce_scalar_constraints() {
    let inst = instance(3, [3, 2, 2], 9);
    let layout = inst.qcqp.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let form = lift(&inst.qcqp);
    for k in 0..10 {
        let x = if k % 2 == 0 { random_onehot(&inst.scn, &mut rng) } else { random_fractional(&inst.scn, &mut rng) };
        let phi: Vec<[f64; 4]> = (0..3).map(|_| random_phi(&mut rng)).collect();
        let q = layout.stack(&x, &phi);
        let s = lift_matrix(&q);
        let xs = x.iter().flatten().flatten();
        let binary: f64 = xs.clone().map(|v| v * v - v).sum();
        assert!((family_sum(&form, &s, Family::Binary) - binary).abs() < 1e-12);
        let rowsum: f64 = xs.sum();
        assert!((family_sum(&form, &s, Family::RowSum) - rowsum).abs() < 1e-12);
        let phisum: f64 = phi.iter().flatten().sum();
        assert!((family_sum(&form, &s, Family::PhiRange) - 2.0 * phisum).abs() < 1e-12);
        assert!((family_sum(&form, &s, Family::PhiSum) - phisum).abs() < 1e-12);
        let load = |sh: &[Vec<Vec<f64>>]| -> f64 {
            (0..sh.len())
                .map(|t| (0..3).map(|n| (0..layout.servers[t]).map(|m| x[t][n][m] * sh[t][n][m]).sum::<f64>()).sum::<f64>())
                .sum()
        };
        assert!(rel(family_sum(&form, &s, Family::Bandwidth), load(&inst.pricing.bw)) < 1e-12);
        assert!(rel(family_sum(&form, &s, Family::Compute), load(&inst.pricing.cpu)) < 1e-12);
        assert!(rel(family_sum(&form, &s, Family::Power), load(&inst.pricing.pw)) < 1e-12);
        let delays = scalar_delays(&inst.coefs, &x, &phi);
        let local: f64 = delays.iter().map(|d| d[0]).sum();
        let tiers: f64 = delays.iter().map(|d| d[1] + d[2] + d[3]).sum();
        assert!(rel(family_sum(&form, &s, Family::LocalDelay), local) < 1e-10);
        assert!(rel(family_sum(&form, &s, Family::TierDelay), tiers) < 1e-10);
        if k % 2 == 0 {
            // Every row holds at a one-hot point with exact delay bounds.
            for (i, row) in form.rows.iter().enumerate() {
                let lhs = form.row_lhs(i, &s, &delays);
                let tol = 1e-9 * (1.0 + row.rhs.abs() + lhs.abs());
                let ok = match row.sense {
                    ConSense::Eq => (lhs - row.rhs).abs() <= tol.max(1e-9 * delays.iter().flatten().fold(0.0, |a: f64, b| a.max(*b))),
                    ConSense::Le => lhs <= row.rhs + tol,
                    ConSense::Ge => lhs >= row.rhs - tol,
                };
                if row.family == Family::Bandwidth || row.family == Family::Compute || row.family == Family::Power {
                    continue;
                }
                assert!(ok, "{:?} row {i}: lhs {lhs} rhs {}", row.family, row.rhs);
            }
        }
    }
}

#[test]
fn block_decomposition_preserves_objective_and_rows() {
    let inst = instance(3, [2, 1, 2], 10);
    let layout = inst.qcqp.layout;
    let form = lift(&inst.qcqp);
    let bs = to_block_sdp(&form).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_onehot(&inst.scn, &mut rng);
    let phi: Vec<[f64; 4]> = (0..3).map(|_| random_phi(&mut rng)).collect();
    let q = layout.stack(&x, &phi);
    let s = lift_matrix(&q);
    // Per-user blocks of the rank-1 lift: offloads, multi-server associations, then 1.
    let blocks: Vec<DMatrix<f64>> = (0..3)
        .map(|n| {
            let mut v: Vec<f64> = phi[n].to_vec();
            for t in 0..3 {
                if layout.servers[t] > 1 {
                    v.extend(&x[t][n]);
                }
            }
            v.push(1.0);
            let v = nalgebra::DVector::from_vec(v);
            &v * v.transpose()
        })
        .collect();
    assert_eq!(bs.map.sizes(), &[blocks[0].nrows(), blocks[1].nrows(), blocks[2].nrows()]);
    let delays = scalar_delays(&inst.coefs, &x, &phi);
    let mut free = vec![0.0; bs.problem.free_cost.len()];
    for n in 0..3 {
        for l in 0..4 {
            if let Some(f) = bs.delay_vars[n][l] {
                free[f] = delays[n][l];
            }
        }
    }
    let full = form.objective(&s, &delays);
    let block = bs.problem.objective_value(&blocks, &free) + bs.constant;
    assert!(rel(block, full) < 1e-12, "{block} vs {full}");
    let (q2, ratio) = bs.map.extract(&blocks);
    assert!(ratio < 1e-12);
    assert!((q2 - q).amax() < 1e-12);
}

#[test]
fn lifted_identity_for_the_objective() {
    let inst = instance(2, [2, 2, 1], 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_onehot(&inst.scn, &mut rng);
    let phi: Vec<[f64; 4]> = (0..2).map(|_| random_phi(&mut rng)).collect();
    let (_, scalar, _, trace) = three_paths(&inst, &x, &phi);
    assert!(rel(trace, scalar) <= 1e-10);
}

#[test]
fn relaxation_corner_is_one_and_bounds_enumeration() {
    for seed in 0..3u64 {
        let inst = instance(2, [2, 2, 1], 200 + seed);
        let lr = lift_and_solve(&inst.qcqp, &Default::default()).unwrap();
        for b in &lr.blocks {
            let k = b.nrows() - 1;
            assert!((b[(k, k)] - 1.0).abs() < 1e-7);
        }
        // Exhaustive search: every one-hot association within capacity and
        // offload ratios on a 0.05 simplex grid.
        let layout = inst.qcqp.layout;
        let mut grid = Vec::new();
        for a in 0..=20 {
            for b in 0..=20 - a {
                for c in 0..=20 - a - b {
                    let d = 20 - a - b - c;
                    grid.push([a, b, c, d].map(|v| v as f64 / 20.0));
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        let combos = 2usize.pow(4);
        for code in 0..combos {
            let pick = |t: usize, n: usize| (code >> (2 * t + n)) & 1;
            let x: [Vec<Vec<f64>>; 3] = [0, 1, 2].map(|t| {
                (0..2)
                    .map(|n| {
                        let ms = layout.servers[t];
                        let k = if ms > 1 { pick(t, n) } else { 0 };
                        (0..ms).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
                    })
                    .collect()
            });
            let q0 = layout.stack(&x, &[[0.25; 4]; 2]);
            let feasible = inst.qcqp.caps.iter().all(|c| c.coef.iter().map(|&(i, v)| v * q0[i]).sum::<f64>() <= 1.0 + 1e-12);
            if !feasible {
                continue;
            }
            // Users are separable for fixed x.
            let mut total = 0.0;
            for n in 0..2 {
                let mut bu = f64::NEG_INFINITY;
                for p in &grid {
                    let mut phi = [[0.0; 4]; 2];
                    phi[n] = *p;
                    let mut xs = x.clone();
                    for t in 0..3 {
                        for v in xs[t][1 - n].iter_mut() {
                            *v = 0.0;
                        }
                    }
                    let t = scalar_delays(&inst.coefs, &xs, &phi);
                    bu = bu.max(scalar_objective(&inst.coefs, &xs, &phi, &t));
                }
                total += bu;
            }
            best = best.max(total);
        }
        assert!(lr.value <= -best + 1e-6 * best.abs(), "relaxation {} vs enumerated {}", lr.value, -best);
    }
}

#[test]
fn rounding_keeps_onehot_rows() {
    let x = vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
    assert_eq!(round_association(&x).unwrap(), x);
    let x = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
    assert_eq!(round_association(&x).unwrap(), x);
}

#[test]
fn rounding_with_one_server_assigns_everyone() {
    let r = round_association(&[vec![0.3], vec![0.7]]).unwrap();
    assert_eq!(r, vec![vec![1.0], vec![1.0]]);
}

#[test]
fn rounding_example_matches_enumeration_of_assignment_functions() {
    let x = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.1, 0.9]];
    let r = round_association(&x).unwrap();
    let score = |r: &Vec<Vec<f64>>| -> f64 { r.iter().zip(&x).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>()).sum() };
    let mut best = f64::NEG_INFINITY;
    for code in 0..8usize {
        let f: Vec<Vec<f64>> = (0..3).map(|n| { let k = (code >> n) & 1; vec![(k == 0) as u8 as f64, (k == 1) as u8 as f64] }).collect();
        best = best.max(score(&f));
    }
    assert!((score(&r) - best).abs() < 1e-12);
    assert_eq!(r, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn rounding_rejects_empty_and_non_finite_input() {
    assert!(round_association(&[]).is_err());
    assert!(round_association(&[vec![]]).is_err());
    assert!(round_association(&[vec![f64::NAN, 0.1]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rounding_is_onehot_and_swap_optimal(seed in 0u64..10_000, rows in 1usize..6, extra in 0usize..3) {
        let cols = rows + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.01..1.0)).collect()).collect();
        let r = round_association(&x).unwrap();
        let norm: Vec<Vec<f64>> = x.iter().map(|row| { let s: f64 = row.iter().sum(); row.iter().map(|v| if s > 1.0 { v / s } else { *v }).collect() }).collect();
        let pick: Vec<usize> = r.iter().map(|row| {
            prop_assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            prop_assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), cols - 1);
            Ok(argmax(row))
        }).collect::<Result<_, _>>()?;
        let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(n, &m)| norm[n][m]).sum() };
        let base = total(&pick);
        for _ in 0..100 {
            let i = rng.gen_range(0..rows);
            let j = rng.gen_range(0..rows);
            let mut p = pick.clone();
            p.swap(i, j);
            prop_assert!(total(&p) <= base + 1e-12);
            let free: Vec<usize> = (0..cols).filter(|c| !pick.contains(c)).collect();
            if !free.is_empty() {
                let mut p = pick.clone();
                p[i] = free[rng.gen_range(0..free.len())];
                prop_assert!(total(&p) <= base + 1e-12);
            }
        }
    }

    #[test]
    fn clean_offload_sums_to_one(raw in proptest::array::uniform4(-0.5f64..1.5)) {
        let p = clean_offload(raw);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        prop_assert!(p.iter().all(|&v| v == 0.0 || (PHI_ZERO..=1.0).contains(&v)));
    }
}

fn fixed_share_grid_best(scn: &Scenario, a: &Allocation) -> f64 {
    // One user: all associations and a 0.05 offload grid.
    let ms = scn.topology.servers;
    let mut best = f64::NEG_INFINITY;
    for i in 0..ms[0] {
        for j in 0..ms[1] {
            for k in 0..ms[2] {
                let x = [[i, ms[0]], [j, ms[1]], [k, ms[2]]].map(|[s, m]| vec![(0..m).map(|c| if c == s { 1.0 } else { 0.0 }).collect::<Vec<_>>()]);
                let mut b = adopt_association(scn, a, &x);
                for p in 0..=20 {
                    for q in 0..=20 - p {
                        for r in 0..=20 - p - q {
                            let s = 20 - p - q - r;
                            b.phi[0] = [p, q, r, s].map(|v| v as f64 / 20.0);
                            if let Ok(v) = objective(scn, &b) {
                                best = best.max(v);
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

#[test]
fn single_user_reaches_the_grid_optimum() {
    for seed in 0..3u64 {
        let scn = random_scenario(1, [2, 2, 2], 300 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Allocation::initial(&scn, &mut rng);
        let mult = update_multipliers(&scn, &a).unwrap();
        let (out, rep) = solve_subproblem2(&scn, &a, &mult, &SdrOptions::default()).unwrap();
        let got = objective(&scn, &out).unwrap();
        let grid = fixed_share_grid_best(&scn, &a);
        assert!(got >= grid * (1.0 - 0.05), "seed {seed}: {got} vs grid {grid} ({:?})", rep.objective_trace);
        assert!(validate_allocation(&scn, &out).feasible(FEAS_TOL));
    }
}

fn symmetric_scenario() -> Scenario {
    let mut scn = random_scenario(2, [2, 1, 1], 42);
    // Delay only: a larger compute share also raises compute energy.
    scn.weights.w_t = 1.0;
    scn.weights.w_e = 0.0;
    let u = scn.users[0].clone();
    scn.users[1] = u;
    let s = scn.servers[0][0].clone();
    scn.servers[0][1] = s;
    for n in 0..2 {
        for m in 0..2 {
            scn.topology.dist_ut_km[n][m] = 0.3;
            scn.topology.gain_ut[n][m] = channel_gain(0.3, LinkKind::UserTerrestrial).unwrap();
        }
    }
    for m in 0..2 {
        scn.topology.dist_ta_km[m][0] = 20.0;
        scn.topology.gain_ta[m][0] = channel_gain(20.0, LinkKind::TerrestrialAerial).unwrap();
    }
    scn
}

#[test]
fn symmetric_users_split_across_servers() {
    let scn = symmetric_scenario();
    let mut a = Allocation::uniform(&scn, 0.5);
    for n in 0..2 {
        for tier in TIERS {
            a.set_assoc(tier, n, 0);
        }
    }
    let split = {
        let mut x = a.x.clone();
        x[0][1] = vec![0.0, 1.0];
        adopt_association(&scn, &a, &x)
    };
    let clumped = objective(&scn, &a).unwrap();
    let split_val = objective(&scn, &split).unwrap();
    assert!(split_val >= clumped);
    let mult = update_multipliers(&scn, &a).unwrap();
    let (out, _) = solve_subproblem2(&scn, &a, &mult, &SdrOptions::default()).unwrap();
    assert_ne!(out.assoc(Tier::Terrestrial, 0), out.assoc(Tier::Terrestrial, 1));
}

#[test]
fn loop_terminates_and_never_decreases() {
    for seed in 0..3u64 {
        let scn = random_scenario(6, [3, 2, 2], 400 + seed);
        let a = random_allocation(&scn, seed);
        let mult = update_multipliers(&scn, &a).unwrap();
        let start = objective(&scn, &a).unwrap();
        let opts = SdrOptions::default();
        let (out, rep) = solve_subproblem2(&scn, &a, &mult, &opts).unwrap();
        assert!(rep.iterations <= opts.max_iter);
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let end = objective(&scn, &out).unwrap();
        assert!(end >= start);
        assert!((end - rep.objective_trace.last().unwrap()).abs() <= 1e-9 * end);
        assert!(validate_allocation(&scn, &out).feasible(FEAS_TOL));
        for p in &out.phi {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
