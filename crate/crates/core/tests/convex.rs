mod common;

use common::planted::{planted, random_sym};
use nalgebra::DVector;
use para_core::convex::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn one_group(n: usize, cap: f64) -> FeasibleSet {
    let mut s = FeasibleSet::boxed(n, 0.0, 1.0);
    s.groups.push(CapGroup { idx: (0..n).collect(), cap });
    s
}

#[test]
fn projection_examples() {
    let s = one_group(2, 1.0);
    assert!(close(&project_capped_simplex(&[0.3, 0.4], &s).unwrap(), &[0.3, 0.4], 1e-15));
    assert!(close(&project_capped_simplex(&[0.8, 0.8], &s).unwrap(), &[0.5, 0.5], 1e-15));
    let b = FeasibleSet::boxed(2, 0.0, 1.0);
    assert!(close(&project_capped_simplex(&[1.5, -0.2], &b).unwrap(), &[1.0, 0.0], 1e-15));
}

#[test]
fn projection_rejects_negative_cap() {
    assert!(matches!(
        project_capped_simplex(&[0.1], &one_group(1, -0.5)),
        Err(para_core::ParaError::Infeasible(_))
    ));
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, overlapping: bool) -> FeasibleSet {
    let mut s = FeasibleSet::boxed(n, 0.0, 1.0);
    for i in 0..n {
        s.lo[i] = rng.gen_range(0.0..0.05);
        s.hi[i] = rng.gen_range(0.5..1.0);
    }
    let k = rng.gen_range(1..4);
    let mut perm: Vec<usize> = (0..n).collect();
    for g in 0..k {
        let idx: Vec<usize> = if overlapping {
            (0..n).filter(|_| rng.gen_bool(0.6)).collect()
        } else {
            perm.iter().cloned().filter(|i| i % k == g).collect()
        };
        if idx.is_empty() {
            continue;
        }
        let cap = idx.len() as f64 * 0.05 + rng.gen_range(0.1..1.0);
        s.groups.push(CapGroup { idx, cap });
    }
    perm.clear();
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_feasible_idempotent_and_optimal(seed in any::<u64>(), n in 1usize..8, overlap in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_set(&mut rng, n, overlap);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let p = project_capped_simplex(&v, &set).unwrap();
        prop_assert!(set.violation(&p) <= 1e-10);
        let pp = project_capped_simplex(&p, &set).unwrap();
        prop_assert!(close(&p, &pp, 1e-9));
        // Variational inequality ⟨v − p, w − p⟩ ≤ 0 for feasible w.
        for _ in 0..20 {
            let w0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let w = project_capped_simplex(&w0, &set).unwrap();
            let ip: f64 = (0..n).map(|i| (v[i] - p[i]) * (w[i] - p[i])).sum();
            prop_assert!(ip <= 1e-7, "ip {} set {:?} v {:?} p {:?} w {:?}", ip, set, v, p, w);
        }
        if !overlap {
            prop_assert!(close(&p, &pp, 1e-12));
        }
    }
}

#[test]
fn smooth_interior_minimum() {
    let p = SmoothConvexProblem {
        value: Box::new(|v| v.iter().map(|x| (x - 0.5).powi(2)).sum()),
        gradient: Box::new(|v| v.iter().map(|x| 2.0 * (x - 0.5)).collect()),
        set: FeasibleSet::boxed(2, 0.0, 1.0),
        start: vec![0.0, 1.0],
    };
    let r = minimize_smooth(&p, 1e-10, 1000).unwrap();
    assert!(close(&r.point, &[0.5, 0.5], 1e-9) && r.value < 1e-18);
}

#[test]
fn smooth_linear_goes_to_lower_box() {
    let p = SmoothConvexProblem {
        value: Box::new(|v| v[0] + v[1]),
        gradient: Box::new(|_| vec![1.0, 1.0]),
        set: one_group(2, 1.0),
        start: vec![0.5, 0.5],
    };
    let r = minimize_smooth(&p, 1e-12, 1000).unwrap();
    assert!(close(&r.point, &[0.0, 0.0], 1e-12));
}

#[test]
fn smooth_reciprocal_allocation_matches_grid() {
    let f = |v: &[f64]| 1.0 / v[0] + 4.0 / v[1];
    let mut set = one_group(2, 1.0);
    set.lo = vec![1e-6; 2];
    let p = SmoothConvexProblem {
        value: Box::new(f),
        gradient: Box::new(|v: &[f64]| vec![-1.0 / (v[0] * v[0]), -4.0 / (v[1] * v[1])]),
        set,
        start: vec![0.5, 0.5],
    };
    let r = minimize_smooth(&p, 1e-10, 5000).unwrap();
    assert!(close(&r.point, &[1.0 / 3.0, 2.0 / 3.0], 1e-6), "{:?}", r.point);
    assert!((r.value - 9.0).abs() < 1e-9);
    // Dense grid with step 1e-3 over the feasible triangle.
    let mut best = f64::INFINITY;
    for i in 1..1000 {
        for j in 1..(1000 - i + 1) {
            best = best.min(f(&[i as f64 * 1e-3, j as f64 * 1e-3]));
        }
    }
    assert!(r.value <= best + 1e-12);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gradient_check_examples() {
    let f = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let good = check_gradient(f, |v| v.iter().map(|x| 2.0 * x).collect(), &[1.0, 2.0], 1e-5);
    assert!(good <= 1e-8);
    let bad = check_gradient(f, |v| v.iter().map(|x| 4.0 * x).collect(), &[1.0, 2.0], 1e-5);
    assert!((bad - 0.5).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Convex quadratic plus reciprocal terms: the solver never increases the
    /// value, and midpoints of two random feasible points obey convexity.
    #[test]
    fn smooth_monotone_on_random_convex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut set = random_set(&mut rng, n, false);
        set.lo.iter_mut().for_each(|l| *l = l.max(1e-3));
        let f = {
            let (a, c) = (a.clone(), c.clone());
            move |v: &[f64]| (0..v.len()).map(|i| a[i] / v[i] + c[i] * v[i] + v[i] * v[i]).sum::<f64>()
        };
        let g = {
            let (a, c) = (a.clone(), c.clone());
            move |v: &[f64]| (0..v.len()).map(|i| -a[i] / (v[i] * v[i]) + c[i] + 2.0 * v[i]).collect::<Vec<f64>>()
        };
        for _ in 0..10 {
            let p1 = project_capped_simplex(&(0..n).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>(), &set).unwrap();
            let p2 = project_capped_simplex(&(0..n).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>(), &set).unwrap();
            let mid: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| 0.5 * (x + y)).collect();
            prop_assert!(f(&mid) <= 0.5 * (f(&p1) + f(&p2)) + 1e-12);
        }
        let start = project_capped_simplex(&vec![0.5; n], &set).unwrap();
        let f0 = f(&start);
        let p = SmoothConvexProblem { value: Box::new(f), gradient: Box::new(g), set, start };
        let r = minimize_smooth(&p, 1e-9, 5000).unwrap();
        prop_assert!(r.value <= f0);
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

fn diag_problem(d: &[f64]) -> SdpProblem {
    let mut p = SdpProblem::single(d.len());
    for (i, &v) in d.iter().enumerate() {
        p.objective.push(SymEntry::new(0, i, i, v));
    }
    p.constraints.push(SdpConstraint {
        entries: (0..d.len()).map(|i| SymEntry::new(0, i, i, 1.0)).collect(),
        free: vec![],
        sense: ConSense::Eq,
        rhs: 1.0,
    });
    p
}

#[test]
fn sdp_min_eigenvalue_example() {
    let s = solve_sdp(&diag_problem(&[1.0, 2.0]), &SdpOptions::default()).unwrap();
    assert!((s.primal_obj - 1.0).abs() < 1e-7);
    assert!((s.x[0][(0, 0)] - 1.0).abs() < 1e-6 && s.x[0][(1, 1)].abs() < 1e-6);
}

#[test]
fn sdp_constant_objective_example() {
    let s = solve_sdp(&diag_problem(&[1.0, 1.0, 1.0]), &SdpOptions::default()).unwrap();
    assert!((s.primal_obj - 1.0).abs() < 1e-7);
    assert!(s.min_eig >= -1e-8);
}

#[test]
fn sdp_free_variable_and_inequality() {
    // min Tr(diag(1,2) X) + t  s.t.  Tr X = 1,  t − X_11 ≥ 0.
    let mut p = diag_problem(&[1.0, 2.0]);
    let t = p.add_free(1.0);
    p.constraints.push(SdpConstraint {
        entries: vec![SymEntry::new(0, 1, 1, -1.0)],
        free: vec![(t, 1.0)],
        sense: ConSense::Ge,
        rhs: 0.0,
    });
    let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
    assert!((s.primal_obj - 1.0).abs() < 1e-6, "{}", s.primal_obj);
    assert!(s.free[0].abs() < 1e-6);
}

#[test]
fn sdp_two_blocks_with_border_row() {
    // Two 2×2 blocks; each block has unit trace, a border row couples them.
    let mut p = SdpProblem { blocks: vec![2, 2], ..Default::default() };
    p.objective = vec![SymEntry::new(0, 0, 0, 1.0), SymEntry::new(0, 1, 1, 3.0), SymEntry::new(1, 0, 0, 2.0), SymEntry::new(1, 1, 1, 1.0)];
    for b in 0..2 {
        p.constraints.push(SdpConstraint {
            entries: vec![SymEntry::new(b, 0, 0, 1.0), SymEntry::new(b, 1, 1, 1.0)],
            free: vec![],
            sense: ConSense::Eq,
            rhs: 1.0,
        });
    }
    // X0_00 + X1_00 ≥ 1.5 forces mass into the expensive entry of block 1.
    p.constraints.push(SdpConstraint {
        entries: vec![SymEntry::new(0, 0, 0, 1.0), SymEntry::new(1, 0, 0, 1.0)],
        free: vec![],
        sense: ConSense::Ge,
        rhs: 1.5,
    });
    let s = solve_sdp(&p, &SdpOptions::default()).unwrap();
    // Block 0 takes X_00 = 1, block 1 splits 0.5/0.5: 1 + 2·0.5 + 0.5 = 2.5.
    assert!((s.primal_obj - 2.5).abs() < 1e-6, "{}", s.primal_obj);
}

#[test]
fn sdp_detects_infeasibility() {
    let mut p = diag_problem(&[1.0, 2.0]);
    p.constraints.push(SdpConstraint {
        entries: vec![SymEntry::new(0, 0, 0, 1.0), SymEntry::new(0, 1, 1, 1.0)],
        free: vec![],
        sense: ConSense::Eq,
        rhs: 2.0,
    });
    assert!(solve_sdp(&p, &SdpOptions::default()).is_err());
}

/// Random symmetric matrix as a list of upper-triangle entries.
#[test]
fn sdp_planted_rank_one_suite() {
    for seed in 0..20u64 {
        let n = 3 + (seed as usize % 4);
        let (p, s, opt) = planted(seed, n, n);
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert!(sol.gap <= 1e-6, "seed {seed}: gap {}", sol.gap);
        assert!(sol.min_eig >= -1e-8);
        assert!((sol.primal_obj - opt).abs() <= 1e-6 * (1.0 + opt.abs()), "seed {seed}: {} vs {}", sol.primal_obj, opt);
        let last = sol.x[0].column(n - 1);
        for i in 0..n {
            assert!((last[i] - s[i]).abs() < 1e-4, "seed {seed}: recovery");
        }
    }
}

/// Rank-one local search gives an upper bound on a random SDP's minimum.
#[test]
fn sdp_random_instance_below_rank_one_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4;
    let (cobj, cm) = random_sym(&mut rng, n);
    let mut p = SdpProblem::single(n);
    p.objective = cobj;
    // Tr X = 1 keeps the problem bounded; one more random equality.
    p.constraints.push(SdpConstraint { entries: (0..n).map(|i| SymEntry::new(0, i, i, 1.0)).collect(), free: vec![], sense: ConSense::Eq, rhs: 1.0 });
    let (ea, am) = random_sym(&mut rng, n);
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize();
    let rhs = (x0.transpose() * &am * &x0)[(0, 0)];
    p.constraints.push(SdpConstraint { entries: ea, free: vec![], sense: ConSense::Eq, rhs });
    let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
    // Penalized local search over unit vectors for the rank-one upper bound.
    let mut best = f64::INFINITY;
    for start in 0..200 {
        let mut r2 = ChaCha8Rng::seed_from_u64(start);
        let mut v = DVector::from_fn(n, |_, _| r2.gen_range(-1.0..1.0)).normalize();
        let score = |v: &DVector<f64>, pen: f64| {
            (v.transpose() * &cm * v)[(0, 0)] + pen * ((v.transpose() * &am * v)[(0, 0)] - rhs).powi(2)
        };
        for pen in [1e2, 1e4, 1e6, 1e8] {
            let mut step = 0.1;
            for _ in 0..3000 {
                let cand = (&v + DVector::from_fn(n, |_, _| r2.gen_range(-step..step))).normalize();
                if score(&cand, pen) < score(&v, pen) {
                    v = cand;
                } else {
                    step *= 0.995;
                }
            }
        }
        if ((v.transpose() * &am * &v)[(0, 0)] - rhs).abs() < 1e-7 {
            best = best.min((v.transpose() * &cm * &v)[(0, 0)]);
        }
    }
    assert!(best.is_finite());
    assert!(sol.primal_obj <= best + 1e-4, "{} vs {}", sol.primal_obj, best);
}
