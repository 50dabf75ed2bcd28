use para_core::assignment::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best total over every injective map from the smaller side into the larger.
fn brute_force(m: &ScoreMatrix) -> f64 {
    let (r, c) = (m.rows(), m.cols());
    let maximize = m.sense == Sense::Maximize;
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    let k = r.max(c);
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let s: f64 = (0..k).filter(|&i| i < r && p[i] < c).map(|i| m.scores[i][p[i]]).sum();
        best = if maximize { best.max(s) } else { best.min(s) };
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

fn is_matching(pairs: &[(usize, usize)]) -> bool {
    let mut rows: Vec<_> = pairs.iter().map(|p| p.0).collect();
    let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
    rows.sort_unstable();
    cols.sort_unstable();
    rows.windows(2).all(|w| w[0] != w[1]) && cols.windows(2).all(|w| w[0] != w[1])
}

#[test]
fn identity_favoring_matrix() {
    let m = ScoreMatrix::new(
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        Sense::Maximize,
    )
    .unwrap();
    assert_eq!(optimal_assignment(&m), vec![(0, 0), (1, 1), (2, 2)]);
}

#[test]
fn small_minimization() {
    let m = ScoreMatrix::new(vec![vec![1.0, 2.0], vec![3.0, 1.0]], Sense::Minimize).unwrap();
    let pairs = optimal_assignment(&m);
    assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    assert_eq!(total_score(&m, &pairs), 2.0);
}

#[test]
fn rectangular_three_by_two() {
    let m = ScoreMatrix::new(vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.1, 0.9]], Sense::Maximize).unwrap();
    let pairs = optimal_assignment(&m);
    assert_eq!(pairs.len(), 2);
    assert!((total_score(&m, &pairs) - brute_force(&m)).abs() < 1e-12);
    assert_eq!(pairs, vec![(0, 0), (2, 1)]);
}

#[test]
fn all_zero_ties_pick_lowest_columns() {
    let m = ScoreMatrix::new(vec![vec![0.0; 3]; 3], Sense::Maximize).unwrap();
    assert_eq!(optimal_assignment(&m), vec![(0, 0), (1, 1), (2, 2)]);
}

#[test]
fn rejects_bad_input() {
    assert!(ScoreMatrix::new(vec![], Sense::Maximize).is_err());
    assert!(ScoreMatrix::new(vec![vec![1.0], vec![1.0, 2.0]], Sense::Maximize).is_err());
    assert!(ScoreMatrix::new(vec![vec![f64::NAN]], Sense::Maximize).is_err());
}

#[test]
fn random_six_by_six_matches_all_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..30 {
        let s: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        for sense in [Sense::Maximize, Sense::Minimize] {
            let m = ScoreMatrix::new(s.clone(), sense).unwrap();
            let pairs = optimal_assignment(&m);
            assert!(is_matching(&pairs) && pairs.len() == 6);
            assert!((total_score(&m, &pairs) - brute_force(&m)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_enumeration_up_to_seven(r in 1usize..=6, c in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let m = ScoreMatrix::new(s, Sense::Maximize).unwrap();
        let pairs = optimal_assignment(&m);
        prop_assert!(is_matching(&pairs));
        prop_assert_eq!(pairs.len(), r.min(c));
        prop_assert!((total_score(&m, &pairs) - brute_force(&m)).abs() < 1e-9);
    }

    #[test]
    fn maximize_equals_minimize_of_complement(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let mx = s.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        let comp: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| mx - v).collect()).collect();
        let a = ScoreMatrix::new(s, Sense::Maximize).unwrap();
        let b = ScoreMatrix::new(comp, Sense::Minimize).unwrap();
        let pa = optimal_assignment(&a);
        let pb = optimal_assignment(&b);
        prop_assert!((total_score(&a, &pa) - total_score(&a, &pb)).abs() < 1e-9);
    }

    #[test]
    fn no_single_swap_improves(n in 2usize..=7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let m = ScoreMatrix::new(s, Sense::Maximize).unwrap();
        let pairs = optimal_assignment(&m);
        let base = total_score(&m, &pairs);
        for a in 0..n {
            for b in a + 1..n {
                let mut p = pairs.clone();
                let (ca, cb) = (p[a].1, p[b].1);
                p[a].1 = cb;
                p[b].1 = ca;
                prop_assert!(total_score(&m, &p) <= base + 1e-12);
            }
        }
    }
}
