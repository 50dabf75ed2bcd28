//! Random semidefinite programs with a known rank-one optimum.

use nalgebra::{DMatrix, DVector};
use para_core::convex::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> (Vec<SymEntry>, DMatrix<f64>) {
    let mut m = DMatrix::zeros(n, n);
    let mut es = Vec::new();
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.gen_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
            es.push(SymEntry::new(0, i, j, v));
        }
    }
    (es, m)
}

/// Planted instance: rank-one optimum `s sᵀ` with `s = (q, 1)`, certified by
/// a dual slack `Z ⪰ 0` of rank `n − 1` with `Z s = 0`.
pub fn planted(seed: u64, n: usize, k: usize) -> (SdpProblem, DVector<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    s[n - 1] = 1.0;
    let sst = &s * s.transpose();
    let mut p = SdpProblem::single(n);
    let mut cmat = DMatrix::zeros(n, n);
    // Corner constraint fixes the scale.
    p.constraints.push(SdpConstraint { entries: vec![SymEntry::new(0, n - 1, n - 1, 1.0)], free: vec![], sense: ConSense::Eq, rhs: 1.0 });
    let y0: f64 = rng.gen_range(-1.0..1.0);
    cmat[(n - 1, n - 1)] += y0;
    let mut dual = y0;
    for _ in 0..k {
        let (es, a) = random_sym(&mut rng, n);
        let rhs = a.component_mul(&sst).sum();
        let y: f64 = rng.gen_range(-1.0..1.0);
        cmat += &a * y;
        dual += y * rhs;
        p.constraints.push(SdpConstraint { entries: es, free: vec![], sense: ConSense::Eq, rhs });
    }
    // Z = V diag(λ) Vᵀ on the orthogonal complement of s.
    let b = DMatrix::from_fn(n, n - 1, |_, _| rng.gen_range(-1.0..1.0));
    let proj = DMatrix::identity(n, n) - &sst / s.norm_squared();
    let v = &proj * b;
    let z = &v * v.transpose();
    cmat += z;
    for i in 0..n {
        for j in i..n {
            p.objective.push(SymEntry::new(0, i, j, cmat[(i, j)]));
        }
    }
    (p, s, dual)
}
