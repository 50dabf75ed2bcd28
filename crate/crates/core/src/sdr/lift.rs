//! Semidefinite lifting of the stacked association problem.
//!
//! The lifted variable is `S = (Qᵀ, 1)ᵀ(Qᵀ, 1)`. Every objective and
//! constraint matrix only couples entries of one user or an entry with the
//! last (constant) coordinate, so the relaxation splits into one PSD block
//! per user whose corners are each fixed to 1; capacity rows couple the
//! blocks linearly. Association entries of a tier with a single server are
//! identically 1 and are folded into the corner.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::qcqp::{Layout, QcqpForm, QuadForm, Resource};
use crate::convex::{solve_sdp, ConSense, SdpConstraint, SdpOptions, SdpProblem, SdpSolution, SymEntry};
use crate::error::{ParaError, Result};

/// Rank-1 deficiency above which the dominant eigenvector replaces the last column.
pub const RANK_FALLBACK: f64 = 1e-3;

/// Symmetric matrix stored as entries `(i, j, v)` with `i ≤ j`; an
/// off-diagonal entry stands for both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push(if i <= j { (i, j, v) } else { (j, i, v) });
        }
    }

    /// `Tr(P·S)` for symmetric `S`.
    pub fn trace(&self, s: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * s[(i, i)] } else { 2.0 * v * s[(i, j)] })
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            p[(i, j)] += v;
            if i != j {
                p[(j, i)] += v;
            }
        }
        p
    }
}

/// Constraint family of a lifted row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `S_ee = 1`.
    Corner,
    /// `x² − x = 0`.
    Binary,
    /// One server per user and tier.
    RowSum,
    /// `0 ≤ φ ≤ 1`.
    PhiRange,
    /// `Σ φ = 1`.
    PhiSum,
    /// Server bandwidth capacity.
    Bandwidth,
    /// Server compute capacity.
    Compute,
    /// Server transmit-power capacity.
    Power,
    /// Local delay bound.
    LocalDelay,
    /// Server-level delay bounds.
    TierDelay,
    /// Valid product inequalities and equalities implied by the others for rank-1 `S`.
    Product,
}

/// `Tr(P·S) − T_{n,l}` (when `delay` is set) compared with `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedRow {
    pub family: Family,
    pub mat: SymMatrix,
    pub delay: Option<(usize, usize)>,
    pub sense: ConSense,
    pub rhs: f64,
}

/// Lifted problem: minimize `Tr(P₁S) + Σ t_weight·T` over the rows and `S ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrForm {
    pub layout: Layout,
    pub dim: usize,
    pub p1: SymMatrix,
    pub t_weight: Vec<[f64; 4]>,
    pub rows: Vec<LiftedRow>,
}

impl SdrForm {
    /// Index of the constant coordinate.
    pub fn corner(&self) -> usize {
        self.dim - 1
    }

    pub fn objective(&self, s: &DMatrix<f64>, t: &[[f64; 4]]) -> f64 {
        let tc: f64 = self.t_weight.iter().zip(t).map(|(w, tv)| (0..4).map(|l| w[l] * tv[l]).sum::<f64>()).sum();
        self.p1.trace(s) + tc
    }

    /// Left-hand side `Tr(P·S) − T` of row `k`.
    pub fn row_lhs(&self, k: usize, s: &DMatrix<f64>, t: &[[f64; 4]]) -> f64 {
        let row = &self.rows[k];
        row.mat.trace(s) - row.delay.map_or(0.0, |(n, l)| t[n][l])
    }
}

/// `S = (Qᵀ, 1)ᵀ(Qᵀ, 1)`.
pub fn lift_matrix(q: &DVector<f64>) -> DMatrix<f64> {
    let mut v = DVector::zeros(q.len() + 1);
    v.rows_mut(0, q.len()).copy_from(q);
    v[q.len()] = 1.0;
    &v * v.transpose()
}

fn form_matrix(form: &QuadForm, dim: usize) -> SymMatrix {
    let e = dim - 1;
    let mut m = SymMatrix::new(dim);
    for &(i, j, v) in &form.quad {
        m.push(i, j, if i == j { v } else { 0.5 * v });
    }
    for &(i, w) in &form.lin {
        m.push(i, e, 0.5 * w);
    }
    m
}

/// Builds the objective and constraint matrices of the lifted problem.
pub fn lift(qcqp: &QcqpForm) -> SdrForm {
    let layout = qcqp.layout;
    let dim = layout.dim() + 1;
    let e = dim - 1;
    let n_users = layout.n_users;
    let mut p1 = SymMatrix::new(dim);
    for j in 0..dim - 1 {
        for i in 0..=j {
            p1.push(i, j, -qcqp.p0[(i, j)]);
        }
        p1.push(j, e, -0.5 * qcqp.w0[j]);
    }
    let mut rows = Vec::new();
    let mut add = |family, entries: &[(usize, usize, f64)], delay, sense, rhs| {
        let mut mat = SymMatrix::new(dim);
        for &(i, j, v) in entries {
            mat.push(i, j, v);
        }
        rows.push(LiftedRow { family, mat, delay, sense, rhs });
    };
    add(Family::Corner, &[(e, e, 1.0)], None, ConSense::Eq, 1.0);
    for n in 0..n_users {
        for t in 0..3 {
            let ms = layout.servers[t];
            for m in 0..ms {
                let xi = layout.x(t, n, m);
                add(Family::Binary, &[(xi, xi, 1.0), (xi, e, -0.5)], None, ConSense::Eq, 0.0);
            }
            let sum: Vec<_> = (0..ms).map(|m| (layout.x(t, n, m), e, 0.5)).collect();
            add(Family::RowSum, &sum, None, ConSense::Eq, 1.0);
        }
        for l in 0..4 {
            let pi = layout.phi(n, l);
            add(Family::PhiRange, &[(pi, e, 0.5)], None, ConSense::Le, 1.0);
            add(Family::PhiRange, &[(pi, e, 0.5)], None, ConSense::Ge, 0.0);
        }
        let sum: Vec<_> = (0..4).map(|l| (layout.phi(n, l), e, 0.5)).collect();
        add(Family::PhiSum, &sum, None, ConSense::Eq, 1.0);
    }
    for cap in &qcqp.caps {
        let family = match cap.resource {
            Resource::Bandwidth => Family::Bandwidth,
            Resource::Compute => Family::Compute,
            Resource::Power => Family::Power,
        };
        let entries: Vec<_> = cap.coef.iter().map(|&(i, c)| (i, e, 0.5 * c)).collect();
        add(family, &entries, None, ConSense::Le, 1.0);
    }
    for n in 0..n_users {
        for l in 0..4 {
            let family = if l == 0 { Family::LocalDelay } else { Family::TierDelay };
            let mat = form_matrix(&qcqp.delay[n][l], dim);
            rows.push(LiftedRow { family, mat, delay: Some((n, l)), sense: ConSense::Le, rhs: 0.0 });
        }
    }
    let mut add = |entries: &[(usize, usize, f64)], sense, rhs| {
        let mut mat = SymMatrix::new(dim);
        for &(i, j, v) in entries {
            mat.push(i, j, v);
        }
        rows.push(LiftedRow { family: Family::Product, mat, delay: None, sense, rhs });
    };
    for n in 0..n_users {
        for l in 0..4 {
            let pi = layout.phi(n, l);
            add(&[(pi, pi, 1.0), (pi, e, -0.5)], ConSense::Le, 0.0);
        }
        for t in 0..3 {
            let ms = layout.servers[t];
            for m in 0..ms {
                let xi = layout.x(t, n, m);
                add(&[(xi, e, 0.5)], ConSense::Ge, 0.0);
                for l in 0..4 {
                    add(&[(xi, layout.phi(n, l), 0.5)], ConSense::Ge, 0.0);
                }
            }
            for l in 0..4 {
                let pi = layout.phi(n, l);
                let mut entries: Vec<_> = (0..ms).map(|m| (layout.x(t, n, m), pi, 0.5)).collect();
                entries.push((pi, e, -0.5));
                add(&entries, ConSense::Eq, 0.0);
            }
            // The last server's row follows from the others and the sum rows.
            for m in 0..ms.saturating_sub(1) {
                let xi = layout.x(t, n, m);
                let mut entries: Vec<_> = (0..4).map(|l| (layout.phi(n, l), xi, 0.5)).collect();
                entries.push((xi, e, -0.5));
                add(&entries, ConSense::Eq, 0.0);
            }
        }
    }
    SdrForm { layout, dim, p1, t_weight: qcqp.t_weight.clone(), rows }
}

/// Position of a global coordinate inside the per-user blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Local(usize, usize),
    /// The constant coordinate, or an association entry fixed to 1.
    Corner,
}

/// Map from global coordinates to the per-user blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMap {
    layout: Layout,
    slots: Vec<Slot>,
    owner: Vec<usize>,
    sizes: Vec<usize>,
}

impl BlockMap {
    pub fn new(layout: Layout) -> Self {
        let dim = layout.dim();
        let n_users = layout.n_users;
        let mut slots = vec![Slot::Corner; dim + 1];
        let mut owner = vec![usize::MAX; dim + 1];
        let mut sizes = vec![0; n_users];
        for n in 0..n_users {
            let mut k = 0;
            for l in 0..4 {
                let g = layout.phi(n, l);
                slots[g] = Slot::Local(n, k);
                owner[g] = n;
                k += 1;
            }
            for t in 0..3 {
                for m in 0..layout.servers[t] {
                    let g = layout.x(t, n, m);
                    owner[g] = n;
                    if layout.servers[t] > 1 {
                        slots[g] = Slot::Local(n, k);
                        k += 1;
                    }
                }
            }
            sizes[n] = k + 1;
        }
        Self { layout, slots, owner, sizes }
    }

    /// Block dimensions (the last index of each block is its corner).
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Maps a global entry to a block entry, or to a constant contribution.
    fn map(&self, i: usize, j: usize, v: f64) -> Result<Mapped> {
        let off = if i == j { 1.0 } else { 2.0 };
        match (self.slots[i], self.slots[j]) {
            (Slot::Local(b, li), Slot::Local(b2, lj)) => {
                if b != b2 {
                    return Err(ParaError::Dimension(format!("entry ({i}, {j}) couples users {b} and {b2}")));
                }
                Ok(Mapped::Entry(SymEntry::new(b, li, lj, v)))
            }
            (Slot::Local(b, li), Slot::Corner) | (Slot::Corner, Slot::Local(b, li)) => {
                let owner = if self.slots[i] == Slot::Corner { self.owner[i] } else { self.owner[j] };
                if owner != usize::MAX && owner != b {
                    return Err(ParaError::Dimension(format!("entry ({i}, {j}) couples two users")));
                }
                Ok(Mapped::Entry(SymEntry::new(b, li, self.sizes[b] - 1, v)))
            }
            (Slot::Corner, Slot::Corner) => Ok(Mapped::Constant(off * v)),
        }
    }

    /// Extracts `Q` from block solutions: the last column of each block,
    /// or the scaled dominant eigenvector when the block is far from rank 1.
    /// Returns `Q` and the largest `λ₂/λ₁` over blocks.
    pub fn extract(&self, blocks: &[DMatrix<f64>]) -> (DVector<f64>, f64) {
        let mut worst = 0.0_f64;
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(blocks.len());
        for b in blocks {
            let k = b.nrows();
            let eig = SymmetricEigen::new(b.clone());
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
            let l1 = eig.eigenvalues[order[0]];
            let ratio = if k > 1 && l1 > 0.0 { (eig.eigenvalues[order[1]] / l1).max(0.0) } else { 0.0 };
            worst = worst.max(ratio);
            let corner = b[(k - 1, k - 1)];
            let mut col: DVector<f64> = b.column(k - 1).into_owned() / if corner > 0.0 { corner } else { 1.0 };
            if ratio > RANK_FALLBACK {
                let v = eig.eigenvectors.column(order[0]);
                if v[k - 1].abs() > 1e-12 {
                    col = v.into_owned() / v[k - 1];
                }
            }
            cols.push(col);
        }
        let mut q = DVector::zeros(self.layout.dim());
        for g in 0..self.layout.dim() {
            q[g] = match self.slots[g] {
                Slot::Local(b, l) => cols[b][l],
                Slot::Corner => 1.0,
            };
        }
        (q, worst)
    }
}

enum Mapped {
    Entry(SymEntry),
    Constant(f64),
}

fn map_entries(map: &BlockMap, mat: &SymMatrix) -> Result<(Vec<SymEntry>, f64)> {
    let mut out: Vec<SymEntry> = Vec::with_capacity(mat.entries.len());
    let mut constant = 0.0;
    for &(i, j, v) in &mat.entries {
        match map.map(i, j, v)? {
            Mapped::Entry(s) => out.push(s),
            Mapped::Constant(c) => constant += c,
        }
    }
    out.sort_by_key(|s| (s.block, s.i, s.j));
    let mut merged: Vec<SymEntry> = Vec::with_capacity(out.len());
    for s in out {
        match merged.last_mut() {
            Some(last) if (last.block, last.i, last.j) == (s.block, s.i, s.j) => last.v += s.v,
            _ => merged.push(s),
        }
    }
    merged.retain(|s| s.v != 0.0);
    Ok((merged, constant))
}

/// Block SDP of a lifted form, with the free-variable index of every
/// weighted delay bound and the objective constant folded out of the blocks.
pub struct BlockSdp {
    pub problem: SdpProblem,
    pub map: BlockMap,
    pub delay_vars: Vec<[Option<usize>; 4]>,
    pub constant: f64,
}

/// Converts a lifted form into the per-user block SDP. Delay rows whose
/// bound carries no weight are dropped since they cannot change the optimum.
pub fn to_block_sdp(form: &SdrForm) -> Result<BlockSdp> {
    let map = BlockMap::new(form.layout);
    let mut problem = SdpProblem { blocks: map.sizes().to_vec(), ..Default::default() };
    let (objective, constant) = map_entries(&map, &form.p1)?;
    problem.objective = objective;
    let mut delay_vars = vec![[None; 4]; form.layout.n_users];
    for (n, w) in form.t_weight.iter().enumerate() {
        for l in 0..4 {
            if w[l] > 0.0 {
                delay_vars[n][l] = Some(problem.add_free(w[l]));
            }
        }
    }
    for (b, &k) in map.sizes().iter().enumerate() {
        problem.constraints.push(SdpConstraint {
            entries: vec![SymEntry::new(b, k - 1, k - 1, 1.0)],
            free: vec![],
            sense: ConSense::Eq,
            rhs: 1.0,
        });
    }
    for row in &form.rows {
        if row.family == Family::Corner {
            continue;
        }
        let free = match row.delay {
            Some((n, l)) => match delay_vars[n][l] {
                Some(f) => vec![(f, -1.0)],
                None => continue,
            },
            None => vec![],
        };
        let (entries, c) = map_entries(&map, &row.mat)?;
        let rhs = row.rhs - c;
        if entries.is_empty() && free.is_empty() {
            let ok = match row.sense {
                ConSense::Eq => rhs.abs() <= 1e-9,
                ConSense::Le => rhs >= -1e-9,
                ConSense::Ge => rhs <= 1e-9,
            };
            if !ok {
                return Err(ParaError::Infeasible(format!("{:?} row is violated by fixed entries", row.family)));
            }
            continue;
        }
        problem.constraints.push(SdpConstraint { entries, free, sense: row.sense, rhs });
    }
    Ok(BlockSdp { problem, map, delay_vars, constant })
}

/// Result of solving the lifted relaxation.
#[derive(Debug, Clone)]
pub struct LiftResult {
    /// Per-user PSD blocks; the last index of each is the constant coordinate.
    pub blocks: Vec<DMatrix<f64>>,
    /// Continuous `Q` extracted from the blocks.
    pub q: DVector<f64>,
    /// Delay bounds of the relaxation (zero where unweighted).
    pub t: Vec<[f64; 4]>,
    /// Optimal value of the lifted minimization.
    pub value: f64,
    /// Largest `λ₂/λ₁` over the blocks.
    pub rank_ratio: f64,
    pub solution: SdpSolution,
}

/// Lifts the stacked problem, solves the relaxation and extracts `Q`.
pub fn lift_and_solve(qcqp: &QcqpForm, opts: &SdpOptions) -> Result<LiftResult> {
    let form = lift(qcqp);
    let bs = to_block_sdp(&form)?;
    let solution = solve_sdp(&bs.problem, opts)?;
    let (q, rank_ratio) = bs.map.extract(&solution.x);
    let t = bs
        .delay_vars
        .iter()
        .map(|row| row.map(|f| f.map_or(0.0, |i| solution.free[i])))
        .collect();
    Ok(LiftResult {
        blocks: solution.x.clone(),
        q,
        t,
        value: solution.primal_obj + bs.constant,
        rank_ratio,
        solution,
    })
}
