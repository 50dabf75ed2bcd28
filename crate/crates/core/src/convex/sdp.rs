//! Primal-dual interior-point method for block-diagonal SDPs.
//!
//! The cone is a product of PSD blocks, a non-negative orthant holding the
//! slacks of inequality rows, and a set of free scalar variables. Search
//! directions use the HKM scaling with a Mehrotra predictor-corrector. The
//! Schur complement is stored in an envelope (skyline) layout: rows that
//! touch a single block are grouped by block and rows touching several blocks
//! form a dense border at the end. Free variables are handled by a bordered
//! solve on top of the Schur factor.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ParaError, Result};

/// Entry `v` at `(i, j)` and `(j, i)` of block `block`; requires `i ≤ j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEntry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

impl SymEntry {
    pub fn new(block: usize, i: usize, j: usize, v: f64) -> Self {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        Self { block, i, j, v }
    }
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConSense {
    Eq,
    Le,
    Ge,
}

/// `Σ_b ⟨A_b, X_b⟩ + Σ g_f t_f  (sense)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub entries: Vec<SymEntry>,
    /// Coefficients on free scalar variables.
    pub free: Vec<(usize, f64)>,
    pub sense: ConSense,
    pub rhs: f64,
}

/// `min Σ_b ⟨C_b, X_b⟩ + c_fᵀt` subject to the constraints and `X_b ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    /// Dimension of each PSD block.
    pub blocks: Vec<usize>,
    pub objective: Vec<SymEntry>,
    /// Objective coefficients of the free variables; its length is their count.
    pub free_cost: Vec<f64>,
    pub constraints: Vec<SdpConstraint>,
}

impl SdpProblem {
    /// Single-block problem of dimension `n`.
    pub fn single(n: usize) -> Self {
        Self { blocks: vec![n], ..Default::default() }
    }

    /// Adds a free variable with objective coefficient `c`; returns its index.
    pub fn add_free(&mut self, c: f64) -> usize {
        self.free_cost.push(c);
        self.free_cost.len() - 1
    }

    /// Objective value of given primal blocks and free values.
    pub fn objective_value(&self, x: &[DMatrix<f64>], t: &[f64]) -> f64 {
        inner_entries(&self.objective, x) + self.free_cost.iter().zip(t).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Left-hand side of constraint `k` at a primal point.
    pub fn constraint_lhs(&self, k: usize, x: &[DMatrix<f64>], t: &[f64]) -> f64 {
        let c = &self.constraints[k];
        inner_entries(&c.entries, x) + c.free.iter().map(|&(f, g)| g * t[f]).sum::<f64>()
    }
}

fn inner_entries(entries: &[SymEntry], x: &[DMatrix<f64>]) -> f64 {
    entries
        .iter()
        .map(|e| {
            let m = &x[e.block];
            if e.i == e.j {
                e.v * m[(e.i, e.i)]
            } else {
                e.v * (m[(e.i, e.j)] + m[(e.j, e.i)])
            }
        })
        .sum()
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_factor: f64,
    /// When the iteration breaks down numerically or hits `max_iter`, the
    /// best iterate is returned if its residuals and gap are within this value.
    pub accept_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, step_factor: 0.98, accept_tol: 1e-6 }
    }
}

/// Primal-dual solution with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    /// Dual multipliers in the caller's constraint order.
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    /// Relative primal residual.
    pub primal_infeas: f64,
    /// Relative dual residual.
    pub dual_infeas: f64,
    /// Relative duality gap `|p − d| / (1 + |p| + |d|)`.
    pub gap: f64,
    /// Smallest eigenvalue over all primal blocks.
    pub min_eig: f64,
}

/// A constraint in internal form: scaled, split by block, with slack sign.
#[derive(Debug, Clone)]
struct Row {
    parts: Vec<(usize, Vec<(usize, usize, f64)>)>,
    free: Vec<(usize, f64)>,
    slack: f64,
    rhs: f64,
    scale: f64,
    orig: usize,
}

fn block_entries(row: &Row, b: usize) -> &[(usize, usize, f64)] {
    row.parts.iter().find(|(pb, _)| *pb == b).map(|(_, es)| es.as_slice()).unwrap_or(&[])
}

fn add_entries(m: &mut DMatrix<f64>, es: &[(usize, usize, f64)], alpha: f64) {
    for &(i, j, v) in es {
        m[(i, j)] += alpha * v;
        if i != j {
            m[(j, i)] += alpha * v;
        }
    }
}

fn inner_sparse(es: &[(usize, usize, f64)], m: &DMatrix<f64>) -> f64 {
    es.iter().map(|&(i, j, v)| if i == j { v * m[(i, i)] } else { v * (m[(i, j)] + m[(j, i)]) }).sum()
}

/// Lower-triangular envelope matrix with per-row first column.
#[derive(Debug, Clone)]
struct Skyline {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    fn new(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            offset.push(acc);
            acc += i + 1 - f;
        }
        offset.push(acc);
        Self { first, offset, data: vec![0.0; acc] }
    }

    fn n(&self) -> usize {
        self.first.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.offset[i] + j - self.first[i]
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// In-place Cholesky. Pivots that collapse relative to the original
    /// diagonal mark a dependent row and are replaced by a huge value, which
    /// zeroes that component of the solution.
    fn factor(&mut self) {
        let n = self.n();
        for i in 0..n {
            let fi = self.first[i];
            let diag0 = self.data[self.idx(i, i)].abs();
            for j in fi..=i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let (ri, rj) = (self.idx(i, k0), self.idx(j, k0));
                let len = j - k0;
                let mut s = self.data[self.idx(i, j)];
                for k in 0..len {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if j < i {
                    let djj = self.data[self.idx(j, j)];
                    let p = self.idx(i, j);
                    self.data[p] = s / djj;
                } else {
                    let p = self.idx(i, i);
                    self.data[p] = if s > 1e-14 * diag0.max(1e-300) { s.sqrt() } else { 1e64 };
                }
            }
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = rhs[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                s -= l * rhs[fi + k];
            }
            rhs[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            rhs[i] /= row[i - fi];
            let xi = rhs[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                rhs[fi + k] -= l * xi;
            }
        }
    }
}

/// Internal problem with scaled rows in envelope order.
struct Prepared {
    blocks: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    cf: Vec<f64>,
    rows: Vec<Row>,
    /// Rows touching each block (internal indices, ascending).
    by_block: Vec<Vec<usize>>,
    /// Internal row index of each slack variable.
    slack_rows: Vec<usize>,
    first: Vec<usize>,
    obj_scale: f64,
}

fn prepare(p: &SdpProblem) -> Result<Prepared> {
    let nb = p.blocks.len();
    let nf = p.free_cost.len();
    if p.blocks.contains(&0) && nb > 0 {
        return Err(ParaError::Dimension("PSD blocks must be non-empty".into()));
    }
    let check = |e: &SymEntry| -> Result<()> {
        if e.block >= nb || e.j >= p.blocks[e.block] || e.i > e.j {
            return Err(ParaError::Dimension(format!("bad entry {e:?}")));
        }
        if !e.v.is_finite() {
            return Err(ParaError::Domain("non-finite coefficient".into()));
        }
        Ok(())
    };
    for e in &p.objective {
        check(e)?;
    }
    let mut c: Vec<DMatrix<f64>> = p.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for e in &p.objective {
        add_entries(&mut c[e.block], &[(e.i, e.j, e.v)], 1.0);
    }
    let cmax = c
        .iter()
        .flat_map(|m| m.iter())
        .chain(p.free_cost.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let obj_scale = if cmax > 0.0 { cmax } else { 1.0 };
    for m in &mut c {
        *m /= obj_scale;
    }
    let cf: Vec<f64> = p.free_cost.iter().map(|v| v / obj_scale).collect();

    let mut local: Vec<Vec<Row>> = vec![Vec::new(); nb];
    let mut border = Vec::new();
    for (k, con) in p.constraints.iter().enumerate() {
        for e in &con.entries {
            check(e)?;
        }
        if con.free.iter().any(|&(f, g)| f >= nf || !g.is_finite()) || !con.rhs.is_finite() {
            return Err(ParaError::Dimension(format!("bad free coefficient or rhs in constraint {k}")));
        }
        let mut parts: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
        for e in &con.entries {
            match parts.iter_mut().find(|(b, _)| *b == e.block) {
                Some((_, es)) => es.push((e.i, e.j, e.v)),
                None => parts.push((e.block, vec![(e.i, e.j, e.v)])),
            }
        }
        parts.sort_by_key(|(b, _)| *b);
        let slack = match con.sense {
            ConSense::Eq => 0.0,
            ConSense::Le => 1.0,
            ConSense::Ge => -1.0,
        };
        let norm2: f64 = con
            .entries
            .iter()
            .map(|e| if e.i == e.j { e.v * e.v } else { 2.0 * e.v * e.v })
            .sum::<f64>()
            + con.free.iter().map(|(_, g)| g * g).sum::<f64>()
            + slack * slack;
        if norm2 == 0.0 {
            if con.rhs.abs() > 0.0 && con.sense == ConSense::Eq {
                return Err(ParaError::Infeasible(format!("constraint {k} reads 0 = {}", con.rhs)));
            }
            continue;
        }
        let s = norm2.sqrt();
        for (_, es) in &mut parts {
            es.iter_mut().for_each(|e| e.2 /= s);
        }
        let row = Row {
            free: con.free.iter().map(|&(f, g)| (f, g / s)).collect(),
            slack: slack / s,
            rhs: con.rhs / s,
            scale: s,
            orig: k,
            parts,
        };
        if row.parts.len() == 1 {
            local[row.parts[0].0].push(row);
        } else {
            border.push(row);
        }
    }
    let mut rows = Vec::new();
    let mut first = Vec::new();
    for group in local {
        let start = rows.len();
        for r in group {
            rows.push(r);
            first.push(start);
        }
    }
    for r in border {
        rows.push(r);
        first.push(0);
    }
    let mut by_block = vec![Vec::new(); nb];
    for (k, r) in rows.iter().enumerate() {
        for (b, _) in &r.parts {
            by_block[*b].push(k);
        }
    }
    let slack_rows = (0..rows.len()).filter(|&k| rows[k].slack != 0.0).collect();
    Ok(Prepared { blocks: p.blocks.clone(), c, cf, rows, by_block, slack_rows, first, obj_scale })
}

/// Iterate of the interior-point method.
#[derive(Clone)]
struct Point {
    x: Vec<DMatrix<f64>>,
    xl: Vec<f64>,
    t: Vec<f64>,
    y: Vec<f64>,
    z: Vec<DMatrix<f64>>,
    zl: Vec<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dxl: Vec<f64>,
    dt: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<DMatrix<f64>>,
    dzl: Vec<f64>,
}

/// Largest step `α` keeping `X + α dX ⪰ 0` (∞ when unbounded).
fn psd_max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Result<f64> {
    let chol = x
        .clone()
        .cholesky()
        .ok_or_else(|| ParaError::Numeric("iterate lost positive definiteness".into()))?;
    let l = chol.l();
    let a = l.solve_lower_triangular(dx).ok_or_else(|| ParaError::Numeric("triangular solve".into()))?;
    let b = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| ParaError::Numeric("triangular solve".into()))?;
    let sym = (&b + b.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn lp_max_step(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| ParaError::Numeric("dual iterate lost positive definiteness".into()))
}

/// Solves `problem` to relative accuracy `opts.tol`.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let pr = prepare(problem)?;
    let nb = pr.blocks.len();
    let m = pr.rows.len();
    let nf = pr.cf.len();
    let nl = pr.slack_rows.len();
    let nu = pr.blocks.iter().sum::<usize>() + nl;
    if nu == 0 {
        return Err(ParaError::Dimension("problem has no conic variables".into()));
    }
    let b: Vec<f64> = pr.rows.iter().map(|r| r.rhs).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = (pr.c.iter().map(|c| c.norm_squared()).sum::<f64>() + pr.cf.iter().map(|v| v * v).sum::<f64>()).sqrt();
    // Free-variable incidence G (m × nf), stored per free column.
    let mut gcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
    for (k, r) in pr.rows.iter().enumerate() {
        for &(f, g) in &r.free {
            gcols[f].push((k, g));
        }
    }
    let slack_of_row: Vec<Option<usize>> = {
        let mut v = vec![None; m];
        for (l, &k) in pr.slack_rows.iter().enumerate() {
            v[k] = Some(l);
        }
        v
    };

    // Starting point from scaled identities.
    let amax_block = |bk: usize| -> f64 {
        pr.by_block[bk]
            .iter()
            .map(|&k| {
                block_entries(&pr.rows[k], bk)
                    .iter()
                    .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    };
    let mut pt = Point {
        x: Vec::with_capacity(nb),
        xl: vec![0.0; nl],
        t: vec![0.0; nf],
        y: vec![0.0; m],
        z: Vec::with_capacity(nb),
        zl: vec![0.0; nl],
    };
    for bk in 0..nb {
        let n = pr.blocks[bk] as f64;
        let bmax = pr.by_block[bk].iter().map(|&k| 1.0 + b[k].abs()).fold(0.0, f64::max);
        let a = amax_block(bk);
        let xi = 10f64.max(n.sqrt()).max(n * bmax / (1.0 + a));
        let eta = 10f64.max(n.sqrt()).max(1.0 + a.max(pr.c[bk].norm()));
        pt.x.push(DMatrix::identity(pr.blocks[bk], pr.blocks[bk]) * xi);
        pt.z.push(DMatrix::identity(pr.blocks[bk], pr.blocks[bk]) * eta);
    }
    for l in 0..nl {
        pt.xl[l] = 10f64.max(1.0 + b[pr.slack_rows[l]].abs());
        pt.zl[l] = 10.0;
    }

    let mut sky = Skyline::new(pr.first.clone());
    let mut iters = 0;
    let mut last = None;
    let mut best: Option<(f64, Point, (f64, f64, f64, f64, f64), usize)> = None;
    let mut failure: Option<ParaError> = None;
    for it in 0..=opts.max_iter {
        iters = it;
        // Residuals.
        let mut rp = b.clone();
        for (k, r) in pr.rows.iter().enumerate() {
            for (bk, es) in &r.parts {
                rp[k] -= inner_sparse(es, &pt.x[*bk]);
            }
            for &(f, g) in &r.free {
                rp[k] -= g * pt.t[f];
            }
            if let Some(l) = slack_of_row[k] {
                rp[k] -= r.slack * pt.xl[l];
            }
        }
        let mut rd: Vec<DMatrix<f64>> = pr.c.iter().zip(&pt.z).map(|(c, z)| c - z).collect();
        for (k, r) in pr.rows.iter().enumerate() {
            for (bk, es) in &r.parts {
                add_entries(&mut rd[*bk], es, -pt.y[k]);
            }
        }
        let rdl: Vec<f64> =
            (0..nl).map(|l| -pr.rows[pr.slack_rows[l]].slack * pt.y[pr.slack_rows[l]] - pt.zl[l]).collect();
        let mut rf = pr.cf.clone();
        for (f, col) in gcols.iter().enumerate() {
            for &(k, g) in col {
                rf[f] -= g * pt.y[k];
            }
        }
        let comp: f64 = pt.x.iter().zip(&pt.z).map(|(x, z)| frob_inner(x, z)).sum::<f64>()
            + pt.xl.iter().zip(&pt.zl).map(|(a, b)| a * b).sum::<f64>();
        let mu = comp / nu as f64;
        let pobj: f64 =
            pr.c.iter().zip(&pt.x).map(|(c, x)| frob_inner(c, x)).sum::<f64>() + pr.cf.iter().zip(&pt.t).map(|(a, b)| a * b).sum::<f64>();
        let dobj: f64 = b.iter().zip(&pt.y).map(|(a, b)| a * b).sum();
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + bnorm);
        let dinf = (rd.iter().map(|m| m.norm_squared()).sum::<f64>()
            + rdl.iter().map(|v| v * v).sum::<f64>()
            + rf.iter().map(|v| v * v).sum::<f64>())
        .sqrt()
            / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        last = Some((pobj, dobj, pinf, dinf, gap));
        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
            return Err(ParaError::Numeric("non-finite interior-point iterate".into()));
        }
        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, pt.clone(), (pobj, dobj, pinf, dinf, gap), it));
        }
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.tol {
            break;
        }
        if dobj > 1e10 && dinf <= opts.tol.sqrt() {
            return Err(ParaError::Infeasible("dual objective diverges: primal infeasible".into()));
        }
        if pobj < -1e10 && pinf <= opts.tol.sqrt() {
            return Err(ParaError::Infeasible("primal objective diverges: dual infeasible".into()));
        }
        if it == opts.max_iter {
            failure = Some(ParaError::Convergence {
                iterations: it,
                detail: format!("pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e}"),
            });
            break;
        }

        // Schur complement M = [Tr(A_i X A_j Z^{-1})] + slack diagonal.
        let w: Vec<DMatrix<f64>> = match pt.z.iter().map(inverse_spd).collect::<Result<_>>() {
            Ok(w) => w,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        sky.clear();
        for bk in 0..nb {
            let rows_b = &pr.by_block[bk];
            for (jj, &j) in rows_b.iter().enumerate() {
                let aj = block_entries(&pr.rows[j], bk);
                let mut xa = DMatrix::<f64>::zeros(pr.blocks[bk], pr.blocks[bk]);
                for &(p, q, v) in aj {
                    for r in 0..pr.blocks[bk] {
                        xa[(r, q)] += v * pt.x[bk][(r, p)];
                        if p != q {
                            xa[(r, p)] += v * pt.x[bk][(r, q)];
                        }
                    }
                }
                let bmat = xa * &w[bk];
                for &i in &rows_b[jj..] {
                    let v = inner_sparse(block_entries(&pr.rows[i], bk), &bmat);
                    let p = sky.idx(i, j);
                    sky.data[p] += v;
                }
            }
        }
        for (l, &k) in pr.slack_rows.iter().enumerate() {
            let s = pr.rows[k].slack;
            let p = sky.idx(k, k);
            sky.data[p] += s * s * pt.xl[l] / pt.zl[l];
        }
        sky.factor();
        // Bordered system for the free variables: S_f = Gᵀ M⁻¹ G.
        let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(nf);
        for col in &gcols {
            let mut v = vec![0.0; m];
            for &(k, g) in col {
                v[k] = g;
            }
            sky.solve(&mut v);
            u_cols.push(v);
        }
        let sf_chol = if nf > 0 {
            let mut sf = DMatrix::<f64>::zeros(nf, nf);
            for a in 0..nf {
                for (c, col) in gcols.iter().enumerate() {
                    sf[(c, a)] = col.iter().map(|&(k, g)| g * u_cols[a][k]).sum();
                }
            }
            let sf = sym(sf);
            let reg = 1e-14 * sf.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
            let sf = sf + DMatrix::identity(nf, nf) * reg;
            match sf.cholesky() {
                Some(c) => Some(c),
                None => {
                    failure = Some(ParaError::Numeric("free-variable block is singular".into()));
                    break;
                }
            }
        } else {
            None
        };

        let xrdw: Vec<DMatrix<f64>> = (0..nb).map(|bk| &pt.x[bk] * &rd[bk] * &w[bk]).collect();
        let solve_dir = |rc: &[DMatrix<f64>], rcl: &[f64]| -> Direction {
            let mut h = rp.clone();
            for (k, r) in pr.rows.iter().enumerate() {
                for (bk, es) in &r.parts {
                    let tmp = &rc[*bk] - &xrdw[*bk];
                    h[k] -= inner_sparse(es, &tmp);
                }
            }
            for (l, &k) in pr.slack_rows.iter().enumerate() {
                h[k] -= pr.rows[k].slack * (rcl[l] - pt.xl[l] / pt.zl[l] * rdl[l]);
            }
            let mut mh = h.clone();
            sky.solve(&mut mh);
            let mut dt = vec![0.0; nf];
            if let Some(ch) = &sf_chol {
                let mut rhs = nalgebra::DVector::<f64>::zeros(nf);
                for (f, col) in gcols.iter().enumerate() {
                    rhs[f] = col.iter().map(|&(k, g)| g * mh[k]).sum::<f64>() - rf[f];
                }
                let sol = ch.solve(&rhs);
                dt = sol.iter().cloned().collect();
            }
            let mut dy = mh;
            for (f, ucol) in u_cols.iter().enumerate() {
                for k in 0..m {
                    dy[k] -= ucol[k] * dt[f];
                }
            }
            let mut dz = rd.clone();
            for (k, r) in pr.rows.iter().enumerate() {
                for (bk, es) in &r.parts {
                    add_entries(&mut dz[*bk], es, -dy[k]);
                }
            }
            let dzl: Vec<f64> = (0..nl).map(|l| rdl[l] - pr.rows[pr.slack_rows[l]].slack * dy[pr.slack_rows[l]]).collect();
            let dx: Vec<DMatrix<f64>> =
                (0..nb).map(|bk| sym(&rc[bk] - &pt.x[bk] * &dz[bk] * &w[bk])).collect();
            let dxl: Vec<f64> = (0..nl).map(|l| rcl[l] - pt.xl[l] / pt.zl[l] * dzl[l]).collect();
            Direction { dx, dxl, dt, dy, dz, dzl }
        };
        let steps = |d: &Direction| -> Result<(f64, f64)> {
            let mut ap = lp_max_step(&pt.xl, &d.dxl);
            let mut ad = lp_max_step(&pt.zl, &d.dzl);
            for bk in 0..nb {
                ap = ap.min(psd_max_step(&pt.x[bk], &d.dx[bk])?);
                ad = ad.min(psd_max_step(&pt.z[bk], &d.dz[bk])?);
            }
            Ok((ap, ad))
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> = pt.x.iter().map(|x| -x).collect();
        let rcl_aff: Vec<f64> = pt.xl.iter().map(|v| -v).collect();
        let aff = solve_dir(&rc_aff, &rcl_aff);
        let (ap, ad) = match steps(&aff) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let comp_aff: f64 = (0..nb)
            .map(|bk| frob_inner(&(&pt.x[bk] + &aff.dx[bk] * ap), &(&pt.z[bk] + &aff.dz[bk] * ad)))
            .sum::<f64>()
            + (0..nl).map(|l| (pt.xl[l] + ap * aff.dxl[l]) * (pt.zl[l] + ad * aff.dzl[l])).sum::<f64>();
        let sigma = ((comp_aff / nu as f64) / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let rc: Vec<DMatrix<f64>> = (0..nb)
            .map(|bk| &w[bk] * (sigma * mu) - &pt.x[bk] - &aff.dx[bk] * &aff.dz[bk] * &w[bk])
            .collect();
        let rcl: Vec<f64> =
            (0..nl).map(|l| sigma * mu / pt.zl[l] - pt.xl[l] - aff.dxl[l] * aff.dzl[l] / pt.zl[l]).collect();
        let d = solve_dir(&rc, &rcl);
        let (ap, ad) = match steps(&d) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let ap = (opts.step_factor * ap).min(1.0);
        let ad = (opts.step_factor * ad).min(1.0);
        for bk in 0..nb {
            pt.x[bk] += &d.dx[bk] * ap;
            pt.z[bk] += &d.dz[bk] * ad;
        }
        for l in 0..nl {
            pt.xl[l] += ap * d.dxl[l];
            pt.zl[l] += ad * d.dzl[l];
        }
        for f in 0..nf {
            pt.t[f] += ap * d.dt[f];
        }
        for k in 0..m {
            pt.y[k] += ad * d.dy[k];
        }
    }
    let (mut pobj, mut dobj, mut pinf, mut dinf, mut gap) = last.expect("at least one iteration");
    if let Some(err) = failure {
        match best {
            Some((merit, p, stats, it)) if merit <= opts.accept_tol => {
                pt = p;
                (pobj, dobj, pinf, dinf, gap) = stats;
                iters = it;
            }
            _ => return Err(err),
        }
    }
    let mut y = vec![0.0; problem.constraints.len()];
    for (k, r) in pr.rows.iter().enumerate() {
        y[r.orig] = pt.y[k] * pr.obj_scale / r.scale;
    }
    let min_eig = pt
        .x
        .iter()
        .map(|x| SymmetricEigen::new(x.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    Ok(SdpSolution {
        z: pt.z.iter().map(|z| z * pr.obj_scale).collect(),
        x: pt.x,
        free: pt.t,
        y,
        primal_obj: pobj * pr.obj_scale,
        dual_obj: dobj * pr.obj_scale,
        iterations: iters,
        primal_infeas: pinf,
        dual_infeas: dinf,
        gap,
        min_eig,
    })
}
