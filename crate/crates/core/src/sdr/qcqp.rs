//! Stacked-vector quadratic form of the association objective.

use nalgebra::{DMatrix, DVector};

use super::coefficients::Coefficients;
use crate::error::{ParaError, Result};
use crate::model::{Allocation, Scenario, TIERS};

/// Index layout of the stacked vector `Q`: offload ratios level by level
/// (`N` entries each), then the association of each tier in user-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_users: usize,
    pub servers: [usize; 3],
}

impl Layout {
    pub fn new(scn: &Scenario) -> Self {
        Self { n_users: scn.n_users(), servers: scn.topology.servers }
    }

    /// Length `4N + N·M` of `Q`.
    pub fn dim(&self) -> usize {
        self.n_users * (4 + self.servers.iter().sum::<usize>())
    }

    pub fn phi(&self, n: usize, level: usize) -> usize {
        level * self.n_users + n
    }

    pub fn x(&self, tier: usize, n: usize, m: usize) -> usize {
        let before: usize = self.servers[..tier].iter().sum();
        4 * self.n_users + self.n_users * before + n * self.servers[tier] + m
    }

    /// Stacks association and offload ratios into `Q`.
    pub fn stack(&self, x: &[Vec<Vec<f64>>; 3], phi: &[[f64; 4]]) -> DVector<f64> {
        let mut q = DVector::zeros(self.dim());
        for n in 0..self.n_users {
            for l in 0..4 {
                q[self.phi(n, l)] = phi[n][l];
            }
            for t in 0..3 {
                for m in 0..self.servers[t] {
                    q[self.x(t, n, m)] = x[t][n][m];
                }
            }
        }
        q
    }

    /// Splits `Q` back into association and offload ratios.
    pub fn unstack(&self, q: &[f64]) -> ([Vec<Vec<f64>>; 3], Vec<[f64; 4]>) {
        let phi = (0..self.n_users)
            .map(|n| [0, 1, 2, 3].map(|l| q[self.phi(n, l)]))
            .collect();
        let x = [0, 1, 2].map(|t| {
            (0..self.n_users)
                .map(|n| (0..self.servers[t]).map(|m| q[self.x(t, n, m)]).collect())
                .collect()
        });
        (x, phi)
    }
}

/// Sparse quadratic form `Σ v·q_i·q_j + Σ w·q_i`; pairs are stored once with `i ≤ j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadForm {
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
}

impl QuadForm {
    pub fn eval(&self, q: &[f64]) -> f64 {
        self.quad.iter().map(|&(i, j, v)| v * q[i] * q[j]).sum::<f64>()
            + self.lin.iter().map(|&(i, w)| w * q[i]).sum::<f64>()
    }

    /// Dense symmetric matrix `P` and vector `p` with `qᵀPq + pᵀq` equal to the form.
    pub fn to_dense(&self, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut p = DMatrix::zeros(dim, dim);
        for &(i, j, v) in &self.quad {
            if i == j {
                p[(i, i)] += v;
            } else {
                p[(i, j)] += 0.5 * v;
                p[(j, i)] += 0.5 * v;
            }
        }
        let mut w = DVector::zeros(dim);
        for &(i, c) in &self.lin {
            w[i] += c;
        }
        (p, w)
    }
}

/// Shared server resource limited by a capacity row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Bandwidth,
    Compute,
    Power,
}

/// Capacity row `Σ coef·q ≤ 1` of one server resource.
#[derive(Debug, Clone, PartialEq)]
pub struct CapRow {
    pub resource: Resource,
    pub tier: usize,
    pub server: usize,
    pub coef: Vec<(usize, f64)>,
}

/// The association problem in stacked form: maximize
/// `QᵀP₀Q + W₀ᵀQ − Σ t_weight·T` subject to the delay rows `T ≥ delay(Q)`,
/// the capacity rows and the simplex and binary structure of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpForm {
    pub layout: Layout,
    pub p0: DMatrix<f64>,
    pub w0: DVector<f64>,
    /// Weight `−D ≥ 0` of each delay bound per user and level.
    pub t_weight: Vec<[f64; 4]>,
    /// Delay of each user and level as a form in `Q`.
    pub delay: Vec<[QuadForm; 4]>,
    pub caps: Vec<CapRow>,
}

impl QcqpForm {
    /// Maximization objective at `(Q, T)`.
    pub fn objective(&self, q: &DVector<f64>, t: &[[f64; 4]]) -> f64 {
        let quad = q.dot(&(&self.p0 * q));
        let lin = self.w0.dot(q);
        let tc: f64 = self.t_weight.iter().zip(t).map(|(w, tv)| (0..4).map(|l| w[l] * tv[l]).sum::<f64>()).sum();
        quad + lin - tc
    }

    /// Delay bounds at `Q` evaluated from the delay forms.
    pub fn delays(&self, q: &[f64]) -> Vec<[f64; 4]> {
        self.delay.iter().map(|row| [0, 1, 2, 3].map(|l| row[l].eval(q))).collect()
    }
}

/// Builds the stacked form from the coefficient families and the pricing shares.
pub fn build_qcqp(scn: &Scenario, pricing: &Allocation, coefs: &Coefficients) -> Result<QcqpForm> {
    let layout = Layout::new(scn);
    let n_users = layout.n_users;
    if coefs.users.len() != n_users {
        return Err(ParaError::Dimension("coefficient families do not match the user count".into()));
    }
    for t in 0..3 {
        if coefs.links[t].len() != n_users || coefs.links[t].iter().any(|r| r.len() != layout.servers[t]) {
            return Err(ParaError::Dimension(format!("link coefficients of tier {t} have the wrong shape")));
        }
    }
    let dim = layout.dim();
    let mut p0 = DMatrix::zeros(dim, dim);
    let mut w0 = DVector::zeros(dim);
    let mut t_weight = Vec::with_capacity(n_users);
    let mut delay = Vec::with_capacity(n_users);
    for n in 0..n_users {
        let uc = &coefs.users[n];
        w0[layout.phi(n, 0)] += uc.c + uc.a_uu;
        t_weight.push(uc.d.map(|d| -d));
        let mut rows: [QuadForm; 4] = Default::default();
        rows[0].lin.push((layout.phi(n, 0), uc.delay_u));
        for tier in TIERS {
            let t = tier.index();
            let l = tier.level();
            for m in 0..layout.servers[t] {
                let lc = &coefs.links[t][n][m];
                let xi = layout.x(t, n, m);
                w0[xi] += lc.b;
                rows[l].lin.push((xi, lc.delay_x));
                for j in 0..=l {
                    let k = lc.a[j] + if j == l { lc.c } else { 0.0 };
                    let pj = layout.phi(n, j);
                    p0[(xi, pj)] += 0.5 * k;
                    p0[(pj, xi)] += 0.5 * k;
                    let (i0, j0) = if pj < xi { (pj, xi) } else { (xi, pj) };
                    rows[l].quad.push((i0, j0, lc.delay_phi[j]));
                }
            }
        }
        delay.push(rows);
    }
    let mut caps = Vec::new();
    for tier in TIERS {
        let t = tier.index();
        for m in 0..layout.servers[t] {
            let row = |resource, share: &Vec<Vec<f64>>| CapRow {
                resource,
                tier: t,
                server: m,
                coef: (0..n_users).map(|n| (layout.x(t, n, m), share[n][m])).collect(),
            };
            caps.push(row(Resource::Bandwidth, &pricing.bw[t]));
            caps.push(row(Resource::Compute, &pricing.cpu[t]));
            if t < 2 {
                caps.push(row(Resource::Power, &pricing.pw[t]));
            }
        }
    }
    Ok(QcqpForm { layout, p0, w0, t_weight, delay, caps })
}
