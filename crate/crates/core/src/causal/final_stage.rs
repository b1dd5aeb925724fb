use serde::{Deserialize, Serialize};

use super::crossfit::ResidualSet;
use super::effect::EffectEstimate;
use crate::data::{FeatureMatrix, Scaler};
use crate::error::{Error, Result};

/// Pivots whose magnitude falls below this fraction of the largest one are
/// treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `theta(x) = intercept + <beta, x>` over standardized covariates, with a
/// heteroskedasticity-robust (HC1) covariance over `[intercept, beta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCateModel {
    pub column_names: Vec<String>,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub scaler: Scaler,
    pub n_obs: usize,
}

impl LinearCateModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    /// `[intercept, beta...]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.beta.len() + 1);
        c.push(self.intercept);
        c.extend_from_slice(&self.beta);
        c
    }

    /// Per-coefficient estimates, intercept first.
    pub fn coefficient_estimates(&self) -> Vec<(String, EffectEstimate)> {
        let names = std::iter::once("intercept".to_string()).chain(self.column_names.iter().cloned());
        names
            .zip(self.coefficients())
            .enumerate()
            .map(|(j, (name, c))| (name, EffectEstimate::new(c, self.covariance[j][j].max(0.0).sqrt())))
            .collect()
    }

    pub fn theta(&self, x_std: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(x_std).map(|(b, x)| b * x).sum::<f64>()
    }

    fn variance_at(&self, x_std: &[f64]) -> f64 {
        let q = self.beta.len() + 1;
        let v = |j: usize| if j == 0 { 1.0 } else { x_std[j - 1] };
        let mut s = 0.0;
        for a in 0..q {
            let va = v(a);
            for b in 0..q {
                s += va * self.covariance[a][b] * v(b);
            }
        }
        s.max(0.0)
    }

    /// Effect at a standardized covariate vector.
    pub fn effect_standardized(&self, x_std: &[f64]) -> Result<EffectEstimate> {
        if x_std.len() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} covariates, input has {}",
                self.n_features(),
                x_std.len()
            )));
        }
        Ok(EffectEstimate::new(self.theta(x_std), self.variance_at(x_std).sqrt()))
    }

    /// Effect at a covariate vector in original units.
    pub fn cate(&self, x_raw: &[f64]) -> Result<EffectEstimate> {
        let z = self.scaler.transform_row(x_raw)?;
        self.effect_standardized(&z)
    }

    /// Per-row effects of a standardized matrix.
    pub fn cate_rows(&self, x_std: &FeatureMatrix) -> Result<Vec<EffectEstimate>> {
        x_std.rows().map(|r| self.effect_standardized(r)).collect()
    }

    /// Effect at the covariate mean of `x_std`, which equals the mean of the
    /// per-row effects.
    pub fn ate(&self, x_std: &FeatureMatrix) -> Result<EffectEstimate> {
        if x_std.n_rows() == 0 {
            return Err(Error::Empty("no rows to average the effect over".into()));
        }
        self.effect_standardized(&x_std.column_means())
    }
}

/// Column-major Householder QR with column pivoting.
struct PivotedQr {
    cols: Vec<Vec<f64>>,
    perm: Vec<usize>,
    diag: Vec<f64>,
    qty: Vec<f64>,
}

impl PivotedQr {
    fn new(mut cols: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Self {
        let q = cols.len();
        let n = rhs.len();
        let mut perm: Vec<usize> = (0..q).collect();
        let mut diag = vec![0.0; q];
        for k in 0..q.min(n) {
            let tail_norm = |c: &Vec<f64>| c[k..].iter().map(|v| v * v).sum::<f64>();
            let mut best = k;
            let mut best_norm = tail_norm(&cols[k]);
            for (j, c) in cols.iter().enumerate().skip(k + 1) {
                let s = tail_norm(c);
                if s > best_norm {
                    best = j;
                    best_norm = s;
                }
            }
            cols.swap(k, best);
            perm.swap(k, best);
            let norm = best_norm.sqrt();
            if norm == 0.0 {
                break;
            }
            let head = cols[k][k];
            let alpha = if head > 0.0 { -norm } else { norm };
            let mut v = cols[k][k..].to_vec();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|a| a * a).sum();
            if vv > 0.0 {
                let reflect = |c: &mut [f64]| {
                    let s = 2.0 * v.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>() / vv;
                    for (ci, vi) in c.iter_mut().zip(&v) {
                        *ci -= s * vi;
                    }
                };
                for c in cols.iter_mut().skip(k + 1) {
                    reflect(&mut c[k..]);
                }
                reflect(&mut rhs[k..]);
            }
            cols[k][k] = alpha;
            diag[k] = alpha;
        }
        Self {
            cols,
            perm,
            diag,
            qty: rhs,
        }
    }

    fn rank(&self) -> usize {
        let top = self.diag.first().map_or(0.0, |d| d.abs());
        if top == 0.0 {
            return 0;
        }
        self.diag.iter().take_while(|d| d.abs() > RANK_TOLERANCE * top).count()
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.cols[j][i]
    }

    /// Solves `R b = c` for upper-triangular `R`.
    fn back_substitute(&self, c: &[f64]) -> Vec<f64> {
        let q = self.cols.len();
        let mut b = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = c[i];
            for (j, bj) in b.iter().enumerate().skip(i + 1) {
                s -= self.r(i, j) * bj;
            }
            b[i] = s / self.r(i, i);
        }
        b
    }

    /// Least-squares coefficients in original column order.
    fn solve(&self) -> Vec<f64> {
        let bp = self.back_substitute(&self.qty[..self.cols.len()]);
        let mut b = vec![0.0; bp.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = bp[k];
        }
        b
    }

    /// `(Z^T Z)^-1 = P R^-1 R^-T P^T`.
    fn gram_inverse(&self) -> Vec<Vec<f64>> {
        let q = self.cols.len();
        let rinv_cols: Vec<Vec<f64>> = (0..q)
            .map(|c| {
                let mut e = vec![0.0; q];
                e[c] = 1.0;
                self.back_substitute(&e)
            })
            .collect();
        let rinv = |i: usize, j: usize| rinv_cols[j][i];
        let mut out = vec![vec![0.0; q]; q];
        for a in 0..q {
            for b in 0..q {
                let s: f64 = (a.max(b)..q).map(|k| rinv(a, k) * rinv(b, k)).sum();
                out[self.perm[a]][self.perm[b]] = s;
            }
        }
        out
    }
}

/// Least squares of the outcome residual on `t_res * [1, x]` with an HC1
/// sandwich covariance.
pub fn fit_linear_cate(residuals: &ResidualSet, x_std: &FeatureMatrix, scaler: &Scaler) -> Result<LinearCateModel> {
    let n = residuals.len();
    let p = x_std.n_cols();
    let q = p + 1;
    if x_std.n_rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} residuals for {} covariate rows",
            x_std.n_rows()
        )));
    }
    if scaler.n_cols() != p {
        return Err(Error::DimensionMismatch(format!(
            "scaler has {} columns, covariates have {p}",
            scaler.n_cols()
        )));
    }
    if n <= q {
        return Err(Error::invalid(format!("{n} rows cannot identify {q} final-stage coefficients")));
    }
    let t = &residuals.t_res;
    let mut cols = vec![t.clone()];
    for j in 0..p {
        cols.push((0..n).map(|i| t[i] * x_std.get(i, j)).collect());
    }
    let qr = PivotedQr::new(cols.clone(), residuals.y_res.clone());
    let rank = qr.rank();
    if rank < q {
        let mut bad: Vec<usize> = qr.perm[rank..].to_vec();
        bad.sort_unstable();
        let columns = bad
            .into_iter()
            .map(|j| if j == 0 { "intercept".to_string() } else { x_std.column_names()[j - 1].clone() })
            .collect();
        return Err(Error::RankDeficient { columns });
    }
    let coef = qr.solve();
    let minv = qr.gram_inverse();

    let mut meat = vec![vec![0.0; q]; q];
    let mut z = vec![0.0; q];
    for i in 0..n {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = cols[j][i];
        }
        let u = residuals.y_res[i] - z.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
        let u2 = u * u;
        for a in 0..q {
            let wa = u2 * z[a];
            for b in a..q {
                meat[a][b] += wa * z[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            meat[a][b] = meat[b][a];
        }
    }
    let dof = n as f64 / (n - q) as f64;
    let left = matmul(&minv, &meat);
    let mut cov = matmul(&left, &minv);
    for a in 0..q {
        for b in 0..a {
            let s = 0.5 * (cov[a][b] + cov[b][a]) * dof;
            cov[a][b] = s;
            cov[b][a] = s;
        }
        cov[a][a] *= dof;
    }

    Ok(LinearCateModel {
        column_names: x_std.column_names().to_vec(),
        intercept: coef[0],
        beta: coef[1..].to_vec(),
        covariance: cov,
        scaler: scaler.clone(),
        n_obs: n,
    })
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = b.len();
    a.iter()
        .map(|row| (0..q).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

/// `max_j |sum_i z_ij u_i|`: how far the fitted coefficients are from
/// satisfying the final-stage normal equations.
pub fn normal_equation_gap(model: &LinearCateModel, residuals: &ResidualSet, x_std: &FeatureMatrix) -> f64 {
    let q = model.n_features() + 1;
    let mut s = vec![0.0; q];
    for (i, row) in x_std.rows().enumerate() {
        let t = residuals.t_res[i];
        let u = residuals.y_res[i] - model.theta(row) * t;
        s[0] += t * u;
        for (j, &xj) in row.iter().enumerate() {
            s[j + 1] += t * xj * u;
        }
    }
    s.iter().fold(0.0, |m, v| m.max(v.abs()))
}
