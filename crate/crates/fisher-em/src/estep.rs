//! E-step: per-group cost function, posterior probabilities and the observed
//! log-likelihood. Everything works through the d-dimensional projection and
//! the Pythagorean residual, so the (p-d)-dimensional complement basis is
//! never formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{Dataset, DlmParameters, LatentCovariances, SoftPartition};

const LOG_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Differences `Gamma_k - Gamma_min` are clamped here before exponentiation;
/// exp(-700) underflows to zero, which is acceptable for a posterior.
const GAMMA_DIFF_CLAMP: f64 = 1400.0;

enum LatentQuad {
    Full { chol: Cholesky<f64, Dyn> },
    Diag(DVector<f64>),
    Iso(f64),
}

struct GroupCost {
    mean: DVector<f64>,
    quad: LatentQuad,
    beta: f64,
    constant: f64, // log|Sigma_k| + (p-d) ln beta_k - 2 ln pi_k + p ln 2pi
}

fn group_cost(params: &DlmParameters, k: usize) -> Result<GroupCost> {
    let p = params.observed_dim();
    let d = params.latent_dim();
    let beta = params.noise_variances().beta(k);
    let (quad, log_det) = match params.latent_covariances() {
        LatentCovariances::FullPerGroup(_) | LatentCovariances::FullShared(_) => {
            let sigma = params.latent_covariances().full_matrix(k, d);
            let chol = sigma
                .cholesky()
                .ok_or(Error::SingularCovariance { group: k })?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            (LatentQuad::Full { chol }, log_det)
        }
        LatentCovariances::DiagPerGroup(a) => {
            let row = a.row(k).transpose();
            let log_det = row.iter().map(|x| x.ln()).sum();
            (LatentQuad::Diag(row), log_det)
        }
        LatentCovariances::IsoPerGroup(a) => (LatentQuad::Iso(a[k]), d as f64 * a[k].ln()),
        LatentCovariances::DiagShared(a) => {
            (LatentQuad::Diag(a.clone()), a.iter().map(|x| x.ln()).sum())
        }
        LatentCovariances::IsoShared(a) => (LatentQuad::Iso(*a), d as f64 * a.ln()),
    };
    let pi_k = params.proportions()[k];
    let constant =
        log_det + (p - d) as f64 * beta.ln() - 2.0 * pi_k.ln() + p as f64 * LOG_2PI;
    Ok(GroupCost {
        mean: params.means().row(k).transpose(),
        quad,
        beta,
        constant,
    })
}

impl GroupCost {
    fn latent_quad(&self, z: &DVector<f64>) -> f64 {
        match &self.quad {
            LatentQuad::Full { chol } => z.dot(&chol.solve(z)),
            LatentQuad::Diag(a) => z.iter().zip(a.iter()).map(|(zi, ai)| zi * zi / ai).sum(),
            LatentQuad::Iso(a) => z.norm_squared() / a,
        }
    }
}

/// Cost `Gamma_k(y) = -2 ln(pi_k phi(y; m_k, S_k))` evaluated without forming
/// the p x p covariance.
pub fn cost_gamma(params: &DlmParameters, y: &DVector<f64>, k: usize) -> Result<f64> {
    if y.len() != params.observed_dim() {
        return Err(Error::InvalidDimensions(format!(
            "observation has length {}, expected {}",
            y.len(),
            params.observed_dim()
        )));
    }
    if k >= params.n_groups() {
        return Err(Error::InvalidDimensions(format!(
            "group index {k} out of range"
        )));
    }
    let gc = group_cost(params, k)?;
    let dy = y - &gc.mean;
    let z = params.orientation().transpose() * &dy;
    let residual = dy.norm_squared() - z.norm_squared();
    Ok(gc.latent_quad(&z) + residual / gc.beta + gc.constant)
}

/// n x K matrix of `Gamma_k(y_i)` values.
pub(crate) fn gamma_matrix(params: &DlmParameters, data: &Dataset) -> Result<DMatrix<f64>> {
    if data.p() != params.observed_dim() {
        return Err(Error::InvalidDimensions(format!(
            "data has p={}, parameters have p={}",
            data.p(),
            params.observed_dim()
        )));
    }
    let n = data.n();
    let kk = params.n_groups();
    let u = params.orientation();
    let mut gammas = DMatrix::zeros(n, kk);
    for k in 0..kk {
        let gc = group_cost(params, k)?;
        // Dy = Y - 1 m_k^t, row-wise
        let mut dy = data.matrix().clone();
        for i in 0..n {
            for j in 0..data.p() {
                dy[(i, j)] -= gc.mean[j];
            }
        }
        let z = &dy * u; // n x d
        for i in 0..n {
            let zi = z.row(i).transpose();
            let quad = gc.latent_quad(&zi);
            let residual = dy.row(i).norm_squared() - zi.norm_squared();
            let g = quad + residual / gc.beta + gc.constant;
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "cost Gamma for observation {i}, group {k}"
                )));
            }
            gammas[(i, k)] = g;
        }
    }
    Ok(gammas)
}

/// Row-wise softmax of `-Gamma/2` with max-shift; returns the partition and
/// the observed log-likelihood `sum_i ln sum_k exp(-Gamma_ik / 2)`.
pub(crate) fn softmax_rows(gammas: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (n, k) = gammas.shape();
    let mut t = DMatrix::zeros(n, k);
    let mut loglik = 0.0;
    for i in 0..n {
        let row = gammas.row(i);
        let gmin = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for j in 0..k {
            let diff = (row[j] - gmin).min(GAMMA_DIFF_CLAMP);
            let w = (-diff / 2.0).exp();
            t[(i, j)] = w;
            sum += w;
        }
        for j in 0..k {
            t[(i, j)] /= sum;
        }
        loglik += -gmin / 2.0 + sum.ln();
    }
    (t, loglik)
}

/// Posterior probabilities `t_ik` for every observation.
pub fn posteriors(params: &DlmParameters, data: &Dataset) -> Result<SoftPartition> {
    Ok(posteriors_and_loglik(params, data)?.0)
}

/// Observed-data log-likelihood.
pub fn log_likelihood(params: &DlmParameters, data: &Dataset) -> Result<f64> {
    Ok(posteriors_and_loglik(params, data)?.1)
}

/// Posteriors and log-likelihood from one pass over the cost matrix.
pub fn posteriors_and_loglik(
    params: &DlmParameters,
    data: &Dataset,
) -> Result<(SoftPartition, f64)> {
    let gammas = gamma_matrix(params, data)?;
    let (t, loglik) = softmax_rows(&gammas);
    Ok((SoftPartition::new(t)?, loglik))
}
