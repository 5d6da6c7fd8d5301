//! Closed-form block-coordinate updates for the Kronecker-sum mean.
//!
//! With the precision fixed, the negative log-likelihood is a convex quadratic
//! in `(m, mu_1, ..., mu_K)`. The grand mean `m` has a scalar closed form, and
//! each axis mean solves an equality-constrained QP
//!
//! ```text
//! argmin_mu  1/2 mu^T A mu + b^T mu   subject to  1^T mu = 0
//! A = d_rest * Psi_l + theta_rest * I
//! ```
//!
//! whose solution is `(1^T A^-1 b / 1^T A^-1 1) A^-1 1 - A^-1 b`. `A` shares
//! eigenvectors with `Psi_l`, so its inverse comes from the precision's
//! eigencache.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{nll, KSMean, KSPrecision};
use crate::tensor::{mode_multiply, Tensor};

/// Stopping rule for the inner mean loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanBlockConfig {
    /// Relative NLL change between sweeps below which the loop stops. The
    /// change is quadratic in the gradient, so this sits near machine epsilon.
    pub tol: f64,
    pub max_inner_iters: usize,
}

impl Default for MeanBlockConfig {
    fn default() -> Self {
        Self {
            tol: 1e-15,
            max_inner_iters: 100,
        }
    }
}

impl MeanBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean_cfg.tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidParameter(
                "mean_cfg.max_inner_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The pieces of one axis' coordinate QP.
#[derive(Debug, Clone)]
pub struct QPPieces {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `theta_l = 1^T Psi_l 1` for every axis.
    pub theta: Vec<f64>,
    /// `theta_rest` for the axis this QP belongs to.
    pub theta_comp: f64,
}

impl QPPieces {
    pub fn new(
        axis: usize,
        data: &Tensor,
        m: f64,
        mu: &KSMean,
        p: &KSPrecision,
    ) -> Result<Self> {
        Ok(Self {
            a: build_a(axis, p)?,
            b: build_b(axis, data, m, mu, p)?,
            theta: p.thetas(),
            theta_comp: theta_complement(&p.dims(), &p.thetas(), axis),
        })
    }
}

/// `sum_{l' != l} d_all / (d_l d_l') * theta_l'`.
pub fn theta_complement(dims: &[usize], thetas: &[f64], axis: usize) -> f64 {
    let total: usize = dims.iter().product();
    dims.iter()
        .zip(thetas)
        .enumerate()
        .filter(|&(k, _)| k != axis)
        .map(|(_, (&d, &t))| total as f64 / (dims[axis] * d) as f64 * t)
        .sum()
}

fn check_axis(axis: usize, ndim: usize) -> Result<()> {
    if axis >= ndim {
        Err(Error::AxisOutOfRange { axis, ndim })
    } else {
        Ok(())
    }
}

/// `A_l = d_rest * Psi_l + theta_rest * I`.
pub fn build_a(axis: usize, p: &KSPrecision) -> Result<DMatrix<f64>> {
    let dims = p.dims();
    check_axis(axis, dims.len())?;
    let total: usize = dims.iter().product();
    let d_rest = (total / dims[axis]) as f64;
    let tc = theta_complement(&dims, &p.thetas(), axis);
    Ok(p.factor(axis) * d_rest + DMatrix::identity(dims[axis], dims[axis]) * tc)
}

/// Linear coefficient of the axis-`axis` QP with every other block fixed.
///
/// Only the other axes' entries of `mu` are read; they must sum to zero.
pub fn build_b(
    axis: usize,
    data: &Tensor,
    m: f64,
    mu: &KSMean,
    p: &KSPrecision,
) -> Result<DVector<f64>> {
    let dims = data.dims().to_vec();
    check_axis(axis, dims.len())?;
    p.check_dims(&dims)?;
    if mu.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "mean dims {:?} vs data dims {dims:?}",
            mu.dims()
        )));
    }
    let total: usize = dims.iter().product();
    let d_rest = (total / dims[axis]) as f64;
    let thetas = p.thetas();
    let tc = theta_complement(&dims, &thetas, axis);
    let psi = p.factor(axis);
    let ones = DVector::from_element(dims[axis], 1.0);

    // mean-offset terms
    let mut b = psi * &ones * (m * d_rest) + &ones * (m * tc);

    // cross-axis term: 1^T Psi_rest mu_rest, a single scalar
    let cross: f64 = (0..dims.len())
        .filter(|&k| k != axis)
        .map(|k| {
            let w = total as f64 / (dims[axis] * dims[k]) as f64;
            w * (p.factor(k) * mu.mu(k)).sum()
        })
        .sum();
    b.add_scalar_mut(cross);

    // data terms
    b -= psi * data.axis_sums(axis)?;
    for k in (0..dims.len()).filter(|&k| k != axis) {
        // contracting axis k with 1^T Psi_k equals mode multiplication followed
        // by summation over that axis
        let row = DMatrix::from_row_slice(1, dims[k], p.factor(k).row_sum().as_slice());
        let contracted = mode_multiply(data, k, &row)?;
        b -= contracted.axis_sums(axis)?;
    }
    Ok(b)
}

/// Coordinate-wise optimal grand mean with the axis means fixed.
pub fn update_m(data: &Tensor, mu_tilde: &[DVector<f64>], p: &KSPrecision) -> Result<f64> {
    let dims = data.dims().to_vec();
    p.check_dims(&dims)?;
    let lens: Vec<usize> = mu_tilde.iter().map(|v| v.len()).collect();
    if lens != dims {
        return Err(Error::DimensionMismatch(format!(
            "mean factor lengths {lens:?} vs data dims {dims:?}"
        )));
    }
    let spread = crate::tensor::ks_mean_tensor(0.0, mu_tilde)?;
    let residual = data.sub(&spread)?;
    let total: usize = dims.iter().product();
    let mut num = 0.0;
    let mut den = 0.0;
    for (axis, psi) in p.factors().iter().enumerate() {
        let psi1 = psi.column_sum();
        num += residual.axis_sums(axis)?.dot(&psi1);
        den += (total / dims[axis]) as f64 * psi1.sum();
    }
    if !(den > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigen_sum: den });
    }
    Ok(num / den)
}

/// Applies `A_l^{-1}` using the eigendecomposition shared with `Psi_l`.
fn a_inverse_apply(axis: usize, p: &KSPrecision, v: &DVector<f64>) -> Result<DVector<f64>> {
    let dims = p.dims();
    let total: usize = dims.iter().product();
    let d_rest = (total / dims[axis]) as f64;
    let tc = theta_complement(&dims, &p.thetas(), axis);
    let eig = &p.eigen()[axis];
    let mut coords = eig.vectors.tr_mul(v);
    for (c, &lam) in coords.iter_mut().zip(eig.values.iter()) {
        let a = d_rest * lam + tc;
        if !(a > 0.0) {
            return Err(Error::Internal(format!(
                "A_{axis} has non-positive eigenvalue {a:e}"
            )));
        }
        *c /= a;
    }
    Ok(&eig.vectors * coords)
}

/// Solves `min 1/2 mu^T A mu + b^T mu` s.t. `1^T mu = 0` given `A^{-1}`.
pub(crate) fn constrained_qp_closed_form(
    a_inv: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ones = DVector::from_element(b.len(), 1.0);
    let ainv_b = a_inv(b)?;
    let ainv_1 = a_inv(&ones)?;
    let denom = ainv_1.sum();
    if !(denom > 0.0) {
        return Err(Error::Internal(format!("1^T A^-1 1 = {denom:e}")));
    }
    let mut mu = &ainv_1 * (ainv_b.sum() / denom) - ainv_b;
    // remove rounding drift off the constraint surface
    let drift = mu.mean();
    mu.add_scalar_mut(-drift);
    Ok(mu)
}

/// Coordinate-wise optimal sum-zero mean for `axis`.
pub fn update_mu(
    axis: usize,
    data: &Tensor,
    m: f64,
    mu: &KSMean,
    p: &KSPrecision,
) -> Result<DVector<f64>> {
    let b = build_b(axis, data, m, mu, p)?;
    constrained_qp_closed_form(|v| a_inverse_apply(axis, p, v), &b)
}

/// Grand mean and per-axis means of the data.
pub fn init_means(data: &Tensor) -> KSMean {
    let total = data.len() as f64;
    let m = data.sum() / total;
    let mus = (0..data.ndim())
        .map(|axis| {
            let d_rest = data.complement_len(axis) as f64;
            let mut mu = data.axis_sums(axis).expect("axis in range") / d_rest;
            mu.add_scalar_mut(-m);
            let drift = mu.mean();
            mu.add_scalar_mut(-drift);
            mu
        })
        .collect();
    KSMean { m, mus }
}

/// Outcome of [`fit_mean_block`].
#[derive(Debug, Clone)]
pub struct MeanBlockFit {
    pub mean: KSMean,
    pub sweeps: usize,
    pub converged: bool,
    /// NLL at the start and after every single coordinate update.
    pub update_nlls: Vec<f64>,
}

impl MeanBlockFit {
    pub fn final_nll(&self) -> f64 {
        *self.update_nlls.last().expect("trace holds the starting NLL")
    }

    /// Largest increase of the NLL across any single update (negative when
    /// every update decreased it).
    pub fn max_increase(&self) -> f64 {
        self.update_nlls
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / cur.abs().max(1.0)
}

/// Cycles `m`, then `mu_1..mu_K`, until the sweep-to-sweep relative NLL change
/// drops below `cfg.tol`.
pub fn fit_mean_block(
    data: &Tensor,
    p: &KSPrecision,
    start: &KSMean,
    cfg: &MeanBlockConfig,
) -> Result<MeanBlockFit> {
    cfg.validate()?;
    p.validate()?;
    let mut mean = start.clone();
    let mut update_nlls = vec![nll(data, p, &mean)?];
    let mut prev = update_nlls[0];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_inner_iters {
        sweeps += 1;
        mean.m = update_m(data, &mean.mus, p)?;
        update_nlls.push(nll(data, p, &mean)?);
        for axis in 0..data.ndim() {
            let next = update_mu(axis, data, mean.m, &mean, p)?;
            mean.mus[axis] = next;
            update_nlls.push(nll(data, p, &mean)?);
        }
        let cur = *update_nlls.last().unwrap();
        if !cur.is_finite() {
            return Err(Error::NonFinite(format!("NLL after mean sweep {sweeps}")));
        }
        if relative_change(prev, cur) < cfg.tol {
            converged = true;
            break;
        }
        prev = cur;
    }
    Ok(MeanBlockFit {
        mean,
        sweeps,
        converged,
        update_nlls,
    })
}
