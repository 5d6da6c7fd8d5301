//! Kronecker-sum precision estimation.
//!
//! [`PrecisionSolver`] is the plug-in point for any estimator of `{Psi_l}`
//! from mean-centred data. [`ProxGradSolver`] is the in-crate baseline: a
//! proximal-gradient method on
//!
//! ```text
//! -log det(Omega) + sum_l tr(S_l Psi_l) + ridge tr(Omega) + sum_l rho_l ||Psi_l||_{1,od}
//! ```
//!
//! The ridge term keeps the objective bounded when a fitted mean leaves an
//! entire residual slice at zero; the off-diagonal penalty alone does not.
//!
//! with Barzilai-Borwein step proposals, off-diagonal soft-thresholding and a
//! backtracking line search that rejects any step leaving the Kronecker-sum
//! spectrum non-positive.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EdgeSet;
use crate::params::{ks_logdet, KSPrecision, PD_FLOOR};
use crate::tensor::{matricize, Tensor};

/// Settings for [`ProxGradSolver`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Per-axis off-diagonal l1 penalties. A single entry applies to every axis.
    pub rho: Vec<f64>,
    /// Multiply `rho[l]` by `d_{\l}`, the number of samples seen by axis `l`,
    /// so one setting means the same strength at any tensor size.
    pub per_sample: bool,
    /// Weight on `tr(Omega)`, the same as adding `ridge` to every residual
    /// variance.
    pub ridge: f64,
    /// Initial step size.
    pub step: f64,
    /// Step shrink factor used while backtracking.
    pub backtrack: f64,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: vec![0.1],
            per_sample: true,
            ridge: 1e-2,
            step: 1e-2,
            backtrack: 0.5,
            tol: 1e-10,
            max_iters: 5000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, ndim: usize) -> Result<()> {
        if self.rho.is_empty() || (self.rho.len() != 1 && self.rho.len() != ndim) {
            return Err(Error::InvalidParameter(format!(
                "solver_cfg.rho needs 1 or {ndim} entries, got {}",
                self.rho.len()
            )));
        }
        if self.rho.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(
                "solver_cfg.rho entries must be finite and nonnegative".into(),
            ));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "solver_cfg.ridge must be finite and nonnegative, got {}",
                self.ridge
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "solver_cfg.backtrack must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if !(self.step > 0.0) || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "solver_cfg.step, tol and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Effective penalty on axis `axis` of a tensor with axis lengths `dims`.
    pub fn rho_for(&self, axis: usize, dims: &[usize]) -> f64 {
        let base = if self.rho.len() == 1 {
            self.rho[0]
        } else {
            self.rho[axis]
        };
        if self.per_sample {
            let rest: usize = dims.iter().product::<usize>() / dims[axis];
            base * rest as f64
        } else {
            base
        }
    }
}

/// Sufficient statistics `S_l = mat_l(R) mat_l(R)^T` of a residual tensor.
#[derive(Debug, Clone)]
pub struct GramFactors {
    pub grams: Vec<DMatrix<f64>>,
}

impl GramFactors {
    pub fn dims(&self) -> Vec<usize> {
        self.grams.iter().map(|g| g.nrows()).collect()
    }

    /// `sum_l tr(S_l Psi_l)`, which equals `r^T Omega r`.
    pub fn trace_with(&self, p: &KSPrecision) -> f64 {
        self.grams
            .iter()
            .zip(p.factors())
            .map(|(s, psi)| s.dot(psi))
            .sum()
    }
}

pub fn gram_factors(residual: &Tensor) -> GramFactors {
    let grams = (0..residual.ndim())
        .map(|axis| {
            let m = matricize(residual, axis).expect("axis in range");
            &m * m.transpose()
        })
        .collect();
    GramFactors { grams }
}

/// Summed Gram factors of several independent residual tensors.
pub fn gram_factors_batch(residuals: &[Tensor]) -> Result<GramFactors> {
    let first = residuals
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty residual batch".into()))?;
    let mut acc = gram_factors(first);
    for r in &residuals[1..] {
        if r.dims() != first.dims() {
            return Err(Error::DimensionMismatch("residual batch dims differ".into()));
        }
        for (a, g) in acc.grams.iter_mut().zip(gram_factors(r).grams) {
            *a += g;
        }
    }
    Ok(acc)
}

/// `d log det(Omega) / d Psi_l`: the axis-`l` partial trace of `Omega^{-1}`.
pub fn partial_trace_inverse(p: &KSPrecision, axis: usize) -> Result<DMatrix<f64>> {
    if axis >= p.ndim() {
        return Err(Error::AxisOutOfRange {
            axis,
            ndim: p.ndim(),
        });
    }
    p.validate()?;
    let inv_spectrum = p.spectrum().map(|v| 1.0 / v);
    let h = inv_spectrum.axis_sums(axis)?;
    let eig = &p.eigen()[axis];
    let mut scaled = eig.vectors.clone();
    for (j, s) in h.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    Ok(scaled * eig.vectors.transpose())
}

/// Sum of absolute off-diagonal entries (both triangles).
pub fn offdiag_l1(m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                s += m[(i, j)].abs();
            }
        }
    }
    s
}

fn soft_threshold_offdiag(m: &mut DMatrix<f64>, t: f64) {
    let d = m.nrows();
    for j in 0..d {
        for i in 0..d {
            if i != j {
                let v = m[(i, j)];
                m[(i, j)] = v.signum() * (v.abs() - t).max(0.0);
            }
        }
    }
}

/// Result of one precision solve.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub precision: KSPrecision,
    /// Final penalized objective `-log det + trace + penalty`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

/// An estimator of Kronecker-sum precision factors from mean-centred data.
pub trait PrecisionSolver: Sync {
    /// Estimates factors for `residual`, optionally using `warm_start`.
    fn estimate(&self, residual: &Tensor, warm_start: &KSPrecision) -> Result<SolverOutcome>;

    /// Penalty added to `-log det + trace` by this solver; zero when unpenalized.
    fn penalty(&self, p: &KSPrecision) -> f64;
}

/// The baseline proximal-gradient solver.
#[derive(Debug, Clone, Default)]
pub struct ProxGradSolver {
    pub cfg: SolverConfig,
}

impl ProxGradSolver {
    pub fn new(cfg: SolverConfig) -> Self {
        Self { cfg }
    }
}

impl PrecisionSolver for ProxGradSolver {
    fn estimate(&self, residual: &Tensor, warm_start: &KSPrecision) -> Result<SolverOutcome> {
        prox_grad_fit(&gram_factors(residual), &self.cfg, warm_start)
    }

    fn penalty(&self, p: &KSPrecision) -> f64 {
        penalty(&self.cfg, p)
    }
}

/// Everything beyond `-log det + r^T Omega r`: the ridge and the l1 terms.
pub fn penalty(cfg: &SolverConfig, p: &KSPrecision) -> f64 {
    let dims = p.dims();
    cfg.ridge * trace_omega(p) + l1_penalty(cfg, p, &dims)
}

fn l1_penalty(cfg: &SolverConfig, p: &KSPrecision, dims: &[usize]) -> f64 {
    p.factors()
        .iter()
        .enumerate()
        .map(|(axis, f)| cfg.rho_for(axis, dims) * offdiag_l1(f))
        .sum()
}

/// `tr(Omega) = sum_l d_{\l} tr(Psi_l)`.
fn trace_omega(p: &KSPrecision) -> f64 {
    let total: usize = p.dims().iter().product();
    p.factors()
        .iter()
        .map(|f| (total / f.nrows()) as f64 * f.trace())
        .sum()
}

/// Grams with the ridge folded in, `S_l + ridge d_{\l} I`.
fn ridged(grams: &GramFactors, ridge: f64) -> GramFactors {
    let total: usize = grams.dims().iter().product();
    let grams = grams
        .grams
        .iter()
        .map(|s| {
            let d = s.nrows();
            s + DMatrix::identity(d, d) * (ridge * (total / d) as f64)
        })
        .collect();
    GramFactors { grams }
}

/// Smooth part `-log det + sum tr(S Psi)`.
fn smooth_objective(grams: &GramFactors, p: &KSPrecision) -> Result<f64> {
    Ok(-ks_logdet(p)? + grams.trace_with(p))
}

fn smooth_gradient(grams: &GramFactors, p: &KSPrecision) -> Result<Vec<DMatrix<f64>>> {
    (0..p.ndim())
        .map(|axis| Ok(&grams.grams[axis] - partial_trace_inverse(p, axis)?))
        .collect()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Proximal-gradient minimization of the penalized Kronecker-sum objective.
pub fn prox_grad_fit(
    grams: &GramFactors,
    cfg: &SolverConfig,
    init: &KSPrecision,
) -> Result<SolverOutcome> {
    let dims = grams.dims();
    cfg.validate(dims.len())?;
    init.check_dims(&dims)?;
    init.validate()?;
    let grams = &ridged(grams, cfg.ridge);

    let mut current = init.clone();
    let mut f_smooth = smooth_objective(grams, &current)?;
    let mut objective = f_smooth + l1_penalty(cfg, &current, &dims);
    let mut grad = smooth_gradient(grams, &current)?;
    let mut step = cfg.step;
    let mut objective_trace = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let (candidate, cand_smooth, delta) = loop {
            if step < 1e-20 {
                return Err(Error::StepUnderflow {
                    iteration: iterations,
                    step,
                });
            }
            let factors: Vec<DMatrix<f64>> = current
                .factors()
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(axis, (psi, g))| {
                    let mut next = psi - g * step;
                    soft_threshold_offdiag(&mut next, step * cfg.rho_for(axis, &dims));
                    (&next + next.transpose()) * 0.5
                })
                .collect();
            let cand = KSPrecision::from_factors_unchecked(factors);
            if !(cand.min_eigen_sum() > PD_FLOOR) {
                step *= cfg.backtrack;
                continue;
            }
            let f_c = smooth_objective(grams, &cand)?;
            let delta: Vec<DMatrix<f64>> = cand
                .factors()
                .iter()
                .zip(current.factors())
                .map(|(a, b)| a - b)
                .collect();
            let model = f_smooth + inner(&grad, &delta) + inner(&delta, &delta) / (2.0 * step);
            if f_c <= model + 1e-13 * f_smooth.abs().max(1.0) {
                break (cand, f_c, delta);
            }
            step *= cfg.backtrack;
        };

        let cand_objective = cand_smooth + l1_penalty(cfg, &candidate, &dims);
        if cand_objective > objective {
            // rounding-level stall at the optimum
            converged = true;
            break;
        }
        let cand_grad = smooth_gradient(grams, &candidate)?;
        let change = crate::mean::relative_change(objective, cand_objective);

        // Barzilai-Borwein proposal for the next step
        let y: Vec<DMatrix<f64>> = cand_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = inner(&delta, &y);
        let ss = inner(&delta, &delta);
        step = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            step * 2.0
        };

        current = candidate;
        f_smooth = cand_smooth;
        objective = cand_objective;
        grad = cand_grad;
        objective_trace.push(objective);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(SolverOutcome {
        precision: current,
        objective,
        iterations,
        converged,
        objective_trace,
    })
}

/// Edges selected by [`threshold_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSelection {
    pub edges: EdgeSet,
    /// Set when fewer than the requested number of off-diagonal pairs exist.
    pub clamped: bool,
}

/// The `k` upper-triangle pairs of largest absolute value. Ties are broken by
/// `(row, col)` in lexicographic order.
pub fn threshold_edges(tilde_factor: &DMatrix<f64>, k: usize) -> EdgeSelection {
    let d = tilde_factor.nrows();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            pairs.push((tilde_factor[(i, j)].abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let clamped = k > pairs.len();
    let edges = EdgeSet::from_pairs(d, pairs.iter().take(k).map(|&(_, i, j)| (i, j)))
        .expect("upper-triangle pairs are valid");
    EdgeSelection { edges, clamped }
}
