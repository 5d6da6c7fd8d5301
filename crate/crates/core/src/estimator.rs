//! Joint estimation: alternate a precision solve on mean-centred data with a
//! full mean-block fit until the penalized NLL settles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mean::{fit_mean_block, init_means, relative_change, MeanBlockConfig};
use crate::params::{nll, to_identifiable_precision, IdentifiablePrecision, KSMean, KSPrecision};
use crate::solver::{PrecisionSolver, ProxGradSolver, SolverConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Relative change of the penalized NLL that ends the outer loop.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub mean_cfg: MeanBlockConfig,
    pub solver_cfg: SolverConfig,
    /// Estimate the mean. Off gives the zero-mean baseline.
    pub center_means: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            max_outer_iters: 200,
            mean_cfg: MeanBlockConfig::default(),
            solver_cfg: SolverConfig::default(),
            center_means: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, ndim: usize) -> Result<()> {
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "outer_tol must be positive, got {}",
                self.outer_tol
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        self.mean_cfg.validate()?;
        self.solver_cfg.validate(ndim)
    }

    /// The zero-mean baseline with otherwise identical settings.
    pub fn centered(&self) -> Self {
        Self {
            center_means: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub precision: IdentifiablePrecision,
    pub mean: KSMean,
    /// Penalized NLL at the start and after every outer iteration.
    pub nll_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    /// Largest NLL increase seen across single mean-block updates; `None`
    /// when no mean block ran.
    pub max_block_increase: Option<f64>,
    /// Total solver iterations over all outer iterations.
    pub solver_iters: usize,
}

impl FitResult {
    pub fn final_nll(&self) -> f64 {
        *self.nll_trace.last().expect("trace holds the starting value")
    }

    /// Largest increase between consecutive outer trace entries.
    pub fn max_trace_increase(&self) -> Option<f64> {
        self.nll_trace.windows(2).map(|w| w[1] - w[0]).reduce(f64::max)
    }
}

/// Starting precision `c/K * I` per axis, with `c = d_all / ||r||^2` so the
/// trace term matches a unit-variance fit.
pub fn default_init_precision(residual: &Tensor) -> KSPrecision {
    let ss = residual.dot(residual);
    let k = residual.ndim() as f64;
    let c = if ss > 0.0 { residual.len() as f64 / ss } else { 1.0 };
    KSPrecision::scaled_identity(residual.dims(), c / k)
}

fn check_data(data: &Tensor) -> Result<()> {
    if let Some(axis) = data.dims().iter().position(|&d| d < 2) {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} has size {}; every axis needs at least 2 entries",
            data.dims()[axis]
        )));
    }
    Ok(())
}

/// Fits with the default solver, mean initialization and precision start.
pub fn fit_noncentral(data: &Tensor, cfg: &FitConfig) -> Result<FitResult> {
    check_data(data)?;
    let solver = ProxGradSolver::new(cfg.solver_cfg.clone());
    let mean = if cfg.center_means {
        init_means(data)
    } else {
        KSMean::zeros(data.dims())
    };
    let init = default_init_precision(&data.sub(&mean.expand())?);
    fit_noncentral_with(&solver, data, cfg, mean, init)
}

fn penalized_nll(
    solver: &dyn PrecisionSolver,
    data: &Tensor,
    p: &KSPrecision,
    mean: &KSMean,
) -> Result<f64> {
    let v = nll(data, p, mean)? + 0.5 * solver.penalty(p);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("penalized NLL evaluated to {v}")));
    }
    Ok(v)
}

/// Fits from the given starting point with any precision solver.
pub fn fit_noncentral_with(
    solver: &dyn PrecisionSolver,
    data: &Tensor,
    cfg: &FitConfig,
    start_mean: KSMean,
    start_precision: KSPrecision,
) -> Result<FitResult> {
    check_data(data)?;
    cfg.validate(data.ndim())?;
    if start_mean.dims() != data.dims() {
        return Err(Error::DimensionMismatch(format!(
            "mean dims {:?} vs data dims {:?}",
            start_mean.dims(),
            data.dims()
        )));
    }
    start_precision.check_dims(data.dims())?;

    let mut mean = start_mean;
    let mut precision = start_precision;
    let mut trace = vec![penalized_nll(solver, data, &precision, &mean)?];
    let mut converged = false;
    let mut outer_iters = 0;
    let mut max_block_increase: Option<f64> = None;
    let mut solver_iters = 0;

    while outer_iters < cfg.max_outer_iters {
        outer_iters += 1;
        let residual = data.sub(&mean.expand())?;
        let outcome = solver
            .estimate(&residual, &precision)
            .map_err(|e| Error::Solver {
                iteration: outer_iters,
                source: Box::new(e),
            })?;
        solver_iters += outcome.iterations;
        precision = outcome.precision;

        if !cfg.center_means {
            trace.push(penalized_nll(solver, data, &precision, &mean)?);
            converged = outcome.converged;
            break;
        }

        let block = fit_mean_block(data, &precision, &mean, &cfg.mean_cfg)?;
        let inc = block.max_increase();
        max_block_increase = Some(max_block_increase.map_or(inc, |m| m.max(inc)));
        mean = block.mean;
        let cur = penalized_nll(solver, data, &precision, &mean)?;
        let prev = *trace.last().expect("non-empty");
        trace.push(cur);
        if relative_change(prev, cur) < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        precision: to_identifiable_precision(&precision),
        mean,
        nll_trace: trace,
        outer_iters,
        converged,
        max_block_increase,
        solver_iters,
    })
}
