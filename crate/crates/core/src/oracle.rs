//! Dense reference computations.
//!
//! Everything here is built from explicit `d_all x d_all` matrices and
//! Kronecker products, without the matrix-free paths in `tensor`. Agreement
//! between the two is the evidence the fast paths are right.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{default_init_precision, fit_noncentral_with, FitConfig};
use crate::mean::{build_a, fit_mean_block, init_means, update_m, update_mu, MeanBlockConfig};
use crate::params::{nll, to_identifiable_mean, KSMean, KSPrecision};
use crate::solver::ProxGradSolver;
use crate::synth::{derive_seed, SynthRng};
use crate::tensor::Tensor;

/// Largest `d_all` the dense path will build.
pub const ORACLE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub seed: u64,
    pub dims: Vec<usize>,
}

impl OracleReport {
    pub fn new(seed: u64, dims: &[usize]) -> Self {
        Self {
            checks: Vec::new(),
            seed,
            dims: dims.to_vec(),
        }
    }

    /// Records a check; it passes when `error < tolerance` (NaN fails).
    pub fn record(&mut self, name: impl Into<String>, error: f64, tolerance: f64) {
        self.checks.push(OracleCheck {
            name: name.into(),
            max_abs_error: error,
            tolerance,
            pass: error < tolerance,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

fn guard(dims: &[usize]) -> Result<usize> {
    let total: usize = dims.iter().product();
    if total > ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            size: total,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(total)
}

/// `I_{<l} (x) M (x) I_{>l}` for a `d_l x d_l` matrix `m`.
pub fn embed_factor(dims: &[usize], axis: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let before: usize = dims[..axis].iter().product();
    let after: usize = dims[axis + 1..].iter().product();
    DMatrix::identity(before, before)
        .kronecker(m)
        .kronecker(&DMatrix::identity(after, after))
}

/// `1_{<l} (x) I_l (x) 1_{>l}`, the `d_all x d_l` map from an axis mean to
/// its expanded contribution.
pub fn selector(dims: &[usize], axis: usize) -> DMatrix<f64> {
    let before: usize = dims[..axis].iter().product();
    let after: usize = dims[axis + 1..].iter().product();
    ones(before)
        .kronecker(&DMatrix::identity(dims[axis], dims[axis]))
        .kronecker(&ones(after))
}

/// Explicit Kronecker sum of the factors.
pub fn dense_omega(factors: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let total = guard(&dims)?;
    let mut omega = DMatrix::zeros(total, total);
    for (axis, f) in factors.iter().enumerate() {
        omega += embed_factor(&dims, axis, f);
    }
    Ok(omega)
}

/// `m 1 + sum_l E_l mu_l` with raw (not necessarily sum-zero) axis means.
pub fn dense_mean(m: f64, mus: &[DVector<f64>]) -> Result<DVector<f64>> {
    let dims: Vec<usize> = mus.iter().map(|v| v.len()).collect();
    let total = guard(&dims)?;
    let mut w = DVector::from_element(total, m);
    for (axis, mu) in mus.iter().enumerate() {
        w += selector(&dims, axis) * mu;
    }
    Ok(w)
}

fn cholesky_logdet(a: &DMatrix<f64>) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigen_sum: a.symmetric_eigenvalues().min(),
    })?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((logdet, chol))
}

/// `-1/2 log det Omega + 1/2 (x - w)^T Omega (x - w)` by Cholesky.
pub fn dense_nll(x: &DVector<f64>, omega: &DMatrix<f64>, mean: &DVector<f64>) -> Result<f64> {
    if omega.nrows() != x.len() || mean.len() != x.len() || !omega.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "omega {}x{}, x {}, mean {}",
            omega.nrows(),
            omega.ncols(),
            x.len(),
            mean.len()
        )));
    }
    let (logdet, _) = cholesky_logdet(omega)?;
    let r = x - mean;
    Ok(-0.5 * logdet + 0.5 * r.dot(&(omega * &r)))
}

/// Solves `[[A, 1], [1^T, 0]] [mu; lambda] = [-b; 0]` by LU.
pub fn dense_qp_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let d = b.len();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, b has {d} entries",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut kkt = DMatrix::zeros(d + 1, d + 1);
    kkt.view_mut((0, 0), (d, d)).copy_from(a);
    for i in 0..d {
        kkt[(i, d)] = 1.0;
        kkt[(d, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(d + 1);
    rhs.rows_mut(0, d).copy_from(&(-b));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular KKT matrix".into()))?;
    Ok(sol.rows(0, d).into_owned())
}

/// `[[Omega, -Omega w], [-w^T Omega, 1/s + w^T Omega w]]`.
pub fn gamma_embed(omega: &DMatrix<f64>, mean: &DVector<f64>, s: f64) -> Result<DMatrix<f64>> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
    }
    let n = mean.len();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "omega {}x{} vs mean {n}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    cholesky_logdet(omega)?;
    let ow = omega * mean;
    let mut g = DMatrix::zeros(n + 1, n + 1);
    g.view_mut((0, 0), (n, n)).copy_from(omega);
    for i in 0..n {
        g[(i, n)] = -ow[i];
        g[(n, i)] = -ow[i];
    }
    g[(n, n)] = 1.0 / s + mean.dot(&ow);
    Ok(g)
}

/// Errors of the two embedding identities at `x`:
/// `log det Gamma = log det Omega - log s` and
/// `[x; 1]^T Gamma [x; 1] = (x - w)^T Omega (x - w) + 1/s`.
pub fn gamma_identity_errors(
    omega: &DMatrix<f64>,
    mean: &DVector<f64>,
    s: f64,
    x: &DVector<f64>,
) -> Result<(f64, f64)> {
    let g = gamma_embed(omega, mean, s)?;
    let (ld_g, _) = cholesky_logdet(&g)?;
    let (ld_o, _) = cholesky_logdet(omega)?;
    let det_err = (ld_g - (ld_o - s.ln())).abs();
    let mut xa = DVector::from_element(x.len() + 1, 1.0);
    xa.rows_mut(0, x.len()).copy_from(x);
    let r = x - mean;
    let lhs = xa.dot(&(&g * &xa));
    let rhs = r.dot(&(omega * &r)) + 1.0 / s;
    Ok((det_err, (lhs - rhs).abs() / rhs.abs().max(1.0)))
}

/// Grid argmin of `1/s + log s` over `[lo, hi]` with spacing `step`.
pub fn s_scan(lo: f64, hi: f64, step: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "s_scan needs 0 < lo < hi and step > 0, got [{lo}, {hi}] step {step}"
        )));
    }
    let n = ((hi - lo) / step).round() as usize;
    let f = |s: f64| 1.0 / s + s.ln();
    let best = (0..=n)
        .map(|k| lo + k as f64 * step)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("grid is non-empty");
    Ok(best)
}

/// Minimizer of a 1-D function that is quadratic near its optimum: repeated
/// Newton steps with central differences of width `h`.
pub fn numeric_min_1d(f: impl Fn(f64) -> f64, x0: f64, h: f64, steps: usize) -> f64 {
    let mut x = x0;
    for _ in 0..steps {
        let (fp, f0, fm) = (f(x + h), f(x), f(x - h));
        let d1 = (fp - fm) / (2.0 * h);
        let d2 = (fp - 2.0 * f0 + fm) / (h * h);
        if !(d2 > 0.0) {
            break;
        }
        x -= d1 / d2;
    }
    x
}

/// Dense NLL as a function of raw mean parameters.
fn dense_nll_at(
    x: &DVector<f64>,
    omega: &DMatrix<f64>,
    m: f64,
    mus: &[DVector<f64>],
) -> Result<f64> {
    dense_nll(x, omega, &dense_mean(m, mus)?)
}

/// Central-difference gradient of the dense NLL in `m` and in each axis mean,
/// restricted to sum-zero perturbations `e_i - 1/d`. Reports the largest
/// component as the `stationarity` check (tolerance 1e-6).
pub fn stationarity_check(data: &Tensor, p: &KSPrecision, mu: &KSMean, h: f64) -> Result<OracleReport> {
    let dims = data.dims().to_vec();
    p.check_dims(&dims)?;
    if mu.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "mean dims {:?} vs data dims {dims:?}",
            mu.dims()
        )));
    }
    let x = DVector::from_column_slice(data.values());
    let omega = dense_omega(p.factors())?;
    let mus = mu.mus().to_vec();
    let m = mu.m();
    let f = |m: f64, mus: &[DVector<f64>]| dense_nll_at(&x, &omega, m, mus);

    let mut worst = ((f(m + h, &mus)? - f(m - h, &mus)?) / (2.0 * h)).abs();
    for axis in 0..dims.len() {
        let d = dims[axis];
        for i in 0..d {
            let mut dir = DVector::from_element(d, -1.0 / d as f64);
            dir[i] += 1.0;
            let mut plus = mus.clone();
            let mut minus = mus.clone();
            plus[axis] += &dir * h;
            minus[axis] -= &dir * h;
            let g = (f(m, &plus)? - f(m, &minus)?) / (2.0 * h);
            worst = worst.max(g.abs());
        }
    }
    let mut report = OracleReport::new(0, &dims);
    report.record("stationarity", worst, 1e-6);
    Ok(report)
}

fn random_sum_zero(d: usize, scale: f64, rng: &mut SynthRng) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let mean = v.mean();
    v.add_scalar(-mean)
}

/// Runs the estimator from `n_starts` random mean initializations, all with
/// the same starting precision, and compares the end points.
///
/// Checks: `multistart_nll_spread` (1e-6), `multistart_param_distance`
/// (1e-4, identifiable precision and mean) and `multistart_converged`
/// (count of runs that hit an iteration cap; must be 0).
pub fn multistart_consistency(
    data: &Tensor,
    cfg: &FitConfig,
    n_starts: usize,
    seed: u64,
) -> Result<OracleReport> {
    let dims = data.dims().to_vec();
    if data.len() > 100 {
        return Err(Error::InvalidParameter(format!(
            "multistart is meant for d_all <= 100, got {}",
            data.len()
        )));
    }
    if n_starts < 2 {
        return Err(Error::InvalidParameter("multistart needs at least 2 starts".into()));
    }
    let solver = ProxGradSolver::new(cfg.solver_cfg.clone());
    let anchor = init_means(data);
    let precision0 = default_init_precision(&data.sub(&anchor.expand())?);
    let scale = (data.dot(data) / data.len() as f64).sqrt().max(1.0);
    let mut rng = SynthRng::seed_from_u64(derive_seed(seed, 0));

    let mut fits = Vec::with_capacity(n_starts);
    for _ in 0..n_starts {
        let m0 = scale * rng.sample::<f64, _>(StandardNormal);
        let mus: Vec<_> = dims.iter().map(|&d| random_sum_zero(d, scale, &mut rng)).collect();
        let start = KSMean::new(m0, mus)?;
        fits.push(fit_noncentral_with(&solver, data, cfg, start, precision0.clone())?);
    }
    let nlls: Vec<f64> = fits.iter().map(|f| f.final_nll()).collect();
    let spread = nlls.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - nlls.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut distance: f64 = 0.0;
    for f in &fits[1..] {
        distance = distance
            .max(f.precision.max_abs_diff(&fits[0].precision))
            .max(f.mean.max_abs_diff(&fits[0].mean));
    }
    let stuck = fits.iter().filter(|f| !f.converged).count();

    let mut report = OracleReport::new(seed, &dims);
    report.record("multistart_nll_spread", spread, 1e-6);
    report.record("multistart_param_distance", distance, 1e-4);
    report.record("multistart_converged", stuck as f64, 0.5);
    Ok(report)
}

/// Random symmetric PD factor `B B^T / d + 0.5 I`.
pub fn random_pd_factor(d: usize, rng: &mut SynthRng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

pub fn random_precision(dims: &[usize], rng: &mut SynthRng) -> KSPrecision {
    KSPrecision::new(dims.iter().map(|&d| random_pd_factor(d, rng)).collect())
        .expect("PD factors give a PD sum")
}

pub fn random_mean(dims: &[usize], rng: &mut SynthRng) -> KSMean {
    let raw: Vec<_> = dims
        .iter()
        .map(|&d| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    to_identifiable_mean(&raw).expect("non-empty factors")
}

pub fn random_tensor(dims: &[usize], rng: &mut SynthRng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(
        dims.to_vec(),
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
    )
    .expect("length matches dims")
}

/// The coordinate-update checks on one random instance: the fast NLL,
/// `update_m` and every axis' `update_mu` against their dense counterparts.
pub fn coordinate_checks(dims: &[usize], seed: u64) -> Result<OracleReport> {
    let mut rng = SynthRng::seed_from_u64(seed);
    let p = random_precision(dims, &mut rng);
    let mu = random_mean(dims, &mut rng);
    let data = random_tensor(dims, &mut rng);
    let x = DVector::from_column_slice(data.values());
    let omega = dense_omega(p.factors())?;
    let mut report = OracleReport::new(seed, dims);

    let fast = nll(&data, &p, &mu)?;
    let dense = dense_nll_at(&x, &omega, mu.m(), mu.mus())?;
    report.record("nll_dense_vs_fast", (fast - dense).abs() / dense.abs().max(1.0), 1e-10);

    let m_fast = update_m(&data, mu.mus(), &p)?;
    let m_dense = numeric_min_1d(
        |m| dense_nll_at(&x, &omega, m, mu.mus()).unwrap_or(f64::NAN),
        mu.m(),
        1.0,
        3,
    );
    report.record("update_m_vs_numeric", (m_fast - m_dense).abs(), 1e-8);

    let mut worst_qp: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for axis in 0..dims.len() {
        let e = selector(dims, axis);
        let a_dense = e.transpose() * &omega * &e;
        worst_a = worst_a.max((build_a(axis, &p)? - &a_dense).amax());
        let mut others = mu.mus().to_vec();
        others[axis] = DVector::zeros(dims[axis]);
        let r = dense_mean(mu.m(), &others)? - &x;
        let b_dense = e.transpose() * (&omega * r);
        let dense = dense_qp_solve(&a_dense, &b_dense)?;
        let fast = update_mu(axis, &data, mu.m(), &mu, &p)?;
        worst_qp = worst_qp.max((fast - dense).amax());
    }
    report.record("a_matrix_dense_vs_fast", worst_a, 1e-8);
    report.record("qp_closed_form_vs_kkt", worst_qp, 1e-8);
    Ok(report)
}

/// Both embedding identities at `s = 1` and `s = 2` on one random instance.
pub fn gamma_checks(dims: &[usize], seed: u64) -> Result<OracleReport> {
    let mut rng = SynthRng::seed_from_u64(seed);
    let p = random_precision(dims, &mut rng);
    let mu = random_mean(dims, &mut rng);
    let x = DVector::from_column_slice(random_tensor(dims, &mut rng).values());
    let omega = dense_omega(p.factors())?;
    let w = dense_mean(mu.m(), mu.mus())?;
    let mut report = OracleReport::new(seed, dims);
    let mut det: f64 = 0.0;
    let mut quad: f64 = 0.0;
    for s in [1.0, 2.0, rng.random_range(0.1..10.0)] {
        let (d, q) = gamma_identity_errors(&omega, &w, s, &x)?;
        det = det.max(d);
        quad = quad.max(q);
    }
    report.record("gamma_logdet_identity", det, 1e-10);
    report.record("gamma_quadratic_identity", quad, 1e-10);
    Ok(report)
}

/// Mean-block output on one random instance, certified by finite differences.
pub fn mean_block_stationarity(dims: &[usize], seed: u64, cfg: &MeanBlockConfig) -> Result<OracleReport> {
    let mut rng = SynthRng::seed_from_u64(seed);
    let p = random_precision(dims, &mut rng);
    let data = random_tensor(dims, &mut rng).add(&random_mean(dims, &mut rng).expand())?;
    let fit = fit_mean_block(&data, &p, &KSMean::zeros(dims), cfg)?;
    let mut report = stationarity_check(&data, &p, &fit.mean, 1e-5)?;
    report.seed = seed;
    report.record("mean_block_max_increase", fit.max_increase(), 1e-10);
    Ok(report)
}

/// Every dense check on instances of shape `dims`, seeded from `seed`.
pub fn run_oracle_suite(dims: &[usize], seed: u64) -> Result<OracleReport> {
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidParameter(format!(
            "oracle dims need at least one axis, each of length >= 2, got {dims:?}"
        )));
    }
    guard(dims)?;
    let mut report = OracleReport::new(seed, dims);
    let parts = [
        coordinate_checks(dims, derive_seed(seed, 1))?,
        gamma_checks(dims, derive_seed(seed, 2))?,
        mean_block_stationarity(dims, derive_seed(seed, 3), &stationarity_mean_cfg())?,
    ];
    for part in parts {
        report.checks.extend(part.checks);
    }
    let s = s_scan(0.1, 10.0, 1e-3)?;
    report.record("s_scan_argmin", (s - 1.0).abs(), 1e-3);
    let total: usize = dims.iter().product();
    if total <= 100 {
        let mut rng = SynthRng::seed_from_u64(derive_seed(seed, 4));
        let p = random_precision(dims, &mut rng);
        let mean = random_mean(dims, &mut rng);
        let data = crate::synth::sample_ks_normal(&p, &mean, &mut rng)?;
        let ms = multistart_consistency(&data, &multistart_fit_cfg(), 10, derive_seed(seed, 5))?;
        report.checks.extend(ms.checks);
    }
    Ok(report)
}

/// Mean-block settings tight enough for the finite-difference certificate.
pub fn stationarity_mean_cfg() -> MeanBlockConfig {
    MeanBlockConfig {
        tol: 1e-15,
        max_inner_iters: 10_000,
    }
}

/// Estimator settings for multistart probes: tight tolerances so distinct
/// starts can be compared at 1e-6.
pub fn multistart_fit_cfg() -> FitConfig {
    let mut cfg = FitConfig {
        outer_tol: 1e-14,
        max_outer_iters: 5000,
        mean_cfg: stationarity_mean_cfg(),
        ..FitConfig::default()
    };
    cfg.solver_cfg.tol = 1e-15;
    cfg.solver_cfg.max_iters = 100_000;
    cfg
}
