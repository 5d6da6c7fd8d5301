//! Parameter containers for the noncentral Kronecker-sum model.
//!
//! The precision is `Omega = sum_l I (x) Psi_l (x) I` and the mean is
//! `omega = m * 1 + sum_l 1 (x) mu_l (x) 1`. Both decompositions have shift
//! ambiguities; [`to_identifiable_precision`] and [`to_identifiable_mean`] map
//! them to the trace-zero / sum-zero forms.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ks_matvec, ks_mean_tensor, Tensor};

/// Symmetry tolerance for precision factors, relative to the factor's scale.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue sum for `Omega` to count as positive definite.
pub const PD_FLOOR: f64 = 1e-12;
/// Sum-zero tolerance for identifiable mean factors, relative to their scale.
pub const SUM_ZERO_TOL: f64 = 1e-10;

/// Eigendecomposition `V diag(values) V^T` of one factor.
#[derive(Debug, Clone)]
pub struct FactorEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl FactorEigen {
    pub fn of(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    /// `V diag(f(values)) V^T`.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let mut vs = self.vectors.clone();
        for (j, s) in scaled.iter().enumerate() {
            vs.column_mut(j).scale_mut(*s);
        }
        vs * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply_spectral(|v| v)
    }
}

/// Kronecker-sum precision factors `{Psi_l}` with a lazily filled eigencache.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PrecisionWire", into = "PrecisionWire")]
pub struct KSPrecision {
    factors: Vec<DMatrix<f64>>,
    eigen: OnceLock<Vec<FactorEigen>>,
}

impl PartialEq for KSPrecision {
    fn eq(&self, other: &Self) -> bool {
        self.factors == other.factors
    }
}

impl KSPrecision {
    /// Checks that every factor is square and symmetric. Definiteness of the
    /// Kronecker sum is checked separately by [`KSPrecision::validate`].
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::DimensionMismatch("no precision factors".into()));
        }
        for (axis, f) in factors.iter().enumerate() {
            if f.nrows() != f.ncols() {
                return Err(Error::NotSquare {
                    axis,
                    rows: f.nrows(),
                    cols: f.ncols(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("precision factor {axis}")));
            }
            let scale = f.amax().max(1.0);
            let asymmetry = (f - f.transpose()).amax();
            if asymmetry > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { axis, asymmetry });
            }
        }
        Ok(Self::from_factors_unchecked(factors))
    }

    pub(crate) fn from_factors_unchecked(factors: Vec<DMatrix<f64>>) -> Self {
        Self {
            factors,
            eigen: OnceLock::new(),
        }
    }

    /// `Psi_l = c * I` on every axis.
    pub fn scaled_identity(dims: &[usize], c: f64) -> Self {
        Self::from_factors_unchecked(dims.iter().map(|&d| DMatrix::identity(d, d) * c).collect())
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<DMatrix<f64>> {
        self.factors
    }

    pub fn factor(&self, axis: usize) -> &DMatrix<f64> {
        &self.factors[axis]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn ndim(&self) -> usize {
        self.factors.len()
    }

    /// Per-factor eigendecompositions, computed on first use.
    pub fn eigen(&self) -> &[FactorEigen] {
        self.eigen
            .get_or_init(|| self.factors.iter().map(FactorEigen::of).collect())
    }

    /// All sums of per-factor eigenvalues, one per axis, laid out as a tensor
    /// indexed by the eigen-indices.
    pub fn spectrum(&self) -> Tensor {
        let values: Vec<DVector<f64>> = self.eigen().iter().map(|e| e.values.clone()).collect();
        ks_mean_tensor(0.0, &values).expect("factors are non-empty")
    }

    pub fn min_eigen_sum(&self) -> f64 {
        self.eigen().iter().map(|e| e.values.min()).sum()
    }

    /// Fails unless every eigenvalue sum exceeds [`PD_FLOOR`].
    pub fn validate(&self) -> Result<()> {
        let min_eigen_sum = self.min_eigen_sum();
        if min_eigen_sum > PD_FLOOR {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite { min_eigen_sum })
        }
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "precision dims {:?} vs data dims {dims:?}",
                self.dims()
            )));
        }
        Ok(())
    }

    /// `theta_l = 1^T Psi_l 1` for every axis.
    pub fn thetas(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.sum()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PrecisionWire {
    dims: Vec<usize>,
    factors: Vec<Vec<f64>>,
}

impl From<KSPrecision> for PrecisionWire {
    fn from(p: KSPrecision) -> Self {
        Self {
            dims: p.dims(),
            factors: p.factors.iter().map(row_major).collect(),
        }
    }
}

impl TryFrom<PrecisionWire> for KSPrecision {
    type Error = Error;

    fn try_from(w: PrecisionWire) -> Result<Self> {
        let factors = from_row_major_set(&w.dims, &w.factors)?;
        KSPrecision::new(factors)
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major_set(dims: &[usize], flats: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    if dims.len() != flats.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} dims but {} factors",
            dims.len(),
            flats.len()
        )));
    }
    dims.iter()
        .zip(flats)
        .map(|(&d, flat)| {
            if flat.len() != d * d {
                Err(Error::DimensionMismatch(format!(
                    "factor with {} entries for axis length {d}",
                    flat.len()
                )))
            } else {
                Ok(DMatrix::from_row_slice(d, d, flat))
            }
        })
        .collect()
}

/// Identifiable mean `m * 1 + sum_l 1 (x) mu_l (x) 1` with `1^T mu_l = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeanWire", into = "MeanWire")]
pub struct KSMean {
    pub(crate) m: f64,
    pub(crate) mus: Vec<DVector<f64>>,
}

impl KSMean {
    pub fn new(m: f64, mus: Vec<DVector<f64>>) -> Result<Self> {
        if mus.is_empty() || mus.iter().any(|v| v.is_empty()) {
            return Err(Error::DimensionMismatch("empty mean factor".into()));
        }
        if !m.is_finite() || mus.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("mean parameters".into()));
        }
        for (axis, mu) in mus.iter().enumerate() {
            let scale = mu.amax().max(1.0) * mu.len() as f64;
            if mu.sum().abs() > SUM_ZERO_TOL * scale {
                return Err(Error::InvalidParameter(format!(
                    "mean factor {axis} sums to {:e}, expected 0",
                    mu.sum()
                )));
            }
        }
        Ok(Self { m, mus })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            m: 0.0,
            mus: dims.iter().map(|&d| DVector::zeros(d)).collect(),
        }
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn mus(&self) -> &[DVector<f64>] {
        &self.mus
    }

    pub fn mu(&self, axis: usize) -> &DVector<f64> {
        &self.mus[axis]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.mus.iter().map(|v| v.len()).collect()
    }

    /// The expanded mean `omega` as a tensor.
    pub fn expand(&self) -> Tensor {
        ks_mean_tensor(self.m, &self.mus).expect("mean factors are non-empty")
    }

    /// Largest absolute difference over `m` and all factor entries.
    pub fn max_abs_diff(&self, other: &KSMean) -> f64 {
        let mut d = (self.m - other.m).abs();
        for (a, b) in self.mus.iter().zip(&other.mus) {
            d = d.max((a - b).amax());
        }
        d
    }
}

#[derive(Serialize, Deserialize)]
struct MeanWire {
    dims: Vec<usize>,
    m: f64,
    mus: Vec<Vec<f64>>,
}

impl From<KSMean> for MeanWire {
    fn from(mu: KSMean) -> Self {
        Self {
            dims: mu.dims(),
            m: mu.m,
            mus: mu.mus.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<MeanWire> for KSMean {
    type Error = Error;

    fn try_from(w: MeanWire) -> Result<Self> {
        let lens: Vec<usize> = w.mus.iter().map(|v| v.len()).collect();
        if lens != w.dims {
            return Err(Error::DimensionMismatch(format!(
                "mean factor lengths {lens:?} vs dims {:?}",
                w.dims
            )));
        }
        KSMean::new(w.m, w.mus.into_iter().map(DVector::from_vec).collect())
    }
}

/// `tau * I + sum_l I (x) tilde_Psi_l (x) I` with trace-zero factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IdentifiableWire", into = "IdentifiableWire")]
pub struct IdentifiablePrecision {
    pub tau: f64,
    pub tilde_factors: Vec<DMatrix<f64>>,
}

impl IdentifiablePrecision {
    pub fn dims(&self) -> Vec<usize> {
        self.tilde_factors.iter().map(|f| f.nrows()).collect()
    }

    /// Factors with `tau` split evenly across axes.
    pub fn to_precision(&self) -> KSPrecision {
        let share = self.tau / self.tilde_factors.len() as f64;
        KSPrecision::from_factors_unchecked(
            self.tilde_factors
                .iter()
                .map(|f| f + DMatrix::identity(f.nrows(), f.ncols()) * share)
                .collect(),
        )
    }

    /// Largest absolute difference over `tau` and all trace-zero factor entries.
    pub fn max_abs_diff(&self, other: &IdentifiablePrecision) -> f64 {
        let mut d = (self.tau - other.tau).abs();
        for (a, b) in self.tilde_factors.iter().zip(&other.tilde_factors) {
            d = d.max((a - b).amax());
        }
        d
    }
}

#[derive(Serialize, Deserialize)]
struct IdentifiableWire {
    dims: Vec<usize>,
    tau: f64,
    tilde_factors: Vec<Vec<f64>>,
}

impl From<IdentifiablePrecision> for IdentifiableWire {
    fn from(p: IdentifiablePrecision) -> Self {
        Self {
            dims: p.dims(),
            tau: p.tau,
            tilde_factors: p.tilde_factors.iter().map(row_major).collect(),
        }
    }
}

impl TryFrom<IdentifiableWire> for IdentifiablePrecision {
    type Error = Error;

    fn try_from(w: IdentifiableWire) -> Result<Self> {
        Ok(IdentifiablePrecision {
            tau: w.tau,
            tilde_factors: from_row_major_set(&w.dims, &w.tilde_factors)?,
        })
    }
}

/// Moves each factor's mean diagonal into `tau`.
pub fn to_identifiable_precision(p: &KSPrecision) -> IdentifiablePrecision {
    let mut tau = 0.0;
    let tilde_factors = p
        .factors()
        .iter()
        .map(|f| {
            let d = f.nrows();
            let shift = f.trace() / d as f64;
            tau += shift;
            f - DMatrix::identity(d, d) * shift
        })
        .collect();
    IdentifiablePrecision { tau, tilde_factors }
}

/// Moves each factor's mean into the grand mean `m`.
pub fn to_identifiable_mean(raw: &[DVector<f64>]) -> Result<KSMean> {
    to_identifiable_mean_with_offset(0.0, raw)
}

pub(crate) fn to_identifiable_mean_with_offset(m0: f64, raw: &[DVector<f64>]) -> Result<KSMean> {
    if raw.is_empty() || raw.iter().any(|v| v.is_empty()) {
        return Err(Error::DimensionMismatch("empty mean factor".into()));
    }
    let mut m = m0;
    let mus = raw
        .iter()
        .map(|mu| {
            let mean = mu.mean();
            m += mean;
            mu.map(|v| v - mean)
        })
        .collect();
    Ok(KSMean { m, mus })
}

/// `log det Omega` from the per-factor spectra.
pub fn ks_logdet(p: &KSPrecision) -> Result<f64> {
    p.validate()?;
    Ok(p.spectrum().values().iter().map(|v| v.ln()).sum())
}

/// `r^T Omega r` for a residual tensor.
pub fn quadratic_form(p: &KSPrecision, residual: &Tensor) -> Result<f64> {
    Ok(residual.dot(&ks_matvec(p.factors(), residual)?))
}

/// Negative log-likelihood up to the `2 pi` constant:
/// `-1/2 log det Omega + 1/2 (x - omega)^T Omega (x - omega)`.
pub fn nll(x: &Tensor, p: &KSPrecision, mu: &KSMean) -> Result<f64> {
    p.check_dims(x.dims())?;
    if mu.dims() != x.dims() {
        return Err(Error::DimensionMismatch(format!(
            "mean dims {:?} vs data dims {:?}",
            mu.dims(),
            x.dims()
        )));
    }
    let logdet = ks_logdet(p)?;
    let r = x.sub(&mu.expand())?;
    Ok(-0.5 * logdet + 0.5 * quadratic_form(p, &r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense_ks;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn random_pd_factors(dims: &[usize], rng: &mut ChaCha8Rng) -> KSPrecision {
        let factors = dims
            .iter()
            .map(|&d| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                &a * a.transpose() + DMatrix::identity(d, d) * 0.3
            })
            .collect();
        KSPrecision::new(factors).unwrap()
    }

    fn dense_logdet(m: &DMatrix<f64>) -> f64 {
        let chol = m.clone().cholesky().unwrap();
        2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    #[test]
    fn rejects_bad_factors() {
        let ns = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            KSPrecision::new(vec![ns]),
            Err(Error::NotSymmetric { axis: 0, .. })
        ));
        assert!(matches!(
            KSPrecision::new(vec![DMatrix::zeros(2, 3)]),
            Err(Error::NotSquare { .. })
        ));
        let indefinite = KSPrecision::new(vec![diag(&[-1.0, 1.0]), diag(&[0.5, 2.0])]).unwrap();
        assert!(matches!(
            indefinite.validate(),
            Err(Error::NotPositiveDefinite { .. })
        ));
        // individually indefinite factors with a positive Kronecker sum are fine
        let ok = KSPrecision::new(vec![diag(&[-1.0, 1.0]), diag(&[1.5, 2.0])]).unwrap();
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn eigencache_reconstructs_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_pd_factors(&[3, 4], &mut rng);
        for (e, f) in p.eigen().iter().zip(p.factors()) {
            let err = (e.reconstruct() - f).norm() / f.norm();
            assert!(err < 1e-8);
        }
    }

    #[test]
    fn identifiable_precision_examples() {
        let p = KSPrecision::scaled_identity(&[2, 2], 1.0);
        let id = to_identifiable_precision(&p);
        assert_eq!(id.tau, 2.0);
        assert!(id.tilde_factors.iter().all(|f| f.amax() == 0.0));

        let p = KSPrecision::new(vec![diag(&[1.0, 3.0]), DMatrix::identity(2, 2)]).unwrap();
        let id = to_identifiable_precision(&p);
        assert_eq!(id.tau, 3.0);
        assert_eq!(id.tilde_factors[0], diag(&[-1.0, 1.0]));
        assert_eq!(id.tilde_factors[1], DMatrix::zeros(2, 2));
    }

    #[test]
    fn identifiable_precision_preserves_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_pd_factors(&[2, 3, 2], &mut rng);
        let id = to_identifiable_precision(&p);
        for f in &id.tilde_factors {
            assert!(f.trace().abs() < 1e-10);
        }
        let rebuilt = id.to_precision();
        let a = dense_ks(p.factors()).unwrap();
        let b = dense_ks(rebuilt.factors()).unwrap();
        assert!((a - b).amax() < 1e-12);
        // idempotent
        let again = to_identifiable_precision(&rebuilt);
        assert!(again.max_abs_diff(&id) < 1e-12);
    }

    #[test]
    fn identifiable_mean_examples() {
        let raw = vec![DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![2.0, 2.0])];
        let mu = to_identifiable_mean(&raw).unwrap();
        assert_eq!(mu.m(), 3.0);
        assert!(mu.mus().iter().all(|v| v.amax() == 0.0));

        let raw = vec![DVector::from_vec(vec![0.0, 2.0]), DVector::zeros(2)];
        let mu = to_identifiable_mean(&raw).unwrap();
        assert_eq!(mu.m(), 1.0);
        assert_eq!(mu.mu(0).as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn identifiable_mean_preserves_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<_> = [3, 2, 4]
            .iter()
            .map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let before = ks_mean_tensor(0.0, &raw).unwrap();
        let mu = to_identifiable_mean(&raw).unwrap();
        let after = mu.expand();
        for (a, b) in before.values().iter().zip(after.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(KSMean::new(mu.m(), mu.mus().to_vec()).is_ok());
    }

    #[test]
    fn logdet_examples() {
        let p = KSPrecision::scaled_identity(&[2, 2], 1.0);
        assert!((ks_logdet(&p).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-14);
        let p = KSPrecision::new(vec![diag(&[1.0, 2.0]), diag(&[3.0, 4.0])]).unwrap();
        let expected = (4.0f64 * 5.0 * 5.0 * 6.0).ln();
        assert!((ks_logdet(&p).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn logdet_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for dims in [vec![2, 3], vec![4, 4, 4], vec![3, 2, 2]] {
            let p = random_pd_factors(&dims, &mut rng);
            let dense = dense_logdet(&dense_ks(p.factors()).unwrap());
            assert!((ks_logdet(&p).unwrap() - dense).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_examples() {
        let dims = [2, 2];
        let mu = KSMean::new(
            0.7,
            vec![DVector::from_vec(vec![0.5, -0.5]), DVector::from_vec(vec![-1.0, 1.0])],
        )
        .unwrap();
        let x = mu.expand();
        let half = KSPrecision::scaled_identity(&dims, 0.5);
        assert!(nll(&x, &half, &mu).unwrap().abs() < 1e-14);
        let id = KSPrecision::scaled_identity(&dims, 1.0);
        assert!((nll(&x, &id, &mu).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn nll_matches_dense_and_ignores_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = [2, 3];
        let p = random_pd_factors(&dims, &mut rng);
        let raw: Vec<_> = dims
            .iter()
            .map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let mu = to_identifiable_mean(&raw).unwrap();
        let x = Tensor::new(dims.to_vec(), (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap();
        let omega = dense_ks(p.factors()).unwrap();
        let r = DVector::from_column_slice(x.sub(&mu.expand()).unwrap().values());
        let dense = -0.5 * dense_logdet(&omega) + 0.5 * (r.transpose() * &omega * &r)[(0, 0)];
        let fast = nll(&x, &p, &mu).unwrap();
        assert!((fast - dense).abs() < 1e-10);

        let shifted = KSPrecision::new(vec![
            p.factor(0) + DMatrix::identity(2, 2) * 0.4,
            p.factor(1) - DMatrix::identity(3, 3) * 0.4,
        ])
        .unwrap();
        assert!((nll(&x, &shifted, &mu).unwrap() - fast).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_pd_factors(&[2, 3], &mut rng);
        let s = serde_json::to_string(&p).unwrap();
        let back: KSPrecision = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let mu = KSMean::zeros(&[2, 3]);
        let back: KSMean = serde_json::from_str(&serde_json::to_string(&mu).unwrap()).unwrap();
        assert_eq!(back, mu);
        let bad = r#"{"dims":[2],"m":0.0,"mus":[[1.0,1.0]]}"#;
        assert!(serde_json::from_str::<KSMean>(bad).is_err());
    }
}
