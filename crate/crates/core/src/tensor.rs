//! Dense tensors and matrix-free Kronecker-sum algebra.
//!
//! Tensors are stored row-major with the first axis varying slowest, so the
//! natural vectorization of a tensor is its flat storage. Every Kronecker-sum
//! operation here works through mode multiplications; the only routine that
//! materializes a `d_all x d_all` matrix is [`dense_ks`], which is guarded by a
//! size limit and exists for verification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard for [`dense_ks`].
pub const DENSE_LIMIT: usize = 4096;

/// A dense K-axis real array in row-major (first-axis-slowest) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::DimensionMismatch(format!(
                "axis lengths must be positive, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {dims:?} (expected {len})",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {pos}")));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            values: vec![value; len],
        }
    }

    /// Builds a two-axis tensor from a matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut values = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                values.push(m[(i, j)]);
            }
        }
        Self {
            dims: vec![m.nrows(), m.ncols()],
            values,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The flat row-major values, which coincide with `vec` in natural axis order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.ndim() {
            Err(Error::AxisOutOfRange {
                axis,
                ndim: self.ndim(),
            })
        } else {
            Ok(())
        }
    }

    /// Product of axis lengths before `axis`, the length of `axis`, and the
    /// product after it.
    pub(crate) fn split(&self, axis: usize) -> (usize, usize, usize) {
        let outer = self.dims[..axis].iter().product();
        let inner = self.dims[axis + 1..].iter().product();
        (outer, self.dims[axis], inner)
    }

    /// Product of all axis lengths except `axis`.
    pub fn complement_len(&self, axis: usize) -> usize {
        self.len() / self.dims[axis]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor shapes {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Sums over every axis except `axis`; equals `matricize(t, axis) * 1`.
    pub fn axis_sums(&self, axis: usize) -> Result<DVector<f64>> {
        self.check_axis(axis)?;
        let (outer, d, inner) = self.split(axis);
        let mut sums = DVector::zeros(d);
        for o in 0..outer {
            for i in 0..d {
                let base = (o * d + i) * inner;
                sums[i] += self.values[base..base + inner].iter().sum::<f64>();
            }
        }
        Ok(sums)
    }

    /// Reorders axes so that output axis `k` is input axis `perm.order()[k]`.
    pub fn permute(&self, perm: &AxisPermutation) -> Result<Tensor> {
        if perm.len() != self.ndim() {
            return Err(Error::DimensionMismatch(format!(
                "permutation of {} axes applied to a {}-axis tensor",
                perm.len(),
                self.ndim()
            )));
        }
        let order = perm.order();
        let new_dims: Vec<usize> = order.iter().map(|&a| self.dims[a]).collect();
        let strides = row_major_strides(&self.dims);
        let src_strides: Vec<usize> = order.iter().map(|&a| strides[a]).collect();
        let mut values = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; new_dims.len()];
        let mut offset = 0usize;
        for _ in 0..self.len() {
            values.push(self.values[offset]);
            // odometer increment over the permuted index
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                offset += src_strides[k];
                if idx[k] < new_dims[k] {
                    break;
                }
                offset -= src_strides[k] * idx[k];
                idx[k] = 0;
            }
        }
        Ok(Tensor {
            dims: new_dims,
            values,
        })
    }
}

fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

/// A permutation of axis indices `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisPermutation {
    order: Vec<usize>,
}

impl AxisPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &a in &order {
            if a >= order.len() || seen[a] {
                return Err(Error::InvalidParameter(format!(
                    "{order:?} is not a permutation"
                )));
            }
            seen[a] = true;
        }
        Ok(Self { order })
    }

    /// Moves `axis` to the front, keeping the others in their original order.
    pub fn axis_first(ndim: usize, axis: usize) -> Result<Self> {
        if axis >= ndim {
            return Err(Error::AxisOutOfRange { axis, ndim });
        }
        let mut order = Vec::with_capacity(ndim);
        order.push(axis);
        order.extend((0..ndim).filter(|&a| a != axis));
        Ok(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Vectorization of `t` as if `axis` were the first axis.
pub fn vec_axis_first(t: &Tensor, axis: usize) -> Result<Vec<f64>> {
    t.check_axis(axis)?;
    let perm = AxisPermutation::axis_first(t.ndim(), axis)?;
    Ok(t.permute(&perm)?.into_values())
}

/// The `axis`-matricization: a `d_axis x d_rest` matrix whose row `i` is the
/// slice at index `i` along `axis`, flattened row-major.
pub fn matricize(t: &Tensor, axis: usize) -> Result<DMatrix<f64>> {
    t.check_axis(axis)?;
    let (outer, d, inner) = t.split(axis);
    let cols = outer * inner;
    let mut m = DMatrix::zeros(d, cols);
    for o in 0..outer {
        for i in 0..d {
            let base = (o * d + i) * inner;
            for r in 0..inner {
                m[(i, o * inner + r)] = t.values[base + r];
            }
        }
    }
    Ok(m)
}

/// Multiplies `t` along `axis` by `m` (of shape `d' x d_axis`).
pub fn mode_multiply(t: &Tensor, axis: usize, m: &DMatrix<f64>) -> Result<Tensor> {
    t.check_axis(axis)?;
    let (outer, d, inner) = t.split(axis);
    if m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "mode-{axis} multiply by {}x{} matrix, axis length {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d_out = m.nrows();
    let mut dims = t.dims.clone();
    dims[axis] = d_out;
    let mut out = vec![0.0; outer * d_out * inner];
    mode_multiply_into(&t.values, outer, d, inner, m, &mut out, false);
    Ok(Tensor { dims, values: out })
}

/// `out[o, i', r] (+)= sum_i m[i', i] * src[o, i, r]`.
fn mode_multiply_into(
    src: &[f64],
    outer: usize,
    d: usize,
    inner: usize,
    m: &DMatrix<f64>,
    out: &mut [f64],
    accumulate: bool,
) {
    let d_out = m.nrows();
    if !accumulate {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    for o in 0..outer {
        for ip in 0..d_out {
            let dst = &mut out[(o * d_out + ip) * inner..(o * d_out + ip + 1) * inner];
            for i in 0..d {
                let w = m[(ip, i)];
                if w == 0.0 {
                    continue;
                }
                let s = &src[(o * d + i) * inner..(o * d + i + 1) * inner];
                for (a, b) in dst.iter_mut().zip(s) {
                    *a += w * b;
                }
            }
        }
    }
}

fn check_factors(factors: &[DMatrix<f64>], dims: &[usize]) -> Result<()> {
    if factors.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for a {}-axis tensor",
            factors.len(),
            dims.len()
        )));
    }
    for (axis, (f, &d)) in factors.iter().zip(dims).enumerate() {
        if f.nrows() != f.ncols() {
            return Err(Error::NotSquare {
                axis,
                rows: f.nrows(),
                cols: f.ncols(),
            });
        }
        if f.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "factor {axis} is {}x{}, axis length {d}",
                f.nrows(),
                f.ncols()
            )));
        }
    }
    Ok(())
}

/// Applies `sum_l I (x) factors[l] (x) I` to `t` without forming it.
pub fn ks_matvec(factors: &[DMatrix<f64>], t: &Tensor) -> Result<Tensor> {
    check_factors(factors, &t.dims)?;
    let mut out = vec![0.0; t.len()];
    for (axis, f) in factors.iter().enumerate() {
        let (outer, d, inner) = t.split(axis);
        mode_multiply_into(&t.values, outer, d, inner, f, &mut out, true);
    }
    Ok(Tensor {
        dims: t.dims.clone(),
        values: out,
    })
}

/// Expands `m * 1 + sum_l 1 (x) mus[l] (x) 1` into a tensor with axis lengths
/// given by the lengths of `mus`.
pub fn ks_mean_tensor(m: f64, mus: &[DVector<f64>]) -> Result<Tensor> {
    let dims: Vec<usize> = mus.iter().map(|v| v.len()).collect();
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!(
            "mean factors must be non-empty, got lengths {dims:?}"
        )));
    }
    let mut t = Tensor::filled(&dims, m);
    for (axis, mu) in mus.iter().enumerate() {
        let (outer, d, inner) = t.split(axis);
        for o in 0..outer {
            for i in 0..d {
                let base = (o * d + i) * inner;
                for v in &mut t.values[base..base + inner] {
                    *v += mu[i];
                }
            }
        }
    }
    Ok(t)
}

/// The expanded mean vector `omega`, checked against the expected axis lengths.
pub fn ks_mean_vector(m: f64, mus: &[DVector<f64>], dims: &[usize]) -> Result<Vec<f64>> {
    let lens: Vec<usize> = mus.iter().map(|v| v.len()).collect();
    if lens != dims {
        return Err(Error::DimensionMismatch(format!(
            "mean factor lengths {lens:?} do not match dims {dims:?}"
        )));
    }
    Ok(ks_mean_tensor(m, mus)?.into_values())
}

/// Explicit `sum_l I (x) factors[l] (x) I`, for verification at small sizes.
pub fn dense_ks(factors: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    dense_ks_guarded(factors, DENSE_LIMIT)
}

pub fn dense_ks_guarded(factors: &[DMatrix<f64>], limit: usize) -> Result<DMatrix<f64>> {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    check_factors(factors, &dims)?;
    let n: usize = dims.iter().product();
    if n > limit {
        return Err(Error::SizeGuard { size: n, limit });
    }
    let mut omega = DMatrix::zeros(n, n);
    for (axis, f) in factors.iter().enumerate() {
        let before: usize = dims[..axis].iter().product();
        let after: usize = dims[axis + 1..].iter().product();
        let left = DMatrix::<f64>::identity(before, before);
        let right = DMatrix::<f64>::identity(after, after);
        omega += left.kronecker(f).kronecker(&right);
    }
    Ok(omega)
}
