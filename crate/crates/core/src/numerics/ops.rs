//! Forward-only dense primitives.
//!
//! Sums run in index-ascending order, except reductions across a list of
//! tensors (frames, sequences), which add each coordinate's values in
//! ascending-value order. That makes those reductions bit-identical under any
//! permutation of the list.

use super::Tensor;
use crate::error::{Error, Result};

/// Norms below this are treated as zero vectors by [`cosine`].
pub const COSINE_EPS: f64 = 1e-12;

/// Largest double strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceAxis {
    /// Mean over H and W of `C×H×W` maps (and over the list, when it has
    /// more than one map).
    Spatial,
    /// Mean over the list of equally shaped tensors.
    Temporal,
}

pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = match w.shape() {
        &[r, c] => (r, c),
        s => return Err(Error::dim("matvec", s, x.shape())),
    };
    if x.rank() != 1 || x.len() != cols {
        return Err(Error::dim("matvec", w.shape(), x.shape()));
    }
    let xd = x.data();
    let out = w
        .data()
        .chunks_exact(cols)
        .map(|row| dot(row, xd))
        .collect::<Vec<f64>>();
    debug_assert_eq!(out.len(), rows);
    Ok(Tensor::vector(out))
}

/// Inner product accumulated in four interleaved lanes, which lets the
/// compiler vectorize it. The order is fixed, so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0; 4];
    let mut i = 0;
    while i + 4 <= n {
        lanes[0] += a[i] * b[i];
        lanes[1] += a[i + 1] * b[i + 1];
        lanes[2] += a[i + 2] * b[i + 2];
        lanes[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < n {
        tail += a[i] * b[i];
        i += 1;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// `Wᵀ·y` for a matrix `W` of shape `m×n` and `y` of length `m`.
pub fn matvec_transposed(w: &Tensor, y: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    let mut out = vec![0.0; cols];
    for (row, &g) in w.data().chunks_exact(cols).zip(y) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
    out
}

/// Logistic function, kept inside the open interval (0, 1) even where the
/// exact value rounds to 0 or 1.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

pub fn sigmoid_map(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Sum of `values` in ascending-value order.
pub fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

pub fn reduce_mean(xs: &[Tensor], axis: ReduceAxis) -> Result<Tensor> {
    match axis {
        ReduceAxis::Temporal => temporal_mean(xs),
        ReduceAxis::Spatial => {
            if xs.len() == 1 {
                spatial_mean(&xs[0])
            } else {
                spatial_mean(&temporal_mean(xs)?)
            }
        }
    }
}

pub fn temporal_mean(xs: &[Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Precondition("mean over an empty list".into()))?;
    for x in &xs[1..] {
        if x.shape() != first.shape() {
            return Err(Error::dim("temporal_mean", first.shape(), x.shape()));
        }
    }
    let n = xs.len() as f64;
    let mut column = vec![0.0; xs.len()];
    let data = (0..first.len())
        .map(|i| {
            for (slot, x) in column.iter_mut().zip(xs) {
                *slot = x.data()[i];
            }
            canonical_sum(&mut column) / n
        })
        .collect();
    Tensor::new(first.shape().to_vec(), data)
}

/// Global average pooling of a `C×H×W` map to a length-`C` vector.
pub fn spatial_mean(map: &Tensor) -> Result<Tensor> {
    let &[c, h, w] = map.shape() else {
        return Err(Error::Precondition(format!(
            "spatial mean needs a C×H×W map, got {:?}",
            map.shape()
        )));
    };
    let area = (h * w) as f64;
    let data = map
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect::<Vec<f64>>();
    debug_assert_eq!(data.len(), c);
    Ok(Tensor::vector(data))
}

pub fn cosine(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine", a.shape(), b.shape()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na < COSINE_EPS || nb < COSINE_EPS {
        return Err(Error::Degenerate(format!(
            "cosine of a vector with norm below {COSINE_EPS} (norms {na:e}, {nb:e})"
        )));
    }
    Ok((a.dot(b)? / (na * nb)).clamp(-1.0, 1.0))
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}
