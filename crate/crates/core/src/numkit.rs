//! Dense vectors, seeded random streams and finite-difference gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::math;

/// A dense vector of `f64` parameters, gradients or directions.
///
/// The length is fixed at construction; binary operations require equal
/// lengths and report [`Error::DimensionMismatch`] otherwise.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    /// The `i`-th standard basis vector of length `d`.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        ParamVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm2_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// `self += alpha * x`
    pub fn add_scaled(&mut self, alpha: f64, x: &ParamVector) -> Result<()> {
        check_len(self.len(), x.len())?;
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += alpha * xi;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in &mut self.0 {
            *s *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| alpha * v).collect())
    }

    /// `self - other`
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        axpy(-1.0, other, self)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Inner product, accumulated in index order.
pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.0.iter().zip(&b.0).fold(0.0, |acc, (x, y)| acc + x * y))
}

/// Euclidean norm.
pub fn norm2(a: &ParamVector) -> f64 {
    math::sqrt(a.norm2_sq())
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    check_len(x.len(), y.len())?;
    Ok(ParamVector(
        x.0.iter()
            .zip(&y.0)
            .map(|(xi, yi)| alpha * xi + yi)
            .collect(),
    ))
}

/// A reproducible random stream identified by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8: the master seed is expanded into the key and the
/// stream index selects the ChaCha stream (nonce), so streams with distinct
/// indices are independent and none of them share state. The draw sequence
/// depends only on the pair, never on platform or on other streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream {
            master_seed,
            stream_index,
            rng: Self::make(master_seed, stream_index),
        }
    }

    fn make(master_seed: u64, stream_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        rng
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Rewinds to the first draw.
    pub fn reset(&mut self) {
        self.rng = Self::make(self.master_seed, self.stream_index);
    }

    /// A standard normal draw.
    pub fn next_gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `d` i.i.d. `N(0, sigma^2)` draws.
pub fn gaussian_vector(rng: &mut RngStream, d: usize, sigma: f64) -> Result<ParamVector> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be finite and non-negative, got {sigma}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("gaussian_vector needs d >= 1"));
    }
    Ok(ParamVector(
        (0..d).map(|_| sigma * rng.next_gaussian()).collect(),
    ))
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, x: &ParamVector, h: f64) -> Result<ParamVector>
where
    F: FnMut(&ParamVector) -> f64,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step h must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        let (hi, lo) = (xi + h, xi - h);
        probe[i] = hi;
        let up = f(&probe);
        probe[i] = lo;
        let down = f(&probe);
        probe[i] = xi;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective not finite at coordinate {i} (f+ = {up}, f- = {down})"
            )));
        }
        // divide by the representable step, not 2h
        grad.push((up - down) / (hi - lo));
    }
    Ok(ParamVector(grad))
}

/// Largest coordinate-wise relative error between two gradients.
///
/// The denominator is `max(|a_i|, |b_i|, 1e-4)`, so coordinates whose true
/// value is near zero are compared in absolute terms.
pub fn max_relative_error(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs()).max(1e-4);
            (x - y).abs() / scale
        })
        .fold(0.0, f64::max))
}
