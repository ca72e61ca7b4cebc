use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{assert_dim, KnownConstants, Problem};
use crate::error::{Error, Result};
use crate::math;
use crate::numkit::{ParamVector, RngStream};

/// `F(x) = x^T A x / 2` with `g(x) = A x + xi`,
/// `xi ~ N(0, (sigma^2 + c |A x|^2 / d) I)`.
///
/// The noise is built so that `tr Cov[g(x)] = d sigma^2 + c |grad F(x)|^2`
/// exactly, i.e. the affine noise bound holds with equality for
/// `M = d sigma^2`, `M_V = c`, and `L = lambda_max(A)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyQuadratic {
    a: Vec<f64>,
    d: usize,
    sigma: f64,
    c: f64,
    lipschitz: f64,
    start: ParamVector,
}

/// `a` is the row-major `d x d` matrix; it must be symmetric positive definite.
pub fn noisy_quadratic(a: &[f64], sigma: f64, c: f64) -> Result<NoisyQuadratic> {
    let d = math::sqrt(a.len() as f64) as usize;
    if d == 0 || d * d != a.len() {
        return Err(Error::invalid(format!(
            "matrix with {} entries is not square",
            a.len()
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0 && c.is_finite() && c >= 0.0) {
        return Err(Error::invalid(format!(
            "need sigma >= 0 and c >= 0, got sigma={sigma}, c={c}"
        )));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if !cholesky_ok(a, d) {
        return Err(Error::invalid("matrix is not positive definite"));
    }
    let lipschitz = symmetric_eigenvalues(a, d)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(NoisyQuadratic {
        a: a.to_vec(),
        d,
        sigma,
        c,
        lipschitz,
        start: ParamVector::from_vec(vec![1.0; d]),
    })
}

impl NoisyQuadratic {
    /// Diagonal `A`.
    pub fn diagonal(diag: &[f64], sigma: f64, c: f64) -> Result<Self> {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            a[i * d + i] = *v;
        }
        noisy_quadratic(&a, sigma, c)
    }

    /// Replaces the default start point (all ones).
    pub fn with_start(mut self, x0: ParamVector) -> Result<Self> {
        crate::error::check_len(self.d, x0.len())?;
        self.start = x0;
        Ok(self)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    fn apply(&self, x: &ParamVector) -> ParamVector {
        let d = self.d;
        ParamVector::from_vec(
            (0..d)
                .map(|i| {
                    self.a[i * d..(i + 1) * d]
                        .iter()
                        .zip(x.iter())
                        .fold(0.0, |acc, (a, b)| acc + a * b)
                })
                .collect(),
        )
    }

    /// Per-coordinate noise standard deviation at `x` for a single sample.
    pub fn noise_sd(&self, x: &ParamVector) -> f64 {
        let ax = self.apply(x);
        math::sqrt(self.sigma * self.sigma + self.c * ax.norm2_sq() / self.d as f64)
    }
}

impl Problem for NoisyQuadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn initial_point(&self) -> ParamVector {
        self.start.clone()
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        assert_dim(self, x);
        let ax = self.apply(x);
        0.5 * ax.iter().zip(x.iter()).fold(0.0, |acc, (a, b)| acc + a * b)
    }

    fn full_gradient(&self, x: &ParamVector) -> ParamVector {
        assert_dim(self, x);
        self.apply(x)
    }

    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        rng: &mut RngStream,
        batch: usize,
    ) -> ParamVector {
        assert_dim(self, x);
        let mut g = self.apply(x);
        let sd = math::sqrt(self.sigma * self.sigma + self.c * g.norm2_sq() / self.d as f64)
            / math::sqrt(batch.max(1) as f64);
        for gi in g.as_mut_slice() {
            *gi += sd * rng.next_gaussian();
        }
        g
    }

    fn known_constants(&self) -> Option<KnownConstants> {
        Some(KnownConstants {
            lipschitz: self.lipschitz,
            m: self.d as f64 * self.sigma * self.sigma,
            m_v: self.c,
        })
    }
}

fn cholesky_ok(a: &[f64], d: usize) -> bool {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 {
                    return false;
                }
                l[i * d + i] = math::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    true
}

/// Eigenvalues of a symmetric row-major `d x d` matrix (cyclic Jacobi),
/// in no particular order.
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        let diag: f64 = (0..d).map(|i| m[i * d + i] * m[i * d + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}
