//! Stochastic objectives: exact-constant oracles for the variance checks and
//! the classification models used in the training experiments.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_len, Error, Result};
use crate::numkit::{dot, ParamVector, RngStream};

mod blobs;
mod mlp;
mod noise;
mod quadratic;
mod softmax;

pub use blobs::synthetic_blobs;
pub use mlp::{mlp_problem, MlpProblem, MlpSpec};
pub use noise::{pure_noise_problem, PureNoise};
pub use quadratic::{noisy_quadratic, symmetric_eigenvalues, NoisyQuadratic};
pub use softmax::{softmax_regression, SoftmaxRegression};

/// Constants of the smoothness and noise assumptions.
///
/// `lipschitz` bounds the gradient's Lipschitz constant; the noise of a
/// single-sample stochastic gradient satisfies
/// `tr Cov[g(x)] <= m + m_v * |grad F(x)|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownConstants {
    pub lipschitz: f64,
    pub m: f64,
    pub m_v: f64,
}

/// A differentiable objective `F` with an unbiased stochastic gradient.
///
/// Implementations are immutable; all randomness comes from the caller's
/// [`RngStream`]. Arguments must have length [`Problem::dim`] (checked with
/// a panic, since a mismatch is always a programming error here).
pub trait Problem {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Default starting point for optimizer runs.
    fn initial_point(&self) -> ParamVector;

    fn loss(&self, x: &ParamVector) -> f64;

    fn full_gradient(&self, x: &ParamVector) -> ParamVector;

    /// A `batch`-sample estimate of [`Problem::full_gradient`] with
    /// expectation equal to it.
    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        rng: &mut RngStream,
        batch: usize,
    ) -> ParamVector;

    fn known_constants(&self) -> Option<KnownConstants> {
        None
    }

    /// True when the stochastic gradient does not depend on `x` and has zero
    /// mean, so update directions are sums of independent noise terms.
    fn is_pure_noise(&self) -> bool {
        false
    }
}

/// An empirical-risk objective over a finite dataset.
pub trait FiniteSumProblem: Problem {
    fn sample_count(&self) -> usize;

    /// Mean loss and mean gradient over the listed samples.
    fn batch_loss_gradient(&self, x: &ParamVector, indices: &[usize]) -> (f64, ParamVector);
}

pub(crate) fn assert_dim(p: &impl Problem, x: &ParamVector) {
    assert_eq!(
        x.len(),
        p.dim(),
        "{}: parameter vector has length {}, expected {}",
        p.name(),
        x.len(),
        p.dim()
    );
}

/// Samples `batch` distinct indices of `0..n` uniformly.
pub(crate) fn sample_batch(rng: &mut RngStream, n: usize, batch: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, batch.clamp(1, n)).into_vec()
}

/// Labelled feature matrix, row-major `n x p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    p: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, p: usize, classes: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if p == 0 {
            return Err(Error::invalid("dataset has no features"));
        }
        check_len(n * p, features.len())?;
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::invalid(format!(
                "label {l} of sample {i} is not below the class count {classes}"
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature row {} is not finite",
                i / p
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n,
            p,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn feature_count(&self) -> usize {
        self.p
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Minibatch sampling without replacement: each epoch is a fresh random
/// permutation cut into consecutive batches; the last batch of an epoch is
/// short when `batch` does not divide `n`.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    epochs_completed: u64,
}

impl EpochSampler {
    pub fn new(n: usize) -> Self {
        EpochSampler {
            order: (0..n).collect(),
            cursor: 0,
            epochs_completed: 0,
        }
    }

    pub fn next_batch(&mut self, rng: &mut RngStream, batch: usize) -> Vec<usize> {
        if self.cursor == 0 {
            self.order.shuffle(rng);
        }
        let end = (self.cursor + batch.max(1)).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        if self.cursor == self.order.len() {
            self.cursor = 0;
            self.epochs_completed += 1;
        }
        out
    }

    pub fn epochs_completed(&self) -> u64 {
        self.epochs_completed
    }

    /// True right after the last batch of an epoch was handed out.
    pub fn at_epoch_boundary(&self) -> bool {
        self.cursor == 0 && self.epochs_completed > 0
    }
}

/// Outcome of one evaluation of the quadratic upper bound
/// `F(x) <= F(xb) + grad F(xb)^T (x - xb) + L/2 |x - xb|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentLemmaReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the inequality is violated.
    pub slack: f64,
}

impl DescentLemmaReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

/// Evaluates the upper bound with the problem's known Lipschitz constant.
pub fn descent_lemma_check(
    p: &impl Problem,
    x: &ParamVector,
    xb: &ParamVector,
) -> Result<DescentLemmaReport> {
    let l = p
        .known_constants()
        .ok_or_else(|| Error::invalid(format!("{} has no known Lipschitz constant", p.name())))?
        .lipschitz;
    descent_lemma_check_with(p, l, x, xb)
}

/// Same as [`descent_lemma_check`] with a caller-supplied constant.
pub fn descent_lemma_check_with(
    p: &impl Problem,
    lipschitz: f64,
    x: &ParamVector,
    xb: &ParamVector,
) -> Result<DescentLemmaReport> {
    check_len(p.dim(), x.len())?;
    check_len(p.dim(), xb.len())?;
    let delta = x.sub(xb)?;
    let lhs = p.loss(x);
    let rhs = p.loss(xb) + dot(&p.full_gradient(xb), &delta)? + 0.5 * lipschitz * delta.norm2_sq();
    Ok(DescentLemmaReport {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}
