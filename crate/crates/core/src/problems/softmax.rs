use alloc::vec;
use alloc::vec::Vec;

use super::{assert_dim, sample_batch, Dataset, FiniteSumProblem, Problem};
use crate::error::{Error, Result};
use crate::math;
use crate::numkit::{ParamVector, RngStream};

/// Multinomial logistic regression, mean negative log-likelihood, no
/// regularization. Parameters: `C x p` weights (row-major) then `C` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxRegression {
    data: Dataset,
}

pub fn softmax_regression(data: Dataset) -> Result<SoftmaxRegression> {
    if data.class_count() < 2 {
        return Err(Error::invalid(
            "softmax regression needs at least two classes",
        ));
    }
    Ok(SoftmaxRegression { data })
}

/// Overwrites `logits` with softmax probabilities and returns `-ln p[label]`.
pub(crate) fn softmax_in_place(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = math::exp(*z - max);
        sum += *z;
    }
    let nll = math::ln(sum) - math::ln(logits[label]);
    for z in logits.iter_mut() {
        *z /= sum;
    }
    nll
}

impl SoftmaxRegression {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Class probabilities for sample `i`.
    pub fn probabilities(&self, x: &ParamVector, i: usize) -> Vec<f64> {
        let mut z = self.logits(x.as_slice(), self.data.row(i));
        softmax_in_place(&mut z, 0);
        z
    }

    fn logits(&self, w: &[f64], row: &[f64]) -> Vec<f64> {
        let (p, c) = (self.data.feature_count(), self.data.class_count());
        (0..c)
            .map(|k| {
                w[k * p..(k + 1) * p]
                    .iter()
                    .zip(row)
                    .fold(w[c * p + k], |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// Upper bound on the gradient's Lipschitz constant:
    /// `0.5 * mean_i (|x_i|^2 + 1)`, from the softmax Hessian bound
    /// `diag(p) - p p^T <= I / 2`.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        let n = self.data.len();
        let s: f64 = (0..n)
            .map(|i| 1.0 + self.data.row(i).iter().map(|v| v * v).sum::<f64>())
            .sum();
        0.5 * s / n as f64
    }

    fn accumulate<I: Iterator<Item = usize>>(
        &self,
        x: &ParamVector,
        idx: I,
        grad: Option<&mut [f64]>,
    ) -> (f64, usize) {
        let (p, c) = (self.data.feature_count(), self.data.class_count());
        let w = x.as_slice();
        let mut total = 0.0;
        let mut count = 0;
        let mut grad = grad;
        for i in idx {
            let row = self.data.row(i);
            let label = self.data.label(i);
            let mut z = self.logits(w, row);
            total += softmax_in_place(&mut z, label);
            count += 1;
            if let Some(g) = grad.as_deref_mut() {
                z[label] -= 1.0;
                for k in 0..c {
                    let dz = z[k];
                    for (gk, r) in g[k * p..(k + 1) * p].iter_mut().zip(row) {
                        *gk += dz * r;
                    }
                    g[c * p + k] += dz;
                }
            }
        }
        (total, count)
    }
}

impl Problem for SoftmaxRegression {
    fn name(&self) -> &str {
        "logreg"
    }

    fn dim(&self) -> usize {
        self.data.class_count() * (self.data.feature_count() + 1)
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        assert_dim(self, x);
        let (t, n) = self.accumulate(x, 0..self.data.len(), None);
        t / n as f64
    }

    fn full_gradient(&self, x: &ParamVector) -> ParamVector {
        let all: Vec<usize> = (0..self.data.len()).collect();
        self.batch_loss_gradient(x, &all).1
    }

    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        rng: &mut RngStream,
        batch: usize,
    ) -> ParamVector {
        let idx = sample_batch(rng, self.data.len(), batch);
        self.batch_loss_gradient(x, &idx).1
    }
}

impl FiniteSumProblem for SoftmaxRegression {
    fn sample_count(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_gradient(&self, x: &ParamVector, indices: &[usize]) -> (f64, ParamVector) {
        assert_dim(self, x);
        let mut g = vec![0.0; self.dim()];
        let (t, n) = self.accumulate(x, indices.iter().copied(), Some(&mut g));
        let inv = 1.0 / n.max(1) as f64;
        let mut g = ParamVector::from_vec(g);
        g.scale(inv);
        (t * inv, g)
    }
}
