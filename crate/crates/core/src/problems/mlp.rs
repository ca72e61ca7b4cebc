use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::softmax::softmax_in_place;
use super::{assert_dim, sample_batch, Dataset, FiniteSumProblem, Problem};
use crate::error::{Error, Result};
use crate::math;
use crate::numkit::{ParamVector, RngStream};

/// Fully connected ReLU network with a softmax cross-entropy output.
///
/// `widths = [p, h_1, ..., h_L, C]`; ReLU after every hidden layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::invalid("an MLP needs at least one hidden layer"));
        }
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        if widths.contains(&0) {
            return Err(Error::invalid(format!(
                "layer widths must be >= 1, got {widths:?}"
            )));
        }
        Ok(MlpSpec { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total parameters: per layer `out x in` weights then `out` biases.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Offsets of each layer's (weights, biases) inside the flat vector.
    fn layout(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpProblem {
    spec: MlpSpec,
    data: Dataset,
    layout: Vec<(usize, usize)>,
    init: ParamVector,
}

/// Builds the network objective; weights start as `N(0, 1 / fan_in)` and
/// biases at zero.
pub fn mlp_problem(spec: MlpSpec, data: Dataset, init_rng: &mut RngStream) -> Result<MlpProblem> {
    if spec.input_width() != data.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_width(),
            found: data.feature_count(),
        });
    }
    if spec.output_width() != data.class_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.output_width(),
            found: data.class_count(),
        });
    }
    let layout = spec.layout();
    let mut init = vec![0.0; spec.param_count()];
    for (w, &(wo, bo)) in spec.widths.windows(2).zip(&layout) {
        let scale = 1.0 / math::sqrt(w[0] as f64);
        for v in &mut init[wo..bo] {
            *v = scale * init_rng.next_gaussian();
        }
    }
    Ok(MlpProblem {
        spec,
        data,
        layout,
        init: ParamVector::from_vec(init),
    })
}

impl MlpProblem {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Post-activation values of every layer for sample `i`; the last entry
    /// holds the output logits.
    pub fn activations(&self, x: &ParamVector, i: usize) -> Vec<Vec<f64>> {
        assert_dim(self, x);
        self.forward(x.as_slice(), self.data.row(i))
    }

    /// Offset of the weight `(unit, input)` of layer `layer` in the flat vector.
    pub fn weight_index(&self, layer: usize, unit: usize, input: usize) -> usize {
        self.layout[layer].0 + unit * self.spec.widths[layer] + input
    }

    pub fn bias_index(&self, layer: usize, unit: usize) -> usize {
        self.layout[layer].1 + unit
    }

    fn forward(&self, w: &[f64], row: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layout.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layout.len() + 1);
        acts.push(row.to_vec());
        for (l, &(wo, bo)) in self.layout.iter().enumerate() {
            let (fan_in, fan_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|u| {
                    let z = w[wo + u * fan_in..wo + (u + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .fold(w[bo + u], |acc, (a, b)| acc + a * b);
                    if l == last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn accumulate(&self, x: &ParamVector, idx: &[usize], grad: Option<&mut [f64]>) -> f64 {
        let w = x.as_slice();
        let mut total = 0.0;
        let mut grad = grad;
        for &i in idx {
            let mut acts = self.forward(w, self.data.row(i));
            let label = self.data.label(i);
            let out = acts.last_mut().unwrap();
            total += softmax_in_place(out, label);
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            // delta starts as dL/dlogits = p - onehot
            let mut delta = acts.last().unwrap().clone();
            delta[label] -= 1.0;
            for l in (0..self.layout.len()).rev() {
                let (wo, bo) = self.layout[l];
                let fan_in = self.spec.widths[l];
                let input = &acts[l];
                for (u, &du) in delta.iter().enumerate() {
                    if du == 0.0 {
                        continue;
                    }
                    for (gw, a) in g[wo + u * fan_in..wo + (u + 1) * fan_in]
                        .iter_mut()
                        .zip(input)
                    {
                        *gw += du * a;
                    }
                    g[bo + u] += du;
                }
                if l == 0 {
                    break;
                }
                // back through the weights, then through the ReLU of layer l-1
                let mut next = vec![0.0; fan_in];
                for (u, &du) in delta.iter().enumerate() {
                    if du == 0.0 {
                        continue;
                    }
                    for (n, wv) in next
                        .iter_mut()
                        .zip(&w[wo + u * fan_in..wo + (u + 1) * fan_in])
                    {
                        *n += du * wv;
                    }
                }
                for (n, a) in next.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        total
    }
}

impl Problem for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn initial_point(&self) -> ParamVector {
        self.init.clone()
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        assert_dim(self, x);
        let all: Vec<usize> = (0..self.data.len()).collect();
        self.accumulate(x, &all, None) / self.data.len() as f64
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

impl FiniteSumProblem for MlpProblem {
    fn sample_count(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_gradient(&self, x: &ParamVector, indices: &[usize]) -> (f64, ParamVector) {
        assert_dim(self, x);
        let mut g = vec![0.0; self.dim()];
        let total = self.accumulate(x, indices, Some(&mut g));
        let inv = 1.0 / indices.len().max(1) as f64;
        let mut g = ParamVector::from_vec(g);
        g.scale(inv);
        (total * inv, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_gradient, gaussian_vector, max_relative_error};
    use crate::problems::synthetic_blobs;

    fn tiny(seed: u64) -> MlpProblem {
        let mut rng = RngStream::new(seed, 0);
        let data = synthetic_blobs(20, 6, 3, 1.0, &mut rng).unwrap();
        let spec = MlpSpec::new(6, &[5, 4], 3).unwrap();
        mlp_problem(spec, data, &mut RngStream::new(seed, 1)).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(4, &[], 2).unwrap_err().is_usage());
        assert!(MlpSpec::new(4, &[3, 0], 2).unwrap_err().is_usage());
        let s = MlpSpec::new(6, &[5, 4], 3).unwrap();
        assert_eq!(s.param_count(), 5 * 7 + 4 * 6 + 3 * 5);
        let mut rng = RngStream::new(1, 0);
        let data = synthetic_blobs(20, 7, 3, 1.0, &mut rng).unwrap();
        assert!(mlp_problem(s, data, &mut rng).unwrap_err().is_usage());
    }

    #[test]
    fn zero_hidden_weights_give_bias_logits() {
        let p = tiny(1);
        let mut x = ParamVector::zeros(p.dim());
        let last = p.spec().widths().len() - 2;
        for u in 0..3 {
            x[p.bias_index(last, u)] = [0.5, -1.0, 2.0][u];
        }
        let acts = p.activations(&x, 0);
        assert_eq!(acts.last().unwrap(), &vec![0.5, -1.0, 2.0]);

        let x = ParamVector::zeros(p.dim());
        assert!((p.loss(&x) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for seed in 0..10 {
            let p = tiny(seed);
            let mut rng = RngStream::new(seed, 2);
            let x = gaussian_vector(&mut rng, p.dim(), 0.7).unwrap();
            let fd = finite_diff_gradient(|v| p.loss(v), &x, 1e-5).unwrap();
            let err = max_relative_error(&p.full_gradient(&x), &fd).unwrap();
            assert!(err <= 1e-5, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn relu_is_positively_homogeneous() {
        let p = tiny(5);
        let mut x = p.initial_point();
        // find a first-layer unit with positive pre-activation
        let (sample, unit) = (0..20)
            .find_map(|s| {
                let acts = p.activations(&x, s);
                acts[1].iter().position(|&a| a > 0.0).map(|u| (s, u))
            })
            .expect("some active unit");
        let before = p.activations(&x, sample)[1][unit];
        for i in 0..6 {
            let idx = p.weight_index(0, unit, i);
            x[idx] *= 2.0;
        }
        let b = p.bias_index(0, unit);
        x[b] *= 2.0;
        let after = p.activations(&x, sample)[1][unit];
        assert!((after - 2.0 * before).abs() <= 1e-12 * before.abs().max(1.0));
    }
}
