use limopt_core::numkit::{gaussian_vector, RngStream};
use limopt_core::problems::{
    mlp_problem, noisy_quadratic, pure_noise_problem, softmax_regression, synthetic_blobs,
    EpochSampler, FiniteSumProblem, MlpSpec, Problem,
};
use limopt_core::{AdamParams, OptimizerConfig, OptimizerState, ParamVector};

/// Mean of `n` single-sample gradients against the full gradient, per
/// coordinate, in units of the estimated standard error.
fn max_z_score(p: &impl Problem, x: &ParamVector, n: usize, seed: u64) -> f64 {
    let d = p.dim();
    let mut rng = RngStream::new(seed, 0);
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..n {
        let g = p.stochastic_gradient(x, &mut rng, 1);
        for (i, v) in g.iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let full = p.full_gradient(x);
    let nf = n as f64;
    (0..d)
        .map(|i| {
            let mean = sum[i] / nf;
            let var = (sum_sq[i] - nf * mean * mean) / (nf - 1.0);
            let se = (var / nf).sqrt();
            if se == 0.0 {
                if (mean - full[i]).abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (mean - full[i]).abs() / se
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn stochastic_gradients_are_unbiased() {
    let n = 100_000;
    let mut rng = RngStream::new(77, 9);

    let noise = pure_noise_problem(6, 1.5).unwrap();
    let x = gaussian_vector(&mut rng, 6, 1.0).unwrap();
    assert!(max_z_score(&noise, &x, n, 1) <= 3.0);

    let q = noisy_quadratic(&[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 3.0], 0.7, 1.5).unwrap();
    let x = gaussian_vector(&mut rng, 3, 1.0).unwrap();
    assert!(max_z_score(&q, &x, n, 2) <= 3.0);

    let data = synthetic_blobs(40, 3, 3, 1.0, &mut rng).unwrap();
    let sm = softmax_regression(data.clone()).unwrap();
    let x = gaussian_vector(&mut rng, sm.dim(), 0.5).unwrap();
    assert!(max_z_score(&sm, &x, n, 3) <= 3.0);

    let mlp = mlp_problem(MlpSpec::new(3, &[4], 3).unwrap(), data, &mut rng).unwrap();
    let x = mlp.initial_point();
    assert!(max_z_score(&mlp, &x, n, 4) <= 3.0);
}

#[test]
fn every_optimizer_solves_a_noiseless_quadratic() {
    let q = noisy_quadratic(&[1.0, 0.2, 0.2, 0.5], 0.0, 0.0).unwrap();
    let x0 = ParamVector::from_vec(vec![3.0, -2.0]);
    let f0 = q.loss(&x0);
    let configs = [
        OptimizerConfig::sgd(1.0).unwrap(),
        OptimizerConfig::sgdm(0.3, 0.9).unwrap(),
        OptimizerConfig::lim(0.1, 2.0).unwrap(),
        OptimizerConfig::adam(0.5, AdamParams::default()).unwrap(),
    ];
    let mut rng = RngStream::new(0, 0);
    for c in configs {
        let mut s = OptimizerState::new(c, x0.clone());
        for _ in 0..3000 {
            let g = q.stochastic_gradient(s.x(), &mut rng, 1);
            s.step(&g).unwrap();
        }
        let f = q.loss(s.x());
        assert!(f < 1e-3 * f0, "{:?}: {f}", c.kind);
    }
}

#[test]
fn minibatch_training_lowers_the_training_loss() {
    let mut rng = RngStream::new(4, 2);
    let data = synthetic_blobs(600, 8, 4, 1.5, &mut rng).unwrap();
    let problems = (
        softmax_regression(data.clone()).unwrap(),
        mlp_problem(MlpSpec::new(8, &[16, 16], 4).unwrap(), data, &mut rng).unwrap(),
    );
    fn train(p: &impl FiniteSumProblem, c: OptimizerConfig) -> (f64, f64) {
        let mut rng = RngStream::new(4, 0);
        let mut sampler = EpochSampler::new(p.sample_count());
        let mut s = OptimizerState::new(c, p.initial_point());
        let before = p.loss(s.x());
        while sampler.epochs_completed() < 5 {
            let b = sampler.next_batch(&mut rng, 32);
            let (_, g) = p.batch_loss_gradient(s.x(), &b);
            s.step(&g).unwrap();
        }
        (before, p.loss(s.x()))
    }
    for c in [
        OptimizerConfig::sgdm(0.05, 0.9).unwrap(),
        OptimizerConfig::lim(0.02, 2.0).unwrap(),
    ] {
        let (b, a) = train(&problems.0, c);
        assert!(a < 0.5 * b, "softmax {:?}: {b} -> {a}", c.kind);
        let (b, a) = train(&problems.1, c);
        assert!(a < 0.5 * b, "mlp {:?}: {b} -> {a}", c.kind);
    }
}
