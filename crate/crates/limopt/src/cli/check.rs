//! Fast self-test suite over the numerical invariants.

use limopt_core::numkit::{finite_diff_gradient, gaussian_vector, max_relative_error, RngStream};
use limopt_core::optim::{check_robbins_monro, closed_form_direction, momentum_weights};
use limopt_core::problems::{
    descent_lemma_check, mlp_problem, noisy_quadratic, softmax_regression, synthetic_blobs,
    MlpSpec, Problem,
};
use limopt_core::variance_lab::{
    bound_thm2, exact_noise_variance, geometric_sum_identity, thm3_asymptotic_ratio,
};
use limopt_core::{
    norm2, DecaySchedule, OptimizerConfig, OptimizerState, ParamVector, StepSchedule,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = limopt_core::Result<(bool, String)>;
type Check = (&'static str, Box<dyn Fn() -> Outcome>);

const CHECK_SEED: u64 = 20_240_601;

/// Off-by-one decay factor, used to confirm the suite catches a broken schedule.
fn shifted_decay(d: &DecaySchedule, k: u64) -> f64 {
    d.decay_factor(k + 1).unwrap_or(f64::NAN)
}

fn recursion_closed_form(corrupt: bool) -> Outcome {
    let mut rng = RngStream::new(CHECK_SEED, 0);
    let mut worst: f64 = 0.0;
    for t in 0..40u64 {
        let d = 1 + (t as usize * 7) % 50;
        let k = 1 + (t * 37) % 200;
        let config = if t % 2 == 0 {
            OptimizerConfig::lim(0.3, 1.5 + (t % 5) as f64)?
        } else {
            OptimizerConfig::sgdm(0.3, 0.5 + 0.1 * (t % 5) as f64)?
        };
        let mut state = OptimizerState::new(config, ParamVector::zeros(d)).with_trace();
        if corrupt {
            state = state.with_decay_hook(shifted_decay);
        }
        for _ in 0..k {
            let g = gaussian_vector(&mut rng, d, 1.0)?;
            state.step(&g)?;
        }
        let grads = state.trace().map(|tr| tr.gradients()).unwrap_or_default();
        let w = momentum_weights(&config.decay.unwrap(), &config.step, k);
        let closed = closed_form_direction(&w, &grads)?;
        let diff = state.last_displacement().sub(&closed)?;
        let rel = norm2(&diff) / norm2(&closed).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    Ok((
        worst <= 1e-10,
        format!("40 trajectories, max relative error {worst:.2e}"),
    ))
}

fn geometric_sum() -> Outcome {
    let mut worst: f64 = 0.0;
    for gamma in [0.1, 0.5, 0.9, 0.99] {
        for k in [1, 10, 100, 10_000] {
            let (l, r) = geometric_sum_identity(gamma, k)?;
            worst = worst.max((l - r).abs() / r.abs());
        }
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.2e}")))
}

fn descent_lemma() -> Outcome {
    let mut rng = RngStream::new(CHECK_SEED, 1);
    let q = noisy_quadratic(&[1.0, 0.0, 0.0, 4.0], 0.0, 0.0)?;
    let mut violations = 0;
    for _ in 0..1000 {
        let x = gaussian_vector(&mut rng, 2, 5.0)?;
        let xb = gaussian_vector(&mut rng, 2, 5.0)?;
        if !descent_lemma_check(&q, &x, &xb)?.holds(1e-9) {
            violations += 1;
        }
    }
    let iso = noisy_quadratic(&[2.0, 0.0, 0.0, 2.0], 0.0, 0.0)?;
    let mut gap: f64 = 0.0;
    for _ in 0..100 {
        let x = gaussian_vector(&mut rng, 2, 5.0)?;
        let xb = gaussian_vector(&mut rng, 2, 5.0)?;
        gap = gap.max(descent_lemma_check(&iso, &x, &xb)?.slack.abs());
    }
    Ok((
        violations == 0 && gap <= 1e-9,
        format!("{violations} violations in 1000 pairs, isotropic gap {gap:.2e}"),
    ))
}

fn gradient_agreement(p: &impl Problem, rng: &mut RngStream) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x = gaussian_vector(rng, p.dim(), 0.5)?;
        let fd = finite_diff_gradient(|y| p.loss(y), &x, 1e-5)?;
        worst = worst.max(max_relative_error(&p.full_gradient(&x), &fd)?);
    }
    Ok((
        worst <= 1e-5,
        format!("5 points, max relative error {worst:.2e}"),
    ))
}

fn gradient_softmax() -> Outcome {
    let mut rng = RngStream::new(CHECK_SEED, 2);
    let p = softmax_regression(synthetic_blobs(30, 6, 3, 1.0, &mut rng)?)?;
    gradient_agreement(&p, &mut rng)
}

fn gradient_mlp() -> Outcome {
    let mut rng = RngStream::new(CHECK_SEED, 3);
    let data = synthetic_blobs(30, 6, 3, 1.0, &mut rng)?;
    let p = mlp_problem(MlpSpec::new(6, &[5, 4], 3)?, data, &mut rng)?;
    gradient_agreement(&p, &mut rng)
}

fn robbins_monro() -> Outcome {
    let r = check_robbins_monro(&StepSchedule::new(1.0)?, 100_000)?;
    let ok = r.sum_alpha >= r.sum_alpha_lower
        && r.sum_alpha_sq >= r.sum_alpha_sq_bracket.0
        && r.sum_alpha_sq <= r.sum_alpha_sq_bracket.1;
    Ok((ok, r.to_string()))
}

fn fixed_factor_bound() -> Outcome {
    let s = StepSchedule::new(1.0)?;
    let m = 10.0;
    let mut worst: f64 = 0.0;
    for gamma in [0.5, 0.9] {
        let d = DecaySchedule::fixed(gamma)?;
        let bound = bound_thm2(1.0, gamma, m, 0.0, 0.0, 0.0, 0.0)?;
        for k in 1..=1000 {
            worst = worst.max(exact_noise_variance(&d, &s, k, m) / bound);
        }
    }
    Ok((
        worst < 1.0,
        format!("max exact/bound ratio {worst:.6} over k <= 1000"),
    ))
}

fn inverse_proportional_ratio() -> Outcome {
    let at1 = thm3_asymptotic_ratio(1.0, 1.0, 1)?;
    let r: Vec<f64> = [10, 100, 1000]
        .iter()
        .map(|&k| thm3_asymptotic_ratio(1.0, 1.0, k))
        .collect::<limopt_core::Result<_>>()?;
    let ok = (at1 - 2.0).abs() <= 1e-12 && r[0] > r[1] && r[1] > r[2] && r[2] <= 1.0 + 4.0 / 1000.0;
    Ok((
        ok,
        format!(
            "ratio {at1:.12} at k=1, {:.6}/{:.6}/{:.6} at k=10/100/1000",
            r[0], r[1], r[2]
        ),
    ))
}

/// Runs every check; `corrupt_decay` swaps in an off-by-one decay factor.
pub fn run_checks(corrupt_decay: bool) -> Vec<CheckResult> {
    let checks: Vec<Check> = vec![
        (
            "recursion_closed_form",
            Box::new(move || recursion_closed_form(corrupt_decay)),
        ),
        ("geometric_sum_identity", Box::new(geometric_sum)),
        ("descent_lemma", Box::new(descent_lemma)),
        ("gradient_softmax", Box::new(gradient_softmax)),
        ("gradient_mlp", Box::new(gradient_mlp)),
        ("robbins_monro_sums", Box::new(robbins_monro)),
        ("fixed_factor_bound", Box::new(fixed_factor_bound)),
        (
            "inverse_proportional_ratio",
            Box::new(inverse_proportional_ratio),
        ),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckResult {
                name,
                passed,
                detail,
            },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

/// Prints one line per check; true when all of them pass.
pub fn cmd_check(corrupt_decay: bool) -> bool {
    let results = run_checks(corrupt_decay);
    for r in &results {
        println!(
            "{} {:<28} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    failed == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes_everything() {
        let r = run_checks(false);
        assert!(r.len() >= 6);
        for c in &r {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn shifted_decay_is_caught() {
        let r = run_checks(true);
        let eq = r
            .iter()
            .find(|c| c.name == "recursion_closed_form")
            .unwrap();
        assert!(!eq.passed, "{eq:?}");
    }
}
