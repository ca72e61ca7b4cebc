//! Numerical checks of the variance bounds on the momentum direction.
//!
//! "Variance" of a random vector means the trace of its covariance,
//! `E|v - E v|^2`. The direction `v_k` is the displacement applied at step
//! `k`. On the pure-noise oracle the gradients are independent of the
//! trajectory, so `tr Cov[v_k] = M * sum_j w_j^2` with the weights of
//! [`crate::optim::momentum_weights`]; this is the exact value the Monte
//! Carlo estimates are compared against.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numkit::{norm2, ParamVector, RngStream};
use crate::optim::{
    momentum_weights, published_momentum_weights, DecaySchedule, OptimizerConfig, OptimizerKind,
    OptimizerState, StepSchedule,
};
use crate::problems::Problem;

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

fn noise_level(m: f64, mv: f64, gradnorm_sq: f64, l: f64, d: f64) -> Result<f64> {
    non_negative("M", m)?;
    non_negative("M_V", mv)?;
    non_negative("gradient norm", gradnorm_sq)?;
    non_negative("L", l)?;
    non_negative("D", d)?;
    Ok(m + 2.0 * mv * gradnorm_sq + 2.0 * mv * l * l * d * d)
}

/// Fixed-factor bound:
/// `alpha0^2 / (1 - gamma^2) * (M + 2 M_V |grad F|^2 + 2 M_V L^2 D^2)`.
pub fn bound_thm2(
    alpha0: f64,
    gamma: f64,
    m: f64,
    mv: f64,
    gradnorm_sq: f64,
    l: f64,
    d: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    non_negative("alpha0", alpha0)?;
    let level = noise_level(m, mv, gradnorm_sq, l, d)?;
    Ok(alpha0 * alpha0 / (1.0 - gamma * gamma) * level)
}

/// Inverse-proportional bound:
/// `alpha0^2 / (2 beta) * (M + 2 M_V |grad F|^2 + 2 M_V L^2 D^2)`.
pub fn bound_thm3(
    alpha0: f64,
    beta: f64,
    m: f64,
    mv: f64,
    gradnorm_sq: f64,
    l: f64,
    d: f64,
) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    non_negative("alpha0", alpha0)?;
    let level = noise_level(m, mv, gradnorm_sq, l, d)?;
    Ok(alpha0 * alpha0 / (2.0 * beta) * level)
}

/// `M * sum_j w_j^2` with the implemented weights; exact `tr Cov[v_k]` for
/// i.i.d. zero-mean gradient noise of trace `M`. Zero for `k = 0`.
pub fn exact_noise_variance(d: &DecaySchedule, s: &StepSchedule, k: u64, m: f64) -> f64 {
    m * momentum_weights(d, s, k).iter().map(|w| w * w).sum::<f64>()
}

/// As [`exact_noise_variance`] but with the published closed-form weights
/// `alpha_j (j / k)^beta`.
pub fn exact_noise_variance_published(d: &DecaySchedule, s: &StepSchedule, k: u64, m: f64) -> f64 {
    m * published_momentum_weights(d, s, k)
        .iter()
        .map(|w| w * w)
        .sum::<f64>()
}

/// Both sides of `sum_{j=1}^k gamma^(2(k-j)) = (1 - gamma^(2k)) / (1 - gamma^2)`;
/// the left side by direct summation, smallest terms first.
pub fn geometric_sum_identity(gamma: f64, k: u64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let g2 = gamma * gamma;
    let lhs = (1..=k).fold(0.0, |acc, j| acc + math::powf(g2, (k - j) as f64));
    let rhs = (1.0 - math::powf(g2, k as f64)) / (1.0 - g2);
    Ok((lhs, rhs))
}

/// Ratio of the exact noise variance to the inverse-proportional bound
/// (both with `M = 1`, `M_V = 0`). Above 1 for small `k`; approaches 1 from
/// above like `1 + (4 beta^2 / (2 beta - 1) - beta) / k`.
pub fn thm3_asymptotic_ratio(beta: f64, alpha0: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let d = DecaySchedule::InverseProportional { beta };
    let s = StepSchedule::new(alpha0)?;
    let bound = bound_thm3(alpha0, beta, 1.0, 0.0, 0.0, 0.0, 0.0)?;
    Ok(exact_noise_variance(&d, &s, k, 1.0) / bound)
}

/// Result of estimating `tr Cov[v_k]` over independent replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub k: u64,
    pub estimate: f64,
    pub standard_error: f64,
    /// Analytic value when the problem is pure noise and `batch = 1`.
    pub exact: Option<f64>,
    /// Same, with the published closed-form weights (LIM only).
    pub exact_published: Option<f64>,
    /// The bound matching the optimizer (fixed or inverse-proportional).
    pub bound: f64,
    pub replica_count: usize,
    /// Mean over replicas of `|grad F|^2` at the iterate where `g_k` was drawn.
    pub mean_grad_norm_sq: f64,
    /// Largest trajectory diameter over replicas.
    pub diameter: f64,
}

impl VarianceReport {
    /// `|estimate - exact| <= 4 standard errors` (true when no exact value).
    pub fn agrees_with_exact(&self) -> bool {
        self.exact
            .is_none_or(|e| (self.estimate - e).abs() <= 4.0 * self.standard_error)
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.exact.map(|e| (self.estimate - e).abs() / e)
    }
}

/// One replica's contribution to a [`VarianceReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaOutcome {
    pub direction: ParamVector,
    pub grad_norm_sq: f64,
    pub diameter: f64,
}

fn check_mc_config(config: &OptimizerConfig) -> Result<DecaySchedule> {
    match (config.kind, config.decay) {
        (OptimizerKind::Sgdm, Some(d @ DecaySchedule::Fixed { .. }))
        | (OptimizerKind::Lim, Some(d @ DecaySchedule::InverseProportional { .. })) => Ok(d),
        _ => Err(Error::invalid(format!(
            "direction variance needs sgdm (fixed) or lim (inverse-proportional), got {:?}",
            config.kind
        ))),
    }
}

fn diameter(points: &[ParamVector]) -> f64 {
    let mut d2: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let s: f64 = points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 = d2.max(s);
        }
    }
    math::sqrt(d2)
}

/// Runs replica `replica` for `k` steps from the problem's initial point on
/// stream `(master_seed, replica)`, returning the step-`k` displacement.
pub fn replica_direction(
    p: &impl Problem,
    config: &OptimizerConfig,
    k: u64,
    master_seed: u64,
    replica: u64,
) -> Result<ReplicaOutcome> {
    check_mc_config(config)?;
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut rng = RngStream::new(master_seed, replica);
    let mut state = OptimizerState::new(*config, p.initial_point());
    let need_geometry = p.known_constants().is_some_and(|c| c.m_v > 0.0);
    let mut points = Vec::new();
    let mut grad_norm_sq = 0.0;
    for step in 1..=k {
        if need_geometry {
            points.push(state.x().clone());
        }
        if step == k {
            grad_norm_sq = p.full_gradient(state.x()).norm2_sq();
        }
        let g = p.stochastic_gradient(state.x(), &mut rng, 1);
        state.step(&g)?;
    }
    if need_geometry {
        points.push(state.x().clone());
    }
    Ok(ReplicaOutcome {
        direction: state.last_displacement().clone(),
        grad_norm_sq,
        diameter: diameter(&points),
    })
}

/// Combines replica outcomes, in slice order, into a report.
pub fn aggregate_replicas(
    p: &impl Problem,
    config: &OptimizerConfig,
    k: u64,
    outcomes: &[ReplicaOutcome],
) -> Result<VarianceReport> {
    let decay = check_mc_config(config)?;
    let r = outcomes.len();
    if r < 2 {
        return Err(Error::invalid(format!("need at least 2 replicas, got {r}")));
    }
    let dim = outcomes[0].direction.len();
    let mut mean = ParamVector::zeros(dim);
    for o in outcomes {
        mean.add_scaled(1.0, &o.direction)?;
    }
    mean.scale(1.0 / r as f64);
    let dev: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            o.direction
                .iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    let rf = r as f64;
    let dev_mean = dev.iter().sum::<f64>() / rf;
    let dev_var = dev
        .iter()
        .map(|s| (s - dev_mean) * (s - dev_mean))
        .sum::<f64>()
        / (rf - 1.0);
    let correction = rf / (rf - 1.0);
    let estimate = dev_mean * correction;
    let standard_error = math::sqrt(dev_var / rf) * correction;

    let mean_grad_norm_sq = outcomes.iter().map(|o| o.grad_norm_sq).sum::<f64>() / rf;
    let diam = outcomes.iter().map(|o| o.diameter).fold(0.0, f64::max);
    let consts = p
        .known_constants()
        .ok_or_else(|| Error::invalid(format!("{} has no known constants", p.name())))?;
    let alpha0 = config.step.alpha0();
    let bound = match decay {
        DecaySchedule::Fixed { gamma } => bound_thm2(
            alpha0,
            gamma,
            consts.m,
            consts.m_v,
            mean_grad_norm_sq,
            consts.lipschitz,
            diam,
        )?,
        DecaySchedule::InverseProportional { beta } => bound_thm3(
            alpha0,
            beta,
            consts.m,
            consts.m_v,
            mean_grad_norm_sq,
            consts.lipschitz,
            diam,
        )?,
    };
    let (exact, exact_published) = if p.is_pure_noise() {
        let e = exact_noise_variance(&decay, &config.step, k, consts.m);
        let ep = matches!(decay, DecaySchedule::InverseProportional { .. })
            .then(|| exact_noise_variance_published(&decay, &config.step, k, consts.m));
        (Some(e), ep)
    } else {
        (None, None)
    };
    Ok(VarianceReport {
        k,
        estimate,
        standard_error,
        exact,
        exact_published,
        bound,
        replica_count: r,
        mean_grad_norm_sq,
        diameter: diam,
    })
}

/// Monte Carlo estimate of `tr Cov[v_k]` from `replicas` independent runs,
/// replica `r` drawing its noise from stream `(master_seed, r)`.
pub fn monte_carlo_direction_variance(
    p: &impl Problem,
    config: &OptimizerConfig,
    k: u64,
    replicas: usize,
    master_seed: u64,
) -> Result<VarianceReport> {
    check_mc_config(config)?;
    if replicas < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let outcomes = (0..replicas as u64)
        .map(|r| replica_direction(p, config, k, master_seed, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate_replicas(p, config, k, &outcomes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub x: ParamVector,
    pub grad_norm: f64,
    pub loss: f64,
    pub step_norm: f64,
}

/// Iterates `x_0, x_1, ...` of one run, with `|grad F|` and loss at each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectoryRecord {
    /// Largest pairwise distance between recorded iterates.
    pub fn diameter(&self) -> f64 {
        let xs: Vec<ParamVector> = self.points.iter().map(|p| p.x.clone()).collect();
        diameter(&xs)
    }
}

/// Runs `iters` steps from the problem's initial point and records the path.
pub fn record_trajectory(
    p: &impl Problem,
    config: &OptimizerConfig,
    iters: u64,
    batch: usize,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord> {
    let mut state = OptimizerState::new(*config, p.initial_point());
    let point = |state: &OptimizerState| TrajectoryPoint {
        k: state.k(),
        x: state.x().clone(),
        grad_norm: norm2(&p.full_gradient(state.x())),
        loss: p.loss(state.x()),
        step_norm: norm2(state.last_displacement()),
    };
    let mut rec = TrajectoryRecord {
        points: alloc::vec![point(&state)],
    };
    for _ in 0..iters {
        let g = p.stochastic_gradient(state.x(), rng, batch);
        state.step(&g)?;
        let pt = point(&state);
        if !pt.x.is_finite() || !pt.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "iterate diverged at step {}",
                pt.k
            )));
        }
        rec.points.push(pt);
    }
    Ok(rec)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Report {
    pub diameter: f64,
    /// `max over (j, k) of |grad F(x_j)|^2 - 2 |grad F(x_k)|^2 - 2 L^2 D^2`.
    pub max_violation: f64,
    /// Pairs whose violation exceeds `1e-9`.
    pub violations: usize,
    pub pairs: usize,
}

/// Checks `|grad F(x_j)|^2 <= 2 |grad F(x_k)|^2 + 2 L^2 D^2` over every
/// ordered pair of iterates, with `D` the measured trajectory diameter.
pub fn theorem1_check(t: &TrajectoryRecord, l: f64) -> Result<Theorem1Report> {
    if t.points.len() < 2 {
        return Err(Error::invalid("trajectory needs at least two points"));
    }
    if l.is_nan() || l <= 0.0 {
        return Err(Error::invalid(format!("L must be positive, got {l}")));
    }
    let d = t.diameter();
    let slack = 2.0 * l * l * d * d;
    let g2: Vec<f64> = t.points.iter().map(|p| p.grad_norm * p.grad_norm).collect();
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut pairs = 0;
    for &gj in &g2 {
        for &gk in &g2 {
            let v = gj - 2.0 * gk - slack;
            max_violation = max_violation.max(v);
            if v > 1e-9 {
                violations += 1;
            }
            pairs += 1;
        }
    }
    Ok(Theorem1Report {
        diameter: d,
        max_violation,
        violations,
        pairs,
    })
}

/// Least-squares fit of `tr Cov[g(x)] ~ M + M_V |grad F(x)|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionEstimate {
    pub m_hat: f64,
    pub mv_hat: f64,
    pub sample_points: usize,
    pub draws_per_point: usize,
    /// `(|grad F(x)|^2, empirical tr Cov)` per point.
    pub observations: Vec<(f64, f64)>,
    /// Observed minus fitted trace per point.
    pub residuals: Vec<f64>,
}

/// Fits the noise constants from `draws` single-sample gradients per point.
///
/// When every point has zero gradient (pure noise) the slope is not
/// identifiable; the fit then uses the intercept alone and reports
/// `mv_hat = 0`. Equal but non-zero gradient norms are rejected. Negative
/// coefficients are clamped at zero and the other one is refitted.
pub fn estimate_assumption_constants(
    p: &impl Problem,
    points: &[ParamVector],
    draws: usize,
    rng: &mut RngStream,
) -> Result<AssumptionEstimate> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two sample points"));
    }
    if draws < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 draws per point, got {draws}"
        )));
    }
    let mut obs = Vec::with_capacity(points.len());
    for x in points {
        crate::error::check_len(p.dim(), x.len())?;
        let gsq = p.full_gradient(x).norm2_sq();
        let mut sum = ParamVector::zeros(p.dim());
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let g = p.stochastic_gradient(x, rng, 1);
            sum_sq += g.norm2_sq();
            sum.add_scaled(1.0, &g)?;
        }
        let n = draws as f64;
        let trace = ((sum_sq - sum.norm2_sq() / n) / (n - 1.0)).max(0.0);
        obs.push((gsq, trace));
    }

    let n = obs.len() as f64;
    let xmax = obs.iter().map(|o| o.0).fold(0.0, f64::max);
    let xmin = obs.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let mean_y = obs.iter().map(|o| o.1).sum::<f64>() / n;
    let (m_hat, mv_hat) = if xmax - xmin <= 1e-12 * xmax.max(1.0) {
        if xmax > 1e-12 {
            return Err(Error::invalid(
                "all sample points have the same gradient norm; slope is not identifiable",
            ));
        }
        (mean_y, 0.0)
    } else {
        let mean_x = obs.iter().map(|o| o.0).sum::<f64>() / n;
        let sxx: f64 = obs.iter().map(|o| (o.0 - mean_x) * (o.0 - mean_x)).sum();
        let sxy: f64 = obs.iter().map(|o| (o.0 - mean_x) * (o.1 - mean_y)).sum();
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_x;
        if slope < 0.0 {
            (mean_y, 0.0)
        } else if intercept < 0.0 {
            let through_origin = obs.iter().map(|o| o.0 * o.1).sum::<f64>()
                / obs.iter().map(|o| o.0 * o.0).sum::<f64>();
            (0.0, through_origin.max(0.0))
        } else {
            (intercept, slope)
        }
    };
    let residuals = obs.iter().map(|o| o.1 - (m_hat + mv_hat * o.0)).collect();
    Ok(AssumptionEstimate {
        m_hat,
        mv_hat,
        sample_points: points.len(),
        draws_per_point: draws,
        observations: obs,
        residuals,
    })
}
