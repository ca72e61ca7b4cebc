//! Step and decay schedules, the SGD / SGDM / LIM / Adam update rules and
//! the closed-form expansions of the momentum direction.
//!
//! Every optimizer counts steps from `k = 1`: the counter is incremented
//! before `alpha_k = alpha0 / sqrt(k)` and the decay factor are evaluated.
//! The momentum methods use the single-accumulator form
//!
//! ```text
//! m_k = gamma_k * m_{k-1} - alpha_k * g_k
//! x_k = x_{k-1} + m_k
//! ```
//!
//! with `gamma_k = gamma` for SGDM and `gamma_k = (k / (k + 1))^beta` for
//! LIM. Unrolling the recursion gives `v_k = -sum_j w_j g_j`, where the
//! weights are returned by [`momentum_weights`].

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::numkit::ParamVector;

/// `alpha_k = alpha0 / sqrt(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    alpha0: f64,
}

impl StepSchedule {
    pub fn new(alpha0: f64) -> Result<Self> {
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(Error::invalid(format!(
                "alpha0 must be positive and finite, got {alpha0}"
            )));
        }
        Ok(StepSchedule { alpha0 })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn step_size(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("step index starts at 1"));
        }
        Ok(self.alpha0 / math::sqrt(k as f64))
    }

    // k >= 1 already checked by the caller
    fn at(&self, k: u64) -> f64 {
        self.alpha0 / math::sqrt(k as f64)
    }
}

/// Momentum decay rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecaySchedule {
    /// Constant factor `gamma` in (0, 1); exponentially decaying weights.
    Fixed { gamma: f64 },
    /// `gamma(k) = (k / (k + 1))^beta`; polynomially decaying weights.
    InverseProportional { beta: f64 },
}

impl DecaySchedule {
    pub fn fixed(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        Ok(DecaySchedule::Fixed { gamma })
    }

    /// Accepts any finite `beta > 0`. Values outside `(1, inf)` are allowed
    /// but logged as a warning.
    pub fn inverse_proportional(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if beta <= 1.0 {
            log::warn!("beta = {beta} is outside the analysed range (1, inf)");
        }
        Ok(DecaySchedule::InverseProportional { beta })
    }

    pub fn decay_factor(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("decay index starts at 1"));
        }
        Ok(self.at(k))
    }

    fn at(&self, k: u64) -> f64 {
        match *self {
            DecaySchedule::Fixed { gamma } => gamma,
            DecaySchedule::InverseProportional { beta } => {
                let k = k as f64;
                math::powf(k / (k + 1.0), beta)
            }
        }
    }
}

/// Partial sums of a step schedule against the two Robbins-Monro clauses.
///
/// For `alpha_k = alpha0 / sqrt(k)` the first sum diverges like
/// `2 alpha0 sqrt(K)`, and the second one also diverges, like
/// `alpha0^2 ln K`, so the square-summability clause does not hold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobbinsMonroReport {
    pub horizon: u64,
    pub sum_alpha: f64,
    pub sum_alpha_sq: f64,
    /// `2 alpha0 (sqrt(K + 1) - 1)`, an integral lower bound on `sum_alpha`.
    pub sum_alpha_lower: f64,
    /// `alpha0^2 ln(K + 1)` and `alpha0^2 (1 + ln K)` bracket `sum_alpha_sq`.
    pub sum_alpha_sq_bracket: (f64, f64),
}

impl fmt::Display for RobbinsMonroReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "K={}: sum alpha_k = {:.6} (>= {:.6}, grows without bound like sqrt(K)); \
             sum alpha_k^2 = {:.6} (in [{:.6}, {:.6}], grows like ln K, not summable)",
            self.horizon,
            self.sum_alpha,
            self.sum_alpha_lower,
            self.sum_alpha_sq,
            self.sum_alpha_sq_bracket.0,
            self.sum_alpha_sq_bracket.1
        )
    }
}

pub fn check_robbins_monro(s: &StepSchedule, horizon: u64) -> Result<RobbinsMonroReport> {
    if horizon < 2 {
        return Err(Error::invalid("horizon must be at least 2"));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for k in 1..=horizon {
        let a = s.at(k);
        sum += a;
        sum_sq += a * a;
    }
    let a0 = s.alpha0;
    let kf = horizon as f64;
    Ok(RobbinsMonroReport {
        horizon,
        sum_alpha: sum,
        sum_alpha_sq: sum_sq,
        sum_alpha_lower: 2.0 * a0 * (math::sqrt(kf + 1.0) - 1.0),
        sum_alpha_sq_bracket: (a0 * a0 * math::ln(kf + 1.0), a0 * a0 * (1.0 + math::ln(kf))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    Lim,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Sgdm,
        OptimizerKind::Lim,
        OptimizerKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Lim => "lim",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown optimizer '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid(format!("invalid Adam parameters {self:?}")));
        }
        Ok(())
    }
}

/// Everything needed to build an [`OptimizerState`] except the start point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub step: StepSchedule,
    /// Required by SGDM (fixed) and LIM (inverse-proportional); ignored otherwise.
    pub decay: Option<DecaySchedule>,
    pub adam: AdamParams,
}

impl OptimizerConfig {
    pub fn sgd(alpha0: f64) -> Result<Self> {
        Ok(OptimizerConfig {
            kind: OptimizerKind::Sgd,
            step: StepSchedule::new(alpha0)?,
            decay: None,
            adam: AdamParams::default(),
        })
    }

    pub fn sgdm(alpha0: f64, gamma: f64) -> Result<Self> {
        Ok(OptimizerConfig {
            kind: OptimizerKind::Sgdm,
            step: StepSchedule::new(alpha0)?,
            decay: Some(DecaySchedule::fixed(gamma)?),
            adam: AdamParams::default(),
        })
    }

    pub fn lim(alpha0: f64, beta: f64) -> Result<Self> {
        Ok(OptimizerConfig {
            kind: OptimizerKind::Lim,
            step: StepSchedule::new(alpha0)?,
            decay: Some(DecaySchedule::inverse_proportional(beta)?),
            adam: AdamParams::default(),
        })
    }

    pub fn adam(alpha0: f64, params: AdamParams) -> Result<Self> {
        params.validate()?;
        Ok(OptimizerConfig {
            kind: OptimizerKind::Adam,
            step: StepSchedule::new(alpha0)?,
            decay: None,
            adam: params,
        })
    }
}

/// One recorded step: `displacement` is exactly what was added to `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub k: u64,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub gradient: ParamVector,
    pub displacement: ParamVector,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DirectionTrace {
    pub entries: Vec<TraceEntry>,
}

impl DirectionTrace {
    pub fn gradients(&self) -> Vec<ParamVector> {
        self.entries.iter().map(|e| e.gradient.clone()).collect()
    }
}

/// Substitute for [`DecaySchedule::decay_factor`] inside the update rule.
/// Only used to check that the self-test suite notices a broken schedule.
pub type DecayHook = fn(&DecaySchedule, u64) -> f64;

/// Iterate, momentum buffers and step counter of one optimizer run.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: OptimizerConfig,
    k: u64,
    x: ParamVector,
    m: ParamVector,
    v2: ParamVector,
    displacement: ParamVector,
    last_alpha: f64,
    last_gamma: Option<f64>,
    trace: Option<DirectionTrace>,
    decay_hook: Option<DecayHook>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, x0: ParamVector) -> Self {
        let d = x0.len();
        OptimizerState {
            config,
            k: 0,
            x: x0,
            m: ParamVector::zeros(d),
            v2: ParamVector::zeros(d),
            displacement: ParamVector::zeros(d),
            last_alpha: 0.0,
            last_gamma: None,
            trace: None,
            decay_hook: None,
        }
    }

    /// Keep a [`DirectionTrace`] of every step (copies each gradient).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(DirectionTrace::default());
        self
    }

    #[doc(hidden)]
    pub fn with_decay_hook(mut self, hook: DecayHook) -> Self {
        self.decay_hook = Some(hook);
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.kind
    }

    /// Number of completed steps.
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn x(&self) -> &ParamVector {
        &self.x
    }

    pub fn momentum(&self) -> &ParamVector {
        &self.m
    }

    pub fn second_moment(&self) -> &ParamVector {
        &self.v2
    }

    /// `x_k - x_{k-1}` of the last step (zero before the first step).
    pub fn last_displacement(&self) -> &ParamVector {
        &self.displacement
    }

    pub fn last_alpha(&self) -> f64 {
        self.last_alpha
    }

    pub fn last_gamma(&self) -> Option<f64> {
        self.last_gamma
    }

    pub fn trace(&self) -> Option<&DirectionTrace> {
        self.trace.as_ref()
    }

    /// Advances by one step using whichever rule `kind` selects.
    pub fn step(&mut self, g: &ParamVector) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Sgd => self.sgd_step(g),
            OptimizerKind::Sgdm => self.sgdm_step(g),
            OptimizerKind::Lim => self.lim_step(g),
            OptimizerKind::Adam => self.adam_step(g),
        }
    }

    fn expect_kind(&self, kind: OptimizerKind) -> Result<()> {
        if self.config.kind != kind {
            return Err(Error::invalid(format!(
                "{kind} step applied to a {} state",
                self.config.kind
            )));
        }
        Ok(())
    }

    fn decay_at(&self, d: &DecaySchedule, k: u64) -> f64 {
        match self.decay_hook {
            Some(hook) => hook(d, k),
            None => d.at(k),
        }
    }

    pub fn sgd_step(&mut self, g: &ParamVector) -> Result<()> {
        self.expect_kind(OptimizerKind::Sgd)?;
        check_len(self.x.len(), g.len())?;
        let k = self.k + 1;
        let alpha = self.config.step.at(k);
        for (d, gi) in self.displacement.as_mut_slice().iter_mut().zip(g.iter()) {
            *d = -alpha * gi;
        }
        self.finish(k, alpha, None, g)
    }

    pub fn sgdm_step(&mut self, g: &ParamVector) -> Result<()> {
        self.expect_kind(OptimizerKind::Sgdm)?;
        let decay = match self.config.decay {
            Some(d @ DecaySchedule::Fixed { .. }) => d,
            other => {
                return Err(Error::invalid(format!(
                    "sgdm needs a fixed decay schedule, got {other:?}"
                )))
            }
        };
        self.momentum_step(decay, g)
    }

    pub fn lim_step(&mut self, g: &ParamVector) -> Result<()> {
        self.expect_kind(OptimizerKind::Lim)?;
        let decay = match self.config.decay {
            Some(d @ DecaySchedule::InverseProportional { .. }) => d,
            other => {
                return Err(Error::invalid(format!(
                    "lim needs an inverse-proportional decay schedule, got {other:?}"
                )))
            }
        };
        self.momentum_step(decay, g)
    }

    fn momentum_step(&mut self, decay: DecaySchedule, g: &ParamVector) -> Result<()> {
        check_len(self.x.len(), g.len())?;
        let k = self.k + 1;
        let alpha = self.config.step.at(k);
        let gamma = self.decay_at(&decay, k);
        for (m, gi) in self.m.as_mut_slice().iter_mut().zip(g.iter()) {
            *m = gamma * *m - alpha * gi;
        }
        self.displacement
            .as_mut_slice()
            .copy_from_slice(self.m.as_slice());
        self.finish(k, alpha, Some(gamma), g)
    }

    pub fn adam_step(&mut self, g: &ParamVector) -> Result<()> {
        self.expect_kind(OptimizerKind::Adam)?;
        check_len(self.x.len(), g.len())?;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.config.adam;
        let k = self.k + 1;
        let alpha = self.config.step.at(k);
        let c1 = 1.0 - math::powi(beta1, k.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - math::powi(beta2, k.min(i32::MAX as u64) as i32);
        let m = self.m.as_mut_slice();
        let v2 = self.v2.as_mut_slice();
        let disp = self.displacement.as_mut_slice();
        for i in 0..g.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v2[i] = beta2 * v2[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v2[i] / c2;
            disp[i] = -alpha * m_hat / (math::sqrt(v_hat) + epsilon);
        }
        self.finish(k, alpha, None, g)
    }

    fn finish(&mut self, k: u64, alpha: f64, gamma: Option<f64>, g: &ParamVector) -> Result<()> {
        for (x, d) in self
            .x
            .as_mut_slice()
            .iter_mut()
            .zip(self.displacement.iter())
        {
            *x += d;
        }
        self.k = k;
        self.last_alpha = alpha;
        self.last_gamma = gamma;
        if let Some(trace) = self.trace.as_mut() {
            trace.entries.push(TraceEntry {
                k,
                alpha,
                gamma,
                gradient: g.clone(),
                displacement: self.displacement.clone(),
            });
        }
        Ok(())
    }
}

/// Coefficients `w_1..w_k` with `v_k = -sum_j w_j g_j` for the implemented
/// recursions: `alpha_j gamma^(k-j)` (fixed) or
/// `alpha_j ((j + 1) / (k + 1))^beta` (inverse-proportional).
///
/// Returns an empty vector for `k = 0`.
pub fn momentum_weights(d: &DecaySchedule, s: &StepSchedule, k: u64) -> Vec<f64> {
    let kf = k as f64;
    (1..=k)
        .map(|j| {
            let alpha = s.at(j);
            match *d {
                DecaySchedule::Fixed { gamma } => alpha * math::powf(gamma, (k - j) as f64),
                DecaySchedule::InverseProportional { beta } => {
                    alpha * math::powf((j as f64 + 1.0) / (kf + 1.0), beta)
                }
            }
        })
        .collect()
}

/// The weights written in the published closed form, `alpha_j (j / k)^beta`
/// for the inverse-proportional schedule. They differ from
/// [`momentum_weights`] by one index because that closed form pairs
/// `gamma(k - 1)` with `g_{k-1}`. Identical to [`momentum_weights`] for a
/// fixed schedule.
pub fn published_momentum_weights(d: &DecaySchedule, s: &StepSchedule, k: u64) -> Vec<f64> {
    match *d {
        DecaySchedule::Fixed { .. } => momentum_weights(d, s, k),
        DecaySchedule::InverseProportional { beta } => {
            let kf = k as f64;
            (1..=k)
                .map(|j| s.at(j) * math::powf(j as f64 / kf, beta))
                .collect()
        }
    }
}

/// `-sum_j weights_j * grads_j`.
pub fn closed_form_direction(weights: &[f64], grads: &[ParamVector]) -> Result<ParamVector> {
    check_len(weights.len(), grads.len())?;
    let Some(first) = grads.first() else {
        return Err(Error::invalid(
            "closed_form_direction needs at least one gradient",
        ));
    };
    let mut out = ParamVector::zeros(first.len());
    for (w, g) in weights.iter().zip(grads) {
        out.add_scaled(-w, g)?;
    }
    Ok(out)
}
