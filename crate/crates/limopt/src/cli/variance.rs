//! Monte Carlo estimates of the direction variance against the exact value
//! and the fixed-factor and inverse-proportional bounds.

use std::fmt::Write as _;
use std::path::PathBuf;

use limopt_core::problems::{pure_noise_problem, Problem};
use limopt_core::variance_lab::{aggregate_replicas, replica_direction, VarianceReport};
use limopt_core::{DecaySchedule, OptimizerConfig, OptimizerKind};
use rayon::prelude::*;

use super::config::{ExperimentConfig, ProblemKind};
use super::run::{default_quadratic, ensure_out_dir, refuse_existing};
use crate::data_io::format_real;
use crate::error::{Error, Result};

pub const VARIANCE_HEADER: &str = "k,estimate,standard_error,exact,bound_thm2,bound_thm3";

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRequest {
    pub config: ExperimentConfig,
    pub ks: Vec<u64>,
    pub replicas: usize,
}

impl VarianceRequest {
    pub fn validate(&self) -> Result<OptimizerConfig> {
        let cfg = &self.config;
        if !matches!(cfg.problem, ProblemKind::Noise | ProblemKind::Quadratic) {
            return Err(Error::usage(format!(
                "variance needs the noise or quadratic oracle, not {}",
                cfg.problem
            )));
        }
        if !matches!(cfg.optimizer, OptimizerKind::Sgdm | OptimizerKind::Lim) {
            return Err(Error::usage(format!(
                "variance needs sgdm or lim, not {}",
                cfg.optimizer
            )));
        }
        let oc = cfg.validate()?;
        if self.replicas < 2 {
            return Err(Error::usage(format!(
                "need at least 2 replicas, got {}",
                self.replicas
            )));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::usage("--k needs one or more values >= 1"));
        }
        Ok(oc)
    }

    pub fn file_name(&self) -> String {
        format!(
            "variance_{}_{}_s{}.csv",
            self.config.problem, self.config.optimizer, self.config.seed
        )
    }
}

fn estimate_all(
    p: &(impl Problem + Sync),
    oc: &OptimizerConfig,
    req: &VarianceRequest,
) -> Result<Vec<VarianceReport>> {
    req.ks
        .iter()
        .map(|&k| {
            // collect keeps replica order, so the result does not depend on scheduling
            let outcomes = (0..req.replicas as u64)
                .into_par_iter()
                .map(|r| replica_direction(p, oc, k, req.config.seed, r))
                .collect::<limopt_core::Result<Vec<_>>>()?;
            Ok(aggregate_replicas(p, oc, k, &outcomes)?)
        })
        .collect()
}

/// Reports for every requested `k`, in request order.
pub fn variance_reports(req: &VarianceRequest) -> Result<Vec<VarianceReport>> {
    let oc = req.validate()?;
    reports_validated(req, &oc)
}

fn reports_validated(req: &VarianceRequest, oc: &OptimizerConfig) -> Result<Vec<VarianceReport>> {
    let cfg = &req.config;
    match cfg.problem {
        ProblemKind::Noise => estimate_all(&pure_noise_problem(cfg.dim, cfg.sigma)?, oc, req),
        _ => estimate_all(
            &default_quadratic(cfg.dim, cfg.sigma, cfg.noise_mv)?,
            oc,
            req,
        ),
    }
}

/// CSV text with the settings as `# key=value` lines. Bound columns not
/// matching the optimizer's decay schedule are left empty.
pub fn render_variance_csv(
    req: &VarianceRequest,
    oc: &OptimizerConfig,
    reports: &[VarianceReport],
) -> String {
    let mut out = String::new();
    for (k, v) in req.config.manifest() {
        if k != "iters" && k != "batch" {
            let _ = writeln!(out, "# {k}={v}");
        }
    }
    let _ = writeln!(out, "# replicas={}", req.replicas);
    let _ = writeln!(out, "{VARIANCE_HEADER}");
    let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    for r in reports {
        let (thm2, thm3) = match oc.decay {
            Some(DecaySchedule::Fixed { .. }) => (Some(r.bound), None),
            _ => (None, Some(r.bound)),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            format_real(r.estimate),
            format_real(r.standard_error),
            opt(r.exact),
            opt(thm2),
            opt(thm3)
        );
    }
    out
}

/// Validates, estimates and writes `<out>/variance_<problem>_<optimizer>_s<seed>.csv`.
pub fn cmd_variance(req: &VarianceRequest) -> Result<(PathBuf, Vec<VarianceReport>)> {
    let oc = req.validate()?;
    let path = req.config.out_dir.join(req.file_name());
    refuse_existing(&path)?;
    let reports = reports_validated(req, &oc)?;
    let text = render_variance_csv(req, &oc, &reports);
    ensure_out_dir(&req.config.out_dir)?;
    crate::data_io::write_new(&path, text.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok((path, reports))
}
