//! Grid sweeps over experiment settings.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use limopt_core::OptimizerKind;
use rayon::prelude::*;

use super::config::{read_key_values, ExperimentConfig};
use super::run::{ensure_out_dir, execute_validated, refuse_existing, RunOutcome};
use crate::data_io::{format_real, write_run_csv};
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "sweep_summary.csv";
pub const SUMMARY_HEADER: &str = "index,optimizer,setting,file,final_loss,tail_mean_loss,best";

/// Parameter names with their candidate values, in file order.
pub type Grid = Vec<(String, Vec<String>)>;

/// Reads `key=v1,v2,...` lines. Keys follow the config file rules.
pub fn read_grid(path: &Path) -> Result<Grid> {
    let entries = read_key_values(path)?;
    let mut grid = Grid::new();
    for e in entries {
        if e.key == "out" {
            return Err(Error::usage(format!(
                "line {}: 'out' cannot be swept",
                e.line
            )));
        }
        let values: Vec<String> = e.value.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::usage(format!(
                "line {}: empty value for '{}'",
                e.line, e.key
            )));
        }
        grid.push((e.key, values));
    }
    Ok(grid)
}

/// Cartesian product, first key varying slowest. An empty grid yields the
/// single empty setting.
pub fn expand_grid(grid: &Grid) -> Vec<Vec<(String, String)>> {
    let mut settings: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        settings = settings
            .into_iter()
            .flat_map(|s| {
                values.iter().map(move |v| {
                    let mut next = s.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    settings
}

fn label(setting: &[(String, String)]) -> String {
    if setting.is_empty() {
        return "base".into();
    }
    setting
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub optimizer: OptimizerKind,
    pub setting: String,
    /// Run CSV name, `None` when the run diverged.
    pub file: Option<String>,
    pub final_loss: f64,
    pub tail_mean_loss: f64,
    pub best: bool,
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Core(limopt_core::Error::NonFinite(_)))
}

/// Runs every grid point from `base` and writes the run CSVs plus
/// `sweep_summary.csv` into the base output directory.
pub fn cmd_sweep(base: &ExperimentConfig, grid: &Grid) -> Result<Vec<SweepRow>> {
    let settings = expand_grid(grid);
    let mut configs = Vec::with_capacity(settings.len());
    for (i, s) in settings.iter().enumerate() {
        let mut cfg = base.clone();
        for (k, v) in s {
            cfg.set(k, v)?;
        }
        let oc = cfg
            .validate()
            .map_err(|e| Error::usage(format!("grid point {i} ({}): {e}", label(s))))?;
        configs.push((cfg, oc));
    }
    let out = &base.out_dir;
    let names: Vec<String> = configs
        .iter()
        .enumerate()
        .map(|(i, (c, _))| {
            let stem = c.run_file_name();
            format!("{}_g{i}.csv", stem.trim_end_matches(".csv"))
        })
        .collect();
    let summary_path = out.join(SUMMARY_FILE);
    refuse_existing(&summary_path)?;
    for n in &names {
        refuse_existing(&out.join(n))?;
    }

    let results: Vec<Result<RunOutcome>> = configs
        .par_iter()
        .map(|(c, oc)| execute_validated(c, *oc))
        .collect();
    ensure_out_dir(out)?;
    let mut rows = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let optimizer = configs[i].0.optimizer;
        let setting = label(&settings[i]);
        match r {
            Ok(o) => {
                write_run_csv(&o.record, &out.join(&names[i]))?;
                rows.push(SweepRow {
                    index: i,
                    optimizer,
                    setting,
                    file: Some(names[i].clone()),
                    final_loss: o.final_loss,
                    tail_mean_loss: o.tail_mean_loss,
                    best: false,
                });
            }
            Err(e) if is_divergence(&e) => {
                log::warn!("grid point {i} ({setting}) diverged: {e}");
                rows.push(SweepRow {
                    index: i,
                    optimizer,
                    setting,
                    file: None,
                    final_loss: f64::NAN,
                    tail_mean_loss: f64::NAN,
                    best: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    flag_best(&mut rows);
    crate::data_io::write_new(&summary_path, render_summary(&rows).as_bytes())?;
    log::info!("wrote {} runs and {}", rows.len(), summary_path.display());
    Ok(rows)
}

/// Marks, per optimizer, the first row with the smallest finite tail loss.
fn flag_best(rows: &mut [SweepRow]) {
    let mut best: HashMap<OptimizerKind, usize> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        if !r.tail_mean_loss.is_finite() {
            continue;
        }
        let e = best.entry(r.optimizer).or_insert(i);
        if r.tail_mean_loss < rows[*e].tail_mean_loss {
            *e = i;
        }
    }
    for i in best.into_values() {
        rows[i].best = true;
    }
}

pub fn render_summary(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_HEADER}");
    for r in rows {
        let real = |v: f64| {
            if v.is_finite() {
                format_real(v)
            } else {
                "nan".into()
            }
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.index,
            r.optimizer,
            r.setting,
            r.file.as_deref().unwrap_or(""),
            real(r.final_loss),
            real(r.tail_mean_loss),
            u8::from(r.best)
        );
    }
    s
}
