//! Loss curves of several runs in one SVG chart.

use std::path::{Path, PathBuf};

use crate::data_io::{read_run_csv, write_svg_curves, RunRecord, Series};
use crate::error::{Error, Result};

/// Legend label: optimizer followed by its schedule parameters and seed.
pub fn series_name(record: &RunRecord, source: &Path) -> Result<String> {
    let optimizer = record.get("optimizer").ok_or_else(|| Error::Parse {
        line: record.manifest.len() + 1,
        msg: format!("{}: manifest has no 'optimizer' entry", source.display()),
    })?;
    let mut name = optimizer.to_string();
    for key in ["gamma", "beta", "alpha0", "seed"] {
        if let Some(v) = record.get(key) {
            name.push_str(&format!(" {key}={v}"));
        }
    }
    Ok(name)
}

/// Reads every input before creating `out`, then plots loss against iteration.
pub fn cmd_plot(inputs: &[PathBuf], out: &Path, log_y: bool) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::usage("plot needs at least one run CSV"));
    }
    let mut series = Vec::with_capacity(inputs.len());
    for path in inputs {
        let record = read_run_csv(path)?;
        series.push(Series {
            name: series_name(&record, path)?,
            points: record
                .rows
                .iter()
                .map(|r| (r.iter as f64, r.loss))
                .collect(),
        });
    }
    write_svg_curves(&series, out, log_y)?;
    log::info!("wrote {}", out.display());
    Ok(())
}
