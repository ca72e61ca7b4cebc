use std::path::Path;

use crate::error::{Error, Result};

pub const RUN_HEADER: &str = "iter,loss,grad_norm,step_norm,alpha_k,gamma_k";

/// One logged iteration. `gamma_k` is 0 for optimizers without a decay factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub iter: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    pub alpha_k: f64,
    pub gamma_k: f64,
}

impl RunRow {
    fn reals(&self) -> [(&'static str, f64); 5] {
        [
            ("loss", self.loss),
            ("grad_norm", self.grad_norm),
            ("step_norm", self.step_norm),
            ("alpha_k", self.alpha_k),
            ("gamma_k", self.gamma_k),
        ]
    }
}

/// Per-iteration log of one training run plus an ordered `key=value` manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub manifest: Vec<(String, String)>,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.manifest.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.manifest.push((key, value)),
        }
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_run_csv(r: &RunRecord) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &r.manifest {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::usage(format!(
                "manifest entry {k:?} cannot be serialized"
            )));
        }
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(RUN_HEADER);
    out.push('\n');
    let mut prev: Option<u64> = None;
    for (i, row) in r.rows.iter().enumerate() {
        if prev.is_some_and(|p| row.iter <= p) {
            return Err(Error::usage(format!(
                "row {i}: iter {} does not increase",
                row.iter
            )));
        }
        prev = Some(row.iter);
        out.push_str(&row.iter.to_string());
        for (name, v) in row.reals() {
            if !v.is_finite() {
                return Err(Error::usage(format!("row {i}: {name} is not finite ({v})")));
            }
            out.push(',');
            out.push_str(&format_real(v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes the record to a new file (never overwrites).
pub fn write_run_csv(r: &RunRecord, path: &Path) -> Result<()> {
    let text = render_run_csv(r)?;
    super::write_new(path, text.as_bytes())
}

pub fn parse_run_csv(text: &str) -> Result<RunRecord> {
    let mut rec = RunRecord::default();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim_start()
                .split_once('=')
                .ok_or_else(|| err(format!("manifest line without '=': {line:?}")))?;
            rec.manifest.push((k.trim().to_string(), v.to_string()));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim() != RUN_HEADER {
                return Err(err(format!("expected header {RUN_HEADER:?}, got {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let iter: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| err(format!("bad iter {:?}: {e}", fields[0])))?;
        let mut reals = [0.0f64; 5];
        for (slot, f) in reals.iter_mut().zip(&fields[1..]) {
            *slot = f
                .trim()
                .parse()
                .map_err(|e| err(format!("bad number {f:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite value {f:?}")));
            }
        }
        if rec.rows.last().is_some_and(|r| r.iter >= iter) {
            return Err(err(format!("iter {iter} does not increase")));
        }
        let [loss, grad_norm, step_norm, alpha_k, gamma_k] = reals;
        rec.rows.push(RunRow {
            iter,
            loss,
            grad_norm,
            step_norm,
            alpha_k,
            gamma_k,
        });
    }
    if !seen_header {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            msg: "missing header line".into(),
        });
    }
    Ok(rec)
}

pub fn read_run_csv(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_csv(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}
