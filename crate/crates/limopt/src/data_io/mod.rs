//! On-disk formats: IDX tensors in, CSV run records and SVG charts out.
//!
//! Every writer here creates its file with `create_new`, so an existing
//! file is never overwritten.

use std::fs::{File, OpenOptions};
use std::path::Path;

use crate::error::{Error, Result};

mod csv;
mod idx;
mod svg;

pub use csv::{
    format_real, parse_run_csv, read_run_csv, render_run_csv, write_run_csv, RunRecord, RunRow,
    RUN_HEADER,
};
pub use idx::{encode_idx, load_idx, load_mnist, parse_idx, to_dataset, IdxTensor};
pub use svg::{render_svg_curves, write_svg_curves, Series};

/// Opens `path` for writing, failing if it already exists.
pub fn create_new(path: &Path) -> Result<File> {
    OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::usage(format!(
                    "refusing to overwrite existing file {}",
                    path.display()
                ))
            } else {
                Error::io(path, e)
            }
        })
}

pub(crate) fn write_new(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut f = create_new(path)?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}
