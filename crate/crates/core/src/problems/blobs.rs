use alloc::format;
use alloc::vec::Vec;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numkit::RngStream;

/// `C` Gaussian clusters in `R^p`: centers are `N(0, I)` draws and sample
/// `i` has label `i mod C` and features `center + spread * N(0, I)`.
/// Class counts therefore differ by at most one.
pub fn synthetic_blobs(
    n: usize,
    p: usize,
    classes: usize,
    spread: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::invalid(format!(
            "need n >= C >= 2, got n={n}, C={classes}"
        )));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let centers: Vec<f64> = (0..classes * p).map(|_| rng.next_gaussian()).collect();
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        for j in 0..p {
            features.push(centers[c * p + j] + spread * rng.next_gaussian());
        }
    }
    Dataset::new(features, labels, p, classes)
}
