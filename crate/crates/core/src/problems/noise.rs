use alloc::format;

use super::{assert_dim, KnownConstants, Problem};
use crate::error::{Error, Result};
use crate::math;
use crate::numkit::{ParamVector, RngStream};

/// `F = 0` with gradient noise `N(0, sigma^2 I)`: the exact oracle for the
/// variance bounds, since `grad F = 0`, `M = d sigma^2`, `M_V = 0`, `L = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PureNoise {
    d: usize,
    sigma: f64,
}

/// `sigma = 0` is accepted and gives a deterministic zero gradient.
pub fn pure_noise_problem(d: usize, sigma: f64) -> Result<PureNoise> {
    if d == 0 {
        return Err(Error::invalid("pure noise problem needs d >= 1"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    Ok(PureNoise { d, sigma })
}

impl PureNoise {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Problem for PureNoise {
    fn name(&self) -> &str {
        "noise"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.d)
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        assert_dim(self, x);
        0.0
    }

    fn full_gradient(&self, x: &ParamVector) -> ParamVector {
        assert_dim(self, x);
        ParamVector::zeros(self.d)
    }

    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        rng: &mut RngStream,
        batch: usize,
    ) -> ParamVector {
        assert_dim(self, x);
        let s = self.sigma / math::sqrt(batch.max(1) as f64);
        ParamVector::from_vec((0..self.d).map(|_| s * rng.next_gaussian()).collect())
    }

    fn known_constants(&self) -> Option<KnownConstants> {
        Some(KnownConstants {
            lipschitz: 0.0,
            m: self.d as f64 * self.sigma * self.sigma,
            m_v: 0.0,
        })
    }

    fn is_pure_noise(&self) -> bool {
        true
    }
}
