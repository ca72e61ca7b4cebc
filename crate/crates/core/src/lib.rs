//! Stochastic optimizers with inverse-proportional momentum decay.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! parts: vector kernels and seeded random streams ([`numkit`]), step and
//! decay schedules plus the SGD / SGDM / LIM / Adam update rules ([`optim`]),
//! stochastic test objectives ([`problems`]) and the variance checks for the
//! momentum direction ([`variance_lab`]).
//!
//! File formats and the command-line front end live in the `limopt` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub(crate) mod math;
pub mod numkit;
pub mod optim;
pub mod problems;
pub mod variance_lab;

pub use error::{Error, Result};
pub use numkit::{axpy, dot, norm2, ParamVector, RngStream};
pub use optim::{
    AdamParams, DecaySchedule, OptimizerConfig, OptimizerKind, OptimizerState, StepSchedule,
};
pub use problems::{Dataset, Problem};
