//! Simulation of reconfigurable-antenna arrays for joint communication and
//! sensing: EM-domain mode selection, analog phase-shifter networks and
//! digital precoding.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod em;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod optimizer;
pub mod scenario;
pub mod sweep;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/em-domain.md")]
    mod em_domain {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/beamforming.md")]
    mod beamforming {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
