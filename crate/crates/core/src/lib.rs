//! Training-based MIMO link simulation and analysis.
//!
//! Two ways of learning a flat-fading `M x K` channel are modelled side by
//! side: time-division multiplexed training (TDMT), where a pilot block
//! precedes the data block, and data-dependent superimposed training (DDST),
//! where the data is projected away from a `K`-periodic pilot before the two
//! are summed. Both use least-squares channel estimation and a zero-forcing
//! receiver with QPSK/Gray detection.
//!
//! The crate provides
//!
//! * the transmit/receive chains ([`tdmt`], [`ddst`]) on top of the dense
//!   complex kernels in [`linalg`] and the modulation/pilot helpers in
//!   [`signal`],
//! * the closed-form large-system BER expressions ([`theory`]) and the
//!   BER-minimising pilot/data power splits ([`power`]),
//! * deterministic parallel Monte Carlo estimation and distributional
//!   validators ([`montecarlo`], [`rmt`], [`stats`]),
//! * table-producing experiment drivers used by the `mimo-training` binary
//!   ([`experiments`]).
//!
//! With the default `parallel` feature, frame loops run on rayon; without it
//! the same code runs sequentially and produces bit-identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ddst;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod montecarlo;
pub mod par;
pub mod power;
pub mod quadrature;
pub mod rmt;
pub mod signal;
pub mod stats;
pub mod tdmt;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use montecarlo::{estimate_ber, BerEstimate, TrialPlan};
pub use power::{AllocationResult, Scheme};
pub use signal::{BitFrame, PowerConfig, SystemDims};

pub use num_complex::Complex64;
