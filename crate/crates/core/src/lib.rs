//! Channel-resilient task-oriented semantic communication at desk scale.
//!
//! A small encoder/decoder transceiver is trained through an AWGN channel and
//! frozen. Each encoded feature unit is then scored for robustness by
//! optimising injected Gaussian noise against an information bottleneck
//! bound, and the resulting mask steers which units ride on which OFDM
//! subchannels.
//!
//! | module | role |
//! |---|---|
//! | [`nn`] | dense networks, reverse-mode gradients, SGD, softplus |
//! | [`rng`] | seeded platform-deterministic streams |
//! | [`datasets`] | Gaussian mixtures, IDX files, splits |
//! | [`transceiver`] | training, freezing, model files |
//! | [`channel`] | per-subchannel AWGN and CSI |
//! | [`ib_mask`] | δ estimation, σ optimisation, robustness mask |
//! | [`allocation`] | greedy, random, worst-case and exhaustive allocation |
//! | [`eval`] | SNR sweeps and the half-split analysis |
//! | [`pipeline`] | config file and the staged command-line workflow |

pub mod allocation;
pub mod channel;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod ib_mask;
pub mod nn;
pub mod pipeline;
pub mod planted;
pub mod rng;
pub mod transceiver;

pub use error::{Error, Result};
