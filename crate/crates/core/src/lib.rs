//! Position-aware relation learning for RGB-thermal salient object detection.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`geometry`]: boundary extraction, exact signed distance maps and
//!   direction fields from binary masks, plus brute-force oracles.
//! - [`autograd`]: a dense tensor tape with the kernels the network needs.
//! - [`losses`]: SDM, direction-field and direction-aware smoothness losses.
//! - [`net`]: a toy dual-stream swin encoder/decoder with the SDM auxiliary
//!   head and direction-field feature refinement, plus training.
//! - [`metrics`]: P-R curves, S-measure, F-measure, E-measure and MAE.
//! - [`io`]: PNG/PGM masks and images, PFM maps, CSV reports.
//!
//! The `prl` binary wraps these behind subcommands; see [`commands`].

pub mod autograd;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
