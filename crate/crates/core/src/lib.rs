//! Functional and cycle-level model of a masked-diffusion accelerator that runs
//! activations in stage-wise MXINT8/4/2 block floating point.
//!
//! The crate is organised bottom-up:
//!
//! - [`mx`]: MXINT block codec (32-element blocks, shared biased exponent).
//! - [`bitserial`]: bit-exact 2-bit-sliced sign-aware multiply-accumulate engine.
//! - [`mask`]: binary masks, four-stage maps, dilation, semantic update, downsampling.
//! - [`schedule`]: timestep-aware stage to precision resolution.
//! - [`ops`]: stage-aware group norm, softmax and attention scoring.
//! - [`workload`]: U-Net-like layer graphs and deterministic synthetic tensors.
//! - [`sim`]: cycle, traffic and energy accounting plus the uniform-MXINT8 baseline.
//! - [`cli`]: the `mxsim` command-line front end.

pub mod bitserial;
pub mod cli;
pub mod error;
pub mod mask;
pub mod mx;
pub mod ops;
pub mod schedule;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use mx::{MxBlock, Precision, BLOCK_SIZE};
