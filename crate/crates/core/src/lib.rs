//! Two-pathway video network toolkit: architecture and cost model, a small
//! double-precision tensor engine, training, evaluation and detection metrics.

pub mod arch;
pub mod config;
pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod net;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
