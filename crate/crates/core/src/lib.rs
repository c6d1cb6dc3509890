pub mod channel;
pub mod error;
pub mod fidelity;
pub mod format;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
