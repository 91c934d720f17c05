//! Dense Associative Memory engine and continual-learning benchmark.

pub mod continual;
pub mod dam;
pub mod data;
pub mod error;
pub mod metrics;

pub use error::{Error, ErrorKind, Result};

/// Generator used for every seeded stream in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
pub mod harness;
