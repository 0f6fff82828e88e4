pub mod chain;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod operator;
pub mod par;
pub mod random;

pub use error::{Error, Result};
