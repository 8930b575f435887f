pub mod baselines;
pub mod chain;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oas;
pub mod par;
pub mod split_merge;
pub mod weights;

pub use error::{Error, Result};
