pub mod batch;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod levy;
pub mod matching;
pub mod quad;
pub mod radial;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod sphere;
pub mod validation;
pub mod variates;

pub use error::{PgnError, Result};
