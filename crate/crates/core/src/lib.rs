pub mod closed_form;
pub mod error;
pub mod metric;
pub mod model;
pub mod numerics;
pub mod particle;
pub mod pde;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod tolerances;

pub use error::{Error, Result};
