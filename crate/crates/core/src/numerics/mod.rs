//! Shared numerical kernels.

pub mod kde;
pub mod linalg;
pub mod quadrature;
pub mod special;
pub mod summation;

pub use kde::{kde, Bandwidth, GridDensity, KdeOptions};
pub use linalg::{covariance_integral, matrix_exp, GaussianMoments};
pub use quadrature::{integrate, trapezoid, trapezoid_uniform, GaussHermite, Rule};
