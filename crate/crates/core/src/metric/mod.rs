//! Compactification, the metric `d⋆`, bounded-Lipschitz and Wasserstein
//! distances, and the propagation-of-chaos estimator.

mod bl;
mod compact;
mod dense_lp;
mod dqt;
mod dstar;
mod network;
mod wasserstein;

pub use bl::{bl_distance, bl_distance_dense, bl_distance_with, merge_supports, two_dirac_distance, BlResult, MergedSupport, DENSE_SUPPORT, MAX_SUPPORT};
pub use compact::{bin_1d, compactify, compactify_grid, midpoints, trapezoid_cell_masses, uniform_edges, CompactifiedMeasure};
pub use dense_lp::{maximize as dense_lp_maximize, LpSolution};
pub use dqt::*;
pub use dstar::{dstar, StarMetric, StarPoint};
pub use network::{Arc as FlowArc, NetworkSimplex};
pub use wasserstein::wasserstein1_1d;
