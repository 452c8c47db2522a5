//! Eigenpairs for the tilted engine: Kummer functions for CIR and finite
//! difference ground states for confining fitness.

mod cir;
mod kummer;
mod pinsky;
mod schrodinger;

pub use cir::{cir_eigenpair, cir_ground_lambda, CirEigen, KummerParams};
pub use kummer::{kummer_m, ln_kummer_m};
pub use pinsky::{pinsky_diagnostic, PinskyReport, Trend};
pub use schrodinger::{
    discrete_ground_state, schrodinger_ground_state, DiscreteGroundState, GroundState,
    SchrodingerProblem,
};
