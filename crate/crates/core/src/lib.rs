//! Classic and initial-boundary corrected (IBC) Strang splitting for
//! finite-difference diffusion-reaction problems.

pub mod bench;
pub mod discretize;
pub mod flows;
pub mod integrators;
pub mod ode;
pub mod opfunc;
