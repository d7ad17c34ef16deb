//! Quasi-Monte-Carlo sample plans.
//!
//! Interior points are Sobol points `y_m` on the reference square, mapped to
//! `x_m = F(y_m)` and weighted by `|det J(y_m)|`, so that the mean of
//! `g(x_m) |det J(y_m)|` estimates the integral of `g` over the patch.
//! Boundary points use a one-dimensional stream weighted by the curve speed.

mod plan;
pub mod sobol;

pub use plan::{
    allocate, sample_antiperiodic, sample_edge, sample_interface, sample_interior, EdgeSample,
    EdgeSet, InteriorSample, InteriorSet, InterfaceSet, MirrorSample, MirrorSet, PairedSample,
    SampleBudgets, SamplePlan,
};
pub use sobol::{sobol, sobol_1d, sobol_2d};
