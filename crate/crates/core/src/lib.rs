//! Finite-difference laboratory for the localization landscape of
//! `L = -Δ + V` on a periodic box: landscape solves, eigenvalue counting,
//! landscape-based counting functions and Anderson ensembles.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod error;
pub mod fld;
pub mod grid;
pub mod inertia;
pub mod landscape;
pub mod lawcheck;
pub mod operator;
pub mod potential;
pub mod stochastic;

pub use counting::{CountingCurve, CurveKind};
pub use error::{Error, Result};
pub use grid::{CubePartition, Reduction, TorusGrid};
pub use landscape::{LandscapeField, Preconditioner, SolverOptions};
pub use lawcheck::{LawParams, LawReport};
pub use operator::{CountingBackend, DiscreteOperator, Spectrum};
pub use potential::{DistributionSpec, PotentialField, Provenance};
pub use stochastic::{EnsembleConfig, EnsembleCurve, EnsembleResult, TailEnvelopeParams};
