//! Simulator and Monte Carlo estimator for stochastic p-Laplacian systems
//!
//!   du = div S(grad u) dt + Phi(u) dW,   u = 0 on the boundary of (0,1)^d,
//!
//! with semi-implicit Euler-Maruyama time stepping, online evaluation of
//! energy / gradient regularity functionals, and certification utilities for
//! the ellipticity bounds, noise growth conditions, and the truncated
//! potential family h_L.

pub mod error;
pub mod estimators;
pub mod farm;
pub mod grid;
pub mod hl;
pub mod model;
pub mod noise;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{
    aggregate, moser_ladder, AggregateReport, EstimatorConfig, FunctionalValues, MoserLadder,
    Stats,
};
pub use grid::{Grid, NodalField, SubdomainMask, WeightKind};
pub use hl::{certify_lemma, HlFamily, LemmaReport, PsiKind};
pub use model::{check_ellipticity, ModelSpec, OperatorFamily};
pub use noise::{verify_growth, NoiseFamily, NoiseModel, NoiseOp};
pub use solver::{implicit_step, run_path, InitialData, PathRun, SolverConfig};
