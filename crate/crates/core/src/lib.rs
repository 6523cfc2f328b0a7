//! Uniform sampling from a body known only through a membership oracle,
//! with a non-asymptotic schedule and empirical checks of its guarantees.

pub mod bodies;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod planner;
pub mod rng;
pub mod sampler;
pub mod specfun;

pub use bodies::{BBox, Body, GrowthCertificate};
pub use error::{Error, Result};
pub use planner::{plan, Plan, PlanInputs};
pub use sampler::{run_ensemble, run_in_and_out, run_proximal_ideal, ChainParams, Outcome, RunResult};
pub use specfun::chi_tail;
