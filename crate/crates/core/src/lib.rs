//! NMPC for continuous-discrete semi-explicit index-1 stochastic DAEs.
//!
//! The crate provides:
//!
//! - fixed-step ESDIRK integration of index-1 DAEs with stage-value
//!   predictors and iterated internal-numerical-differentiation forward
//!   sensitivities ([`esdirk`]);
//! - an implicit-explicit simulator for the stochastic plant ([`sdae_sim`]);
//! - a continuous-discrete extended Kalman filter ([`cdekf`]);
//! - a multiple-shooting optimal control transcription solved by SQP with
//!   damped BFGS and an active-set QP on the condensed subproblem ([`ocp`]);
//! - a closed-loop controller harness combining all of the above ([`nmpc`]);
//! - bundled models, including an alkaline electrolyzer stack ([`models`]).

pub mod cdekf;
pub mod error;
pub mod esdirk;
pub mod model;
pub mod models;
pub mod nmpc;
pub mod ocp;
pub mod sdae_sim;

pub use error::{Error, Result};
pub use model::{Model, ModelDims};
