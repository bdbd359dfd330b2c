//! Bundled models: the electrolyzer stack and linear/nonlinear test systems.

mod electrolyzer;
mod linear;

pub use electrolyzer::{Electrolyzer, ElectrolyzerParams, POWER_RESIDUAL_SCALE};
pub use linear::{CubicDecay, LinearDae};
