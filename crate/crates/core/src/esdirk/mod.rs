//! Fixed-step ESDIRK methods for index-1 DAEs: tableaus, stage value
//! predictors, integration, and iterated-IND forward sensitivities.

mod integrator;
mod predictor;
mod tableau;

pub use integrator::{
    esdirk_step, esdirk_step_with_sensitivities, integrate, integrate_with_sensitivities,
    newton_solve_stage, scaled_residual_norm, EsdirkScheme, IterationMatrix, NewtonSettings,
    SensRecord, SensitivityPair, StepRecord, Trajectory, INCONSISTENT_INPUT_TOL,
};
pub use predictor::PredictorCoefficients;
pub use tableau::{make_tableau, ButcherTableau, EsdirkMethod};
