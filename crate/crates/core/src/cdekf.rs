//! Continuous-discrete extended Kalman filter for index-1 stochastic DAEs.
//!
//! The measurement update is the standard EKF step with the output matrix
//! corrected for the algebraic coupling (`C = m_x + m_y dy/dx`, where
//! `dy/dx` solves `g_y dy/dx = -g_x`) and a Joseph-form covariance update.
//! The prediction propagates the mean with the ESDIRK integrator and the
//! covariance with per-step state transition blocks extracted from the
//! iterated-IND sensitivities, closing the process-noise integral with a
//! trapezoidal rule per integrator step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::esdirk::{
    esdirk_step_with_sensitivities, EsdirkScheme, NewtonSettings, SensitivityPair, StepRecord,
};
use crate::model::{join_state, solve_consistent_algebraic, split_state, Model};

/// Filtered/predicted mean pair and differential-state covariance.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl FilterState {
    /// Initial state `(x0, y0, P0)` with `y0` solved to consistency.
    pub fn consistent(
        model: &dyn Model,
        t: f64,
        x0: DVector<f64>,
        y_guess: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let y_hat = solve_consistent_algebraic(model, t, &x0, u, d, y_guess)?;
        Ok(Self { x_hat: x0, y_hat, p: p0 })
    }

    /// Smallest eigenvalue of the (symmetrized) covariance.
    pub fn min_covariance_eigenvalue(&self) -> f64 {
        let sym = symmetrize(&self.p);
        sym.symmetric_eigen().eigenvalues.min()
    }
}

/// Diagnostics of one measurement update.
#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub output_matrix: DMatrix<f64>,
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Measurement update at time `t` with measurement `y_m`, the previously
/// applied input, and the current disturbance.
pub fn filter_update(
    model: &dyn Model,
    state: &FilterState,
    t: f64,
    y_m: &DVector<f64>,
    u_prev: &DVector<f64>,
    d: &DVector<f64>,
    r_k: &DMatrix<f64>,
) -> Result<(FilterState, UpdateReport)> {
    let dims = model.dims();
    let (x, y) = (&state.x_hat, &state.y_hat);

    let predicted = model.m(t, x, y, u_prev, d);
    let innovation = y_m - predicted;

    // output matrix with the algebraic chain: g_y dy/dx = -g_x
    let m_x = model.m_x(t, x, y, u_prev, d);
    let c = if dims.n_y > 0 {
        let m_y = model.m_y(t, x, y, u_prev, d);
        let g_x = model.g_x(t, x, y, u_prev, d);
        let g_y = model.g_y(t, x, y, u_prev, d);
        let dydx = g_y
            .lu()
            .solve(&(-g_x))
            .ok_or(Error::SingularJacobian { context: "algebraic output sensitivity" })?;
        &m_x + &m_y * dydx
    } else {
        m_x
    };

    let innovation_cov = symmetrize(&(&c * &state.p * c.transpose() + r_k));
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or(Error::SingularInnovationCovariance)?;
    // K = P C' R_e^-1 via R_e Z = C P
    let gain = chol.solve(&(&c * &state.p)).transpose();

    let x_hat = &state.x_hat + &gain * &innovation;
    // Joseph form
    let a = DMatrix::identity(dims.n_x, dims.n_x) - &gain * &c;
    let p = symmetrize(&(&a * &state.p * a.transpose() + &gain * r_k * gain.transpose()));

    let y_hat = solve_consistent_algebraic(model, t, &x_hat, u_prev, d, &state.y_hat)?;

    Ok((
        FilterState { x_hat, y_hat, p },
        UpdateReport { innovation, innovation_cov, gain, output_matrix: c },
    ))
}

/// Integrator configuration for the one-step prediction.
#[derive(Debug, Clone)]
pub struct PredictConfig {
    pub scheme: EsdirkScheme,
    pub steps: usize,
    pub newton: NewtonSettings,
}

impl PredictConfig {
    pub fn new(scheme: EsdirkScheme, steps: usize, newton: NewtonSettings) -> Self {
        Self { scheme, steps, newton }
    }
}

/// One-step prediction over `[t, t + t_s]` under the applied input `u`.
///
/// Mean: ESDIRK integration of the DAE. Covariance, per integrator step with
/// transition block `A_n` (the differential-differential block of the
/// per-step sensitivity):
///
/// ```text
/// P <- A_n P A_n' + (h/2) (A_n Q A_n' + Q),   Q = sigma sigma'
/// ```
pub fn predict(
    model: &dyn Model,
    state: &FilterState,
    t: f64,
    u: &DVector<f64>,
    d: &DVector<f64>,
    t_s: f64,
    config: &PredictConfig,
) -> Result<FilterState> {
    let dims = model.dims();
    let n_x = dims.n_x;
    let sigma = model.diffusion();
    let q = &sigma * sigma.transpose();
    let h = t_s / config.steps as f64;

    let mut s = join_state(&state.x_hat, &state.y_hat);
    let mut p = state.p.clone();
    let mut prev: Option<StepRecord> = None;
    for n in 0..config.steps {
        let t_n = t + n as f64 * h;
        let seed = SensitivityPair::initial(dims.n_s(), dims.n_u);
        let (next, record, _sens_rec, pair) = esdirk_step_with_sensitivities(
            model,
            &config.scheme,
            t_n,
            &s,
            u,
            d,
            h,
            prev.as_ref(),
            None,
            &seed,
            &config.newton,
        )
        .map_err(|e| Error::IntegrationFailure { index: n, source: Box::new(e) })?;
        let a_n = pair.wrt_state.view((0, 0), (n_x, n_x)).into_owned();
        let propagated = &a_n * &p * a_n.transpose();
        let q_n = (&a_n * &q * a_n.transpose() + &q) * (h / 2.0);
        p = symmetrize(&(propagated + q_n));
        s = next;
        prev = Some(record);
    }

    let (x_hat, y_end) = split_state(&s, &dims);
    let y_hat = solve_consistent_algebraic(model, t + t_s, &x_hat, u, d, &y_end)?;
    Ok(FilterState { x_hat, y_hat, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esdirk::EsdirkMethod;
    use crate::models::LinearDae;
    use approx::assert_abs_diff_eq;

    fn empty() -> DVector<f64> {
        DVector::zeros(0)
    }

    fn tight_config(steps: usize) -> PredictConfig {
        PredictConfig::new(EsdirkScheme::new(EsdirkMethod::Esdirk34), steps, NewtonSettings::tight())
    }

    #[test]
    fn zero_innovation_leaves_mean_unchanged() {
        let model = LinearDae::scalar_dae(-0.5, 0.3, 0.4, 0.5, 0.1);
        let state = FilterState {
            x_hat: DVector::from_element(1, 1.2),
            y_hat: DVector::from_element(1, 0.48),
            p: DMatrix::from_element(1, 1, 0.7),
        };
        let y_m = model.m(0.0, &state.x_hat, &state.y_hat, &empty(), &empty());
        let r = DMatrix::from_element(1, 1, 0.2);
        let (updated, report) = filter_update(&model, &state, 0.0, &y_m, &empty(), &empty(), &r).unwrap();
        assert_abs_diff_eq!(updated.x_hat[0], state.x_hat[0], epsilon = 1e-14);
        assert_abs_diff_eq!(report.innovation[0], 0.0, epsilon = 1e-14);
        // Joseph form with e = 0 still contracts P
        assert!(updated.p[(0, 0)] < state.p[(0, 0)]);
    }

    #[test]
    fn direct_measurement_gives_identity_output_matrix() {
        // m = x independent of y: C = m_x = I
        let model = LinearDae::example_2x1();
        let x = DVector::from_vec(vec![0.5, -0.3]);
        let u = DVector::from_element(1, 0.1);
        let y = solve_consistent_algebraic(&model, 0.0, &x, &u, &empty(), &DVector::zeros(1)).unwrap();
        let state = FilterState { x_hat: x, y_hat: y, p: DMatrix::identity(2, 2) };
        let y_m = DVector::from_element(1, 0.6);
        let r = DMatrix::from_element(1, 1, 0.1);
        let (_, report) = filter_update(&model, &state, 0.0, &y_m, &u, &empty(), &r).unwrap();
        assert_abs_diff_eq!(report.output_matrix[(0, 0)], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(report.output_matrix[(0, 1)], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn output_matrix_includes_algebraic_chain() {
        // m = x + beta y with y = c x: C = 1 + beta c
        let (beta, c) = (0.5, 0.4);
        let model = LinearDae::scalar_dae(-0.5, 0.3, c, beta, 0.1);
        let state = FilterState {
            x_hat: DVector::from_element(1, 1.0),
            y_hat: DVector::from_element(1, c),
            p: DMatrix::from_element(1, 1, 1.0),
        };
        let y_m = DVector::from_element(1, 1.5);
        let r = DMatrix::from_element(1, 1, 0.2);
        let (_, report) = filter_update(&model, &state, 0.0, &y_m, &empty(), &empty(), &r).unwrap();
        assert_abs_diff_eq!(report.output_matrix[(0, 0)], 1.0 + beta * c, epsilon = 1e-13);
    }

    #[test]
    fn zero_dynamics_covariance_grows_linearly() {
        // f = 0: A = I makes the trapezoidal quadrature exact,
        // P(T) = P0 + sigma sigma' T
        let sigma = 0.3;
        let model = LinearDae {
            fx: DMatrix::zeros(1, 1),
            fy: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::from_element(1, 1, 1.0),
            gu: DMatrix::zeros(1, 0),
            g0: DVector::zeros(1),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::zeros(1, 1),
            sigma: DMatrix::from_element(1, 1, sigma),
        };
        let state = FilterState {
            x_hat: DVector::from_element(1, 0.7),
            y_hat: DVector::from_element(1, 0.7),
            p: DMatrix::from_element(1, 1, 0.4),
        };
        let t_s = 2.5;
        let out = predict(&model, &state, 0.0, &empty(), &empty(), t_s, &tight_config(10)).unwrap();
        assert_abs_diff_eq!(out.p[(0, 0)], 0.4 + sigma * sigma * t_s, epsilon = 1e-8);
    }

    #[test]
    fn scalar_linear_covariance_matches_lyapunov_closed_form() {
        // x' = a x, sigma = 0: P(T) = exp(2 a T) P0
        let a = -0.6;
        let model = LinearDae {
            fx: DMatrix::from_element(1, 1, a),
            fy: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::from_element(1, 1, 1.0),
            gu: DMatrix::zeros(1, 0),
            g0: DVector::zeros(1),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::zeros(1, 1),
            sigma: DMatrix::zeros(1, 1),
        };
        let state = FilterState {
            x_hat: DVector::from_element(1, 1.0),
            y_hat: DVector::from_element(1, 1.0),
            p: DMatrix::from_element(1, 1, 0.8),
        };
        let t_s = 1.0;
        let out = predict(&model, &state, 0.0, &empty(), &empty(), t_s, &tight_config(40)).unwrap();
        let exact = (2.0 * a * t_s).exp() * 0.8;
        assert!((out.p[(0, 0)] - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let model = LinearDae::example_2x1();
        let u = DVector::from_element(1, 0.2);
        let x = DVector::from_vec(vec![0.4, 0.1]);
        let y = solve_consistent_algebraic(&model, 0.0, &x, &u, &empty(), &DVector::zeros(1)).unwrap();
        let mut state = FilterState { x_hat: x, y_hat: y, p: DMatrix::identity(2, 2) * 0.5 };
        let r = DMatrix::from_element(1, 1, 0.05);
        for k in 0..10 {
            let y_m = DVector::from_element(1, 0.3 + 0.01 * k as f64);
            let (up, _) = filter_update(&model, &state, 0.0, &y_m, &u, &empty(), &r).unwrap();
            state = predict(&model, &up, 0.0, &u, &empty(), 0.5, &tight_config(5)).unwrap();
            assert!((&state.p - state.p.transpose()).amax() < 1e-14);
            assert!(state.min_covariance_eigenvalue() > -1e-10 * state.p.trace());
        }
    }
}
