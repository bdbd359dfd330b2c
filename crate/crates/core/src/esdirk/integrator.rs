//! Fixed-step ESDIRK integration of semi-explicit index-1 DAEs with
//! inexact-Newton stage solves and forward sensitivities by iterated
//! internal numerical differentiation.
//!
//! One iteration matrix is assembled and LU-factorized per step and reused
//! across all implicit stages. Sensitivities are propagated through the
//! exact discrete scheme that was executed: same factorization, same number
//! of Newton corrections, same iterate sequence, with the residual Jacobian
//! re-evaluated at every iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{join_state, split_state, Model};

use super::predictor::PredictorCoefficients;
use super::tableau::{make_tableau, ButcherTableau, EsdirkMethod};

/// Threshold on `|g|_inf` above which a step refuses its initial state.
pub const INCONSISTENT_INPUT_TOL: f64 = 1e-6;

/// Convergence control for the inexact Newton stage solves.
///
/// The residual is accepted when
/// `max_j |r_j| / max(abs, rel * |s_j|) < tau`.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub tau: f64,
    pub abs: f64,
    pub rel: f64,
    pub max_iterations: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tau: 0.1, abs: 1e-6, rel: 1e-3, max_iterations: 20 }
    }
}

impl NewtonSettings {
    /// Settings that drive the stage solves to (near) machine precision;
    /// used where an oracle comparison depends on fully converged stages.
    pub fn tight() -> Self {
        Self { tau: 1e-3, abs: 1e-11, rel: 1e-11, max_iterations: 60 }
    }
}

/// Scaled max-norm of a stage residual `r` against the iterate `s`.
pub fn scaled_residual_norm(r: &DVector<f64>, s: &DVector<f64>, settings: &NewtonSettings) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..r.len() {
        let scale = settings.abs.max(settings.rel * s[j].abs());
        worst = worst.max(r[j].abs() / scale);
    }
    worst
}

/// LU factorization of the step's iteration matrix
/// `[[I - h gamma f_x, -h gamma f_y], [-g_x, -g_y]]`, built once per step at
/// the step's starting point.
pub struct IterationMatrix {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub dim: usize,
}

impl IterationMatrix {
    pub fn assemble(
        model: &dyn Model,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
        h_gamma: f64,
    ) -> Result<Self> {
        let m = stage_jacobian(model, t, x, y, u, d, h_gamma);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { context: "iteration matrix" });
        }
        let dim = m.nrows();
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularJacobian { context: "iteration matrix" });
        }
        Ok(Self { lu, dim })
    }

    fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(rhs).ok_or(Error::SingularJacobian { context: "iteration matrix solve" })
    }

    fn solve_mat(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu.solve(rhs).ok_or(Error::SingularJacobian { context: "iteration matrix solve" })
    }
}

/// `[[I - h gamma f_x, -h gamma f_y], [-g_x, -g_y]]` at the given point.
fn stage_jacobian(
    model: &dyn Model,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    h_gamma: f64,
) -> DMatrix<f64> {
    let dims = model.dims();
    let (n_x, n_y) = (dims.n_x, dims.n_y);
    let f_x = model.f_x(t, x, y, u, d);
    let f_y = model.f_y(t, x, y, u, d);
    let mut m = DMatrix::zeros(n_x + n_y, n_x + n_y);
    for i in 0..n_x {
        for j in 0..n_x {
            m[(i, j)] = -h_gamma * f_x[(i, j)];
        }
        m[(i, i)] += 1.0;
        for j in 0..n_y {
            m[(i, n_x + j)] = -h_gamma * f_y[(i, j)];
        }
    }
    if n_y > 0 {
        let g_x = model.g_x(t, x, y, u, d);
        let g_y = model.g_y(t, x, y, u, d);
        for i in 0..n_y {
            for j in 0..n_x {
                m[(n_x + i, j)] = -g_x[(i, j)];
            }
            for j in 0..n_y {
                m[(n_x + i, n_x + j)] = -g_y[(i, j)];
            }
        }
    }
    m
}

/// Combined-state sensitivities `(ds/ds0, ds/du)` carried along a trajectory.
#[derive(Debug, Clone)]
pub struct SensitivityPair {
    pub wrt_state: DMatrix<f64>,
    pub wrt_input: DMatrix<f64>,
}

impl SensitivityPair {
    /// `ds0/ds0 = I`, `ds0/du = 0`.
    pub fn initial(n_s: usize, n_u: usize) -> Self {
        Self {
            wrt_state: DMatrix::identity(n_s, n_s),
            wrt_input: DMatrix::zeros(n_s, n_u),
        }
    }
}

/// Everything one step leaves behind: converged stage values (stage 1 is the
/// step's starting state), Newton iterate counts per implicit stage (the
/// initial guess counts as the first iterate), the embedded error estimate,
/// and the number of iteration-matrix factorizations (always one).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub stages: Vec<DVector<f64>>,
    pub iterates_per_stage: Vec<usize>,
    pub error_estimate: DVector<f64>,
    pub factorizations: usize,
}

/// Per-stage sensitivity matrices of one step, used to seed the next step's
/// predictor sensitivities.
#[derive(Debug, Clone)]
pub struct SensRecord {
    pub wrt_state: Vec<DMatrix<f64>>,
    pub wrt_input: Vec<DMatrix<f64>>,
}

/// A tableau bundled with its (optional) stage value predictors.
#[derive(Debug, Clone)]
pub struct EsdirkScheme {
    pub tableau: ButcherTableau,
    pub predictors: Option<PredictorCoefficients>,
}

impl EsdirkScheme {
    /// Method with stage value predictors computed at unit step ratio.
    pub fn new(method: EsdirkMethod) -> Self {
        let tableau = make_tableau(method);
        let predictors = Some(PredictorCoefficients::for_tableau(&tableau, 1.0));
        Self { tableau, predictors }
    }

    /// Method using the trivial predictor on every step.
    pub fn without_predictors(method: EsdirkMethod) -> Self {
        Self { tableau: make_tableau(method), predictors: None }
    }
}

struct StageSens {
    d_state: DMatrix<f64>,
    d_input: DMatrix<f64>,
    psi_state: DMatrix<f64>,
    psi_input: DMatrix<f64>,
    h_gamma: f64,
}

/// Solves one implicit stage residual
/// `R(S) = [X - h gamma f(T, X, Y, u, d) - psi; -g(T, X, Y, u, d)] = 0`
/// with the inexact Newton scheme using the frozen iteration matrix.
///
/// The convergence check runs before each correction, so an
/// already-converged guess returns zero corrections. Returns the converged
/// stage, the number of corrections performed, and `f` at the converged
/// stage.
pub fn newton_solve_stage(
    model: &dyn Model,
    matrix: &IterationMatrix,
    t_stage: f64,
    psi: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    guess: DVector<f64>,
    h_gamma: f64,
    settings: &NewtonSettings,
) -> Result<(DVector<f64>, usize)> {
    let (s, corrections, _f) =
        solve_stage(model, matrix, t_stage, psi, u, d, guess, h_gamma, settings, None)?;
    Ok((s, corrections))
}

#[allow(clippy::too_many_arguments)]
fn solve_stage(
    model: &dyn Model,
    matrix: &IterationMatrix,
    t_stage: f64,
    psi: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    guess: DVector<f64>,
    h_gamma: f64,
    settings: &NewtonSettings,
    mut sens: Option<&mut StageSens>,
) -> Result<(DVector<f64>, usize, DVector<f64>)> {
    let dims = model.dims();
    let (n_x, n_y) = (dims.n_x, dims.n_y);
    let mut s = guess;
    let mut corrections = 0usize;
    loop {
        let (x_i, y_i) = split_state(&s, &dims);
        let f_i = model.f(t_stage, &x_i, &y_i, u, d);
        let g_i = model.g(t_stage, &x_i, &y_i, u, d);
        if f_i.iter().chain(g_i.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { context: "stage residual" });
        }
        let mut r = DVector::zeros(n_x + n_y);
        for i in 0..n_x {
            r[i] = s[i] - h_gamma * f_i[i] - psi[i];
        }
        for i in 0..n_y {
            r[n_x + i] = -g_i[i];
        }
        if scaled_residual_norm(&r, &s, settings) < settings.tau {
            return Ok((s, corrections, f_i));
        }
        if corrections >= settings.max_iterations {
            return Err(Error::NoConvergence {
                context: "stage Newton",
                iterations: corrections,
                residual: scaled_residual_norm(&r, &s, settings),
            });
        }
        // IND: propagate derivatives through this correction with dR/dS at
        // the current iterate, before the state update
        if let Some(ctx) = sens.as_deref_mut() {
            let jac = stage_jacobian(model, t_stage, &x_i, &y_i, u, d, ctx.h_gamma);
            let mut dr_state = &jac * &ctx.d_state;
            {
                let mut rows = dr_state.rows_mut(0, n_x);
                rows -= &ctx.psi_state;
            }
            ctx.d_state -= matrix.solve_mat(&dr_state)?;

            let f_u = model.f_u(t_stage, &x_i, &y_i, u, d);
            let mut dr_input = &jac * &ctx.d_input;
            {
                let mut rows = dr_input.rows_mut(0, n_x);
                rows -= &ctx.psi_input;
                rows -= f_u * ctx.h_gamma;
            }
            if n_y > 0 {
                let g_u = model.g_u(t_stage, &x_i, &y_i, u, d);
                let mut rows = dr_input.rows_mut(n_x, n_y);
                rows -= g_u;
            }
            ctx.d_input -= matrix.solve_mat(&dr_input)?;
        }
        let delta = matrix.solve_vec(&(-r))?;
        s += delta;
        corrections += 1;
    }
}

struct StepOutput {
    state: DVector<f64>,
    record: StepRecord,
    sens: Option<(SensRecord, SensitivityPair)>,
}

#[allow(clippy::too_many_arguments)]
fn step_core(
    model: &dyn Model,
    scheme: &EsdirkScheme,
    t: f64,
    s: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    h: f64,
    prev: Option<&StepRecord>,
    prev_sens: Option<&SensRecord>,
    sens_in: Option<&SensitivityPair>,
    settings: &NewtonSettings,
) -> Result<StepOutput> {
    let dims = model.dims();
    let (n_x, n_y) = (dims.n_x, dims.n_y);
    let tableau = &scheme.tableau;
    let n_stages = tableau.stages;
    let (x_k, y_k) = split_state(s, &dims);

    if n_y > 0 {
        let g0 = model.g(t, &x_k, &y_k, u, d);
        if g0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { context: "step input" });
        }
        let residual = g0.amax();
        if residual > INCONSISTENT_INPUT_TOL {
            return Err(Error::InconsistentInput { residual, tolerance: INCONSISTENT_INPUT_TOL });
        }
    }

    let h_gamma = h * tableau.gamma;
    let matrix = IterationMatrix::assemble(model, t, &x_k, &y_k, u, d, h_gamma)?;

    let f_1 = model.f(t, &x_k, &y_k, u, d);
    if f_1.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { context: "step input" });
    }

    let mut stages: Vec<DVector<f64>> = Vec::with_capacity(n_stages);
    let mut f_evals: Vec<DVector<f64>> = Vec::with_capacity(n_stages);
    let mut iterates = Vec::with_capacity(n_stages - 1);
    stages.push(s.clone());
    f_evals.push(f_1);

    // only populated when sensitivities are requested
    let mut stage_sens_state: Vec<DMatrix<f64>> = Vec::new();
    let mut stage_sens_input: Vec<DMatrix<f64>> = Vec::new();
    let mut stage_fx: Vec<DMatrix<f64>> = Vec::new();
    let mut stage_fy: Vec<DMatrix<f64>> = Vec::new();
    let mut stage_fu: Vec<DMatrix<f64>> = Vec::new();
    if let Some(seed) = sens_in {
        stage_sens_state.push(seed.wrt_state.clone());
        stage_sens_input.push(seed.wrt_input.clone());
        stage_fx.push(model.f_x(t, &x_k, &y_k, u, d));
        stage_fy.push(model.f_y(t, &x_k, &y_k, u, d));
        stage_fu.push(model.f_u(t, &x_k, &y_k, u, d));
    }

    for i in 1..n_stages {
        let t_stage = t + tableau.c[i] * h;
        let mut psi = x_k.clone();
        for (j, f_j) in f_evals.iter().enumerate() {
            psi += f_j * (h * tableau.a[(i, j)]);
        }

        let guess = match (prev, &scheme.predictors) {
            (Some(record), Some(pred)) => pred.predict(i + 1, &record.stages),
            _ => s.clone(),
        };

        let mut stage_sens = sens_in.map(|seed| {
            let n_cols_s = seed.wrt_state.ncols();
            let n_cols_u = seed.wrt_input.ncols();
            // predictor derivative when the guess came from the predictor and
            // the previous step's stage sensitivities are available; the
            // derivative of the trivial guess otherwise
            let (d_state, d_input) = match (prev, prev_sens, &scheme.predictors) {
                (Some(_), Some(ps), Some(pred)) => {
                    let row = i - 1;
                    let mut ds = &ps.wrt_state[0] * pred.alpha[row];
                    let mut du = &ps.wrt_input[0] * pred.alpha[row];
                    for j in 1..ps.wrt_state.len() {
                        ds += &ps.wrt_state[j] * pred.beta[(row, j - 1)];
                        du += &ps.wrt_input[j] * pred.beta[(row, j - 1)];
                    }
                    (ds, du)
                }
                _ => (seed.wrt_state.clone(), seed.wrt_input.clone()),
            };
            debug_assert_eq!(d_state.ncols(), n_cols_s);
            debug_assert_eq!(d_input.ncols(), n_cols_u);

            let mut psi_state = DMatrix::zeros(n_x, n_cols_s);
            psi_state.copy_from(&seed.wrt_state.rows(0, n_x));
            let mut psi_input = DMatrix::zeros(n_x, n_cols_u);
            psi_input.copy_from(&seed.wrt_input.rows(0, n_x));
            for j in 0..i {
                let w = h * tableau.a[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let f_s_state = &stage_fx[j] * stage_sens_state[j].rows(0, n_x)
                    + &stage_fy[j] * stage_sens_state[j].rows(n_x, n_y);
                psi_state += f_s_state * w;
                let f_s_input = &stage_fx[j] * stage_sens_input[j].rows(0, n_x)
                    + &stage_fy[j] * stage_sens_input[j].rows(n_x, n_y)
                    + &stage_fu[j];
                psi_input += f_s_input * w;
            }
            StageSens { d_state, d_input, psi_state, psi_input, h_gamma }
        });

        let (converged, corrections, f_i) = solve_stage(
            model,
            &matrix,
            t_stage,
            &psi,
            u,
            d,
            guess,
            h_gamma,
            settings,
            stage_sens.as_mut(),
        )?;
        iterates.push(corrections + 1);
        if let Some(ctx) = stage_sens {
            let (x_i, y_i) = split_state(&converged, &dims);
            stage_fx.push(model.f_x(t_stage, &x_i, &y_i, u, d));
            stage_fy.push(model.f_y(t_stage, &x_i, &y_i, u, d));
            stage_fu.push(model.f_u(t_stage, &x_i, &y_i, u, d));
            stage_sens_state.push(ctx.d_state);
            stage_sens_input.push(ctx.d_input);
        }
        stages.push(converged);
        f_evals.push(f_i);
    }

    // stiffly accurate: the last stage is the step result
    let state = stages[n_stages - 1].clone();

    let mut x_hat = x_k.clone();
    for (i, f_i) in f_evals.iter().enumerate() {
        x_hat += f_i * (h * tableau.b_hat[i]);
    }
    let error_estimate = DVector::from(state.rows(0, n_x)) - x_hat;

    let sens = sens_in.map(|_| {
        let pair = SensitivityPair {
            wrt_state: stage_sens_state[n_stages - 1].clone(),
            wrt_input: stage_sens_input[n_stages - 1].clone(),
        };
        (
            SensRecord { wrt_state: stage_sens_state, wrt_input: stage_sens_input },
            pair,
        )
    });

    Ok(StepOutput {
        state,
        record: StepRecord { stages, iterates_per_stage: iterates, error_estimate, factorizations: 1 },
        sens,
    })
}

/// Advances one ESDIRK step. Stage guesses come from the scheme's stage
/// value predictors when `prev` holds the previous step's record; the first
/// step of a trajectory uses the trivial predictor.
#[allow(clippy::too_many_arguments)]
pub fn esdirk_step(
    model: &dyn Model,
    scheme: &EsdirkScheme,
    t: f64,
    s: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    h: f64,
    prev: Option<&StepRecord>,
    settings: &NewtonSettings,
) -> Result<(DVector<f64>, StepRecord)> {
    let out = step_core(model, scheme, t, s, u, d, h, prev, None, None, settings)?;
    Ok((out.state, out.record))
}

/// [`esdirk_step`] plus sensitivity propagation.
///
/// `prev` enables the stage value predictors; `prev_sens` additionally lets
/// the predictor guesses be differentiated exactly. When `prev_sens` is
/// absent (e.g. when re-seeding per step for covariance propagation) the
/// derivative of the trivial guess, `sens_in` itself, seeds each stage.
#[allow(clippy::too_many_arguments)]
pub fn esdirk_step_with_sensitivities(
    model: &dyn Model,
    scheme: &EsdirkScheme,
    t: f64,
    s: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    h: f64,
    prev: Option<&StepRecord>,
    prev_sens: Option<&SensRecord>,
    sens_in: &SensitivityPair,
    settings: &NewtonSettings,
) -> Result<(DVector<f64>, StepRecord, SensRecord, SensitivityPair)> {
    let out = step_core(model, scheme, t, s, u, d, h, prev, prev_sens, Some(sens_in), settings)?;
    let (rec, pair) = out.sens.expect("sensitivities requested");
    Ok((out.state, out.record, rec, pair))
}

/// A fixed-grid trajectory with per-step records.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty trajectory")
    }

    /// Total Newton iterates over all steps and stages.
    pub fn total_newton_iterates(&self) -> usize {
        self.records.iter().flat_map(|r| r.iterates_per_stage.iter()).sum()
    }
}

/// Integrates over `[t0, tf]` with `steps` equal steps under zero-order-hold
/// `u` and `d`.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    model: &dyn Model,
    scheme: &EsdirkScheme,
    t0: f64,
    tf: f64,
    s0: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    steps: usize,
    settings: &NewtonSettings,
) -> Result<Trajectory> {
    assert!(steps >= 1, "at least one step");
    let h = (tf - t0) / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps);
    times.push(t0);
    states.push(s0.clone());
    let mut s = s0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let prev = records.last();
        let (next, record) = esdirk_step(model, scheme, t, &s, u, d, h, prev, settings)
            .map_err(|e| Error::IntegrationFailure { index: k, source: Box::new(e) })?;
        s = next;
        times.push(t + h);
        states.push(s.clone());
        records.push(record);
    }
    Ok(Trajectory { times, states, records })
}

/// [`integrate`] with sensitivity propagation chained across steps; returns
/// the trajectory and the final `(ds/ds0, ds/du)` pair.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with_sensitivities(
    model: &dyn Model,
    scheme: &EsdirkScheme,
    t0: f64,
    tf: f64,
    s0: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    steps: usize,
    settings: &NewtonSettings,
) -> Result<(Trajectory, SensitivityPair)> {
    assert!(steps >= 1, "at least one step");
    let dims = model.dims();
    let h = (tf - t0) / steps as f64;
    let mut times = vec![t0];
    let mut states = vec![s0.clone()];
    let mut records: Vec<StepRecord> = Vec::with_capacity(steps);
    let mut sens_records: Vec<SensRecord> = Vec::with_capacity(steps);
    let mut s = s0.clone();
    let mut pair = SensitivityPair::initial(dims.n_s(), dims.n_u);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (next, record, sens_record, next_pair) = esdirk_step_with_sensitivities(
            model,
            scheme,
            t,
            &s,
            u,
            d,
            h,
            records.last(),
            sens_records.last(),
            &pair,
            settings,
        )
        .map_err(|e| Error::IntegrationFailure { index: k, source: Box::new(e) })?;
        s = next;
        pair = next_pair;
        times.push(t + h);
        states.push(s.clone());
        records.push(record);
        sens_records.push(sens_record);
    }
    Ok((Trajectory { times, states, records }, pair))
}
