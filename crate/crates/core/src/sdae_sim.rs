//! Ground-truth plant simulation of the stochastic DAE with an
//! implicit-explicit scheme: drift and constraint implicit at the step
//! endpoint, diffusion explicit.
//!
//! Each sampling interval is covered by `M` inner steps; the Wiener
//! increments are drawn from a generator keyed by `(seed, interval, inner
//! step)` so Monte-Carlo runs across seeds are reproducible and can execute
//! in parallel without shared state.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::esdirk::{scaled_residual_norm, NewtonSettings};
use crate::model::{join_state, split_state, Model};

/// Reproducible Wiener increments for one simulation.
#[derive(Debug, Clone, Copy)]
pub struct WienerPath {
    pub seed: u64,
    pub dim: usize,
}

impl WienerPath {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }

    /// Increment for inner step `n` of sampling interval `k`:
    /// `N(0, I dt)` drawn from a stream keyed by `(seed, k, n)`.
    pub fn increment(&self, interval: usize, inner: usize, dt: f64) -> DVector<f64> {
        let mut rng = keyed_rng(self.seed, interval as u64, inner as u64);
        let std = dt.sqrt();
        DVector::from_fn(self.dim, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * std
        })
    }
}

/// Stream cipher RNG keyed by `(seed, a, b)` via splitmix finalization.
pub(crate) fn keyed_rng(seed: u64, a: u64, b: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for (i, word) in [seed, a, b, 0x9e37_79b9_7f4a_7c15].into_iter().enumerate() {
        state = splitmix(state ^ word);
        key[i * 8..(i + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Inner-step configuration of the plant simulator.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Inner steps per sampling interval.
    pub inner_steps: usize,
    pub newton: NewtonSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            inner_steps: 20,
            newton: NewtonSettings { tau: 1e-6, abs: 1e-10, rel: 1e-10, max_iterations: 50 },
        }
    }
}

/// One implicit-explicit step: solves
///
/// ```text
/// R(s') = [x' - x - f(t', x', y', u, d) dt - sigma dw; g(t', x', y', u, d)] = 0
/// ```
///
/// with an exact Newton scheme (the Jacobian is rebuilt every iteration).
#[allow(clippy::too_many_arguments)]
pub fn implicit_explicit_step(
    model: &dyn Model,
    t: f64,
    s: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    dt: f64,
    dw: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<DVector<f64>> {
    let dims = model.dims();
    let (n_x, n_y) = (dims.n_x, dims.n_y);
    let t_next = t + dt;
    let (x_k, _) = split_state(s, &dims);
    let noise = model.diffusion() * dw;

    let mut iterate = s.clone();
    let mut corrections = 0usize;
    loop {
        let (x_i, y_i) = split_state(&iterate, &dims);
        let f_i = model.f(t_next, &x_i, &y_i, u, d);
        let g_i = model.g(t_next, &x_i, &y_i, u, d);
        if f_i.iter().chain(g_i.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { context: "implicit-explicit step" });
        }
        let mut r = DVector::zeros(n_x + n_y);
        for i in 0..n_x {
            r[i] = x_i[i] - x_k[i] - f_i[i] * dt - noise[i];
        }
        for i in 0..n_y {
            r[n_x + i] = g_i[i];
        }
        if scaled_residual_norm(&r, &iterate, settings) < settings.tau {
            return Ok(iterate);
        }
        if corrections >= settings.max_iterations {
            return Err(Error::NoConvergence {
                context: "implicit-explicit step",
                iterations: corrections,
                residual: scaled_residual_norm(&r, &iterate, settings),
            });
        }
        // exact Newton: dR/ds rebuilt at the current iterate
        let f_x = model.f_x(t_next, &x_i, &y_i, u, d);
        let f_y = model.f_y(t_next, &x_i, &y_i, u, d);
        let mut jac = DMatrix::zeros(n_x + n_y, n_x + n_y);
        for i in 0..n_x {
            for j in 0..n_x {
                jac[(i, j)] = -dt * f_x[(i, j)];
            }
            jac[(i, i)] += 1.0;
            for j in 0..n_y {
                jac[(i, n_x + j)] = -dt * f_y[(i, j)];
            }
        }
        if n_y > 0 {
            let g_x = model.g_x(t_next, &x_i, &y_i, u, d);
            let g_y = model.g_y(t_next, &x_i, &y_i, u, d);
            for i in 0..n_y {
                for j in 0..n_x {
                    jac[(n_x + i, j)] = g_x[(i, j)];
                }
                for j in 0..n_y {
                    jac[(n_x + i, n_x + j)] = g_y[(i, j)];
                }
            }
        }
        let delta = jac
            .lu()
            .solve(&(-r))
            .ok_or(Error::SingularJacobian { context: "implicit-explicit step" })?;
        iterate += delta;
        corrections += 1;
    }
}

/// States visited inside one sampling interval, endpoint included.
#[derive(Debug, Clone)]
pub struct InnerTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl InnerTrajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty")
    }
}

/// Advances the plant over `[t_k, t_k + t_s]` with `config.inner_steps`
/// uniform implicit-explicit steps, drawing noise from `path` for interval
/// index `k`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_interval(
    model: &dyn Model,
    t_k: f64,
    s_k: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    t_s: f64,
    config: &SimConfig,
    path: &WienerPath,
    interval: usize,
) -> Result<InnerTrajectory> {
    let m = config.inner_steps;
    assert!(m >= 1, "at least one inner step");
    let dt = t_s / m as f64;
    let mut times = Vec::with_capacity(m + 1);
    let mut states = Vec::with_capacity(m + 1);
    times.push(t_k);
    states.push(s_k.clone());
    let mut s = s_k.clone();
    for n in 0..m {
        let t = t_k + n as f64 * dt;
        let dw = path.increment(interval, n, dt);
        s = implicit_explicit_step(model, t, &s, u, d, dt, &dw, &config.newton)
            .map_err(|e| Error::IntegrationFailure { index: n, source: Box::new(e) })?;
        times.push(t + dt);
        states.push(s.clone());
    }
    Ok(InnerTrajectory { times, states })
}

/// Measurement noise draw `v_k ~ N(0, std^2 I)` keyed by `(seed, k)`.
pub fn measurement_noise(seed: u64, step: usize, n_m: usize, std: f64) -> DVector<f64> {
    let mut rng = keyed_rng(seed, 0x6d65_6173, step as u64);
    DVector::from_fn(n_m, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esdirk::{integrate, EsdirkMethod, EsdirkScheme};
    use crate::models::{CubicDecay, LinearDae};
    use approx::assert_abs_diff_eq;

    fn empty() -> DVector<f64> {
        DVector::zeros(0)
    }

    fn decay_model() -> LinearDae {
        // x' = -x with a trivial algebraic channel y = 0 x
        LinearDae {
            fx: DMatrix::from_element(1, 1, -1.0),
            fy: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::zeros(1, 1),
            gu: DMatrix::zeros(1, 0),
            g0: DVector::zeros(1),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::zeros(1, 1),
            sigma: DMatrix::from_element(1, 1, 0.0),
        }
    }

    #[test]
    fn zero_noise_reduces_to_implicit_euler() {
        let model = decay_model();
        let s0 = DVector::from_vec(vec![1.0, 0.0]);
        let dw = DVector::zeros(1);
        let settings = NewtonSettings::tight();
        let s1 = implicit_explicit_step(&model, 0.0, &s0, &empty(), &empty(), 0.1, &dw, &settings).unwrap();
        assert_abs_diff_eq!(s1[0], 1.0 / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn scalar_linear_sde_closed_form() {
        // dx = a x dt + sigma dw, drift-implicit: x1 = (x0 + sigma dw) / (1 - a dt)
        let a = -0.8;
        let sig = 0.25;
        let model = LinearDae {
            fx: DMatrix::from_element(1, 1, a),
            fy: DMatrix::zeros(1, 0),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::zeros(0, 1),
            gu: DMatrix::zeros(0, 0),
            g0: DVector::zeros(0),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::zeros(1, 0),
            sigma: DMatrix::from_element(1, 1, sig),
        };
        let dt = 0.05;
        let dw = DVector::from_element(1, 0.37);
        let settings = NewtonSettings::tight();
        let s1 = implicit_explicit_step(
            &model,
            0.0,
            &DVector::from_element(1, 2.0),
            &empty(),
            &empty(),
            dt,
            &dw,
            &settings,
        )
        .unwrap();
        let expected = (2.0 + sig * 0.37) / (1.0 - a * dt);
        assert_abs_diff_eq!(s1[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn algebraic_channel_is_enforced_after_each_step() {
        let model = CubicDecay;
        let s0 = DVector::from_vec(vec![1.0, 1.0]);
        let config = SimConfig { inner_steps: 8, ..Default::default() };
        let path = WienerPath::new(7, 0);
        let out = simulate_interval(&model, 0.0, &s0, &empty(), &empty(), 0.4, &config, &path, 0).unwrap();
        for s in &out.states {
            let (x, y) = split_state(s, &model.dims());
            assert!((y[0] - x[0] * x[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_inner_step_equals_one_step() {
        let model = decay_model();
        let s0 = DVector::from_vec(vec![1.0, 0.0]);
        let config = SimConfig { inner_steps: 1, ..Default::default() };
        let path = WienerPath::new(3, 0);
        let traj = simulate_interval(&model, 0.0, &s0, &empty(), &empty(), 0.1, &config, &path, 5).unwrap();
        let dw = path.increment(5, 0, 0.1);
        let one = implicit_explicit_step(&model, 0.0, &s0, &empty(), &empty(), 0.1, &dw, &config.newton).unwrap();
        assert_eq!(traj.endpoint(), &one);
    }

    #[test]
    fn deterministic_given_seed() {
        let model = decay_model();
        let mut model = model;
        model.sigma = DMatrix::from_element(1, 1, 0.3);
        let s0 = DVector::from_vec(vec![1.0, 0.0]);
        let config = SimConfig::default();
        let a = simulate_interval(&model, 0.0, &s0, &empty(), &empty(), 1.0, &config, &WienerPath::new(11, 1), 2).unwrap();
        let b = simulate_interval(&model, 0.0, &s0, &empty(), &empty(), 1.0, &config, &WienerPath::new(11, 1), 2).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn zero_noise_matches_esdirk12_grid() {
        // both are implicit Euler on the same grid; with tight Newton the
        // results agree to machine precision
        let model = CubicDecay;
        let s0 = DVector::from_vec(vec![1.0, 1.0]);
        let config = SimConfig { inner_steps: 10, newton: NewtonSettings::tight() };
        let path = WienerPath::new(1, 0);
        let sim = simulate_interval(&model, 0.0, &s0, &empty(), &empty(), 1.0, &config, &path, 0).unwrap();
        let scheme = EsdirkScheme::new(EsdirkMethod::Esdirk12);
        let rk = integrate(&model, &scheme, 0.0, 1.0, &s0, &empty(), &empty(), 10, &NewtonSettings::tight()).unwrap();
        assert!((sim.endpoint() - rk.final_state()).amax() < 1e-12);
    }

    #[test]
    fn join_state_is_consistent_with_split() {
        let s = join_state(&DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![2.0]));
        assert_eq!(s.len(), 2);
    }
}
