//! Alkaline electrolyzer stack model.
//!
//! Differential states `x = [T; T_in]` (stack and inlet temperature, degC),
//! algebraic states `y = [U_cell; I]` (cell voltage in V, stack current in A),
//! input `u = f_in` (lye flow, kg/s), disturbances `d = [T_amb; P_in]`
//! (degC, W). The stack temperature follows an energy balance; the inlet
//! temperature is a pure diffusion. The algebraic pair couples the cell
//! polarization curve with the power balance `P_in = n_c U_cell I`.
//!
//! Parameter values are not hardcoded: they come from a config file (see
//! `config/electrolyzer.toml`), which also states the unit conventions the
//! polarization coefficients assume.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelDims};

/// Internal scale for the power-balance residual. The raw residual
/// `P_in - n_c U_cell I` is O(1e6) W, which would put its achievable Newton
/// floor above the consistency tolerance; dividing by this constant brings it
/// to O(1) without changing the constraint.
pub const POWER_RESIDUAL_SCALE: f64 = 1e6;

/// Physical parameters of one stack. Units are documented in the config file;
/// temperatures are degC throughout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyzerParams {
    /// Overall stack heat capacity, J/K.
    pub c_p_el: f64,
    /// Lye specific heat capacity, J/(kg*K).
    pub c_p_lye: f64,
    /// Number of electrolytic cells in series.
    pub n_c: f64,
    /// Thermoneutral voltage, V.
    pub u_tn: f64,
    /// Heat transfer area to ambient, m^2.
    pub a_s: f64,
    /// Heat transfer coefficient to ambient, W/(m^2*K).
    pub h_c: f64,
    /// Reversible voltage, V.
    pub u_rev: f64,
    /// Electrode area, m^2.
    pub electrode_area: f64,
    /// Ohmic coefficients: resistance (ohm*m^2) and its temperature slope.
    pub r1: f64,
    pub r2: f64,
    /// Activation overvoltage coefficient, V (natural-log basis).
    pub s: f64,
    /// Activation coefficients, A^-1 m^2 (and degC, degC^2 scalings).
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Inlet-temperature diffusion intensity, degC/sqrt(s).
    pub sigma: f64,
}

impl ElectrolyzerParams {
    /// Parses the key = value config format (TOML).
    pub fn from_config_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig {
            context: format!("electrolyzer parameters: {e}"),
        })
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig {
            context: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_config_str(&text)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("c_p_el", self.c_p_el),
            ("c_p_lye", self.c_p_lye),
            ("n_c", self.n_c),
            ("u_tn", self.u_tn),
            ("a_s", self.a_s),
            ("h_c", self.h_c),
            ("u_rev", self.u_rev),
            ("electrode_area", self.electrode_area),
            ("r1", self.r1),
            ("s", self.s),
            ("t1", self.t1),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig {
                    context: format!("electrolyzer parameter {name} must be > 0, got {v}"),
                });
            }
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidConfig {
                context: format!("electrolyzer sigma must be >= 0, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

/// The stack model as a [`Model`] instance with analytic partials.
#[derive(Debug, Clone)]
pub struct Electrolyzer {
    params: ElectrolyzerParams,
}

impl Electrolyzer {
    pub fn new(params: ElectrolyzerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ElectrolyzerParams {
        &self.params
    }

    /// Replaces the diffusion intensity (used by CLI overrides).
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.params.sigma = sigma;
        self
    }

    /// Ohmic overvoltage `(r1 + r2 T) I / A`.
    pub fn u_ohm(&self, temp: f64, current: f64) -> f64 {
        let p = &self.params;
        (p.r1 + p.r2 * temp) * current / p.electrode_area
    }

    /// Activation overvoltage `s ln((t1 + t2/T + t3/T^2) I / A + 1)`.
    ///
    /// Fails with a domain error when the log argument is non-positive.
    pub fn u_act(&self, temp: f64, current: f64) -> Result<f64> {
        let arg = self.act_log_argument(temp, current);
        if arg <= 0.0 {
            return Err(Error::Domain {
                context: format!(
                    "activation overvoltage log argument {arg:.6e} <= 0 at T = {temp}, I = {current}"
                ),
            });
        }
        Ok(self.params.s * arg.ln())
    }

    fn act_log_argument(&self, temp: f64, current: f64) -> f64 {
        let p = &self.params;
        (p.t1 + p.t2 / temp + p.t3 / (temp * temp)) * current / p.electrode_area + 1.0
    }

    /// Algebraic residuals with the domain check surfaced as an error:
    /// `[U_cell - (U_rev + U_ohm + U_act); (P_in - n_c U_cell I) / scale]`.
    pub fn residuals(&self, temp: f64, u_cell: f64, current: f64, p_in: f64) -> Result<DVector<f64>> {
        let p = &self.params;
        let r1 = u_cell - (p.u_rev + self.u_ohm(temp, current) + self.u_act(temp, current)?);
        let r2 = (p_in - p.n_c * u_cell * current) / POWER_RESIDUAL_SCALE;
        Ok(DVector::from_vec(vec![r1, r2]))
    }

    /// Lye flow that holds the stack at `temp` given inlet and ambient
    /// temperature, from the steady-state energy balance.
    pub fn steady_flow(&self, temp: f64, t_in: f64, t_amb: f64, p_in: f64) -> Result<f64> {
        let p = &self.params;
        let (u_cell, current) = self.consistent_pair(temp, p_in)?;
        let heat = p.n_c * (u_cell - p.u_tn) * current;
        let loss = p.a_s * p.h_c * (temp - t_amb);
        Ok((heat - loss) / (p.c_p_lye * (temp - t_in)))
    }

    /// Solves the algebraic pair `(U_cell, I)` at a given temperature and
    /// input power via the crate's consistency solve.
    pub fn consistent_pair(&self, temp: f64, p_in: f64) -> Result<(f64, f64)> {
        let x = DVector::from_vec(vec![temp, temp]);
        let u = DVector::from_element(1, 5.0);
        let d = DVector::from_vec(vec![25.0, p_in]);
        let guess = DVector::from_vec(vec![1.8, p_in / (self.params.n_c * 1.8)]);
        let y = crate::model::solve_consistent_algebraic(self, 0.0, &x, &u, &d, &guess)?;
        Ok((y[0], y[1]))
    }
}

impl Model for Electrolyzer {
    fn dims(&self) -> ModelDims {
        ModelDims { n_x: 2, n_y: 2, n_u: 1, n_d: 2, n_m: 1, n_z: 1, n_w: 1 }
    }

    fn f(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (temp, t_in) = (x[0], x[1]);
        let (u_cell, current) = (y[0], y[1]);
        let (f_in, t_amb) = (u[0], d[0]);
        let heating = p.n_c * (u_cell - p.u_tn) * current;
        let lye = f_in * p.c_p_lye * (t_in - temp);
        let loss = p.a_s * p.h_c * (temp - t_amb);
        DVector::from_vec(vec![(lye + heating - loss) / p.c_p_el, 0.0])
    }

    fn g(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let temp = x[0];
        let (u_cell, current) = (y[0], y[1]);
        let p_in = d[1];
        // NaN (rather than a panic) outside the log domain; the Newton loops
        // surface it as a non-finite residual error
        let arg = self.act_log_argument(temp, current);
        let u_act = if arg > 0.0 { p.s * arg.ln() } else { f64::NAN };
        DVector::from_vec(vec![
            u_cell - (p.u_rev + self.u_ohm(temp, current) + u_act),
            (p_in - p.n_c * u_cell * current) / POWER_RESIDUAL_SCALE,
        ])
    }

    fn m(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn h(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn diffusion(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, self.params.sigma])
    }

    fn f_x(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let f_in = u[0];
        DMatrix::from_row_slice(2, 2, &[
            -(f_in * p.c_p_lye + p.a_s * p.h_c) / p.c_p_el,
            f_in * p.c_p_lye / p.c_p_el,
            0.0,
            0.0,
        ])
    }

    fn f_y(&self, _t: f64, _x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (u_cell, current) = (y[0], y[1]);
        DMatrix::from_row_slice(2, 2, &[
            p.n_c * current / p.c_p_el,
            p.n_c * (u_cell - p.u_tn) / p.c_p_el,
            0.0,
            0.0,
        ])
    }

    fn f_u(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        DMatrix::from_column_slice(2, 1, &[p.c_p_lye * (x[1] - x[0]) / p.c_p_el, 0.0])
    }

    fn g_x(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let temp = x[0];
        let current = y[1];
        let arg = self.act_log_argument(temp, current);
        let darg_dt = (-p.t2 / (temp * temp) - 2.0 * p.t3 / (temp * temp * temp)) * current
            / p.electrode_area;
        let du_dt = p.r2 * current / p.electrode_area + p.s * darg_dt / arg;
        DMatrix::from_row_slice(2, 2, &[-du_dt, 0.0, 0.0, 0.0])
    }

    fn g_y(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let temp = x[0];
        let (u_cell, current) = (y[0], y[1]);
        let arg = self.act_log_argument(temp, current);
        let tcoef = p.t1 + p.t2 / temp + p.t3 / (temp * temp);
        let du_di = (p.r1 + p.r2 * temp) / p.electrode_area + p.s * (tcoef / p.electrode_area) / arg;
        DMatrix::from_row_slice(2, 2, &[
            1.0,
            -du_di,
            -p.n_c * current / POWER_RESIDUAL_SCALE,
            -p.n_c * u_cell / POWER_RESIDUAL_SCALE,
        ])
    }

    fn g_u(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 1)
    }

    fn m_x(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
    }

    fn m_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }

    fn h_x(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
    }

    fn h_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }

    fn h_u(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fd_jacobians, ConsistentPoint};
    use approx::assert_abs_diff_eq;

    pub(crate) fn reference_params() -> ElectrolyzerParams {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/electrolyzer.toml");
        ElectrolyzerParams::from_config_file(std::path::Path::new(path)).unwrap()
    }

    fn model() -> Electrolyzer {
        Electrolyzer::new(reference_params()).unwrap()
    }

    /// Scalar bisection on the power balance, with the voltage closure
    /// evaluated directly. Independent of the Newton-based consistency solve.
    fn bisect_current(model: &Electrolyzer, temp: f64, p_in: f64) -> (f64, f64) {
        let p = model.params();
        let u_of = |i: f64| p.u_rev + model.u_ohm(temp, i) + model.u_act(temp, i).unwrap();
        let phi = |i: f64| p_in - p.n_c * u_of(i) * i;
        let (mut lo, mut hi) = (1.0, 1.0e6);
        assert!(phi(lo) > 0.0 && phi(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let i = 0.5 * (lo + hi);
        (u_of(i), i)
    }

    #[test]
    fn consistency_solve_matches_bisection_oracle() {
        let model = model();
        let (u_ref, i_ref) = bisect_current(&model, 70.0, 2.0e6);
        let (u, i) = model.consistent_pair(70.0, 2.0e6).unwrap();
        assert!((u - u_ref).abs() / u_ref < 1e-8, "U {u} vs {u_ref}");
        assert!((i - i_ref).abs() / i_ref < 1e-8, "I {i} vs {i_ref}");
    }

    #[test]
    fn drift_matches_hand_evaluation_at_operating_point() {
        let model = model();
        let p = model.params().clone();
        let (u_cell, current) = model.consistent_pair(70.0, 2.0e6).unwrap();
        let x = DVector::from_vec(vec![70.0, 35.0]);
        let y = DVector::from_vec(vec![u_cell, current]);
        let u = DVector::from_element(1, 5.0);
        let d = DVector::from_vec(vec![25.0, 2.0e6]);
        let expected = (5.0 * p.c_p_lye * (35.0 - 70.0) + p.n_c * (u_cell - p.u_tn) * current
            - p.a_s * p.h_c * (70.0 - 25.0))
            / p.c_p_el;
        let f = model.f(0.0, &x, &y, &u, &d);
        assert_abs_diff_eq!(f[0], expected, epsilon = 1e-12);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn drift_is_linear_in_flow() {
        let model = model();
        let x = DVector::from_vec(vec![70.0, 35.0]);
        let y = DVector::from_vec(vec![1.948, 4463.7]);
        let d = DVector::from_vec(vec![25.0, 2.0e6]);
        let f1 = model.f(0.0, &x, &y, &DVector::from_element(1, 2.0), &d)[0];
        let f2 = model.f(0.0, &x, &y, &DVector::from_element(1, 4.0), &d)[0];
        let base = model.f(0.0, &x, &y, &DVector::from_element(1, 0.0), &d)[0];
        assert_abs_diff_eq!(f2 - base, 2.0 * (f1 - base), epsilon = 1e-12);
    }

    #[test]
    fn zero_current_limit() {
        // I = 0: both overvoltages vanish, residual reduces to U_cell - U_rev
        let model = model();
        let r = model.residuals(70.0, 1.5, 0.0, 2.0e6).unwrap();
        assert_abs_diff_eq!(r[0], 1.5 - model.params().u_rev, epsilon = 1e-14);
    }

    #[test]
    fn power_residual_is_bilinear() {
        let model = model();
        let (u_cell, current) = model.consistent_pair(70.0, 2.0e6).unwrap();
        let r0 = model.residuals(70.0, u_cell, current, 2.0e6).unwrap();
        assert!(r0[1].abs() < 1e-10);
        let delta = 1.0e-3;
        let r1 = model.residuals(70.0, u_cell, current + delta, 2.0e6).unwrap();
        let expected = -model.params().n_c * u_cell * delta / POWER_RESIDUAL_SCALE;
        assert_abs_diff_eq!(r1[1] - r0[1], expected, epsilon = 1e-12);
    }

    #[test]
    fn log_domain_violation_is_an_error() {
        let model = model();
        assert!(matches!(
            model.u_act(70.0, -1.0e5),
            Err(crate::error::Error::Domain { .. })
        ));
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let model = model();
        let d = DVector::from_vec(vec![25.0, 2.0e6]);
        let mut rng_t = 55.0;
        for k in 0..20 {
            // spread consistent points over the operating range
            rng_t = 55.0 + (k as f64) * 1.3;
            let (u_cell, current) = model.consistent_pair(rng_t, 2.0e6).unwrap();
            let point = ConsistentPoint {
                t: 0.0,
                x: DVector::from_vec(vec![rng_t, rng_t - 30.0]),
                y: DVector::from_vec(vec![u_cell, current]),
                u: DVector::from_element(1, 2.0 + 0.4 * (k as f64)),
                d: d.clone(),
            };
            let fd = fd_jacobians(&model, &point).unwrap();
            let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
                (a - b).amax() / a.amax().max(1.0)
            };
            assert!(rel(&fd.f_x, &model.f_x(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
            assert!(rel(&fd.f_y, &model.f_y(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
            assert!(rel(&fd.f_u, &model.f_u(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
            assert!(rel(&fd.g_x, &model.g_x(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
            assert!(rel(&fd.g_y, &model.g_y(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
            assert!(rel(&fd.m_x, &model.m_x(0.0, &point.x, &point.y, &point.u, &point.d)) < 1e-6);
        }
    }

    #[test]
    fn energy_balance_term_signs() {
        // U_cell > U_tn heats; T > T_amb and T > T_in both cool
        let model = model();
        let p = model.params().clone();
        let (u_cell, current) = model.consistent_pair(70.0, 2.0e6).unwrap();
        assert!(p.n_c * (u_cell - p.u_tn) * current > 0.0);
        assert!(5.0 * p.c_p_lye * (35.0 - 70.0) < 0.0);
        assert!(-p.a_s * p.h_c * (70.0 - 25.0) < 0.0);
    }
}
