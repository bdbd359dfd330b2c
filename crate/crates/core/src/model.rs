//! Semi-explicit index-1 DAE model interface.
//!
//! A model supplies the drift `f`, the algebraic residual `g`, the measurement
//! map `m`, the output map `h`, and a constant diffusion matrix. Partial
//! derivatives default to central finite differences; implementations
//! override them with analytic expressions where available.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dimensions of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Differential states.
    pub n_x: usize,
    /// Algebraic states.
    pub n_y: usize,
    /// Inputs.
    pub n_u: usize,
    /// Disturbances.
    pub n_d: usize,
    /// Measurements.
    pub n_m: usize,
    /// Outputs.
    pub n_z: usize,
    /// Wiener process dimension (columns of the diffusion matrix).
    pub n_w: usize,
}

impl ModelDims {
    /// Combined state dimension `n_x + n_y`.
    pub fn n_s(&self) -> usize {
        self.n_x + self.n_y
    }
}

/// Default tolerance on `|g|_inf` for a point to count as consistent.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Iteration cap for the algebraic consistency Newton solve.
pub const CONSISTENCY_MAX_ITER: usize = 50;

/// A semi-explicit index-1 DAE with measurement and output maps:
///
/// ```text
/// dx = f(t, x, y, u, d) dt + sigma dw
///  0 = g(t, x, y, u, d)
///  m = m(t, x, y, u, d),   z = h(t, x, y, u, d)
/// ```
///
/// `dg/dy` must be square and nonsingular wherever the solvers evaluate it.
/// Evaluations must be pure; all methods take `&self`.
pub trait Model: Sync {
    fn dims(&self) -> ModelDims;

    fn f(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64>;
    fn g(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64>;
    fn m(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64>;
    fn h(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64>;

    /// Constant diffusion matrix, `n_x x n_w`.
    fn diffusion(&self) -> DMatrix<f64>;

    fn f_x(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(x, self.dims().n_x, |v| self.f(t, v, y, u, d))
    }
    fn f_y(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(y, self.dims().n_x, |v| self.f(t, x, v, u, d))
    }
    fn f_u(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(u, self.dims().n_x, |v| self.f(t, x, y, v, d))
    }
    fn g_x(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(x, self.dims().n_y, |v| self.g(t, v, y, u, d))
    }
    fn g_y(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(y, self.dims().n_y, |v| self.g(t, x, v, u, d))
    }
    fn g_u(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(u, self.dims().n_y, |v| self.g(t, x, y, v, d))
    }
    fn m_x(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(x, self.dims().n_m, |v| self.m(t, v, y, u, d))
    }
    fn m_y(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(y, self.dims().n_m, |v| self.m(t, x, v, u, d))
    }
    fn h_x(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(x, self.dims().n_z, |v| self.h(t, v, y, u, d))
    }
    fn h_y(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(y, self.dims().n_z, |v| self.h(t, x, v, u, d))
    }
    fn h_u(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        fd_wrt(u, self.dims().n_z, |v| self.h(t, x, y, v, d))
    }
}

/// Split a combined state `s = [x; y]` into its differential and algebraic parts.
pub fn split_state(s: &DVector<f64>, dims: &ModelDims) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from(s.rows(0, dims.n_x)),
        DVector::from(s.rows(dims.n_x, dims.n_y)),
    )
}

/// Stack `x` and `y` into a combined state.
pub fn join_state(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(x.len() + y.len());
    s.rows_mut(0, x.len()).copy_from(x);
    s.rows_mut(x.len(), y.len()).copy_from(y);
    s
}

/// Central-difference Jacobian of `func` w.r.t. `v`, with per-column step
/// `eps^(1/3) * max(1, |v_j|)`.
fn fd_wrt<F>(v: &DVector<f64>, n_out: usize, func: F) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let step_base = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(n_out, v.len());
    let mut vp = v.clone();
    for j in 0..v.len() {
        let delta = step_base * v[j].abs().max(1.0);
        vp[j] = v[j] + delta;
        let fp = func(&vp);
        vp[j] = v[j] - delta;
        let fm = func(&vp);
        vp[j] = v[j];
        for i in 0..n_out {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * delta);
        }
    }
    jac
}

/// The eight first-order partials of `(f, g, m)` at one point.
#[derive(Debug, Clone)]
pub struct JacobianSet {
    pub f_x: DMatrix<f64>,
    pub f_y: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub g_y: DMatrix<f64>,
    pub g_u: DMatrix<f64>,
    pub m_x: DMatrix<f64>,
    pub m_y: DMatrix<f64>,
}

/// A point `(t, x, y, u, d)` whose algebraic residual is below [`CONSISTENCY_TOL`].
#[derive(Debug, Clone)]
pub struct ConsistentPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub d: DVector<f64>,
}

impl ConsistentPoint {
    /// Solves `g = 0` for `y` from `y_guess` and wraps the result.
    pub fn solve(
        model: &dyn Model,
        t: f64,
        x: DVector<f64>,
        u: DVector<f64>,
        d: DVector<f64>,
        y_guess: &DVector<f64>,
    ) -> Result<Self> {
        let y = solve_consistent_algebraic(model, t, &x, &u, &d, y_guess)?;
        Ok(Self { t, x, y, u, d })
    }

    /// `|g|_inf` at this point.
    pub fn residual(&self, model: &dyn Model) -> f64 {
        model.g(self.t, &self.x, &self.y, &self.u, &self.d).amax()
    }
}

/// Solves the algebraic system `g(t, x, y, u, d) = 0` for `y` with an exact
/// Newton iteration (full steps), starting from `y_guess`.
///
/// Converges when `|g|_inf <= CONSISTENCY_TOL`; the check runs before each
/// correction, so an already-consistent guess is returned unchanged.
pub fn solve_consistent_algebraic(
    model: &dyn Model,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    y_guess: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut y = y_guess.clone();
    if y.len() == 0 {
        return Ok(y);
    }
    let mut residual = f64::INFINITY;
    for _ in 0..CONSISTENCY_MAX_ITER {
        let g = model.g(t, x, &y, u, d);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation {
                context: "algebraic consistency solve",
            });
        }
        residual = g.amax();
        if residual <= CONSISTENCY_TOL {
            return Ok(y);
        }
        let g_y = model.g_y(t, x, &y, u, d);
        let lu = g_y.lu();
        let delta = lu.solve(&(-&g)).ok_or(Error::SingularJacobian {
            context: "algebraic consistency solve",
        })?;
        y += delta;
    }
    Err(Error::NoConvergence {
        context: "algebraic consistency solve",
        iterations: CONSISTENCY_MAX_ITER,
        residual,
    })
}

/// Central-difference fallback for every partial in [`JacobianSet`].
///
/// Independent of any analytic partials the model supplies; used to
/// cross-check them and to fill gaps.
pub fn fd_jacobians(model: &dyn Model, point: &ConsistentPoint) -> Result<JacobianSet> {
    let dims = model.dims();
    let ConsistentPoint { t, x, y, u, d } = point;
    let t = *t;
    let set = JacobianSet {
        f_x: fd_wrt(x, dims.n_x, |v| model.f(t, v, y, u, d)),
        f_y: fd_wrt(y, dims.n_x, |v| model.f(t, x, v, u, d)),
        f_u: fd_wrt(u, dims.n_x, |v| model.f(t, x, y, v, d)),
        g_x: fd_wrt(x, dims.n_y, |v| model.g(t, v, y, u, d)),
        g_y: fd_wrt(y, dims.n_y, |v| model.g(t, x, v, u, d)),
        g_u: fd_wrt(u, dims.n_y, |v| model.g(t, x, y, v, d)),
        m_x: fd_wrt(x, dims.n_m, |v| model.m(t, v, y, u, d)),
        m_y: fd_wrt(y, dims.n_m, |v| model.m(t, x, v, u, d)),
    };
    let finite = [
        &set.f_x, &set.f_y, &set.f_u, &set.g_x, &set.g_y, &set.g_u, &set.m_x, &set.m_y,
    ]
    .iter()
    .all(|m| m.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFiniteEvaluation {
            context: "finite-difference Jacobians",
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearDae;
    use approx::assert_abs_diff_eq;

    struct QuadMap;

    impl Model for QuadMap {
        fn dims(&self) -> ModelDims {
            ModelDims { n_x: 1, n_y: 1, n_u: 0, n_d: 0, n_m: 1, n_z: 1, n_w: 0 }
        }
        fn f(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(1)
        }
        fn g(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, y[0] - x[0] * x[0])
        }
        fn m(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn h(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn diffusion(&self) -> DMatrix<f64> {
            DMatrix::zeros(1, 0)
        }
    }

    fn empty() -> DVector<f64> {
        DVector::zeros(0)
    }

    #[test]
    fn linear_g_converges_in_one_step() {
        // g(x, y) = y - 2x at x = 1: Newton is exact for linear residuals
        let model = LinearDae::scalar_algebraic(2.0);
        let x = DVector::from_element(1, 1.0);
        let y = solve_consistent_algebraic(&model, 0.0, &x, &empty(), &empty(), &DVector::zeros(1)).unwrap();
        assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn consistent_guess_is_returned_unchanged() {
        let model = QuadMap;
        let x = DVector::from_element(1, 3.0);
        let y0 = DVector::from_element(1, 9.0);
        let y = solve_consistent_algebraic(&model, 0.0, &x, &empty(), &empty(), &y0).unwrap();
        assert_eq!(y[0], 9.0);
    }

    #[test]
    fn consistency_solve_is_idempotent() {
        let model = QuadMap;
        let x = DVector::from_element(1, 3.0);
        let y1 = solve_consistent_algebraic(&model, 0.0, &x, &empty(), &empty(), &DVector::from_element(1, 5.0)).unwrap();
        let y2 = solve_consistent_algebraic(&model, 0.0, &x, &empty(), &empty(), &y1).unwrap();
        assert!((y2[0] - y1[0]).abs() < 1e-12);
    }

    #[test]
    fn fd_jacobian_of_linear_map_is_exact() {
        let model = LinearDae::example_2x1();
        let x = DVector::from_vec(vec![0.7, -0.2]);
        let u = DVector::from_element(1, 0.3);
        let p = ConsistentPoint::solve(&model, 0.0, x, u, empty(), &DVector::zeros(1)).unwrap();
        let fd = fd_jacobians(&model, &p).unwrap();
        let an = model.f_x(p.t, &p.x, &p.y, &p.u, &p.d);
        assert!((&fd.f_x - &an).amax() < 1e-8);
    }

    #[test]
    fn fd_matches_quadratic_partial() {
        // g = y - x^2 at x = 3: dg/dx = -6
        let model = QuadMap;
        let p = ConsistentPoint::solve(&model, 0.0, DVector::from_element(1, 3.0), empty(), empty(), &DVector::zeros(1)).unwrap();
        let fd = fd_jacobians(&model, &p).unwrap();
        assert_abs_diff_eq!(fd.g_x[(0, 0)], -6.0, epsilon = 1e-6);
    }

    #[test]
    fn split_join_roundtrip() {
        let dims = ModelDims { n_x: 2, n_y: 3, n_u: 0, n_d: 0, n_m: 0, n_z: 0, n_w: 0 };
        let s = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (x, y) = split_state(&s, &dims);
        assert_eq!(join_state(&x, &y), s);
    }
}
