//! Linear semi-explicit DAE test models.

use nalgebra::{DMatrix, DVector};

use crate::model::{Model, ModelDims};

/// A fully linear index-1 DAE:
///
/// ```text
/// dx = (Fx x + Fy y + Fu u + f0) dt + sigma dw
///  0 = y - Gx x - Gu u - g0
///  m = Mx x + My y,   h = Hx x + Hy y
/// ```
///
/// The reduced ODE is `dx/dt = (Fx + Fy Gx) x + (Fu + Fy Gu) u + f0 + Fy g0`,
/// which test oracles integrate in closed form.
#[derive(Debug, Clone)]
pub struct LinearDae {
    pub fx: DMatrix<f64>,
    pub fy: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub f0: DVector<f64>,
    pub gx: DMatrix<f64>,
    pub gu: DMatrix<f64>,
    pub g0: DVector<f64>,
    pub mx: DMatrix<f64>,
    pub my: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl LinearDae {
    /// Reduced system matrix `Fx + Fy Gx`.
    pub fn reduced_matrix(&self) -> DMatrix<f64> {
        &self.fx + &self.fy * &self.gx
    }

    /// `f = 0`, `g = y - c x`; the minimal algebraic test case.
    pub fn scalar_algebraic(c: f64) -> Self {
        Self {
            fx: DMatrix::zeros(1, 1),
            fy: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::from_element(1, 1, c),
            gu: DMatrix::zeros(1, 0),
            g0: DVector::zeros(1),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::zeros(1, 1),
            sigma: DMatrix::zeros(1, 0),
        }
    }

    /// Scalar DAE `x' = a x + b y`, `y = c x`, measurement `m = x + beta y`.
    ///
    /// Reduced dynamics `x' = (a + b c) x`; used by the filter oracle tests.
    pub fn scalar_dae(a: f64, b: f64, c: f64, beta: f64, sigma: f64) -> Self {
        Self {
            fx: DMatrix::from_element(1, 1, a),
            fy: DMatrix::from_element(1, 1, b),
            fu: DMatrix::zeros(1, 0),
            f0: DVector::zeros(1),
            gx: DMatrix::from_element(1, 1, c),
            gu: DMatrix::zeros(1, 0),
            g0: DVector::zeros(1),
            mx: DMatrix::identity(1, 1),
            my: DMatrix::from_element(1, 1, beta),
            sigma: DMatrix::from_element(1, 1, sigma),
        }
    }

    /// Two differential states, one algebraic state, one input. The reduced
    /// matrix is upper triangular with eigenvalues -0.3 and -1.2, so the exact
    /// transition matrix has a closed form.
    pub fn example_2x1() -> Self {
        let a_r = DMatrix::from_row_slice(2, 2, &[-0.3, -0.9, 0.0, -1.2]);
        let fy = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
        let gx = DMatrix::from_row_slice(1, 2, &[0.2, 0.1]);
        let fx = &a_r - &fy * &gx;
        Self {
            fx,
            fy,
            fu: DMatrix::from_column_slice(2, 1, &[0.5, 0.2]),
            f0: DVector::zeros(2),
            gx,
            gu: DMatrix::from_element(1, 1, 0.3),
            g0: DVector::zeros(1),
            mx: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            my: DMatrix::zeros(1, 1),
            sigma: DMatrix::from_column_slice(2, 1, &[0.1, 0.05]),
        }
    }
}

impl Model for LinearDae {
    fn dims(&self) -> ModelDims {
        ModelDims {
            n_x: self.fx.nrows(),
            n_y: self.gx.nrows(),
            n_u: self.fu.ncols(),
            n_d: 0,
            n_m: self.mx.nrows(),
            n_z: self.mx.nrows(),
            n_w: self.sigma.ncols(),
        }
    }

    fn f(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        &self.fx * x + &self.fy * y + &self.fu * u + &self.f0
    }

    fn g(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        y - &self.gx * x - &self.gu * u - &self.g0
    }

    fn m(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        &self.mx * x + &self.my * y
    }

    fn h(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        self.m(t, x, y, u, d)
    }

    fn diffusion(&self) -> DMatrix<f64> {
        self.sigma.clone()
    }

    fn f_x(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        self.fx.clone()
    }
    fn f_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        self.fy.clone()
    }
    fn f_u(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        self.fu.clone()
    }
    fn g_x(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        -self.gx.clone()
    }
    fn g_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.gx.nrows(), self.gx.nrows())
    }
    fn g_u(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        -self.gu.clone()
    }
    fn m_x(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        self.mx.clone()
    }
    fn m_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        self.my.clone()
    }
    fn h_x(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        self.m_x(t, x, y, u, d)
    }
    fn h_y(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        self.m_y(t, x, y, u, d)
    }
    fn h_u(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.mx.nrows(), self.fu.ncols())
    }
}

/// Smooth nonlinear index-1 DAE with a closed-form solution:
///
/// ```text
/// x' = -x y,   y = x^2   =>   x(t) = x0 / sqrt(1 + 2 x0^2 t)
/// ```
///
/// Used for convergence-order studies.
#[derive(Debug, Clone, Copy)]
pub struct CubicDecay;

impl CubicDecay {
    /// Exact differential state at time `t` from `x0` at `t = 0`.
    pub fn exact(x0: f64, t: f64) -> f64 {
        x0 / (1.0 + 2.0 * x0 * x0 * t).sqrt()
    }
}

impl Model for CubicDecay {
    fn dims(&self) -> ModelDims {
        ModelDims { n_x: 1, n_y: 1, n_u: 0, n_d: 0, n_m: 1, n_z: 1, n_w: 0 }
    }
    fn f(&self, _t: f64, x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -x[0] * y[0])
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
    fn f_x(&self, _t: f64, _x: &DVector<f64>, y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -y[0])
    }
    fn f_y(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -x[0])
    }
    fn g_x(&self, _t: f64, x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -2.0 * x[0])
    }
    fn g_y(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>, _u: &DVector<f64>, _d: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}
