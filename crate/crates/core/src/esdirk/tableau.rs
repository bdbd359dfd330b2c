//! Butcher tableaus for the ESDIRK12/23/34 methods.
//!
//! Coefficients are derived from the structural constraints (explicit first
//! stage, constant diagonal, stiff accuracy) plus the order conditions of the
//! advertised advancing and embedded orders, rather than transcribed digits.

use nalgebra::{DMatrix, DVector};

/// The three supported fixed-step methods. The first digit is the advancing
/// order, the second the embedded order (= stage count).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsdirkMethod {
    Esdirk12,
    Esdirk23,
    Esdirk34,
}

impl EsdirkMethod {
    pub fn name(self) -> &'static str {
        match self {
            EsdirkMethod::Esdirk12 => "esdirk12",
            EsdirkMethod::Esdirk23 => "esdirk23",
            EsdirkMethod::Esdirk34 => "esdirk34",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "esdirk12" => Some(EsdirkMethod::Esdirk12),
            "esdirk23" => Some(EsdirkMethod::Esdirk23),
            "esdirk34" => Some(EsdirkMethod::Esdirk34),
            _ => None,
        }
    }
}

/// Coefficients of one ESDIRK method.
///
/// `a` is strictly lower triangular in its first row (explicit stage) and has
/// `gamma` on the remaining diagonal entries; `b` equals the last row of `a`
/// (stiff accuracy), so the final stage is the step result.
#[derive(Debug, Clone)]
pub struct ButcherTableau {
    pub method: EsdirkMethod,
    pub stages: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub b_hat: DVector<f64>,
    pub c: DVector<f64>,
    pub gamma: f64,
}

/// Builds the tableau for `method`. See [`ButcherTableau`].
pub fn make_tableau(method: EsdirkMethod) -> ButcherTableau {
    match method {
        EsdirkMethod::Esdirk12 => esdirk12(),
        EsdirkMethod::Esdirk23 => esdirk23(),
        EsdirkMethod::Esdirk34 => esdirk34(),
    }
}

impl ButcherTableau {
    /// Order at which the method advances the solution.
    pub fn advancing_order(&self) -> usize {
        match self.method {
            EsdirkMethod::Esdirk12 => 1,
            EsdirkMethod::Esdirk23 => 2,
            EsdirkMethod::Esdirk34 => 3,
        }
    }

    /// Residuals of the Runge-Kutta order conditions for the given weight
    /// vector, for all conditions up to `order` (supported up to 4).
    ///
    /// Order 1: `sum w = 1`; order 2: `w.c = 1/2`; order 3: `w.c^2 = 1/3`,
    /// `w.(Ac) = 1/6`; order 4: `w.c^3 = 1/4`, `w.(c*Ac) = 1/8`,
    /// `w.(Ac^2) = 1/12`, `w.(AAc) = 1/24`.
    pub fn order_residuals(&self, weights: &DVector<f64>, order: usize) -> Vec<f64> {
        assert!(order <= 4, "order conditions implemented up to 4");
        let c = &self.c;
        let c2 = c.map(|v| v * v);
        let c3 = c.map(|v| v * v * v);
        let ac = &self.a * c;
        let mut res = vec![weights.sum() - 1.0];
        if order >= 2 {
            res.push(weights.dot(c) - 0.5);
        }
        if order >= 3 {
            res.push(weights.dot(&c2) - 1.0 / 3.0);
            res.push(weights.dot(&ac) - 1.0 / 6.0);
        }
        if order >= 4 {
            res.push(weights.dot(&c3) - 0.25);
            res.push(weights.dot(&ac.component_mul(c)) - 1.0 / 8.0);
            res.push(weights.dot(&(&self.a * &c2)) - 1.0 / 12.0);
            res.push(weights.dot(&(&self.a * &ac)) - 1.0 / 24.0);
        }
        res
    }

    /// Largest violation among structural invariants: stiff accuracy, row-sum
    /// consistency `c_i = sum_j a_ij`, `c_1 = 0`, `c_ns = 1`.
    pub fn structure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.stages {
            worst = worst.max((self.a[(self.stages - 1, j)] - self.b[j]).abs());
        }
        for i in 0..self.stages {
            let row_sum: f64 = (0..self.stages).map(|j| self.a[(i, j)]).sum();
            worst = worst.max((row_sum - self.c[i]).abs());
        }
        worst = worst.max(self.c[0].abs());
        worst = worst.max((self.c[self.stages - 1] - 1.0).abs());
        worst
    }
}

/// Implicit Euler advancing step with trapezoidal embedded weights; the only
/// two-stage stiffly accurate ESDIRK with first-order advancing and
/// second-order embedded quadrature.
fn esdirk12() -> ButcherTableau {
    let gamma = 1.0;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, gamma]);
    ButcherTableau {
        method: EsdirkMethod::Esdirk12,
        stages: 2,
        b: DVector::from_vec(vec![0.0, gamma]),
        b_hat: DVector::from_vec(vec![0.5, 0.5]),
        c: DVector::from_vec(vec![0.0, 1.0]),
        a,
        gamma,
    }
}

/// gamma solves the second-order condition `2 gamma - gamma^2 = 1/2` (the
/// L-stable root `1 - 1/sqrt(2)`); the embedded weights solve the third-order
/// quadrature conditions on the nodes `(0, 2 gamma, 1)`.
fn esdirk23() -> ButcherTableau {
    let gamma = 1.0 - 1.0 / 2.0_f64.sqrt();
    let b1 = (1.0 - gamma) / 2.0;
    let c = DVector::from_vec(vec![0.0, 2.0 * gamma, 1.0]);
    let b_hat = quadrature_weights(&c, 3);
    let a = DMatrix::from_row_slice(3, 3, &[
        0.0, 0.0, 0.0,
        gamma, gamma, 0.0,
        b1, b1, gamma,
    ]);
    ButcherTableau {
        method: EsdirkMethod::Esdirk23,
        stages: 3,
        b: DVector::from_vec(vec![b1, b1, gamma]),
        b_hat,
        c,
        a,
        gamma,
    }
}

/// gamma is the L-stability root of `g^3 - 3g^2 + 3g/2 - 1/6` near 0.4359.
/// Stages 2..4 carry stage order two; under that the free abscissa `c3` is
/// pinned by the one remaining fourth-order condition on the embedded
/// weights, `b_hat . (A c^2) = 1/12`.
fn esdirk34() -> ButcherTableau {
    let gamma = newton_root(|g| g * g * g - 3.0 * g * g + 1.5 * g - 1.0 / 6.0, 0.436);
    let c2 = 2.0 * gamma;
    let c3 = esdirk34_c3(gamma);
    let (a, b) = esdirk34_rows(gamma, c3);
    let c = DVector::from_vec(vec![0.0, c2, c3, 1.0]);
    let b_hat = quadrature_weights(&c, 4);
    ButcherTableau {
        method: EsdirkMethod::Esdirk34,
        stages: 4,
        a,
        b,
        b_hat,
        c,
        gamma,
    }
}

/// Interpolatory quadrature weights on the nodes `c` reproducing
/// `integral of t^k over [0,1]` for `k < order` (Vandermonde solve).
fn quadrature_weights(c: &DVector<f64>, order: usize) -> DVector<f64> {
    let n = c.len();
    assert_eq!(n, order);
    let vand = DMatrix::from_fn(n, n, |i, j| c[j].powi(i as i32));
    let rhs = DVector::from_fn(n, |i, _| 1.0 / (i as f64 + 1.0));
    vand.lu().solve(&rhs).expect("distinct abscissae")
}

fn esdirk34_rows(gamma: f64, c3: f64) -> (DMatrix<f64>, DVector<f64>) {
    let c2 = 2.0 * gamma;
    // stage-order-two condition at stage 3: a32 c2 + gamma c3 = c3^2 / 2
    let a32 = (c3 * c3 / 2.0 - gamma * c3) / c2;
    let a31 = c3 - gamma - a32;
    // advancing weights from third-order quadrature with b4 = gamma
    let m = DMatrix::from_row_slice(3, 3, &[
        1.0, 1.0, 1.0,
        0.0, c2, c3,
        0.0, c2 * c2, c3 * c3,
    ]);
    let rhs = DVector::from_vec(vec![1.0 - gamma, 0.5 - gamma, 1.0 / 3.0 - gamma]);
    let b123 = m.lu().solve(&rhs).expect("distinct abscissae");
    let b = DVector::from_vec(vec![b123[0], b123[1], b123[2], gamma]);
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, 0.0, 0.0,
        gamma, gamma, 0.0, 0.0,
        a31, a32, gamma, 0.0,
        b[0], b[1], b[2], gamma,
    ]);
    (a, b)
}

/// Scalar residual whose root places `c3`: with stage order two the
/// fourth-order conditions on the embedded weights collapse to
/// `b_hat . (A c^2) = 1/12`.
fn esdirk34_embedded_residual(gamma: f64, c3: f64) -> f64 {
    let (a, _) = esdirk34_rows(gamma, c3);
    let c = DVector::from_vec(vec![0.0, 2.0 * gamma, c3, 1.0]);
    let b_hat = quadrature_weights(&c, 4);
    let c2 = c.map(|v| v * v);
    b_hat.dot(&(&a * &c2)) - 1.0 / 12.0
}

fn esdirk34_c3(gamma: f64) -> f64 {
    let c2 = 2.0 * gamma;
    let valid = |x: f64| x > 1e-3 && (x - c2).abs() > 1e-3 && (x - 1.0).abs() > 1e-3;
    // bracket by scan, then bisect
    let f = |x: f64| esdirk34_embedded_residual(gamma, x);
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    let mut x = 0.05;
    while x < 2.5 {
        if valid(x) {
            let fx = f(x);
            if let Some((px, pfx)) = prev {
                if pfx * fx < 0.0 {
                    bracket = Some((px, x));
                    break;
                }
            }
            prev = Some((x, fx));
        } else {
            prev = None;
        }
        x += 0.01;
    }
    let (mut lo, mut hi) = bracket.expect("embedded order condition has a root");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn newton_root<F: Fn(f64) -> f64>(f: F, x0: f64) -> f64 {
    let mut x = x0;
    for _ in 0..100 {
        let fx = f(x);
        let df = (f(x + 1e-7) - f(x - 1e-7)) / 2e-7;
        let step = fx / df;
        x -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    x
}
