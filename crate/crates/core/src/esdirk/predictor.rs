//! Stage value predictors: polynomial extrapolation of the previous step's
//! converged stages to warm-start the Newton iterations of the current step.

use nalgebra::{DMatrix, DVector};

use super::tableau::ButcherTableau;

/// Extrapolation coefficients for stages `2..=n_s`.
///
/// The guess for stage `i` is
/// `alpha[i-2] * s_{k-1} + sum_j beta[(i-2, j-2)] * S_hat_j`, where
/// `S_hat_j` are the previous step's converged stages and the last slot is
/// the current state `s_k` (the final stage of a stiffly accurate method).
/// Every row reproduces constants: `alpha_i + sum_j beta_ij = 1`.
#[derive(Debug, Clone)]
pub struct PredictorCoefficients {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
}

impl PredictorCoefficients {
    /// The trivial predictor `S_i = s_k`: all weight on the last slot.
    pub fn trivial(stages: usize) -> Self {
        let mut beta = DMatrix::zeros(stages - 1, stages - 1);
        for i in 0..stages - 1 {
            beta[(i, stages - 2)] = 1.0;
        }
        Self {
            alpha: DVector::zeros(stages - 1),
            beta,
        }
    }

    /// Solves the extrapolation order conditions for step ratio `r`.
    ///
    /// The data sit at nodes `0, c_2, ..., c_{n_s}` (in units of the previous
    /// step) and the target is `1 + r c_i`; matching all powers up to
    /// `n_s - 1` is the highest order the stage count admits. A singular node
    /// configuration falls back to the trivial predictor with a warning.
    pub fn for_tableau(tableau: &ButcherTableau, r: f64) -> Self {
        let n = tableau.stages;
        let mut nodes = DVector::zeros(n);
        for j in 1..n {
            nodes[j] = tableau.c[j];
        }
        let vand = DMatrix::from_fn(n, n, |row, col| nodes[col].powi(row as i32));
        let lu = vand.lu();
        let mut alpha = DVector::zeros(n - 1);
        let mut beta = DMatrix::zeros(n - 1, n - 1);
        for i in 1..n {
            let target = 1.0 + r * tableau.c[i];
            let rhs = DVector::from_fn(n, |row, _| target.powi(row as i32));
            match lu.solve(&rhs) {
                Some(coef) => {
                    alpha[i - 1] = coef[0];
                    for j in 1..n {
                        beta[(i - 1, j - 1)] = coef[j];
                    }
                }
                None => {
                    log::warn!(
                        "singular predictor conditions for {:?}; falling back to trivial predictor",
                        tableau.method
                    );
                    return Self::trivial(n);
                }
            }
        }
        Self { alpha, beta }
    }

    /// Guess for stage `i` (1-based, `i >= 2`) from the previous step's data.
    ///
    /// `prev_stages[0]` must be `s_{k-1}` and `prev_stages[j]` the converged
    /// stage `j+1`; the last entry is `s_k` by stiff accuracy.
    pub fn predict(&self, stage: usize, prev_stages: &[DVector<f64>]) -> DVector<f64> {
        let row = stage - 2;
        let mut s = &prev_stages[0] * self.alpha[row];
        for j in 1..prev_stages.len() {
            s += &prev_stages[j] * self.beta[(row, j - 1)];
        }
        s
    }

    /// Residuals of the constant-reproduction condition per row.
    pub fn constant_reproduction_residuals(&self) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|i| self.alpha[i] + self.beta.row(i).sum() - 1.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esdirk::tableau::{make_tableau, EsdirkMethod};
    use approx::assert_abs_diff_eq;

    #[test]
    fn trivial_predictor_reproduces_constants() {
        let p = PredictorCoefficients::trivial(3);
        let s = DVector::from_vec(vec![2.0, -1.0]);
        let data = vec![s.clone(), s.clone(), s.clone()];
        for stage in 2..=3 {
            assert_eq!(p.predict(stage, &data), s);
        }
        for r in p.constant_reproduction_residuals() {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn esdirk12_predictor_is_linear_extrapolation() {
        // nodes {0, 1}, target 1 + c_2 = 2: alpha = -1, beta = 2
        let t = make_tableau(EsdirkMethod::Esdirk12);
        let p = PredictorCoefficients::for_tableau(&t, 1.0);
        assert_abs_diff_eq!(p.alpha[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.beta[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.alpha[0] + p.beta[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn predictor_reproduces_polynomials_up_to_its_order() {
        // evaluate a degree n_s - 1 polynomial at the data nodes and check the
        // extrapolated value at each target node
        for method in [EsdirkMethod::Esdirk12, EsdirkMethod::Esdirk23, EsdirkMethod::Esdirk34] {
            let t = make_tableau(method);
            let p = PredictorCoefficients::for_tableau(&t, 1.0);
            for r in p.constant_reproduction_residuals() {
                assert!(r.abs() < 1e-10, "{method:?}: constant reproduction {r:e}");
            }
            for degree in 0..t.stages {
                let poly = |x: f64| (0..=degree).map(|k| (x + 0.3).powi(k as i32)).sum::<f64>();
                let mut data = Vec::new();
                data.push(DVector::from_element(1, poly(0.0)));
                for j in 1..t.stages {
                    data.push(DVector::from_element(1, poly(t.c[j])));
                }
                for stage in 2..=t.stages {
                    let target = 1.0 + t.c[stage - 1];
                    let got = p.predict(stage, &data)[0];
                    assert!(
                        (got - poly(target)).abs() < 1e-10 * poly(target).abs().max(1.0),
                        "{method:?} stage {stage} degree {degree}: {got} vs {}",
                        poly(target)
                    );
                }
            }
        }
    }
}
