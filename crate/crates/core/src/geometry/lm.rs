//! Levenberg–Marquardt nonlinear least squares with forward-difference Jacobians.
//!
//! Cost is the plain sum of squared residuals. Parameters may live on a manifold:
//! the problem supplies a `retract` that applies a tangent-space increment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_iters: usize,
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step (> 1).
    pub damping_up: f64,
    /// Damping multiplier after an accepted step (< 1).
    pub damping_down: f64,
    /// Relative step-norm tolerance.
    pub step_tolerance: f64,
    /// Relative cost-decrease tolerance.
    pub cost_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iters: 100,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-14,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("LM max_iters must be at least 1"));
        }
        if !(self.initial_damping > 0.0) {
            return Err(Error::invalid("LM damping must be positive"));
        }
        if !(self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err(Error::invalid("LM damping factors must satisfy up > 1 > down > 0"));
        }
        if !(self.step_tolerance > 0.0 && self.cost_tolerance > 0.0) {
            return Err(Error::invalid("LM tolerances must be positive"));
        }
        Ok(())
    }
}

pub trait LeastSquaresProblem {
    type Params: Clone;

    /// Tangent-space dimension.
    fn dof(&self) -> usize;

    fn residuals(&self, params: &Self::Params) -> Result<DVector<f64>>;

    fn retract(&self, params: &Self::Params, delta: &DVector<f64>) -> Self::Params;

    /// Magnitude of coordinate `i`, used to scale the finite-difference step.
    fn coordinate_magnitude(&self, _params: &Self::Params, _i: usize) -> f64 {
        0.0
    }

    /// Flat view of the parameters, attached to numerical-failure errors.
    fn flatten(&self, params: &Self::Params) -> Vec<f64>;
}

/// Plain vector-valued problem `r: R^n -> R^m`.
pub struct VectorProblem<F> {
    dim: usize,
    f: F,
}

impl<F> VectorProblem<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    pub fn new(dim: usize, f: F) -> Self {
        VectorProblem { dim, f }
    }
}

impl<F> LeastSquaresProblem for VectorProblem<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    type Params = DVector<f64>;

    fn dof(&self) -> usize {
        self.dim
    }

    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        (self.f)(params)
    }

    fn retract(&self, params: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        params + delta
    }

    fn coordinate_magnitude(&self, params: &DVector<f64>, i: usize) -> f64 {
        params[i].abs()
    }

    fn flatten(&self, params: &DVector<f64>) -> Vec<f64> {
        params.iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ZeroCost,
    SmallStep,
    SmallCostDecrease,
    SmallGradient,
    DampingExhausted,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport<P> {
    pub params: P,
    pub cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

fn fd_step(magnitude: f64) -> f64 {
    1e-6 * magnitude.max(1.0)
}

/// Forward-difference Jacobian with step `1e-6 * max(1, |x_i|)`.
pub fn fd_jacobian<P: LeastSquaresProblem>(problem: &P, params: &P::Params, r0: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = problem.dof();
    let mut jac = DMatrix::zeros(r0.len(), n);
    for i in 0..n {
        let h = fd_step(problem.coordinate_magnitude(params, i));
        let mut delta = DVector::zeros(n);
        delta[i] = h;
        let r = problem.residuals(&problem.retract(params, &delta))?;
        if r.len() != r0.len() {
            return Err(Error::invalid("residual length changed between evaluations"));
        }
        jac.set_column(i, &((r - r0) / h));
    }
    Ok(jac)
}

fn non_finite<P: LeastSquaresProblem>(problem: &P, best: &P::Params, what: &str) -> Error {
    Error::NumericalFailure {
        message: format!("non-finite {what} during Levenberg-Marquardt iteration"),
        best: Some(problem.flatten(best)),
    }
}

pub fn lm_minimize<P: LeastSquaresProblem>(problem: &P, x0: P::Params, cfg: &LmConfig) -> Result<LmReport<P::Params>> {
    cfg.validate()?;
    let n = problem.dof();
    let mut x = x0;
    let mut r = problem.residuals(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("residuals are not finite at the initial parameters"));
    }
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut lambda = cfg.initial_damping;
    let mut accepted = 0;

    let done = |x, cost, iterations, accepted, history, termination| {
        Ok(LmReport {
            params: x,
            cost,
            iterations,
            accepted_steps: accepted,
            cost_history: history,
            termination,
        })
    };

    if cost == 0.0 {
        return done(x, cost, 0, 0, history, Termination::ZeroCost);
    }

    for iter in 0..cfg.max_iters {
        let jac = fd_jacobian(problem, &x, &r)?;
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(problem, &x, "Jacobian"));
        }
        let grad = jac.transpose() * &r;
        if grad.amax() <= 1e-300 {
            return done(x, cost, iter, accepted, history, Termination::SmallGradient);
        }
        let jtj = jac.transpose() * &jac;

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= cfg.damping_up;
                    if lambda > 1e32 {
                        return done(x, cost, iter + 1, accepted, history, Termination::DampingExhausted);
                    }
                    continue;
                }
            };
            let candidate = problem.retract(&x, &step);
            let r_new = problem.residuals(&candidate)?;
            if r_new.iter().any(|v| !v.is_finite()) {
                return Err(non_finite(problem, &x, "residuals"));
            }
            let cost_new = r_new.norm_squared();
            if cost_new < cost {
                let decrease = cost - cost_new;
                let x_norm = DVector::from_vec(problem.flatten(&x)).norm();
                x = candidate;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                accepted += 1;
                lambda = (lambda * cfg.damping_down).max(1e-15);
                if cost == 0.0 {
                    return done(x, cost, iter + 1, accepted, history, Termination::ZeroCost);
                }
                if step.norm() <= cfg.step_tolerance * (x_norm + cfg.step_tolerance) {
                    return done(x, cost, iter + 1, accepted, history, Termination::SmallStep);
                }
                if decrease <= cfg.cost_tolerance * (cost + decrease) {
                    return done(x, cost, iter + 1, accepted, history, Termination::SmallCostDecrease);
                }
                break;
            }
            lambda *= cfg.damping_up;
            if lambda > 1e32 {
                return done(x, cost, iter + 1, accepted, history, Termination::DampingExhausted);
            }
        }
    }
    let iters = cfg.max_iters;
    done(x, cost, iters, accepted, history, Termination::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn scalar_linear_problem() {
        let p = VectorProblem::new(1, |x: &DVector<f64>| Ok(dvector![x[0] - 3.0]));
        let rep = lm_minimize(&p, dvector![0.0], &LmConfig::default()).unwrap();
        assert!((rep.params[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_cost_start_is_returned_untouched() {
        let p = VectorProblem::new(1, |x: &DVector<f64>| Ok(dvector![x[0] - 3.0]));
        let rep = lm_minimize(&p, dvector![3.0], &LmConfig::default()).unwrap();
        assert_eq!(rep.params[0], 3.0);
        assert_eq!(rep.accepted_steps, 0);
        assert_eq!(rep.termination, Termination::ZeroCost);
    }

    #[test]
    fn accepted_costs_never_increase() {
        // Rosenbrock in residual form
        let p = VectorProblem::new(2, |x: &DVector<f64>| {
            Ok(dvector![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
        });
        let rep = lm_minimize(&p, dvector![-1.2, 1.0], &LmConfig::default()).unwrap();
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!((rep.params[0] - 1.0).abs() < 1e-6 && (rep.params[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nan_residuals_surface_best_params() {
        let p = VectorProblem::new(1, |x: &DVector<f64>| {
            if x[0] > 1.0 {
                Ok(dvector![f64::NAN])
            } else {
                Ok(dvector![x[0] - 3.0])
            }
        });
        match lm_minimize(&p, dvector![0.0], &LmConfig::default()) {
            Err(Error::NumericalFailure { best: Some(b), .. }) => assert_eq!(b.len(), 1),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn fd_jacobian_matches_linear_map() {
        let a = dmatrix![1.0, 2.0; -3.0, 0.5; 4.0, -1.0];
        let b = dvector![1.0, 2.0, 3.0];
        let (a2, b2) = (a.clone(), b.clone());
        let p = VectorProblem::new(2, move |x: &DVector<f64>| Ok(&a2 * x - &b2));
        let x = dvector![0.7, -2.0];
        let r0 = p.residuals(&x).unwrap();
        let j = fd_jacobian(&p, &x, &r0).unwrap();
        for (fd, exact) in j.iter().zip(a.iter()) {
            assert!((fd - exact).abs() <= 1e-4 * exact.abs());
        }
    }

    #[test]
    fn config_validation() {
        let bad = LmConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
