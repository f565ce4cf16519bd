use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::objective::{fitness, lm_jacobian, residuals, RatioObjective};
use super::SolverResult;
use crate::error::{Error, Result};
use crate::geometry::{Position, Roi};

pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop once a step is shorter than this, in meters.
    pub step_tol: f64,
    pub max_iters: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            step_tol: 1e-6,
            max_iters: 100,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init > 0.0) {
            return Err(Error::invalid("lm.lambda_init", "must be > 0"));
        }
        if !(self.lambda_up > 1.0) {
            return Err(Error::invalid("lm.lambda_up", "must be > 1"));
        }
        // lambda_down is a shrink multiplier
        if !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(Error::invalid("lm.lambda_down", "must lie in (0, 1)"));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::invalid("lm.step_tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("lm.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Damped Gauss-Newton step `-(JᵀJ + λI)⁻¹ Jᵀ r` at `x`. Axes flagged in
/// `frozen` get no step. `None` if the damped system cannot be factored.
pub fn lm_step(x: &Position, obj: &RatioObjective, lambda: f64) -> Option<Vector3<f64>> {
    damped_step(x, obj, lambda, [false; 3])
}

fn damped_step(x: &Position, obj: &RatioObjective, lambda: f64, frozen: [bool; 3]) -> Option<Vector3<f64>> {
    let mut jac = lm_jacobian(x, obj);
    for (axis, f) in frozen.iter().enumerate() {
        if *f {
            jac.column_mut(axis).fill(0.0);
        }
    }
    let r = nalgebra::DVector::from_vec(residuals(x, obj));
    let jtj: Matrix3<f64> = jac.transpose() * &jac;
    let jtr: Vector3<f64> = jac.transpose() * r;
    let system = jtj + Matrix3::identity() * lambda;
    let step = system.cholesky()?.solve(&(-jtr));
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Unconstrained LM refinement from `x0`.
pub fn lm_refine(x0: Position, obj: &RatioObjective, cfg: &LmConfig) -> SolverResult {
    lm_refine_bounded(x0, obj, None, cfg)
}

/// LM refinement with every trial point projected into `bounds`. Axes with
/// zero extent are held fixed.
pub fn lm_refine_bounded(x0: Position, obj: &RatioObjective, bounds: Option<&Roi>, cfg: &LmConfig) -> SolverResult {
    let project = |p: Position| bounds.map_or(p, |b| b.clamp(&p));
    let frozen = bounds.map_or([false; 3], |b| b.extent().map(|e| e <= 0.0));

    let start = project(x0);
    let start_f = fitness(&start, obj);
    let mut x = start;
    let mut f = start_f;
    let mut lambda = cfg.lambda_init.clamp(LAMBDA_MIN, LAMBDA_MAX);
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        iters += 1;
        if f == 0.0 {
            converged = true;
            break;
        }
        let step = loop {
            match damped_step(&x, obj, lambda, frozen) {
                Some(s) => break Some(s),
                None if lambda < LAMBDA_MAX => lambda = (lambda * cfg.lambda_up).min(LAMBDA_MAX),
                None => break None,
            }
        };
        let Some(step) = step else {
            return SolverResult {
                estimate: start,
                objective_value: start_f,
                pso_iters: 0,
                lm_iters: iters,
                converged: false,
            };
        };

        let trial = project(Position::from_vector(&(x.to_vector() + step)));
        let moved = (trial.to_vector() - x.to_vector()).norm();
        let trial_f = fitness(&trial, obj);
        if trial_f < f {
            x = trial;
            f = trial_f;
            lambda = (lambda * cfg.lambda_down).max(LAMBDA_MIN);
        } else {
            lambda = (lambda * cfg.lambda_up).min(LAMBDA_MAX);
        }
        if moved < cfg.step_tol {
            converged = true;
            break;
        }
    }

    SolverResult {
        estimate: x,
        objective_value: f,
        pso_iters: 0,
        lm_iters: iters,
        converged,
    }
}
