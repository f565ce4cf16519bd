//! Distance-ratio least squares and its PSO + Levenberg-Marquardt hybrid
//! minimizer.
//!
//! For samples `A_1..A_n` and measured ratios `ρ_j = d_1/d_j`, the residual of
//! a candidate `x` is `r_j(x) = d̃_1(x)/d̃_j(x) - ρ_j`. PSO scans the search
//! box for the basin of the global minimum; LM polishes the swarm's best.

mod lm;
mod objective;
mod pso;

pub use lm::{lm_refine, lm_refine_bounded, lm_step, LmConfig, LAMBDA_MAX, LAMBDA_MIN};
pub use objective::{fitness, lm_jacobian, residuals, RatioObjective};
pub use pso::{pso_minimize, pso_minimize_seeded, pso_minimize_traced, PsoConfig};

use serde::{Deserialize, Serialize};

use crate::geometry::{Position, Roi};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub estimate: Position,
    /// Sum of squared ratio residuals at `estimate`.
    pub objective_value: f64,
    pub pso_iters: usize,
    pub lm_iters: usize,
    pub converged: bool,
}

/// PSO global search followed by LM refinement from the swarm's best point.
pub fn pso_lm_localize(
    obj: &RatioObjective,
    bounds: &Roi,
    pso: &PsoConfig,
    lm: &LmConfig,
    rng: &mut RngStream,
) -> SolverResult {
    pso_lm_localize_seeded(obj, bounds, pso, lm, &[], rng)
}

/// [`pso_lm_localize`] with part of the swarm started at `seeds`, e.g. the
/// estimates of earlier iterations.
pub fn pso_lm_localize_seeded(
    obj: &RatioObjective,
    bounds: &Roi,
    pso: &PsoConfig,
    lm: &LmConfig,
    seeds: &[Position],
    rng: &mut RngStream,
) -> SolverResult {
    let coarse = pso_minimize_seeded(obj, bounds, pso, seeds, rng);
    let fine = lm_refine_bounded(coarse.estimate, obj, Some(bounds), lm);
    SolverResult {
        pso_iters: coarse.pso_iters,
        ..fine
    }
}
