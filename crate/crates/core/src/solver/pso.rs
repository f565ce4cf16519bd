use serde::{Deserialize, Serialize};

use super::objective::{fitness, RatioObjective};
use super::SolverResult;
use crate::error::{Error, Result};
use crate::geometry::{reflect, Position, Roi};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iters: usize,
    /// Per-axis speed limit as a fraction of the search extent.
    pub velocity_clamp: f64,
    /// Global-best improvements smaller than this count as a stall.
    pub convergence_tol: f64,
    pub stall_iters: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 60,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            max_iters: 150,
            velocity_clamp: 0.2,
            convergence_tol: 1e-12,
            stall_iters: 30,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::invalid("pso.swarm_size", "must be >= 2"));
        }
        if !(self.inertia > 0.0 && self.inertia <= 1.0) {
            return Err(Error::invalid("pso.inertia", "must lie in (0, 1]"));
        }
        if !(self.cognitive > 0.0) {
            return Err(Error::invalid("pso.cognitive", "must be > 0"));
        }
        if !(self.social > 0.0) {
            return Err(Error::invalid("pso.social", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("pso.max_iters", "must be >= 1"));
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(Error::invalid("pso.velocity_clamp", "must be > 0"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::invalid("pso.convergence_tol", "must be >= 0"));
        }
        if self.stall_iters == 0 {
            return Err(Error::invalid("pso.stall_iters", "must be >= 1"));
        }
        Ok(())
    }
}

struct Particle {
    x: [f64; 3],
    v: [f64; 3],
    best: [f64; 3],
    best_f: f64,
}

fn pos(a: &[f64; 3]) -> Position {
    Position::new(a[0], a[1], a[2])
}

pub fn pso_minimize(obj: &RatioObjective, bounds: &Roi, cfg: &PsoConfig, rng: &mut RngStream) -> SolverResult {
    pso_minimize_traced(obj, bounds, cfg, &[], rng).0
}

/// As [`pso_minimize`], with the first particles started at `seeds`
/// (clamped into the bounds) instead of uniform draws. The random stream is
/// consumed exactly as without seeds.
pub fn pso_minimize_seeded(
    obj: &RatioObjective,
    bounds: &Roi,
    cfg: &PsoConfig,
    seeds: &[Position],
    rng: &mut RngStream,
) -> SolverResult {
    pso_minimize_traced(obj, bounds, cfg, seeds, rng).0
}

/// As [`pso_minimize_seeded`], also returning the global-best fitness after
/// initialization and after every iteration.
pub fn pso_minimize_traced(
    obj: &RatioObjective,
    bounds: &Roi,
    cfg: &PsoConfig,
    seeds: &[Position],
    rng: &mut RngStream,
) -> (SolverResult, Vec<f64>) {
    let lo = bounds.lower();
    let hi = bounds.upper();
    let extent = bounds.extent();
    let vmax = extent.map(|e| cfg.velocity_clamp * e);
    let n = cfg.swarm_size.max(1);

    let mut swarm: Vec<Particle> = (0..n)
        .map(|i| {
            let mut x = [0.0; 3];
            let mut v = [0.0; 3];
            for d in 0..3 {
                x[d] = rng.uniform_in(lo[d], hi[d]);
                v[d] = rng.uniform_in(-vmax[d], vmax[d]);
            }
            if let Some(seed) = seeds.get(i).filter(|s| s.is_finite()) {
                let c = bounds.clamp(seed);
                x = [c.x, c.y, c.z];
            }
            let f = fitness(&pos(&x), obj);
            Particle {
                x,
                v,
                best: x,
                best_f: f,
            }
        })
        .collect();

    let mut g = 0;
    for (i, p) in swarm.iter().enumerate() {
        if p.best_f < swarm[g].best_f {
            g = i;
        }
    }
    let mut g_best = swarm[g].best;
    let mut g_best_f = swarm[g].best_f;
    let mut history = vec![g_best_f];

    let mut stalled = 0;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        for p in swarm.iter_mut() {
            for d in 0..3 {
                if extent[d] <= 0.0 {
                    p.x[d] = lo[d];
                    p.v[d] = 0.0;
                    continue;
                }
                let r1 = rng.uniform();
                let r2 = rng.uniform();
                let v = cfg.inertia * p.v[d]
                    + cfg.cognitive * r1 * (p.best[d] - p.x[d])
                    + cfg.social * r2 * (g_best[d] - p.x[d]);
                let v = v.clamp(-vmax[d], vmax[d]);
                let moved = p.x[d] + v;
                p.x[d] = reflect(moved, lo[d], hi[d]);
                // bounce off the wall
                p.v[d] = if moved == p.x[d] { v } else { -v };
            }
            let f = fitness(&pos(&p.x), obj);
            if f < p.best_f {
                p.best = p.x;
                p.best_f = f;
            }
        }

        let previous = g_best_f;
        for p in &swarm {
            if p.best_f < g_best_f {
                g_best = p.best;
                g_best_f = p.best_f;
            }
        }
        history.push(g_best_f);

        if previous - g_best_f <= cfg.convergence_tol {
            stalled += 1;
            if stalled >= cfg.stall_iters {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let result = SolverResult {
        estimate: pos(&g_best),
        objective_value: g_best_f,
        pso_iters: iters,
        lm_iters: 0,
        converged: stalled >= cfg.stall_iters,
    };
    (result, history)
}
