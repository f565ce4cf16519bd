use nalgebra::MatrixXx3;

use crate::channel::{ratio_array, RatioArray, RssiSample};
use crate::error::{Error, Result};
use crate::geometry::{distance, Position};

/// Ratio least-squares problem for one batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioObjective {
    positions: Vec<Position>,
    ratios: RatioArray,
    d_min: f64,
}

impl RatioObjective {
    pub fn new(positions: Vec<Position>, ratios: RatioArray, d_min: f64) -> Result<Self> {
        if positions.len() != ratios.len() + 1 {
            return Err(Error::ContractViolation(format!(
                "{} sample positions for {} ratios",
                positions.len(),
                ratios.len()
            )));
        }
        if ratios.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: positions.len(),
            });
        }
        if !(d_min > 0.0) {
            return Err(Error::ContractViolation("d_min must be > 0".into()));
        }
        Ok(Self {
            positions,
            ratios,
            d_min,
        })
    }

    pub fn from_samples(samples: &[RssiSample], kappa: f64, d_min: f64) -> Result<Self> {
        let ratios = ratio_array(samples, kappa)?;
        Self::new(samples.iter().map(|s| s.position).collect(), ratios, d_min)
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn ratios(&self) -> &RatioArray {
        &self.ratios
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn residual_count(&self) -> usize {
        self.ratios.len()
    }

    fn clamped(&self, candidate: &Position, k: usize) -> f64 {
        distance(candidate, &self.positions[k]).max(self.d_min)
    }
}

/// `r_{j-1} = d̃_1/d̃_j - ρ_{j-1}` for `j = 2..n`.
pub fn residuals(candidate: &Position, obj: &RatioObjective) -> Vec<f64> {
    let d1 = obj.clamped(candidate, 0);
    obj.ratios
        .ratios
        .iter()
        .enumerate()
        .map(|(m, rho)| d1 / obj.clamped(candidate, m + 1) - rho)
        .collect()
}

/// Sum of squared residuals.
pub fn fitness(candidate: &Position, obj: &RatioObjective) -> f64 {
    let d1 = obj.clamped(candidate, 0);
    obj.ratios
        .ratios
        .iter()
        .enumerate()
        .map(|(m, rho)| {
            let r = d1 / obj.clamped(candidate, m + 1) - rho;
            r * r
        })
        .sum()
}

/// Analytic `∂r/∂x`, one row per residual. A distance held at `d_min` by the
/// clamp contributes no gradient.
pub fn lm_jacobian(candidate: &Position, obj: &RatioObjective) -> MatrixXx3<f64> {
    let x = candidate.to_vector();
    let grad = |k: usize| {
        let delta = x - obj.positions[k].to_vector();
        let d = delta.norm();
        if d <= obj.d_min {
            (obj.d_min, nalgebra::Vector3::zeros())
        } else {
            (d, delta / d)
        }
    };
    let (d1, g1) = grad(0);
    let mut jac = MatrixXx3::zeros(obj.residual_count());
    for m in 0..obj.residual_count() {
        let (dj, gj) = grad(m + 1);
        // d(d1/dj) = g1/dj - d1·gj/dj²
        let row = g1 / dj - gj * (d1 / (dj * dj));
        jac.row_mut(m).copy_from(&row.transpose());
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_objective(ratio: f64, a: Position, b: Position) -> RatioObjective {
        // A third, far sample keeps the objective well-formed; tests look at row 0.
        let far = Position::new(1e4, 1e4, 0.0);
        RatioObjective::new(
            vec![a, b, far],
            RatioArray {
                anchor_index: 0,
                ratios: vec![ratio, 1.0],
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        let obj = pair_objective(0.4, Position::new(10.0, 0.0, 0.0), Position::new(20.0, 0.0, 0.0));
        let r = residuals(&Position::new(0.0, 0.0, 0.0), &obj);
        assert!((r[0] - 0.1).abs() < 1e-15);

        let obj = pair_objective(1.0, Position::new(-5.0, 0.0, 0.0), Position::new(5.0, 0.0, 0.0));
        let r = residuals(&Position::new(0.0, 42.0, -3.0), &obj);
        assert!(r[0].abs() < 1e-15);
    }

    #[test]
    fn fitness_is_squared_norm() {
        let obj = pair_objective(0.4, Position::new(10.0, 0.0, 0.0), Position::new(20.0, 0.0, 0.0));
        for c in [Position::new(0.0, 0.0, 0.0), Position::new(3.0, -7.0, 11.0)] {
            let r = residuals(&c, &obj);
            let sq: f64 = r.iter().map(|v| v * v).sum();
            assert!((fitness(&c, &obj) - sq).abs() < 1e-12);
        }
        // residuals (0.1, -0.1) -> 0.02
        let sq: f64 = [0.1f64, -0.1].iter().map(|v| v * v).sum();
        assert!((sq - 0.02).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let r = RatioObjective::new(
            vec![Position::default(); 3],
            RatioArray {
                anchor_index: 0,
                ratios: vec![1.0],
            },
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn clamp_zeroes_anchor_partials() {
        let a = Position::new(0.0, 0.0, 100.0);
        let b = Position::new(50.0, 0.0, 100.0);
        let c = Position::new(0.0, 80.0, 100.0);
        let obj = RatioObjective::new(
            vec![a, b, c],
            RatioArray {
                anchor_index: 0,
                ratios: vec![0.5, 0.5],
            },
            1.0,
        )
        .unwrap();
        let cand = Position::new(0.3, 0.2, 99.9);
        let jac = lm_jacobian(&cand, &obj);
        // only the -d1·∇dj/dj² term is left; it points along the candidate→sample-j direction
        for m in 0..2 {
            let pj = obj.positions()[m + 1].to_vector();
            let delta = cand.to_vector() - pj;
            let dj = delta.norm();
            let want = -(delta / dj) * (1.0 / (dj * dj));
            for axis in 0..3 {
                assert!((jac[(m, axis)] - want[axis]).abs() < 1e-15);
            }
        }
    }
}
