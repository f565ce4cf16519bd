//! Comparison methods that run on a fixed sampling budget without
//! re-planning: single-shot PSO-LM over all readings, ratio trilateration
//! over sample triples, and iterative weighted centroid.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel::{kappa, ChannelParams, RssiSample};
use crate::error::{Error, Result};
use crate::geometry::{distance, Position, Roi};
use crate::progressive::sample_leg;
use crate::rng::RngStream;
use crate::solver::{pso_lm_localize, LmConfig, PsoConfig, RatioObjective, SolverResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    SingleShotPsoLm,
    Trilateration,
    WeightedCentroid,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [
        BaselineMethod::SingleShotPsoLm,
        BaselineMethod::Trilateration,
        BaselineMethod::WeightedCentroid,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            BaselineMethod::SingleShotPsoLm => "single_shot_pso_lm",
            BaselineMethod::Trilateration => "trilateration",
            BaselineMethod::WeightedCentroid => "weighted_centroid",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Maximum number of non-degenerate sample triples used by trilateration.
    pub triple_cap: usize,
    /// Re-weighting rounds of the weighted centroid.
    pub centroid_iters: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            triple_cap: 200,
            centroid_iters: 10,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.triple_cap == 0 {
            return Err(Error::invalid("baselines.triple_cap", "must be >= 1"));
        }
        Ok(())
    }
}

/// Readings along a pre-planned path that starts with the leg
/// `start → first_leg_end` and then alternates between that heading and the
/// heading turned 90° left, so the pooled geometry is never collinear.
/// Legs that would leave the roi are mirrored at the wall and the path keeps
/// the mirrored heading afterwards. Exactly `budget` readings are returned.
pub fn fixed_path_samples(
    start: &Position,
    first_leg_end: &Position,
    spacing: f64,
    roi: &Roi,
    channel: &ChannelParams,
    source: &Position,
    budget: usize,
    rng: &mut RngStream,
) -> Result<Vec<RssiSample>> {
    let leg_length = start.horizontal_distance(first_leg_end);
    if leg_length < spacing {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    let mut dir = Vector2::new(first_leg_end.x - start.x, first_leg_end.y - start.y) / leg_length;
    let mut samples = Vec::with_capacity(budget);
    let mut current = *start;
    let mut leg = 0usize;
    let mut skipped = 0usize;
    while samples.len() < budget {
        let heading = if leg.is_multiple_of(2) {
            dir
        } else {
            Vector2::new(-dir.y, dir.x)
        };
        let raw = Position::new(
            current.x + leg_length * heading.x,
            current.y + leg_length * heading.y,
            current.z,
        );
        let end = if leg == 0 {
            *first_leg_end
        } else {
            roi.reflect_footprint(&raw)
        };
        if leg > 0 {
            // mirror the base heading on the axes where the wall was hit
            let flip_x = (raw.x - end.x).abs() > 1e-9;
            let flip_y = (raw.y - end.y).abs() > 1e-9;
            let (hx, hy) = (
                if flip_x { -heading.x } else { heading.x },
                if flip_y { -heading.y } else { heading.y },
            );
            dir = if leg.is_multiple_of(2) {
                Vector2::new(hx, hy)
            } else {
                Vector2::new(hy, -hx)
            };
        }
        leg += 1;
        if current.horizontal_distance(&end) < spacing {
            skipped += 1;
            if skipped > 8 {
                return Err(Error::DegenerateGeometry(
                    "fixed path is trapped against the roi walls".into(),
                ));
            }
            continue;
        }
        skipped = 0;
        let readings = sample_leg(&current, &end, spacing, channel, source, rng)?;
        let room = budget - samples.len();
        samples.extend(readings.into_iter().take(room));
        current = end;
    }
    Ok(samples)
}

/// One PSO-LM solve over every reading, anchored at the first one.
pub fn single_shot_pso_lm(
    samples: &[RssiSample],
    channel: &ChannelParams,
    bounds: &Roi,
    pso: &PsoConfig,
    lm: &LmConfig,
    rng: &mut RngStream,
) -> Result<SolverResult> {
    let obj = RatioObjective::from_samples(samples, kappa(channel), channel.d_min)?;
    Ok(pso_lm_localize(&obj, bounds, pso, lm, rng))
}

/// Linear form `a·x + b·y + c·w = e` of one ratio sphere
/// `|X - p_i| = ρ·|X - p_j|` on the plane `z = z0`, where `w = x² + y²`.
/// Coordinates are relative to whatever origin the caller used for the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApolloniusConstraint {
    pub coeffs: Vector3<f64>,
    pub rhs: f64,
}

pub fn apollonius_constraint(p_i: &Position, p_j: &Position, rho: f64, z0: f64) -> ApolloniusConstraint {
    let r2 = rho * rho;
    let norm2 = |p: &Position| p.x * p.x + p.y * p.y + p.z * p.z;
    let c = 1.0 - r2;
    let a = -2.0 * (p_i.x - r2 * p_j.x);
    let b = -2.0 * (p_i.y - r2 * p_j.y);
    let z_terms = c * z0 * z0 - 2.0 * (p_i.z - r2 * p_j.z) * z0 + norm2(p_i) - r2 * norm2(p_j);
    ApolloniusConstraint {
        coeffs: Vector3::new(a, b, c),
        rhs: -z_terms,
    }
}

fn collinear(a: &Position, b: &Position, c: &Position) -> bool {
    let u = b.to_vector() - a.to_vector();
    let v = c.to_vector() - a.to_vector();
    let scale = u.norm() * v.norm();
    scale == 0.0 || u.cross(&v).norm() <= 1e-6 * scale
}

/// Source candidates on the plane `z = z0` for one triple: two ratio
/// spheres give two linear equations in `(x, y, w)`, whose solution line is
/// then searched for `w = x² + y²`. When noise leaves no exact root the point
/// of least violation is used.
fn triple_candidates(triple: [&RssiSample; 3], kappa: f64, z0: f64) -> Vec<Position> {
    let origin = triple[0].position;
    let shift = |p: &Position| Position::new(p.x - origin.x, p.y - origin.y, p.z - origin.z);
    let (pi, pj, pk) = (
        shift(&triple[0].position),
        shift(&triple[1].position),
        shift(&triple[2].position),
    );
    let z_rel = z0 - origin.z;
    let rho_ij = crate::channel::distance_ratio(triple[0].rssi, triple[1].rssi, kappa);
    let rho_ik = crate::channel::distance_ratio(triple[0].rssi, triple[2].rssi, kappa);
    let c1 = apollonius_constraint(&pi, &pj, rho_ij, z_rel);
    let c2 = apollonius_constraint(&pi, &pk, rho_ik, z_rel);

    let direction = c1.coeffs.cross(&c2.coeffs);
    if direction.norm() <= 1e-12 * c1.coeffs.norm() * c2.coeffs.norm() {
        return Vec::new();
    }
    // minimum-norm point on the line: Mᵀ (M Mᵀ)⁻¹ e
    let gram = Matrix2::new(
        c1.coeffs.dot(&c1.coeffs),
        c1.coeffs.dot(&c2.coeffs),
        c2.coeffs.dot(&c1.coeffs),
        c2.coeffs.dot(&c2.coeffs),
    );
    let Some(inv) = gram.try_inverse() else {
        return Vec::new();
    };
    let mult = inv * Vector2::new(c1.rhs, c2.rhs);
    let base = c1.coeffs * mult[0] + c2.coeffs * mult[1];

    // g(s) = w(s) - x(s)² - y(s)² along base + s·direction
    let (x0, y0, w0) = (base[0], base[1], base[2]);
    let (nx, ny, nw) = (direction[0], direction[1], direction[2]);
    let qa = -(nx * nx + ny * ny);
    let qb = nw - 2.0 * (x0 * nx + y0 * ny);
    let qc = w0 - x0 * x0 - y0 * y0;
    let params: Vec<f64> = if qa.abs() < 1e-300 {
        if qb.abs() < 1e-300 {
            Vec::new()
        } else {
            vec![-qc / qb]
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let root = disc.sqrt();
            vec![(-qb + root) / (2.0 * qa), (-qb - root) / (2.0 * qa)]
        } else {
            vec![-qb / (2.0 * qa)]
        }
    };
    params
        .into_iter()
        .map(|s| Position::new(x0 + s * nx + origin.x, y0 + s * ny + origin.y, z0))
        .filter(|p| p.is_finite())
        .collect()
}

/// Weiszfeld iteration for the point minimizing the sum of distances.
pub fn geometric_median(points: &[Position]) -> Option<Position> {
    if points.is_empty() {
        return None;
    }
    let median_of = |f: fn(&Position) -> f64| {
        let mut v: Vec<f64> = points.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut m = Position::new(median_of(|p| p.x), median_of(|p| p.y), median_of(|p| p.z));
    for _ in 0..500 {
        let mut num = Vector3::zeros();
        let mut den = 0.0;
        let mut coincident = 0usize;
        for p in points {
            let d = distance(p, &m);
            if d < 1e-9 {
                coincident += 1;
                continue;
            }
            num += p.to_vector() / d;
            den += 1.0 / d;
        }
        if den == 0.0 {
            break;
        }
        // the current point is optimal if coincident points outweigh the pull
        let pull = (num - m.to_vector() * den).norm();
        if coincident as f64 >= pull {
            break;
        }
        let next = Position::from_vector(&(num / den));
        let moved = distance(&next, &m);
        m = next;
        if moved < 1e-7 {
            break;
        }
    }
    Some(m)
}

/// Ratio trilateration: solve every non-collinear triple on the plane at the
/// middle of the search altitude range, keep candidates inside `bounds`, and
/// return their geometric median. At most `triple_cap` triples are used,
/// drawn at random when there are more.
pub fn trilateration(
    samples: &[RssiSample],
    kappa: f64,
    bounds: &Roi,
    triple_cap: usize,
    rng: &mut RngStream,
) -> Result<Position> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let z0 = 0.5 * (bounds.z_min + bounds.z_max);
    let total = n * (n - 1) * (n - 2) / 6;
    let mut triples: Vec<[usize; 3]> = Vec::new();
    if total <= triple_cap {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    triples.push([i, j, k]);
                }
            }
        }
    } else {
        let attempts = 50 * triple_cap;
        for _ in 0..attempts {
            if triples.len() >= triple_cap {
                break;
            }
            let i = rng.index(n);
            let j = rng.index(n);
            let k = rng.index(n);
            if i == j || j == k || i == k {
                continue;
            }
            triples.push([i, j, k]);
        }
    }

    let mut candidates = Vec::new();
    let mut usable = 0usize;
    for [i, j, k] in triples {
        let (a, b, c) = (&samples[i], &samples[j], &samples[k]);
        if collinear(&a.position, &b.position, &c.position) {
            continue;
        }
        usable += 1;
        candidates.extend(
            triple_candidates([a, b, c], kappa, z0)
                .into_iter()
                .filter(|p| bounds.contains(p)),
        );
    }
    if usable == 0 {
        return Err(Error::DegenerateGeometry("every sample triple is collinear".into()));
    }
    geometric_median(&candidates)
        .ok_or_else(|| Error::DegenerateGeometry("no triple produced a candidate inside the search region".into()))
}

/// Weighted centroid with weights `10^(R/κ)` (inversely proportional to
/// distance under the path-loss model), then `iters` rounds re-weighting each
/// reading by `1/(d̂ + d_min)` to the current centroid. The altitude is the
/// mean sample altitude clamped to the search range.
pub fn weighted_centroid(
    samples: &[RssiSample],
    kappa: f64,
    iters: usize,
    bounds: &Roi,
    d_min: f64,
) -> Result<Position> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let peak = samples.iter().map(|s| s.rssi).fold(f64::NEG_INFINITY, f64::max);
    let base: Vec<f64> = samples.iter().map(|s| 10f64.powf((s.rssi - peak) / kappa)).collect();
    let z =
        (samples.iter().map(|s| s.position.z).sum::<f64>() / samples.len() as f64).clamp(bounds.z_min, bounds.z_max);

    let centroid = |weights: &[f64]| {
        let total: f64 = weights.iter().sum();
        let x = samples.iter().zip(weights).map(|(s, w)| w * s.position.x).sum::<f64>() / total;
        let y = samples.iter().zip(weights).map(|(s, w)| w * s.position.y).sum::<f64>() / total;
        Position::new(x, y, z)
    };
    let mut estimate = centroid(&base);
    for _ in 0..iters {
        let weights: Vec<f64> = samples
            .iter()
            .zip(&base)
            .map(|(s, w)| w / (distance(&s.position, &estimate) + d_min))
            .collect();
        estimate = centroid(&weights);
    }
    Ok(estimate)
}
