//! Ambient, leafwise, and dynamical (Bowen) metrics.
//!
//! Linear models live on the flat torus: distance minimizes over integer
//! translates. Shift spaces carry the ultrametric 2^-k where k is the
//! smallest |index| at which two words disagree; along unstable sets only
//! future indices (>= 1) count. Bowen metrics take the max of a metric over
//! the first n iterates; for a 1-d unstable leaf this collapses to a closed
//! form in the leaf coordinate.

use crate::error::{Error, Result};
use crate::partitions::{LeafCell, LeafCoord, LeafPoint, SegmentCell};
use crate::rng::{stream, Purpose};
use crate::systems::{wrap_offset, Point, SystemHandle, WordWindow};
use rand::Rng;

/// Validated Bowen-ball parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowenBallSpec {
    pub n: usize,
    pub epsilon: f64,
    /// Whether the ball is taken inside a leaf (leafwise metric) or in the
    /// ambient space.
    pub leafwise: bool,
}

impl BowenBallSpec {
    pub fn new(n: usize, epsilon: f64, leafwise: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("Bowen balls need n >= 1".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        Ok(Self { n, epsilon, leafwise })
    }
}

/// Distance in the phase space: flat-torus Euclidean metric for linear
/// models, 2^-(first disagreement) for shifts (0 when the windows agree on
/// their common range).
pub fn ambient_distance(system: &SystemHandle, p: &Point, q: &Point) -> Result<f64> {
    match (system, p, q) {
        (SystemHandle::Linear(model), Point::Torus(a), Point::Torus(b)) => {
            if a.len() != model.dim() || b.len() != model.dim() {
                return Err(Error::LengthMismatch(a.len(), b.len()));
            }
            Ok(torus_distance(a, b))
        }
        (SystemHandle::Shift(_), Point::Word(a), Point::Word(b)) => Ok(word_distance(a, b)),
        _ => Err(Error::InvalidParameter(
            "point kinds do not match the system".into(),
        )),
    }
}

pub(crate) fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = wrap_offset(x - y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn word_distance(a: &WordWindow, b: &WordWindow) -> f64 {
    let lo = a.start().max(b.start());
    let hi = a.end().min(b.end());
    let mut best: Option<i64> = None;
    for i in lo..=hi {
        if a.symbol_at(i) != b.symbol_at(i) {
            let k = i.abs();
            best = Some(best.map_or(k, |cur: i64| cur.min(k)));
        }
    }
    match best {
        Some(k) => 0.5f64.powi(k.min(1023) as i32),
        None => 0.0,
    }
}

/// Leafwise distance between two points on the same leaf piece.
///
/// Segments: |t_a - t_b|. Cylinders: 2^-i for the first future index i >= 1
/// where the words disagree. Points on different pieces are at infinite
/// leafwise distance and rejected.
pub fn unstable_distance(a: &LeafPoint, b: &LeafPoint) -> Result<f64> {
    if !a.cell.same_piece(&b.cell) {
        return Err(Error::DifferentLeaf);
    }
    match (&a.coord, &b.coord) {
        (LeafCoord::T(s), LeafCoord::T(t)) => Ok((s - t).abs()),
        (LeafCoord::Future(u), LeafCoord::Future(v)) => Ok(future_distance(u, v, 0)),
        _ => Err(Error::DifferentLeaf),
    }
}

/// Distance between futures shifted left by `offset`: the first disagreement
/// at slot j (symbol index j+1) contributes 2^-(j+1-offset).
fn future_distance(u: &[u8], v: &[u8], offset: usize) -> f64 {
    let common = u.len().min(v.len());
    for j in 0..common {
        if u[j] != v[j] {
            let exponent = (j + 1) as i32 - offset as i32;
            return 0.5f64.powi(exponent);
        }
    }
    0.0
}

/// Bowen distance max_{0 <= i < n} d(f^i p, f^i q) in the ambient metric.
pub fn bowen_distance(system: &SystemHandle, p: &Point, q: &Point, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("Bowen metrics need n >= 1".into()));
    }
    let mut best = 0.0f64;
    for i in 0..n {
        let fp = crate::systems::apply(system, p, i as i64)?;
        let fq = crate::systems::apply(system, q, i as i64)?;
        best = best.max(ambient_distance(system, &fp, &fq)?);
    }
    Ok(best)
}

/// Leafwise Bowen distance between points of one leaf piece.
///
/// On a segment with expanding eigenvalue lambda the iterates stay on a
/// leaf and separate by |lambda|^i |dt|, so the max is |lambda|^(n-1) |dt|.
/// On a cylinder the i-th shift moves the first disagreement i slots closer.
pub fn unstable_bowen_distance(a: &LeafPoint, b: &LeafPoint, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("Bowen metrics need n >= 1".into()));
    }
    if !a.cell.same_piece(&b.cell) {
        return Err(Error::DifferentLeaf);
    }
    match (&*a.cell, &a.coord, &b.coord) {
        (LeafCell::Segment(seg), LeafCoord::T(s), LeafCoord::T(t)) => {
            Ok((s - t).abs() * seg.eigenvalue.abs().powi(n as i32 - 1))
        }
        (LeafCell::Cylinder(_), LeafCoord::Future(u), LeafCoord::Future(v)) => {
            let mut best = 0.0f64;
            for i in 0..n {
                best = best.max(future_distance(u, v, i));
            }
            Ok(best)
        }
        _ => Err(Error::DifferentLeaf),
    }
}

/// Trace of a leafwise Bowen ball on a segment cell: the interval of leaf
/// coordinates within epsilon * |lambda|^-(n-1) of the center, clipped to
/// the cell.
pub fn unstable_ball_trace(
    cell: &SegmentCell,
    center: f64,
    n: usize,
    epsilon: f64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("Bowen balls need n >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if center < cell.lo || center > cell.hi {
        return Err(Error::RegionOutsideSupport);
    }
    let r = epsilon * (-(n as f64 - 1.0) * cell.log_modulus).exp();
    Ok((cell.lo.max(center - r), cell.hi.min(center + r)))
}

/// Comparison between the ambient and leafwise metrics at scale `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    /// Certified constant with d <= d_leaf <= c * d on the sampled pairs.
    pub c: f64,
    /// Largest observed ratio d_leaf / d.
    pub max_ratio: f64,
    pub gamma: f64,
    pub pairs: u64,
    /// Pairs where the ambient distance exceeded the leafwise one.
    pub order_violations: u64,
}

/// Estimate the metric comparison constant by sampling same-leaf pairs at
/// leaf separation up to `gamma`. The returned constant is the largest
/// observed ratio, padded to stay strictly above 1.
pub fn estimate_metric_comparison(
    system: &SystemHandle,
    gamma: f64,
    pairs: u64,
    seed: u64,
) -> Result<MetricComparison> {
    let model = system
        .as_linear()
        .ok_or_else(|| Error::IncompatibleScheme("metric comparison needs a linear model".into()))?;
    if model.unstable_count() != 1 {
        return Err(Error::UnsupportedLeafDimension {
            expected: 1,
            got: model.unstable_count(),
        });
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidParameter(
            "gamma must lie in (0, 0.5)".into(),
        ));
    }
    let mut rng = stream(seed, Purpose::LeafPairs, 0);
    let dim = model.dim();
    let mut max_ratio = 0.0f64;
    let mut order_violations = 0u64;
    for _ in 0..pairs {
        let anchor: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let t1 = (rng.gen::<f64>() - 0.5) * gamma;
        let t2 = (rng.gen::<f64>() - 0.5) * gamma;
        let du = (t1 - t2).abs();
        if du == 0.0 {
            continue;
        }
        let p = model.leaf_chart(&anchor, &[t1])?;
        let q = model.leaf_chart(&anchor, &[t2])?;
        let d = torus_distance(&p, &q);
        if d > du * (1.0 + 1e-9) {
            order_violations += 1;
        }
        if d > 0.0 {
            max_ratio = max_ratio.max(du / d);
        }
    }
    Ok(MetricComparison {
        c: max_ratio.max(1.0 + 1e-9),
        max_ratio,
        gamma,
        pairs,
        order_violations,
    })
}
