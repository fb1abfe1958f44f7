//! Minimal-cardinality covers of a leaf cell by leafwise Bowen balls.
//!
//! A cover instance is a list of candidate balls (center plus the interval
//! the ball traces on the leaf) together with a mass carrier: either the
//! exact uniform mass of the supporting interval, or a finite set of
//! weighted points. The greedy cover repeatedly takes the candidate with
//! the largest uncovered mass, breaking ties toward the smallest center;
//! captures only shrink as coverage grows, so a lazily refreshed max-heap
//! finds the exact argmax each step. The brute-force cover certifies the
//! minimum by subset enumeration.

use std::collections::BTreeMap;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::unstable_ball_trace;
use crate::measures::ConditionalMeasure;
use crate::partitions::LeafPoint;

/// Subset enumeration is capped at this many candidates.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Candidate ball: its center and the interval it traces on the leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
}

/// What carries the mass being covered.
#[derive(Debug, Clone, PartialEq)]
enum MassModel {
    /// Uniform mass on [lo, hi]; a ball captures exact interval length.
    Interval { lo: f64, hi: f64 },
    /// Atoms at sorted positions; a ball captures the weights inside its
    /// trace.
    WeightedPoints { positions: Vec<f64>, weights: Vec<f64> },
}

/// A cover problem: candidates plus the mass they must capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverInstance {
    candidates: Vec<Candidate>,
    mass: MassModel,
}

impl CoverInstance {
    /// Candidates covering the uniform mass of `[lo, hi]`.
    pub fn interval(candidates: Vec<Candidate>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(
                "interval supports need finite lo < hi".into(),
            ));
        }
        validate_candidates(&candidates)?;
        Ok(Self {
            candidates,
            mass: MassModel::Interval { lo, hi },
        })
    }

    /// Candidates covering atoms at `points` = (position, weight).
    pub fn weighted_points(candidates: Vec<Candidate>, points: Vec<(f64, f64)>) -> Result<Self> {
        validate_candidates(&candidates)?;
        if points.is_empty() || points.iter().any(|&(p, w)| !p.is_finite() || !(w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "weighted points need finite positions and nonnegative weights".into(),
            ));
        }
        let mut sorted = points;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = sorted.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter(
                "weighted points need positive total mass".into(),
            ));
        }
        let (positions, weights) = sorted.into_iter().unzip();
        Ok(Self {
            candidates,
            mass: MassModel::WeightedPoints { positions, weights },
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn total_mass(&self) -> f64 {
        match &self.mass {
            MassModel::Interval { lo, hi } => hi - lo,
            MassModel::WeightedPoints { weights, .. } => weights.iter().sum(),
        }
    }
}

fn validate_candidates(candidates: &[Candidate]) -> Result<()> {
    for c in candidates {
        if !(c.lo <= c.hi) || !c.center.is_finite() {
            return Err(Error::InvalidParameter(
                "candidate traces need finite lo <= hi".into(),
            ));
        }
    }
    Ok(())
}

/// Outcome of a cover computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverResult {
    pub count: u64,
    /// Absolute mass covered by the chosen balls.
    pub covered_mass: f64,
    /// Covered mass divided by the total mass.
    pub covered_fraction: f64,
    /// Indices into the instance's candidate list, in selection order.
    pub chosen: Vec<usize>,
    /// Mass newly captured by each chosen ball, in selection order.
    pub newly_covered: Vec<f64>,
}

/// Mutable coverage state shared by the greedy and replay paths.
enum CoverState {
    Interval {
        /// Uncovered stretches keyed by the order-preserving bits of lo.
        stretches: BTreeMap<u64, (f64, f64)>,
    },
    Points {
        positions: Vec<f64>,
        remaining: Vec<f64>,
    },
}

/// Order-preserving map from f64 (including negatives) to u64.
fn float_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

impl CoverState {
    fn new(mass: &MassModel) -> Self {
        match mass {
            MassModel::Interval { lo, hi } => {
                let mut stretches = BTreeMap::new();
                stretches.insert(float_key(*lo), (*lo, *hi));
                CoverState::Interval { stretches }
            }
            MassModel::WeightedPoints { positions, weights } => CoverState::Points {
                positions: positions.clone(),
                remaining: weights.clone(),
            },
        }
    }

    /// Uncovered mass the candidate would capture.
    fn capture(&self, c: &Candidate) -> f64 {
        match self {
            CoverState::Interval { stretches } => {
                let mut cap = 0.0;
                for (_, &(slo, shi)) in stretches.range(..=float_key(c.hi)).rev() {
                    if shi <= c.lo {
                        break;
                    }
                    let l = slo.max(c.lo);
                    let h = shi.min(c.hi);
                    if h > l {
                        cap += h - l;
                    }
                }
                cap
            }
            CoverState::Points { positions, remaining } => {
                let i0 = positions.partition_point(|&p| p < c.lo);
                let i1 = positions.partition_point(|&p| p <= c.hi);
                remaining[i0..i1].iter().sum()
            }
        }
    }

    /// Remove the candidate's capture from the uncovered mass; returns the
    /// mass removed.
    fn apply(&mut self, c: &Candidate) -> f64 {
        match self {
            CoverState::Interval { stretches } => {
                let keys: Vec<u64> = stretches
                    .range(..=float_key(c.hi))
                    .rev()
                    .take_while(|(_, &(_, shi))| shi > c.lo)
                    .map(|(&k, _)| k)
                    .collect();
                let mut removed = 0.0;
                for k in keys {
                    let (slo, shi) = stretches.remove(&k).expect("key just seen");
                    let l = slo.max(c.lo);
                    let h = shi.min(c.hi);
                    if h <= l {
                        stretches.insert(k, (slo, shi));
                        continue;
                    }
                    removed += h - l;
                    if slo < l {
                        stretches.insert(k, (slo, l));
                    }
                    if h < shi {
                        stretches.insert(float_key(h), (h, shi));
                    }
                }
                removed
            }
            CoverState::Points { positions, remaining } => {
                let i0 = positions.partition_point(|&p| p < c.lo);
                let i1 = positions.partition_point(|&p| p <= c.hi);
                let mut removed = 0.0;
                for w in &mut remaining[i0..i1] {
                    removed += *w;
                    *w = 0.0;
                }
                removed
            }
        }
    }
}

/// Heap entry ordered by quantized capture (descending), then center
/// (ascending), then index (ascending). Captures are quantized before
/// comparison so that last-ulp float noise between equal-sized balls cannot
/// defeat the positional tie-break.
#[derive(Debug)]
struct HeapEntry {
    key: u64,
    capture: f64,
    center: f64,
    idx: usize,
    stamp: u64,
}

/// Capture resolution: differences below one part in 1e12 of the total mass
/// are ties.
fn capture_key(capture: f64, total: f64) -> u64 {
    (capture / total * 1e12).round() as u64
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key
            .cmp(&other.key)
            .then_with(|| other.center.total_cmp(&self.center))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

fn cover_target(total: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(
            "delta must lie in [0, 1)".into(),
        ));
    }
    Ok((1.0 - delta) * total - 1e-12)
}

/// Greedy cover: repeatedly select the candidate capturing the most
/// uncovered mass until at least a (1 - delta) fraction is covered.
///
/// Captures are submodular, so stale heap entries only overestimate; an
/// entry that is fresh at the top of the heap is an exact argmax with the
/// exact tie-break.
pub fn greedy_cover(instance: &CoverInstance, delta: f64) -> Result<CoverResult> {
    let total = instance.total_mass();
    let target = cover_target(total, delta)?;
    let mut state = CoverState::new(&instance.mass);
    let mut heap = BinaryHeap::with_capacity(instance.candidates.len());
    for (idx, c) in instance.candidates.iter().enumerate() {
        let capture = state.capture(c);
        heap.push(HeapEntry {
            key: capture_key(capture, total),
            capture,
            center: c.center,
            idx,
            stamp: 0,
        });
    }
    let tiny = total * 1e-15;
    let mut stamp = 0u64;
    let mut covered = 0.0f64;
    let mut chosen = Vec::new();
    let mut newly = Vec::new();
    while covered < target {
        let Some(top) = heap.pop() else {
            return Err(Error::CoverageImpossible {
                target: 1.0 - delta,
                reachable: covered / total,
            });
        };
        if top.stamp == stamp {
            if top.capture <= tiny {
                return Err(Error::CoverageImpossible {
                    target: 1.0 - delta,
                    reachable: covered / total,
                });
            }
            let got = state.apply(&instance.candidates[top.idx]);
            covered += got;
            chosen.push(top.idx);
            newly.push(got);
            stamp += 1;
        } else {
            let capture = state.capture(&instance.candidates[top.idx]);
            heap.push(HeapEntry {
                key: capture_key(capture, total),
                capture,
                center: top.center,
                idx: top.idx,
                stamp,
            });
        }
    }
    Ok(CoverResult {
        count: chosen.len() as u64,
        covered_mass: covered,
        covered_fraction: covered / total,
        chosen,
        newly_covered: newly,
    })
}

/// Mass of the union of the masked candidates.
fn union_mass(instance: &CoverInstance, mask: u32) -> f64 {
    match &instance.mass {
        MassModel::Interval { lo, hi } => {
            let mut spans: Vec<(f64, f64)> = Vec::new();
            for (i, c) in instance.candidates.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    let l = c.lo.max(*lo);
                    let h = c.hi.min(*hi);
                    if h > l {
                        spans.push((l, h));
                    }
                }
            }
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut mass = 0.0;
            let mut cursor = f64::NEG_INFINITY;
            for (l, h) in spans {
                let l = l.max(cursor);
                if h > l {
                    mass += h - l;
                    cursor = h;
                }
            }
            mass
        }
        MassModel::WeightedPoints { positions, weights } => {
            let mut mass = 0.0;
            for (i, (&p, &w)) in positions.iter().zip(weights).enumerate() {
                let _ = i;
                let inside = instance.candidates.iter().enumerate().any(|(j, c)| {
                    mask >> j & 1 == 1 && c.lo <= p && p <= c.hi
                });
                if inside {
                    mass += w;
                }
            }
            mass
        }
    }
}

/// Replay a fixed selection to get per-ball captures.
fn replay(instance: &CoverInstance, order: &[usize]) -> (f64, Vec<f64>) {
    let mut state = CoverState::new(&instance.mass);
    let mut covered = 0.0;
    let mut newly = Vec::with_capacity(order.len());
    for &idx in order {
        let got = state.apply(&instance.candidates[idx]);
        covered += got;
        newly.push(got);
    }
    (covered, newly)
}

/// Certified minimal cover by subset enumeration over at most
/// [`BRUTE_FORCE_LIMIT`] candidates. Subsets are scanned by size, then in
/// lexicographic index order, so the witness is deterministic.
pub fn brute_force_cover(instance: &CoverInstance, delta: f64) -> Result<CoverResult> {
    let len = instance.candidates.len();
    if len > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyCandidates {
            max: BRUTE_FORCE_LIMIT,
            got: len,
        });
    }
    let total = instance.total_mass();
    let target = cover_target(total, delta)?;
    let full_mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
    let reachable = union_mass(instance, full_mask);
    if reachable < target {
        return Err(Error::CoverageImpossible {
            target: 1.0 - delta,
            reachable: reachable / total,
        });
    }
    for size in 0..=len as u32 {
        for mask in 0..=full_mask {
            if mask.count_ones() != size {
                continue;
            }
            if union_mass(instance, mask) >= target {
                let chosen: Vec<usize> = (0..len).filter(|i| mask >> i & 1 == 1).collect();
                let (covered, newly) = replay(instance, &chosen);
                return Ok(CoverResult {
                    count: size as u64,
                    covered_mass: covered,
                    covered_fraction: covered / total,
                    chosen,
                    newly_covered: newly,
                });
            }
        }
    }
    unreachable!("full candidate set reaches the target");
}

/// Greedy cover of a segment conditional by leafwise Bowen balls centered
/// at the sampled points.
pub fn ball_cover_greedy(
    cond: &ConditionalMeasure,
    samples: &[LeafPoint],
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<CoverResult> {
    let seg = cond
        .cell()
        .as_segment()
        .ok_or_else(|| Error::IncompatibleScheme("greedy covers need a segment cell".into()))?;
    let mut centers = Vec::with_capacity(samples.len());
    for p in samples {
        if !p.cell.same_piece(cond.cell()) {
            return Err(Error::DifferentLeaf);
        }
        let t = p
            .t()
            .ok_or_else(|| Error::IncompatibleScheme("segment samples carry a coordinate".into()))?;
        centers.push(t);
    }
    centers.sort_by(|a, b| a.total_cmp(b));
    let mut candidates = Vec::with_capacity(centers.len());
    for t in centers {
        let (lo, hi) = unstable_ball_trace(seg, t, n, epsilon)?;
        candidates.push(Candidate { center: t, lo, hi });
    }
    let instance = CoverInstance::interval(candidates, seg.lo, seg.hi)?;
    greedy_cover(&instance, delta)
}

/// Certified minimal ball cover of a small instance.
pub fn ball_cover_brute_force(instance: &CoverInstance, delta: f64) -> Result<CoverResult> {
    brute_force_cover(instance, delta)
}

/// The count a dense disjoint tiling of the segment would need: balls of
/// trace length 2 eps |lambda|^-(n-1) placed end to end from the left must
/// capture a (1 - delta) fraction of the length.
pub fn oracle_interval_count(
    cond: &ConditionalMeasure,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<u64> {
    let seg = cond
        .cell()
        .as_segment()
        .ok_or_else(|| Error::IncompatibleScheme("interval oracles need a segment cell".into()))?;
    if n == 0 {
        return Err(Error::InvalidParameter("counts need n >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter("delta must lie in [0, 1)".into()));
    }
    let diameter = 2.0 * epsilon * (-(n as f64 - 1.0) * seg.log_modulus).exp();
    Ok(((1.0 - delta) * seg.length() / diameter).ceil() as u64)
}
