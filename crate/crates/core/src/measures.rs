//! Invariant measures and their disintegration over unstable leaf cells.
//!
//! Linear toral models preserve Lebesgue measure; its conditionals on leaf
//! segments are uniform (length over total length). Shift models carry a
//! Bernoulli or stationary Markov measure whose conditionals on a past
//! cylinder are the forward kernel on futures. Region masses on a leaf are
//! computed in closed form, so the Monte-Carlo check integrates exact
//! per-leaf values rather than sampled indicators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::partitions::{unstable_cell, LeafCell, LeafCoord, LeafPoint, Trace, UnstableScheme};
use crate::rng::{stream, Purpose};
use crate::systems::{wrap_unit, Point, ShiftMeasureKind, SystemHandle, WordWindow};
use rand::Rng;

/// Invariant reference measure of a model system.
#[derive(Debug, Clone, PartialEq)]
pub enum InvariantMeasureModel {
    LebesgueOnTorus { dim: usize },
    Shift { kind: ShiftMeasureKind, alphabet: usize },
}

impl InvariantMeasureModel {
    /// The canonical invariant measure of a system.
    pub fn for_system(system: &SystemHandle) -> Self {
        match system {
            SystemHandle::Linear(m) => InvariantMeasureModel::LebesgueOnTorus { dim: m.dim() },
            SystemHandle::Shift(s) => InvariantMeasureModel::Shift {
                kind: s.measure().clone(),
                alphabet: s.alphabet(),
            },
        }
    }

    /// Mass of a test region in the ambient space.
    pub fn ambient_mass(&self, region: &TestRegion) -> Result<f64> {
        match (self, region) {
            (InvariantMeasureModel::LebesgueOnTorus { dim }, TestRegion::TorusBox { lo, hi }) => {
                if lo.len() != *dim || hi.len() != *dim {
                    return Err(Error::LengthMismatch(lo.len(), hi.len()));
                }
                let mut mass = 1.0;
                for j in 0..*dim {
                    if !(0.0 <= lo[j] && lo[j] < hi[j] && hi[j] <= 1.0) {
                        return Err(Error::InvalidParameter(
                            "torus boxes need 0 <= lo < hi <= 1 per axis".into(),
                        ));
                    }
                    mass *= hi[j] - lo[j];
                }
                Ok(mass)
            }
            (
                InvariantMeasureModel::Shift { kind, alphabet },
                TestRegion::CylinderSet { constraints },
            ) => {
                let sorted = sorted_constraints(constraints, *alphabet)?;
                Ok(cylinder_mass(kind, &sorted))
            }
            _ => Err(Error::InvalidParameter(
                "region kind does not match the measure".into(),
            )),
        }
    }

    /// Draw a point distributed by the measure. Shift points carry a past
    /// window reaching back `past_len` symbols (indices -past_len..=0).
    pub fn sample_point<R: Rng>(&self, past_len: usize, rng: &mut R) -> Point {
        match self {
            InvariantMeasureModel::LebesgueOnTorus { dim } => {
                Point::Torus((0..*dim).map(|_| rng.gen::<f64>()).collect())
            }
            InvariantMeasureModel::Shift { kind, .. } => {
                let mut symbols = Vec::with_capacity(past_len + 1);
                match kind {
                    ShiftMeasureKind::Bernoulli(p) => {
                        for _ in 0..=past_len {
                            symbols.push(draw_discrete(p, rng));
                        }
                    }
                    ShiftMeasureKind::Markov { p, pi } => {
                        // Forward run of the stationary chain from -past_len.
                        let mut s = draw_discrete(pi, rng);
                        symbols.push(s);
                        for _ in 0..past_len {
                            s = draw_discrete(&p[s as usize], rng);
                            symbols.push(s);
                        }
                    }
                }
                Point::Word(WordWindow::new(-(past_len as i64), symbols))
            }
        }
    }
}

fn draw_discrete<R: Rng>(weights: &[f64], rng: &mut R) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u8;
        }
    }
    (weights.len() - 1) as u8
}

/// Region in the ambient space used to test the disintegration.
#[derive(Debug, Clone, PartialEq)]
pub enum TestRegion {
    /// Axis-aligned box inside [0,1]^d (no wrap-around).
    TorusBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Finite set of (index, symbol) constraints.
    CylinderSet { constraints: Vec<(i64, u8)> },
}

/// Region inside one leaf cell.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafRegion {
    /// Subinterval of a segment, in leaf coordinates.
    Interval { lo: f64, hi: f64 },
    /// Constraints on future symbols (indices >= 1).
    FutureCylinder { constraints: Vec<(usize, u8)> },
}

/// Conditional measure of the invariant measure on one leaf cell.
#[derive(Debug, Clone)]
pub enum ConditionalMeasure {
    /// Normalized length on a segment cell.
    UniformOnSegment { cell: Arc<LeafCell> },
    /// Forward kernel on futures of a past cylinder, conditioned on the
    /// symbol at index 0.
    CylinderKernel {
        cell: Arc<LeafCell>,
        kind: ShiftMeasureKind,
    },
}

impl ConditionalMeasure {
    pub fn cell(&self) -> &Arc<LeafCell> {
        match self {
            ConditionalMeasure::UniformOnSegment { cell } => cell,
            ConditionalMeasure::CylinderKernel { cell, .. } => cell,
        }
    }

    /// Total mass is always 1.
    pub fn total(&self) -> f64 {
        1.0
    }
}

/// Conditional measure of the system's invariant measure on the leaf cell
/// through `x`.
pub fn disintegrate(
    system: &SystemHandle,
    measure: &InvariantMeasureModel,
    scheme: &UnstableScheme,
    x: &Point,
) -> Result<ConditionalMeasure> {
    let cell = Arc::new(unstable_cell(system, scheme, x)?);
    match (measure, &*cell) {
        (InvariantMeasureModel::LebesgueOnTorus { .. }, LeafCell::Segment(seg)) => {
            if seg.length() <= 0.0 {
                return Err(Error::ZeroMassCell);
            }
            Ok(ConditionalMeasure::UniformOnSegment { cell })
        }
        (InvariantMeasureModel::Shift { kind, .. }, LeafCell::Cylinder(_)) => {
            Ok(ConditionalMeasure::CylinderKernel {
                cell,
                kind: kind.clone(),
            })
        }
        _ => Err(Error::InvalidParameter(
            "measure kind does not match the system".into(),
        )),
    }
}

/// Mass of a region of the leaf under the conditional measure.
///
/// Intervals strictly outside the segment are rejected; zero-probability
/// cylinders inside the support return 0.
pub fn conditional_mass(cond: &ConditionalMeasure, region: &LeafRegion) -> Result<f64> {
    match (cond, region) {
        (ConditionalMeasure::UniformOnSegment { cell }, LeafRegion::Interval { lo, hi }) => {
            let seg = cell.as_segment().expect("uniform conditionals sit on segments");
            if !(lo < hi) {
                return Err(Error::InvalidParameter(
                    "leaf intervals need lo < hi".into(),
                ));
            }
            let olo = lo.max(seg.lo);
            let ohi = hi.min(seg.hi);
            if olo >= ohi {
                return Err(Error::RegionOutsideSupport);
            }
            Ok((ohi - olo) / seg.length())
        }
        (
            ConditionalMeasure::CylinderKernel { cell, kind },
            LeafRegion::FutureCylinder { constraints },
        ) => {
            let cyl = cell.as_cylinder().expect("cylinder kernels sit on cylinders");
            let mut sorted: Vec<(usize, u8)> = constraints.clone();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0].0 == w[1].0 && w[0].1 != w[1].1 {
                    return Ok(0.0);
                }
            }
            sorted.dedup();
            for &(i, s) in &sorted {
                if i == 0 {
                    return Err(Error::InvalidParameter(
                        "future cylinders use indices >= 1".into(),
                    ));
                }
                if s as usize >= cyl.alphabet {
                    return Err(Error::InvalidParameter(format!(
                        "symbol {s} outside alphabet of size {}",
                        cyl.alphabet
                    )));
                }
            }
            Ok(future_mass(kind, cyl.past.symbol_at(0).expect("past holds 0"), &sorted))
        }
        _ => Err(Error::InvalidParameter(
            "region kind does not match the conditional".into(),
        )),
    }
}

/// Mass of an itinerary-cell trace under the conditional measure.
pub fn trace_mass(cond: &ConditionalMeasure, trace: &Trace) -> Result<f64> {
    match trace {
        Trace::Interval { lo, hi } => {
            conditional_mass(cond, &LeafRegion::Interval { lo: *lo, hi: *hi })
        }
        Trace::Cylinder { future } => {
            let constraints: Vec<(usize, u8)> = future
                .iter()
                .enumerate()
                .map(|(j, &s)| (j + 1, s))
                .collect();
            conditional_mass(cond, &LeafRegion::FutureCylinder { constraints })
        }
    }
}

/// Ambient mass of a cylinder set given sorted, conflict-free constraints.
fn cylinder_mass(kind: &ShiftMeasureKind, sorted: &[(i64, u8)]) -> f64 {
    match kind {
        ShiftMeasureKind::Bernoulli(p) => sorted.iter().map(|&(_, s)| p[s as usize]).product(),
        ShiftMeasureKind::Markov { p, pi } => {
            // Stationarity: mass depends only on index gaps, weighted by the
            // marginal of the earliest constrained symbol.
            let (first_idx, first_sym) = sorted[0];
            let mut mass = pi[first_sym as usize];
            let mut prev_idx = first_idx;
            let mut prev_sym = first_sym;
            for &(i, s) in &sorted[1..] {
                mass *= kernel_power_entry(p, (i - prev_idx) as usize, prev_sym, s);
                prev_idx = i;
                prev_sym = s;
            }
            mass
        }
    }
}

/// Mass of consecutive-and-gapped future constraints given the symbol at 0.
fn future_mass(kind: &ShiftMeasureKind, x0: u8, sorted: &[(usize, u8)]) -> f64 {
    match kind {
        ShiftMeasureKind::Bernoulli(p) => sorted.iter().map(|&(_, s)| p[s as usize]).product(),
        ShiftMeasureKind::Markov { p, .. } => {
            let mut mass = 1.0;
            let mut prev_idx = 0usize;
            let mut prev_sym = x0;
            for &(i, s) in sorted {
                mass *= kernel_power_entry(p, i - prev_idx, prev_sym, s);
                prev_idx = i;
                prev_sym = s;
            }
            mass
        }
    }
}

/// Entry (a, b) of the transition matrix raised to `steps`.
fn kernel_power_entry(p: &[Vec<f64>], steps: usize, a: u8, b: u8) -> f64 {
    let m = p.len();
    let mut row = vec![0.0; m];
    row[a as usize] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; m];
        for (i, w) in row.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for j in 0..m {
                next[j] += w * p[i][j];
            }
        }
        row = next;
    }
    row[b as usize]
}

/// Draw points from the conditional measure. Cylinder kernels produce
/// futures of length `horizon`; segments ignore it.
pub fn sample_conditional<R: Rng>(
    cond: &ConditionalMeasure,
    count: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<LeafPoint>> {
    let mut out = Vec::with_capacity(count);
    match cond {
        ConditionalMeasure::UniformOnSegment { cell } => {
            let seg = cell.as_segment().expect("uniform conditionals sit on segments");
            for _ in 0..count {
                let t = seg.lo + rng.gen::<f64>() * seg.length();
                out.push(LeafPoint::new(cell.clone(), LeafCoord::T(t)));
            }
        }
        ConditionalMeasure::CylinderKernel { cell, kind } => {
            let cyl = cell.as_cylinder().expect("cylinder kernels sit on cylinders");
            let x0 = cyl.past.symbol_at(0).expect("past holds 0");
            for _ in 0..count {
                let mut word = Vec::with_capacity(horizon);
                let mut prev = x0;
                for _ in 0..horizon {
                    let s = match kind {
                        ShiftMeasureKind::Bernoulli(p) => draw_discrete(p, rng),
                        ShiftMeasureKind::Markov { p, .. } => {
                            draw_discrete(&p[prev as usize], rng)
                        }
                    };
                    word.push(s);
                    prev = s;
                }
                out.push(LeafPoint::new(cell.clone(), LeafCoord::Future(word)));
            }
        }
    }
    Ok(out)
}

/// Exact conditional mass of an ambient test region on the leaf cell of one
/// anchor.
fn leaf_region_mass(
    system: &SystemHandle,
    cond: &ConditionalMeasure,
    region: &TestRegion,
) -> Result<f64> {
    match (cond, region) {
        (ConditionalMeasure::UniformOnSegment { cell }, TestRegion::TorusBox { lo, hi }) => {
            let model = system
                .as_linear()
                .ok_or_else(|| Error::InvalidParameter("segment cells need a linear model".into()))?;
            let seg = cell.as_segment().expect("uniform conditionals sit on segments");
            // Intersect, axis by axis, the leaf-coordinate sets where the
            // chart lands in the box (over all integer translates).
            let mut pieces = vec![(seg.lo, seg.hi)];
            for j in 0..model.dim() {
                let u = seg.direction[j];
                let a = seg.anchor[j];
                let mut axis: Vec<(f64, f64)> = Vec::new();
                if u == 0.0 {
                    let x = wrap_unit(a);
                    if lo[j] <= x && x <= hi[j] {
                        axis.push((seg.lo, seg.hi));
                    }
                } else {
                    let reach = seg.lo.abs().max(seg.hi.abs()) * u.abs() + 1.0;
                    let m_lo = (a - reach).floor() as i64;
                    let m_hi = (a + reach).ceil() as i64;
                    for m in m_lo..=m_hi {
                        let t0 = (lo[j] + m as f64 - a) / u;
                        let t1 = (hi[j] + m as f64 - a) / u;
                        let (tl, th) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                        if th > seg.lo && tl < seg.hi {
                            axis.push((tl.max(seg.lo), th.min(seg.hi)));
                        }
                    }
                }
                let mut next = Vec::new();
                for &(plo, phi) in &pieces {
                    for &(alo, ahi) in &axis {
                        let l = plo.max(alo);
                        let h = phi.min(ahi);
                        if h > l {
                            next.push((l, h));
                        }
                    }
                }
                pieces = next;
                if pieces.is_empty() {
                    return Ok(0.0);
                }
            }
            let covered: f64 = pieces.iter().map(|(l, h)| h - l).sum();
            Ok(covered / seg.length())
        }
        (
            ConditionalMeasure::CylinderKernel { cell, kind },
            TestRegion::CylinderSet { constraints },
        ) => {
            let cyl = cell.as_cylinder().expect("cylinder kernels sit on cylinders");
            let sorted = sorted_constraints(constraints, cyl.alphabet)?;
            let mut future = Vec::new();
            for &(i, s) in &sorted {
                if i <= 0 {
                    match cyl.past.symbol_at(i) {
                        Some(sym) if sym == s => {}
                        Some(_) => return Ok(0.0),
                        None => {
                            return Err(Error::WindowTooShort {
                                need_lo: i,
                                need_hi: 0,
                                have_lo: cyl.past.start(),
                                have_hi: cyl.past.end(),
                            })
                        }
                    }
                } else {
                    future.push((i as usize, s));
                }
            }
            Ok(future_mass(kind, cyl.past.symbol_at(0).expect("past holds 0"), &future))
        }
        _ => Err(Error::InvalidParameter(
            "region kind does not match the conditional".into(),
        )),
    }
}

fn sorted_constraints(constraints: &[(i64, u8)], alphabet: usize) -> Result<Vec<(i64, u8)>> {
    if constraints.is_empty() {
        return Err(Error::InvalidParameter(
            "cylinder sets need at least one constraint".into(),
        ));
    }
    let mut sorted = constraints.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 != w[1].1 {
            return Err(Error::InvalidParameter(
                "conflicting constraints at one index".into(),
            ));
        }
    }
    sorted.dedup();
    for &(_, s) in &sorted {
        if s as usize >= alphabet {
            return Err(Error::InvalidParameter(format!(
                "symbol {s} outside alphabet of size {alphabet}"
            )));
        }
    }
    Ok(sorted)
}

/// Result of checking that leaf conditionals integrate back to the ambient
/// measure on one region.
#[derive(Debug, Clone, PartialEq)]
pub struct DisintegrationCheck {
    pub ambient_mass: f64,
    pub leaf_mean: f64,
    pub variance: f64,
    pub samples: u64,
    /// All sampled leaves reported the same mass bit-for-bit.
    pub zero_variance: bool,
}

impl DisintegrationCheck {
    /// Three-sigma Monte-Carlo agreement, with an absolute floor for the
    /// zero-variance (exact) case.
    pub fn pass(&self) -> bool {
        let sigma = (self.variance / self.samples as f64).sqrt();
        (self.leaf_mean - self.ambient_mass).abs() <= 3.0 * sigma + 1e-10
    }
}

/// Sample anchors from the invariant measure and average the exact leaf
/// mass of `region`; the mean must reproduce the ambient mass.
pub fn verify_disintegration(
    system: &SystemHandle,
    measure: &InvariantMeasureModel,
    scheme: &UnstableScheme,
    region: &TestRegion,
    samples: u64,
    seed: u64,
) -> Result<DisintegrationCheck> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let past_len = match region {
        TestRegion::CylinderSet { constraints } => constraints
            .iter()
            .map(|&(i, _)| if i < 0 { (-i) as usize } else { 0 })
            .max()
            .unwrap_or(0),
        _ => 0,
    };
    let mut rng = stream(seed, Purpose::Regions, 0);
    let mut masses = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        let anchor = measure.sample_point(past_len, &mut rng);
        let cond = disintegrate(system, measure, scheme, &anchor)?;
        masses.push(leaf_region_mass(system, &cond, region)?);
    }
    let min = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zero_variance = min == max;
    let (mean, variance) = if zero_variance {
        (min, 0.0)
    } else {
        let mean = masses.iter().sum::<f64>() / samples as f64;
        let var = masses.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / (samples as f64 - 1.0).max(1.0);
        (mean, var)
    };
    Ok(DisintegrationCheck {
        ambient_mass: measure.ambient_mass(region)?,
        leaf_mean: mean,
        variance,
        samples,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{build_grid, Partition};
    use crate::systems::{build_linear_model, ShiftModel};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn cat_scheme() -> (SystemHandle, InvariantMeasureModel, UnstableScheme) {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        let measure = InvariantMeasureModel::for_system(&sys);
        let grid = build_grid(2, 10, 0.15).unwrap();
        let scheme = UnstableScheme::new(Partition::Grid(grid), 0.2).unwrap();
        (sys, measure, scheme)
    }

    fn coin_scheme() -> (SystemHandle, InvariantMeasureModel, UnstableScheme) {
        let sys = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.5, 0.5]).unwrap());
        let measure = InvariantMeasureModel::for_system(&sys);
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        (sys, measure, scheme)
    }

    #[test]
    fn ambient_box_mass_is_the_volume() {
        let (_, measure, _) = cat_scheme();
        let region = TestRegion::TorusBox {
            lo: vec![0.2, 0.3],
            hi: vec![0.5, 0.8],
        };
        assert_relative_eq!(measure.ambient_mass(&region).unwrap(), 0.15, max_relative = 1e-15);
    }

    #[test]
    fn ambient_cylinder_mass_bernoulli_and_markov() {
        let (_, coin, _) = coin_scheme();
        let region = TestRegion::CylinderSet {
            constraints: vec![(0, 1), (2, 0)],
        };
        assert_eq!(coin.ambient_mass(&region).unwrap(), 0.25);

        let chain = ShiftModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m = InvariantMeasureModel::for_system(&SystemHandle::Shift(chain));
        // pi = (2/3, 1/3); mass of {x_0 = 0, x_2 = 1} = pi_0 * (P^2)_{01}.
        let p2_01 = 0.9 * 0.1 + 0.1 * 0.8;
        let got = m
            .ambient_mass(&TestRegion::CylinderSet {
                constraints: vec![(0, 0), (2, 1)],
            })
            .unwrap();
        assert_relative_eq!(got, (2.0 / 3.0) * p2_01, max_relative = 1e-9);
    }

    #[test]
    fn uniform_conditional_masses() {
        let (sys, measure, scheme) = cat_scheme();
        let cond =
            disintegrate(&sys, &measure, &scheme, &Point::Torus(vec![0.55, 0.35])).unwrap();
        let seg = cond.cell().as_segment().unwrap().clone();
        let whole = conditional_mass(
            &cond,
            &LeafRegion::Interval { lo: seg.lo, hi: seg.hi },
        )
        .unwrap();
        assert_eq!(whole, 1.0);
        let mid = 0.5 * (seg.lo + seg.hi);
        let half = conditional_mass(&cond, &LeafRegion::Interval { lo: seg.lo, hi: mid }).unwrap();
        assert_relative_eq!(half, 0.5, max_relative = 1e-12);
        assert!(matches!(
            conditional_mass(
                &cond,
                &LeafRegion::Interval { lo: seg.hi + 0.1, hi: seg.hi + 0.2 }
            )
            .unwrap_err(),
            Error::RegionOutsideSupport
        ));
    }

    #[test]
    fn cylinder_kernel_masses() {
        let (sys, measure, scheme) = coin_scheme();
        let x = Point::Word(WordWindow::new(-1, vec![1, 0]));
        let cond = disintegrate(&sys, &measure, &scheme, &x).unwrap();
        let m = conditional_mass(
            &cond,
            &LeafRegion::FutureCylinder {
                constraints: vec![(1, 1), (2, 0)],
            },
        )
        .unwrap();
        assert_eq!(m, 0.25);

        let chain = ShiftModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let sys = SystemHandle::Shift(chain);
        let measure = InvariantMeasureModel::for_system(&sys);
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        let x = Point::Word(WordWindow::new(0, vec![0]));
        let cond = disintegrate(&sys, &measure, &scheme, &x).unwrap();
        let m1 = conditional_mass(
            &cond,
            &LeafRegion::FutureCylinder { constraints: vec![(1, 1)] },
        )
        .unwrap();
        assert_relative_eq!(m1, 0.1, max_relative = 1e-12);
        let m2 = trace_mass(&cond, &Trace::Cylinder { future: vec![1, 0] }).unwrap();
        assert_relative_eq!(m2, 0.1 * 0.2, max_relative = 1e-12);
        // Gapped constraint uses the two-step kernel.
        let m3 = conditional_mass(
            &cond,
            &LeafRegion::FutureCylinder { constraints: vec![(2, 1)] },
        )
        .unwrap();
        assert_relative_eq!(m3, 0.9 * 0.1 + 0.1 * 0.8, max_relative = 1e-12);
    }

    #[test]
    fn trace_masses_sum_to_one_over_a_refinement() {
        let (sys, measure, scheme) = cat_scheme();
        let x = Point::Torus(vec![0.55, 0.35]);
        let cond = disintegrate(&sys, &measure, &scheme, &x).unwrap();
        let cells = crate::partitions::refine_on_leaf(
            &sys,
            &scheme,
            cond.cell(),
            7,
            1 << 24,
        )
        .unwrap();
        let total: f64 = cells
            .iter()
            .map(|c| trace_mass(&cond, &c.trace).unwrap())
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn sampled_points_stay_in_the_cell() {
        let (sys, measure, scheme) = cat_scheme();
        let cond =
            disintegrate(&sys, &measure, &scheme, &Point::Torus(vec![0.55, 0.35])).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts = sample_conditional(&cond, 200, 0, &mut rng).unwrap();
        let seg = cond.cell().as_segment().unwrap();
        for p in &pts {
            let t = p.t().unwrap();
            assert!(t >= seg.lo && t <= seg.hi);
        }
    }

    #[test]
    fn exact_leaf_mass_matches_sampling_on_one_leaf() {
        let (sys, measure, scheme) = cat_scheme();
        let cond =
            disintegrate(&sys, &measure, &scheme, &Point::Torus(vec![0.55, 0.35])).unwrap();
        let region = TestRegion::TorusBox {
            lo: vec![0.5, 0.3],
            hi: vec![0.58, 0.38],
        };
        let exact = leaf_region_mass(&sys, &cond, &region).unwrap();
        let model = sys.as_linear().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts = sample_conditional(&cond, 20_000, 0, &mut rng).unwrap();
        let mut hits = 0usize;
        for p in &pts {
            let pos = p.position(model).unwrap();
            if let TestRegion::TorusBox { lo, hi } = &region {
                if pos.iter().zip(lo).zip(hi).all(|((x, l), h)| l <= x && x <= h) {
                    hits += 1;
                }
            }
        }
        let frac = hits as f64 / pts.len() as f64;
        let sigma = (exact * (1.0 - exact) / pts.len() as f64).sqrt();
        assert!(
            (frac - exact).abs() <= 4.0 * sigma + 1e-3,
            "sampled {frac} vs exact {exact}"
        );
    }

    #[test]
    fn disintegration_check_torus_box() {
        let (sys, measure, scheme) = cat_scheme();
        let region = TestRegion::TorusBox {
            lo: vec![0.2, 0.3],
            hi: vec![0.5, 0.8],
        };
        let check = verify_disintegration(&sys, &measure, &scheme, &region, 400, 3).unwrap();
        assert!(check.pass(), "{check:?}");
        assert!(!check.zero_variance);
    }

    #[test]
    fn disintegration_check_future_cylinder_is_exact() {
        let (sys, measure, scheme) = coin_scheme();
        // Future-only constraints have anchor-independent conditional mass.
        let region = TestRegion::CylinderSet {
            constraints: vec![(1, 1), (3, 0)],
        };
        let check = verify_disintegration(&sys, &measure, &scheme, &region, 64, 9).unwrap();
        assert!(check.zero_variance);
        assert_eq!(check.leaf_mean, 0.25);
        assert!(check.pass());
    }

    #[test]
    fn disintegration_check_past_constraint() {
        let (sys, measure, scheme) = coin_scheme();
        // Constraint at index -1 matches half the sampled anchors.
        let region = TestRegion::CylinderSet {
            constraints: vec![(-1, 0), (1, 1)],
        };
        let check = verify_disintegration(&sys, &measure, &scheme, &region, 3000, 4).unwrap();
        assert_relative_eq!(check.ambient_mass, 0.25, max_relative = 1e-12);
        assert!(check.pass(), "{check:?}");
    }
}
