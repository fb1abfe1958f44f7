//! Entropy estimators built on counting.
//!
//! Two counting quantities drive the estimates: the minimal number of
//! leafwise Bowen balls whose union holds at least a (1 - delta) fraction of
//! the conditional mass, and the minimal number of itinerary cells doing the
//! same. Both grow like exp(h n); the estimate is the least-squares slope of
//! log count against n over a fit window, aggregated over anchors by the
//! median.

mod cover;

pub use cover::{
    ball_cover_brute_force, ball_cover_greedy, brute_force_cover, greedy_cover,
    oracle_interval_count, Candidate, CoverInstance, CoverResult, BRUTE_FORCE_LIMIT,
};

use std::fmt;

use crate::error::{Error, Result};
use crate::measures::{
    disintegrate, sample_conditional, trace_mass, ConditionalMeasure, InvariantMeasureModel,
    LeafRegion,
};
use crate::partitions::{
    locate_trace, refine_on_leaf, ItineraryCell, LeafCoord, LeafPoint, Name, UnstableScheme,
};
use crate::rng::{stream, Purpose};
use crate::systems::{ShiftMeasureKind, SystemHandle};

/// Counts with more cells than this do not keep the per-cell name list.
pub const CELL_LIST_CAP: u64 = 1 << 17;

/// Which counting quantity is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    BallCover,
    PartitionCount,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::BallCover => write!(f, "ball"),
            Formula::PartitionCount => write!(f, "partition"),
        }
    }
}

/// How a count was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountMethod {
    /// Greedy cover over sampled candidate centers.
    Greedy,
    /// Closed-form disjoint tiling count on an interval.
    OracleInterval,
    /// Cells enumerated by leaf refinement.
    Enumerated,
    /// Closed-form mass spectrum (product measures).
    ClosedForm,
    /// Certified subset enumeration.
    BruteForce,
}

impl fmt::Display for CountMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountMethod::Greedy => write!(f, "greedy"),
            CountMethod::OracleInterval => write!(f, "oracle"),
            CountMethod::Enumerated => write!(f, "enumerated"),
            CountMethod::ClosedForm => write!(f, "closed_form"),
            CountMethod::BruteForce => write!(f, "brute"),
        }
    }
}

/// One count at one (anchor, n, scale) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub anchor_index: u32,
    pub formula: Formula,
    pub method: CountMethod,
    pub n: usize,
    /// Ball radius scale; None for partition counts.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub count: u64,
    pub covered_mass: f64,
}

impl CountRow {
    /// log(count) / n, the single-row rate.
    pub fn naive_rate(&self) -> f64 {
        (self.count as f64).ln() / self.n as f64
    }
}

/// Result of a minimal itinerary-cell count.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCountResult {
    pub count: u64,
    /// Mass fraction covered by the counted cells (>= 1 - delta).
    pub covered_mass: f64,
    /// Mass covered by all but the last counted cell; strictly below the
    /// target, certifying minimality.
    pub mass_without_last: f64,
    /// Names of the counted cells, heaviest first; empty when the count
    /// exceeds [`CELL_LIST_CAP`].
    pub cells_used: Vec<Name>,
}

/// Minimal number of itinerary cells, taken heaviest first, holding at
/// least a (1 - delta) fraction of the conditional mass. Ties between equal
/// masses break toward the lexicographically smaller name.
pub fn partition_count(
    cond: &ConditionalMeasure,
    cells: &[ItineraryCell],
    delta: f64,
) -> Result<PartitionCountResult> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter("delta must lie in [0, 1)".into()));
    }
    if cells.is_empty() {
        return Err(Error::InvalidParameter("no cells to count".into()));
    }
    let mut entries: Vec<(f64, &Name)> = Vec::with_capacity(cells.len());
    let mut sum = 0.0;
    for c in cells {
        let m = trace_mass(cond, &c.trace)?;
        sum += m;
        entries.push((m, &c.name));
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::MassDeficit(sum));
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let target = ((1.0 - delta) - 1e-12).min(sum);
    let mut cum = 0.0;
    let mut count = 0u64;
    let mut without_last = 0.0;
    for &(m, _) in &entries {
        without_last = cum;
        cum += m;
        count += 1;
        if cum >= target {
            break;
        }
    }
    let cells_used = if count <= CELL_LIST_CAP {
        entries[..count as usize]
            .iter()
            .map(|&(_, name)| name.clone())
            .collect()
    } else {
        Vec::new()
    };
    Ok(PartitionCountResult {
        count,
        covered_mass: cum,
        mass_without_last: without_last,
        cells_used,
    })
}

/// Minimal cell count from a mass spectrum: groups of (mass, multiplicity)
/// describing how many cells share each mass. Equivalent to
/// [`partition_count`] on the enumerated cells, but usable when the cells
/// are too many to list.
pub fn partition_count_spectrum(
    groups: &[(f64, u64)],
    delta: f64,
) -> Result<PartitionCountResult> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter("delta must lie in [0, 1)".into()));
    }
    if groups.is_empty() {
        return Err(Error::InvalidParameter("no mass groups".into()));
    }
    let mut sum = 0.0;
    for &(m, mult) in groups {
        if !(m > 0.0) || mult == 0 {
            return Err(Error::InvalidParameter(
                "mass groups need positive mass and multiplicity".into(),
            ));
        }
        sum += m * mult as f64;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::MassDeficit(sum));
    }
    let mut sorted = groups.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let target = ((1.0 - delta) - 1e-12).min(sum);
    let mut cum = 0.0;
    let mut count = 0u64;
    let mut without_last = 0.0;
    for &(m, mult) in &sorted {
        let needed = ((target - cum) / m).ceil().max(0.0) as u64;
        let take = needed.min(mult);
        if take == 0 {
            continue;
        }
        without_last = cum + (take - 1) as f64 * m;
        cum += take as f64 * m;
        count += take;
        if cum >= target {
            break;
        }
    }
    Ok(PartitionCountResult {
        count,
        covered_mass: cum,
        mass_without_last: without_last,
        cells_used: Vec::new(),
    })
}

/// Exact binomial coefficient, overflow-checked.
fn binomial_u128(n: u64, k: u64) -> Result<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul((n - k + i) as u128)
            .ok_or_else(|| Error::InvalidParameter("count overflow".into()))?
            / i as u128;
    }
    Ok(acc)
}

/// Mass spectrum of the product measure on words of length `horizon`:
/// one group per symbol-count vector, with multinomial multiplicity.
pub fn bernoulli_mass_spectrum(probs: &[f64], horizon: usize) -> Result<Vec<(f64, u64)>> {
    if probs.is_empty() {
        return Err(Error::InvalidStochastic("empty probability vector".into()));
    }
    if horizon == 0 {
        return Ok(vec![(1.0, 1)]);
    }
    let mut groups = Vec::new();
    // Depth-first over symbol-count vectors; the multinomial is a product
    // of binomials over the remaining slots.
    fn fill(
        probs: &[f64],
        slot: usize,
        remaining: u64,
        mass: f64,
        mult: u128,
        groups: &mut Vec<(f64, u64)>,
    ) -> Result<()> {
        if slot + 1 == probs.len() {
            let mass = mass * probs[slot].powi(remaining as i32);
            let count = u64::try_from(mult)
                .map_err(|_| Error::InvalidParameter("count overflow".into()))?;
            if mass > 0.0 {
                groups.push((mass, count));
            }
            return Ok(());
        }
        for c in 0..=remaining {
            let ways = mult
                .checked_mul(binomial_u128(remaining, c)?)
                .ok_or_else(|| Error::InvalidParameter("count overflow".into()))?;
            fill(
                probs,
                slot + 1,
                remaining - c,
                mass * probs[slot].powi(c as i32),
                ways,
                groups,
            )?;
        }
        Ok(())
    }
    fill(probs, 0, horizon as u64, 1.0, 1, &mut groups)?;
    Ok(groups)
}

/// Pointwise information rate -log(mass of the n-itinerary cell of y) / n.
pub fn smb_rate(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cond: &ConditionalMeasure,
    y: &LeafPoint,
    n: usize,
    budget: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("rates need n >= 1".into()));
    }
    if !y.cell.same_piece(cond.cell()) {
        return Err(Error::DifferentLeaf);
    }
    match cond {
        ConditionalMeasure::UniformOnSegment { .. } => {
            let t = y.t().ok_or_else(|| {
                Error::IncompatibleScheme("segment points carry a coordinate".into())
            })?;
            let cells = refine_on_leaf(system, scheme, cond.cell(), n, budget)?;
            let cell = locate_trace(&cells, t)?;
            let mass = trace_mass(cond, &cell.trace)?;
            Ok(-mass.ln() / n as f64)
        }
        ConditionalMeasure::CylinderKernel { .. } => {
            let LeafCoord::Future(word) = &y.coord else {
                return Err(Error::IncompatibleScheme(
                    "cylinder points carry a future word".into(),
                ));
            };
            if word.len() + 1 < n {
                return Err(Error::WindowTooShort {
                    need_lo: 1,
                    need_hi: n as i64 - 1,
                    have_lo: 1,
                    have_hi: word.len() as i64,
                });
            }
            let constraints: Vec<(usize, u8)> = word[..n - 1]
                .iter()
                .enumerate()
                .map(|(j, &s)| (j + 1, s))
                .collect();
            let mass = if constraints.is_empty() {
                1.0
            } else {
                crate::measures::conditional_mass(
                    cond,
                    &LeafRegion::FutureCylinder { constraints },
                )?
            };
            if mass <= 0.0 {
                return Err(Error::ZeroMassCell);
            }
            Ok(-mass.ln() / n as f64)
        }
    }
}

/// Mean (and standard error) over anchors of the conditional entropy of the
/// n-step itinerary refinement, divided by n.
pub fn conditional_entropy_rate(
    system: &SystemHandle,
    measure: &InvariantMeasureModel,
    scheme: &UnstableScheme,
    n: usize,
    anchor_count: u32,
    seed: u64,
    budget: u64,
) -> Result<(f64, f64)> {
    if n == 0 || anchor_count == 0 {
        return Err(Error::InvalidParameter(
            "rates need n >= 1 and at least one anchor".into(),
        ));
    }
    let mut rng = stream(seed, Purpose::Anchors, 0);
    let mut vals = Vec::with_capacity(anchor_count as usize);
    for _ in 0..anchor_count {
        let anchor = measure.sample_point(0, &mut rng);
        let cond = disintegrate(system, measure, scheme, &anchor)?;
        let cells = refine_on_leaf(system, scheme, cond.cell(), n, budget)?;
        let mut h = 0.0;
        for c in &cells {
            let m = trace_mass(&cond, &c.trace)?;
            if m > 0.0 {
                h -= m * m.ln();
            }
        }
        vals.push(h / n as f64);
    }
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok((min, 0.0));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (vals.len() as f64 - 1.0);
    Ok((mean, (var / vals.len() as f64).sqrt()))
}

/// Entropy estimate from a sequence of counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    /// Least-squares slope of log(count) against n over the fit window.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual_rms: f64,
    pub points_used: usize,
    /// (n, log(count)/n) for each fitted point.
    pub naive_rates: Vec<(usize, f64)>,
}

/// Fit log(count) = slope * n + intercept over n in [n_lo, n_hi].
pub fn entropy_from_counts(
    counts: &[(usize, u64)],
    n_lo: usize,
    n_hi: usize,
) -> Result<EntropyEstimate> {
    let mut pts = Vec::new();
    for &(n, c) in counts {
        if n < n_lo || n > n_hi {
            continue;
        }
        if c == 0 {
            return Err(Error::InvalidParameter(format!("zero count at n = {n}")));
        }
        pts.push((n as f64, (c as f64).ln(), n));
    }
    if pts.len() < 3 {
        return Err(Error::WindowTooSmall(pts.len()));
    }
    let len = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    Ok(EntropyEstimate {
        slope,
        intercept,
        residual_rms: (ss_res / len).sqrt(),
        points_used: pts.len(),
        naive_rates: pts.iter().map(|p| (p.2, p.1 / p.0)).collect(),
    })
}

/// Parameters for a full counting run.
#[derive(Debug, Clone, PartialEq)]
pub struct KatokRequest {
    pub formula: Formula,
    pub n_min: usize,
    pub n_max: usize,
    /// Fit window for the slope; must sit inside [n_min, n_max] and span at
    /// least three points.
    pub fit_lo: usize,
    pub fit_hi: usize,
    /// Ball radius scales (ball-cover only).
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub anchor_count: u32,
    /// Candidate samples per anchor for the greedy method.
    pub sample_count: u32,
    /// Counting methods for linear ball covers; shift covers always use the
    /// cylinder closed form.
    pub methods: Vec<CountMethod>,
    pub seed: u64,
    pub budget: u64,
}

impl KatokRequest {
    /// Check the request against a system and scheme without running it.
    pub fn validate(&self, system: &SystemHandle, scheme: &UnstableScheme) -> Result<()> {
        if self.n_min == 0 || self.n_max < self.n_min {
            return Err(Error::InvalidParameter("need 1 <= n_min <= n_max".into()));
        }
        if self.fit_lo < self.n_min || self.fit_hi > self.n_max || self.fit_hi < self.fit_lo + 2 {
            return Err(Error::InvalidParameter(
                "fit window must sit inside [n_min, n_max] and span >= 3 points".into(),
            ));
        }
        if self.anchor_count == 0 {
            return Err(Error::InvalidParameter("need at least one anchor".into()));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::InvalidParameter(
                "deltas must be non-empty and lie in [0, 1)".into(),
            ));
        }
        if self.formula == Formula::BallCover {
            if self.epsilons.is_empty() {
                return Err(Error::InvalidParameter(
                    "ball covers need at least one epsilon".into(),
                ));
            }
            for &e in &self.epsilons {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(Error::EpsilonOutOfRange(e));
                }
                if let Some(grid) = scheme.grid() {
                    if e > grid.epsilon0() {
                        return Err(Error::EpsilonOutOfRange(e));
                    }
                }
            }
            if system.as_linear().is_some() {
                if self.methods.is_empty() {
                    return Err(Error::InvalidParameter(
                        "linear ball covers need at least one method".into(),
                    ));
                }
                for m in &self.methods {
                    match m {
                        CountMethod::Greedy => {
                            if self.sample_count == 0 {
                                return Err(Error::InvalidParameter(
                                    "the greedy method needs sample_count >= 1".into(),
                                ));
                            }
                        }
                        CountMethod::OracleInterval => {}
                        other => {
                            return Err(Error::InvalidParameter(format!(
                                "method {other} is not a ball-cover counting method"
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Slope summary for one (formula, method, epsilon, delta) series.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLine {
    pub formula: Formula,
    pub method: CountMethod,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub median_slope: f64,
    pub iqr: f64,
    /// Per-anchor slopes in anchor order.
    pub per_anchor: Vec<f64>,
}

/// Full counting outcome: raw counts plus slope summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct KatokOutcome {
    pub rows: Vec<CountRow>,
    pub estimates: Vec<EstimateLine>,
}

/// Run the requested counting formula over sampled anchors and summarize
/// the per-anchor slopes. Counts are emitted per anchor, then n, then
/// epsilon, then method, then delta.
pub fn katok_estimate(
    system: &SystemHandle,
    measure: &InvariantMeasureModel,
    scheme: &UnstableScheme,
    req: &KatokRequest,
) -> Result<KatokOutcome> {
    req.validate(system, scheme)?;
    let mut anchor_rng = stream(req.seed, Purpose::Anchors, 0);
    let mut rows = Vec::new();
    for a_idx in 0..req.anchor_count {
        let anchor = measure.sample_point(0, &mut anchor_rng);
        let cond = disintegrate(system, measure, scheme, &anchor)?;
        match req.formula {
            Formula::PartitionCount => {
                partition_rows(system, scheme, &cond, req, a_idx, &mut rows)?
            }
            Formula::BallCover => ball_rows(system, scheme, &cond, req, a_idx, &mut rows)?,
        }
    }
    let estimates = summarize(&rows, req)?;
    Ok(KatokOutcome { rows, estimates })
}

fn partition_rows(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cond: &ConditionalMeasure,
    req: &KatokRequest,
    anchor_index: u32,
    rows: &mut Vec<CountRow>,
) -> Result<()> {
    let bernoulli = match cond {
        ConditionalMeasure::CylinderKernel {
            kind: ShiftMeasureKind::Bernoulli(p),
            ..
        } => Some(p.clone()),
        _ => None,
    };
    for n in req.n_min..=req.n_max {
        if let Some(probs) = &bernoulli {
            let groups = bernoulli_mass_spectrum(probs, n - 1)?;
            for &delta in &req.deltas {
                let r = partition_count_spectrum(&groups, delta)?;
                rows.push(CountRow {
                    anchor_index,
                    formula: Formula::PartitionCount,
                    method: CountMethod::ClosedForm,
                    n,
                    epsilon: None,
                    delta,
                    count: r.count,
                    covered_mass: r.covered_mass,
                });
            }
        } else {
            let cells = refine_on_leaf(system, scheme, cond.cell(), n, req.budget)?;
            for &delta in &req.deltas {
                let r = partition_count(cond, &cells, delta)?;
                rows.push(CountRow {
                    anchor_index,
                    formula: Formula::PartitionCount,
                    method: CountMethod::Enumerated,
                    n,
                    epsilon: None,
                    delta,
                    count: r.count,
                    covered_mass: r.covered_mass,
                });
            }
        }
    }
    Ok(())
}

/// Smallest q >= 1 with 2^-q < epsilon: balls of radius epsilon in the
/// future metric fix q - 1 extra symbols.
fn cylinder_depth(epsilon: f64) -> Result<i32> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let mut q = 1;
    while 0.5f64.powi(q) >= epsilon {
        q += 1;
        if q > 60 {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
    }
    Ok(q)
}

fn ball_rows(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cond: &ConditionalMeasure,
    req: &KatokRequest,
    anchor_index: u32,
    rows: &mut Vec<CountRow>,
) -> Result<()> {
    match cond {
        ConditionalMeasure::UniformOnSegment { .. } => {
            let samples = if req.methods.contains(&CountMethod::Greedy) {
                let mut rng = stream(req.seed, Purpose::CandidateSamples, anchor_index as u64);
                sample_conditional(cond, req.sample_count as usize, 0, &mut rng)?
            } else {
                Vec::new()
            };
            let seg = cond.cell().as_segment().expect("segment conditional");
            for n in req.n_min..=req.n_max {
                for &eps in &req.epsilons {
                    for method in &req.methods {
                        match method {
                            CountMethod::OracleInterval => {
                                for &delta in &req.deltas {
                                    let count = oracle_interval_count(cond, n, eps, delta)?;
                                    let diameter = 2.0
                                        * eps
                                        * (-(n as f64 - 1.0) * seg.log_modulus).exp();
                                    let covered =
                                        (count as f64 * diameter / seg.length()).min(1.0);
                                    rows.push(CountRow {
                                        anchor_index,
                                        formula: Formula::BallCover,
                                        method: CountMethod::OracleInterval,
                                        n,
                                        epsilon: Some(eps),
                                        delta,
                                        count,
                                        covered_mass: covered,
                                    });
                                }
                            }
                            CountMethod::Greedy => {
                                for &delta in &req.deltas {
                                    let res =
                                        ball_cover_greedy(cond, &samples, n, eps, delta)?;
                                    rows.push(CountRow {
                                        anchor_index,
                                        formula: Formula::BallCover,
                                        method: CountMethod::Greedy,
                                        n,
                                        epsilon: Some(eps),
                                        delta,
                                        count: res.count,
                                        covered_mass: res.covered_fraction,
                                    });
                                }
                            }
                            other => {
                                return Err(Error::InvalidParameter(format!(
                                    "method {other} is not a ball-cover counting method"
                                )))
                            }
                        }
                    }
                }
            }
        }
        ConditionalMeasure::CylinderKernel { kind, .. } => {
            // A leafwise Bowen ball of radius epsilon is the cylinder fixing
            // the next n + q - 2 future symbols, so the cover count is the
            // partition count at that depth.
            for n in req.n_min..=req.n_max {
                for &eps in &req.epsilons {
                    let q = cylinder_depth(eps)?;
                    let horizon = n + q as usize - 2;
                    for &delta in &req.deltas {
                        let (r, method) = match kind {
                            ShiftMeasureKind::Bernoulli(p) => {
                                let groups = bernoulli_mass_spectrum(p, horizon)?;
                                (
                                    partition_count_spectrum(&groups, delta)?,
                                    CountMethod::ClosedForm,
                                )
                            }
                            ShiftMeasureKind::Markov { .. } => {
                                let cells = refine_on_leaf(
                                    system,
                                    scheme,
                                    cond.cell(),
                                    horizon + 1,
                                    req.budget,
                                )?;
                                (
                                    partition_count(cond, &cells, delta)?,
                                    CountMethod::Enumerated,
                                )
                            }
                        };
                        rows.push(CountRow {
                            anchor_index,
                            formula: Formula::BallCover,
                            method,
                            n,
                            epsilon: Some(eps),
                            delta,
                            count: r.count,
                            covered_mass: r.covered_mass,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(rows: &[CountRow], req: &KatokRequest) -> Result<Vec<EstimateLine>> {
    let mut keys: Vec<(Formula, CountMethod, Option<u64>, u64)> = Vec::new();
    for r in rows {
        let key = (
            r.formula,
            r.method,
            r.epsilon.map(f64::to_bits),
            r.delta.to_bits(),
        );
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut lines = Vec::with_capacity(keys.len());
    for key in keys {
        let mut per_anchor = Vec::with_capacity(req.anchor_count as usize);
        for a in 0..req.anchor_count {
            let counts: Vec<(usize, u64)> = rows
                .iter()
                .filter(|r| {
                    r.anchor_index == a
                        && r.formula == key.0
                        && r.method == key.1
                        && r.epsilon.map(f64::to_bits) == key.2
                        && r.delta.to_bits() == key.3
                })
                .map(|r| (r.n, r.count))
                .collect();
            let est = entropy_from_counts(&counts, req.fit_lo, req.fit_hi)?;
            per_anchor.push(est.slope);
        }
        let mut sorted = per_anchor.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        lines.push(EstimateLine {
            formula: key.0,
            method: key.1,
            epsilon: key.2.map(f64::from_bits),
            delta: f64::from_bits(key.3),
            median_slope: quantile(&sorted, 0.5),
            iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
            per_anchor,
        });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::InvariantMeasureModel;
    use crate::partitions::{build_grid, trace_bracket, Partition};
    use crate::systems::{build_linear_model, Point, ShiftModel, WordWindow};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn coin() -> (SystemHandle, InvariantMeasureModel, UnstableScheme) {
        let sys = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.5, 0.5]).unwrap());
        let measure = InvariantMeasureModel::for_system(&sys);
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        (sys, measure, scheme)
    }

    fn coin_cond() -> (SystemHandle, UnstableScheme, ConditionalMeasure) {
        let (sys, measure, scheme) = coin();
        let x = Point::Word(WordWindow::new(0, vec![0]));
        let cond = disintegrate(&sys, &measure, &scheme, &x).unwrap();
        (sys, scheme, cond)
    }

    fn cat() -> (SystemHandle, InvariantMeasureModel, UnstableScheme) {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        let measure = InvariantMeasureModel::for_system(&sys);
        let grid = build_grid(2, 10, 0.15).unwrap();
        let scheme = UnstableScheme::new(Partition::Grid(grid), 0.2).unwrap();
        (sys, measure, scheme)
    }

    #[test]
    fn fair_coin_counts_match_the_ceiling_formula() {
        let (sys, scheme, cond) = coin_cond();
        for n in [4usize, 10] {
            let cells = refine_on_leaf(&sys, &scheme, cond.cell(), n, 1 << 20).unwrap();
            let r = partition_count(&cond, &cells, 0.25).unwrap();
            let expected = (0.75 * 2f64.powi(n as i32 - 1)).ceil() as u64;
            assert_eq!(r.count, expected, "n = {n}");
            assert!(r.covered_mass >= 0.75);
            assert!(r.mass_without_last < 0.75);
        }
    }

    #[test]
    fn spectrum_count_matches_enumeration_and_scales_to_large_n() {
        let (sys, scheme, cond) = coin_cond();
        let cells = refine_on_leaf(&sys, &scheme, cond.cell(), 10, 1 << 20).unwrap();
        let enumerated = partition_count(&cond, &cells, 0.25).unwrap();
        let groups = bernoulli_mass_spectrum(&[0.5, 0.5], 9).unwrap();
        let spectral = partition_count_spectrum(&groups, 0.25).unwrap();
        assert_eq!(enumerated.count, spectral.count);
        assert_eq!(enumerated.covered_mass, spectral.covered_mass);
        // n = 30: 2^29 cells, count = 0.75 * 2^29 exactly.
        let groups = bernoulli_mass_spectrum(&[0.5, 0.5], 29).unwrap();
        let big = partition_count_spectrum(&groups, 0.25).unwrap();
        assert_eq!(big.count, 402_653_184);
    }

    #[test]
    fn biased_coin_spectrum_matches_enumeration() {
        let sys = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.75, 0.25]).unwrap());
        let measure = InvariantMeasureModel::for_system(&sys);
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        let x = Point::Word(WordWindow::new(0, vec![1]));
        let cond = disintegrate(&sys, &measure, &scheme, &x).unwrap();
        for n in 2..=8 {
            let cells = refine_on_leaf(&sys, &scheme, cond.cell(), n, 1 << 20).unwrap();
            let groups = bernoulli_mass_spectrum(&[0.75, 0.25], n - 1).unwrap();
            for delta in [0.1, 0.25, 0.5] {
                let a = partition_count(&cond, &cells, delta).unwrap();
                let b = partition_count_spectrum(&groups, delta).unwrap();
                assert_eq!(a.count, b.count, "n = {n}, delta = {delta}");
            }
        }
    }

    #[test]
    fn spectrum_groups_account_for_every_cell() {
        let groups = bernoulli_mass_spectrum(&[0.75, 0.25], 29).unwrap();
        let cells: u64 = groups.iter().map(|&(_, c)| c).sum();
        assert_eq!(cells, 1 << 29);
        let mass: f64 = groups.iter().map(|&(m, c)| m * c as f64).sum();
        assert_relative_eq!(mass, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn partition_count_flags_mass_deficits() {
        let (_, _, cond) = coin_cond();
        // Drop one cell from a refinement: masses no longer sum to 1.
        let (sys, scheme, _) = coin_cond();
        let mut cells = refine_on_leaf(&sys, &scheme, cond.cell(), 4, 1 << 20).unwrap();
        cells.pop();
        assert!(matches!(
            partition_count(&cond, &cells, 0.1).unwrap_err(),
            Error::MassDeficit(_)
        ));
    }

    #[test]
    fn minimality_certificate_on_the_cat_map() {
        let (sys, measure, scheme) = cat();
        let cond =
            disintegrate(&sys, &measure, &scheme, &Point::Torus(vec![0.55, 0.35])).unwrap();
        let cells = refine_on_leaf(&sys, &scheme, cond.cell(), 8, 1 << 24).unwrap();
        for delta in [0.1, 0.3] {
            let r = partition_count(&cond, &cells, delta).unwrap();
            assert!(r.covered_mass >= 1.0 - delta - 1e-12);
            assert!(r.mass_without_last < 1.0 - delta);
            assert_eq!(r.cells_used.len() as u64, r.count);
        }
    }

    #[test]
    fn smb_rate_fair_coin_closed_form() {
        let (_, scheme, cond) = coin_cond();
        let (sys, ..) = coin();
        let y = LeafPoint::new(
            Arc::clone(cond.cell()),
            LeafCoord::Future(vec![0, 1, 1, 0, 1, 0, 0, 1, 0]),
        );
        let rate = smb_rate(&sys, &scheme, &cond, &y, 10, 1 << 20).unwrap();
        assert_relative_eq!(rate, 9.0 * 2f64.ln() / 10.0, max_relative = 1e-12);
        assert!(matches!(
            smb_rate(&sys, &scheme, &cond, &y, 12, 1 << 20).unwrap_err(),
            Error::WindowTooShort { .. }
        ));
    }

    #[test]
    fn smb_rate_matches_the_bracket_oracle_on_the_cat_map() {
        let (sys, measure, scheme) = cat();
        let cond =
            disintegrate(&sys, &measure, &scheme, &Point::Torus(vec![0.55, 0.35])).unwrap();
        let seg = cond.cell().as_segment().unwrap().clone();
        let model = sys.as_linear().unwrap();
        let t = 0.013;
        let n = 7;
        let y = LeafPoint::new(Arc::clone(cond.cell()), LeafCoord::T(t));
        let rate = smb_rate(&sys, &scheme, &cond, &y, n, 1 << 24).unwrap();
        let (blo, bhi) = trace_bracket(model, &scheme, &seg, n, t).unwrap();
        let expected = -((bhi - blo) / seg.length()).ln() / n as f64;
        assert_relative_eq!(rate, expected, max_relative = 1e-6);
    }

    #[test]
    fn conditional_entropy_rate_closed_forms() {
        let (sys, measure, scheme) = coin();
        let (mean, stderr) =
            conditional_entropy_rate(&sys, &measure, &scheme, 4, 8, 21, 1 << 20).unwrap();
        assert_eq!(stderr, 0.0);
        assert_relative_eq!(mean, 3.0 * 2f64.ln() / 4.0, max_relative = 1e-12);

        let sys = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.75, 0.25]).unwrap());
        let measure = InvariantMeasureModel::for_system(&sys);
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        let (mean, stderr) =
            conditional_entropy_rate(&sys, &measure, &scheme, 3, 8, 22, 1 << 20).unwrap();
        assert_eq!(stderr, 0.0);
        let h = -(0.75f64.ln() * 0.75 + 0.25f64.ln() * 0.25);
        assert_relative_eq!(mean, 2.0 * h / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn slope_fit_recovers_exact_exponential_growth() {
        // counts = 3 * 2^(n-1) for n >= 3 are exact, so the slope is log 2.
        let counts: Vec<(usize, u64)> = (3..=12)
            .map(|n| (n, (0.75 * 2f64.powi(n as i32 - 1)).ceil() as u64))
            .collect();
        let est = entropy_from_counts(&counts, 3, 12).unwrap();
        assert!((est.slope - 2f64.ln()).abs() < 1e-9, "slope = {}", est.slope);
        assert!(est.residual_rms < 1e-9);
        assert_eq!(est.points_used, 10);
        assert!(matches!(
            entropy_from_counts(&counts[..2], 3, 4).unwrap_err(),
            Error::WindowTooSmall(_)
        ));
    }

    #[test]
    fn katok_partition_slope_near_log_lambda_on_the_cat_map() {
        let (sys, measure, scheme) = cat();
        let req = KatokRequest {
            formula: Formula::PartitionCount,
            n_min: 4,
            n_max: 9,
            fit_lo: 5,
            fit_hi: 9,
            epsilons: vec![],
            deltas: vec![0.1],
            anchor_count: 2,
            sample_count: 0,
            methods: vec![],
            seed: 33,
            budget: 1 << 24,
        };
        let out = katok_estimate(&sys, &measure, &scheme, &req).unwrap();
        assert_eq!(out.estimates.len(), 1);
        let slope = out.estimates[0].median_slope;
        let target = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert!((slope - target).abs() < 0.12, "slope = {slope}");
        assert_eq!(
            out.rows.len(),
            2 * 6, // anchors * n values, one delta
        );
    }

    #[test]
    fn katok_ball_oracle_slope_matches_log_lambda() {
        let (sys, measure, scheme) = cat();
        let req = KatokRequest {
            formula: Formula::BallCover,
            n_min: 3,
            n_max: 10,
            fit_lo: 4,
            fit_hi: 10,
            epsilons: vec![0.1, 0.05],
            deltas: vec![0.1],
            anchor_count: 2,
            sample_count: 0,
            methods: vec![CountMethod::OracleInterval],
            seed: 34,
            budget: 1 << 24,
        };
        let out = katok_estimate(&sys, &measure, &scheme, &req).unwrap();
        let target = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert_eq!(out.estimates.len(), 2);
        for line in &out.estimates {
            assert!(
                (line.median_slope - target).abs() < 0.02,
                "slope = {} at eps {:?}",
                line.median_slope,
                line.epsilon
            );
        }
    }

    #[test]
    fn katok_ball_closed_form_on_the_fair_coin_is_exactly_log_two() {
        let (sys, measure, scheme) = coin();
        let req = KatokRequest {
            formula: Formula::BallCover,
            n_min: 3,
            n_max: 12,
            fit_lo: 3,
            fit_hi: 12,
            epsilons: vec![0.25],
            deltas: vec![0.25],
            anchor_count: 3,
            sample_count: 0,
            methods: vec![],
            seed: 35,
            budget: 1 << 24,
        };
        let out = katok_estimate(&sys, &measure, &scheme, &req).unwrap();
        assert_eq!(out.estimates.len(), 1);
        let line = &out.estimates[0];
        // Counts are ceil(0.75 * 2^(n+1)): exact powers of two scaled by 3.
        assert!((line.median_slope - 2f64.ln()).abs() < 1e-9);
        assert_eq!(line.iqr, 0.0);
        assert_eq!(line.method, CountMethod::ClosedForm);
    }

    #[test]
    fn cylinder_depth_thresholds() {
        assert_eq!(cylinder_depth(0.6).unwrap(), 1);
        assert_eq!(cylinder_depth(0.5).unwrap(), 2);
        assert_eq!(cylinder_depth(0.25).unwrap(), 3);
        assert_eq!(cylinder_depth(0.2).unwrap(), 3);
        assert!(cylinder_depth(0.0).is_err());
    }

    #[test]
    fn request_validation_rejects_bad_windows_and_scales() {
        let (sys, measure, scheme) = cat();
        let mut req = KatokRequest {
            formula: Formula::BallCover,
            n_min: 3,
            n_max: 6,
            fit_lo: 5,
            fit_hi: 6,
            epsilons: vec![0.05],
            deltas: vec![0.1],
            anchor_count: 1,
            sample_count: 10,
            methods: vec![CountMethod::Greedy],
            seed: 1,
            budget: 1 << 20,
        };
        assert!(katok_estimate(&sys, &measure, &scheme, &req).is_err());
        req.fit_lo = 3;
        req.epsilons = vec![0.5]; // beyond the grid scale bound 0.15
        assert!(matches!(
            katok_estimate(&sys, &measure, &scheme, &req).unwrap_err(),
            Error::EpsilonOutOfRange(_)
        ));
    }
}
