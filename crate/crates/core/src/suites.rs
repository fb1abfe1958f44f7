//! Property suites: randomized checks of the structural claims the
//! estimators rely on. Each suite reports how many cases it checked and how
//! many violated the property; a clean run has zero violations everywhere.

use crate::error::{Error, Result};
use crate::estimators::{
    ball_cover_greedy, bernoulli_mass_spectrum, brute_force_cover, greedy_cover,
    oracle_interval_count, partition_count, partition_count_spectrum, Candidate, CoverInstance,
};
use crate::geometry::{bowen_distance, estimate_metric_comparison, torus_distance};
use crate::measures::{
    disintegrate, sample_conditional, trace_mass, verify_disintegration, InvariantMeasureModel,
    TestRegion,
};
use crate::partitions::{
    name_ball_bound, name_distance, name_of, refine_on_leaf, trace_bracket, unstable_cell, Name,
    UnstableScheme,
};
use crate::rng::{stream, Purpose};
use crate::systems::{Point, ShiftMeasureKind, SystemHandle};
use num_traits::ToPrimitive;
use rand::Rng;

/// Outcome of one property suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub checked: u64,
    pub violations: u64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Knobs for the property suites.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Sampled pairs per metric suite.
    pub pairs: u64,
    /// Sampled anchors per leaf suite.
    pub anchors: u32,
    pub n_max: usize,
    pub budget: u64,
    /// Test hook: multiplies leafwise distances inside the metric suites.
    /// Anything other than 1 breaks the metric-order property.
    pub du_scale: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            pairs: 2000,
            anchors: 8,
            n_max: 8,
            budget: 1 << 24,
            du_scale: 1.0,
        }
    }
}

fn report(name: &str, checked: u64, violations: u64, detail: String) -> SuiteReport {
    SuiteReport {
        name: name.to_string(),
        checked,
        violations,
        detail,
    }
}

/// Suites that need a linear model, in run order.
const LINEAR_ONLY: &[&str] = &[
    "geometry.metric_order",
    "geometry.leafwise_ball_inclusion",
    "geometry.ambient_ball_capture",
    "partitions.name_ball_bridge",
    "partitions.trace_nesting",
    "estimators.cover_properties",
    "partitions.bracket_consistency",
];

/// Suites that need a shift model.
const SHIFT_ONLY: &[&str] = &["estimators.symbolic_count_consistency"];

/// Suites applicable to every system.
const SHARED: &[&str] = &[
    "partitions.tiling",
    "partitions.name_distance_axioms",
    "partitions.counting_bound",
    "measures.disintegration_battery",
    "measures.invariance_pushforward",
    "estimators.minimality_certificate",
];

/// Suite names [`run_all`] executes for this system, plus the names it
/// skips as inapplicable.
pub fn suite_roster(system: &SystemHandle) -> (Vec<&'static str>, Vec<&'static str>) {
    let (run, skip) = if system.as_linear().is_some() {
        (LINEAR_ONLY, SHIFT_ONLY)
    } else {
        (SHIFT_ONLY, LINEAR_ONLY)
    };
    let applicable = run.iter().chain(SHARED.iter()).copied().collect();
    (applicable, skip.to_vec())
}

/// Run every suite applicable to the system; linear models run the full
/// leaf-geometry battery, shifts run the symbolic subset.
pub fn run_all(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cfg: &SuiteConfig,
) -> Result<Vec<SuiteReport>> {
    let measure = InvariantMeasureModel::for_system(system);
    let mut out = Vec::new();
    if system.as_linear().is_some() {
        out.push(metric_order(system, cfg)?);
        out.push(leafwise_ball_inclusion(system, cfg)?);
        out.push(ambient_ball_capture(system, cfg)?);
        out.push(name_ball_bridge(system, scheme, cfg)?);
        out.push(trace_nesting(system, scheme, &measure, cfg)?);
        out.push(cover_properties(system, scheme, &measure, cfg)?);
        out.push(bracket_consistency(system, scheme, &measure, cfg)?);
    } else {
        out.push(symbolic_count_consistency(system, scheme, cfg)?);
    }
    out.push(partition_tiling(system, scheme, &measure, cfg)?);
    out.push(name_distance_axioms(scheme, cfg)?);
    out.push(counting_bound(scheme, cfg)?);
    out.push(disintegration_battery(system, scheme, &measure, cfg)?);
    out.push(invariance_pushforward(system, &measure, cfg)?);
    out.push(minimality_certificate(system, scheme, &measure, cfg)?);
    Ok(out)
}

/// Run only the three leafwise-metric suites. Useful when the comparison
/// between the ambient and leafwise metrics needs certifying at high sample
/// counts without paying for the full battery.
pub fn run_metric_suites(system: &SystemHandle, cfg: &SuiteConfig) -> Result<Vec<SuiteReport>> {
    if system.as_linear().is_none() {
        return Err(Error::IncompatibleScheme(
            "metric suites need a linear model".into(),
        ));
    }
    Ok(vec![
        metric_order(system, cfg)?,
        leafwise_ball_inclusion(system, cfg)?,
        ambient_ball_capture(system, cfg)?,
    ])
}

/// Sample an anchor and two leaf coordinates within +-gamma/2.
fn sample_pair<R: Rng>(dim: usize, gamma: f64, rng: &mut R) -> (Vec<f64>, f64, f64) {
    let anchor: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let t1 = (rng.gen::<f64>() - 0.5) * gamma;
    let t2 = (rng.gen::<f64>() - 0.5) * gamma;
    (anchor, t1, t2)
}

/// The ambient metric never exceeds the leafwise metric on a leaf, and the
/// comparison constant stays finite.
fn metric_order(system: &SystemHandle, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let model = system.as_linear().expect("linear suite");
    let mut rng = stream(cfg.seed, Purpose::LeafPairs, 1);
    let gamma = 0.01;
    let mut violations = 0u64;
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.pairs {
        let (anchor, t1, t2) = sample_pair(model.dim(), gamma, &mut rng);
        let du = (t1 - t2).abs() * cfg.du_scale;
        if du == 0.0 {
            continue;
        }
        let p = model.leaf_chart(&anchor, &[t1])?;
        let q = model.leaf_chart(&anchor, &[t2])?;
        let d = torus_distance(&p, &q);
        if d > du * (1.0 + 1e-9) {
            violations += 1;
        }
        if d > 0.0 {
            worst = worst.max(du / d);
        }
    }
    Ok(report(
        "geometry.metric_order",
        cfg.pairs,
        violations,
        format!("max leaf/ambient ratio {worst:.6}"),
    ))
}

/// Leafwise Bowen balls sit inside ambient Bowen balls of the same radius.
fn leafwise_ball_inclusion(system: &SystemHandle, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let model = system.as_linear().expect("linear suite");
    let mut rng = stream(cfg.seed, Purpose::LeafPairs, 2);
    let gamma = 0.01;
    let lam = model.unstable()[0].eigenvalue.abs();
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.pairs / 4 {
        let (anchor, t1, t2) = sample_pair(model.dim(), gamma, &mut rng);
        let p = Point::Torus(model.leaf_chart(&anchor, &[t1])?);
        let q = Point::Torus(model.leaf_chart(&anchor, &[t2])?);
        for n in 1..=cfg.n_max {
            let du = (t1 - t2).abs() * lam.powi(n as i32 - 1) * cfg.du_scale;
            if du >= gamma {
                continue;
            }
            checked += 1;
            let d = bowen_distance(system, &p, &q, n)?;
            if d > gamma * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }
    Ok(report(
        "geometry.leafwise_ball_inclusion",
        checked,
        violations,
        format!("radius {gamma}"),
    ))
}

/// Ambient Bowen balls of radius eps / C, intersected with the leaf, sit
/// inside leafwise Bowen balls of radius eps.
fn ambient_ball_capture(system: &SystemHandle, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let model = system.as_linear().expect("linear suite");
    let cmp = estimate_metric_comparison(system, 0.01, cfg.pairs, cfg.seed ^ 0xa5)?;
    let eps = 0.1;
    let lam = model.unstable()[0].eigenvalue.abs();
    let mut rng = stream(cfg.seed, Purpose::LeafPairs, 3);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.pairs / 4 {
        let (anchor, t1, t2) = sample_pair(model.dim(), 0.05, &mut rng);
        let p = Point::Torus(model.leaf_chart(&anchor, &[t1])?);
        let q = Point::Torus(model.leaf_chart(&anchor, &[t2])?);
        for n in 1..=cfg.n_max {
            let d = bowen_distance(system, &p, &q, n)?;
            if d >= eps / cmp.c {
                continue;
            }
            checked += 1;
            let du = (t1 - t2).abs() * lam.powi(n as i32 - 1) * cfg.du_scale;
            if du >= eps {
                violations += 1;
            }
        }
    }
    Ok(report(
        "geometry.ambient_ball_capture",
        checked,
        violations,
        format!("comparison constant {:.9}", cmp.c),
    ))
}

/// Points that are leafwise Bowen-close and keep their itinerary away from
/// the partition boundary share most of their name: the name distance is at
/// most the fraction of boundary-grazing times.
fn name_ball_bridge(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let model = system.as_linear().expect("linear suite");
    let grid = scheme
        .grid()
        .ok_or_else(|| Error::IncompatibleScheme("bridge suite needs a grid".into()))?;
    let theta = 0.4 / (2.0 * grid.k() as f64);
    let lam = model.unstable()[0].eigenvalue.abs();
    let n = cfg.n_max;
    let mut rng = stream(cfg.seed, Purpose::LeafPairs, 4);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.pairs / 4 {
        // Separation small enough that the leafwise Bowen distance at
        // horizon n stays below theta.
        let dt = rng.gen::<f64>() * 0.9 * theta / lam.powi(n as i32 - 1);
        let anchor: Vec<f64> = (0..model.dim()).map(|_| rng.gen::<f64>()).collect();
        let p = model.leaf_chart(&anchor, &[0.0])?;
        let q = model.leaf_chart(&anchor, &[dt])?;
        // Fraction of times the first point grazes the boundary.
        let mut grazing = 0usize;
        for i in 0..n {
            let img = model.apply(&p, i as i64)?;
            let near = img.iter().any(|&c| {
                let scaled = c * grid.k() as f64;
                let frac = scaled - scaled.floor();
                frac < theta * grid.k() as f64 || frac > 1.0 - theta * grid.k() as f64
            });
            if near {
                grazing += 1;
            }
        }
        let phi = grazing as f64 / n as f64;
        let name_p = name_of(system, scheme.partition(), &Point::Torus(p), n)?;
        let name_q = name_of(system, scheme.partition(), &Point::Torus(q), n)?;
        let dist = name_distance(&name_p, &name_q)?;
        checked += 1;
        if dist > phi + 1e-12 {
            violations += 1;
        }
    }
    Ok(report(
        "partitions.name_ball_bridge",
        checked,
        violations,
        format!("theta {theta:.4}, horizon {n}"),
    ))
}

/// Finer refinements nest inside coarser ones and extend their names.
fn trace_nesting(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let mut rng = stream(cfg.seed, Purpose::Anchors, 5);
    let n = cfg.n_max.min(7);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.anchors {
        let anchor = measure.sample_point(0, &mut rng);
        let cell = unstable_cell(system, scheme, &anchor)?;
        let coarse = refine_on_leaf(system, scheme, &cell, n, cfg.budget)?;
        let fine = refine_on_leaf(system, scheme, &cell, n + 1, cfg.budget)?;
        for f in &fine {
            let (flo, fhi) = f.trace.interval().expect("segment traces");
            let mid = 0.5 * (flo + fhi);
            checked += 1;
            let host = coarse.iter().find(|c| {
                let (lo, hi) = c.trace.interval().expect("segment traces");
                lo <= mid && mid < hi
            });
            match host {
                Some(c) => {
                    let (clo, chi) = c.trace.interval().expect("segment traces");
                    if flo < clo - 1e-12 || fhi > chi + 1e-12 || f.name[..n] != c.name[..] {
                        violations += 1;
                    }
                }
                None => violations += 1,
            }
        }
    }
    Ok(report(
        "partitions.trace_nesting",
        checked,
        violations,
        format!("horizons {n} into {}", n + 1),
    ))
}

/// Refinement traces tile the cell, their masses sum to one, and interior
/// points reproduce the cell name.
fn partition_tiling(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let mut rng = stream(cfg.seed, Purpose::Anchors, 6);
    let n = cfg.n_max.min(7);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.anchors {
        let anchor = measure.sample_point(0, &mut rng);
        let cond = disintegrate(system, measure, scheme, &anchor)?;
        let cells = refine_on_leaf(system, scheme, cond.cell(), n, cfg.budget)?;
        let mut total = 0.0;
        for c in &cells {
            total += trace_mass(&cond, &c.trace)?;
        }
        checked += 1;
        if (total - 1.0).abs() > 1e-9 {
            violations += 1;
        }
        if let Some(seg) = cond.cell().as_segment() {
            let model = system.as_linear().expect("segment cells are linear");
            let mut cursor = seg.lo;
            for c in &cells {
                let (lo, hi) = c.trace.interval().expect("segment traces");
                checked += 1;
                if (lo - cursor).abs() > 1e-12 || hi <= lo {
                    violations += 1;
                }
                cursor = hi;
            }
            checked += 1;
            if (cursor - seg.hi).abs() > 1e-12 {
                violations += 1;
            }
            for c in cells.iter().step_by((cells.len() / 12).max(1)) {
                let (lo, hi) = c.trace.interval().expect("segment traces");
                let t = lo + 0.37 * (hi - lo);
                let pos = model.leaf_chart(&seg.anchor, &[t])?;
                let name = name_of(system, scheme.partition(), &Point::Torus(pos), n)?;
                checked += 1;
                if name != c.name {
                    violations += 1;
                }
            }
        }
    }
    Ok(report(
        "partitions.tiling",
        checked,
        violations,
        format!("horizon {n}, {} anchors", cfg.anchors),
    ))
}

/// The normalized Hamming distance on names is a pseudometric.
fn name_distance_axioms(scheme: &UnstableScheme, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let m = scheme.partition().cell_count();
    let mut rng = stream(cfg.seed, Purpose::Suite, 7);
    let n = 12;
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.pairs / 4 {
        let a: Name = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let b: Name = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let c: Name = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let dab = name_distance(&a, &b)?;
        let dba = name_distance(&b, &a)?;
        let daa = name_distance(&a, &a)?;
        let dac = name_distance(&a, &c)?;
        let dcb = name_distance(&c, &b)?;
        checked += 1;
        if dab != dba || daa != 0.0 || dab > dac + dcb + 1e-15 || !(0.0..=1.0).contains(&dab) {
            violations += 1;
        }
    }
    Ok(report(
        "partitions.name_distance_axioms",
        checked,
        violations,
        format!("length {n}, {m} symbols"),
    ))
}

/// The enumerated count of names within Hamming radius eps never exceeds
/// the closed-form exponential bound.
fn counting_bound(scheme: &UnstableScheme, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let m = scheme.partition().cell_count();
    let mut checked = 0u64;
    let mut violations = 0u64;
    let mut min_slack = f64::INFINITY;
    for n in [10usize, 20, 40, 60] {
        for eps in [0.05, 0.1, 0.25, 0.5] {
            if (n as f64 * eps).fract() > 1e-9 && n as f64 * eps < 1.0 {
                continue;
            }
            let (direct, bound) = name_ball_bound(n, eps, m)?;
            let direct_f = direct.to_f64().unwrap_or(f64::INFINITY);
            checked += 1;
            if direct_f > bound * (1.0 + 1e-12) {
                violations += 1;
            } else {
                min_slack = min_slack.min(bound.ln() - direct_f.ln());
            }
        }
    }
    let _ = cfg;
    Ok(report(
        "partitions.counting_bound",
        checked,
        violations,
        format!("min log slack {min_slack:.3}"),
    ))
}

/// Leaf conditionals integrate back to the ambient measure on a battery of
/// regions.
fn disintegration_battery(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let regions: Vec<TestRegion> = match measure {
        InvariantMeasureModel::LebesgueOnTorus { dim } => {
            let d = *dim;
            let full = TestRegion::TorusBox {
                lo: vec![0.0; d],
                hi: vec![1.0; d],
            };
            let half_lo = vec![0.0; d];
            let mut half_hi = vec![1.0; d];
            half_hi[0] = 0.5;
            let small = TestRegion::TorusBox {
                lo: vec![0.2; d],
                hi: vec![0.35; d],
            };
            let mut slab_lo = vec![0.0; d];
            let mut slab_hi = vec![1.0; d];
            slab_lo[d - 1] = 0.4;
            slab_hi[d - 1] = 0.45;
            let mut skew_lo = vec![0.1; d];
            let mut skew_hi = vec![0.9; d];
            skew_lo[d - 1] = 0.6;
            skew_hi[d - 1] = 0.7;
            vec![
                full,
                TestRegion::TorusBox { lo: half_lo, hi: half_hi },
                small,
                TestRegion::TorusBox { lo: slab_lo, hi: slab_hi },
                TestRegion::TorusBox { lo: skew_lo, hi: skew_hi },
            ]
        }
        InvariantMeasureModel::Shift { .. } => vec![
            TestRegion::CylinderSet { constraints: vec![(0, 0)] },
            TestRegion::CylinderSet { constraints: vec![(1, 1)] },
            TestRegion::CylinderSet { constraints: vec![(-1, 0), (1, 1)] },
            TestRegion::CylinderSet { constraints: vec![(1, 0), (2, 1)] },
            TestRegion::CylinderSet { constraints: vec![(2, 1)] },
        ],
    };
    let samples = (cfg.pairs / 4).max(200);
    let mut checked = 0u64;
    let mut violations = 0u64;
    let mut details = Vec::new();
    for (i, region) in regions.iter().enumerate() {
        let check = verify_disintegration(
            system,
            measure,
            scheme,
            region,
            samples,
            cfg.seed.wrapping_add(i as u64),
        )?;
        checked += 1;
        if !check.pass() {
            violations += 1;
            details.push(format!(
                "region {i}: mean {} vs ambient {}",
                check.leaf_mean, check.ambient_mass
            ));
        }
    }
    Ok(report(
        "measures.disintegration_battery",
        checked,
        violations,
        if details.is_empty() {
            format!("{} regions x {samples} anchors", regions.len())
        } else {
            details.join("; ")
        },
    ))
}

/// Pushing sampled points forward one step preserves empirical masses.
fn invariance_pushforward(
    system: &SystemHandle,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let mut rng = stream(cfg.seed, Purpose::Suite, 8);
    let n_samples = cfg.pairs.max(1000);
    let mut checked = 0u64;
    let mut violations = 0u64;
    match (system, measure) {
        (SystemHandle::Linear(model), InvariantMeasureModel::LebesgueOnTorus { dim }) => {
            let boxes = [
                (vec![0.0; *dim], {
                    let mut h = vec![1.0; *dim];
                    h[0] = 0.5;
                    h
                }),
                (vec![0.25; *dim], vec![0.6; *dim]),
            ];
            for (lo, hi) in &boxes {
                let vol: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).product();
                let mut hits = 0u64;
                for _ in 0..n_samples {
                    let x: Vec<f64> = (0..*dim).map(|_| rng.gen::<f64>()).collect();
                    let y = model.apply(&x, 1)?;
                    if y.iter().zip(lo).zip(hi).all(|((c, l), h)| l <= c && c < h) {
                        hits += 1;
                    }
                }
                let sigma = (vol * (1.0 - vol) / n_samples as f64).sqrt();
                checked += 1;
                if (hits as f64 / n_samples as f64 - vol).abs() > 4.0 * sigma + 1e-9 {
                    violations += 1;
                }
            }
        }
        (SystemHandle::Shift(shift), InvariantMeasureModel::Shift { .. }) => {
            // Symbol frequencies at each index of stationary samples match
            // the marginal distribution.
            let pi = shift.symbol_distribution();
            let mut counts = vec![vec![0u64; shift.alphabet()]; 3];
            for _ in 0..n_samples {
                let p = measure.sample_point(2, &mut rng);
                if let Point::Word(w) = p {
                    for (j, idx) in (-2..=0).enumerate() {
                        let s = w.symbol_at(idx).expect("window") as usize;
                        counts[j][s] += 1;
                    }
                }
            }
            for row in &counts {
                for (s, &c) in row.iter().enumerate() {
                    let p = pi[s];
                    let sigma = (p * (1.0 - p) / n_samples as f64).sqrt();
                    checked += 1;
                    if (c as f64 / n_samples as f64 - p).abs() > 4.0 * sigma + 1e-9 {
                        violations += 1;
                    }
                }
            }
        }
        _ => {
            return Err(Error::InvalidParameter(
                "measure kind does not match the system".into(),
            ))
        }
    }
    Ok(report(
        "measures.invariance_pushforward",
        checked,
        violations,
        format!("{n_samples} samples"),
    ))
}

/// Greedy covers dominate certified minima, shrink with delta, grow with n,
/// and track the dense-tiling oracle.
fn cover_properties(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let mut rng = stream(cfg.seed, Purpose::Suite, 9);
    let mut checked = 0u64;
    let mut violations = 0u64;
    // Random small instances: brute force never exceeds greedy.
    for _ in 0..24 {
        let n_cand = rng.gen_range(3..=8);
        let r = rng.gen_range(0.04..0.2);
        let candidates: Vec<Candidate> = (0..n_cand)
            .map(|_| {
                let c = rng.gen::<f64>();
                Candidate { center: c, lo: c - r, hi: c + r }
            })
            .collect();
        let delta = rng.gen_range(0.1..0.5);
        let inst = CoverInstance::interval(candidates, 0.0, 1.0)?;
        match (greedy_cover(&inst, delta), brute_force_cover(&inst, delta)) {
            (Ok(g), Ok(b)) => {
                checked += 1;
                if b.count > g.count {
                    violations += 1;
                }
            }
            (Err(Error::CoverageImpossible { .. }), Err(Error::CoverageImpossible { .. })) => {}
            _ => {
                checked += 1;
                violations += 1;
            }
        }
    }
    // A real leaf: monotonicity and oracle tracking.
    let anchor = measure.sample_point(0, &mut rng);
    let cond = disintegrate(system, measure, scheme, &anchor)?;
    let mut sample_rng = stream(cfg.seed, Purpose::CandidateSamples, 1 << 20);
    let samples = sample_conditional(&cond, 30_000, 0, &mut sample_rng)?;
    let eps = 0.05;
    let mut prev = 0u64;
    for n in 1..=cfg.n_max {
        let res = ball_cover_greedy(&cond, &samples, n, eps, 0.1)?;
        checked += 1;
        if res.count < prev {
            violations += 1;
        }
        prev = res.count;
        let oracle = oracle_interval_count(&cond, n, eps, 0.1)?;
        checked += 1;
        if n <= 7 {
            let ratio = res.count as f64 / oracle as f64;
            if !(0.75..=1.25).contains(&ratio) {
                violations += 1;
            }
        }
    }
    let mut prev_count = u64::MAX;
    for delta in [0.05, 0.1, 0.2, 0.4] {
        let res = ball_cover_greedy(&cond, &samples, 5, eps, delta)?;
        checked += 1;
        if res.count > prev_count {
            violations += 1;
        }
        prev_count = res.count;
    }
    Ok(report(
        "estimators.cover_properties",
        checked,
        violations,
        "dominance, monotonicity, oracle tracking".into(),
    ))
}

/// The refinement agrees with the direct nearest-crossing bracket.
fn bracket_consistency(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let model = system.as_linear().expect("linear suite");
    let mut rng = stream(cfg.seed, Purpose::Anchors, 10);
    let n = cfg.n_max.min(8);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.anchors.min(4) {
        let anchor = measure.sample_point(0, &mut rng);
        let cell = unstable_cell(system, scheme, &anchor)?;
        let seg = cell.as_segment().expect("linear cells are segments");
        let cells = refine_on_leaf(system, scheme, &cell, n, cfg.budget)?;
        for c in cells.iter().step_by((cells.len() / 16).max(1)) {
            let (lo, hi) = c.trace.interval().expect("segment traces");
            let t = 0.5 * (lo + hi);
            let (blo, bhi) = trace_bracket(model, scheme, seg, n, t)?;
            checked += 1;
            if (blo - lo).abs() > 1e-9 || (bhi - hi).abs() > 1e-9 {
                violations += 1;
            }
        }
    }
    Ok(report(
        "partitions.bracket_consistency",
        checked,
        violations,
        format!("horizon {n}"),
    ))
}

/// Shift counts: enumeration, the mass spectrum, and the cylinder reduction
/// of ball covers all agree.
fn symbolic_count_consistency(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let shift = match system {
        SystemHandle::Shift(s) => s,
        _ => unreachable!("symbolic suite"),
    };
    let measure = InvariantMeasureModel::for_system(system);
    let mut rng = stream(cfg.seed, Purpose::Anchors, 11);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.anchors.min(4) {
        let anchor = measure.sample_point(0, &mut rng);
        let cond = disintegrate(system, &measure, scheme, &anchor)?;
        for n in 2..=cfg.n_max.min(10) {
            let cells = refine_on_leaf(system, scheme, cond.cell(), n, cfg.budget)?;
            for delta in [0.1, 0.3] {
                let enumerated = partition_count(&cond, &cells, delta)?;
                checked += 1;
                if let ShiftMeasureKind::Bernoulli(p) = shift.measure() {
                    let groups = bernoulli_mass_spectrum(p, n - 1)?;
                    let spectral = partition_count_spectrum(&groups, delta)?;
                    if enumerated.count != spectral.count {
                        violations += 1;
                    }
                } else if enumerated.covered_mass < 1.0 - delta - 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Ok(report(
        "estimators.symbolic_count_consistency",
        checked,
        violations,
        "enumeration vs mass spectrum".into(),
    ))
}

/// Partition counts come with a minimality certificate: dropping the last
/// cell falls below the coverage target.
fn minimality_certificate(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    measure: &InvariantMeasureModel,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let mut rng = stream(cfg.seed, Purpose::Anchors, 12);
    let n = cfg.n_max.min(8);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for _ in 0..cfg.anchors.min(4) {
        let anchor = measure.sample_point(0, &mut rng);
        let cond = disintegrate(system, measure, scheme, &anchor)?;
        let cells = refine_on_leaf(system, scheme, cond.cell(), n, cfg.budget)?;
        for delta in [0.05, 0.1, 0.25, 0.5] {
            let r = partition_count(&cond, &cells, delta)?;
            checked += 1;
            if !(r.covered_mass >= 1.0 - delta - 1e-12 && r.mass_without_last < 1.0 - delta) {
                violations += 1;
            }
        }
    }
    Ok(report(
        "estimators.minimality_certificate",
        checked,
        violations,
        format!("horizon {n}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{build_grid, Partition};
    use crate::systems::{build_linear_model, ShiftModel};

    #[test]
    fn all_suites_pass_on_the_cat_map() {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        let grid = build_grid(2, 10, 0.15).unwrap();
        let scheme = UnstableScheme::new(Partition::Grid(grid), 0.2).unwrap();
        let cfg = SuiteConfig {
            pairs: 600,
            anchors: 4,
            n_max: 7,
            ..SuiteConfig::default()
        };
        let reports = run_all(&sys, &scheme, &cfg).unwrap();
        assert!(reports.len() >= 10);
        let (applicable, skipped) = suite_roster(&sys);
        let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, applicable);
        assert_eq!(skipped, vec!["estimators.symbolic_count_consistency"]);
        for r in &reports {
            assert!(r.passed(), "{}: {} violations ({})", r.name, r.violations, r.detail);
            assert!(r.checked > 0, "{} checked nothing", r.name);
        }
    }

    #[test]
    fn all_suites_pass_on_a_markov_shift() {
        let sys = SystemHandle::Shift(
            ShiftModel::markov(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
        );
        let scheme = UnstableScheme::new(Partition::TimeZero { alphabet: 2 }, 0.9).unwrap();
        let cfg = SuiteConfig {
            pairs: 800,
            anchors: 4,
            n_max: 8,
            ..SuiteConfig::default()
        };
        let reports = run_all(&sys, &scheme, &cfg).unwrap();
        let (applicable, _) = suite_roster(&sys);
        let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, applicable);
        for r in &reports {
            assert!(r.passed(), "{}: {} violations ({})", r.name, r.violations, r.detail);
        }
    }

    #[test]
    fn corrupted_leaf_metric_breaks_the_metric_suite() {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        let grid = build_grid(2, 10, 0.15).unwrap();
        let scheme = UnstableScheme::new(Partition::Grid(grid), 0.2).unwrap();
        let cfg = SuiteConfig {
            pairs: 300,
            anchors: 2,
            n_max: 5,
            du_scale: 0.5,
            ..SuiteConfig::default()
        };
        let reports = run_all(&sys, &scheme, &cfg).unwrap();
        let metric = reports
            .iter()
            .find(|r| r.name == "geometry.metric_order")
            .unwrap();
        assert!(!metric.passed());
    }
}
