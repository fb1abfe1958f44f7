//! Leaf cells and itinerary refinement along one-dimensional unstable leaves.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::partitions::{Name, Partition, UnstableScheme};
use crate::systems::{wrap_unit, LinearToralModel, Point, SystemHandle, WordWindow};

/// Crossings closer than this (in leaf coordinates) to an existing boundary
/// are merged; traces below this length are treated as degenerate.
pub(crate) const SNAP: f64 = 1e-12;

/// Piece of a 1-d unstable leaf inside one grid cell, in leaf coordinates
/// centered at the anchor (`lo <= 0 <= hi`).
#[derive(Debug, Clone)]
pub struct SegmentCell {
    pub grid_index: Vec<u32>,
    pub flat_index: u64,
    /// Anchor point on the torus; leaf coordinate 0.
    pub anchor: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Left endpoint of the piece on the torus; identifies the piece.
    pub origin: Vec<f64>,
    /// Unit expanding direction.
    pub direction: Vec<f64>,
    /// Signed expanding eigenvalue.
    pub eigenvalue: f64,
    pub log_modulus: f64,
}

impl SegmentCell {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Local unstable set of a shift point: all words sharing its past up to
/// index 0.
#[derive(Debug, Clone)]
pub struct CylinderCell {
    /// Window ending at index 0; symbols at indices <= 0.
    pub past: WordWindow,
    pub alphabet: usize,
}

/// Connected component of a local unstable leaf inside one partition cell.
#[derive(Debug, Clone)]
pub enum LeafCell {
    Segment(SegmentCell),
    Cylinder(CylinderCell),
}

impl LeafCell {
    pub fn as_segment(&self) -> Option<&SegmentCell> {
        match self {
            LeafCell::Segment(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_cylinder(&self) -> Option<&CylinderCell> {
        match self {
            LeafCell::Cylinder(c) => Some(c),
            _ => None,
        }
    }

    /// Whether two cells describe the same leaf piece. Segments compare the
    /// grid cell and the left endpoint; cylinders compare pasts on the
    /// overlap of their windows.
    pub fn same_piece(&self, other: &LeafCell) -> bool {
        match (self, other) {
            (LeafCell::Segment(a), LeafCell::Segment(b)) => {
                a.grid_index == b.grid_index
                    && a.origin
                        .iter()
                        .zip(&b.origin)
                        .all(|(x, y)| (x - y).abs() < 1e-9)
            }
            (LeafCell::Cylinder(a), LeafCell::Cylinder(b)) => {
                if a.alphabet != b.alphabet {
                    return false;
                }
                let lo = a.past.start().max(b.past.start());
                (lo..=0).all(|i| a.past.symbol_at(i) == b.past.symbol_at(i))
            }
            _ => false,
        }
    }
}

/// Position on a leaf cell: a real coordinate for segments, the future word
/// (symbols at indices 1, 2, ...) for cylinders.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafCoord {
    T(f64),
    Future(Vec<u8>),
}

/// Point on a leaf, addressed relative to its cell.
#[derive(Debug, Clone)]
pub struct LeafPoint {
    pub cell: Arc<LeafCell>,
    pub coord: LeafCoord,
}

impl LeafPoint {
    pub fn new(cell: Arc<LeafCell>, coord: LeafCoord) -> Self {
        Self { cell, coord }
    }

    /// Leaf coordinate for segment-backed points.
    pub fn t(&self) -> Option<f64> {
        match self.coord {
            LeafCoord::T(t) => Some(t),
            _ => None,
        }
    }

    /// Ambient position of a segment-backed point.
    pub fn position(&self, model: &LinearToralModel) -> Result<Vec<f64>> {
        match (&*self.cell, &self.coord) {
            (LeafCell::Segment(seg), LeafCoord::T(t)) => model.leaf_chart(&seg.anchor, &[*t]),
            _ => Err(Error::IncompatibleScheme(
                "ambient positions need a segment-backed point".into(),
            )),
        }
    }
}

/// Cut the local unstable leaf through `x` by the partition cell containing
/// `x`, clipped to the scheme's leaf segment.
pub fn unstable_cell(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    x: &Point,
) -> Result<LeafCell> {
    match (system, x) {
        (SystemHandle::Linear(model), Point::Torus(coords)) => {
            segment_cell(model, scheme, coords)
        }
        (SystemHandle::Shift(shift), Point::Word(w)) => {
            match scheme.partition() {
                Partition::TimeZero { alphabet } if *alphabet == shift.alphabet() => {}
                _ => {
                    return Err(Error::IncompatibleScheme(
                        "shift leaves need the time-zero partition".into(),
                    ))
                }
            }
            w.require(0, 0)?;
            let lo = w.start();
            let symbols: Vec<u8> = (lo..=0)
                .map(|i| w.symbol_at(i).expect("window checked"))
                .collect();
            Ok(LeafCell::Cylinder(CylinderCell {
                past: WordWindow::new(lo, symbols),
                alphabet: shift.alphabet(),
            }))
        }
        _ => Err(Error::InvalidParameter(
            "point kind does not match the system".into(),
        )),
    }
}

fn segment_cell(
    model: &LinearToralModel,
    scheme: &UnstableScheme,
    x: &[f64],
) -> Result<LeafCell> {
    if model.unstable_count() != 1 {
        return Err(Error::UnsupportedLeafDimension {
            expected: 1,
            got: model.unstable_count(),
        });
    }
    let grid = scheme
        .grid()
        .ok_or_else(|| Error::IncompatibleScheme("linear leaves need a grid partition".into()))?;
    if grid.dim() != model.dim() {
        return Err(Error::IncompatibleScheme(
            "grid dimension does not match the model".into(),
        ));
    }
    let dir = &model.unstable()[0];
    let u = dir.direction.clone();
    let idx = grid.cell_index(x);
    let (box_lo, box_hi) = grid.cell_box(&idx);
    let half = scheme.leaf_halflength();
    let mut lo = -half;
    let mut hi = half;
    for j in 0..u.len() {
        if u[j] == 0.0 {
            continue;
        }
        // Leaf coordinates where x + t*u hits the two walls of axis j.
        let a = (box_lo[j] - x[j]) / u[j];
        let b = (box_hi[j] - x[j]) / u[j];
        let (neg, pos) = if a <= b { (a, b) } else { (b, a) };
        lo = lo.max(neg);
        hi = hi.min(pos);
    }
    debug_assert!(lo <= 0.0 && hi >= 0.0);
    let origin = model.leaf_chart(x, &[lo])?;
    Ok(LeafCell::Segment(SegmentCell {
        flat_index: grid.flat_index(&idx),
        grid_index: idx,
        anchor: x.to_vec(),
        lo,
        hi,
        origin,
        direction: u,
        eigenvalue: dir.eigenvalue,
        log_modulus: dir.eigenvalue.abs().ln(),
    }))
}

/// Subset of a leaf cell occupied by one itinerary cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    /// Subinterval of the segment, in the cell's leaf coordinates.
    Interval { lo: f64, hi: f64 },
    /// Future word at indices 1..n-1 of the parent cylinder.
    Cylinder { future: Vec<u8> },
}

impl Trace {
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self {
            Trace::Interval { lo, hi } => Some((*lo, *hi)),
            _ => None,
        }
    }
}

/// One cell of the refinement of a leaf cell by `n` itineraries.
#[derive(Debug, Clone)]
pub struct ItineraryCell {
    pub name: Name,
    pub trace: Trace,
}

/// Refine a leaf cell by itineraries of length `n`.
///
/// Segments: enumerates, for each time level `1..n`, the leaf coordinates
/// where the level's image crosses a grid wall, then cuts the segment at the
/// union of all crossings. Crossings within `1e-12` of each other or of the
/// endpoints are merged. Cylinders: enumerates the future words of length
/// `n - 1`. Errors with `BudgetExceeded` before doing work whose crossing or
/// word count estimate exceeds `budget`.
pub fn refine_on_leaf(
    system: &SystemHandle,
    scheme: &UnstableScheme,
    cell: &LeafCell,
    n: usize,
    budget: u64,
) -> Result<Vec<ItineraryCell>> {
    if n == 0 {
        return Err(Error::InvalidParameter("refinement needs n >= 1".into()));
    }
    match (system, cell) {
        (SystemHandle::Linear(model), LeafCell::Segment(seg)) => {
            refine_segment(model, scheme, seg, n, budget)
        }
        (SystemHandle::Shift(shift), LeafCell::Cylinder(cyl)) => {
            refine_cylinder(shift.alphabet(), cyl, n, budget)
        }
        _ => Err(Error::InvalidParameter(
            "cell kind does not match the system".into(),
        )),
    }
}

fn refine_segment(
    model: &LinearToralModel,
    scheme: &UnstableScheme,
    seg: &SegmentCell,
    n: usize,
    budget: u64,
) -> Result<Vec<ItineraryCell>> {
    let grid = scheme
        .grid()
        .ok_or_else(|| Error::IncompatibleScheme("segments need a grid partition".into()))?;
    let k = grid.k() as f64;
    let len = seg.length();
    let lam = seg.eigenvalue;
    let dim = model.dim();

    // Upper bound on the crossing count: each axis sweep of width w meets at
    // most w*k + 2 walls.
    let mut estimate = 0.0f64;
    let mut scale = 1.0f64;
    for _ in 1..n {
        scale *= lam.abs();
        for j in 0..dim {
            if seg.direction[j] != 0.0 {
                estimate += scale * len * seg.direction[j].abs() * k + 2.0;
            }
        }
    }
    if estimate > budget as f64 {
        let estimate = if estimate >= u64::MAX as f64 {
            u64::MAX
        } else {
            estimate as u64
        };
        return Err(Error::BudgetExceeded { estimate, budget });
    }

    // Image of the anchor and the signed stretch factor at each level.
    let mut images = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut s = 1.0f64;
    for i in 0..n {
        images.push(model.apply(&seg.anchor, i as i64)?);
        scales.push(s);
        s *= lam;
    }

    let mut cuts: Vec<f64> = Vec::new();
    for i in 1..n {
        let p = &images[i];
        let s = scales[i];
        for j in 0..dim {
            let v = s * seg.direction[j];
            if v == 0.0 {
                continue;
            }
            // The level-i image of axis j sweeps p[j] + v*t over t in
            // [lo, hi]; walls sit at every m/k of the unwrapped coordinate.
            let c0 = p[j] + v * seg.lo;
            let c1 = p[j] + v * seg.hi;
            let (c_min, c_max) = if c0 <= c1 { (c0, c1) } else { (c1, c0) };
            let m_lo = (c_min * k).ceil() as i64;
            let m_hi = (c_max * k).floor() as i64;
            for m in m_lo..=m_hi {
                let t = (m as f64 / k - p[j]) / v;
                if t > seg.lo + SNAP && t < seg.hi - SNAP {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));

    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(seg.lo);
    for c in cuts {
        if c - bounds.last().unwrap() > SNAP {
            bounds.push(c);
        }
    }
    bounds.push(seg.hi);

    let mut cells = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let mut name = Vec::with_capacity(n);
        for i in 0..n {
            let mut pos = Vec::with_capacity(dim);
            for j in 0..dim {
                pos.push(wrap_unit(images[i][j] + scales[i] * seg.direction[j] * mid));
            }
            name.push(grid.flat_index(&grid.cell_index(&pos)));
        }
        cells.push(ItineraryCell {
            name,
            trace: Trace::Interval { lo, hi },
        });
    }
    Ok(cells)
}

fn refine_cylinder(
    alphabet: usize,
    cyl: &CylinderCell,
    n: usize,
    budget: u64,
) -> Result<Vec<ItineraryCell>> {
    if alphabet != cyl.alphabet {
        return Err(Error::IncompatibleScheme(
            "cylinder alphabet does not match the shift".into(),
        ));
    }
    let words = (alphabet as f64).powi(n as i32 - 1);
    if words > budget as f64 {
        let estimate = if words >= u64::MAX as f64 {
            u64::MAX
        } else {
            words as u64
        };
        return Err(Error::BudgetExceeded { estimate, budget });
    }
    let x0 = cyl.past.symbol_at(0).expect("cylinder holds index 0") as u64;
    let mut cells = Vec::with_capacity(words as usize);
    let mut word = vec![0u8; n - 1];
    loop {
        let mut name = Vec::with_capacity(n);
        name.push(x0);
        name.extend(word.iter().map(|&s| s as u64));
        cells.push(ItineraryCell {
            name,
            trace: Trace::Cylinder {
                future: word.clone(),
            },
        });
        // Lexicographic increment; done after the all-max word.
        let mut pos = word.len();
        loop {
            if pos == 0 {
                return Ok(cells);
            }
            pos -= 1;
            if word[pos] as usize + 1 < alphabet {
                word[pos] += 1;
                word[pos + 1..].fill(0);
                break;
            }
        }
    }
}

/// Find the refinement cell whose trace contains leaf coordinate `t`.
/// Coordinates within the snap width of a cut are ambiguous and rejected.
pub fn locate_trace(cells: &[ItineraryCell], t: f64) -> Result<&ItineraryCell> {
    let idx = cells.partition_point(|c| match &c.trace {
        Trace::Interval { hi, .. } => *hi <= t,
        Trace::Cylinder { .. } => false,
    });
    if let Some(cell) = cells.get(idx) {
        if let Trace::Interval { lo, hi } = cell.trace {
            if t > lo + SNAP && t < hi - SNAP {
                return Ok(cell);
            }
        }
    }
    Err(Error::ZeroMassCell)
}

/// Direct computation of the refinement cell around leaf coordinate `t`:
/// for each level and axis, pull back the nearest wall on either side of the
/// point's image. Independent of `refine_on_leaf`; used to cross-check it.
pub fn trace_bracket(
    model: &LinearToralModel,
    scheme: &UnstableScheme,
    seg: &SegmentCell,
    n: usize,
    t: f64,
) -> Result<(f64, f64)> {
    let grid = scheme
        .grid()
        .ok_or_else(|| Error::IncompatibleScheme("segments need a grid partition".into()))?;
    let k = grid.k() as f64;
    let mut lo = seg.lo;
    let mut hi = seg.hi;
    let mut s = 1.0f64;
    for i in 0..n {
        let p = model.apply(&seg.anchor, i as i64)?;
        if i > 0 {
            for j in 0..model.dim() {
                let v = s * seg.direction[j];
                if v == 0.0 {
                    continue;
                }
                let cur = p[j] + v * t;
                let below = (cur * k).floor() / k;
                let above = below + 1.0 / k;
                let (d_lo, d_hi) = if v > 0.0 {
                    ((below - cur) / v, (above - cur) / v)
                } else {
                    ((above - cur) / v, (below - cur) / v)
                };
                lo = lo.max(t + d_lo);
                hi = hi.min(t + d_hi);
            }
        }
        s *= seg.eigenvalue;
    }
    Ok((lo, hi))
}
