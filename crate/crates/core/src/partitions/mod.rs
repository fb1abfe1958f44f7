//! Finite partitions, unstable leaf cells, and itinerary refinement.
//!
//! For linear models the partition is an axis-aligned grid on the torus; for
//! shifts it is the time-zero partition by the symbol at index 0. A leaf
//! cell is the connected piece of a local unstable leaf inside one partition
//! cell; refining it by the first `n` itineraries produces the cells whose
//! counts drive the partition-count entropy formula.

mod leaf;

pub use leaf::{
    locate_trace, refine_on_leaf, trace_bracket, unstable_cell, CylinderCell, ItineraryCell,
    LeafCell, LeafCoord, LeafPoint, SegmentCell, Trace,
};

use crate::error::{Error, Result};
use crate::systems::{Point, SystemHandle};
use num_bigint::BigUint;

/// Itinerary name: one flattened cell index per time step.
pub type Name = Vec<u64>;

/// Axis-aligned grid with `k` subdivisions per axis on the d-torus.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    k: u32,
    dim: usize,
    epsilon0: f64,
}

/// Build a grid partition and check its diameter against the scale bound
/// `epsilon0` (cells must be small enough for the leafwise ball geometry).
pub fn build_grid(dim: usize, k: u32, epsilon0: f64) -> Result<GridPartition> {
    if dim == 0 || k == 0 {
        return Err(Error::InvalidParameter(
            "grid needs positive dimension and subdivision count".into(),
        ));
    }
    if !(epsilon0 > 0.0) {
        return Err(Error::InvalidParameter("epsilon0 must be positive".into()));
    }
    let diameter = (dim as f64).sqrt() / k as f64;
    if diameter > epsilon0 {
        return Err(Error::DiameterExceeded {
            diameter,
            epsilon0,
        });
    }
    Ok(GridPartition { k, dim, epsilon0 })
}

impl GridPartition {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    /// Cell diameter sqrt(d)/k.
    pub fn diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / self.k as f64
    }

    pub fn cell_count(&self) -> u64 {
        (self.k as u64).pow(self.dim as u32)
    }

    /// Index tuple of the half-open cell containing `x` in [0,1)^d.
    pub fn cell_index(&self, x: &[f64]) -> Vec<u32> {
        x.iter()
            .map(|&c| {
                let i = (c * self.k as f64).floor() as i64;
                i.clamp(0, self.k as i64 - 1) as u32
            })
            .collect()
    }

    /// Row-major flattening, first axis most significant.
    pub fn flat_index(&self, idx: &[u32]) -> u64 {
        idx.iter()
            .fold(0u64, |acc, &i| acc * self.k as u64 + i as u64)
    }

    pub fn cell_box(&self, idx: &[u32]) -> (Vec<f64>, Vec<f64>) {
        let k = self.k as f64;
        let lo = idx.iter().map(|&i| i as f64 / k).collect();
        let hi = idx.iter().map(|&i| (i + 1) as f64 / k).collect();
        (lo, hi)
    }
}

/// Partition of the phase space used to form itineraries.
#[derive(Debug, Clone, PartialEq)]
pub enum Partition {
    Grid(GridPartition),
    /// Partition of a shift space by the symbol at index 0.
    TimeZero { alphabet: usize },
}

impl Partition {
    pub fn cell_count(&self) -> u64 {
        match self {
            Partition::Grid(g) => g.cell_count(),
            Partition::TimeZero { alphabet } => *alphabet as u64,
        }
    }

    /// Diameter of the largest cell. Two words sharing the symbol at index 0
    /// are at distance at most 2^-1.
    pub fn diameter(&self) -> f64 {
        match self {
            Partition::Grid(g) => g.diameter(),
            Partition::TimeZero { .. } => 0.5,
        }
    }
}

/// Partition plus the half-length of the local leaf segment used to cut
/// unstable cells.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableScheme {
    partition: Partition,
    leaf_halflength: f64,
}

impl UnstableScheme {
    /// The leaf segment (length 2 * half) must strictly exceed the partition
    /// diameter, so a leaf piece is always cut by the cell, not the segment.
    pub fn new(partition: Partition, leaf_halflength: f64) -> Result<Self> {
        let diameter = partition.diameter();
        if !(leaf_halflength > 0.0) || 2.0 * leaf_halflength <= diameter {
            return Err(Error::LeafTooShort {
                segment: 2.0 * leaf_halflength,
                diameter,
            });
        }
        Ok(Self {
            partition,
            leaf_halflength,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn grid(&self) -> Option<&GridPartition> {
        match &self.partition {
            Partition::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn leaf_halflength(&self) -> f64 {
        self.leaf_halflength
    }
}

/// Itinerary name of `point`: the partition cell of each of the first `n`
/// images. Linear models evaluate every image directly from the exact
/// integer power, so the name is as accurate as a single rounding.
pub fn name_of(
    system: &SystemHandle,
    partition: &Partition,
    point: &Point,
    n: usize,
) -> Result<Name> {
    if n == 0 {
        return Err(Error::InvalidParameter("names need n >= 1".into()));
    }
    match (system, partition, point) {
        (SystemHandle::Linear(model), Partition::Grid(grid), Point::Torus(x)) => {
            if grid.dim() != model.dim() {
                return Err(Error::IncompatibleScheme(
                    "grid dimension does not match the model".into(),
                ));
            }
            let mut name = Vec::with_capacity(n);
            for i in 0..n {
                let y = model.apply(x, i as i64)?;
                name.push(grid.flat_index(&grid.cell_index(&y)));
            }
            Ok(name)
        }
        (SystemHandle::Shift(_), Partition::TimeZero { alphabet }, Point::Word(w)) => {
            w.require(0, n as i64 - 1)?;
            let mut name = Vec::with_capacity(n);
            for i in 0..n {
                let s = w.symbol_at(i as i64).expect("window checked") as u64;
                if s >= *alphabet as u64 {
                    return Err(Error::InvalidParameter(format!(
                        "symbol {s} outside alphabet of size {alphabet}"
                    )));
                }
                name.push(s);
            }
            Ok(name)
        }
        _ => Err(Error::IncompatibleScheme(
            "partition kind does not match the system".into(),
        )),
    }
}

/// Normalized Hamming distance between two names of equal length.
pub fn name_distance(a: &Name, b: &Name) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("names must be non-empty".into()));
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Mass of the theta-neighborhood of the partition boundary.
///
/// For the grid under Lebesgue measure this is exactly `1 - (1 - 2 theta k)^d`;
/// time-zero cylinder cells are clopen, so the neighborhood is empty for
/// theta <= 1.
pub fn boundary_mass(partition: &Partition, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter("theta must be positive".into()));
    }
    match partition {
        Partition::Grid(g) => {
            let k = g.k();
            if theta >= 1.0 / (2.0 * k as f64) {
                return Err(Error::ThetaTooLarge { theta, k });
            }
            let per_axis = 1.0 - 2.0 * theta * k as f64;
            Ok(1.0 - per_axis.powi(g.dim() as i32))
        }
        Partition::TimeZero { .. } => {
            if theta > 1.0 {
                return Err(Error::InvalidParameter(
                    "theta must be at most 1 for symbol partitions".into(),
                ));
            }
            Ok(0.0)
        }
    }
}

/// Counting bound for names within normalized Hamming distance `epsilon`.
///
/// Returns the exact sum `sum_{j=0}^{floor(n eps)} C(n,j) * m^j` together
/// with the closed-form bound `exp((eps + diamond) n)` where
/// `diamond = eps log m - eps log eps - (1-eps) log(1-eps)`; the sum never
/// exceeds the bound for `eps <= 1/2`.
pub fn name_ball_bound(n: usize, epsilon: f64, cell_count: u64) -> Result<(BigUint, f64)> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if n == 0 || cell_count == 0 {
        return Err(Error::InvalidParameter(
            "need n >= 1 and a non-empty partition".into(),
        ));
    }
    let raw = n as f64 * epsilon;
    // Snap products that are integers up to f64 rounding, so grid-valued
    // epsilons hit the intended cutoff.
    let j_max = if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as u64
    } else {
        raw.floor() as u64
    };
    let m_big = BigUint::from(cell_count);
    let mut direct_sum = BigUint::from(1u32); // j = 0 term
    let mut binom = BigUint::from(1u32);
    let mut m_pow = BigUint::from(1u32);
    for j in 1..=j_max {
        binom = binom * BigUint::from(n as u64 - j + 1) / BigUint::from(j);
        m_pow *= &m_big;
        direct_sum += &binom * &m_pow;
    }
    let m = cell_count as f64;
    let diamond = epsilon * m.ln() - epsilon * epsilon.ln() - (1.0 - epsilon) * (1.0 - epsilon).ln();
    let exp_bound = ((epsilon + diamond) * n as f64).exp();
    Ok((direct_sum, exp_bound))
}
