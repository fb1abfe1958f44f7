//! Full shifts on finite alphabets with Bernoulli or Markov measures.
//!
//! Points are finite windows of bi-infinite words; the shift moves the
//! window. All mass computations on shifts reduce to cylinder algebra, so a
//! window is only ever required to determine the coordinates an operation
//! actually reads.

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// Finite window of a bi-infinite word: symbols at indices
/// `start, start+1, ..., start + len - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordWindow {
    start: i64,
    symbols: Vec<u8>,
}

impl WordWindow {
    pub fn new(start: i64, symbols: Vec<u8>) -> Self {
        Self { start, symbols }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.symbols.len() as i64 - 1
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn symbol_at(&self, index: i64) -> Option<u8> {
        if index < self.start || index > self.end() {
            None
        } else {
            Some(self.symbols[(index - self.start) as usize])
        }
    }

    /// Require the window to determine indices `lo..=hi`.
    pub fn require(&self, lo: i64, hi: i64) -> Result<()> {
        if self.start <= lo && self.end() >= hi && !self.symbols.is_empty() {
            Ok(())
        } else {
            Err(Error::WindowTooShort {
                need_lo: lo,
                need_hi: hi,
                have_lo: self.start,
                have_hi: self.end(),
            })
        }
    }

    /// Window describing the shifted word: if `self` determines x on
    /// [a, b], the result determines sigma^steps(x) on [a - steps, b - steps].
    pub fn shifted(&self, steps: i64) -> Self {
        Self {
            start: self.start - steps,
            symbols: self.symbols.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShiftMeasureKind {
    /// Product measure with the given symbol probabilities.
    Bernoulli(Vec<f64>),
    /// Stationary Markov chain: row-stochastic transition matrix and its
    /// stationary distribution.
    Markov { p: Vec<Vec<f64>>, pi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftModel {
    alphabet: usize,
    measure: ShiftMeasureKind,
}

impl ShiftModel {
    pub fn bernoulli(probs: Vec<f64>) -> Result<Self> {
        validate_prob_vector(&probs)?;
        if probs.len() < 2 {
            return Err(Error::InvalidStochastic(
                "alphabet must have at least 2 symbols".into(),
            ));
        }
        Ok(Self {
            alphabet: probs.len(),
            measure: ShiftMeasureKind::Bernoulli(probs),
        })
    }

    /// Markov shift; the stationary vector is computed by power iteration
    /// and validated against `pi P = pi`.
    pub fn markov(p: Vec<Vec<f64>>) -> Result<Self> {
        let pi = stationary_vector(&p)?;
        Self::markov_with_pi(p, pi)
    }

    pub fn markov_with_pi(p: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self> {
        let m = p.len();
        if m < 2 {
            return Err(Error::InvalidStochastic(
                "alphabet must have at least 2 symbols".into(),
            ));
        }
        if p.iter().any(|row| row.len() != m) || pi.len() != m {
            return Err(Error::InvalidStochastic(
                "transition matrix must be square and match pi".into(),
            ));
        }
        for row in &p {
            validate_prob_vector(row)?;
        }
        validate_prob_vector(&pi)?;
        for j in 0..m {
            let image: f64 = (0..m).map(|i| pi[i] * p[i][j]).sum();
            if (image - pi[j]).abs() > STATIONARY_TOL {
                return Err(Error::InvalidStochastic(format!(
                    "pi is not stationary: component {j} maps to {image}, expected {}",
                    pi[j]
                )));
            }
        }
        Ok(Self {
            alphabet: m,
            measure: ShiftMeasureKind::Markov { p, pi },
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn measure(&self) -> &ShiftMeasureKind {
        &self.measure
    }

    /// Marginal distribution of a single coordinate.
    pub fn symbol_distribution(&self) -> &[f64] {
        match &self.measure {
            ShiftMeasureKind::Bernoulli(p) => p,
            ShiftMeasureKind::Markov { pi, .. } => pi,
        }
    }

    /// Entropy of the measure in nats: sum -p log p for Bernoulli, the
    /// standard transition-weighted sum for Markov.
    pub fn entropy(&self) -> f64 {
        match &self.measure {
            ShiftMeasureKind::Bernoulli(p) => p.iter().map(|&x| xlogx(x)).sum::<f64>(),
            ShiftMeasureKind::Markov { p, pi } => pi
                .iter()
                .zip(p)
                .map(|(&w, row)| w * row.iter().map(|&x| xlogx(x)).sum::<f64>())
                .sum(),
        }
    }

    pub fn apply(&self, window: &WordWindow, steps: i64) -> WordWindow {
        window.shifted(steps)
    }

    pub fn identity(&self) -> String {
        match &self.measure {
            ShiftMeasureKind::Bernoulli(p) => {
                let probs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                format!("shift:m={}:bernoulli[{}]", self.alphabet, probs.join(","))
            }
            ShiftMeasureKind::Markov { p, .. } => {
                let rows: Vec<String> = p
                    .iter()
                    .map(|row| {
                        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                        format!("[{}]", cells.join(","))
                    })
                    .collect();
                format!("shift:m={}:markov[{}]", self.alphabet, rows.join(","))
            }
        }
    }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

fn validate_prob_vector(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite()) {
        return Err(Error::InvalidStochastic(
            "probabilities must lie in [0,1]".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidStochastic(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn stationary_vector(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = p.len();
    if m == 0 || p.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidStochastic(
            "transition matrix must be square and non-empty".into(),
        ));
    }
    let mut pi = vec![1.0 / m as f64; m];
    for _ in 0..10_000 {
        let mut next = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                next[j] += pi[i] * p[i][j];
            }
        }
        let total: f64 = next.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidStochastic(
                "transition matrix leaks mass".into(),
            ));
        }
        for v in next.iter_mut() {
            *v /= total;
        }
        let delta: f64 = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(pi)
}
