//! Linear automorphisms of the d-torus given by unimodular integer matrices.

use crate::error::{Error, Result};
use crate::systems::spectrum::{
    char_poly_and_inverse, mat_mul_i128, splitting, EigenDirection, Splitting, MAX_ENTRY,
};

/// Default bound on |steps| for orbit maps. Chosen so that every i128
/// product in the exact arithmetic stays far from overflow for the matrix
/// sizes and growth rates this crate targets.
pub const DEFAULT_MAX_STEPS: i64 = 40;

/// Scale of the fixed-point representation used by [`LinearToralModel::apply`].
/// Torus coordinates are rounded to multiples of 2^-63 (error < 5.5e-20),
/// after which the matrix action and the wrap to [0,1) are exact.
const DYADIC_BITS: u32 = 63;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearToralModel {
    matrix: Vec<i64>,
    dim: usize,
    splitting: Splitting,
    inverse: Vec<i128>,
    max_steps: i64,
}

impl LinearToralModel {
    /// Build a model from a row-major integer matrix.
    ///
    /// Fails unless |det| = 1, the spectrum has both an expanding and a
    /// contracting part, and every expanding eigenvalue is real and simple.
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter(
                "matrix must be square and non-empty".into(),
            ));
        }
        let mut matrix = Vec::with_capacity(dim * dim);
        for row in rows {
            for &v in row {
                if v.abs() > MAX_ENTRY {
                    return Err(Error::InvalidParameter(format!(
                        "matrix entry {v} exceeds the supported magnitude {MAX_ENTRY}"
                    )));
                }
                matrix.push(v);
            }
        }
        let (coeffs, inverse) = char_poly_and_inverse(&matrix, dim)?;
        let splitting = splitting(&matrix, dim, &coeffs)?;
        Ok(Self {
            matrix,
            dim,
            splitting,
            inverse,
            max_steps: DEFAULT_MAX_STEPS,
        })
    }

    pub fn with_max_steps(mut self, max_steps: i64) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[i64] {
        &self.matrix
    }

    pub fn max_steps(&self) -> i64 {
        self.max_steps
    }

    pub fn unstable(&self) -> &[EigenDirection] {
        &self.splitting.unstable
    }

    pub fn center(&self) -> &[EigenDirection] {
        &self.splitting.center
    }

    pub fn stable(&self) -> &[EigenDirection] {
        &self.splitting.stable
    }

    pub fn unstable_count(&self) -> usize {
        self.splitting.unstable_count
    }

    pub fn center_count(&self) -> usize {
        self.splitting.center_count
    }

    pub fn stable_count(&self) -> usize {
        self.splitting.stable_count
    }

    /// Unit eigenvectors of the expanding directions, strongest first.
    pub fn unstable_dirs(&self) -> Vec<Vec<f64>> {
        self.splitting
            .unstable
            .iter()
            .map(|e| e.direction.clone())
            .collect()
    }

    /// log |eigenvalue| per expanding direction; all strictly positive.
    pub fn unstable_logs(&self) -> Vec<f64> {
        self.splitting
            .unstable
            .iter()
            .map(|e| e.eigenvalue.abs().ln())
            .collect()
    }

    /// Signed expanding eigenvalues.
    pub fn unstable_eigenvalues(&self) -> Vec<f64> {
        self.splitting
            .unstable
            .iter()
            .map(|e| e.eigenvalue)
            .collect()
    }

    /// Exact integer matrix for `steps` applications (negative allowed).
    pub fn integer_power(&self, steps: i64) -> Result<Vec<i128>> {
        if steps.abs() > self.max_steps {
            return Err(Error::StepsOutOfRange(steps, self.max_steps));
        }
        let base: Vec<i128> = if steps >= 0 {
            self.matrix.iter().map(|&v| v as i128).collect()
        } else {
            self.inverse.clone()
        };
        let mut out = vec![0i128; self.dim * self.dim];
        for i in 0..self.dim {
            out[i * self.dim + i] = 1;
        }
        for _ in 0..steps.abs() {
            out = mat_mul_i128(&out, &base, self.dim)
                .map_err(|_| Error::MatrixPowerOverflow(steps))?;
        }
        Ok(out)
    }

    /// Apply the matrix `steps` times and wrap into [0,1)^d.
    ///
    /// Coordinates are processed in exact fixed-point arithmetic so the wrap
    /// loses no precision even when matrix entries are large; only the final
    /// conversion back to f64 rounds.
    pub fn apply(&self, point: &[f64], steps: i64) -> Result<Vec<f64>> {
        let power = self.integer_power(steps)?;
        self.apply_power(&power, point, steps)
    }

    /// Apply a precomputed integer power (hot path for per-level iteration).
    pub fn apply_power(&self, power: &[i128], point: &[f64], steps: i64) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "point has dimension {}, model has {}",
                point.len(),
                self.dim
            )));
        }
        let fixed: Vec<i128> = point.iter().map(|&x| dyadic_fixed(x)).collect();
        let one: i128 = 1 << DYADIC_BITS;
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut acc: i128 = 0;
            for j in 0..self.dim {
                let p = power[i * self.dim + j]
                    .checked_mul(fixed[j])
                    .ok_or(Error::MatrixPowerOverflow(steps))?;
                acc = acc.checked_add(p).ok_or(Error::MatrixPowerOverflow(steps))?;
            }
            let wrapped = acc.rem_euclid(one);
            out.push(wrapped as f64 / one as f64);
        }
        Ok(out)
    }

    /// Point on the unstable leaf through `anchor` at leaf coordinates `t`
    /// (one coordinate per expanding direction), wrapped into [0,1)^d.
    pub fn leaf_chart(&self, anchor: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        if anchor.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "anchor has dimension {}, model has {}",
                anchor.len(),
                self.dim
            )));
        }
        if t.len() != self.splitting.unstable.len() {
            return Err(Error::LengthMismatch(t.len(), self.splitting.unstable.len()));
        }
        let mut out = anchor.to_vec();
        for (tj, dir) in t.iter().zip(&self.splitting.unstable) {
            for (o, u) in out.iter_mut().zip(&dir.direction) {
                *o += tj * u;
            }
        }
        for o in out.iter_mut() {
            *o = wrap_unit(*o);
        }
        Ok(out)
    }

    /// Stable identity string: a pure function of the defining matrix.
    pub fn identity(&self) -> String {
        let rows: Vec<String> = (0..self.dim)
            .map(|i| {
                let row: Vec<String> = (0..self.dim)
                    .map(|j| self.matrix[i * self.dim + j].to_string())
                    .collect();
                format!("[{}]", row.join(","))
            })
            .collect();
        format!("linear:[{}]", rows.join(","))
    }
}

/// Round a coordinate in [0,1) to the nearest multiple of 2^-63, exactly.
fn dyadic_fixed(x: f64) -> i128 {
    debug_assert!((0.0..1.0).contains(&x), "torus coordinate out of range: {x}");
    if x == 0.0 {
        return 0;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & 0x000f_ffff_ffff_ffff;
    let (mant, e2) = if exp == 0 {
        (frac as i128, -1074i64)
    } else {
        ((frac | 0x0010_0000_0000_0000) as i128, exp - 1075)
    };
    let sh = e2 + DYADIC_BITS as i64;
    if sh >= 0 {
        mant << sh
    } else {
        let s = -sh;
        if s >= 127 {
            0
        } else {
            (mant + (1i128 << (s - 1))) >> s
        }
    }
}

/// Wrap a real number into [0,1); the upper endpoint folds to 0.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 || r.is_nan() {
        0.0
    } else {
        r
    }
}

/// Distance to the nearest integer, per coordinate building block of the
/// flat torus metric.
pub fn wrap_offset(x: f64) -> f64 {
    let r = wrap_unit(x);
    r.min(1.0 - r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> LinearToralModel {
        LinearToralModel::new(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn cat_map_log_rate() {
        let m = cat();
        let expected = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert_eq!(m.unstable_logs().len(), 1);
        assert!((m.unstable_logs()[0] - expected).abs() < 1e-14);
        assert!((m.unstable_logs()[0] - 0.9624236501192069).abs() < 1e-12);
    }

    #[test]
    fn identity_matrix_has_no_expansion() {
        let err = LinearToralModel::new(&[vec![1, 0], vec![0, 1]]).unwrap_err();
        assert_eq!(err, Error::NoUnstableDirection);
    }

    #[test]
    fn block_model_splits_three_ways() {
        let m = LinearToralModel::new(&[vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.unstable_count(), 1);
        assert_eq!(m.center_count(), 1);
        assert_eq!(m.stable_count(), 1);
        // Third component of the expanding direction is structurally zero.
        assert_eq!(m.unstable_dirs()[0][2], 0.0);
    }

    #[test]
    fn apply_wraps_once() {
        let m = cat();
        let y = m.apply(&[0.5, 0.5], 1).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15);
        assert!(y[1].abs() < 1e-15);
    }

    #[test]
    fn apply_two_steps_matches_composition() {
        let m = cat();
        let once = m.apply(&m.apply(&[0.1, 0.2], 1).unwrap(), 1).unwrap();
        let twice = m.apply(&[0.1, 0.2], 2).unwrap();
        // A^2 = [[5,3],[3,2]] sends (0.1, 0.2) to (1.1, 0.7), wrapping to (0.1, 0.7).
        assert!((twice[0] - 0.1).abs() < 1e-12);
        assert!((twice[1] - 0.7).abs() < 1e-12);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_negative_steps_inverts() {
        let m = cat();
        let x = [0.3125, 0.8125]; // short dyadic mantissas: round trip is exact
        let y = m.apply(&x, 5).unwrap();
        let back = m.apply(&y, -5).unwrap();
        assert_eq!(back, x.to_vec());
    }

    #[test]
    fn round_trip_on_quantized_points_is_exact_to_twenty_steps() {
        let m = cat();
        let quant = f64::powi(2.0, -24);
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = ((state >> 20) & 0xffffff) as f64 * quant;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let b = ((state >> 20) & 0xffffff) as f64 * quant;
            let x = [a, b];
            for k in [1i64, 7, 13, 20] {
                let fwd = m.apply(&x, k).unwrap();
                let back = m.apply(&fwd, -k).unwrap();
                for (u, v) in back.iter().zip(&x) {
                    let d = wrap_offset(u - v);
                    assert!(d <= 1e-10, "round trip failed at k={k}: {d}");
                }
            }
        }
    }

    #[test]
    fn leaf_chart_moves_along_unstable_direction() {
        let m = cat();
        let u = &m.unstable_dirs()[0];
        let p = m.leaf_chart(&[0.0, 0.0], &[0.1]).unwrap();
        assert!((p[0] - 0.1 * u[0]).abs() < 1e-15);
        assert!((p[1] - 0.1 * u[1]).abs() < 1e-15);
        let q = m.leaf_chart(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn leaf_chart_wraps() {
        let m = cat();
        let p = m.leaf_chart(&[0.95, 0.95], &[0.2]).unwrap();
        assert!(p.iter().all(|&c| (0.0..1.0).contains(&c)));
        let u = &m.unstable_dirs()[0];
        let raw0 = 0.95 + 0.2 * u[0];
        assert!(raw0 > 1.0, "test should exercise the wrap");
        assert!((p[0] - (raw0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn steps_out_of_range_is_rejected() {
        let m = cat();
        let err = m.apply(&[0.1, 0.1], 41).unwrap_err();
        assert!(matches!(err, Error::StepsOutOfRange(41, 40)));
    }

    #[test]
    fn conjugation_identity_on_the_leaf() {
        // f(chart(x, t)) = chart(f(x), lambda * t) on the torus, up to 1e-10.
        let m = cat();
        let lambda = m.unstable_eigenvalues()[0];
        let mut state = 1234567890123456789u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            let x0 = (state >> 11) as f64 / (1u64 << 53) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            let x1 = (state >> 11) as f64 / (1u64 << 53) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            let t = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4;
            let left = m.apply(&m.leaf_chart(&[x0, x1], &[t]).unwrap(), 1).unwrap();
            let right = m
                .leaf_chart(&m.apply(&[x0, x1], 1).unwrap(), &[lambda * t])
                .unwrap();
            let dist: f64 = left
                .iter()
                .zip(&right)
                .map(|(a, b)| wrap_offset(a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist <= 1e-10, "conjugation mismatch: {dist}");
        }
    }
}
