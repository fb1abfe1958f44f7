//! Exact spectral data for small integer matrices.
//!
//! The characteristic polynomial is computed with exact integer arithmetic
//! (Faddeev-LeVerrier), eigenvalue seeds come from a dense solver, and real
//! seeds are Newton-polished on the exact polynomial. This keeps expanding
//! rates accurate to machine precision independent of the seed quality.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Modulus tolerance separating stable / center / unstable eigenvalues.
pub const MODULUS_TOL: f64 = 1e-9;

/// Largest admissible |entry| for model matrices; keeps every i128 product
/// in the power and polynomial arithmetic far from overflow.
pub const MAX_ENTRY: i64 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDirection {
    /// Signed eigenvalue (all stored directions have real simple eigenvalues).
    pub eigenvalue: f64,
    /// Unit eigenvector, first component of magnitude > 1e-9 made positive.
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub unstable: Vec<EigenDirection>,
    pub center: Vec<EigenDirection>,
    pub stable: Vec<EigenDirection>,
    /// Eigenvalue counts by modulus including complex ones (real directions
    /// may be fewer for center/stable blocks).
    pub unstable_count: usize,
    pub center_count: usize,
    pub stable_count: usize,
}

pub fn mat_mul_i128(a: &[i128], b: &[i128], d: usize) -> Result<Vec<i128>> {
    let mut out = vec![0i128; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc: i128 = 0;
            for l in 0..d {
                let p = a[i * d + l]
                    .checked_mul(b[l * d + j])
                    .ok_or(Error::MatrixPowerOverflow(0))?;
                acc = acc.checked_add(p).ok_or(Error::MatrixPowerOverflow(0))?;
            }
            out[i * d + j] = acc;
        }
    }
    Ok(out)
}

fn identity_i128(d: usize) -> Vec<i128> {
    let mut m = vec![0i128; d * d];
    for i in 0..d {
        m[i * d + i] = 1;
    }
    m
}

/// Exact characteristic polynomial and integer inverse.
///
/// Returns `(coeffs, inverse)` where `coeffs[k]` multiplies `t^k` in
/// `p(t) = det(tI - A)` and `inverse` satisfies `A * inverse = det-sign * ...`,
/// i.e. it is the exact integer inverse (valid only when `|det| = 1`).
pub fn char_poly_and_inverse(matrix: &[i64], d: usize) -> Result<(Vec<i128>, Vec<i128>)> {
    let a: Vec<i128> = matrix.iter().map(|&v| v as i128).collect();
    let mut coeffs = vec![0i128; d + 1];
    coeffs[d] = 1;
    let mut n = identity_i128(d);
    let mut n_prev = n.clone();
    for k in 1..=d {
        n_prev = n.clone();
        let m = mat_mul_i128(&a, &n, d)?;
        let tr: i128 = (0..d).map(|i| m[i * d + i]).sum();
        debug_assert_eq!(tr % (k as i128), 0, "Faddeev-LeVerrier trace divisibility");
        let c = -tr / (k as i128);
        coeffs[d - k] = c;
        n = m;
        for i in 0..d {
            n[i * d + i] += c;
        }
    }
    // A * N_{d-1} = -c_0 I, so with |c_0| = 1 the integer inverse is -c_0 * N_{d-1}.
    let c0 = coeffs[0];
    let det = if d.is_multiple_of(2) { c0 } else { -c0 };
    if det.abs() != 1 {
        return Err(Error::NotUnimodular(det.abs()));
    }
    let inv: Vec<i128> = n_prev.iter().map(|&v| -c0 * v).collect();
    Ok((coeffs, inv))
}

fn poly_eval(coeffs: &[i128], t: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * t + c as f64;
    }
    acc
}

fn poly_deriv_eval(coeffs: &[i128], t: f64) -> f64 {
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
        acc = acc * t + (k as f64) * c as f64;
    }
    acc
}

fn newton_polish(coeffs: &[i128], seed: f64) -> Option<f64> {
    let mut t = seed;
    for _ in 0..50 {
        let p = poly_eval(coeffs, t);
        let dp = poly_deriv_eval(coeffs, t);
        if dp.abs() < 1e-12 * (1.0 + t.abs()) {
            return None; // (near-)repeated root
        }
        let step = p / dp;
        t -= step;
        if step.abs() <= 1e-16 * (1.0 + t.abs()) {
            break;
        }
    }
    let scale: f64 = coeffs.iter().map(|&c| (c as f64).abs()).sum::<f64>() * (1.0 + t.abs());
    if poly_eval(coeffs, t).abs() <= 1e-10 * scale.max(1.0) {
        Some(t)
    } else {
        None
    }
}

/// Unit null vector of `A - lambda I` via SVD; accurate to machine precision
/// for simple eigenvalues of small integer matrices.
fn eigenvector(matrix: &[i64], d: usize, lambda: f64) -> Result<Vec<f64>> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = matrix[i * d + j] as f64;
        }
        m[(i, i)] -= lambda;
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::UnsupportedSpectrum("SVD failed".into()))?;
    let mut v: Vec<f64> = (0..d).map(|j| v_t[(d - 1, j)]).collect();
    // Components that vanish structurally (block models) come out as noise;
    // snap them so leaf geometry can skip the axis entirely.
    for c in v.iter_mut() {
        if c.abs() < 1e-13 {
            *c = 0.0;
        }
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 0.5 {
        return Err(Error::UnsupportedSpectrum(
            "null space of A - lambda I is degenerate".into(),
        ));
    }
    for c in v.iter_mut() {
        *c /= norm;
    }
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-9) {
        if *first < 0.0 {
            for c in v.iter_mut() {
                *c = -*c;
            }
        }
    }
    // Residual check: |A v - lambda v| must be at machine scale.
    let mut residual = 0.0f64;
    for i in 0..d {
        let mut acc = -lambda * v[i];
        for j in 0..d {
            acc += matrix[i * d + j] as f64 * v[j];
        }
        residual += acc * acc;
    }
    if residual.sqrt() > 1e-10 * (1.0 + lambda.abs()) {
        return Err(Error::UnsupportedSpectrum(format!(
            "eigenvector residual {:.3e} too large for eigenvalue {lambda}",
            residual.sqrt()
        )));
    }
    Ok(v)
}

/// Classify the spectrum of an integer matrix into stable / center / unstable
/// parts and attach real eigen-directions where they exist.
///
/// Requirements enforced here: every eigenvalue of modulus > 1 must be real
/// and simple (complex or repeated expanding spectrum is unsupported).
pub fn splitting(matrix: &[i64], d: usize, coeffs: &[i128]) -> Result<Splitting> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = matrix[i * d + j] as f64;
        }
    }
    let mut seeds: Vec<(f64, f64)> = m
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    seeds.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    let mut out = Splitting {
        unstable: Vec::new(),
        center: Vec::new(),
        stable: Vec::new(),
        unstable_count: 0,
        center_count: 0,
        stable_count: 0,
    };
    let mut polished_real: Vec<f64> = Vec::new();
    for &(re, im) in &seeds {
        let modulus = (re * re + im * im).sqrt();
        let looks_real = im.abs() <= 1e-6 * modulus.max(1.0);
        let real_root = if looks_real {
            newton_polish(coeffs, re)
        } else {
            None
        };
        match real_root {
            Some(lambda) => {
                let modulus = lambda.abs();
                let class = classify(modulus);
                if class == Class::Unstable
                    && polished_real
                        .iter()
                        .any(|&prev| (prev - lambda).abs() <= 1e-8 * modulus.max(1.0))
                {
                    return Err(Error::UnsupportedSpectrum(format!(
                        "repeated expanding eigenvalue near {lambda}"
                    )));
                }
                let duplicate = polished_real
                    .iter()
                    .any(|&prev| (prev - lambda).abs() <= 1e-8 * modulus.max(1.0));
                polished_real.push(lambda);
                match class {
                    Class::Unstable => {
                        out.unstable_count += 1;
                        out.unstable.push(EigenDirection {
                            eigenvalue: lambda,
                            direction: eigenvector(matrix, d, lambda)?,
                        });
                    }
                    Class::Center => {
                        out.center_count += 1;
                        if !duplicate {
                            if let Ok(v) = eigenvector(matrix, d, lambda) {
                                out.center.push(EigenDirection {
                                    eigenvalue: lambda,
                                    direction: v,
                                });
                            }
                        }
                    }
                    Class::Stable => {
                        out.stable_count += 1;
                        if !duplicate {
                            if let Ok(v) = eigenvector(matrix, d, lambda) {
                                out.stable.push(EigenDirection {
                                    eigenvalue: lambda,
                                    direction: v,
                                });
                            }
                        }
                    }
                }
            }
            None => {
                // Complex (or numerically unresolvable) eigenvalue.
                match classify(modulus) {
                    Class::Unstable => {
                        return Err(Error::UnsupportedSpectrum(format!(
                            "complex or repeated expanding eigenvalue near {re}{im:+}i"
                        )));
                    }
                    Class::Center => out.center_count += 1,
                    Class::Stable => out.stable_count += 1,
                }
            }
        }
    }
    // Deterministic order: strongest expansion first.
    out.unstable
        .sort_by(|a, b| b.eigenvalue.abs().partial_cmp(&a.eigenvalue.abs()).unwrap());
    if out.unstable_count == 0 {
        return Err(Error::NoUnstableDirection);
    }
    if out.stable_count == 0 {
        return Err(Error::NoStableDirection);
    }
    Ok(out)
}

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Stable,
    Center,
    Unstable,
}

fn classify(modulus: f64) -> Class {
    if modulus > 1.0 + MODULUS_TOL {
        Class::Unstable
    } else if modulus < 1.0 - MODULUS_TOL {
        Class::Stable
    } else {
        Class::Center
    }
}
