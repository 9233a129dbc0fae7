//! Exact permanents.
//!
//! [`permanent`] is Glynn's formula walked in Gray-code order: 2^(n-1) terms,
//! each reached from the previous one by flipping a single sign, so every
//! step costs one row update plus one n-fold product. [`permanent_naive`] sums
//! the n! permutation products directly and exists only as an independent
//! check.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Largest side accepted by the Gray-code kernel.
pub const MAX_GRAY_SIDE: usize = 20;
/// Largest side accepted by the permutation-sum oracle.
pub const MAX_NAIVE_SIDE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermanentValue {
    pub re: f64,
    pub im: f64,
    pub abs_squared: f64,
}

impl PermanentValue {
    pub fn from_complex(value: Complex64) -> Self {
        PermanentValue { re: value.re, im: value.im, abs_squared: value.norm_sqr() }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn check_square(m: &ComplexMatrix, max: usize) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::Shape(format!("permanent needs a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    if n == 0 || n > max {
        return Err(Error::InvalidArgument(format!("permanent side must be in 1..={max}, got {n}")));
    }
    Ok(n)
}

/// Permanent via Glynn's formula with Gray-code updates. Deterministic
/// summation order.
pub fn permanent(m: &ComplexMatrix) -> Result<PermanentValue> {
    let n = check_square(m, MAX_GRAY_SIDE)?;
    Ok(PermanentValue::from_complex(glynn_unchecked(m, n)))
}

/// The complex permanent without the wrapper type; used by inner loops that
/// already know the shape is valid.
pub(crate) fn glynn_unchecked(m: &ComplexMatrix, n: usize) -> Complex64 {
    let terms = 1u64 << (n - 1);
    glynn_segment(m, n, 0, terms) / terms as f64
}

/// Same value as [`permanent`], with the Gray-code walk split into contiguous
/// segments that run in parallel and are merged by pairwise summation.
/// Results may differ from the sequential kernel in the last few bits.
pub fn permanent_parallel(m: &ComplexMatrix, segments: usize) -> Result<PermanentValue> {
    let n = check_square(m, MAX_GRAY_SIDE)?;
    let terms = 1u64 << (n - 1);
    let segments = (segments.max(1) as u64).min(terms);
    let bounds: Vec<(u64, u64)> =
        (0..segments).map(|s| (s * terms / segments, (s + 1) * terms / segments)).collect();
    let partial: Vec<Complex64> = bounds.par_iter().map(|&(lo, hi)| glynn_segment(m, n, lo, hi)).collect();
    Ok(PermanentValue::from_complex(pairwise_sum(&partial) / terms as f64))
}

fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        len => {
            let (a, b) = xs.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Sum of the signed Glynn terms for Gray-code steps `lo..hi` (unnormalized).
///
/// Step `g` uses sign vector `delta` with `delta_0 = +1` and `delta_{b+1} = -1`
/// iff bit `b` of `g ^ (g >> 1)` is set.
fn glynn_segment(m: &ComplexMatrix, n: usize, lo: u64, hi: u64) -> Complex64 {
    let gray = lo ^ (lo >> 1);
    let mut negative = vec![false; n];
    let mut sums = vec![Complex64::new(0.0, 0.0); n];
    for (i, neg) in negative.iter_mut().enumerate() {
        *neg = i > 0 && (gray >> (i - 1)) & 1 == 1;
        for (j, s) in sums.iter_mut().enumerate() {
            if *neg {
                *s -= m.get(i, j);
            } else {
                *s += m.get(i, j);
            }
        }
    }
    let mut sign = if gray.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    let mut total = Complex64::new(0.0, 0.0);
    let mut g = lo;
    loop {
        let prod: Complex64 = sums.iter().product();
        total += prod * sign;
        g += 1;
        if g >= hi {
            break;
        }
        let row = g.trailing_zeros() as usize + 1;
        let flip = if negative[row] { 2.0 } else { -2.0 };
        negative[row] = !negative[row];
        for (s, &x) in sums.iter_mut().zip(m.row(row)) {
            *s += x * flip;
        }
        sign = -sign;
    }
    total
}

/// Permanent as the plain sum over all n! permutations.
pub fn permanent_naive(m: &ComplexMatrix) -> Result<PermanentValue> {
    let n = check_square(m, MAX_NAIVE_SIDE)?;
    let mut used = vec![false; n];
    Ok(PermanentValue::from_complex(expand(m, 0, &mut used, Complex64::new(1.0, 0.0))))
}

fn expand(m: &ComplexMatrix, row: usize, used: &mut [bool], prefix: Complex64) -> Complex64 {
    if row == used.len() {
        return prefix;
    }
    let mut total = Complex64::new(0.0, 0.0);
    for col in 0..used.len() {
        if !used[col] {
            used[col] = true;
            total += expand(m, row + 1, used, prefix * m.get(row, col));
            used[col] = false;
        }
    }
    total
}
