//! Dense complex and real matrices, seeded random ensembles, and the
//! submatrix and scaling constructions the rest of the crate builds on.
//!
//! Complex Gaussians follow the unit-total-variance convention: real and
//! imaginary parts are independent with variance 1/2 each, so `E|z|^2 = 1`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::OccupationState;

/// Key for a reproducible random stream.
///
/// `value` seeds a ChaCha8 generator and `stream` selects one of its 2^64
/// independent streams, so sub-tasks can be handed disjoint streams without
/// coordinating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub stream: u64,
}

impl Seed {
    pub const fn new(value: u64) -> Self {
        Seed { value, stream: 0 }
    }

    pub const fn with_stream(value: u64, stream: u64) -> Self {
        Seed { value, stream }
    }

    /// A child seed on a stream derived from this one and `tag`.
    ///
    /// Distinct tags give distinct streams; deriving is a pure function.
    pub fn derive(self, tag: u64) -> Seed {
        Seed {
            value: self.value,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.value);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws one standard complex Gaussian (`E|z|^2 = 1`).
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Dense row-major complex matrix. Entries are always finite.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    /// Builds a matrix from real rows; panics on ragged input.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_fn(rows.len(), cols, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|l| self.get(i, l) * other.get(l, j)).sum()
        }))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Gathers the given rows and columns (repeats allowed) into a new matrix.
    pub fn select(&self, row_idx: &[usize], col_idx: &[usize]) -> Self {
        Self::from_fn(row_idx.len(), col_idx.len(), |i, j| self.get(row_idx[i], col_idx[j]))
    }

    /// Top-left `rows x cols` block.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self.get(row0 + i, col0 + j))
    }

    pub fn hstack(&self, right: &ComplexMatrix) -> Result<Self> {
        if self.rows != right.rows {
            return Err(Error::Shape(format!("hstack of {} rows with {} rows", self.rows, right.rows)));
        }
        Ok(Self::from_fn(self.rows, self.cols + right.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                right.get(i, j - self.cols)
            }
        }))
    }

    pub fn vstack(&self, below: &ComplexMatrix) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::Shape(format!("vstack of {} cols with {} cols", self.cols, below.cols)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(ComplexMatrix { rows: self.rows + below.rows, cols: self.cols, data })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows,
            cols: self.cols,
            re: self.data.iter().map(|z| z.re).collect(),
            im: self.data.iter().map(|z| z.im).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(serde::de::Error::custom(format!(
                "re has {} entries but im has {}",
                raw.re.len(),
                raw.im.len()
            )));
        }
        let data = raw.re.iter().zip(&raw.im).map(|(&re, &im)| Complex64::new(re, im)).collect();
        ComplexMatrix::new(raw.rows, raw.cols, data).map_err(serde::de::Error::custom)
    }
}

/// `rows x cols` matrix of i.i.d. standard complex Gaussians.
pub fn sample_gaussian_matrix(rows: usize, cols: usize, seed: Seed) -> ComplexMatrix {
    let mut rng = seed.rng();
    let data = (0..rows * cols).map(|_| complex_gaussian(&mut rng)).collect();
    ComplexMatrix { rows, cols, data }
}

/// Haar-distributed `m x m` unitary.
///
/// Householder QR of a complex Gaussian matrix, then each column of `Q` is
/// multiplied by the phase of the matching diagonal entry of `R`, which makes
/// the decomposition unique and the result exactly Haar.
pub fn sample_haar_unitary(m: usize, seed: Seed) -> ComplexMatrix {
    let g = sample_gaussian_matrix(m, m, seed);
    let (q, r_diag) = householder_qr(&g);
    let phases: Vec<Complex64> = r_diag
        .iter()
        .map(|&r| if r.norm() > 0.0 { r / r.norm() } else { Complex64::new(1.0, 0.0) })
        .collect();
    ComplexMatrix::from_fn(m, m, |i, j| q.get(i, j) * phases[j])
}

/// Returns `Q` and the diagonal of `R` for a square complex matrix.
fn householder_qr(a: &ComplexMatrix) -> (ComplexMatrix, Vec<Complex64>) {
    let n = a.rows;
    let mut r = a.data.clone();
    // Q accumulated as Q^H, then adjointed at the end.
    let mut qh = ComplexMatrix::identity(n).data;
    let zero = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let norm: f64 = (j..n).map(|i| r[i * n + j].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[j * n + j];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (j..n).map(|i| r[i * n + j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H = I - 2 v v^H / (v^H v), applied from the left to R and Q^H.
        for target in [&mut r, &mut qh] {
            for col in 0..n {
                let dot: Complex64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * target[(j + t) * n + col]).sum();
                let f = dot * (2.0 / vnorm2);
                if f == zero {
                    continue;
                }
                for (t, vt) in v.iter().enumerate() {
                    target[(j + t) * n + col] -= vt * f;
                }
            }
        }
    }
    let diag = (0..n).map(|i| r[i * n + i]).collect();
    let qh = ComplexMatrix { rows: n, cols: n, data: qh };
    (qh.adjoint(), diag)
}

/// `U_{S,T}`: `t_i` copies of row `i`, then `s_j` copies of column `j`.
///
/// The result is `sum(T) x sum(S)`.
pub fn submatrix_st(u: &ComplexMatrix, s: &OccupationState, t: &OccupationState) -> Result<ComplexMatrix> {
    if s.modes() > u.cols() || t.modes() > u.rows() {
        return Err(Error::Shape(format!(
            "occupation states over {} and {} modes do not fit a {}x{} matrix",
            s.modes(),
            t.modes(),
            u.rows(),
            u.cols()
        )));
    }
    Ok(u.select(&t.mode_indices(), &s.mode_indices()))
}

/// Multiplies the last `k` columns by `c`; the input is left untouched.
pub fn scale_right_columns(a: &ComplexMatrix, k: usize, c: f64) -> Result<ComplexMatrix> {
    if k > a.cols() {
        return Err(Error::InvalidArgument(format!("cannot scale {k} columns of a {}-column matrix", a.cols())));
    }
    let first = a.cols() - k;
    Ok(ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| if j >= first { a.get(i, j) * c } else { a.get(i, j) }))
}

/// Multiplies the last `k` rows by `c`.
pub fn scale_bottom_rows(a: &ComplexMatrix, k: usize, c: f64) -> Result<ComplexMatrix> {
    if k > a.rows() {
        return Err(Error::InvalidArgument(format!("cannot scale {k} rows of a {}-row matrix", a.rows())));
    }
    let first = a.rows() - k;
    Ok(ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| if i >= first { a.get(i, j) * c } else { a.get(i, j) }))
}

/// Scales the last `k` rows and the last `k` columns by `c`, so the corner
/// block picks up `c^2`.
pub fn scale_border(a: &ComplexMatrix, k: usize, c: f64) -> Result<ComplexMatrix> {
    scale_bottom_rows(&scale_right_columns(a, k, c)?, k, c)
}

/// Dense row-major real matrix, used for the interpolation systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RealMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn lu(&self) -> Result<Lu> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!("LU needs a square matrix, got {}x{}", self.rows, self.cols)));
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&a, &b| lu[a * n + k].abs().total_cmp(&lu[b * n + k].abs()))
                .expect("non-empty pivot range");
            if lu[p * n + k] == 0.0 {
                return Err(Error::IllConditioned { condition: f64::INFINITY, limit: MAX_CONDITION });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(Lu { n, lu, perm, sign })
    }

    /// Solves `self * x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows {
            return Err(Error::Shape(format!("right-hand side has {} entries, expected {}", b.len(), self.rows)));
        }
        Ok(self.lu()?.solve(b))
    }

    pub fn inverse(&self) -> Result<RealMatrix> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        Ok(RealMatrix { rows: n, cols: n, data: inv })
    }

    pub fn determinant(&self) -> Result<f64> {
        match self.lu() {
            Ok(lu) => Ok(lu.sign * (0..lu.n).map(|i| lu.lu[i * lu.n + i]).product::<f64>()),
            Err(Error::IllConditioned { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// `||A||_inf * ||A^-1||_inf`, computed from an explicit inverse.
    pub fn condition_inf(&self) -> Result<f64> {
        Ok(self.norm_inf() * self.inverse()?.norm_inf())
    }

    /// Least-squares solution of an overdetermined system via Householder QR.
    pub fn least_squares(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = (self.rows, self.cols);
        if b.len() != m {
            return Err(Error::Shape(format!("right-hand side has {} entries, expected {m}", b.len())));
        }
        if m < n {
            return Err(Error::Shape(format!("least squares needs rows >= cols, got {m}x{n}")));
        }
        let mut a = self.data.clone();
        let mut y = b.to_vec();
        for k in 0..n {
            let norm = (k..m).map(|i| a[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::IllConditioned { condition: f64::INFINITY, limit: MAX_CONDITION });
            }
            let alpha = if a[k * n + k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..m).map(|i| a[i * n + k]).collect();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            for j in k..n {
                let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * a[(k + t) * n + j]).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vt) in v.iter().enumerate() {
                    a[(k + t) * n + j] -= f * vt;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * y[k + t]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vt) in v.iter().enumerate() {
                y[k + t] -= f * vt;
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
            x[i] = (y[i] - s) / a[i * n + i];
        }
        Ok(x)
    }
}

/// Largest condition number the interpolation solve accepts.
pub const MAX_CONDITION: f64 = 1e14;

struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}
