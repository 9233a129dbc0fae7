//! Lossy probability functionals.
//!
//! All of them are averages of `|Per|^2` over square submatrices:
//!
//! * input loss: `n x (n+k)` matrix, average over column subsets of size `n`;
//! * dark counts: `(n+k) x n` matrix, average over row subsets of size `n`;
//! * shuffling (exact `j`): square matrix of side `N`, average over every
//!   pair of row and column subsets of size `N - j`;
//! * shuffle mixture: `sum_j p_j` times the exact-`j` shuffle value.
//!
//! Subsets are visited in lexicographic order so sums are reproducible.
//! No `n!` normalization is applied anywhere in this module.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, ComplexMatrix, Seed};
use crate::permanent::{glynn_unchecked, MAX_GRAY_SIDE};
use crate::states::{binomial, check_cap, combinations};

/// Largest number of submatrix permanents a single functional will evaluate.
pub const SUBMATRIX_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    InputLoss,
    DarkCounts,
    ShuffleExact,
    ShuffleMixture,
}

/// Which lossy functional applies, with its photon-count parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture_probs: Option<Vec<f64>>,
}

impl LossModel {
    pub fn input_loss(k: usize) -> Self {
        LossModel { kind: LossKind::InputLoss, k, mixture_probs: None }
    }

    pub fn dark_counts(k: usize) -> Self {
        LossModel { kind: LossKind::DarkCounts, k, mixture_probs: None }
    }

    pub fn shuffle_exact(k: usize) -> Self {
        LossModel { kind: LossKind::ShuffleExact, k, mixture_probs: None }
    }

    /// Mixture over `j = 0..=k` shuffles with probabilities `probs[j]`;
    /// `k` is `probs.len() - 1`.
    pub fn shuffle_mixture(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("shuffle mixture needs at least p_0".into()));
        }
        let model = LossModel { kind: LossKind::ShuffleMixture, k: probs.len() - 1, mixture_probs: Some(probs) };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.mixture_probs) {
            (LossKind::ShuffleMixture, Some(p)) => {
                if p.len() != self.k + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "mixture with k={} needs {} probabilities, got {}",
                        self.k,
                        self.k + 1,
                        p.len()
                    )));
                }
                if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidArgument("mixture probabilities must be non-negative".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("mixture probabilities sum to {total}, not 1")));
                }
                if p[self.k] <= 0.0 {
                    return Err(Error::InvalidArgument("mixture needs p_k > 0".into()));
                }
                Ok(())
            }
            (LossKind::ShuffleMixture, None) => {
                Err(Error::InvalidArgument("shuffle mixture needs probabilities".into()))
            }
            (_, Some(_)) => Err(Error::InvalidArgument("probabilities only apply to the shuffle mixture".into())),
            (_, None) => Ok(()),
        }
    }

    /// Weight of the `|Per(X)|^2` term: `p_k` for the mixture, 1 otherwise.
    pub fn leading_weight(&self) -> f64 {
        match &self.mixture_probs {
            Some(p) if self.kind == LossKind::ShuffleMixture => p[self.k],
            _ => 1.0,
        }
    }

    /// Number of submatrices averaged for the exact-`k` functional
    /// (the `|Per(X)|^2` coefficient is its reciprocal).
    pub fn normalization(&self, n: usize) -> f64 {
        let c = binomial(n + self.k, self.k) as f64;
        match self.kind {
            LossKind::InputLoss | LossKind::DarkCounts => c,
            LossKind::ShuffleExact | LossKind::ShuffleMixture => c * c,
        }
    }

    /// Degree in `c^2` of the functional evaluated on a `c`-scaled embedding.
    pub fn polynomial_degree(&self) -> usize {
        match self.kind {
            LossKind::InputLoss | LossKind::DarkCounts => self.k,
            LossKind::ShuffleExact | LossKind::ShuffleMixture => 2 * self.k,
        }
    }

    /// `(rows, cols)` of the matrix the functional takes, for `n` detected photons.
    pub fn matrix_shape(&self, n: usize) -> (usize, usize) {
        match self.kind {
            LossKind::InputLoss => (n, n + self.k),
            LossKind::DarkCounts => (n + self.k, n),
            LossKind::ShuffleExact | LossKind::ShuffleMixture => (n + self.k, n + self.k),
        }
    }

    /// Number of detected photons `n` implied by a matrix shape.
    pub fn photons_for_shape(&self, rows: usize, cols: usize) -> Result<usize> {
        let n = match self.kind {
            LossKind::InputLoss => rows,
            LossKind::DarkCounts => cols,
            LossKind::ShuffleExact | LossKind::ShuffleMixture => rows.saturating_sub(self.k),
        };
        if n == 0 || self.matrix_shape(n) != (rows, cols) {
            return Err(Error::Shape(format!("{rows}x{cols} matrix does not fit {:?} with k={}", self.kind, self.k)));
        }
        Ok(n)
    }

    /// Evaluates the model's functional on `a`.
    pub fn evaluate(&self, a: &ComplexMatrix) -> Result<f64> {
        self.validate()?;
        self.photons_for_shape(a.rows(), a.cols())?;
        match self.kind {
            LossKind::InputLoss => phi_input_loss(a),
            LossKind::DarkCounts => phi_dark(a),
            LossKind::ShuffleExact => phi_shuffle_exact(a, self.k),
            LossKind::ShuffleMixture => phi_shuffle_mixture(a, self),
        }
    }
}

/// Compensated running sum, fixed order.
#[derive(Default)]
struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || side > MAX_GRAY_SIDE {
        return Err(Error::InvalidArgument(format!("submatrix side must be in 1..={MAX_GRAY_SIDE}, got {side}")));
    }
    Ok(())
}

/// Average `|Per|^2` over every `n x n` column-subset submatrix of an
/// `n x (n+k)` matrix.
pub fn phi_input_loss(a: &ComplexMatrix) -> Result<f64> {
    let (n, total) = (a.rows(), a.cols());
    if n > total {
        return Err(Error::Shape(format!("input-loss functional needs rows <= cols, got {n}x{total}")));
    }
    check_side(n)?;
    let count = binomial(total, n);
    check_cap("column subsets", count, SUBMATRIX_CAP)?;
    let rows: Vec<usize> = (0..n).collect();
    let mut acc = Accumulator::default();
    for cols in combinations(total, n) {
        acc.add(glynn_unchecked(&a.select(&rows, &cols), n).norm_sqr());
    }
    Ok(acc.total() / count as f64)
}

/// Average `|Per|^2` over every `n x n` row-subset submatrix of an
/// `(n+k) x n` matrix.
pub fn phi_dark(a: &ComplexMatrix) -> Result<f64> {
    let (total, n) = (a.rows(), a.cols());
    if total < n {
        return Err(Error::Shape(format!("dark-count functional needs rows >= cols, got {total}x{n}")));
    }
    check_side(n)?;
    let count = binomial(total, n);
    check_cap("row subsets", count, SUBMATRIX_CAP)?;
    let cols: Vec<usize> = (0..n).collect();
    let mut acc = Accumulator::default();
    for rows in combinations(total, n) {
        acc.add(glynn_unchecked(&a.select(&rows, &cols), n).norm_sqr());
    }
    Ok(acc.total() / count as f64)
}

/// Average `|Per|^2` over all `(N-j) x (N-j)` submatrices of a square
/// matrix of side `N`, choosing rows and columns independently.
pub fn phi_shuffle_exact(a: &ComplexMatrix, j: usize) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Shape(format!("shuffle functional needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let side = a.rows();
    if j >= side {
        return Err(Error::InvalidArgument(format!("cannot drop {j} of {side} rows and columns")));
    }
    let size = side - j;
    check_side(size)?;
    let per_axis = binomial(side, size);
    let count = per_axis.saturating_mul(per_axis);
    check_cap("row/column subset pairs", count, SUBMATRIX_CAP)?;
    let subsets: Vec<Vec<usize>> = combinations(side, size).collect();
    let mut acc = Accumulator::default();
    for rows in &subsets {
        for cols in &subsets {
            acc.add(glynn_unchecked(&a.select(rows, cols), size).norm_sqr());
        }
    }
    Ok(acc.total() / count as f64)
}

/// `sum_{j=0..=k} p_j * phi_shuffle_exact(a, j)`.
pub fn phi_shuffle_mixture(a: &ComplexMatrix, model: &LossModel) -> Result<f64> {
    if model.kind != LossKind::ShuffleMixture {
        return Err(Error::InvalidArgument(format!("expected a shuffle-mixture model, got {:?}", model.kind)));
    }
    model.validate()?;
    let probs = model.mixture_probs.as_deref().unwrap_or_default();
    if !a.is_square() || a.rows() <= model.k {
        return Err(Error::Shape(format!(
            "shuffle mixture with k={} needs a square matrix of side > k, got {}x{}",
            model.k,
            a.rows(),
            a.cols()
        )));
    }
    let mut total = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            total += p * phi_shuffle_exact(a, j)?;
        }
    }
    Ok(total)
}

/// Product over rows of the squared row 2-norms.
pub fn row_norm_product(a: &ComplexMatrix) -> f64 {
    (0..a.rows()).map(|i| a.row(i).iter().map(Complex64::norm_sqr).sum::<f64>()).product()
}

/// Sample Pearson correlation between [`row_norm_product`] and
/// [`phi_input_loss`] over Gaussian `n x (n+k)` draws.
pub fn row_norm_correlation(n: usize, k: usize, draws: usize, seed: Seed) -> Result<f64> {
    if draws < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two draws".into()));
    }
    let mut rng = seed.rng();
    let mut xs = Vec::with_capacity(draws);
    let mut ys = Vec::with_capacity(draws);
    for _ in 0..draws {
        let a = ComplexMatrix::from_fn(n, n + k, |_, _| complex_gaussian(&mut rng));
        xs.push(row_norm_product(&a));
        ys.push(phi_input_loss(&a)?);
    }
    Ok(pearson(&xs, &ys))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
