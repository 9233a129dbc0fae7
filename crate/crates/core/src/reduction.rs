//! Recovering `|Per(X)|^2` from a noisy oracle for a lossy functional.
//!
//! `X` is embedded in a larger Gaussian matrix whose extra rows/columns are
//! scaled by `c`. The lossy functional of the scaled matrix is then a
//! polynomial in `x = c^2` whose constant term is `w_k |Per(X)|^2 / |Lambda|`,
//! where `|Lambda|` counts the averaged submatrices and `w_k` is the weight of
//! the exact-`k` term (1 except for the shuffle mixture, where it is `p_k`).
//! Querying the oracle at `degree + 1` nodes `x` evenly spaced in
//! `[1 - a, 1 + a]`, `a = delta / sqrt(nk)`, and solving the Vandermonde
//! system gives that constant term.
//!
//! Noise is measured in units of `n!`, where `n` is the side of `X`.

use std::f64::consts::{E, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    sample_gaussian_matrix, scale_border, scale_bottom_rows, scale_right_columns, ComplexMatrix, RealMatrix, Seed,
    MAX_CONDITION,
};
use crate::loss::{LossKind, LossModel};
use crate::permanent::permanent;
use crate::states::factorial;

/// Smallest allowed gap between interpolation nodes.
pub const MIN_NODE_SPACING: f64 = 1e-12;

const EMBED_TAG: u64 = 0x0065_6d62_6564;
const NOISE_TAG: u64 = 0x006e_6f69_7365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Uniform,
    Adversarial,
}

/// Additive oracle error: at most `epsilon_prime * n!` in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub epsilon_prime: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { kind: NoiseKind::None, epsilon_prime: 0.0 };

    pub fn uniform(epsilon_prime: f64) -> Self {
        NoiseSpec { kind: NoiseKind::Uniform, epsilon_prime }
    }

    pub fn adversarial(epsilon_prime: f64) -> Self {
        NoiseSpec { kind: NoiseKind::Adversarial, epsilon_prime }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != NoiseKind::None && !(self.epsilon_prime >= 0.0 && self.epsilon_prime.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon' must be finite and non-negative, got {}",
                self.epsilon_prime
            )));
        }
        Ok(())
    }

    /// Effective bound, zero when there is no noise.
    pub fn bound(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ => self.epsilon_prime,
        }
    }
}

/// Interpolation nodes. The fit variable is `x = c^2`; `c_values` are the
/// column/row scales actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub x_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub a: f64,
    pub variable: String,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.x_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_values.is_empty()
    }
}

/// Half-width `a = delta / sqrt(nk)` of the node interval; `nk` is clamped to
/// at least 1 so that `k = 0` still yields a finite interval.
pub fn node_half_width(n: usize, k: usize, delta: f64) -> f64 {
    delta / ((n * k).max(1) as f64).sqrt()
}

/// `degree + 1` nodes in `x = c^2`, evenly spaced over `[1 - a, 1 + a]`.
pub fn interpolation_nodes(n: usize, k: usize, delta: f64, degree: usize) -> Result<NodeSet> {
    evenly_spaced_nodes(n, k, delta, degree + 1)
}

/// `count` evenly spaced nodes over `[1 - a, 1 + a]`; `count = 1` gives `x = 1`.
pub fn evenly_spaced_nodes(n: usize, k: usize, delta: f64, count: usize) -> Result<NodeSet> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    let a = node_half_width(n, k, delta);
    let gaps = count - 1;
    if gaps > 0 && 2.0 * a / (gaps as f64) < MIN_NODE_SPACING {
        return Err(Error::InvalidArgument("delta too small for this degree".into()));
    }
    let x_values: Vec<f64> = (0..count)
        .map(|i| if gaps == 0 { 1.0 } else { 1.0 + a * (2.0 * i as f64 - gaps as f64) / gaps as f64 })
        .collect();
    let c_values = x_values.iter().map(|x| x.sqrt()).collect();
    Ok(NodeSet { x_values, c_values, a, variable: "c^2".into() })
}

/// Square Vandermonde matrix, row `i` = `(1, x_i, ..., x_i^d)`.
pub fn build_vandermonde(nodes: &NodeSet) -> RealMatrix {
    vandermonde(&nodes.x_values, nodes.len() - 1)
}

/// `len(xs) x (degree + 1)` Vandermonde matrix.
pub fn vandermonde(xs: &[f64], degree: usize) -> RealMatrix {
    RealMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32))
}

/// Constant coefficient of the polynomial fitted to `w`.
///
/// Square systems are solved directly (no explicit inverse); taller systems
/// use least squares. Rejects systems with condition number above `1e14`.
pub fn estimate_beta0(v: &RealMatrix, w: &[f64]) -> Result<f64> {
    if w.len() != v.rows() {
        return Err(Error::Shape(format!("{} values for {} nodes", w.len(), v.rows())));
    }
    if v.rows() == v.cols() {
        let condition = v.condition_inf()?;
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition, limit: MAX_CONDITION });
        }
        Ok(v.solve(w)?[0])
    } else {
        let condition = v.norm_inf() * pseudo_inverse(v)?.norm_inf();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition, limit: MAX_CONDITION });
        }
        Ok(v.least_squares(w)?[0])
    }
}

/// Least-squares pseudo-inverse, one column per unit right-hand side.
fn pseudo_inverse(v: &RealMatrix) -> Result<RealMatrix> {
    let cols: Vec<Vec<f64>> = (0..v.rows())
        .map(|i| {
            let mut e = vec![0.0; v.rows()];
            e[i] = 1.0;
            v.least_squares(&e)
        })
        .collect::<Result<_>>()?;
    Ok(RealMatrix::from_fn(v.cols(), v.rows(), |i, j| cols[j][i]))
}

/// Gautschi's product `max_j prod_{i != j} (1 + |x_i|) / |x_j - x_i|`.
///
/// With `V` holding one node per row, this bounds `||V^-1||_1` (the
/// infinity norm of the inverse of the nodes-as-columns matrix, which is the
/// orientation Gautschi's inequality is stated in). Since
/// `||V^-1||_inf <= (d + 1) ||V^-1||_1`, the variance chain keeps its form.
///
/// A single node has an empty product; `1 + |x_1|` is returned instead, which
/// still dominates the true norm `1`.
pub fn gautschi_bound(nodes: &NodeSet) -> f64 {
    let xs = &nodes.x_values;
    if xs.len() == 1 {
        return 1.0 + xs[0].abs();
    }
    (0..xs.len())
        .map(|j| {
            (0..xs.len())
                .filter(|&i| i != j)
                .map(|i| (1.0 + xs[i].abs()) / (xs[j] - xs[i]).abs())
                .product::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Closed-form bound on `||V^-1||_inf` for `degree + 1` evenly spaced nodes
/// in `[1 - a, 1 + a]`.
///
/// Even degree `d`: `(2e/a)^d / (pi d)`. Odd `d >= 3`:
/// `(2e/a)^d / (pi sqrt(d^2 - 1)) * d^d / sqrt((d-1)^(d-1) (d+1)^(d+1))`.
/// The odd form comes from Stirling's bound on `((d-1)/2)!`, which is vacuous
/// at `d = 1`; there the exact central-node value `(2 + a) / (2a)` is used.
/// Degree 0 returns 2, matching [`gautschi_bound`] for the single node `x = 1`.
pub fn closed_form_inverse_bound(degree: usize, a: f64) -> f64 {
    let d = degree as f64;
    match degree {
        0 => 2.0,
        1 => (2.0 + a) / (2.0 * a),
        _ if degree % 2 == 0 => (2.0 * E / a).powi(degree as i32) / (PI * d),
        _ => {
            let log_ratio = d * d.ln() - 0.5 * ((d - 1.0) * (d - 1.0).ln() + (d + 1.0) * (d + 1.0).ln());
            (2.0 * E / a).powi(degree as i32) / (PI * (d * d - 1.0).sqrt()) * log_ratio.exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBound {
    /// `(d+1)^2 (epsilon' n!)^2 B^2` with `B` the closed-form inverse bound.
    pub explicit: f64,
    /// `(epsilon' n!)^2 / a^(2d)`, constants dropped.
    pub asymptotic: f64,
}

/// Bound on `Var(beta0_hat)` when every oracle value carries independent,
/// zero-mean error of magnitude at most `epsilon' n!`.
pub fn variance_bound(epsilon_prime: f64, n: usize, degree: usize, a: f64) -> VarianceBound {
    let unit = (epsilon_prime * factorial(n)).powi(2);
    let b = closed_form_inverse_bound(degree, a);
    let nodes = (degree + 1) as f64;
    VarianceBound { explicit: nodes * nodes * unit * b * b, asymptotic: unit / a.powi(2 * degree as i32) }
}

/// Oracle precision sufficient for an `epsilon n!` estimate with probability
/// `1 - delta`, with the hidden constant set to 1:
/// `epsilon delta^(k + 1/2) k^(k/2) / (n^(k/2) (n + k)^k)`.
pub fn epsilon_prime_budget(n: usize, k: usize, epsilon: f64, delta: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    let k_term = if k == 0 { 1.0 } else { kf.powf(kf / 2.0) };
    epsilon * delta.powf(kf + 0.5) * k_term / (nf.powf(kf / 2.0) * (nf + kf).powi(k as i32))
}

/// `[X | Y]` with `Y` an `n x k` Gaussian block drawn from `seed`.
pub fn embed(x: &ComplexMatrix, k: usize, seed: Seed) -> Result<ComplexMatrix> {
    embed_for_model(x, &LossModel::input_loss(k), seed)
}

/// Embeds `X` in the shape the model's functional expects:
/// `[X | Y]` (input loss), `[X ; Y]` (dark counts) or `[X Y ; V W]` (shuffling).
pub fn embed_for_model(x: &ComplexMatrix, model: &LossModel, seed: Seed) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::Shape(format!("X must be square, got {}x{}", x.rows(), x.cols())));
    }
    let (n, k) = (x.rows(), model.k);
    match model.kind {
        LossKind::InputLoss => x.hstack(&sample_gaussian_matrix(n, k, seed)),
        LossKind::DarkCounts => x.vstack(&sample_gaussian_matrix(k, n, seed)),
        LossKind::ShuffleExact | LossKind::ShuffleMixture => {
            let g = sample_gaussian_matrix(n + k, n + k, seed);
            Ok(ComplexMatrix::from_fn(n + k, n + k, |i, j| if i < n && j < n { x.get(i, j) } else { g.get(i, j) }))
        }
    }
}

/// Applies the model's `c`-scaling to an embedded matrix.
pub fn scale_for_model(a: &ComplexMatrix, model: &LossModel, c: f64) -> Result<ComplexMatrix> {
    match model.kind {
        LossKind::InputLoss => scale_right_columns(a, model.k, c),
        LossKind::DarkCounts => scale_bottom_rows(a, model.k, c),
        LossKind::ShuffleExact | LossKind::ShuffleMixture => scale_border(a, model.k, c),
    }
}

/// Exact functional of `a` plus additive error bounded by `epsilon' n!`.
///
/// Uniform noise is drawn from a stream derived from `seed` and `call`;
/// adversarial noise is `+epsilon' n!` on even calls and `-epsilon' n!` on odd
/// ones.
pub fn noisy_phi_oracle(
    a: &ComplexMatrix,
    model: &LossModel,
    noise: NoiseSpec,
    seed: Seed,
    call: usize,
) -> Result<f64> {
    noise.validate()?;
    let n = model.photons_for_shape(a.rows(), a.cols())?;
    let exact = model.evaluate(a)?;
    Ok(exact + oracle_error(noise, n, seed, call))
}

fn oracle_error(noise: NoiseSpec, n: usize, seed: Seed, call: usize) -> f64 {
    let scale = noise.bound() * factorial(n);
    match noise.kind {
        NoiseKind::None => 0.0,
        NoiseKind::Uniform => scale * seed.derive(call as u64).rng().gen_range(-1.0..=1.0),
        NoiseKind::Adversarial => {
            if call % 2 == 0 {
                scale
            } else {
                -scale
            }
        }
    }
}

/// Everything computed during one recovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub model: LossModel,
    pub noise: NoiseSpec,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: Seed,
    pub nodes: NodeSet,
    pub polynomial_degree: usize,
    pub oracle_values: Vec<f64>,
    /// Fitted constant coefficient.
    pub beta0: f64,
    /// `|Lambda| / w_k`, the factor turning `beta0` into an estimate of `|Per(X)|^2`.
    pub scale: f64,
    pub estimate: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub error_units_nfact: f64,
    pub succeeded: bool,
    /// Variance bound on `estimate` (explicit chain, estimate units).
    pub variance_bound: f64,
    /// Variance bound on `beta0` (explicit chain).
    pub beta0_variance_bound: f64,
    /// `(epsilon' n!)^2 / a^(2d)` for comparison.
    pub asymptotic_variance: f64,
    /// Gautschi product bound; absent for overdetermined fits.
    pub gautschi_norm_bound: Option<f64>,
    pub closed_form_norm_bound: f64,
    /// Exact `||V^-1||_inf` (pseudo-inverse for overdetermined fits).
    pub inverse_norm: f64,
    pub condition_number: f64,
    /// `sqrt(variance_bound / delta)`: the Chebyshev radius at `K = 1/sqrt(delta)`.
    pub chebyshev_envelope: f64,
}

/// Options beyond the core parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReductionOptions {
    /// Number of nodes; `None` means `degree + 1` (square interpolation).
    pub node_count: Option<usize>,
}

/// Recovers `|Per(X)|^2` via [`recover_with_options`] with default options.
pub fn recover_permanent_squared(
    x: &ComplexMatrix,
    model: &LossModel,
    noise: NoiseSpec,
    epsilon: f64,
    delta: f64,
    seed: Seed,
) -> Result<ReductionReport> {
    recover_with_options(x, model, noise, epsilon, delta, seed, ReductionOptions::default())
}

/// Embed, query the noisy oracle at every node, fit, rescale.
pub fn recover_with_options(
    x: &ComplexMatrix,
    model: &LossModel,
    noise: NoiseSpec,
    epsilon: f64,
    delta: f64,
    seed: Seed,
    options: ReductionOptions,
) -> Result<ReductionReport> {
    model.validate()?;
    noise.validate()?;
    if !x.is_square() || x.rows() == 0 {
        return Err(Error::Shape(format!("X must be square and non-empty, got {}x{}", x.rows(), x.cols())));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let (n, k) = (x.rows(), model.k);
    let degree = model.polynomial_degree();
    let count = options.node_count.unwrap_or(degree + 1);
    if count < degree + 1 {
        return Err(Error::InvalidArgument(format!("degree {degree} needs at least {} nodes, got {count}", degree + 1)));
    }
    let nodes = evenly_spaced_nodes(n, k, delta, count)?;

    let embedded = embed_for_model(x, model, seed.derive(EMBED_TAG))?;
    let noise_seed = seed.derive(NOISE_TAG);
    let oracle_values = nodes
        .c_values
        .iter()
        .enumerate()
        .map(|(call, &c)| noisy_phi_oracle(&scale_for_model(&embedded, model, c)?, model, noise, noise_seed, call))
        .collect::<Result<Vec<f64>>>()?;

    let v = vandermonde(&nodes.x_values, degree);
    let beta0 = estimate_beta0(&v, &oracle_values)?;
    let (gautschi_norm_bound, inverse_norm) = if count == degree + 1 {
        (Some(gautschi_bound(&nodes)), v.inverse()?.norm_inf())
    } else {
        (None, pseudo_inverse(&v)?.norm_inf())
    };
    let condition_number = v.norm_inf() * inverse_norm;

    let scale = model.normalization(n) / model.leading_weight();
    let estimate = beta0 * scale;
    let truth = permanent(x)?.abs_squared;
    let nfact = factorial(n);
    let abs_error = (estimate - truth).abs();
    let bounds = variance_bound(noise.bound(), n, degree, nodes.a);
    let variance = bounds.explicit * scale * scale;
    if !estimate.is_finite() {
        return Err(Error::NonFinite("recovered estimate".into()));
    }
    Ok(ReductionReport {
        model: model.clone(),
        noise,
        n,
        k,
        epsilon,
        delta,
        seed,
        polynomial_degree: degree,
        oracle_values,
        beta0,
        scale,
        estimate,
        truth,
        abs_error,
        error_units_nfact: abs_error / nfact,
        succeeded: abs_error <= epsilon * nfact,
        variance_bound: variance,
        beta0_variance_bound: bounds.explicit,
        asymptotic_variance: bounds.asymptotic,
        gautschi_norm_bound,
        closed_form_norm_bound: closed_form_inverse_bound(degree, nodes.a),
        inverse_norm,
        condition_number,
        chebyshev_envelope: (variance / delta).sqrt(),
        nodes,
    })
}
