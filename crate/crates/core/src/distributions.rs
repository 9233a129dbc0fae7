//! Exact ideal and lossy output distributions, sampling, and the
//! Gaussian-ensemble distance bounds (closed-form KL, Pinsker, Monte Carlo TV).
//!
//! Lossy distributions keep collision outcomes (with their factorial
//! denominators) so that normalization is exact. Use
//! [`OutcomeDistribution::no_collision_view`] for the collision-free slice.
//!
//! Only the fixed-`k` loss model is exposed. Independent per-photon loss with
//! rate `p` reduces to it by postselecting on runs with exactly `k = pN` lost
//! photons.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, submatrix_st, ComplexMatrix, Seed};
use crate::permanent::{glynn_unchecked, MAX_GRAY_SIDE};
use crate::states::{binomial, check_cap, combinations, enumerate_states, OccupationState};

/// Photon-number limit for single ideal transition probabilities.
pub const MAX_IDEAL_PHOTONS: usize = 8;
/// Permanent-evaluation budget for one lossy distribution.
pub const LOSSY_EVAL_CAP: u128 = 10_000_000;
/// Allowed deviation of the total probability from 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Fixed number of RNG streams a Monte Carlo run is split across.
pub const MC_PARTITIONS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub outcomes: Vec<OccupationState>,
    pub probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob_of(&self, outcome: &OccupationState) -> Option<f64> {
        self.outcomes.iter().position(|o| o == outcome).map(|i| self.probs[i])
    }

    /// The collision-free outcomes only; no longer normalized.
    pub fn no_collision_view(&self) -> OutcomeDistribution {
        let (outcomes, probs) = self
            .outcomes
            .iter()
            .zip(&self.probs)
            .filter(|(o, _)| o.is_no_collision())
            .map(|(o, &p)| (o.clone(), p))
            .unzip();
        OutcomeDistribution { outcomes, probs }
    }

    fn check_normalized(&self) -> Result<()> {
        if self.outcomes.len() != self.probs.len() || self.outcomes.is_empty() {
            return Err(Error::InvalidArgument("distribution needs one probability per outcome".into()));
        }
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("distribution has a negative or non-finite probability".into()));
        }
        let total = self.total();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("distribution sums to {total}, not 1")));
        }
        Ok(())
    }
}

fn check_unitary_shape(u: &ComplexMatrix) -> Result<usize> {
    if !u.is_square() || u.rows() == 0 {
        return Err(Error::Shape(format!("interferometer must be square, got {}x{}", u.rows(), u.cols())));
    }
    Ok(u.rows())
}

/// `|Per(U_{S,T})|^2 / (prod s_i! prod t_i!)`.
pub fn ideal_outcome_prob(u: &ComplexMatrix, s: &OccupationState, t: &OccupationState) -> Result<f64> {
    let m = check_unitary_shape(u)?;
    if s.modes() != m || t.modes() != m {
        return Err(Error::Shape(format!("states over {} and {} modes for {m} modes", s.modes(), t.modes())));
    }
    let n = s.photons();
    if t.photons() != n {
        return Err(Error::InvalidArgument(format!("photon number mismatch: input {n}, output {}", t.photons())));
    }
    if n == 0 || n > MAX_IDEAL_PHOTONS {
        return Err(Error::InvalidArgument(format!("photon number must be in 1..={MAX_IDEAL_PHOTONS}, got {n}")));
    }
    let sub = submatrix_st(u, s, t)?;
    Ok(glynn_unchecked(&sub, n).norm_sqr() / (s.factorial_product() * t.factorial_product()))
}

/// The full ideal distribution over all outputs for input `s`.
pub fn ideal_distribution(u: &ComplexMatrix, s: &OccupationState) -> Result<OutcomeDistribution> {
    let m = check_unitary_shape(u)?;
    let outcomes = enumerate_states(m, s.photons(), false)?;
    let probs = outcomes.iter().map(|t| ideal_outcome_prob(u, s, t)).collect::<Result<_>>()?;
    Ok(OutcomeDistribution { outcomes, probs })
}

/// Output distribution when `n + k` photons enter the first `n + k` modes and
/// exactly `k` of them, chosen uniformly, are lost before the interferometer.
pub fn lossy_distribution(u: &ComplexMatrix, n: usize, k: usize) -> Result<OutcomeDistribution> {
    let m = check_unitary_shape(u)?;
    if n == 0 || n > MAX_GRAY_SIDE {
        return Err(Error::InvalidArgument(format!("detected photons must be in 1..={MAX_GRAY_SIDE}, got {n}")));
    }
    if n + k > m {
        return Err(Error::InvalidArgument(format!("{} input photons do not fit {m} modes", n + k)));
    }
    let survivors = binomial(n + k, n);
    check_cap("permanent evaluations", binomial(m + n - 1, n).saturating_mul(survivors), LOSSY_EVAL_CAP)?;
    let outcomes = enumerate_states(m, n, false)?;
    let input_subsets: Vec<Vec<usize>> = combinations(n + k, n).collect();
    let probs = outcomes
        .iter()
        .map(|t| {
            let rows = t.mode_indices();
            let total: f64 = input_subsets
                .iter()
                .map(|cols| glynn_unchecked(&u.select(&rows, cols), n).norm_sqr())
                .sum();
            total / (survivors as f64 * t.factorial_product())
        })
        .collect();
    Ok(OutcomeDistribution { outcomes, probs })
}

/// One draw by inverse-CDF sampling.
pub fn sample_outcome(dist: &OutcomeDistribution, seed: Seed) -> Result<OccupationState> {
    Ok(sample_outcomes(dist, 1, seed)?.remove(0))
}

/// `draws` independent draws from one RNG stream.
pub fn sample_outcomes(dist: &OutcomeDistribution, draws: usize, seed: Seed) -> Result<Vec<OccupationState>> {
    dist.check_normalized()?;
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for &p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    // Last index with positive mass absorbs rounding at the top of the CDF.
    let last = dist.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = seed.rng();
    Ok((0..draws)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let idx = cdf.partition_point(|&c| c <= u).min(last);
            dist.outcomes[idx].clone()
        })
        .collect())
}

/// Parameters of the `c`-scaled Gaussian ensemble: `n x (n+k)` i.i.d.
/// standard complex Gaussians with the last `k` columns scaled by `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEnsembleSpec {
    pub n: usize,
    pub k: usize,
    pub c: f64,
}

impl GaussianEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("ensemble needs n >= 1".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidArgument(format!("scale c must be positive, got {}", self.c)));
        }
        Ok(())
    }
}

/// `KL(N[1] || N[c]) = n k (1/c^2 - 1 + 2 ln c)`.
pub fn kl_scaled_gaussian(n: usize, k: usize, c: f64) -> f64 {
    (n * k) as f64 * (1.0 / (c * c) - 1.0 + 2.0 * c.ln())
}

/// Pinsker's bound `sqrt(kl / 2)` on total variation distance.
pub fn pinsker_tv_bound(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::InvalidArgument(format!("KL divergence must be non-negative, got {kl}")));
    }
    Ok((kl / 2.0).sqrt())
}

/// Largest `|c - 1|` keeping the scaled ensemble `O(delta)`-close: `delta / sqrt(nk)`.
pub fn max_c_offset(n: usize, k: usize, delta: f64) -> f64 {
    delta / ((n * k) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `||N[c] - N[1]||`.
///
/// Samples from `N[1]` and averages `max(0, 1 - q/p)` with `q/p` the exact
/// density ratio. Only the `nk` scaled entries enter the ratio, so only those
/// are drawn.
pub fn tv_monte_carlo(spec: GaussianEnsembleSpec, trials: usize, seed: Seed) -> Result<TvEstimate> {
    spec.validate()?;
    if trials < 10_000 {
        return Err(Error::InvalidArgument(format!("tv_monte_carlo needs at least 10^4 trials, got {trials}")));
    }
    let scaled = spec.n * spec.k;
    let log_norm = -2.0 * spec.c.ln() * scaled as f64;
    let precision_gap = 1.0 / (spec.c * spec.c) - 1.0;
    let parts = MC_PARTITIONS.min(trials as u64);
    let sums: Vec<(f64, f64)> = (0..parts)
        .into_par_iter()
        .map(|p| {
            let lo = p * trials as u64 / parts;
            let hi = (p + 1) * trials as u64 / parts;
            let mut rng = seed.derive(p).rng();
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in lo..hi {
                let r2: f64 = (0..scaled).map(|_| complex_gaussian(&mut rng).norm_sqr()).sum();
                let ratio = (log_norm - r2 * precision_gap).exp();
                let f = (1.0 - ratio).max(0.0);
                s += f;
                s2 += f * f;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let t = trials as f64;
    let mean = s / t;
    let var = (s2 / t - mean * mean).max(0.0) * t / (t - 1.0);
    Ok(TvEstimate { estimate: mean, stderr: (var / t).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_haar_unitary;
    use crate::loss::phi_input_loss;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn st(v: &[usize]) -> OccupationState {
        OccupationState::new(v.to_vec())
    }

    #[test]
    fn identity_transmits_exactly() {
        let u = ComplexMatrix::identity(4);
        let s = st(&[1, 0, 1, 0]);
        assert_eq!(ideal_outcome_prob(&u, &s, &s).unwrap(), 1.0);
        let s2 = st(&[2, 0, 0, 1]);
        assert!((ideal_outcome_prob(&u, &s2, &s2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = ComplexMatrix::from_real_rows(&[vec![h, h], vec![h, -h]]);
        let s = st(&[1, 1]);
        assert!((ideal_outcome_prob(&u, &s, &st(&[2, 0])).unwrap() - 0.5).abs() < 1e-15);
        assert!((ideal_outcome_prob(&u, &s, &st(&[0, 2])).unwrap() - 0.5).abs() < 1e-15);
        assert!(ideal_outcome_prob(&u, &s, &st(&[1, 1])).unwrap() < 1e-30);
    }

    #[test]
    fn ideal_normalization() {
        for (m, n) in [(3, 2), (4, 3), (6, 3), (5, 1)] {
            let u = sample_haar_unitary(m, Seed::new(m as u64 * 10 + n as u64));
            let s = OccupationState::first_modes(m, n);
            let d = ideal_distribution(&u, &s).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-9, "m={m} n={n} total={}", d.total());
        }
    }

    #[test]
    fn ideal_errors() {
        let u = sample_haar_unitary(3, Seed::new(1));
        assert!(ideal_outcome_prob(&u, &st(&[1, 1, 0]), &st(&[1, 0, 0])).is_err());
        assert!(ideal_outcome_prob(&u, &st(&[1, 1]), &st(&[1, 1])).is_err());
    }

    #[test]
    fn lossy_without_loss_is_ideal() {
        let u = sample_haar_unitary(5, Seed::new(2));
        let lossy = lossy_distribution(&u, 2, 0).unwrap();
        let ideal = ideal_distribution(&u, &OccupationState::first_modes(5, 2)).unwrap();
        assert_eq!(lossy.outcomes, ideal.outcomes);
        for (a, b) in lossy.probs.iter().zip(&ideal.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn lossy_single_photon() {
        let u = sample_haar_unitary(4, Seed::new(3));
        let d = lossy_distribution(&u, 1, 1).unwrap();
        for j in 0..4 {
            let mut occ = vec![0; 4];
            occ[j] = 1;
            let expected = (u.get(j, 0).norm_sqr() + u.get(j, 1).norm_sqr()) / 2.0;
            assert!((d.prob_of(&st(&occ)).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn lossy_is_mixture_of_ideal_distributions() {
        let m = 6;
        let u = sample_haar_unitary(m, Seed::new(4));
        let lossy = lossy_distribution(&u, 2, 1).unwrap();
        assert!((lossy.total() - 1.0).abs() < 1e-9);
        let inputs = [[0, 1], [0, 2], [1, 2]];
        let ideals: Vec<OutcomeDistribution> = inputs
            .iter()
            .map(|modes| ideal_distribution(&u, &OccupationState::from_modes(m, modes).unwrap()).unwrap())
            .collect();
        for (i, t) in lossy.outcomes.iter().enumerate() {
            let mix: f64 = ideals.iter().map(|d| d.probs[i]).sum::<f64>() / 3.0;
            assert_eq!(&ideals[0].outcomes[i], t);
            assert!((lossy.probs[i] - mix).abs() < 1e-12);
        }
    }

    #[test]
    fn lossy_no_collision_matches_phi() {
        let m = 7;
        let (n, k) = (3, 2);
        let u = sample_haar_unitary(m, Seed::new(5));
        let d = lossy_distribution(&u, n, k).unwrap();
        let view = d.no_collision_view();
        assert!(view.total() < 1.0);
        let inputs: Vec<usize> = (0..n + k).collect();
        for (t, &p) in view.outcomes.iter().zip(&view.probs) {
            let a = u.select(&t.mode_indices(), &inputs);
            assert!((p - phi_input_loss(&a).unwrap()).abs() <= 1e-12 * p.max(1e-300));
        }
    }

    #[test]
    fn lossy_errors() {
        let u = sample_haar_unitary(4, Seed::new(6));
        assert!(lossy_distribution(&u, 3, 2).is_err());
        let big = sample_haar_unitary(30, Seed::new(6));
        assert!(matches!(lossy_distribution(&big, 6, 4), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn sampling_point_mass_and_uniform() {
        let point = OutcomeDistribution { outcomes: vec![st(&[1, 0]), st(&[0, 1])], probs: vec![0.0, 1.0] };
        for s in 0..50 {
            assert_eq!(sample_outcome(&point, Seed::new(s)).unwrap(), st(&[0, 1]));
        }
        let uniform = OutcomeDistribution {
            outcomes: (0..4).map(|i| OccupationState::from_modes(4, &[i]).unwrap()).collect(),
            probs: vec![0.25; 4],
        };
        let draws = sample_outcomes(&uniform, 100_000, Seed::new(9)).unwrap();
        for o in &uniform.outcomes {
            let freq = draws.iter().filter(|d| *d == o).count() as f64 / 1e5;
            assert!((freq - 0.25).abs() < 0.01, "{o}: {freq}");
        }
        assert_eq!(draws, sample_outcomes(&uniform, 100_000, Seed::new(9)).unwrap());
    }

    #[test]
    fn sampling_rejects_unnormalized() {
        let bad = OutcomeDistribution { outcomes: vec![st(&[1])], probs: vec![0.5] };
        assert!(sample_outcome(&bad, Seed::new(0)).is_err());
    }

    #[test]
    fn sampling_chi_square() {
        let u = sample_haar_unitary(5, Seed::new(12));
        let d = lossy_distribution(&u, 2, 1).unwrap();
        let draws = 100_000;
        let samples = sample_outcomes(&d, draws, Seed::new(13)).unwrap();
        let mut stat = 0.0;
        for (o, &p) in d.outcomes.iter().zip(&d.probs) {
            let observed = samples.iter().filter(|s| *s == o).count() as f64;
            let expected = p * draws as f64;
            stat += (observed - expected).powi(2) / expected;
        }
        let dof = (d.outcomes.len() - 1) as f64;
        let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
        assert!(p_value > 0.001, "chi2 = {stat}, p = {p_value}");
    }

    /// KL(CN(0,1) || CN(0,c^2)) by Simpson's rule over |z|^2 ~ Exp(1).
    fn kl_quadrature(c: f64) -> f64 {
        let (upper, steps) = (60.0, 200_000);
        let h = upper / steps as f64;
        let f = |r: f64| (-r).exp() * (2.0 * c.ln() - r + r / (c * c));
        let mut s = f(0.0) + f(upper);
        for i in 1..steps {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl_scaled_gaussian(3, 2, 1.0), 0.0);
        let expected = 2.0 * (1.0 / 1.21 - 1.0 + 2.0 * 1.1f64.ln());
        assert!((kl_scaled_gaussian(2, 1, 1.1) - expected).abs() < 1e-15);
        assert!((kl_scaled_gaussian(2, 1, 1.1) - 2.0 * kl_quadrature(1.1)).abs() < 1e-9);
        let a: f64 = 1e-3;
        for (n, k) in [(1, 1), (4, 3)] {
            for c in [1.0 - a, 1.0 + a] {
                let ratio = kl_scaled_gaussian(n, k, c) / (2.0 * (n * k) as f64 * a * a);
                assert!((ratio - 1.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn pinsker_and_offset() {
        assert_eq!(pinsker_tv_bound(0.0).unwrap(), 0.0);
        assert_eq!(pinsker_tv_bound(2.0).unwrap(), 1.0);
        assert!((pinsker_tv_bound(0.08).unwrap() - 0.2).abs() < 1e-15);
        assert!(pinsker_tv_bound(-1e-3).is_err());
        assert!((max_c_offset(4, 1, 0.1) - 0.05).abs() < 1e-15);
        assert_eq!(max_c_offset(1, 1, 0.5), 0.5);
        assert!(max_c_offset(2, 3, 0.3) < max_c_offset(2, 2, 0.3));
    }

    #[test]
    fn tv_monte_carlo_behaviour() {
        let same = tv_monte_carlo(GaussianEnsembleSpec { n: 3, k: 2, c: 1.0 }, 10_000, Seed::new(1)).unwrap();
        assert_eq!(same.estimate, 0.0);

        let spec = GaussianEnsembleSpec { n: 3, k: 2, c: 1.05 };
        let tv = tv_monte_carlo(spec, 100_000, Seed::new(2)).unwrap();
        let bound = pinsker_tv_bound(kl_scaled_gaussian(3, 2, 1.05)).unwrap();
        assert!(tv.estimate <= bound + 3.0 * tv.stderr, "{tv:?} vs {bound}");

        let near = tv_monte_carlo(GaussianEnsembleSpec { c: 1.01, ..spec }, 100_000, Seed::new(3)).unwrap();
        let far = tv_monte_carlo(GaussianEnsembleSpec { c: 1.1, ..spec }, 100_000, Seed::new(3)).unwrap();
        assert!(far.estimate - near.estimate > 3.0 * (far.stderr.powi(2) + near.stderr.powi(2)).sqrt());

        assert!(tv_monte_carlo(spec, 10, Seed::new(0)).is_err());
        assert_eq!(tv, tv_monte_carlo(spec, 100_000, Seed::new(2)).unwrap());
    }

    #[test]
    fn complex_gaussian_helper_has_unit_variance() {
        let mut rng = Seed::new(44).rng();
        let mean: f64 = (0..200_000).map(|_| complex_gaussian(&mut rng).norm_sqr()).sum::<f64>() / 2e5;
        assert!((mean - 1.0).abs() < 0.01);
    }
}
