//! Occupation-number states and subset enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest state list [`enumerate_states`] will build.
pub const STATE_CAP: u128 = 10_000_000;

/// Photon counts per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationState(Vec<usize>);

impl OccupationState {
    pub fn new(occupations: Vec<usize>) -> Self {
        OccupationState(occupations)
    }

    /// No-collision state over `m` modes with one photon in each listed mode.
    pub fn from_modes(m: usize, modes: &[usize]) -> Result<Self> {
        let mut occ = vec![0; m];
        for &i in modes {
            if i >= m {
                return Err(Error::InvalidArgument(format!("mode {i} out of range for {m} modes")));
            }
            occ[i] += 1;
        }
        Ok(OccupationState(occ))
    }

    /// One photon in each of the first `n` of `m` modes.
    pub fn first_modes(m: usize, n: usize) -> Self {
        OccupationState((0..m).map(|i| usize::from(i < n)).collect())
    }

    pub fn occupations(&self) -> &[usize] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn photons(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_no_collision(&self) -> bool {
        self.0.iter().all(|&s| s <= 1)
    }

    /// Mode index `i` repeated `s_i` times, in mode order.
    pub fn mode_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat(i).take(s)).collect()
    }

    /// `s_1! s_2! ... s_m!`
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&s| factorial(s)).product()
    }
}

impl fmt::Display for OccupationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// `n!` in double precision.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Checks an item count against a cap.
pub fn check_cap(what: &'static str, count: u128, cap: u128) -> Result<()> {
    if count > cap {
        Err(Error::CapExceeded { what, count, cap })
    } else {
        Ok(())
    }
}

/// Advances `idx` to the next `r`-subset of `0..n` in lexicographic order.
/// Returns false once the last subset has been passed.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if idx[i] < n - r + i {
            idx[i] += 1;
            for j in i + 1..r {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Every `r`-subset of `0..n`, lexicographically.
pub fn combinations(n: usize, r: usize) -> Combinations {
    Combinations { n, current: if r <= n { Some((0..r).collect()) } else { None } }
}

pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        self.current = if next_combination(&mut next, self.n) { Some(next) } else { None };
        Some(out)
    }
}

/// All states of `n` photons in `m` modes, in descending lexicographic order
/// of the occupation vectors (equivalently, ascending lexicographic order of
/// the occupied index lists for no-collision states).
pub fn enumerate_states(m: usize, n: usize, no_collision: bool) -> Result<Vec<OccupationState>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one mode".into()));
    }
    if no_collision {
        if n == 0 || n > m {
            return Err(Error::InvalidArgument(format!(
                "no-collision states need 1 <= n <= m, got n={n}, m={m}"
            )));
        }
        check_cap("no-collision states", binomial(m, n), STATE_CAP)?;
        return combinations(m, n).map(|modes| OccupationState::from_modes(m, &modes)).collect();
    }
    check_cap("occupation states", binomial(m + n - 1, n), STATE_CAP)?;
    let mut out = Vec::new();
    let mut occ = vec![0; m];
    fill_states(&mut occ, 0, n, &mut out);
    Ok(out)
}

fn fill_states(occ: &mut Vec<usize>, mode: usize, left: usize, out: &mut Vec<OccupationState>) {
    if mode + 1 == occ.len() {
        occ[mode] = left;
        out.push(OccupationState(occ.clone()));
        return;
    }
    for s in (0..=left).rev() {
        occ[mode] = s;
        fill_states(occ, mode + 1, left - s, out);
    }
    occ[mode] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[usize]) -> OccupationState {
        OccupationState::new(v.to_vec())
    }

    #[test]
    fn three_modes_two_photons_no_collision() {
        let got = enumerate_states(3, 2, true).unwrap();
        assert_eq!(got, vec![st(&[1, 1, 0]), st(&[1, 0, 1]), st(&[0, 1, 1])]);
    }

    #[test]
    fn two_modes_two_photons_general() {
        let got = enumerate_states(2, 2, false).unwrap();
        assert_eq!(got, vec![st(&[2, 0]), st(&[1, 1]), st(&[0, 2])]);
    }

    #[test]
    fn counts_match_binomials() {
        assert_eq!(enumerate_states(25, 5, true).unwrap().len(), 53130);
        assert_eq!(enumerate_states(6, 3, false).unwrap().len(), binomial(8, 3) as usize);
    }

    #[test]
    fn enumeration_is_sorted_and_complete() {
        for (m, n) in [(4, 3), (5, 2), (3, 4)] {
            let states = enumerate_states(m, n, false).unwrap();
            assert!(states.windows(2).all(|w| w[0] > w[1]));
            assert!(states.iter().all(|s| s.photons() == n && s.modes() == m));
            // Brute force: every vector in {0..n}^m summing to n.
            let mut brute = 0;
            let mut v = vec![0usize; m];
            loop {
                if v.iter().sum::<usize>() == n {
                    brute += 1;
                }
                let mut i = 0;
                while i < m && v[i] == n {
                    v[i] = 0;
                    i += 1;
                }
                if i == m {
                    break;
                }
                v[i] += 1;
            }
            assert_eq!(states.len(), brute);
        }
    }

    #[test]
    fn cap_is_enforced() {
        match enumerate_states(60, 10, true) {
            Err(Error::CapExceeded { count, .. }) => assert_eq!(count, binomial(60, 10)),
            other => panic!("expected cap error, got {other:?}"),
        }
        assert!(enumerate_states(2, 3, true).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(7, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }

    #[test]
    fn state_helpers() {
        let s = st(&[2, 0, 1]);
        assert_eq!(s.mode_indices(), vec![0, 0, 2]);
        assert_eq!(s.factorial_product(), 2.0);
        assert!(!s.is_no_collision());
        assert_eq!(s.to_string(), "2,0,1");
        assert_eq!(OccupationState::first_modes(4, 2), st(&[1, 1, 0, 0]));
    }
}
