//! Coupling of two uniform-weight path laws built from a matching.
//!
//! Matched pairs `(γ, φ(γ))` carry the common unit weight `w`. The mass left
//! over on each side, `R = 1 - k w` for a matching of size `k`, is coupled
//! independently: `ν(γ, δ) = w(γ) w(δ) / R` for unmatched `γ` and `δ`.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::walker::{PathSet, Weight};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    unit: Weight,
    left_len: usize,
    right_len: usize,
    matched: Vec<(usize, usize)>,
    residual_left: Vec<usize>,
    residual_right: Vec<usize>,
    /// `partner[i]` is the right index matched to left `i`.
    partner: Vec<Option<usize>>,
    right_matched: Vec<bool>,
}

impl CouplingTable {
    /// Builds the table for path laws of `left_len` and `right_len` paths of
    /// common weight `unit`.
    pub fn new(unit: Weight, left_len: usize, right_len: usize, matched: Vec<(usize, usize)>) -> Result<Self> {
        if unit * Weight::from(left_len as u128) != Weight::one() || unit * Weight::from(right_len as u128) != Weight::one()
        {
            return Err(Error::MarginalMismatch(format!(
                "sides of {left_len} and {right_len} paths do not both carry unit mass at weight {unit}"
            )));
        }
        let mut partner = vec![None; left_len];
        let mut right_matched = vec![false; right_len];
        for &(l, r) in &matched {
            if l >= left_len || r >= right_len || partner[l].is_some() || right_matched[r] {
                return Err(Error::MarginalMismatch(format!("({l}, {r}) is not part of a matching")));
            }
            partner[l] = Some(r);
            right_matched[r] = true;
        }
        let residual_left = (0..left_len).filter(|&i| partner[i].is_none()).collect();
        let residual_right = (0..right_len).filter(|&j| !right_matched[j]).collect();
        Ok(Self {
            unit,
            left_len,
            right_len,
            matched,
            residual_left,
            residual_right,
            partner,
            right_matched,
        })
    }

    pub fn for_path_sets<const D: usize>(
        left: &PathSet<D>,
        right: &PathSet<D>,
        matched: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if left.unit_weight() != right.unit_weight() {
            return Err(Error::MarginalMismatch(format!(
                "unit weights differ: {} vs {}",
                left.unit_weight(),
                right.unit_weight()
            )));
        }
        Self::new(left.unit_weight(), left.len(), right.len(), matched)
    }

    pub fn unit_weight(&self) -> Weight {
        self.unit
    }

    /// The pairs carried by the matched part, each of weight `w`.
    pub fn matched_pairs(&self) -> &[(usize, usize)] {
        &self.matched
    }

    pub fn residual_left(&self) -> &[usize] {
        &self.residual_left
    }

    pub fn residual_right(&self) -> &[usize] {
        &self.residual_right
    }

    /// Mass of the matched part.
    pub fn matched_mass(&self) -> Weight {
        self.unit * Weight::from(self.matched.len() as u128)
    }

    /// Residual mass `R` on either side.
    pub fn residual_mass(&self) -> Weight {
        Weight::one() - self.matched_mass()
    }

    /// Weight of the pair `(i, j)` under the coupling.
    pub fn weight(&self, i: usize, j: usize) -> Weight {
        if self.partner[i] == Some(j) {
            return self.unit;
        }
        if self.partner[i].is_none() && !self.right_matched[j] {
            return self.unit * self.unit / self.residual_mass();
        }
        Weight::zero()
    }

    /// Row sums of the table, summed explicitly over the residual columns.
    pub fn left_marginal(&self) -> Vec<Weight> {
        let col_mass = self.residual_right.iter().fold(Weight::zero(), |acc, _| acc + self.unit);
        let r = self.residual_mass();
        (0..self.left_len)
            .map(|i| match self.partner[i] {
                Some(_) => self.unit,
                None => self.unit * col_mass / r,
            })
            .collect()
    }

    /// Column sums of the table, summed explicitly over the residual rows.
    pub fn right_marginal(&self) -> Vec<Weight> {
        let row_mass = self.residual_left.iter().fold(Weight::zero(), |acc, _| acc + self.unit);
        let r = self.residual_mass();
        (0..self.right_len)
            .map(|j| if self.right_matched[j] { self.unit } else { self.unit * row_mass / r })
            .collect()
    }

    /// Checks both marginals against the uniform path laws exactly.
    pub fn verify_marginals(&self) -> Result<()> {
        for (side, marginal) in [("left", self.left_marginal()), ("right", self.right_marginal())] {
            if let Some((i, w)) = marginal.iter().enumerate().find(|(_, w)| **w != self.unit) {
                return Err(Error::MarginalMismatch(format!("{side} path {i} has mass {w}, expected {}", self.unit)));
            }
        }
        Ok(())
    }

    /// Total mass of the pairs accepted by `good`, given the matched pairs
    /// are all good. Residual pairs are tested one by one.
    pub fn mass_where<F>(&self, mut good: F) -> Weight
    where
        F: FnMut(usize, usize) -> bool,
    {
        let mut residual_hits: u128 = 0;
        for &i in &self.residual_left {
            for &j in &self.residual_right {
                if good(i, j) {
                    residual_hits += 1;
                }
            }
        }
        self.matched_mass() + self.residual_pair_mass(residual_hits)
    }

    /// Mass of `count` residual pairs.
    pub fn residual_pair_mass(&self, count: u128) -> Weight {
        if count == 0 {
            return Weight::zero();
        }
        self.unit * self.unit * Weight::from(count) / self.residual_mass()
    }

    /// Draws a pair from the coupling.
    pub fn sample_pair(&self, rng: &mut RandomStream) -> (usize, usize) {
        let k = self.matched.len() as u64;
        let n = self.left_len as u64;
        let pick = rng.below(n);
        if pick < k {
            return self.matched[pick as usize];
        }
        let i = self.residual_left[rng.below(self.residual_left.len() as u64) as usize];
        let j = self.residual_right[rng.below(self.residual_right.len() as u64) as usize];
        (i, j)
    }

    /// Whether the pair came from the matched part.
    pub fn is_matched(&self, i: usize, j: usize) -> bool {
        self.partner[i] == Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginals_are_exact() {
        let t = CouplingTable::new(Weight::new(1, 6), 6, 6, vec![(0, 3), (2, 2), (5, 0)]).unwrap();
        t.verify_marginals().unwrap();
        let total = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .fold(Weight::zero(), |acc, (i, j)| acc + t.weight(i, j));
        assert_eq!(total, Weight::one());
        assert_eq!(t.weight(0, 3), Weight::new(1, 6));
        assert_eq!(t.weight(1, 1), Weight::new(1, 18));
        assert_eq!(t.weight(0, 1), Weight::zero());
    }

    #[test]
    fn perfect_matching_has_no_residual() {
        let t = CouplingTable::new(Weight::new(1, 3), 3, 3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(t.residual_mass(), Weight::zero());
        assert_eq!(t.mass_where(|_, _| true), Weight::one());
        t.verify_marginals().unwrap();
    }

    #[test]
    fn rejects_non_matchings() {
        assert!(CouplingTable::new(Weight::new(1, 3), 3, 3, vec![(0, 1), (1, 1)]).is_err());
        assert!(CouplingTable::new(Weight::new(1, 4), 3, 3, vec![]).is_err());
    }

    #[test]
    fn sampling_follows_weights() {
        let t = CouplingTable::new(Weight::new(1, 4), 4, 4, vec![(0, 0), (1, 1)]).unwrap();
        let mut rng = RandomStream::new(1, 0);
        let mut counts = [[0u32; 4]; 4];
        let draws = 80_000;
        for _ in 0..draws {
            let (i, j) = t.sample_pair(&mut rng);
            counts[i][j] += 1;
        }
        for i in 0..4 {
            for j in 0..4 {
                let w = t.weight(i, j);
                let p = *w.numer() as f64 / *w.denom() as f64;
                let f = f64::from(counts[i][j]) / f64::from(draws);
                assert!((f - p).abs() < 0.01, "({i},{j}): {f} vs {p}");
            }
        }
    }
}
