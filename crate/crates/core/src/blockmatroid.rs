//! The block-structured matroid `M_f` of an integer polymatroid.
//!
//! Block `i` holds `M_i` interchangeable copies of ground element `i`; a set of
//! copies is independent iff its cardinality vector lies in `P_f`. Because
//! independence only sees counts, nearly everything here works on
//! [`CardinalityVector`]s. Copy identities ([`Copy`]) appear only where the
//! presentation order matters.
//!
//! For a weight draw `w'` the max-weight basis `B` is the greedy basis, and for
//! an independent `A` the remainder `R(A) ⊆ B` is the heaviest part of `B` that
//! completes `A` to a basis; `g(A) = w'(R(A))`. Both are computed by walking
//! blocks in decreasing `w'` (ties by block index) and taking as many copies as
//! stay feasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polymatroid::{self, capped_rank, max_increment, weight_order, Allocation};
use crate::submodular::{polymatroid_table, FunctionTable, SubmodularSpec};

/// How many copies each block receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSizing {
    /// `M_i = f({u_i})`, the most copies any feasible vector can use.
    #[default]
    SingletonCaps,
    /// `M_i = f(U)` for every block.
    Uniform,
}

/// `(|S ∩ B_1|, .., |S ∩ B_n|)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CardinalityVector(pub Vec<u64>);

impl CardinalityVector {
    pub fn zeros(n: usize) -> Self {
        CardinalityVector(vec![0; n])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn with_added(&self, block: usize, count: u64) -> Self {
        let mut next = self.clone();
        next.0[block] += count;
        next
    }

    pub fn weight(&self, weights: &BlockWeights) -> f64 {
        self.0
            .iter()
            .zip(&weights.0)
            .map(|(&c, &w)| c as f64 * w)
            .sum()
    }
}

/// One matroid element: copy `copy` of block `block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Copy {
    pub block: usize,
    pub copy: u64,
}

/// One weight per block, shared by all copies in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights(pub Vec<f64>);

impl BlockWeights {
    pub fn of(&self, element: Copy) -> f64 {
        self.0[element.block]
    }

    pub fn set_weight(&self, set: &[Copy]) -> f64 {
        set.iter().map(|&c| self.of(c)).sum()
    }
}

pub fn cvec_of(n: usize, set: &[Copy]) -> CardinalityVector {
    let mut c = CardinalityVector::zeros(n);
    for x in set {
        c.0[x.block] += 1;
    }
    c
}

/// `R(A)` and its complement `C(A)` inside the max-weight basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Remainder {
    pub basis: CardinalityVector,
    pub remainder: CardinalityVector,
}

impl Remainder {
    pub fn complement(&self) -> CardinalityVector {
        CardinalityVector(
            self.basis
                .0
                .iter()
                .zip(&self.remainder.0)
                .map(|(b, r)| b - r)
                .collect(),
        )
    }

    /// Copies of `R(A)`: within each block the lowest-indexed copies of `B`.
    pub fn copies(&self) -> Vec<Copy> {
        counts_to_copies(&self.remainder)
    }
}

fn counts_to_copies(c: &CardinalityVector) -> Vec<Copy> {
    c.0.iter()
        .enumerate()
        .flat_map(|(block, &k)| (0..k).map(move |copy| Copy { block, copy }))
        .collect()
}

/// Max-weight basis of a weight draw in count form, with the block order
/// used to build it. Reused for every `g` evaluation under that draw.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPlan {
    pub weights: BlockWeights,
    pub order: Vec<usize>,
    pub basis: CardinalityVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatroid {
    table: FunctionTable,
    sizes: Vec<u64>,
}

impl BlockMatroid {
    pub fn build(spec: &SubmodularSpec) -> Result<Self> {
        Self::build_with(spec, BlockSizing::SingletonCaps)
    }

    pub fn build_with(spec: &SubmodularSpec, sizing: BlockSizing) -> Result<Self> {
        Ok(Self::from_table(polymatroid_table(spec)?, sizing))
    }

    /// The table must already be a polymatroid.
    pub fn from_table(table: FunctionTable, sizing: BlockSizing) -> Self {
        let n = table.n();
        let sizes = match sizing {
            BlockSizing::SingletonCaps => (0..n).map(|i| table.value(1 << i)).collect(),
            BlockSizing::Uniform => vec![table.value(table.full_set()); n],
        };
        BlockMatroid { table, sizes }
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn table(&self) -> &FunctionTable {
        &self.table
    }

    /// Matroid rank, `f(U)`.
    pub fn rank(&self) -> u64 {
        self.table.value(self.table.full_set())
    }

    pub fn ground_size(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn ground(&self) -> Vec<Copy> {
        counts_to_copies(&CardinalityVector(self.sizes.clone()))
    }

    fn check_bounds(&self, c: &CardinalityVector) -> Result<()> {
        if c.0.len() != self.n() {
            return Err(Error::Precondition(format!(
                "cardinality vector has {} entries for {} blocks",
                c.0.len(),
                self.n()
            )));
        }
        if let Some(i) = (0..self.n()).find(|&i| c.0[i] > self.sizes[i]) {
            return Err(Error::Precondition(format!(
                "block {i} holds {} copies, asked for {}",
                self.sizes[i], c.0[i]
            )));
        }
        Ok(())
    }

    pub fn is_independent(&self, c: &CardinalityVector) -> Result<bool> {
        self.check_bounds(c)?;
        polymatroid::is_member(&self.table, &Allocation(c.0.clone()))
    }

    /// Independence of an explicit set of copies.
    pub fn is_independent_set(&self, set: &[Copy]) -> Result<bool> {
        let mut seen = std::collections::HashSet::new();
        for x in set {
            if x.block >= self.n() || x.copy >= self.sizes[x.block] || !seen.insert(*x) {
                return Err(Error::Precondition(format!("{x:?} is not a distinct ground element")));
            }
        }
        self.is_independent(&cvec_of(self.n(), set))
    }

    /// Whether one more copy of `block` is spanned by a set with counts `c`.
    pub fn is_spanned(&self, block: usize, c: &CardinalityVector) -> Result<bool> {
        self.check_bounds(c)?;
        if block >= self.n() {
            return Err(Error::Precondition(format!("no block {block}")));
        }
        if c.0[block] >= self.sizes[block] {
            return Ok(true);
        }
        let base = capped_rank(&self.table, &c.0);
        let grown = capped_rank(&self.table, &c.with_added(block, 1).0);
        Ok(grown == base)
    }

    /// Greedy over individual copies by decreasing weight, ties by
    /// `(block, copy)`, keeping every copy that leaves the set independent.
    pub fn max_weight_basis(&self, weights: &BlockWeights) -> Result<Vec<Copy>> {
        self.check_weights(weights)?;
        let mut ground = self.ground();
        ground.sort_by(|a, b| {
            weights
                .of(*b)
                .total_cmp(&weights.of(*a))
                .then(a.cmp(b))
        });
        let mut basis = Vec::new();
        let mut counts = CardinalityVector::zeros(self.n());
        for x in ground {
            let next = counts.with_added(x.block, 1);
            if polymatroid::is_member(&self.table, &Allocation(next.0.clone()))? {
                counts = next;
                basis.push(x);
            }
        }
        Ok(basis)
    }

    fn check_weights(&self, weights: &BlockWeights) -> Result<()> {
        if weights.0.len() != self.n() {
            return Err(Error::Precondition(format!(
                "{} block weights for {} blocks",
                weights.0.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Max-weight basis in count form; agrees with [`Self::max_weight_basis`].
    pub fn plan(&self, weights: BlockWeights) -> BasisPlan {
        let order = weight_order(&weights.0);
        let basis = self.greedy_fill(&CardinalityVector::zeros(self.n()), &order, None);
        BasisPlan {
            weights,
            order,
            basis,
        }
    }

    /// Walks `order`, adding to `start` as many copies of each block as stay
    /// feasible (at most `limit[i]` when given). Returns the added counts.
    fn greedy_fill(
        &self,
        start: &CardinalityVector,
        order: &[usize],
        limit: Option<&CardinalityVector>,
    ) -> CardinalityVector {
        let mut current = start.0.clone();
        let mut added = CardinalityVector::zeros(self.n());
        for &i in order {
            let cap = limit.map_or(self.sizes[i], |l| l.0[i]);
            let room = self.sizes[i] - current[i].min(self.sizes[i]);
            let k = cap.min(room).min(max_increment(&self.table, &current, i));
            current[i] += k;
            added.0[i] = k;
        }
        added
    }

    /// `R(A)` for an already-validated independent `a`.
    pub(crate) fn remainder_counts(&self, a: &CardinalityVector, plan: &BasisPlan) -> CardinalityVector {
        self.greedy_fill(a, &plan.order, Some(&plan.basis))
    }

    pub(crate) fn g_unchecked(&self, a: &CardinalityVector, plan: &BasisPlan) -> f64 {
        self.remainder_counts(a, plan).weight(&plan.weights)
    }

    pub fn remainder(&self, a: &CardinalityVector, weights: &BlockWeights) -> Result<Remainder> {
        self.check_weights(weights)?;
        if !self.is_independent(a)? {
            return Err(Error::Precondition(format!("{:?} is not independent", a.0)));
        }
        let plan = self.plan(weights.clone());
        let remainder = self.remainder_counts(a, &plan);
        Ok(Remainder {
            basis: plan.basis,
            remainder,
        })
    }

    /// `g(A) = w'(R(A))`.
    pub fn g_value(&self, a: &CardinalityVector, weights: &BlockWeights) -> Result<f64> {
        Ok(self.remainder(a, weights)?.remainder.weight(weights))
    }

    /// `R'(A)`: same counts as `R(A)` but, in every block, the copies that
    /// come first in `presentation`.
    pub fn earliest_remainder(
        &self,
        a: &CardinalityVector,
        weights: &BlockWeights,
        presentation: &[Copy],
    ) -> Result<Vec<Copy>> {
        let mut sorted = presentation.to_vec();
        sorted.sort();
        if sorted != self.ground() {
            return Err(Error::Precondition(
                "presentation order must list every ground element exactly once".into(),
            ));
        }
        let mut need = self.remainder(a, weights)?.remainder;
        let mut out = Vec::new();
        for &x in presentation {
            if need.0[x.block] > 0 {
                need.0[x.block] -= 1;
                out.push(x);
            }
        }
        Ok(out)
    }

    /// Brute-force check of the exchange axiom over all independent sets of
    /// copies. Returns the first failing pair `(I, J)` as ground-set bitmasks.
    pub fn exchange_counterexample(&self, max_ground: u64) -> Result<Option<(u64, u64)>> {
        let g = self.ground_size();
        if g > max_ground || g > 30 {
            return Err(Error::TooLarge {
                what: "matroid ground set",
                size: g as u128,
                limit: max_ground.min(30) as u128,
            });
        }
        let ground = self.ground();
        let mut block_masks = vec![0u64; self.n()];
        for (pos, x) in ground.iter().enumerate() {
            block_masks[x.block] |= 1 << pos;
        }
        let counts = |mask: u64| -> Vec<u64> {
            block_masks
                .iter()
                .map(|&b| (mask & b).count_ones() as u64)
                .collect()
        };
        let rank = self.rank() as usize;
        let mut by_size: Vec<Vec<(u64, u64)>> = vec![Vec::new(); rank + 2];
        for mask in 0..1u64 << g {
            let size = mask.count_ones() as usize;
            if size > rank + 1 {
                continue;
            }
            let c = counts(mask);
            if !polymatroid::is_member(&self.table, &Allocation(c.clone()))? {
                continue;
            }
            let mut addable = 0u64;
            for (i, &bm) in block_masks.iter().enumerate() {
                if max_increment(&self.table, &c, i) > 0 {
                    addable |= bm & !mask;
                }
            }
            by_size[size].push((mask, addable));
        }
        for k in 0..=rank {
            for &(small, addable) in &by_size[k] {
                for &(big, _) in &by_size[k + 1] {
                    if big & !small & addable == 0 {
                        return Ok(Some((small, big)));
                    }
                }
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_matroid(values: &[u64]) -> BlockMatroid {
        let n = values.len().trailing_zeros() as usize;
        BlockMatroid::build(&SubmodularSpec::ExplicitTable {
            n,
            values: values.to_vec(),
        })
        .unwrap()
    }

    fn cv(v: &[u64]) -> CardinalityVector {
        CardinalityVector(v.to_vec())
    }

    fn bw(v: &[f64]) -> BlockWeights {
        BlockWeights(v.to_vec())
    }

    /// f({u}) = 2, f({v}) = 1, f({u,v}) = 2.
    fn blocks_21() -> BlockMatroid {
        table_matroid(&[0, 2, 1, 2])
    }

    #[test]
    fn build_and_independence() {
        let m = table_matroid(&[0, 2, 2, 3]);
        assert_eq!(m.sizes(), &[2, 2]);
        assert!(m.is_independent(&cv(&[2, 1])).unwrap());
        assert!(!m.is_independent(&cv(&[2, 2])).unwrap());
        assert!(m.is_independent(&cv(&[3, 0])).is_err());

        let r = BlockMatroid::build(&SubmodularSpec::UniformRank { n: 2, k: 1 }).unwrap();
        assert_eq!(r.sizes(), &[1, 1]);
        assert!(!r.is_independent(&cv(&[1, 1])).unwrap());
    }

    #[test]
    fn rejects_non_polymatroid() {
        let bad = SubmodularSpec::ExplicitTable {
            n: 2,
            values: vec![0, 1, 1, 3],
        };
        assert!(matches!(BlockMatroid::build(&bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn span_examples() {
        let r = BlockMatroid::build(&SubmodularSpec::UniformRank { n: 2, k: 1 }).unwrap();
        assert!(r.is_spanned(1, &cv(&[1, 0])).unwrap());
        assert!(!r.is_spanned(1, &cv(&[0, 0])).unwrap());
        let m = table_matroid(&[0, 2, 2, 3]);
        assert!(!m.is_spanned(1, &cv(&[2, 0])).unwrap());
        assert!(m.is_spanned(1, &cv(&[2, 1])).unwrap());
        assert!(!m.is_spanned(0, &cv(&[0, 0])).unwrap());
    }

    #[test]
    fn basis_examples() {
        let m = table_matroid(&[0, 2, 2, 3]);
        let w = bw(&[3.0, 5.0]);
        let basis = m.max_weight_basis(&w).unwrap();
        assert_eq!(cvec_of(2, &basis), cv(&[1, 2]));
        assert_eq!(w.set_weight(&basis), 13.0);
        assert_eq!(m.plan(w).basis, cv(&[1, 2]));

        let m = blocks_21();
        let w = bw(&[3.0, 5.0]);
        let basis = m.max_weight_basis(&w).unwrap();
        assert_eq!(basis, vec![Copy { block: 1, copy: 0 }, Copy { block: 0, copy: 0 }]);
        assert_eq!(w.set_weight(&basis), 8.0);

        let zero = m.max_weight_basis(&bw(&[0.0, 0.0])).unwrap();
        assert_eq!(zero.len() as u64, m.rank());
    }

    #[test]
    fn remainder_examples() {
        let m = blocks_21();
        let w = bw(&[3.0, 5.0]);
        let empty = m.remainder(&cv(&[0, 0]), &w).unwrap();
        assert_eq!(empty.remainder, empty.basis);
        assert_eq!(m.g_value(&cv(&[0, 0]), &w).unwrap(), 8.0);

        let one = m.remainder(&cv(&[1, 0]), &w).unwrap();
        assert_eq!(one.remainder, cv(&[0, 1]));
        assert_eq!(one.complement(), cv(&[1, 0]));
        assert_eq!(m.g_value(&cv(&[1, 0]), &w).unwrap(), 5.0);
        assert_eq!(m.g_value(&cv(&[2, 0]), &w).unwrap(), 0.0);
        assert!(m.remainder(&cv(&[2, 1]), &w).is_err());

        let r = BlockMatroid::build(&SubmodularSpec::UniformRank { n: 2, k: 1 }).unwrap();
        let w = bw(&[1.0, 4.0]);
        let rem = r.remainder(&cv(&[1, 0]), &w).unwrap();
        assert_eq!(rem.remainder, cv(&[0, 0]));
        assert_eq!(rem.complement(), cv(&[0, 1]));
    }

    #[test]
    fn earliest_remainder_takes_first_presented() {
        let m = blocks_21();
        let w = bw(&[5.0, 3.0]);
        // B = 2 copies of block 0; R(∅) = B.
        let forward = vec![
            Copy { block: 0, copy: 0 },
            Copy { block: 0, copy: 1 },
            Copy { block: 1, copy: 0 },
        ];
        let r = m.earliest_remainder(&cv(&[0, 0]), &w, &forward).unwrap();
        assert_eq!(r, vec![Copy { block: 0, copy: 0 }, Copy { block: 0, copy: 1 }]);

        // A holds one u-copy, so R(A) has one u-copy; presented as (copy1, copy0).
        let reversed = vec![
            Copy { block: 0, copy: 1 },
            Copy { block: 0, copy: 0 },
            Copy { block: 1, copy: 0 },
        ];
        let rem = m.remainder(&cv(&[1, 0]), &w).unwrap();
        assert_eq!(rem.copies(), vec![Copy { block: 0, copy: 0 }]);
        let r = m.earliest_remainder(&cv(&[1, 0]), &w, &reversed).unwrap();
        assert_eq!(r, vec![Copy { block: 0, copy: 1 }]);
        assert!(m.earliest_remainder(&cv(&[0, 0]), &w, &reversed[..2]).is_err());
    }

    #[test]
    fn exchange_axiom_small() {
        let m = table_matroid(&[0, 2, 2, 3]);
        assert_eq!(m.exchange_counterexample(20).unwrap(), None);
        let u = BlockMatroid::build_with(
            &SubmodularSpec::ExplicitTable {
                n: 2,
                values: vec![0, 2, 2, 3],
            },
            BlockSizing::Uniform,
        )
        .unwrap();
        assert_eq!(u.sizes(), &[3, 3]);
        assert_eq!(u.exchange_counterexample(20).unwrap(), None);
    }
}
