use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::prophet::BlockAdversary;

/// How blocks (ground elements) are ordered for presentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryPolicy {
    FixedOrder { order: Vec<usize> },
    /// A fresh uniformly random permutation per trial.
    UniformRandomOrder,
    /// After a reveal below that block's median, present the unpresented
    /// block with the largest mean next; otherwise the one with the smallest.
    /// Starts with the largest mean. Ties go to the lowest index.
    AdaptiveGreedy,
}

impl AdversaryPolicy {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let AdversaryPolicy::FixedOrder { order } = self {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(Error::validation(
                    "adversary.order",
                    format!("must be a permutation of 0..{n}"),
                ));
            }
        }
        Ok(())
    }

    /// Per-trial state. Random orders draw their permutation from `rng`.
    pub fn instantiate<R: Rng + ?Sized>(
        &self,
        dists: &[DistributionSpec],
        rng: &mut R,
    ) -> Adversary {
        let n = dists.len();
        match self {
            AdversaryPolicy::FixedOrder { order } => Adversary::Sequence(order.clone()),
            AdversaryPolicy::UniformRandomOrder => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                Adversary::Sequence(order)
            }
            AdversaryPolicy::AdaptiveGreedy => Adversary::Adaptive {
                means: dists.iter().map(DistributionSpec::mean).collect(),
                medians: dists.iter().map(DistributionSpec::median).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Adversary {
    Sequence(Vec<usize>),
    Adaptive { means: Vec<f64>, medians: Vec<f64> },
}

impl Adversary {
    /// Block order this adversary produces when the given weights are revealed.
    pub fn order_for(&mut self, weights: &[f64]) -> Result<Vec<usize>> {
        let mut revealed = Vec::with_capacity(weights.len());
        for _ in 0..weights.len() {
            let b = self.next_block(&revealed)?;
            revealed.push((b, weights[b]));
        }
        Ok(revealed.into_iter().map(|r| r.0).collect())
    }
}

impl BlockAdversary for Adversary {
    fn next_block(&mut self, revealed: &[(usize, f64)]) -> Result<usize> {
        match self {
            Adversary::Sequence(order) => order.get(revealed.len()).copied().ok_or(Error::Exhausted),
            Adversary::Adaptive { means, medians } => {
                let n = means.len();
                let mut presented = vec![false; n];
                for &(b, _) in revealed {
                    presented[b] = true;
                }
                let open = (0..n).filter(|&b| !presented[b]);
                let want_high = match revealed.last() {
                    None => true,
                    Some(&(b, w)) => w < medians[b],
                };
                let pick = if want_high {
                    open.fold(None, |best: Option<usize>, b| match best {
                        Some(c) if means[c] >= means[b] => Some(c),
                        _ => Some(b),
                    })
                } else {
                    open.fold(None, |best: Option<usize>, b| match best {
                        Some(c) if means[c] <= means[b] => Some(c),
                        _ => Some(b),
                    })
                };
                pick.ok_or(Error::Exhausted)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RandomSource;

    fn disc(s: &[(f64, f64)]) -> DistributionSpec {
        DistributionSpec::Discrete { support: s.to_vec() }
    }

    #[test]
    fn fixed_order_follows_permutation() {
        let dists = vec![DistributionSpec::point_mass(1.0); 3];
        let mut rng = RandomSource::new(0, 0).rng();
        let policy = AdversaryPolicy::FixedOrder { order: vec![1, 0, 2] };
        policy.validate(3).unwrap();
        let mut adv = policy.instantiate(&dists, &mut rng);
        assert_eq!(adv.next_block(&[]).unwrap(), 1);
        assert_eq!(adv.next_block(&[(1, 1.0)]).unwrap(), 0);
        assert_eq!(adv.next_block(&[(1, 1.0), (0, 1.0)]).unwrap(), 2);
        assert_eq!(
            adv.next_block(&[(1, 1.0), (0, 1.0), (2, 1.0)]).unwrap_err(),
            Error::Exhausted
        );
        assert!(AdversaryPolicy::FixedOrder { order: vec![0, 0, 2] }
            .validate(3)
            .is_err());
    }

    #[test]
    fn random_order_reproducible() {
        let dists = vec![DistributionSpec::point_mass(1.0); 6];
        let order = |seed| {
            let mut rng = RandomSource::new(seed, 4).rng();
            AdversaryPolicy::UniformRandomOrder
                .instantiate(&dists, &mut rng)
                .order_for(&[1.0; 6])
                .unwrap()
        };
        let a = order(3);
        assert_eq!(a, order(3));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn adaptive_scores_by_hand() {
        // means 2.0, 5.0, 1.0; medians 2.0 (block 0), 5.0, 1.0
        let dists = vec![
            disc(&[(1.0, 0.5), (3.0, 0.5)]),
            disc(&[(5.0, 1.0)]),
            disc(&[(0.0, 0.5), (2.0, 0.5)]),
        ];
        let mut rng = RandomSource::new(0, 0).rng();
        let mut adv = AdversaryPolicy::AdaptiveGreedy.instantiate(&dists, &mut rng);
        // nothing revealed: largest mean
        assert_eq!(adv.next_block(&[]).unwrap(), 1);
        // block 1 revealed at its median (not below): smallest remaining mean
        assert_eq!(adv.next_block(&[(1, 5.0)]).unwrap(), 2);
        // block 2 revealed 0 < median 0? median of block 2 is 0, so not below
        assert_eq!(adv.next_block(&[(1, 5.0), (2, 0.0)]).unwrap(), 0);

        let mut adv = AdversaryPolicy::AdaptiveGreedy.instantiate(&dists, &mut rng);
        assert_eq!(adv.order_for(&[3.0, 4.0, 2.0]).unwrap(), vec![1, 0, 2]);
        assert_eq!(adv.order_for(&[3.0, 5.0, 2.0]).unwrap(), vec![1, 2, 0]);
    }
}
