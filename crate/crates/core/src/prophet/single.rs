//! Single-item stopping rules.

use crate::dist::{expected_max, validate_all, DistributionSpec, Estimator, RandomSource};
use crate::error::Result;

/// A fixed-threshold stopping rule for picking one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingleItemRule {
    /// Threshold `E[max_i w_i] / 2`; stops at the first `w_i >= T`.
    HalfExpectedMax { threshold: f64 },
    /// Smallest threshold with `Pr(max_i w_i > T) <= 1/2`; stops at the first
    /// `w_i >= T`, so atoms at the threshold are taken.
    Median { threshold: f64 },
}

impl SingleItemRule {
    pub fn half_expected_max(
        dists: &[DistributionSpec],
        estimator: Estimator,
        source: RandomSource,
    ) -> Result<Self> {
        Ok(SingleItemRule::HalfExpectedMax {
            threshold: 0.5 * expected_max(dists, estimator, source)?,
        })
    }

    pub fn median(dists: &[DistributionSpec]) -> Result<Self> {
        Ok(SingleItemRule::Median {
            threshold: median_threshold(dists)?,
        })
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            SingleItemRule::HalfExpectedMax { threshold } | SingleItemRule::Median { threshold } => {
                threshold
            }
        }
    }

    /// Value of the element the rule stops at, 0 if it never stops.
    pub fn select(&self, weights: &[f64], order: &[usize]) -> f64 {
        let threshold = self.threshold();
        order
            .iter()
            .map(|&i| weights[i])
            .find(|&w| w >= threshold)
            .unwrap_or(0.0)
    }
}

/// `inf { t >= 0 : Pr(max_i w_i > t) <= 1/2 }`.
pub fn median_threshold(dists: &[DistributionSpec]) -> Result<f64> {
    validate_all(dists)?;
    let max_cdf = |t: f64| dists.iter().map(|d| d.cdf(t)).product::<f64>();
    let reached = |t: f64| max_cdf(t) >= 0.5 - 1e-12;

    if dists.iter().all(DistributionSpec::is_discrete) {
        let mut candidates: Vec<f64> = std::iter::once(0.0)
            .chain(dists.iter().flat_map(|d| match d {
                DistributionSpec::Discrete { support } => support.iter().map(|s| s.0).collect(),
                _ => Vec::new(),
            }))
            .collect();
        candidates.sort_by(f64::total_cmp);
        return Ok(candidates
            .into_iter()
            .find(|&t| reached(t))
            .expect("the largest support value has cdf 1"));
    }

    let mut hi = 1.0;
    while !reached(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    if reached(lo) {
        return Ok(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: RandomSource = RandomSource { seed: 5, stream: 0 };

    fn tight_pair(eps: f64) -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::point_mass(1.0),
            DistributionSpec::Discrete {
                support: vec![(0.0, 1.0 - eps), (1.0 / eps, eps)],
            },
        ]
    }

    #[test]
    fn tight_pair_takes_the_sure_thing() {
        let dists = tight_pair(0.01);
        let rule = SingleItemRule::half_expected_max(&dists, Estimator::Exact, SRC).unwrap();
        assert!((rule.threshold() - 0.995).abs() < 1e-12);
        assert_eq!(rule.select(&[1.0, 100.0], &[0, 1]), 1.0);
        assert_eq!(rule.select(&[1.0, 0.0], &[0, 1]), 1.0);
    }

    #[test]
    fn single_point_mass() {
        let dists = [DistributionSpec::point_mass(5.0)];
        let kw = SingleItemRule::half_expected_max(&dists, Estimator::Exact, SRC).unwrap();
        let med = SingleItemRule::median(&dists).unwrap();
        assert_eq!(kw.select(&[5.0], &[0]), 5.0);
        assert_eq!(med.threshold(), 5.0);
        assert_eq!(med.select(&[4.0], &[0]), 0.0);
        assert_eq!(med.select(&[5.0], &[0]), 5.0);
    }

    #[test]
    fn median_conventions() {
        let coin = DistributionSpec::Discrete {
            support: vec![(0.0, 0.5), (1.0, 0.5)],
        };
        // max of two coins: Pr(max = 0) = 1/4, so T = 1.
        assert_eq!(median_threshold(&[coin.clone(), coin]).unwrap(), 1.0);
        let u = DistributionSpec::Uniform { lo: 0.0, hi: 1.0 };
        let t = median_threshold(&[u.clone(), u]).unwrap();
        assert!((t - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn uniform_pair_meets_half() {
        let u = DistributionSpec::Uniform { lo: 0.0, hi: 1.0 };
        let dists = vec![u.clone(), u];
        // E[max] = 2/3 for two iid uniforms.
        let rule = SingleItemRule::HalfExpectedMax { threshold: 1.0 / 3.0 };
        let mut rng = RandomSource::new(99, 0).rng();
        let n = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let w: Vec<f64> = dists.iter().map(|d| d.sample(&mut rng)).collect();
            let v = rule.select(&w, &[0, 1]);
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!(mean >= 0.5 * 2.0 / 3.0 - 3.0 * sd / (n as f64).sqrt());
        let mc = expected_max(&dists, Estimator::MonteCarlo { samples: 100_000 }, SRC).unwrap();
        assert!((mc - 2.0 / 3.0).abs() < 0.01);
    }
}
