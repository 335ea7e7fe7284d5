//! Weights, per-element weight distributions and the randomness contract.
//!
//! Every random quantity in the crate is drawn from a [`RandomSource`], a
//! `(seed, stream)` pair that deterministically names a ChaCha stream. Trials
//! use their index as the stream id so that results do not depend on how work
//! is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a discrete distribution.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of joint outcomes an exact enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// A non-negative, finite reward.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Weight(f64);

impl Weight {
    pub const ZERO: Weight = Weight(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::validation(
                "weight",
                format!("{value} is not a finite non-negative number"),
            ));
        }
        Ok(Weight(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Weight {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Weight::new(value)
    }
}

impl From<Weight> for f64 {
    fn from(w: Weight) -> f64 {
        w.0
    }
}

/// Distribution of a single element's weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Finite support given as `(value, probability)` pairs.
    Discrete { support: Vec<(f64, f64)> },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
}

impl DistributionSpec {
    pub fn point_mass(value: f64) -> Self {
        DistributionSpec::Discrete {
            support: vec![(value, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Discrete { support } => {
                if support.is_empty() {
                    return Err(Error::validation("support", "empty discrete support"));
                }
                let mut total = 0.0;
                for (k, &(v, p)) in support.iter().enumerate() {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::validation(
                            format!("support[{k}].value"),
                            format!("{v} is not a finite non-negative weight"),
                        ));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::validation(
                            format!("support[{k}].probability"),
                            format!("{p} is outside [0, 1]"),
                        ));
                    }
                    if support[..k].iter().any(|&(u, _)| u == v) {
                        return Err(Error::validation(
                            format!("support[{k}].value"),
                            format!("duplicate support value {v}"),
                        ));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                    return Err(Error::validation(
                        "support",
                        format!("probabilities sum to {total}, expected 1"),
                    ));
                }
                Ok(())
            }
            DistributionSpec::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || *lo < 0.0 || lo > hi {
                    return Err(Error::validation(
                        "uniform",
                        format!("need 0 <= lo <= hi, got lo={lo} hi={hi}"),
                    ));
                }
                Ok(())
            }
            DistributionSpec::Exponential { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::validation(
                        "exponential.rate",
                        format!("rate must be positive, got {rate}"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DistributionSpec::Discrete { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionSpec::Discrete { support } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, p) in support {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                // rounding slack in the cumulative sum
                support
                    .iter()
                    .rev()
                    .find(|&&(_, p)| p > 0.0)
                    .map(|&(v, _)| v)
                    .unwrap_or(support[0].0)
            }
            DistributionSpec::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            DistributionSpec::Exponential { rate } => {
                Exp::new(*rate).expect("validated rate").sample(rng)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Discrete { support } => support.iter().map(|&(v, p)| v * p).sum(),
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::Exponential { rate } => 1.0 / rate,
        }
    }

    /// `Pr(W <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DistributionSpec::Discrete { support } => support
                .iter()
                .filter(|&&(v, _)| v <= x)
                .map(|&(_, p)| p)
                .sum::<f64>()
                .min(1.0),
            DistributionSpec::Uniform { lo, hi } => {
                if x < *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            DistributionSpec::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
        }
    }

    /// Smallest `m` with `Pr(W <= m) >= 1/2`.
    pub fn median(&self) -> f64 {
        match self {
            DistributionSpec::Discrete { support } => {
                let mut values: Vec<(f64, f64)> = support.clone();
                values.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                for (v, p) in &values {
                    acc += p;
                    if acc >= 0.5 - PROBABILITY_TOLERANCE {
                        return *v;
                    }
                }
                values.last().map(|v| v.0).unwrap_or(0.0)
            }
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::Exponential { rate } => std::f64::consts::LN_2 / rate,
        }
    }
}

pub fn validate_all(dists: &[DistributionSpec]) -> Result<()> {
    if dists.is_empty() {
        return Err(Error::validation("distributions", "at least one is required"));
    }
    for (i, d) in dists.iter().enumerate() {
        d.validate().map_err(|e| match e {
            Error::Validation { field, message } => {
                Error::validation(format!("distributions[{i}].{field}"), message)
            }
            other => other,
        })?;
    }
    Ok(())
}

/// One realized weight per ground-set element, indexed by element id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment(Vec<Weight>);

impl WeightAssignment {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        values
            .into_iter()
            .map(Weight::new)
            .collect::<Result<Vec<_>>>()
            .map(WeightAssignment)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, element: usize) -> f64 {
        self.0[element].get()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().map(|w| w.get()).collect()
    }
}

/// Names a reproducible stream of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        RandomSource { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws one weight per distribution, independently.
pub fn sample_assignment<R: Rng + ?Sized>(
    dists: &[DistributionSpec],
    rng: &mut R,
) -> Result<WeightAssignment> {
    validate_all(dists)?;
    Ok(sample_unchecked(dists, rng))
}

pub(crate) fn sample_unchecked<R: Rng + ?Sized>(
    dists: &[DistributionSpec],
    rng: &mut R,
) -> WeightAssignment {
    WeightAssignment(dists.iter().map(|d| Weight(d.sample(rng))).collect())
}

/// All joint outcomes of independent discrete distributions with their
/// product probabilities. The last element varies fastest.
pub fn enumerate_support(
    dists: &[DistributionSpec],
    cap: u128,
) -> Result<Vec<(WeightAssignment, f64)>> {
    validate_all(dists)?;
    let mut supports = Vec::with_capacity(dists.len());
    let mut size: u128 = 1;
    for d in dists {
        match d {
            DistributionSpec::Discrete { support } => {
                size = size.saturating_mul(support.len() as u128);
                supports.push(support.as_slice());
            }
            _ => return Err(Error::UnsupportedExact),
        }
    }
    if size > cap {
        return Err(Error::TooLarge {
            what: "joint support",
            size,
            limit: cap,
        });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut idx = vec![0usize; supports.len()];
    loop {
        let mut prob = 1.0;
        let mut values = Vec::with_capacity(supports.len());
        for (s, &k) in supports.iter().zip(&idx) {
            values.push(Weight(s[k].0));
            prob *= s[k].1;
        }
        out.push((WeightAssignment(values), prob));

        let mut pos = supports.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < supports[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// How an expectation over weight draws is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    Exact,
    MonteCarlo { samples: u64 },
}

/// `E[max_i w_i]`.
pub fn expected_max(
    dists: &[DistributionSpec],
    estimator: Estimator,
    source: RandomSource,
) -> Result<f64> {
    validate_all(dists)?;
    match estimator {
        Estimator::Exact => {
            let outcomes = enumerate_support(dists, DEFAULT_ENUMERATION_CAP)?;
            Ok(outcomes
                .iter()
                .map(|(w, p)| p * w.0.iter().map(|x| x.get()).fold(0.0, f64::max))
                .sum())
        }
        Estimator::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(Error::validation("estimator.samples", "must be positive"));
            }
            let mut rng = source.rng();
            let mut total = 0.0;
            for _ in 0..samples {
                total += dists
                    .iter()
                    .map(|d| d.sample(&mut rng))
                    .fold(0.0, f64::max);
            }
            Ok(total / samples as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(support: &[(f64, f64)]) -> DistributionSpec {
        DistributionSpec::Discrete {
            support: support.to_vec(),
        }
    }

    #[test]
    fn point_masses_sample_exactly() {
        let dists = [DistributionSpec::point_mass(5.0), DistributionSpec::point_mass(3.0)];
        let mut rng = RandomSource::new(7, 0).rng();
        let w = sample_assignment(&dists, &mut rng).unwrap();
        assert_eq!(w.to_vec(), vec![5.0, 3.0]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let dists = [disc(&[(1.0, 0.5), (2.0, 0.5)])];
        let draw = |s| {
            let mut rng = RandomSource::new(s, 3).rng();
            (0..20)
                .map(|_| sample_assignment(&dists, &mut rng).unwrap().get(0))
                .collect::<Vec<_>>()
        };
        let a = draw(42);
        assert_eq!(a, draw(42));
        assert!(a.iter().all(|&v| v == 1.0 || v == 2.0));
        assert!(a.contains(&1.0) && a.contains(&2.0));
    }

    #[test]
    fn distinct_streams_differ() {
        let a: u64 = RandomSource::new(1, 0).rng().random();
        let b: u64 = RandomSource::new(1, 1).rng().random();
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_mean_converges() {
        let dists = [DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }];
        let mut rng = RandomSource::new(11, 0).rng();
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let v = sample_assignment(&dists, &mut rng).unwrap().get(0);
            assert!((0.0..=1.0).contains(&v));
            total += v;
        }
        assert!((total / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_mass() {
        let dists = [disc(&[(1.0, 0.5), (2.0, 0.4)])];
        let mut rng = RandomSource::new(0, 0).rng();
        let err = sample_assignment(&dists, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "distributions[0].support"));
    }

    #[test]
    fn rejects_duplicates_and_bad_params() {
        assert!(disc(&[(1.0, 0.5), (1.0, 0.5)]).validate().is_err());
        assert!(disc(&[(-1.0, 1.0)]).validate().is_err());
        assert!(DistributionSpec::Uniform { lo: 2.0, hi: 1.0 }.validate().is_err());
        assert!(DistributionSpec::Exponential { rate: 0.0 }.validate().is_err());
    }

    #[test]
    fn enumerate_point_masses() {
        let dists = [DistributionSpec::point_mass(5.0), DistributionSpec::point_mass(3.0)];
        let out = enumerate_support(&dists, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1, 1.0);
    }

    #[test]
    fn enumerate_product_rule() {
        let dists = [disc(&[(1.0, 0.5), (2.0, 0.5)]), disc(&[(0.0, 0.3), (4.0, 0.7)])];
        let out = enumerate_support(&dists, DEFAULT_ENUMERATION_CAP).unwrap();
        let probs: Vec<f64> = out.iter().map(|o| o.1).collect();
        let expected = [0.15, 0.35, 0.15, 0.35];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(out[1].0.to_vec(), vec![1.0, 4.0]);
    }

    #[test]
    fn enumerate_three_by_three() {
        let d = disc(&[(0.0, 0.2), (1.0, 0.3), (2.0, 0.5)]);
        let out = enumerate_support(&[d.clone(), d.clone(), d], DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(out.len(), 27);
        let total: f64 = out.iter().map(|o| o.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumerate_errors() {
        let cont = [DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }];
        assert_eq!(
            enumerate_support(&cont, DEFAULT_ENUMERATION_CAP).unwrap_err(),
            Error::UnsupportedExact
        );
        let d = disc(&[(0.0, 0.5), (1.0, 0.5)]);
        let big = vec![d; 11];
        assert!(matches!(
            enumerate_support(&big, 1000),
            Err(Error::TooLarge { size: 2048, .. })
        ));
    }

    #[test]
    fn expected_max_examples() {
        let src = RandomSource::new(0, 0);
        let pm = [DistributionSpec::point_mass(5.0), DistributionSpec::point_mass(3.0)];
        assert_eq!(expected_max(&pm, Estimator::Exact, src).unwrap(), 5.0);

        let tight = [
            DistributionSpec::point_mass(1.0),
            disc(&[(0.0, 0.99), (100.0, 0.01)]),
        ];
        assert!((expected_max(&tight, Estimator::Exact, src).unwrap() - 1.99).abs() < 1e-12);

        let coin = disc(&[(0.0, 0.5), (1.0, 0.5)]);
        let iid = [coin.clone(), coin];
        assert!((expected_max(&iid, Estimator::Exact, src).unwrap() - 0.75).abs() < 1e-15);

        let cont = [DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }];
        assert_eq!(
            expected_max(&cont, Estimator::Exact, src).unwrap_err(),
            Error::UnsupportedExact
        );
    }

    #[test]
    fn median_and_cdf() {
        let d = disc(&[(0.0, 0.3), (1.0, 0.3), (5.0, 0.4)]);
        assert_eq!(d.median(), 1.0);
        assert!((d.cdf(1.0) - 0.6).abs() < 1e-15);
        let e = DistributionSpec::Exponential { rate: 2.0 };
        assert!((e.cdf(e.median()) - 0.5).abs() < 1e-12);
    }
}
