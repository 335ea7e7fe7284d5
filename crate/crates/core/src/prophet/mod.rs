//! Threshold-based online selection on the block matroid and its polymatroid
//! front end.
//!
//! When copy `x` of block `i` arrives with the selected set at counts `A`, the
//! threshold is `+inf` if `A + x` is dependent and otherwise
//! `½·E[g(A) − g(A + x)]`, the expectation taken over an independent weight
//! draw `w'`. The copy is taken iff its weight is at least the threshold.
//!
//! The expectation only depends on the counts of `A` and on the block, so a
//! [`ThresholdOracle`] caches it under that key. Exact mode enumerates every
//! joint outcome of discrete distributions; Monte-Carlo mode averages over a
//! fixed pool of draws taken from a dedicated random stream.

mod single;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::blockmatroid::{BasisPlan, BlockMatroid, BlockWeights, CardinalityVector, Copy};
use crate::dist::{
    enumerate_support, sample_unchecked, validate_all, DistributionSpec, Estimator, RandomSource,
    WeightAssignment, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::polymatroid::{max_increment, Allocation};

pub use single::{median_threshold, SingleItemRule};

/// Default Monte-Carlo pool size for threshold estimation.
pub const DEFAULT_POOL_SIZE: u64 = 4096;

/// How thresholds are estimated: `kind = "exact"` or
/// `kind = "monte_carlo"` with `samples`, plus an optional `cache` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EstimatorRepr", into = "EstimatorRepr")]
pub struct ThresholdEstimator {
    pub mode: Estimator,
    pub cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EstimatorKind {
    Exact,
    MonteCarlo,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorRepr {
    kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(default = "default_true")]
    cache: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<EstimatorRepr> for ThresholdEstimator {
    type Error = Error;

    fn try_from(r: EstimatorRepr) -> Result<Self> {
        let mode = match (r.kind, r.samples) {
            (EstimatorKind::Exact, None) => Estimator::Exact,
            (EstimatorKind::Exact, Some(_)) => {
                return Err(Error::validation("estimator.samples", "exact mode takes no samples"))
            }
            (EstimatorKind::MonteCarlo, Some(samples)) => Estimator::MonteCarlo { samples },
            (EstimatorKind::MonteCarlo, None) => {
                return Err(Error::validation("estimator.samples", "required for monte_carlo"))
            }
        };
        Ok(ThresholdEstimator {
            mode,
            cache: r.cache,
        })
    }
}

impl From<ThresholdEstimator> for EstimatorRepr {
    fn from(e: ThresholdEstimator) -> Self {
        let (kind, samples) = match e.mode {
            Estimator::Exact => (EstimatorKind::Exact, None),
            Estimator::MonteCarlo { samples } => (EstimatorKind::MonteCarlo, Some(samples)),
        };
        EstimatorRepr {
            kind,
            samples,
            cache: e.cache,
        }
    }
}

impl ThresholdEstimator {
    pub fn exact() -> Self {
        ThresholdEstimator {
            mode: Estimator::Exact,
            cache: true,
        }
    }

    pub fn monte_carlo(samples: u64) -> Self {
        ThresholdEstimator {
            mode: Estimator::MonteCarlo { samples },
            cache: true,
        }
    }
}

/// Deliberately broken variants of the algorithm, used to check that the
/// property suite notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    HalveThresholds,
}

/// Weighted draws of `w'`, each with its max-weight basis precomputed.
#[derive(Debug, Clone)]
pub struct WeightPool {
    draws: Vec<(f64, BasisPlan)>,
}

impl WeightPool {
    /// Every joint outcome of discrete distributions.
    pub fn exact(matroid: &BlockMatroid, dists: &[DistributionSpec], cap: u128) -> Result<Self> {
        check_dims(matroid, dists)?;
        let draws = enumerate_support(dists, cap)?
            .into_iter()
            .map(|(w, p)| (p, matroid.plan(BlockWeights(w.to_vec()))))
            .collect();
        Ok(WeightPool { draws })
    }

    pub fn sampled(
        matroid: &BlockMatroid,
        dists: &[DistributionSpec],
        samples: u64,
        source: RandomSource,
    ) -> Result<Self> {
        check_dims(matroid, dists)?;
        validate_all(dists)?;
        let mut rng = source.rng();
        let draws = (0..samples)
            .map(|_| sample_unchecked(dists, &mut rng).to_vec())
            .collect();
        Self::from_draws(matroid, draws)
    }

    /// Equally weighted draws.
    pub fn from_draws(matroid: &BlockMatroid, draws: Vec<Vec<f64>>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::validation("estimator.samples", "must be positive"));
        }
        let p = 1.0 / draws.len() as f64;
        let draws = draws
            .into_iter()
            .map(|w| {
                if w.len() != matroid.n() {
                    return Err(Error::validation("weights", "draw has wrong length"));
                }
                WeightAssignment::new(w.clone())?;
                Ok((p, matroid.plan(BlockWeights(w))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightPool { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> impl Iterator<Item = (f64, &BasisPlan)> {
        self.draws.iter().map(|(p, plan)| (*p, plan))
    }
}

fn check_dims(matroid: &BlockMatroid, dists: &[DistributionSpec]) -> Result<()> {
    if dists.len() != matroid.n() {
        return Err(Error::validation(
            "distributions",
            format!(
                "{} distributions for a ground set of {} elements",
                dists.len(),
                matroid.n()
            ),
        ));
    }
    Ok(())
}

type CacheKey = (Vec<u64>, usize);

/// Thresholds `T(A, i)` over a fixed pool of `w'` draws.
#[derive(Debug)]
pub struct ThresholdOracle<'m> {
    matroid: &'m BlockMatroid,
    pool: WeightPool,
    cache: Option<RwLock<HashMap<CacheKey, f64>>>,
    factor: f64,
}

impl<'m> ThresholdOracle<'m> {
    /// Builds the `w'` pool for `estimator`. Monte-Carlo pools are drawn
    /// from `source`, which callers keep separate from the streams used for
    /// the realized weights.
    pub fn new(
        matroid: &'m BlockMatroid,
        dists: &[DistributionSpec],
        estimator: ThresholdEstimator,
        source: RandomSource,
    ) -> Result<Self> {
        let pool = match estimator.mode {
            Estimator::Exact => WeightPool::exact(matroid, dists, DEFAULT_ENUMERATION_CAP)?,
            Estimator::MonteCarlo { samples } => {
                WeightPool::sampled(matroid, dists, samples, source)?
            }
        };
        Ok(Self::with_pool(matroid, pool, estimator.cache))
    }

    pub fn with_pool(matroid: &'m BlockMatroid, pool: WeightPool, cache: bool) -> Self {
        ThresholdOracle {
            matroid,
            pool,
            cache: cache.then(|| RwLock::new(HashMap::new())),
            factor: 0.5,
        }
    }

    pub fn with_mutation(mut self, mutation: Option<Mutation>) -> Self {
        self.factor = match mutation {
            Some(Mutation::HalveThresholds) => 0.25,
            None => 0.5,
        };
        if let Some(c) = &self.cache {
            c.write().unwrap().clear();
        }
        self
    }

    pub fn matroid(&self) -> &'m BlockMatroid {
        self.matroid
    }

    pub fn pool(&self) -> &WeightPool {
        &self.pool
    }

    /// Whether one more copy of `block` keeps `a` independent.
    pub fn can_add(&self, a: &CardinalityVector, block: usize) -> bool {
        a.0[block] < self.matroid.sizes()[block]
            && max_increment(self.matroid.table(), &a.0, block) > 0
    }

    /// `T(A, i)`; `+inf` when `A + i` is dependent.
    pub fn threshold(&self, a: &CardinalityVector, block: usize) -> Result<f64> {
        if block >= self.matroid.n() {
            return Err(Error::Precondition(format!("no block {block}")));
        }
        if !self.matroid.is_independent(a)? {
            return Err(Error::Precondition(format!("{:?} is not independent", a.0)));
        }
        Ok(self.threshold_unchecked(a, block))
    }

    pub(crate) fn threshold_unchecked(&self, a: &CardinalityVector, block: usize) -> f64 {
        if !self.can_add(a, block) {
            return f64::INFINITY;
        }
        let Some(cache) = &self.cache else {
            return self.compute_threshold(a, block);
        };
        let key = (a.0.clone(), block);
        if let Some(&t) = cache.read().unwrap().get(&key) {
            return t;
        }
        let t = self.compute_threshold(a, block);
        cache.write().unwrap().insert(key, t);
        t
    }

    fn compute_threshold(&self, a: &CardinalityVector, block: usize) -> f64 {
        let grown = a.with_added(block, 1);
        let drop: f64 = self
            .pool
            .draws()
            .map(|(p, plan)| {
                p * (self.matroid.g_unchecked(a, plan) - self.matroid.g_unchecked(&grown, plan))
            })
            .sum();
        self.factor * drop
    }

    /// Surrogate thresholds of a block run starting at counts `start`: entry
    /// `k` is `½·E[g(start + k·e_i) − g(start + (k+1)·e_i)]`, or `+inf` once
    /// the chain becomes dependent.
    pub fn surrogate_thresholds(&self, start: &CardinalityVector, block: usize) -> Result<Vec<f64>> {
        self.threshold(start, block)?;
        Ok(self.surrogates_unchecked(start, block))
    }

    pub(crate) fn surrogates_unchecked(&self, start: &CardinalityVector, block: usize) -> Vec<f64> {
        let size = self.matroid.sizes()[block];
        let mut out = Vec::with_capacity(size as usize);
        let mut a = start.clone();
        let mut dependent = false;
        for _ in 0..size {
            if dependent || !self.can_add(&a, block) {
                dependent = true;
                out.push(f64::INFINITY);
                continue;
            }
            out.push(self.threshold_unchecked(&a, block));
            a.0[block] += 1;
        }
        out
    }

    /// `E[g(A)]` over the pool.
    pub fn expected_g(&self, a: &CardinalityVector) -> f64 {
        self.pool
            .draws()
            .map(|(p, plan)| p * self.matroid.g_unchecked(a, plan))
            .sum()
    }

    /// `E[w'(C(A))] = E[w'(B) − g(A)]`.
    pub fn expected_complement(&self, a: &CardinalityVector) -> f64 {
        self.pool
            .draws()
            .map(|(p, plan)| {
                p * (plan.basis.weight(&plan.weights) - self.matroid.g_unchecked(a, plan))
            })
            .sum()
    }
}

/// Chooses which block is presented next, seeing only weights already shown.
pub trait BlockAdversary {
    /// `revealed` lists `(block, weight)` in presentation order.
    fn next_block(&mut self, revealed: &[(usize, f64)]) -> Result<usize>;
}

/// Presents blocks in a fixed order.
impl BlockAdversary for std::vec::IntoIter<usize> {
    fn next_block(&mut self, _revealed: &[(usize, f64)]) -> Result<usize> {
        self.next().ok_or(Error::Exhausted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub element: Copy,
    /// Index of this copy within its block run.
    pub position: u64,
    pub weight: f64,
    pub threshold: f64,
    pub surrogate: f64,
    pub selected: bool,
    /// Counts of the selected set after this step.
    pub counts: CardinalityVector,
}

/// One block's consecutive run of steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRun {
    pub block: usize,
    /// Selected counts when the block began.
    pub start: CardinalityVector,
    pub steps: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AlgorithmTrace {
    pub steps: Vec<TraceStep>,
    pub runs: Vec<BlockRun>,
}

impl AlgorithmTrace {
    pub fn presentation(&self) -> Vec<Copy> {
        self.steps.iter().map(|s| s.element).collect()
    }

    /// Sum of thresholds over selected steps.
    pub fn selected_threshold_sum(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.selected)
            .map(|s| s.threshold)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatroidRun {
    pub selected: Vec<Copy>,
    pub counts: CardinalityVector,
    pub value: f64,
    pub trace: AlgorithmTrace,
}

struct Selector<'o, 'm> {
    oracle: &'o ThresholdOracle<'m>,
    weights: &'o BlockWeights,
    counts: CardinalityVector,
    selected: Vec<Copy>,
    value: f64,
    trace: AlgorithmTrace,
    surrogates: Vec<f64>,
    seen: Vec<Vec<bool>>,
}

impl<'o, 'm> Selector<'o, 'm> {
    fn new(oracle: &'o ThresholdOracle<'m>, weights: &'o BlockWeights) -> Result<Self> {
        let n = oracle.matroid().n();
        if weights.0.len() != n {
            return Err(Error::Precondition(format!(
                "{} weights for {n} blocks",
                weights.0.len()
            )));
        }
        Ok(Selector {
            oracle,
            weights,
            counts: CardinalityVector::zeros(n),
            selected: Vec::new(),
            value: 0.0,
            trace: AlgorithmTrace::default(),
            surrogates: Vec::new(),
            seen: oracle
                .matroid()
                .sizes()
                .iter()
                .map(|&m| vec![false; m as usize])
                .collect(),
        })
    }

    fn begin_block(&mut self, block: usize) {
        self.surrogates = self.oracle.surrogates_unchecked(&self.counts, block);
        let at = self.trace.steps.len();
        self.trace.runs.push(BlockRun {
            block,
            start: self.counts.clone(),
            steps: at..at,
        });
    }

    fn step(&mut self, element: Copy, threshold_override: Option<f64>) -> Result<bool> {
        let run = self.trace.runs.last_mut().expect("block begun");
        let position = (run.steps.end - run.steps.start) as u64;
        let weight = self.weights.of(element);
        let threshold = threshold_override
            .unwrap_or_else(|| self.oracle.threshold_unchecked(&self.counts, element.block));
        let selected = weight >= threshold;
        if selected {
            self.counts.0[element.block] += 1;
            self.selected.push(element);
            self.value += weight;
        }
        run.steps.end += 1;
        self.trace.steps.push(TraceStep {
            element,
            position,
            weight,
            threshold,
            surrogate: self.surrogates[position as usize],
            selected,
            counts: self.counts.clone(),
        });
        Ok(selected)
    }

    fn mark(&mut self, element: Copy) -> Result<()> {
        let sizes = self.oracle.matroid().sizes();
        if element.block >= sizes.len() || element.copy >= sizes[element.block] {
            return Err(Error::AdversaryContractViolation(format!(
                "{element:?} is not a ground element"
            )));
        }
        let slot = &mut self.seen[element.block][element.copy as usize];
        if *slot {
            return Err(Error::AdversaryContractViolation(format!(
                "{element:?} presented twice"
            )));
        }
        *slot = true;
        Ok(())
    }

    fn finish(self) -> Result<MatroidRun> {
        if self.seen.iter().flatten().any(|s| !s) {
            return Err(Error::AdversaryContractViolation(
                "not every ground element was presented".into(),
            ));
        }
        Ok(MatroidRun {
            selected: self.selected,
            counts: self.counts,
            value: self.value,
            trace: self.trace,
        })
    }
}

/// Runs the threshold rule on an explicit copy sequence, which must list
/// every ground element once with each block's copies consecutive.
pub fn run_matroid_sequence(
    oracle: &ThresholdOracle<'_>,
    weights: &BlockWeights,
    sequence: &[Copy],
) -> Result<MatroidRun> {
    let mut sel = Selector::new(oracle, weights)?;
    let mut finished = vec![false; oracle.matroid().n()];
    let mut current: Option<usize> = None;
    for &x in sequence {
        sel.mark(x)?;
        if current != Some(x.block) {
            if let Some(prev) = current {
                finished[prev] = true;
            }
            if finished[x.block] {
                return Err(Error::AdversaryContractViolation(format!(
                    "block {} resumed after another block",
                    x.block
                )));
            }
            current = Some(x.block);
            sel.begin_block(x.block);
        }
        sel.step(x, None)?;
    }
    sel.finish()
}

/// Runs the threshold rule against an adaptive block adversary. Each block's
/// copies are presented consecutively in copy order; the block weight is
/// revealed to the adversary once the block is done.
pub fn run_matroid(
    oracle: &ThresholdOracle<'_>,
    weights: &BlockWeights,
    adversary: &mut dyn BlockAdversary,
) -> Result<MatroidRun> {
    run_matroid_with(oracle, weights, adversary, None)
}

/// Maps a block and its surrogate thresholds to the prices actually posted.
type PriceRule<'a> = &'a dyn Fn(usize, &[f64]) -> Vec<f64>;

fn run_matroid_with(
    oracle: &ThresholdOracle<'_>,
    weights: &BlockWeights,
    adversary: &mut dyn BlockAdversary,
    price_rule: Option<PriceRule<'_>>,
) -> Result<MatroidRun> {
    let n = oracle.matroid().n();
    let mut sel = Selector::new(oracle, weights)?;
    let mut revealed: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut presented = vec![false; n];
    for _ in 0..n {
        let block = adversary.next_block(&revealed)?;
        if block >= n || presented[block] {
            return Err(Error::AdversaryContractViolation(format!(
                "block {block} is not an unpresented block"
            )));
        }
        presented[block] = true;
        sel.begin_block(block);
        let overrides = price_rule.map(|rule| rule(block, &sel.surrogates));
        for copy in 0..oracle.matroid().sizes()[block] {
            let x = Copy { block, copy };
            sel.mark(x)?;
            let forced = overrides.as_ref().map(|o| o[copy as usize]);
            sel.step(x, forced)?;
        }
        revealed.push((block, weights.0[block]));
    }
    sel.finish()
}

/// Outcome of the polymatroid algorithm on one weight realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymatroidRun {
    pub allocation: Allocation,
    /// `w·z`.
    pub objective: f64,
    /// Weight of the copies selected by the internal matroid run.
    pub matroid_value: f64,
    pub block_order: Vec<usize>,
    pub trace: AlgorithmTrace,
}

/// The polymatroid algorithm: element `i` becomes a block of copies with
/// weight `w_i`, and `z_i` is the number of copies the matroid rule keeps.
pub fn run_polymatroid(
    oracle: &ThresholdOracle<'_>,
    weights: &WeightAssignment,
    adversary: &mut dyn BlockAdversary,
) -> Result<PolymatroidRun> {
    let w = weights.to_vec();
    let run = run_matroid(oracle, &BlockWeights(w.clone()), adversary)?;
    let allocation = Allocation(run.counts.0.clone());
    let objective = allocation.value(&w);
    Ok(PolymatroidRun {
        objective,
        matroid_value: run.value,
        block_order: run.trace.runs.iter().map(|r| r.block).collect(),
        allocation,
        trace: run.trace,
    })
}

/// Like [`run_polymatroid`], but `rule(block, surrogates)` supplies the
/// thresholds each block's copies face. Used by posted pricing, where the
/// menu is fixed when the agent arrives.
pub(crate) fn run_polymatroid_with_menu(
    oracle: &ThresholdOracle<'_>,
    weights: &[f64],
    adversary: &mut dyn BlockAdversary,
    rule: &dyn Fn(usize, &[f64]) -> Vec<f64>,
) -> Result<MatroidRun> {
    run_matroid_with(oracle, &BlockWeights(weights.to_vec()), adversary, Some(rule))
}
