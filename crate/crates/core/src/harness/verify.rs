//! Executable checks of the algorithm's structural identities and
//! inequalities over fuzzed and configured instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmatroid::{BlockMatroid, BlockWeights, CardinalityVector};
use crate::dist::{enumerate_support, sample_assignment, DistributionSpec, RandomSource, WeightAssignment};
use crate::error::{Error, Result};
use crate::harness::adversary::Adversary;
use crate::harness::experiment::{close, in_pool, ExperimentConfig, IDENTITY_TOLERANCE};
use crate::harness::fuzz::FuzzInstance;
use crate::polymatroid::{
    brute_force_max, greedy_max, is_member, Allocation, BRUTE_FORCE_MAX_N, BRUTE_FORCE_MAX_VALUE,
};
use crate::prophet::{run_polymatroid, Mutation, PolymatroidRun, ThresholdEstimator, ThresholdOracle};

pub const DEFAULT_BUDGET: u64 = 1000;
pub const FUZZ_MAX_N: usize = 4;
pub const FUZZ_MAX_SUPPORT: usize = 3;
/// Draws of the configured instance checked alongside the fuzz budget.
pub const CONFIG_DRAWS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    /// Every prefix of the selection is independent and `z ∈ P_f`.
    Feasibility,
    /// Selected thresholds sum to half the expected complement `E[w'(C(A))]`.
    ThresholdSum,
    /// Surrogate thresholds never decrease within a block run.
    SurrogateMonotone,
    /// `T = t` whenever `t <= w`, and `T > w` otherwise.
    SurrogateAgreement,
    /// `(w − T)^+ = (w − t)^+` at every step.
    SurplusEquality,
    /// Along a block chain the drops `g(A + (k−1)e) − g(A + ke)` never decrease.
    DiminishingDrops,
    /// `Σ_j [g(a_j) − g(a_j + r_j e_j)] <= w'(R(A))` with `a_j` the counts at
    /// block `j`'s start.
    RemainderDropBound,
    /// Adding one addable copy removes exactly one copy from `R(A)`.
    CriticalElement,
    /// `R(A) ⊆ B` and `A + R(A)` is a basis.
    Complementarity,
    /// Moving block `j`'s part of `R(A)` into `A` deletes exactly that part.
    DeletionIdentity,
    /// Polymatroid objective equals the matroid run's selected weight.
    ReductionValue,
    /// Polymatroid greedy optimum equals the matroid max-weight basis.
    ReductionOpt,
    /// Polymatroid greedy equals brute force.
    OfflineOptimum,
}

impl Property {
    pub const ALL: [Property; 13] = [
        Property::Feasibility,
        Property::ThresholdSum,
        Property::SurrogateMonotone,
        Property::SurrogateAgreement,
        Property::SurplusEquality,
        Property::DiminishingDrops,
        Property::RemainderDropBound,
        Property::CriticalElement,
        Property::Complementarity,
        Property::DeletionIdentity,
        Property::ReductionValue,
        Property::ReductionOpt,
        Property::OfflineOptimum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Feasibility => "feasibility",
            Property::ThresholdSum => "threshold-sum",
            Property::SurrogateMonotone => "surrogate-monotone",
            Property::SurrogateAgreement => "surrogate-agreement",
            Property::SurplusEquality => "surplus-equality",
            Property::DiminishingDrops => "diminishing-drops",
            Property::RemainderDropBound => "remainder-drop-bound",
            Property::CriticalElement => "critical-element",
            Property::Complementarity => "complementarity",
            Property::DeletionIdentity => "deletion-identity",
            Property::ReductionValue => "reduction-value",
            Property::ReductionOpt => "reduction-opt",
            Property::OfflineOptimum => "offline-optimum",
        }
    }
}

/// Where a failing case came from and how to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Origin {
    /// `FuzzInstance::generate(seed, index, ..)`.
    Fuzz { seed: u64, index: u64 },
    /// Trial `trial` of the configured experiment.
    Config { seed: u64, trial: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub origin: Origin,
    pub detail: String,
    /// The smallest failing fuzz instance, in full.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<FuzzInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub property: Property,
    pub checked: u64,
    pub failures: u64,
    pub counterexample: Option<Counterexample>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub instances_checked: u64,
    pub config_draws_checked: u64,
    pub properties: Vec<PropertyOutcome>,
    pub warnings: Vec<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn outcome(&self, property: Property) -> &PropertyOutcome {
        self.properties
            .iter()
            .find(|o| o.property == property)
            .expect("every property is reported")
    }

    pub fn failed(&self) -> impl Iterator<Item = &PropertyOutcome> {
        self.properties.iter().filter(|o| !o.passed())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub budget: u64,
    pub max_n: usize,
    pub max_support: usize,
    pub mutation: Option<Mutation>,
    pub jobs: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            budget: DEFAULT_BUDGET,
            max_n: FUZZ_MAX_N,
            max_support: FUZZ_MAX_SUPPORT,
            mutation: None,
            jobs: None,
        }
    }
}

/// Checks every [`Property`] on `budget` fuzzed instances seeded by
/// `config.seed`, plus the first draws of the configured instance itself
/// when its distributions allow exact expectations.
pub fn verify_properties(config: &ExperimentConfig, budget: u64) -> Result<PropertyReport> {
    verify_properties_with(config, VerifyOptions { budget, ..VerifyOptions::default() })
}

type Findings = Vec<(Property, Option<String>)>;

pub fn verify_properties_with(config: &ExperimentConfig, options: VerifyOptions) -> Result<PropertyReport> {
    config.validate()?;
    let seed = config.seed;
    let mut warnings = Vec::new();
    if options.budget == 0 {
        warnings.push("0 instances checked: fuzz budget is 0".to_string());
    }

    let fuzz: Vec<Result<(FuzzInstance, Findings)>> = in_pool(options.jobs, || {
        (0..options.budget)
            .into_par_iter()
            .map(|index| {
                let inst = FuzzInstance::generate(seed, index, options.max_n, options.max_support);
                let findings = check_fuzz_instance(&inst, options.mutation)?;
                Ok((inst, findings))
            })
            .collect()
    })?;

    let exact_ok = config.distributions.iter().all(DistributionSpec::is_discrete)
        && enumerate_support(&config.distributions, crate::dist::DEFAULT_ENUMERATION_CAP).is_ok();
    let config_findings: Vec<(u64, Findings)> = if exact_ok {
        check_config(config, options)?
    } else {
        warnings.push(
            "configured instance skipped: identity checks need discrete distributions".to_string(),
        );
        Vec::new()
    };

    let mut outcomes: Vec<PropertyOutcome> = Property::ALL
        .iter()
        .map(|&property| PropertyOutcome {
            property,
            checked: 0,
            failures: 0,
            counterexample: None,
        })
        .collect();
    let slot = |p: Property| Property::ALL.iter().position(|&q| q == p).expect("listed");

    for (trial, findings) in &config_findings {
        for (p, failure) in findings {
            let o = &mut outcomes[slot(*p)];
            o.checked += 1;
            if let Some(detail) = failure {
                o.failures += 1;
                if o.counterexample.is_none() {
                    o.counterexample = Some(Counterexample {
                        origin: Origin::Config { seed, trial: *trial },
                        detail: detail.clone(),
                        instance: None,
                    });
                }
            }
        }
    }
    let mut smallest: Vec<Option<(usize, FuzzInstance, String)>> = vec![None; outcomes.len()];
    for (index, item) in fuzz.into_iter().enumerate() {
        let (inst, findings) = item.map_err(|e| Error::Trial {
            trial: index as u64,
            source: Box::new(e),
        })?;
        for (p, failure) in findings {
            let k = slot(p);
            outcomes[k].checked += 1;
            if let Some(detail) = failure {
                outcomes[k].failures += 1;
                let size = instance_size(&inst);
                if smallest[k].as_ref().is_none_or(|s| size < s.0) {
                    smallest[k] = Some((size, inst.clone(), detail));
                }
            }
        }
    }
    for (o, s) in outcomes.iter_mut().zip(smallest) {
        if let (None, Some((_, inst, detail))) = (&o.counterexample, s) {
            o.counterexample = Some(Counterexample {
                origin: Origin::Fuzz {
                    seed: inst.seed,
                    index: inst.index,
                },
                detail,
                instance: Some(inst),
            });
        }
    }

    Ok(PropertyReport {
        seed,
        instances_checked: options.budget,
        config_draws_checked: config_findings.len() as u64,
        properties: outcomes,
        warnings,
    })
}

fn instance_size(inst: &FuzzInstance) -> usize {
    let support: usize = inst
        .distributions
        .iter()
        .map(|d| match d {
            DistributionSpec::Discrete { support } => support.len(),
            _ => 1,
        })
        .sum();
    inst.weights.len() * 100 + support
}

fn check_fuzz_instance(inst: &FuzzInstance, mutation: Option<Mutation>) -> Result<Findings> {
    let matroid = BlockMatroid::build(&inst.submodular)?;
    let oracle = ThresholdOracle::new(
        &matroid,
        &inst.distributions,
        ThresholdEstimator::exact(),
        RandomSource::new(inst.seed, inst.index),
    )?
    .with_mutation(mutation);
    let mut rng = RandomSource::new(inst.seed ^ 0x0adf_ee75, inst.index).rng();
    let mut adversary = inst.adversary.instantiate(&inst.distributions, &mut rng);
    let weights = WeightAssignment::new(inst.weights.clone())?;
    check_case(&oracle, &weights, &mut adversary, true)
}

fn check_config(config: &ExperimentConfig, options: VerifyOptions) -> Result<Vec<(u64, Findings)>> {
    let matroid = BlockMatroid::build(&config.submodular)?;
    let oracle = ThresholdOracle::new(
        &matroid,
        &config.distributions,
        ThresholdEstimator::exact(),
        RandomSource::new(config.seed, u64::MAX),
    )?
    .with_mutation(options.mutation);
    let brute = matroid.n() <= BRUTE_FORCE_MAX_N && matroid.rank() <= BRUTE_FORCE_MAX_VALUE;
    let draws = config.trials.min(CONFIG_DRAWS);
    let results: Vec<Result<(u64, Findings)>> = in_pool(options.jobs, || {
        (0..draws)
            .into_par_iter()
            .map(|trial| {
                let mut rng = RandomSource::new(config.seed, trial).rng();
                let w = sample_assignment(&config.distributions, &mut rng)?;
                let mut adversary = config.adversary.instantiate(&config.distributions, &mut rng);
                Ok((trial, check_case(&oracle, &w, &mut adversary, brute)?))
            })
            .collect()
    })?;
    results
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| Error::Trial {
                trial: k as u64,
                source: Box::new(e),
            })
        })
        .collect()
}

fn le(a: f64, b: f64) -> bool {
    a <= b || (a.is_finite() && b.is_finite() && a - b <= IDENTITY_TOLERANCE * a.abs().max(b.abs()).max(1.0))
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && close(a, b))
}

fn check_case(
    oracle: &ThresholdOracle<'_>,
    weights: &WeightAssignment,
    adversary: &mut Adversary,
    brute: bool,
) -> Result<Findings> {
    let matroid = oracle.matroid();
    let table = matroid.table();
    let w = weights.to_vec();
    let run: PolymatroidRun = run_polymatroid(oracle, weights, adversary)?;
    let trace = &run.trace;
    let counts = CardinalityVector(run.allocation.0.clone());
    let mut out: Findings = Vec::new();
    let mut push = |p: Property, failure: Option<String>| out.push((p, failure));

    // selection
    let mut feasible = is_member(table, &run.allocation)?;
    for s in &trace.steps {
        feasible &= matroid.is_independent(&s.counts)?;
    }
    push(
        Property::Feasibility,
        (!feasible).then(|| format!("selection {:?} is dependent", run.allocation.0)),
    );

    let lhs = trace.selected_threshold_sum();
    let rhs = 0.5 * oracle.expected_complement(&counts);
    push(
        Property::ThresholdSum,
        (!same(lhs, rhs)).then(|| {
            format!("selected thresholds sum to {lhs}, half the expected complement is {rhs}")
        }),
    );

    for r in &trace.runs {
        let t = oracle.surrogate_thresholds(&r.start, r.block)?;
        let bad = t.windows(2).position(|p| !le(p[0], p[1]));
        push(
            Property::SurrogateMonotone,
            bad.map(|k| format!("block {} surrogates {t:?} drop at position {k}", r.block)),
        );
    }

    for s in &trace.steps {
        let ok = if s.surrogate <= s.weight {
            same(s.threshold, s.surrogate)
        } else {
            s.threshold > s.weight
        };
        push(
            Property::SurrogateAgreement,
            (!ok).then(|| {
                format!(
                    "{:?}: weight {} threshold {} surrogate {}",
                    s.element, s.weight, s.threshold, s.surrogate
                )
            }),
        );
        let gain = |x: f64| (s.weight - x).max(0.0);
        push(
            Property::SurplusEquality,
            (!same(gain(s.threshold), gain(s.surrogate))).then(|| {
                format!(
                    "{:?}: (w-T)+ = {} but (w-t)+ = {}",
                    s.element,
                    gain(s.threshold),
                    gain(s.surrogate)
                )
            }),
        );
    }

    // per draw of w'
    let mut prefixes: Vec<CardinalityVector> = vec![CardinalityVector::zeros(matroid.n())];
    prefixes.extend(trace.steps.iter().map(|s| s.counts.clone()));
    prefixes.dedup();
    let rank = matroid.rank();
    let (mut drops_fail, mut bound_fail, mut critical_fail, mut comp_fail, mut deletion_fail) =
        (None, None, None, None, None);
    for (draw, (_, plan)) in oracle.pool().draws().enumerate() {
        let g = |a: &CardinalityVector| matroid.g_unchecked(a, plan);

        for r in &trace.runs {
            let mut a = r.start.clone();
            let mut prev_drop = f64::NEG_INFINITY;
            while oracle.can_add(&a, r.block) {
                let next = a.with_added(r.block, 1);
                let d = g(&a) - g(&next);
                if !le(prev_drop, d) && drops_fail.is_none() {
                    drops_fail = Some(format!(
                        "draw {draw}, block {} from {:?}: drop {d} after {prev_drop}",
                        r.block, r.start.0
                    ));
                }
                prev_drop = d;
                a = next;
            }
        }

        let rem = matroid.remainder_counts(&counts, plan);
        let mut drop_sum = 0.0;
        for r in &trace.runs {
            let rj = rem.0[r.block];
            drop_sum += g(&r.start) - g(&r.start.with_added(r.block, rj));
        }
        let bound = rem.weight(&plan.weights);
        if !le(drop_sum, bound) && bound_fail.is_none() {
            bound_fail = Some(format!("draw {draw}: drops sum to {drop_sum} > w'(R(A)) = {bound}"));
        }

        for a in &prefixes {
            let ra = matroid.remainder_counts(a, plan);
            for x in 0..matroid.n() {
                if !oracle.can_add(a, x) {
                    continue;
                }
                let rx = matroid.remainder_counts(&a.with_added(x, 1), plan);
                let diff: Option<Vec<u64>> =
                    ra.0.iter().zip(&rx.0).map(|(p, q)| p.checked_sub(*q)).collect();
                let ok = diff.as_ref().is_some_and(|d| d.iter().sum::<u64>() == 1);
                if !ok && critical_fail.is_none() {
                    critical_fail = Some(format!(
                        "draw {draw}: R({:?}) = {:?}, adding block {x} gives {:?}",
                        a.0, ra.0, rx.0
                    ));
                }
            }
            let union = Allocation(a.0.iter().zip(&ra.0).map(|(p, q)| p + q).collect());
            let comp_ok = ra.0.iter().zip(&plan.basis.0).all(|(r, b)| r <= b)
                && union.total() == rank
                && is_member(table, &union)?;
            if !comp_ok && comp_fail.is_none() {
                comp_fail = Some(format!(
                    "draw {draw}: A = {:?}, R(A) = {:?}, B = {:?}",
                    a.0, ra.0, plan.basis.0
                ));
            }
        }

        for j in 0..matroid.n() {
            let rj = rem.0[j];
            if rj == 0 {
                continue;
            }
            let moved = matroid.remainder_counts(&counts.with_added(j, rj), plan);
            let mut expect = rem.clone();
            expect.0[j] = 0;
            if moved != expect && deletion_fail.is_none() {
                deletion_fail = Some(format!(
                    "draw {draw}: R(A + R_{j}) = {:?}, expected {:?}",
                    moved.0, expect.0
                ));
            }
        }
    }
    push(Property::DiminishingDrops, drops_fail);
    push(Property::RemainderDropBound, bound_fail);
    push(Property::CriticalElement, critical_fail);
    push(Property::Complementarity, comp_fail);
    push(Property::DeletionIdentity, deletion_fail);

    // reduction and offline optimum
    push(
        Property::ReductionValue,
        (!close(run.objective, run.matroid_value)).then(|| {
            format!("objective {} vs matroid weight {}", run.objective, run.matroid_value)
        }),
    );
    let (_, opt) = greedy_max(table, &w)?;
    let bw = BlockWeights(w.clone());
    let mopt = bw.set_weight(&matroid.max_weight_basis(&bw)?);
    push(
        Property::ReductionOpt,
        (!close(opt, mopt)).then(|| format!("greedy {opt} vs matroid basis {mopt}")),
    );
    if brute {
        let (_, b) = brute_force_max(table, &w)?;
        push(
            Property::OfflineOptimum,
            (!close(opt, b)).then(|| format!("greedy {opt} vs brute force {b}")),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::adversary::AdversaryPolicy;
    use crate::submodular::SubmodularSpec;

    fn blocks21() -> ExperimentConfig {
        ExperimentConfig {
            submodular: SubmodularSpec::ExplicitTable {
                n: 2,
                values: vec![0, 2, 1, 2],
            },
            distributions: vec![DistributionSpec::point_mass(3.0), DistributionSpec::point_mass(5.0)],
            adversary: AdversaryPolicy::FixedOrder { order: vec![0, 1] },
            estimator: ThresholdEstimator::exact(),
            trials: 10,
            seed: 3,
        }
    }

    #[test]
    fn deterministic_example_passes_without_fuzzing() {
        let r = verify_properties(&blocks21(), 0).unwrap();
        assert!(r.passed(), "{}", r.to_json());
        assert_eq!(r.config_draws_checked, 10);
        assert!(r.warnings[0].starts_with("0 instances checked"));
    }

    #[test]
    fn small_fuzz_budget_passes() {
        let r = verify_properties(&blocks21(), 60).unwrap();
        assert!(r.passed(), "{}", r.to_json());
        assert!(r.outcome(Property::DiminishingDrops).checked > 0);
    }

    #[test]
    fn halved_thresholds_are_caught() {
        let opts = VerifyOptions {
            budget: 0,
            mutation: Some(Mutation::HalveThresholds),
            ..VerifyOptions::default()
        };
        let r = verify_properties_with(&blocks21(), opts).unwrap();
        let o = r.outcome(Property::ThresholdSum);
        assert!(o.failures > 0);
        assert!(o.counterexample.is_some());
    }
}
