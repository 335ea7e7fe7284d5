use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blockmatroid::{BlockMatroid, BlockWeights};
use crate::dist::{sample_assignment, validate_all, DistributionSpec, Estimator, RandomSource};
use crate::error::{Error, Result};
use crate::harness::adversary::AdversaryPolicy;
use crate::polymatroid::{
    brute_force_max, greedy_max, is_member, BRUTE_FORCE_MAX_N, BRUTE_FORCE_MAX_VALUE,
};
use crate::prophet::{run_polymatroid, Mutation, ThresholdEstimator, ThresholdOracle};
use crate::submodular::{polymatroid_table, SubmodularSpec};

/// Stream reserved for the Monte-Carlo threshold pool. Trials use their index.
pub const POOL_STREAM: u64 = u64::MAX;

/// Trials at the start of a run whose OPT is also checked by brute force.
pub const BRUTE_FORCE_TRIALS: u64 = 100;

/// Version written in the CSV header comment.
pub const CSV_VERSION: u32 = 1;

/// Relative tolerance for identities that hold exactly in exact arithmetic
/// but are summed in different orders in floating point.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

pub(crate) fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= IDENTITY_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub submodular: SubmodularSpec,
    pub distributions: Vec<DistributionSpec>,
    pub adversary: AdversaryPolicy,
    pub estimator: ThresholdEstimator,
    pub trials: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be at least 1"));
        }
        self.submodular.check()?;
        polymatroid_table(&self.submodular)?;
        let n = self.submodular.ground_size();
        if self.distributions.len() != n {
            return Err(Error::validation(
                "distributions",
                format!(
                    "{} distributions for a ground set of {n} elements",
                    self.distributions.len()
                ),
            ));
        }
        validate_all(&self.distributions)?;
        self.adversary.validate(n)?;
        match self.estimator.mode {
            Estimator::MonteCarlo { samples: 0 } => {
                Err(Error::validation("estimator.samples", "must be positive"))
            }
            Estimator::Exact if !self.distributions.iter().all(DistributionSpec::is_discrete) => {
                Err(Error::UnsupportedExact)
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON form with the seed left out, so a
    /// report row is identified by `(config_hash, seed)`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("seed");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

/// Knobs that do not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's global pool.
    pub jobs: Option<usize>,
    pub mutation: Option<Mutation>,
}

pub(crate) fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::validation("jobs", "must be at least 1")),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean, standard error and covariance summaries of paired samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub mean_x: f64,
    pub mean_y: f64,
    pub se_x: f64,
    pub se_y: f64,
    /// `mean_x / mean_y`, or 1 when both means are 0.
    pub ratio: f64,
    /// Delta-method standard error of the ratio.
    pub ratio_se: f64,
}

impl PairedStats {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len() as f64;
        let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let denom = (n - 1.0).max(1.0);
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for &(x, y) in pairs {
            vx += (x - mean_x) * (x - mean_x);
            vy += (y - mean_y) * (y - mean_y);
            cxy += (x - mean_x) * (y - mean_y);
        }
        let (vx, vy, cxy) = (vx / denom, vy / denom, cxy / denom);
        let (ratio, ratio_se) = if mean_y > 0.0 {
            let r = mean_x / mean_y;
            let var = (vx + r * r * vy - 2.0 * r * cxy).max(0.0) / (mean_y * mean_y * n);
            (r, var.sqrt())
        } else if mean_x == 0.0 {
            (1.0, 0.0)
        } else {
            (f64::INFINITY, 0.0)
        };
        PairedStats {
            mean_x,
            mean_y,
            se_x: (vx / n).sqrt(),
            se_y: (vy / n).sqrt(),
            ratio,
            ratio_se,
        }
    }

    /// Normal-approximation 95% interval for the ratio.
    pub fn ratio_ci(&self) -> (f64, f64) {
        (self.ratio - 1.96 * self.ratio_se, self.ratio + 1.96 * self.ratio_se)
    }
}

/// Distribution of per-trial `ALG/OPT` over trials with positive OPT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDistribution {
    pub counted: u64,
    pub zero_opt_trials: u64,
    pub mean: f64,
    pub min: f64,
    pub p05: f64,
    pub median: f64,
    pub max: f64,
}

impl RatioDistribution {
    fn from_pairs(pairs: &[(f64, f64)]) -> Option<Self> {
        let mut r: Vec<f64> = pairs.iter().filter(|p| p.1 > 0.0).map(|p| p.0 / p.1).collect();
        if r.is_empty() {
            return None;
        }
        r.sort_by(f64::total_cmp);
        let at = |q: f64| r[((r.len() - 1) as f64 * q).round() as usize];
        Some(RatioDistribution {
            counted: r.len() as u64,
            zero_opt_trials: (pairs.len() - r.len()) as u64,
            mean: r.iter().sum::<f64>() / r.len() as f64,
            min: r[0],
            p05: at(0.05),
            median: at(0.5),
            max: r[r.len() - 1],
        })
    }
}

/// A failed check, replayable from `(seed, trial)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub trial: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub checked: u64,
    pub failures: u64,
    pub first_failure: Option<TrialFailure>,
}

impl CheckSummary {
    pub(crate) fn new(name: &str) -> Self {
        CheckSummary {
            name: name.into(),
            checked: 0,
            failures: 0,
            first_failure: None,
        }
    }

    pub(crate) fn record(&mut self, ok: bool, failure: impl FnOnce() -> TrialFailure) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(failure());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Welfare and revenue figures from a posted-pricing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSummary {
    pub welfare: f64,
    pub welfare_se: f64,
    pub opt_welfare: f64,
    /// Standard error of the paired difference `welfare − ½·opt`.
    pub welfare_gap_se: f64,
    pub revenue: f64,
    pub revenue_se: f64,
    /// Mean optimal virtual surplus.
    pub benchmark: f64,
    /// Standard error of the paired difference `revenue − ½·benchmark`.
    pub revenue_gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub trials: u64,
    pub mean_alg: f64,
    pub mean_opt: f64,
    pub se_alg: f64,
    pub se_opt: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub per_trial_ratio: Option<RatioDistribution>,
    pub checks: Vec<CheckSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSummary>,
}

impl ExperimentReport {
    pub(crate) fn from_pairs(
        config_hash: String,
        seed: u64,
        pairs: &[(f64, f64)],
        checks: Vec<CheckSummary>,
    ) -> Self {
        let stats = PairedStats::from_pairs(pairs);
        let (ci_lo, ci_hi) = stats.ratio_ci();
        ExperimentReport {
            config_hash,
            seed,
            trials: pairs.len() as u64,
            mean_alg: stats.mean_x,
            mean_opt: stats.mean_y,
            se_alg: stats.se_x,
            se_opt: stats.se_y,
            ratio: stats.ratio,
            ratio_se: stats.ratio_se,
            ci_lo,
            ci_hi,
            per_trial_ratio: RatioDistribution::from_pairs(pairs),
            checks,
            mechanism: None,
        }
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(CheckSummary::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header(mechanism: bool) -> Vec<&'static str> {
        let mut h = vec![
            "config_hash", "trials", "mean_alg", "mean_opt", "ratio", "ci_lo", "ci_hi", "seed",
        ];
        if mechanism {
            h.extend(["welfare", "revenue", "benchmark"]);
        }
        h
    }

    pub fn csv_record(&self, mechanism: bool) -> Vec<String> {
        let mut r = vec![
            self.config_hash.clone(),
            self.trials.to_string(),
            self.mean_alg.to_string(),
            self.mean_opt.to_string(),
            self.ratio.to_string(),
            self.ci_lo.to_string(),
            self.ci_hi.to_string(),
            self.seed.to_string(),
        ];
        if mechanism {
            let m = self.mechanism.as_ref();
            for v in [
                m.map(|m| m.welfare),
                m.map(|m| m.revenue),
                m.map(|m| m.benchmark),
            ] {
                r.push(v.map(|v| v.to_string()).unwrap_or_default());
            }
        }
        r
    }
}

/// Writes a versioned CSV: a `#` comment line, the header, then one row per
/// report. Mechanism columns are added when any report carries them.
pub fn write_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> std::io::Result<()> {
    let mechanism = reports.iter().any(|r| r.mechanism.is_some());
    let mut out = out;
    writeln!(out, "# polyprophet report v{CSV_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ExperimentReport::csv_header(mechanism))?;
    for r in reports {
        w.write_record(r.csv_record(mechanism))?;
    }
    w.flush()
}

/// Reads rows written by [`write_csv`] as `(column, value)` maps.
pub fn read_csv(text: &str) -> Result<Vec<Vec<(String, String)>>> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let bad = |e: csv::Error| Error::validation("csv", e.to_string());
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(bad)?;
            Ok(header.iter().cloned().zip(rec.iter().map(String::from)).collect())
        })
        .collect()
}

struct TrialOutcome {
    alg: f64,
    opt: f64,
    matroid_value: f64,
    matroid_opt: f64,
    feasible: bool,
    brute_opt: Option<f64>,
}

/// Runs `config.trials` independent trials. Trial `k` samples its weights and
/// adversary randomness from stream `k` of the seed; a Monte-Carlo threshold
/// pool comes from [`POOL_STREAM`]. Results are aggregated in trial order, so
/// the report does not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let matroid = BlockMatroid::build(&config.submodular)?;
    let oracle = ThresholdOracle::new(
        &matroid,
        &config.distributions,
        config.estimator,
        RandomSource::new(config.seed, POOL_STREAM),
    )?
    .with_mutation(options.mutation);
    let table = matroid.table();
    let brute_ok = table.n() <= BRUTE_FORCE_MAX_N && matroid.rank() <= BRUTE_FORCE_MAX_VALUE;

    let trial = |k: u64| -> Result<TrialOutcome> {
        let mut rng = RandomSource::new(config.seed, k).rng();
        let w = sample_assignment(&config.distributions, &mut rng)?;
        let mut adversary = config.adversary.instantiate(&config.distributions, &mut rng);
        let run = run_polymatroid(&oracle, &w, &mut adversary)?;
        let weights = w.to_vec();
        let (_, opt) = greedy_max(table, &weights)?;
        let bw = BlockWeights(weights.clone());
        let matroid_opt = bw.set_weight(&matroid.max_weight_basis(&bw)?);
        let brute_opt = if brute_ok && k < BRUTE_FORCE_TRIALS {
            Some(brute_force_max(table, &weights)?.1)
        } else {
            None
        };
        Ok(TrialOutcome {
            alg: run.objective,
            opt,
            matroid_value: run.matroid_value,
            matroid_opt,
            feasible: is_member(table, &run.allocation)?,
            brute_opt,
        })
    };

    let outcomes: Vec<Result<TrialOutcome>> = in_pool(options.jobs, || {
        (0..config.trials).into_par_iter().map(trial).collect()
    })?;

    let mut pairs = Vec::with_capacity(outcomes.len());
    let mut feasibility = CheckSummary::new("feasibility");
    let mut reduction = CheckSummary::new("reduction-value");
    let mut reduction_opt = CheckSummary::new("reduction-opt");
    let mut brute = CheckSummary::new("offline-greedy-optimal");
    for (k, outcome) in outcomes.into_iter().enumerate() {
        let k = k as u64;
        let o = outcome.map_err(|e| Error::Trial {
            trial: k,
            source: Box::new(e),
        })?;
        let fail = |detail: String| TrialFailure {
            seed: config.seed,
            trial: k,
            detail,
        };
        feasibility.record(o.feasible, || fail("allocation outside the polymatroid".into()));
        reduction.record(close(o.alg, o.matroid_value), || {
            fail(format!("objective {} vs matroid weight {}", o.alg, o.matroid_value))
        });
        reduction_opt.record(close(o.opt, o.matroid_opt), || {
            fail(format!("polymatroid OPT {} vs matroid OPT {}", o.opt, o.matroid_opt))
        });
        if let Some(b) = o.brute_opt {
            brute.record(close(o.opt, b), || fail(format!("greedy {} vs brute force {b}", o.opt)));
        }
        pairs.push((o.alg, o.opt));
    }
    Ok(ExperimentReport::from_pairs(
        config.hash(),
        config.seed,
        &pairs,
        vec![feasibility, reduction, reduction_opt, brute],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks21(trials: u64) -> ExperimentConfig {
        // f({0}) = 2, f({1}) = 1, f(U) = 2
        ExperimentConfig {
            submodular: SubmodularSpec::ExplicitTable {
                n: 2,
                values: vec![0, 2, 1, 2],
            },
            distributions: vec![
                DistributionSpec::Discrete {
                    support: vec![(3.0, 1.0)],
                },
                DistributionSpec::Discrete {
                    support: vec![(5.0, 1.0)],
                },
            ],
            adversary: AdversaryPolicy::FixedOrder { order: vec![0, 1] },
            estimator: ThresholdEstimator::exact(),
            trials,
            seed: 1,
        }
    }

    #[test]
    fn deterministic_blocks() {
        let r = run_experiment(&blocks21(50)).unwrap();
        assert_eq!(r.mean_alg, 6.0);
        assert_eq!(r.mean_opt, 8.0);
        assert_eq!(r.ratio, 0.75);
        assert_eq!(r.se_alg, 0.0);
        assert_eq!(r.ratio_se, 0.0);
        assert!(r.checks_passed());
    }

    #[test]
    fn reports_replay_and_ignore_jobs() {
        let mut c = blocks21(2000);
        c.distributions[1] = DistributionSpec::Uniform { lo: 0.0, hi: 6.0 };
        c.estimator = ThresholdEstimator::monte_carlo(256);
        c.adversary = AdversaryPolicy::UniformRandomOrder;
        let a = run_experiment_with(&c, RunOptions { jobs: Some(1), mutation: None }).unwrap();
        let b = run_experiment_with(&c, RunOptions { jobs: Some(3), mutation: None }).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        c.seed = 2;
        assert_ne!(run_experiment(&c).unwrap().mean_alg, a.mean_alg);
    }

    #[test]
    fn ratio_se_matches_delta_method_by_hand() {
        let pairs = [(1.0, 2.0), (0.0, 2.0), (2.0, 4.0), (3.0, 4.0)];
        let s = PairedStats::from_pairs(&pairs);
        // means 1.5 and 3; sample variances 5/3 and 4/3, covariance 4/3
        let r: f64 = 0.5;
        let var = (5.0 / 3.0 + r * r * 4.0 / 3.0 - 2.0 * r * 4.0 / 3.0) / (9.0 * 4.0);
        assert_eq!(s.ratio, 0.5);
        assert!((s.ratio_se - var.sqrt()).abs() < 1e-15);
        assert!((var - 2.0 / 3.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_validation_errors() {
        let mut c = blocks21(0);
        assert!(run_experiment(&c).unwrap_err().is_validation());
        c.trials = 1;
        c.distributions.pop();
        assert!(run_experiment(&c).unwrap_err().is_validation());
        let mut c = blocks21(1);
        c.distributions[0] = DistributionSpec::Uniform { lo: 0.0, hi: 1.0 };
        assert_eq!(run_experiment(&c).unwrap_err(), Error::UnsupportedExact);
    }

    #[test]
    fn csv_round_trip() {
        let r = run_experiment(&blocks21(3)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# polyprophet report v1\n"));
        let rows = read_csv(&text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][4], ("ratio".to_string(), "0.75".to_string()));
        assert_eq!(rows[0][0].1, r.config_hash);
    }
}
