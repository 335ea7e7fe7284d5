//! Sequential posted pricing over polymatroid feasibility.
//!
//! Agents arrive in an adversarial order. On arrival agent `i` sees a menu of
//! per-unit prices for its block, fixed from the units already sold, and buys
//! the prefix it likes best. Welfare pricing posts the surrogate thresholds
//! of the values themselves; revenue pricing runs the same rule on virtual
//! values `φ(v)^+` and translates each threshold back through `φ^{-1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmatroid::BlockMatroid;
use crate::dist::{sample_assignment, DistributionSpec, Estimator, RandomSource};
use crate::error::{Error, Result};
use crate::harness::experiment::{
    in_pool, CheckSummary, ExperimentConfig, ExperimentReport, MechanismSummary,
    PairedStats, RunOptions, TrialFailure, POOL_STREAM,
};
use crate::polymatroid::{greedy_max, is_member, Allocation};
use crate::prophet::{
    run_polymatroid, run_polymatroid_with_menu, BlockAdversary, MatroidRun, ThresholdEstimator,
    ThresholdOracle, WeightPool,
};

/// Stream for the virtual-value threshold pool.
pub const REVENUE_POOL_STREAM: u64 = u64::MAX - 1;

/// Trials at the start of a mechanism run whose menus are checked for best
/// responses and misreports.
pub const INCENTIVE_TRIALS: u64 = 1000;

/// Points in the misreport grid for continuous value distributions.
pub const MISREPORT_GRID: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: usize,
    pub value: DistributionSpec,
}

impl AgentSpec {
    /// Agent `i` gets distribution `i`.
    pub fn from_distributions(dists: &[DistributionSpec]) -> Vec<AgentSpec> {
        dists
            .iter()
            .enumerate()
            .map(|(id, d)| AgentSpec {
                id,
                value: d.clone(),
            })
            .collect()
    }

    fn values(agents: &[AgentSpec]) -> Vec<DistributionSpec> {
        agents.iter().map(|a| a.value.clone()).collect()
    }
}

/// The prices one agent faced and what it bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMenu {
    pub agent: usize,
    /// Price of the k-th unit; `+inf` once no further unit is available.
    pub prices: Vec<f64>,
    pub bought: u64,
}

impl PriceMenu {
    /// Units a buyer with value `v` takes: the longest prefix priced at most `v`.
    pub fn demand(&self, v: f64) -> u64 {
        self.prices.iter().take_while(|&&p| v >= p).count() as u64
    }

    pub fn cost(&self, units: u64) -> f64 {
        self.prices[..units as usize].iter().sum()
    }

    pub fn utility(&self, v: f64, units: u64) -> f64 {
        units as f64 * v - self.cost(units)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    pub welfare: f64,
    pub revenue: f64,
    /// In arrival order.
    pub menus: Vec<PriceMenu>,
}

/// `φ(v) = v − (1 − F(v)) / f(v)`.
pub fn virtual_value(dist: &DistributionSpec, v: f64) -> Result<f64> {
    match *dist {
        DistributionSpec::Uniform { hi, .. } => Ok(2.0 * v - hi),
        DistributionSpec::Exponential { rate } => Ok(v - 1.0 / rate),
        DistributionSpec::Discrete { .. } => Err(Error::UnsupportedFamily("virtual values")),
    }
}

/// `φ^{-1}(x)`, extended linearly beyond the support.
pub fn inverse_virtual_value(dist: &DistributionSpec, x: f64) -> Result<f64> {
    match *dist {
        DistributionSpec::Uniform { hi, .. } => Ok(0.5 * (x + hi)),
        DistributionSpec::Exponential { rate } => Ok(x + 1.0 / rate),
        DistributionSpec::Discrete { .. } => Err(Error::UnsupportedFamily("virtual values")),
    }
}

fn check_regular(agents: &[AgentSpec]) -> Result<()> {
    for a in agents {
        a.value.validate()?;
        virtual_value(&a.value, 0.0)?;
    }
    Ok(())
}

/// Thresholds for welfare pricing: the usual oracle over the value
/// distributions.
pub fn welfare_oracle<'m>(
    matroid: &'m BlockMatroid,
    agents: &[AgentSpec],
    estimator: ThresholdEstimator,
    source: RandomSource,
) -> Result<ThresholdOracle<'m>> {
    ThresholdOracle::new(matroid, &AgentSpec::values(agents), estimator, source)
}

/// Thresholds for revenue pricing, over Monte-Carlo draws of `φ(v)^+`.
pub fn revenue_oracle<'m>(
    matroid: &'m BlockMatroid,
    agents: &[AgentSpec],
    estimator: ThresholdEstimator,
    source: RandomSource,
) -> Result<ThresholdOracle<'m>> {
    check_regular(agents)?;
    let samples = match estimator.mode {
        Estimator::Exact => return Err(Error::UnsupportedExact),
        Estimator::MonteCarlo { samples } => samples,
    };
    let dists = AgentSpec::values(agents);
    let mut rng = source.rng();
    let draws = (0..samples)
        .map(|_| {
            let v = sample_assignment(&dists, &mut rng)?;
            (0..dists.len())
                .map(|i| Ok(virtual_value(&dists[i], v.get(i))?.max(0.0)))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(ThresholdOracle::with_pool(
        matroid,
        WeightPool::from_draws(matroid, draws)?,
        estimator.cache,
    ))
}

/// Shows the adversary reported values whatever the algorithm runs on.
struct Revealing<'a> {
    inner: &'a mut dyn BlockAdversary,
    values: &'a [f64],
}

impl BlockAdversary for Revealing<'_> {
    fn next_block(&mut self, revealed: &[(usize, f64)]) -> Result<usize> {
        let shown: Vec<(usize, f64)> = revealed.iter().map(|&(b, _)| (b, self.values[b])).collect();
        self.inner.next_block(&shown)
    }
}

fn check_values(oracle: &ThresholdOracle<'_>, values: &[f64]) -> Result<()> {
    if values.len() != oracle.matroid().n() {
        return Err(Error::Precondition(format!(
            "{} values for {} agents",
            values.len(),
            oracle.matroid().n()
        )));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("values", "must be finite and non-negative"));
    }
    Ok(())
}

fn outcome(run: &MatroidRun, values: &[f64], price: impl Fn(usize, f64) -> Result<f64>) -> Result<MechanismOutcome> {
    let n = values.len();
    let mut payments = vec![0.0; n];
    let mut menus = Vec::with_capacity(run.trace.runs.len());
    for r in &run.trace.runs {
        let steps = &run.trace.steps[r.steps.clone()];
        let prices = steps
            .iter()
            .map(|s| {
                if s.surrogate.is_finite() {
                    price(r.block, s.surrogate)
                } else {
                    Ok(f64::INFINITY)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let bought = steps.iter().filter(|s| s.selected).count() as u64;
        payments[r.block] = prices[..bought as usize].iter().sum();
        menus.push(PriceMenu {
            agent: r.block,
            prices,
            bought,
        });
    }
    let allocation = Allocation(run.counts.0.clone());
    Ok(MechanismOutcome {
        welfare: allocation.value(values),
        revenue: payments.iter().sum(),
        allocation,
        payments,
        menus,
    })
}

/// Posts the surrogate thresholds of the value distributions as unit prices.
pub fn posted_price_welfare(
    oracle: &ThresholdOracle<'_>,
    values: &[f64],
    adversary: &mut dyn BlockAdversary,
) -> Result<MechanismOutcome> {
    check_values(oracle, values)?;
    let run = run_polymatroid_with_menu(oracle, values, adversary, &|_, t| t.to_vec())?;
    outcome(&run, values, |_, t| Ok(t))
}

/// Posts `φ_i^{-1}(t_k)` for the surrogate thresholds `t` of the virtual
/// values. Agents with negative virtual value buy nothing. Returns the
/// outcome and this draw's optimal virtual surplus.
pub fn posted_price_revenue(
    oracle: &ThresholdOracle<'_>,
    agents: &[AgentSpec],
    values: &[f64],
    adversary: &mut dyn BlockAdversary,
) -> Result<(MechanismOutcome, f64)> {
    check_values(oracle, values)?;
    check_regular(agents)?;
    let phi = agents
        .iter()
        .zip(values)
        .map(|(a, &v)| virtual_value(&a.value, v))
        .collect::<Result<Vec<f64>>>()?;
    let mut shown = Revealing {
        inner: adversary,
        values,
    };
    // φ(v) >= t_k exactly when v >= φ^{-1}(t_k)
    let run = run_polymatroid_with_menu(oracle, &phi, &mut shown, &|_, t| t.to_vec())?;
    let out = outcome(&run, values, |b, t| inverse_virtual_value(&agents[b].value, t))?;
    let clipped: Vec<f64> = phi.iter().map(|p| p.max(0.0)).collect();
    let (_, benchmark) = greedy_max(oracle.matroid().table(), &clipped)?;
    Ok((out, benchmark))
}

/// Checks that the bought quantity maximizes utility over every available
/// quantity and that no report on `grid` does better than the truth.
pub fn incentive_violation(menu: &PriceMenu, value: f64, grid: &[f64]) -> Option<String> {
    let truthful = menu.utility(value, menu.bought);
    let tol = 1e-9 * value.abs().max(1.0);
    let available = menu.prices.iter().filter(|p| p.is_finite()).count() as u64;
    for q in 0..=available {
        let u = menu.utility(value, q);
        if u > truthful + tol {
            return Some(format!(
                "agent {} (value {value}) bought {} but {q} units pay more: {u} > {truthful}",
                menu.agent, menu.bought
            ));
        }
    }
    for &r in grid {
        let q = menu.demand(r);
        let u = menu.utility(value, q);
        if u > truthful + tol {
            return Some(format!(
                "agent {} (value {value}) gains {u} > {truthful} by reporting {r}",
                menu.agent
            ));
        }
    }
    None
}

/// Misreports tried for an agent: the support for discrete values, an even
/// grid otherwise, plus each price and its neighbours.
pub fn misreport_grid(dist: &DistributionSpec, menu: &PriceMenu) -> Vec<f64> {
    let mut grid: Vec<f64> = match *dist {
        DistributionSpec::Discrete { ref support } => support.iter().map(|s| s.0).collect(),
        DistributionSpec::Uniform { lo, hi } => (0..MISREPORT_GRID)
            .map(|k| lo + (hi - lo) * k as f64 / (MISREPORT_GRID - 1) as f64)
            .collect(),
        DistributionSpec::Exponential { rate } => (0..MISREPORT_GRID)
            .map(|k| 5.0 / rate * k as f64 / (MISREPORT_GRID - 1) as f64)
            .collect(),
    };
    for &p in menu.prices.iter().filter(|p| p.is_finite()) {
        grid.extend([p, p * (1.0 - 1e-9), p * (1.0 + 1e-9) + 1e-12]);
    }
    grid
}

struct MechanismTrial {
    welfare: f64,
    opt: f64,
    revenue: f64,
    benchmark: f64,
    feasible: bool,
    rational: bool,
    agrees: bool,
    incentive: Option<Option<String>>,
}

/// Runs welfare and revenue pricing on `config.trials` draws of the agents'
/// values. The headline ratio is posted-price welfare over optimal welfare.
pub fn run_mechanism(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let agents = AgentSpec::from_distributions(&config.distributions);
    check_regular(&agents)?;
    let matroid = BlockMatroid::build(&config.submodular)?;
    let welfare =
        welfare_oracle(&matroid, &agents, config.estimator, RandomSource::new(config.seed, POOL_STREAM))?
            .with_mutation(options.mutation);
    let revenue = revenue_oracle(
        &matroid,
        &agents,
        config.estimator,
        RandomSource::new(config.seed, REVENUE_POOL_STREAM),
    )?
    .with_mutation(options.mutation);
    let table = matroid.table();

    let trial = |k: u64| -> Result<MechanismTrial> {
        let mut rng = RandomSource::new(config.seed, k).rng();
        let v = sample_assignment(&config.distributions, &mut rng)?;
        let adversary = config.adversary.instantiate(&config.distributions, &mut rng);
        let values = v.to_vec();
        let w_out = posted_price_welfare(&welfare, &values, &mut adversary.clone())?;
        let algo = run_polymatroid(&welfare, &v, &mut adversary.clone())?;
        let (r_out, benchmark) =
            posted_price_revenue(&revenue, &agents, &values, &mut adversary.clone())?;
        let (_, opt) = greedy_max(table, &values)?;

        let mut rational = true;
        for out in [&w_out, &r_out] {
            for m in &out.menus {
                let pay = out.payments[m.agent];
                rational &= pay >= 0.0 && m.utility(values[m.agent], m.bought) >= -1e-9;
            }
        }
        let incentive = (k < INCENTIVE_TRIALS).then(|| {
            w_out.menus.iter().chain(&r_out.menus).find_map(|m| {
                let d = &config.distributions[m.agent];
                incentive_violation(m, values[m.agent], &misreport_grid(d, m))
            })
        });
        Ok(MechanismTrial {
            welfare: w_out.welfare,
            opt,
            revenue: r_out.revenue,
            benchmark,
            feasible: is_member(table, &w_out.allocation)? && is_member(table, &r_out.allocation)?,
            rational,
            agrees: algo.allocation == w_out.allocation,
            incentive,
        })
    };

    let trials: Vec<Result<MechanismTrial>> = in_pool(options.jobs, || {
        (0..config.trials).into_par_iter().map(trial).collect()
    })?;

    let mut pairs = Vec::with_capacity(trials.len());
    let mut revenue_pairs = Vec::with_capacity(trials.len());
    let mut welfare_gaps = Vec::with_capacity(trials.len());
    let mut revenue_gaps = Vec::with_capacity(trials.len());
    let mut feasibility = CheckSummary::new("feasibility");
    let mut rationality = CheckSummary::new("individual-rationality");
    let mut agreement = CheckSummary::new("menu-matches-algorithm");
    let mut incentives = CheckSummary::new("best-response");
    for (k, t) in trials.into_iter().enumerate() {
        let k = k as u64;
        let t = t.map_err(|e| Error::Trial {
            trial: k,
            source: Box::new(e),
        })?;
        let fail = |detail: &str| TrialFailure {
            seed: config.seed,
            trial: k,
            detail: detail.to_string(),
        };
        feasibility.record(t.feasible, || fail("allocation outside the polymatroid"));
        rationality.record(t.rational, || fail("negative payment or utility"));
        agreement.record(t.agrees, || fail("price menu and threshold rule allocate differently"));
        if let Some(v) = t.incentive {
            let ok = v.is_none();
            incentives.record(ok, || fail(v.as_deref().unwrap_or_default()));
        }
        pairs.push((t.welfare, t.opt));
        revenue_pairs.push((t.revenue, t.benchmark));
        welfare_gaps.push((t.welfare - 0.5 * t.opt, 0.0));
        revenue_gaps.push((t.revenue - 0.5 * t.benchmark, 0.0));
    }
    let w = PairedStats::from_pairs(&pairs);
    let r = PairedStats::from_pairs(&revenue_pairs);
    let mut report = ExperimentReport::from_pairs(
        config.hash(),
        config.seed,
        &pairs,
        vec![feasibility, rationality, agreement, incentives],
    );
    report.mechanism = Some(MechanismSummary {
        welfare: w.mean_x,
        welfare_se: w.se_x,
        opt_welfare: w.mean_y,
        welfare_gap_se: PairedStats::from_pairs(&welfare_gaps).se_x,
        revenue: r.mean_x,
        revenue_se: r.se_x,
        benchmark: r.mean_y,
        revenue_gap_se: PairedStats::from_pairs(&revenue_gaps).se_x,
    });
    Ok(report)
}

impl MechanismSummary {
    /// `mean(welfare − ½·OPT) >= −z·SE`.
    pub fn welfare_within(&self, z: f64) -> bool {
        self.welfare - 0.5 * self.opt_welfare >= -z * self.welfare_gap_se
    }

    /// `mean(revenue − ½·benchmark) >= −z·SE`.
    pub fn revenue_within(&self, z: f64) -> bool {
        self.revenue - 0.5 * self.benchmark >= -z * self.revenue_gap_se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmatroid::CardinalityVector;
    use crate::harness::adversary::AdversaryPolicy;
    use crate::submodular::{AuctionInstance, PositionAuctionSpec, Rational, SubmodularSpec};

    const SRC: RandomSource = RandomSource { seed: 9, stream: 0 };

    fn u01() -> DistributionSpec {
        DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }
    }

    #[test]
    fn virtual_values() {
        assert_eq!(virtual_value(&u01(), 0.75).unwrap(), 0.5);
        assert_eq!(virtual_value(&u01(), 0.5).unwrap(), 0.0);
        let e = DistributionSpec::Exponential { rate: 1.0 };
        assert_eq!(virtual_value(&e, 1.0).unwrap(), 0.0);
        assert_eq!(inverse_virtual_value(&u01(), 0.5).unwrap(), 0.75);
        assert_eq!(
            virtual_value(&DistributionSpec::point_mass(1.0), 1.0).unwrap_err(),
            Error::UnsupportedFamily("virtual values")
        );
    }

    #[test]
    fn blocks_21_menu() {
        let spec = SubmodularSpec::ExplicitTable {
            n: 2,
            values: vec![0, 2, 1, 2],
        };
        let m = BlockMatroid::build(&spec).unwrap();
        let agents = AgentSpec::from_distributions(&[
            DistributionSpec::point_mass(3.0),
            DistributionSpec::point_mass(5.0),
        ]);
        let oracle = welfare_oracle(&m, &agents, ThresholdEstimator::exact(), SRC).unwrap();
        let out = posted_price_welfare(&oracle, &[3.0, 5.0], &mut vec![0, 1].into_iter()).unwrap();
        assert_eq!(out.allocation.0, vec![2, 0]);
        assert_eq!(out.payments, vec![4.0, 0.0]);
        assert_eq!(out.menus[0].prices, vec![1.5, 2.5]);
        assert_eq!(out.menus[0].utility(3.0, 2), 2.0);
        assert_eq!(out.welfare, 6.0);
        assert!(out.welfare >= 0.5 * 8.0);
        for menu in &out.menus {
            let v = [3.0, 5.0][menu.agent];
            assert_eq!(incentive_violation(menu, v, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), None);
        }
        // below the first price: nothing bought, nothing paid
        let out = posted_price_welfare(&oracle, &[1.0, 0.5], &mut vec![0, 1].into_iter()).unwrap();
        assert_eq!(out.allocation.0, vec![0, 0]);
        assert_eq!(out.revenue, 0.0);
    }

    #[test]
    fn single_uniform_agent_price() {
        // T = E[φ^+]/2 = 1/8, price φ^{-1}(1/8) = 9/16
        let spec = SubmodularSpec::UniformRank { n: 1, k: 1 };
        let m = BlockMatroid::build(&spec).unwrap();
        let agents = AgentSpec::from_distributions(&[u01()]);
        let oracle =
            revenue_oracle(&m, &agents, ThresholdEstimator::monte_carlo(200_000), SRC).unwrap();
        let t = oracle.threshold(&CardinalityVector(vec![0]), 0).unwrap();
        assert!((t - 0.125).abs() < 0.002, "{t}");
        let (out, bench) =
            posted_price_revenue(&oracle, &agents, &[0.9], &mut vec![0].into_iter()).unwrap();
        assert!((out.revenue - (0.5 + 0.5 * t)).abs() < 1e-12);
        assert!((bench - 0.8).abs() < 1e-12);
        let (out, bench) =
            posted_price_revenue(&oracle, &agents, &[0.3], &mut vec![0].into_iter()).unwrap();
        assert_eq!((out.revenue, bench), (0.0, 0.0));
    }

    #[test]
    fn zero_virtual_values_give_zero_revenue() {
        let config = ExperimentConfig {
            submodular: SubmodularSpec::UniformRank { n: 2, k: 1 },
            distributions: vec![DistributionSpec::Uniform { lo: 0.0, hi: 0.0 }; 2],
            adversary: AdversaryPolicy::FixedOrder { order: vec![0, 1] },
            estimator: ThresholdEstimator::monte_carlo(64),
            trials: 50,
            seed: 1,
        };
        let r = run_mechanism(&config, RunOptions::default()).unwrap();
        let m = r.mechanism.unwrap();
        assert_eq!((m.revenue, m.benchmark), (0.0, 0.0));
    }

    #[test]
    fn position_auction_small_run() {
        let config = ExperimentConfig {
            submodular: SubmodularSpec::PositionAuction(PositionAuctionSpec {
                n: 2,
                instances: vec![AuctionInstance {
                    qualities: vec![Rational::integer(3), Rational::integer(1)],
                    agents: vec![0, 1],
                }],
            }),
            distributions: vec![u01(), u01()],
            adversary: AdversaryPolicy::UniformRandomOrder,
            estimator: ThresholdEstimator::monte_carlo(2048),
            trials: 2000,
            seed: 5,
        };
        let r = run_mechanism(&config, RunOptions::default()).unwrap();
        assert!(r.checks_passed(), "{}", r.to_json());
        let m = r.mechanism.unwrap();
        assert!(m.welfare_within(3.0) && m.revenue_within(3.0));
        assert!(m.revenue <= m.benchmark + 3.0 * m.revenue_se);
    }

    #[test]
    fn discrete_agents_rejected() {
        let config = ExperimentConfig {
            submodular: SubmodularSpec::UniformRank { n: 1, k: 1 },
            distributions: vec![DistributionSpec::point_mass(1.0)],
            adversary: AdversaryPolicy::UniformRandomOrder,
            estimator: ThresholdEstimator::exact(),
            trials: 5,
            seed: 1,
        };
        assert!(matches!(
            run_mechanism(&config, RunOptions::default()),
            Err(Error::UnsupportedFamily(_))
        ));
    }
}
