//! Random small instances for the property suite.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, RandomSource};
use crate::harness::adversary::AdversaryPolicy;
use crate::submodular::{
    AuctionInstance, CapacitatedEdge, FunctionTable, NetworkCutSpec, PositionAuctionSpec,
    Rational, SubmodularSpec, Subset,
};

/// Largest `f(U)` the fuzzer generates; keeps exact expectations cheap.
pub const FUZZ_MAX_VALUE: u64 = 6;

pub const FAMILIES: [&str; 7] = [
    "uniform-rank",
    "budget-additive",
    "coverage",
    "sum-of-budgets",
    "position-auction",
    "network-cut",
    "random-table",
];

/// One fuzzed instance, reproducible from `(seed, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzInstance {
    pub seed: u64,
    pub index: u64,
    pub family: String,
    /// Always an explicit table so counterexamples are self-contained.
    pub submodular: SubmodularSpec,
    pub distributions: Vec<DistributionSpec>,
    pub adversary: AdversaryPolicy,
    /// The realized weights the algorithm runs on.
    pub weights: Vec<f64>,
}

impl FuzzInstance {
    pub fn generate(seed: u64, index: u64, max_n: usize, max_support: usize) -> Self {
        let mut rng = RandomSource::new(seed, index).rng();
        let n = rng.random_range(1..=max_n.max(1));
        let family = *FAMILIES.choose(&mut rng).expect("nonempty");
        let table = random_polymatroid(&mut rng, family, n);
        let distributions: Vec<DistributionSpec> = (0..n)
            .map(|_| random_discrete(&mut rng, max_support.max(1)))
            .collect();
        let weights = distributions
            .iter()
            .map(|d| match d {
                DistributionSpec::Discrete { support } => {
                    support.choose(&mut rng).expect("nonempty").0
                }
                _ => unreachable!("fuzzer draws discrete supports"),
            })
            .collect();
        let adversary = match rng.random_range(0..3) {
            0 => {
                let mut order: Vec<usize> = (0..n).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                AdversaryPolicy::FixedOrder { order }
            }
            1 => AdversaryPolicy::UniformRandomOrder,
            _ => AdversaryPolicy::AdaptiveGreedy,
        };
        FuzzInstance {
            seed,
            index,
            family: family.into(),
            submodular: SubmodularSpec::ExplicitTable {
                n,
                values: table.values().to_vec(),
            },
            distributions,
            adversary,
            weights,
        }
    }
}

/// A discrete distribution on 1..=`max_support` distinct values from
/// `{0, 0.5, .., 6}` with random rational probabilities.
pub fn random_discrete(rng: &mut ChaCha8Rng, max_support: usize) -> DistributionSpec {
    let k = rng.random_range(1..=max_support);
    let mut grid: Vec<u32> = (0..=12).collect();
    rand::seq::SliceRandom::shuffle(grid.as_mut_slice(), rng);
    let mut values: Vec<f64> = grid[..k].iter().map(|&v| v as f64 / 2.0).collect();
    values.sort_by(f64::total_cmp);
    let mass: Vec<u32> = (0..k).map(|_| rng.random_range(1..=4)).collect();
    let total: u32 = mass.iter().sum();
    DistributionSpec::Discrete {
        support: values
            .into_iter()
            .zip(mass)
            .map(|(v, m)| (v, m as f64 / total as f64))
            .collect(),
    }
}

/// A random polymatroid on `n` elements from the named family, with
/// `f(U) <= FUZZ_MAX_VALUE`.
pub fn random_polymatroid(rng: &mut ChaCha8Rng, family: &str, n: usize) -> FunctionTable {
    let spec = match family {
        "uniform-rank" => SubmodularSpec::UniformRank {
            n,
            k: rng.random_range(1..=n as u64),
        },
        "budget-additive" => {
            let a: Vec<u64> = (0..n).map(|_| rng.random_range(1..=3)).collect();
            let cap = rng.random_range(1..=FUZZ_MAX_VALUE);
            table_spec(n, |s| budget(&a, s, cap))
        }
        "sum-of-budgets" => {
            let terms: Vec<(Vec<u64>, u64)> = (0..2)
                .map(|_| {
                    let a = (0..n).map(|_| rng.random_range(0..=2)).collect();
                    (a, rng.random_range(1..=FUZZ_MAX_VALUE / 2))
                })
                .collect();
            table_spec(n, |s| terms.iter().map(|(a, c)| budget(a, s, *c)).sum())
        }
        "coverage" => {
            let cover: Vec<u32> = (0..n).map(|_| rng.random_range(0..1u32 << 5)).collect();
            table_spec(n, |s| {
                let mut u = 0u32;
                for (i, c) in cover.iter().enumerate() {
                    if s >> i & 1 == 1 {
                        u |= c;
                    }
                }
                (u.count_ones() as u64).min(FUZZ_MAX_VALUE)
            })
        }
        "position-auction" => {
            let slots = rng.random_range(1..=n.min(3));
            let mut qualities: Vec<u64> = (0..slots).map(|_| rng.random_range(1..=2)).collect();
            qualities.sort_unstable_by(|a, b| b.cmp(a));
            let mut agents: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(agents.as_mut_slice(), rng);
            agents.truncate(slots);
            // unlisted agents get a second single-slot instance so f({i}) > 0
            let rest: Vec<usize> = (0..n).filter(|a| !agents.contains(a)).collect();
            let mut instances = vec![AuctionInstance {
                qualities: qualities.into_iter().map(|q| Rational::integer(q as i64)).collect(),
                agents,
            }];
            if !rest.is_empty() {
                let m = rest.len().min(2);
                instances.push(AuctionInstance {
                    qualities: vec![Rational::integer(1); m],
                    agents: rest[..m].to_vec(),
                });
            }
            SubmodularSpec::PositionAuction(PositionAuctionSpec { n, instances })
        }
        "network-cut" => {
            let nodes = n + 2;
            let mut edges = Vec::new();
            for from in 0..nodes {
                for to in 1..nodes {
                    if from != to && rng.random_bool(0.4) {
                        edges.push(CapacitatedEdge {
                            from,
                            to,
                            capacity: rng.random_range(1..=2),
                        });
                    }
                }
            }
            let spec = NetworkCutSpec {
                nodes,
                edges,
                source: 0,
                agents: (0..n).map(|a| vec![a + 1]).collect(),
            };
            let full = SubmodularSpec::NetworkCut(spec);
            let t = full.table().expect("valid network");
            table_spec(n, |s| t.value(s).min(FUZZ_MAX_VALUE))
        }
        _ => return random_table(rng, n, FUZZ_MAX_VALUE),
    };
    let table = spec.table().expect("generated spec is valid");
    if table.value(table.full_set()) > FUZZ_MAX_VALUE || !table.is_polymatroid() {
        // truncation by a constant keeps a polymatroid a polymatroid
        let values = table.values().iter().map(|&v| v.min(FUZZ_MAX_VALUE)).collect();
        return FunctionTable::from_values(n, values).expect("valid table");
    }
    table
}

fn budget(a: &[u64], s: Subset, cap: u64) -> u64 {
    let sum: u64 = a.iter().enumerate().filter(|(i, _)| s >> i & 1 == 1).map(|p| p.1).sum();
    sum.min(cap)
}

fn table_spec(n: usize, f: impl Fn(Subset) -> u64) -> SubmodularSpec {
    SubmodularSpec::ExplicitTable {
        n,
        values: (0..1u32 << n).map(f).collect(),
    }
}

/// Admissible range for `f(set)` given the values of all proper subsets:
/// monotone from below and locally submodular from above.
fn bounds(values: &[u64], set: Subset, max_value: u64) -> (u64, u64) {
    let members: Vec<usize> = (0..32).filter(|i| set >> i & 1 == 1).collect();
    let mut lo = 0;
    let mut hi = max_value;
    for &i in &members {
        lo = lo.max(values[(set & !(1 << i)) as usize]);
    }
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            let si = values[(set & !(1 << i)) as usize];
            let sj = values[(set & !(1 << j)) as usize];
            let sij = values[(set & !(1 << i) & !(1 << j)) as usize];
            hi = hi.min(si + sj - sij);
        }
    }
    (lo, hi)
}

/// Fills a table in increasing set order with values drawn uniformly from
/// the admissible range, restarting on a dead end.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize, max_value: u64) -> FunctionTable {
    let size = 1usize << n;
    'retry: loop {
        let mut values = vec![0u64; size];
        let mut sets: Vec<Subset> = (1..size as Subset).collect();
        sets.sort_by_key(|s| s.count_ones());
        for s in sets {
            let (lo, hi) = bounds(&values, s, max_value);
            if lo > hi {
                continue 'retry;
            }
            values[s as usize] = rng.random_range(lo..=hi);
        }
        return FunctionTable::from_values(n, values).expect("valid table");
    }
}

/// Every integer polymatroid on `n` elements with `f(U) <= max_value`.
pub fn enumerate_polymatroids(n: usize, max_value: u64) -> Vec<FunctionTable> {
    let mut sets: Vec<Subset> = (1..1 << n).collect();
    sets.sort_by_key(|s| s.count_ones());
    let mut values = vec![0u64; 1 << n];
    let mut out = Vec::new();
    fn go(
        k: usize,
        sets: &[Subset],
        values: &mut Vec<u64>,
        n: usize,
        max_value: u64,
        out: &mut Vec<FunctionTable>,
    ) {
        if k == sets.len() {
            out.push(FunctionTable::from_values(n, values.clone()).expect("valid table"));
            return;
        }
        let s = sets[k];
        let (lo, hi) = bounds(values, s, max_value);
        for v in lo..=hi {
            values[s as usize] = v;
            go(k + 1, sets, values, n, max_value, out);
        }
        values[s as usize] = 0;
    }
    go(0, &sets, &mut values, n, max_value, &mut out);
    out
}
