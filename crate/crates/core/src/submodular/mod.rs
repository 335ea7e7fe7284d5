//! Integer-valued monotone submodular set functions.
//!
//! Subsets of the ground set `{0, .., n-1}` are bitmasks ([`Subset`]). Every
//! variant can be materialized into a [`FunctionTable`] holding all `2^n`
//! values, which is what the polymatroid and matroid code evaluates against.

mod flow;
mod rational;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use flow::FlowNetwork;
pub use rational::{common_scale, Rational};

use crate::error::{Error, Result};

pub type Subset = u32;

/// Largest ground set representable as a [`Subset`] bitmask.
pub const MAX_GROUND: usize = 24;

/// Default ground-set size up to which [`validate`] checks every triple.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 12;

const SPOT_CHECKS: usize = 20_000;

/// [`polymatroid_table`] checks every triple up to this size.
const FULL_CHECK_LIMIT: usize = 16;

pub fn elements(set: Subset) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| set >> i & 1 == 1)
}

pub fn subset_of(elements: &[usize]) -> Subset {
    elements.iter().fold(0, |acc, &i| acc | 1 << i)
}

/// One instance of a position auction: descending slot qualities and the
/// agents competing for them (exactly one slot per interested agent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionInstance {
    pub qualities: Vec<Rational>,
    pub agents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionAuctionSpec {
    pub n: usize,
    pub instances: Vec<AuctionInstance>,
}

impl PositionAuctionSpec {
    fn check(&self, require_integral: bool) -> Result<()> {
        for (k, inst) in self.instances.iter().enumerate() {
            let field = |s: &str| format!("instances[{k}].{s}");
            if inst.qualities.len() != inst.agents.len() {
                return Err(Error::validation(
                    field("qualities"),
                    format!(
                        "{} qualities for {} interested agents",
                        inst.qualities.len(),
                        inst.agents.len()
                    ),
                ));
            }
            for (j, a) in inst.agents.iter().enumerate() {
                if *a >= self.n || inst.agents[..j].contains(a) {
                    return Err(Error::validation(
                        field("agents"),
                        format!("agent {a} out of range or repeated"),
                    ));
                }
            }
            for (j, q) in inst.qualities.iter().enumerate() {
                if q.is_negative() {
                    return Err(Error::validation(field("qualities"), "negative quality"));
                }
                if j > 0 && inst.qualities[j - 1] < *q {
                    return Err(Error::validation(field("qualities"), "must be non-increasing"));
                }
                if require_integral && q.denom() != 1 {
                    return Err(Error::validation(
                        field("qualities"),
                        format!("{q} is not an integer; rationalize the auction first"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Scales every quality by the LCM of their denominators.
    pub fn rationalize(&self) -> Result<(PositionAuctionSpec, u64)> {
        self.check(false)?;
        let all: Vec<Rational> = self
            .instances
            .iter()
            .flat_map(|i| i.qualities.iter().copied())
            .collect();
        let scale = common_scale(&all)?;
        let instances = self
            .instances
            .iter()
            .map(|inst| {
                let qualities = inst
                    .qualities
                    .iter()
                    .map(|q| {
                        q.scaled(scale)
                            .map(Rational::integer)
                            .ok_or_else(|| Error::validation("qualities", "scaling overflow"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AuctionInstance {
                    qualities,
                    agents: inst.agents.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            PositionAuctionSpec {
                n: self.n,
                instances,
            },
            scale,
        ))
    }

    /// Expected clicks the agents in `set` can jointly receive: per instance,
    /// the sum of the top `|set ∩ Γ(k)|` qualities.
    fn value(&self, set: Subset) -> u64 {
        self.instances
            .iter()
            .map(|inst| {
                let m = inst.agents.iter().filter(|&&a| set >> a & 1 == 1).count();
                inst.qualities[..m]
                    .iter()
                    .map(|q| q.numer() as u64)
                    .sum::<u64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitatedEdge {
    pub from: usize,
    pub to: usize,
    pub capacity: u64,
}

/// Spatial market: `f(S)` is the minimum cut separating `source` from the
/// demand nodes of the agents in `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCutSpec {
    pub nodes: usize,
    pub edges: Vec<CapacitatedEdge>,
    pub source: usize,
    /// Demand nodes of each agent; the ground set is the agent list.
    pub agents: Vec<Vec<usize>>,
}

impl NetworkCutSpec {
    fn check(&self) -> Result<()> {
        if self.source >= self.nodes {
            return Err(Error::validation("source", "node out of range"));
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= self.nodes || e.to >= self.nodes {
                return Err(Error::validation(format!("edges[{k}]"), "node out of range"));
            }
            if e.capacity == 0 {
                return Err(Error::validation(
                    format!("edges[{k}].capacity"),
                    "capacities must be positive integers",
                ));
            }
        }
        let mut seen = vec![false; self.nodes];
        for (a, nodes) in self.agents.iter().enumerate() {
            for &v in nodes {
                if v >= self.nodes || v == self.source || seen[v] {
                    return Err(Error::validation(
                        format!("agents[{a}]"),
                        format!("demand node {v} out of range, equal to the source, or shared"),
                    ));
                }
                seen[v] = true;
            }
        }
        Ok(())
    }

    fn value(&self, set: Subset) -> u64 {
        if set == 0 {
            return 0;
        }
        let sink = self.nodes;
        let mut g = FlowNetwork::new(self.nodes + 1);
        for e in &self.edges {
            g.add_edge(e.from, e.to, e.capacity);
        }
        for a in elements(set) {
            for &v in &self.agents[a] {
                g.add_edge(v, sink, u64::MAX / 4);
            }
        }
        g.max_flow(self.source, sink)
    }
}

/// Oracle for an integer-valued, normalized, monotone submodular function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubmodularSpec {
    /// Values in bitmask order: `values[S]` is `f(S)`.
    ExplicitTable { n: usize, values: Vec<u64> },
    /// `f(S) = min(|S|, k)`.
    UniformRank { n: usize, k: u64 },
    PositionAuction(PositionAuctionSpec),
    NetworkCut(NetworkCutSpec),
    /// `f(S) = scale * values[S]`, which must come out integral.
    ScaledRational {
        n: usize,
        values: Vec<Rational>,
        scale: u64,
    },
}

impl SubmodularSpec {
    pub fn ground_size(&self) -> usize {
        match self {
            SubmodularSpec::ExplicitTable { n, .. }
            | SubmodularSpec::UniformRank { n, .. }
            | SubmodularSpec::ScaledRational { n, .. } => *n,
            SubmodularSpec::PositionAuction(p) => p.n,
            SubmodularSpec::NetworkCut(c) => c.agents.len(),
        }
    }

    /// Structural checks: sizes, ranges, integrality. Says nothing about
    /// submodularity; see [`validate`].
    pub fn check(&self) -> Result<()> {
        let n = self.ground_size();
        if n == 0 {
            return Err(Error::validation("submodular.n", "ground set is empty"));
        }
        if n > MAX_GROUND {
            return Err(Error::TooLarge {
                what: "ground set",
                size: n as u128,
                limit: MAX_GROUND as u128,
            });
        }
        match self {
            SubmodularSpec::ExplicitTable { values, .. } => {
                if values.len() != 1 << n {
                    return Err(Error::validation(
                        "submodular.values",
                        format!("expected {} values, got {}", 1u64 << n, values.len()),
                    ));
                }
            }
            SubmodularSpec::UniformRank { .. } => {}
            SubmodularSpec::PositionAuction(p) => p.check(true)?,
            SubmodularSpec::NetworkCut(c) => c.check()?,
            SubmodularSpec::ScaledRational { values, scale, .. } => {
                if values.len() != 1 << n {
                    return Err(Error::validation(
                        "submodular.values",
                        format!("expected {} values, got {}", 1u64 << n, values.len()),
                    ));
                }
                if *scale == 0 {
                    return Err(Error::validation("submodular.scale", "must be positive"));
                }
                for (s, v) in values.iter().enumerate() {
                    match v.scaled(*scale) {
                        Some(x) if x >= 0 => {}
                        _ => {
                            return Err(Error::validation(
                                format!("submodular.values[{s}]"),
                                format!("{v} times {scale} is not a non-negative integer"),
                            ))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `f(set)`. Assumes [`SubmodularSpec::check`] passed.
    pub fn evaluate(&self, set: Subset) -> u64 {
        match self {
            SubmodularSpec::ExplicitTable { values, .. } => values[set as usize],
            SubmodularSpec::UniformRank { k, .. } => (set.count_ones() as u64).min(*k),
            SubmodularSpec::PositionAuction(p) => p.value(set),
            SubmodularSpec::NetworkCut(c) => c.value(set),
            SubmodularSpec::ScaledRational { values, scale, .. } => {
                values[set as usize].scaled(*scale).unwrap_or(0) as u64
            }
        }
    }

    pub fn table(&self) -> Result<FunctionTable> {
        self.check()?;
        let n = self.ground_size();
        let values = match self {
            SubmodularSpec::ExplicitTable { values, .. } => values.clone(),
            _ => (0..1u32 << n).map(|s| self.evaluate(s)).collect(),
        };
        Ok(FunctionTable { n, values })
    }
}

/// `(f({u_1}), .., f({u_n}))`.
pub fn singleton_caps(spec: &SubmodularSpec) -> Vec<u64> {
    (0..spec.ground_size())
        .map(|i| spec.evaluate(1 << i))
        .collect()
}

/// Integer spec `scale * f` for a rational table in bitmask order, with
/// `scale` the LCM of the denominators.
pub fn rationalize(values: &[Rational]) -> Result<(SubmodularSpec, u64)> {
    let len = values.len();
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::validation(
            "submodular.values",
            format!("table length {len} is not 2^n for n >= 1"),
        ));
    }
    let n = len.trailing_zeros() as usize;
    let scale = common_scale(values)?;
    let spec = SubmodularSpec::ScaledRational {
        n,
        values: values.to_vec(),
        scale,
    };
    spec.check()?;
    Ok((spec, scale))
}

/// All `2^n` values of a set function, materialized once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionTable {
    n: usize,
    values: Vec<u64>,
}

impl FunctionTable {
    pub fn from_values(n: usize, values: Vec<u64>) -> Result<Self> {
        SubmodularSpec::ExplicitTable { n, values }.table()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn full_set(&self) -> Subset {
        ((1u64 << self.n) - 1) as Subset
    }

    #[inline]
    pub fn value(&self, set: Subset) -> u64 {
        self.values[set as usize]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Exhaustive check of normalization, monotonicity and submodularity.
    pub fn is_polymatroid(&self) -> bool {
        validate_table(self, usize::MAX).passed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Normalization,
    Monotonicity,
    Submodularity,
}

/// A witness: for monotonicity `f(set + i) < f(set)`; for submodularity
/// `f(set + i) + f(set + j) < f(set + i + j) + f(set)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub set: Subset,
    pub i: usize,
    pub j: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub exhaustive: bool,
    pub checks: u64,
    pub structure: Option<String>,
    pub normalized: bool,
    pub monotone: bool,
    pub submodular: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.structure.is_none() && self.normalized && self.monotone && self.submodular
    }
}

fn validate_table(table: &FunctionTable, limit: usize) -> ValidationReport {
    let mut report = ValidationReport {
        exhaustive: true,
        checks: 0,
        structure: None,
        normalized: table.value(0) == 0,
        monotone: true,
        submodular: true,
        violations: Vec::new(),
    };
    if !report.normalized {
        report.violations.push(Violation {
            kind: ViolationKind::Normalization,
            set: 0,
            i: 0,
            j: None,
        });
    }
    let n = table.n;
    for set in 0..=table.full_set() {
        let fs = table.value(set) as i128;
        for i in (0..n).filter(|i| set >> i & 1 == 0) {
            let fi = table.value(set | 1 << i) as i128;
            report.checks += 1;
            if fi < fs {
                report.monotone = false;
                if report.violations.len() < limit {
                    report.violations.push(Violation {
                        kind: ViolationKind::Monotonicity,
                        set,
                        i,
                        j: None,
                    });
                }
            }
            for j in (i + 1..n).filter(|j| set >> j & 1 == 0) {
                let fj = table.value(set | 1 << j) as i128;
                let fij = table.value(set | 1 << i | 1 << j) as i128;
                report.checks += 1;
                if fi + fj < fij + fs {
                    report.submodular = false;
                    if report.violations.len() < limit {
                        report.violations.push(Violation {
                            kind: ViolationKind::Submodularity,
                            set,
                            i,
                            j: Some(j),
                        });
                    }
                }
            }
        }
    }
    report
}

/// Checks normalization, monotonicity and submodularity. Exhaustive (every
/// violated triple listed) when `n <= exhaustive_limit`, otherwise a seeded
/// random spot-check. Never fails; problems are reported.
pub fn validate(spec: &SubmodularSpec, exhaustive_limit: usize) -> ValidationReport {
    if let Err(e) = spec.check() {
        return ValidationReport {
            exhaustive: false,
            checks: 0,
            structure: Some(e.to_string()),
            normalized: false,
            monotone: false,
            submodular: false,
            violations: Vec::new(),
        };
    }
    let n = spec.ground_size();
    if n <= exhaustive_limit {
        let table = spec.table().expect("checked above");
        return validate_table(&table, usize::MAX);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f5b);
    let mut report = ValidationReport {
        exhaustive: false,
        checks: 0,
        structure: None,
        normalized: spec.evaluate(0) == 0,
        monotone: true,
        submodular: true,
        violations: Vec::new(),
    };
    let full: Subset = ((1u64 << n) - 1) as Subset;
    for _ in 0..SPOT_CHECKS {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let set = rng.random::<Subset>() & full & !(1 << i) & !(1 << j);
        let fs = spec.evaluate(set) as i128;
        let fi = spec.evaluate(set | 1 << i) as i128;
        let fj = spec.evaluate(set | 1 << j) as i128;
        let fij = spec.evaluate(set | 1 << i | 1 << j) as i128;
        report.checks += 1;
        if fi < fs {
            report.monotone = false;
            report.violations.push(Violation {
                kind: ViolationKind::Monotonicity,
                set,
                i,
                j: None,
            });
        }
        if fi + fj < fij + fs {
            report.submodular = false;
            report.violations.push(Violation {
                kind: ViolationKind::Submodularity,
                set,
                i: i.min(j),
                j: Some(i.max(j)),
            });
        }
    }
    report
}

/// Materializes the table and insists it describes a polymatroid.
pub fn polymatroid_table(spec: &SubmodularSpec) -> Result<FunctionTable> {
    let report = validate(spec, FULL_CHECK_LIMIT);
    if let Some(s) = report.structure {
        return Err(Error::validation("submodular", s));
    }
    if !report.passed() {
        let v = &report.violations[0];
        return Err(Error::validation(
            "submodular",
            format!("not a polymatroid: {:?} violated at set {:#b}", v.kind, v.set),
        ));
    }
    spec.table()
}
