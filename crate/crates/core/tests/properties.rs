//! Randomized comparisons against independent brute-force oracles.

use polyprophet::blockmatroid::{BlockMatroid, BlockWeights, BlockSizing};
use polyprophet::dist::RandomSource;
use polyprophet::harness::fuzz::{random_polymatroid, random_table, FAMILIES};
use polyprophet::polymatroid::{brute_force_max, greedy_max, is_member, Allocation};
use polyprophet::submodular::{
    rationalize, AuctionInstance, CapacitatedEdge, NetworkCutSpec, PositionAuctionSpec,
    Rational, SubmodularSpec,
};
use proptest::prelude::*;

/// Best assignment of the agents in `set` to distinct slots, by trying every
/// injective map.
fn assignment_value(qualities: &[u64], agents: &[usize], set: u32) -> u64 {
    let present: Vec<usize> = agents.iter().copied().filter(|a| set >> a & 1 == 1).collect();
    fn go(k: usize, present: &[usize], used: &mut Vec<bool>, q: &[u64]) -> u64 {
        if k == present.len() {
            return 0;
        }
        let mut best = 0;
        for s in 0..q.len() {
            if !used[s] {
                used[s] = true;
                best = best.max(q[s] + go(k + 1, present, used, q));
                used[s] = false;
            }
        }
        best
    }
    go(0, &present, &mut vec![false; qualities.len()], qualities)
}

/// Minimum over all node sets containing the source and none of the demand
/// nodes of `set`.
fn cut_by_enumeration(spec: &NetworkCutSpec, set: u32) -> u64 {
    if set == 0 {
        return 0;
    }
    let demand: Vec<usize> = (0..spec.agents.len())
        .filter(|a| set >> a & 1 == 1)
        .flat_map(|a| spec.agents[a].iter().copied())
        .collect();
    let mut best = u64::MAX;
    for side in 0u32..1 << spec.nodes {
        if side >> spec.source & 1 == 0 || demand.iter().any(|&d| side >> d & 1 == 1) {
            continue;
        }
        let cut = spec
            .edges
            .iter()
            .filter(|e| side >> e.from & 1 == 1 && side >> e.to & 1 == 0)
            .map(|e| e.capacity)
            .sum();
        best = best.min(cut);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_matches_brute_force(seed in any::<u64>(), fam in 0..FAMILIES.len(), n in 1usize..=5,
                                  quarters in prop::collection::vec(0u32..=16, 5)) {
        let mut rng = RandomSource::new(seed, 0).rng();
        let f = random_polymatroid(&mut rng, FAMILIES[fam], n);
        let w: Vec<f64> = quarters[..n].iter().map(|&k| k as f64 / 4.0).collect();
        let (z, g) = greedy_max(&f, &w).unwrap();
        prop_assert!(is_member(&f, &z).unwrap());
        prop_assert_eq!(g, brute_force_max(&f, &w).unwrap().1);
    }

    #[test]
    fn position_auction_matches_assignment(
        n in 1usize..=4,
        raw in prop::collection::vec(0u64..=3, 4),
        slots in 1usize..=4,
        perm_seed in any::<u64>(),
    ) {
        let slots = slots.min(n);
        let mut q: Vec<u64> = raw[..slots].to_vec();
        q.sort_unstable_by(|a, b| b.cmp(a));
        let mut rng = RandomSource::new(perm_seed, 0).rng();
        let mut agents: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(agents.as_mut_slice(), &mut rng);
        agents.truncate(slots);
        let spec = SubmodularSpec::PositionAuction(PositionAuctionSpec {
            n,
            instances: vec![AuctionInstance {
                qualities: q.iter().map(|&v| Rational::integer(v as i64)).collect(),
                agents: agents.clone(),
            }],
        });
        for s in 0..1u32 << n {
            prop_assert_eq!(spec.evaluate(s), assignment_value(&q, &agents, s));
        }
    }

    #[test]
    fn network_cut_matches_enumeration(
        nodes in 3usize..=8,
        edge_bits in prop::collection::vec((0usize..8, 0usize..8, 1u64..=3), 0..16),
        agent_count in 1usize..=3,
    ) {
        let agent_count = agent_count.min(nodes - 1);
        let edges: Vec<CapacitatedEdge> = edge_bits
            .into_iter()
            .filter(|&(a, b, _)| a < nodes && b < nodes && a != b)
            .map(|(from, to, capacity)| CapacitatedEdge { from, to, capacity })
            .collect();
        let spec = NetworkCutSpec {
            nodes,
            edges,
            source: 0,
            agents: (0..agent_count).map(|a| vec![nodes - 1 - a]).collect(),
        };
        let f = SubmodularSpec::NetworkCut(spec.clone());
        for s in 0..1u32 << agent_count {
            prop_assert_eq!(f.evaluate(s), cut_by_enumeration(&spec, s));
        }
    }

    #[test]
    fn matroid_basis_weight_is_polymatroid_optimum(seed in any::<u64>(), n in 1usize..=4,
                                                   quarters in prop::collection::vec(0u32..=16, 4)) {
        let mut rng = RandomSource::new(seed, 1).rng();
        let f = random_table(&mut rng, n, 5);
        let w: Vec<f64> = quarters[..n].iter().map(|&k| k as f64 / 4.0).collect();
        let opt = greedy_max(&f, &w).unwrap().1;
        for sizing in [BlockSizing::SingletonCaps, BlockSizing::Uniform] {
            let m = BlockMatroid::from_table(f.clone(), sizing);
            let weights = BlockWeights(w.clone());
            let basis = m.max_weight_basis(&weights).unwrap();
            prop_assert_eq!(weights.set_weight(&basis), opt);
            prop_assert_eq!(basis.len() as u64, m.rank());
        }
    }
}

#[test]
fn rationalized_auction_scales_by_common_denominator() {
    let spec = PositionAuctionSpec {
        n: 2,
        instances: vec![AuctionInstance {
            qualities: vec!["3/2".parse().unwrap(), "1/3".parse().unwrap()],
            agents: vec![0, 1],
        }],
    };
    let (scaled, scale) = spec.rationalize().unwrap();
    assert_eq!(scale, 6);
    let f = SubmodularSpec::PositionAuction(scaled);
    assert_eq!(f.evaluate(0b01), 9);
    assert_eq!(f.evaluate(0b11), 11);
}

#[test]
fn rationalized_table_is_integral() {
    let values: Vec<Rational> = ["0", "1/2", "1/3", "2/3"].iter().map(|s| s.parse().unwrap()).collect();
    let (spec, scale) = rationalize(&values).unwrap();
    assert_eq!(scale, 6);
    let t = spec.table().unwrap();
    assert_eq!(t.values(), &[0, 3, 2, 4]);
    assert!(is_member(&t, &Allocation(vec![2, 2])).unwrap());
    assert!(!is_member(&t, &Allocation(vec![3, 2])).unwrap());
}
