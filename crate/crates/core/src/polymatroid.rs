//! Membership in `P_f` and the offline optimum `max { w·y : y ∈ P_f }`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::submodular::{FunctionTable, Subset};

/// Integer allocation vector, one coordinate per ground-set element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation(pub Vec<u64>);

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Allocation(vec![0; n])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn value(&self, weights: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(weights)
            .map(|(&z, &w)| z as f64 * w)
            .sum()
    }
}

/// `x(S)` for every subset `S`.
pub(crate) fn subset_sums(x: &[u64]) -> Vec<u64> {
    let n = x.len();
    let mut sums = vec![0u64; 1 << n];
    for s in 1..sums.len() {
        let low = s.trailing_zeros() as usize;
        sums[s] = sums[s & (s - 1)] + x[low];
    }
    sums
}

fn check_len(f: &FunctionTable, len: usize) -> Result<()> {
    if len != f.n() {
        return Err(Error::validation(
            "allocation",
            format!("length {len} does not match ground set size {}", f.n()),
        ));
    }
    Ok(())
}

/// `z(S) <= f(S)` for all `S`. Non-negativity is carried by the type.
pub fn is_member(f: &FunctionTable, z: &Allocation) -> Result<bool> {
    check_len(f, z.0.len())?;
    let sums = subset_sums(&z.0);
    Ok(sums
        .iter()
        .enumerate()
        .all(|(s, &x)| x <= f.value(s as Subset)))
}

/// Largest `d` such that `x + d·e_i` stays in `P_f`, i.e.
/// `min { f(S) - x(S) : i ∈ S }`. Assumes `x ∈ P_f`.
pub fn max_increment(f: &FunctionTable, x: &[u64], i: usize) -> u64 {
    let sums = subset_sums(x);
    let bit = 1usize << i;
    let mut best = u64::MAX;
    for s in (0..sums.len()).filter(|s| s & bit != 0) {
        let slack = f.value(s as Subset).saturating_sub(sums[s]);
        if slack < best {
            best = slack;
            if best == 0 {
                break;
            }
        }
    }
    best
}

/// Size of the largest `y ∈ P_f` with `y <= caps`.
pub fn capped_rank(f: &FunctionTable, caps: &[u64]) -> u64 {
    let mut y = vec![0u64; caps.len()];
    for i in 0..caps.len() {
        y[i] = caps[i].min(max_increment(f, &y, i));
    }
    y.iter().sum()
}

/// Elements by decreasing weight, ties by ascending index.
pub fn weight_order(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// Polymatroid greedy: visit elements by decreasing weight and give each
/// its marginal `f(prefix + i) - f(prefix)`.
pub fn greedy_max(f: &FunctionTable, weights: &[f64]) -> Result<(Allocation, f64)> {
    check_len(f, weights.len())?;
    let mut z = Allocation::zeros(f.n());
    let mut prefix: Subset = 0;
    for i in weight_order(weights) {
        let next = prefix | 1 << i;
        z.0[i] = f.value(next) - f.value(prefix);
        prefix = next;
    }
    let objective = z.value(weights);
    Ok((z, objective))
}

pub const BRUTE_FORCE_MAX_N: usize = 6;
pub const BRUTE_FORCE_MAX_VALUE: u64 = 8;

/// Exhaustive search over integer vectors `0 <= z_i <= f({i})`.
pub fn brute_force_max(f: &FunctionTable, weights: &[f64]) -> Result<(Allocation, f64)> {
    check_len(f, weights.len())?;
    let n = f.n();
    let top = f.value(f.full_set());
    if n > BRUTE_FORCE_MAX_N || top > BRUTE_FORCE_MAX_VALUE {
        return Err(Error::TooLarge {
            what: "brute-force search space",
            size: (top as u128 + 1).pow(n as u32),
            limit: (BRUTE_FORCE_MAX_VALUE as u128 + 1).pow(BRUTE_FORCE_MAX_N as u32),
        });
    }
    let caps: Vec<u64> = (0..n).map(|i| f.value(1 << i)).collect();
    let mut z = vec![0u64; n];
    let mut best = (Allocation::zeros(n), 0.0);
    loop {
        let candidate = Allocation(z.clone());
        let value = candidate.value(weights);
        if value > best.1 && is_member(f, &candidate)? {
            best = (candidate, value);
        }
        let mut k = 0;
        loop {
            if k == n {
                return Ok(best);
            }
            if z[k] < caps[k] {
                z[k] += 1;
                break;
            }
            z[k] = 0;
            k += 1;
        }
    }
}
