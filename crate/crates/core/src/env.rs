//! Feasibility environments: single item, matroids and position auctions.
//!
//! Agent sets are `u64` bitmasks, so environments hold at most 64 agents
//! (16 for explicit independent-set families).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_AGENTS: usize = 64;
pub const MAX_EXPLICIT_AGENTS: usize = 16;
const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Environment {
    SingleItem { n: usize },
    Matroid { n: usize, matroid: MatroidSpec },
    /// Slot weights `alpha_1 >= alpha_2 >= ... >= 0`; slots beyond the list weigh 0.
    Positions { n: usize, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatroidSpec {
    Uniform { rank: usize },
    /// At most `capacities[k]` agents from `parts[k]`; parts partition the agents.
    Partition { parts: Vec<Vec<usize>>, capacities: Vec<usize> },
    Explicit { independent_sets: IndependentSets },
}

/// Explicit independent-set family with a bitmask lookup table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct IndependentSets {
    sets: Vec<Vec<usize>>,
    masks: HashSet<u64>,
}

impl IndependentSets {
    pub fn new(sets: Vec<Vec<usize>>) -> Self {
        let masks = sets.iter().map(|s| mask_of(s)).collect();
        IndependentSets { sets, masks }
    }

    pub fn from_masks(masks: impl IntoIterator<Item = u64>) -> Self {
        let mut ms: Vec<u64> = masks.into_iter().collect();
        ms.sort_unstable();
        ms.dedup();
        let sets = ms.iter().map(|&m| members(m)).collect();
        IndependentSets {
            sets,
            masks: ms.into_iter().collect(),
        }
    }

    pub fn contains(&self, mask: u64) -> bool {
        self.masks.contains(&mask)
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn masks(&self) -> impl Iterator<Item = u64> + '_ {
        self.masks.iter().copied()
    }
}

impl PartialEq for IndependentSets {
    fn eq(&self, other: &Self) -> bool {
        self.masks == other.masks
    }
}

impl From<Vec<Vec<usize>>> for IndependentSets {
    fn from(sets: Vec<Vec<usize>>) -> Self {
        IndependentSets::new(sets)
    }
}

impl From<IndependentSets> for Vec<Vec<usize>> {
    fn from(s: IndependentSets) -> Self {
        s.sets
    }
}

pub fn mask_of(agents: &[usize]) -> u64 {
    agents.iter().fold(0u64, |m, &a| m | (1u64 << a))
}

pub fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|&a| mask & (1u64 << a) != 0).collect()
}

/// Tie-breaking priority: agents listed first win ties. Defaults to index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieOrder {
    rank: Vec<usize>,
}

impl TieOrder {
    pub fn index_order(n: usize) -> Self {
        TieOrder { rank: (0..n).collect() }
    }

    /// `priority` lists agents from the strongest tie claim to the weakest.
    pub fn from_priority(priority: &[usize]) -> Result<Self> {
        let n = priority.len();
        let mut rank = vec![usize::MAX; n];
        for (pos, &a) in priority.iter().enumerate() {
            if a >= n || rank[a] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "tie order {priority:?} is not a permutation of 0..{n}"
                )));
            }
            rank[a] = pos;
        }
        Ok(TieOrder { rank })
    }

    pub fn rank(&self, agent: usize) -> usize {
        self.rank[agent]
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    pub fn priority(&self) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.rank.len()).collect();
        p.sort_by_key(|&a| self.rank[a]);
        p
    }

    /// `true` if agent `a` bidding `ba` is ordered before agent `b` bidding `bb`.
    pub fn precedes(&self, a: usize, ba: f64, b: usize, bb: f64) -> bool {
        ba > bb || (ba == bb && self.rank[a] < self.rank[b])
    }
}

/// Result of a max-weight allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Slot index per agent (always 0 outside position environments).
    pub slot: Vec<Option<usize>>,
    /// Allocation amount per agent.
    pub x: Vec<f64>,
}

impl Allocation {
    pub fn served(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&i| self.slot[i].is_some()).collect()
    }

    pub fn is_served(&self, i: usize) -> bool {
        self.slot[i].is_some()
    }
}

/// Smallest competing bid an agent has to beat, together with the agent holding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdBid {
    pub value: f64,
    pub holder: Option<usize>,
}

impl ThresholdBid {
    pub fn free() -> Self {
        ThresholdBid {
            value: 0.0,
            holder: None,
        }
    }

    pub fn blocked() -> Self {
        ThresholdBid {
            value: f64::INFINITY,
            holder: None,
        }
    }

    /// Whether agent `i` bidding `b` beats this threshold.
    pub fn beaten_by(&self, i: usize, b: f64, tie: &TieOrder) -> bool {
        if self.value.is_infinite() {
            return false;
        }
        match self.holder {
            None => b >= self.value,
            Some(h) => tie.precedes(i, b, h, self.value),
        }
    }
}

impl Environment {
    pub fn single_item(n: usize) -> Self {
        Environment::SingleItem { n }
    }

    pub fn positions(n: usize, weights: Vec<f64>) -> Self {
        Environment::Positions { n, weights }
    }

    pub fn partition(n: usize, parts: Vec<Vec<usize>>, capacities: Vec<usize>) -> Self {
        Environment::Matroid {
            n,
            matroid: MatroidSpec::Partition { parts, capacities },
        }
    }

    pub fn uniform_matroid(n: usize, rank: usize) -> Self {
        Environment::Matroid {
            n,
            matroid: MatroidSpec::Uniform { rank },
        }
    }

    pub fn explicit(n: usize, sets: Vec<Vec<usize>>) -> Self {
        Environment::Matroid {
            n,
            matroid: MatroidSpec::Explicit {
                independent_sets: IndependentSets::new(sets),
            },
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Environment::SingleItem { n } | Environment::Matroid { n, .. } | Environment::Positions { n, .. } => n,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Environment::SingleItem { .. } => "single-item",
            Environment::Matroid { .. } => "matroid",
            Environment::Positions { .. } => "positions",
        }
    }

    /// Position weights, or `None` outside position environments.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Environment::Positions { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || n > MAX_AGENTS {
            return Err(Error::InvalidParameter(format!("agent count {n} must lie in 1..={MAX_AGENTS}")));
        }
        match self {
            Environment::SingleItem { .. } => Ok(()),
            Environment::Positions { weights, .. } => {
                if weights.is_empty() {
                    return Err(Error::InvalidParameter("positions need at least one slot".into()));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidParameter(format!("slot weights must be finite and >= 0: {weights:?}")));
                }
                if weights.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidParameter(format!("slot weights must be nonincreasing: {weights:?}")));
                }
                Ok(())
            }
            Environment::Matroid { matroid, .. } => match matroid {
                MatroidSpec::Uniform { .. } => Ok(()),
                MatroidSpec::Partition { parts, capacities } => {
                    if parts.len() != capacities.len() {
                        return Err(Error::InvalidParameter("partition needs one capacity per part".into()));
                    }
                    let mut seen = vec![false; n];
                    for &a in parts.iter().flatten() {
                        if a >= n || seen[a] {
                            return Err(Error::InvalidParameter(format!(
                                "partition parts must cover each of the {n} agents exactly once"
                            )));
                        }
                        seen[a] = true;
                    }
                    if seen.iter().any(|s| !s) {
                        return Err(Error::InvalidParameter(format!(
                            "partition parts must cover each of the {n} agents exactly once"
                        )));
                    }
                    Ok(())
                }
                MatroidSpec::Explicit { independent_sets } => {
                    if n > MAX_EXPLICIT_AGENTS {
                        return Err(Error::UnsupportedSize(format!(
                            "explicit independent-set families support at most {MAX_EXPLICIT_AGENTS} agents, got {n}"
                        )));
                    }
                    if independent_sets.sets().iter().flatten().any(|&a| a >= n) {
                        return Err(Error::InvalidParameter("independent set names an unknown agent".into()));
                    }
                    if !independent_sets.contains(0) {
                        return Err(Error::InvalidParameter("independent-set family must contain the empty set".into()));
                    }
                    for m in independent_sets.masks() {
                        for a in members(m) {
                            if !independent_sets.contains(m & !(1u64 << a)) {
                                return Err(Error::InvalidParameter(format!(
                                    "independent-set family is not downward closed at {:?}",
                                    members(m)
                                )));
                            }
                        }
                    }
                    Ok(())
                }
            },
        }
    }

    /// Independence oracle for the set of served agents (positions: at most `m` agents).
    pub fn is_independent(&self, mask: u64) -> bool {
        match self {
            Environment::SingleItem { .. } => mask.count_ones() <= 1,
            Environment::Positions { weights, .. } => mask.count_ones() as usize <= weights.len(),
            Environment::Matroid { matroid, .. } => match matroid {
                MatroidSpec::Uniform { rank } => mask.count_ones() as usize <= *rank,
                MatroidSpec::Partition { parts, capacities } => parts
                    .iter()
                    .zip(capacities)
                    .all(|(p, &c)| (mask & mask_of(p)).count_ones() as usize <= c),
                MatroidSpec::Explicit { independent_sets } => independent_sets.contains(mask),
            },
        }
    }

    /// Whether agents `a` and `b` can be served simultaneously.
    pub fn can_serve_together(&self, a: usize, b: usize) -> bool {
        a != b && self.is_independent((1u64 << a) | (1u64 << b))
    }

    fn check_bids(&self, bids: &[f64]) -> Result<()> {
        if bids.len() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "expected {} bids, got {}",
                self.n(),
                bids.len()
            )));
        }
        for (agent, &bid) in bids.iter().enumerate() {
            if !(bid >= 0.0) {
                return Err(Error::NegativeBid { agent, bid });
            }
        }
        Ok(())
    }

    /// Serves the max-weight feasible set of bidders.
    pub fn max_weight_allocation(&self, bids: &[f64], tie: &TieOrder) -> Result<Allocation> {
        self.check_bids(bids)?;
        Ok(self.allocate(bids, u64::MAX, tie))
    }

    /// Max-weight allocation among the agents in `active`; bids are assumed valid.
    pub fn allocate(&self, bids: &[f64], active: u64, tie: &TieOrder) -> Allocation {
        let n = self.n();
        let order = sorted_agents(bids, active, n, tie, None);
        let mut slot = vec![None; n];
        let mut x = vec![0.0; n];
        match self {
            Environment::Positions { weights, .. } => {
                for (j, &a) in order.iter().take(weights.len()).enumerate() {
                    slot[a] = Some(j);
                    x[a] = weights[j];
                }
            }
            _ => {
                let mut chosen = 0u64;
                for &a in &order {
                    let next = chosen | (1u64 << a);
                    if self.is_independent(next) {
                        chosen = next;
                        slot[a] = Some(0);
                        x[a] = 1.0;
                    }
                }
            }
        }
        Allocation { slot, x }
    }

    /// Threshold bids for agent `i` against the other active agents.
    ///
    /// Single item and matroids return one entry: the bid `i` must beat to be served.
    /// Positions return one entry per slot `j`: the bid `i` must beat to obtain slot
    /// `j` or better.
    pub fn threshold_bids(&self, bids: &[f64], active: u64, i: usize, tie: &TieOrder) -> Vec<ThresholdBid> {
        let n = self.n();
        let others = sorted_agents(bids, active, n, tie, Some(i));
        let at = |k: usize| -> ThresholdBid {
            others
                .get(k)
                .map(|&h| ThresholdBid {
                    value: bids[h],
                    holder: Some(h),
                })
                .unwrap_or_else(ThresholdBid::free)
        };
        match self {
            Environment::SingleItem { .. } => vec![at(0)],
            Environment::Positions { weights, .. } => (0..weights.len()).map(at).collect(),
            Environment::Matroid { .. } => {
                let me = 1u64 << i;
                if !self.is_independent(me) {
                    return vec![ThresholdBid::blocked()];
                }
                let mut chosen = 0u64;
                for (k, &a) in others.iter().enumerate() {
                    let next = chosen | (1u64 << a);
                    if self.is_independent(next) {
                        chosen = next;
                        if !self.is_independent(chosen | me) {
                            return vec![at(k)];
                        }
                    }
                }
                vec![ThresholdBid::free()]
            }
        }
    }

    /// Scalar threshold to be served at all (last slot for positions).
    pub fn threshold_bid(&self, bids: &[f64], i: usize, tie: &TieOrder) -> Result<ThresholdBid> {
        let mut b = bids.to_vec();
        b[i] = 0.0;
        self.check_bids(&b)?;
        Ok(*self.threshold_bids(bids, u64::MAX, i, tie).last().expect("nonempty stair"))
    }

    /// Feasibility of a fractional allocation.
    pub fn is_feasible(&self, x: &[f64]) -> Result<bool> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::InvalidParameter(format!("expected {n} allocation entries, got {}", x.len())));
        }
        if x.iter().any(|&v| !(-FEASIBILITY_SLACK..=1.0 + FEASIBILITY_SLACK).contains(&v)) {
            return Ok(false);
        }
        let sum: f64 = x.iter().sum();
        Ok(match self {
            Environment::SingleItem { .. } => sum <= 1.0 + FEASIBILITY_SLACK,
            Environment::Positions { weights, .. } => {
                let mut s = x.to_vec();
                s.sort_by(|a, b| b.total_cmp(a));
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                s.iter().enumerate().all(|(k, &v)| {
                    lhs += v;
                    rhs += weights.get(k).copied().unwrap_or(0.0);
                    lhs <= rhs + FEASIBILITY_SLACK
                })
            }
            Environment::Matroid { matroid, .. } => match matroid {
                MatroidSpec::Uniform { rank } => sum <= *rank as f64 + FEASIBILITY_SLACK,
                MatroidSpec::Partition { parts, capacities } => parts
                    .iter()
                    .zip(capacities)
                    .all(|(p, &c)| p.iter().map(|&a| x[a]).sum::<f64>() <= c as f64 + FEASIBILITY_SLACK),
                MatroidSpec::Explicit { .. } => {
                    if n > MAX_EXPLICIT_AGENTS {
                        return Err(Error::UnsupportedSize(format!(
                            "fractional feasibility enumerates subsets; {n} agents exceed {MAX_EXPLICIT_AGENTS}"
                        )));
                    }
                    let ranks = self.rank_table();
                    (0..(1u64 << n)).all(|s| {
                        let load: f64 = members(s).iter().map(|&a| x[a]).sum();
                        load <= ranks[s as usize] as f64 + FEASIBILITY_SLACK
                    })
                }
            },
        })
    }

    /// Rank of every subset of agents (`2^n` entries).
    pub fn rank_table(&self) -> Vec<u32> {
        let n = self.n();
        assert!(n <= MAX_EXPLICIT_AGENTS + 4, "rank table over {n} agents is too large");
        let size = 1usize << n;
        let mut rank = vec![0u32; size];
        for s in 1..size {
            if self.is_independent(s as u64) {
                rank[s] = (s as u64).count_ones();
            } else {
                rank[s] = members(s as u64).iter().map(|&a| rank[s & !(1usize << a)]).max().unwrap_or(0);
            }
        }
        rank
    }

    /// Exhaustive check of the exchange axiom; `None` when it holds, otherwise a
    /// pair of independent sets `(A, B)` with `|A| < |B|` that cannot be extended.
    pub fn check_exchange(&self) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
        let n = self.n();
        if n > 12 {
            return Err(Error::UnsupportedSize(format!("exchange check enumerates pairs of sets; {n} agents exceed 12")));
        }
        let indep: Vec<u64> = (0..(1u64 << n)).filter(|&m| self.is_independent(m)).collect();
        for &a in &indep {
            for &b in &indep {
                if a.count_ones() < b.count_ones() {
                    let ok = members(b & !a).iter().any(|&e| self.is_independent(a | (1u64 << e)));
                    if !ok {
                        return Ok(Some((members(a), members(b))));
                    }
                }
            }
        }
        Ok(None)
    }

    /// Max-weight feasible allocation vertex for nonnegative weights, used for
    /// maximizing linear objectives over fractional allocations. Positions assign
    /// slots greedily.
    pub fn best_vertex(&self, weights: &[f64], tie: &TieOrder) -> Vec<f64> {
        let n = self.n();
        let mut active = 0u64;
        for (a, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                active |= 1u64 << a;
            }
        }
        if active == 0 {
            return vec![0.0; n];
        }
        self.allocate(weights, active, tie).x
    }
}

/// Active agents (minus `skip`) sorted by descending bid, then tie rank.
fn sorted_agents(bids: &[f64], active: u64, n: usize, tie: &TieOrder, skip: Option<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n)
        .filter(|&a| active & (1u64 << a) != 0 && Some(a) != skip)
        .collect();
    order.sort_by(|&a, &b| bids[b].total_cmp(&bids[a]).then(tie.rank(a).cmp(&tie.rank(b))));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pm() -> Environment {
        Environment::partition(4, vec![vec![0, 1], vec![2, 3]], vec![1, 1])
    }

    fn brute_best(env: &Environment, bids: &[f64], tie: &TieOrder) -> u64 {
        // max bid sum, then lexicographic tie rank of the sorted members
        let n = env.n();
        let key = |m: u64| -> (f64, Vec<(u64, usize)>) {
            let sum: f64 = members(m).iter().map(|&a| bids[a]).sum();
            let mut ks: Vec<(u64, usize)> = members(m).iter().map(|&a| (bids[a].to_bits(), a)).collect();
            ks.sort_by(|x, y| bids[y.1].total_cmp(&bids[x.1]).then(tie.rank(x.1).cmp(&tie.rank(y.1))));
            (sum, ks)
        };
        let mut best = 0u64;
        let mut best_sum = -1.0;
        for m in 0..(1u64 << n) {
            if env.is_independent(m) {
                let (s, _) = key(m);
                if s > best_sum + 1e-12 || (s >= best_sum - 1e-12 && m.count_ones() > best.count_ones()) {
                    best = m;
                    best_sum = s;
                }
            }
        }
        best
    }

    #[test]
    fn allocation_examples() {
        let tie = TieOrder::index_order(3);
        let a = Environment::single_item(3).max_weight_allocation(&[3.0, 5.0, 2.0], &tie).unwrap();
        assert_eq!(a.x, vec![0.0, 1.0, 0.0]);
        let a = Environment::positions(3, vec![1.0, 0.5]).max_weight_allocation(&[4.0, 2.0, 3.0], &tie).unwrap();
        assert_eq!(a.x, vec![1.0, 0.0, 0.5]);
        let a = pm().max_weight_allocation(&[3.0, 5.0, 2.0, 4.0], &TieOrder::index_order(4)).unwrap();
        assert_eq!(a.served(), vec![1, 3]);
        assert_eq!(brute_best(&pm(), &[3.0, 5.0, 2.0, 4.0], &TieOrder::index_order(4)), mask_of(&[1, 3]));
    }

    #[test]
    fn negative_bid_rejected() {
        let err = Environment::single_item(2)
            .max_weight_allocation(&[1.0, -0.5], &TieOrder::index_order(2))
            .unwrap_err();
        assert!(matches!(err, Error::NegativeBid { agent: 1, .. }));
    }

    #[test]
    fn tie_override() {
        let tie = TieOrder::from_priority(&[1, 0]).unwrap();
        let a = Environment::single_item(2).max_weight_allocation(&[1.0, 1.0], &tie).unwrap();
        assert_eq!(a.served(), vec![1]);
        let a = Environment::single_item(2)
            .max_weight_allocation(&[1.0, 1.0], &TieOrder::index_order(2))
            .unwrap();
        assert_eq!(a.served(), vec![0]);
    }

    #[test]
    fn threshold_examples() {
        let tie = TieOrder::index_order(3);
        let t = Environment::single_item(3).threshold_bid(&[0.0, 5.0, 2.0], 0, &tie).unwrap();
        assert_eq!(t.value, 5.0);
        let tie4 = TieOrder::index_order(4);
        let t = pm().threshold_bid(&[0.0, 5.0, 2.0, 4.0], 0, &tie4).unwrap();
        assert_eq!(t.value, 5.0);
        // oracle: smallest grid bid that gets agent 0 served
        let mut smallest = f64::INFINITY;
        for k in 0..=800 {
            let b = k as f64 * 0.01;
            let a = pm().max_weight_allocation(&[b, 5.0, 2.0, 4.0], &tie4).unwrap();
            if a.is_served(0) {
                smallest = b;
                break;
            }
        }
        assert_eq!(smallest, 5.0);
        let stair = Environment::positions(3, vec![1.0, 0.5]).threshold_bids(&[0.0, 2.0, 3.0], u64::MAX, 0, &tie);
        assert_eq!(stair.iter().map(|t| t.value).collect::<Vec<_>>(), vec![3.0, 2.0]);
    }

    #[test]
    fn feasibility_examples() {
        let s = Environment::single_item(2);
        assert!(s.is_feasible(&[0.5, 0.5]).unwrap());
        assert!(!s.is_feasible(&[0.7, 0.5]).unwrap());
        let p = Environment::positions(3, vec![1.0, 0.5]);
        assert!(p.is_feasible(&[1.0, 0.5, 0.0]).unwrap());
        assert!(!p.is_feasible(&[1.0, 0.9, 0.0]).unwrap());
        assert!(pm().is_feasible(&[0.5, 0.5, 1.0, 0.0]).unwrap());
        // same family given explicitly: rank inequalities by enumeration
        let explicit = Environment::explicit(
            4,
            vec![vec![], vec![0], vec![1], vec![2], vec![3], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]],
        );
        explicit.validate().unwrap();
        assert!(explicit.is_feasible(&[0.5, 0.5, 1.0, 0.0]).unwrap());
        assert!(!explicit.is_feasible(&[0.6, 0.5, 1.0, 0.0]).unwrap());
        assert_eq!(explicit.check_exchange().unwrap(), None);
    }

    #[test]
    fn explicit_validation() {
        let not_closed = Environment::explicit(2, vec![vec![], vec![0, 1]]);
        assert!(not_closed.validate().is_err());
        let no_empty = Environment::explicit(2, vec![vec![0]]);
        assert!(no_empty.validate().is_err());
        // downward closed but not a matroid: {0,1} and {2}
        let bad = Environment::explicit(3, vec![vec![], vec![0], vec![1], vec![2], vec![0, 1]]);
        bad.validate().unwrap();
        assert!(bad.check_exchange().unwrap().is_some());
        let big = Environment::explicit(17, vec![vec![]]);
        assert!(matches!(big.validate(), Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn serde_roundtrip() {
        let envs = vec![
            Environment::single_item(2),
            pm(),
            Environment::uniform_matroid(3, 2),
            Environment::positions(4, vec![1.0, 0.6, 0.3]),
            Environment::explicit(2, vec![vec![], vec![0], vec![1]]),
        ];
        for e in envs {
            let s = toml::to_string(&e).unwrap();
            let back: Environment = toml::from_str(&s).unwrap();
            assert_eq!(back, e);
        }
    }

    fn random_partition(n: usize, seed: &[usize]) -> Environment {
        let k = 1 + seed[0] % 3;
        let mut parts = vec![Vec::new(); k];
        for a in 0..n {
            parts[seed[1 + a] % k].push(a);
        }
        parts.retain(|p| !p.is_empty());
        let caps = parts.iter().enumerate().map(|(j, p)| 1 + (seed[j] % p.len())).collect();
        Environment::partition(n, parts, caps)
    }

    proptest! {
        #[test]
        fn greedy_matches_brute_force(n in 2usize..8, seed in proptest::collection::vec(0usize..100, 12),
                                       bids in proptest::collection::vec(0u32..6, 8)) {
            let env = random_partition(n, &seed);
            let bids: Vec<f64> = bids[..n].iter().map(|&b| b as f64).collect();
            let tie = TieOrder::index_order(n);
            let a = env.max_weight_allocation(&bids, &tie).unwrap();
            let sum: f64 = a.served().iter().map(|&i| bids[i]).sum();
            let m = brute_best(&env, &bids, &tie);
            let best: f64 = members(m).iter().map(|&i| bids[i]).sum();
            prop_assert!((sum - best).abs() < 1e-12);
        }

        #[test]
        fn served_beats_threshold(n in 2usize..8, seed in proptest::collection::vec(0usize..100, 12),
                                  bids in proptest::collection::vec(0.0f64..10.0, 8)) {
            let env = random_partition(n, &seed);
            let bids = &bids[..n];
            let tie = TieOrder::index_order(n);
            let a = env.max_weight_allocation(bids, &tie).unwrap();
            for i in 0..n {
                let t = env.threshold_bids(bids, u64::MAX, i, &tie)[0];
                prop_assert_eq!(a.is_served(i), t.beaten_by(i, bids[i], &tie));
                if a.is_served(i) {
                    prop_assert!(t.value <= bids[i]);
                }
            }
        }

        #[test]
        fn scaling_preserves_serving_set(n in 2usize..8, seed in proptest::collection::vec(0usize..100, 12),
                                         bids in proptest::collection::vec(0.0f64..10.0, 8), c in 0.1f64..10.0) {
            let env = random_partition(n, &seed);
            let bids = &bids[..n];
            let scaled: Vec<f64> = bids.iter().map(|b| b * c).collect();
            let tie = TieOrder::index_order(n);
            prop_assert_eq!(env.max_weight_allocation(bids, &tie).unwrap().served(),
                            env.max_weight_allocation(&scaled, &tie).unwrap().served());
        }

        #[test]
        fn position_stair_matches_slots(bids in proptest::collection::vec(0.0f64..10.0, 5)) {
            let env = Environment::positions(5, vec![1.0, 0.7, 0.2]);
            let tie = TieOrder::index_order(5);
            let a = env.max_weight_allocation(&bids, &tie).unwrap();
            for i in 0..5 {
                let stair = env.threshold_bids(&bids, u64::MAX, i, &tie);
                let got = stair.iter().position(|t| t.beaten_by(i, bids[i], &tie));
                prop_assert_eq!(got, a.slot[i]);
            }
        }
    }
}
