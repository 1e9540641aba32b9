//! Strategy profiles, interim rules and the damped best-response solver.
//!
//! A strategy is a table over the normalised quantile `u in [0, 1]`: agent `i` of
//! type `u` has value `values(u)` and bids `bids(u)`, both piecewise linear and
//! nondecreasing in `u`. Pure strategies use `values(u) = F^{-1}(u q_max)`; a
//! constant value column with increasing bids is a mixed strategy.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::Mechanism;
use crate::dist::ValueDistribution;
use crate::env::{Environment, ThresholdBid};
use crate::numeric::{
    bump, interp, isotonic_nondecreasing, measure_at_most, measure_below, trapezoid,
};
use crate::{Error, Result};

pub mod first_price;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStrategy {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
}

impl AgentStrategy {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, bids: Vec<f64>) -> Result<Self> {
        let s = AgentStrategy { nodes, values, bids };
        s.validate()?;
        Ok(s)
    }

    /// Pure strategy `bid(v)` on the quantile nodes of `dist`.
    pub fn from_fn(dist: &ValueDistribution, grid: usize, bid: impl Fn(f64) -> f64) -> Self {
        let nodes = dist.quantile_nodes(grid);
        let values: Vec<f64> = nodes.iter().map(|&u| dist.value_at(u)).collect();
        let bids = values.iter().map(|&v| bid(v)).collect();
        AgentStrategy { nodes, values, bids }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n < 2 || self.values.len() != n || self.bids.len() != n {
            return Err(Error::InvalidParameter("strategy tables need matching lengths >= 2".into()));
        }
        if self.nodes[0] != 0.0 || self.nodes[n - 1] != 1.0 || self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("strategy nodes must increase from 0 to 1".into()));
        }
        if self.bids.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter("strategy bids must be finite and >= 0".into()));
        }
        if self.bids.windows(2).any(|w| w[1] < w[0]) || self.values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("strategy values and bids must be nondecreasing".into()));
        }
        Ok(())
    }

    pub fn value_at(&self, u: f64) -> f64 {
        interp(&self.nodes, &self.values, u)
    }

    pub fn bid_at(&self, u: f64) -> f64 {
        interp(&self.nodes, &self.bids, u)
    }

    /// `Pr[bid < t]`.
    pub fn prob_below(&self, t: f64) -> f64 {
        measure_below(&self.nodes, &self.bids, t)
    }

    /// `Pr[bid <= t]`.
    pub fn prob_at_most(&self, t: f64) -> f64 {
        measure_at_most(&self.nodes, &self.bids, t)
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("nonempty table")
    }

    pub fn max_bid(&self) -> f64 {
        *self.bids.last().expect("nonempty table")
    }

    /// Bid as a function of value for pure strategies (first node with that value).
    pub fn bid_for_value(&self, v: f64) -> f64 {
        interp(&self.values, &self.bids, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    pub agents: Vec<AgentStrategy>,
}

impl StrategyProfile {
    pub fn new(agents: Vec<AgentStrategy>) -> Result<Self> {
        for a in &agents {
            a.validate()?;
        }
        Ok(StrategyProfile { agents })
    }

    pub fn from_fn(dists: &[ValueDistribution], grid: usize, bid: impl Fn(usize, f64) -> f64) -> Self {
        StrategyProfile {
            agents: dists
                .iter()
                .enumerate()
                .map(|(i, d)| AgentStrategy::from_fn(d, grid, |v| bid(i, v)))
                .collect(),
        }
    }

    pub fn truthful(dists: &[ValueDistribution], grid: usize) -> Self {
        Self::from_fn(dists, grid, |_, v| v)
    }

    pub fn scaled(dists: &[ValueDistribution], grid: usize, factor: f64) -> Self {
        Self::from_fn(dists, grid, |_, v| factor * v)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }
}

fn default_grid_values() -> usize {
    1024
}
fn default_grid_bids() -> usize {
    2048
}
fn default_damping() -> f64 {
    0.5
}
fn default_max_iters() -> usize {
    200
}
fn default_mc_samples() -> usize {
    20_000
}
fn default_method() -> String {
    "auto".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_grid_values")]
    pub grid_values: usize,
    #[serde(default = "default_grid_bids")]
    pub grid_bids: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Defaults to `1e-3` times the largest mean value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_regret: Option<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Registered solver name, or `auto`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grid_values: default_grid_values(),
            grid_bids: default_grid_bids(),
            damping: default_damping(),
            max_iters: default_max_iters(),
            target_regret: None,
            mc_samples: default_mc_samples(),
            method: default_method(),
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_values < 2 || self.grid_bids < 2 {
            return Err(Error::InvalidParameter("grid sizes must be at least 2".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidParameter("mc_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Competitor structure seen by one agent: its interim allocation as a function of bid.
#[derive(Debug, Clone)]
pub struct Landscape {
    agent: usize,
    reserve: f64,
    kind: LandscapeKind,
}

#[derive(Debug, Clone)]
enum LandscapeKind {
    /// Independent competitors; `weights` are slot weights (a single item is `[1]`).
    Product {
        rivals: Vec<Rival>,
        weights: Vec<f64>,
    },
    /// Sampled thresholds, sorted ascending: `(value, agent wins ties)`.
    Sampled { thresholds: Vec<(f64, bool)>, samples: usize },
}

#[derive(Debug, Clone)]
struct Rival {
    strategy: AgentStrategy,
    reserve: f64,
    /// Whether the focal agent wins ties against this rival.
    focal_wins_ties: bool,
}

impl Rival {
    /// Probability that this rival does not outrank a focal bid `b`.
    fn beaten(&self, b: f64) -> f64 {
        if self.focal_wins_ties {
            if b < self.reserve {
                self.strategy.prob_below(self.reserve)
            } else {
                self.strategy.prob_at_most(b)
            }
        } else {
            self.strategy.prob_below(b.max(self.reserve))
        }
    }
}

/// Independent uniform draws shared by every agent's sampled landscape.
pub fn joint_samples(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect()
}

impl Landscape {
    pub fn new(mech: &Mechanism, profile: &StrategyProfile, i: usize, mc_samples: usize, seed: u64) -> Self {
        let n = mech.n();
        let reserve = mech.reserves[i];
        let tie = &mech.tie_order;
        let product = |weights: Vec<f64>| LandscapeKind::Product {
            rivals: (0..n)
                .filter(|&j| j != i)
                .map(|j| Rival {
                    strategy: profile.agents[j].clone(),
                    reserve: mech.reserves[j],
                    focal_wins_ties: tie.rank(i) < tie.rank(j),
                })
                .collect(),
            weights,
        };
        let kind = match &mech.env {
            Environment::SingleItem { .. } => product(vec![1.0]),
            Environment::Positions { weights, .. } => product(weights.clone()),
            Environment::Matroid { .. } => {
                let draws = joint_samples(n, mc_samples, seed);
                let mut bids = vec![0.0; n];
                let mut thresholds: Vec<(f64, bool)> = draws
                    .iter()
                    .map(|u| {
                        for j in 0..n {
                            bids[j] = if j == i { 0.0 } else { profile.agents[j].bid_at(u[j]) };
                        }
                        let active = mech.active_mask(&bids) & !(1u64 << i);
                        let t: ThresholdBid = mech.env.threshold_bids(&bids, active, i, tie)[0];
                        let wins_ties = t.holder.map_or(true, |h| tie.rank(i) < tie.rank(h));
                        (t.value, wins_ties)
                    })
                    .collect();
                thresholds.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
                LandscapeKind::Sampled {
                    thresholds,
                    samples: mc_samples,
                }
            }
        };
        Landscape { agent: i, reserve, kind }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    /// Interim allocation of a bid; 0 below the reserve.
    pub fn x_at(&self, b: f64) -> f64 {
        if b < self.reserve {
            return 0.0;
        }
        match &self.kind {
            LandscapeKind::Product { rivals, weights } => {
                if weights.len() == 1 {
                    return weights[0] * rivals.iter().map(|r| r.beaten(b)).product::<f64>();
                }
                // Poisson-binomial distribution of the number of rivals ranked above
                let m = weights.len();
                let mut dist = vec![0.0; m + 1];
                dist[0] = 1.0;
                for r in rivals {
                    let lose = 1.0 - r.beaten(b);
                    for k in (0..=m).rev() {
                        let stay = dist[k] * (1.0 - lose);
                        let from_below = if k > 0 { dist[k - 1] * lose } else { 0.0 };
                        dist[k] = stay + from_below;
                    }
                    // mass pushed past slot m is dropped: those outcomes get nothing
                }
                (0..m).map(|k| weights[k] * dist[k]).sum()
            }
            LandscapeKind::Sampled { thresholds, samples } => {
                let below = thresholds.partition_point(|t| t.0 < b);
                let tied = thresholds[below..]
                    .iter()
                    .take_while(|t| t.0 == b && t.1)
                    .count();
                (below + tied) as f64 / *samples as f64
            }
        }
    }

    /// Breakpoints of the allocation curve: rival node bids and their right limits.
    pub fn rival_bids(&self) -> Vec<f64> {
        match &self.kind {
            LandscapeKind::Product { rivals, .. } => {
                let mut out = Vec::new();
                for r in rivals {
                    out.push(r.reserve);
                    out.extend(r.strategy.bids.iter().copied());
                }
                out
            }
            LandscapeKind::Sampled { thresholds, .. } => {
                let mut out: Vec<f64> = thresholds.iter().map(|t| t.0).filter(|v| v.is_finite()).collect();
                out.dedup();
                out
            }
        }
    }
}

/// One candidate action: a bid with its interim allocation and payment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    /// `None` is the withdraw action.
    pub bid: Option<f64>,
    pub x: f64,
    pub p: f64,
}

impl Action {
    pub fn withdraw() -> Self {
        Action { bid: None, x: 0.0, p: 0.0 }
    }

    pub fn utility(&self, v: f64) -> f64 {
        v * self.x - self.p
    }
}

pub fn evaluate_bid(mech: &Mechanism, land: &Landscape, b: f64) -> Action {
    let i = land.agent();
    if mech.withdraws(i, b) {
        return Action { bid: Some(b), x: 0.0, p: 0.0 };
    }
    let x = land.x_at(b);
    let p = mech.rule.interim_payment(b, x, mech.reserves[i], &|t| land.x_at(t));
    Action { bid: Some(b), x, p }
}

/// Candidate bids for agent `i`: the reserve, an offset uniform grid on
/// `[reserve, max_bid]`, and every rival breakpoint together with a bid just above it.
pub fn candidate_bids(land: &Landscape, n_agents: usize, grid_bids: usize, max_bid: f64) -> Vec<f64> {
    let i = land.agent();
    let r = land.reserve();
    let mut c = vec![r];
    if max_bid > r {
        let offset = (i as f64 + 1.0) / (2.0 * (n_agents as f64 + 1.0));
        let step = (max_bid - r) / grid_bids as f64;
        c.extend((0..grid_bids).map(|k| r + (k as f64 + offset) * step));
        c.push(max_bid);
    }
    for b in land.rival_bids() {
        if b >= r && b <= max_bid {
            c.push(b);
            let up = bump(b);
            if up <= max_bid {
                c.push(up);
            }
        }
    }
    c.sort_by(|a, b| a.total_cmp(b));
    c.dedup();
    c
}

/// Upper envelope of the utility lines `v x - p` over a candidate set, including withdraw.
#[derive(Debug, Clone)]
pub struct UtilityHull {
    lines: Vec<Action>,
}

impl UtilityHull {
    pub fn new(mut actions: Vec<Action>) -> Self {
        actions.push(Action::withdraw());
        // ascending x, then ascending p, then lower bid (withdraw first)
        actions.sort_by(|a, b| {
            a.x.total_cmp(&b.x)
                .then(a.p.total_cmp(&b.p))
                .then(a.bid.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.bid.unwrap_or(f64::NEG_INFINITY)))
        });
        // Pareto: keep strictly increasing x and strictly increasing p
        let mut pareto: Vec<Action> = Vec::with_capacity(actions.len());
        let mut min_p = f64::INFINITY;
        for a in actions.iter().rev() {
            if a.p < min_p {
                pareto.push(*a);
                min_p = a.p;
            } else if a.p == min_p {
                // same cost, lower allocation: dominated unless it has equal x (lower bid kept)
                if let Some(last) = pareto.last_mut() {
                    if last.x == a.x {
                        *last = *a;
                    }
                }
            }
        }
        pareto.reverse();
        // upper envelope for queries with v >= 0
        let mut hull: Vec<Action> = Vec::with_capacity(pareto.len());
        for a in pareto {
            while hull.len() >= 2 {
                let l1 = hull[hull.len() - 2];
                let l2 = hull[hull.len() - 1];
                // l2 useless if l3 overtakes l1 no later than l2 does
                let cross13 = (a.p - l1.p) * (l2.x - l1.x);
                let cross12 = (l2.p - l1.p) * (a.x - l1.x);
                if cross13 <= cross12 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(a);
        }
        UtilityHull { lines: hull }
    }

    pub fn lines(&self) -> &[Action] {
        &self.lines
    }

    /// Best action for each value of an ascending list; ties go to the lower bid.
    pub fn best_for_sorted(&self, values: &[f64]) -> Vec<Action> {
        let mut k = 0;
        values
            .iter()
            .map(|&v| {
                while k + 1 < self.lines.len() && self.lines[k + 1].utility(v) > self.lines[k].utility(v) {
                    k += 1;
                }
                self.lines[k]
            })
            .collect()
    }

    pub fn best(&self, v: f64) -> Action {
        let mut best = self.lines[0];
        for l in &self.lines[1..] {
            if l.utility(v) > best.utility(v) {
                best = *l;
            }
        }
        best
    }
}

/// Uniform bid grid on `[lo, s]`, where `s` is the cheapest bid in `[lo, hi]`
/// reaching the allocation at `hi`.
fn bid_grid(mech: &Mechanism, land: &Landscape, lo: f64, hi: f64, cells: usize) -> Vec<Action> {
    let x_hi = land.x_at(hi);
    let (mut a, mut b) = (lo, hi);
    if land.x_at(lo) >= x_hi {
        b = lo;
    }
    for _ in 0..60 {
        if b <= a {
            break;
        }
        let mid = 0.5 * (a + b);
        if land.x_at(mid) >= x_hi {
            b = mid;
        } else {
            a = mid;
        }
    }
    if b <= lo {
        return vec![evaluate_bid(mech, land, lo)];
    }
    (0..=cells)
        .map(|k| evaluate_bid(mech, land, lo + (b - lo) * k as f64 / cells as f64))
        .collect()
}

/// Context for evaluating one agent against a frozen profile.
#[derive(Debug, Clone)]
pub struct AgentView {
    pub landscape: Landscape,
    pub hull: UtilityHull,
    pub candidates: Vec<Action>,
    /// Uniform bids from the reserve up to the cheapest bid reaching the agent's
    /// largest attainable allocation.
    pub grid: Vec<Action>,
}

impl AgentView {
    pub fn new(mech: &Mechanism, profile: &StrategyProfile, i: usize, settings: &SolverSettings) -> Self {
        let landscape = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
        let max_bid = profile.agents[i].max_value().max(mech.reserves[i]);
        let bids = candidate_bids(&landscape, mech.n(), settings.grid_bids, max_bid);
        let candidates: Vec<Action> = bids.iter().map(|&b| evaluate_bid(mech, &landscape, b)).collect();
        let hull = UtilityHull::new(candidates.clone());
        let grid = bid_grid(mech, &landscape, mech.reserves[i], max_bid, settings.grid_bids);
        AgentView {
            landscape,
            hull,
            candidates,
            grid,
        }
    }

    /// Per-node regret of the agent's current strategy.
    pub fn regrets(&self, mech: &Mechanism, s: &AgentStrategy) -> Vec<f64> {
        let best = self.best_actions(s);
        s.values
            .iter()
            .zip(&s.bids)
            .zip(&best)
            .map(|((&v, &b), a)| {
                let cur = evaluate_bid(mech, &self.landscape, b).utility(v);
                (a.utility(v) - cur).max(0.0)
            })
            .collect()
    }

    pub fn best_actions(&self, s: &AgentStrategy) -> Vec<Action> {
        if s.values.windows(2).all(|w| w[1] >= w[0]) {
            self.hull.best_for_sorted(&s.values)
        } else {
            s.values.iter().map(|&v| self.hull.best(v)).collect()
        }
    }
}

/// Best-response bid for every node of agent `i` (withdraw as bid 0).
pub fn best_response(mech: &Mechanism, profile: &StrategyProfile, i: usize, settings: &SolverSettings) -> Vec<Option<f64>> {
    let view = AgentView::new(mech, profile, i, settings);
    view.best_actions(&profile.agents[i]).iter().map(|a| a.bid).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub max: f64,
    pub per_agent: Vec<f64>,
}

/// Largest utility gain from deviating, over agents and grid nodes.
pub fn regret(mech: &Mechanism, profile: &StrategyProfile, settings: &SolverSettings) -> RegretReport {
    let per_agent: Vec<f64> = (0..profile.n())
        .into_par_iter()
        .map(|i| agent_regret(mech, profile, i, settings))
        .collect();
    let max = per_agent.iter().copied().fold(0.0, f64::max);
    RegretReport { max, per_agent }
}

pub fn agent_regret(mech: &Mechanism, profile: &StrategyProfile, i: usize, settings: &SolverSettings) -> f64 {
    let view = AgentView::new(mech, profile, i, settings);
    view.regrets(mech, &profile.agents[i]).into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub profile: StrategyProfile,
    pub regret: RegretReport,
    pub iterations: usize,
    pub converged: bool,
    pub target: f64,
    /// Max regret of the profile at the start of each iteration.
    pub history: Vec<f64>,
}

pub fn default_target(dists: &[ValueDistribution]) -> f64 {
    1e-3 * dists.iter().map(|d| d.mean()).fold(0.0, f64::max)
}

/// Starting profile: the bids that reproduce, under the payment rule, the interim
/// payments of the efficient allocation among entrants, where the entry type is
/// the lowest value whose zero-utility bid meets the reserve. Exact for symmetric
/// bidders; elsewhere only a starting point.
pub fn initial_profile(mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> StrategyProfile {
    let truthful = StrategyProfile::truthful(dists, settings.grid_values);
    let mut out = truthful.clone();
    for (i, s) in out.agents.iter_mut().enumerate() {
        let land = Landscape::new(mech, &truthful, i, settings.mc_samples, settings.seed);
        let r = mech.reserves[i];
        let entry_bid = |v: f64| {
            let x = land.x_at(v);
            if x <= 0.0 {
                0.0
            } else {
                mech.rule.bid_for_interim(v, x, v * x)
            }
        };
        let enters = |v: f64| v >= r && land.x_at(v) > 0.0 && entry_bid(v) >= r;
        let Some(k0) = s.values.iter().position(|&v| enters(v)) else {
            s.bids = vec![0.0; s.values.len()];
            continue;
        };
        let mut v_entry = s.values[k0];
        if k0 > 0 {
            let (mut lo, mut hi) = (s.values[k0 - 1], s.values[k0]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if enters(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            v_entry = hi;
        }
        let mut area = 0.0;
        let (mut prev_v, mut prev_x) = (v_entry, land.x_at(v_entry));
        let mut bids = vec![0.0; k0];
        for &v in &s.values[k0..] {
            let x = land.x_at(v);
            area += 0.5 * (x + prev_x) * (v - prev_v);
            (prev_v, prev_x) = (v, x);
            let p = (v * x - area).max(0.0);
            bids.push(mech.rule.bid_for_interim(v, x, p).max(r));
        }
        let mut bids = isotonic_nondecreasing(&bids);
        if mech.rule.bids_bounded_by_value() {
            for (b, &v) in bids.iter_mut().zip(&s.values) {
                *b = b.min(v);
            }
        }
        s.bids = bids;
    }
    out
}

/// An equilibrium method, selected by name at runtime.
pub trait EquilibriumSolver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether the method handles this mechanism and these distributions.
    fn applies(&self, mech: &Mechanism, dists: &[ValueDistribution]) -> bool;
    fn solve(&self, mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<SolveReport>;
}

/// Damped iterated response from [`initial_profile`]; handles every format.
pub struct IteratedResponse;

impl EquilibriumSolver for IteratedResponse {
    fn name(&self) -> &'static str {
        "iterated-response"
    }

    fn applies(&self, _: &Mechanism, _: &[ValueDistribution]) -> bool {
        true
    }

    fn solve(&self, mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<SolveReport> {
        let start = initial_profile(mech, dists, settings);
        solve_from(mech, start, settings, target_for(dists, settings))
    }
}

/// Backward shooting for single-item first price; see [`first_price`].
pub struct FirstPriceShooting;

impl EquilibriumSolver for FirstPriceShooting {
    fn name(&self) -> &'static str {
        "first-price-shooting"
    }

    fn applies(&self, mech: &Mechanism, dists: &[ValueDistribution]) -> bool {
        first_price::applies(mech, dists)
    }

    fn solve(&self, mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<SolveReport> {
        let profile = first_price::solve(mech, dists, settings)?;
        let regret = regret(mech, &profile, settings);
        let target = target_for(dists, settings);
        Ok(SolveReport {
            converged: regret.max <= target,
            history: vec![regret.max],
            profile,
            regret,
            iterations: 0,
            target,
        })
    }
}

pub struct SolverRegistry {
    solvers: Vec<Arc<dyn EquilibriumSolver>>,
}

impl SolverRegistry {
    pub fn builtin() -> Self {
        SolverRegistry {
            solvers: vec![Arc::new(IteratedResponse), Arc::new(FirstPriceShooting)],
        }
    }

    pub fn register(&mut self, solver: Arc<dyn EquilibriumSolver>) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(solver);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn EquilibriumSolver>> {
        self.solvers.iter().find(|s| s.name() == name).cloned().ok_or_else(|| Error::Unknown {
            kind: "solver",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    /// Runs `settings.method`. Under `auto` the first registered solver runs, and
    /// while the target is missed every other applicable one is tried; the
    /// profile with the least certified regret wins.
    pub fn solve(&self, mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<SolveReport> {
        settings.validate()?;
        if dists.len() != mech.n() {
            return Err(Error::InvalidParameter(format!(
                "expected {} distributions, got {}",
                mech.n(),
                dists.len()
            )));
        }
        for d in dists {
            d.validate()?;
        }
        if settings.method != "auto" {
            let solver = self.get(&settings.method)?;
            if !solver.applies(mech, dists) {
                return Err(Error::InvalidParameter(format!(
                    "solver {} does not handle this mechanism",
                    solver.name()
                )));
            }
            return solver.solve(mech, dists, settings);
        }
        let mut best: Option<SolveReport> = None;
        for s in self.solvers.iter().filter(|s| s.applies(mech, dists)) {
            if best.as_ref().is_some_and(|b| b.converged) {
                break;
            }
            let report = match s.solve(mech, dists, settings) {
                Ok(r) => r,
                Err(e) if best.is_some() => {
                    log::info!("{}: {e}", s.name());
                    continue;
                }
                Err(e) => return Err(e),
            };
            log::info!("{}: regret {:.3e}", s.name(), report.regret.max);
            if best.as_ref().map_or(true, |b| report.regret.max < b.regret.max) {
                best = Some(report);
            }
        }
        let best = best.ok_or_else(|| Error::InvalidParameter("no solver applies".into()))?;
        if !best.converged {
            log::warn!("no solver reached the target: best regret {:.3e} above {:.3e}", best.regret.max, best.target);
        }
        Ok(best)
    }
}

fn target_for(dists: &[ValueDistribution], settings: &SolverSettings) -> f64 {
    settings.target_regret.unwrap_or_else(|| default_target(dists))
}

/// Equilibrium by the method named in `settings` (see [`SolverRegistry::solve`]).
pub fn solve_bne(mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<SolveReport> {
    SolverRegistry::builtin().solve(mech, dists, settings)
}

const MIN_DAMPING: f64 = 1.0 / 64.0;

pub fn solve_from(mech: &Mechanism, start: StrategyProfile, settings: &SolverSettings, target: f64) -> Result<SolveReport> {
    let mut profile = start;
    let mut best: Option<(StrategyProfile, RegretReport)> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut step = settings.clone();
    loop {
        let (report, next) = iterate_once(mech, &profile, &step);
        history.push(report.max);
        log::debug!("iteration {iterations}: regret {:.3e}, damping {}", report.max, step.damping);
        let done = report.max <= target || iterations >= settings.max_iters;
        let mut next = next;
        match &best {
            Some((bp, br)) if report.max > 2.0 * br.max && step.damping > MIN_DAMPING => {
                // regret blew up: restart from the best profile with a shorter step
                step.damping = (0.5 * step.damping).max(MIN_DAMPING);
                next = iterate_once(mech, bp, &step).1;
            }
            Some((_, br)) if report.max >= br.max => {}
            _ => best = Some((profile, report)),
        }
        if done {
            break;
        }
        iterations += 1;
        profile = next;
    }
    let (profile, regret) = best.expect("at least one iteration");
    let converged = regret.max <= target;
    if !converged {
        log::debug!("iteration stopped at regret {:.3e} above target {:.3e}", regret.max, target);
    }
    Ok(SolveReport {
        profile,
        regret,
        iterations,
        converged,
        target,
        history,
    })
}

/// Regret of `profile` and the damped, projected response update.
pub fn iterate_once(mech: &Mechanism, profile: &StrategyProfile, settings: &SolverSettings) -> (RegretReport, StrategyProfile) {
    let lambda = settings.damping;
    let views: Vec<(Vec<f64>, Vec<f64>)> = (0..mech.n())
        .into_par_iter()
        .map(|i| {
            let view = AgentView::new(mech, profile, i, settings);
            let s = &profile.agents[i];
            let r = mech.reserves[i];
            let raw: Vec<f64> = s
                .bids
                .iter()
                .zip(identity_targets(mech, i, &view, s))
                .map(|(&old, t)| match t {
                    Some(b) => ((1.0 - lambda) * old + lambda * b).max(r),
                    None => (1.0 - lambda) * old,
                })
                .collect();
            (view.regrets(mech, s), raw)
        })
        .collect();
    let per_agent: Vec<f64> = views.iter().map(|(r, _)| r.iter().copied().fold(0.0, f64::max)).collect();
    let max = per_agent.iter().copied().fold(0.0, f64::max);
    let mut next = profile.clone();
    for (i, (_, raw)) in views.iter().enumerate() {
        let s = &mut next.agents[i];
        let mut bids = isotonic_nondecreasing(raw);
        if mech.rule.bids_bounded_by_value() {
            for (b, &v) in bids.iter_mut().zip(&s.values) {
                *b = b.min(v);
            }
        }
        for b in bids.iter_mut() {
            *b = b.max(0.0);
        }
        s.bids = bids;
    }
    symmetrize_groups(mech, &mut next);
    (RegretReport { max, per_agent }, next)
}

/// Bids that reproduce, through the payment identity, the payments implied by the
/// agent's current interim allocation; `None` where the best action is to withdraw.
fn identity_targets(mech: &Mechanism, i: usize, view: &AgentView, s: &AgentStrategy) -> Vec<Option<f64>> {
    let best = view.best_actions(s);
    let r = mech.reserves[i];
    let x: Vec<f64> = s
        .bids
        .iter()
        .map(|&b| if mech.withdraws(i, b) { 0.0 } else { view.landscape.x_at(b) })
        .collect();
    let mut out = Vec::with_capacity(x.len());
    let mut area = 0.0;
    let mut base: Option<(usize, f64)> = None;
    for k in 0..x.len() {
        let v = s.values[k];
        let participates = best[k].bid.is_some_and(|b| !mech.withdraws(i, b));
        if !participates {
            out.push(None);
            continue;
        }
        let (k0, u0) = *base.get_or_insert((k, best[k].utility(v).max(0.0)));
        if k > k0 {
            area += 0.5 * (x[k] + x[k - 1]) * (v - s.values[k - 1]);
        }
        if x[k] <= 1e-12 {
            out.push(Some(s.bids[k].max(r)));
            continue;
        }
        let p = v * x[k] - area - u0;
        // bids past the point where the allocation saturates are dominated
        let cap = view.grid.last().and_then(|a| a.bid).unwrap_or(f64::INFINITY);
        out.push(Some(mech.rule.bid_for_interim(v, x[k], p.max(0.0)).min(cap).max(r)));
    }
    out
}

/// Averages bid tables within duplicate groups whose members share nodes.
pub fn symmetrize_groups(mech: &Mechanism, profile: &mut StrategyProfile) {
    for g in &mech.groups {
        let first = &profile.agents[g[0]];
        if g.iter().any(|&a| profile.agents[a].nodes != first.nodes) {
            continue;
        }
        let len = first.bids.len();
        let mean: Vec<f64> = (0..len)
            .map(|k| g.iter().map(|&a| profile.agents[a].bids[k]).sum::<f64>() / g.len() as f64)
            .collect();
        for &a in g {
            profile.agents[a].bids = mean.clone();
        }
    }
}

/// Interim allocation and payment of one agent, by value node and on a shared bid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterimRule {
    pub agent: usize,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub bid_grid: Vec<f64>,
    pub x_bid: Vec<f64>,
    pub p_bid: Vec<f64>,
}

pub fn interim_rule(mech: &Mechanism, profile: &StrategyProfile, i: usize, settings: &SolverSettings) -> InterimRule {
    let land = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
    let s = &profile.agents[i];
    let (x, p): (Vec<f64>, Vec<f64>) = s
        .bids
        .iter()
        .map(|&b| {
            let a = evaluate_bid(mech, &land, b);
            (a.x, a.p)
        })
        .unzip();
    let top = profile
        .agents
        .iter()
        .map(|a| a.max_value().max(a.max_bid()))
        .fold(0.0, f64::max);
    let g = settings.grid_bids;
    let bid_grid: Vec<f64> = (0..=g).map(|k| top * k as f64 / g as f64).collect();
    let (x_bid, p_bid): (Vec<f64>, Vec<f64>) = bid_grid
        .iter()
        .map(|&b| {
            let a = evaluate_bid(mech, &land, b);
            (a.x, a.p)
        })
        .unzip();
    InterimRule {
        agent: i,
        nodes: s.nodes.clone(),
        values: s.values.clone(),
        bids: s.bids.clone(),
        x,
        p,
        bid_grid,
        x_bid,
        p_bid,
    }
}

/// Largest deviation of `p(v)` from `v x(v) - integral_{v0}^{v} x - u(v0)` over the
/// value grid, where `v0` is the lowest value.
pub fn payment_identity_residual(rule: &InterimRule) -> f64 {
    let v0 = rule.values[0];
    let u0 = v0 * rule.x[0] - rule.p[0];
    let mut worst: f64 = 0.0;
    let mut area = 0.0;
    for k in 0..rule.values.len() {
        if k > 0 {
            area += trapezoid(&rule.values[k - 1..=k], &rule.x[k - 1..=k]);
        }
        let predicted = rule.values[k] * rule.x[k] - area - u0;
        worst = worst.max((rule.p[k] - predicted).abs());
    }
    worst
}
