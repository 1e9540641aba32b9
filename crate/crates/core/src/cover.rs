//! Equivalent threshold curves, value and virtual-value covering margins, and the
//! revenue-covering sampler.
//!
//! For agent `i` facing a fixed profile of the others, `tau(z)` is the cheapest
//! equivalent bid `p / x` among actions whose interim allocation is at least `z`,
//! and `T[x, x'] = integral_x^x' tau`. The sampler searches strategy profiles for
//! the largest ratio of cumulative thresholds toward a feasible allocation to the
//! revenue of the profile.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::Mechanism;
use crate::covering_constant;
use crate::dist::ValueDistribution;
use crate::env::{Environment, TieOrder};
use crate::numeric::{bump, derive_seed, gauss_legendre_composite, isotonic_nondecreasing};
use crate::solve::{
    candidate_bids, evaluate_bid, joint_samples, Action, AgentStrategy, Landscape, SolverSettings, StrategyProfile,
};
use crate::{Error, Result};

/// Number of cells of the allocation grid a curve is tabulated on.
pub const DEFAULT_CURVE_POINTS: usize = 1024;
const REACH_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub agent: usize,
    /// Allocation levels from 0 to the largest slot weight.
    pub z: Vec<f64>,
    pub tau: Vec<f64>,
    pub reachable: Vec<bool>,
    /// Largest interim allocation any action achieves.
    pub x_max: f64,
}

impl ThresholdCurve {
    /// Tabulates `tau` from a finite action set; actions with zero allocation are skipped.
    pub fn from_actions(agent: usize, actions: &[Action], scale: f64, points: usize) -> Self {
        let mut acts: Vec<(f64, f64)> = actions
            .iter()
            .filter(|a| a.bid.is_some() && a.x > 0.0)
            .map(|a| (a.x, a.p / a.x))
            .collect();
        acts.sort_by(|a, b| a.0.total_cmp(&b.0));
        // suffix minimum of the equivalent bid over allocations at least x
        let mut suffix = vec![f64::INFINITY; acts.len() + 1];
        for k in (0..acts.len()).rev() {
            suffix[k] = suffix[k + 1].min(acts[k].1);
        }
        let x_max = acts.last().map_or(0.0, |a| a.0);
        let top_bid = suffix.first().copied().filter(|b| b.is_finite()).unwrap_or(0.0);
        let max_beta = acts.iter().map(|a| a.1).fold(top_bid, f64::max);
        let points = points.max(1);
        let z: Vec<f64> = (0..=points).map(|k| scale * k as f64 / points as f64).collect();
        let mut tau = Vec::with_capacity(z.len());
        let mut reachable = Vec::with_capacity(z.len());
        for &level in &z {
            let k = acts.partition_point(|a| a.0 < level - REACH_SLACK);
            let ok = k < acts.len();
            reachable.push(ok);
            tau.push(if ok { suffix[k] } else { max_beta });
        }
        ThresholdCurve {
            agent,
            z,
            tau,
            reachable,
            x_max,
        }
    }

    pub fn tau_at(&self, z: f64) -> f64 {
        crate::numeric::interp(&self.z, &self.tau, z)
    }

    /// `T[x_lo, x_hi]`, erroring when the window needs an unreachable allocation.
    pub fn cumulative(&self, x_lo: f64, x_hi: f64) -> Result<f64> {
        if x_hi <= x_lo {
            return Ok(0.0);
        }
        if x_hi > self.x_max + REACH_SLACK {
            return Err(Error::Unreachable {
                requested: x_hi,
                max: self.x_max,
            });
        }
        Ok(self.integrate(x_lo, x_hi))
    }

    /// `T[x_lo, x_hi]` with `tau` held at the largest equivalent bid past the reachable
    /// range; the flag reports whether that happened.
    pub fn cumulative_clamped(&self, x_lo: f64, x_hi: f64) -> (f64, bool) {
        if x_hi <= x_lo {
            return (0.0, false);
        }
        (self.integrate(x_lo, x_hi), x_hi > self.x_max + REACH_SLACK)
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let top = *self.z.last().expect("nonempty grid");
        let (a, b) = (a.clamp(0.0, top), b.clamp(0.0, top));
        if b <= a {
            return 0.0;
        }
        let lo = self.z.partition_point(|&z| z <= a);
        let hi = self.z.partition_point(|&z| z < b);
        let mut xs = vec![a];
        let mut ys = vec![self.tau_at(a)];
        for k in lo..hi {
            xs.push(self.z[k]);
            ys.push(self.tau[k]);
        }
        xs.push(b);
        ys.push(self.tau_at(b));
        crate::numeric::trapezoid(&xs, &ys)
    }
}

/// Largest allocation any single agent can receive in the environment.
pub fn allocation_scale(env: &Environment) -> f64 {
    match env {
        Environment::Positions { weights, .. } => weights.first().copied().unwrap_or(0.0),
        _ => 1.0,
    }
}

/// Candidate actions for agent `i` reaching past every rival bid.
pub fn threshold_actions(mech: &Mechanism, profile: &StrategyProfile, land: &Landscape, settings: &SolverSettings) -> Vec<Action> {
    let i = land.agent();
    let top = profile
        .agents
        .iter()
        .map(|a| a.max_bid())
        .fold(profile.agents[i].max_value(), f64::max)
        .max(mech.reserves[i]);
    candidate_bids(land, mech.n(), settings.grid_bids, bump(top))
        .into_iter()
        .map(|b| evaluate_bid(mech, land, b))
        .collect()
}

pub fn threshold_curve(mech: &Mechanism, profile: &StrategyProfile, i: usize, settings: &SolverSettings) -> ThresholdCurve {
    let land = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
    let acts = threshold_actions(mech, profile, &land, settings);
    ThresholdCurve::from_actions(i, &acts, allocation_scale(&mech.env), DEFAULT_CURVE_POINTS)
}

pub fn cumulative_threshold(curve: &ThresholdCurve, x_lo: f64, x_hi: f64) -> Result<f64> {
    curve.cumulative(x_lo, x_hi)
}

/// Indifference-curve lower bound `integral_x^x' max(0, v - u/z) dz` for an agent
/// with value `v` and utility `u`.
pub fn indifference_bound(v: f64, u: f64, x: f64, x_prime: f64) -> f64 {
    if x_prime <= x || v <= 0.0 {
        return 0.0;
    }
    let start = if u <= 0.0 { x } else { x.max(u / v) };
    if x_prime <= start {
        return 0.0;
    }
    let log_term = if u > 0.0 { u * (x_prime / start).ln() } else { 0.0 };
    v * (x_prime - start) - log_term
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub value: f64,
    /// Whether `x'` exceeded the reachable allocation and `tau` was clamped.
    pub clamped: bool,
}

/// `w x + T[x, x'] - (e-1)/e w x'` for a weight `w` (the value, or `phi+`).
fn covering_margin(curve: &ThresholdCurve, w: f64, x: f64, x_prime: f64) -> Margin {
    let (t, clamped) = curve.cumulative_clamped(x, x_prime);
    Margin {
        value: w * x + t - covering_constant() * w * x_prime,
        clamped,
    }
}

/// Value covering: `v x(v) + T[x(v), x'] - (e-1)/e v x'`.
pub fn value_covering_margin(curve: &ThresholdCurve, v: f64, x: f64, x_prime: f64) -> Margin {
    covering_margin(curve, v, x, x_prime)
}

/// Virtual-value covering with `phi+` in place of the value; `None` when `phi+ = 0`
/// (a trivial pass).
pub fn virtual_covering_margin(
    curve: &ThresholdCurve,
    dist: &ValueDistribution,
    v: f64,
    x: f64,
    x_prime: f64,
) -> Result<Option<Margin>> {
    let (plus, _) = dist.virtual_value_parts(v)?;
    if plus <= 0.0 {
        return Ok(None);
    }
    Ok(Some(covering_margin(curve, plus, x, x_prime)))
}

/// Worst covering margins of a solved profile over value nodes and a grid of `x'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringReport {
    /// Least `(v x + T - (e-1)/e v x') / (v x')`.
    pub value_margin: f64,
    /// Least virtual-value margin over `phi+ x'`, over points with `phi+ > 0`.
    pub virtual_margin: f64,
    /// Least `(T - T_hat) / v`.
    pub indifference_gap: f64,
    pub points: usize,
    pub clamped: usize,
    /// `(agent, value, x')` of the least value margin.
    pub worst: Option<(usize, f64, f64)>,
}

pub fn covering_in_bne(
    mech: &Mechanism,
    profile: &StrategyProfile,
    dists: &[ValueDistribution],
    settings: &SolverSettings,
    x_points: usize,
    value_points: usize,
) -> Result<CoveringReport> {
    let scale = allocation_scale(&mech.env);
    let per_agent: Vec<Result<CoveringReport>> = (0..mech.n())
        .into_par_iter()
        .map(|i| {
            let land = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
            let acts = threshold_actions(mech, profile, &land, settings);
            let curve = ThresholdCurve::from_actions(i, &acts, scale, DEFAULT_CURVE_POINTS);
            let s = &profile.agents[i];
            let stride = (s.values.len() / value_points.max(1)).max(1);
            let mut rep = CoveringReport {
                value_margin: f64::INFINITY,
                virtual_margin: f64::INFINITY,
                indifference_gap: f64::INFINITY,
                points: 0,
                clamped: 0,
                worst: None,
            };
            for k in (0..s.values.len()).step_by(stride) {
                let v = s.values[k];
                if v <= 0.0 {
                    continue;
                }
                let a = evaluate_bid(mech, &land, s.bids[k]);
                let u = a.utility(v);
                let plus = dists[i].virtual_value_parts(v).map(|p| p.0).unwrap_or(0.0);
                for j in 1..=x_points {
                    let xp = scale * j as f64 / x_points as f64;
                    let m = value_covering_margin(&curve, v, a.x, xp);
                    rep.points += 1;
                    rep.clamped += m.clamped as usize;
                    let norm = m.value / (v * xp);
                    if norm < rep.value_margin {
                        rep.value_margin = norm;
                        rep.worst = Some((i, v, xp));
                    }
                    if plus > 0.0 {
                        let vm = covering_margin(&curve, plus, a.x, xp);
                        rep.virtual_margin = rep.virtual_margin.min(vm.value / (plus * xp));
                    }
                    let (t, _) = curve.cumulative_clamped(a.x, xp);
                    let gap = (t - indifference_bound(v, u, a.x, xp)) / v;
                    rep.indifference_gap = rep.indifference_gap.min(gap);
                }
            }
            Ok(rep)
        })
        .collect();
    let mut out = CoveringReport {
        value_margin: f64::INFINITY,
        virtual_margin: f64::INFINITY,
        indifference_gap: f64::INFINITY,
        points: 0,
        clamped: 0,
        worst: None,
    };
    for r in per_agent {
        let r = r?;
        if r.value_margin < out.value_margin {
            out.value_margin = r.value_margin;
            out.worst = r.worst;
        }
        out.virtual_margin = out.virtual_margin.min(r.virtual_margin);
        out.indifference_gap = out.indifference_gap.min(r.indifference_gap);
        out.points += r.points;
        out.clamped += r.clamped;
    }
    Ok(out)
}

/// Expected revenue of a profile: quadrature of interim payments over quantile
/// nodes for independent landscapes, the shared Monte Carlo draws for matroids.
pub fn profile_revenue(mech: &Mechanism, profile: &StrategyProfile, settings: &SolverSettings) -> f64 {
    match mech.env {
        Environment::Matroid { .. } => {
            let n = mech.n();
            let draws = joint_samples(n, settings.mc_samples, settings.seed);
            let mut bids = vec![0.0; n];
            let total: f64 = draws
                .iter()
                .map(|u| {
                    for j in 0..n {
                        bids[j] = profile.agents[j].bid_at(u[j]);
                    }
                    mech.outcome_unchecked(&bids).revenue()
                })
                .sum();
            total / settings.mc_samples as f64
        }
        _ => (0..mech.n())
            .map(|i| {
                let land = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
                table_revenue(mech, &land, &profile.agents[i])
            })
            .sum(),
    }
}

/// `E_u[p(b(u))]` for a table whose bids are linear between nodes, split wherever
/// the bid crosses a rival breakpoint or the reserve so every piece is smooth.
fn table_revenue(mech: &Mechanism, land: &Landscape, s: &AgentStrategy) -> f64 {
    let mut kinks = land.rival_bids();
    kinks.push(mech.reserves[land.agent()]);
    kinks.sort_by(|a, b| a.total_cmp(b));
    kinks.dedup();
    let mut total = 0.0;
    for k in 0..s.nodes.len() - 1 {
        let (u0, u1, b0, b1) = (s.nodes[k], s.nodes[k + 1], s.bids[k], s.bids[k + 1]);
        let bid = |u: f64| if u1 > u0 { b0 + (b1 - b0) * (u - u0) / (u1 - u0) } else { b0 };
        let mut breaks = vec![u0];
        if b1 > b0 {
            let lo = kinks.partition_point(|&t| t <= b0);
            let hi = kinks.partition_point(|&t| t < b1);
            breaks.extend(kinks[lo..hi].iter().map(|&t| u0 + (t - b0) / (b1 - b0) * (u1 - u0)));
        }
        breaks.push(u1);
        total += gauss_legendre_composite(&breaks, |u| evaluate_bid(mech, land, bid(u)).p);
    }
    total
}

/// Maximizes `sum_i f_i(x'_i)` over feasible `x'` for convex nondecreasing `f_i`
/// with `f_i(0) = 0`, by checking vertices of the allocation polytope.
pub fn vertex_max(env: &Environment, f: &dyn Fn(usize, f64) -> f64) -> (Vec<f64>, f64) {
    let n = env.n();
    match env {
        Environment::Positions { weights, .. } => {
            let mut best = (vec![0.0; n], 0.0);
            let mut x = vec![0.0; n];
            assign_slots(weights, 0, &mut x, 0.0, f, &mut best);
            best
        }
        _ => {
            let w: Vec<f64> = (0..n).map(|i| f(i, 1.0)).collect();
            let x = env.best_vertex(&w, &TieOrder::index_order(n));
            let total = (0..n).filter(|&i| x[i] > 0.0).map(|i| w[i]).sum();
            (x, total)
        }
    }
}

fn assign_slots(
    weights: &[f64],
    slot: usize,
    x: &mut Vec<f64>,
    acc: f64,
    f: &dyn Fn(usize, f64) -> f64,
    best: &mut (Vec<f64>, f64),
) {
    if slot == weights.len() || x.iter().all(|&v| v > 0.0) {
        if acc > best.1 {
            *best = (x.clone(), acc);
        }
        return;
    }
    for i in 0..x.len() {
        if x[i] == 0.0 && weights[slot] > 0.0 {
            x[i] = weights[slot];
            assign_slots(weights, slot + 1, x, acc + f(i, weights[slot]), f, best);
            x[i] = 0.0;
        }
    }
    if weights[slot] == 0.0 {
        assign_slots(weights, slot + 1, x, acc, f, best);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMode {
    /// Any action profile; the worst is everyone withdrawing.
    Plain,
    /// Participatory actions for agents whose values can exceed their reserves.
    WithReserves,
}

/// Sum of thresholds, revenue and ratio for one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverEvaluation {
    pub threshold_mass: f64,
    pub revenue: f64,
    pub ratio: f64,
    /// Interim allocation of each agent's worst action.
    pub x_action: Vec<f64>,
    pub x_prime: Vec<f64>,
}

/// Evaluates the worst action profile and vertex `x'` against a profile.
pub fn evaluate_profile(
    mech: &Mechanism,
    profile: &StrategyProfile,
    dists: &[ValueDistribution],
    mode: CoverMode,
    settings: &SolverSettings,
) -> CoverEvaluation {
    let n = mech.n();
    let scale = allocation_scale(&mech.env);
    let curves: Vec<(ThresholdCurve, f64, bool)> = (0..n)
        .map(|i| {
            let land = Landscape::new(mech, profile, i, settings.mc_samples, settings.seed);
            let acts = threshold_actions(mech, profile, &land, settings);
            let curve = ThresholdCurve::from_actions(i, &acts, scale, DEFAULT_CURVE_POINTS);
            let r = mech.reserves[i];
            let (x_lo, counted) = match mode {
                CoverMode::Plain => (0.0, true),
                CoverMode::WithReserves => (evaluate_bid(mech, &land, r).x, dists[i].support().1 > r),
            };
            (curve, x_lo, counted)
        })
        .collect();
    let f = |i: usize, xp: f64| {
        let (c, lo, counted) = &curves[i];
        if *counted {
            c.cumulative_clamped(*lo, xp).0
        } else {
            0.0
        }
    };
    let (x_prime, threshold_mass) = vertex_max(&mech.env, &f);
    let revenue = profile_revenue(mech, profile, settings);
    let ratio = if revenue > 0.0 {
        threshold_mass / revenue
    } else if threshold_mass > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    CoverEvaluation {
        threshold_mass,
        revenue,
        ratio,
        x_action: curves.iter().map(|c| c.1).collect(),
        x_prime,
    }
}

/// A family of bid tables to search over. Bids are tabulated on quantile nodes, so
/// a table is a pure strategy when the value column increases and a mixed one
/// otherwise.
pub trait ProfileFamily: Send + Sync {
    fn name(&self) -> &'static str;
    /// Bids per agent on `nodes`.
    fn sample(&self, n: usize, nodes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>>;
}

/// Random monotone piecewise-linear bids through a few knots.
pub struct PiecewiseLinear;

impl ProfileFamily for PiecewiseLinear {
    fn name(&self) -> &'static str {
        "piecewise-linear"
    }

    fn sample(&self, n: usize, nodes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let k = rng.gen_range(2..=5);
                let mut ks: Vec<f64> = (0..k - 2).map(|_| rng.gen::<f64>()).collect();
                ks.push(0.0);
                ks.push(1.0);
                ks.sort_by(|a, b| a.total_cmp(b));
                let mut bs: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                bs.sort_by(|a, b| a.total_cmp(b));
                nodes.iter().map(|&u| crate::numeric::interp(&ks, &bs, u)).collect()
            })
            .collect()
    }
}

/// Every agent bids one constant.
pub struct Deterministic;

impl ProfileFamily for Deterministic {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn sample(&self, n: usize, nodes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| vec![rng.gen::<f64>(); nodes.len()]).collect()
    }
}

/// Bids with one to three atoms.
pub struct Atoms;

impl ProfileFamily for Atoms {
    fn name(&self) -> &'static str {
        "atoms"
    }

    fn sample(&self, n: usize, nodes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=3);
                let mut levels: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                levels.sort_by(|a, b| a.total_cmp(b));
                let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>()).collect();
                cuts.sort_by(|a, b| a.total_cmp(b));
                nodes
                    .iter()
                    .map(|&u| levels[cuts.partition_point(|&c| c < u)])
                    .collect()
            })
            .collect()
    }
}

/// One agent bids uniformly on `[0, 1]`, the rest bid small constants.
pub struct UniformCompetitor;

impl ProfileFamily for UniformCompetitor {
    fn name(&self) -> &'static str {
        "uniform-competitor"
    }

    fn sample(&self, n: usize, nodes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let lead = rng.gen_range(0..n);
        (0..n)
            .map(|i| {
                if i == lead {
                    nodes.to_vec()
                } else {
                    vec![0.05 * rng.gen::<f64>(); nodes.len()]
                }
            })
            .collect()
    }
}

/// A single given profile.
pub struct Fixed(pub StrategyProfile);

impl ProfileFamily for Fixed {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn sample(&self, _: usize, nodes: &[f64], _: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        self.0
            .agents
            .iter()
            .map(|a| nodes.iter().map(|&u| a.bid_at(u)).collect())
            .collect()
    }
}

pub fn builtin_families() -> Vec<Arc<dyn ProfileFamily>> {
    vec![
        Arc::new(PiecewiseLinear),
        Arc::new(Deterministic),
        Arc::new(Atoms),
        Arc::new(UniformCompetitor),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_climb_steps")]
    pub climb_steps: usize,
    /// Quantile nodes per sampled bid table.
    #[serde(default = "default_table_nodes")]
    pub table_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    1000
}
fn default_climb_steps() -> usize {
    200
}
fn default_table_nodes() -> usize {
    65
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            trials: default_trials(),
            climb_steps: default_climb_steps(),
            table_nodes: default_table_nodes(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub family: String,
    pub profile: StrategyProfile,
    pub evaluation: CoverEvaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuEstimate {
    pub mu: f64,
    pub trials: usize,
    pub witness: Witness,
}

impl fmt::Display for MuEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu_hat {:.4} over {} trials (witness {}: thresholds {:.4}, revenue {:.4})",
            self.mu, self.trials, self.witness.family, self.witness.evaluation.threshold_mass, self.witness.evaluation.revenue
        )
    }
}

fn profile_from_tables(dists: &[ValueDistribution], nodes: &[f64], tables: Vec<Vec<f64>>) -> StrategyProfile {
    StrategyProfile {
        agents: tables
            .into_iter()
            .zip(dists)
            .map(|(bids, d)| AgentStrategy {
                nodes: nodes.to_vec(),
                values: nodes.iter().map(|&u| d.value_at(u)).collect(),
                bids: isotonic_nondecreasing(&bids).into_iter().map(|b| b.max(0.0)).collect(),
            })
            .collect(),
    }
}

/// Largest sampled ratio of threshold mass to revenue. Trials cycle through the
/// families; the best witness is then refined by hill climbing on its table.
pub fn revenue_covering_mu(
    mech: &Mechanism,
    dists: &[ValueDistribution],
    families: &[Arc<dyn ProfileFamily>],
    mode: CoverMode,
    sampler: &SamplerSettings,
    settings: &SolverSettings,
) -> Result<MuEstimate> {
    if sampler.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if families.is_empty() {
        return Err(Error::InvalidParameter("no strategy family to sample".into()));
    }
    let n = mech.n();
    let m = sampler.table_nodes.max(2);
    let nodes: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    let results: Vec<Witness> = (0..sampler.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sampler.seed, t as u64));
            let fam = &families[t % families.len()];
            let profile = profile_from_tables(dists, &nodes, fam.sample(n, &nodes, &mut rng));
            let evaluation = evaluate_profile(mech, &profile, dists, mode, settings);
            Witness {
                family: fam.name().to_string(),
                profile,
                evaluation,
            }
        })
        .collect();
    let mut best = results
        .into_iter()
        .reduce(|a, b| if b.evaluation.ratio > a.evaluation.ratio { b } else { a })
        .expect("at least one trial");
    if best.evaluation.ratio.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sampler.seed, u64::MAX));
        for _ in 0..sampler.climb_steps {
            let mut tables: Vec<Vec<f64>> = best.profile.agents.iter().map(|a| a.bids.clone()).collect();
            let agent = rng.gen_range(0..n);
            let spread = tables.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-3);
            let k = *(0..m).collect::<Vec<_>>().choose(&mut rng).expect("nonempty nodes");
            let width = rng.gen_range(1..=m / 4 + 1);
            let shift = spread * 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
            for j in k.saturating_sub(width)..(k + width).min(m) {
                tables[agent][j] = (tables[agent][j] + shift).max(0.0);
            }
            let profile = profile_from_tables(dists, &nodes, tables);
            let evaluation = evaluate_profile(mech, &profile, dists, mode, settings);
            if evaluation.ratio > best.evaluation.ratio {
                best = Witness {
                    family: format!("{}+climb", best.family.trim_end_matches("+climb")),
                    profile,
                    evaluation,
                };
            }
        }
    }
    Ok(MuEstimate {
        mu: best.evaluation.ratio,
        trials: sampler.trials,
        witness: best,
    })
}

/// Writes a witness as CSV rows `agent,u,bid,x_action,x_prime,threshold_mass,revenue`.
pub fn write_witness(path: &Path, w: &Witness) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["agent", "u", "bid", "x_action", "x_prime", "threshold_mass", "revenue"])?;
    for (i, a) in w.profile.agents.iter().enumerate() {
        for (u, b) in a.nodes.iter().zip(&a.bids) {
            out.write_record([
                i.to_string(),
                u.to_string(),
                b.to_string(),
                w.evaluation.x_action[i].to_string(),
                w.evaluation.x_prime[i].to_string(),
                w.evaluation.threshold_mass.to_string(),
                w.evaluation.revenue.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Pointwise position-auction check on one bid vector: the revenue and the
/// largest sum over a slot assignment of each agent's stair-threshold mass,
/// where the stair is built from the other agents' realized bids.
pub fn gfp_pointwise(mech: &Mechanism, bids: &[f64]) -> Result<(f64, f64)> {
    let Environment::Positions { weights, .. } = &mech.env else {
        return Err(Error::InvalidParameter("pointwise stair thresholds need a positions environment".into()));
    };
    let out = mech.outcome(bids)?;
    let revenue = out.revenue();
    let n = mech.n();
    let active = mech.active_mask(bids);
    let stairs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            mech.env
                .threshold_bids(bids, active & !(1u64 << i), i, &mech.tie_order)
                .iter()
                .zip(weights)
                .map(|(t, _)| t.value.max(mech.reserves[i]))
                .collect()
        })
        .collect();
    // integral over [0, x'] of the cheapest bid reaching allocation z
    let mass = |i: usize, xp: f64| -> f64 {
        let mut total = 0.0;
        let mut prev = 0.0;
        for j in (0..weights.len()).rev() {
            let hi = weights[j].min(xp);
            if hi > prev {
                total += (hi - prev) * stairs[i][j];
                prev = hi;
            }
        }
        total
    };
    let (_, threshold) = vertex_max(&mech.env, &mass);
    Ok((revenue, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn settings() -> SolverSettings {
        SolverSettings {
            grid_bids: 512,
            ..SolverSettings::default()
        }
    }

    fn single(sem: &str) -> Mechanism {
        Mechanism::by_name(sem, Environment::single_item(2)).unwrap()
    }

    fn table(values: &[f64], bids: Vec<f64>) -> AgentStrategy {
        let nodes: Vec<f64> = (0..bids.len()).map(|k| k as f64 / (bids.len() - 1) as f64).collect();
        let vals = if values.len() == bids.len() { values.to_vec() } else { vec![values[0]; bids.len()] };
        AgentStrategy::new(nodes, vals, bids).unwrap()
    }

    fn uniform_bids(k: usize) -> Vec<f64> {
        (0..=k).map(|j| j as f64 / k as f64).collect()
    }

    #[test]
    fn first_price_tau_is_competitor_quantile() {
        // competitor bids uniform on [0, 1]: tau(z) = z and T[0, 1] = 1/2
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), table(&[1.0], uniform_bids(64))]).unwrap();
        let c = threshold_curve(&single("first-price"), &p, 0, &settings());
        for (&z, &t) in c.z.iter().zip(&c.tau) {
            assert!((t - z).abs() < 5e-3, "z {z} tau {t}");
        }
        assert!((cumulative_threshold(&c, 0.0, 1.0).unwrap() - 0.5).abs() < 2e-3);
        assert_eq!(cumulative_threshold(&c, 0.7, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn first_price_tau_respects_reserve() {
        let m = single("first-price").with_reserves(vec![0.3, 0.3]).unwrap();
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), table(&[1.0], uniform_bids(64))]).unwrap();
        let c = threshold_curve(&m, &p, 0, &settings());
        // tau(z) = max(r, B^-1(z)) where B(b) = b on [0.3, 1] and 0.3 mass below the reserve
        for (&z, &t) in c.z.iter().zip(&c.tau) {
            if z > 0.0 {
                assert!((t - z.max(0.3)).abs() < 5e-3, "z {z} tau {t}");
            }
        }
    }

    #[test]
    fn all_pay_uniform_competitor_tau_is_one() {
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), table(&[1.0], uniform_bids(64))]).unwrap();
        let c = threshold_curve(&single("all-pay"), &p, 0, &settings());
        for (&z, &t) in c.z.iter().zip(&c.tau).skip(1) {
            assert!((t - 1.0).abs() < 1e-9, "z {z} tau {t}");
        }
        assert!((cumulative_threshold(&c, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn withdrawn_competitors_give_zero_thresholds() {
        let m = single("first-price").with_reserves(vec![0.0, 0.5]).unwrap();
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.2, 0.2]), table(&[1.0], vec![0.1, 0.1])]).unwrap();
        let c = threshold_curve(&m, &p, 0, &settings());
        assert!(c.tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn constant_tau_integrates_to_constant() {
        let acts = [Action { bid: Some(0.4), x: 1.0, p: 0.4 }];
        let c = ThresholdCurve::from_actions(0, &acts, 1.0, 64);
        assert!((c.cumulative(0.0, 1.0).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unreachable_window_errors() {
        let acts = [Action { bid: Some(0.4), x: 0.6, p: 0.24 }];
        let c = ThresholdCurve::from_actions(0, &acts, 1.0, 64);
        assert!(matches!(c.cumulative(0.0, 0.9), Err(Error::Unreachable { .. })));
        let (t, flagged) = c.cumulative_clamped(0.0, 0.9);
        assert!(flagged && (t - 0.36).abs() < 1e-9);
    }

    #[test]
    fn indifference_bound_saturates_at_v_over_e() {
        // u = v x' / e: u + T_hat[u/v, x'] equals (e-1)/e v x'
        let (v, xp) = (1.3, 0.8);
        let u = v * xp / std::f64::consts::E;
        let t = indifference_bound(v, u, 0.0, xp);
        assert!((u + t - covering_constant() * v * xp).abs() < 1e-12);
        // closed form v x' + u ln(u / (v x')) - u
        assert!((t - (v * xp + u * (u / (v * xp)).ln() - u)).abs() < 1e-12);
    }

    #[test]
    fn margin_without_extra_allocation() {
        let acts = [Action { bid: Some(0.5), x: 1.0, p: 0.5 }];
        let c = ThresholdCurve::from_actions(0, &acts, 1.0, 64);
        let m = value_covering_margin(&c, 1.0, 0.8, 0.5);
        assert!((m.value - (0.8 - covering_constant() * 0.5)).abs() < 1e-12);
        assert!(m.value >= 0.5 / std::f64::consts::E);
        // phi+ = 0 passes trivially
        let d = ValueDistribution::uniform(0.0, 1.0);
        assert!(virtual_covering_margin(&c, &d, 0.4, 0.2, 1.0).unwrap().is_none());
        // phi(1) = 1: virtual margin equals value margin
        let vm = virtual_covering_margin(&c, &d, 1.0, 0.2, 1.0).unwrap().unwrap();
        assert!((vm.value - value_covering_margin(&c, 1.0, 0.2, 1.0).value).abs() < 1e-12);
    }

    #[test]
    fn first_price_deterministic_witness_has_ratio_one() {
        let d = vec![ValueDistribution::uniform(0.0, 1.0); 2];
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), table(&[1.0], vec![0.6, 0.6])]).unwrap();
        let e = evaluate_profile(&single("first-price"), &p, &d, CoverMode::Plain, &settings());
        assert!((e.ratio - 1.0).abs() < 1e-9, "{e:?}");
        assert_eq!(e.x_prime, vec![1.0, 0.0]);
    }

    #[test]
    fn all_pay_uniform_witness_approaches_two() {
        let d = vec![ValueDistribution::uniform(0.0, 1.0); 2];
        let eps = 0.01;
        let p = StrategyProfile::new(vec![table(&[1.0], vec![eps, eps]), table(&[1.0], uniform_bids(256))]).unwrap();
        let e = evaluate_profile(&single("all-pay"), &p, &d, CoverMode::Plain, &settings());
        assert!((e.threshold_mass - 1.0).abs() < 2e-3, "{e:?}");
        assert!((e.revenue - (0.5 + eps)).abs() < 1e-9);
        assert!((e.ratio - 1.0 / (0.5 + eps)).abs() < 5e-3);
    }

    #[test]
    fn second_price_is_not_covered() {
        let d = vec![ValueDistribution::point_mass(1.0, 1e-6), ValueDistribution::point_mass(0.01, 1e-6)];
        let p = StrategyProfile::truthful(&d, 16);
        let e = evaluate_profile(&single("second-price"), &p, &d, CoverMode::Plain, &settings());
        assert!((e.threshold_mass - 1.0).abs() < 0.01);
        assert!((e.revenue - 0.01).abs() < 1e-4);
        assert!(e.ratio >= 99.0);
    }

    #[test]
    fn zero_revenue_gives_infinite_ratio() {
        let d = vec![ValueDistribution::uniform(0.0, 1.0); 2];
        let m = single("first-price").with_reserves(vec![0.0, 0.5]).unwrap();
        // agent 1 withdraws, agent 0 bids 0: revenue 0 but agent 1 faces a positive threshold
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.3, 0.3]), table(&[1.0], vec![0.0, 0.0])]).unwrap();
        let mut p = p;
        p.agents[0].bids = vec![0.0, 0.0];
        let e = evaluate_profile(&m, &p, &d, CoverMode::Plain, &settings());
        assert!(e.revenue == 0.0 && e.threshold_mass > 0.0 && e.ratio.is_infinite());
    }

    #[test]
    fn positions_vertex_max_brute_force() {
        let env = Environment::positions(3, vec![1.0, 0.5]);
        let f = |i: usize, x: f64| [3.0, 1.0, 2.0][i] * x * x;
        let (x, v) = vertex_max(&env, &f);
        // best: agent 0 slot 1 (3), agent 2 slot 2 (2 * 0.25)
        assert_eq!(x, vec![1.0, 0.0, 0.5]);
        assert!((v - 3.5).abs() < 1e-12);
    }

    #[test]
    fn sampler_respects_first_price_bound() {
        let d = vec![ValueDistribution::uniform(0.0, 1.0); 2];
        let s = SamplerSettings {
            trials: 60,
            climb_steps: 20,
            ..SamplerSettings::default()
        };
        let est = revenue_covering_mu(&single("first-price"), &d, &builtin_families(), CoverMode::Plain, &s, &settings()).unwrap();
        assert!(est.mu <= 1.02, "{est}");
        assert!(est.mu > 0.5);
    }

    #[test]
    fn witness_csv_round_trip() {
        let d = vec![ValueDistribution::uniform(0.0, 1.0); 2];
        let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), table(&[1.0], vec![0.6, 0.6])]).unwrap();
        let evaluation = evaluate_profile(&single("first-price"), &p, &d, CoverMode::Plain, &settings());
        let w = Witness {
            family: "fixed".into(),
            profile: p,
            evaluation,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        write_witness(&path, &w).unwrap();
        let rows = csv::Reader::from_path(&path).unwrap().records().count();
        assert_eq!(rows, 4);
    }

    proptest! {
        #[test]
        fn tau_monotone_and_t_convex(bids in proptest::collection::vec(0.0f64..1.0, 2..12), ap in any::<bool>()) {
            let mut b = bids.clone();
            b.sort_by(|x, y| x.total_cmp(y));
            let rival = table(&[1.0], b);
            let p = StrategyProfile::new(vec![table(&[1.0], vec![0.0, 0.0]), rival]).unwrap();
            let m = single(if ap { "all-pay" } else { "first-price" });
            let st = SolverSettings { grid_bids: 128, ..SolverSettings::default() };
            let c = threshold_curve(&m, &p, 0, &st);
            for w in c.tau.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            // convexity of T[0.1, x'] on a triple grid
            let t = |x: f64| c.cumulative_clamped(0.1, x).0;
            for k in 1..20 {
                let (a, mid, z) = ((k - 1) as f64 / 20.0, k as f64 / 20.0, (k + 1) as f64 / 20.0);
                prop_assert!(t(mid) <= 0.5 * (t(a) + t(z)) + 1e-9);
            }
            prop_assert_eq!(t(0.05), 0.0);
        }

        #[test]
        fn gfp_pointwise_covering(bids in proptest::collection::vec(0.0f64..1.0, 4)) {
            let m = Mechanism::by_name("generalized-first-price", Environment::positions(4, vec![1.0, 0.6, 0.3])).unwrap();
            let (rev, thr) = gfp_pointwise(&m, &bids).unwrap();
            prop_assert!(rev >= thr - 1e-12, "rev {} thresholds {}", rev, thr);
        }
    }
}
