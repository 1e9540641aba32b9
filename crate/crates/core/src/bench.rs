//! Optimal benchmarks, Monte Carlo equilibrium measurements and ratio tables.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::auction::Mechanism;
use crate::dist::ValueDistribution;
use crate::env::{Environment, TieOrder};
use crate::numeric::{derive_seed, gauss_legendre_composite, RunningStats};
use crate::solve::StrategyProfile;
use crate::{Error, Result};

/// Independent batches per Monte Carlo estimate.
const BATCHES: u64 = 64;
/// Quadrature panels across the value range of closed-form single-item benchmarks.
const PANELS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Zero for quadrature results.
    pub se: f64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    fn from_stats(s: &RunningStats) -> Self {
        Estimate {
            value: s.mean(),
            se: s.std_error(),
        }
    }
}

/// Runs `draw` on `samples` seeded draws of one uniform per agent, in parallel
/// batches merged in batch order.
fn monte_carlo<const K: usize>(
    n: usize,
    samples: usize,
    seed: u64,
    draw: impl Fn(&[f64]) -> [f64; K] + Sync,
) -> [RunningStats; K] {
    let per = samples.div_ceil(BATCHES as usize).max(1);
    let batches: Vec<[RunningStats; K]> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b));
            let mut stats: [RunningStats; K] = std::array::from_fn(|_| RunningStats::default());
            let mut u = vec![0.0; n];
            for _ in 0..per {
                for x in u.iter_mut() {
                    *x = rng.gen::<f64>();
                }
                for (s, v) in stats.iter_mut().zip(draw(&u)) {
                    s.push(v);
                }
            }
            stats
        })
        .collect();
    let mut out: [RunningStats; K] = std::array::from_fn(|_| RunningStats::default());
    for b in &batches {
        for (o, s) in out.iter_mut().zip(b) {
            o.merge(s);
        }
    }
    out
}

/// Best feasible `sum_i w_i x_i` for nonnegative weights.
fn best_weighted(env: &Environment, w: &[f64]) -> f64 {
    let x = env.best_vertex(w, &TieOrder::index_order(env.n()));
    x.iter().zip(w).map(|(x, w)| x * w).sum()
}

fn value_breaks(dists: &[ValueDistribution], extra: &[f64], top: f64) -> Vec<f64> {
    let mut breaks: Vec<f64> = (0..=PANELS).map(|k| top * k as f64 / PANELS as f64).collect();
    for d in dists {
        let (lo, hi) = d.support();
        breaks.extend([lo, hi]);
        breaks.extend(d.breakpoints());
    }
    breaks.extend_from_slice(extra);
    breaks.retain(|b| (0.0..=top).contains(b));
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    breaks
}

/// Expected welfare of serving the highest-valued feasible agents among those with
/// values at least their reserves.
pub fn optimal_welfare(
    env: &Environment,
    dists: &[ValueDistribution],
    reserves: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_lengths(env, dists, reserves.len())?;
    if let Environment::SingleItem { .. } = env {
        // E[max_i v_i 1{v_i >= r_i}] = integral of 1 - prod_i F_i(max(t, r_i))
        let top = dists.iter().map(|d| d.support().1).fold(0.0, f64::max);
        let breaks = value_breaks(dists, reserves, top);
        let value = gauss_legendre_composite(&breaks, |t| {
            1.0 - dists
                .iter()
                .zip(reserves)
                .map(|(d, &r)| d.cdf(t.max(r)))
                .product::<f64>()
        });
        return Ok(Estimate::exact(value));
    }
    let [s] = monte_carlo(dists.len(), samples, seed, |u| {
        let w: Vec<f64> = dists
            .iter()
            .zip(u)
            .zip(reserves)
            .map(|((d, &q), &r)| {
                let v = d.value_at(q);
                if v >= r {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        [best_weighted(env, &w)]
    });
    Ok(Estimate::from_stats(&s))
}

/// `Pr[phi(v) <= t]` for a regular distribution.
fn virtual_cdf(d: &ValueDistribution, t: f64) -> f64 {
    let (lo, hi) = d.support();
    let phi = |v: f64| d.virtual_value(v).unwrap_or(f64::NEG_INFINITY);
    if phi(hi) <= t {
        return 1.0;
    }
    if phi(lo) > t {
        return 0.0;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if phi(m) <= t {
            a = m;
        } else {
            b = m;
        }
    }
    d.cdf(a)
}

/// Expected optimal revenue `E[max feasible sum_i phi_i+ x_i]`; irregular
/// distributions are rejected.
pub fn myerson_revenue(env: &Environment, dists: &[ValueDistribution], samples: usize, seed: u64) -> Result<Estimate> {
    check_lengths(env, dists, dists.len())?;
    for d in dists {
        d.validate()?;
        if let Some(w) = d.check_regular(1024).witness {
            return Err(Error::Irregular(w));
        }
    }
    if let Environment::SingleItem { .. } = env {
        let phis: Vec<f64> = dists
            .iter()
            .flat_map(|d| {
                let (lo, hi) = d.support();
                let mut vs = vec![lo, hi];
                vs.extend(d.breakpoints());
                vs.into_iter().filter_map(|v| d.virtual_value(v).ok())
            })
            .collect();
        let top = phis.iter().copied().fold(0.0, f64::max);
        let mut extra = phis.clone();
        // the virtual-value image of a narrow support is itself narrow
        for d in dists {
            let (lo, hi) = d.support();
            if let (Ok(a), Ok(b)) = (d.virtual_value(lo), d.virtual_value(hi)) {
                extra.extend((1..64).map(|k| a + (b - a) * k as f64 / 64.0));
            }
        }
        let breaks = value_breaks(&[], &extra, top);
        let value = gauss_legendre_composite(&breaks, |t| 1.0 - dists.iter().map(|d| virtual_cdf(d, t)).product::<f64>());
        return Ok(Estimate::exact(value));
    }
    let [s] = monte_carlo(dists.len(), samples, seed, |u| {
        let w: Vec<f64> = dists
            .iter()
            .zip(u)
            .map(|(d, &q)| d.virtual_value_parts(d.value_at(q)).map_or(0.0, |p| p.0))
            .collect();
        [best_weighted(env, &w)]
    });
    Ok(Estimate::from_stats(&s))
}

fn check_lengths(env: &Environment, dists: &[ValueDistribution], reserves: usize) -> Result<()> {
    if dists.len() != env.n() || reserves != env.n() {
        return Err(Error::InvalidParameter(format!(
            "{} agents in the environment but {} distributions and {} reserves",
            env.n(),
            dists.len(),
            reserves
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentMeasurement {
    pub welfare: f64,
    pub revenue: f64,
    pub rev_plus: f64,
    pub rev_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub welfare: Estimate,
    pub revenue: Estimate,
    /// `E[sum_i phi_i+ x_i]`.
    pub rev_plus: Estimate,
    /// `-E[sum_i phi_i- x_i]`.
    pub rev_minus: Estimate,
    /// Paired difference `revenue - (rev_plus - rev_minus)`.
    pub identity_gap: Estimate,
    /// Best feasible welfare on the same draws, serving agents above their reserves.
    pub optimal_welfare: Estimate,
    pub per_agent: Vec<AgentMeasurement>,
    pub samples: usize,
}

/// Monte Carlo welfare, revenue and virtual welfare of a profile. Values and bids
/// are read from the strategy tables at a shared uniform draw per agent, so mixed
/// strategies are sampled jointly with values.
pub fn measure(
    mech: &Mechanism,
    profile: &StrategyProfile,
    dists: &[ValueDistribution],
    samples: usize,
    seed: u64,
) -> Result<Measurement> {
    let n = mech.n();
    if profile.n() != n || dists.len() != n {
        return Err(Error::InvalidParameter("profile, distributions and mechanism disagree on the agent count".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    // welfare, revenue, plus, minus, gap, optimum, then per-agent welfare/revenue/plus/minus
    const K: usize = 6 + 4 * 16;
    if n > 16 {
        return Err(Error::UnsupportedSize(format!("measurement supports at most 16 agents, got {n}")));
    }
    let stats = monte_carlo::<K>(n, samples, seed, |u| {
        let values: Vec<f64> = (0..n).map(|i| profile.agents[i].value_at(u[i])).collect();
        let bids: Vec<f64> = (0..n).map(|i| profile.agents[i].bid_at(u[i])).collect();
        let out = mech.outcome_unchecked(&bids);
        let mut row = [0.0; K];
        for i in 0..n {
            let x = out.x()[i];
            let (plus, minus) = dists[i].virtual_value_parts(values[i]).unwrap_or((0.0, 0.0));
            let w = values[i] * x;
            let p = out.payments[i];
            row[0] += w;
            row[1] += p;
            row[2] += plus * x;
            row[3] -= minus * x;
            row[4] += p - (plus + minus) * x;
            row[6 + 4 * i] = w;
            row[7 + 4 * i] = p;
            row[8 + 4 * i] = plus * x;
            row[9 + 4 * i] = -minus * x;
        }
        let eligible: Vec<f64> = (0..n)
            .map(|i| if values[i] >= mech.reserves[i] { values[i] } else { 0.0 })
            .collect();
        row[5] = best_weighted(&mech.env, &eligible);
        row
    });
    let e = |k: usize| Estimate::from_stats(&stats[k]);
    Ok(Measurement {
        welfare: e(0),
        revenue: e(1),
        rev_plus: e(2),
        rev_minus: e(3),
        identity_gap: e(4),
        optimal_welfare: e(5),
        per_agent: (0..n)
            .map(|i| AgentMeasurement {
                welfare: stats[6 + 4 * i].mean(),
                revenue: stats[7 + 4 * i].mean(),
                rev_plus: stats[8 + 4 * i].mean(),
                rev_minus: stats[9 + 4 * i].mean(),
            })
            .collect(),
        samples: stats[0].count() as usize,
    })
}

fn e_ratio() -> f64 {
    1.0 / crate::covering_constant()
}

/// `(1 + mu) e / (e - 1)`.
pub fn welfare_bound(mu: f64) -> f64 {
    (1.0 + mu) * e_ratio()
}

/// `(mu + 1) e / (e - 1)`, for monopoly reserves.
pub fn revenue_bound(mu: f64) -> f64 {
    (mu + 1.0) * e_ratio()
}

/// `(k / (k - 1) + mu) e / (e - 1)` for `k`-duplicates.
pub fn duplicates_bound(k: usize, mu: f64) -> f64 {
    (k as f64 / (k as f64 - 1.0) + mu) * e_ratio()
}

/// Slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 0.05;

/// Everything the ratio table needs about one scenario.
#[derive(Debug, Clone)]
pub struct BenchInput {
    pub scenario: String,
    pub measurement: Measurement,
    /// Welfare optimum under the mechanism's reserves.
    pub optimal_welfare: Estimate,
    pub optimal_revenue: Option<Estimate>,
    pub mu: f64,
    pub monopoly_reserves: bool,
    pub duplicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub scenario: String,
    pub quantity: String,
    pub equilibrium: f64,
    pub benchmark: f64,
    /// Benchmark over equilibrium; `None` when the equilibrium value is ~0.
    pub ratio: Option<f64>,
    pub bound: f64,
    pub pass: bool,
}

fn ratio_row(scenario: &str, quantity: &str, equilibrium: f64, benchmark: f64, bound: f64) -> RatioRow {
    let ratio = (equilibrium.abs() > 1e-12).then(|| benchmark / equilibrium);
    RatioRow {
        scenario: scenario.to_string(),
        quantity: quantity.to_string(),
        equilibrium,
        benchmark,
        ratio,
        bound,
        pass: ratio.is_some_and(|r| r <= bound + BOUND_SLACK),
    }
}

/// Optimal-over-equilibrium ratios next to their bounds.
///
/// Rows: `welfare` always; `revenue` with monopoly reserves; `revenue-duplicates`
/// for `k`-duplicates; `revenue-refined` compares `(e-1)/e` of the optimal revenue
/// with `REV+ + mu Rev` against a bound of 1.
pub fn poa_report(inputs: &[BenchInput]) -> Vec<RatioRow> {
    let mut rows = Vec::new();
    for inp in inputs {
        let m = &inp.measurement;
        rows.push(ratio_row(
            &inp.scenario,
            "welfare",
            m.welfare.value,
            inp.optimal_welfare.value,
            welfare_bound(inp.mu),
        ));
        let Some(opt) = inp.optimal_revenue else { continue };
        if inp.monopoly_reserves {
            rows.push(ratio_row(&inp.scenario, "revenue", m.revenue.value, opt.value, revenue_bound(inp.mu)));
        }
        if let Some(k) = inp.duplicates.filter(|&k| k >= 2) {
            rows.push(ratio_row(
                &inp.scenario,
                "revenue-duplicates",
                m.revenue.value,
                opt.value,
                duplicates_bound(k, inp.mu),
            ));
        }
        let mut refined = ratio_row(
            &inp.scenario,
            "revenue-refined",
            m.rev_plus.value + inp.mu * m.revenue.value,
            crate::covering_constant() * opt.value,
            1.0,
        );
        let noise = 3.0 * (m.rev_plus.se + inp.mu * m.revenue.se) + 3.0 * opt.se;
        refined.pass = refined.equilibrium + noise >= refined.benchmark - 1e-9;
        rows.push(refined);
    }
    rows
}

pub fn write_ratio_table(path: &Path, rows: &[RatioRow]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["scenario", "quantity", "equilibrium", "benchmark", "ratio", "bound", "pass"])?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.quantity.clone(),
            r.equilibrium.to_string(),
            r.benchmark.to_string(),
            r.ratio.map_or_else(|| "NA".to_string(), |x| x.to_string()),
            r.bound.to_string(),
            if r.pass { "pass" } else { "fail" }.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuplicatesCheck {
    pub k: usize,
    pub revenue: f64,
    /// `(k - 1) / k REV+`.
    pub bound: f64,
    pub se: f64,
    pub pass: bool,
}

/// `Rev >= (k - 1) / k REV+ - 3 SE` for a mechanism with duplicate groups.
pub fn duplicates_check(mech: &Mechanism, dists: &[ValueDistribution], m: &Measurement) -> Result<DuplicatesCheck> {
    let k = mech
        .duplicate_k()
        .ok_or_else(|| Error::InvalidParameter("mechanism has no duplicate groups".into()))?;
    for g in &mech.groups {
        if g.iter().any(|&a| dists[a] != dists[g[0]]) {
            return Err(Error::InvalidParameter(format!("duplicate group {g:?} mixes distributions")));
        }
    }
    let scale = (k as f64 - 1.0) / k as f64;
    let bound = scale * m.rev_plus.value;
    let se = m.revenue.se.hypot(scale * m.rev_plus.se);
    Ok(DuplicatesCheck {
        k,
        revenue: m.revenue.value,
        bound,
        se,
        pass: m.revenue.value >= bound - 3.0 * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;

    fn u01(n: usize) -> Vec<ValueDistribution> {
        vec![ValueDistribution::uniform(0.0, 1.0); n]
    }

    #[test]
    fn two_uniform_benchmarks() {
        let env = Environment::single_item(2);
        let w = optimal_welfare(&env, &u01(2), &[0.0, 0.0], 0, 0).unwrap();
        assert!((w.value - 2.0 / 3.0).abs() < 1e-6);
        let r = myerson_revenue(&env, &u01(2), 0, 0).unwrap();
        assert!((r.value - 5.0 / 12.0).abs() < 1e-6);
        // independent oracle: E[max(2 max(v1, v2) - 1, 0)] = integral_{1/2}^1 (2v - 1) 2v dv
        let oracle = adaptive_simpson(&|v: f64| (2.0 * v - 1.0) * 2.0 * v, 0.5, 1.0, 1e-12, 40);
        assert!((r.value - oracle).abs() < 1e-6);
    }

    #[test]
    fn single_bidder_posts_monopoly_price() {
        let r = myerson_revenue(&Environment::single_item(1), &u01(1), 0, 0).unwrap();
        assert!((r.value - 0.25).abs() < 1e-6);
    }

    #[test]
    fn reserves_above_supports_give_zero_welfare() {
        let w = optimal_welfare(&Environment::single_item(2), &u01(2), &[2.0, 2.0], 0, 0).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn revenue_gap_benchmark() {
        let h = 1000.0;
        let d = vec![
            ValueDistribution::point_mass(1.0, 1e-6),
            ValueDistribution::equal_revenue(1.0, h, 1e-4),
        ];
        let r = myerson_revenue(&Environment::single_item(2), &d, 0, 0).unwrap();
        assert!((r.value - (2.0 - 1.0 / h)).abs() < 5e-3, "{}", r.value);
    }

    #[test]
    fn matroid_benchmarks_match_single_item_quadrature() {
        // a rank-1 uniform matroid is a single item
        let env = Environment::uniform_matroid(2, 1);
        let w = optimal_welfare(&env, &u01(2), &[0.0, 0.0], 200_000, 3).unwrap();
        assert!((w.value - 2.0 / 3.0).abs() < 4.0 * w.se + 1e-3);
        let r = myerson_revenue(&env, &u01(2), 200_000, 3).unwrap();
        assert!((r.value - 5.0 / 12.0).abs() < 4.0 * r.se + 1e-3);
    }

    #[test]
    fn irregular_is_rejected() {
        let d = vec![ValueDistribution::piecewise_linear(vec![[0.0, 0.0], [0.1, 1.0], [1.0, 1.0]]); 1];
        let bimodal = vec![ValueDistribution::piecewise_linear(vec![
            [0.0, 0.0],
            [0.1, 0.45],
            [0.5, 0.5],
            [0.6, 0.95],
            [1.0, 1.0],
        ])];
        assert!(myerson_revenue(&Environment::single_item(1), &d, 0, 0).is_ok());
        assert!(matches!(
            myerson_revenue(&Environment::single_item(1), &bimodal, 0, 0),
            Err(Error::Irregular(_))
        ));
    }

    #[test]
    fn symmetric_first_price_measurement() {
        let m = Mechanism::by_name("first-price", Environment::single_item(2)).unwrap();
        let p = StrategyProfile::scaled(&u01(2), 257, 0.5);
        let out = measure(&m, &p, &u01(2), 200_000, 1).unwrap();
        assert!((out.revenue.value - 1.0 / 3.0).abs() < 0.01);
        assert!((out.welfare.value - 2.0 / 3.0).abs() < 0.01);
        assert!(out.identity_gap.value.abs() < 3.0 * out.identity_gap.se + 1e-3);
        assert!((out.optimal_welfare.value - out.welfare.value).abs() < 1e-12);
        let a: f64 = out.per_agent.iter().map(|a| a.revenue).sum();
        assert!((a - out.revenue.value).abs() < 1e-9);
    }

    #[test]
    fn withdrawn_profile_measures_zero() {
        let m = Mechanism::by_name("first-price", Environment::single_item(2))
            .unwrap()
            .with_reserves(vec![2.0, 2.0])
            .unwrap();
        let p = StrategyProfile::scaled(&u01(2), 17, 0.5);
        let out = measure(&m, &p, &u01(2), 1000, 1).unwrap();
        assert_eq!((out.welfare.value, out.revenue.value, out.rev_plus.value, out.rev_minus.value), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn measurement_is_seed_deterministic() {
        let m = Mechanism::by_name("all-pay", Environment::single_item(2)).unwrap();
        let p = StrategyProfile::scaled(&u01(2), 65, 0.3);
        let a = measure(&m, &p, &u01(2), 10_000, 9).unwrap();
        let b = measure(&m, &p, &u01(2), 10_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_constants() {
        let e = std::f64::consts::E;
        assert!((welfare_bound(1.0) - 2.0 * e / (e - 1.0)).abs() < 1e-12);
        assert!((welfare_bound(1.0) - 3.164).abs() < 1e-3);
        assert!((duplicates_bound(2, 2.0) - 4.0 * e / (e - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ratio_rows_flag_zero_equilibrium() {
        let row = ratio_row("s", "welfare", 0.0, 1.0, 3.0);
        assert!(row.ratio.is_none() && !row.pass);
    }

    #[test]
    fn duplicate_groups_must_share_distributions() {
        let m = Mechanism::by_name("first-price", Environment::single_item(2))
            .unwrap()
            .with_groups(vec![vec![0, 1]])
            .unwrap();
        let d = vec![ValueDistribution::uniform(0.0, 1.0), ValueDistribution::uniform(0.0, 2.0)];
        let p = StrategyProfile::scaled(&d, 17, 0.5);
        let out = measure(&m, &p, &d, 1000, 1).unwrap();
        assert!(duplicates_check(&m, &d, &out).is_err());
    }
}
