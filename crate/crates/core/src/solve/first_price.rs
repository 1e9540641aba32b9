//! Single-item first-price equilibria with independent, possibly asymmetric
//! bidders, by backward shooting on the inverse bid functions.
//!
//! With `phi_i(b)` the value bidding `b` and `G_j(b) = F_j(phi_j(b))`, the
//! first-order conditions read `sum_{j != i} (ln G_j)' = 1 / (phi_i - b)`, which
//! solve to `(ln G_i)' = S - 1 / (phi_i - b)` with
//! `S = (1 / (n - 1)) sum_j 1 / (phi_j - b)`. All bidders share a top bid where
//! `phi_i = hi_i`; the top bid is bisected until the trajectories reach the
//! diagonal exactly at the reserve.

use crate::auction::Mechanism;
use crate::dist::ValueDistribution;
use crate::env::Environment;
use crate::{Error, Result};

use super::{AgentStrategy, SolverSettings, StrategyProfile};

const STEPS: usize = 8000;
const BISECTIONS: usize = 80;

/// Whether the shooting method covers this mechanism and these distributions.
pub fn applies(mech: &Mechanism, dists: &[ValueDistribution]) -> bool {
    let r = mech.reserves.first().copied().unwrap_or(0.0);
    matches!(mech.env, Environment::SingleItem { .. })
        && mech.rule.name() == "first-price"
        && mech.n() >= 2
        && mech.groups.iter().all(|g| g.len() <= 1)
        && mech.reserves.iter().all(|&x| x == r)
        && dists.iter().all(|d| {
            let (lo, hi) = d.support();
            lo <= r + 1e-12 && hi > r
        })
}

/// Bid tables on `settings.grid_values` quantile nodes per agent.
pub fn solve(mech: &Mechanism, dists: &[ValueDistribution], settings: &SolverSettings) -> Result<StrategyProfile> {
    if !applies(mech, dists) {
        return Err(Error::InvalidParameter(
            "first-price shooting needs a single item, a common reserve and supports starting at or below it".into(),
        ));
    }
    let r = mech.reserves[0];
    let tops: Vec<f64> = dists.iter().map(|d| d.support().1).collect();
    let second = {
        let mut t = tops.clone();
        t.sort_by(|a, b| b.total_cmp(a));
        t[1]
    };
    let (mut lo, mut hi) = (r, second);
    let mut best = None;
    for _ in 0..BISECTIONS {
        let top = 0.5 * (lo + hi);
        match integrate(dists, &tops, top, r) {
            Some(path) => {
                best = Some(path);
                lo = top;
            }
            None => hi = top,
        }
    }
    let path = best.ok_or_else(|| Error::InvalidParameter("no first-price trajectory reached the reserve".into()))?;
    let agents = dists
        .iter()
        .enumerate()
        .map(|(i, d)| {
            AgentStrategy::from_fn(d, settings.grid_values, |v| {
                if v < r {
                    return 0.0;
                }
                inverse(&path, i, r, v).min(v)
            })
        })
        .collect();
    Ok(StrategyProfile { agents })
}

/// One point of the backward trajectory: a bid and the value of each bidder bidding it.
struct Point {
    bid: f64,
    values: Vec<f64>,
}

/// Integrates from `top` down to `r`; `None` when a trajectory meets the
/// diagonal first (the top bid is too high).
fn integrate(dists: &[ValueDistribution], tops: &[f64], top: f64, r: f64) -> Option<Vec<Point>> {
    let h = (top - r) / STEPS as f64;
    let mut b = top;
    let mut phi = tops.to_vec();
    let mut path = vec![Point { bid: b, values: phi.clone() }];
    for _ in 0..STEPS {
        let k1 = slope(dists, b, &phi)?;
        let k2 = slope(dists, b - 0.5 * h, &axpy(&phi, -0.5 * h, &k1))?;
        let k3 = slope(dists, b - 0.5 * h, &axpy(&phi, -0.5 * h, &k2))?;
        let k4 = slope(dists, b - h, &axpy(&phi, -h, &k3))?;
        for (j, p) in phi.iter_mut().enumerate() {
            *p -= h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        b -= h;
        if phi.iter().any(|&p| p <= b) {
            return None;
        }
        path.push(Point { bid: b, values: phi.clone() });
    }
    path.reverse();
    Some(path)
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

/// `d phi_i / d b` at bid `b`; `None` off the feasible region.
fn slope(dists: &[ValueDistribution], b: f64, phi: &[f64]) -> Option<Vec<f64>> {
    let n = phi.len() as f64;
    let gaps: Vec<f64> = phi.iter().map(|&p| p - b).collect();
    if gaps.iter().any(|&g| !(g > 0.0)) {
        return None;
    }
    let s = gaps.iter().map(|g| 1.0 / g).sum::<f64>() / (n - 1.0);
    dists
        .iter()
        .zip(phi)
        .zip(&gaps)
        .map(|((d, &p), &g)| {
            let dl = s - 1.0 / g;
            let f = d.pdf(p);
            if !(f > 0.0) {
                return None;
            }
            Some(dl * d.cdf(p) / f)
        })
        .collect()
}

/// Bid of bidder `i` with value `v` read off the trajectory; linear from the
/// reserve to the first recorded point.
fn inverse(path: &[Point], i: usize, r: f64, v: f64) -> f64 {
    let first = &path[0];
    if v <= first.values[i] {
        let span = first.values[i] - r;
        return if span > 0.0 { r + (v - r) / span * (first.bid - r) } else { first.bid };
    }
    let k = path.partition_point(|p| p.values[i] < v);
    if k >= path.len() {
        return path[path.len() - 1].bid;
    }
    let (a, c) = (&path[k - 1], &path[k]);
    let t = (v - a.values[i]) / (c.values[i] - a.values[i]);
    a.bid + t * (c.bid - a.bid)
}
