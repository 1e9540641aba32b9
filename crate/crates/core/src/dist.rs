//! Value distributions, virtual values and monopoly reserves.
//!
//! All kinds expose their original CDF `F`; unbounded kinds are truncated at a
//! quantile `q_max`, so their support is `[lo, F^{-1}(q_max)]` and the CDF maps it
//! onto `[0, q_max]`. Sampling and expectations use the normalised quantile
//! `u in [0, 1]`, i.e. the value `F^{-1}(u * q_max)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TRUNCATION: f64 = 0.9999;
pub const DEFAULT_EQUAL_REVENUE_SMOOTHING: f64 = 1e-4;
/// Slack used when comparing consecutive virtual values for regularity.
pub const REGULARITY_SLACK: f64 = 1e-9;

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

fn default_smoothing() -> f64 {
    DEFAULT_EQUAL_REVENUE_SMOOTHING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueDistribution {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
        #[serde(default = "default_truncation")]
        q_max: f64,
    },
    /// `F(v) = 1 - lo/v` on `[lo, cap - smoothing)`, then a linear CDF segment of
    /// width `smoothing` that absorbs the mass `lo/cap` which would otherwise sit on
    /// the cap. `smoothing = 0` keeps the atom at the cap.
    EqualRevenue {
        lo: f64,
        cap: f64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Uniform on `[value - width/2, value + width/2]`.
    PointMass {
        value: f64,
        width: f64,
    },
    /// Piecewise-linear CDF through `(value, F)` knots.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
}

/// First pair of consecutive grid values where the virtual value decreases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityWitness {
    pub v_lo: f64,
    pub phi_lo: f64,
    pub v_hi: f64,
    pub phi_hi: f64,
}

impl fmt::Display for RegularityWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "virtual value drops from {} at v={} to {} at v={}",
            self.phi_lo, self.v_lo, self.phi_hi, self.v_hi
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub regular: bool,
    pub witness: Option<RegularityWitness>,
}

impl ValueDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        ValueDistribution::Uniform { lo, hi }
    }

    pub fn exponential(rate: f64) -> Self {
        ValueDistribution::Exponential {
            rate,
            q_max: DEFAULT_TRUNCATION,
        }
    }

    pub fn equal_revenue(lo: f64, cap: f64, smoothing: f64) -> Self {
        ValueDistribution::EqualRevenue { lo, cap, smoothing }
    }

    pub fn point_mass(value: f64, width: f64) -> Self {
        ValueDistribution::PointMass { value, width }
    }

    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Self {
        ValueDistribution::PiecewiseLinear { knots }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            ValueDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
                    return bad(format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            ValueDistribution::Exponential { rate, q_max } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
                if !(q_max > 0.0 && q_max < 1.0) {
                    return bad(format!("exponential truncation must lie in (0, 1), got {q_max}"));
                }
            }
            ValueDistribution::EqualRevenue { lo, cap, smoothing } => {
                if !(lo > 0.0 && cap > lo && cap.is_finite()) {
                    return bad(format!("equal-revenue needs 0 < lo < cap, got lo={lo} cap={cap}"));
                }
                if !(smoothing >= 0.0 && smoothing < cap - lo) {
                    return bad(format!("equal-revenue smoothing {smoothing} must lie in [0, cap - lo)"));
                }
            }
            ValueDistribution::PointMass { value, width } => {
                if !(width > 0.0 && value - 0.5 * width >= 0.0 && value.is_finite()) {
                    return bad(format!(
                        "point-mass needs width > 0 and value - width/2 >= 0, got value={value} width={width}"
                    ));
                }
            }
            ValueDistribution::PiecewiseLinear { ref knots } => {
                if knots.len() < 2 {
                    return bad("piecewise-linear CDF needs at least two knots".into());
                }
                if knots[0][1] != 0.0 || knots[knots.len() - 1][1] != 1.0 || knots[0][0] < 0.0 {
                    return bad("piecewise-linear CDF must start at F=0 (v >= 0) and end at F=1".into());
                }
                for w in knots.windows(2) {
                    if !(w[1][0] > w[0][0]) || w[1][1] < w[0][1] {
                        return bad("piecewise-linear knots must have increasing values and nondecreasing F".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Truncation quantile; 1 for bounded kinds.
    pub fn q_max(&self) -> f64 {
        match *self {
            ValueDistribution::Exponential { q_max, .. } => q_max,
            _ => 1.0,
        }
    }

    /// `(lo, hi)` of the (possibly truncated) support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ValueDistribution::Uniform { lo, hi } => (lo, hi),
            ValueDistribution::Exponential { rate, q_max } => (0.0, -(1.0 - q_max).ln() / rate),
            ValueDistribution::EqualRevenue { lo, cap, .. } => (lo, cap),
            ValueDistribution::PointMass { value, width } => (value - 0.5 * width, value + 0.5 * width),
            ValueDistribution::PiecewiseLinear { ref knots } => (knots[0][0], knots[knots.len() - 1][0]),
        }
    }

    /// Values where the density is discontinuous (inside the support).
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            ValueDistribution::EqualRevenue { cap, smoothing, .. } if smoothing > 0.0 => vec![cap - smoothing],
            ValueDistribution::PiecewiseLinear { ref knots } => {
                knots[1..knots.len() - 1].iter().map(|k| k[0]).collect()
            }
            _ => Vec::new(),
        }
    }

    fn in_support(&self, v: f64) -> Result<()> {
        let (lo, hi) = self.support();
        let tol = 1e-12 * hi.abs().max(1.0);
        if v.is_nan() || v < lo - tol || v > hi + tol {
            return Err(Error::OutOfSupport { value: v, lo, hi });
        }
        Ok(())
    }

    /// CDF without the support check; clamps to 0 below and 1 above the support.
    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            ValueDistribution::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            ValueDistribution::Exponential { rate, .. } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -(-rate * v).exp_m1()
                }
            }
            ValueDistribution::EqualRevenue { lo, cap, smoothing } => {
                let knee = cap - smoothing;
                if v < lo {
                    0.0
                } else if v >= cap {
                    1.0
                } else if v < knee {
                    1.0 - lo / v
                } else {
                    let fk = 1.0 - lo / knee;
                    fk + (1.0 - fk) * (v - knee) / smoothing
                }
            }
            ValueDistribution::PointMass { value, width } => {
                ((v - (value - 0.5 * width)) / width).clamp(0.0, 1.0)
            }
            ValueDistribution::PiecewiseLinear { ref knots } => {
                let xs: Vec<f64> = knots.iter().map(|k| k[0]).collect();
                let fs: Vec<f64> = knots.iter().map(|k| k[1]).collect();
                crate::numeric::interp(&xs, &fs, v)
            }
        }
    }

    /// Density without the support check (0 outside the support).
    pub fn pdf(&self, v: f64) -> f64 {
        match *self {
            ValueDistribution::Uniform { lo, hi } => {
                if v < lo || v > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            ValueDistribution::Exponential { rate, .. } => {
                if v < 0.0 {
                    0.0
                } else {
                    rate * (-rate * v).exp()
                }
            }
            ValueDistribution::EqualRevenue { lo, cap, smoothing } => {
                let knee = cap - smoothing;
                if v < lo || v > cap {
                    0.0
                } else if v < knee || smoothing == 0.0 {
                    lo / (v * v)
                } else {
                    (lo / knee) / smoothing
                }
            }
            ValueDistribution::PointMass { value, width } => {
                if (v - value).abs() > 0.5 * width {
                    0.0
                } else {
                    1.0 / width
                }
            }
            ValueDistribution::PiecewiseLinear { ref knots } => {
                let n = knots.len();
                if v < knots[0][0] || v > knots[n - 1][0] {
                    return 0.0;
                }
                let slope = |k: usize| (knots[k + 1][1] - knots[k][1]) / (knots[k + 1][0] - knots[k][0]);
                // segment k covers [x_k, x_{k+1}); right-continuous, falling back
                // to the left slope at a knot that starts a flat segment
                let k = knots.partition_point(|kn| kn[0] <= v).saturating_sub(1).min(n - 2);
                let right = slope(k);
                if right == 0.0 && k > 0 && v == knots[k][0] {
                    slope(k - 1)
                } else {
                    right
                }
            }
        }
    }

    /// `(F(v), f(v))`; errors outside the support.
    pub fn evaluate(&self, v: f64) -> Result<(f64, f64)> {
        self.in_support(v)?;
        Ok((self.cdf(v), self.pdf(v)))
    }

    /// `inf { v : F(v) >= q }` for `q in [0, 1]`; quantiles beyond `q_max` map to the
    /// truncation point.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::BadProbability(q));
        }
        let (lo, hi) = self.support();
        let v = match *self {
            ValueDistribution::Uniform { lo, hi } => lo + q * (hi - lo),
            ValueDistribution::Exponential { rate, q_max } => -(-q.min(q_max)).ln_1p() / rate,
            ValueDistribution::EqualRevenue { lo, cap, smoothing } => {
                let knee = cap - smoothing;
                let fk = 1.0 - lo / knee;
                if q <= fk {
                    lo / (1.0 - q)
                } else if smoothing == 0.0 {
                    cap
                } else {
                    knee + smoothing * (q - fk) / (1.0 - fk)
                }
            }
            ValueDistribution::PointMass { value, width } => value - 0.5 * width + q * width,
            ValueDistribution::PiecewiseLinear { ref knots } => {
                // first knot with F >= q
                let k = knots.partition_point(|kn| kn[1] < q);
                if k == 0 {
                    knots[0][0]
                } else if k >= knots.len() {
                    knots[knots.len() - 1][0]
                } else {
                    let (x0, f0) = (knots[k - 1][0], knots[k - 1][1]);
                    let (x1, f1) = (knots[k][0], knots[k][1]);
                    x0 + (x1 - x0) * (q - f0) / (f1 - f0)
                }
            }
        };
        Ok(v.clamp(lo, hi))
    }

    /// Value at normalised quantile `u in [0, 1]` of the truncated distribution.
    pub fn value_at(&self, u: f64) -> f64 {
        self.quantile((u * self.q_max()).clamp(0.0, 1.0))
            .expect("normalised quantile is a probability")
    }

    /// `phi(v) = v - (1 - F(v)) / f(v)`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        self.in_support(v)?;
        let v = v.clamp(self.support().0, self.support().1);
        let phi = match *self {
            ValueDistribution::Uniform { hi, .. } => 2.0 * v - hi,
            ValueDistribution::Exponential { rate, .. } => v - 1.0 / rate,
            ValueDistribution::EqualRevenue { cap, smoothing, .. } => {
                let knee = cap - smoothing;
                if v >= cap {
                    cap
                } else if v < knee {
                    0.0
                } else {
                    2.0 * v - cap
                }
            }
            ValueDistribution::PointMass { value, width } => 2.0 * v - (value + 0.5 * width),
            ValueDistribution::PiecewiseLinear { .. } => {
                let f = self.pdf(v);
                if f <= 0.0 {
                    return Err(Error::SingularDensity(v));
                }
                v - (1.0 - self.cdf(v)) / f
            }
        };
        Ok(phi)
    }

    /// `(phi+, phi-) = (max(phi, 0), min(phi, 0))`.
    pub fn virtual_value_parts(&self, v: f64) -> Result<(f64, f64)> {
        let phi = self.virtual_value(v)?;
        Ok((phi.max(0.0), phi.min(0.0)))
    }

    /// Checks that `phi` is nondecreasing on a quantile grid of `grid_points` points,
    /// returning the first violating consecutive pair.
    pub fn check_regular(&self, grid_points: usize) -> Regularity {
        let n = grid_points.max(2);
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..n {
            let u = (k as f64 + 0.5) / n as f64;
            let v = self.value_at(u);
            let Ok(phi) = self.virtual_value(v) else {
                continue;
            };
            if let Some((pv, pphi)) = prev {
                if phi < pphi - REGULARITY_SLACK {
                    return Regularity {
                        regular: false,
                        witness: Some(RegularityWitness {
                            v_lo: pv,
                            phi_lo: pphi,
                            v_hi: v,
                            phi_hi: phi,
                        }),
                    };
                }
            }
            prev = Some((v, phi));
        }
        Regularity {
            regular: true,
            witness: None,
        }
    }

    /// `inf { v : phi(v) >= 0 }` by bisection on the quantile.
    pub fn monopoly_reserve(&self) -> Result<f64> {
        let reg = self.check_regular(1024);
        if let Some(w) = reg.witness {
            return Err(Error::Irregular(w));
        }
        let phi_at = |u: f64| -> f64 {
            let v = self.value_at(u);
            self.virtual_value(v).unwrap_or(f64::NEG_INFINITY)
        };
        if phi_at(0.0) >= 0.0 {
            return Ok(self.support().0);
        }
        if phi_at(1.0) < 0.0 {
            return Ok(self.support().1);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi_at(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        // refine in value space so phi(r) is within 1e-9 of zero for continuous kinds
        let (mut vlo, mut vhi) = (self.value_at(lo), self.value_at(hi));
        for _ in 0..200 {
            let mid = 0.5 * (vlo + vhi);
            match self.virtual_value(mid) {
                Ok(p) if p >= 0.0 => vhi = mid,
                _ => vlo = mid,
            }
            if vhi - vlo <= 1e-15 * vhi.abs().max(1.0) {
                break;
            }
        }
        Ok(vhi)
    }

    /// `E[v]` of the truncated distribution by quadrature in quantile space.
    pub fn mean(&self) -> f64 {
        let nodes = self.quantile_nodes(1024);
        let values: Vec<f64> = nodes.iter().map(|&u| self.value_at(u)).collect();
        crate::numeric::trapezoid(&nodes, &values)
    }

    /// Normalised-quantile grid: `g` uniform points, the images of the density
    /// breakpoints, and bisection refinement wherever consecutive values are more
    /// than four uniform value-steps apart (total capped at `4 g`).
    pub fn quantile_nodes(&self, g: usize) -> Vec<f64> {
        let g = g.max(2);
        let mut nodes: Vec<f64> = (0..g).map(|k| k as f64 / (g - 1) as f64).collect();
        let qm = self.q_max();
        for bp in self.breakpoints() {
            let u = self.cdf(bp) / qm;
            if u > 0.0 && u < 1.0 {
                nodes.push(u);
            }
        }
        nodes.sort_by(|a, b| a.total_cmp(b));
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let (lo, hi) = self.support();
        let max_gap = 4.0 * (hi - lo) / g as f64;
        let cap = 4 * g;
        loop {
            let mut out = Vec::with_capacity(nodes.len() * 2);
            let mut added = false;
            for w in nodes.windows(2) {
                out.push(w[0]);
                let gap = self.value_at(w[1]) - self.value_at(w[0]);
                if gap > max_gap && w[1] - w[0] > 1e-12 && nodes.len() + out.len() < 2 * cap {
                    out.push(0.5 * (w[0] + w[1]));
                    added = true;
                }
            }
            out.push(*nodes.last().unwrap());
            let done = !added || out.len() >= cap;
            nodes = out;
            if done {
                break;
            }
        }
        nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn bimodal() -> ValueDistribution {
        // dense on [0, 1], sparse on [1, 2], dense on [2, 3]
        ValueDistribution::piecewise_linear(vec![[0.0, 0.0], [1.0, 0.45], [2.0, 0.55], [3.0, 1.0]])
    }

    fn all_kinds() -> Vec<ValueDistribution> {
        vec![
            ValueDistribution::uniform(0.0, 1.0),
            ValueDistribution::uniform(0.5, 2.0),
            ValueDistribution::exponential(1.0),
            ValueDistribution::equal_revenue(1.0, 10.0, DEFAULT_EQUAL_REVENUE_SMOOTHING),
            ValueDistribution::point_mass(1.0, 1e-3),
            bimodal(),
        ]
    }

    #[test]
    fn evaluate_examples() {
        let (f, d) = ValueDistribution::uniform(0.0, 1.0).evaluate(0.25).unwrap();
        assert_eq!((f, d), (0.25, 1.0));
        let (f, d) = ValueDistribution::exponential(1.0).evaluate(0.0).unwrap();
        assert_eq!((f, d), (0.0, 1.0));
        let (f, d) = ValueDistribution::equal_revenue(1.0, 100.0, 0.0).evaluate(2.0).unwrap();
        assert!(close(f, 0.5, 1e-15) && close(d, 0.25, 1e-15));
    }

    #[test]
    fn evaluate_rejects_out_of_support() {
        let err = ValueDistribution::uniform(0.0, 1.0).evaluate(1.5).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport { lo, hi, .. } if lo == 0.0 && hi == 1.0));
    }

    #[test]
    fn quantile_examples() {
        assert!(close(ValueDistribution::uniform(0.0, 1.0).quantile(0.3).unwrap(), 0.3, 1e-15));
        let er = ValueDistribution::equal_revenue(1.0, 100.0, 0.0);
        assert!(close(er.quantile(0.5).unwrap(), 2.0, 1e-12));
        let ex = ValueDistribution::exponential(1.0);
        assert!(close(ex.quantile(1.0 - (-1.0f64).exp()).unwrap(), 1.0, 1e-12));
        assert!(matches!(ex.quantile(1.2), Err(Error::BadProbability(_))));
    }

    #[test]
    fn virtual_value_examples() {
        assert!(close(ValueDistribution::uniform(0.0, 1.0).virtual_value(0.75).unwrap(), 0.5, 1e-15));
        let ex = ValueDistribution::Exponential { rate: 1.0, q_max: 0.9999 };
        assert!(close(ex.virtual_value(3.0).unwrap(), 2.0, 1e-15));
        let er = ValueDistribution::equal_revenue(1.0, 100.0, 0.0);
        for v in [1.0, 2.0, 50.0, 99.0] {
            assert_eq!(er.virtual_value(v).unwrap(), 0.0);
        }
    }

    #[test]
    fn flat_segment_is_singular() {
        let d = ValueDistribution::piecewise_linear(vec![[0.0, 0.0], [1.0, 0.5], [2.0, 0.5], [3.0, 1.0]]);
        assert!(matches!(d.virtual_value(1.5), Err(Error::SingularDensity(_))));
    }

    #[test]
    fn monopoly_reserve_examples() {
        let r = ValueDistribution::uniform(0.0, 1.0).monopoly_reserve().unwrap();
        assert!(close(r, 0.5, 1e-9));
        let r = ValueDistribution::exponential(1.0).monopoly_reserve().unwrap();
        assert!(close(r, 1.0, 1e-9));
        let er = ValueDistribution::equal_revenue(1.0, 1000.0, DEFAULT_EQUAL_REVENUE_SMOOTHING);
        assert!(close(er.monopoly_reserve().unwrap(), 1.0, 1e-9));
        // phi(r*) ~ 0 for a kind with an interior root
        let u = ValueDistribution::uniform(0.2, 1.4);
        let r = u.monopoly_reserve().unwrap();
        assert!(u.virtual_value(r).unwrap().abs() < 1e-9);
    }

    #[test]
    fn monopoly_reserve_rejects_irregular() {
        assert!(matches!(bimodal().monopoly_reserve(), Err(Error::Irregular(_))));
    }

    #[test]
    fn regularity_examples() {
        assert!(ValueDistribution::uniform(0.0, 1.0).check_regular(1024).regular);
        assert!(ValueDistribution::exponential(1.0).check_regular(1024).regular);
        let reg = bimodal().check_regular(1024);
        assert!(!reg.regular);
        let w = reg.witness.unwrap();
        // oracle: direct evaluation of phi at the witness pair
        let d = bimodal();
        let p_lo = w.v_lo - (1.0 - d.cdf(w.v_lo)) / d.pdf(w.v_lo);
        let p_hi = w.v_hi - (1.0 - d.cdf(w.v_hi)) / d.pdf(w.v_hi);
        assert!(w.v_lo < w.v_hi && p_hi < p_lo);
        // the drop is where the density falls from 0.45 to 0.1 at v = 1
        assert!(w.v_lo <= 1.0 && w.v_hi >= 1.0);
    }

    #[test]
    fn density_integrates_to_cdf() {
        for d in all_kinds() {
            let (lo, hi) = d.support();
            let mut cuts = vec![lo];
            cuts.extend(d.breakpoints());
            for k in 1..=20 {
                let v = lo + (hi - lo) * k as f64 / 20.0;
                let mut total = 0.0;
                let mut a = lo;
                for &c in cuts.iter().skip(1).chain(std::iter::once(&v)) {
                    let b = c.min(v);
                    if b > a {
                        total += adaptive_simpson(&|x| d.pdf(x), a, b, 1e-12, 40);
                        a = b;
                    }
                }
                assert!(close(total, d.cdf(v), 1e-6), "{d:?} at {v}: {total} vs {}", d.cdf(v));
            }
            // total mass over the support is the truncation mass
            assert!(close(d.cdf(hi), d.q_max(), 1e-12));
        }
    }

    #[test]
    fn reserve_stable_under_grid_resolution() {
        for d in [ValueDistribution::uniform(0.0, 1.0), ValueDistribution::exponential(2.0)] {
            let r = d.monopoly_reserve().unwrap();
            for g in [256, 512, 4096] {
                assert!(d.check_regular(g).regular);
                // the reserve does not depend on the check grid
                assert!(close(d.monopoly_reserve().unwrap(), r, 1e-12));
            }
        }
    }

    #[test]
    fn nodes_include_breakpoints_and_refine_tails() {
        let er = ValueDistribution::equal_revenue(1.0, 1000.0, 1e-4);
        let nodes = er.quantile_nodes(1024);
        let knee_u = er.cdf(1000.0 - 1e-4);
        assert!(nodes.iter().any(|&u| (u - knee_u).abs() < 1e-15));
        assert!(nodes.len() > 1024 && nodes.len() <= 4096);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(nodes[0], 0.0);
        assert_eq!(*nodes.last().unwrap(), 1.0);
    }

    #[test]
    fn serde_shape() {
        let d: ValueDistribution = toml::from_str("kind = \"exponential\"\nrate = 2.0\n").unwrap();
        assert_eq!(d, ValueDistribution::Exponential { rate: 2.0, q_max: DEFAULT_TRUNCATION });
        let d: ValueDistribution = toml::from_str("kind = \"equal-revenue\"\nlo = 1.0\ncap = 10.0\n").unwrap();
        assert_eq!(d, ValueDistribution::equal_revenue(1.0, 10.0, DEFAULT_EQUAL_REVENUE_SMOOTHING));
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(idx in 0usize..6, u in 0.0f64..1.0) {
            let d = &all_kinds()[idx];
            let v = d.value_at(u);
            let q = u * d.q_max();
            prop_assert!((d.cdf(v) - q).abs() < 1e-9);
        }

        #[test]
        fn virtual_value_bounds(idx in 0usize..6, u in 0.001f64..0.999) {
            let d = &all_kinds()[idx];
            let v = d.value_at(u);
            if let Ok(phi) = d.virtual_value(v) {
                prop_assert!(phi <= v + 1e-12);
                let (p, n) = d.virtual_value_parts(v).unwrap();
                prop_assert_eq!(p + n, phi);
                prop_assert_eq!(p * n, 0.0);
            }
        }

        #[test]
        fn quantile_monotone(idx in 0usize..6, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let d = &all_kinds()[idx];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(d.quantile(lo * d.q_max()).unwrap() <= d.quantile(hi * d.q_max()).unwrap());
        }
    }
}
