//! Payment rules layered on feasibility environments.
//!
//! Each rule implements [`PaymentRule`] and is registered by name in a
//! [`SemanticsRegistry`]; a [`Mechanism`] picks its rule at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::env::{Allocation, Environment, TieOrder};
use crate::numeric::adaptive_simpson;
use crate::{Error, Result};

/// How served (and unserved) bidders are charged.
pub trait PaymentRule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Rejects environments the rule is not defined on.
    fn check_environment(&self, env: &Environment) -> Result<()> {
        let _ = env;
        Ok(())
    }

    /// Ex-post payments. `active` marks bidders at or above their reserve.
    fn payments(&self, mech: &Mechanism, bids: &[f64], active: u64, alloc: &Allocation) -> Vec<f64>;

    /// Interim payment of a participating bid `b` with interim allocation `x_at_bid`;
    /// `xt` evaluates the interim allocation at other bids.
    fn interim_payment(&self, b: f64, x_at_bid: f64, reserve: f64, xt: &dyn Fn(f64) -> f64) -> f64;

    /// Revenue-covering constant proven for the rule, if any.
    fn known_mu(&self) -> Option<f64>;

    /// Whether overbidding one's value is dominated (first-price style rules).
    fn bids_bounded_by_value(&self) -> bool {
        true
    }

    /// Bid that yields interim payment `p` at interim allocation `x` for an agent
    /// with the given value. The default is a pay-your-bid-when-served rule.
    fn bid_for_interim(&self, value: f64, x: f64, p: f64) -> f64 {
        let _ = value;
        if x > 0.0 {
            p / x
        } else {
            0.0
        }
    }
}

#[derive(Debug, Default)]
pub struct FirstPrice;

impl PaymentRule for FirstPrice {
    fn name(&self) -> &'static str {
        "first-price"
    }

    fn check_environment(&self, env: &Environment) -> Result<()> {
        if let Environment::Positions { .. } = env {
            return Err(Error::InvalidParameter(
                "first-price semantics on positions is generalized-first-price".into(),
            ));
        }
        Ok(())
    }

    fn payments(&self, _mech: &Mechanism, bids: &[f64], _active: u64, alloc: &Allocation) -> Vec<f64> {
        bids.iter().zip(&alloc.x).map(|(b, x)| b * x).collect()
    }

    fn interim_payment(&self, b: f64, x_at_bid: f64, _reserve: f64, _xt: &dyn Fn(f64) -> f64) -> f64 {
        b * x_at_bid
    }

    fn known_mu(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[derive(Debug, Default)]
pub struct AllPay;

impl PaymentRule for AllPay {
    fn name(&self) -> &'static str {
        "all-pay"
    }

    fn check_environment(&self, env: &Environment) -> Result<()> {
        if let Environment::Positions { .. } = env {
            return Err(Error::InvalidParameter("all-pay semantics needs a single-item or matroid environment".into()));
        }
        Ok(())
    }

    fn payments(&self, _mech: &Mechanism, bids: &[f64], active: u64, _alloc: &Allocation) -> Vec<f64> {
        bids.iter()
            .enumerate()
            .map(|(i, &b)| if active & (1u64 << i) != 0 { b } else { 0.0 })
            .collect()
    }

    fn interim_payment(&self, b: f64, _x_at_bid: f64, _reserve: f64, _xt: &dyn Fn(f64) -> f64) -> f64 {
        b
    }

    fn known_mu(&self) -> Option<f64> {
        Some(2.0)
    }

    fn bids_bounded_by_value(&self) -> bool {
        false
    }

    fn bid_for_interim(&self, _value: f64, _x: f64, p: f64) -> f64 {
        p
    }
}

#[derive(Debug, Default)]
pub struct SecondPrice;

impl PaymentRule for SecondPrice {
    fn name(&self) -> &'static str {
        "second-price"
    }

    fn check_environment(&self, env: &Environment) -> Result<()> {
        match env {
            Environment::SingleItem { .. } => Ok(()),
            _ => Err(Error::InvalidParameter("second-price semantics needs a single-item environment".into())),
        }
    }

    fn payments(&self, mech: &Mechanism, bids: &[f64], active: u64, alloc: &Allocation) -> Vec<f64> {
        let mut p = vec![0.0; bids.len()];
        for i in alloc.served() {
            let thr = mech.env.threshold_bids(bids, active, i, &mech.tie_order)[0].value;
            p[i] = thr.max(mech.reserves[i]);
        }
        p
    }

    fn interim_payment(&self, b: f64, x_at_bid: f64, reserve: f64, xt: &dyn Fn(f64) -> f64) -> f64 {
        if b <= reserve {
            return b * x_at_bid;
        }
        let area = adaptive_simpson(&|t| xt(t), reserve, b, 1e-10 * b.max(1.0), 30);
        (b * x_at_bid - area).max(0.0)
    }

    fn known_mu(&self) -> Option<f64> {
        None
    }

    fn bid_for_interim(&self, value: f64, _x: f64, _p: f64) -> f64 {
        value
    }
}

#[derive(Debug, Default)]
pub struct GeneralizedFirstPrice;

impl PaymentRule for GeneralizedFirstPrice {
    fn name(&self) -> &'static str {
        "generalized-first-price"
    }

    fn check_environment(&self, env: &Environment) -> Result<()> {
        match env {
            Environment::Positions { .. } => Ok(()),
            _ => Err(Error::InvalidParameter(
                "generalized-first-price semantics needs a positions environment".into(),
            )),
        }
    }

    fn payments(&self, _mech: &Mechanism, bids: &[f64], _active: u64, alloc: &Allocation) -> Vec<f64> {
        // slot weight times bid
        bids.iter().zip(&alloc.x).map(|(b, x)| b * x).collect()
    }

    fn interim_payment(&self, b: f64, x_at_bid: f64, _reserve: f64, _xt: &dyn Fn(f64) -> f64) -> f64 {
        b * x_at_bid
    }

    fn known_mu(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Name-indexed collection of payment rules.
#[derive(Debug, Clone, Default)]
pub struct SemanticsRegistry {
    rules: BTreeMap<&'static str, Arc<dyn PaymentRule>>,
}

impl SemanticsRegistry {
    pub fn empty() -> Self {
        SemanticsRegistry::default()
    }

    pub fn builtin() -> Self {
        let mut r = SemanticsRegistry::empty();
        r.register(Arc::new(FirstPrice));
        r.register(Arc::new(AllPay));
        r.register(Arc::new(SecondPrice));
        r.register(Arc::new(GeneralizedFirstPrice));
        r
    }

    pub fn register(&mut self, rule: Arc<dyn PaymentRule>) {
        self.rules.insert(rule.name(), rule);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PaymentRule>> {
        self.rules.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "payment semantics",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.rules.keys().copied().collect()
    }
}

/// Ex-post result of running a mechanism on a bid profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
}

impl Outcome {
    pub fn x(&self) -> &[f64] {
        &self.allocation.x
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn welfare(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.allocation.x).map(|(v, x)| v * x).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Mechanism {
    pub rule: Arc<dyn PaymentRule>,
    pub env: Environment,
    /// Bid-space reserve per agent; bids strictly below withdraw.
    pub reserves: Vec<f64>,
    /// Duplicate groups: at most one member of a group can be served.
    pub groups: Vec<Vec<usize>>,
    pub tie_order: TieOrder,
}

impl Mechanism {
    pub fn new(rule: Arc<dyn PaymentRule>, env: Environment) -> Result<Self> {
        let n = env.n();
        let m = Mechanism {
            rule,
            env,
            reserves: vec![0.0; n],
            groups: Vec::new(),
            tie_order: TieOrder::index_order(n),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn by_name(semantics: &str, env: Environment) -> Result<Self> {
        Mechanism::new(SemanticsRegistry::builtin().get(semantics)?, env)
    }

    pub fn with_reserves(mut self, reserves: Vec<f64>) -> Result<Self> {
        self.reserves = reserves;
        self.validate()?;
        if self.rule.name() == "all-pay" && self.reserves.iter().any(|&r| r > 0.0) {
            static ONCE: std::sync::Once = std::sync::Once::new();
            ONCE.call_once(|| {
                log::warn!("all-pay reserves are not reliably implementable; bids below them are treated as withdrawals")
            });
        }
        Ok(self)
    }

    pub fn with_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        self.groups = groups;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tie_order(mut self, tie: TieOrder) -> Result<Self> {
        self.tie_order = tie;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.env.n()
    }

    pub fn name(&self) -> &'static str {
        self.rule.name()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.rule.check_environment(&self.env)?;
        let n = self.n();
        if self.reserves.len() != n {
            return Err(Error::InvalidParameter(format!("expected {n} reserves, got {}", self.reserves.len())));
        }
        if self.reserves.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("reserves must be finite and >= 0: {:?}", self.reserves)));
        }
        if self.tie_order.len() != n {
            return Err(Error::InvalidParameter(format!("tie order must rank all {n} agents")));
        }
        let mut seen = vec![false; n];
        for g in &self.groups {
            if g.len() < 2 {
                return Err(Error::InvalidParameter(format!("duplicate group {g:?} needs at least two agents")));
            }
            for &a in g {
                if a >= n || seen[a] {
                    return Err(Error::InvalidParameter(format!(
                        "duplicate group {g:?} names an unknown or repeated agent"
                    )));
                }
                seen[a] = true;
            }
            for (k, &a) in g.iter().enumerate() {
                for &b in &g[k + 1..] {
                    if self.env.can_serve_together(a, b) {
                        return Err(Error::InvalidParameter(format!(
                            "duplicate group {g:?}: agents {a} and {b} can both be served"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest size of any duplicate group (`None` without groups).
    pub fn duplicate_k(&self) -> Option<usize> {
        self.groups.iter().map(|g| g.len()).min()
    }

    pub fn withdraws(&self, i: usize, bid: f64) -> bool {
        bid < self.reserves[i]
    }

    /// Bitmask of bidders at or above their reserve.
    pub fn active_mask(&self, bids: &[f64]) -> u64 {
        bids.iter()
            .enumerate()
            .filter(|&(i, &b)| !self.withdraws(i, b))
            .fold(0u64, |m, (i, _)| m | (1u64 << i))
    }

    pub fn outcome(&self, bids: &[f64]) -> Result<Outcome> {
        let n = self.n();
        if bids.len() != n {
            return Err(Error::InvalidParameter(format!("expected {n} bids, got {}", bids.len())));
        }
        for (agent, &bid) in bids.iter().enumerate() {
            if !(bid >= 0.0) {
                return Err(Error::NegativeBid { agent, bid });
            }
        }
        Ok(self.outcome_unchecked(bids))
    }

    /// [`Mechanism::outcome`] without input validation, for inner loops.
    pub fn outcome_unchecked(&self, bids: &[f64]) -> Outcome {
        let active = self.active_mask(bids);
        let allocation = self.env.allocate(bids, active, &self.tie_order);
        let payments = self.rule.payments(self, bids, active, &allocation);
        Outcome { allocation, payments }
    }
}

/// Price per unit of allocation, `p / x`.
pub fn equivalent_bid(x: f64, p: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::ZeroAllocation);
    }
    Ok(p / x)
}
