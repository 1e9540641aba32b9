//! TOML scenario configs and the solve/cover/bench pipeline that writes CSV and
//! two-column `.dat` outputs.
//!
//! ```toml
//! id = "fpa_uniform_2"
//! seed = 7
//! semantics = "first-price"
//!
//! [environment]
//! kind = "single-item"
//! n = 2
//!
//! [[agents]]
//! distribution = { kind = "uniform", lo = 0.0, hi = 1.0 }
//! reserve = "monopoly"        # or a number; default 0
//! group = "a"                 # optional duplicate-group tag
//!
//! [solver]                    # SolverSettings fields
//! [cover]                     # trials, climb_steps, mode, mu_at_most, ...
//! [bench]                     # samples, myerson, ...
//! [profile]                   # optional fixed profile instead of solving
//! kind = "constant"
//! bids = [1.0, 1.0]
//! ```
//!
//! The top-level `seed` drives the solver, the sampler and the benchmarks.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::Mechanism;
use crate::bench::{self, BenchInput, DuplicatesCheck, Measurement, RatioRow};
use crate::cover::{self, CoverMode, CoveringReport, MuEstimate, ProfileFamily, SamplerSettings};
use crate::dist::ValueDistribution;
use crate::env::{Environment, TieOrder};
use crate::numeric::derive_seed;
use crate::solve::{self, AgentStrategy, RegretReport, SolverSettings, StrategyProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReserveRule {
    Monopoly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reserve {
    Value(f64),
    Rule(ReserveRule),
}

impl Default for Reserve {
    fn default() -> Self {
        Reserve::Value(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub distribution: ValueDistribution,
    #[serde(default)]
    pub reserve: Reserve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// A profile given in the config instead of solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FixedProfile {
    Truthful,
    Scaled { factor: f64 },
    /// One constant bid per agent.
    Constant { bids: Vec<f64> },
    /// CSV with columns `agent,u,value,bid`, as written to `profile.csv`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_mode")]
    pub mode: CoverMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_climb")]
    pub climb_steps: usize,
    #[serde(default = "default_table_nodes")]
    pub table_nodes: usize,
    /// Allocation levels `x'` per value in the equilibrium covering check.
    #[serde(default = "default_x_points")]
    pub x_points: usize,
    #[serde(default = "default_value_points")]
    pub value_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_at_most: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_at_least: Option<f64>,
}

fn yes() -> bool {
    true
}
fn default_mode() -> CoverMode {
    CoverMode::Plain
}
fn default_trials() -> usize {
    SamplerSettings::default().trials
}
fn default_climb() -> usize {
    SamplerSettings::default().climb_steps
}
fn default_table_nodes() -> usize {
    SamplerSettings::default().table_nodes
}
fn default_x_points() -> usize {
    64
}
fn default_value_points() -> usize {
    128
}

impl Default for CoverSettings {
    fn default() -> Self {
        CoverSettings {
            enabled: true,
            mode: default_mode(),
            trials: default_trials(),
            climb_steps: default_climb(),
            table_nodes: default_table_nodes(),
            x_points: default_x_points(),
            value_points: default_value_points(),
            mu_at_most: None,
            mu_at_least: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Compute the optimal revenue (skipped with a note for irregular values).
    #[serde(default = "yes")]
    pub myerson: bool,
    /// Bound parameter when the sampler is off; defaults to the format's known value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

fn default_samples() -> usize {
    200_000
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            enabled: true,
            samples: default_samples(),
            myerson: true,
            mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub semantics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_priority: Option<Vec<usize>>,
    pub environment: Environment,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<FixedProfile>,
    #[serde(default)]
    pub cover: CoverSettings,
    #[serde(default)]
    pub bench: BenchSettings,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config(origin, e.to_string().trim()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(&self.id, e.to_string()))
    }

    pub fn dists(&self) -> Vec<ValueDistribution> {
        self.agents.iter().map(|a| a.distribution.clone()).collect()
    }

    /// Duplicate groups from the agents' group tags, in order of first appearance.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<&str> = Vec::new();
        let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, a) in self.agents.iter().enumerate() {
            if let Some(g) = a.group.as_deref() {
                if !members.contains_key(g) {
                    order.push(g);
                }
                members.entry(g).or_default().push(i);
            }
        }
        order.iter().map(|g| members[g].clone()).collect()
    }

    pub fn reserves(&self) -> Result<Vec<f64>> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| match a.reserve {
                Reserve::Value(r) => Ok(r),
                Reserve::Rule(ReserveRule::Monopoly) => a
                    .distribution
                    .monopoly_reserve()
                    .map_err(|e| Error::config(format!("agents[{i}].reserve"), e.to_string())),
            })
            .collect()
    }

    pub fn monopoly_reserves(&self) -> bool {
        self.agents.iter().all(|a| a.reserve == Reserve::Rule(ReserveRule::Monopoly))
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        let mut m = Mechanism::by_name(&self.semantics, self.environment.clone())
            .map_err(|e| Error::config("semantics", e.to_string()))?
            .with_reserves(self.reserves()?)
            .map_err(|e| Error::config("agents.reserve", e.to_string()))?;
        let groups = self.groups();
        if !groups.is_empty() {
            m = m.with_groups(groups).map_err(|e| Error::config("agents.group", e.to_string()))?;
        }
        if let Some(p) = &self.tie_priority {
            let tie = TieOrder::from_priority(p).map_err(|e| Error::config("tie_priority", e.to_string()))?;
            m = m.with_tie_order(tie).map_err(|e| Error::config("tie_priority", e.to_string()))?;
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::config("id", "must be a nonempty file-name-safe string"));
        }
        if self.agents.is_empty() {
            return Err(Error::config("agents", "at least one agent is required"));
        }
        if self.environment.n() != self.agents.len() {
            return Err(Error::config(
                "environment.n",
                format!("{} agents listed but the environment has {}", self.agents.len(), self.environment.n()),
            ));
        }
        self.environment
            .validate()
            .map_err(|e| Error::config("environment", e.to_string()))?;
        for (i, a) in self.agents.iter().enumerate() {
            a.distribution
                .validate()
                .map_err(|e| Error::config(format!("agents[{i}].distribution"), e.to_string()))?;
        }
        let dists = self.dists();
        for g in self.groups() {
            if g.iter().any(|&a| dists[a] != dists[g[0]]) {
                return Err(Error::config("agents.group", format!("group {g:?} mixes distributions")));
            }
        }
        self.solver.validate().map_err(|e| Error::config("solver", e.to_string()))?;
        if let Some(FixedProfile::Constant { bids }) = &self.profile {
            if bids.len() != self.agents.len() {
                return Err(Error::config("profile.bids", "need one bid per agent"));
            }
        }
        self.mechanism()?;
        Ok(())
    }
}

/// Which parts of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub cover: bool,
    pub bench: bool,
}

impl Stages {
    pub const SOLVE: Stages = Stages { cover: false, bench: false };
    pub const COVER: Stages = Stages { cover: true, bench: false };
    pub const BENCH: Stages = Stages { cover: false, bench: true };
    pub const ALL: Stages = Stages { cover: true, bench: true };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub note: String,
}

impl Assertion {
    fn at_least(name: &str, value: f64, threshold: f64, note: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
            note: note.into(),
        }
    }

    fn at_most(name: &str, value: f64, threshold: f64, note: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub id: String,
    pub profile: StrategyProfile,
    pub regret: RegretReport,
    pub target: f64,
    /// Whether the profile is a certified approximate equilibrium.
    pub certified: bool,
    /// Whether the profile came from the solver.
    pub solved: bool,
    pub covering: Option<CoveringReport>,
    pub mu: Option<MuEstimate>,
    pub measurement: Option<Measurement>,
    pub ratios: Vec<RatioRow>,
    pub duplicates: Option<DuplicatesCheck>,
    pub assertions: Vec<Assertion>,
    /// Checks skipped, with the reason.
    pub skipped: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// 0 pass, 1 assertion failure, 3 solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        if self.solved && !self.certified {
            3
        } else if !self.passed() {
            1
        } else {
            0
        }
    }
}

fn fixed_profile(cfg: &ScenarioConfig, spec: &FixedProfile, dists: &[ValueDistribution]) -> Result<StrategyProfile> {
    let grid = cfg.solver.grid_values;
    match spec {
        FixedProfile::Truthful => Ok(StrategyProfile::truthful(dists, grid)),
        FixedProfile::Scaled { factor } => Ok(StrategyProfile::scaled(dists, grid, *factor)),
        FixedProfile::Constant { bids } => Ok(StrategyProfile::from_fn(dists, grid, |i, _| bids[i])),
        FixedProfile::Csv { path } => read_profile(path, dists.len()),
    }
}

/// Reads `agent,u,value,bid` rows.
pub fn read_profile(path: &Path, n: usize) -> Result<StrategyProfile> {
    let origin = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::config(&origin, e.to_string()))?;
    let mut cols: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vec![Default::default(); n];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(&origin, e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::config(format!("{origin}:{}", line + 2), "expected agent,u,value,bid"))
        };
        let a = field(0)? as usize;
        if a >= n {
            return Err(Error::config(format!("{origin}:{}", line + 2), format!("agent {a} out of range")));
        }
        cols[a].0.push(field(1)?);
        cols[a].1.push(field(2)?);
        cols[a].2.push(field(3)?);
    }
    let agents = cols
        .into_iter()
        .map(|(u, v, b)| AgentStrategy::new(u, v, b))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::config(&origin, e.to_string()))?;
    StrategyProfile::new(agents)
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_dat(path: &Path, header: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# {header}")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(f, "{x} {y}")?;
    }
    f.flush()?;
    Ok(())
}

fn s(x: f64) -> String {
    x.to_string()
}

/// Runs the pipeline for one scenario and writes its outputs under `out/<id>/`.
pub fn run_scenario(cfg: &ScenarioConfig, stages: Stages, out: &Path) -> Result<ScenarioReport> {
    cfg.validate()?;
    let mech = cfg.mechanism()?;
    let dists = cfg.dists();
    let n = dists.len();
    let settings = SolverSettings {
        seed: cfg.seed,
        ..cfg.solver.clone()
    };
    let dir = out.join(&cfg.id);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut assertions = Vec::new();
    let mut skipped = Vec::new();

    let (profile, regret, target, solved) = match &cfg.profile {
        Some(spec) => {
            let p = fixed_profile(cfg, spec, &dists)?;
            let r = solve::regret(&mech, &p, &settings);
            let t = settings.target_regret.unwrap_or_else(|| solve::default_target(&dists));
            (p, r, t, false)
        }
        None => {
            let rep = solve::solve_bne(&mech, &dists, &settings)?;
            (rep.profile, rep.regret, rep.target, true)
        }
    };
    let certified = regret.max <= target;
    log::info!("{}: regret {:.3e} (target {:.1e})", cfg.id, regret.max, target);
    assertions.push(Assertion::at_most(
        "certified-regret",
        regret.max,
        target,
        if solved { "solved profile" } else { "fixed profile" },
    ));

    let path = dir.join("profile.csv");
    write_csv(
        &path,
        ["agent", "u", "value", "bid"],
        profile.agents.iter().enumerate().flat_map(|(i, a)| {
            (0..a.nodes.len()).map(move |k| [i.to_string(), s(a.nodes[k]), s(a.values[k]), s(a.bids[k])])
        }),
    )?;
    files.push(path);
    let rules: Vec<solve::InterimRule> = (0..n)
        .into_par_iter()
        .map(|i| solve::interim_rule(&mech, &profile, i, &settings))
        .collect();
    let path = dir.join("interim.csv");
    write_csv(
        &path,
        ["agent", "u", "value", "bid", "x", "p"],
        rules.iter().flat_map(|r| {
            (0..r.nodes.len())
                .map(move |k| [r.agent.to_string(), s(r.nodes[k]), s(r.values[k]), s(r.bids[k]), s(r.x[k]), s(r.p[k])])
        }),
    )?;
    files.push(path);
    for r in &rules {
        let path = dir.join(format!("bid_{}.dat", r.agent));
        write_dat(&path, "value bid", &r.values, &r.bids)?;
        files.push(path);
        let path = dir.join(format!("allocation_{}.dat", r.agent));
        write_dat(&path, "bid interim-allocation", &r.bid_grid, &r.x_bid)?;
        files.push(path);
    }
    let curves: Vec<cover::ThresholdCurve> = (0..n)
        .into_par_iter()
        .map(|i| cover::threshold_curve(&mech, &profile, i, &settings))
        .collect();
    let path = dir.join("thresholds.csv");
    write_csv(
        &path,
        ["agent", "z", "tau", "reachable"],
        curves.iter().flat_map(|c| {
            (0..c.z.len()).map(move |k| [c.agent.to_string(), s(c.z[k]), s(c.tau[k]), c.reachable[k].to_string()])
        }),
    )?;
    files.push(path);
    for c in &curves {
        let path = dir.join(format!("threshold_{}.dat", c.agent));
        write_dat(&path, "z tau", &c.z, &c.tau)?;
        files.push(path);
    }

    let mut covering = None;
    let mut mu = None;
    if stages.cover && cfg.cover.enabled {
        if certified {
            let rep = cover::covering_in_bne(&mech, &profile, &dists, &settings, cfg.cover.x_points, cfg.cover.value_points)?;
            assertions.push(Assertion::at_least("value-covering-margin", rep.value_margin, -0.01, "normalized by v x'"));
            if rep.virtual_margin.is_finite() {
                assertions.push(Assertion::at_least(
                    "virtual-covering-margin",
                    rep.virtual_margin,
                    -0.01,
                    "normalized by phi+ x'",
                ));
            }
            assertions.push(Assertion::at_least("indifference-gap", rep.indifference_gap, -0.01, "(T - T_hat) / v"));
            covering = Some(rep);
        } else {
            skipped.push("equilibrium covering: profile is not a certified equilibrium".into());
        }
        if cfg.cover.trials > 0 {
            let sampler = SamplerSettings {
                trials: cfg.cover.trials,
                climb_steps: cfg.cover.climb_steps,
                table_nodes: cfg.cover.table_nodes,
                seed: derive_seed(cfg.seed, 1),
            };
            let families: Vec<Arc<dyn ProfileFamily>> = cover::builtin_families();
            let mut est = cover::revenue_covering_mu(&mech, &dists, &families, cfg.cover.mode, &sampler, &settings)?;
            // the scenario's own profile is one more candidate
            let own = cover::evaluate_profile(&mech, &profile, &dists, cfg.cover.mode, &settings);
            if own.ratio > est.mu {
                est.mu = own.ratio;
                est.witness = cover::Witness {
                    family: "scenario-profile".into(),
                    profile: profile.clone(),
                    evaluation: own,
                };
            }
            let path = dir.join("witness.csv");
            cover::write_witness(&path, &est.witness)?;
            files.push(path);
            if let Some(b) = cfg.cover.mu_at_most {
                assertions.push(Assertion::at_most("mu-hat", est.mu, b, format!("{} trials", est.trials)));
            }
            if let Some(b) = cfg.cover.mu_at_least {
                assertions.push(Assertion::at_least("mu-hat-lower", est.mu, b, format!("witness {}", est.witness.family)));
            }
            mu = Some(est);
        }
    }

    let mut measurement = None;
    let mut ratios = Vec::new();
    let mut duplicates = None;
    if stages.bench && cfg.bench.enabled {
        let seed = derive_seed(cfg.seed, 2);
        let m = bench::measure(&mech, &profile, &dists, cfg.bench.samples, seed)?;
        let path = dir.join("measurement.csv");
        let est = |name: &str, e: bench::Estimate| [name.to_string(), s(e.value), s(e.se)];
        write_csv(
            &path,
            ["quantity", "value", "se"],
            [
                est("welfare", m.welfare),
                est("revenue", m.revenue),
                est("rev_plus", m.rev_plus),
                est("rev_minus", m.rev_minus),
                est("identity_gap", m.identity_gap),
                est("optimal_welfare_paired", m.optimal_welfare),
            ],
        )?;
        files.push(path);
        if certified {
            // Rev = REV+ - REV- - sum of lowest-type utilities
            let low: f64 = rules.iter().map(|r| r.values[0] * r.x[0] - r.p[0]).sum();
            let gap = (m.identity_gap.value + low).abs();
            assertions.push(Assertion::at_most(
                "revenue-identity",
                gap,
                3.0 * m.identity_gap.se,
                "|Rev - REV+ + REV-| against 3 SE",
            ));
        } else {
            skipped.push("revenue identity: profile is not a certified equilibrium".into());
        }
        let opt_w = bench::optimal_welfare(&mech.env, &dists, &mech.reserves, cfg.bench.samples, derive_seed(cfg.seed, 3))?;
        let opt_r = if cfg.bench.myerson {
            match bench::myerson_revenue(&mech.env, &dists, cfg.bench.samples, derive_seed(cfg.seed, 4)) {
                Ok(e) => Some(e),
                Err(Error::Irregular(w)) => {
                    skipped.push(format!("optimal revenue: irregular values ({w})"));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        assertions.push(Assertion::at_most(
            "welfare-optimality",
            m.welfare.value,
            opt_w.value + 3.0 * (m.welfare.se + opt_w.se) + 1e-9,
            "equilibrium welfare against the optimum",
        ));
        if let (Some(r), true) = (opt_r, certified) {
            assertions.push(Assertion::at_most(
                "revenue-optimality",
                m.revenue.value,
                r.value + 3.0 * (m.revenue.se + r.se) + 1e-9,
                "equilibrium revenue against the optimum",
            ));
        }
        if mech.duplicate_k().is_some() && certified {
            let d = bench::duplicates_check(&mech, &dists, &m)?;
            assertions.push(Assertion::at_least(
                "duplicates-revenue",
                d.revenue + 3.0 * d.se,
                d.bound,
                format!("Rev + 3 SE against (k-1)/k REV+ with k = {}", d.k),
            ));
            duplicates = Some(d);
        }
        if certified {
            let mu_value = mu
                .as_ref()
                .map(|e| e.mu)
                .filter(|m| m.is_finite())
                .or(cfg.bench.mu)
                .or_else(|| mech.rule.known_mu());
            match mu_value {
                Some(mu_value) => {
                    ratios = bench::poa_report(&[BenchInput {
                        scenario: cfg.id.clone(),
                        measurement: m.clone(),
                        optimal_welfare: opt_w,
                        optimal_revenue: opt_r,
                        mu: mu_value,
                        monopoly_reserves: cfg.monopoly_reserves(),
                        duplicates: mech.duplicate_k(),
                    }]);
                    for r in &ratios {
                        assertions.push(Assertion {
                            name: format!("ratio-{}", r.quantity),
                            value: r.ratio.unwrap_or(f64::NAN),
                            threshold: r.bound,
                            pass: r.pass,
                            note: format!("mu {mu_value}"),
                        });
                    }
                    let path = dir.join("ratios.csv");
                    bench::write_ratio_table(&path, &ratios)?;
                    files.push(path);
                }
                None => skipped.push("ratio table: no revenue-covering parameter for this format".into()),
            }
        } else {
            skipped.push("ratio table: profile is not a certified equilibrium".into());
        }
        measurement = Some(m);
    }

    let path = dir.join("summary.csv");
    write_csv(
        &path,
        ["assertion", "value", "threshold", "pass", "note"],
        assertions
            .iter()
            .map(|a| [a.name.clone(), s(a.value), s(a.threshold), a.pass.to_string(), a.note.clone()])
            .chain(skipped.iter().map(|r| ["skipped".into(), String::new(), String::new(), String::new(), r.clone()])),
    )?;
    files.push(path);

    Ok(ScenarioReport {
        id: cfg.id.clone(),
        profile,
        regret,
        target,
        certified,
        solved,
        covering,
        mu,
        measurement,
        ratios,
        duplicates,
        assertions,
        skipped,
        files,
    })
}

/// Runs independent scenarios concurrently, reporting in input order.
pub fn run_many(cfgs: &[ScenarioConfig], stages: Stages, out: &Path) -> Vec<Result<ScenarioReport>> {
    cfgs.par_iter().map(|c| run_scenario(c, stages, out)).collect()
}
