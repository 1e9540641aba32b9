//! End-to-end acceptance checks, one line per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use auction_covering::auction::Mechanism;
use auction_covering::bench;
use auction_covering::dist::ValueDistribution;
use auction_covering::env::{Environment, TieOrder};
use auction_covering::reproduce::{reproduce, ReproduceSettings};
use auction_covering::scenario::{run_scenario, ScenarioConfig, ScenarioReport, Stages};
use auction_covering::solve::{
    default_target, interim_rule, payment_identity_residual, solve_bne, solve_from, SolverSettings, StrategyProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_configs() -> Vec<ScenarioConfig> {
    let mut paths: Vec<PathBuf> = fs::read_dir(configs_dir())
        .expect("configs directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ScenarioConfig::load(p).expect("valid config")).collect()
}

/// Every config run once through the full pipeline, shared by several criteria.
fn suite() -> &'static Result<BTreeMap<String, ScenarioReport>, String> {
    static SUITE: OnceLock<Result<BTreeMap<String, ScenarioReport>, String>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut out = BTreeMap::new();
        for cfg in load_configs() {
            let rep = run_scenario(&cfg, Stages::ALL, dir.path()).map_err(|e| format!("{}: {e}", cfg.id))?;
            out.insert(cfg.id.clone(), rep);
        }
        Ok(out)
    })
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform_pair() -> Vec<ValueDistribution> {
    vec![ValueDistribution::uniform(0.0, 1.0); 2]
}

fn symmetric_sanity(semantics: &str, oracle: fn(f64) -> f64, with_identity: bool) -> Outcome {
    let dists = uniform_pair();
    let mech = Mechanism::by_name(semantics, Environment::single_item(2)).map_err(|e| e.to_string())?;
    let settings = SolverSettings::default();
    let start = Instant::now();
    let rep = solve_bne(&mech, &dists, &settings).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut sup: f64 = 0.0;
    for a in &rep.profile.agents {
        for (v, b) in a.values.iter().zip(&a.bids) {
            sup = sup.max((b - oracle(*v)).abs());
        }
    }
    let mut residual: f64 = 0.0;
    for i in 0..2 {
        residual = residual.max(payment_identity_residual(&interim_rule(&mech, &rep.profile, i, &settings)));
    }
    let regret = rep.regret.max;
    // the same equilibrium reached by iterating from truthful bids
    let cold = solve_from(
        &mech,
        StrategyProfile::truthful(&dists, settings.grid_values),
        &settings,
        default_target(&dists),
    )
    .map_err(|e| e.to_string())?;
    let mut cold_sup: f64 = 0.0;
    for a in &cold.profile.agents {
        for (v, b) in a.values.iter().zip(&a.bids) {
            cold_sup = cold_sup.max((b - oracle(*v)).abs());
        }
    }
    let detail = format!(
        "sup|b - b*| {sup:.4} (<= 0.02), from truthful start {cold_sup:.4} after {} iterations, regret {regret:.2e}, identity residual {residual:.2e}, {secs:.2} s",
        cold.iterations
    );
    let ok = sup <= 0.02
        && cold_sup <= 0.02
        && (!with_identity || (regret <= 1e-3 && residual <= 1e-3 && secs < 10.0));
    check(ok, detail)
}

fn c1() -> Outcome {
    symmetric_sanity("first-price", |v| v / 2.0, true)
}

fn c2() -> Outcome {
    symmetric_sanity("all-pay", |v| v * v / 2.0, false)
}

fn reproduction(names: &[&str]) -> Outcome {
    let settings = ReproduceSettings::default();
    if settings.trials < 1000 {
        return Err(format!("only {} sampler trials", settings.trials));
    }
    let mut lines = Vec::new();
    let mut ok = true;
    for name in names {
        let rep = reproduce(name, &settings).map_err(|e| format!("{name}: {e}"))?;
        ok &= rep.passed();
        for r in &rep.rows {
            lines.push(format!(
                "{name}/{} {:.4} vs {:.4}{}",
                r.quantity,
                r.computed,
                r.reference,
                if r.pass { "" } else { " FAIL" }
            ));
        }
    }
    check(ok, lines.join("; "))
}

fn c3() -> Outcome {
    reproduction(&["fpa-poa-115"])
}

fn c4() -> Outcome {
    reproduction(&["revenue-gap-2"])
}

fn c5() -> Outcome {
    reproduction(&["mu-fpa", "mu-allpay", "mu-gfp"])
}

fn c6() -> Outcome {
    reproduction(&["spa-violation"])
}

const COVER_SUITE: [&str; 6] = [
    "fpa_asymmetric",
    "fpa_asymmetric_reserve",
    "allpay_uniform_2",
    "allpay_reserve",
    "gfp_3x2",
    "gfp_3x2_reserve",
];

fn c7() -> Outcome {
    let reports = suite().as_ref().map_err(Clone::clone)?;
    let mut value = f64::INFINITY;
    let mut virt = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut used = 0;
    for id in COVER_SUITE {
        let rep = reports.get(id).ok_or(format!("missing scenario {id}"))?;
        if !rep.certified {
            return Err(format!("{id}: regret {:.2e} above target {:.2e}", rep.regret.max, rep.target));
        }
        let cov = rep.covering.as_ref().ok_or(format!("{id}: no covering report"))?;
        value = value.min(cov.value_margin);
        virt = virt.min(cov.virtual_margin);
        gap = gap.min(cov.indifference_gap);
        used += 1;
    }
    check(
        used >= 6 && value >= -0.01 && virt >= -0.01 && gap >= -0.01,
        format!("{used} scenarios, min value margin {value:.4}, min virtual margin {virt:.4}, min T - T_hat {gap:.4} (all >= -0.01)"),
    )
}

fn c8() -> Outcome {
    let reports = suite().as_ref().map_err(Clone::clone)?;
    let mut rows = 0;
    let mut failed = Vec::new();
    for rep in reports.values() {
        for r in &rep.ratios {
            rows += 1;
            if !r.pass {
                failed.push(format!("{}/{} {:?} > {:.4}", r.scenario, r.quantity, r.ratio, r.bound));
            }
        }
    }
    let mono = reports.get("fpa_monopoly").ok_or("missing scenario fpa_monopoly")?;
    let row = mono
        .ratios
        .iter()
        .find(|r| r.quantity == "revenue")
        .ok_or("fpa_monopoly: no revenue row")?;
    let e = std::f64::consts::E;
    let floor = (e - 1.0) / (2.0 * e) - 0.02;
    let fraction = row.equilibrium / row.benchmark;
    let ok = failed.is_empty() && rows > 0 && fraction >= floor;
    check(
        ok,
        format!(
            "{rows} ratio rows within bound{}; monopoly-reserve revenue fraction {fraction:.4} (>= {floor:.4})",
            if failed.is_empty() { String::new() } else { format!(", violations: {}", failed.join(", ")) }
        ),
    )
}

fn c9() -> Outcome {
    let reports = suite().as_ref().map_err(Clone::clone)?;
    let dup = reports
        .get("fpa_duplicates")
        .and_then(|r| r.duplicates.clone())
        .ok_or("fpa_duplicates: no duplicates check")?;
    let mut identity = 0;
    let mut failed = Vec::new();
    for rep in reports.values() {
        if !(rep.solved && rep.certified) {
            continue;
        }
        match rep.assertions.iter().find(|a| a.name == "revenue-identity") {
            Some(a) => {
                identity += 1;
                if !a.pass {
                    failed.push(format!("{} gap {:.2e} > {:.2e}", rep.id, a.value, a.threshold));
                }
            }
            None => failed.push(format!("{}: identity not measured", rep.id)),
        }
    }
    let ok = dup.k == 2 && dup.revenue + 3.0 * dup.se >= dup.bound && failed.is_empty() && identity > 0;
    check(
        ok,
        format!(
            "k = {}, Rev {:.4} + 3 SE {:.4} vs REV+/2 {:.4}; identity within 3 SE on {identity} scenarios{}",
            dup.k,
            dup.revenue,
            3.0 * dup.se,
            dup.bound,
            if failed.is_empty() { String::new() } else { format!(", failures: {}", failed.join(", ")) }
        ),
    )
}

/// Random matroid with an independent independence oracle.
struct Oracle {
    env: Environment,
    indep: Vec<bool>,
    rank: Vec<u32>,
}

impl Oracle {
    fn new(env: Environment, n: usize, indep: impl Fn(u64) -> bool) -> Self {
        let size = 1usize << n;
        let indep: Vec<bool> = (0..size as u64).map(indep).collect();
        let mut rank = vec![0u32; size];
        for s in 1..size {
            rank[s] = if indep[s] {
                (s as u64).count_ones()
            } else {
                (0..n).filter(|e| s >> e & 1 == 1).map(|e| rank[s & !(1 << e)]).max().unwrap_or(0)
            };
        }
        Oracle { env, indep, rank }
    }

    fn spans(&self, set: usize, i: usize) -> bool {
        self.rank[set | 1 << i] == self.rank[set]
    }
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> Oracle {
    let k = rng.gen_range(1..=n.min(4));
    let part_of: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (a, &p) in part_of.iter().enumerate() {
        parts[p].push(a);
    }
    parts.retain(|p| !p.is_empty());
    let caps: Vec<usize> = parts.iter().map(|p| rng.gen_range(0..=p.len())).collect();
    let env = Environment::partition(n, parts.clone(), caps.clone());
    Oracle::new(env, n, |m| {
        parts
            .iter()
            .zip(&caps)
            .all(|(p, &c)| p.iter().filter(|&&a| m >> a & 1 == 1).count() <= c)
    })
}

/// Graphic matroid of a random multigraph; self-loops give loop elements.
fn random_graphic(rng: &mut ChaCha8Rng, n: usize) -> Oracle {
    let verts = rng.gen_range(2..=5);
    let edges: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(0..verts), rng.gen_range(0..verts))).collect();
    let forest = |m: u64| {
        let mut parent: Vec<usize> = (0..verts).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            if m >> e & 1 == 1 {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra == rb {
                    return false;
                }
                parent[ra] = rb;
            }
        }
        true
    };
    let sets: Vec<Vec<usize>> = (0..1u64 << n)
        .filter(|&m| forest(m))
        .map(|m| (0..n).filter(|e| m >> e & 1 == 1).collect())
        .collect();
    Oracle::new(Environment::explicit(n, sets), n, forest)
}

fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut pairs = 0usize;
    for trial in 0..200 {
        let n = rng.gen_range(1..=10);
        let o = if trial % 2 == 0 { random_partition(&mut rng, n) } else { random_graphic(&mut rng, n) };
        let tie = TieOrder::index_order(n);
        for _ in 0..5 {
            let bids: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let weight = |m: usize| (0..n).filter(|&a| m >> a & 1 == 1).map(|a| bids[a]).sum::<f64>();
            let best = (0..1usize << n).filter(|&m| o.indep[m]).map(weight).fold(0.0, f64::max);
            let alloc = o.env.max_weight_allocation(&bids, &tie).map_err(|e| e.to_string())?;
            let served: usize = alloc.served().iter().map(|a| 1 << a).sum();
            let got = weight(served);
            if !o.indep[served] || (got - best).abs() > 1e-12 {
                return Err(format!("trial {trial}: greedy weight {got} vs brute force {best}"));
            }
            let mut thresholds = vec![0.0; n];
            for i in 0..n {
                let mut candidates: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| bids[j]).collect();
                candidates.push(0.0);
                candidates.sort_by(f64::total_cmp);
                let expected = candidates
                    .into_iter()
                    .find(|&c| {
                        let above: usize = (0..n).filter(|&j| j != i && bids[j] > c).map(|j| 1 << j).sum();
                        !o.spans(above, i)
                    })
                    .unwrap_or(f64::INFINITY);
                let got = o.env.threshold_bid(&bids, i, &tie).map_err(|e| e.to_string())?.value;
                if got != expected {
                    return Err(format!("trial {trial}: agent {i} threshold {got} vs brute force {expected}"));
                }
                thresholds[i] = got;
            }
            for alt in (0..1usize << n).filter(|&m| o.indep[m]) {
                let mass: f64 = (0..n).filter(|&a| alt >> a & 1 == 1).map(|a| thresholds[a]).sum();
                pairs += 1;
                if mass > got + 1e-12 {
                    return Err(format!("trial {trial}: thresholds {mass} exceed winning bids {got}"));
                }
            }
        }
    }
    Ok(format!("200 matroids x 5 bid profiles: greedy and thresholds exact, {pairs} (bids, x') pairs covered"))
}

/// Midpoint rule on an `m x m` grid of two independent uniform(0,1) values.
fn grid_mean(m: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / m as f64;
    let mut total = 0.0;
    for a in 0..m {
        let x = (a as f64 + 0.5) * h;
        for b in 0..m {
            total += f(x, (b as f64 + 0.5) * h);
        }
    }
    total * h * h
}

fn c11() -> Outcome {
    let dists = uniform_pair();
    let env = Environment::single_item(2);
    let rev = bench::myerson_revenue(&env, &dists, 200_000, 11).map_err(|e| e.to_string())?;
    let wel = bench::optimal_welfare(&env, &dists, &[0.0, 0.0], 200_000, 11).map_err(|e| e.to_string())?;
    let rev_oracle = grid_mean(2000, |a, b| (2.0 * a - 1.0).max(2.0 * b - 1.0).max(0.0));
    let wel_oracle = grid_mean(2000, f64::max);
    let ok = [(rev.value, 5.0 / 12.0), (rev_oracle, 5.0 / 12.0), (wel.value, 2.0 / 3.0), (wel_oracle, 2.0 / 3.0)]
        .iter()
        .all(|(x, r)| (x - r).abs() <= 0.005);
    check(
        ok,
        format!(
            "revenue {:.5} (grid {rev_oracle:.5}, 5/12 = {:.5}); welfare {:.5} (grid {wel_oracle:.5}, 2/3 = {:.5})",
            rev.value,
            5.0 / 12.0,
            wel.value,
            2.0 / 3.0
        ),
    )
}

fn c12() -> Outcome {
    let cfg = ScenarioConfig::load(&configs_dir().join("fpa_asymmetric_reserve.toml")).map_err(|e| e.to_string())?;
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = run_scenario(&cfg, Stages::ALL, a.path()).map_err(|e| e.to_string())?;
    run_scenario(&cfg, Stages::ALL, b.path()).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for f in &ra.files {
        let rel = f.strip_prefix(a.path()).map_err(|e| e.to_string())?;
        let x = fs::read(f).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(rel)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs between runs", rel.display()));
        }
        compared += 1;
    }
    check(compared > 0, format!("{compared} output files byte-identical across two runs with seed {}", cfg.seed))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("symmetric first-price equilibrium", c1),
        ("symmetric all-pay equilibrium", c2),
        ("first-price anarchy construction", c3),
        ("revenue gap construction", c4),
        ("revenue-covering estimates", c5),
        ("second-price refutation", c6),
        ("covering in equilibrium", c7),
        ("ratio bounds", c8),
        ("duplicates and revenue identity", c9),
        ("matroid oracles", c10),
        ("optimal benchmarks", c11),
        ("determinism", c12),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name} [{:.1} s]: {detail}", k + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
