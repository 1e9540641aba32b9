use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auction_covering::reproduce::{ReproduceSettings, ReproductionRegistry};
use auction_covering::scenario::{self, ScenarioConfig, ScenarioReport, Stages};
use auction_covering::Error;
use clap::{Args, Parser, Subcommand};

/// Equilibria, threshold curves and covering checks for single-dimensional auctions.
#[derive(Debug, Parser)]
#[command(name = "auccov", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out_dir`, else `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Value-grid size of the solver; the bid grid is twice as fine.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Revenue-covering sampler trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for an equilibrium and write profile, interim rules and threshold curves.
    Solve { configs: Vec<PathBuf> },
    /// Solve, then run the covering checks and the revenue-covering sampler.
    Cover { configs: Vec<PathBuf> },
    /// Solve, then measure and compare against the optimal benchmarks.
    Bench { configs: Vec<PathBuf> },
    /// Solve, cover and bench.
    Run { configs: Vec<PathBuf> },
    /// Run a named construction and compare with its reference values.
    Reproduce { name: String },
    /// List the available reproductions.
    ListReproductions,
}

const PASS: u8 = 0;
const ASSERTION: u8 = 1;
const CONFIG: u8 = 2;
const NON_CONVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.global.quiet { "error" } else { "warn" }))
        .init();
    let code = match &cli.command {
        Command::Solve { configs } => run(configs, Stages::SOLVE, &cli.global),
        Command::Cover { configs } => run(configs, Stages::COVER, &cli.global),
        Command::Bench { configs } => run(configs, Stages::BENCH, &cli.global),
        Command::Run { configs } => run(configs, Stages::ALL, &cli.global),
        Command::Reproduce { name } => reproduce(name, &cli.global),
        Command::ListReproductions => {
            for r in ReproductionRegistry::builtin().iter() {
                println!("{:<26} {}", r.name(), r.summary());
            }
            PASS
        }
    };
    ExitCode::from(code)
}

fn load(path: &Path, g: &Global) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.grid {
        cfg.solver.grid_values = n;
        cfg.solver.grid_bids = 2 * n;
    }
    if let Some(t) = g.trials {
        cfg.cover.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(paths: &[PathBuf], stages: Stages, g: &Global) -> u8 {
    if paths.is_empty() {
        eprintln!("error: no scenario config given");
        return CONFIG;
    }
    let mut cfgs = Vec::new();
    for p in paths {
        match load(p, g) {
            Ok(c) => cfgs.push(c),
            Err(e) => {
                eprintln!("error: {e}");
                return CONFIG;
            }
        }
    }
    let mut worst = PASS;
    let mut groups: Vec<(PathBuf, Vec<ScenarioConfig>)> = Vec::new();
    for c in cfgs {
        let out = g.out_dir.clone().or_else(|| c.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        match groups.iter_mut().find(|(o, _)| *o == out) {
            Some((_, v)) => v.push(c),
            None => groups.push((out, vec![c])),
        }
    }
    for (out, cfgs) in groups {
        for result in scenario::run_many(&cfgs, stages, &out) {
            let code = match result {
                Ok(rep) => {
                    if !g.quiet || rep.exit_code() != 0 {
                        print_report(&rep, &out);
                    }
                    rep.exit_code() as u8
                }
                Err(e @ Error::Config { .. }) => {
                    eprintln!("error: {e}");
                    CONFIG
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ASSERTION
                }
            };
            worst = worse(worst, code);
        }
    }
    worst
}

/// Config errors outrank non-convergence, which outranks assertion failures.
fn worse(a: u8, b: u8) -> u8 {
    let rank = |c: u8| match c {
        CONFIG => 3,
        NON_CONVERGED => 2,
        ASSERTION => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn print_report(rep: &ScenarioReport, out: &Path) {
    println!(
        "{}: regret {:.3e} (target {:.1e}){}",
        rep.id,
        rep.regret.max,
        rep.target,
        if rep.solved && !rep.certified { " NOT CONVERGED" } else { "" }
    );
    if let Some(m) = &rep.measurement {
        println!(
            "  welfare {:.5} ± {:.1e}  revenue {:.5} ± {:.1e}  REV+ {:.5}  REV- {:.5}",
            m.welfare.value, m.welfare.se, m.revenue.value, m.revenue.se, m.rev_plus.value, m.rev_minus.value
        );
    }
    if let Some(mu) = &rep.mu {
        println!("  {mu}");
    }
    for a in &rep.assertions {
        println!(
            "  {:<4} {:<26} {:>12.6} vs {:>12.6}  {}",
            if a.pass { "ok" } else { "FAIL" },
            a.name,
            a.value,
            a.threshold,
            a.note
        );
    }
    for s in &rep.skipped {
        println!("  skip {s}");
    }
    println!("  outputs in {}", out.join(&rep.id).display());
}

fn reproduce(name: &str, g: &Global) -> u8 {
    let registry = ReproductionRegistry::builtin();
    let r = match registry.get(name) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return CONFIG;
        }
    };
    let mut settings = ReproduceSettings::default();
    if let Some(s) = g.seed {
        settings.seed = s;
    }
    if let Some(t) = g.trials {
        settings.trials = t;
    }
    if let Some(n) = g.grid {
        settings.grid = n;
    }
    let report = match r.run(&settings) {
        Ok(rep) => rep,
        Err(e) => {
            eprintln!("error: {e}");
            return ASSERTION;
        }
    };
    let dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join("reproduce");
    let written = fs::create_dir_all(&dir).map_err(Error::from).and_then(|_| report.write_csv(&dir.join(format!("{name}.csv"))));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return CONFIG;
    }
    if !g.quiet || !report.passed() {
        println!("{name}");
        print!("{report}");
    }
    if report.passed() {
        PASS
    } else {
        ASSERTION
    }
}
