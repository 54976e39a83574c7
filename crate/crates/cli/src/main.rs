use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use pos_finality::attacks::{run_scenario, ScenarioConfig, ScenarioError};
use pos_finality::economics::{self, BetaConvention, EconError, PoWComparison};
use pos_finality::output::{self, ReplayError, RunManifest};
use pos_finality::sweep::{run_sweep, SweepSpec};
use pos_finality::{bundled, NetError, Params, Velocity};

#[derive(Parser)]
#[command(
    name = "posfin",
    version,
    about = "Proof-of-stake finality simulator and staking economics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json, epochs.csv, trace.log and run_info.json.
    Simulate {
        /// Scenario TOML path, or `bundled:<name>`.
        config: String,
        #[arg(long, env = "POSFIN_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the economic formulas.
    Econ {
        #[command(subcommand)]
        formula: Formula,
        /// Print a header row and a value row instead of key=value lines.
        #[arg(long, global = true)]
        csv: bool,
    },
    /// Evaluate a parameter grid; rows come out in grid order.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Scenario for `scenario.*` axes; a path or `bundled:<name>`.
        #[arg(long)]
        config: Option<String>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the scenario recorded in a trace file and compare event by event.
    Replay { trace: PathBuf },
    /// List bundled scenarios.
    Scenarios,
}

#[derive(Subcommand)]
enum Formula {
    /// Reward multiple of ether and its ratio to the proof-of-work benchmark.
    Alpha(BetaArgs),
    /// Per-block discount factor from an annual discount.
    Beta {
        #[arg(long)]
        annual_discount: f64,
        #[arg(long)]
        block_seconds: f64,
    },
    /// Largest attack value deterred by the block reward.
    SafeValue {
        #[arg(long)]
        p_block: f64,
        /// Reward multiple; takes the place of the discount flags.
        #[arg(long, conflicts_with_all = ["beta", "annual_discount", "block_seconds"])]
        alpha: Option<f64>,
        #[command(flatten)]
        beta: BetaArgs,
    },
    EquilibriumStake {
        #[arg(long)]
        p_block: f64,
        #[arg(long)]
        c: f64,
    },
    /// Price of a unit of stake from its per-period cost.
    Price {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        beta: f64,
    },
    Deterrence {
        #[arg(long)]
        p_block: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        v_attack: f64,
        #[arg(long, default_value_t = 0.5)]
        attack_share: f64,
    },
    EquilibriumDeposit {
        #[arg(long)]
        p_block: f64,
        #[arg(long)]
        p_vol: f64,
        #[arg(long)]
        n_total: f64,
    },
    Velocity {
        #[arg(long)]
        demand: f64,
        #[arg(long)]
        velocity: f64,
        #[arg(long)]
        n_total: f64,
        #[arg(long)]
        n_deposit: f64,
        #[arg(long, default_value_t = 0.0)]
        p_vol: f64,
        /// Reads beta off the liquid payoff rate.
        #[arg(long, value_parser = parse_convention, default_value = "direct")]
        convention: BetaConvention,
    },
}

#[derive(Args)]
struct BetaArgs {
    #[arg(long, conflicts_with_all = ["annual_discount", "block_seconds"])]
    beta: Option<f64>,
    #[arg(long, requires = "block_seconds")]
    annual_discount: Option<f64>,
    #[arg(long, requires = "annual_discount")]
    block_seconds: Option<f64>,
}

fn parse_convention(s: &str) -> Result<BetaConvention, String> {
    match s {
        "direct" => Ok(BetaConvention::Direct),
        "discount-rate" => Ok(BetaConvention::DiscountRate),
        _ => Err(format!("expected `direct` or `discount-rate`, got {s:?}")),
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn scenario_failure(e: ScenarioError) -> Failure {
    let code = match &e {
        ScenarioError::Config(_)
        | ScenarioError::Infeasible(_)
        | ScenarioError::WrongStrategy { .. } => 2,
        ScenarioError::Net(NetError::LivelockSuspected { .. }) => 3,
        _ => 4,
    };
    Failure::new(code, e)
}

fn econ_failure(e: EconError) -> Failure {
    let msg = match e.param() {
        Some(p) => format!("--{}: {e}", p.replace('_', "-")),
        None => e.to_string(),
    };
    Failure::new(2, anyhow::anyhow!(msg))
}

fn load_config(spec: &str) -> Result<ScenarioConfig, Failure> {
    let text = match spec.strip_prefix("bundled:") {
        Some(name) => bundled::source(name)
            .ok_or_else(|| Failure::new(2, anyhow::anyhow!("no bundled scenario {name:?}")))?
            .to_string(),
        None => fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?,
    };
    ScenarioConfig::from_toml(&text).map_err(|e| Failure::new(2, anyhow::anyhow!("{spec}: {e}")))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn simulate(config: &str, out_dir: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let started = unix_now();
    let clock = Instant::now();
    let run = run_scenario(&cfg).map_err(scenario_failure)?;
    let elapsed = clock.elapsed();
    info!("{} events in {:?}", run.report.events_processed, elapsed);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(out_dir, "report.json", &output::report_json(&run.report))?;
    write(out_dir, "epochs.csv", &output::epochs_csv(&run.report))?;
    write(out_dir, "trace.log", &output::trace_file(&cfg, &run.trace))?;
    let run_info = serde_json::json!({
        "manifest": RunManifest::for_config(&cfg),
        "started_at_unix": started,
        "finished_at_unix": unix_now(),
        "wall_seconds": elapsed.as_secs_f64(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "outputs": ["report.json", "epochs.csv", "trace.log"],
    });
    write(out_dir, "run_info.json", &output::canonical_json(&run_info))?;

    let r = &run.report;
    println!("scenario: {}", r.scenario);
    println!(
        "conflicting finalizations: {}",
        r.conflicting_finalizations.len()
    );
    println!(
        "merchants accepted/defrauded: {}/{}",
        r.merchants_accepted, r.merchants_defrauded
    );
    println!("attacker stake burned: {}", r.attacker_stake_burned);
    println!("halted epochs: {}", r.finalization_halt_epochs);
    println!("resolution: {}", r.resolution_outcome);
    println!("output: {}", out_dir.display());
    Ok(())
}

fn beta_of(args: &BetaArgs) -> Result<(f64, &'static str), Failure> {
    match (args.beta, args.annual_discount, args.block_seconds) {
        (Some(b), _, _) => Ok((b, "beta")),
        (None, Some(a), Some(s)) => economics::beta_per_block(a, s)
            .map(|b| (b, "annual-discount"))
            .map_err(econ_failure),
        _ => Err(Failure::new(
            2,
            anyhow::anyhow!("--beta, or both --annual-discount and --block-seconds, is required"),
        )),
    }
}

fn inputs(formula: &Formula) -> Vec<(&'static str, f64)> {
    let beta_args = |b: &BetaArgs| {
        [
            ("beta", b.beta),
            ("annual_discount", b.annual_discount),
            ("block_seconds", b.block_seconds),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect::<Vec<_>>()
    };
    match formula {
        Formula::Alpha(b) => beta_args(b),
        Formula::Beta {
            annual_discount,
            block_seconds,
        } => vec![
            ("annual_discount", *annual_discount),
            ("block_seconds", *block_seconds),
        ],
        Formula::SafeValue {
            p_block,
            alpha,
            beta,
        } => {
            let mut v = vec![("p_block", *p_block)];
            v.extend(alpha.map(|a| ("alpha", a)));
            v.extend(beta_args(beta));
            v
        }
        Formula::EquilibriumStake { p_block, c } => vec![("p_block", *p_block), ("c", *c)],
        Formula::Price { c, beta } => vec![("c", *c), ("beta", *beta)],
        Formula::Deterrence {
            p_block,
            c,
            beta,
            v_attack,
            attack_share,
        } => vec![
            ("p_block", *p_block),
            ("c", *c),
            ("beta", *beta),
            ("v_attack", *v_attack),
            ("attack_share", *attack_share),
        ],
        Formula::EquilibriumDeposit {
            p_block,
            p_vol,
            n_total,
        } => vec![
            ("p_block", *p_block),
            ("p_vol", *p_vol),
            ("n_total", *n_total),
        ],
        Formula::Velocity {
            demand,
            velocity,
            n_total,
            n_deposit,
            p_vol,
            ..
        } => vec![
            ("demand", *demand),
            ("velocity", *velocity),
            ("n_total", *n_total),
            ("n_deposit", *n_deposit),
            ("p_vol", *p_vol),
        ],
    }
}

/// Inputs are echoed first; in CSV form their columns carry an `in_` prefix.
fn emit(csv: bool, inputs: &[(&str, f64)], rows: &[(&str, String)]) {
    if csv {
        let keys: Vec<String> = inputs
            .iter()
            .map(|(k, _)| format!("in_{k}"))
            .chain(rows.iter().map(|(k, _)| k.to_string()))
            .collect();
        let vals: Vec<String> = inputs
            .iter()
            .map(|(_, v)| v.to_string())
            .chain(rows.iter().map(|(_, v)| v.clone()))
            .collect();
        println!("{}", keys.join(","));
        println!("{}", vals.join(","));
    } else {
        for (k, v) in inputs {
            println!("# {k}={v}");
        }
        for (k, v) in rows {
            println!("{k}={v}");
        }
    }
}

fn econ(formula: &Formula, csv: bool) -> Result<(), Failure> {
    let s = |x: f64| format!("{x}");
    let rows: Vec<(&str, String)> = match formula {
        Formula::Alpha(b) => {
            let (beta, _) = beta_of(b)?;
            let alpha = economics::alpha_ether(beta).map_err(econ_failure)?;
            let ratio = PoWComparison::default()
                .security_ratio(alpha)
                .map_err(econ_failure)?;
            vec![
                ("beta", s(beta)),
                ("alpha", s(alpha)),
                ("alpha_over_pow", s(ratio)),
            ]
        }
        Formula::Beta {
            annual_discount,
            block_seconds,
        } => {
            let beta = economics::beta_per_block(*annual_discount, *block_seconds)
                .map_err(econ_failure)?;
            vec![("beta", s(beta))]
        }
        Formula::SafeValue {
            p_block,
            alpha,
            beta,
        } => {
            let alpha = match alpha {
                Some(a) => *a,
                None => economics::alpha_ether(beta_of(beta)?.0).map_err(econ_failure)?,
            };
            let v = economics::max_safe_attack_value(*p_block, alpha).map_err(econ_failure)?;
            vec![("alpha", s(alpha)), ("safe_value", s(v))]
        }
        Formula::EquilibriumStake { p_block, c } => {
            vec![(
                "n_star",
                s(economics::equilibrium_stake(*p_block, *c).map_err(econ_failure)?),
            )]
        }
        Formula::Price { c, beta } => {
            vec![(
                "price",
                s(economics::price_from_flow(*c, *beta).map_err(econ_failure)?),
            )]
        }
        Formula::Deterrence {
            p_block,
            c,
            beta,
            v_attack,
            attack_share,
        } => {
            let p = Params::derive_with_attack_share(*p_block, *c, *beta, *v_attack, *attack_share)
                .map_err(econ_failure)?;
            vec![
                ("n_star", s(p.n_star)),
                ("price", s(p.price)),
                ("n_attack", s(p.n_attack)),
                ("attack_cost", s(p.n_attack * p.price)),
                ("alpha", s(p.alpha)),
                ("safe_value", s(p.safe_attack_value())),
                (
                    "deterred_stake_cost",
                    p.deterred_by_stake_cost().to_string(),
                ),
                (
                    "deterred_reward_bound",
                    p.deterred_by_reward_bound().to_string(),
                ),
            ]
        }
        Formula::EquilibriumDeposit {
            p_block,
            p_vol,
            n_total,
        } => {
            let n =
                economics::equilibrium_deposit(*p_block, *p_vol, *n_total).map_err(econ_failure)?;
            vec![("n_deposit", s(n)), ("n_liquid", s(n_total - n))]
        }
        Formula::Velocity {
            demand,
            velocity,
            n_total,
            n_deposit,
            p_vol,
            convention,
        } => {
            let vm = Velocity {
                demand: *demand,
                velocity: *velocity,
                n_total: *n_total,
                n_deposit: *n_deposit,
                p_volatility: *p_vol,
            };
            if vm.n_liquid() < 0.0 {
                return Err(Failure::new(
                    2,
                    anyhow::anyhow!("--n-deposit: exceeds --n-total"),
                ));
            }
            let price = vm.price().map_err(econ_failure)?;
            let r = vm.r_liquid().map_err(econ_failure)?;
            let beta = economics::beta_from_liquid_rate(r, *convention).map_err(econ_failure)?;
            vec![
                ("n_liquid", s(vm.n_liquid())),
                ("price", s(price)),
                ("r_liquid", s(r)),
                ("beta", s(beta)),
            ]
        }
    };
    emit(csv, &inputs(formula), &rows);
    Ok(())
}

fn sweep(spec: &Path, config: Option<&str>, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec = SweepSpec::from_toml(&text).map_err(|e| Failure::new(2, e))?;
    let scenario = config.map(load_config).transpose()?;
    let table = run_sweep(&spec, scenario.as_ref()).map_err(|e| Failure::new(2, e))?;
    let csv = table.to_csv();
    match out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{} rows written to {}", table.rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn replay(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match output::replay(&text) {
        Ok(n) => {
            println!("replay ok: {n} events match");
            Ok(())
        }
        Err(ReplayError::Scenario(e)) => Err(scenario_failure(e)),
        Err(e @ ReplayError::Diverged { .. }) => Err(Failure::new(4, e)),
        Err(e) => Err(Failure::new(2, e)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            config,
            out_dir,
            seed,
        } => simulate(config, out_dir, *seed),
        Command::Econ { formula, csv } => econ(formula, *csv),
        Command::Sweep { spec, config, out } => sweep(spec, config.as_deref(), out.as_deref()),
        Command::Replay { trace } => replay(trace),
        Command::Scenarios => {
            for name in bundled::names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
