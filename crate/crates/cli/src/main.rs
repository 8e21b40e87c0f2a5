//! `efe`: verification suites, policy tables and simulated episodes.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use efe_core::envs::{run_episode, DecisionRule, EpisodeLog, EpisodeSettings, Scenario};
use efe_core::planner::{optimal_policy, PlannerMode, PriorVariant};
use efe_core::suite::{model_checks, run_suite, SuiteOptions};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] efe_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "efe",
    version,
    about = "Expected-free-energy planning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification suite and write verify.csv.
    Verify(Common),
    /// Write the per-policy table for the configured model to plan.csv.
    Plan(Common),
    /// Simulate one episode per seed.
    Run(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON); the builtin T-maze when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config and EFE_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<PlannerMode>,
    #[arg(long, value_parser = parse_variant)]
    prior_variant: Option<PriorVariant>,
    /// Repeatable; replaces the configured seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_parser = parse_decision)]
    decision: Option<DecisionRule>,
    /// Steps per episode.
    #[arg(long)]
    steps: Option<usize>,
    /// Double the policy epistemic prior in the identity checks.
    #[arg(long, hide = true)]
    corrupt_policy_prior: bool,
}

fn parse_mode(s: &str) -> std::result::Result<PlannerMode, String> {
    s.parse().map_err(|e: efe_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<PriorVariant, String> {
    s.parse().map_err(|e: efe_core::Error| e.to_string())
}

fn parse_decision(s: &str) -> std::result::Result<DecisionRule, String> {
    s.parse().map_err(|e: efe_core::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(v) = self.prior_variant {
            cfg.prior_variant = v;
        }
        if let Some(d) = self.decision {
            cfg.decision = d;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if self.steps.is_some() {
            cfg.steps = self.steps;
        }
        cfg.validate()?;
        let out = cfg.out_dir(self.out.as_deref());
        std::fs::create_dir_all(&out)?;
        Ok((cfg, out))
    }
}

fn action_labels(s: &Scenario) -> Vec<String> {
    s.file
        .labels
        .as_ref()
        .map(|l| l.actions.clone())
        .unwrap_or_default()
}

fn verify(args: &Common) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let mut rows = run_suite(&SuiteOptions {
        seeds: (0..cfg.verify.suite_seeds).collect(),
        corrupt_policy_prior: args.corrupt_policy_prior,
        theorem: cfg.verify.theorem,
        oracle: cfg.verify.oracle,
    })?;
    if cfg.verify.theorem {
        let s = cfg.scenario()?;
        let pref = s
            .preferences
            .resolve(&s.model)?
            .over_trajectories(&s.model)?;
        rows.extend(model_checks(
            &s.model,
            &pref,
            &cfg.seeds,
            args.corrupt_policy_prior,
        )?);
    }
    let path = out.join("verify.csv");
    output::verify_csv(&rows).write(&path)?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    println!(
        "{} checks, {} failed; wrote {}",
        rows.len(),
        failed.len(),
        path.display()
    );
    match failed.first() {
        None => Ok(()),
        Some(r) => Err(CliError::Check(format!(
            "{} (seed {}): residual {:e} exceeds tolerance {:e}",
            r.check_name, r.seed, r.residual, r.tolerance
        ))),
    }
}

fn plan(args: &Common) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let s = cfg.scenario()?;
    let pref = s
        .preferences
        .resolve(&s.model)?
        .over_trajectories(&s.model)?;
    let result = optimal_policy(&s.model, &pref, cfg.mode, cfg.prior_variant)?;
    let text = output::plan_csv(&result, &action_labels(&s)).into_string();
    let path = out.join("plan.csv");
    std::fs::write(&path, &text)?;
    print!("{text}");
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn episode(
    s: &Scenario,
    settings: EpisodeSettings,
    seed: u64,
    out: &Path,
    labels: &[String],
) -> Result<EpisodeLog> {
    let mut env = s.world.environment(seed)?;
    let log = run_episode(&s.model, &s.preferences, &mut env, settings)?;
    std::fs::write(out.join(format!("episode_seed{seed}.json")), log.to_json()?)?;
    output::episode_csv(&log, labels).write(&out.join(format!("episode_seed{seed}.csv")))?;
    Ok(log)
}

fn run(args: &Common) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let s = cfg.scenario()?;
    let settings = EpisodeSettings {
        mode: cfg.mode,
        variant: cfg.prior_variant,
        decision: cfg.decision,
        steps: cfg.steps.unwrap_or(s.model.horizon()),
    };
    if settings.steps > s.model.horizon() {
        return Err(CliError::Usage(format!(
            "{} steps requested but the model horizon is {}",
            settings.steps,
            s.model.horizon()
        )));
    }
    let labels = action_labels(&s);
    let logs = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let (s, out, labels) = (&s, &out, &labels);
                scope.spawn(move || episode(s, settings, seed, out, labels))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("episode thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    output::summary_csv(&logs).write(&out.join("summary.csv"))?;
    let mut total = 0.0;
    let mut reached = 0;
    for l in &logs {
        total += l.reward_proxy;
        reached += usize::from(l.reached_preferred);
        println!(
            "seed {}: reward_proxy {} reached_preferred {}",
            l.seed, l.reward_proxy, l.reached_preferred
        );
    }
    println!(
        "{} episodes, {reached} reached the preferred state, total reward_proxy {total}",
        logs.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
