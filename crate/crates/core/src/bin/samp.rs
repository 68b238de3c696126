use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use samp_core::pipeline::{self, GoalKind, PolicyKind, Preset, RunConfig};
use samp_core::Error;
use serde_json::json;

/// Goal-driven stochastic motion synthesis: data generation, training,
/// headless synthesis, evaluation and a live session service.
///
/// Every command prints a JSON summary as its last stdout line. Exit codes:
/// 0 success, 2 configuration error, 3 runtime failure.
#[derive(Parser, Debug)]
#[command(name = "samp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic motion corpus, its statistics and labeled objects.
    Datagen(Common),
    /// Train the motion network with scheduled sampling (checkpoint per epoch).
    TrainMotion(Common),
    /// Train the goal network on labeled objects.
    TrainGoal(Common),
    /// Run one session headless and write its clip and metrics.
    Synth(Common),
    /// Evaluate repeated runs with and without planning.
    Eval(Common),
    /// Serve live sessions over newline-delimited JSON on TCP.
    Serve(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Network and corpus sizes: `tiny` or `full`.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Output directory (dataset, checkpoints, reports live under it).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Training epochs (train-motion, train-goal).
    #[arg(long)]
    epochs: Option<usize>,
    /// Target object id (synth, eval, serve).
    #[arg(long)]
    object: Option<String>,
    /// Target action: `sit` or `liedown` (synth, eval).
    #[arg(long)]
    action: Option<String>,
    /// Motion policy: `model` (trained checkpoint) or `scripted`.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
    /// Goal source: `auto`, `net` or `labeled`.
    #[arg(long, value_parser = parse_goals)]
    goals: Option<GoalKind>,
    /// Scene JSON file (defaults to the built-in blocked-corridor scene).
    #[arg(long, value_name = "FILE")]
    scene: Option<PathBuf>,
    /// Head straight for the goal instead of planning around obstacles.
    #[arg(long)]
    no_planner: bool,
    /// Frame limit of one synthesized run.
    #[arg(long)]
    max_frames: Option<usize>,
    /// Runs per evaluated experiment.
    #[arg(long)]
    runs: Option<usize>,
    /// Listen address for `serve`.
    #[arg(long)]
    bind: Option<String>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown policy `{s}` (expected model or scripted)"))
}

fn parse_goals(s: &str) -> Result<GoalKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown goal source `{s}` (expected auto, net or labeled)"))
}

impl Common {
    fn resolve(&self) -> samp_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.preset {
            cfg.preset = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if self.epochs.is_some() {
            cfg.epochs = self.epochs;
        }
        if let Some(v) = &self.object {
            cfg.object = v.clone();
        }
        if let Some(v) = &self.action {
            cfg.action = v.clone();
        }
        if let Some(v) = self.policy {
            cfg.policy = v;
        }
        if let Some(v) = self.goals {
            cfg.goals = v;
        }
        if self.scene.is_some() {
            cfg.scene = self.scene.clone();
        }
        if self.no_planner {
            cfg.planner = false;
        }
        if let Some(v) = self.max_frames {
            cfg.max_frames = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = &self.bind {
            cfg.bind = v.clone();
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnsupportedAction(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, common) = match &cli.command {
        Command::Datagen(c) => ("datagen", c),
        Command::TrainMotion(c) => ("train-motion", c),
        Command::TrainGoal(c) => ("train-goal", c),
        Command::Synth(c) => ("synth", c),
        Command::Eval(c) => ("eval", c),
        Command::Serve(c) => ("serve", c),
    };
    let result = common.resolve().and_then(|cfg| match &cli.command {
        Command::Datagen(_) => pipeline::datagen(&cfg),
        Command::TrainMotion(_) => pipeline::train_motion(&cfg),
        Command::TrainGoal(_) => pipeline::train_goal(&cfg),
        Command::Synth(_) => pipeline::synth(&cfg),
        Command::Eval(_) => pipeline::eval(&cfg),
        Command::Serve(_) => pipeline::serve(&cfg, |addr| {
            println!("{}", json!({"command": "serve", "listening": addr.to_string()}));
        })
        .map(|()| json!({"command": "serve", "stopped": true})),
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("samp {name}: {e}");
            println!("{}", json!({"command": name, "error": e.to_string(), "exitCode": code}));
            ExitCode::from(code)
        }
    }
}
