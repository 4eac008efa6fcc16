//! `wiggle`: dataset generation, training, identification, trajectory
//! optimization and the evaluation harnesses from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "wiggle", version, about = "Rope identification from wiggles and goal-conditioned rope manipulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// JSON parameter bounds replacing the configured ones.
    #[arg(long, value_name = "PATH")]
    pub bounds: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Nn,
    Cmaes,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Strike,
    Lob,
    Drape,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic datasets.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Trains the regressor on a generated dataset.
    Train(TrainArgs),
    /// Identifies rope parameters from a tracked wiggle.
    Identify(IdentifyArgs),
    /// Optimizes a joint-space plan for a task on a given rope.
    Optimize(OptimizeArgs),
    /// Simulates a rope under the configured wiggle or a plan.
    Simulate(SimulateArgs),
    /// Evaluation harnesses.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Gradient saliency of a trained regressor.
    Saliency(SaliencyArgs),
    /// Wiggle, identify, optimize and execute on one rope.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generates feature files and a manifest.
    Gen(DatasetGenArgs),
}

#[derive(Args)]
pub struct DatasetGenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides the configured rope count.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Validation dataset directory.
    #[arg(long, value_name = "DIR")]
    pub val: Option<PathBuf>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "nn")]
    pub method: MethodArg,
    /// Tracked wiggle as `frame,point,u,v` CSV.
    #[arg(long, value_name = "PATH")]
    pub tracked: PathBuf,
    /// Trained weights (WAGW), needed for `--method nn`.
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
}

#[derive(Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Replaces the configured task with the example of this kind.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Rope parameters as JSON; default: the middle of the bounds.
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rope parameters as JSON; default: the middle of the bounds.
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
    /// Waypoint plan JSON to execute instead of the wiggle.
    #[arg(long, value_name = "PATH")]
    pub plan: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "nn")]
    pub method: MethodArg,
    /// Trained weights (WAGW).
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
}

#[derive(Args)]
pub struct InDomainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained weights (WAGW).
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,
    /// Labelled dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Identify from one motion, compare on another.
    Transfer(EvalArgs),
    /// Strike error with predicted parameters replaced by random ones.
    Importance(EvalArgs),
    /// One regressor per wiggle, compared on shared held-out ropes.
    Wiggles(EvalArgs),
    /// Per-parameter error of a trained regressor.
    Indomain(InDomainArgs),
    /// Tip spread of one plan as each parameter sweeps its range.
    Sensitivity(EvalArgs),
    /// Strike error planning on true, identified and random ropes.
    Full(EvalArgs),
}

#[derive(Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,
    /// Dataset directory whose samples are averaged.
    #[arg(long, value_name = "DIR", conflicts_with = "tracked")]
    pub data: Option<PathBuf>,
    /// Tracked wiggle CSVs.
    #[arg(long, value_name = "PATH", num_args = 1..)]
    pub tracked: Vec<PathBuf>,
}

#[derive(Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "nn")]
    pub method: MethodArg,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    /// Tracked wiggle CSV replacing the simulated observation.
    #[arg(long, value_name = "PATH")]
    pub tracked: Option<PathBuf>,
    /// True rope parameters as JSON; default: the middle of the bounds.
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dataset {
            command: DatasetCommand::Gen(a),
        } => commands::dataset_gen(a),
        Command::Train(a) => commands::train(a),
        Command::Identify(a) => commands::identify(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Eval { command } => match command {
            EvalCommand::Transfer(a) => commands::eval_transfer(a),
            EvalCommand::Importance(a) => commands::eval_importance(a),
            EvalCommand::Wiggles(a) => commands::eval_wiggles(a),
            EvalCommand::Indomain(a) => commands::eval_indomain(a),
            EvalCommand::Sensitivity(a) => commands::eval_sensitivity(a),
            EvalCommand::Full(a) => commands::eval_full(a),
        },
        Command::Saliency(a) => commands::saliency(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_divergence() {
                3
            } else if e.is_validation() {
                2
            } else {
                1
            })
        }
    }
}
