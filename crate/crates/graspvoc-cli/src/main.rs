use clap::{Parser, Subcommand};

use graspvoc_cli::{
    run_condition, run_demo, run_eval, run_pipeline, run_rank, run_segment, CliError,
    ConditionArgs, DemoArgs, EvalArgs, PipelineArgs, RankArgs, SegmentArgs,
};

/// Task-aware grasp selection: segment an object point cloud into labeled
/// subparts, condition on a task, rank a precomputed grasp archive, and
/// evaluate predicted grasp regions.
#[derive(Parser)]
#[command(name = "graspvoc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a point cloud into a labeled subpart vocabulary
    Segment(SegmentArgs),
    /// Choose the grasp/task subparts for a task
    Condition(ConditionArgs),
    /// Score and rank a grasp archive against a condition
    Rank(RankArgs),
    /// Compare predicted grasp regions against survey ground truth
    Eval(EvalArgs),
    /// Run segment → condition → rank → eval over a manifest
    Pipeline(PipelineArgs),
    /// Write the bundled synthetic demo workspace (clouds, archives,
    /// fixtures, manifest)
    Demo(DemoArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Segment(args) => run_segment(args),
        Command::Condition(args) => run_condition(args),
        Command::Rank(args) => run_rank(args),
        Command::Eval(args) => run_eval(args),
        Command::Pipeline(args) => run_pipeline(args).map(|_| ()),
        Command::Demo(args) => run_demo(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
