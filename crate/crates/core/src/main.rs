use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpc_mfrl::harness::{
    ablation_matrix, evaluate_checkpoint, plot_data, resolve_output, run_experiment, run_group, AblationAxis,
    ExperimentConfig, RunOptions, RunSummary, OUTPUT_ROOT_VAR,
};
use mpc_mfrl::Error;

#[derive(Parser)]
#[command(version, about = "Train and evaluate MPC guided by a model-free policy and value function")]
#[command(after_help = format!("Relative output directories are placed under ${OUTPUT_ROOT_VAR} (default `runs`)."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment config over its seeds.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the last checkpoint of each seed.
        #[arg(long)]
        resume: bool,
    },
    /// Re-run the offline evaluation stored in a seed checkpoint directory.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every variant of an ablation axis of a base config.
    Ablate {
        #[arg(long)]
        axis: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Collect all curves under a directory into one long-format CSV.
    PlotData {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn report(summary: &RunSummary) {
    println!("wrote {}", summary.dir.display());
    for (label, curve) in &summary.curves {
        if let Some(p) = curve.last() {
            println!(
                "{label}: best-so-far {:.3} [{:.3}, {:.3}] at {} steps",
                p.mean, p.ci_low, p.ci_high, p.steps
            );
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, seed, resume } => {
            let mut c = ExperimentConfig::load(&config)?;
            if let Some(k) = seed {
                c.seeds = vec![k];
            }
            report(&run_experiment(&c, RunOptions { resume, stop_after: None })?);
        }
        Command::Evaluate { checkpoint } => {
            for r in evaluate_checkpoint(&checkpoint)? {
                let returns: Vec<String> = r.returns.iter().map(|v| format!("{v:.3}")).collect();
                println!("{} seed {} @ {} steps: mean {:.3} ({})", r.label, r.seed, r.steps, r.mean, returns.join(", "));
            }
        }
        Command::Ablate { axis, config, resume } => {
            let axis: AblationAxis = axis.parse()?;
            let base = ExperimentConfig::load(&config)?;
            let configs = ablation_matrix(&base, axis)?;
            let dir = resolve_output(&base.output_dir).join(format!("ablate-{axis}"));
            report(&run_group(&configs, &dir, RunOptions { resume, stop_after: None })?);
        }
        Command::PlotData { runs, out } => {
            let n = plot_data(&runs, &out)?;
            println!("wrote {n} rows to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Numerical(_) => 3,
                _ => 1,
            })
        }
    }
}
