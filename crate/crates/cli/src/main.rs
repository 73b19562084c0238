use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gpvo::pipeline::{self, PipelineConfig, RunInputs, SceneKind, SimulateOptions};
use gpvo::PipelineError;

#[derive(Parser, Debug)]
#[command(name = "gpvo", version, about = "Continuous-time stereo event-camera visual odometry")]
struct Cli {
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scene {
    Lattice,
    Random,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a trajectory from events or tracklets.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "tracklets", required_unless_present = "tracklets")]
        events: Option<PathBuf>,
        #[arg(long)]
        tracklets: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        eval_times: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `ransac.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic event stream, ground truth, evaluation times and config.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "lattice")]
        scene: Scene,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare an estimated TUM trajectory with ground truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        eval_times: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise an event stream and the tracklets built from it.
    Inspect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run {
            config,
            events,
            tracklets,
            gt,
            eval_times,
            out,
            seed,
        } => {
            let mut cfg = PipelineConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.sliding.ransac.seed = s;
            }
            let inputs = RunInputs {
                events,
                tracklets,
                ground_truth: gt,
                eval_times,
            };
            if let Some(report) = pipeline::run(&cfg, &inputs, &out)? {
                println!(
                    "GE max {:.3e} m / {:.3e} rad, RE rms {:.3e}",
                    report.global[0].max, report.global[1].max, report.relative[2].rms
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Simulate {
            out,
            scene,
            duration,
            seed,
        } => {
            let options = SimulateOptions {
                scene: match scene {
                    Scene::Lattice => SceneKind::Lattice,
                    Scene::Random => SceneKind::Random,
                },
                duration,
                seed,
                ..SimulateOptions::default()
            };
            pipeline::simulate(&options, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Evaluate {
            est,
            gt,
            eval_times,
            out,
        } => {
            let report = pipeline::evaluate_files(&est, &gt, eval_times.as_deref(), &out)?;
            println!(
                "GE max {:.3e} m / {:.3e} rad, RE rms {:.3e}",
                report.global[0].max, report.global[1].max, report.relative[2].rms
            );
        }
        Command::Inspect { config, events } => {
            let cfg = PipelineConfig::from_file(&config)?;
            print!("{}", pipeline::inspect(&cfg, &events)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
