use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fredlab::parallel::{configure_threads, Execution};
use fredlab::runner::{reproduce_paper, run_batch, Format};
use fredlab::scenario::Overrides;

#[derive(Parser)]
#[command(name = "fredlab", version, about = "Fredholm pairs of boundary conditions on circle cylinders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files and write a report.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// csv or json; inferred from the output extension when omitted.
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run the built-in golden scenarios and write a markdown summary.
    ReproducePaper {
        #[arg(long)]
        out: PathBuf,
        /// Run the `*.toml` files of this directory instead of the built-in set.
        #[arg(long)]
        golden_dir: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Args)]
struct EngineArgs {
    /// Window radii, overriding the scenario schedules.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    /// Relative rank threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Required gap ratio between kept and discarded singular values.
    #[arg(long)]
    gap: Option<f64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, env = "FREDLAB_JOBS")]
    jobs: Option<usize>,
}

impl EngineArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            schedule: self.schedule.clone(),
            rank_tau: self.tau,
            gap_ratio: self.gap,
        }
    }

    fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            Some(0) | None => Execution::default(),
            Some(n) => {
                configure_threads(n);
                Execution::default()
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run {
            files,
            out,
            format,
            engine,
        } => {
            let format = format.unwrap_or_else(|| {
                if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    Format::Json
                } else {
                    Format::Csv
                }
            });
            run_batch(&files, &out, format, &engine.overrides(), engine.execution())
        }
        Command::ReproducePaper {
            out,
            golden_dir,
            engine,
        } => reproduce_paper(&out, golden_dir.as_deref(), &engine.overrides(), engine.execution()),
    };
    ExitCode::from(status as u8)
}
