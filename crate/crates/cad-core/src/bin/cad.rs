use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cad", version, about = "Coherence-aware diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a clean dataset, corrupt its labels and write a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Parent directory for the run (overrides `run.out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the configured regime on a simulated run directory.
    Train {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples from a trained checkpoint.
    Sample {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// none | cfg | ca-cfg
        #[arg(long)]
        guidance: Option<String>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        coherence: Option<f64>,
        /// ema | final
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a samples file against held-out clean data.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Samples file name (defaults to the only file in samples/).
        #[arg(long)]
        samples: Option<String>,
        /// Reference dataset CSV (defaults to data/holdout.csv).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sample and evaluate along a guidance or coherence grid.
    Sweep {
        #[arg(long)]
        run: PathBuf,
        /// guidance | coherence (defaults to the config's [sweep] section).
        #[arg(long, default_value = "")]
        axis: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { config, out, seed } => {
            cad_core::cli::cmd_simulate(&config, out.as_deref(), seed).map(|_| ())
        }
        Cmd::Train { run, seed } => cad_core::cli::cmd_train(&run, seed),
        Cmd::Sample {
            run,
            n,
            steps,
            eta,
            guidance,
            omega,
            coherence,
            checkpoint,
            seed,
        } => {
            let opts = cad_core::cli::SampleOpts {
                n,
                steps,
                eta,
                guidance,
                omega,
                coherence,
                checkpoint,
                seed,
            };
            cad_core::cli::cmd_sample(&run, &opts).map(|_| ())
        }
        Cmd::Eval {
            run,
            samples,
            reference,
            k,
        } => cad_core::cli::cmd_eval(&run, samples.as_deref(), reference.as_deref(), k).map(|_| ()),
        Cmd::Sweep { run, axis, grid, seed } => {
            cad_core::cli::cmd_sweep(&run, &axis, &grid, seed).map(|_| ())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
