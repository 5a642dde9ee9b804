//! Library side of the `fastsvt` binary: argument definitions, run
//! manifests and command execution.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use fastsvt_core::dense::derive_seed;
use fastsvt_core::io;
use fastsvt_core::synth::{self, RatingsSpec};

use args::{BenchArgs, Cli, Command, CompleteArgs, GenerateCommand, ImageArgs, OutputArgs, RatingsArgs, SolverArgs};
use commands::{execute, Invocation, RunReport};
use error::CliError;
use manifest::{Job, RunManifest, SyntheticImage};

/// What a command produced.
#[derive(Debug)]
pub enum Outcome {
    Run(RunReport),
    Generated(Vec<PathBuf>),
}

fn invocation(job: Job, solver: SolverArgs, output: OutputArgs) -> Invocation {
    Invocation {
        job,
        solver,
        out_dir: output.out_dir,
        trace_out: output.trace_out,
        expect: None,
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(path) = cli.manifest {
        let m = RunManifest::load(&path)?;
        let mut inv = Invocation::from_manifest(m, cli.out_dir);
        inv.solver.threads = cli.threads;
        return execute(&inv).map(Outcome::Run);
    }
    let inv = match cli.command {
        None => return Err(CliError::Input("no command given; see --help".into())),
        Some(Command::Generate(g)) => return generate(g).map(Outcome::Generated),
        Some(Command::Complete(CompleteArgs { matrix, solver, output })) => invocation(
            Job::Complete {
                matrix: absolute(matrix),
            },
            solver,
            output,
        ),
        Some(Command::Image(ImageArgs {
            image,
            synthetic,
            size,
            rank,
            fraction,
            solver,
            output,
        })) => invocation(
            Job::Image {
                image: image.map(absolute),
                synthetic: synthetic.then_some(SyntheticImage { size, rank }),
                fraction,
            },
            solver,
            output,
        ),
        Some(Command::Ratings(RatingsArgs {
            ratings,
            separator,
            train_fraction,
            early_stop_patience,
            solver,
            output,
        })) => invocation(
            Job::Ratings {
                ratings: absolute(ratings),
                separator,
                train_fraction,
                early_stop_patience,
            },
            solver,
            output,
        ),
        Some(Command::Bench(BenchArgs {
            sizes,
            backends,
            rank,
            fraction,
            solver,
            output,
        })) => invocation(
            Job::Bench {
                sizes,
                backends,
                rank,
                fraction,
            },
            solver,
            output,
        ),
    };
    execute(&inv).map(Outcome::Run)
}

/// Input paths are recorded absolute so a manifest can be re-run from any
/// working directory.
fn absolute(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn generate(cmd: GenerateCommand) -> Result<Vec<PathBuf>, CliError> {
    let out_err = |path: &PathBuf| {
        let path = path.display().to_string();
        move |source| CliError::Output { path, source }
    };
    match cmd {
        GenerateCommand::Matrix {
            rows,
            cols,
            rank,
            fraction,
            seed,
            out,
            truth,
        } => {
            let full = synth::low_rank_matrix(rows, cols, rank, derive_seed(seed, 0))?;
            let a = synth::sample_uniform(&full, fraction, derive_seed(seed, 1))?;
            io::write_matrix_market(&a, &out).map_err(out_err(&out))?;
            let mut written = vec![out];
            if let Some(t) = truth {
                io::write_dense_array(&full, &t).map_err(out_err(&t))?;
                written.push(t);
            }
            Ok(written)
        }
        GenerateCommand::Image { size, rank, seed, out } => {
            let img = synth::smooth_low_rank_image(size, size, rank, seed)?;
            io::write_pgm(&img, &out).map_err(out_err(&out))?;
            Ok(vec![out])
        }
        GenerateCommand::Ratings {
            users,
            items,
            rank,
            density,
            noise,
            seed,
            separator,
            out,
        } => {
            let spec = RatingsSpec {
                users,
                items,
                rank,
                density,
                noise,
                seed,
            };
            let (ds, _) = synth::synthetic_ratings(&spec)?;
            io::write_ratings(&ds, &out, &separator).map_err(out_err(&out))?;
            Ok(vec![out])
        }
    }
}
