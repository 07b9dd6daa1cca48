//! `mrf`: generate data, fit pairwise Markov random fields, and report
//! held-out risk and edge-selection accuracy.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

mod error;
mod fit;
mod gen;
mod io;
mod model;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::fit::FitArgs;
use crate::gen::{with_suffix, GenArgs};
use crate::io::{read_data, read_graph, write_table};
use crate::report::{EvalArgs, RocArgs, ROC_HEADER};

#[derive(Debug, Parser)]
#[command(name = "mrf", version, about = "Sparse pairwise Markov random fields on [0,1]^d")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its true graph
    Gen(GenArgs),
    /// Fit one λ or an automatic λ path
    Fit(FitArgs),
    /// Held-out NLL and Hyvärinen score per fitted λ
    Eval(EvalArgs),
    /// True/false edge rates per fitted λ
    Roc(RocArgs),
    /// Fit a path, evaluate it on held-out data, optionally score edges
    Path(PathArgs),
}

#[derive(Debug, Args)]
struct PathArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// True edge list; adds OUT.roc.csv
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn run_path(a: &PathArgs) -> Result<()> {
    let Some(holdout) = &a.fit.holdout else {
        return Err(CliError::Usage("path needs --holdout".into()));
    };
    if a.fit.lambda.is_some() {
        return Err(CliError::Usage("path fits an automatic λ grid; drop --lambda".into()));
    }
    let model = fit::run(&a.fit)?;
    let eval = EvalArgs {
        model: a.fit.out.clone(),
        data: holdout.clone(),
        out: with_suffix(&a.fit.out, ".eval.csv"),
        bp_tol: a.fit.bp_tol,
        bp_max_iter: a.fit.bp_max_iter,
        n_trees: a.fit.n_trees,
    };
    report::eval_to_csv(&model, &read_data(holdout)?, &eval)?;
    if let Some(t) = &a.truth {
        let truth = read_graph(t, model.d)?;
        write_table(&with_suffix(&a.fit.out, ".roc.csv"), &ROC_HEADER, &report::roc_rows(&model, &truth)?)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Fit(a) => fit::run(a).map(|_| ()),
        Command::Eval(a) => report::run_eval(a),
        Command::Roc(a) => report::run_roc(a),
        Command::Path(a) => run_path(a),
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
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
