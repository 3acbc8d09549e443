//! `stencilpipe`: run, sweep, model and benchmark pipelined Jacobi solvers.

mod commands;
mod error;
mod ranges;
mod run_config;
mod table;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, dist, model, solve, sweep};

#[derive(Parser, Debug)]
#[command(name = "stencilpipe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipelined solver once
    Solve(solve::SolveArgs),
    /// Run the solver over ranges of pipeline parameters
    Sweep(sweep::SweepArgs),
    /// Evaluate the analytical performance models
    Model(model::ModelArgs),
    /// Streaming bandwidth microbenchmarks
    Bench(bench::BenchArgs),
    /// Distributed run with multi-layer halo exchange
    Dist(dist::DistArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Model(a) => model::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Dist(a) => dist::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
