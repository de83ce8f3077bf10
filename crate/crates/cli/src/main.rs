mod commands;
mod error;
mod selftest;
mod signals;
mod svg;
mod table;

use clap::{Parser, Subcommand};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tilebench", version, about = "Time-frequency tile experiments on the discrete torus")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "TILEBENCH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the members of a shifted dyadic grid and check its nesting property.
    Grid(commands::GridArgs),
    /// Weak-type ratios of the Carleson maximal operator over a p grid.
    Carleson(commands::CarlesonArgs),
    /// Embedding ratios of the wave-packet transforms over a p grid.
    Embed(commands::EmbedArgs),
    /// Tail-decay sweep and good/bad split of the multi-frequency decomposition.
    Decompose(commands::DecomposeArgs),
    /// Sparse-bound ratios of the Carleson model form over an epsilon grid.
    SparseCheck(commands::SparseArgs),
    /// Sparse-bound and tree-estimate checks for a rank-1 form from a JSON config.
    Rank1Check(commands::Rank1Args),
    /// Small exhaustive instances checked against independent routes.
    Selftest,
    /// Render a tilebench CSV as a self-contained SVG line plot.
    Report(commands::ReportArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Schema("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Other(e.into()))?;
    }
    match &cli.command {
        Command::Grid(a) => commands::grid(a),
        Command::Carleson(a) => commands::carleson(a),
        Command::Embed(a) => commands::embed(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::SparseCheck(a) => commands::sparse_check(a),
        Command::Rank1Check(a) => commands::rank1_check(a),
        Command::Selftest => selftest::run(),
        Command::Report(a) => commands::report(a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("tilebench: {e}");
        std::process::exit(e.code());
    }
}
