use std::path::PathBuf;

use clap::{Parser, Subcommand};

use tracelab_cli::commands::{self, CliError, Strategy};
use tracelab_cli::output::resolve_out;

/// Deterministic IP traceback experiments: probabilistic packet marking,
/// hash-based digests, and the link-testing strategies that preceded
/// them. Same seed, same bytes.
#[derive(Parser)]
#[command(name = "tracelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate mark survival per distance, analytic and Monte-Carlo
    MarkProb {
        /// Marking probabilities to tabulate
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        p_grid: Vec<f64>,
        /// Path length in routers
        #[arg(long, default_value_t = 6)]
        hops: u32,
        /// Simulated packets per probability
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file [default: $TRACELAB_OUT_DIR/mark-prob.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the marking-probability threshold curve p*(n)
    Threshold {
        /// Largest path length to tabulate
        #[arg(long, default_value_t = 25)]
        hops: u32,
        /// Chance that a path of each length delivers at least one mark
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        /// Output file [default: $TRACELAB_OUT_DIR/threshold.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure packets-to-convergence over hop counts and probabilities
    Convergence {
        /// Hop counts to sweep
        #[arg(long, value_delimiter = ',', default_value = "3,6,9,12,15,18")]
        hops: Vec<u32>,
        /// Marking probabilities to sweep
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.3,0.4,0.5")]
        p_grid: Vec<f64>,
        /// Monte-Carlo trials per cell
        #[arg(long, default_value_t = 500)]
        trials: u32,
        /// Confidence level of the per-cell intervals
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        /// Per-trial packet budget
        #[arg(long, default_value_t = 1_000_000)]
        max_packets: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file; a .panels.csv companion lands next to it
        /// [default: $TRACELAB_OUT_DIR/convergence.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace one packet digest across provider domains
    SpieTrace {
        /// Scenario file with the topology, route, and packet to trace
        #[arg(long)]
        topology: PathBuf,
        /// Output file [default: $TRACELAB_OUT_DIR/spie-trace.txt]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a pre-marking traceback strategy from a scenario file
    Strategy {
        /// Which strategy to run
        #[arg(value_enum)]
        name: Strategy,
        /// Scenario file with the topology, traffic, and strategy knobs
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file [default: $TRACELAB_OUT_DIR/strategy-<name>.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::MarkProb { p_grid, hops, trials, seed, out } => {
            let out = resolve_out(out, "mark-prob.csv");
            commands::mark_prob(&p_grid, hops, trials, seed, &out)
        }
        Cmd::Threshold { hops, confidence, out } => {
            let out = resolve_out(out, "threshold.csv");
            commands::threshold(hops, confidence, &out)
        }
        Cmd::Convergence { hops, p_grid, trials, confidence, max_packets, seed, out } => {
            let out = resolve_out(out, "convergence.csv");
            commands::convergence(&hops, &p_grid, trials, confidence, max_packets, seed, &out)
        }
        Cmd::SpieTrace { topology, out } => {
            let out = resolve_out(out, "spie-trace.txt");
            commands::spie_trace(&topology, &out)
        }
        Cmd::Strategy { name, topology, seed, out } => {
            let out = resolve_out(out, &format!("strategy-{}.json", name.name()));
            commands::strategy(name, &topology, seed, &out)
        }
    }
}

fn main() {
    // Usage problems exit 1, runtime failures exit 2; clap's own exit
    // code (2 for everything) matches neither.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("tracelab: {e}");
        std::process::exit(2);
    }
}
