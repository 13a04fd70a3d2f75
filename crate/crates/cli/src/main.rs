mod commands;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ssm_core::exact::parse_rational;
use ssm_core::Rational;

use crate::commands::Output;
use crate::report::{sha256_file, RunReport};

#[derive(Parser, Debug)]
#[command(name = "ssm", version, about = "Spatial mixing certificates and counting on the square lattice")]
struct Cli {
    /// Print a machine-readable run report instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Boundary {
    Occ,
    Unocc,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Auto,
    Saw,
    Transfer,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    Lambda,
    Ising,
    Types,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate the branching matrix for avoided cycles up to a length.
    GenMatrix {
        #[arg(long)]
        max_cycle: u32,
        /// Remove types whose subtrees are cut by occupied cycle leaves.
        #[arg(long)]
        prune: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a DMS certificate. Exit 0 pass, 1 fail, 2 precondition error.
    CheckDms {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        /// Also sample f_j at this many points per type against the bound.
        #[arg(long)]
        falsify_samples: Option<usize>,
    },
    /// Search for a DMS certificate at a given lambda.
    Search {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_parser = rational)]
        lambda: Rational,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4000)]
        budget: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// Try this certificate's (s, c) first and start the walk from its s.
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bisect for the largest lambda the search certifies.
    MaxLambda {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_parser = rational)]
        lo: Rational,
        #[arg(long, value_parser = rational)]
        hi: Rational,
        #[arg(long, value_parser = rational)]
        tol: Rational,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4000)]
        budget: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Partition function of a region: exact, or bracketed via SAW trees.
    Count {
        #[arg(long)]
        region: PathBuf,
        #[arg(long, value_parser = rational)]
        lambda: Rational,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Assumed decay rate; only sets the initial truncation depth.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long)]
        exact: bool,
        /// Site pins, lines `i j occ|unocc`.
        #[arg(long)]
        pins: Option<PathBuf>,
    },
    /// Glauber dynamics occupation frequencies as CSV `i,j,frequency`.
    Sample {
        #[arg(long)]
        region: PathBuf,
        #[arg(long, value_parser = rational)]
        lambda: Rational,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        burnin: u64,
        #[arg(long)]
        pins: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Root marginal Pr[unoccupied] from the SAW tree of a graph.
    SawMarginal {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        root: usize,
        #[arg(long, value_parser = rational)]
        lambda: Rational,
        /// Vertex pins, lines `v occ|unocc`.
        #[arg(long)]
        pins: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, value_enum)]
        boundary: Option<Boundary>,
    },
    /// Even/odd boundary gap at the centre of boxes of radius 1..L.
    ProbeSsm {
        #[arg(long)]
        lmax: u32,
        #[arg(long, value_parser = rational)]
        lambda: Rational,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Check tanh(beta) M c < c. Without --cert, c comes from a Perron bound.
    IsingCheck {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_parser = rational)]
        tanh: Rational,
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Certified beta* interval from a Collatz-Wielandt bound.
    IsingBetaStar {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 5000)]
        iters: usize,
    },
    /// Rebuild the type-count, lambda* or beta* table.
    ReproduceTable {
        #[arg(long, value_enum)]
        which: Table,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4000)]
        budget: usize,
        /// Skip lambda rows for matrices with more types than this.
        #[arg(long, default_value_t = 200)]
        max_types: usize,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::GenMatrix { .. } => "gen-matrix",
            Cmd::CheckDms { .. } => "check-dms",
            Cmd::Search { .. } => "search",
            Cmd::MaxLambda { .. } => "max-lambda",
            Cmd::Count { .. } => "count",
            Cmd::Sample { .. } => "sample",
            Cmd::SawMarginal { .. } => "saw-marginal",
            Cmd::ProbeSsm { .. } => "probe-ssm",
            Cmd::IsingCheck { .. } => "ising-check",
            Cmd::IsingBetaStar { .. } => "ising-beta-star",
            Cmd::ReproduceTable { .. } => "reproduce-table",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let name = cli.cmd.name();
    let (code, out) = match commands::run(&cli.cmd) {
        Ok(out) => (if out.negative { 1 } else { 0 }, out),
        Err(e) => {
            eprintln!("error: {e:#}");
            (2, Output::error(&e))
        }
    };
    if cli.json {
        let mut inputs = BTreeMap::new();
        for p in &out.inputs {
            let h = sha256_file(p).unwrap_or_else(|e| format!("unreadable: {e}"));
            inputs.insert(p.display().to_string(), h);
        }
        let report = RunReport {
            command: name.to_string(),
            inputs,
            result: out.value,
            exit_code: code,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", out.text);
    }
    ExitCode::from(code as u8)
}
