mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meandim_core::Error;

#[derive(Parser)]
#[command(name = "meandim-lab", version, about = "Mean dimension and dynamical embedding experiments on sampled Z^k actions")]
struct Cli {
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed for every randomised step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Exact,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Balls,
    Pairs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TestArg {
    Points,
    Simplices,
}

#[derive(Args)]
pub struct SearchArgs {
    /// Candidate sets offered to the cover search.
    #[arg(long, value_enum, default_value = "pairs")]
    pub family: FamilyArg,
    /// Local-search budget per level of the greedy search.
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// widim_{eps,lam} of a sampled space.
    Widim {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        lam: f64,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Mean-dimension curve widim(X, d_[n]) / n^k and its plateau estimate.
    Mdim {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        lam: f64,
        /// Comma-separated box sides.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u32>,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: Mode,
        /// Number of trailing rows averaged by the estimate.
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Rokhlin towers for circle rotations or their products on a torus.
    Towers {
        #[arg(long, conflicts_with = "alphas")]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        resolution: usize,
        /// Closure margin in sample steps.
        #[arg(long, default_value_t = meandim_core::rokhlin::DEFAULT_MARGIN_STEPS)]
        margin_steps: f64,
    },
    /// Checks a tower file against a system.
    Verify {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        towers: PathBuf,
    },
    /// The tower-driven embedding of an extension.
    Pipeline {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        towers: PathBuf,
        #[arg(long)]
        factor: PathBuf,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 0.0)]
        lam: f64,
        #[arg(long)]
        window: Option<u32>,
        /// Observable file; a random trigonometric map is drawn otherwise.
        #[arg(long)]
        observable: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        degree: u32,
    },
    /// Delay map x -> (h(gx))_{g in [0,2d]^k} and its separation report.
    Delay {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long)]
        observable: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        degree: u32,
    },
    /// Certified eps-embedding near an observable.
    Embed {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        lam: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        observable: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: Mode,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Fraction of seeded observables with injective delay maps.
    Generic {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        degree: u32,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, value_enum, default_value = "simplices")]
        test: TestArg,
        /// Output floor of the pointwise test.
        #[arg(long, default_value_t = meandim_core::embedders::TAU_EQ)]
        floor: f64,
    },
    /// Generic independence of pattern matrices.
    Genlin {
        /// A pattern as JSON rows, e.g. [[1,2],[3,1]].
        #[arg(long, conflicts_with = "enumerate")]
        pattern: Option<String>,
        /// k,l,r_max: every lemma-valid pattern of that shape.
        #[arg(long, value_delimiter = ',')]
        enumerate: Option<Vec<u32>>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
    },
}

/// Exit status for a library error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::InvalidPattern(_) => 2,
        Error::SearchCapExceeded(_) | Error::GeneralPositionExhausted(_) | Error::SeparationFailed(..) => 4,
        _ => 3,
    }
}

pub enum Failure {
    Parse(String),
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut outs = output::Outputs::new(&cli.out);
    let res = commands::run(cli.cmd, cli.seed, &mut outs).and_then(|(summary, code)| {
        let paths = outs.commit().map_err(Failure::Io)?;
        println!("{summary}");
        for p in paths {
            println!("wrote {}", p.display());
        }
        Ok(code)
    });
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Parse(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
