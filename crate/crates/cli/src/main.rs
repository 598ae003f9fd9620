mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use repgrowth::Error;

#[derive(Debug, Parser)]
#[command(name = "repgrowth", version, about = "Growth of matrix coefficients for multiplicative representations of free groups")]
struct Cli {
    /// System document to read.
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Numerical tolerance for equivalence tests and verification checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write a machine-readable document here.
    #[arg(long, global = true)]
    json_out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightArg {
    /// e^{−ε|x|}
    Single,
    /// e^{−2ε|x|}
    Double,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a system document.
    Check,
    /// Rescale to Perron value 1 and print the eigentuple.
    Normalize,
    /// Build the twin system and test equivalence with it.
    Twin,
    /// Growth exponent, Jordan profile, E₀ and verdict.
    Classify {
        /// Random trials for the irreducibility gate.
        #[arg(long, default_value_t = 8)]
        trials: usize,
    },
    /// One matrix coefficient ⟨μ[e,a,v_a], π(x) μ[e,b,v_b]⟩ by all three methods.
    Coeff {
        /// Reduced word, e.g. "abA" or "a.b.A"; "e" is the identity.
        word: String,
        a: String,
        b: String,
        /// Endpoint vectors, e.g. "a:1,0;b:0.5,0.5" (re,im pairs); unit vectors otherwise.
        #[arg(long)]
        v: Option<String>,
    },
    /// Cross-check the transfer operator against brute-force enumeration.
    Verify {
        /// Longest word length J checked.
        #[arg(long, default_value_t = 7)]
        max_length: usize,
        /// Random endpoint pairs drawn.
        #[arg(long, default_value_t = 4)]
        trials: usize,
        /// Perturb one block after normalization (self-test: must fail).
        #[arg(long)]
        corrupt: bool,
    },
    /// ‖φ_ε‖² over a geometric ε grid with a fitted exponent.
    Sweep {
        a: String,
        b: String,
        #[arg(long)]
        v: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        eps_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        eps_max: f64,
        #[arg(long, default_value_t = 20)]
        eps_steps: usize,
        #[arg(long, value_enum, default_value_t = WeightArg::Single)]
        weight: WeightArg,
    },
    /// Print a random system document.
    Random {
        /// Dimensions per letter in alphabet order a, A, b, B, …
        #[arg(long, value_delimiter = ',', default_value = "1,1,1,1")]
        dims: Vec<usize>,
        /// Impose H_{a⁻¹b⁻¹} = H_ba† so the system equals its twin.
        #[arg(long)]
        self_twin: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::Reducible(_) => 5,
        e if e.is_validation() => 2,
        Error::Argument(_) | Error::Dimension(_) | Error::AlphabetMismatch(_) => 2,
        e if e.is_spectral() => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::Reducible(w) = &err {
                eprintln!("{w}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
