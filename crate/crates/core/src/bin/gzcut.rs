use clap::{Parser, Subcommand, ValueEnum};
use gzcut::cli::{
    cmd_canonical, cmd_catalog, cmd_coincidence, cmd_dims, cmd_sn, cmd_verify, CliError,
    CommonOptions, MatrixFile, RunReport,
};
use gzcut::orbits::Execution;
use gzcut::Tolerances;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "gzcut",
    version,
    about = "Eigenvalue coincidences of a matrix and its cutoff"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Matrix size for the sampling and catalog commands.
    #[arg(long, global = true, default_value_t = 3)]
    n: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    trials: usize,
    #[arg(long, global = true, default_value_t = 5)]
    repeats: usize,
    #[arg(long, global = true)]
    tol_eig: Option<f64>,
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    #[arg(long, global = true)]
    tol_membership: Option<f64>,
    /// Matrix file for `coincidence` and `canonical`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Run trials on one thread.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count shared eigenvalues of x and its cutoff.
    Coincidence,
    /// K-conjugate x into a theta-stable parabolic.
    Canonical,
    /// Monte Carlo containment and canonical-form round trips.
    Verify,
    /// Tangent-rank dimension estimates.
    Dims,
    /// Flags, Borel and parabolic subalgebras for every K-orbit.
    Catalog,
    /// Sampling of the strongly nilpotent components.
    Sn,
}

fn options(args: &Args) -> CommonOptions {
    let d = Tolerances::default();
    CommonOptions {
        seed: args.seed,
        tol: Tolerances::new(
            args.tol_eig.unwrap_or(d.eig_match),
            args.tol_rank.unwrap_or(d.rank_rel),
            args.tol_membership.unwrap_or(d.membership),
        ),
        execution: if args.serial {
            Execution::Serial
        } else {
            Execution::Parallel
        },
    }
}

fn input(args: &Args) -> Result<MatrixFile, CliError> {
    let path = args
        .input
        .as_ref()
        .ok_or_else(|| CliError::Input("--input FILE is required".into()))?;
    MatrixFile::read(path)
}

fn run(args: &Args) -> Result<RunReport, CliError> {
    let opts = options(args);
    match args.command {
        Command::Coincidence => cmd_coincidence(&input(args)?, &opts),
        Command::Canonical => cmd_canonical(&input(args)?, &opts),
        Command::Verify => cmd_verify(args.n, args.trials, &opts),
        Command::Dims => cmd_dims(args.n, args.repeats, &opts),
        Command::Catalog => cmd_catalog(args.n, &opts),
        Command::Sn => cmd_sn(args.n, args.trials, &opts),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let report = match run(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("gzcut: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let text = match args.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    match &args.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("gzcut: cannot write {}: {e}", path.display());
                return ExitCode::from(gzcut::cli::EXIT_INPUT as u8);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(report.exit_code() as u8)
}
