//! Command-line front end: clique generation, the full decomposition
//! pipeline, random instance generation, and the clique benchmark grid.
//!
//! Exit codes: 0 success / completely positive, 2 input error,
//! 3 not completely positive, 4 inconclusive, 5 internal failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpten::bench::{grid_to_text, run_grid, GridSpec};
use cpten::clique::{maximal_cliques, necessary_condition};
use cpten::extract::{decompose, DecomposeOptions, NotCpReason, Verdict};
use cpten::io;
use cpten::sdp::SolveOptions;
use cpten::tensor::{random_binary_sparse, random_cp, SymmetricTensor};
use cpten::CpError;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CP: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

#[derive(Parser)]
#[command(
    name = "cpten",
    version,
    about = "completely positive tensor decomposition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the maximal cliques of a tensor's support and run the
    /// coverage screen.
    Cliques {
        /// Tensor file (text, or JSON with --format json).
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Decide complete positivity and emit a decomposition when it holds.
    Decompose(DecomposeArgs),
    /// Generate a random instance.
    Gen(GenArgs),
    /// Time clique generation over a grid of random binary tensors.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the decomposition here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Starting relaxation level (default derived from the order).
    #[arg(long)]
    level: Option<usize>,
    /// Highest relaxation level to try.
    #[arg(long)]
    max_level: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Moment-matrix rank tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol_rank: f64,
    /// Reconstruction gate relative to the tensor's entrywise 1-norm.
    #[arg(long, default_value_t = 1e-5)]
    tol_recon: f64,
    /// Solve the single ambient relaxation instead of per-clique ones.
    #[arg(long)]
    dense: bool,
    /// Extract at the top level even without rank stabilization.
    #[arg(long)]
    force_extract: bool,
    /// Keep near-duplicate atoms separate.
    #[arg(long)]
    no_merge_atoms: bool,
    /// Solver wall-clock limit per solve, in seconds (0 = none).
    #[arg(long, default_value_t = 0.0)]
    time_limit: f64,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand)]
enum GenKind {
    /// Random completely positive tensor with a known witness.
    Cp {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 3)]
        atoms: usize,
        #[arg(long)]
        max_support: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the witness decomposition here.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Random binary tensor with unit diagonal and given off-diagonal
    /// density.
    Binary {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 12, 14])]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8])]
    orders: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4f64, 0.8, 0.98])]
    densities: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn read_tensor(path: &Path, format: Format) -> Result<SymmetricTensor, CpError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::Text => io::tensor_from_text(&text),
        Format::Json => io::tensor_from_json(&text),
    }
}

fn input_error(e: &CpError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INPUT)
}

fn run_cliques(input: &Path, format: Format) -> ExitCode {
    let tensor = match read_tensor(input, format) {
        Ok(t) => t,
        Err(e) => return input_error(&e),
    };
    if let Err(e) = tensor.check_nonnegative() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_NOT_CP);
    }
    let start = std::time::Instant::now();
    let cliques = match maximal_cliques(&tensor) {
        Ok(c) => c,
        Err(e) => return input_error(&e),
    };
    let elapsed = start.elapsed().as_secs_f64();
    print!("{}", cliques.to_text());
    let screen = necessary_condition(&tensor, &cliques);
    eprintln!(
        "cliques: {} (largest {}), generated in {elapsed:.4}s",
        cliques.len(),
        cliques.cliques.iter().map(|c| c.len()).max().unwrap_or(0)
    );
    if screen.passed {
        eprintln!("coverage screen: passed");
        ExitCode::from(EXIT_OK)
    } else {
        for idx in &screen.uncovered {
            eprintln!("uncovered positive entry at {:?}", idx.entries());
        }
        eprintln!("coverage screen: failed; tensor is not completely positive");
        ExitCode::from(EXIT_NOT_CP)
    }
}

fn run_decompose(args: &DecomposeArgs) -> ExitCode {
    let tensor = match read_tensor(&args.input, args.format) {
        Ok(t) => t,
        Err(e) => return input_error(&e),
    };
    let opts = DecomposeOptions {
        level: args.level,
        max_level: args.max_level,
        seed: args.seed,
        rank_tol: args.tol_rank,
        recon_tol: args.tol_recon,
        dense: args.dense,
        force_extract: args.force_extract,
        merge_atoms: !args.no_merge_atoms,
        solve: SolveOptions {
            time_limit: args.time_limit,
            ..SolveOptions::default()
        },
    };
    let outcome = match decompose(&tensor, &opts) {
        Ok(o) => o,
        Err(e @ (CpError::LevelTooLow { .. } | CpError::InvalidDegree(_))) => {
            return input_error(&e)
        }
        Err(e) => {
            eprintln!("internal error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    };
    let s = &outcome.stats;
    eprintln!(
        "cliques: {} (largest {}, {:.4}s); levels tried: {:?}; \
         largest block: {}; sdp time: {:.4}s; total: {:.4}s",
        s.num_cliques,
        s.max_clique_size,
        s.clique_time,
        s.levels_tried,
        s.max_block_size,
        s.sdp_time,
        s.total_time
    );
    match outcome.verdict {
        Verdict::CompletelyPositive {
            decomposition,
            residual,
            level,
        } => {
            eprintln!(
                "completely positive: {} atoms at level {level}, reconstruction residual {residual:.3e}",
                decomposition.atoms.len()
            );
            let rendered = match args.format {
                Format::Text => io::decomposition_to_text(&decomposition),
                Format::Json => match io::decomposition_to_json(&decomposition) {
                    Ok(j) => j,
                    Err(e) => {
                        eprintln!("internal error: {e}");
                        return ExitCode::from(EXIT_INTERNAL);
                    }
                },
            };
            if let Some(path) = &args.output {
                if let Err(e) = std::fs::write(path, rendered) {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_INTERNAL);
                }
            } else {
                print!("{rendered}");
            }
            ExitCode::from(EXIT_OK)
        }
        Verdict::NotCompletelyPositive(reason) => {
            match reason {
                NotCpReason::NegativeEntry { index, value } => {
                    eprintln!("not completely positive: negative entry {value} at {index:?}");
                }
                NotCpReason::CliqueViolation { uncovered } => {
                    eprintln!(
                        "not completely positive: {} positive entries outside every clique",
                        uncovered.len()
                    );
                    for idx in uncovered.iter().take(10) {
                        eprintln!("  uncovered: {:?}", idx.entries());
                    }
                }
                NotCpReason::Infeasible { level, certificate } => {
                    eprintln!(
                        "not completely positive: level-{level} relaxation infeasible \
                         (verified dual ray of length {})",
                        certificate.dual_ray.len()
                    );
                }
            }
            ExitCode::from(EXIT_NOT_CP)
        }
        Verdict::Inconclusive { detail } => {
            eprintln!("inconclusive: {detail}");
            ExitCode::from(EXIT_INCONCLUSIVE)
        }
    }
}

fn run_gen(args: &GenArgs) -> ExitCode {
    match &args.kind {
        GenKind::Cp {
            dim,
            order,
            atoms,
            max_support,
            seed,
            witness,
            format,
        } => {
            if *dim < 1 || *order < 2 {
                eprintln!("error: need dim >= 1 and order >= 2");
                return ExitCode::from(EXIT_INPUT);
            }
            let support = max_support.unwrap_or(*dim).min(*dim).max(1);
            let (tensor, decomp) = random_cp(*dim, *order, *atoms, support, *seed);
            let rendered = match format {
                Format::Text => Ok(io::tensor_to_text(&tensor)),
                Format::Json => io::tensor_to_json(&tensor),
            };
            match rendered {
                Ok(s) => print!("{s}"),
                Err(e) => return input_error(&e),
            }
            if let Some(path) = witness {
                let w = match format {
                    Format::Text => Ok(io::decomposition_to_text(&decomp)),
                    Format::Json => io::decomposition_to_json(&decomp),
                };
                match w.map(|s| std::fs::write(path, s)) {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_INTERNAL);
                    }
                    Err(e) => return input_error(&e),
                }
            }
            ExitCode::from(EXIT_OK)
        }
        GenKind::Binary {
            dim,
            order,
            density,
            seed,
            format,
        } => {
            if !(0.0..=1.0).contains(density) || *dim < 1 || *order < 2 {
                eprintln!("error: need dim >= 1, order >= 2, density in [0, 1]");
                return ExitCode::from(EXIT_INPUT);
            }
            let tensor = random_binary_sparse(*dim, *order, *density, *seed);
            let rendered = match format {
                Format::Text => Ok(io::tensor_to_text(&tensor)),
                Format::Json => io::tensor_to_json(&tensor),
            };
            match rendered {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::from(EXIT_OK)
                }
                Err(e) => input_error(&e),
            }
        }
    }
}

fn run_bench(args: &BenchArgs) -> ExitCode {
    if let Some(jobs) = args.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized, --jobs ignored");
        }
    }
    let spec = GridSpec {
        dims: args.dims.clone(),
        orders: args.orders.clone(),
        densities: args.densities.clone(),
        instances_per_cell: args.instances,
        seed: args.seed,
    };
    if spec.densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
        eprintln!("error: densities must lie in [0, 1]");
        return ExitCode::from(EXIT_INPUT);
    }
    let results = run_grid(&spec);
    print!("{}", grid_to_text(&results));
    ExitCode::from(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Cliques { input, format } => run_cliques(input, *format),
        Command::Decompose(args) => run_decompose(args),
        Command::Gen(args) => run_gen(args),
        Command::Bench(args) => run_bench(args),
    }
}
