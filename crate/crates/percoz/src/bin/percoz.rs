use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use percoz::cli::{self, ExperimentSpec, EXIT_USAGE};

/// Percolation Ornstein-Zernike laboratory.
#[derive(Parser)]
#[command(name = "percoz", version, about)]
struct Cli {
    /// Worker threads (default: PERCOZ_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file mirroring the subcommand flags; explicit CLI
    /// flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one Bernoulli(p) configuration and write its binary form
    Sample {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long = "box", default_value_t = 8)]
        box_radius: i64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the directed event kernels over a displacement set
    Estimate(EstimateArgs),
    /// Exhaustively enumerate an event on a tiny box (<= 24 edges)
    Exact {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// comma-separated vertex counts per axis, e.g. "2,2,2"
        #[arg(long = "box")]
        box_spec: String,
        #[arg(long)]
        event: String,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        t: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// also search for a non-monotonicity witness pair
        #[arg(long, default_value_t = false)]
        find_nonmonotone: bool,
        /// cross-check against the Monte Carlo sampler: samples,seed,sigma
        #[arg(long)]
        mc_check: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact combinatorial minima
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Solve h = delta + f*h for a kernel file and run diagnostics
    RenewalCheck {
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 40)]
        window: i64,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full tilt/OZ pipeline on a synthetic kernel spec
    SyntheticOz {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "20,40,80")]
        n_list: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit tau and the OZ prefactor from a decay-series file
    OzFit {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convexity/curvature/polar checks on a tau-surface file
    Surface {
        #[arg(long)]
        tau: PathBuf,
        #[arg(long, default_value = "convexity,curvature")]
        check: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conditional large-boundary tail estimate
    SurfaceTail {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        x: String,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        p: f64,
        #[arg(long = "box", default_value_t = 6)]
        box_radius: i64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        max_volume: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// phi/psi/upsilon for one displacement
    Phi {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        x: String,
        #[arg(long, default_value_t = 8)]
        max_volume: usize,
        #[arg(long, default_value_t = 500_000_000)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// pairwise subadditivity table over an L1 ball
    Subadditivity {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        radius: i64,
        #[arg(long, default_value_t = 8)]
        max_volume: usize,
        #[arg(long, default_value_t = 500_000_000)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// direction, e.g. "1,0,0"
    #[arg(long)]
    t: Option<String>,
    /// centered box radius (box spans [-r, r]^d)
    #[arg(long = "box")]
    box_radius: Option<i64>,
    #[arg(long)]
    margin: Option<i64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with a list of displacements [[1,0,0], ...]
    #[arg(long)]
    displacements: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(serde::Deserialize, Default)]
struct EstimateFile {
    dim: Option<usize>,
    p: Option<f64>,
    t: Option<Vec<f64>>,
    box_radius: Option<i64>,
    margin: Option<i64>,
    samples: Option<u64>,
    seed: Option<u64>,
    displacements: Option<Vec<Vec<i64>>>,
}

fn build_estimate_spec(
    args: &EstimateArgs,
    config: Option<&PathBuf>,
) -> percoz::Result<ExperimentSpec> {
    let file: EstimateFile = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| percoz::Error::Io(format!("{}: {}", path.display(), e)))?;
            serde_json::from_str(&text)
                .map_err(|e| percoz::Error::Io(format!("{}: {}", path.display(), e)))?
        }
        None => EstimateFile::default(),
    };
    let t = match (&args.t, file.t) {
        (Some(s), _) => cli::parse_vec_f64(s)?,
        (None, Some(v)) => v,
        (None, None) => vec![1.0, 0.0, 0.0],
    };
    let displacements = match (&args.displacements, file.displacements) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| percoz::Error::Io(format!("{}: {}", path.display(), e)))?;
            serde_json::from_str::<Vec<Vec<i64>>>(&text)
                .map_err(|e| percoz::Error::Io(format!("{}: {}", path.display(), e)))?
        }
        (None, Some(v)) => v,
        (None, None) => Vec::new(),
    };
    Ok(ExperimentSpec {
        dim: args.dim.or(file.dim).unwrap_or(3),
        p: args.p.or(file.p).unwrap_or(0.35),
        t,
        box_radius: args.box_radius.or(file.box_radius).unwrap_or(8),
        margin: args.margin.or(file.margin).unwrap_or(1),
        samples: args.samples.or(file.samples).unwrap_or(100_000),
        seed: args.seed.or(file.seed).unwrap_or(1),
        displacements,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("PERCOZ_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let result = match &cli.command {
        Command::Sample { dim, box_radius, p, seed, stream, out } => {
            cli::run_sample(*dim, *box_radius, *p, *seed, *stream, out)
        }
        Command::Estimate(args) => match build_estimate_spec(args, cli.config.as_ref()) {
            Ok(spec) => cli::run_estimate(&spec, args.out.as_deref(), args.csv.as_deref()),
            Err(e) => Err(e),
        },
        Command::Exact {
            dim,
            box_spec,
            event,
            x,
            t,
            p,
            find_nonmonotone,
            mc_check,
            out,
        } => {
            let mc = match mc_check {
                Some(s) => {
                    let parts: Vec<&str> = s.split(',').collect();
                    if parts.len() != 3 {
                        eprintln!("--mc-check expects samples,seed,sigma");
                        return ExitCode::from(EXIT_USAGE as u8);
                    }
                    match (
                        parts[0].trim().parse(),
                        parts[1].trim().parse(),
                        parts[2].trim().parse(),
                    ) {
                        (Ok(a), Ok(b), Ok(c)) => Some((a, b, c)),
                        _ => {
                            eprintln!("--mc-check expects samples,seed,sigma");
                            return ExitCode::from(EXIT_USAGE as u8);
                        }
                    }
                }
                None => None,
            };
            cli::run_exact(
                *dim,
                box_spec,
                event,
                x.as_deref(),
                t.as_deref(),
                *p,
                *find_nonmonotone,
                mc,
                out.as_deref(),
            )
        }
        Command::Oracle { which } => match which {
            OracleCommand::Phi { dim, x, max_volume, budget, out } => {
                cli::run_oracle_phi(*dim, x, *max_volume, *budget, out.as_deref())
            }
            OracleCommand::Subadditivity { dim, radius, max_volume, budget, out } => {
                cli::run_oracle_subadditivity(*dim, *radius, *max_volume, *budget, out.as_deref())
            }
        },
        Command::RenewalCheck { f, window, t, out } => {
            cli::run_renewal_check(f, *window, t.as_deref(), out.as_deref())
        }
        Command::SyntheticOz { spec, n_list, out } => {
            cli::run_synthetic_oz(spec, n_list, out.as_deref())
        }
        Command::OzFit { series, dim, out } => cli::run_oz_fit(series, *dim, out.as_deref()),
        Command::Surface { tau, check, out } => cli::run_surface(tau, check, out.as_deref()),
        Command::SurfaceTail {
            dim,
            x,
            delta,
            p,
            box_radius,
            samples,
            seed,
            max_volume,
            out,
        } => cli::run_surface_tail(
            *dim,
            x,
            *delta,
            *p,
            *box_radius,
            *samples,
            *seed,
            *max_volume,
            out.as_deref(),
        ),
    };

    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e @ percoz::Error::Validation(_)) => {
            eprintln!("{}", e);
            ExitCode::from(EXIT_USAGE as u8)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
