//! Argument definitions and flag parsers.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use snstat::bootstrap::MultiplierKind;
use snstat::types::DEFAULT_SEED;
use snstat::{DeltaMeasure, Functional};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "snstat",
    version,
    about = "Self-normalized inference for stationary time series",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Self-normalized test of theta = theta0 with a critical-value table.
    SnTest {
        #[arg(long)]
        input: PathBuf,
        /// mean | quantile:TAU | acf:LAG
        #[arg(long, default_value = "mean")]
        functional: String,
        /// Null value, comma-separated for vector functionals.
        #[arg(long)]
        theta0: String,
        /// Critical-value table built for sn_limit (see build-table).
        #[arg(long)]
        table: PathBuf,
        /// Optional test size; adds a reject/accept line at this size.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Self-normalized confidence interval for a scalar functional.
    SnCi {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mean")]
        functional: String,
        /// Confidence level.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        table: PathBuf,
    },
    /// Generalized self-normalized test with a measure on the triangle.
    GsnTest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mean")]
        functional: String,
        #[arg(long)]
        theta0: String,
        /// recursive | grid:K | a CSV file of "s,t,weight" atoms
        #[arg(long = "H")]
        h: String,
        /// Clip blocks with fractional length <= n^-gamma and renormalize.
        #[arg(long)]
        gamma: Option<f64>,
        /// Table built for gsn_limit with the same measure (recursive uses
        /// the sn_limit table).
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Self-normalized change-point test.
    CpTest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mean")]
        functional: String,
        /// Clip the scan to k/n in [n^-gamma, 1 - n^-gamma].
        #[arg(long)]
        gamma: Option<f64>,
        /// Table built for cp_limit.
        #[arg(long)]
        table: PathBuf,
        /// Emit the full per-k profile.
        #[arg(long)]
        per_k: bool,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Fixed-b subsampling p-value.
    FixedbPvalue {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mean")]
        functional: String,
        #[arg(long)]
        theta0: String,
        /// Window fraction b in (0, 1].
        #[arg(long)]
        b: f64,
        /// Optional fixedb_limit table; adds the calibrated p-value.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Multiplier-bootstrap calibration of a statistic.
    Bootstrap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mean")]
        functional: String,
        /// sn | cp | fixedb
        #[arg(long)]
        kind: String,
        /// Required for sn and fixedb kinds.
        #[arg(long)]
        theta0: Option<String>,
        /// Required for the fixedb kind.
        #[arg(long)]
        b: Option<f64>,
        /// gaussian | rademacher | `block[:LEN]` (default length ceil(n^(1/3)))
        #[arg(long, default_value = "gaussian")]
        multipliers: String,
        /// Number of bootstrap replicates.
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a limit distribution and print its quantiles.
    SimulateLimits {
        /// sn | gsn | cp | fixedb
        #[arg(long)]
        functional: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// Path grid size m.
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        /// Monte Carlo replications (at least 10^4).
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated quantile levels; defaults to 0.5,0.9,0.95,0.99.
        #[arg(long)]
        levels: Option<String>,
        /// Window fraction for the fixedb functional.
        #[arg(long)]
        b: Option<f64>,
        /// Measure for the gsn functional: grid:K or an atom CSV file.
        #[arg(long = "H")]
        h: Option<String>,
        /// Row-major p*p long-run variance square root for fixedb with p > 1.
        #[arg(long)]
        sigma_half: Option<String>,
    },
    /// Build and persist a critical-value table.
    BuildTable {
        #[arg(long)]
        functional: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated levels; defaults to a dense percent grid.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long)]
        sigma_half: Option<String>,
        /// Output path; written atomically.
        #[arg(long)]
        out: PathBuf,
    },
    /// Small-subsample divergence demo on the planted triangular scheme.
    DemoCounterexample {
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "16,256,4096,65536")]
        n: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify the block-to-prefix mean identity on random pairs.
    CheckIdentity {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
}

pub fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or(DEFAULT_SEED)
}

/// Parse `mean`, `quantile:TAU`, `acf:LAG`.
pub fn parse_functional(spec: &str) -> Result<Functional, CliError> {
    let spec = spec.trim();
    if spec == "mean" {
        return Ok(Functional::Mean);
    }
    if let Some(rest) = spec.strip_prefix("quantile:") {
        let tau: f64 = rest
            .parse()
            .map_err(|_| CliError::Config(format!("cannot parse quantile level '{rest}'")))?;
        return Ok(Functional::Quantile(tau));
    }
    if let Some(rest) = spec.strip_prefix("acf:") {
        let lag: usize = rest
            .parse()
            .map_err(|_| CliError::Config(format!("cannot parse autocorrelation lag '{rest}'")))?;
        return Ok(Functional::Autocorrelation(lag));
    }
    Err(CliError::Config(format!(
        "unknown functional '{spec}'; expected mean, quantile:TAU or acf:LAG"
    )))
}

/// Parse a comma-separated real vector.
pub fn parse_vector(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("cannot parse {what} entry '{piece}'")))
        })
        .collect()
}

/// Parse comma-separated quantile levels.
pub fn parse_levels(spec: Option<&str>, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
    match spec {
        None => Ok(default),
        Some(s) => {
            let mut levels = parse_vector(s, "level")?;
            levels.sort_unstable_by(f64::total_cmp);
            levels.dedup();
            Ok(levels)
        }
    }
}

/// Parse `gaussian`, `rademacher`, `block` or `block:LEN`.
/// `n` supplies the default dependent block length `ceil(n^(1/3))`.
pub fn parse_multipliers(spec: &str, n: usize) -> Result<MultiplierKind, CliError> {
    match spec.trim() {
        "gaussian" => Ok(MultiplierKind::IidGaussian),
        "rademacher" => Ok(MultiplierKind::IidRademacher),
        "block" => Ok(MultiplierKind::BlockDependent {
            block_len: snstat::bootstrap::MultiplierScheme::default_block_len(n),
        }),
        other => {
            if let Some(rest) = other.strip_prefix("block:") {
                let block_len: usize = rest.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse block length '{rest}'"))
                })?;
                Ok(MultiplierKind::BlockDependent { block_len })
            } else {
                Err(CliError::Config(format!(
                    "unknown multiplier scheme '{other}'; expected gaussian, rademacher or block[:LEN]"
                )))
            }
        }
    }
}

/// How a triangle measure was specified on the command line.
#[derive(Debug, Clone)]
pub enum MeasureSpec {
    /// The recursive measure `{(0, j/n)}`; its limit is the classical one.
    Recursive,
    /// Uniform atoms on the K x K triangle grid.
    Grid(usize),
    /// Atoms from a CSV file of `s,t,weight` rows.
    File(PathBuf),
}

impl MeasureSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let spec = spec.trim();
        if spec == "recursive" {
            return Ok(MeasureSpec::Recursive);
        }
        if let Some(rest) = spec.strip_prefix("grid:") {
            let k: usize = rest
                .parse()
                .map_err(|_| CliError::Config(format!("cannot parse grid size '{rest}'")))?;
            return Ok(MeasureSpec::Grid(k));
        }
        Ok(MeasureSpec::File(PathBuf::from(spec)))
    }

    /// A short description echoed in reports and stored in tables.
    pub fn describe(&self) -> String {
        match self {
            MeasureSpec::Recursive => "recursive".to_string(),
            MeasureSpec::Grid(k) => format!("grid:{k}"),
            MeasureSpec::File(path) => format!("file:{}", path.display()),
        }
    }

    /// Materialize the measure. `n` sizes the recursive measure; commands
    /// that have no sample (table builds) reject `recursive`.
    pub fn materialize(&self, n: Option<usize>) -> Result<DeltaMeasure, CliError> {
        match self {
            MeasureSpec::Recursive => {
                let n = n.ok_or_else(|| {
                    CliError::Config(
                        "the recursive measure is tied to a sample; use grid:K or an atom file"
                            .to_string(),
                    )
                })?;
                Ok(DeltaMeasure::recursive(n)?)
            }
            MeasureSpec::Grid(k) => Ok(DeltaMeasure::uniform_grid(*k)?),
            MeasureSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read atom file '{}': {e}", path.display()))
                })?;
                let mut atoms = Vec::new();
                for (lineno, raw) in text.lines().enumerate() {
                    let line = raw.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                    if fields.len() != 3 {
                        return Err(CliError::Config(format!(
                            "atom file line {}: expected 's,t,weight'",
                            lineno + 1
                        )));
                    }
                    let parse = |v: &str| {
                        v.parse::<f64>().map_err(|_| {
                            CliError::Config(format!(
                                "atom file line {}: cannot parse '{v}'",
                                lineno + 1
                            ))
                        })
                    };
                    atoms.push(snstat::types::DeltaAtom {
                        s: parse(fields[0])?,
                        t: parse(fields[1])?,
                        weight: parse(fields[2])?,
                    });
                }
                Ok(DeltaMeasure::new(atoms)?)
            }
        }
    }
}
