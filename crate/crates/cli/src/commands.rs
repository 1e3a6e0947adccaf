//! Subcommand implementations.

use std::path::{Path, PathBuf};

use snstat::bootstrap::{bootstrap_distribution, BootstrapKind, MultiplierScheme};
use snstat::changepoint::{cp_statistic, CpConfig};
use snstat::fixedb::fixedb_pvalue;
use snstat::limits::{build_table, default_levels, LimitFunctional, TableSpec};
use snstat::selfnorm::{
    clipped_sn_statistic, generalized_sn_statistic, sn_confidence_interval, sn_statistic, SnResult,
};
use snstat::seqproc::{counterexample_demo, prop1_identity_check, random_delta_pairs};
use snstat::table::{CriticalValueTable, FUNCTIONAL_FIXEDB, FUNCTIONAL_GSN, FUNCTIONAL_SN};
use snstat::{Functional, SnError, TimeSeries};

use crate::args::{
    parse_functional, parse_levels, parse_multipliers, parse_vector, seed_or_default, Command,
    MeasureSpec,
};
use crate::ingest::{ingest_csv, IngestResult};
use crate::report::Report;
use crate::CliError;

pub fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::SnTest {
            input,
            functional,
            theta0,
            table,
            alpha,
        } => sn_test(&input, &functional, &theta0, &table, alpha),
        Command::SnCi {
            input,
            functional,
            level,
            table,
        } => sn_ci(&input, &functional, level, &table),
        Command::GsnTest {
            input,
            functional,
            theta0,
            h,
            gamma,
            table,
            alpha,
        } => gsn_test(&input, &functional, &theta0, &h, gamma, &table, alpha),
        Command::CpTest {
            input,
            functional,
            gamma,
            table,
            per_k,
            alpha,
        } => cp_test(&input, &functional, gamma, &table, per_k, alpha),
        Command::FixedbPvalue {
            input,
            functional,
            theta0,
            b,
            table,
        } => fixedb_cmd(&input, &functional, &theta0, b, table.as_deref()),
        Command::Bootstrap {
            input,
            functional,
            kind,
            theta0,
            b,
            multipliers,
            reps,
            seed,
        } => bootstrap_cmd(
            &input,
            &functional,
            &kind,
            theta0.as_deref(),
            b,
            &multipliers,
            reps,
            seed,
        ),
        Command::SimulateLimits {
            functional,
            p,
            grid,
            reps,
            seed,
            levels,
            b,
            h,
            sigma_half,
        } => simulate_limits(
            &functional,
            p,
            grid,
            reps,
            seed,
            levels.as_deref(),
            b,
            h.as_deref(),
            sigma_half.as_deref(),
            None,
        ),
        Command::BuildTable {
            functional,
            p,
            grid,
            reps,
            seed,
            levels,
            b,
            h,
            sigma_half,
            out,
        } => simulate_limits(
            &functional,
            p,
            grid,
            reps,
            seed,
            levels.as_deref(),
            b,
            h.as_deref(),
            sigma_half.as_deref(),
            Some(out),
        ),
        Command::DemoCounterexample { n, seed } => demo_cmd(&n, seed),
        Command::CheckIdentity {
            input,
            pairs,
            seed,
            tolerance,
        } => check_identity(&input, pairs, seed, tolerance),
    }
}

fn load_functional(spec: &str, ingest: &IngestResult) -> Result<Functional, CliError> {
    let f = parse_functional(spec)?;
    f.validate_for(ingest.ts.dim())?;
    Ok(f)
}

fn load_table(path: &Path) -> Result<CriticalValueTable, CliError> {
    Ok(CriticalValueTable::read(path)?)
}

/// Attach a right-tail p-value (and optional size-alpha decision) for a
/// statistic whose null law the table tabulates.
fn attach_tail_pvalue(
    report: &mut Report,
    table: &CriticalValueTable,
    statistic: f64,
    alpha: Option<f64>,
) -> Result<(), CliError> {
    let (cdf, clamped) = table.cdf_at(statistic);
    report.push("p_value", 1.0 - cdf);
    if clamped {
        report.warn(
            "statistic outside the tabulated range; the p-value is clamped at the extreme level",
        );
    }
    if let Some(alpha) = alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        let critical = table.quantile_at(1.0 - alpha)?;
        report.push("alpha", alpha);
        report.push("critical_value", critical);
        report.push("reject", statistic > critical);
    }
    Ok(())
}

fn push_sn_result(report: &mut Report, res: &SnResult) {
    report.push_vec("theta_hat", &res.theta_hat);
    report.push_vec("theta0", &res.theta0);
    report.push("statistic", res.statistic);
    report.push("normalizer_cond", res.cond);
    if res.clipped {
        report.push("clipped", true);
        if let Some(g) = res.gamma {
            report.push("gamma", g);
        }
    }
}

fn sn_test(
    input: &Path,
    functional: &str,
    theta0: &str,
    table: &Path,
    alpha: Option<f64>,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let theta0 = parse_vector(theta0, "theta0")?;
    let table = load_table(table)?;
    let p = f.output_dim(ingest.ts.dim());
    table.check_compatible(FUNCTIONAL_SN, p)?;

    let mut report = Report::new("sn-test");
    report.input(&ingest);
    report.push("functional", functional);
    let res = sn_statistic(&ingest.ts, &f, &theta0)?;
    push_sn_result(&mut report, &res);
    attach_tail_pvalue(&mut report, &table, res.statistic, alpha)?;
    report.table_provenance(&table);
    Ok(report.render())
}

fn sn_ci(input: &Path, functional: &str, level: f64, table: &Path) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let table = load_table(table)?;
    let (lo, hi) = sn_confidence_interval(&ingest.ts, &f, level, &table)?;
    let mut report = Report::new("sn-ci");
    report.input(&ingest);
    report.push("functional", functional);
    report.push("level", level);
    report.push("ci_lower", lo);
    report.push("ci_upper", hi);
    report.table_provenance(&table);
    Ok(report.render())
}

fn gsn_test(
    input: &Path,
    functional: &str,
    theta0: &str,
    h_spec: &str,
    gamma: Option<f64>,
    table: &Path,
    alpha: Option<f64>,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let theta0 = parse_vector(theta0, "theta0")?;
    let spec = MeasureSpec::parse(h_spec)?;
    let measure = spec.materialize(Some(ingest.ts.len()))?;
    let table = load_table(table)?;
    let p = f.output_dim(ingest.ts.dim());

    // The recursive measure reproduces the classical normalizer, whose limit
    // is the sn table; any other measure needs a gsn table built for it.
    match spec {
        MeasureSpec::Recursive => table.check_compatible(FUNCTIONAL_SN, p)?,
        _ => {
            table.check_compatible(FUNCTIONAL_GSN, p)?;
            if table.params.h_digest != Some(measure.digest()) {
                return Err(CliError::Config(format!(
                    "table was built for measure '{}', the analysis uses '{}'; rebuild the table \
                     with the same --H",
                    table.params.h_desc.as_deref().unwrap_or("unknown"),
                    spec.describe()
                )));
            }
        }
    }

    let mut report = Report::new("gsn-test");
    report.input(&ingest);
    report.push("functional", functional);
    report.push("H", spec.describe());
    report.push("H_atoms", measure.atoms().len());
    let res = match gamma {
        None => generalized_sn_statistic(&ingest.ts, &f, &theta0, &measure)?,
        Some(g) => clipped_sn_statistic(&ingest.ts, &f, &theta0, &measure, g)?,
    };
    push_sn_result(&mut report, &res);
    attach_tail_pvalue(&mut report, &table, res.statistic, alpha)?;
    report.table_provenance(&table);
    Ok(report.render())
}

fn cp_test(
    input: &Path,
    functional: &str,
    gamma: Option<f64>,
    table: &Path,
    per_k: bool,
    alpha: Option<f64>,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let table = load_table(table)?;
    let p = f.output_dim(ingest.ts.dim());
    table.check_compatible(snstat::table::FUNCTIONAL_CP, p)?;

    let config = CpConfig {
        gamma,
        keep_per_k: per_k,
    };
    let res = cp_statistic(&ingest.ts, &f, &config)?;
    let mut report = Report::new("cp-test");
    report.input(&ingest);
    report.push("functional", functional);
    report.push("statistic", res.statistic);
    report.push("argmax_k", res.argmax_k);
    report.push(
        "argmax_fraction",
        res.argmax_k as f64 / ingest.ts.len() as f64,
    );
    if res.clipped {
        report.push("clipped", true);
        if let Some(g) = res.gamma {
            report.push("gamma", g);
        }
    }
    attach_tail_pvalue(&mut report, &table, res.statistic, alpha)?;
    if !res.skipped.is_empty() {
        report.push("skipped_k_count", res.skipped.len());
        report.warn(format!(
            "{} candidate k had singular normalizers and were skipped",
            res.skipped.len()
        ));
    }
    if let Some(points) = &res.per_k {
        for point in points {
            report.push(&format!("k {}", point.k), point.value);
        }
    }
    report.table_provenance(&table);
    Ok(report.render())
}

fn fixedb_cmd(
    input: &Path,
    functional: &str,
    theta0: &str,
    b: f64,
    table: Option<&Path>,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let theta0 = parse_vector(theta0, "theta0")?;
    let res = fixedb_pvalue(&ingest.ts, &f, &theta0, b)?;
    let mut report = Report::new("fixedb-pvalue");
    report.input(&ingest);
    report.push("functional", functional);
    report.push("b", b);
    report.push("window_length", res.l);
    report.push("windows", res.n_windows);
    report.push("full_norm", res.full_norm);
    report.push("p_hat", res.pvalue);
    if let Some(table_path) = table {
        let table = load_table(table_path)?;
        let p = f.output_dim(ingest.ts.dim());
        table.check_compatible(FUNCTIONAL_FIXEDB, p)?;
        let table_b = table.params.b.unwrap_or(f64::NAN);
        if (table_b - b).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "table was built for b = {table_b}, the analysis uses b = {b}"
            )));
        }
        // Small p_hat values are evidence against the null; the calibrated
        // p-value is the null probability of seeing one at most this small.
        let (cdf, clamped) = table.cdf_at(res.pvalue);
        report.push("calibrated_p_value", cdf);
        if clamped {
            report.warn("p_hat outside the tabulated range; calibrated p-value is clamped");
        }
        report.table_provenance(&table);
    }
    Ok(report.render())
}

#[allow(clippy::too_many_arguments)]
fn bootstrap_cmd(
    input: &Path,
    functional: &str,
    kind: &str,
    theta0: Option<&str>,
    b: Option<f64>,
    multipliers: &str,
    reps: usize,
    seed: Option<u64>,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let f = load_functional(functional, &ingest)?;
    let n = ingest.ts.len();
    let seed = seed_or_default(seed);
    let scheme = MultiplierScheme::new(parse_multipliers(multipliers, n)?, seed);

    let need_theta0 = |what: &str| {
        theta0
            .ok_or_else(|| CliError::Config(format!("--theta0 is required for kind {what}")))
            .and_then(|s| parse_vector(s, "theta0"))
    };
    let kind = match kind {
        "sn" => BootstrapKind::Sn {
            theta0: need_theta0("sn")?,
        },
        "cp" => BootstrapKind::Cp,
        "fixedb" => BootstrapKind::FixedB {
            b: b.ok_or_else(|| CliError::Config("--b is required for kind fixedb".to_string()))?,
            theta0: need_theta0("fixedb")?,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown bootstrap kind '{other}'; expected sn, cp or fixedb"
            )))
        }
    };

    let res = bootstrap_distribution(&ingest.ts, &f, &kind, &scheme, reps)?;
    let mut report = Report::new("bootstrap");
    report.input(&ingest);
    report.push("functional", functional);
    report.push("kind", kind_name(&kind));
    report.push("multipliers", multipliers);
    report.push("reps", reps);
    report.push("seed", seed);
    report.push("observed", res.observed);
    report.push("bootstrap_p_value", res.pvalue);
    for level in [0.5, 0.9, 0.95, 0.99] {
        report.push(
            &format!("replicate_q{}", (level * 100.0) as u32),
            res.replicate_quantile(level),
        );
    }
    if res.failed > 0 {
        report.push("failed_replicates", res.failed);
        report.warn(format!("{} replicates were degenerate", res.failed));
    }
    Ok(report.render())
}

fn kind_name(kind: &BootstrapKind) -> &'static str {
    match kind {
        BootstrapKind::Sn { .. } => "sn",
        BootstrapKind::Cp => "cp",
        BootstrapKind::FixedB { .. } => "fixedb",
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_limits(
    functional: &str,
    p: usize,
    grid: usize,
    reps: usize,
    seed: Option<u64>,
    levels: Option<&str>,
    b: Option<f64>,
    h: Option<&str>,
    sigma_half: Option<&str>,
    out: Option<PathBuf>,
) -> Result<String, CliError> {
    let seed = seed_or_default(seed);
    let is_build = out.is_some();
    let default = if is_build {
        default_levels()
    } else {
        vec![0.5, 0.9, 0.95, 0.99]
    };
    let levels = parse_levels(levels, default)?;

    let mut h_desc = None;
    let limit = match functional {
        "sn" => LimitFunctional::Sn,
        "cp" => LimitFunctional::Cp,
        "gsn" => {
            let spec = MeasureSpec::parse(h.ok_or_else(|| {
                CliError::Config("--H is required for the gsn functional".to_string())
            })?)?;
            h_desc = Some(spec.describe());
            // No sample here: the recursive measure is rejected inside.
            LimitFunctional::GeneralizedSn(spec.materialize(None)?)
        }
        "fixedb" => {
            let b = b.ok_or_else(|| {
                CliError::Config("--b is required for the fixedb functional".to_string())
            })?;
            let sigma_half = match sigma_half {
                None => None,
                Some(s) => {
                    let v = parse_vector(s, "sigma_half")?;
                    if v.len() != p * p {
                        return Err(CliError::Config(format!(
                            "sigma_half must have p*p = {} entries, got {}",
                            p * p,
                            v.len()
                        )));
                    }
                    Some(v)
                }
            };
            LimitFunctional::FixedB { b, sigma_half }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown limit functional '{other}'; expected sn, gsn, cp or fixedb"
            )))
        }
    };

    let spec = TableSpec {
        functional: limit,
        p,
        levels,
        reps,
        grid_m: grid,
        seed,
    };
    let mut table = build_table(&spec)?;
    if let Some(desc) = h_desc {
        table.params.h_desc = Some(desc);
    }

    let mut report = Report::new(if is_build { "build-table" } else { "simulate-limits" });
    report.push("functional", &table.functional_id);
    report.push("p", p);
    report.push("grid", grid);
    report.push("reps", reps);
    report.push("seed", seed);
    report.push("discarded", table.discarded);
    if let Some(b) = table.params.b {
        report.push("b", b);
    }
    if let Some(desc) = &table.params.h_desc {
        report.push("H", desc);
    }
    for (l, v) in table.levels.iter().zip(table.values.iter()) {
        report.push(&format!("level {l}"), *v);
    }
    if let Some(path) = out {
        table.write_atomic(&path)?;
        report.push("written", path.display());
    }
    Ok(report.render())
}

fn demo_cmd(n_spec: &str, seed: Option<u64>) -> Result<String, CliError> {
    let seed = seed_or_default(seed);
    let ns: Vec<u64> = n_spec
        .split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("cannot parse sample size '{piece}'")))
        })
        .collect::<Result<_, _>>()?;
    let rows = counterexample_demo(&ns, seed)?;
    let mut report = Report::new("demo-counterexample");
    report.push("seed", seed);
    for row in &rows {
        report.push(&format!("block_len {}", row.n), row.block_len);
        report.push(&format!("planted {}", row.n), row.planted);
        report.push(&format!("value {}", row.n), row.value);
        match row.closed_form {
            Some(cf) => report.push(&format!("closed_form {}", row.n), cf),
            None => report.warn(format!(
                "n={}: prefix block mixes planted and uniform points; no closed form",
                row.n
            )),
        }
    }
    Ok(report.render())
}

fn check_identity(
    input: &Path,
    pairs: usize,
    seed: Option<u64>,
    tolerance: f64,
) -> Result<String, CliError> {
    let ingest = ingest_csv(input)?;
    let seed = seed_or_default(seed);
    let pair_list = random_delta_pairs(pairs, seed);
    let outcome = prop1_identity_check(&ingest.ts, &pair_list, tolerance);
    match outcome {
        Ok(res) => {
            let mut report = Report::new("check-identity");
            report.input(&ingest);
            report.push("pairs", res.pairs_checked);
            report.push("seed", seed);
            report.push("tolerance", tolerance);
            report.push("max_violation", res.max_violation);
            report.push("worst_s", res.worst_pair.0);
            report.push("worst_t", res.worst_pair.1);
            Ok(report.render())
        }
        // A violated identity is a numerical failure, not a usage problem.
        Err(SnError::InvalidInput(msg)) if msg.contains("identity") => {
            Err(CliError::Numeric(msg))
        }
        Err(e) => Err(e.into()),
    }
}

/// Time series constructor shared with integration tests.
pub fn series_from_values(values: Vec<f64>) -> Result<TimeSeries, CliError> {
    Ok(TimeSeries::from_column(values)?)
}
