//! Multiplier bootstrap calibration.
//!
//! A bootstrap replicate perturbs the summands of every block estimate by
//! mean-1 random multipliers:
//!
//! ```text
//! theta_hat^b_{j,k} = phi( (1/(k-j+1)) sum_{i=j}^{k} M_i f(X_i) )
//! ```
//!
//! and the replicate statistic is built from the deviations
//! `delta_{j,k} = theta_hat^b_{j,k} - theta_hat_{j,k}` exactly where the
//! original statistic uses `theta_hat_{j,k} - theta0` deviations.
//! Conditionally on the data these deviations mimic the sampling fluctuations
//! of the subsample estimates, so the replicate distribution approximates the
//! null distribution of the statistic without knowing the long-run variance.
//!
//! Multiplier schemes: iid Gaussian (`M_i = 1 + eps_i`), iid Rademacher
//! (`M_i in {0, 2}`), and a dependent moving-average scheme for serially
//! dependent data: `M_i = 1 + w * sum_{|j| <= h} eps_{i+j}` with
//! `w = (2h+1)^{-1/2}` and half-width `h = floor(l_b / 2)`, so multipliers
//! more than `l_b` apart are independent.
//!
//! Mean-type functionals support the scheme directly; quantiles use the
//! weighted empirical CDF with negative weights clamped to zero and the mass
//! renormalized. Autocorrelation functionals are rejected: the multiplier
//! construction applies to sums of per-observation terms and its behavior on
//! lagged products is an open modeling question, so the crate refuses rather
//! than guess.
//!
//! Bootstrap p-values use the add-one convention `(1 + extreme) / (B + 1)`;
//! for the sn and cp statistics "extreme" means replicate >= observed, for
//! the fixed-b p-value it means replicate <= observed (small p-values are the
//! extreme ones). Replicates are deterministic per (scheme seed, B).

use crate::changepoint::cp_scan;
use crate::error::{Result, SnError};
use crate::estimators::{recursive_estimates, reverse_recursive_estimates, EstimateSeq};
use crate::fixedb::{fixedb_pvalue, window_estimates, window_length};
use crate::linalg::norm2;
use crate::rng::{derive_seed, rng_from_seed};
use crate::selfnorm::{sn_statistic, vn_from_prefix};
use crate::types::{Functional, SubsampleIndex, TimeSeries};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Multiplier generation scheme. Multipliers have mean 1 and variance 1 by
/// construction.
#[derive(Debug, Clone)]
pub enum MultiplierKind {
    IidGaussian,
    IidRademacher,
    /// Moving-average multipliers with dependence range `block_len`.
    BlockDependent {
        block_len: usize,
    },
}

#[derive(Debug, Clone)]
pub struct MultiplierScheme {
    pub kind: MultiplierKind,
    pub seed: u64,
}

impl MultiplierScheme {
    pub fn new(kind: MultiplierKind, seed: u64) -> Self {
        MultiplierScheme { kind, seed }
    }

    /// The default dependent block length `ceil(n^{1/3})`.
    pub fn default_block_len(n: usize) -> usize {
        (n as f64).cbrt().ceil() as usize
    }

    fn with_seed(&self, seed: u64) -> Self {
        MultiplierScheme {
            kind: self.kind.clone(),
            seed,
        }
    }
}

/// Draw the multiplier vector `M_1, ..., M_n`. Deterministic per seed.
pub fn generate_multipliers(scheme: &MultiplierScheme, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SnError::invalid("multiplier vector needs n >= 1"));
    }
    let mut rng = rng_from_seed(scheme.seed);
    match &scheme.kind {
        MultiplierKind::IidGaussian => Ok((0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.0 + z
            })
            .collect()),
        MultiplierKind::IidRademacher => Ok((0..n)
            .map(|_| if rng.random::<bool>() { 2.0 } else { 0.0 })
            .collect()),
        MultiplierKind::BlockDependent { block_len } => {
            if *block_len == 0 {
                return Err(SnError::config("block length must be >= 1"));
            }
            let h = block_len / 2;
            if h == 0 {
                // Range 1 degenerates to iid.
                return Ok((0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        1.0 + z
                    })
                    .collect());
            }
            let w = 1.0 / ((2 * h + 1) as f64).sqrt();
            let eps: Vec<f64> = (0..n + 2 * h)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            Ok((0..n)
                .map(|i| {
                    let window = &eps[i..i + 2 * h + 1];
                    1.0 + w * window.iter().sum::<f64>()
                })
                .collect())
        }
    }
}

/// Multiplier-weighted block estimate `theta_hat^b_{j,k}`.
///
/// With all multipliers equal to 1 this reproduces
/// [`crate::estimators::subsample_estimate`] exactly.
pub fn bootstrap_estimate(
    ts: &TimeSeries,
    f: &Functional,
    idx: SubsampleIndex,
    multipliers: &[f64],
) -> Result<Vec<f64>> {
    f.validate_for(ts.dim())?;
    if idx.last() > ts.len() {
        return Err(SnError::invalid(format!(
            "block ({}, {}) out of range for n={}",
            idx.first(),
            idx.last(),
            ts.len()
        )));
    }
    if multipliers.len() != ts.len() {
        return Err(SnError::invalid(
            "multiplier vector length must equal the sample size",
        ));
    }
    match f {
        Functional::Mean => {
            let d = ts.dim();
            let mut sums = vec![0.0; d];
            for i in idx.first()..=idx.last() {
                let row = ts.row(i);
                let m = multipliers[i - 1];
                for c in 0..d {
                    sums[c] += m * row[c];
                }
            }
            let len = idx.len() as f64;
            Ok(sums.into_iter().map(|s| s / len).collect())
        }
        Functional::Quantile(tau) => {
            let col = ts.column()?;
            let mut pairs: Vec<(f64, f64)> = (idx.first()..=idx.last())
                .map(|i| (col[i - 1], multipliers[i - 1].max(0.0)))
                .collect();
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
            if total <= 0.0 {
                return Err(SnError::EstimatorUndefined(
                    "all multiplier weights vanish on the block".to_string(),
                ));
            }
            let target = tau * total;
            let mut cum = 0.0;
            for &(x, w) in &pairs {
                cum += w;
                if cum >= target {
                    return Ok(vec![x]);
                }
            }
            Ok(vec![pairs.last().unwrap().0])
        }
        Functional::Autocorrelation(_) => Err(SnError::EstimatorUndefined(
            "multiplier bootstrap is not defined for autocorrelation functionals".to_string(),
        )),
        Functional::Composite(children) => {
            let mut out = Vec::new();
            for c in children {
                out.extend(bootstrap_estimate(ts, c, idx, multipliers)?);
            }
            Ok(out)
        }
    }
}

/// Which statistic the bootstrap calibrates.
#[derive(Debug, Clone)]
pub enum BootstrapKind {
    Sn { theta0: Vec<f64> },
    Cp,
    FixedB { b: f64, theta0: Vec<f64> },
}

/// Replicate distribution and add-one p-value.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// The statistic on the original data.
    pub observed: f64,
    /// Successful replicate statistics, in replication order.
    pub replicates: Vec<f64>,
    /// Add-one bootstrap p-value over the successful replicates.
    pub pvalue: f64,
    /// Number of degenerate replicates that were dropped.
    pub failed: usize,
}

impl BootstrapResult {
    /// Empirical quantile of the replicate distribution.
    pub fn replicate_quantile(&self, level: f64) -> f64 {
        let mut sorted = self.replicates.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let r = sorted.len();
        let rank = ((level * r as f64).ceil() as usize).clamp(1, r);
        sorted[rank - 1]
    }
}

/// Fenwick tree over value ranks holding multiplier weights; gives weighted
/// prefix quantiles in O(log n) per step.
struct RankWeights {
    tree: Vec<f64>,
    n: usize,
    total: f64,
}

impl RankWeights {
    fn new(n: usize) -> Self {
        RankWeights {
            tree: vec![0.0; n + 1],
            n,
            total: 0.0,
        }
    }

    fn add(&mut self, rank: usize, w: f64) {
        self.total += w;
        let mut i = rank;
        while i <= self.n {
            self.tree[i] += w;
            i += i & i.wrapping_neg();
        }
    }

    /// Smallest rank whose cumulative weight reaches `target`.
    fn descend(&self, target: f64) -> usize {
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = self.n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.n && self.tree[next] < rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        (pos + 1).min(self.n)
    }
}

/// Ranks of each observation in the globally sorted order (ties broken by
/// index), plus the sorted values for rank-to-value lookups.
fn global_ranks(col: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    let mut rank_of = vec![0usize; n];
    let mut sorted = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank_of[i] = r + 1;
        sorted[r] = col[i];
    }
    (rank_of, sorted)
}

/// Bootstrap-deviation prefix sequence `delta_{1,k} = theta^b_{1,k} - theta_{1,k}`.
fn deviation_prefix(
    ts: &TimeSeries,
    f: &Functional,
    multipliers: &[f64],
    plain_prefix: &EstimateSeq,
) -> Result<EstimateSeq> {
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    let mut values = vec![vec![0.0; p]; n];
    let mut defined = plain_prefix.defined.clone();

    fn fill(
        ts: &TimeSeries,
        f: &Functional,
        multipliers: &[f64],
        plain: &EstimateSeq,
        values: &mut [Vec<f64>],
        defined: &mut [bool],
        offset: usize,
    ) -> Result<usize> {
        let n = ts.len();
        match f {
            Functional::Mean => {
                let d = ts.dim();
                // delta_{1,k} = (1/k) sum_{i<=k} (M_i - 1) x_i
                let mut acc = vec![0.0; d];
                for k in 1..=n {
                    let row = ts.row(k);
                    let g = multipliers[k - 1] - 1.0;
                    for c in 0..d {
                        acc[c] += g * row[c];
                        values[k - 1][offset + c] = acc[c] / k as f64;
                    }
                }
                Ok(offset + d)
            }
            Functional::Quantile(tau) => {
                let col = ts.column()?;
                let (rank_of, sorted) = global_ranks(col);
                let mut fen = RankWeights::new(n);
                for k in 1..=n {
                    fen.add(rank_of[k - 1], multipliers[k - 1].max(0.0));
                    if fen.total <= 0.0 {
                        values[k - 1][offset] = 0.0;
                        defined[k - 1] = false;
                        continue;
                    }
                    let rank = fen.descend(tau * fen.total);
                    values[k - 1][offset] = sorted[rank - 1] - plain.values[k - 1][offset];
                }
                Ok(offset + 1)
            }
            Functional::Autocorrelation(_) => Err(SnError::EstimatorUndefined(
                "multiplier bootstrap is not defined for autocorrelation functionals".to_string(),
            )),
            Functional::Composite(children) => {
                let mut off = offset;
                for c in children {
                    off = fill(ts, c, multipliers, plain, values, defined, off)?;
                }
                Ok(off)
            }
        }
    }

    // For the mean the deviation is computed directly; for quantiles it is
    // bootstrap quantile minus plain quantile, so the plain sequence layout
    // must match the composite layout, which it does by construction.
    fill(
        ts,
        f,
        multipliers,
        plain_prefix,
        &mut values,
        &mut defined,
        0,
    )?;
    Ok(EstimateSeq { values, defined })
}

/// Suffix counterpart of [`deviation_prefix`]: `delta_{t,n}` indexed by t.
fn deviation_suffix(
    ts: &TimeSeries,
    f: &Functional,
    multipliers: &[f64],
    plain_suffix: &EstimateSeq,
) -> Result<EstimateSeq> {
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    let mut values = vec![vec![0.0; p]; n];
    let mut defined = plain_suffix.defined.clone();

    fn fill(
        ts: &TimeSeries,
        f: &Functional,
        multipliers: &[f64],
        plain: &EstimateSeq,
        values: &mut [Vec<f64>],
        defined: &mut [bool],
        offset: usize,
    ) -> Result<usize> {
        let n = ts.len();
        match f {
            Functional::Mean => {
                let d = ts.dim();
                let mut acc = vec![0.0; d];
                for t in (1..=n).rev() {
                    let row = ts.row(t);
                    let g = multipliers[t - 1] - 1.0;
                    let len = (n - t + 1) as f64;
                    for c in 0..d {
                        acc[c] += g * row[c];
                        values[t - 1][offset + c] = acc[c] / len;
                    }
                }
                Ok(offset + d)
            }
            Functional::Quantile(tau) => {
                let col = ts.column()?;
                let (rank_of, sorted) = global_ranks(col);
                let mut fen = RankWeights::new(n);
                for t in (1..=n).rev() {
                    fen.add(rank_of[t - 1], multipliers[t - 1].max(0.0));
                    if fen.total <= 0.0 {
                        values[t - 1][offset] = 0.0;
                        defined[t - 1] = false;
                        continue;
                    }
                    let rank = fen.descend(tau * fen.total);
                    values[t - 1][offset] = sorted[rank - 1] - plain.values[t - 1][offset];
                }
                Ok(offset + 1)
            }
            Functional::Autocorrelation(_) => Err(SnError::EstimatorUndefined(
                "multiplier bootstrap is not defined for autocorrelation functionals".to_string(),
            )),
            Functional::Composite(children) => {
                let mut off = offset;
                for c in children {
                    off = fill(ts, c, multipliers, plain, values, defined, off)?;
                }
                Ok(off)
            }
        }
    }

    fill(
        ts,
        f,
        multipliers,
        plain_suffix,
        &mut values,
        &mut defined,
        0,
    )?;
    Ok(EstimateSeq { values, defined })
}

/// Bootstrap window deviations for the fixed-b replicate.
fn deviation_windows(
    ts: &TimeSeries,
    f: &Functional,
    multipliers: &[f64],
    l: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = ts.len();
    let n_windows = n - l + 1;
    let plain = window_estimates(ts, f, l)?;
    match f {
        Functional::Mean => {
            let d = ts.dim();
            // Sliding sums of (M_i - 1) x_i.
            let mut out = vec![vec![0.0; d]; n_windows];
            let mut acc = vec![0.0; d];
            for i in 1..=l {
                let row = ts.row(i);
                let g = multipliers[i - 1] - 1.0;
                for c in 0..d {
                    acc[c] += g * row[c];
                }
            }
            for c in 0..d {
                out[0][c] = acc[c] / l as f64;
            }
            for j in 2..=n_windows {
                let leaving = ts.row(j - 1);
                let gl = multipliers[j - 2] - 1.0;
                let entering = ts.row(j + l - 1);
                let ge = multipliers[j + l - 2] - 1.0;
                for c in 0..d {
                    acc[c] += ge * entering[c] - gl * leaving[c];
                    out[j - 1][c] = acc[c] / l as f64;
                }
            }
            Ok(out)
        }
        Functional::Quantile(tau) => {
            let col = ts.column()?;
            let (rank_of, sorted) = global_ranks(col);
            let mut fen = RankWeights::new(n);
            for i in 1..=l {
                fen.add(rank_of[i - 1], multipliers[i - 1].max(0.0));
            }
            let mut out = vec![vec![0.0]; n_windows];
            for j in 1..=n_windows {
                if j > 1 {
                    fen.add(rank_of[j - 2], -multipliers[j - 2].max(0.0));
                    fen.add(
                        rank_of[j + l - 2],
                        multipliers[j + l - 2].max(0.0),
                    );
                }
                if fen.total <= 1e-12 {
                    return Err(SnError::EstimatorUndefined(
                        "all multiplier weights vanish on a window".to_string(),
                    ));
                }
                let rank = fen.descend(tau * fen.total);
                out[j - 1][0] = sorted[rank - 1] - plain[j - 1][0];
            }
            Ok(out)
        }
        _ => {
            // Remaining cases go through the per-block path (errors for
            // autocorrelation).
            let mut out = Vec::with_capacity(n_windows);
            for j in 1..=n_windows {
                let idx = SubsampleIndex::new(j, j + l - 1)?;
                let boot = bootstrap_estimate(ts, f, idx, multipliers)?;
                let dev: Vec<f64> = boot
                    .iter()
                    .zip(plain[j - 1].iter())
                    .map(|(a, b)| a - b)
                    .collect();
                out.push(dev);
            }
            Ok(out)
        }
    }
}

fn replicate_statistic(
    ts: &TimeSeries,
    f: &Functional,
    kind: &BootstrapKind,
    multipliers: &[f64],
    plain_prefix: &EstimateSeq,
    plain_suffix: Option<&EstimateSeq>,
) -> Result<f64> {
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    match kind {
        BootstrapKind::Sn { .. } => {
            let dev = deviation_prefix(ts, f, multipliers, plain_prefix)?;
            let v = vn_from_prefix(&dev, p)?;
            let numer = dev.values[n - 1].clone();
            let (q, _) = v.quad_form_inv(&numer, "bootstrap normalizer")?;
            Ok(n as f64 * q)
        }
        BootstrapKind::Cp => {
            let dev_pre = deviation_prefix(ts, f, multipliers, plain_prefix)?;
            let dev_suf = deviation_suffix(ts, f, multipliers, plain_suffix.unwrap())?;
            let out = cp_scan(&dev_pre, &dev_suf, p, 1, n - 1, false)?;
            Ok(out.statistic)
        }
        BootstrapKind::FixedB { b, .. } => {
            let l = window_length(n, *b)?;
            let dev_pre = deviation_prefix(ts, f, multipliers, plain_prefix)?;
            if !dev_pre.defined[n - 1] {
                return Err(SnError::EstimatorUndefined(
                    "bootstrap full-sample deviation undefined".to_string(),
                ));
            }
            let full_dev = &dev_pre.values[n - 1];
            let sqrt_n = (n as f64).sqrt();
            let full_norm = sqrt_n * norm2(full_dev);
            let windows = deviation_windows(ts, f, multipliers, l)?;
            let sqrt_l = (l as f64).sqrt();
            let count = windows
                .iter()
                .filter(|w| {
                    let dev: Vec<f64> = w
                        .iter()
                        .zip(full_dev.iter())
                        .map(|(a, b)| sqrt_l * (a - b))
                        .collect();
                    full_norm <= norm2(&dev)
                })
                .count();
            Ok(count as f64 / windows.len() as f64)
        }
    }
}

/// The add-one convention: `(1 + extreme) / (B + 1)`, never exactly zero.
fn add_one_pvalue(extreme: usize, total: usize) -> f64 {
    (1 + extreme) as f64 / (total + 1) as f64
}

/// Run the multiplier bootstrap: B replicates of the chosen statistic and
/// the add-one p-value against the observed value.
pub fn bootstrap_distribution(
    ts: &TimeSeries,
    f: &Functional,
    kind: &BootstrapKind,
    scheme: &MultiplierScheme,
    b_reps: usize,
) -> Result<BootstrapResult> {
    if b_reps < 100 {
        return Err(SnError::config(format!(
            "bootstrap needs at least 100 replicates, got {b_reps}"
        )));
    }
    f.validate_for(ts.dim())?;
    let n = ts.len();

    let observed = match kind {
        BootstrapKind::Sn { theta0 } => sn_statistic(ts, f, theta0)?.statistic,
        BootstrapKind::Cp => {
            crate::changepoint::cp_statistic(ts, f, &crate::changepoint::CpConfig::default())?
                .statistic
        }
        BootstrapKind::FixedB { b, theta0 } => fixedb_pvalue(ts, f, theta0, *b)?.pvalue,
    };

    let plain_prefix = recursive_estimates(ts, f)?;
    let plain_suffix = match kind {
        BootstrapKind::Cp => Some(reverse_recursive_estimates(ts, f)?),
        _ => None,
    };

    let mut replicates = Vec::with_capacity(b_reps);
    let mut failed = 0usize;
    for rep in 0..b_reps {
        let rep_scheme = scheme.with_seed(derive_seed(scheme.seed, rep as u64));
        let multipliers = generate_multipliers(&rep_scheme, n)?;
        match replicate_statistic(
            ts,
            f,
            kind,
            &multipliers,
            &plain_prefix,
            plain_suffix.as_ref(),
        ) {
            Ok(v) => replicates.push(v),
            Err(SnError::Singular { .. }) | Err(SnError::EstimatorUndefined(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed * 20 > b_reps {
        return Err(SnError::BootstrapUnstable {
            failed,
            total: b_reps,
        });
    }

    let extreme = match kind {
        BootstrapKind::Sn { .. } | BootstrapKind::Cp => {
            replicates.iter().filter(|&&v| v >= observed).count()
        }
        // Small fixed-b p-values are the extreme ones.
        BootstrapKind::FixedB { .. } => replicates.iter().filter(|&&v| v <= observed).count(),
    };
    let pvalue = add_one_pvalue(extreme, replicates.len());

    Ok(BootstrapResult {
        observed,
        replicates,
        pvalue,
        failed,
    })
}
