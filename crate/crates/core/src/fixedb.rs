//! Fixed-b subsampling: the subsample distribution estimator and its p-value.
//!
//! With window length `l = round(b n)` and `N = n - l + 1` overlapping
//! windows, the subsampling estimate of the distribution of the full-sample
//! deviation norm is
//!
//! ```text
//! L_{n,l}(x) = N^{-1} sum_j I{ ||sqrt(l) (theta_hat_{j, j+l-1} - theta_hat_{1,n})|| <= x }
//! ```
//!
//! and the p-value of the test of `theta = theta0` is the fraction of windows
//! whose scaled deviation norm is at least the full-sample statistic:
//!
//! ```text
//! p_hat_n(b) = N^{-1} sum_j I{ ||sqrt(n)(theta_hat_{1,n} - theta0)||
//!                              <= ||sqrt(l)(theta_hat_{j,j+l-1} - theta_hat_{1,n})|| }
//! ```
//!
//! Under fixed-b asymptotics (window fraction `b` held constant) `p_hat_n(b)`
//! is not asymptotically uniform; its null limit is the Brownian functional
//! `G(b)` simulated by [`crate::limits::limit_fixedb_g`], and calibrated
//! decisions compare `p_hat_n(b)` against quantiles of that limit. Only the
//! scalar case is pivotal; for p > 1 the limit depends on the long-run
//! variance and a square root of it must be supplied to the simulation.
//!
//! Window norms use prefix sums for the mean (O(n) for all windows) and a
//! sliding order-statistic buffer for quantiles; other functionals are
//! recomputed per window.

use crate::error::{Result, SnError};
use crate::estimators::{quantile_sorted, subsample_estimate, MeanPrefix};
use crate::linalg::norm2;
use crate::types::{Functional, SubsampleIndex, TimeSeries};

/// Outcome of a fixed-b p-value evaluation.
#[derive(Debug, Clone)]
pub struct FixedBResult {
    /// `p_hat_n(b)`: an exact rational count over windows.
    pub pvalue: f64,
    /// Window fraction as requested.
    pub b: f64,
    /// Window length `round(b n)`, at least 1.
    pub l: usize,
    /// Number of windows `n - l + 1`.
    pub n_windows: usize,
    /// Scaled deviation norm per window.
    pub subsample_norms: Vec<f64>,
    /// `||sqrt(n)(theta_hat - theta0)||`.
    pub full_norm: f64,
}

/// Estimates on every length-l window, in window order j = 1..N.
pub(crate) fn window_estimates(ts: &TimeSeries, f: &Functional, l: usize) -> Result<Vec<Vec<f64>>> {
    let n = ts.len();
    let n_windows = n - l + 1;
    match f {
        Functional::Mean => {
            let d = ts.dim();
            let pre = MeanPrefix::new(ts);
            Ok((1..=n_windows)
                .map(|j| {
                    (0..d)
                        .map(|c| pre.block_sum(j, j + l - 1, c) / l as f64)
                        .collect()
                })
                .collect())
        }
        Functional::Quantile(tau) => {
            let col = ts.column()?;
            let mut sorted: Vec<f64> = col[..l].to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            let mut out = Vec::with_capacity(n_windows);
            out.push(vec![quantile_sorted(&sorted, *tau)]);
            for j in 2..=n_windows {
                let leaving = col[j - 2];
                let entering = col[j + l - 2];
                let pos = sorted.partition_point(|&v| v < leaving);
                debug_assert!(pos < sorted.len() && sorted[pos] == leaving);
                sorted.remove(pos);
                let pos = sorted.partition_point(|&v| v < entering);
                sorted.insert(pos, entering);
                out.push(vec![quantile_sorted(&sorted, *tau)]);
            }
            Ok(out)
        }
        _ => {
            // Per-window recomputation for autocorrelation and composites.
            (1..=n_windows)
                .map(|j| subsample_estimate(ts, f, SubsampleIndex::new(j, j + l - 1)?))
                .collect()
        }
    }
}

/// `||sqrt(l)(window estimate - full estimate)||` per window.
fn window_norms(ts: &TimeSeries, f: &Functional, l: usize) -> Result<Vec<f64>> {
    let n = ts.len();
    let full = subsample_estimate(ts, f, SubsampleIndex::new(1, n)?)?;
    let sqrt_l = (l as f64).sqrt();
    let estimates = window_estimates(ts, f, l)?;
    Ok(estimates
        .into_iter()
        .map(|est| {
            let dev: Vec<f64> = est
                .iter()
                .zip(full.iter())
                .map(|(a, b)| sqrt_l * (a - b))
                .collect();
            norm2(&dev)
        })
        .collect())
}

pub(crate) fn window_length(n: usize, b: f64) -> Result<usize> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(SnError::config(format!(
            "window fraction b must lie in (0, 1], got {b}"
        )));
    }
    Ok(((b * n as f64).round() as usize).clamp(1, n))
}

/// The subsampling CDF estimate `L_{n,l}` evaluated on a grid.
pub fn subsampling_distribution(
    ts: &TimeSeries,
    f: &Functional,
    l: usize,
    x_grid: &[f64],
) -> Result<Vec<f64>> {
    f.validate_for(ts.dim())?;
    let n = ts.len();
    if l == 0 || l > n {
        return Err(SnError::invalid(format!(
            "window length must satisfy 1 <= l <= n, got l={l}, n={n}"
        )));
    }
    let mut norms = window_norms(ts, f, l)?;
    norms.sort_unstable_by(f64::total_cmp);
    let n_windows = norms.len() as f64;
    Ok(x_grid
        .iter()
        .map(|&x| norms.partition_point(|&v| v <= x) as f64 / n_windows)
        .collect())
}

/// The fixed-b p-value `p_hat_n(b)` for the null value `theta0`.
pub fn fixedb_pvalue(
    ts: &TimeSeries,
    f: &Functional,
    theta0: &[f64],
    b: f64,
) -> Result<FixedBResult> {
    f.validate_for(ts.dim())?;
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    if theta0.len() != p || theta0.iter().any(|v| !v.is_finite()) {
        return Err(SnError::invalid(format!(
            "theta0 must be a finite vector of dimension {p}"
        )));
    }
    let l = window_length(n, b)?;
    let full = subsample_estimate(ts, f, SubsampleIndex::new(1, n)?)?;
    let sqrt_n = (n as f64).sqrt();
    let dev: Vec<f64> = full
        .iter()
        .zip(theta0.iter())
        .map(|(a, b)| sqrt_n * (a - b))
        .collect();
    let full_norm = norm2(&dev);
    let subsample_norms = window_norms(ts, f, l)?;
    let count = subsample_norms.iter().filter(|&&v| full_norm <= v).count();
    let n_windows = subsample_norms.len();
    Ok(FixedBResult {
        pvalue: count as f64 / n_windows as f64,
        b,
        l,
        n_windows,
        subsample_norms,
        full_norm,
    })
}
