//! Self-normalized change-point test.
//!
//! For a candidate break at k the contrast and its normalizer are
//!
//! ```text
//! T_n(k) = (k / sqrt(n)) (theta_hat_{1,k} - theta_hat_{1,n})
//! V_n(k) = n^{-2} { sum_{t=1}^{k}   t^2        (theta_hat_{1,t} - theta_hat_{1,k})(...)'
//!                 + sum_{t=k+1}^{n} (n-t+1)^2  (theta_hat_{t,n} - theta_hat_{k+1,n})(...)' }
//! ```
//!
//! and the statistic is `G_n = sup_k T_n(k)' V_n(k)^{-1} T_n(k)` over the
//! scanned k. Normalizing by `V_n(k)` instead of a kernel long-run variance
//! estimate avoids the bandwidth choice whose data-driven versions are known
//! to produce non-monotone power against large breaks.
//!
//! The scan runs in O(n p^2) using running moment accumulators for both
//! halves of `V_n(k)`; [`cp_normalizer`] recomputes a single k directly and
//! serves as the reference the fast path is tested against. Candidate k with
//! a singular `V_n(k)` are skipped and recorded; the clipped variant
//! restricts the scan to `k/n` in `[n^{-gamma}, 1 - n^{-gamma}]`.

use crate::error::{Result, SnError};
use crate::estimators::{recursive_estimates, reverse_recursive_estimates, EstimateSeq};
use crate::linalg::SymMat;
use crate::types::{Functional, TimeSeries};

/// Options for the change-point scan.
#[derive(Debug, Clone, Default)]
pub struct CpConfig {
    /// When set, clip the scan to `k/n` in `[n^{-gamma}, 1 - n^{-gamma}]`.
    pub gamma: Option<f64>,
    /// Keep the full per-k profile in the result.
    pub keep_per_k: bool,
}

/// One scanned candidate.
#[derive(Debug, Clone)]
pub struct CpPoint {
    pub k: usize,
    /// Contrast vector `T_n(k)`.
    pub t_stat: Vec<f64>,
    /// Quadratic-form value at this k.
    pub value: f64,
}

/// Outcome of the change-point test.
#[derive(Debug, Clone)]
pub struct CpResult {
    /// `sup_k` of the quadratic form over scanned k.
    pub statistic: f64,
    /// Smallest k attaining the supremum.
    pub argmax_k: usize,
    /// Full profile when requested.
    pub per_k: Option<Vec<CpPoint>>,
    pub clipped: bool,
    pub gamma: Option<f64>,
    /// Candidates skipped because their normalizer was singular or an
    /// estimate was undefined.
    pub skipped: Vec<usize>,
}

/// Direct computation of `V_n(k)` for a single k; the reference the
/// incremental scan is validated against.
pub fn cp_normalizer(ts: &TimeSeries, f: &Functional, k: usize) -> Result<SymMat> {
    let n = ts.len();
    if k == 0 || k >= n {
        return Err(SnError::invalid(format!(
            "change-point candidate must satisfy 1 <= k <= n-1, got k={k}, n={n}"
        )));
    }
    let prefix = recursive_estimates(ts, f)?;
    let suffix = reverse_recursive_estimates(ts, f)?;
    let p = f.output_dim(ts.dim());
    if !prefix.defined[k - 1] || !suffix.defined[k] {
        return Err(SnError::EstimatorUndefined(format!(
            "estimates flanking k={k} are undefined"
        )));
    }
    let mut v = SymMat::zeros(p);
    let mut dev = vec![0.0; p];
    for t in 1..=k {
        if !prefix.defined[t - 1] {
            continue;
        }
        for c in 0..p {
            dev[c] = prefix.values[t - 1][c] - prefix.values[k - 1][c];
        }
        v.add_outer(&dev, (t * t) as f64);
    }
    for t in (k + 1)..=n {
        if !suffix.defined[t - 1] {
            continue;
        }
        let w = (n - t + 1) * (n - t + 1);
        for c in 0..p {
            dev[c] = suffix.values[t - 1][c] - suffix.values[k][c];
        }
        v.add_outer(&dev, w as f64);
    }
    v.scale(1.0 / (n as f64 * n as f64));
    Ok(v)
}

pub(crate) struct ScanOutcome {
    pub statistic: f64,
    pub argmax_k: usize,
    pub per_k: Option<Vec<CpPoint>>,
    pub skipped: Vec<usize>,
}

/// Incremental scan over candidate k given prefix and suffix estimate
/// sequences. Shared by the plain test and its bootstrap calibration.
pub(crate) fn cp_scan(
    prefix: &EstimateSeq,
    suffix: &EstimateSeq,
    p: usize,
    k_lo: usize,
    k_hi: usize,
    keep_per_k: bool,
) -> Result<ScanOutcome> {
    let n = prefix.len();
    debug_assert_eq!(suffix.len(), n);
    if !prefix.defined[n - 1] {
        return Err(SnError::EstimatorUndefined(
            "full-sample estimate is undefined".to_string(),
        ));
    }
    let center = prefix.values[n - 1].clone();
    // Centered sequences: a_t = prefix_t - center, b_t = suffix_t - center.
    // Both halves of V_n(k) are invariant under the common shift, and the
    // centering keeps the running moments small.
    let a: Vec<Option<Vec<f64>>> = (0..n)
        .map(|i| {
            prefix.defined[i].then(|| {
                (0..p)
                    .map(|c| prefix.values[i][c] - center[c])
                    .collect::<Vec<f64>>()
            })
        })
        .collect();
    let b: Vec<Option<Vec<f64>>> = (0..n)
        .map(|i| {
            suffix.defined[i].then(|| {
                (0..p)
                    .map(|c| suffix.values[i][c] - center[c])
                    .collect::<Vec<f64>>()
            })
        })
        .collect();

    // Suffix accumulators: for each k, sums over t >= k+1 with weight
    // (n-t+1)^2 of b_t b_t', b_t and the bare weight.
    let mut n2 = vec![0.0; (n) * p * p];
    let mut n1 = vec![0.0; (n) * p];
    let mut t2 = vec![0.0; n];
    {
        let mut acc2 = vec![0.0; p * p];
        let mut acc1 = vec![0.0; p];
        let mut accw = 0.0;
        // entry k-1 holds sums over t >= k+1; build from t = n downward.
        for k in (1..=n).rev() {
            if k < n {
                let t = k + 1;
                if let Some(bt) = &b[t - 1] {
                    let w = ((n - t + 1) * (n - t + 1)) as f64;
                    for i in 0..p {
                        for j in 0..p {
                            acc2[i * p + j] += w * bt[i] * bt[j];
                        }
                        acc1[i] += w * bt[i];
                    }
                    accw += w;
                }
            }
            // Copy the state "sums over t >= k+1" minus... state currently
            // holds sums over t >= k+1 after the update above.
            n2[(k - 1) * p * p..k * p * p].copy_from_slice(&acc2);
            n1[(k - 1) * p..k * p].copy_from_slice(&acc1);
            t2[k - 1] = accw;
        }
    }

    // Forward accumulators grow as k advances.
    let mut m2 = vec![0.0; p * p];
    let mut m1 = vec![0.0; p];
    let mut s2 = 0.0;

    let sqrt_n = (n as f64).sqrt();
    let inv_n2 = 1.0 / (n as f64 * n as f64);
    let mut best: Option<(f64, usize)> = None;
    let mut per_k = keep_per_k.then(Vec::new);
    let mut skipped = Vec::new();

    for k in 1..=k_hi {
        if let Some(ak) = &a[k - 1] {
            let w = (k * k) as f64;
            for i in 0..p {
                for j in 0..p {
                    m2[i * p + j] += w * ak[i] * ak[j];
                }
                m1[i] += w * ak[i];
            }
            s2 += w;
        }
        if k < k_lo {
            continue;
        }
        let (Some(ak), Some(bk1)) = (&a[k - 1], &b[k]) else {
            skipped.push(k);
            continue;
        };
        // V_n(k) from the running moments.
        let mut v = SymMat::zeros(p);
        for i in 0..p {
            for j in 0..p {
                let fwd = m2[i * p + j] - m1[i] * ak[j] - ak[i] * m1[j] + s2 * ak[i] * ak[j];
                let idx = (k - 1) * p * p + i * p + j;
                let bwd = n2[idx] - n1[(k - 1) * p + i] * bk1[j] - bk1[i] * n1[(k - 1) * p + j]
                    + t2[k - 1] * bk1[i] * bk1[j];
                v.set(i, j, (fwd + bwd) * inv_n2);
            }
        }
        v.symmetrize();
        let t_stat: Vec<f64> = ak.iter().map(|x| k as f64 / sqrt_n * x).collect();
        match v.quad_form_inv(&t_stat, "change-point normalizer V_n(k)") {
            Ok((value, _)) => {
                if best.map_or(true, |(bv, _)| value > bv) {
                    best = Some((value, k));
                }
                if let Some(list) = per_k.as_mut() {
                    list.push(CpPoint { k, t_stat, value });
                }
            }
            Err(SnError::Singular { .. }) => skipped.push(k),
            Err(e) => return Err(e),
        }
    }

    let Some((statistic, argmax_k)) = best else {
        return Err(SnError::Singular {
            cond: f64::INFINITY,
            context: "every scanned k had a singular normalizer".to_string(),
        });
    };
    Ok(ScanOutcome {
        statistic,
        argmax_k,
        per_k,
        skipped,
    })
}

/// The change-point statistic `G_n` with the scan range implied by `config`.
pub fn cp_statistic(ts: &TimeSeries, f: &Functional, config: &CpConfig) -> Result<CpResult> {
    let n = ts.len();
    if n < 4 {
        return Err(SnError::invalid(format!(
            "change-point test needs n >= 4, got {n}"
        )));
    }
    let (k_lo, k_hi) = match config.gamma {
        None => (1, n - 1),
        Some(gamma) => {
            if !(gamma > 0.0 && gamma < 0.5) {
                return Err(SnError::config(format!(
                    "gamma must lie in (0, 1/2), got {gamma}"
                )));
            }
            let cut = (n as f64).powf(-gamma);
            let lo = (n as f64 * cut).ceil().max(1.0) as usize;
            let hi = ((n as f64) * (1.0 - cut)).floor().min((n - 1) as f64);
            if hi < 1.0 || lo as f64 > hi {
                return Err(SnError::config(format!(
                    "clipped scan range is empty at gamma={gamma}, n={n}; increase gamma"
                )));
            }
            (lo, hi as usize)
        }
    };
    let prefix = recursive_estimates(ts, f)?;
    let suffix = reverse_recursive_estimates(ts, f)?;
    let p = f.output_dim(ts.dim());
    let out = cp_scan(&prefix, &suffix, p, k_lo, k_hi, config.keep_per_k)?;
    Ok(CpResult {
        statistic: out.statistic,
        argmax_k: out.argmax_k,
        per_k: out.per_k,
        clipped: config.gamma.is_some(),
        gamma: config.gamma,
        skipped: out.skipped,
    })
}
