//! Subsample estimators and their accelerated grids.
//!
//! The central object is the block estimate `theta_hat_{n,j,k}`: the plug-in
//! functional applied to `X_j, ..., X_k`. Three access patterns are needed by
//! the inference layers and each has a dedicated fast path:
//!
//! - recursive estimates `theta_hat_{n,1,k}`, k = 1..n (prefix sweep);
//! - reverse recursive estimates `theta_hat_{n,t,n}`, t = 1..n (suffix sweep);
//! - arbitrary block grids (compensated prefix sums for the mean,
//!   order-statistic selection for quantiles, two-pass moments for
//!   autocorrelations).
//!
//! The mean fast paths use compensated prefix sums and must agree with plain
//! per-block re-summation to 1e-12; the test suites enforce this against
//! naive reimplementations.
//!
//! Entries that the functional does not define on a given block (a prefix
//! shorter than lag + 2, a zero-variance block) are recorded as zero with a
//! `defined = false` flag in sequence and grid outputs, mirroring the
//! empty-block zero convention. Single-block calls return errors instead.

use std::collections::BTreeMap;

use crate::error::{Result, SnError};
use crate::types::{Functional, SubsampleIndex, TimeSeries};

/// A sequence of block estimates indexed by block number (1-based offset 0).
#[derive(Debug, Clone)]
pub struct EstimateSeq {
    /// Estimate vectors; entry `i` holds the estimate for block number `i+1`.
    pub values: Vec<Vec<f64>>,
    /// Definedness flags aligned with `values`; undefined entries hold zeros.
    pub defined: Vec<bool>,
}

impl EstimateSeq {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One grid entry: the estimate and whether it is defined on that block.
#[derive(Debug, Clone)]
pub struct GridEntry {
    pub value: Vec<f64>,
    pub defined: bool,
}

/// Block estimates over an explicit list of index pairs.
#[derive(Debug, Clone)]
pub struct EstimateGrid {
    pub functional: Functional,
    pub n: usize,
    pub entries: BTreeMap<SubsampleIndex, GridEntry>,
}

/// Compensated prefix sums over the columns of a series; block sums and means
/// in O(1) per query.
#[derive(Debug, Clone)]
pub struct MeanPrefix {
    d: usize,
    /// `sums[k*d + c]` = compensated sum of column c over rows 1..=k.
    sums: Vec<f64>,
}

impl MeanPrefix {
    pub fn new(ts: &TimeSeries) -> Self {
        let n = ts.len();
        let d = ts.dim();
        let mut sums = vec![0.0; (n + 1) * d];
        let mut acc = vec![0.0; d];
        let mut comp = vec![0.0; d];
        for i in 1..=n {
            let row = ts.row(i);
            for c in 0..d {
                let y = row[c] - comp[c];
                let t = acc[c] + y;
                comp[c] = (t - acc[c]) - y;
                acc[c] = t;
                sums[i * d + c] = acc[c];
            }
        }
        MeanPrefix { d, sums }
    }

    /// Sum of column c over rows j..=k.
    pub fn block_sum(&self, j: usize, k: usize, c: usize) -> f64 {
        self.sums[k * self.d + c] - self.sums[(j - 1) * self.d + c]
    }

    /// Block mean vector over rows j..=k.
    pub fn block_mean(&self, j: usize, k: usize) -> Vec<f64> {
        let len = (k - j + 1) as f64;
        (0..self.d).map(|c| self.block_sum(j, k, c) / len).collect()
    }

    /// Prefix mean over rows 1..=k, or zeros for k = 0 (the 0/0 = 0 rule).
    pub fn prefix_mean(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            vec![0.0; self.d]
        } else {
            self.block_mean(1, k)
        }
    }
}

/// Left-continuous inverse empirical CDF of a sorted slice at level `tau`:
/// the `ceil(tau * len)`-th order statistic.
pub fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let len = sorted.len() as f64;
    let rank = (tau * len).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn quantile_of_block(block: &[f64], tau: f64) -> f64 {
    let mut v = block.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&v, tau)
}

/// Two-pass block autocorrelation at the given lag; errors on blocks shorter
/// than lag + 2 and on zero block variance.
fn block_autocorrelation(data: &[f64], j: usize, k: usize, lag: usize) -> Result<f64> {
    let len = k - j + 1;
    if len < lag + 2 {
        return Err(SnError::EstimatorUndefined(format!(
            "autocorrelation at lag {lag} needs a block of length >= {}, got {len}",
            lag + 2
        )));
    }
    let block = &data[j - 1..k];
    let mean = block.iter().sum::<f64>() / len as f64;
    let mut den = 0.0;
    for &x in block {
        let d = x - mean;
        den += d * d;
    }
    if den == 0.0 {
        return Err(SnError::Singular {
            cond: f64::INFINITY,
            context: format!("autocorrelation denominator is zero on block ({j}, {k})"),
        });
    }
    let mut num = 0.0;
    for i in 0..(len - lag) {
        num += (block[i] - mean) * (block[i + lag] - mean);
    }
    Ok(num / den)
}

fn estimate_on_block(
    ts: &TimeSeries,
    f: &Functional,
    idx: SubsampleIndex,
    prefix: Option<&MeanPrefix>,
) -> Result<Vec<f64>> {
    match f {
        Functional::Mean => {
            if let Some(pre) = prefix {
                Ok(pre.block_mean(idx.first(), idx.last()))
            } else {
                // Plain in-order summation; the prefix path is validated
                // against this one.
                let d = ts.dim();
                let mut sums = vec![0.0; d];
                for i in idx.first()..=idx.last() {
                    let row = ts.row(i);
                    for c in 0..d {
                        sums[c] += row[c];
                    }
                }
                let len = idx.len() as f64;
                Ok(sums.into_iter().map(|s| s / len).collect())
            }
        }
        Functional::Quantile(tau) => {
            let col = ts.column()?;
            Ok(vec![quantile_of_block(
                &col[idx.first() - 1..idx.last()],
                *tau,
            )])
        }
        Functional::Autocorrelation(lag) => {
            let col = ts.column()?;
            Ok(vec![block_autocorrelation(
                col,
                idx.first(),
                idx.last(),
                *lag,
            )?])
        }
        Functional::Composite(children) => {
            let mut out = Vec::with_capacity(f.output_dim(ts.dim()));
            for c in children {
                out.extend(estimate_on_block(ts, c, idx, prefix)?);
            }
            Ok(out)
        }
    }
}

/// The block estimate `theta_hat_{n,j,k}` on `X_j, ..., X_k`.
pub fn subsample_estimate(ts: &TimeSeries, f: &Functional, idx: SubsampleIndex) -> Result<Vec<f64>> {
    f.validate_for(ts.dim())?;
    if idx.last() > ts.len() {
        return Err(SnError::invalid(format!(
            "block ({}, {}) out of range for n={}",
            idx.first(),
            idx.last(),
            ts.len()
        )));
    }
    estimate_on_block(ts, f, idx, None)
}

enum SweepDir {
    Forward,
    Backward,
}

/// Shared sweep for recursive and reverse recursive estimates.
fn sweep_estimates(ts: &TimeSeries, f: &Functional, dir: SweepDir) -> Result<EstimateSeq> {
    f.validate_for(ts.dim())?;
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    let mut values = vec![vec![0.0; p]; n];
    let mut defined = vec![true; n];

    // Column layout of a composite: fill child by child into the right slots.
    fn fill(
        ts: &TimeSeries,
        f: &Functional,
        dir: &SweepDir,
        values: &mut [Vec<f64>],
        defined: &mut [bool],
        offset: usize,
    ) -> Result<usize> {
        let n = ts.len();
        match f {
            Functional::Mean => {
                let d = ts.dim();
                let pre = MeanPrefix::new(ts);
                for i in 0..n {
                    let (j, k) = match dir {
                        SweepDir::Forward => (1, i + 1),
                        SweepDir::Backward => (i + 1, n),
                    };
                    let m = pre.block_mean(j, k);
                    values[i][offset..offset + d].copy_from_slice(&m);
                }
                Ok(offset + d)
            }
            Functional::Quantile(tau) => {
                let col = ts.column()?;
                // Order-statistic sweep: extend a sorted buffer one point at
                // a time instead of re-sorting every block.
                let mut sorted: Vec<f64> = Vec::with_capacity(n);
                match dir {
                    SweepDir::Forward => {
                        for i in 0..n {
                            let x = col[i];
                            let pos = sorted.partition_point(|&v| v < x);
                            sorted.insert(pos, x);
                            values[i][offset] = quantile_sorted(&sorted, *tau);
                        }
                    }
                    SweepDir::Backward => {
                        for i in (0..n).rev() {
                            let x = col[i];
                            let pos = sorted.partition_point(|&v| v < x);
                            sorted.insert(pos, x);
                            values[i][offset] = quantile_sorted(&sorted, *tau);
                        }
                    }
                }
                Ok(offset + 1)
            }
            Functional::Autocorrelation(lag) => {
                let col = ts.column()?;
                for i in 0..n {
                    let (j, k) = match dir {
                        SweepDir::Forward => (1, i + 1),
                        SweepDir::Backward => (i + 1, n),
                    };
                    match block_autocorrelation(col, j, k, *lag) {
                        Ok(v) => values[i][offset] = v,
                        Err(_) => {
                            // Flagged zero, the sequence-level convention.
                            values[i][offset] = 0.0;
                            defined[i] = false;
                        }
                    }
                }
                Ok(offset + 1)
            }
            Functional::Composite(children) => {
                let mut off = offset;
                for c in children {
                    off = fill(ts, c, dir, values, defined, off)?;
                }
                Ok(off)
            }
        }
    }

    fill(ts, f, &dir, &mut values, &mut defined, 0)?;
    Ok(EstimateSeq { values, defined })
}

/// Recursive estimates `theta_hat_{n,1,k}` for k = 1..n.
pub fn recursive_estimates(ts: &TimeSeries, f: &Functional) -> Result<EstimateSeq> {
    sweep_estimates(ts, f, SweepDir::Forward)
}

/// Reverse recursive estimates `theta_hat_{n,t,n}` for t = 1..n; entry `t-1`
/// holds the estimate on the suffix `X_t, ..., X_n`.
pub fn reverse_recursive_estimates(ts: &TimeSeries, f: &Functional) -> Result<EstimateSeq> {
    sweep_estimates(ts, f, SweepDir::Backward)
}

/// Fill a grid of block estimates over explicit index pairs.
///
/// Deterministic: entries are keyed by the index pair. Blocks on which the
/// functional is undefined are stored as flagged zeros.
pub fn grid_estimates(
    ts: &TimeSeries,
    f: &Functional,
    pairs: &[SubsampleIndex],
) -> Result<EstimateGrid> {
    f.validate_for(ts.dim())?;
    let n = ts.len();
    let p = f.output_dim(ts.dim());
    let needs_prefix = matches!(f, Functional::Mean | Functional::Composite(_));
    let prefix = needs_prefix.then(|| MeanPrefix::new(ts));
    let mut entries = BTreeMap::new();
    for &idx in pairs {
        if idx.last() > n {
            return Err(SnError::invalid(format!(
                "block ({}, {}) out of range for n={n}",
                idx.first(),
                idx.last()
            )));
        }
        let entry = match estimate_on_block(ts, f, idx, prefix.as_ref()) {
            Ok(value) => GridEntry {
                value,
                defined: true,
            },
            Err(SnError::EstimatorUndefined(_)) | Err(SnError::Singular { .. }) => GridEntry {
                value: vec![0.0; p],
                defined: false,
            },
            Err(e) => return Err(e),
        };
        entries.insert(idx, entry);
    }
    Ok(EstimateGrid {
        functional: f.clone(),
        n,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_seed, rng_from_seed};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ts1(values: &[f64]) -> TimeSeries {
        TimeSeries::from_column(values.to_vec()).unwrap()
    }

    fn normal_series(n: usize, seed: u64) -> TimeSeries {
        let mut rng = rng_from_seed(seed);
        ts1(&(0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>())
    }

    #[test]
    fn block_mean_trivial() {
        let ts = ts1(&[1.0, 2.0, 3.0, 4.0]);
        let idx = SubsampleIndex::new(1, 4).unwrap();
        let est = subsample_estimate(&ts, &Functional::Mean, idx).unwrap();
        assert_eq!(est, vec![2.5]);
    }

    #[test]
    fn block_median_left_continuous() {
        let ts = ts1(&[3.0, 1.0, 2.0]);
        let idx = SubsampleIndex::new(1, 3).unwrap();
        let est = subsample_estimate(&ts, &Functional::Quantile(0.5), idx).unwrap();
        assert_eq!(est, vec![2.0]);
        // Even block: lower middle order statistic.
        let ts = ts1(&[4.0, 1.0, 3.0, 2.0]);
        let est =
            subsample_estimate(&ts, &Functional::Quantile(0.5), SubsampleIndex::new(1, 4).unwrap())
                .unwrap();
        assert_eq!(est, vec![2.0]);
    }

    #[test]
    fn acf_on_ar1_matches_direct_oracle() {
        // AR(1) with coefficient 0.5; lag-1 autocorrelation should be near 0.5.
        let n = 100_000;
        let mut rng = rng_from_seed(derive_seed(0xA51, 0));
        let mut x = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            prev = 0.5 * prev + eps;
            x.push(prev);
        }
        let ts = ts1(&x);
        let est = subsample_estimate(
            &ts,
            &Functional::Autocorrelation(1),
            SubsampleIndex::new(1, n).unwrap(),
        )
        .unwrap()[0];

        // Independent straightforward implementation.
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            den += (x[i] - mean) * (x[i] - mean);
            if i + 1 < n {
                num += (x[i] - mean) * (x[i + 1] - mean);
            }
        }
        let oracle = num / den;
        assert!((est - oracle).abs() <= 1e-12);
        assert!((est - 0.5).abs() <= 0.02, "lag-1 acf {est} not near 0.5");
    }

    #[test]
    fn acf_error_paths() {
        let ts = ts1(&[1.0, 2.0]);
        let idx = SubsampleIndex::new(1, 2).unwrap();
        assert!(matches!(
            subsample_estimate(&ts, &Functional::Autocorrelation(1), idx),
            Err(SnError::EstimatorUndefined(_))
        ));
        let flat = ts1(&[2.0; 10]);
        let idx = SubsampleIndex::new(1, 10).unwrap();
        assert!(matches!(
            subsample_estimate(&flat, &Functional::Autocorrelation(1), idx),
            Err(SnError::Singular { .. })
        ));
    }

    #[test]
    fn recursive_means_trivial() {
        let ts = ts1(&[1.0, 2.0, 3.0]);
        let seq = recursive_estimates(&ts, &Functional::Mean).unwrap();
        let flat: Vec<f64> = seq.values.iter().map(|v| v[0]).collect();
        assert_eq!(flat, vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn recursive_medians_trivial() {
        let ts = ts1(&[5.0, 1.0, 3.0]);
        let seq = recursive_estimates(&ts, &Functional::Quantile(0.5)).unwrap();
        let flat: Vec<f64> = seq.values.iter().map(|v| v[0]).collect();
        assert_eq!(flat, vec![5.0, 1.0, 3.0]);
    }

    #[test]
    fn recursive_mean_prefix_matches_naive() {
        let ts = normal_series(1000, 7);
        let seq = recursive_estimates(&ts, &Functional::Mean).unwrap();
        let col = ts.column().unwrap();
        let mut max_diff = 0.0f64;
        for k in 1..=1000usize {
            let naive = col[..k].iter().sum::<f64>() / k as f64;
            max_diff = max_diff.max((seq.values[k - 1][0] - naive).abs());
        }
        assert!(max_diff <= 1e-12, "max abs diff {max_diff}");
    }

    #[test]
    fn reverse_recursive_means_trivial() {
        let ts = ts1(&[1.0, 2.0, 3.0]);
        let seq = reverse_recursive_estimates(&ts, &Functional::Mean).unwrap();
        let flat: Vec<f64> = seq.values.iter().map(|v| v[0]).collect();
        assert_eq!(flat, vec![2.0, 2.5, 3.0]);
    }

    #[test]
    fn reverse_matches_reversed_forward_for_mean() {
        let ts = normal_series(257, 11);
        let rev_vals = reverse_recursive_estimates(&ts, &Functional::Mean).unwrap();
        let col = ts.column().unwrap();
        let reversed = ts1(&col.iter().rev().copied().collect::<Vec<f64>>());
        let fwd = recursive_estimates(&reversed, &Functional::Mean).unwrap();
        // Suffix of length L equals the prefix of length L of the reversed series.
        for t in 1..=257usize {
            let len = 257 - t + 1;
            let a = rev_vals.values[t - 1][0];
            let b = fwd.values[len - 1][0];
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reverse_recursive_medians_match_naive() {
        let ts = normal_series(500, 23);
        let col = ts.column().unwrap();
        let seq = reverse_recursive_estimates(&ts, &Functional::Quantile(0.5)).unwrap();
        for t in 1..=500usize {
            let naive = quantile_of_block(&col[t - 1..], 0.5);
            assert_eq!(seq.values[t - 1][0], naive);
        }
    }

    #[test]
    fn grid_full_sample_and_empty() {
        let ts = normal_series(50, 3);
        let full = SubsampleIndex::new(1, 50).unwrap();
        let grid = grid_estimates(&ts, &Functional::Mean, &[full]).unwrap();
        assert_eq!(grid.entries.len(), 1);
        let direct = subsample_estimate(&ts, &Functional::Mean, full).unwrap();
        assert!((grid.entries[&full].value[0] - direct[0]).abs() <= 1e-12);

        let empty = grid_estimates(&ts, &Functional::Mean, &[]).unwrap();
        assert!(empty.entries.is_empty());
    }

    #[test]
    fn grid_all_pairs_matches_naive_oracle() {
        let n = 20;
        let ts = normal_series(n, 5);
        let col = ts.column().unwrap();
        let mut pairs = Vec::new();
        for j in 1..=n {
            for k in j..=n {
                pairs.push(SubsampleIndex::new(j, k).unwrap());
            }
        }
        assert_eq!(pairs.len(), 210);
        let grid = grid_estimates(&ts, &Functional::Mean, &pairs).unwrap();
        for &idx in &pairs {
            let naive =
                col[idx.first() - 1..idx.last()].iter().sum::<f64>() / idx.len() as f64;
            let got = grid.entries[&idx].value[0];
            assert!((got - naive).abs() <= 1e-12, "block {idx:?}");
        }
    }

    #[test]
    fn two_parameter_identity_for_mean() {
        // (k - j + 1) theta_{j,k} = k theta_{1,k} - (j-1) theta_{1,j-1}
        let n = 300;
        let ts = normal_series(n, 13);
        let rec = recursive_estimates(&ts, &Functional::Mean).unwrap();
        let pre = MeanPrefix::new(&ts);
        for j in 1..=n {
            for k in j..=n {
                let lhs = (k - j + 1) as f64 * pre.block_mean(j, k)[0];
                let tail = if j >= 2 {
                    (j - 1) as f64 * rec.values[j - 2][0]
                } else {
                    0.0
                };
                let rhs = k as f64 * rec.values[k - 1][0] - tail;
                let denom = lhs.abs().max(rhs.abs()).max(1.0);
                assert!(
                    (lhs - rhs).abs() / denom <= 1e-12,
                    "violation at ({j},{k}): {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn affine_equivariance() {
        let ts = normal_series(200, 17);
        let col = ts.column().unwrap();
        let a = 2.5;
        let c = -0.75;
        let tx = ts1(&col.iter().map(|x| a * x + c).collect::<Vec<f64>>());
        let full = SubsampleIndex::new(1, 200).unwrap();

        let m0 = subsample_estimate(&ts, &Functional::Mean, full).unwrap()[0];
        let m1 = subsample_estimate(&tx, &Functional::Mean, full).unwrap()[0];
        assert!((m1 - (a * m0 + c)).abs() <= 1e-12 * m1.abs().max(1.0));

        // Quantile: the transformed order statistic is picked verbatim.
        let q0 = subsample_estimate(&ts, &Functional::Quantile(0.3), full).unwrap()[0];
        let q1 = subsample_estimate(&tx, &Functional::Quantile(0.3), full).unwrap()[0];
        assert_eq!(q1, a * q0 + c);
    }

    #[test]
    fn permutation_invariance_within_block() {
        let ts = normal_series(151, 29);
        let col = ts.column().unwrap();
        let mut perm = col.to_vec();
        // deterministic shuffle
        let mut rng = rng_from_seed(31);
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let tp = ts1(&perm);
        let full = SubsampleIndex::new(1, 151).unwrap();
        let m0 = subsample_estimate(&ts, &Functional::Mean, full).unwrap()[0];
        let m1 = subsample_estimate(&tp, &Functional::Mean, full).unwrap()[0];
        assert!((m0 - m1).abs() <= 1e-12 * m0.abs().max(1.0));
        let q0 = subsample_estimate(&ts, &Functional::Quantile(0.7), full).unwrap()[0];
        let q1 = subsample_estimate(&tp, &Functional::Quantile(0.7), full).unwrap()[0];
        assert_eq!(q0, q1);
    }

    #[test]
    fn recursive_quantile_sweep_matches_naive_selection() {
        let ts = normal_series(300, 37);
        let col = ts.column().unwrap();
        let seq = recursive_estimates(&ts, &Functional::Quantile(0.25)).unwrap();
        for k in 1..=300usize {
            let naive = quantile_of_block(&col[..k], 0.25);
            assert_eq!(seq.values[k - 1][0], naive, "prefix {k}");
        }
    }

    #[test]
    fn acf_recursive_flags_short_prefixes() {
        let ts = normal_series(40, 41);
        let seq = recursive_estimates(&ts, &Functional::Autocorrelation(3)).unwrap();
        for k in 1..=4usize {
            assert!(!seq.defined[k - 1]);
            assert_eq!(seq.values[k - 1][0], 0.0);
        }
        assert!(seq.defined[5..].iter().all(|&d| d));
    }

    #[test]
    fn composite_concatenates() {
        let ts = normal_series(60, 43);
        let f = Functional::Composite(vec![Functional::Mean, Functional::Quantile(0.5)]);
        let full = SubsampleIndex::new(1, 60).unwrap();
        let est = subsample_estimate(&ts, &f, full).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!(
            est[0],
            subsample_estimate(&ts, &Functional::Mean, full).unwrap()[0]
        );
        assert_eq!(
            est[1],
            subsample_estimate(&ts, &Functional::Quantile(0.5), full).unwrap()[0]
        );
    }
}
