//! Sequential empirical process evaluation, the two-parameter mean identity
//! harness, and the small-subsample divergence demo.
//!
//! For a univariate sample and the indicator class `f = I{. <= y}` the
//! two-parameter sequential empirical process is
//!
//! ```text
//! Y_n(s, t, y) = (t - s) sqrt(n) ( Fhat_{s,t}(y) - F_ref(y) )
//! ```
//!
//! with `Fhat_{s,t}` the empirical CDF of the snapped block and the value
//! defined as zero on empty blocks. Evaluation uses one sort of the data plus
//! a prefix-count structure swept along the sorted `y` grid.
//!
//! The identity harness checks the exact algebra that links block estimates
//! to prefix estimates for mean-type functionals:
//!
//! ```text
//! yhat_{s,t} - x = n / ((floor(nt) - floor(ns)) v 1)
//!                  * ( floor(nt)/n (xhat_t - x) - floor(ns)/n (xhat_s - x) )
//! ```
//!
//! The identity is affine-invariant in the reference point `x`, so the
//! harness evaluates it at `x = 0`. Any violation beyond a few ulps is an
//! implementation bug, which is exactly what the harness is for.
//!
//! The divergence demo plants a diverging triangular scheme (`X_j = n` for
//! `j^3 < n`, the rest uniform) and evaluates the `(t-s)`-weighted median
//! deviation at `t = n^{-3/4}`. When the prefix block consists only of
//! planted points the value is exactly `n^{-1/4}(n - 1/2)`, which grows
//! without bound: weighting by `t - s` cannot tame estimators on blocks
//! whose fraction shrinks too fast. The clipped statistics exist for exactly
//! this reason.

use crate::error::{Result, SnError};
use crate::estimators::MeanPrefix;
use crate::rng::{derive_seed, rng_from_seed};
use crate::types::{floor_index, TimeSeries};
use rand::Rng;

/// Values of the sequential empirical process on a `(s,t) x y` grid.
#[derive(Debug, Clone)]
pub struct SeqProcessValues {
    pub y_grid: Vec<f64>,
    pub st_grid: Vec<(f64, f64)>,
    /// `values[pair_index][y_index]`.
    pub values: Vec<Vec<f64>>,
}

struct CountTree {
    tree: Vec<usize>,
    n: usize,
}

impl CountTree {
    fn new(n: usize) -> Self {
        CountTree {
            tree: vec![0; n + 1],
            n,
        }
    }

    fn insert(&mut self, mut pos: usize) {
        while pos <= self.n {
            self.tree[pos] += 1;
            pos += pos & pos.wrapping_neg();
        }
    }

    fn prefix(&self, mut pos: usize) -> usize {
        let mut acc = 0;
        while pos > 0 {
            acc += self.tree[pos];
            pos -= pos & pos.wrapping_neg();
        }
        acc
    }

    fn range(&self, lo: usize, hi: usize) -> usize {
        // counts inserted positions in [lo, hi], 1-based
        self.prefix(hi) - self.prefix(lo - 1)
    }
}

/// Evaluate `Y_n` over a y-grid and a list of fractional block pairs.
///
/// `reference_cdf[j]` is the reference CDF at `y_grid[j]`; the grid must be
/// sorted and the reference values nondecreasing in `[0, 1]`.
pub fn sequential_process(
    ts: &TimeSeries,
    y_grid: &[f64],
    st_grid: &[(f64, f64)],
    reference_cdf: &[f64],
) -> Result<SeqProcessValues> {
    let col = ts.column()?;
    let n = ts.len();
    if reference_cdf.len() != y_grid.len() {
        return Err(SnError::invalid(
            "reference CDF must align with the y grid",
        ));
    }
    for w in y_grid.windows(2) {
        if w[0] > w[1] {
            return Err(SnError::invalid("y grid must be sorted ascending"));
        }
    }
    for w in reference_cdf.windows(2) {
        if w[0] > w[1] {
            return Err(SnError::invalid("reference CDF must be nondecreasing"));
        }
    }
    if reference_cdf
        .iter()
        .any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite())
    {
        return Err(SnError::invalid("reference CDF values must lie in [0,1]"));
    }
    for &(s, t) in st_grid {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) || s > t {
            return Err(SnError::invalid(format!(
                "pair ({s}, {t}) is not in the triangle"
            )));
        }
    }

    // Positions sorted by data value: inserting them in value order makes the
    // tree hold exactly {i : X_i <= y} after each sweep step.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]));

    let blocks: Vec<Option<(usize, usize)>> = st_grid
        .iter()
        .map(|&(s, t)| {
            let lo = floor_index(n, s);
            let hi = floor_index(n, t);
            (lo < hi).then_some((lo + 1, hi))
        })
        .collect();

    let sqrt_n = (n as f64).sqrt();
    let mut tree = CountTree::new(n);
    let mut inserted = 0usize;
    let mut values = vec![vec![0.0; y_grid.len()]; st_grid.len()];
    for (yi, (&y, &reference)) in y_grid.iter().zip(reference_cdf.iter()).enumerate() {
        while inserted < n && col[order[inserted]] <= y {
            tree.insert(order[inserted] + 1);
            inserted += 1;
        }
        for (pi, block) in blocks.iter().enumerate() {
            let (s, t) = st_grid[pi];
            values[pi][yi] = match block {
                None => 0.0,
                Some((lo, hi)) => {
                    let count = tree.range(*lo, *hi) as f64;
                    let len = (hi - lo + 1) as f64;
                    (t - s) * sqrt_n * (count / len - reference)
                }
            };
        }
    }
    Ok(SeqProcessValues {
        y_grid: y_grid.to_vec(),
        st_grid: st_grid.to_vec(),
        values,
    })
}

/// Outcome of the two-parameter identity check.
#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub max_violation: f64,
    pub worst_pair: (f64, f64),
    pub pairs_checked: usize,
}

/// Verify the block-to-prefix representation for the mean over the given
/// fractional pairs. Violations are measured relative to
/// `max(1, |lhs|, |rhs|)`; exceeding `tolerance` is an error because the
/// identity is exact algebra.
pub fn prop1_identity_check(
    ts: &TimeSeries,
    pairs: &[(f64, f64)],
    tolerance: f64,
) -> Result<Prop1Report> {
    let n = ts.len();
    let d = ts.dim();
    let pre = MeanPrefix::new(ts);
    let mut max_violation = 0.0f64;
    let mut worst_pair = (0.0, 0.0);
    for &(s, t) in pairs {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) || s > t {
            return Err(SnError::invalid(format!(
                "pair ({s}, {t}) is not in the triangle"
            )));
        }
        let lo = floor_index(n, s);
        let hi = floor_index(n, t);
        let xs = pre.prefix_mean(lo);
        let xt = pre.prefix_mean(hi);
        let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };
        let nf = n as f64;
        for c in 0..d {
            let lhs = if lo >= hi {
                0.0
            } else {
                pre.block_sum(lo + 1, hi, c) / (hi - lo) as f64
            };
            let rhs = nf / span * (hi as f64 / nf * xt[c] - lo as f64 / nf * xs[c]);
            let denom = lhs.abs().max(rhs.abs()).max(1.0);
            let violation = (lhs - rhs).abs() / denom;
            if violation > max_violation {
                max_violation = violation;
                worst_pair = (s, t);
            }
        }
    }
    if max_violation > tolerance {
        return Err(SnError::invalid(format!(
            "two-parameter identity violated: {max_violation:.3e} > {tolerance:.3e} at (s,t) = \
             ({}, {})",
            worst_pair.0, worst_pair.1
        )));
    }
    Ok(Prop1Report {
        max_violation,
        worst_pair,
        pairs_checked: pairs.len(),
    })
}

/// Random pairs on the triangle, for the identity harness.
pub fn random_delta_pairs(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

/// One row of the divergence demo.
#[derive(Debug, Clone)]
pub struct CounterexampleRow {
    pub n: u64,
    /// Number of planted extreme points (`j` with `j^3 < n`).
    pub planted: u64,
    /// Prefix block length `floor(n * n^{-3/4})`.
    pub block_len: usize,
    /// Whether the prefix block consists only of planted points.
    pub fully_planted: bool,
    /// `sqrt(n) * t * (median - 1/2)` at `t = n^{-3/4}`.
    pub value: f64,
    /// `n^{-1/4}(n - 1/2)`, exactly attained when `fully_planted`.
    pub closed_form: Option<f64>,
}

/// Evaluate the weighted median deviation at `t = n^{-3/4}` on the planted
/// triangular scheme, one row per requested n.
pub fn counterexample_demo(ns: &[u64], seed: u64) -> Result<Vec<CounterexampleRow>> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 2 {
            return Err(SnError::invalid("demo needs n >= 2"));
        }
        let nf = n as f64;
        let root2 = nf.sqrt();
        let root4 = root2.sqrt();
        let t = 1.0 / (root2 * root4); // n^{-3/4}
        let block_len = floor_index(n as usize, t);
        if block_len == 0 {
            return Err(SnError::invalid(format!(
                "prefix block is empty at n={n}; the demo needs floor(n^(1/4)) >= 1"
            )));
        }
        let mut planted = 0u64;
        while (planted + 1).pow(3) < n {
            planted += 1;
        }
        let mut rng = rng_from_seed(derive_seed(seed, n));
        let data: Vec<f64> = (1..=n as usize)
            .map(|j| {
                if (j as u64) <= planted {
                    nf
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let mut block: Vec<f64> = data[..block_len].to_vec();
        block.sort_unstable_by(f64::total_cmp);
        let median = crate::estimators::quantile_sorted(&block, 0.5);
        let value = (root2 * t) * (median - 0.5);
        let fully_planted = block_len as u64 <= planted;
        let closed_form = fully_planted.then(|| (nf - 0.5) / root4);
        rows.push(CounterexampleRow {
            n,
            planted,
            block_len,
            fully_planted,
            value,
            closed_form,
        });
    }
    Ok(rows)
}
