//! Shared domain types and indexing conventions.
//!
//! # Conventions
//!
//! Observation indices are 1-based in every public interface. A contiguous
//! block of data is addressed either by a [`SubsampleIndex`] `(j, k)` meaning
//! `X_j, ..., X_k`, or by a fractional pair `(s, t)` on the triangle
//! `Delta = {(s,t): 0 <= s <= t <= 1}`, with the correspondence
//!
//! ```text
//! (j, k)  <->  (s, t) = ((j-1)/n, k/n)
//! block(s, t) = X_{floor(n s)+1}, ..., X_{floor(n t)}
//! ```
//!
//! A fractional pair with `floor(n s) = floor(n t)` addresses the empty block;
//! estimators on the empty block are zero by convention (the `0/0 = 0` rule).
//! Floor computations snap values within a few ulps of an integer to that
//! integer so that the fraction round-trip is exact.

use crate::error::{Result, SnError};
use crate::hash::{fnv1a64_extend, fnv1a64_init};

/// An n x d data matrix; row i holds observation `X_i`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

impl TimeSeries {
    /// Build from row-major storage. Every entry must be finite, and
    /// `n >= 1`, `d >= 1`.
    pub fn new(values: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(SnError::invalid(format!(
                "time series must have n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if values.len() != n * d {
            return Err(SnError::invalid(format!(
                "storage length {} does not match n*d = {}",
                values.len(),
                n * d
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SnError::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(TimeSeries { values, n, d })
    }

    /// Univariate series from a vector.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        TimeSeries::new(values, n, 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Observation `X_i`, 1-based.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i >= 1 && i <= self.n);
        &self.values[(i - 1) * self.d..i * self.d]
    }

    /// The single column of a univariate series.
    pub fn column(&self) -> Result<&[f64]> {
        if self.d != 1 {
            return Err(SnError::invalid(format!(
                "operation requires a univariate series, got d={}",
                self.d
            )));
        }
        Ok(&self.values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// A plug-in estimator specification mapping any contiguous block to a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// Componentwise block average; output dimension d.
    Mean,
    /// Left-continuous inverse empirical CDF of a univariate block at `tau`.
    Quantile(f64),
    /// Block lag-h sample autocorrelation of a univariate block, centered at
    /// the block mean with the block variance sum as denominator.
    Autocorrelation(usize),
    /// Concatenation of child estimates.
    Composite(Vec<Functional>),
}

impl Functional {
    /// Output dimension p for data of dimension d.
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            Functional::Mean => d,
            Functional::Quantile(_) | Functional::Autocorrelation(_) => 1,
            Functional::Composite(children) => children.iter().map(|c| c.output_dim(d)).sum(),
        }
    }

    /// Check the functional against a data dimension.
    pub fn validate_for(&self, d: usize) -> Result<()> {
        match self {
            Functional::Mean => Ok(()),
            Functional::Quantile(tau) => {
                if d != 1 {
                    return Err(SnError::config(format!(
                        "quantile requires d=1, got d={d}"
                    )));
                }
                if !(*tau > 0.0 && *tau < 1.0) {
                    return Err(SnError::config(format!(
                        "quantile level must lie in (0,1), got {tau}"
                    )));
                }
                Ok(())
            }
            Functional::Autocorrelation(lag) => {
                if d != 1 {
                    return Err(SnError::config(format!(
                        "autocorrelation requires d=1, got d={d}"
                    )));
                }
                if *lag == 0 {
                    return Err(SnError::config("autocorrelation lag must be >= 1"));
                }
                Ok(())
            }
            Functional::Composite(children) => {
                if children.is_empty() {
                    return Err(SnError::config("composite functional must be non-empty"));
                }
                for c in children {
                    c.validate_for(d)?;
                }
                Ok(())
            }
        }
    }
}

/// A 1-based inclusive block index `(j, k)` addressing `X_j, ..., X_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsampleIndex {
    first: usize,
    last: usize,
}

impl SubsampleIndex {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first == 0 || first > last {
            return Err(SnError::invalid(format!(
                "subsample index must satisfy 1 <= j <= k, got ({first}, {last})"
            )));
        }
        Ok(SubsampleIndex { first, last })
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false // j <= k by construction
    }

    /// Map to the fractional pair `(s, t) = ((j-1)/n, k/n)`.
    ///
    /// Round-trips exactly: `floor(n s) + 1 = j` and `floor(n t) = k`.
    pub fn to_fraction(&self, n: usize) -> Result<(f64, f64)> {
        if self.last > n {
            return Err(SnError::invalid(format!(
                "subsample index ({}, {}) out of range for n={n}",
                self.first, self.last
            )));
        }
        let nf = n as f64;
        Ok(((self.first - 1) as f64 / nf, self.last as f64 / nf))
    }
}

/// `floor(n * x)` with snapping: values within a few ulps of an integer are
/// treated as that integer, so grid fractions like `k/n` floor back to `k`
/// exactly. The result is clamped to `[0, n]`.
pub fn floor_index(n: usize, x: f64) -> usize {
    let v = n as f64 * x;
    let r = v.round();
    let tol = 8.0 * f64::EPSILON * r.abs().max(1.0);
    let f = if (v - r).abs() <= tol { r } else { v.floor() };
    if f <= 0.0 {
        0
    } else if f >= n as f64 {
        n
    } else {
        f as usize
    }
}

/// Snap a fractional pair to its block, or `None` for the empty block.
pub fn block_from_fraction(n: usize, s: f64, t: f64) -> Option<SubsampleIndex> {
    let lo = floor_index(n, s);
    let hi = floor_index(n, t);
    if lo >= hi {
        None
    } else {
        Some(SubsampleIndex {
            first: lo + 1,
            last: hi,
        })
    }
}

/// One weighted atom of a discrete measure on the triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaAtom {
    pub s: f64,
    pub t: f64,
    pub weight: f64,
}

/// A discrete probability measure on `Delta = {(s,t): 0 <= s <= t <= 1}`.
///
/// Weights must be positive and sum to 1 within 1e-12. Continuous measures
/// are approximated by the caller through atom grids; see
/// [`DeltaMeasure::uniform_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMeasure {
    atoms: Vec<DeltaAtom>,
}

impl DeltaMeasure {
    pub fn new(atoms: Vec<DeltaAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(SnError::invalid("measure must have at least one atom"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.s.is_finite() && a.t.is_finite() && a.weight.is_finite()) {
                return Err(SnError::invalid(format!("non-finite atom at index {i}")));
            }
            if a.s < 0.0 || a.s > a.t || a.t > 1.0 {
                return Err(SnError::invalid(format!(
                    "atom {i} violates 0 <= s <= t <= 1: ({}, {})",
                    a.s, a.t
                )));
            }
            if a.weight <= 0.0 {
                return Err(SnError::invalid(format!(
                    "atom {i} has non-positive weight {}",
                    a.weight
                )));
            }
        }
        let total = kahan_sum(atoms.iter().map(|a| a.weight));
        if (total - 1.0).abs() > 1e-12 {
            return Err(SnError::invalid(format!(
                "atom weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        Ok(DeltaMeasure { atoms })
    }

    /// The recursive measure: uniform atoms on `{(0, j/n)}`, j = 1..n.
    /// Self-normalizers under this measure reproduce the classical recursive
    /// normalizer exactly.
    pub fn recursive(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SnError::invalid("recursive measure needs n >= 1"));
        }
        let w = 1.0 / n as f64;
        let nf = n as f64;
        DeltaMeasure::new(
            (1..=n)
                .map(|j| DeltaAtom {
                    s: 0.0,
                    t: j as f64 / nf,
                    weight: w,
                })
                .collect(),
        )
    }

    /// Uniform atoms on the equispaced triangle grid `{(i/k, j/k): i < j}`.
    pub fn uniform_grid(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(SnError::invalid("grid measure needs k >= 1"));
        }
        let count = k * (k + 1) / 2;
        let w = 1.0 / count as f64;
        let kf = k as f64;
        let mut atoms = Vec::with_capacity(count);
        for i in 0..k {
            for j in (i + 1)..=k {
                atoms.push(DeltaAtom {
                    s: i as f64 / kf,
                    t: j as f64 / kf,
                    weight: w,
                });
            }
        }
        DeltaMeasure::new(atoms)
    }

    pub fn atoms(&self) -> &[DeltaAtom] {
        &self.atoms
    }

    /// Total mass via compensated summation (1 within 1e-12 by construction).
    pub fn total_weight(&self) -> f64 {
        kahan_sum(self.atoms.iter().map(|a| a.weight))
    }

    /// Fingerprint of the atom list, used to match tables to measures.
    pub fn digest(&self) -> u64 {
        let mut h = fnv1a64_init();
        for a in &self.atoms {
            h = fnv1a64_extend(h, &a.s.to_bits().to_le_bytes());
            h = fnv1a64_extend(h, &a.t.to_bits().to_le_bytes());
            h = fnv1a64_extend(h, &a.weight.to_bits().to_le_bytes());
        }
        h
    }
}

/// Compensated (Kahan) summation.
pub fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Shared configuration: clipping exponent and base seed.
///
/// The norm is Euclidean throughout and the normalization rate is `sqrt(n)`;
/// neither is configurable.
#[derive(Debug, Clone)]
pub struct InferenceConfig {
    /// Clipping exponent gamma in (0, 1/2): clipped statistics drop blocks
    /// with fractional length at most `n^{-gamma}`.
    pub clip_gamma: f64,
    /// Base seed for every randomized computation.
    pub rng_seed: u64,
}

/// Default base seed, echoed by reports when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 0x5e1f_0000_2026_0808;

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            clip_gamma: 0.1,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_gamma > 0.0 && self.clip_gamma < 0.5) {
            return Err(SnError::config(format!(
                "clip_gamma must lie in (0, 1/2), got {}",
                self.clip_gamma
            )));
        }
        Ok(())
    }
}
