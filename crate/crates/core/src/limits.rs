//! Monte Carlo simulation of the Brownian limit functionals.
//!
//! Every statistic in this crate converges to a functional of a p-dimensional
//! standard Brownian motion `B` on `[0,1]`:
//!
//! ```text
//! sn:      B(1)' [ int_0^1 (B(t) - t B(1))(B(t) - t B(1))' dt ]^{-1} B(1)
//! gsn(H):  B(1)' W(H)^{-1} B(1),
//!          W(H) = int (B(t)-B(s) - (t-s)B(1))(...)' dH(s,t)
//! cp:      sup_r (B(r) - r B(1))' W_r^{-1} (B(r) - r B(1)),
//!          W_r = int_0^r (B(s) - (s/r) B(r))(...)' ds
//!              + int_r^1 (D(s) - ((1-s)/(1-r)) D(r))(...)' ds,   D(s) = B(1) - B(s)
//! fixedb:  (1-b)^{-1} int_0^{1-b} I{ ||B(1)|| <= ||B(t+b) - B(t) - b B(1)|| / sqrt(b) } dt
//! ```
//!
//! The first three are invariant under any invertible linear map of the path
//! (the long-run variance cancels in the quadratic form), which is what makes
//! the limits pivotal; the fixed-b indicator functional is pivotal only for
//! p = 1, and for p > 1 a square root of the long-run variance must be
//! supplied.
//!
//! Integrals are left Riemann sums on the path grid, matching the floor
//! lattice of the finite-n statistics. Paths that produce a singular
//! integral matrix signal a resample: [`build_table`] redraws with a derived
//! retry seed, counts the discard, and fails if more than 1% of replications
//! discard (a sign the grid is too coarse). Tables are deterministic per
//! (seed, reps, grid): replication seeds are counter-derived, so evaluation
//! order cannot matter.

use crate::error::{Result, SnError};
use crate::linalg::{matvec, norm2, SymMat};
use crate::rng::{derive_seed2, rng_from_seed};
use crate::table::{
    CriticalValueTable, TableParams, FUNCTIONAL_CP, FUNCTIONAL_FIXEDB, FUNCTIONAL_GSN,
    FUNCTIONAL_SN,
};
use crate::types::{floor_index, DeltaMeasure};
use rand_distr::{Distribution, StandardNormal};

/// A simulated p-dimensional Brownian path on the uniform grid `i/m`.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    p: usize,
    m: usize,
    /// Row-major (m+1) x p; row i holds `B(i/m)`, row 0 is zero.
    values: Vec<f64>,
}

impl BrownianPath {
    /// Simulate from independent Gaussian increments with variance `1/m`.
    /// Deterministic per seed.
    pub fn simulate(p: usize, m: usize, seed: u64) -> Result<Self> {
        if p == 0 || m < 2 {
            return Err(SnError::invalid(format!(
                "path needs p >= 1 and m >= 2, got p={p}, m={m}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (m as f64).sqrt();
        let mut values = vec![0.0; (m + 1) * p];
        for i in 1..=m {
            for c in 0..p {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[i * p + c] = values[(i - 1) * p + c] + scale * z;
            }
        }
        Ok(BrownianPath { p, m, values })
    }

    /// Wrap raw values; row 0 must be zero.
    pub fn from_values(p: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 || m < 2 || values.len() != (m + 1) * p {
            return Err(SnError::invalid("path shape mismatch"));
        }
        if values[..p].iter().any(|&v| v != 0.0) {
            return Err(SnError::invalid("path must start at zero"));
        }
        Ok(BrownianPath { p, m, values })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn grid(&self) -> usize {
        self.m
    }

    /// `B(i/m)` as a slice.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    /// Apply a p x p row-major matrix to every path value. Used to impose a
    /// long-run variance square root, and by the pivotality checks.
    pub fn linear_map(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.p * self.p {
            return Err(SnError::invalid("linear map must be p x p row-major"));
        }
        let mut values = vec![0.0; (self.m + 1) * self.p];
        for i in 0..=self.m {
            let y = matvec(a, self.value(i), self.p);
            values[i * self.p..(i + 1) * self.p].copy_from_slice(&y);
        }
        BrownianPath::from_values(self.p, self.m, values)
    }
}

/// The self-normalized limit functional evaluated on one path.
pub fn limit_sn_statistic(path: &BrownianPath) -> Result<f64> {
    let p = path.p;
    let m = path.m;
    let end = path.value(m).to_vec();
    let mut mat = SymMat::zeros(p);
    let mut dev = vec![0.0; p];
    for i in 0..m {
        let t = i as f64 / m as f64;
        let b = path.value(i);
        for c in 0..p {
            dev[c] = b[c] - t * end[c];
        }
        mat.add_outer(&dev, 1.0);
    }
    mat.scale(1.0 / m as f64);
    let (q, _) = mat.quad_form_inv(&end, "limit integral matrix")?;
    Ok(q)
}

/// The generalized limit functional for a measure `H` on the triangle.
/// Atom endpoints snap to the path grid by the floor convention.
pub fn limit_generalized_sn(path: &BrownianPath, h: &DeltaMeasure) -> Result<f64> {
    let p = path.p;
    let m = path.m;
    let end = path.value(m).to_vec();
    let mut w = SymMat::zeros(p);
    let mut dev = vec![0.0; p];
    let mut mass = 0.0;
    for atom in h.atoms() {
        let is = floor_index(m, atom.s);
        let it = floor_index(m, atom.t);
        mass += atom.weight;
        if is >= it {
            continue;
        }
        let span = (it - is) as f64 / m as f64;
        let bs = path.value(is);
        let bt = path.value(it);
        for c in 0..p {
            dev[c] = bt[c] - bs[c] - span * end[c];
        }
        w.add_outer(&dev, atom.weight);
    }
    w.scale(1.0 / mass);
    let (q, _) = w.quad_form_inv(&end, "limit W(H); H may need more atoms")?;
    Ok(q)
}

/// All interior grid points `i/m`, the default scan grid for the
/// change-point limit.
pub fn interior_r_grid(m: usize) -> Vec<f64> {
    (1..m).map(|i| i as f64 / m as f64).collect()
}

/// The change-point limit functional: sup over the snapped `r_grid` of the
/// normalized bridge quadratic form. Singular candidates are skipped.
pub fn limit_cp_statistic(path: &BrownianPath, r_grid: &[f64]) -> Result<f64> {
    let p = path.p;
    let m = path.m;
    let mf = m as f64;
    let end = path.value(m).to_vec();

    // Snap the grid to interior indices.
    let mut indices: Vec<usize> = r_grid
        .iter()
        .map(|&r| floor_index(m, r))
        .filter(|&i| i >= 1 && i < m)
        .collect();
    indices.sort_unstable();
    indices.dedup();
    if indices.is_empty() {
        return Err(SnError::invalid(
            "r_grid snapped to no interior grid point",
        ));
    }

    // Prefix moments over j < i of (t_j^2, t_j B_j, B_j B_j') and suffix
    // moments over j >= i of ((1-t_j)^2, (1-t_j) D_j, D_j D_j') with
    // D_j = B(1) - B(t_j). Left Riemann sums for both integrals.
    let pp = p * p;
    let mut pre_t2 = vec![0.0; m + 1];
    let mut pre_tb = vec![0.0; (m + 1) * p];
    let mut pre_bb = vec![0.0; (m + 1) * pp];
    for i in 0..m {
        let t = i as f64 / mf;
        let b = path.value(i);
        pre_t2[i + 1] = pre_t2[i] + t * t;
        for r in 0..p {
            pre_tb[(i + 1) * p + r] = pre_tb[i * p + r] + t * b[r];
            for c in 0..p {
                pre_bb[(i + 1) * pp + r * p + c] = pre_bb[i * pp + r * p + c] + b[r] * b[c];
            }
        }
    }
    let mut suf_w2 = vec![0.0; m + 1];
    let mut suf_wd = vec![0.0; (m + 1) * p];
    let mut suf_dd = vec![0.0; (m + 1) * pp];
    let mut d = vec![0.0; p];
    for i in (0..m).rev() {
        let t = i as f64 / mf;
        let b = path.value(i);
        for c in 0..p {
            d[c] = end[c] - b[c];
        }
        let w = 1.0 - t;
        suf_w2[i] = suf_w2[i + 1] + w * w;
        for r in 0..p {
            suf_wd[i * p + r] = suf_wd[(i + 1) * p + r] + w * d[r];
            for c in 0..p {
                suf_dd[i * pp + r * p + c] = suf_dd[(i + 1) * pp + r * p + c] + d[r] * d[c];
            }
        }
    }

    let mut best: Option<f64> = None;
    let mut numer = vec![0.0; p];
    let mut dr = vec![0.0; p];
    for &ir in &indices {
        let r = ir as f64 / mf;
        let br = path.value(ir);
        for c in 0..p {
            numer[c] = br[c] - r * end[c];
            dr[c] = end[c] - br[c];
        }
        let mut w = SymMat::zeros(p);
        for i in 0..p {
            for j in 0..p {
                let fwd = pre_bb[ir * pp + i * p + j]
                    - (pre_tb[ir * p + i] * br[j] + br[i] * pre_tb[ir * p + j]) / r
                    + pre_t2[ir] / (r * r) * br[i] * br[j];
                let bwd = suf_dd[ir * pp + i * p + j]
                    - (suf_wd[ir * p + i] * dr[j] + dr[i] * suf_wd[ir * p + j]) / (1.0 - r)
                    + suf_w2[ir] / ((1.0 - r) * (1.0 - r)) * dr[i] * dr[j];
                w.set(i, j, (fwd + bwd) / mf);
            }
        }
        w.symmetrize();
        match w.quad_form_inv(&numer, "change-point limit W_r") {
            Ok((value, _)) => {
                if best.map_or(true, |b| value > b) {
                    best = Some(value);
                }
            }
            Err(SnError::Singular { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| SnError::Singular {
        cond: f64::INFINITY,
        context: "W_r singular at every scanned r".to_string(),
    })
}

/// The fixed-b limit `G(b)` on one path: the left-Riemann average over
/// `t in [0, 1-b]` of the window-deviation indicator. `b` snaps to the path
/// grid. For p = 1 the statistic is scale-free and `sigma_half` is ignored;
/// for p > 1 it is applied to the path first (the limit is not pivotal).
pub fn limit_fixedb_g(path: &BrownianPath, b: f64, sigma_half: Option<&[f64]>) -> Result<f64> {
    let m = path.m;
    if !(b > 0.0 && b < 1.0) {
        return Err(SnError::config(format!(
            "window fraction b must lie in (0,1), got {b}"
        )));
    }
    let mapped;
    let path = if path.p > 1 {
        match sigma_half {
            Some(a) => {
                mapped = path.linear_map(a)?;
                &mapped
            }
            None => path,
        }
    } else {
        path
    };
    let l = ((b * m as f64).round() as usize).clamp(1, m - 1);
    let b_eff = l as f64 / m as f64;
    let sqrt_b = b_eff.sqrt();
    let p = path.p;
    let end = path.value(m).to_vec();
    let end_norm = norm2(&end);
    let mut count = 0usize;
    let windows = m - l;
    let mut dev = vec![0.0; p];
    for i in 0..windows {
        let lo = path.value(i);
        let hi = path.value(i + l);
        for c in 0..p {
            dev[c] = hi[c] - lo[c] - b_eff * end[c];
        }
        if end_norm <= norm2(&dev) / sqrt_b {
            count += 1;
        }
    }
    Ok(count as f64 / windows as f64)
}

/// Which limit a table tabulates, with its parameters.
#[derive(Debug, Clone)]
pub enum LimitFunctional {
    Sn,
    GeneralizedSn(DeltaMeasure),
    Cp,
    FixedB {
        b: f64,
        sigma_half: Option<Vec<f64>>,
    },
}

impl LimitFunctional {
    pub fn functional_id(&self) -> &'static str {
        match self {
            LimitFunctional::Sn => FUNCTIONAL_SN,
            LimitFunctional::GeneralizedSn(_) => FUNCTIONAL_GSN,
            LimitFunctional::Cp => FUNCTIONAL_CP,
            LimitFunctional::FixedB { .. } => FUNCTIONAL_FIXEDB,
        }
    }

    /// Evaluate on one path. The change-point limit scans the full interior
    /// grid of the path.
    pub fn eval(&self, path: &BrownianPath) -> Result<f64> {
        match self {
            LimitFunctional::Sn => limit_sn_statistic(path),
            LimitFunctional::GeneralizedSn(h) => limit_generalized_sn(path, h),
            LimitFunctional::Cp => limit_cp_statistic(path, &interior_r_grid(path.grid())),
            LimitFunctional::FixedB { b, sigma_half } => {
                limit_fixedb_g(path, *b, sigma_half.as_deref())
            }
        }
    }
}

/// Inputs for a table build.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub functional: LimitFunctional,
    pub p: usize,
    pub levels: Vec<f64>,
    pub reps: usize,
    pub grid_m: usize,
    pub seed: u64,
}

/// A dense default level grid: percent steps plus common tail levels.
pub fn default_levels() -> Vec<f64> {
    let mut levels: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for extra in [0.005, 0.025, 0.975, 0.995, 0.999] {
        levels.push(extra);
    }
    levels.sort_unstable_by(f64::total_cmp);
    levels.dedup();
    levels
}

const MAX_REDRAWS: usize = 8;

/// Draw `reps` independent paths, evaluate the functional on each and return
/// the empirical quantiles with full provenance.
///
/// Replication r uses seed `derive(seed, r, attempt)`; singular draws are
/// discarded and redrawn with the attempt counter bumped, which keeps the
/// build deterministic and order-independent. A discard rate above 1% fails
/// the build.
pub fn build_table(spec: &TableSpec) -> Result<CriticalValueTable> {
    if spec.reps < 10_000 {
        return Err(SnError::config(format!(
            "table builds need at least 10^4 replications, got {}",
            spec.reps
        )));
    }
    if spec.levels.is_empty() {
        return Err(SnError::config("no quantile levels requested"));
    }
    for w in spec.levels.windows(2) {
        if !(w[0] < w[1]) {
            return Err(SnError::config("levels must be strictly increasing"));
        }
    }
    if spec.levels[0] <= 0.0 || *spec.levels.last().unwrap() >= 1.0 {
        return Err(SnError::config("levels must lie in (0,1)"));
    }
    if let LimitFunctional::FixedB { b, sigma_half } = &spec.functional {
        if !(*b > 0.0 && *b < 1.0) {
            return Err(SnError::config("fixed-b tables need b in (0,1)"));
        }
        if spec.p > 1 && sigma_half.is_none() {
            return Err(SnError::config(
                "the multivariate fixed-b limit is not pivotal; supply sigma_half",
            ));
        }
    }

    let mut values = Vec::with_capacity(spec.reps);
    let mut discarded = 0usize;
    for rep in 0..spec.reps {
        let mut done = false;
        for attempt in 0..MAX_REDRAWS {
            let seed = derive_seed2(spec.seed, rep as u64, attempt as u64);
            let path = BrownianPath::simulate(spec.p, spec.grid_m, seed)?;
            match spec.functional.eval(&path) {
                Ok(v) => {
                    values.push(v);
                    done = true;
                    break;
                }
                Err(SnError::Singular { .. }) => discarded += 1,
                Err(e) => return Err(e),
            }
        }
        if !done {
            return Err(SnError::Table(format!(
                "replication {rep} failed {MAX_REDRAWS} consecutive draws; the functional is \
                 degenerate for this configuration"
            )));
        }
    }
    if discarded as f64 / spec.reps as f64 > 0.01 {
        return Err(SnError::Table(format!(
            "{discarded} of {} draws were singular (> 1%); increase the path grid",
            spec.reps
        )));
    }

    values.sort_unstable_by(f64::total_cmp);
    let quantiles: Vec<f64> = spec
        .levels
        .iter()
        .map(|&level| {
            let rank = ((level * spec.reps as f64).ceil() as usize).clamp(1, spec.reps);
            values[rank - 1]
        })
        .collect();

    let params = match &spec.functional {
        LimitFunctional::Sn | LimitFunctional::Cp => TableParams::default(),
        LimitFunctional::GeneralizedSn(h) => TableParams {
            h_digest: Some(h.digest()),
            h_atoms: Some(h.atoms().len()),
            ..Default::default()
        },
        LimitFunctional::FixedB { b, sigma_half } => TableParams {
            b: Some(*b),
            sigma_half: sigma_half.clone(),
            ..Default::default()
        },
    };
    let table = CriticalValueTable {
        functional_id: spec.functional.functional_id().to_string(),
        p: spec.p,
        params,
        levels: spec.levels.clone(),
        values: quantiles,
        reps: spec.reps,
        grid_m: spec.grid_m,
        seed: spec.seed,
        discarded,
        version: format!("snstat {}", env!("CARGO_PKG_VERSION")),
    };
    table.validate()?;
    Ok(table)
}
