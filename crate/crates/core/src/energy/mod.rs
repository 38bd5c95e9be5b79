//! Solutions of `|x_{n1} - x_{n2} + x_{n3} - x_{n4}| < gamma`, counted over
//! the multiset D of ordered differences: the count equals the number of
//! ordered pairs `(d, d')` in `D x D` with `|d - d'| < gamma`.

mod spill;

use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequences::RealSeq;

pub use spill::SortedSpill;

/// Largest N accepted by [`energy_brute`].
pub const BRUTE_MAX_N: usize = 60;
/// Default memory budget for the difference multiset, in bytes.
pub const DEFAULT_MEM_BUDGET: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("brute-force energy limited to N <= {limit}, got {n}")]
    GuardExceeded { n: usize, limit: usize },
    #[error("difference multiset needs {need} bytes, budget is {budget} and chunking is disabled")]
    MemoryBudgetExceeded { need: u64, budget: u64 },
    #[error("gamma must be finite and > 0, got {0}")]
    BadGamma(f64),
    #[error("band must satisfy 0 <= lo < hi, got [{lo}, {hi})")]
    BadBand { lo: f64, hi: f64 },
    #[error("scaling fit is degenerate: {0}")]
    Degenerate(String),
    #[error("spill i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// The comparator shared by every counting path.
#[inline]
pub fn tolerance_hit(diff: f64, gamma: f64) -> bool {
    diff.abs() < gamma
}

/// Count for one tolerance, plus whether some pair sits exactly on the
/// boundary `|d - d'| = gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowCount {
    pub total: u64,
    pub boundary_tie: bool,
}

#[derive(Debug, Clone)]
pub struct EnergyOptions {
    pub mem_budget: u64,
    pub allow_chunking: bool,
    /// Forces the out-of-core path with row blocks of about this many bytes.
    pub chunk_bytes: Option<usize>,
    pub tmp_dir: Option<PathBuf>,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions { mem_budget: DEFAULT_MEM_BUDGET, allow_chunking: true, chunk_bytes: None, tmp_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCurve {
    #[serde(rename = "N")]
    pub n: usize,
    pub gammas: Vec<f64>,
    pub totals: Vec<u64>,
    pub trivial: u64,
    pub nontrivial: Vec<u64>,
    /// Gammas at which some pair sat exactly on the boundary.
    #[serde(default)]
    pub boundary_ties: Vec<f64>,
}

/// `2N^2 - N`: tuples with `n1 = n2, n3 = n4` or `n1 = n4, n2 = n3`.
pub fn trivial_count(n: usize) -> u64 {
    let n = n as u64;
    2 * n * n - n
}

fn check_gamma(g: f64) -> Result<(), EnergyError> {
    if g.is_finite() && g > 0.0 {
        Ok(())
    } else {
        Err(EnergyError::BadGamma(g))
    }
}

/// All `N^2` ordered differences `x_a - x_b`.
pub fn differences(seq: &RealSeq) -> Vec<f64> {
    let x = seq.values();
    let mut d = Vec::with_capacity(x.len() * x.len());
    for &a in x {
        for &b in x {
            d.push(a - b);
        }
    }
    d
}

/// Enumerates all `N^4` tuples.
pub fn energy_brute(seq: &RealSeq, gamma: f64) -> Result<u64, EnergyError> {
    let n = seq.len();
    if n > BRUTE_MAX_N {
        return Err(EnergyError::GuardExceeded { n, limit: BRUTE_MAX_N });
    }
    check_gamma(gamma)?;
    let x = seq.values();
    let mut c = 0u64;
    for &x1 in x {
        for &x2 in x {
            let d = x1 - x2;
            for &x3 in x {
                for &x4 in x {
                    if tolerance_hit(d - (x4 - x3), gamma) {
                        c += 1;
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Ordered pairs within `gamma` in a sorted slice, with boundary-tie flag.
pub fn count_sorted(d: &[f64], gamma: f64) -> WindowCount {
    let m = d.len();
    if m == 0 {
        return WindowCount { total: 0, boundary_tie: false };
    }
    let block = 1 << 14;
    let (off, tie) = (0..m.div_ceil(block))
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let end = (start + block).min(m);
            let mut j = start + 1 + d[start + 1..].partition_point(|&v| tolerance_hit(v - d[start], gamma));
            let mut off = 0u64;
            let mut tie = false;
            for i in start..end {
                if j < i + 1 {
                    j = i + 1;
                }
                while j < m && tolerance_hit(d[j] - d[i], gamma) {
                    j += 1;
                }
                off += (j - i - 1) as u64;
                if j < m && d[j] - d[i] == gamma {
                    tie = true;
                }
            }
            (off, tie)
        })
        .reduce(|| (0, false), |a, b| (a.0 + b.0, a.1 || b.1));
    WindowCount { total: m as u64 + 2 * off, boundary_tie: tie }
}

fn sorted_differences(seq: &RealSeq) -> Vec<f64> {
    let mut d = differences(seq);
    d.par_sort_unstable_by(f64::total_cmp);
    d
}

fn needs_spill(n: usize, opts: &EnergyOptions) -> Result<bool, EnergyError> {
    let need = 8 * (n as u64) * (n as u64);
    if opts.chunk_bytes.is_some() {
        return Ok(true);
    }
    if need <= opts.mem_budget {
        return Ok(false);
    }
    if opts.allow_chunking {
        Ok(true)
    } else {
        Err(EnergyError::MemoryBudgetExceeded { need, budget: opts.mem_budget })
    }
}

/// Spills D in row blocks of roughly `chunk_bytes`.
pub fn spill_differences(seq: &RealSeq, opts: &EnergyOptions) -> Result<SortedSpill, EnergyError> {
    let x = seq.values();
    let n = x.len();
    let chunk = opts.chunk_bytes.unwrap_or_else(|| (opts.mem_budget / 4).max(1 << 16) as usize);
    let rows = (chunk / (8 * n.max(1))).max(1);
    let blocks = n.div_ceil(rows);
    let spill = SortedSpill::build(
        blocks,
        |b| {
            let lo = b * rows;
            let hi = (lo + rows).min(n);
            let mut v = Vec::with_capacity((hi - lo) * n);
            for &a in &x[lo..hi] {
                for &c in x {
                    v.push(a - c);
                }
            }
            v
        },
        opts.tmp_dir.as_deref(),
    )?;
    Ok(spill)
}

/// Counts for several gammas, in memory or out of core per the options.
pub fn energy_counts(seq: &RealSeq, gammas: &[f64], opts: &EnergyOptions) -> Result<Vec<WindowCount>, EnergyError> {
    for &g in gammas {
        check_gamma(g)?;
    }
    if needs_spill(seq.len(), opts)? {
        let spill = spill_differences(seq, opts)?;
        Ok(spill.count_within(gammas)?)
    } else {
        let d = sorted_differences(seq);
        Ok(gammas.iter().map(|&g| count_sorted(&d, g)).collect())
    }
}

pub fn energy_fast(seq: &RealSeq, gamma: f64) -> Result<u64, EnergyError> {
    energy_fast_with(seq, gamma, &EnergyOptions::default())
}

pub fn energy_fast_with(seq: &RealSeq, gamma: f64, opts: &EnergyOptions) -> Result<u64, EnergyError> {
    Ok(energy_counts(seq, &[gamma], opts)?[0].total)
}

/// Counts with both differences restricted to `|d| in [lo, hi)`.
pub fn energy_localized(seq: &RealSeq, gamma: f64, lo: f64, hi: f64) -> Result<u64, EnergyError> {
    check_gamma(gamma)?;
    if !(lo >= 0.0 && lo < hi) {
        return Err(EnergyError::BadBand { lo, hi });
    }
    let mut d: Vec<f64> = differences(seq).into_iter().filter(|v| v.abs() >= lo && v.abs() < hi).collect();
    d.par_sort_unstable_by(f64::total_cmp);
    Ok(count_sorted(&d, gamma).total)
}

/// Energy curve over a set of tolerances, evaluated on one sorted D.
pub fn gamma_scan(seq: &RealSeq, gammas: &[f64], opts: &EnergyOptions) -> Result<EnergyCurve, EnergyError> {
    let mut gs = gammas.to_vec();
    gs.sort_by(|a, b| b.total_cmp(a));
    gs.dedup();
    let counts = energy_counts(seq, &gs, opts)?;
    let trivial = trivial_count(seq.len());
    Ok(EnergyCurve {
        n: seq.len(),
        totals: counts.iter().map(|c| c.total).collect(),
        nontrivial: counts.iter().map(|c| c.total.saturating_sub(trivial)).collect(),
        boundary_ties: gs.iter().zip(&counts).filter(|(_, c)| c.boundary_tie).map(|(g, _)| *g).collect(),
        gammas: gs,
        trivial,
    })
}

/// Result of a tie-guarded count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardedCount {
    pub gamma_requested: f64,
    pub gamma_used: f64,
    pub total: u64,
    pub perturbed: bool,
}

/// Counts at `gamma`; if a pair sits exactly on the boundary, multiplies
/// gamma by a random factor in `[1 - 1e-9, 1 + 1e-9]` and recounts.
pub fn energy_tie_guarded<R: Rng + ?Sized>(
    seq: &RealSeq,
    gamma: f64,
    opts: &EnergyOptions,
    rng: &mut R,
) -> Result<GuardedCount, EnergyError> {
    let mut g = gamma;
    for _ in 0..16 {
        let c = energy_counts(seq, &[g], opts)?[0];
        if !c.boundary_tie {
            return Ok(GuardedCount { gamma_requested: gamma, gamma_used: g, total: c.total, perturbed: g != gamma });
        }
        g = gamma * (1.0 + rng.gen_range(-1e-9..=1e-9));
    }
    let c = energy_counts(seq, &[g], opts)?[0];
    Ok(GuardedCount { gamma_requested: gamma, gamma_used: g, total: c.total, perturbed: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least squares on `(ln N, ln count)`.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, EnergyError> {
    if points.len() < 3 {
        return Err(EnergyError::Degenerate(format!("need >= 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(n, c)| !(n > 0.0 && c > 0.0)) {
        return Err(EnergyError::Degenerate("N and counts must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EnergyError::Degenerate("all N identical".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(ScalingFit { slope, intercept, residual: (rss / k).sqrt() })
}
