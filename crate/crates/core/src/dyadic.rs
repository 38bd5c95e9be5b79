//! Counting pipeline over the z-multiset of absolute differences: dyadic
//! `(j1, j2)` solution counts, geometric binning `b_k -> a_h -> P(t)`, and
//! the finite identities and inequalities used to bound the dyadic counts.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::pairwise_sum;
use crate::sequences::RealSeq;

/// Guard for [`count_dyadic_brute`]: `|z| * 4^u` must not exceed this.
pub const BRUTE_BUDGET: f64 = 1e9;
/// Relative agreement required between quadrature and bilinear form.
pub const PNORM_REL_TOL: f64 = 1e-6;
/// Offsets `h1 - h2` beyond this contribute exactly zero to the bilinear form.
const BILINEAR_REACH: i64 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum DyadicError {
    #[error("need at least 2 terms, got {0}")]
    TooShort(usize),
    #[error("dyadic brute count limited to |z| * 4^u <= 1e9, got {0:e}")]
    GuardExceeded(f64),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("value {0} lies outside the binning band")]
    OutOfBand(f64),
    #[error("quadrature {quadrature} and bilinear form {bilinear} disagree (relative {rel:e})")]
    QuadratureDivergence { quadrature: f64, bilinear: f64, rel: f64 },
}

/// `{|x_m - x_n| : m != n}` with multiplicity.
pub fn abs_differences(seq: &RealSeq) -> Result<Vec<f64>, DyadicError> {
    let x = seq.values();
    if x.len() < 2 {
        return Err(DyadicError::TooShort(x.len()));
    }
    let mut z = Vec::with_capacity(x.len() * (x.len() - 1));
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in x.iter().enumerate() {
            if i != j {
                z.push((a - b).abs());
            }
        }
    }
    Ok(z)
}

fn j_block(u: u32) -> std::ops::Range<u64> {
    (1u64 << (u - 1))..(1u64 << u)
}

#[inline]
fn is_solution(j1: u64, zm: f64, j2: u64, zn: f64) -> bool {
    (j1 as f64 * zm - j2 as f64 * zn).abs() < 1.0
}

fn check_u(u: u32) -> Result<(), DyadicError> {
    if (1..=30).contains(&u) {
        Ok(())
    } else {
        Err(DyadicError::BadParams(format!("u must be in 1..=30, got {u}")))
    }
}

/// `#{(m, n, j1, j2) : |j1 z_m - j2 z_n| < 1}` over the dyadic block
/// `2^{u-1} <= j1, j2 < 2^u`, all ordered pairs of z including `m = n`.
/// Loops over `(m, n, j1)`; the valid `j2` form a short window.
pub fn count_dyadic_brute(z: &[f64], u: u32) -> Result<u64, DyadicError> {
    check_u(u)?;
    let work = z.len() as f64 * 4f64.powi(u as i32);
    if work > BRUTE_BUDGET {
        return Err(DyadicError::GuardExceeded(work));
    }
    let block = j_block(u);
    Ok(z.par_iter()
        .map(|&zm| {
            let mut c = 0u64;
            for &zn in z {
                for j1 in block.clone() {
                    let centre = j1 as f64 * zm / zn;
                    let lo = ((centre - 1.0 / zn).floor() as i64).max(block.start as i64) as u64;
                    let hi = ((centre + 1.0 / zn).ceil() as i64).min(block.end as i64 - 1);
                    if hi < lo as i64 {
                        continue;
                    }
                    for j2 in lo..=hi as u64 {
                        if is_solution(j1, zm, j2, zn) {
                            c += 1;
                        }
                    }
                }
            }
            c
        })
        .sum())
}

/// Calls `f(j1, z_m, j2, z_n)` for every dyadic solution; `z` must be sorted.
pub fn for_each_dyadic_solution<F: FnMut(u64, f64, u64, f64)>(z_sorted: &[f64], u: u32, mut f: F) {
    let block = j_block(u);
    for &zm in z_sorted {
        for j1 in block.clone() {
            for j2 in block.clone() {
                let target = j1 as f64 * zm;
                let lo = (target - 1.0) / j2 as f64;
                let hi = (target + 1.0) / j2 as f64;
                // widen by a few ulps, the exact predicate decides
                let pad = 1e-12 * hi.abs().max(1.0);
                let a = z_sorted.partition_point(|&v| v < lo - pad);
                let b = z_sorted.partition_point(|&v| v <= hi + pad);
                for &zn in &z_sorted[a..b] {
                    if is_solution(j1, zm, j2, zn) {
                        f(j1, zm, j2, zn);
                    }
                }
            }
        }
    }
}

/// Same count as [`count_dyadic_brute`] via sorting and binary search.
pub fn count_dyadic_sorted(z: &[f64], u: u32) -> Result<u64, DyadicError> {
    check_u(u)?;
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let mut c = 0u64;
    for_each_dyadic_solution(&s, u, |_, _, _, _| c += 1);
    Ok(c)
}

/// The three admissible choices of T, band and bin width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BinningMode {
    /// `T = 2^u N^{1+eps/2}`, unit bins, keep `floor(z) >= N^{1.01}`.
    Case1 { eps: f64 },
    /// `T = 2^u N^beta`, unit bins, band `[N^beta, 32 N^beta)`.
    Case2 { beta: f64 },
    /// `T = 2^u N^{min(beta - eps, 1 + eps)}`, bins of width `2^{-u}`.
    Thm2 { beta: f64, eps: f64 },
}

fn check_beta(beta: f64) -> Result<(), DyadicError> {
    if (0.25..=1.01).contains(&beta) {
        Ok(())
    } else {
        Err(DyadicError::BadParams(format!("beta must lie in [1/4, 1.01], got {beta}")))
    }
}

fn check_eps(eps: f64) -> Result<(), DyadicError> {
    if eps > 0.0 && eps <= 0.25 {
        Ok(())
    } else {
        Err(DyadicError::BadParams(format!("eps must lie in (0, 1/4], got {eps}")))
    }
}

/// Bin boundaries `ceil(q^h)` with `q = 1 + 1/T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricBins {
    pub t: f64,
    pub ln_q: f64,
}

impl GeometricBins {
    pub fn new(t: f64) -> Self {
        GeometricBins { t, ln_q: (1.0 / t).ln_1p() }
    }

    /// Left endpoint of `I_h`.
    pub fn lower(&self, h: i64) -> f64 {
        (h as f64 * self.ln_q).exp().ceil()
    }

    /// The h with `m in I_h`, `m >= 1`.
    pub fn index(&self, m: u64) -> i64 {
        assert!(m >= 1, "geometric bins start at 1");
        let mf = m as f64;
        let mut h = (mf.ln() / self.ln_q).floor() as i64;
        while self.lower(h + 1) <= mf {
            h += 1;
        }
        while h > 0 && self.lower(h) > mf {
            h -= 1;
        }
        h
    }

    /// `q^d`.
    pub fn ratio(&self, d: i64) -> f64 {
        (d as f64 * self.ln_q).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicBinning {
    #[serde(rename = "T")]
    pub t: f64,
    pub scale: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub mode: BinningMode,
    #[serde(rename = "N")]
    pub n: usize,
    pub u: u32,
    pub bins: GeometricBins,
    /// `k -> b_k`, where `k = floor(z / scale)`.
    pub b: BTreeMap<u64, u64>,
    /// `h -> a_h^2 = sum_{k in I_h} b_k^2`, exact.
    pub a2: BTreeMap<i64, u64>,
}

/// Builds `b_k` and `a_h` for the given mode.
pub fn build_binning(z: &[f64], n: usize, u: u32, mode: BinningMode) -> Result<DyadicBinning, DyadicError> {
    check_u(u)?;
    if n == 0 {
        return Err(DyadicError::BadParams("N must be >= 1".into()));
    }
    let nf = n as f64;
    let two_u = (1u64 << u) as f64;
    let (t, scale, z_lo, z_hi) = match mode {
        BinningMode::Case1 { eps } => {
            check_eps(eps)?;
            (two_u * nf.powf(1.0 + eps / 2.0), 1.0, nf.powf(1.01), f64::INFINITY)
        }
        BinningMode::Case2 { beta } => {
            check_beta(beta)?;
            let lo = nf.powf(beta);
            (two_u * lo, 1.0, lo, 32.0 * lo)
        }
        BinningMode::Thm2 { beta, eps } => {
            check_beta(beta)?;
            check_eps(eps)?;
            let lo = nf.powf(beta);
            let hi = if beta == 1.01 { f64::INFINITY } else { 32.0 * lo };
            (two_u * nf.powf((beta - eps).min(1.0 + eps)), 1.0 / two_u, lo, hi)
        }
    };
    let mut bin = DyadicBinning {
        t,
        scale,
        z_lo,
        z_hi,
        mode,
        n,
        u,
        bins: GeometricBins::new(t),
        b: BTreeMap::new(),
        a2: BTreeMap::new(),
    };
    bin.b = z
        .par_iter()
        .filter(|&&v| bin.in_band(v))
        .fold(BTreeMap::new, |mut m: BTreeMap<u64, u64>, &v| {
            *m.entry(bin.key(v)).or_default() += 1;
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_default() += c;
            }
            a
        });
    let mut a2 = BTreeMap::new();
    for (&k, &c) in &bin.b {
        *a2.entry(bin.h_of_key(k)).or_default() += c * c;
    }
    bin.a2 = a2;
    Ok(bin)
}

impl DyadicBinning {
    /// Floor rule (case 1) or band membership (otherwise).
    pub fn in_band(&self, z: f64) -> bool {
        match self.mode {
            BinningMode::Case1 { .. } => z.floor() >= self.z_lo,
            _ => z >= self.z_lo && z < self.z_hi,
        }
    }

    /// `floor(z / scale)`; scale is a power of two so the division is exact.
    pub fn key(&self, z: f64) -> u64 {
        (z / self.scale).floor() as u64
    }

    /// Geometric bin of a unit-bin key: `I_h` is tested on `k * scale`.
    pub fn h_of_key(&self, k: u64) -> i64 {
        let m = (k as f64 * self.scale).floor() as u64;
        self.bins.index(m.max(1))
    }

    pub fn h_of_z(&self, z: f64) -> Result<i64, DyadicError> {
        if !self.in_band(z) {
            return Err(DyadicError::OutOfBand(z));
        }
        Ok(self.h_of_key(self.key(z)))
    }

    pub fn a(&self, h: i64) -> f64 {
        self.a2.get(&h).map_or(0.0, |&v| (v as f64).sqrt())
    }

    pub fn sum_b(&self) -> u64 {
        self.b.values().sum()
    }

    pub fn sum_b2(&self) -> u64 {
        self.b.values().map(|c| c * c).sum()
    }

    pub fn sum_a2(&self) -> u64 {
        self.a2.values().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.b.len()
    }

    /// Dense `a_h` over `[h_min, h_max]`.
    fn dense_a(&self) -> Option<(i64, Vec<f64>)> {
        let (&lo, _) = self.a2.first_key_value()?;
        let (&hi, _) = self.a2.last_key_value()?;
        let mut v = vec![0.0; (hi - lo + 1) as usize];
        for (&h, &s) in &self.a2 {
            v[(h - lo) as usize] = (s as f64).sqrt();
        }
        Some((lo, v))
    }
}

/// `P(t) = sum_h a_h q^{i h t}`.
pub fn eval_p(bin: &DyadicBinning, t: f64) -> Complex64 {
    let mut re = Vec::with_capacity(bin.a2.len());
    let mut im = Vec::with_capacity(bin.a2.len());
    for (&h, &s) in &bin.a2 {
        let a = (s as f64).sqrt();
        let ang = h as f64 * t * bin.bins.ln_q;
        re.push(a * ang.cos());
        im.push(a * ang.sin());
    }
    Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// `Phi^(xi) = sqrt(2 pi) e^{-xi^2 / 2}`.
fn phi_hat(xi: f64) -> f64 {
    (2.0 * PI).sqrt() * (-0.5 * xi * xi).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PNormReport {
    pub quadrature: f64,
    pub bilinear: f64,
    pub rel_err: f64,
    /// `quadrature / (T sum_h a_h^2)`.
    pub p_norm_ratio: f64,
    pub step: f64,
    pub nodes: usize,
}

/// Exact bilinear form `T sum a_{h1} a_{h2} Phi^(T ln q (h1 - h2))`.
pub fn p_norm_bilinear(bin: &DyadicBinning) -> f64 {
    let Some((_, a)) = bin.dense_a() else { return 0.0 };
    let c = bin.t * bin.bins.ln_q;
    let reach = BILINEAR_REACH.min(a.len() as i64 - 1);
    let mut by_offset = Vec::with_capacity(2 * reach as usize + 1);
    for d in -reach..=reach {
        let w = phi_hat(c * d as f64);
        if w == 0.0 {
            continue;
        }
        let terms: Vec<f64> = (0..a.len() as i64)
            .filter_map(|i| {
                let j = i - d;
                (j >= 0 && j < a.len() as i64).then(|| a[i as usize] * a[j as usize])
            })
            .collect();
        by_offset.push(w * pairwise_sum(&terms));
    }
    bin.t * pairwise_sum(&by_offset)
}

/// `∫ |P(t)|^2 Phi(t/T) dt` by the trapezoid rule on `|t| <= 8T`, with
/// `P` sampled through one FFT, checked against the bilinear form.
pub fn p_norm_quadrature(bin: &DyadicBinning) -> Result<PNormReport, DyadicError> {
    let bilinear = p_norm_bilinear(bin);
    let Some((_, a)) = bin.dense_a() else {
        return Ok(PNormReport { quadrature: 0.0, bilinear, rel_err: 0.0, p_norm_ratio: 0.0, step: 0.0, nodes: 0 });
    };
    let len = (16 * a.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    // inverse transform: sum_h a_h e^{+2 pi i h k / L}
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let p2: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();

    let step = 2.0 * PI / (len as f64 * bin.bins.ln_q);
    let kmax = (8.0 * bin.t / step).floor() as i64;
    let terms: Vec<f64> = (-kmax..=kmax)
        .map(|k| {
            let t = k as f64 * step;
            let w = (-0.5 * (t / bin.t).powi(2)).exp();
            w * p2[k.rem_euclid(len as i64) as usize]
        })
        .collect();
    let quadrature = step * pairwise_sum(&terms);
    let rel_err = if bilinear == 0.0 { quadrature.abs() } else { (quadrature - bilinear).abs() / bilinear.abs() };
    let report = PNormReport {
        quadrature,
        bilinear,
        rel_err,
        p_norm_ratio: quadrature / (bin.t * bin.sum_a2() as f64),
        step,
        nodes: terms.len(),
    };
    if rel_err > PNORM_REL_TOL {
        return Err(DyadicError::QuadratureDivergence { quadrature, bilinear, rel: rel_err });
    }
    Ok(report)
}

/// Whether `|q^{h1 - h2} - j2/j1| <= 4/T` for the bins of `z_m`, `z_n`,
/// after ordering so that `j1 >= j2`.
pub fn check_bin_constraint(bin: &DyadicBinning, j1: u64, j2: u64, zm: f64, zn: f64) -> Result<bool, DyadicError> {
    let (j1, j2, zm, zn) = if j1 >= j2 { (j1, j2, zm, zn) } else { (j2, j1, zn, zm) };
    let h1 = bin.h_of_z(zm)?;
    let h2 = bin.h_of_z(zn)?;
    Ok(constraint_holds(bin, h1 - h2, j2 as f64 / j1 as f64))
}

#[inline]
fn constraint_holds(bin: &DyadicBinning, d: i64, ratio: f64) -> bool {
    (bin.bins.ratio(d) - ratio).abs() <= 4.0 / bin.t
}

/// Offsets `d = h1 - h2` allowed for the ratio `j2/j1`, clipped to `±span`.
fn allowed_offsets(bin: &DyadicBinning, ratio: f64, span: i64) -> Option<(i64, i64)> {
    let ok = |d: i64| constraint_holds(bin, d, ratio);
    let guess = ((ratio.ln() / bin.bins.ln_q).round() as i64).clamp(-span, span);
    let start = (guess - 2..=guess + 2).find(|&d| d.abs() <= span && ok(d))?;
    let mut lo = start;
    while lo > -span && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = start;
    while hi < span && ok(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

/// `sum_{j1, j2} sum_{(h1, h2) passing the constraint} a_{h1} a_{h2}`.
pub fn dyadic_upper_bound(bin: &DyadicBinning, u: u32) -> f64 {
    let Some((_, a)) = bin.dense_a() else { return 0.0 };
    let span = a.len() as i64 - 1;
    let mut corr: HashMap<i64, f64> = HashMap::new();
    let mut correlation = |d: i64| -> f64 {
        *corr.entry(d).or_insert_with(|| {
            let terms: Vec<f64> = (0..a.len() as i64)
                .filter_map(|i| {
                    let j = i - d;
                    (j >= 0 && j <= span).then(|| a[i as usize] * a[j as usize])
                })
                .collect();
            pairwise_sum(&terms)
        })
    };
    let block = j_block(u);
    let mut parts = Vec::new();
    for j1 in block.clone() {
        for j2 in block.clone() {
            let ratio = j2 as f64 / j1 as f64;
            if let Some((lo, hi)) = allowed_offsets(bin, ratio, span) {
                for d in lo..=hi {
                    parts.push(correlation(d));
                }
            }
        }
    }
    pairwise_sum(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureReport {
    pub solutions: u64,
    pub captured: u64,
    /// Largest `T |q^{h1-h2} - j2/j1|` seen (the constraint is `<= 4`).
    pub worst_scaled_gap: f64,
    pub upper_bound: f64,
    /// `solutions / upper_bound`.
    pub ratio: f64,
}

impl CaptureReport {
    pub fn all_captured(&self) -> bool {
        self.captured == self.solutions
    }
}

/// Enumerates band-restricted dyadic solutions, checks each against the
/// bin constraint, and compares the count with [`dyadic_upper_bound`].
pub fn capture_report(bin: &DyadicBinning, z: &[f64]) -> Result<CaptureReport, DyadicError> {
    let mut zb: Vec<f64> = z.iter().copied().filter(|&v| bin.in_band(v)).collect();
    zb.sort_by(f64::total_cmp);
    let mut solutions = 0u64;
    let mut captured = 0u64;
    let mut worst = 0.0f64;
    let mut err = None;
    for_each_dyadic_solution(&zb, bin.u, |j1, zm, j2, zn| {
        solutions += 1;
        let (a, b, x, y) = if j1 >= j2 { (j1, j2, zm, zn) } else { (j2, j1, zn, zm) };
        match (bin.h_of_z(x), bin.h_of_z(y)) {
            (Ok(h1), Ok(h2)) => {
                let gap = (bin.bins.ratio(h1 - h2) - b as f64 / a as f64).abs() * bin.t;
                worst = worst.max(gap);
                if gap <= 4.0 {
                    captured += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let upper_bound = dyadic_upper_bound(bin, bin.u);
    let ratio = if upper_bound > 0.0 { solutions as f64 / upper_bound } else if solutions == 0 { 0.0 } else { f64::INFINITY };
    Ok(CaptureReport { solutions, captured, worst_scaled_gap: worst, upper_bound, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub checks: u64,
    pub violations: u64,
    /// Largest `(sum b_k b_{l(k)+v})^2 / (a_{h1}^2 a_{h2}^2)`.
    pub max_ratio: f64,
}

/// Exact Cauchy–Schwarz check: for `j1 >= j2` in the block, each shift
/// `v in [-4, 3]` and each `(h1, h2)`, with `l(k) = ceil(j1 k / j2)`,
/// `(sum_{k in I_h1, l(k)+v in I_h2} b_k b_{l(k)+v})^2 <= a_{h1}^2 a_{h2}^2`.
pub fn cauchy_schwarz_domination(bin: &DyadicBinning) -> DominationReport {
    let block = j_block(bin.u);
    let keyed: Vec<(u64, u64, i64)> = bin.b.iter().map(|(&k, &c)| (k, c, bin.h_of_key(k))).collect();
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut max_ratio = 0.0f64;
    for j1 in block.clone() {
        for j2 in block.start..=j1 {
            for v in -4i64..=3 {
                let mut sums: BTreeMap<(i64, i64), u128> = BTreeMap::new();
                for &(k, c, h1) in &keyed {
                    let l = (j1 * k).div_ceil(j2) as i64 + v;
                    if l < 0 {
                        continue;
                    }
                    if let Some(&c2) = bin.b.get(&(l as u64)) {
                        let h2 = bin.h_of_key(l as u64);
                        *sums.entry((h1, h2)).or_default() += c as u128 * c2 as u128;
                    }
                }
                for ((h1, h2), s) in sums {
                    checks += 1;
                    let rhs = bin.a2[&h1] as u128 * bin.a2[&h2] as u128;
                    let lhs = s * s;
                    if lhs > rhs {
                        violations += 1;
                    }
                    max_ratio = max_ratio.max(lhs as f64 / rhs as f64);
                }
            }
        }
    }
    DominationReport { checks, violations, max_ratio }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroReport {
    pub sum_b: u64,
    pub sum_b2: u64,
    pub occupied: u64,
    /// Ordered band pairs `(z, z')` with `|z - z'| < scale`.
    pub close_pairs: u64,
    pub lhs: u128,
    pub cs_bound: u128,
    pub pair_bound: u128,
}

impl ZeroReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.cs_bound && self.sum_b2 <= self.close_pairs && self.cs_bound <= self.pair_bound
    }
}

/// `(sum b)^2 <= occupied * sum b^2 <= occupied * #{close band pairs}`.
pub fn smaller_at_zero(bin: &DyadicBinning, z: &[f64]) -> ZeroReport {
    let mut zb: Vec<f64> = z.iter().copied().filter(|&v| bin.in_band(v)).collect();
    zb.sort_by(f64::total_cmp);
    let mut off = 0u64;
    let mut j = 0usize;
    for i in 0..zb.len() {
        j = j.max(i + 1);
        while j < zb.len() && zb[j] - zb[i] < bin.scale {
            j += 1;
        }
        off += (j - i - 1) as u64;
    }
    let close_pairs = zb.len() as u64 + 2 * off;
    let sum_b = bin.sum_b();
    let sum_b2 = bin.sum_b2();
    let occupied = bin.occupied_bins() as u64;
    ZeroReport {
        sum_b,
        sum_b2,
        occupied,
        close_pairs,
        lhs: sum_b as u128 * sum_b as u128,
        cs_bound: occupied as u128 * sum_b2 as u128,
        pair_bound: occupied as u128 * close_pairs as u128,
    }
}

/// Machine-readable summary of a binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningDump {
    #[serde(rename = "T")]
    pub t: f64,
    pub scale: f64,
    pub band: [f64; 2],
    pub occupied_bins: usize,
    pub sum_b: u64,
    pub sum_b2: u64,
    pub max_ratio_logs: BTreeMap<String, f64>,
}

pub fn dump(bin: &DyadicBinning, max_ratio_logs: BTreeMap<String, f64>) -> BinningDump {
    BinningDump {
        t: bin.t,
        scale: bin.scale,
        band: [bin.z_lo, bin.z_hi],
        occupied_bins: bin.occupied_bins(),
        sum_b: bin.sum_b(),
        sum_b2: bin.sum_b2(),
        max_ratio_logs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{materialize, SequenceSpec};

    fn seq(v: &[f64]) -> RealSeq {
        RealSeq::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn abs_difference_examples() {
        assert_eq!(abs_differences(&seq(&[1.0, 2.0])).unwrap(), vec![1.0, 1.0]);
        let mut z = abs_differences(&seq(&[1.0, 4.0, 9.0])).unwrap();
        z.sort_by(f64::total_cmp);
        assert_eq!(z, vec![3.0, 3.0, 5.0, 5.0, 8.0, 8.0]);
        assert_eq!(abs_differences(&seq(&[1.0])), Err(DyadicError::TooShort(1)));
    }

    #[test]
    fn dyadic_counts() {
        assert_eq!(count_dyadic_brute(&[1.0, 1.0], 1).unwrap(), 4);
        assert_eq!(count_dyadic_brute(&[1.0, 2.0], 1).unwrap(), 2);
        // u = 2: (m,m) pairs with j1 = j2 give 4, and 3*1 vs ... none else
        assert_eq!(count_dyadic_brute(&[1.0, 2.0], 2).unwrap(), 4);
        for (z, u) in [(vec![1.0, 1.0], 1), (vec![1.0, 2.0], 1), (vec![1.0, 2.0], 2)] {
            assert_eq!(count_dyadic_sorted(&z, u).unwrap(), count_dyadic_brute(&z, u).unwrap());
        }
        assert!(matches!(count_dyadic_brute(&vec![1.0; 1000], 14), Err(DyadicError::GuardExceeded(_))));
    }

    #[test]
    fn dyadic_count_literal_enumeration() {
        let s = materialize(&SequenceSpec::power(1.5), 9).unwrap();
        let z = abs_differences(&s).unwrap();
        for u in 1..=3 {
            let mut c = 0u64;
            for &a in &z {
                for &b in &z {
                    for j1 in j_block(u) {
                        for j2 in j_block(u) {
                            if (j1 as f64 * a - j2 as f64 * b).abs() < 1.0 {
                                c += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!(count_dyadic_brute(&z, u).unwrap(), c);
            assert_eq!(count_dyadic_sorted(&z, u).unwrap(), c);
        }
    }

    #[test]
    fn geometric_index_brute() {
        for &t in &[2.0, 3.7, 50.0, 1234.5] {
            let g = GeometricBins::new(t);
            let mut h = 0i64;
            for m in 1u64..5000 {
                while g.lower(h + 1) <= m as f64 {
                    h += 1;
                }
                assert_eq!(g.index(m), h, "t={t} m={m}");
            }
        }
    }

    #[test]
    fn single_bin_case2() {
        let z = abs_differences(&seq(&[1.0, 2.0])).unwrap();
        let bin = build_binning(&z, 1, 1, BinningMode::Case2 { beta: 0.25 }).unwrap();
        assert_eq!(bin.b.len(), 1);
        assert_eq!(bin.b.values().next(), Some(&2));
        assert_eq!(bin.a2.len(), 1);
        assert_eq!(bin.a(*bin.a2.keys().next().unwrap()), 2.0);
        assert_eq!(bin.sum_b(), 2);
    }

    #[test]
    fn partition_identities() {
        let s = materialize(&SequenceSpec::power(1.5), 100).unwrap();
        let z = abs_differences(&s).unwrap();
        for mode in [
            BinningMode::Case1 { eps: 0.1 },
            BinningMode::Case2 { beta: 0.5 },
            BinningMode::Thm2 { beta: 0.5, eps: 0.1 },
            BinningMode::Thm2 { beta: 1.01, eps: 0.25 },
        ] {
            let bin = build_binning(&z, 100, 3, mode).unwrap();
            let resident = z.iter().filter(|&&v| bin.in_band(v)).count() as u64;
            assert_eq!(bin.sum_b(), resident);
            assert!(bin.sum_b() <= 100 * 99);
            assert_eq!(bin.sum_a2(), bin.sum_b2());
            // same-bin pair oracle
            let zb: Vec<f64> = z.iter().copied().filter(|&v| bin.in_band(v)).collect();
            let mut same = 0u64;
            for &a in &zb {
                for &b in &zb {
                    if bin.key(a) == bin.key(b) {
                        same += 1;
                    }
                }
            }
            assert_eq!(bin.sum_b2(), same);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let z = vec![1.0, 1.0];
        assert!(build_binning(&z, 2, 0, BinningMode::Case2 { beta: 0.5 }).is_err());
        assert!(build_binning(&z, 2, 1, BinningMode::Case2 { beta: 0.2 }).is_err());
        assert!(build_binning(&z, 2, 1, BinningMode::Case1 { eps: 0.3 }).is_err());
        assert!(build_binning(&z, 2, 1, BinningMode::Thm2 { beta: 0.5, eps: 0.0 }).is_err());
    }

    #[test]
    fn p_single_bin_is_constant() {
        let z = abs_differences(&seq(&[1.0, 2.0])).unwrap();
        let bin = build_binning(&z, 1, 1, BinningMode::Case2 { beta: 0.25 }).unwrap();
        for &t in &[0.0, 1.3, -40.0, 1e4] {
            assert!((eval_p(&bin, t).norm() - 2.0).abs() < 1e-12);
        }
        let r = p_norm_quadrature(&bin).unwrap();
        let want = 4.0 * bin.t * (2.0 * PI).sqrt();
        assert!((r.bilinear - want).abs() < 1e-12 * want);
        assert!((r.quadrature - want).abs() < 1e-9 * want);
    }

    #[test]
    fn p_bounded_by_value_at_zero() {
        let s = materialize(&SequenceSpec::power(1.5), 60).unwrap();
        let z = abs_differences(&s).unwrap();
        let bin = build_binning(&z, 60, 2, BinningMode::Case2 { beta: 0.5 }).unwrap();
        let p0 = eval_p(&bin, 0.0);
        let total: f64 = bin.a2.keys().map(|&h| bin.a(h)).sum();
        assert!(p0.im.abs() < 1e-12);
        assert!((p0.re - total).abs() < 1e-9 * total);
        for i in 0..100 {
            let t = (i as f64 * 0.7919).sin() * 1e3;
            assert!(eval_p(&bin, t).norm() <= p0.re * (1.0 + 1e-12));
        }
    }

    #[test]
    fn two_adjacent_bins_closed_form() {
        let g = GeometricBins::new(20.0);
        // two keys in adjacent geometric bins, each with b = 1
        let (k1, k2) = (100u64, 106u64);
        let (h1, h2) = (g.index(k1), g.index(k2));
        assert_eq!(h2, h1 + 1);
        let bin = DyadicBinning {
            t: 20.0,
            scale: 1.0,
            z_lo: 0.0,
            z_hi: f64::INFINITY,
            mode: BinningMode::Case2 { beta: 0.5 },
            n: 10,
            u: 1,
            bins: g,
            b: [(k1, 1), (k2, 1)].into_iter().collect(),
            a2: [(h1, 1), (h2, 1)].into_iter().collect(),
        };
        let c = 20.0 * g.ln_q;
        let want = 20.0 * (2.0 * phi_hat(0.0) + 2.0 * phi_hat(c));
        let r = p_norm_quadrature(&bin).unwrap();
        assert!((r.bilinear - want).abs() < 1e-12 * want);
        assert!(r.rel_err < 1e-9);
    }

    #[test]
    fn bin_constraint_cases() {
        let s = materialize(&SequenceSpec::power(2.0), 40).unwrap();
        let z = abs_differences(&s).unwrap();
        let bin = build_binning(&z, 40, 2, BinningMode::Case1 { eps: 0.1 }).unwrap();
        let zin = z.iter().copied().find(|&v| bin.in_band(v)).unwrap();
        assert!(check_bin_constraint(&bin, 3, 3, zin, zin).unwrap());
        assert!(!check_bin_constraint(&bin, 2, 1, 4.0 * 100.0, 100.0).unwrap());
        assert!(matches!(check_bin_constraint(&bin, 2, 2, 1.0, zin), Err(DyadicError::OutOfBand(_))));
    }

    #[test]
    fn upper_bound_single_bin() {
        let z = abs_differences(&seq(&[1.0, 2.0])).unwrap();
        let bin = build_binning(&z, 1, 1, BinningMode::Case2 { beta: 0.25 }).unwrap();
        assert_eq!(dyadic_upper_bound(&bin, 1), 4.0);
    }

    #[test]
    fn domination_never_violated() {
        let s = materialize(&SequenceSpec::power(1.5), 40).unwrap();
        let z = abs_differences(&s).unwrap();
        for mode in [BinningMode::Case1 { eps: 0.1 }, BinningMode::Case2 { beta: 0.5 }] {
            for u in 1..=3 {
                let bin = build_binning(&z, 40, u, mode).unwrap();
                let r = cauchy_schwarz_domination(&bin);
                assert!(r.checks > 0);
                assert_eq!(r.violations, 0);
                assert!(r.max_ratio <= 1.0);
            }
        }
    }

    // with min(z) >= T the unit-bin resolution is fine enough for the
    // constraint, so every solution is captured
    #[test]
    fn capture_in_resolved_regime() {
        let cases = [(SequenceSpec::power(3.0), 1u32), (SequenceSpec::polynomial(vec![0.0, 0.0, 0.0, 2.0]), 2)];
        for (spec, u) in cases {
            let s = materialize(&spec, 14).unwrap();
            let z = abs_differences(&s).unwrap();
            let bin = build_binning(&z, 14, u, BinningMode::Case2 { beta: 0.25 }).unwrap();
            let zmin = z.iter().copied().filter(|&v| bin.in_band(v)).fold(f64::INFINITY, f64::min);
            assert!(zmin >= bin.t);
            let r = capture_report(&bin, &z).unwrap();
            assert!(r.solutions > 0);
            assert!(r.all_captured(), "{r:?}");
        }
    }

    #[test]
    fn zero_chain_and_energy_cross_check() {
        let s = materialize(&SequenceSpec::power(1.5), 80).unwrap();
        let z = abs_differences(&s).unwrap();
        for mode in [BinningMode::Case2 { beta: 0.5 }, BinningMode::Thm2 { beta: 0.5, eps: 0.1 }] {
            let bin = build_binning(&z, 80, 2, mode).unwrap();
            let r = smaller_at_zero(&bin, &z);
            assert!(r.holds(), "{r:?}");
            let e = crate::energy::energy_localized(&s, bin.scale, bin.z_lo, bin.z_hi).unwrap();
            assert_eq!(r.close_pairs, 2 * e);
        }
    }

    #[test]
    fn dump_shape() {
        let s = materialize(&SequenceSpec::power(1.5), 30).unwrap();
        let z = abs_differences(&s).unwrap();
        let bin = build_binning(&z, 30, 1, BinningMode::Case2 { beta: 0.5 }).unwrap();
        let v = serde_json::to_value(dump(&bin, BTreeMap::new())).unwrap();
        for key in ["T", "scale", "band", "occupied_bins", "sum_b", "sum_b2", "max_ratio_logs"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
