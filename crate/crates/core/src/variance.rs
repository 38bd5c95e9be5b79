//! Expectation and variance of the smoothed pair counting functional over
//! the dilation parameter, and the end-to-end convergence experiment.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{pair_correlation, CircleError};
use crate::kernels::{density, mu_tail_mass, MuSampler, WeightKernel};
use crate::numeric::{frac_of_product, gauss_legendre, integrate_panels, pairwise_sum};
use crate::rng::{substream, ALPHA, MC};
use crate::selberg::{Sign, TrigPoly};
use crate::sequences::{materialize, SeqError, SequenceSpec};

/// Monte Carlo samples per independent substream.
pub const MC_BLOCK: usize = 64;
/// Truncation of the expectation integral to `|alpha| <= A`.
pub const QUAD_WINDOW: f64 = 50.0;
/// Frequencies below this are integrated numerically; above it they are
/// bounded by integrating by parts twice.
const LOW_FREQ_CUTOFF: f64 = 4.0;

#[derive(Debug, Error)]
pub enum VarianceError {
    #[error("error budget {budget:e} exceeds the requested tolerance {tol:e}")]
    TailTooFat { budget: f64, tol: f64 },
    #[error("polynomial must be centered (c_0 = 0)")]
    NotCentered,
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Circle(#[from] CircleError),
    #[error(transparent)]
    Seq(#[from] SeqError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    #[serde(rename = "N")]
    pub n: usize,
    /// `K / N`.
    pub r: f64,
    pub s: f64,
    pub expectation_estimate: f64,
    /// `N c_0`.
    pub reference: f64,
    pub diff: f64,
    /// Bound on `|expectation_estimate - exact expectation|`.
    pub expectation_error_bound: f64,
    pub variance_estimate: f64,
    pub mc_std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl MomentReport {
    fn empty(n: usize, p: &TrigPoly) -> Self {
        MomentReport {
            n,
            r: p.k as f64 / p.n as f64,
            s: p.s,
            expectation_estimate: 0.0,
            reference: 0.0,
            diff: 0.0,
            expectation_error_bound: 0.0,
            variance_estimate: 0.0,
            mc_std_error: 0.0,
            samples: 0,
            seed: 0,
        }
    }
}

/// Unit phases `e(alpha x_n)` from compensated reduction.
fn base_phases(x: &[f64], alpha: f64) -> Vec<Complex64> {
    x.iter()
        .map(|&v| {
            let a = 2.0 * PI * frac_of_product(alpha, v);
            Complex64::new(a.cos(), a.sin())
        })
        .collect()
}

/// `S_j = sum_n e(j alpha x_n)` for `j = 1..=k`.
pub fn power_sums(x: &[f64], alpha: f64, k: usize) -> Vec<Complex64> {
    let z = base_phases(x, alpha);
    let n = z.len();
    if n == 0 || k == 0 {
        return vec![Complex64::new(0.0, 0.0); k];
    }
    // fixed chunking keeps the summation order independent of the pool size
    let chunk = (n.div_ceil(16)).max(256);
    let partials: Vec<Vec<Complex64>> = z
        .par_chunks(chunk)
        .map(|zs| {
            let mut s = vec![Complex64::new(0.0, 0.0); k];
            let mut quads = zs.chunks_exact(4);
            for q in &mut quads {
                let (mut w0, mut w1, mut w2, mut w3) = (q[0], q[1], q[2], q[3]);
                for sj in s.iter_mut() {
                    *sj += (w0 + w1) + (w2 + w3);
                    w0 *= q[0];
                    w1 *= q[1];
                    w2 *= q[2];
                    w3 *= q[3];
                }
            }
            for &zn in quads.remainder() {
                let mut w = zn;
                for sj in s.iter_mut() {
                    *sj += w;
                    w *= zn;
                }
            }
            s
        })
        .collect();
    let mut level = partials;
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                if pair.len() == 1 {
                    pair[0].clone()
                } else {
                    pair[0].iter().zip(&pair[1]).map(|(a, b)| a + b).collect()
                }
            })
            .collect();
    }
    level.pop().unwrap()
}

/// `(1/N) sum_{m != n} p(alpha (x_m - x_n))`, via power sums in O(N K).
pub fn pair_sum(x: &[f64], alpha: f64, p: &TrigPoly) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let s = power_sums(x, alpha, p.k);
    let mut terms = Vec::with_capacity(p.k + 1);
    terms.push(p.c0() * (nf * nf - nf));
    for (j, sj) in s.iter().enumerate() {
        let j = (j + 1) as i64;
        let w = (p.coeff(j) + p.coeff(-j)).re;
        terms.push(w * (sj.norm_sqr() - nf));
    }
    pairwise_sum(&terms) / nf
}

/// `∫ |mu''|`, integrated numerically on `[0, 1e4]` plus an explicit bound
/// on the remaining tail.
pub fn mu_second_derivative_l1() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let x_max = 1e4;
        let rule = gauss_legendre(16);
        let body = integrate_panels(|a| mu_second_derivative(a).abs(), 0.0, x_max, 40_000, &rule);
        let tail = (1.0 / x_max + 2.0 / x_max.powi(2) + 4.0 / x_max.powi(3)) / PI;
        2.0 * (body + tail)
    })
}

/// `mu''(a) = (1/pi) [cos a / a^2 - 4 sin a / a^3 + 6 (1 - cos a) / a^4]`.
pub fn mu_second_derivative(a: f64) -> f64 {
    if a.abs() < 0.5 {
        // (1 - cos a)/a^2 = sum_k (-1)^{k+1} a^{2k-2} / (2k)!
        let a2 = a * a;
        let mut fact = 24.0; // (2k)! at k = 2
        let mut pow = 1.0; // a^{2k-4}
        let mut sum = 0.0;
        for k in 2..12 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * (2.0 * kf - 2.0) * (2.0 * kf - 3.0) * pow / fact;
            pow *= a2;
            fact *= (2.0 * kf + 1.0) * (2.0 * kf + 2.0);
        }
        return sum / PI;
    }
    let s = (0.5 * a).sin();
    let one_minus_cos = 2.0 * s * s;
    (a.cos() / (a * a) - 4.0 * a.sin() / a.powi(3) + 6.0 * one_minus_cos / a.powi(4)) / PI
}

#[derive(Debug, Clone, Copy)]
pub struct ExpectationOptions {
    /// Gauss–Legendre panels (16 points each) over `[-A, A]`.
    pub quad_nodes: usize,
    pub window: f64,
    /// Fail with `TailTooFat` if the error budget exceeds this.
    pub tol: Option<f64>,
}

impl Default for ExpectationOptions {
    fn default() -> Self {
        ExpectationOptions { quad_nodes: 256, window: QUAD_WINDOW, tol: None }
    }
}

/// `∫ pair_sum(alpha) dmu(alpha)`, integrated term by term: the constant
/// term has mass one, each frequency `omega = 2 pi j |x_m - x_n|` below the
/// cutoff is integrated by Gauss–Legendre on `[-A, A]` (truncation bounded
/// by the tail mass), and higher ones are bounded by `‖mu''‖_1 / omega^2`.
pub fn expectation_mu(x: &[f64], p: &TrigPoly, opts: &ExpectationOptions) -> Result<MomentReport, VarianceError> {
    if opts.quad_nodes == 0 || !(opts.window > 0.0) {
        return Err(VarianceError::BadParams("quad_nodes and window must be positive".into()));
    }
    let n = x.len();
    let mut rep = MomentReport::empty(n, p);
    rep.reference = n as f64 * p.c0();
    if n == 0 {
        rep.diff = -rep.reference;
        return Ok(rep);
    }
    let nf = n as f64;
    let k = p.k;
    let w: Vec<f64> = (0..=k).map(|j| (p.coeff(j as i64) + p.coeff(-(j as i64))).re).collect();
    // suffix sums of |w_j| / j^2
    let mut tail_w = vec![0.0; k + 2];
    for j in (1..=k).rev() {
        tail_w[j] = tail_w[j + 1] + w[j].abs() / (j * j) as f64;
    }
    let c2 = mu_second_derivative_l1();
    let tail = mu_tail_mass(opts.window);
    let rule = gauss_legendre(16);
    let mu = WeightKernel::Mu;

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut low_terms = Vec::new();
    let mut budget_terms = Vec::new();
    for i in 0..n {
        for m in (i + 1)..n {
            let d = sorted[m] - sorted[i];
            if d == 0.0 {
                continue;
            }
            let omega1 = 2.0 * PI * d;
            // j below j0 are low frequency
            let j0 = ((LOW_FREQ_CUTOFF / omega1).ceil() as usize).saturating_sub(1).min(k);
            for j in 1..=j0 {
                if w[j] == 0.0 {
                    continue;
                }
                let om = j as f64 * omega1;
                let q = integrate_panels(|a| density(&mu, a) * (om * a).cos(), -opts.window, opts.window, opts.quad_nodes, &rule);
                low_terms.push(2.0 * w[j] * q);
                budget_terms.push(2.0 * w[j].abs() * tail);
            }
            if j0 < k {
                budget_terms.push(2.0 * c2 * tail_w[j0 + 1] / (omega1 * omega1));
            }
        }
    }
    let zero_term = p.c0() * (nf * nf - nf);
    let est = (zero_term + pairwise_sum(&low_terms)) / nf;
    let budget = pairwise_sum(&budget_terms) / nf;
    if let Some(tol) = opts.tol {
        if budget > tol {
            return Err(VarianceError::TailTooFat { budget, tol });
        }
    }
    rep.expectation_estimate = est;
    rep.diff = est - rep.reference;
    rep.expectation_error_bound = budget;
    Ok(rep)
}

/// Monte Carlo estimate of `∫ pair_sum(alpha)^2 dmu(alpha)` with a
/// jackknife standard error. Blocks of [`MC_BLOCK`] draws each use their own
/// substream, so the result does not depend on the pool size.
pub fn variance_mc(x: &[f64], p: &TrigPoly, samples: usize, seed: u64) -> Result<MomentReport, VarianceError> {
    if p.c0() != 0.0 {
        return Err(VarianceError::NotCentered);
    }
    if samples < 2 {
        return Err(VarianceError::BadParams("need at least 2 samples".into()));
    }
    let values = mc_values(x, p, samples, seed, |v| v * v);
    let (mean, se) = mean_and_jackknife(&values);
    let mut rep = MomentReport::empty(x.len(), p);
    rep.variance_estimate = mean.max(0.0);
    rep.mc_std_error = se;
    rep.samples = samples;
    rep.seed = seed;
    Ok(rep)
}

/// `f(pair_sum(alpha_i))` for `samples` draws from mu.
pub fn mc_values<F: Fn(f64) -> f64 + Sync>(x: &[f64], p: &TrigPoly, samples: usize, seed: u64, f: F) -> Vec<f64> {
    let sampler = MuSampler::global();
    let blocks = samples.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = substream(seed, MC, b as u64);
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let alphas: Vec<f64> = (0..count).map(|_| sampler.sample(&mut rng)).collect();
            alphas.into_iter().map(|a| f(pair_sum(x, a, p))).collect::<Vec<_>>()
        })
        .collect()
}

/// Mean and jackknife standard error of the mean.
pub fn mean_and_jackknife(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let total = pairwise_sum(v);
    let mean = total / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let loo: Vec<f64> = v.iter().map(|x| (total - x) / (n - 1.0)).collect();
    let loo_mean = pairwise_sum(&loo) / n;
    let dev: Vec<f64> = loo.iter().map(|t| (t - loo_mean).powi(2)).collect();
    (mean, ((n - 1.0) / n * pairwise_sum(&dev)).sqrt())
}

/// How dilations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSampler {
    Mu,
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl AlphaSampler {
    /// The `index`-th dilation for this seed.
    pub fn draw(&self, seed: u64, index: u64) -> f64 {
        let mut rng = substream(seed, ALPHA, index);
        match *self {
            AlphaSampler::Mu => MuSampler::global().sample(&mut rng),
            AlphaSampler::Uniform { lo, hi } => rng.gen_range(lo..hi),
            AlphaSampler::Fixed { value } => value,
        }
    }
}

impl FromStr for AlphaSampler {
    type Err = String;

    /// `mu`, `uniform:LO:HI`, `fixed:VALUE`, or a bare number.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad number {t:?} in sampler {s:?}"));
        match parts.as_slice() {
            ["mu"] => Ok(AlphaSampler::Mu),
            ["uniform", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(format!("uniform sampler needs lo < hi, got {s:?}"));
                }
                Ok(AlphaSampler::Uniform { lo, hi })
            }
            ["fixed", v] => Ok(AlphaSampler::Fixed { value: num(v)? }),
            [v] => Ok(AlphaSampler::Fixed { value: num(v)? }),
            _ => Err(format!("unknown alpha sampler {s:?}")),
        }
    }
}

impl fmt::Display for AlphaSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSampler::Mu => write!(f, "mu"),
            AlphaSampler::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            AlphaSampler::Fixed { value } => write!(f, "fixed:{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha_index: usize,
    pub alpha: f64,
    pub s: f64,
    pub pair_count: u64,
    pub r2: f64,
    /// `r2 / (2s) - 1`; for `s = 0` this is `r2` itself.
    pub rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub s: f64,
    pub alphas: usize,
    pub mean_r2: f64,
    pub mean_abs_rel_dev: f64,
    pub max_abs_rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<ConvergenceSummary>,
}

fn rel_dev(r2: f64, s: f64) -> f64 {
    if s == 0.0 {
        r2
    } else {
        r2 / (2.0 * s) - 1.0
    }
}

/// R2 at every `(N, alpha, s)`; the same dilations are used for every N.
pub fn convergence_experiment(
    spec: &SequenceSpec,
    s_list: &[f64],
    n_list: &[usize],
    sampler: AlphaSampler,
    alphas: usize,
    seed: u64,
) -> Result<ConvergenceTable, VarianceError> {
    if alphas == 0 {
        return Err(VarianceError::BadParams("need at least one alpha".into()));
    }
    let draws: Vec<f64> = (0..alphas).map(|i| sampler.draw(seed, i as u64)).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n in n_list {
        let seq = materialize(spec, n)?;
        let ests = draws
            .iter()
            .map(|&a| pair_correlation(&seq, a, s_list))
            .collect::<Result<Vec<_>, _>>()?;
        for (si, &s) in s_list.iter().enumerate() {
            let mut devs = Vec::with_capacity(alphas);
            let mut r2s = Vec::with_capacity(alphas);
            for (ai, e) in ests.iter().enumerate() {
                let en = &e.entries[si];
                let d = rel_dev(en.r2, s);
                rows.push(ConvergenceRow {
                    n,
                    alpha_index: ai,
                    alpha: e.alpha,
                    s,
                    pair_count: en.pair_count,
                    r2: en.r2,
                    rel_dev: d,
                });
                devs.push(d.abs());
                r2s.push(en.r2);
            }
            summary.push(ConvergenceSummary {
                n,
                s,
                alphas,
                mean_r2: pairwise_sum(&r2s) / alphas as f64,
                mean_abs_rel_dev: pairwise_sum(&devs) / alphas as f64,
                max_abs_rel_dev: devs.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    Ok(ConvergenceTable { rows, summary })
}

/// Centered majorant of degree `r N` for window `s`.
pub fn centered_majorant(n: usize, r: usize, s: f64) -> Result<TrigPoly, crate::selberg::SelbergError> {
    let p = crate::selberg::build_selberg(r * n, s, n, Sign::Plus)?;
    Ok(crate::selberg::center(&p))
}
