//! Quick invariant suites, one per module, run by `paircorr verify`.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::circle::{pair_correlation, pair_correlation_brute};
use crate::dyadic::{
    abs_differences, build_binning, cauchy_schwarz_domination, count_dyadic_brute, count_dyadic_sorted, p_norm_bilinear,
    p_norm_quadrature, smaller_at_zero, BinningMode,
};
use crate::energy::{energy_brute, energy_fast, energy_fast_with, trivial_count, EnergyOptions};
use crate::kernels::{density, fourier, mu_tail_mass, sample_mu, WeightKernel};
use crate::rng::substream;
use crate::selberg::{build_selberg, center, eval_trigpoly, verify_selberg, Sign};
use crate::sequences::{materialize, RealSeq, SeqKind, SequenceSpec};
use crate::variance::{centered_majorant, expectation_mu, pair_sum, power_sums, variance_mc, ExpectationOptions};

pub const SUITES: [&str; 7] = ["sequences", "circle", "kernels", "selberg", "energy", "dyadic", "variance"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Strictly increasing sequence with gaps drawn from `[lo, hi)`, starting
/// in `[0, 1)`. With `grid > 0` every value is a multiple of `1/grid`.
pub fn random_real_seq(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64, grid: u32) -> RealSeq {
    let snap = |v: f64| if grid > 0 { (v * grid as f64).round().max(1.0) / grid as f64 } else { v };
    let mut x = snap(rng.gen_range(0.0..1.0));
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(x);
        x += snap(rng.gen_range(lo..hi));
    }
    RealSeq::from_values(values).expect("gaps are positive")
}

fn stream(suite: &str, i: u64) -> ChaCha20Rng {
    substream(0x5eed, suite, i)
}

struct Suite {
    name: &'static str,
    out: Vec<CheckResult>,
}

impl Suite {
    fn check(&mut self, name: &'static str, passed: bool, detail: String) {
        self.out.push(CheckResult { suite: self.name, name, passed, detail });
    }

    /// Records an error as a failed check.
    fn attempt<F: FnOnce() -> Result<(bool, String), String>>(&mut self, name: &'static str, f: F) {
        match f() {
            Ok((ok, d)) => self.check(name, ok, d),
            Err(e) => self.check(name, false, format!("error: {e}")),
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn sequences(s: &mut Suite) {
    let specs = [
        SequenceSpec::power(1.5),
        SequenceSpec::power(0.5),
        SequenceSpec::polynomial(vec![0.0, 1.0, 1.0]),
        SequenceSpec::new(SeqKind::NLogN),
        SequenceSpec::new(SeqKind::NPlusLogN),
        SequenceSpec::new(SeqKind::Lacunary { ratio: 1.5 }),
    ];
    s.attempt("prefix_invariance", || {
        for spec in &specs {
            let a = materialize(spec, 50).map_err(err)?;
            let b = materialize(spec, 100).map_err(err)?;
            if a.values() != &b.values()[..50] {
                return Ok((false, format!("{spec} differs on the common prefix")));
            }
        }
        Ok((true, format!("{} specs", specs.len())))
    });
    s.attempt("strictly_increasing", || {
        let mut worst = f64::INFINITY;
        for spec in &specs {
            worst = worst.min(materialize(spec, 200).map_err(err)?.min_gap().map_err(err)?);
        }
        Ok((worst > 0.0, format!("smallest gap {worst:e}")))
    });
    s.attempt("slow_growth_flag", || {
        let slow = materialize(&SequenceSpec::power(0.5), 100).map_err(err)?.is_slow_growth();
        let fast = materialize(&SequenceSpec::power(1.5), 100).map_err(err)?.is_slow_growth();
        Ok((slow && !fast, format!("power(0.5) flagged {slow}, power(1.5) flagged {fast}")))
    });
    s.check(
        "rejects_invalid",
        RealSeq::from_values(vec![1.0, 1.0]).is_err()
            && RealSeq::from_values(vec![-1.0, 2.0]).is_err()
            && materialize(&SequenceSpec::power(-1.0), 3).is_err(),
        "ties, negatives, bad theta".into(),
    );
}

fn circle(s: &mut Suite) {
    let s_list = [0.25, 0.5, 1.0, 2.0, 4.0];
    s.attempt("fast_equals_brute", || {
        for i in 0..20 {
            let mut rng = stream("circle", i);
            let n = rng.gen_range(2..200);
            let seq = random_real_seq(&mut rng, n, 0.5, 3.0, 0);
            let alpha = rng.gen_range(1.0..2.0);
            let a = pair_correlation(&seq, alpha, &s_list).map_err(err)?;
            let b = pair_correlation_brute(&seq, alpha, &s_list).map_err(err)?;
            if a != b {
                return Ok((false, format!("instance {i} (N = {n}) differs")));
            }
        }
        Ok((true, "20 instances".into()))
    });
    s.attempt("monotone_even_bounded", || {
        let seq = materialize(&SequenceSpec::power(1.5), 500).map_err(err)?;
        let e = pair_correlation(&seq, 1.234, &s_list).map_err(err)?;
        let counts: Vec<u64> = e.entries.iter().map(|x| x.pair_count).collect();
        let ok = counts.windows(2).all(|w| w[0] <= w[1])
            && counts.iter().all(|&c| c % 2 == 0 && c <= 500 * 499);
        Ok((ok, format!("counts {counts:?}")))
    });
}

fn kernels(s: &mut Suite) {
    let ks = [
        WeightKernel::Mu,
        WeightKernel::Mu2Gamma { gamma: 0.3 },
        WeightKernel::GaussPhi,
        WeightKernel::ConvK { n: 100, eps: 0.25 },
    ];
    let nonneg = ks.iter().all(|k| {
        (-200..=200).all(|i| {
            let x = i as f64 * 0.173;
            density(k, x) >= 0.0 && fourier(k, x) >= 0.0
        })
    });
    s.check("nonnegative", nonneg, "densities and transforms on a grid".into());
    s.check(
        "tent_support",
        fourier(&WeightKernel::Mu, 0.0) == 1.0 && fourier(&WeightKernel::Mu, 1.0) == 0.0 && fourier(&WeightKernel::Mu, 0.5) == 0.5,
        "mu^ is the unit tent".into(),
    );
    let a = 1e4;
    let tail = mu_tail_mass(a);
    let asym = 2.0 / (std::f64::consts::PI * a);
    s.check("tail_mass", (tail - asym).abs() < 2.0 / (a * a), format!("mu(|x| > {a}) = {tail:e}, 2/(pi a) = {asym:e}"));
    s.check("sampler_deterministic", sample_mu(11, 256) == sample_mu(11, 256), "same seed, same draws".into());
}

fn selberg(s: &mut Suite) {
    for (name, k, sw, n) in [("contracts_k10", 10, 1.0, 10), ("contracts_k100", 100, 0.5, 100), ("contracts_k50_wide", 50, 3.0, 100)] {
        s.attempt(name, || {
            let mut worst = f64::INFINITY;
            for sign in [Sign::Plus, Sign::Minus] {
                let r = verify_selberg(&build_selberg(k, sw, n, sign).map_err(err)?).map_err(err)?;
                if !r.passed() {
                    return Ok((false, format!("{r:?}")));
                }
                worst = worst.min(r.sandwich_slack);
            }
            Ok((true, format!("K={k} s={sw} N={n}, min slack {worst:e}")))
        });
    }
    s.attempt("minorant_below_majorant", || {
        let plus = build_selberg(40, 1.0, 20, Sign::Plus).map_err(err)?;
        let minus = build_selberg(40, 1.0, 20, Sign::Minus).map_err(err)?;
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            if eval_trigpoly(&minus, x).map_err(err)? > eval_trigpoly(&plus, x).map_err(err)? + 1e-12 {
                return Ok((false, format!("at x = {x}")));
            }
        }
        Ok((true, "1000 points".into()))
    });
    s.attempt("centering", || {
        let c = center(&build_selberg(30, 1.0, 30, Sign::Plus).map_err(err)?);
        Ok((c.c0() == 0.0, format!("c0 = {}", c.c0())))
    });
}

fn energy(s: &mut Suite) {
    s.attempt("fast_equals_brute", || {
        for i in 0..10 {
            let mut rng = stream("energy", i);
            let n = rng.gen_range(2..=30);
            let seq = random_real_seq(&mut rng, n, 0.1, 2.0, 0);
            for g in [0.25, 0.5, 1.0] {
                let (a, b) = (energy_fast(&seq, g).map_err(err)?, energy_brute(&seq, g).map_err(err)?);
                if a != b {
                    return Ok((false, format!("instance {i}, gamma {g}: {a} vs {b}")));
                }
            }
        }
        Ok((true, "10 instances x 3 tolerances".into()))
    });
    s.attempt("shift_and_reflection", || {
        // dyadic grid values keep every difference exact
        let mut rng = stream("energy-shift", 0);
        let seq = random_real_seq(&mut rng, 60, 0.1, 1.5, 64);
        let shifted = RealSeq::from_values(seq.values().iter().map(|v| v + 37.0).collect()).map_err(err)?;
        let top = seq.values()[seq.len() - 1];
        let mirrored = RealSeq::from_values(seq.values().iter().rev().map(|v| top - v).collect()).map_err(err)?;
        let e = energy_fast(&seq, 0.5).map_err(err)?;
        let ok = e == energy_fast(&shifted, 0.5).map_err(err)? && e == energy_fast(&mirrored, 0.5).map_err(err)?;
        Ok((ok, format!("E = {e}")))
    });
    s.attempt("spill_equals_memory", || {
        let seq = materialize(&SequenceSpec::power(1.5), 300).map_err(err)?;
        let opts = EnergyOptions { chunk_bytes: Some(1 << 16), ..EnergyOptions::default() };
        let (a, b) = (energy_fast(&seq, 1.0).map_err(err)?, energy_fast_with(&seq, 1.0, &opts).map_err(err)?);
        Ok((a == b, format!("{a} vs {b}")))
    });
    s.attempt("bounds_and_monotone", || {
        let seq = materialize(&SequenceSpec::power(1.5), 200).map_err(err)?;
        let es: Vec<u64> = [0.125, 0.5, 2.0].iter().map(|&g| energy_fast(&seq, g)).collect::<Result<_, _>>().map_err(err)?;
        let n = 200u64;
        let ok = es[0] >= trivial_count(200) && es[0] <= es[1] && es[1] <= es[2] && es[2] <= n * n * n * n;
        Ok((ok, format!("{es:?}")))
    });
}

fn dyadic(s: &mut Suite) {
    s.attempt("brute_equals_sorted", || {
        for i in 0..10 {
            let mut rng = stream("dyadic", i);
            let n = rng.gen_range(2..=20);
            let z = abs_differences(&random_real_seq(&mut rng, n, 1.0, 4.0, 0)).map_err(err)?;
            for u in 1..=3 {
                let (a, b) = (count_dyadic_brute(&z, u).map_err(err)?, count_dyadic_sorted(&z, u).map_err(err)?);
                if a != b {
                    return Ok((false, format!("instance {i}, u {u}: {a} vs {b}")));
                }
            }
        }
        Ok((true, "10 instances x 3 blocks".into()))
    });
    let modes = [
        BinningMode::Case1 { eps: 0.2 },
        BinningMode::Case2 { beta: 0.5 },
        BinningMode::Thm2 { beta: 0.6, eps: 0.1 },
    ];
    s.attempt("binning_identities", || {
        let seq = materialize(&SequenceSpec::power(1.5), 40).map_err(err)?;
        let z = abs_differences(&seq).map_err(err)?;
        let mut worst = 0.0f64;
        for mode in modes {
            let bin = build_binning(&z, 40, 2, mode).map_err(err)?;
            if bin.sum_a2() != bin.sum_b2() {
                return Ok((false, format!("{mode:?}: sum a^2 != sum b^2")));
            }
            let r = p_norm_quadrature(&bin).map_err(err)?;
            worst = worst.max(r.rel_err);
            if cauchy_schwarz_domination(&bin).violations > 0 || !smaller_at_zero(&bin, &z).holds() {
                return Ok((false, format!("{mode:?}: inequality chain broken")));
            }
            if p_norm_bilinear(&bin) < 0.0 {
                return Ok((false, format!("{mode:?}: negative bilinear form")));
            }
        }
        Ok((true, format!("3 modes, worst quadrature relative error {worst:e}")))
    });
}

fn variance(s: &mut Suite) {
    s.attempt("power_sums_direct", || {
        let x: Vec<f64> = (1..=37).map(|n| (n as f64).powf(1.5)).collect();
        let alpha = 1.37;
        let ps = power_sums(&x, alpha, 9);
        let mut worst = 0.0f64;
        for (j, sj) in ps.iter().enumerate() {
            let direct: num_complex::Complex64 = x
                .iter()
                .map(|&v| {
                    let a = 2.0 * std::f64::consts::PI * ((j + 1) as f64 * alpha * v).rem_euclid(1.0);
                    num_complex::Complex64::new(a.cos(), a.sin())
                })
                .sum();
            worst = worst.max((sj - direct).norm());
        }
        Ok((worst < 1e-9, format!("max deviation {worst:e}")))
    });
    s.attempt("expectation_identity", || {
        let x: Vec<f64> = (1..=40).map(|n| n as f64 * 1.5).collect();
        let p = build_selberg(80, 1.0, 40, Sign::Plus).map_err(err)?;
        let r = expectation_mu(&x, &p, &ExpectationOptions::default()).map_err(err)?;
        let ok = (r.diff + p.c0()).abs() <= r.expectation_error_bound + 1e-12;
        Ok((ok, format!("diff {:e}, -c0 {:e}, bound {:e}", r.diff, -p.c0(), r.expectation_error_bound)))
    });
    s.attempt("mc_deterministic_centered", || {
        let x: Vec<f64> = (1..=50).map(|n| (n as f64).powf(1.5)).collect();
        let p = centered_majorant(50, 1, 1.0).map_err(err)?;
        let a = variance_mc(&x, &p, 256, 3).map_err(err)?;
        let b = variance_mc(&x, &p, 256, 3).map_err(err)?;
        let finite = pair_sum(&x, 1.5, &p).is_finite();
        Ok((a == b && a.variance_estimate >= 0.0 && finite, format!("estimate {:e}", a.variance_estimate)))
    });
}

/// Runs one suite by name, or every suite for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<CheckResult>, String> {
    let names: Vec<&'static str> = match name {
        "all" => SUITES.to_vec(),
        other => vec![*SUITES.iter().find(|&&s| s == other).ok_or_else(|| format!("unknown suite {other:?}"))?],
    };
    let mut out = Vec::new();
    for n in names {
        let mut s = Suite { name: n, out: Vec::new() };
        match n {
            "sequences" => sequences(&mut s),
            "circle" => circle(&mut s),
            "kernels" => kernels(&mut s),
            "selberg" => selberg(&mut s),
            "energy" => energy(&mut s),
            "dyadic" => dyadic(&mut s),
            _ => variance(&mut s),
        }
        out.extend(s.out);
    }
    Ok(out)
}
