use std::collections::BTreeMap;

use serde::Serialize;

use super::parse::mode_label;
use super::*;
use crate::circle::{pair_correlation, pair_correlation_brute};
use crate::dyadic::{
    abs_differences, build_binning, capture_report, cauchy_schwarz_domination, count_dyadic_brute, count_dyadic_sorted,
    dump, p_norm_quadrature, smaller_at_zero, BinningDump, CaptureReport, DominationReport, PNormReport, ZeroReport,
};
use crate::energy::{energy_brute, energy_tie_guarded, fit_scaling, gamma_scan, trivial_count, EnergyOptions};
use crate::rng::{substream, PERTURB};
use crate::selberg::{selberg_coefficients, verify_selberg, Sign};
use crate::sequences::materialize;
use crate::variance::{centered_majorant, convergence_experiment, expectation_mu, variance_mc, ExpectationOptions};
use crate::verify::run_suite;

pub(super) fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<(), RunError> {
    match cmd {
        Command::Paircorr(a) => paircorr(a, ctx),
        Command::Energy(a) => energy(a, ctx),
        Command::EnergyScan(a) => energy_scan(a, ctx),
        Command::Scaling(a) => scaling(a, ctx),
        Command::DyadicCount(a) => dyadic_count(a, ctx),
        Command::BinningDiag(a) => binning_diag(a, ctx),
        Command::SelbergCheck(a) => selberg_check(a, ctx),
        Command::Expectation(a) => expectation(a, ctx),
        Command::Variance(a) => variance(a, ctx),
        Command::Converge(a) => converge(a, ctx),
        Command::Verify(a) => verify(a, ctx),
        Command::Replay(_) => Err(RunError::BadArgs("replay is handled by run()".into())),
    }
}

fn energy_options(ctx: &Ctx, no_chunking: bool, chunk_bytes: Option<usize>) -> EnergyOptions {
    EnergyOptions {
        mem_budget: ctx.global.mem_budget,
        allow_chunking: !no_chunking,
        chunk_bytes,
        tmp_dir: ctx.global.tmp_dir.clone(),
    }
}

#[derive(Serialize)]
struct PairRow {
    #[serde(rename = "N")]
    n: usize,
    alpha: f64,
    s: f64,
    pair_count: u64,
    r2: f64,
}

fn paircorr(a: &PaircorrArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    if a.alphas == 0 {
        return Err(RunError::BadArgs("--alphas must be >= 1".into()));
    }
    let seq = materialize(&a.seq, a.n)?;
    ctx.gate(&seq)?;
    let mut rows = Vec::new();
    let mut dev = vec![0.0; a.s.len()];
    for i in 0..a.alphas {
        let alpha = a.alpha_sampler.draw(ctx.global.seed, i as u64);
        let est = if a.brute { pair_correlation_brute(&seq, alpha, &a.s)? } else { pair_correlation(&seq, alpha, &a.s)? };
        for (k, e) in est.entries.iter().enumerate() {
            if e.s > 0.0 {
                dev[k] += (e.r2 / (2.0 * e.s) - 1.0).abs() / a.alphas as f64;
            }
            rows.push(PairRow { n: a.n, alpha, s: e.s, pair_count: e.pair_count, r2: e.r2 });
        }
    }
    ctx.note("mean_abs_rel_dev", a.s.iter().zip(&dev).map(|(s, d)| (s.to_string(), *d)).collect::<BTreeMap<_, _>>());
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

#[derive(Serialize)]
struct EnergyRow {
    #[serde(rename = "N")]
    n: usize,
    gamma: f64,
    total: u64,
    trivial: u64,
    nontrivial: u64,
}

fn energy(a: &EnergyArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let seq = materialize(&a.seq, a.n)?;
    ctx.gate(&seq)?;
    let rows: Vec<EnergyRow> = if a.brute {
        let trivial = trivial_count(a.n);
        a.gamma
            .iter()
            .map(|&g| {
                let total = energy_brute(&seq, g)?;
                Ok(EnergyRow { n: a.n, gamma: g, total, trivial, nontrivial: total.saturating_sub(trivial) })
            })
            .collect::<Result<_, RunError>>()?
    } else {
        let curve = gamma_scan(&seq, &a.gamma, &energy_options(ctx, a.no_chunking, a.chunk_bytes))?;
        ctx.note("boundary_ties", &curve.boundary_ties);
        curve_rows(&curve)
    };
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

fn curve_rows(c: &crate::energy::EnergyCurve) -> Vec<EnergyRow> {
    c.gammas
        .iter()
        .zip(c.totals.iter().zip(&c.nontrivial))
        .map(|(&gamma, (&total, &nontrivial))| EnergyRow { n: c.n, gamma, total, trivial: c.trivial, nontrivial })
        .collect()
}

fn energy_scan(a: &EnergyScanArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let seq = materialize(&a.seq, a.n)?;
    ctx.gate(&seq)?;
    let curve = gamma_scan(&seq, &a.gamma, &energy_options(ctx, a.no_chunking, None))?;
    let pts: Vec<(f64, f64)> = curve
        .gammas
        .iter()
        .zip(&curve.nontrivial)
        .filter(|(_, &c)| c > 0)
        .map(|(&g, &c)| (g, c as f64))
        .collect();
    match fit_scaling(&pts) {
        Ok(f) => ctx.note("gamma_fit_nontrivial", f),
        Err(e) => ctx.note("gamma_fit_nontrivial", e.to_string()),
    }
    ctx.note("boundary_ties", &curve.boundary_ties);
    let rows = curve_rows(&curve);
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

#[derive(Serialize)]
struct ScalingRow {
    #[serde(rename = "N")]
    n: usize,
    gamma: f64,
    gamma_used: f64,
    perturbed: bool,
    total: u64,
    trivial: u64,
    nontrivial: u64,
}

fn scaling(a: &ScalingArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let opts = energy_options(ctx, a.no_chunking, None);
    let mut rows = Vec::new();
    for (i, &n) in a.n.iter().enumerate() {
        let seq = materialize(&a.seq, n)?;
        ctx.gate(&seq)?;
        let mut rng = substream(ctx.global.seed, PERTURB, i as u64);
        let g = energy_tie_guarded(&seq, a.gamma, &opts, &mut rng)?;
        let trivial = trivial_count(n);
        rows.push(ScalingRow {
            n,
            gamma: a.gamma,
            gamma_used: g.gamma_used,
            perturbed: g.perturbed,
            total: g.total,
            trivial,
            nontrivial: g.total.saturating_sub(trivial),
        });
    }
    let total: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.total as f64)).collect();
    let nontrivial: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.nontrivial > 0).map(|r| (r.n as f64, r.nontrivial as f64)).collect();
    for (key, pts) in [("fit_total", total), ("fit_nontrivial", nontrivial)] {
        match fit_scaling(&pts) {
            Ok(f) => ctx.note(key, f),
            Err(e) => ctx.note(key, e.to_string()),
        }
    }
    let perturbed: Vec<_> = rows.iter().filter(|r| r.perturbed).map(|r| (r.n, r.gamma_used)).collect();
    ctx.note("perturbations", perturbed);
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

#[derive(Serialize)]
struct DyadicRow {
    #[serde(rename = "N")]
    n: usize,
    u: u32,
    mode: String,
    band_lo: f64,
    band_hi: f64,
    z_count: usize,
    count_brute: u64,
    count_sorted: u64,
}

fn dyadic_count(a: &DyadicCountArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let seq = materialize(&a.seq, a.n)?;
    ctx.gate(&seq)?;
    let z = abs_differences(&seq)?;
    let mut rows = Vec::new();
    for &u in &a.u {
        let (zr, label, lo, hi) = match a.mode {
            Some(mode) => {
                let bin = build_binning(&z, a.n, u, mode)?;
                let zr: Vec<f64> = z.iter().copied().filter(|&v| bin.in_band(v)).collect();
                (zr, mode_label(&mode), bin.z_lo, bin.z_hi)
            }
            None => (z.clone(), "all".to_string(), 0.0, f64::INFINITY),
        };
        let count_brute = count_dyadic_brute(&zr, u)?;
        let count_sorted = count_dyadic_sorted(&zr, u)?;
        rows.push(DyadicRow { n: a.n, u, mode: label, band_lo: lo, band_hi: hi, z_count: zr.len(), count_brute, count_sorted });
    }
    ctx.write_csv(ctx.global.out.clone(), &rows)?;
    let bad: Vec<u32> = rows.iter().filter(|r| r.count_brute != r.count_sorted).map(|r| r.u).collect();
    if !bad.is_empty() {
        return Err(RunError::Check(format!("brute and sorted dyadic counts differ at u = {bad:?}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct DiagReport {
    #[serde(rename = "N")]
    n: usize,
    u: u32,
    mode: String,
    binning: BinningDump,
    p_norm: Option<PNormReport>,
    p_norm_error: Option<String>,
    capture: CaptureReport,
    capture_fraction: f64,
    domination: DominationReport,
    zero: ZeroReport,
}

fn binning_diag(a: &BinningDiagArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let seq = materialize(&a.seq, a.n)?;
    ctx.gate(&seq)?;
    let z = abs_differences(&seq)?;
    let bin = build_binning(&z, a.n, a.u, a.mode)?;
    let (p_norm, p_norm_error) = match p_norm_quadrature(&bin) {
        Ok(r) => (Some(r), None),
        Err(e @ DyadicError::QuadratureDivergence { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let capture = capture_report(&bin, &z)?;
    let domination = cauchy_schwarz_domination(&bin);
    let zero = smaller_at_zero(&bin, &z);
    let capture_fraction = if capture.solutions == 0 { 1.0 } else { capture.captured as f64 / capture.solutions as f64 };

    let mut logs = BTreeMap::new();
    if let Some(p) = &p_norm {
        logs.insert("p_norm_rel_err".to_string(), p.rel_err);
        logs.insert("p_norm_ratio".to_string(), p.p_norm_ratio);
    }
    logs.insert("solutions_over_upper_bound".to_string(), capture.ratio);
    logs.insert("worst_scaled_gap".to_string(), capture.worst_scaled_gap);
    logs.insert("cauchy_schwarz_max_ratio".to_string(), domination.max_ratio);
    logs.insert(
        "zero_lhs_over_cs_bound".to_string(),
        if zero.cs_bound == 0 { 0.0 } else { zero.lhs as f64 / zero.cs_bound as f64 },
    );
    ctx.note("max_ratio_logs", &logs);
    ctx.note("capture_fraction", capture_fraction);
    let report = DiagReport {
        n: a.n,
        u: a.u,
        mode: mode_label(&a.mode),
        binning: dump(&bin, logs),
        p_norm,
        p_norm_error: p_norm_error.clone(),
        capture,
        capture_fraction,
        domination,
        zero,
    };
    ctx.write_json(ctx.global.out.clone(), &report)?;
    if let Some(e) = p_norm_error {
        return Err(RunError::Check(e));
    }
    if report.domination.violations > 0 {
        return Err(RunError::Check(format!("{} Cauchy-Schwarz violations", report.domination.violations)));
    }
    if !report.zero.holds() {
        return Err(RunError::Check("zero-frequency chain does not hold".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SelbergRow {
    #[serde(rename = "K")]
    k: usize,
    s: f64,
    #[serde(rename = "N")]
    n: usize,
    sign: &'static str,
    grid_points: usize,
    sandwich_slack: f64,
    mean_defect: f64,
    coeff_slack: f64,
    hermitian_defect: f64,
    passed: bool,
}

fn selberg_check(a: &SelbergArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for &k in &a.k {
        for &s in &a.s {
            for &n in &a.n {
                for &sign in &a.sign {
                    let (sg, label) = match sign {
                        SignArg::Plus => (Sign::Plus, "plus"),
                        SignArg::Minus => (Sign::Minus, "minus"),
                    };
                    let p = selberg_coefficients(k, s, n, sg)?;
                    let r = verify_selberg(&p)?;
                    rows.push(SelbergRow {
                        k,
                        s,
                        n,
                        sign: label,
                        grid_points: r.grid_points,
                        sandwich_slack: r.sandwich_slack,
                        mean_defect: r.mean_defect,
                        coeff_slack: r.coeff_slack,
                        hermitian_defect: r.hermitian_defect,
                        passed: r.passed(),
                    });
                }
            }
        }
    }
    let min = |f: fn(&SelbergRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    ctx.note("min_sandwich_slack", min(|r| r.sandwich_slack));
    ctx.note("min_coeff_slack", min(|r| r.coeff_slack));
    ctx.note("max_mean_defect", rows.iter().map(|r| r.mean_defect).fold(0.0, f64::max));
    ctx.write_csv(ctx.global.out.clone(), &rows)?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(RunError::Check(format!("{failed} of {} polynomials failed their contracts", rows.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct ExpectationRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    s: f64,
    expectation_estimate: f64,
    reference: f64,
    diff: f64,
    n_abs_diff: f64,
    expectation_error_bound: f64,
}

fn expectation(a: &ExpectationArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let opts = ExpectationOptions { quad_nodes: a.quad_nodes, window: a.window, tol: a.tol };
    let mut rows = Vec::new();
    for &n in &a.n {
        let seq = materialize(&a.seq, n)?;
        ctx.gate(&seq)?;
        let p = crate::selberg::build_selberg(a.r * n, a.s, n, Sign::Plus)?;
        let rep = expectation_mu(seq.values(), &p, &opts)?;
        rows.push(ExpectationRow {
            n,
            k: p.k,
            s: a.s,
            expectation_estimate: rep.expectation_estimate,
            reference: rep.reference,
            diff: rep.diff,
            n_abs_diff: n as f64 * rep.diff.abs(),
            expectation_error_bound: rep.expectation_error_bound,
        });
    }
    let scaled: Vec<f64> = rows.iter().map(|r| r.n_abs_diff).collect();
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    ctx.note("n_abs_diff_spread", if lo > 0.0 { hi / lo } else { f64::INFINITY });
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

#[derive(Serialize)]
struct VarianceRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    s: f64,
    samples: usize,
    variance_estimate: f64,
    mc_std_error: f64,
}

fn variance(a: &VarianceArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for &n in &a.n {
        let seq = materialize(&a.seq, n)?;
        ctx.gate(&seq)?;
        let p = centered_majorant(n, a.r, a.s)?;
        let rep = variance_mc(seq.values(), &p, a.samples, ctx.global.seed)?;
        rows.push(VarianceRow {
            n,
            k: p.k,
            s: a.s,
            samples: rep.samples,
            variance_estimate: rep.variance_estimate,
            mc_std_error: rep.mc_std_error,
        });
    }
    ctx.write_csv(ctx.global.out.clone(), &rows)
}

fn converge(a: &ConvergeArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let (spec, exploratory) = a.resolve()?;
    if let Some(&nmax) = a.n.iter().max() {
        let seq = materialize(&spec, nmax)?;
        if exploratory {
            ctx.note("exploratory", true);
            ctx.note("slow_growth", seq.is_slow_growth());
        } else {
            ctx.gate(&seq)?;
        }
    }
    let table = convergence_experiment(&spec, &a.s, &a.n, a.alpha_sampler, a.alphas, ctx.global.seed)?;
    ctx.note("summary", &table.summary);
    ctx.write_csv(ctx.global.out.clone(), &table.rows)?;
    if let Some(p) = ctx.sibling("summary") {
        ctx.write_csv(Some(p), &table.summary)?;
    }
    Ok(())
}

fn verify(a: &VerifyArgs, ctx: &mut Ctx) -> Result<(), RunError> {
    let results = run_suite(&a.suite).map_err(RunError::BadArgs)?;
    for r in &results {
        eprintln!("{} {}/{}: {}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    ctx.note("checks", results.len());
    ctx.note("failed", failed);
    if ctx.global.out.is_some() {
        ctx.write_csv(ctx.global.out.clone(), &results)?;
    }
    if failed > 0 {
        return Err(RunError::Check(format!("{failed} of {} invariant checks failed", results.len())));
    }
    Ok(())
}
