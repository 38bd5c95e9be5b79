//! Small numerical kernels shared across modules: compensated reduction
//! modulo one, Gauss–Legendre rules, the sine integral and a
//! deterministic pairwise summation.

use std::f64::consts::{FRAC_PI_2, PI};

/// Error-free product: returns `(p, e)` with `p = fl(a*b)` and `a*b = p + e` exactly.
#[inline]
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// `(a*b) mod 1` in `[0, 1)` using the error-free product, so the rounding
/// of the product itself does not leak into the fractional part.
#[inline]
pub fn frac_of_product(a: f64, b: f64) -> f64 {
    let (p, e) = two_product(a, b);
    // p - floor(p) is exact for finite p
    let mut f = (p - p.floor()) + e;
    if f >= 1.0 {
        f -= 1.0;
    }
    if f < 0.0 {
        f += 1.0;
    }
    // f may round up to exactly 1.0 after adding a tiny negative e to 0
    if f >= 1.0 {
        f = 0.0;
    }
    f
}

/// Distance to the nearest integer, in `[0, 1/2]`.
#[inline]
pub fn nearest_int_dist(x: f64) -> f64 {
    let f = x - x.floor();
    f.min(1.0 - f)
}

/// Circular distance between two points of `[0, 1)`.
#[inline]
pub fn circ_dist(u: f64, v: f64) -> f64 {
    let d = (u - v).abs();
    d.min(1.0 - d)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre integration of `f` over `[a, b]` split into
/// `panels` equal panels, each with the supplied rule on `[-1, 1]`.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            acc += w * f(mid + 0.5 * h * x);
        }
        parts.push(acc * 0.5 * h);
    }
    pairwise_sum(&parts)
}

/// Sine integral `Si(x) = ∫_0^x sin(t)/t dt`.
///
/// Power series below 2, complex continued fraction for the exponential
/// integral above (relative accuracy near machine epsilon).
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x < 2.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0usize;
        loop {
            k += 1;
            let n = (2 * k) as f64;
            term *= -x2 / (n * (n + 1.0));
            let add = term / (n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    // Lentz evaluation of E1(ix); Si = pi/2 + Im(h e^{-ix})
    let tiny = 1e-300;
    let (mut br, bi) = (1.0, x);
    let (mut cr, mut ci) = (1.0 / tiny, 0.0);
    let (mut dr, mut di) = cdiv(1.0, 0.0, br, bi);
    let (mut hr, mut hi) = (dr, di);
    for i in 2..1000 {
        let a = -((i - 1) * (i - 1)) as f64;
        br += 2.0;
        // d = 1 / (a d + b)
        let (tr, ti) = (a * dr + br, a * di + bi);
        let (nd_r, nd_i) = cdiv(1.0, 0.0, tr, ti);
        dr = nd_r;
        di = nd_i;
        // c = b + a / c
        let (qr, qi) = cdiv(a, 0.0, cr, ci);
        cr = br + qr;
        ci = bi + qi;
        let (delr, deli) = (cr * dr - ci * di, cr * di + ci * dr);
        let (nhr, nhi) = (hr * delr - hi * deli, hr * deli + hi * delr);
        hr = nhr;
        hi = nhi;
        if (delr - 1.0).abs() + deli.abs() < 1e-16 {
            break;
        }
    }
    let (c, s) = (x.cos(), -x.sin());
    let im = hr * s + hi * c;
    FRAC_PI_2 + im
}

fn cdiv(ar: f64, ai: f64, br: f64, bi: f64) -> (f64, f64) {
    let den = br * br + bi * bi;
    ((ar * br + ai * bi) / den, (ai * br - ar * bi) / den)
}

/// Pairwise summation in a fixed tree order; the result depends only on the
/// order of `xs`, never on how it was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_keeps_exact_representable_parts() {
        assert_eq!(frac_of_product(1.0, 1e9 + 0.25), 0.25);
        assert_eq!(frac_of_product(0.5, 9.0), 0.5);
        assert_eq!(frac_of_product(0.5, 4.0), 0.0);
        let f = frac_of_product(-0.3, 1.0);
        assert!((f - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_product_is_error_free() {
        let (p, e) = two_product(0.1, 3.0);
        // 0.1 * 3 is not representable; the pair recovers it
        assert!(e != 0.0);
        assert!((p + e - 0.30000000000000004).abs() < 1e-16);
    }

    #[test]
    fn nearest_int_dist_cases() {
        assert_eq!(nearest_int_dist(3.0), 0.0);
        assert_eq!(nearest_int_dist(-2.75), 0.25);
        assert_eq!(nearest_int_dist(7.5), 0.5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 15 exact
        let v: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(14)).sum();
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn sine_integral_reference_values() {
        // tabulated values
        assert!((sine_integral(1.0) - 0.946_083_070_367_183_0).abs() < 1e-14);
        assert!((sine_integral(10.0) - 1.658_347_594_218_874_0).abs() < 1e-13);
        assert!((sine_integral(2.0) - 1.605_412_976_802_694_8).abs() < 1e-13);
        assert!((sine_integral(1e6) - FRAC_PI_2).abs() < 1e-5);
    }

    #[test]
    fn sine_integral_matches_quadrature() {
        let rule = gauss_legendre(16);
        for &x in &[0.5, 1.9, 2.1, 7.3, 40.0] {
            let q = integrate_panels(|t: f64| if t == 0.0 { 1.0 } else { t.sin() / t }, 0.0, x, 64, &rule);
            assert!((q - sine_integral(x)).abs() < 1e-12, "x={x}");
        }
    }
}
