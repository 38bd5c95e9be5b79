//! Weight measures and kernels: the Fejér-type measure mu, its rescaled
//! version mu_{2 gamma}, the Gaussian Phi and the convolution kernel K.
//!
//! Fourier convention: `f^(xi) = ∫ f(x) e^{-i xi x} dx`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::sine_integral;

/// Below this |x| the removable singularities are filled by series.
const SMALL_X: f64 = 1.0 / (1u64 << 26) as f64;

/// Inverse-CDF table range and size for the mu sampler.
const TABLE_MAX: f64 = 200.0;
const TABLE_NODES: usize = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("bad kernel parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKernel {
    Mu,
    Mu2Gamma { gamma: f64 },
    GaussPhi,
    ConvK {
        #[serde(rename = "N")]
        n: usize,
        eps: f64,
    },
}

impl WeightKernel {
    pub fn mu2gamma(gamma: f64) -> Result<Self, KernelError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(KernelError::BadParams(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(WeightKernel::Mu2Gamma { gamma })
    }

    pub fn conv_k(n: usize, eps: f64) -> Result<Self, KernelError> {
        if n < 16 {
            return Err(KernelError::BadParams(format!("conv_K needs N >= 16, got {n}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(KernelError::BadParams(format!("eps must be > 0, got {eps}")));
        }
        Ok(WeightKernel::ConvK { n, eps })
    }

    /// Half-width of the Fourier support, infinite for Phi.
    pub fn support(&self) -> f64 {
        match *self {
            WeightKernel::Mu => 1.0,
            WeightKernel::Mu2Gamma { gamma } => 2.0 * gamma,
            WeightKernel::GaussPhi => f64::INFINITY,
            WeightKernel::ConvK { n, eps } => 2.0 * conv_k_scale(n, eps),
        }
    }
}

/// `(1 + eps/4) ln N`.
pub fn conv_k_scale(n: usize, eps: f64) -> f64 {
    (1.0 + eps / 4.0) * (n as f64).ln()
}

/// `sin^2(c x) / (pi c x^2)`, whose transform is the tent of half-width `2c`.
fn fejer(c: f64, x: f64) -> f64 {
    if x.abs() < SMALL_X / c.max(1.0) {
        // sin^2(cx) = c^2 x^2 (1 - c^2 x^2 / 3 + ...)
        let y = c * x;
        return c / PI * (1.0 - y * y / 3.0);
    }
    let s = (c * x).sin();
    s * s / (PI * c * x * x)
}

pub fn density(k: &WeightKernel, x: f64) -> f64 {
    match *k {
        WeightKernel::Mu => fejer(0.5, x),
        WeightKernel::Mu2Gamma { gamma } => fejer(gamma, x),
        WeightKernel::GaussPhi => (-0.5 * x * x).exp(),
        WeightKernel::ConvK { n, eps } => fejer(conv_k_scale(n, eps), x),
    }
}

fn tent(xi: f64, half_width: f64) -> f64 {
    (1.0 - xi.abs() / half_width).max(0.0)
}

pub fn fourier(k: &WeightKernel, xi: f64) -> f64 {
    match *k {
        WeightKernel::Mu => tent(xi, 1.0),
        WeightKernel::Mu2Gamma { gamma } => tent(xi, 2.0 * gamma),
        WeightKernel::GaussPhi => (2.0 * PI).sqrt() * (-0.5 * xi * xi).exp(),
        WeightKernel::ConvK { n, eps } => tent(xi, 2.0 * conv_k_scale(n, eps)),
    }
}

/// `mu([-a, a]) = (2/pi) (Si(a) - (1 - cos a)/a)`.
pub fn mu_cdf_symmetric(a: f64) -> f64 {
    let a = a.abs();
    if a == 0.0 {
        return 0.0;
    }
    let s = (0.5 * a).sin();
    (2.0 / PI) * (sine_integral(a) - 2.0 * s * s / a)
}

/// `mu(|x| > a)`.
pub fn mu_tail_mass(a: f64) -> f64 {
    1.0 - mu_cdf_symmetric(a)
}

/// Monotone cubic (Fritsch–Carlson) interpolant of `x` as a function of
/// the CDF value, on the table `|x| <= TABLE_MAX`.
pub struct MuSampler {
    f: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    f_max: f64,
}

impl MuSampler {
    fn build() -> Self {
        let mut f = Vec::with_capacity(TABLE_NODES + 1);
        let mut x = Vec::with_capacity(TABLE_NODES + 1);
        for i in 0..=TABLE_NODES {
            let xi = TABLE_MAX * i as f64 / TABLE_NODES as f64;
            let fi = mu_cdf_symmetric(xi);
            // drop nodes where rounding flattens the CDF
            if f.last().map_or(true, |&l| fi > l) {
                f.push(fi);
                x.push(xi);
            }
        }
        let n = f.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (x[i + 1] - x[i]) / (f[i + 1] - f[i])).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            let h0 = f[i] - f[i - 1];
            let h1 = f[i + 1] - f[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
        let f_max = f[n - 1];
        MuSampler { f, x, d, f_max }
    }

    /// Process-wide table, built on first use.
    pub fn global() -> &'static MuSampler {
        static TABLE: OnceLock<MuSampler> = OnceLock::new();
        TABLE.get_or_init(MuSampler::build)
    }

    /// Quantile of `|X|` for `p` in `[0, F(TABLE_MAX))`.
    fn abs_quantile(&self, p: f64) -> f64 {
        let i = self.f.partition_point(|&v| v <= p).clamp(1, self.f.len() - 1) - 1;
        let h = self.f[i + 1] - self.f[i];
        let t = (p - self.f[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.x[i] + h10 * h * self.d[i] + h01 * self.x[i + 1] + h11 * h * self.d[i + 1]
    }

    /// One draw from mu.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.gen();
        let mag = if p < self.f_max {
            self.abs_quantile(p)
        } else {
            // |X| beyond the table: Pareto proposal c/x^2 dominates (1 - cos x)/x^2
            loop {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let x = TABLE_MAX / u;
                let s = (0.5 * x).sin();
                if rng.gen::<f64>() < s * s {
                    break x;
                }
            }
        };
        if rng.gen::<bool>() {
            mag
        } else {
            -mag
        }
    }
}

/// `count` i.i.d. draws from mu, deterministic in `seed`.
pub fn sample_mu(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_mu_with(&mut rng, count)
}

pub fn sample_mu_with<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
    let s = MuSampler::global();
    (0..count).map(|_| s.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gauss_legendre, integrate_panels};

    #[test]
    fn densities_at_special_points() {
        assert_eq!(density(&WeightKernel::Mu, 0.0), 1.0 / (2.0 * PI));
        assert!((density(&WeightKernel::Mu, PI) - 2.0 / PI.powi(3)).abs() < 1e-16);
        let k = WeightKernel::conv_k(100, 0.2).unwrap();
        assert!((density(&k, 0.0) - 1.05 * 100f64.ln() / PI).abs() < 1e-15);
        let g = WeightKernel::mu2gamma(0.5).unwrap();
        for &x in &[0.0, 1e-9, 0.3, 7.0] {
            assert!((density(&g, x) - density(&WeightKernel::Mu, x)).abs() < 1e-17);
        }
        // series and direct formula agree across the switch point
        let x = 1.01 * SMALL_X;
        let direct = 2.0 * (x / 2.0).sin().powi(2) / (PI * x * x);
        assert!((density(&WeightKernel::Mu, x) - direct).abs() < 1e-12);
    }

    #[test]
    fn transforms() {
        assert_eq!(fourier(&WeightKernel::Mu, 0.0), 1.0);
        assert_eq!(fourier(&WeightKernel::Mu, 1.5), 0.0);
        assert_eq!(fourier(&WeightKernel::GaussPhi, 0.0), (2.0 * PI).sqrt());
        let g = WeightKernel::mu2gamma(0.7).unwrap();
        assert_eq!(fourier(&g, 1.4), 0.0);
        assert!(fourier(&g, 1.39) > 0.0);
        let k = WeightKernel::conv_k(64, 0.25).unwrap();
        let edge = 2.0 * 1.0625 * 64f64.ln();
        assert_eq!(fourier(&k, edge), 0.0);
        assert!(fourier(&k, edge * 0.999) > 0.0);
        for &xi in &[-30.0, -1.0, -0.2, 0.0, 0.5, 3.0, 100.0] {
            for k in [WeightKernel::Mu, g, WeightKernel::GaussPhi, k] {
                assert!(fourier(&k, xi) >= 0.0);
            }
        }
    }

    #[test]
    fn conv_k_positive_on_log_frequencies() {
        let (n, eps) = (100usize, 0.25);
        let k = WeightKernel::conv_k(n, eps).unwrap();
        let rn = (n as f64).powf(1.0 + eps / 8.0).floor() as usize;
        let floor = 1.0 - (rn as f64).ln() / conv_k_scale(n, eps);
        assert!(floor > 0.0);
        for j1 in 1..=rn {
            for j2 in 1..=rn {
                assert!(fourier(&k, ((j1 * j2) as f64).ln()) >= floor - 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(WeightKernel::conv_k(15, 0.1).is_err());
        assert!(WeightKernel::conv_k(16, 0.0).is_err());
        assert!(WeightKernel::mu2gamma(-1.0).is_err());
    }

    // even part of mu's transform by quadrature on [0, 1e6]; the only
    // non-oscillating tail piece is 1/(pi x^2) at xi = 0, added exactly
    #[test]
    fn mu_transform_by_quadrature() {
        let rule = gauss_legendre(16);
        let x_max = 1e6;
        for &xi in &[0.0, 0.25, 0.5, 0.99] {
            let f = |x: f64| density(&WeightKernel::Mu, x) * (xi * x).cos();
            let mut q = 2.0 * integrate_panels(f, 0.0, x_max, 1_000_000, &rule);
            if xi == 0.0 {
                q += 2.0 / (PI * x_max);
            }
            assert!((q - fourier(&WeightKernel::Mu, xi)).abs() < 1e-6, "xi={xi} q={q}");
        }
    }

    #[test]
    fn mu_mass_and_cdf() {
        let rule = gauss_legendre(16);
        let x_max = 1e5;
        // tail: ∫_X^∞ (1 - cos x)/(pi x^2) = 1/(pi X) + O(1/X^2)
        let body = integrate_panels(|x| density(&WeightKernel::Mu, x), 0.0, x_max, 100_000, &rule);
        let mass = 2.0 * (body + 1.0 / (PI * x_max));
        assert!((mass - 1.0).abs() < 1e-8, "mass={mass}");
        for &a in &[0.5, 1.0, 5.0, 20.0, 150.0] {
            let q = 2.0 * integrate_panels(|x| density(&WeightKernel::Mu, x), 0.0, a, 400, &rule);
            assert!((q - mu_cdf_symmetric(a)).abs() < 1e-12, "a={a}");
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        assert_eq!(sample_mu(42, 1000), sample_mu(42, 1000));
        assert_ne!(sample_mu(42, 10), sample_mu(43, 10));
    }

    // near zeros of the density the quantile is ill-conditioned in x, so
    // the error is measured in probability
    #[test]
    fn quantile_inverts_cdf() {
        let s = MuSampler::global();
        for &a in &[0.01, 0.7, 1.0, 2.0 * PI - 1e-3, 2.0 * PI, 9.0, 60.0, 199.0] {
            let p = mu_cdf_symmetric(a);
            let back = mu_cdf_symmetric(s.abs_quantile(p));
            assert!((back - p).abs() < 1e-10, "a={a}");
        }
        for &a in &[0.7, 3.0, 20.0, 100.0] {
            assert!((s.abs_quantile(mu_cdf_symmetric(a)) - a).abs() < 1e-6);
        }
    }

    #[test]
    fn empirical_cdf_and_symmetry() {
        let n = 1_000_000;
        let xs = sample_mu(2024, n);
        for &a in &[1.0, 5.0, 20.0] {
            let p = mu_cdf_symmetric(a);
            let hit = xs.iter().filter(|x| x.abs() <= a).count() as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hit - p).abs() <= 3.0 * sigma, "a={a} hit={hit} p={p}");
        }
        let pos = xs.iter().filter(|&&x| x > 0.0).count() as f64;
        let mean_sign = (2.0 * pos - n as f64) / n as f64;
        assert!(mean_sign.abs() <= 3.0 / (n as f64).sqrt());
        let tail = xs.iter().filter(|x| x.abs() > 1000.0).count() as f64 / n as f64;
        let p = mu_tail_mass(1000.0);
        assert!((tail - p).abs() <= 3.0 * (p / n as f64).sqrt());
    }
}
