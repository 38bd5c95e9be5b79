//! Selberg majorant and minorant trigonometric polynomials of the periodic
//! indicator of `[-s/N, s/N]`, and their centered versions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{frac_of_product, nearest_int_dist};

/// Imaginary residue tolerated by [`eval_trigpoly`].
pub const IMAG_TOL: f64 = 1e-10;
/// One-sided slack allowed when checking the sandwich on the grid.
pub const SANDWICH_TOL: f64 = -1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SelbergError {
    #[error("interval too wide: 2s/N = {0} must be < 1")]
    IntervalTooWide(f64),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("imaginary residue {0:e} exceeds tolerance")]
    NotReal(f64),
    #[error("constructed polynomial failed its self-check: {0}")]
    SelfCheckFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
    Centered,
}

/// Coefficients `c_j`, `j = -K..=K`, stored at index `j + K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(rename = "K")]
    pub k: usize,
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sign: Sign,
    #[serde(with = "pairs")]
    pub coeffs: Vec<Complex64>,
}

mod pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], ser: S) -> Result<S::Ok, S::Error> {
        let p: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        p.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Complex64>, D::Error> {
        let p: Vec<[f64; 2]> = Vec::deserialize(de)?;
        Ok(p.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl TrigPoly {
    /// Polynomial from explicit coefficients `c_{-K}..c_K`.
    pub fn from_coeffs(coeffs: Vec<Complex64>, s: f64, n: usize, sign: Sign) -> Result<Self, SelbergError> {
        if coeffs.len() % 2 == 0 || coeffs.len() < 3 {
            return Err(SelbergError::BadParams(format!(
                "need 2K+1 coefficients with K >= 1, got {}",
                coeffs.len()
            )));
        }
        let k = (coeffs.len() - 1) / 2;
        Ok(TrigPoly { k, s, n, sign, coeffs })
    }

    /// Real even polynomial `c0 + 2 sum_j c_j cos(2 pi j x)` from `c_0..c_K`.
    pub fn from_cosine(c: &[f64], s: f64, n: usize, sign: Sign) -> Result<Self, SelbergError> {
        if c.len() < 2 {
            return Err(SelbergError::BadParams("need c_0..c_K with K >= 1".into()));
        }
        let k = c.len() - 1;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * k + 1];
        for (j, &v) in c.iter().enumerate() {
            coeffs[k + j] = Complex64::new(v, 0.0);
            coeffs[k - j] = Complex64::new(v, 0.0);
        }
        Ok(TrigPoly { k, s, n, sign, coeffs })
    }

    /// `c_j`; zero outside `|j| <= K`.
    pub fn coeff(&self, j: i64) -> Complex64 {
        if j.unsigned_abs() as usize > self.k {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(j + self.k as i64) as usize]
        }
    }

    pub fn c0(&self) -> f64 {
        self.coeffs[self.k].re
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Largest `|c_{-j} - conj(c_j)|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..=self.k as i64)
            .map(|j| (self.coeff(-j) - self.coeff(j).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Half-width `s/N` of the target interval.
fn half_width(s: f64, n: usize) -> f64 {
    s / n as f64
}

/// Builds the degree-K majorant (`Plus`) or minorant (`Minus`) and runs
/// the contract self-check before returning it.
pub fn build_selberg(k: usize, s: f64, n: usize, sign: Sign) -> Result<TrigPoly, SelbergError> {
    let p = selberg_coefficients(k, s, n, sign)?;
    let report = verify_selberg(&p)?;
    if !report.passed() {
        return Err(SelbergError::SelfCheckFailed(format!("{report:?}")));
    }
    Ok(p)
}

/// The construction alone, without the self-check.
pub fn selberg_coefficients(k: usize, s: f64, n: usize, sign: Sign) -> Result<TrigPoly, SelbergError> {
    if k == 0 || n == 0 {
        return Err(SelbergError::BadParams("K and N must be >= 1".into()));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(SelbergError::BadParams(format!("s must be > 0, got {s}")));
    }
    let pm = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
        Sign::Centered => return Err(SelbergError::BadParams("sign must be plus or minus".into())),
    };
    let a = half_width(s, n);
    if 2.0 * a >= 1.0 {
        return Err(SelbergError::IntervalTooWide(2.0 * a));
    }
    let kp1 = (k + 1) as f64;
    let mut c = Vec::with_capacity(k + 1);
    c.push(2.0 * a + pm / kp1);
    for j in 1..=k {
        let jf = j as f64;
        let t = jf / kp1;
        let b = ((1.0 - t) / (PI * t).tan() + 1.0 / PI) / kp1;
        let ang = 2.0 * PI * frac_of_product(jf, a);
        c.push(b * ang.sin() + pm * (1.0 - t) * ang.cos() / kp1);
    }
    TrigPoly::from_cosine(&c, s, n, sign)
}

/// `sum_j c_j e(jx)`; fails if the imaginary part is not negligible.
pub fn eval_trigpoly(p: &TrigPoly, x: f64) -> Result<f64, SelbergError> {
    let mut re = p.c0();
    let mut im = p.coeffs[p.k].im;
    for j in 1..=p.k {
        let ang = 2.0 * PI * frac_of_product(j as f64, x);
        let e = Complex64::new(ang.cos(), ang.sin());
        let v = p.coeff(j as i64) * e + p.coeff(-(j as i64)) * e.conj();
        re += v.re;
        im += v.im;
    }
    let scale = 1.0 + re.abs();
    if im.abs() > IMAG_TOL * scale {
        return Err(SelbergError::NotReal(im));
    }
    Ok(re)
}

/// Removes the mean: `c_0 = 0`, everything else copied.
pub fn center(p: &TrigPoly) -> TrigPoly {
    let mut q = p.clone();
    q.coeffs[q.k] = Complex64::new(0.0, 0.0);
    q.sign = Sign::Centered;
    q
}

/// Outcome of checking the three construction contracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelbergReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sign: Sign,
    pub grid_points: usize,
    /// Minimum of `P - 1_I` (plus) or `1_I - P` (minus) over the grid.
    pub sandwich_slack: f64,
    /// `|c_0 - (2s/N +- 1/(K+1))|`.
    pub mean_defect: f64,
    /// Minimum over j of `min(2s/N, 1/(pi|j|)) + 1/(K+1) - |c_j|`.
    pub coeff_slack: f64,
    pub hermitian_defect: f64,
}

impl SelbergReport {
    pub fn passed(&self) -> bool {
        self.sandwich_slack >= SANDWICH_TOL
            && self.mean_defect <= 1e-12
            && self.coeff_slack >= 0.0
            && self.hermitian_defect == 0.0
    }
}

/// Checks sandwich, mean identity and coefficient bound on the grid of
/// `10(K+1)` equispaced points plus the interval endpoints offset by 1e-9.
pub fn verify_selberg(p: &TrigPoly) -> Result<SelbergReport, SelbergError> {
    let pm = match p.sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
        Sign::Centered => return Err(SelbergError::BadParams("cannot verify a centered polynomial".into())),
    };
    let a = half_width(p.s, p.n);
    let kp1 = (p.k + 1) as f64;
    let indicator = |x: f64| if nearest_int_dist(x) <= a { 1.0 } else { 0.0 };
    let slack = |x: f64, v: f64| pm * (v - indicator(x));

    // grid points i/M: e(j i / M) depends only on j*i mod M, so one table suffices
    let m = 10 * (p.k + 1);
    let cos_table: Vec<f64> = (0..m).map(|r| (2.0 * PI * r as f64 / m as f64).cos()).collect();
    let c: Vec<f64> = (0..=p.k).map(|j| p.coeff(j as i64).re).collect();
    let mut min_slack = f64::INFINITY;
    for i in 0..m {
        let mut v = c[0];
        let mut r = 0usize;
        for cj in &c[1..] {
            r += i;
            if r >= m {
                r -= m;
            }
            v += 2.0 * cj * cos_table[r];
        }
        min_slack = min_slack.min(slack(i as f64 / m as f64, v));
    }
    for x in [a - 1e-9, a + 1e-9, -a - 1e-9, -a + 1e-9] {
        let v = eval_trigpoly(p, x)?;
        min_slack = min_slack.min(slack(x, v));
    }

    let mean_defect = (p.c0() - (2.0 * a + pm / kp1)).abs();
    let coeff_slack = (1..=p.k)
        .map(|j| {
            let bound = (2.0 * a).min(1.0 / (PI * j as f64)) + 1.0 / kp1;
            bound - p.coeff(j as i64).norm()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(SelbergReport {
        k: p.k,
        s: p.s,
        n: p.n,
        sign: p.sign,
        grid_points: m + 4,
        sandwich_slack: min_slack,
        mean_defect,
        coeff_slack,
        hermitian_defect: p.hermitian_defect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn constant_polynomial() {
        let p = TrigPoly::from_cosine(&[1.0, 0.0], 1.0, 1, Sign::Plus).unwrap();
        assert_eq!(eval_trigpoly(&p, 0.37).unwrap(), 1.0);
        assert!(center(&p).is_zero());
    }

    #[test]
    fn cosine() {
        let p = TrigPoly::from_cosine(&[0.0, 0.5], 1.0, 1, Sign::Plus).unwrap();
        assert!((eval_trigpoly(&p, 0.5).unwrap() + 1.0).abs() < 1e-15);
        for &x in &[0.1, 0.77, -3.2] {
            let a = eval_trigpoly(&p, x).unwrap();
            let b = eval_trigpoly(&p, x + 1.0).unwrap();
            assert!((a - b).abs() < 1e-10);
            assert!((a - (2.0 * PI * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn broken_symmetry_is_not_real() {
        let c = vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let p = TrigPoly::from_coeffs(c, 1.0, 1, Sign::Plus).unwrap();
        assert!(matches!(eval_trigpoly(&p, 0.25), Err(SelbergError::NotReal(_))));
    }

    #[test]
    fn mean_gap_between_plus_and_minus() {
        for &(k, s, n) in &[(10, 1.0, 10), (7, 0.3, 5), (100, 3.0, 100)] {
            let p = build_selberg(k, s, n, Sign::Plus).unwrap();
            let m = build_selberg(k, s, n, Sign::Minus).unwrap();
            assert!((p.c0() - m.c0() - 2.0 / (k as f64 + 1.0)).abs() < 1e-15);
            assert!(eval_trigpoly(&p, 0.0).unwrap() >= 1.0);
        }
    }

    #[test]
    fn sandwich_on_grid_independent_evaluation() {
        let (k, s, n) = (10, 1.0, 10);
        let p = build_selberg(k, s, n, Sign::Plus).unwrap();
        let m = build_selberg(k, s, n, Sign::Minus).unwrap();
        let pts = 10 * (k + 1);
        for i in 0..pts {
            let x = i as f64 / pts as f64;
            let ind = if nearest_int_dist(x) <= s / n as f64 { 1.0 } else { 0.0 };
            assert!(eval_trigpoly(&m, x).unwrap() <= ind + 1e-10);
            assert!(eval_trigpoly(&p, x).unwrap() >= ind - 1e-10);
        }
        for j in 1..=k {
            let bound = (2.0 * s / n as f64).min(1.0 / (PI * j as f64)) + 1.0 / (k as f64 + 1.0);
            assert!(p.coeff(j as i64).norm() <= bound);
            assert!(m.coeff(j as i64).norm() <= bound);
        }
    }

    #[test]
    fn too_wide() {
        assert_eq!(build_selberg(5, 5.0, 10, Sign::Plus), Err(SelbergError::IntervalTooWide(1.0)));
    }

    #[test]
    fn centering_shifts_by_mean() {
        let p = build_selberg(20, 1.0, 10, Sign::Plus).unwrap();
        let h = center(&p);
        assert_eq!(h.c0(), 0.0);
        assert_eq!(h.sign, Sign::Centered);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            let d = eval_trigpoly(&p, x).unwrap() - p.c0() - eval_trigpoly(&h, x).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn coefficients_vanish_beyond_degree() {
        let p = build_selberg(12, 1.0, 10, Sign::Minus).unwrap();
        assert_eq!(p.coeff(13), Complex64::new(0.0, 0.0));
        assert_eq!(p.coeff(-400), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn json_shape() {
        let p = build_selberg(3, 1.0, 10, Sign::Plus).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["K"], 3);
        assert_eq!(v["N"], 10);
        assert_eq!(v["sign"], "plus");
        assert_eq!(v["coeffs"].as_array().unwrap().len(), 7);
        let back: TrigPoly = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
