//! Fractional parts, distance to the nearest integer, and the pair
//! correlation counting function R2(s).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{circ_dist, frac_of_product};
use crate::sequences::RealSeq;

pub use crate::numeric::nearest_int_dist;

/// Largest N accepted by [`pair_correlation_brute`].
pub const BRUTE_MAX_N: usize = 5000;

#[derive(Debug, Error, PartialEq)]
pub enum CircleError {
    #[error("brute-force pair correlation limited to N <= {limit}, got {n}")]
    GuardExceeded { n: usize, limit: usize },
    #[error("window parameter s must be finite and >= 0, got {0}")]
    BadWindow(f64),
    #[error("alpha must be finite")]
    BadAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrEntry {
    pub s: f64,
    pub pair_count: u64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrEstimate {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub entries: Vec<PairCorrEntry>,
}

/// The window predicate shared by both counting paths (closed window).
#[inline]
fn in_window(dist: f64, half_width: f64) -> bool {
    dist <= half_width
}

/// `(alpha * x_n) mod 1` for every n, in source order.
pub fn frac_parts(seq: &RealSeq, alpha: f64) -> Vec<f64> {
    seq.values().iter().map(|&x| frac_of_product(alpha, x)).collect()
}

fn check_inputs(alpha: f64, s_list: &[f64]) -> Result<(), CircleError> {
    if !alpha.is_finite() {
        return Err(CircleError::BadAlpha);
    }
    if let Some(&s) = s_list.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(CircleError::BadWindow(s));
    }
    Ok(())
}

fn estimate(n: usize, alpha: f64, s_list: &[f64], counts: Vec<u64>) -> PairCorrEstimate {
    let entries = s_list
        .iter()
        .zip(counts)
        .map(|(&s, pair_count)| PairCorrEntry { s, pair_count, r2: pair_count as f64 / n as f64 })
        .collect();
    PairCorrEstimate { n, alpha, entries }
}

/// Direct O(N^2) count on `alpha * (x_m - x_n)`.
pub fn pair_correlation_brute(
    seq: &RealSeq,
    alpha: f64,
    s_list: &[f64],
) -> Result<PairCorrEstimate, CircleError> {
    let n = seq.len();
    if n > BRUTE_MAX_N {
        return Err(CircleError::GuardExceeded { n, limit: BRUTE_MAX_N });
    }
    check_inputs(alpha, s_list)?;
    let x = seq.values();
    let counts = s_list
        .iter()
        .map(|&s| {
            let w = s / n as f64;
            let mut c = 0u64;
            for m in 0..n {
                for k in (m + 1)..n {
                    if in_window(nearest_int_dist(alpha * (x[m] - x[k])), w) {
                        c += 2;
                    }
                }
            }
            c
        })
        .collect();
    Ok(estimate(n, alpha, s_list, counts))
}

/// Counts ordered pairs of sorted circle points within circular distance
/// `w`. Uses the fact that, for `j > i`, `d = u_j - u_i` is nondecreasing
/// in `j`, so `d <= w` holds on a prefix and `1 - d <= w` on a suffix.
pub fn count_sorted_within(sorted: &[f64], w: f64) -> u64 {
    let n = sorted.len();
    if n < 2 {
        return 0;
    }
    (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let ui = sorted[i];
            let rest = &sorted[i + 1..];
            let near = rest.partition_point(|&v| in_window(v - ui, w));
            let far = rest.len() - rest.partition_point(|&v| !in_window(1.0 - (v - ui), w));
            (near + far).min(rest.len()) as u64
        })
        .sum::<u64>()
        * 2
}

/// Sorted-fractional-part count; agrees with the brute path away from
/// floating ties on the window boundary.
pub fn pair_correlation(
    seq: &RealSeq,
    alpha: f64,
    s_list: &[f64],
) -> Result<PairCorrEstimate, CircleError> {
    check_inputs(alpha, s_list)?;
    let n = seq.len();
    let mut u = frac_parts(seq, alpha);
    u.sort_by(f64::total_cmp);
    let counts = s_list.iter().map(|&s| count_sorted_within(&u, s / n as f64)).collect();
    Ok(estimate(n, alpha, s_list, counts))
}

/// Pair count of explicit circle points, brute force, using the same
/// window predicate on the circular distance.
pub fn count_points_brute(points: &[f64], w: f64) -> u64 {
    let mut c = 0u64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if in_window(circ_dist(points[i], points[j]), w) {
                c += 2;
            }
        }
    }
    c
}
