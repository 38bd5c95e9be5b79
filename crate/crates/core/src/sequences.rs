//! Real sequences `x_1 < x_2 < ... < x_N` that get dilated by `alpha` and
//! reduced modulo one.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeqError {
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error("sequence is not strictly increasing at index {index} ({prev} >= {next})")]
    NonIncreasing { index: usize, prev: f64, next: f64 },
    #[error("value at index {index} is not representable")]
    Overflow { index: usize },
    #[error("value at index {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("need at least 2 terms, got {0}")]
    TooShort(usize),
    #[error("N must be at least 1")]
    EmptyRequest,
    #[error("explicit sequence has {have} values, {want} requested")]
    NotEnoughValues { have: usize, want: usize },
    #[error("cannot read explicit sequence: {0}")]
    Io(String),
}

/// Formula generating the terms; indices start at `n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SeqKind {
    /// `n^theta`
    Power { theta: f64 },
    /// `sum_i coeffs[i] n^i`, ascending degree
    Polynomial { coeffs: Vec<f64> },
    /// `n ln n`
    NLogN,
    /// `n + ln n`
    NPlusLogN,
    /// `ratio^n`
    Lacunary { ratio: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub kind: SeqKind,
    #[serde(default)]
    pub label: String,
}

impl SequenceSpec {
    pub fn new(kind: SeqKind) -> Self {
        let label = default_label(&kind);
        SequenceSpec { kind, label }
    }

    pub fn power(theta: f64) -> Self {
        Self::new(SeqKind::Power { theta })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(SeqKind::Polynomial { coeffs })
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Self::new(SeqKind::Explicit { values })
    }

    /// Reads one value per line; blank lines and `#` comments are skipped.
    pub fn explicit_from_file(path: &Path) -> Result<Self, SeqError> {
        let text = std::fs::read_to_string(path).map_err(|e| SeqError::Io(e.to_string()))?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| SeqError::Io(format!("line {}: cannot parse {t:?}", lineno + 1)))?;
            values.push(v);
        }
        let mut spec = Self::explicit(values);
        spec.label = format!("explicit:{}", path.display());
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        match &self.kind {
            SeqKind::Power { theta } => {
                if !(theta.is_finite() && *theta > 0.0) {
                    return Err(SeqError::InvalidSpec(format!("power requires theta > 0, got {theta}")));
                }
            }
            SeqKind::Polynomial { coeffs } => {
                if coeffs.len() < 2 {
                    return Err(SeqError::InvalidSpec("polynomial needs degree >= 1".into()));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(SeqError::InvalidSpec("polynomial coefficients must be finite".into()));
                }
                let lead = *coeffs.last().unwrap();
                if lead <= 0.0 {
                    return Err(SeqError::InvalidSpec(format!(
                        "polynomial leading coefficient must be positive, got {lead}"
                    )));
                }
            }
            SeqKind::Lacunary { ratio } => {
                if !(ratio.is_finite() && *ratio > 1.0) {
                    return Err(SeqError::InvalidSpec(format!("lacunary requires ratio > 1, got {ratio}")));
                }
            }
            SeqKind::Explicit { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(SeqError::InvalidSpec("explicit values must be finite".into()));
                }
            }
            SeqKind::NLogN | SeqKind::NPlusLogN => {}
        }
        Ok(())
    }

    /// Term `x_n`, `n >= 1`.
    fn term(&self, n: usize) -> f64 {
        let nf = n as f64;
        match &self.kind {
            SeqKind::Power { theta } => {
                if *theta == 1.0 {
                    nf
                } else {
                    nf.powf(*theta)
                }
            }
            SeqKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * nf + c),
            SeqKind::NLogN => nf * nf.ln(),
            SeqKind::NPlusLogN => nf + nf.ln(),
            SeqKind::Lacunary { ratio } => ratio.powi(n as i32),
            SeqKind::Explicit { values } => values[n - 1],
        }
    }
}

fn default_label(kind: &SeqKind) -> String {
    match kind {
        SeqKind::Power { theta } => format!("power:{theta}"),
        SeqKind::Polynomial { coeffs } => {
            let cs: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
            format!("poly:{}", cs.join(","))
        }
        SeqKind::NLogN => "nlogn".into(),
        SeqKind::NPlusLogN => "nplogn".into(),
        SeqKind::Lacunary { ratio } => format!("lacunary:{ratio}"),
        SeqKind::Explicit { values } => format!("explicit[{}]", values.len()),
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// A materialized, strictly increasing, non-negative sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeq {
    values: Vec<f64>,
    min_gap: Option<f64>,
    spec: SequenceSpec,
}

impl RealSeq {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    /// Smallest consecutive difference; needs `N >= 2`.
    pub fn min_gap(&self) -> Result<f64, SeqError> {
        self.min_gap.ok_or(SeqError::TooShort(self.values.len()))
    }

    /// Gaps below one put the sequence outside the growth regime that the
    /// Poissonian criteria cover; such runs are exploratory.
    pub fn is_slow_growth(&self) -> bool {
        matches!(self.min_gap, Some(g) if g < 1.0)
    }

    /// Builds a sequence from raw values, checking the invariants.
    pub fn from_values(values: Vec<f64>) -> Result<Self, SeqError> {
        let spec = SequenceSpec::explicit(values.clone());
        Self::checked(values, spec)
    }

    fn checked(values: Vec<f64>, spec: SequenceSpec) -> Result<Self, SeqError> {
        if values.is_empty() {
            return Err(SeqError::EmptyRequest);
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SeqError::Overflow { index: i + 1 });
            }
            if v < 0.0 {
                return Err(SeqError::Negative { index: i + 1, value: v });
            }
        }
        let mut min_gap: Option<f64> = None;
        for (i, w) in values.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(SeqError::NonIncreasing { index: i + 2, prev: w[0], next: w[1] });
            }
            min_gap = Some(min_gap.map_or(gap, |g: f64| g.min(gap)));
        }
        Ok(RealSeq { values, min_gap, spec })
    }
}

/// Evaluates `x_1..x_N` for the given spec.
pub fn materialize(spec: &SequenceSpec, n: usize) -> Result<RealSeq, SeqError> {
    if n == 0 {
        return Err(SeqError::EmptyRequest);
    }
    spec.validate()?;
    if let SeqKind::Explicit { values } = &spec.kind {
        if values.len() < n {
            return Err(SeqError::NotEnoughValues { have: values.len(), want: n });
        }
    }
    let values: Vec<f64> = (1..=n).map(|k| spec.term(k)).collect();
    RealSeq::checked(values, spec.clone())
}

/// Free-function form of [`RealSeq::min_gap`].
pub fn min_gap(seq: &RealSeq) -> Result<f64, SeqError> {
    seq.min_gap()
}
