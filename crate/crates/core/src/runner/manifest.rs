//! Run manifests and output comparison for replays.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::sequences::SequenceSpec;

pub const MANIFEST_VERSION: u32 = 1;
/// Relative tolerance for floating fields when replaying.
pub const FLOAT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_v: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub spec: Option<SequenceSpec>,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
    /// Command-specific results (fits, maxima, perturbations).
    pub summary: Value,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read manifest {}: {e}", path.display()))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| format!("malformed manifest {}: {e}", path.display()))?;
        if m.manifest_v != MANIFEST_VERSION {
            return Err(format!("unsupported manifest_v {}", m.manifest_v));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Outcome of comparing a replayed output with the recorded one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub recorded: PathBuf,
    pub replayed: PathBuf,
    pub identical_bytes: bool,
    pub integer_fields: u64,
    pub float_fields: u64,
    pub max_float_rel: f64,
    pub mismatches: Vec<String>,
}

impl Comparison {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn is_integer_text(s: &str) -> bool {
    let t = s.strip_prefix('-').unwrap_or(s);
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if scale == 0.0 || !scale.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / scale
}

struct Tally<'a> {
    c: &'a mut Comparison,
}

impl Tally<'_> {
    fn text(&mut self, at: &str, a: &str, b: &str) {
        if is_integer_text(a) {
            self.c.integer_fields += 1;
            if a != b {
                self.c.mismatches.push(format!("{at}: integer {a} != {b}"));
            }
        } else if let (Ok(x), Ok(y)) = (a.parse::<f64>(), b.parse::<f64>()) {
            self.float(at, x, y);
        } else if a != b {
            self.c.mismatches.push(format!("{at}: {a:?} != {b:?}"));
        }
    }

    fn float(&mut self, at: &str, x: f64, y: f64) {
        self.c.float_fields += 1;
        let r = rel_diff(x, y);
        self.c.max_float_rel = self.c.max_float_rel.max(r);
        if r > FLOAT_REL_TOL {
            self.c.mismatches.push(format!("{at}: {x} vs {y} (relative {r:e})"));
        }
    }

    fn json(&mut self, at: &str, a: &Value, b: &Value) {
        match (a, b) {
            (Value::Number(x), Value::Number(y)) => {
                if x.is_f64() || y.is_f64() {
                    self.float(at, x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
                } else {
                    self.c.integer_fields += 1;
                    if x != y {
                        self.c.mismatches.push(format!("{at}: integer {x} != {y}"));
                    }
                }
            }
            (Value::Array(xs), Value::Array(ys)) => {
                if xs.len() != ys.len() {
                    self.c.mismatches.push(format!("{at}: length {} != {}", xs.len(), ys.len()));
                    return;
                }
                for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
                    self.json(&format!("{at}[{i}]"), x, y);
                }
            }
            (Value::Object(xs), Value::Object(ys)) => {
                if xs.len() != ys.len() || xs.keys().zip(ys.keys()).any(|(p, q)| p != q) {
                    self.c.mismatches.push(format!("{at}: keys differ"));
                    return;
                }
                for (k, x) in xs {
                    self.json(&format!("{at}.{k}"), x, &ys[k]);
                }
            }
            _ => {
                if a != b {
                    self.c.mismatches.push(format!("{at}: {a} != {b}"));
                }
            }
        }
    }
}

fn compare_csv(c: &mut Comparison, a: &[u8], b: &[u8]) -> Result<(), String> {
    let read = |bytes: &[u8]| -> Result<Vec<csv::StringRecord>, String> {
        csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(bytes)
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())
    };
    let (ra, rb) = (read(a)?, read(b)?);
    if ra.len() != rb.len() {
        c.mismatches.push(format!("row count {} != {}", ra.len(), rb.len()));
        return Ok(());
    }
    let header = ra.first().cloned().unwrap_or_default();
    let mut t = Tally { c };
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        if x.len() != y.len() {
            t.c.mismatches.push(format!("row {i}: field count {} != {}", x.len(), y.len()));
            continue;
        }
        for (j, (p, q)) in x.iter().zip(y.iter()).enumerate() {
            let col = header.get(j).unwrap_or("?");
            t.text(&format!("row {i} {col}"), p, q);
        }
    }
    Ok(())
}

/// Integer fields must match exactly, floating fields to [`FLOAT_REL_TOL`].
pub fn compare_outputs(recorded: &Path, replayed: &Path) -> Result<Comparison, String> {
    let a = fs::read(recorded).map_err(|e| format!("{}: {e}", recorded.display()))?;
    let b = fs::read(replayed).map_err(|e| format!("{}: {e}", replayed.display()))?;
    let mut c = Comparison {
        recorded: recorded.to_path_buf(),
        replayed: replayed.to_path_buf(),
        identical_bytes: a == b,
        integer_fields: 0,
        float_fields: 0,
        max_float_rel: 0.0,
        mismatches: Vec::new(),
    };
    let is_json = recorded.extension().is_some_and(|e| e == "json");
    if is_json {
        let va: Value = serde_json::from_slice(&a).map_err(|e| e.to_string())?;
        let vb: Value = serde_json::from_slice(&b).map_err(|e| e.to_string())?;
        Tally { c: &mut c }.json("$", &va, &vb);
    } else {
        compare_csv(&mut c, &a, &b)?;
    }
    Ok(c)
}
