//! Textual forms accepted on the command line.

use std::path::Path;

use crate::dyadic::BinningMode;
use crate::sequences::{SeqKind, SequenceSpec};

fn num(s: &str, what: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in {what}"))
}

/// `power:THETA`, `poly:C0,C1,...` (ascending degree), `nlogn`, `nplogn`,
/// `lacunary:R`, `explicit:PATH` or `values:V1,V2,...`.
pub fn parse_seq(text: &str) -> Result<SequenceSpec, String> {
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (text, None),
    };
    let spec = match (head, rest) {
        ("power", Some(t)) => SequenceSpec::power(num(t, text)?),
        ("poly", Some(cs)) => {
            let coeffs = cs.split(',').map(|c| num(c, text)).collect::<Result<Vec<_>, _>>()?;
            SequenceSpec::polynomial(coeffs)
        }
        ("nlogn", None) => SequenceSpec::new(SeqKind::NLogN),
        ("nplogn", None) => SequenceSpec::new(SeqKind::NPlusLogN),
        ("lacunary", Some(r)) => SequenceSpec::new(SeqKind::Lacunary { ratio: num(r, text)? }),
        ("explicit", Some(p)) => SequenceSpec::explicit_from_file(Path::new(p)).map_err(|e| e.to_string())?,
        ("values", Some(vs)) => {
            let values = vs.split(',').map(|v| num(v, text)).collect::<Result<Vec<_>, _>>()?;
            SequenceSpec::explicit(values)
        }
        _ => return Err(format!("unknown sequence {text:?}")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// `case1:EPS`, `case2:BETA` or `thm2:BETA:EPS`.
pub fn parse_mode(text: &str) -> Result<BinningMode, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["case1", eps] => Ok(BinningMode::Case1 { eps: num(eps, text)? }),
        ["case2", beta] => Ok(BinningMode::Case2 { beta: num(beta, text)? }),
        ["thm2", beta, eps] => Ok(BinningMode::Thm2 { beta: num(beta, text)?, eps: num(eps, text)? }),
        _ => Err(format!("unknown binning mode {text:?}")),
    }
}

pub fn mode_label(mode: &BinningMode) -> String {
    match *mode {
        BinningMode::Case1 { eps } => format!("case1:{eps}"),
        BinningMode::Case2 { beta } => format!("case2:{beta}"),
        BinningMode::Thm2 { beta, eps } => format!("thm2:{beta}:{eps}"),
    }
}

/// Experiment presets for `converge`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// `n^theta`, the growth regime covered by the power-sequence result.
    Thm3(f64),
    /// `1`: `n^theta` with `0 < theta < 1` (default 0.5); `2`: `n + ln n`;
    /// `3`: `n ln n`.
    OpenProblem(u8, SequenceSpec),
}

impl Preset {
    pub fn spec(&self) -> SequenceSpec {
        match self {
            Preset::Thm3(theta) => SequenceSpec::power(*theta),
            Preset::OpenProblem(_, s) => s.clone(),
        }
    }

    pub fn is_exploratory(&self) -> bool {
        matches!(self, Preset::OpenProblem(..))
    }
}

/// `thm3:THETA`, `open-problem:1[:THETA]`, `open-problem:2`, `open-problem:3`.
pub fn parse_preset(text: &str) -> Result<Preset, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["thm3", t] => {
            let theta = num(t, text)?;
            if !(theta.is_finite() && theta > 0.0) {
                return Err(format!("thm3 needs theta > 0, got {theta}"));
            }
            Ok(Preset::Thm3(theta))
        }
        ["open-problem", "1"] => Ok(Preset::OpenProblem(1, SequenceSpec::power(0.5))),
        ["open-problem", "1", t] => {
            let theta = num(t, text)?;
            if !(theta > 0.0 && theta < 1.0) {
                return Err(format!("open-problem:1 needs 0 < theta < 1, got {theta}"));
            }
            Ok(Preset::OpenProblem(1, SequenceSpec::power(theta)))
        }
        ["open-problem", "2"] => Ok(Preset::OpenProblem(2, SequenceSpec::new(SeqKind::NPlusLogN))),
        ["open-problem", "3"] => Ok(Preset::OpenProblem(3, SequenceSpec::new(SeqKind::NLogN))),
        _ => Err(format!("unknown preset {text:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences() {
        assert_eq!(parse_seq("power:1.5").unwrap(), SequenceSpec::power(1.5));
        assert_eq!(parse_seq("poly:0,1,1").unwrap(), SequenceSpec::polynomial(vec![0.0, 1.0, 1.0]));
        assert_eq!(parse_seq("nlogn").unwrap().kind, SeqKind::NLogN);
        assert_eq!(parse_seq("nplogn").unwrap().kind, SeqKind::NPlusLogN);
        assert_eq!(parse_seq("lacunary:2").unwrap().kind, SeqKind::Lacunary { ratio: 2.0 });
        assert_eq!(parse_seq("values:1,2,4").unwrap(), SequenceSpec::explicit(vec![1.0, 2.0, 4.0]));
        for bad in ["power", "power:x", "power:-1", "poly:1", "lacunary:1", "zeta", "nlogn:2", "explicit:/nonexistent"] {
            assert!(parse_seq(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn explicit_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "# head\n1\n2.5\n\n7\n").unwrap();
        let s = parse_seq(&format!("explicit:{}", p.display())).unwrap();
        assert_eq!(s.kind, SeqKind::Explicit { values: vec![1.0, 2.5, 7.0] });
    }

    #[test]
    fn modes_and_presets() {
        assert_eq!(parse_mode("case1:0.1").unwrap(), BinningMode::Case1 { eps: 0.1 });
        assert_eq!(parse_mode("thm2:0.5:0.1").unwrap(), BinningMode::Thm2 { beta: 0.5, eps: 0.1 });
        assert!(parse_mode("case3:1").is_err());
        assert_eq!(mode_label(&parse_mode("case2:0.5").unwrap()), "case2:0.5");
        assert_eq!(parse_preset("thm3:1.5").unwrap(), Preset::Thm3(1.5));
        assert_eq!(parse_preset("open-problem:1").unwrap().spec(), SequenceSpec::power(0.5));
        assert_eq!(parse_preset("open-problem:3").unwrap().spec().kind, SeqKind::NLogN);
        assert!(parse_preset("open-problem:1:1.5").is_err());
        assert!(parse_preset("open-problem:4").is_err());
    }
}
