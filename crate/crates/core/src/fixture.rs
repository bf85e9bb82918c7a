//! Curve fixtures: one curve per line,
//!
//! ```text
//! id | e1 e2 e3 | rank | xn/xd, yn/yd ; xn/xd, yn/yd
//! ```
//!
//! Blank lines and `#` comments are ignored. Coordinates may omit `/1`.

use std::path::Path;

use thiserror::Error;

use crate::curve::{CurveError, FullTwoTorsionCurve, MWBasis, RationalPoint};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: curve {id}: {source}")]
    Curve { line: usize, id: String, source: CurveError },
    #[error("duplicate curve id {0}")]
    Duplicate(String),
    #[error("no curve with id {0}")]
    Unknown(String),
    #[error("reading fixture: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCurve {
    pub id: String,
    pub curve: FullTwoTorsionCurve,
    pub basis: MWBasis,
    /// The generator field exactly as written, whitespace-normalized.
    pub generator_text: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Fixture {
    pub curves: Vec<FixtureCurve>,
}

fn parse_int(s: &str, line: usize) -> Result<i128, FixtureError> {
    s.trim().parse::<i128>().map_err(|e| FixtureError::Parse { line, msg: format!("bad integer {:?}: {}", s.trim(), e) })
}

fn parse_rational(s: &str, line: usize) -> Result<(i128, i128), FixtureError> {
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse_int(d, line)?;
            if d <= 0 {
                return Err(FixtureError::Parse { line, msg: format!("denominator must be positive in {:?}", s.trim()) });
            }
            Ok((parse_int(n, line)?, d))
        }
        None => Ok((parse_int(s, line)?, 1)),
    }
}

fn parse_point(s: &str, line: usize) -> Result<RationalPoint, FixtureError> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| FixtureError::Parse { line, msg: format!("point {:?} needs the form x, y", s.trim()) })?;
    let (xn, xd) = parse_rational(x, line)?;
    let (yn, yd) = parse_rational(y, line)?;
    Ok(RationalPoint::affine(xn, xd, yn, yd))
}

fn parse_line(text: &str, line: usize) -> Result<FixtureCurve, FixtureError> {
    let fields: Vec<&str> = text.split('|').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(FixtureError::Parse { line, msg: format!("expected 4 fields, found {}", fields.len()) });
    }
    let id = fields[0].to_string();
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(FixtureError::Parse { line, msg: format!("bad curve id {:?}", fields[0]) });
    }
    let roots: Vec<i128> = fields[1].split_whitespace().map(|t| parse_int(t, line)).collect::<Result<_, _>>()?;
    if roots.len() != 3 {
        return Err(FixtureError::Parse { line, msg: format!("expected 3 roots, found {}", roots.len()) });
    }
    let rank: usize = fields[2]
        .parse()
        .map_err(|e| FixtureError::Parse { line, msg: format!("bad rank {:?}: {}", fields[2], e) })?;
    let pieces: Vec<&str> = if fields[3].is_empty() { Vec::new() } else { fields[3].split(';').collect() };
    let points = pieces.iter().map(|p| parse_point(p, line)).collect::<Result<Vec<_>, _>>()?;
    let generator_text = pieces.iter().map(|p| p.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
    let wrap = |source| FixtureError::Curve { line, id: id.clone(), source };
    let curve = FullTwoTorsionCurve::new(roots[0], roots[1], roots[2]).map_err(wrap)?;
    let basis = MWBasis::new(curve.clone(), points, rank).map_err(wrap)?;
    Ok(FixtureCurve { id, curve, basis, generator_text })
}

impl Fixture {
    pub fn parse(text: &str) -> Result<Fixture, FixtureError> {
        let mut curves: Vec<FixtureCurve> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let c = parse_line(body, i + 1)?;
            if curves.iter().any(|o| o.id == c.id) {
                return Err(FixtureError::Duplicate(c.id));
            }
            curves.push(c);
        }
        Ok(Fixture { curves })
    }

    pub fn load(path: &Path) -> Result<Fixture, FixtureError> {
        Fixture::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &str) -> Result<&FixtureCurve, FixtureError> {
        self.curves.iter().find(|c| c.id == id).ok_or_else(|| FixtureError::Unknown(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let f = Fixture::parse("# demo\ncn1 | 0 1 -1 | 0 |\n\ncn5 | 0 5 -5 | 1 | -4/1, 6/1  # gen\n").unwrap();
        assert_eq!(f.curves.len(), 2);
        assert_eq!(f.get("cn5").unwrap().basis.rank, 1);
        assert_eq!(f.get("cn5").unwrap().generator_text, vec!["-4/1, 6/1"]);
        assert!(matches!(f.get("cn2"), Err(FixtureError::Unknown(_))));
    }

    #[test]
    fn rejects_malformed_lines() {
        let bad = [
            "cn1 | 0 1 | 0 |",
            "cn1 | 0 1 -1 | x |",
            "cn1 | 0 1 -1 | 0",
            "cn5 | 0 5 -5 | 1 | -4/0, 6",
            "cn5 | 0 5 -5 | 1 | -4 6",
            "c n | 0 1 -1 | 0 |",
        ];
        for b in bad {
            assert!(matches!(Fixture::parse(b), Err(FixtureError::Parse { line: 1, .. })), "{b}");
        }
        assert!(matches!(Fixture::parse("a | 0 0 1 | 0 |"), Err(FixtureError::Curve { .. })));
        assert!(matches!(Fixture::parse("a | 0 5 -5 | 1 | 1, 1"), Err(FixtureError::Curve { .. })));
        assert!(matches!(Fixture::parse("a | 0 5 -5 | 2 | -4, 6"), Err(FixtureError::Curve { .. })));
        assert!(matches!(Fixture::parse("a | 0 1 -1 | 0 |\na | 0 1 -1 | 0 |"), Err(FixtureError::Duplicate(_))));
    }
}
