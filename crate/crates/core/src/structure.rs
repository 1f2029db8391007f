//! Sub-Riemannian structures: a chart plus an orthonormal frame of the
//! distribution, together with the line-oriented text format
//!
//! ```text
//! # comment
//! dim 3
//! vars x y z
//! field X1 : 1, 0, -y/2
//! field X2 : 0, 1, x/2
//! ```

use std::fmt;

use crate::chart::Chart;
use crate::expr::{parse_expr_at, Expr, ParseError};
use crate::field::VectorField;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("line {line}: duplicate field name `{name}`")]
    DuplicateField { line: usize, name: String },
    #[error("{got} frame fields declared but the dimension is only {dim}")]
    TooManyFields { got: usize, dim: usize },
    #[error("structure declares no frame fields")]
    NoFields,
}

/// A chart together with k <= n frame fields, declared orthonormal for the
/// metric they induce on their span.
#[derive(Debug, Clone)]
pub struct SRStructure {
    chart: Chart,
    names: Vec<String>,
    frame: Vec<VectorField>,
}

impl SRStructure {
    pub fn new(
        chart: Chart,
        names: Vec<String>,
        frame: Vec<VectorField>,
    ) -> Result<SRStructure, StructureError> {
        if frame.is_empty() {
            return Err(StructureError::NoFields);
        }
        if frame.len() > chart.dim() {
            return Err(StructureError::TooManyFields { got: frame.len(), dim: chart.dim() });
        }
        assert_eq!(names.len(), frame.len());
        Ok(SRStructure { chart, names, frame })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn rank(&self) -> usize {
        self.frame.len()
    }

    pub fn frame(&self) -> &[VectorField] {
        &self.frame
    }

    pub fn field(&self, i: usize) -> &VectorField {
        &self.frame[i]
    }

    pub fn field_names(&self) -> &[String] {
        &self.names
    }

    /// True when the frame spans the whole tangent space (k = n).
    pub fn is_riemannian(&self) -> bool {
        self.frame.len() == self.chart.dim()
    }
}

fn err(line: usize, msg: impl Into<String>) -> StructureError {
    StructureError::Format { line, msg: msg.into() }
}

/// Parse the structure text format. `#` starts a comment; blank lines are
/// skipped; the `dim` and `vars` lines must come first, in that order.
pub fn parse_structure(text: &str) -> Result<SRStructure, StructureError> {
    let mut dim: Option<usize> = None;
    let mut chart: Option<Chart> = None;
    let mut names: Vec<String> = Vec::new();
    let mut frame: Vec<VectorField> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        match keyword {
            "dim" => {
                if dim.is_some() {
                    return Err(err(lineno, "duplicate `dim` line"));
                }
                let n: usize = rest
                    .parse()
                    .map_err(|_| err(lineno, format!("bad dimension `{rest}`")))?;
                if n == 0 {
                    return Err(err(lineno, "dimension must be positive"));
                }
                dim = Some(n);
            }
            "vars" => {
                let n = dim.ok_or_else(|| err(lineno, "`vars` before `dim`"))?;
                if chart.is_some() {
                    return Err(err(lineno, "duplicate `vars` line"));
                }
                let vars: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if vars.len() != n {
                    return Err(err(
                        lineno,
                        format!("expected {n} variable names, got {}", vars.len()),
                    ));
                }
                chart = Some(
                    Chart::new(vars).map_err(|e| err(lineno, e.to_string()))?,
                );
            }
            "field" => {
                let chart = chart
                    .as_ref()
                    .ok_or_else(|| err(lineno, "`field` before `vars`"))?;
                let (name, comps_src) = rest
                    .split_once(':')
                    .ok_or_else(|| err(lineno, "expected `field <Name> : <components>`"))?;
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(err(lineno, "empty field name"));
                }
                if names.contains(&name) {
                    return Err(StructureError::DuplicateField { line: lineno, name });
                }
                let pieces: Vec<&str> = comps_src.split(',').collect();
                if pieces.len() != chart.dim() {
                    return Err(err(
                        lineno,
                        format!(
                            "field `{name}` has {} components, expected {}",
                            pieces.len(),
                            chart.dim()
                        ),
                    ));
                }
                let comps: Vec<Expr> = pieces
                    .iter()
                    .map(|p| parse_expr_at(p, Some(chart.names()), lineno))
                    .collect::<Result<_, _>>()?;
                names.push(name);
                frame.push(
                    VectorField::new(chart.clone(), comps)
                        .expect("component count checked above"),
                );
            }
            other => return Err(err(lineno, format!("unknown directive `{other}`"))),
        }
    }

    let chart = chart.ok_or_else(|| err(text.lines().count() + 1, "missing `vars` line"))?;
    SRStructure::new(chart, names, frame)
}

impl fmt::Display for SRStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dim {}", self.chart.dim())?;
        writeln!(f, "vars {}", self.chart)?;
        for (name, field) in self.names.iter().zip(&self.frame) {
            let comps: Vec<String> = field.components().iter().map(|c| c.to_string()).collect();
            writeln!(f, "field {name} : {}", comps.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEISENBERG: &str = "\
# Heisenberg group frame
dim 3
vars x y z
field X1 : 1, 0, -y/2
field X2 : 0, 1, x/2
";

    #[test]
    fn parses_heisenberg() {
        let s = parse_structure(HEISENBERG).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.rank(), 2);
        assert_eq!(s.field_names(), &["X1", "X2"]);
        let v = s.field(0).eval(&[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn round_trips_through_display() {
        let s = parse_structure(HEISENBERG).unwrap();
        let printed = s.to_string();
        let again = parse_structure(&printed).unwrap();
        assert_eq!(s.dim(), again.dim());
        assert_eq!(s.field_names(), again.field_names());
        for (a, b) in s.frame().iter().zip(again.frame()) {
            for (ca, cb) in a.components().iter().zip(b.components()) {
                assert!(ca.structural_eq(cb), "{ca} vs {cb}");
            }
        }
    }

    #[test]
    fn error_positions_point_at_the_offending_line() {
        let text = "dim 2\nvars x y\nfield X1 : 1, q\n";
        match parse_structure(text) {
            Err(StructureError::Parse(ParseError::UnknownVariable { line, name, .. })) => {
                assert_eq!(line, 3);
                assert_eq!(name, "q");
            }
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn rejects_too_many_fields() {
        let text = "dim 1\nvars x\nfield A : 1\nfield B : x\n";
        assert!(matches!(
            parse_structure(text),
            Err(StructureError::TooManyFields { got: 2, dim: 1 })
        ));
    }

    #[test]
    fn rejects_duplicate_field_names() {
        let text = "dim 2\nvars x y\nfield A : 1, 0\nfield A : 0, 1\n";
        assert!(matches!(
            parse_structure(text),
            Err(StructureError::DuplicateField { .. })
        ));
    }

    #[test]
    fn rejects_wrong_component_count() {
        let text = "dim 2\nvars x y\nfield A : 1\n";
        assert!(parse_structure(text).is_err());
    }
}
