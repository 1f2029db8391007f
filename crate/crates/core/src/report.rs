//! Machine-readable verdict reports and tabular data for export.

use serde::Serialize;
use std::io;

use crate::error::CoreResult;
use crate::extremal::Extremal;
use crate::frame::{curvature_matrix, DarbouxFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One measured quantity of a check, with its acceptance threshold.
#[derive(Debug, Clone, Serialize)]
pub struct DetailEntry {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Aggregated verdict of a check run. `max_violation` is the largest
/// measured deviation across all details, whichever way the verdict goes.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub max_violation: f64,
    pub details: Vec<DetailEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for CheckReport {
    fn default() -> Self {
        Self::new()
    }
}

impl CheckReport {
    pub fn new() -> CheckReport {
        CheckReport { verdict: Verdict::Pass, max_violation: 0.0, details: Vec::new(), seed: None }
    }

    pub fn with_seed(seed: u64) -> CheckReport {
        CheckReport { seed: Some(seed), ..CheckReport::new() }
    }

    /// Record one measurement; a non-finite value always fails.
    pub fn push(&mut self, label: impl Into<String>, value: f64, tolerance: f64) {
        let pass = value.is_finite() && value <= tolerance;
        if !pass {
            self.verdict = Verdict::Fail;
        }
        let tracked = if value.is_finite() { value } else { f64::INFINITY };
        self.max_violation = self.max_violation.max(tracked);
        self.details.push(DetailEntry { label: label.into(), value, tolerance, pass });
    }

    /// Fold another report in as a named group of details.
    pub fn absorb(&mut self, prefix: &str, other: &CheckReport) {
        for d in &other.details {
            self.push(format!("{prefix}.{}", d.label), d.value, d.tolerance);
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One-line ASCII summary for stderr.
    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} detail(s), max deviation {:.3e}",
            match self.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
            },
            self.details.len(),
            self.max_violation
        )
    }
}

/// A column-labelled numeric table, exportable as CSV or JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Table {
        Table { columns, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Shortest-round-trip CSV; every cell re-parses to the same double.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialization cannot fail")
    }
}

/// Uniform time grid with both endpoints, `samples >= 2` points.
pub fn time_grid(t0: f64, t1: f64, samples: usize) -> Vec<f64> {
    let m = samples.max(2);
    (0..m).map(|j| t0 + (t1 - t0) * j as f64 / (m - 1) as f64).collect()
}

/// Trajectory of an extremal: `t`, base coordinates, then momenta.
pub fn trajectory_table(ext: &Extremal, samples: usize) -> CoreResult<Table> {
    let n = ext.base_dim();
    let names = ext.system().phase_chart().names();
    let mut columns = vec!["t".to_string()];
    columns.extend(names[n..2 * n].iter().cloned());
    columns.extend(names[..n].iter().cloned());
    let mut table = Table::new(columns);
    for t in time_grid(ext.t_start(), ext.t_end(), samples) {
        let z = ext.sample_state(t)?;
        let mut row = Vec::with_capacity(2 * n + 1);
        row.push(t);
        row.extend(z.as_slice()[n..2 * n].iter().copied());
        row.extend(z.as_slice()[..n].iter().copied());
        table.push_row(row);
    }
    Ok(table)
}

/// Curvature entries of a frame along its extremal: `t`, then one column
/// per matrix entry, labelled `R[a:i][b:j]` by box.
pub fn curvature_table(frame: &dyn DarbouxFrame, ts: &[f64]) -> CoreResult<Table> {
    let d = frame.diagram().clone();
    let m = d.size();
    let mut columns = vec!["t".to_string()];
    for a in 0..m {
        for b in 0..m {
            columns.push(format!("R[{}][{}]", d.box_label(a), d.box_label(b)));
        }
    }
    let mut table = Table::new(columns);
    for &t in ts {
        let r = curvature_matrix(frame, t)?;
        let mut row = Vec::with_capacity(m * m + 1);
        row.push(t);
        for a in 0..m {
            for b in 0..m {
                row.push(r[(a, b)]);
            }
        }
        table.push_row(row);
    }
    Ok(table)
}

/// Components of the variational field with initial condition `v0`:
/// `t`, then the base components `J_<name>`.
pub fn jacobi_table(ext: &Extremal, v0: &nalgebra::DVector<f64>, samples: usize) -> CoreResult<Table> {
    let n = ext.base_dim();
    let names = ext.system().phase_chart().names();
    let mut columns = vec!["t".to_string()];
    columns.extend(names[n..2 * n].iter().map(|c| format!("J_{c}")));
    let mut table = Table::new(columns);
    for t in time_grid(ext.t_start(), ext.t_end(), samples) {
        let j = ext.jacobi_value(t, v0)?;
        let mut row = Vec::with_capacity(n + 1);
        row.push(t);
        row.extend(j.as_slice()[n..2 * n].iter().copied());
        table.push_row(row);
    }
    Ok(table)
}
