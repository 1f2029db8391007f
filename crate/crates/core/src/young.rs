//! Young diagrams attached to growth vectors, their box bookkeeping, and the
//! shift/projection matrices acting on the box space.
//!
//! A diagram is stored both as column heights (the jumps of a growth vector)
//! and as row lengths (the conjugate partition). Boxes are indexed `(row,
//! col)` zero-based and enumerated row-major; that enumeration fixes the
//! ordering of every box-indexed matrix in the crate.

use nalgebra::DMatrix;

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YoungDiagram {
    /// Column heights, non-increasing.
    cols: Vec<usize>,
    /// Row lengths, non-increasing (conjugate of `cols`).
    rows: Vec<usize>,
}

fn conjugate(parts: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    if parts.is_empty() {
        return out;
    }
    for i in 0..parts[0] {
        out.push(parts.iter().filter(|&&p| p > i).count());
    }
    out
}

fn check_partition(parts: &[usize], what: &str) -> CoreResult<()> {
    if parts.is_empty() {
        return Err(CoreError::InvalidInput(format!("{what} must be non-empty")));
    }
    if parts.iter().any(|&p| p == 0) {
        return Err(CoreError::InvalidInput(format!("{what} entries must be positive")));
    }
    if parts.windows(2).any(|w| w[0] < w[1]) {
        return Err(CoreError::InvalidInput(format!(
            "{what} must be non-increasing, got {parts:?}"
        )));
    }
    Ok(())
}

impl YoungDiagram {
    /// Build from column heights (e.g. the jumps of a growth vector).
    pub fn from_columns(cols: Vec<usize>) -> CoreResult<YoungDiagram> {
        check_partition(&cols, "column heights")?;
        let rows = conjugate(&cols);
        Ok(YoungDiagram { cols, rows })
    }

    /// Build from row lengths.
    pub fn from_rows(rows: Vec<usize>) -> CoreResult<YoungDiagram> {
        check_partition(&rows, "row lengths")?;
        let cols = conjugate(&rows);
        Ok(YoungDiagram { cols, rows })
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Total number of boxes.
    pub fn size(&self) -> usize {
        self.rows.iter().sum()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    /// Boxes `(row, col)` zero-based, row-major. This order indexes all
    /// box-indexed matrices.
    pub fn boxes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.size());
        for (a, &len) in self.rows.iter().enumerate() {
            for i in 0..len {
                out.push((a, i));
            }
        }
        out
    }

    /// Position of box `(row, col)` in the canonical enumeration.
    pub fn box_index(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows.len() || col >= self.rows[row] {
            return None;
        }
        Some(self.rows[..row].iter().sum::<usize>() + col)
    }

    /// Human-readable box label, 1-based, `row:col`.
    pub fn box_label(&self, b: usize) -> String {
        let (a, i) = self.boxes()[b];
        format!("{}:{}", a + 1, i + 1)
    }

    /// Groups of consecutive rows with equal length. Each entry is
    /// `(first_row, row_count, row_length)`.
    pub fn levels(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (a, &len) in self.rows.iter().enumerate() {
            match out.last_mut() {
                Some((_, count, l)) if *l == len => *count += 1,
                _ => out.push((a, 1, len)),
            }
        }
        out
    }

    /// Super-boxes: for each level, one entry per column of that level,
    /// `(level_index, col, rows_of_level)`.
    pub fn superboxes(&self) -> Vec<(usize, usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (li, &(first, count, len)) in self.levels().iter().enumerate() {
            for col in 0..len {
                out.push((li, col, (first..first + count).collect()));
            }
        }
        out
    }

    /// The within-row shift: entry `[(a,i), (b,j)] = 1` iff `a == b` and
    /// `j == i + 1`.
    pub fn shift_matrix(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for (a, &len) in self.rows.iter().enumerate() {
            for i in 0..len.saturating_sub(1) {
                let r = self.box_index(a, i).unwrap();
                let c = self.box_index(a, i + 1).unwrap();
                m[(r, c)] = 1.0;
            }
        }
        m
    }

    /// The first-column projection: entry `[(a,i), (b,j)] = 1` iff `a == b`
    /// and `i == j == 0`.
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..self.rows.len() {
            let r = self.box_index(a, 0).unwrap();
            m[(r, r)] = 1.0;
        }
        m
    }

    /// ASCII picture, one `#` per box.
    pub fn ascii(&self) -> String {
        self.rows
            .iter()
            .map(|&len| "#".repeat(len))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl std::fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rows {:?}, columns {:?}",
            self.rows, self.cols
        )
    }
}

/// Numerical rank via singular values with a relative threshold.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Rank of the controllability matrix `[B, AB, A^2 B, ..., A^{n-1} B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * cur;
    }
    let total_cols: usize = blocks.iter().map(|m| m.ncols()).sum();
    let mut k = DMatrix::zeros(n, total_cols);
    let mut at = 0;
    for blk in blocks {
        k.view_mut((0, at), (n, blk.ncols())).copy_from(&blk);
        at += blk.ncols();
    }
    numerical_rank(&k, 1e-10)
}

/// All Young diagrams (partitions, as row lengths) of total size `n`,
/// lexicographically descending.
pub fn all_diagrams(n: usize) -> Vec<YoungDiagram> {
    fn parts(n: usize, max: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 0 {
            out.push(prefix.clone());
            return;
        }
        for p in (1..=n.min(max)).rev() {
            prefix.push(p);
            parts(n - p, p, prefix, out);
            prefix.pop();
        }
    }
    let mut rows = Vec::new();
    parts(n, n, &mut Vec::new(), &mut rows);
    rows.into_iter()
        .map(|r| YoungDiagram::from_rows(r).expect("generated partitions are valid"))
        .collect()
}
