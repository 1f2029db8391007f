//! Normal-form conditions for curvature matrices indexed by Young-diagram
//! boxes, Ricci partial traces over superboxes, and the level-rotation
//! transformations under which these notions are invariant.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{CoreError, CoreResult};
use crate::young::YoungDiagram;

/// The zigzag index table attached to a pair of row lengths `n_a > n_b`:
/// starting from `(1, 1)`, alternately increment the column index and the
/// row index until `(n_b, n_b)`, then increment the row index up to
/// `(n_a, n_b)`. Pairs are 1-based.
#[derive(Debug, Clone, Serialize)]
pub struct NormalTable {
    pub n_a: usize,
    pub n_b: usize,
    pub pairs: Vec<(usize, usize)>,
    /// The final `2 n_b` pairs: the only positions where an entry of an
    /// `(a, b)` block with `n_a > n_b` may be nonzero.
    pub suffix: Vec<(usize, usize)>,
}

pub fn normal_table(n_a: usize, n_b: usize) -> CoreResult<NormalTable> {
    if n_b == 0 || n_a <= n_b {
        return Err(CoreError::InvalidInput(format!(
            "the table requires row lengths n_a > n_b >= 1, got ({n_a}, {n_b})"
        )));
    }
    let mut pairs = vec![(1usize, 1usize)];
    let (mut i, mut j) = (1usize, 1usize);
    while (i, j) != (n_b, n_b) {
        if i == j {
            j += 1;
        } else {
            i += 1;
        }
        pairs.push((i, j));
    }
    while i < n_a {
        i += 1;
        pairs.push((i, j));
    }
    debug_assert_eq!(pairs.len(), n_a + n_b - 1);
    let suffix = pairs[pairs.len() - 2 * n_b..].to_vec();
    Ok(NormalTable { n_a, n_b, pairs, suffix })
}

fn unequal_rows_entry_allowed(i: usize, j: usize, n_a: usize, n_b: usize) -> bool {
    // 1-based (i, j) within an (a, b) block with n_a > n_b
    let table = normal_table(n_a, n_b).expect("n_a > n_b by construction");
    table.suffix.contains(&(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormalRule {
    /// `R_{ai,bj} = R_{bj,ai}`.
    Symmetry,
    /// For equal row lengths and `i < n_a`: `R_{ai,b(i+1)} = -R_{bi,a(i+1)}`.
    PartialSkew,
    /// For equal row lengths, entries with `|i - j| > 1` vanish.
    VanishingEqualRows,
    /// For `n_a > n_b`, entries outside the table suffix vanish.
    VanishingUnequalRows,
}

impl std::fmt::Display for NormalRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NormalRule::Symmetry => "global symmetry",
            NormalRule::PartialSkew => "partial skew-symmetry",
            NormalRule::VanishingEqualRows => "vanishing (equal row lengths)",
            NormalRule::VanishingUnequalRows => "vanishing (unequal row lengths)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalViolation {
    pub rule: NormalRule,
    /// Box labels (`row:column`, 1-based) of the offending entry.
    pub row_box: String,
    pub col_box: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalConditionReport {
    pub tolerance: f64,
    pub verdict: bool,
    pub max_violation: f64,
    pub violations: Vec<NormalViolation>,
}

/// Check the normal-form conditions of a box-indexed symmetric matrix:
/// global symmetry, partial skew-symmetry between rows of equal length, and
/// the vanishing patterns inside and outside the diagonal length blocks.
pub fn check_normal(
    r: &DMatrix<f64>,
    diagram: &YoungDiagram,
    tol: f64,
) -> CoreResult<NormalConditionReport> {
    let m = diagram.size();
    if r.nrows() != m || r.ncols() != m {
        return Err(CoreError::InvalidInput(format!(
            "matrix is {}x{} but the diagram has {} boxes",
            r.nrows(),
            r.ncols(),
            m
        )));
    }
    let rows = diagram.rows().to_vec();
    let boxes = diagram.boxes();
    let mut violations = Vec::new();
    let mut push = |rule: NormalRule, p: usize, q: usize, magnitude: f64| {
        if magnitude.abs() > tol {
            violations.push(NormalViolation {
                rule,
                row_box: diagram.box_label(p),
                col_box: diagram.box_label(q),
                magnitude: magnitude.abs(),
            });
        }
    };

    // (i) global symmetry
    for p in 0..m {
        for q in (p + 1)..m {
            push(NormalRule::Symmetry, p, q, r[(p, q)] - r[(q, p)]);
        }
    }

    // (ii) partial skew-symmetry: n_a = n_b, i < n_a
    for a in 0..rows.len() {
        for b in a..rows.len() {
            if rows[a] != rows[b] {
                continue;
            }
            let len = rows[a];
            for i in 0..len.saturating_sub(1) {
                let ai = diagram.box_index(a, i).unwrap();
                let ai1 = diagram.box_index(a, i + 1).unwrap();
                let bi = diagram.box_index(b, i).unwrap();
                let bi1 = diagram.box_index(b, i + 1).unwrap();
                push(NormalRule::PartialSkew, ai, bi1, r[(ai, bi1)] + r[(bi, ai1)]);
            }
        }
    }

    // (iii) vanishing conditions
    for p in 0..m {
        for q in 0..m {
            let (a, i) = boxes[p];
            let (b, j) = boxes[q];
            let (na, nb) = (rows[a], rows[b]);
            if na == nb {
                if i.abs_diff(j) > 1 {
                    push(NormalRule::VanishingEqualRows, p, q, r[(p, q)]);
                }
            } else if na > nb {
                if !unequal_rows_entry_allowed(i + 1, j + 1, na, nb) {
                    push(NormalRule::VanishingUnequalRows, p, q, r[(p, q)]);
                }
            }
            // na < nb is covered by the transposed pair via symmetry
        }
    }

    let max_violation = violations.iter().fold(0.0f64, |acc, v| acc.max(v.magnitude));
    Ok(NormalConditionReport {
        tolerance: tol,
        verdict: violations.is_empty(),
        max_violation,
        violations,
    })
}

/// One Ricci partial trace: the sum of the diagonal curvature entries over
/// the boxes of a superbox.
#[derive(Debug, Clone, Serialize)]
pub struct RicciTrace {
    pub level: usize,
    pub col: usize,
    pub boxes: Vec<String>,
    pub value: f64,
}

/// Partial traces of a box-indexed matrix over each superbox of the
/// diagram.
pub fn ricci_traces(r: &DMatrix<f64>, diagram: &YoungDiagram) -> CoreResult<Vec<RicciTrace>> {
    let m = diagram.size();
    if r.nrows() != m || r.ncols() != m {
        return Err(CoreError::InvalidInput(format!(
            "matrix is {}x{} but the diagram has {} boxes",
            r.nrows(),
            r.ncols(),
            m
        )));
    }
    let mut out = Vec::new();
    for (level, col, rows) in diagram.superboxes() {
        let mut value = 0.0;
        let mut labels = Vec::with_capacity(rows.len());
        for &a in &rows {
            let b = diagram.box_index(a, col).unwrap();
            value += r[(b, b)];
            labels.push(diagram.box_label(b));
        }
        out.push(RicciTrace { level, col, boxes: labels, value });
    }
    Ok(out)
}

/// Build the box-indexed orthogonal matrix induced by one orthogonal
/// rotation per level (sized by the number of rows in the level), applied
/// uniformly across the columns of that level. These are exactly the
/// transformations under which a canonical frame stays canonical.
pub fn level_rotation_matrix(
    diagram: &YoungDiagram,
    per_level: &[DMatrix<f64>],
) -> CoreResult<DMatrix<f64>> {
    let levels = diagram.levels();
    if per_level.len() != levels.len() {
        return Err(CoreError::InvalidInput(format!(
            "expected {} level rotations, found {}",
            levels.len(),
            per_level.len()
        )));
    }
    let m = diagram.size();
    let mut o = DMatrix::zeros(m, m);
    for (li, &(first, count, len)) in levels.iter().enumerate() {
        let block = &per_level[li];
        if block.nrows() != count || block.ncols() != count {
            return Err(CoreError::InvalidInput(format!(
                "level {li} has {count} rows; rotation block is {}x{}",
                block.nrows(),
                block.ncols()
            )));
        }
        let defect = (block * block.transpose() - DMatrix::identity(count, count))
            .abs()
            .max();
        if defect > 1e-10 {
            return Err(CoreError::InvalidInput(format!(
                "level {li} rotation is not orthogonal (defect {defect:.2e})"
            )));
        }
        for i in 0..len {
            for ra in 0..count {
                for rb in 0..count {
                    let p = diagram.box_index(first + ra, i).unwrap();
                    let q = diagram.box_index(first + rb, i).unwrap();
                    o[(p, q)] = block[(ra, rb)];
                }
            }
        }
    }
    Ok(o)
}

/// A random level rotation, one Haar-ish orthogonal block per level.
pub fn random_level_rotation<R: Rng>(
    diagram: &YoungDiagram,
    rng: &mut R,
) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = diagram
        .levels()
        .iter()
        .map(|&(_, count, _)| {
            let raw = DMatrix::from_fn(count, count, |_, _| rng.gen_range(-1.0..1.0f64));
            let qr = raw.qr();
            qr.q()
        })
        .collect();
    level_rotation_matrix(diagram, &blocks).expect("blocks are orthogonal by construction")
}

/// A random matrix satisfying all the normal conditions for the diagram.
pub fn random_normal_matrix<R: Rng>(diagram: &YoungDiagram, rng: &mut R) -> DMatrix<f64> {
    let m = diagram.size();
    let rows = diagram.rows().to_vec();
    let mut r = DMatrix::zeros(m, m);
    for a in 0..rows.len() {
        for b in a..rows.len() {
            let (na, nb) = (rows[a], rows[b]);
            if na == nb {
                for i in 0..na {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    let ai = diagram.box_index(a, i).unwrap();
                    let bi = diagram.box_index(b, i).unwrap();
                    r[(ai, bi)] = v;
                    r[(bi, ai)] = v;
                    if i + 1 < na && a != b {
                        let w: f64 = rng.gen_range(-1.0..1.0);
                        let ai1 = diagram.box_index(a, i + 1).unwrap();
                        let bi1 = diagram.box_index(b, i + 1).unwrap();
                        // R_{ai,b(i+1)} = w = -R_{bi,a(i+1)}, plus symmetry
                        r[(ai, bi1)] = w;
                        r[(bi1, ai)] = w;
                        r[(bi, ai1)] = -w;
                        r[(ai1, bi)] = -w;
                    }
                }
            } else {
                let table = normal_table(na, nb).unwrap();
                for &(i, j) in &table.suffix {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    let p = diagram.box_index(a, i - 1).unwrap();
                    let q = diagram.box_index(b, j - 1).unwrap();
                    r[(p, q)] = v;
                    r[(q, p)] = v;
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_matches_the_zigzag_construction() {
        let t = normal_table(3, 2).unwrap();
        assert_eq!(t.pairs, vec![(1, 1), (1, 2), (2, 2), (3, 2)]);
        // 2 n_b = 4 = table length: the suffix is the whole table
        assert_eq!(t.suffix, t.pairs);

        let t = normal_table(5, 2).unwrap();
        assert_eq!(t.pairs, vec![(1, 1), (1, 2), (2, 2), (3, 2), (4, 2), (5, 2)]);
        assert_eq!(t.suffix, vec![(2, 2), (3, 2), (4, 2), (5, 2)]);

        let t = normal_table(4, 1).unwrap();
        assert_eq!(t.pairs, vec![(1, 1), (2, 1), (3, 1), (4, 1)]);
        assert_eq!(t.suffix, vec![(3, 1), (4, 1)]);

        let t = normal_table(2, 1).unwrap();
        assert_eq!(t.pairs, vec![(1, 1), (2, 1)]);
        assert_eq!(t.suffix, t.pairs);

        assert!(normal_table(2, 2).is_err());
        assert!(normal_table(1, 2).is_err());
        assert!(normal_table(3, 0).is_err());
    }

    #[test]
    fn table_length_and_unit_steps_for_all_small_pairs() {
        for nb in 1..10 {
            for na in (nb + 1)..=10 {
                let t = normal_table(na, nb).unwrap();
                assert_eq!(t.pairs.len(), na + nb - 1);
                assert_eq!(t.suffix.len(), 2 * nb);
                for w in t.pairs.windows(2) {
                    let di = w[1].0 as i64 - w[0].0 as i64;
                    let dj = w[1].1 as i64 - w[0].1 as i64;
                    assert_eq!(di + dj, 1, "step {w:?}");
                    assert!(di == 0 || dj == 0);
                }
                assert_eq!(*t.pairs.last().unwrap(), (na, nb));
            }
        }
    }

    #[test]
    fn zero_matrices_are_normal() {
        for rows in [vec![1], vec![1, 1, 1], vec![2, 1], vec![3, 2, 2], vec![4, 1]] {
            let d = YoungDiagram::from_rows(rows).unwrap();
            let r = DMatrix::zeros(d.size(), d.size());
            let rep = check_normal(&r, &d, 1e-6).unwrap();
            assert!(rep.verdict);
            assert!(rep.violations.is_empty());
        }
    }

    #[test]
    fn single_column_diagrams_accept_any_symmetric_matrix() {
        let d = YoungDiagram::from_rows(vec![1, 1, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0f64));
        let sym = (&raw + raw.transpose()) * 0.5;
        assert!(check_normal(&sym, &d, 1e-9).unwrap().verdict);

        let mut asym = sym.clone();
        asym[(0, 1)] += 1e-3;
        let rep = check_normal(&asym, &d, 1e-6).unwrap();
        assert!(!rep.verdict);
        assert_eq!(rep.violations[0].rule, NormalRule::Symmetry);
    }

    #[test]
    fn two_one_diagram_constraints() {
        let d = YoungDiagram::from_rows(vec![2, 1]).unwrap();
        // boxes: 0 = (1:1), 1 = (1:2), 2 = (2:1)

        // the (row1, row2) corner entry (i, j) = (1, 1) IS allowed: the
        // table for (2, 1) has two pairs and the suffix is the whole table
        let mut r = DMatrix::zeros(3, 3);
        r[(0, 2)] = 1e-3;
        r[(2, 0)] = 1e-3;
        assert!(check_normal(&r, &d, 1e-6).unwrap().verdict);

        // the within-row superdiagonal entry violates partial skew-symmetry
        let mut r = DMatrix::zeros(3, 3);
        r[(0, 1)] = 1e-3;
        r[(1, 0)] = 1e-3;
        let rep = check_normal(&r, &d, 1e-6).unwrap();
        assert!(!rep.verdict);
        assert!(rep
            .violations
            .iter()
            .any(|v| v.rule == NormalRule::PartialSkew));
    }

    #[test]
    fn three_one_diagram_rejects_the_leading_cross_entry() {
        let d = YoungDiagram::from_rows(vec![3, 1]).unwrap();
        // boxes: 0,1,2 = first row; 3 = second row
        let mut r = DMatrix::zeros(4, 4);
        r[(0, 3)] = 1e-3;
        r[(3, 0)] = 1e-3;
        let rep = check_normal(&r, &d, 1e-6).unwrap();
        assert!(!rep.verdict);
        assert!((rep.max_violation - 1e-3).abs() < 1e-15);
        assert!(rep
            .violations
            .iter()
            .all(|v| v.rule == NormalRule::VanishingUnequalRows));
        // but the trailing two positions of the table are allowed
        let mut r = DMatrix::zeros(4, 4);
        r[(1, 3)] = 1e-3;
        r[(3, 1)] = 1e-3;
        r[(2, 3)] = 0.5;
        r[(3, 2)] = 0.5;
        assert!(check_normal(&r, &d, 1e-6).unwrap().verdict);
    }

    #[test]
    fn random_normal_matrices_pass_and_level_rotations_preserve_the_verdict() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for rows in [vec![1, 1, 1], vec![2, 1], vec![2, 2, 1]] {
            let d = YoungDiagram::from_rows(rows).unwrap();
            for _ in 0..5 {
                let r = random_normal_matrix(&d, &mut rng);
                assert!(check_normal(&r, &d, 1e-10).unwrap().verdict);

                let o = random_level_rotation(&d, &mut rng);
                let conj = &o * &r * o.transpose();
                assert!(
                    check_normal(&conj, &d, 1e-9).unwrap().verdict,
                    "conjugated matrix lost normality"
                );

                // and the Ricci traces are invariant
                let before = ricci_traces(&r, &d).unwrap();
                let after = ricci_traces(&conj, &d).unwrap();
                for (x, y) in before.iter().zip(after.iter()) {
                    assert!((x.value - y.value).abs() < 1e-9);
                }

                // perturbing one forbidden entry breaks the verdict
                let mut broken = r.clone();
                let m = d.size();
                broken[(0, m - 1)] += 1e-3;
                assert!(!check_normal(&broken, &d, 1e-6).unwrap().verdict);
            }
        }
    }

    #[test]
    fn ricci_partial_traces_sum_diagonal_blocks() {
        let d = YoungDiagram::from_rows(vec![1, 1]).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let tr = ricci_traces(&r, &d).unwrap();
        assert_eq!(tr.len(), 1);
        assert!((tr[0].value - 1.0).abs() < 1e-15);

        let d = YoungDiagram::from_rows(vec![2, 1]).unwrap();
        let mut r = DMatrix::zeros(3, 3);
        r[(0, 0)] = 2.0;
        r[(1, 1)] = 3.0;
        r[(2, 2)] = 5.0;
        let tr = ricci_traces(&r, &d).unwrap();
        // superboxes: level 0 cols 1 and 2 (single rows), level 1 col 1
        assert_eq!(tr.len(), 3);
        assert_eq!(
            tr.iter().map(|t| t.value).collect::<Vec<_>>(),
            vec![2.0, 3.0, 5.0]
        );
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let d = YoungDiagram::from_rows(vec![2, 1]).unwrap();
        let r = DMatrix::zeros(2, 2);
        assert!(check_normal(&r, &d, 1e-6).is_err());
        assert!(ricci_traces(&r, &d).is_err());
    }
}
