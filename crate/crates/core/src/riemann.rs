//! Classical Riemannian data derived symbolically from a full-rank frame:
//! metric, Christoffel symbols, curvature tensor, and directional curvature.
//!
//! The frame gives the inverse metric directly (`g^{ij} = sum_b X_b^i
//! X_b^j`); the metric itself is obtained by symbolic adjugate inversion,
//! which stays manageable for the low dimensions this crate targets. These
//! quantities serve as independent cross-checks for everything produced by
//! the flow-based frame machinery.

use nalgebra::{DMatrix, DVector};

use crate::chart::Chart;
use crate::error::{CoreError, CoreResult};
use crate::expr::{CompiledExpr, Expr};
use crate::structure::SRStructure;

/// Determinant by Laplace expansion along the first row.
fn det_expr(m: &[Vec<Expr>]) -> Expr {
    let k = m.len();
    if k == 1 {
        return m[0][0].clone();
    }
    let mut terms = Vec::with_capacity(k);
    for (j, entry) in m[0].iter().enumerate() {
        let minor: Vec<Vec<Expr>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let mut t = Expr::mul(entry.clone(), det_expr(&minor));
        if j % 2 == 1 {
            t = Expr::neg(t);
        }
        terms.push(t);
    }
    Expr::sum(terms)
}

/// Symbolic inverse of a square matrix via adjugate / determinant.
fn invert_expr(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let k = m.len();
    if k == 1 {
        return vec![vec![Expr::quot(Expr::constant(1.0), m[0][0].clone())]];
    }
    let det = det_expr(m);
    let mut inv = vec![vec![Expr::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            // cofactor C_{ji} / det  (adjugate transposes the cofactors)
            let minor: Vec<Vec<Expr>> = (0..k)
                .filter(|&r| r != j)
                .map(|r| {
                    (0..k)
                        .filter(|&c| c != i)
                        .map(|c| m[r][c].clone())
                        .collect()
                })
                .collect();
            let mut cof = det_expr(&minor);
            if (i + j) % 2 == 1 {
                cof = Expr::neg(cof);
            }
            inv[i][j] = Expr::quot(cof, det.clone());
        }
    }
    inv
}

/// Symbolic metric, Christoffel symbols and curvature tensor of a full-rank
/// orthonormal frame.
pub struct RiemannData {
    chart: Chart,
    dim: usize,
    metric: CompiledExpr,
    cometric: CompiledExpr,
    /// Gamma^k_{ij} at flat index `(k * n + i) * n + j`.
    christoffel: CompiledExpr,
    /// d_l Gamma^k_{ij} at flat index `((l * n + k) * n + i) * n + j`.
    christoffel_derivative: CompiledExpr,
    /// R^l_{ijk} at flat index `((l * n + i) * n + j) * n + k`, with the
    /// convention `R(X, Y) Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z`.
    curvature: CompiledExpr,
}

impl RiemannData {
    pub fn new(s: &SRStructure) -> CoreResult<RiemannData> {
        if !s.is_riemannian() {
            return Err(CoreError::InvalidInput(format!(
                "frame has rank {} in dimension {}; a full-rank frame is required",
                s.rank(),
                s.dim()
            )));
        }
        let n = s.dim();
        let chart = s.chart().clone();
        let names = chart.names();

        // cometric g^{ij} = sum_b X_b^i X_b^j
        let mut ginv = vec![vec![Expr::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let terms: Vec<Expr> = s
                    .frame()
                    .iter()
                    .map(|x| Expr::mul(x.component(i).clone(), x.component(j).clone()))
                    .collect();
                ginv[i][j] = Expr::sum(terms);
            }
        }
        let g = invert_expr(&ginv);

        // Gamma^k_{ij} = 1/2 sum_l g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij})
        let mut gamma = vec![Expr::zero(); n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut terms = Vec::with_capacity(n);
                    for l in 0..n {
                        let inner = Expr::sum(vec![
                            g[j][l].diff(&names[i]),
                            g[i][l].diff(&names[j]),
                            Expr::neg(g[i][j].diff(&names[l])),
                        ]);
                        terms.push(Expr::mul(ginv[k][l].clone(), inner));
                    }
                    gamma[(k * n + i) * n + j] =
                        Expr::mul(Expr::constant(0.5), Expr::sum(terms));
                }
            }
        }

        let mut dgamma = vec![Expr::zero(); n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        dgamma[((l * n + k) * n + i) * n + j] =
                            gamma[(k * n + i) * n + j].diff(&names[l]);
                    }
                }
            }
        }

        // R^l_{ijk} = d_i G^l_{jk} - d_j G^l_{ik} + G^l_{im} G^m_{jk} - G^l_{jm} G^m_{ik}
        let mut riem = vec![Expr::zero(); n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut terms = vec![
                            gamma[(l * n + j) * n + k].diff(&names[i]),
                            Expr::neg(gamma[(l * n + i) * n + k].diff(&names[j])),
                        ];
                        for m in 0..n {
                            terms.push(Expr::mul(
                                gamma[(l * n + i) * n + m].clone(),
                                gamma[(m * n + j) * n + k].clone(),
                            ));
                            terms.push(Expr::neg(Expr::mul(
                                gamma[(l * n + j) * n + m].clone(),
                                gamma[(m * n + i) * n + k].clone(),
                            )));
                        }
                        riem[((l * n + i) * n + j) * n + k] = Expr::sum(terms);
                    }
                }
            }
        }

        let flat_g: Vec<Expr> = (0..n * n).map(|f| g[f / n][f % n].clone()).collect();
        let flat_ginv: Vec<Expr> = (0..n * n).map(|f| ginv[f / n][f % n].clone()).collect();
        Ok(RiemannData {
            dim: n,
            metric: CompiledExpr::compile(&flat_g, names)?,
            cometric: CompiledExpr::compile(&flat_ginv, names)?,
            christoffel: CompiledExpr::compile(&gamma, names)?,
            christoffel_derivative: CompiledExpr::compile(&dgamma, names)?,
            curvature: CompiledExpr::compile(&riem, names)?,
            chart,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.metric.eval_vec(x))
    }

    pub fn cometric_at(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.cometric.eval_vec(x))
    }

    /// Flat `n^3` array, `Gamma^k_{ij}` at `(k * n + i) * n + j`.
    pub fn christoffel_at(&self, x: &[f64]) -> Vec<f64> {
        self.christoffel.eval_vec(x)
    }

    /// Flat `n^4` array, `d_l Gamma^k_{ij}` at `((l * n + k) * n + i) * n + j`.
    pub fn christoffel_derivative_at(&self, x: &[f64]) -> Vec<f64> {
        self.christoffel_derivative.eval_vec(x)
    }

    /// Flat `n^4` array, `R^l_{ijk}` at `((l * n + i) * n + j) * n + k`.
    pub fn curvature_at(&self, x: &[f64]) -> Vec<f64> {
        self.curvature.eval_vec(x)
    }

    pub(crate) fn christoffel_compiled(&self) -> &CompiledExpr {
        &self.christoffel
    }

    pub(crate) fn christoffel_derivative_compiled(&self) -> &CompiledExpr {
        &self.christoffel_derivative
    }

    pub fn metric_inner(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * self.metric_at(x) * v)[(0, 0)]
    }

    /// `(R(X, Y) Z)^l` as a vector.
    pub fn curvature_apply(
        &self,
        x: &[f64],
        xv: &DVector<f64>,
        yv: &DVector<f64>,
        zv: &DVector<f64>,
    ) -> DVector<f64> {
        let n = self.dim;
        let r = self.curvature_at(x);
        let mut out = DVector::zeros(n);
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        acc += r[((l * n + i) * n + j) * n + k] * xv[i] * yv[j] * zv[k];
                    }
                }
            }
            out[l] = acc;
        }
        out
    }

    /// Directional curvature matrix in a given frame: entry `(a, b)` is
    /// `g(R(Y_a, v) v, Y_b)` for the columns `Y_a` of `frame_cols`.
    pub fn directional_curvature(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        frame_cols: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let g = self.metric_at(x);
        let mut out = DMatrix::zeros(frame_cols.ncols(), frame_cols.ncols());
        for a in 0..frame_cols.ncols() {
            let ya = frame_cols.column(a).clone_owned();
            let rv = self.curvature_apply(x, &ya, v, v);
            let grv = &g * rv;
            for b in 0..frame_cols.ncols() {
                out[(a, b)] = frame_cols.column(b).dot(&grv);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::parse_structure;

    fn sphere() -> SRStructure {
        parse_structure(
            "dim 2\nvars theta phi\nfield E1 : 1, 0\nfield E2 : 0, 1/sin(theta)\n",
        )
        .unwrap()
    }

    fn hyperbolic() -> SRStructure {
        parse_structure("dim 2\nvars x y\nfield E1 : y, 0\nfield E2 : 0, y\n").unwrap()
    }

    #[test]
    fn euclidean_space_is_flat() {
        let s = parse_structure(
            "dim 3\nvars x y z\nfield X1 : 1, 0, 0\nfield X2 : 0, 1, 0\nfield X3 : 0, 0, 1\n",
        )
        .unwrap();
        let rd = RiemannData::new(&s).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert!(rd.christoffel_at(&x).iter().all(|&v| v == 0.0));
        assert!(rd.curvature_at(&x).iter().all(|&v| v == 0.0));
        let g = rd.metric_at(&x);
        assert!((g - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn sphere_metric_and_christoffel_match_closed_forms() {
        let rd = RiemannData::new(&sphere()).unwrap();
        let th = 1.0f64;
        let x = [th, 0.7];
        let g = rd.metric_at(&x);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((g[(1, 1)] - th.sin().powi(2)).abs() < 1e-14);
        assert!(g[(0, 1)].abs() < 1e-14);
        let n = 2;
        let gam = rd.christoffel_at(&x);
        let g_th_pp = gam[(0 * n + 1) * n + 1];
        assert!((g_th_pp - (-th.sin() * th.cos())).abs() < 1e-12, "{g_th_pp}");
        let g_ph_tp = gam[(n + 0) * n + 1];
        assert!((g_ph_tp - th.cos() / th.sin()).abs() < 1e-12);
        // symmetry in the lower indices
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let a = gam[(k * n + i) * n + j];
                    let b = gam[(k * n + j) * n + i];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_curvature_identity_on_sphere_and_half_plane() {
        for (s, kappa, pts) in [
            (sphere(), 1.0, vec![[1.0, 0.4], [2.0, -0.3], [0.8, 2.0]]),
            (hyperbolic(), -1.0, vec![[0.2, 1.0], [-1.0, 0.5], [3.0, 2.5]]),
        ] {
            let rd = RiemannData::new(&s).unwrap();
            for (si, x) in pts.iter().enumerate() {
                let xv = DVector::from_vec(vec![0.3 + si as f64 * 0.1, -0.8]);
                let yv = DVector::from_vec(vec![1.1, 0.25 * si as f64 + 0.4]);
                let zv = DVector::from_vec(vec![-0.5, 0.9]);
                let lhs = rd.curvature_apply(x, &xv, &yv, &zv);
                let gyz = rd.metric_inner(x, &yv, &zv);
                let gxz = rd.metric_inner(x, &xv, &zv);
                let rhs = (&xv * gyz - &yv * gxz) * kappa;
                assert!((lhs - rhs).amax() < 1e-9, "kappa={kappa} point {si}");
            }
        }
    }

    #[test]
    fn directional_curvature_in_an_orthonormal_frame_is_diagonal_with_the_sectional_value() {
        // unit tangent v = Y_1, completed by Y_2; expect diag(0, kappa)
        let rd = RiemannData::new(&sphere()).unwrap();
        let x = [1.2, 0.5];
        let cols =
            DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![
                0.0,
                1.0 / 1.2f64.sin(),
            ])]);
        let v = cols.column(0).clone_owned();
        let r = rd.directional_curvature(&x, &v, &cols);
        assert!(r[(0, 0)].abs() < 1e-12);
        assert!((r[(1, 1)] - 1.0).abs() < 1e-10);
        assert!(r[(0, 1)].abs() < 1e-10 && r[(1, 0)].abs() < 1e-10);

        let rh = RiemannData::new(&hyperbolic()).unwrap();
        let xh = [0.0, 2.0];
        let colsh = DMatrix::from_columns(&[
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
        ]);
        let vh = colsh.column(0).clone_owned();
        let rhm = rh.directional_curvature(&xh, &vh, &colsh);
        assert!(rhm[(0, 0)].abs() < 1e-12);
        assert!((rhm[(1, 1)] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_frames_are_rejected() {
        let s = parse_structure("dim 3\nvars x y z\nfield X1 : 1, 0, -y/2\nfield X2 : 0, 1, x/2\n")
            .unwrap();
        assert!(RiemannData::new(&s).is_err());
    }
}
