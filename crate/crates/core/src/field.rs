//! Vector fields with symbolic components and the Lie bracket.

use crate::chart::{Chart, ChartError};
use crate::expr::{CompiledExpr, Expr, ExprError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("field has {got} components, chart has dimension {dim}")]
    ComponentCount { got: usize, dim: usize },
}

/// A vector field on a chart, one expression per coordinate direction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    chart: Chart,
    comps: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: Chart, comps: Vec<Expr>) -> Result<VectorField, FieldError> {
        if comps.len() != chart.dim() {
            return Err(FieldError::ComponentCount { got: comps.len(), dim: chart.dim() });
        }
        Ok(VectorField { chart, comps })
    }

    pub fn zero(chart: Chart) -> VectorField {
        let comps = vec![Expr::zero(); chart.dim()];
        VectorField { chart, comps }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.comps[i]
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, FieldError> {
        let names = self.chart.names();
        let lookup = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .map(|i| point[i])
        };
        self.comps
            .iter()
            .map(|c| c.eval(&lookup).map_err(FieldError::from))
            .collect()
    }

    pub fn compile(&self) -> Result<CompiledExpr, FieldError> {
        Ok(CompiledExpr::compile(&self.comps, self.chart.names())?)
    }

    /// Directional derivative of a scalar expression along the field:
    /// X(f) = sum_i X^i df/dx_i.
    pub fn derive_scalar(&self, f: &Expr) -> Expr {
        let terms = self
            .chart
            .names()
            .iter()
            .zip(&self.comps)
            .map(|(name, xi)| Expr::mul(xi.clone(), f.diff(name)))
            .collect();
        Expr::sum(terms)
    }

    /// Lie bracket [X, Y]^j = sum_i X^i dY^j/dx_i - Y^i dX^j/dx_i.
    pub fn lie_bracket(&self, other: &VectorField) -> Result<VectorField, FieldError> {
        self.chart.check_same(&other.chart)?;
        let comps = (0..self.chart.dim())
            .map(|j| {
                Expr::sub(
                    self.derive_scalar(&other.comps[j]),
                    other.derive_scalar(&self.comps[j]),
                )
            })
            .collect();
        Ok(VectorField { chart: self.chart.clone(), comps })
    }

    /// Pointwise linear combination sum_i coeffs[i] * fields[i] with symbolic
    /// coefficient functions.
    pub fn linear_combination(
        coeffs: &[Expr],
        fields: &[VectorField],
    ) -> Result<VectorField, FieldError> {
        assert_eq!(coeffs.len(), fields.len());
        let chart = fields[0].chart.clone();
        for f in fields {
            chart.check_same(&f.chart)?;
        }
        let comps = (0..chart.dim())
            .map(|j| {
                Expr::sum(
                    coeffs
                        .iter()
                        .zip(fields)
                        .map(|(c, f)| Expr::mul(c.clone(), f.comps[j].clone()))
                        .collect(),
                )
            })
            .collect();
        Ok(VectorField { chart, comps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn field(chart: &Chart, comps: &[&str]) -> VectorField {
        let names = chart.names().to_vec();
        let comps = comps
            .iter()
            .map(|s| parse_expr(s, Some(&names)).unwrap())
            .collect();
        VectorField::new(chart.clone(), comps).unwrap()
    }

    #[test]
    fn heisenberg_bracket_is_vertical() {
        // [X1, X2] = d/dz for X1 = dx - (y/2) dz, X2 = dy + (x/2) dz
        let chart = Chart::from_strs(&["x", "y", "z"]);
        let x1 = field(&chart, &["1", "0", "-y/2"]);
        let x2 = field(&chart, &["0", "1", "x/2"]);
        let b = x1.lie_bracket(&x2).unwrap();
        let v = b.eval(&[0.3, -1.7, 2.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn bracket_antisymmetry_numerically() {
        let chart = Chart::from_strs(&["x", "y"]);
        let a = field(&chart, &["x*y", "sin(x)"]);
        let b = field(&chart, &["cos(y)", "x^2 - y"]);
        let ab = a.lie_bracket(&b).unwrap();
        let ba = b.lie_bracket(&a).unwrap();
        for pt in [[0.2, 0.9], [-1.1, 0.4]] {
            let u = ab.eval(&pt).unwrap();
            let v = ba.eval(&pt).unwrap();
            for (ui, vi) in u.iter().zip(&v) {
                assert!((ui + vi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_identity_numerically() {
        let chart = Chart::from_strs(&["x", "y"]);
        let a = field(&chart, &["y", "x*x"]);
        let b = field(&chart, &["x + y", "1"]);
        let c = field(&chart, &["sin(y)", "x"]);
        let t1 = a.lie_bracket(&b.lie_bracket(&c).unwrap()).unwrap();
        let t2 = b.lie_bracket(&c.lie_bracket(&a).unwrap()).unwrap();
        let t3 = c.lie_bracket(&a.lie_bracket(&b).unwrap()).unwrap();
        for pt in [[0.5, -0.3], [1.2, 0.8]] {
            let u = t1.eval(&pt).unwrap();
            let v = t2.eval(&pt).unwrap();
            let w = t3.eval(&pt).unwrap();
            for i in 0..2 {
                assert!((u[i] + v[i] + w[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn chart_mismatch_is_an_error() {
        let c1 = Chart::from_strs(&["x", "y"]);
        let c2 = Chart::from_strs(&["u", "v"]);
        let a = field(&c1, &["1", "0"]);
        let b = field(&c2, &["0", "1"]);
        assert!(a.lie_bracket(&b).is_err());
    }
}
