//! The normal Hamiltonian of a frame and its symbolic phase-space data.
//!
//! For a frame X_1..X_k, H(p, x) = 1/2 sum_i <p, X_i(x)>^2 on the cotangent
//! chart in (p, x) block order. The Hamiltonian vector field and its exact
//! Jacobian are built symbolically once and compiled for the integrator.

use crate::chart::Chart;
use crate::expr::{CompiledExpr, Expr};
use crate::field::{FieldError, VectorField};
use crate::structure::SRStructure;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Chart(#[from] crate::chart::ChartError),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Symbolic phase-space package of one structure: the Hamiltonian, its
/// vector field in (p, x) order, and the exact Jacobian of that field.
#[derive(Debug, Clone)]
pub struct PhaseSystem {
    phase_chart: Chart,
    base_dim: usize,
    hamiltonian: Expr,
    /// Fiber-linear frame functions h_i(p, x) = <p, X_i(x)>.
    h_funcs: Vec<Expr>,
    /// Components of the Hamiltonian field: first p-dots, then x-dots.
    hvec: Vec<Expr>,
    /// Row-major 2n x 2n Jacobian of `hvec`.
    jacobian: Vec<Expr>,
}

impl PhaseSystem {
    pub fn new(s: &SRStructure) -> Result<PhaseSystem, HamError> {
        let n = s.dim();
        let phase_chart = s.chart().phase_extension()?;
        let momenta: Vec<Expr> = (0..n)
            .map(|i| Expr::var(phase_chart.name(i)))
            .collect();

        // h_i = <p, X_i(x)>; base-variable names are shared with the phase chart.
        let h_funcs: Vec<Expr> = s
            .frame()
            .iter()
            .map(|xi| {
                Expr::sum(
                    momenta
                        .iter()
                        .zip(xi.components())
                        .map(|(p, c)| Expr::mul(p.clone(), c.clone()))
                        .collect(),
                )
            })
            .collect();

        let hamiltonian = Expr::mul(
            Expr::constant(0.5),
            Expr::sum(h_funcs.iter().map(|h| Expr::pow(h.clone(), 2)).collect()),
        );

        // (p, x) block order: pdot_i = -dH/dx_i, xdot_i = dH/dp_i.
        let mut hvec = Vec::with_capacity(2 * n);
        for i in 0..n {
            hvec.push(Expr::neg(hamiltonian.diff(phase_chart.name(n + i))));
        }
        for i in 0..n {
            hvec.push(hamiltonian.diff(phase_chart.name(i)));
        }

        let mut jacobian = Vec::with_capacity(4 * n * n);
        for comp in &hvec {
            for j in 0..2 * n {
                jacobian.push(comp.diff(phase_chart.name(j)));
            }
        }

        Ok(PhaseSystem { phase_chart, base_dim: n, hamiltonian, h_funcs, hvec, jacobian })
    }

    pub fn phase_chart(&self) -> &Chart {
        &self.phase_chart
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn hamiltonian(&self) -> &Expr {
        &self.hamiltonian
    }

    pub fn frame_functions(&self) -> &[Expr] {
        &self.h_funcs
    }

    /// The Hamiltonian vector field as a field on the phase chart.
    pub fn hamiltonian_field(&self) -> VectorField {
        VectorField::new(self.phase_chart.clone(), self.hvec.clone())
            .expect("component count matches phase chart")
    }

    pub fn hvec_components(&self) -> &[Expr] {
        &self.hvec
    }

    pub fn jacobian_components(&self) -> &[Expr] {
        &self.jacobian
    }

    pub fn compile_hvec(&self) -> Result<CompiledExpr, HamError> {
        Ok(CompiledExpr::compile(&self.hvec, self.phase_chart.names())?)
    }

    pub fn compile_jacobian(&self) -> Result<CompiledExpr, HamError> {
        Ok(CompiledExpr::compile(&self.jacobian, self.phase_chart.names())?)
    }

    pub fn compile_hamiltonian(&self) -> Result<CompiledExpr, HamError> {
        Ok(CompiledExpr::compile(
            std::slice::from_ref(&self.hamiltonian),
            self.phase_chart.names(),
        )?)
    }

    /// Evaluate H at a phase point (p, x).
    pub fn eval_hamiltonian(&self, z: &[f64]) -> Result<f64, HamError> {
        let names = self.phase_chart.names();
        Ok(self
            .hamiltonian
            .eval(&|v| names.iter().position(|n| n == v).map(|i| z[i]))?)
    }

    /// The fiber dilation generator e = sum_i p_i d/dp_i (the Euler field).
    pub fn euler_field(&self) -> VectorField {
        let n = self.base_dim;
        let mut comps = Vec::with_capacity(2 * n);
        for i in 0..n {
            comps.push(Expr::var(self.phase_chart.name(i)));
        }
        comps.extend(std::iter::repeat_with(Expr::zero).take(n));
        VectorField::new(self.phase_chart.clone(), comps).expect("2n components")
    }

    /// Apply the fiber dilation P_c (p, x) -> (c p, x).
    pub fn dilate(&self, z: &[f64], c: f64) -> Vec<f64> {
        let n = self.base_dim;
        let mut out = z.to_vec();
        for v in out.iter_mut().take(n) {
            *v *= c;
        }
        out
    }
}
