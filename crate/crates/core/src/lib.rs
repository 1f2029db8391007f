//! Geometry of sub-Riemannian geodesics: Hamiltonian extremals, Jacobi
//! fields, Young-diagram combinatorics of geodesic flags, Darboux frames and
//! the associated curvature invariants.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`], [`chart`], [`field`], [`structure`] — symbolic layer: a small
//!   expression language, charts, vector fields, and the text format for
//!   declaring an orthonormal frame of a distribution.
//! * [`ode`], [`ham`], [`extremal`] — numeric layer: adaptive Runge-Kutta
//!   integration, the normal Hamiltonian, extremal flow with its variational
//!   (linearized) flow, dilations, and Lie derivatives along the flow.
//! * [`flag`], [`young`] — the geodesic flag, growth vectors, Young diagrams
//!   and their shift/projection matrices.
//! * [`riemann`], [`frame`], [`jacobi`] — Christoffel symbols, parallel
//!   transport, the canonical Darboux frame in the Riemannian case,
//!   structural-matrix extraction, Jacobi fields and conjugate points.
//! * [`curvature`], [`ehresmann`] — normal-form checks for curvature
//!   matrices, homogeneity rescaling, fiber dilations, and the nonlinear
//!   connection with its curvature.
//! * [`builtins`], [`report`] — the built-in structure library and the
//!   JSON/CSV report plumbing shared with the command-line tool.

pub mod builtins;
pub mod chart;
pub mod curvature;
pub mod ehresmann;
pub mod error;
pub mod expr;
pub mod extremal;
pub mod field;
pub mod flag;
pub mod frame;
pub mod ham;
pub mod jacobi;
pub mod ode;
pub mod report;
pub mod riemann;
pub mod structure;
pub mod symplectic;
pub mod young;

pub use chart::Chart;
pub use error::{CoreError, CoreResult};
pub use expr::Expr;
pub use field::VectorField;
pub use structure::{parse_structure, SRStructure};
