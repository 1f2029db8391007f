//! Python bindings: structures, geodesics, canonical frames, curvature
//! matrices, Young diagrams and the verification checks, as a `srcurv_py`
//! extension module.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use srcurv_core::builtins;
use srcurv_core::curvature::check_normal as core_check_normal;
use srcurv_core::extremal::{check_flow_homogeneity, Extremal};
use srcurv_core::flag::{flag_along_curve, FlagOptions};
use srcurv_core::frame::{
    check_structure, curvature_matrix, darboux_defect, parse_frame_file,
    CanonicalFullRankFrame, DarbouxFrame,
};
use srcurv_core::ham::PhaseSystem;
use srcurv_core::jacobi::{compare_jacobi_routes, conjugate_times};
use srcurv_core::report::trajectory_table;
use srcurv_core::structure::parse_structure;
use srcurv_core::young::YoungDiagram;
use srcurv_core::SRStructure;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn phase_point(p0: &[f64], x0: &[f64]) -> Vec<f64> {
    let mut z = p0.to_vec();
    z.extend_from_slice(x0);
    z
}

/// A sub-Riemannian structure: a chart and an orthonormal frame of the
/// distribution.
#[pyclass(unsendable)]
struct Structure {
    inner: SRStructure,
}

#[pymethods]
impl Structure {
    /// Load a named builtin (`euclidean1..4`, `sphere`, `sphere:R`,
    /// `hyperbolic`, `heisenberg`).
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Structure> {
        Ok(Structure { inner: builtins::builtin_structure(name).map_err(err)? })
    }

    /// Parse from the structure text format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Structure> {
        Ok(Structure { inner: parse_structure(text).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn is_riemannian(&self) -> bool {
        self.inner.is_riemannian()
    }

    #[getter]
    fn coordinates(&self) -> Vec<String> {
        self.inner.chart().names().to_vec()
    }

    /// Serialize back to the structure text format.
    fn render(&self) -> String {
        builtins::render_structure(&self.inner)
    }

    /// Integrate the normal extremal from `(x0, p0)` over `[0, t_end]`.
    #[pyo3(signature = (x0, p0, t_end, tol = 1e-11))]
    fn geodesic(&self, x0: Vec<f64>, p0: Vec<f64>, t_end: f64, tol: f64) -> PyResult<Geodesic> {
        let ext = Extremal::from_structure(&self.inner, &x0, &p0, t_end, tol).map_err(err)?;
        Ok(Geodesic { s: self.inner.clone(), ext: Arc::new(ext) })
    }

    /// Canonical frame along a geodesic (full-rank structures only).
    #[pyo3(signature = (x0, p0, t_end, tol = 1e-11))]
    fn canonical_frame(
        &self,
        x0: Vec<f64>,
        p0: Vec<f64>,
        t_end: f64,
        tol: f64,
    ) -> PyResult<Frame> {
        let frame =
            CanonicalFullRankFrame::new(&self.inner, &x0, &p0, t_end, tol).map_err(err)?;
        Ok(Frame { inner: Box::new(frame) })
    }

    /// Frame from a closed-form frame file, attached to the extremal from
    /// `(x0, p0)`.
    #[pyo3(signature = (text, x0, p0, t_end, tol = 1e-11))]
    fn frame_from_text(
        &self,
        text: &str,
        x0: Vec<f64>,
        p0: Vec<f64>,
        t_end: f64,
        tol: f64,
    ) -> PyResult<Frame> {
        let system = Arc::new(PhaseSystem::new(&self.inner).map_err(err)?);
        let doc = parse_frame_file(text, &system).map_err(err)?;
        let ext = Arc::new(
            Extremal::integrate(system, &phase_point(&p0, &x0), 0.0, t_end, tol).map_err(err)?,
        );
        Ok(Frame { inner: Box::new(doc.attach(ext).map_err(err)?) })
    }

    /// Growth vector and Young diagram of the geodesic through `(x0, p0)`:
    /// a dict with `rows`, `columns`, `growth`, `ample`.
    #[pyo3(signature = (x0, p0, t_end, tol = 1e-10))]
    fn young<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        p0: Vec<f64>,
        t_end: f64,
        tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ext = Extremal::from_structure(&self.inner, &x0, &p0, t_end, tol).map_err(err)?;
        let flag = flag_along_curve(&self.inner, &ext, &FlagOptions::default()).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("rows", flag.diagram.rows().to_vec())?;
        out.set_item("columns", flag.diagram.columns().to_vec())?;
        out.set_item("growth", flag.growth.clone())?;
        out.set_item("ample", flag.ample)?;
        Ok(out)
    }

    /// Sup-residual of the dilation covariance of the flow at factor `c`.
    #[pyo3(signature = (x0, p0, t_end, c, tol = 1e-11))]
    fn homogeneity_residual(
        &self,
        x0: Vec<f64>,
        p0: Vec<f64>,
        t_end: f64,
        c: f64,
        tol: f64,
    ) -> PyResult<f64> {
        let system = Arc::new(PhaseSystem::new(&self.inner).map_err(err)?);
        check_flow_homogeneity(&system, &phase_point(&p0, &x0), t_end, c, 9, tol).map_err(err)
    }
}

/// A normal extremal (geodesic with its covector) on `[0, t_end]`.
#[pyclass(unsendable)]
struct Geodesic {
    s: SRStructure,
    ext: Arc<Extremal>,
}

#[pymethods]
impl Geodesic {
    #[getter]
    fn t_start(&self) -> f64 {
        self.ext.t_start()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.ext.t_end()
    }

    /// `(x, p)` at time `t`.
    fn state(&self, t: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let n = self.ext.base_dim();
        let z = self.ext.state_at(t).map_err(err)?;
        Ok((z.as_slice()[n..2 * n].to_vec(), z.as_slice()[..n].to_vec()))
    }

    /// Column names and sample rows (`t`, coordinates, momenta).
    fn trajectory(&self, samples: usize) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
        let table = trajectory_table(&self.ext, samples).map_err(err)?;
        Ok((table.columns, table.rows))
    }

    /// Times where the vertical-initial-condition variational block
    /// degenerates (sign-change scan plus bisection).
    #[pyo3(signature = (samples = 200, tol_t = 1e-9))]
    fn conjugate_times(&self, samples: usize, tol_t: f64) -> PyResult<Vec<f64>> {
        Ok(conjugate_times(&self.ext, samples, tol_t).map_err(err)?.times)
    }

    /// Sup-difference between the second-order variational integration and
    /// the linearized-flow route, for the initial condition `v0`
    /// (momentum block first; full-rank structures only).
    fn jacobi_sup_difference(&self, v0: Vec<f64>) -> PyResult<f64> {
        let v = DVector::from_column_slice(&v0);
        compare_jacobi_routes(&self.s, &self.ext, &v, 26).map_err(err)
    }
}

/// A Darboux frame along an extremal, with its extracted curvature.
#[pyclass(unsendable)]
struct Frame {
    inner: Box<dyn DarbouxFrame>,
}

#[pymethods]
impl Frame {
    /// Row lengths of the frame's Young diagram.
    #[getter]
    fn rows(&self) -> Vec<usize> {
        self.inner.diagram().rows().to_vec()
    }

    /// Labels `row:col` of the boxes indexing the curvature matrix.
    #[getter]
    fn box_labels(&self) -> Vec<String> {
        let d = self.inner.diagram();
        (0..d.size()).map(|b| d.box_label(b)).collect()
    }

    /// The curvature matrix at time `t`, as nested lists.
    fn curvature(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let r = curvature_matrix(self.inner.as_ref(), t).map_err(err)?;
        Ok((0..r.nrows()).map(|i| (0..r.ncols()).map(|j| r[(i, j)]).collect()).collect())
    }

    /// Largest deviation of the symplectic pairings from the Darboux
    /// pattern over the given times.
    fn darboux_defect(&self, ts: Vec<f64>) -> PyResult<f64> {
        darboux_defect(self.inner.as_ref(), &ts).map_err(err)
    }

    /// Structural-pattern defects over the given times: a dict with
    /// `shift`, `projection`, `consistency`, `asymmetry`.
    fn structure_defects<'py>(
        &self,
        py: Python<'py>,
        ts: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let st = check_structure(self.inner.as_ref(), &ts).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("shift", st.c1_defect)?;
        out.set_item("projection", st.c2_defect)?;
        out.set_item("consistency", st.c1_consistency)?;
        out.set_item("asymmetry", st.r_asymmetry)?;
        Ok(out)
    }
}

/// Names accepted by `Structure.builtin`.
#[pyfunction]
fn builtin_names() -> Vec<String> {
    builtins::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Closed-form frame family for the Heisenberg builtin, in the frame-file
/// format.
#[pyfunction]
fn heisenberg_frame_text() -> &'static str {
    builtins::heisenberg_frame_text()
}

/// Check the normal-form conditions of a box-indexed matrix against a
/// diagram given by row lengths: a dict with `verdict`, `max_violation`
/// and human-readable `violations`.
#[pyfunction]
#[pyo3(signature = (matrix, rows, tol = 1e-6))]
fn check_normal<'py>(
    py: Python<'py>,
    matrix: Vec<Vec<f64>>,
    rows: Vec<usize>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = YoungDiagram::from_rows(rows).map_err(err)?;
    let m = matrix.len();
    if matrix.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let flat: Vec<f64> = matrix.into_iter().flatten().collect();
    let mat = DMatrix::from_row_slice(m, m, &flat);
    let rep = core_check_normal(&mat, &d, tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("verdict", rep.verdict)?;
    out.set_item("max_violation", rep.max_violation)?;
    let msgs: Vec<String> = rep
        .violations
        .iter()
        .map(|v| format!("{} at ({}, {}): {:.3e}", v.rule, v.row_box, v.col_box, v.magnitude))
        .collect();
    out.set_item("violations", msgs)?;
    Ok(out)
}

#[pymodule]
fn srcurv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Structure>()?;
    m.add_class::<Geodesic>()?;
    m.add_class::<Frame>()?;
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(heisenberg_frame_text, m)?)?;
    m.add_function(wrap_pyfunction!(check_normal, m)?)?;
    Ok(())
}
