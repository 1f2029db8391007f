//! Darboux frames along extremals: construction in the full-rank case,
//! symbolic frames loaded from text, dilation rescaling, and the extraction
//! and verification of the structural matrices and the curvature matrix.
//!
//! A frame attaches to each time a symplectic basis `E_b(t), F_b(t)` of the
//! phase space, indexed by the boxes of a Young diagram. Differentiation
//! along the flow uses the flow-conjugated stencils of
//! [`Extremal::flow_derivative`]; the structural matrices are read off by
//! symplectic pairing:
//!
//! ```text
//! dE_a/dt =  sum_b (C1^T)_{ab} E_b - sum_b (C2)_{ab} F_b
//! dF_a/dt =  sum_b   (R)_{ab} E_b - sum_b (C1)_{ab} F_b
//! ```

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::expr::{parse_expr_at, CompiledExpr, Expr};
use crate::extremal::{Extremal, FieldAlong, PullbackField};
use crate::field::VectorField;
use crate::ham::PhaseSystem;
use crate::ode::{self, OdeSolution, OdeSystem};
use crate::riemann::RiemannData;
use crate::structure::SRStructure;
use crate::symplectic::pairing;
use crate::young::YoungDiagram;

/// A Darboux frame along one extremal.
pub trait DarbouxFrame {
    fn diagram(&self) -> &YoungDiagram;
    fn extremal(&self) -> &Arc<Extremal>;
    fn e_field(&self, b: usize) -> Arc<dyn FieldAlong>;
    fn f_field(&self, b: usize) -> Arc<dyn FieldAlong>;
}

// ---------------------------------------------------------------------------
// fields derived by flow differentiation, with memoization

/// `value(t) = -(d/dt) source(t)` along the flow.
pub struct NegFlowDerivative {
    ext: Arc<Extremal>,
    source: Arc<dyn FieldAlong>,
    cache: RefCell<HashMap<u64, DVector<f64>>>,
}

impl NegFlowDerivative {
    pub fn new(ext: Arc<Extremal>, source: Arc<dyn FieldAlong>) -> NegFlowDerivative {
        NegFlowDerivative { ext, source, cache: RefCell::new(HashMap::new()) }
    }
}

impl FieldAlong for NegFlowDerivative {
    fn phase_dim(&self) -> usize {
        self.source.phase_dim()
    }

    fn value(&self, t: f64) -> CoreResult<DVector<f64>> {
        if let Some(v) = self.cache.borrow().get(&t.to_bits()) {
            return Ok(v.clone());
        }
        let v = -self.ext.flow_derivative(&*self.source, t)?;
        self.cache.borrow_mut().insert(t.to_bits(), v.clone());
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// full-rank construction: parallel transport bundle + vertical duals

/// Augmented system `[z, Y]`: the phase flow together with parallel
/// transport of `n` tangent columns along the projected curve.
struct BundleSys {
    hvec: CompiledExpr,
    riemann: Arc<RiemannData>,
    n: usize,
    stack: RefCell<Vec<f64>>,
    gbuf: RefCell<Vec<f64>>,
}

impl OdeSystem for BundleSys {
    fn dim(&self) -> usize {
        2 * self.n + self.n * self.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let mut stack = self.stack.borrow_mut();
        self.hvec.eval_into(&y[..2 * n], &mut dy[..2 * n], &mut stack);
        let mut gbuf = self.gbuf.borrow_mut();
        self.riemann
            .christoffel_compiled()
            .eval_into(&y[n..2 * n], &mut gbuf, &mut stack);
        for a in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += gbuf[(k * n + i) * n + j] * dy[n + i] * y[2 * n + a * n + j];
                    }
                }
                dy[2 * n + a * n + k] = -acc;
            }
        }
    }
}

struct TransportBundle {
    sys: BundleSys,
    sol: OdeSolution,
    n: usize,
}

impl TransportBundle {
    /// Raw bundle states at the query times (re-integrated, shared anchor).
    fn states_at(&self, ts: &[f64]) -> CoreResult<Vec<Vec<f64>>> {
        Ok(self.sol.eval_precise(&self.sys, ts)?)
    }

    fn frame_matrix(state: &[f64], n: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(n, n);
        for a in 0..n {
            for k in 0..n {
                c[(k, a)] = state[2 * n + a * n + k];
            }
        }
        c
    }
}

/// Householder-based orthogonal completion: an orthogonal matrix whose first
/// column is the given unit vector.
fn orthogonal_completion(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut w = u.clone();
    w[0] -= 1.0;
    let nw2 = w.norm_squared();
    if nw2 < 1e-24 {
        return DMatrix::identity(n, n);
    }
    DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / nw2)
}

/// Vertical field whose momentum block is a row of the inverse transported
/// frame matrix; its pairing with the horizontal fields is exactly Kronecker.
struct VerticalFrameField {
    bundle: Arc<TransportBundle>,
    row: usize,
}

impl FieldAlong for VerticalFrameField {
    fn phase_dim(&self) -> usize {
        2 * self.bundle.n
    }

    fn value(&self, t: f64) -> CoreResult<DVector<f64>> {
        Ok(self.values(&[t])?.pop().unwrap())
    }

    fn values(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        let n = self.bundle.n;
        let states = self.bundle.states_at(ts)?;
        let mut out = Vec::with_capacity(ts.len());
        for st in &states {
            let c = TransportBundle::frame_matrix(st, n);
            let cinv = c.try_inverse().ok_or_else(|| {
                CoreError::Numeric("transported frame matrix is singular".into())
            })?;
            let mut v = DVector::zeros(2 * n);
            for k in 0..n {
                v[k] = cinv[(self.row, k)];
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// The canonical frame of a full-rank structure along one extremal: the
/// vertical fields are duals of a parallel orthonormal tangent frame whose
/// first vector is aligned with the velocity, and the horizontal fields are
/// their negative flow derivatives.
pub struct CanonicalFullRankFrame {
    ext: Arc<Extremal>,
    bundle: Arc<TransportBundle>,
    riemann: Arc<RiemannData>,
    diagram: YoungDiagram,
    e_fields: Vec<Arc<dyn FieldAlong>>,
    f_fields: Vec<Arc<dyn FieldAlong>>,
}

impl CanonicalFullRankFrame {
    pub fn from_phase_point(
        s: &SRStructure,
        system: Arc<PhaseSystem>,
        z0: &[f64],
        t0: f64,
        t1: f64,
        tol: f64,
    ) -> CoreResult<CanonicalFullRankFrame> {
        let n = s.dim();
        let riemann = Arc::new(RiemannData::new(s)?);
        let ext = Arc::new(Extremal::integrate(system.clone(), z0, t0, t1, tol)?);

        // initial tangent frame: orthonormal completion of the unit velocity
        // in frame coordinates
        let q0 = &z0[n..2 * n];
        let p0 = &z0[..n];
        let mut m0 = DMatrix::zeros(n, n);
        for (b, xb) in s.frame().iter().enumerate() {
            let col = xb.eval(q0)?;
            for k in 0..n {
                m0[(k, b)] = col[k];
            }
        }
        let h0 = m0.transpose() * DVector::from_column_slice(p0);
        let speed = h0.norm();
        if speed < 1e-12 {
            return Err(CoreError::InvalidInput(
                "the initial covector annihilates the frame; the curve is constant".into(),
            ));
        }
        let q_rot = orthogonal_completion(&(&h0 / speed));
        let y0 = &m0 * q_rot;

        let mut state0 = vec![0.0; 2 * n + n * n];
        state0[..2 * n].copy_from_slice(z0);
        for a in 0..n {
            for k in 0..n {
                state0[2 * n + a * n + k] = y0[(k, a)];
            }
        }
        let sys = BundleSys {
            hvec: system.compile_hvec()?,
            riemann: riemann.clone(),
            n,
            stack: RefCell::new(Vec::new()),
            gbuf: RefCell::new(vec![0.0; n * n * n]),
        };
        let sol = ode::integrate(&sys, t0, &state0, t1, tol)?;
        let bundle = Arc::new(TransportBundle { sys, sol, n });

        let diagram = YoungDiagram::from_rows(vec![1; n])?;
        let mut e_fields: Vec<Arc<dyn FieldAlong>> = Vec::with_capacity(n);
        let mut f_fields: Vec<Arc<dyn FieldAlong>> = Vec::with_capacity(n);
        for a in 0..n {
            let e: Arc<dyn FieldAlong> =
                Arc::new(VerticalFrameField { bundle: bundle.clone(), row: a });
            f_fields
                .push(Arc::new(NegFlowDerivative::new(ext.clone(), e.clone())) as Arc<_>);
            e_fields.push(e);
        }
        Ok(CanonicalFullRankFrame { ext, bundle, riemann, diagram, e_fields, f_fields })
    }

    pub fn new(
        s: &SRStructure,
        x0: &[f64],
        p0: &[f64],
        t_end: f64,
        tol: f64,
    ) -> CoreResult<CanonicalFullRankFrame> {
        let system = Arc::new(PhaseSystem::new(s)?);
        let mut z0 = Vec::with_capacity(2 * s.dim());
        z0.extend_from_slice(p0);
        z0.extend_from_slice(x0);
        CanonicalFullRankFrame::from_phase_point(s, system, &z0, 0.0, t_end, tol)
    }

    pub fn riemann(&self) -> &Arc<RiemannData> {
        &self.riemann
    }

    /// The transported tangent frame matrix (columns) at time t.
    pub fn parallel_frame_at(&self, t: f64) -> CoreResult<DMatrix<f64>> {
        let st = self.bundle.states_at(&[t])?.pop().unwrap();
        Ok(TransportBundle::frame_matrix(&st, self.bundle.n))
    }

    /// Base point and velocity at time t.
    pub fn point_and_velocity(&self, t: f64) -> CoreResult<(Vec<f64>, DVector<f64>)> {
        let n = self.bundle.n;
        let z = self.ext.state_at(t)?;
        let hv = self.ext.hamiltonian_vector(z.as_slice());
        let x = z.as_slice()[n..2 * n].to_vec();
        Ok((x, DVector::from_column_slice(&hv.as_slice()[n..2 * n])))
    }
}

impl DarbouxFrame for CanonicalFullRankFrame {
    fn diagram(&self) -> &YoungDiagram {
        &self.diagram
    }

    fn extremal(&self) -> &Arc<Extremal> {
        &self.ext
    }

    fn e_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.e_fields[b].clone()
    }

    fn f_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.f_fields[b].clone()
    }
}

// ---------------------------------------------------------------------------
// symbolic frames from structured text

/// A frame given by closed-form phase-space expressions, one pair of
/// component lists per box.
///
/// Text format (one statement per line, `#` comments):
///
/// ```text
/// young 2 1
/// let r = sqrt(h1^2 + h2^2)
/// E 1 1 : c1, c2, ..., c_{2n}
/// F 1 1 : ...
/// ```
///
/// Rows of the diagram are listed by `young` as row lengths; boxes are
/// addressed as `row column`, both 1-based; `let` names abbreviate
/// subexpressions and are substituted away during parsing.
pub struct FrameDocument {
    diagram: YoungDiagram,
    e_exprs: Vec<Vec<Expr>>,
    f_exprs: Vec<Vec<Expr>>,
}

impl FrameDocument {
    pub fn diagram(&self) -> &YoungDiagram {
        &self.diagram
    }

    /// Component expressions of the vertical fields, box by box.
    pub fn e_components(&self) -> &[Vec<Expr>] {
        &self.e_exprs
    }

    /// Component expressions of the horizontal fields, box by box.
    pub fn f_components(&self) -> &[Vec<Expr>] {
        &self.f_exprs
    }

    /// Attach the symbolic frame to an extremal of a matching system.
    pub fn attach(&self, ext: Arc<Extremal>) -> CoreResult<SymbolicFrame> {
        let chart = ext.system().phase_chart().clone();
        let mut e_fields: Vec<Arc<dyn FieldAlong>> = Vec::new();
        let mut f_fields: Vec<Arc<dyn FieldAlong>> = Vec::new();
        for comps in &self.e_exprs {
            let vf = VectorField::new(chart.clone(), comps.clone())?;
            e_fields.push(Arc::new(PullbackField::new(ext.clone(), &vf)?) as Arc<_>);
        }
        for comps in &self.f_exprs {
            let vf = VectorField::new(chart.clone(), comps.clone())?;
            f_fields.push(Arc::new(PullbackField::new(ext.clone(), &vf)?) as Arc<_>);
        }
        Ok(SymbolicFrame { diagram: self.diagram.clone(), ext, e_fields, f_fields })
    }
}

fn frame_line_error(line: usize, msg: impl Into<String>) -> CoreError {
    CoreError::FrameFile { line, msg: msg.into() }
}

/// Parse a frame description against the phase chart of a system.
pub fn parse_frame_file(text: &str, system: &PhaseSystem) -> CoreResult<FrameDocument> {
    let phase_names: Vec<String> = system.phase_chart().names().to_vec();
    let mut defs: Vec<(String, Expr)> = Vec::new();
    let mut diagram: Option<YoungDiagram> = None;
    let mut e_seen: Vec<Option<Vec<Expr>>> = Vec::new();
    let mut f_seen: Vec<Option<Vec<Expr>>> = Vec::new();

    let substitute = |e: &Expr, defs: &[(String, Expr)]| -> Expr {
        e.subst(&|name| {
            defs.iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, d)| d.clone())
        })
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        let mut avail = phase_names.clone();
        avail.extend(defs.iter().map(|(n, _)| n.clone()));

        if let Some(rest) = line.strip_prefix("young") {
            if diagram.is_some() {
                return Err(frame_line_error(lineno, "duplicate `young` line"));
            }
            let rows: Vec<usize> = rest
                .split_whitespace()
                .map(|w| {
                    w.parse::<usize>()
                        .map_err(|_| frame_line_error(lineno, format!("bad row length `{w}`")))
                })
                .collect::<Result<_, _>>()?;
            let d = YoungDiagram::from_rows(rows)?;
            if d.size() != system.base_dim() {
                return Err(frame_line_error(
                    lineno,
                    format!(
                        "diagram has {} boxes but the base space has dimension {}",
                        d.size(),
                        system.base_dim()
                    ),
                ));
            }
            e_seen = vec![None; d.size()];
            f_seen = vec![None; d.size()];
            diagram = Some(d);
            continue;
        }

        if let Some(rest) = line.strip_prefix("let") {
            let (name, rhs) = rest
                .split_once('=')
                .ok_or_else(|| frame_line_error(lineno, "expected `let name = expr`"))?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(frame_line_error(lineno, format!("bad definition name `{name}`")));
            }
            if avail.iter().any(|v| v == name) {
                return Err(frame_line_error(
                    lineno,
                    format!("`{name}` shadows a variable or earlier definition"),
                ));
            }
            let parsed = parse_expr_at(rhs.trim(), Some(&avail), lineno)
                .map_err(|e| frame_line_error(lineno, e.to_string()))?;
            let full = substitute(&parsed, &defs);
            defs.push((name.to_string(), full));
            continue;
        }

        let (kind, rest) = if let Some(r) = line.strip_prefix('E') {
            ('E', r)
        } else if let Some(r) = line.strip_prefix('F') {
            ('F', r)
        } else {
            return Err(frame_line_error(lineno, format!("unrecognized line `{line}`")));
        };
        let d = diagram
            .as_ref()
            .ok_or_else(|| frame_line_error(lineno, "`young` must come before field lines"))?;
        let (addr, comps_src) = rest
            .split_once(':')
            .ok_or_else(|| frame_line_error(lineno, "expected `E row col : comps`"))?;
        let nums: Vec<usize> = addr
            .split_whitespace()
            .map(|w| {
                w.parse::<usize>()
                    .map_err(|_| frame_line_error(lineno, format!("bad box index `{w}`")))
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != 2 || nums[0] == 0 || nums[1] == 0 {
            return Err(frame_line_error(lineno, "box address must be `row col`, 1-based"));
        }
        let b = d.box_index(nums[0] - 1, nums[1] - 1).ok_or_else(|| {
            frame_line_error(lineno, format!("box ({}, {}) not in diagram", nums[0], nums[1]))
        })?;
        let comps: Vec<Expr> = comps_src
            .split(',')
            .map(|src| {
                parse_expr_at(src.trim(), Some(&avail), lineno)
                    .map(|e| substitute(&e, &defs))
                    .map_err(|e| frame_line_error(lineno, e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        if comps.len() != phase_names.len() {
            return Err(frame_line_error(
                lineno,
                format!("expected {} components, found {}", phase_names.len(), comps.len()),
            ));
        }
        let slot = match kind {
            'E' => &mut e_seen[b],
            _ => &mut f_seen[b],
        };
        if slot.is_some() {
            return Err(frame_line_error(lineno, "duplicate field line for this box"));
        }
        *slot = Some(comps);
    }

    let diagram = diagram
        .ok_or_else(|| frame_line_error(0, "missing `young` line"))?;
    let unwrap_all = |seen: Vec<Option<Vec<Expr>>>, kind: char| -> CoreResult<Vec<Vec<Expr>>> {
        seen.into_iter()
            .enumerate()
            .map(|(b, s)| {
                s.ok_or_else(|| {
                    frame_line_error(
                        0,
                        format!("missing `{kind}` line for box {}", diagram.box_label(b)),
                    )
                })
            })
            .collect()
    };
    let e_exprs = unwrap_all(e_seen, 'E')?;
    let f_exprs = unwrap_all(f_seen, 'F')?;
    Ok(FrameDocument { diagram, e_exprs, f_exprs })
}

/// A symbolic frame attached to an extremal.
pub struct SymbolicFrame {
    diagram: YoungDiagram,
    ext: Arc<Extremal>,
    e_fields: Vec<Arc<dyn FieldAlong>>,
    f_fields: Vec<Arc<dyn FieldAlong>>,
}

impl DarbouxFrame for SymbolicFrame {
    fn diagram(&self) -> &YoungDiagram {
        &self.diagram
    }

    fn extremal(&self) -> &Arc<Extremal> {
        &self.ext
    }

    fn e_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.e_fields[b].clone()
    }

    fn f_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.f_fields[b].clone()
    }
}

// ---------------------------------------------------------------------------
// rescaling by the dilation homogeneity of the flow

/// One field of a rescaled frame: `c^w * diag(c I, I) * src(c t)`.
struct RescaledField {
    src: Arc<dyn FieldAlong>,
    c: f64,
    weight: i32,
}

impl FieldAlong for RescaledField {
    fn phase_dim(&self) -> usize {
        self.src.phase_dim()
    }

    fn value(&self, t: f64) -> CoreResult<DVector<f64>> {
        Ok(self.values(&[t])?.pop().unwrap())
    }

    fn values(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        let scaled: Vec<f64> = ts.iter().map(|t| self.c * t).collect();
        let raw = self.src.values(&scaled)?;
        let n = self.phase_dim() / 2;
        let amp = self.c.powi(self.weight);
        Ok(raw
            .into_iter()
            .map(|mut v| {
                for k in 0..n {
                    v[k] *= self.c;
                }
                v * amp
            })
            .collect())
    }
}

/// The frame obtained from `src` by the flow dilation with factor `c`: it
/// lives on the extremal through `diag(c I, I) z0` and spans `[t0 / c,
/// t1 / c]`. Box `(a, i)` (1-based column `i`) carries weight `c^{-i}` on
/// the vertical field and `c^{i-1}` on the horizontal one.
pub struct RescaledFrame {
    diagram: YoungDiagram,
    ext: Arc<Extremal>,
    e_fields: Vec<Arc<dyn FieldAlong>>,
    f_fields: Vec<Arc<dyn FieldAlong>>,
    c: f64,
}

impl RescaledFrame {
    pub fn new(src: &dyn DarbouxFrame, c: f64) -> CoreResult<RescaledFrame> {
        if c <= 0.0 || !c.is_finite() {
            return Err(CoreError::InvalidInput(
                "dilation factor must be positive and finite".into(),
            ));
        }
        let src_ext = src.extremal();
        let system = src_ext.system().clone();
        let z0 = system.dilate(src_ext.state_at(src_ext.t_start())?.as_slice(), c);
        let ext = Arc::new(Extremal::integrate(
            system,
            &z0,
            src_ext.t_start() / c,
            src_ext.t_end() / c,
            src_ext.tol(),
        )?);
        let diagram = src.diagram().clone();
        let mut e_fields: Vec<Arc<dyn FieldAlong>> = Vec::new();
        let mut f_fields: Vec<Arc<dyn FieldAlong>> = Vec::new();
        for (b, &(_, col)) in diagram.boxes().iter().enumerate() {
            let i = col as i32 + 1;
            e_fields.push(Arc::new(RescaledField {
                src: src.e_field(b),
                c,
                weight: -i,
            }) as Arc<_>);
            f_fields.push(Arc::new(RescaledField {
                src: src.f_field(b),
                c,
                weight: i - 1,
            }) as Arc<_>);
        }
        Ok(RescaledFrame { diagram, ext, e_fields, f_fields, c })
    }

    pub fn factor(&self) -> f64 {
        self.c
    }
}

impl DarbouxFrame for RescaledFrame {
    fn diagram(&self) -> &YoungDiagram {
        &self.diagram
    }

    fn extremal(&self) -> &Arc<Extremal> {
        &self.ext
    }

    fn e_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.e_fields[b].clone()
    }

    fn f_field(&self, b: usize) -> Arc<dyn FieldAlong> {
        self.f_fields[b].clone()
    }
}

// ---------------------------------------------------------------------------
// verification: symplectic pairings, structural matrices, curvature

fn frame_values_at(
    frame: &dyn DarbouxFrame,
    t: f64,
) -> CoreResult<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let m = frame.diagram().size();
    let mut es = Vec::with_capacity(m);
    let mut fs = Vec::with_capacity(m);
    for b in 0..m {
        es.push(frame.e_field(b).value(t)?);
        fs.push(frame.f_field(b).value(t)?);
    }
    Ok((es, fs))
}

/// Largest deviation of the pairings from the Darboux pattern over the
/// sample times: `sigma(E_a, E_b) = sigma(F_a, F_b) = 0` and
/// `sigma(E_a, F_b) = delta_{ab}`.
pub fn darboux_defect(frame: &dyn DarbouxFrame, ts: &[f64]) -> CoreResult<f64> {
    let m = frame.diagram().size();
    let mut worst: f64 = 0.0;
    for &t in ts {
        let (es, fs) = frame_values_at(frame, t)?;
        for a in 0..m {
            for b in 0..m {
                worst = worst.max(pairing(&es[a], &es[b]).abs());
                worst = worst.max(pairing(&fs[a], &fs[b]).abs());
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((pairing(&es[a], &fs[b]) - target).abs());
            }
        }
    }
    Ok(worst)
}

/// The structural data of a frame at one time, extracted by pairing the
/// flow derivatives of the frame fields against the frame.
pub struct ExtractedStructure {
    pub t: f64,
    /// From the vertical equations (pairing `dE/dt` against `F`).
    pub c1: DMatrix<f64>,
    /// From the horizontal equations (pairing `dF/dt` against `E`); should
    /// agree with `c1`.
    pub c1_alt: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    /// Symmetrized curvature matrix.
    pub r: DMatrix<f64>,
    /// Size of the skew part of the raw curvature matrix.
    pub r_asymmetry: f64,
}

/// Extract `C1`, `C2` and the curvature matrix at one time.
pub fn extract_structure(frame: &dyn DarbouxFrame, t: f64) -> CoreResult<ExtractedStructure> {
    let m = frame.diagram().size();
    let ext = frame.extremal();
    let (es, fs) = frame_values_at(frame, t)?;
    let mut de = Vec::with_capacity(m);
    let mut df = Vec::with_capacity(m);
    for b in 0..m {
        de.push(ext.flow_derivative(&*frame.e_field(b), t)?);
        df.push(ext.flow_derivative(&*frame.f_field(b), t)?);
    }
    let mut c1 = DMatrix::zeros(m, m);
    let mut c1_alt = DMatrix::zeros(m, m);
    let mut c2 = DMatrix::zeros(m, m);
    let mut r_raw = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            // dE_a/dt = (C1^T)_{ab} E_b - (C2)_{ab} F_b
            c2[(a, b)] = pairing(&de[a], &es[b]);
            c1[(b, a)] = pairing(&de[a], &fs[b]);
            // dF_a/dt = R_{ab} E_b - (C1)_{ab} F_b
            r_raw[(a, b)] = pairing(&df[a], &fs[b]);
            c1_alt[(a, b)] = pairing(&df[a], &es[b]);
        }
    }
    let r_sym = (&r_raw + r_raw.transpose()) * 0.5;
    let r_asymmetry = (&r_raw - r_raw.transpose()).abs().max();
    Ok(ExtractedStructure { t, c1, c1_alt, c2, r: r_sym, r_asymmetry })
}

/// The curvature matrix of the frame at one time.
pub fn curvature_matrix(frame: &dyn DarbouxFrame, t: f64) -> CoreResult<DMatrix<f64>> {
    Ok(extract_structure(frame, t)?.r)
}

/// Aggregated structural check over several times.
pub struct StructureCheck {
    pub per_time: Vec<ExtractedStructure>,
    /// Max deviation of `C1` from the shift pattern of the diagram.
    pub c1_defect: f64,
    /// Max deviation of `C2` from the first-column projection pattern.
    pub c2_defect: f64,
    /// Max disagreement between the two independent `C1` extractions.
    pub c1_consistency: f64,
    /// Max skew part among the raw curvature matrices.
    pub r_asymmetry: f64,
}

/// Check the structural matrices of the frame against the normal patterns
/// prescribed by its diagram.
pub fn check_structure(frame: &dyn DarbouxFrame, ts: &[f64]) -> CoreResult<StructureCheck> {
    let shift = frame.diagram().shift_matrix();
    let proj = frame.diagram().projection_matrix();
    let mut per_time = Vec::with_capacity(ts.len());
    let (mut d1, mut d2, mut dc, mut da): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for &t in ts {
        let ex = extract_structure(frame, t)?;
        d1 = d1.max((&ex.c1 - &shift).abs().max());
        d2 = d2.max((&ex.c2 - &proj).abs().max());
        dc = dc.max((&ex.c1 - &ex.c1_alt).abs().max());
        da = da.max(ex.r_asymmetry);
        per_time.push(ex);
    }
    Ok(StructureCheck {
        per_time,
        c1_defect: d1,
        c2_defect: d2,
        c1_consistency: dc,
        r_asymmetry: da,
    })
}

/// Compare the extracted curvature matrix of a full-rank canonical frame
/// with the directional curvature computed from the metric connection.
/// Returns the largest entrywise deviation over the sample times.
pub fn compare_full_rank_curvature(
    frame: &CanonicalFullRankFrame,
    ts: &[f64],
) -> CoreResult<f64> {
    let mut worst: f64 = 0.0;
    for &t in ts {
        let extracted = curvature_matrix(frame, t)?;
        let (x, v) = frame.point_and_velocity(t)?;
        let cols = frame.parallel_frame_at(t)?;
        let oracle = frame.riemann().directional_curvature(&x, &v, &cols);
        worst = worst.max((extracted - oracle).abs().max());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// generator decomposition along the frame

/// Decomposition of the dilation generator and of the flow generator in a
/// Darboux frame, aggregated over sample times.
pub struct GeneratorDecomposition {
    pub ts: Vec<f64>,
    /// Coefficients of the dilation generator on the vertical fields, one
    /// row per time.
    pub vertical_coeffs: Vec<DVector<f64>>,
    /// Largest pairing of the dilation generator with the vertical fields
    /// (its horizontal coefficients; all zero for a vertical generator).
    pub horizontal_defect: f64,
    /// Largest vertical coefficient on boxes lying in rows of length
    /// greater than one.
    pub long_row_defect: f64,
    /// Largest variation of any vertical coefficient across the times.
    pub coeff_variation: f64,
    /// Largest vertical coefficient of the flow generator.
    pub flow_vertical_defect: f64,
    /// Sup of `|d(dilation)/dt + flow generator|` over the times.
    pub flow_identity_defect: f64,
}

/// Decompose the dilation generator (the field paired to the flow
/// homogeneity) in the frame and verify its normal form: it is vertical,
/// supported on rows of length one, constant in time, and its flow
/// derivative is the negative of the flow generator.
pub fn generator_decomposition(
    frame: &dyn DarbouxFrame,
    ts: &[f64],
) -> CoreResult<GeneratorDecomposition> {
    let ext = frame.extremal();
    let system = ext.system();
    let m = frame.diagram().size();
    let euler = PullbackField::new(ext.clone(), &system.euler_field())?;

    let mut vertical_coeffs = Vec::with_capacity(ts.len());
    let mut horizontal_defect: f64 = 0.0;
    let mut long_row_defect: f64 = 0.0;
    let mut flow_vertical_defect: f64 = 0.0;
    let mut flow_identity_defect: f64 = 0.0;

    let rows = frame.diagram().rows().to_vec();
    for &t in ts {
        let (es, fs) = frame_values_at(frame, t)?;
        let ev = euler.value(t)?;
        let z = ext.state_at(t)?;
        let hv = ext.hamiltonian_vector(z.as_slice());

        let mut alpha = DVector::zeros(m);
        for b in 0..m {
            alpha[b] = pairing(&ev, &fs[b]);
            horizontal_defect = horizontal_defect.max(pairing(&ev, &es[b]).abs());
            flow_vertical_defect = flow_vertical_defect.max(pairing(&hv, &fs[b]).abs());
            let (row, _) = frame.diagram().boxes()[b];
            if rows[row] > 1 {
                long_row_defect = long_row_defect.max(alpha[b].abs());
            }
        }
        vertical_coeffs.push(alpha);

        let de = ext.flow_derivative(&euler, t)?;
        flow_identity_defect = flow_identity_defect.max((de + &hv).abs().max());
    }

    let mut coeff_variation: f64 = 0.0;
    for b in 0..m {
        let vals: Vec<f64> = vertical_coeffs.iter().map(|a| a[b]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        coeff_variation = coeff_variation.max(hi - lo);
    }

    Ok(GeneratorDecomposition {
        ts: ts.to_vec(),
        vertical_coeffs,
        horizontal_defect,
        long_row_defect,
        coeff_variation,
        flow_vertical_defect,
        flow_identity_defect,
    })
}

// ---------------------------------------------------------------------------
// rescaling laws

/// Result of checking a frame against its dilation rescaling.
pub struct RescaleCheck {
    pub c: f64,
    /// Darboux defect of the rescaled frame.
    pub darboux_defect: f64,
    /// Structural defect (`C1`, `C2` patterns) of the rescaled frame.
    pub structure_defect: f64,
    /// Largest relative deviation of the rescaled curvature matrix from the
    /// homogeneity law `R_c(t)_{ai,bj} = c^{i+j} R(c t)_{ai,bj}`.
    pub curvature_law_defect: f64,
}

/// Verify that the dilated frame is again a Darboux frame with the same
/// structural pattern and that its curvature matrix obeys the weighted
/// homogeneity law.
pub fn check_frame_rescaling(
    src: &dyn DarbouxFrame,
    c: f64,
    ts_src: &[f64],
) -> CoreResult<RescaleCheck> {
    let resc = RescaledFrame::new(src, c)?;
    let ts_resc: Vec<f64> = ts_src.iter().map(|t| t / c).collect();
    let darboux = darboux_defect(&resc, &ts_resc)?;
    let st = check_structure(&resc, &ts_resc)?;
    let structure_defect = st.c1_defect.max(st.c2_defect);

    let boxes = src.diagram().boxes().to_vec();
    let mut law: f64 = 0.0;
    for (k, &t) in ts_src.iter().enumerate() {
        let r_src = curvature_matrix(src, t)?;
        let r_resc = &st.per_time[k].r;
        let mut scale: f64 = 0.0;
        for v in r_src.iter() {
            scale = scale.max(v.abs());
        }
        let denom = scale.max(1.0);
        for a in 0..boxes.len() {
            for b in 0..boxes.len() {
                let w = (boxes[a].1 + 1 + boxes[b].1 + 1) as i32;
                let predicted = c.powi(w) * r_src[(a, b)];
                let dev = (r_resc[(a, b)] - predicted).abs() / (c.powi(w) * denom);
                law = law.max(dev);
            }
        }
    }
    Ok(RescaleCheck {
        c,
        darboux_defect: darboux,
        structure_defect,
        curvature_law_defect: law,
    })
}

/// Independent rescaling check for full-rank structures: the canonical
/// frames are built from scratch on the original and on the dilated
/// extremal, and the curvature matrices must satisfy `R_c(t) = c^2 R(c t)`.
/// Returns the largest relative deviation at the given times of the
/// rescaled curve.
pub fn check_full_rank_curvature_scaling(
    s: &SRStructure,
    x0: &[f64],
    p0: &[f64],
    t_end: f64,
    c: f64,
    ts_resc: &[f64],
    tol: f64,
) -> CoreResult<f64> {
    let base = CanonicalFullRankFrame::new(s, x0, p0, t_end, tol)?;
    let cp0: Vec<f64> = p0.iter().map(|v| c * v).collect();
    let dil = CanonicalFullRankFrame::new(s, x0, &cp0, t_end / c, tol)?;
    let mut worst: f64 = 0.0;
    for &t in ts_resc {
        let r_dil = curvature_matrix(&dil, t)?;
        let r_base = curvature_matrix(&base, c * t)?;
        let mut scale: f64 = 1.0;
        for v in r_base.iter() {
            scale = scale.max(v.abs());
        }
        let dev = (&r_dil - &r_base * (c * c)).abs().max() / (c * c * scale);
        worst = worst.max(dev);
    }
    Ok(worst)
}
