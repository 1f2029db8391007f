//! The canonical nonlinear connection on the cotangent bundle: horizontal
//! spaces spanned by the horizontal frame fields, horizontal lifts, the
//! connection curvature `R(X, Y) = [lift X, lift Y] - lift [X, Y]`, and the
//! identity expressing the canonical curvature through it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::expr::{CompiledExpr, Expr};
use crate::extremal::Extremal;
use crate::field::VectorField;
use crate::frame::{CanonicalFullRankFrame, DarbouxFrame, FrameDocument};
use crate::ham::PhaseSystem;
use crate::riemann::RiemannData;
use crate::structure::SRStructure;
use crate::symplectic::pairing;

enum ConnKind {
    /// Horizontal spaces from the canonical frame built on a short extremal
    /// through each evaluation point (full-rank structures).
    FullRank { s: SRStructure, tol: f64, delta: f64 },
    /// Horizontal spaces from closed-form frame expressions: `m` fields of
    /// `2n` components each, stacked row-major.
    Symbolic { f_all: CompiledExpr, m: usize },
}

/// A rule assigning to each covector a horizontal complement of the fiber,
/// together with the induced lift operator.
pub struct Connection {
    system: Arc<PhaseSystem>,
    kind: ConnKind,
}

impl Connection {
    /// The canonical connection of a full-rank structure: at each point the
    /// horizontal space is spanned by the horizontal fields of the canonical
    /// frame constructed on a short extremal through that point.
    pub fn full_rank(s: &SRStructure) -> CoreResult<Connection> {
        let system = Arc::new(PhaseSystem::new(s)?);
        // the construction requires the metric connection
        let _ = RiemannData::new(s)?;
        Ok(Connection {
            system,
            kind: ConnKind::FullRank { s: s.clone(), tol: 1e-12, delta: 0.05 },
        })
    }

    /// The connection induced by a closed-form frame family.
    pub fn from_frame_document(s: &SRStructure, doc: &FrameDocument) -> CoreResult<Connection> {
        let system = Arc::new(PhaseSystem::new(s)?);
        let mut all: Vec<Expr> = Vec::new();
        for comps in doc.f_components() {
            all.extend(comps.iter().cloned());
        }
        let m = doc.f_components().len();
        let f_all = CompiledExpr::compile(&all, system.phase_chart().names())?;
        Ok(Connection { system, kind: ConnKind::Symbolic { f_all, m } })
    }

    pub fn system(&self) -> &Arc<PhaseSystem> {
        &self.system
    }

    /// Columns spanning the horizontal space at `z`.
    pub fn horizontal_basis(&self, z: &[f64]) -> CoreResult<DMatrix<f64>> {
        let n = self.system.base_dim();
        match &self.kind {
            ConnKind::FullRank { s, tol, delta } => {
                let frame = CanonicalFullRankFrame::from_phase_point(
                    s,
                    self.system.clone(),
                    z,
                    0.0,
                    *delta,
                    *tol,
                )?;
                let mut basis = DMatrix::zeros(2 * n, n);
                for b in 0..n {
                    let f = frame.f_field(b).value(0.0)?;
                    basis.set_column(b, &f);
                }
                Ok(basis)
            }
            ConnKind::Symbolic { f_all, m } => {
                let vals = f_all.eval_vec(z);
                let mut basis = DMatrix::zeros(2 * n, *m);
                for b in 0..*m {
                    for r in 0..2 * n {
                        basis[(r, b)] = vals[b * 2 * n + r];
                    }
                }
                Ok(basis)
            }
        }
    }

    /// The horizontal lift at `z` of a tangent vector of the base.
    pub fn lift_vector(&self, z: &[f64], v: &DVector<f64>) -> CoreResult<DVector<f64>> {
        let n = self.system.base_dim();
        if v.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "expected a base vector of length {n}, found {}",
                v.len()
            )));
        }
        let basis = self.horizontal_basis(z)?;
        let proj = basis.rows(n, n).clone_owned();
        let coeffs = proj
            .lu()
            .solve(v)
            .ok_or_else(|| {
                CoreError::Numeric(
                    "horizontal basis does not project onto the requested vector".into(),
                )
            })?;
        Ok(&basis * coeffs)
    }

    /// The lift of a base vector field, evaluated at a phase point.
    pub fn lift_field_at(&self, z: &[f64], xf: &VectorField) -> CoreResult<DVector<f64>> {
        let n = self.system.base_dim();
        let v = DVector::from_column_slice(&xf.eval(&z[n..2 * n])?);
        self.lift_vector(z, &v)
    }
}

/// Richardson-extrapolated central difference of `f` at `z` along `w`.
fn directional_derivative(
    f: &dyn Fn(&[f64]) -> CoreResult<DVector<f64>>,
    z: &[f64],
    w: &DVector<f64>,
    h: f64,
) -> CoreResult<DVector<f64>> {
    let eval = |step: f64| -> CoreResult<DVector<f64>> {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        for i in 0..z.len() {
            zp[i] += step * w[i];
            zm[i] -= step * w[i];
        }
        Ok((f(&zp)? - f(&zm)?) / (2.0 * step))
    };
    let d_h = eval(h)?;
    let d_h2 = eval(0.5 * h)?;
    Ok((d_h2 * 4.0 - d_h) / 3.0)
}

/// The connection curvature `R(X, Y)(z) = [lift X, lift Y](z) -
/// lift([X, Y])(z)`, a vertical phase vector. Brackets of lifts are formed
/// by finite differences of the lift fields along each other.
pub fn connection_curvature(
    conn: &Connection,
    z: &[f64],
    xf: &VectorField,
    yf: &VectorField,
    h: f64,
) -> CoreResult<DVector<f64>> {
    let lift_x = |zz: &[f64]| conn.lift_field_at(zz, xf);
    let lift_y = |zz: &[f64]| conn.lift_field_at(zz, yf);
    let lx = lift_x(z)?;
    let ly = lift_y(z)?;
    let dy_along_x = directional_derivative(&lift_y, z, &lx, h)?;
    let dx_along_y = directional_derivative(&lift_x, z, &ly, h)?;
    let bracket = dy_along_x - dx_along_y;
    let xy = xf.lie_bracket(yf)?;
    Ok(bracket - conn.lift_field_at(z, &xy)?)
}

/// The geodesic field of the constant-covector section through `z`: the
/// base projection of the flow generator with the momenta frozen at their
/// values at `z`.
pub fn section_tangent_field(system: &PhaseSystem, z: &[f64]) -> CoreResult<VectorField> {
    let n = system.base_dim();
    let phase_names: Vec<String> = system.phase_chart().names().to_vec();
    let comps: Vec<Expr> = system.hvec_components()[n..2 * n]
        .iter()
        .map(|e| {
            e.subst(&|name| {
                phase_names[..n]
                    .iter()
                    .position(|p| p == name)
                    .map(|i| Expr::constant(z[i]))
            })
        })
        .collect();
    let base_chart = crate::chart::Chart::new(phase_names[n..2 * n].to_vec())?;
    Ok(VectorField::new(base_chart, comps)?)
}

/// Both sides of the curvature identity at one covector: the symplectic
/// pairing of the connection curvature against a lifted field, and the
/// metric-connection oracle for full-rank structures.
pub struct IdentitySample {
    /// `sigma(R(T, X), lift Y)` at `z`.
    pub connection_side: f64,
    /// `<p, Riem(T, X) Y>` from the Christoffel symbols.
    pub tensor_side: f64,
    /// Size of the base component of `R(T, X)` (should vanish).
    pub verticality_defect: f64,
}

/// Evaluate both sides of the identity relating the canonical curvature to
/// the connection curvature, on a full-rank structure at a single covector,
/// against base fields `X` and `Y`.
pub fn curvature_identity_sample(
    s: &SRStructure,
    conn: &Connection,
    z: &[f64],
    xf: &VectorField,
    yf: &VectorField,
    h: f64,
) -> CoreResult<IdentitySample> {
    let n = conn.system().base_dim();
    let tf = section_tangent_field(conn.system(), z)?;
    let r_tx = connection_curvature(conn, z, &tf, xf, h)?;
    let mut verticality_defect: f64 = 0.0;
    for k in 0..n {
        verticality_defect = verticality_defect.max(r_tx[n + k].abs());
    }
    let lift_y = conn.lift_field_at(z, yf)?;
    let connection_side = pairing(&r_tx, &lift_y);

    let rd = RiemannData::new(s)?;
    let x = &z[n..2 * n];
    let tv = DVector::from_column_slice(&tf.eval(x)?);
    let xv = DVector::from_column_slice(&xf.eval(x)?);
    let yv = DVector::from_column_slice(&yf.eval(x)?);
    let riem = rd.curvature_apply(x, &tv, &xv, &yv);
    let mut tensor_side = 0.0;
    for m in 0..n {
        tensor_side += z[m] * riem[m];
    }
    Ok(IdentitySample { connection_side, tensor_side, verticality_defect })
}

/// Max of `|dH(lift)|` over the horizontal basis at `z`: the Hamiltonian is
/// constant along every horizontal direction.
pub fn hamiltonian_horizontality_defect(conn: &Connection, z: &[f64]) -> CoreResult<f64> {
    let system = conn.system();
    let names: Vec<String> = system.phase_chart().names().to_vec();
    let grads: Vec<Expr> = names.iter().map(|v| system.hamiltonian().diff(v)).collect();
    let grad = CompiledExpr::compile(&grads, &names)?;
    let gvals = grad.eval_vec(z);
    let basis = conn.horizontal_basis(z)?;
    let mut worst: f64 = 0.0;
    for b in 0..basis.ncols() {
        let mut acc = 0.0;
        for r in 0..basis.nrows() {
            acc += gvals[r] * basis[(r, b)];
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

/// Closed-form horizontal lift of the metric connection: position block
/// `v`, momentum block `dp_k = Gamma^m_{ki} p_m v^i`.
pub fn metric_connection_lift(
    rd: &RiemannData,
    z: &[f64],
    v: &DVector<f64>,
) -> DVector<f64> {
    let n = rd.dim();
    let gamma = rd.christoffel_at(&z[n..2 * n]);
    let mut out = DVector::zeros(2 * n);
    for k in 0..n {
        let mut acc = 0.0;
        for m in 0..n {
            for i in 0..n {
                acc += gamma[(m * n + k) * n + i] * z[m] * v[i];
            }
        }
        out[k] = acc;
        out[n + k] = v[k];
    }
    out
}

/// Compare the frame-based lift with the closed-form metric-connection lift
/// over the coordinate directions at `z`; returns the largest entrywise
/// deviation.
pub fn compare_lift_with_metric_connection(
    s: &SRStructure,
    conn: &Connection,
    z: &[f64],
) -> CoreResult<f64> {
    let rd = RiemannData::new(s)?;
    let n = rd.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        let a = conn.lift_vector(z, &v)?;
        let b = metric_connection_lift(&rd, z, &v);
        worst = worst.max((a - b).abs().max());
    }
    Ok(worst)
}

/// Verify along one extremal that the horizontal space built by the
/// short-extremal rule is flow-invariant data: the flow generator itself is
/// horizontal. Returns the largest residual of expanding the generator in
/// the horizontal basis.
pub fn generator_horizontality_defect(
    conn: &Connection,
    ext: &Extremal,
    ts: &[f64],
) -> CoreResult<f64> {
    let n = ext.base_dim();
    let mut worst: f64 = 0.0;
    for &t in ts {
        let z = ext.state_at(t)?;
        let hv = ext.hamiltonian_vector(z.as_slice());
        let v = DVector::from_column_slice(&hv.as_slice()[n..2 * n]);
        let lifted = conn.lift_vector(z.as_slice(), &v)?;
        worst = worst.max((lifted - hv).abs().max());
    }
    Ok(worst)
}
