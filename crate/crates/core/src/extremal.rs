//! Normal extremals: the Hamiltonian phase flow integrated together with its
//! variational (linearized) flow, plus the flow-derivative machinery used to
//! differentiate vector fields along an extremal.
//!
//! The augmented state is `[z, M]` with `z = (p, x)` of length 2n and `M` the
//! 2n x 2n variational matrix in row-major order, solving `dM/dt = DH(z) M`
//! from the identity. Short-time transition maps between nearby times are
//! always obtained from local re-integrations (never by inverting the global
//! variational matrix, whose condition number grows like its norm squared).

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::expr::CompiledExpr;
use crate::field::VectorField;
use crate::ham::PhaseSystem;
use crate::ode::{self, OdeSolution, OdeSystem};
use crate::structure::SRStructure;

/// Right-hand side of the augmented (phase + variational) system.
pub(crate) struct FlowSys {
    hvec: CompiledExpr,
    jac: CompiledExpr,
    n2: usize,
    stack: RefCell<Vec<f64>>,
    jbuf: RefCell<Vec<f64>>,
}

impl FlowSys {
    fn new(system: &PhaseSystem) -> CoreResult<FlowSys> {
        let n2 = 2 * system.base_dim();
        Ok(FlowSys {
            hvec: system.compile_hvec()?,
            jac: system.compile_jacobian()?,
            n2,
            stack: RefCell::new(Vec::new()),
            jbuf: RefCell::new(vec![0.0; n2 * n2]),
        })
    }
}

impl OdeSystem for FlowSys {
    fn dim(&self) -> usize {
        self.n2 + self.n2 * self.n2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n2 = self.n2;
        let mut stack = self.stack.borrow_mut();
        self.hvec.eval_into(&y[..n2], &mut dy[..n2], &mut stack);
        let mut jbuf = self.jbuf.borrow_mut();
        self.jac.eval_into(&y[..n2], &mut jbuf, &mut stack);
        // dM = J * M, all row-major.
        for r in 0..n2 {
            for c in 0..n2 {
                let mut acc = 0.0;
                for m in 0..n2 {
                    acc += jbuf[r * n2 + m] * y[n2 + m * n2 + c];
                }
                dy[n2 + r * n2 + c] = acc;
            }
        }
    }
}

/// A vector field defined along one extremal, evaluated in phase coordinates.
pub trait FieldAlong {
    fn phase_dim(&self) -> usize;
    fn value(&self, t: f64) -> CoreResult<DVector<f64>>;
    /// Batched evaluation. Implementations backed by a stored trajectory
    /// should override this with a single continuation pass so that nearby
    /// query values share one re-integration anchor; difference quotients of
    /// the results then see only the fine-tolerance noise.
    fn values(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        ts.iter().map(|&t| self.value(t)).collect()
    }
}

/// An integrated normal extremal with its variational flow.
pub struct Extremal {
    system: Arc<PhaseSystem>,
    flow: FlowSys,
    sol: OdeSolution,
    tol: f64,
}

impl Extremal {
    /// Integrate from the phase point `z0 = (p, x)` over `[t0, t1]`.
    pub fn integrate(
        system: Arc<PhaseSystem>,
        z0: &[f64],
        t0: f64,
        t1: f64,
        tol: f64,
    ) -> CoreResult<Extremal> {
        let n2 = 2 * system.base_dim();
        if z0.len() != n2 {
            return Err(CoreError::InvalidInput(format!(
                "phase point has {} entries, expected {}",
                z0.len(),
                n2
            )));
        }
        let flow = FlowSys::new(&system)?;
        let mut y0 = vec![0.0; n2 + n2 * n2];
        y0[..n2].copy_from_slice(z0);
        for i in 0..n2 {
            y0[n2 + i * n2 + i] = 1.0;
        }
        let sol = ode::integrate(&flow, t0, &y0, t1, tol)?;
        Ok(Extremal { system, flow, sol, tol })
    }

    /// Convenience constructor: integrate from x0 with initial covector p0
    /// over `[0, t_end]`.
    pub fn from_structure(
        s: &SRStructure,
        x0: &[f64],
        p0: &[f64],
        t_end: f64,
        tol: f64,
    ) -> CoreResult<Extremal> {
        let system = Arc::new(PhaseSystem::new(s)?);
        let n = system.base_dim();
        if x0.len() != n || p0.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "x0/p0 must each have {n} entries"
            )));
        }
        let mut z0 = Vec::with_capacity(2 * n);
        z0.extend_from_slice(p0);
        z0.extend_from_slice(x0);
        Extremal::integrate(system, &z0, 0.0, t_end, tol)
    }

    pub fn system(&self) -> &Arc<PhaseSystem> {
        &self.system
    }

    pub fn base_dim(&self) -> usize {
        self.system.base_dim()
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.system.base_dim()
    }

    pub fn t_start(&self) -> f64 {
        self.sol.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn solution(&self) -> &OdeSolution {
        &self.sol
    }

    /// Raw augmented states `[z, M]` at the query times (re-integrated).
    pub fn full_at(&self, ts: &[f64]) -> CoreResult<Vec<Vec<f64>>> {
        Ok(self.sol.eval_precise(&self.flow, ts)?)
    }

    /// Phase states at the query times (re-integrated, shared anchor).
    pub fn states_at(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        let n2 = self.phase_dim();
        Ok(self
            .full_at(ts)?
            .into_iter()
            .map(|y| DVector::from_column_slice(&y[..n2]))
            .collect())
    }

    pub fn state_at(&self, t: f64) -> CoreResult<DVector<f64>> {
        Ok(self.states_at(&[t])?.pop().unwrap())
    }

    /// The variational matrix at time `t` (re-integrated).
    pub fn phi_at(&self, t: f64) -> CoreResult<DMatrix<f64>> {
        let n2 = self.phase_dim();
        let y = self.full_at(&[t])?.pop().unwrap();
        Ok(DMatrix::from_row_slice(n2, n2, &y[n2..]))
    }

    /// Interpolated phase state (export-grade accuracy).
    pub fn sample_state(&self, t: f64) -> CoreResult<DVector<f64>> {
        let n2 = self.phase_dim();
        let y = self.sol.sample(t)?;
        Ok(DVector::from_column_slice(&y[..n2]))
    }

    /// Interpolated variational matrix (export/scan-grade accuracy).
    pub fn sample_phi(&self, t: f64) -> CoreResult<DMatrix<f64>> {
        let n2 = self.phase_dim();
        let y = self.sol.sample(t)?;
        Ok(DMatrix::from_row_slice(n2, n2, &y[n2..]))
    }

    /// Evaluate the Hamiltonian vector field at an explicit phase point.
    pub fn hamiltonian_vector(&self, z: &[f64]) -> DVector<f64> {
        let n2 = self.phase_dim();
        let mut out = vec![0.0; n2];
        let mut stack = self.flow.stack.borrow_mut();
        self.flow.hvec.eval_into(&z[..n2], &mut out, &mut stack);
        DVector::from_vec(out)
    }

    /// Transition map of the linearized flow from time `s` to time `t`,
    /// computed by a local re-integration seeded at the phase state of `s`.
    pub fn transition(&self, s: f64, t: f64) -> CoreResult<DMatrix<f64>> {
        let n2 = self.phase_dim();
        let zs = self.full_at(&[s])?.pop().unwrap();
        let mut y0 = vec![0.0; n2 + n2 * n2];
        y0[..n2].copy_from_slice(&zs[..n2]);
        for i in 0..n2 {
            y0[n2 + i * n2 + i] = 1.0;
        }
        let fine = (self.tol * 1e-2).max(1e-14);
        let y1 = ode::propagate(&self.flow, s, &y0, t, fine)?;
        Ok(DMatrix::from_row_slice(n2, n2, &y1[n2..]))
    }

    /// Lie derivative of `field` along the extremal flow at time `t`:
    /// a central difference of the flow-conjugated values, sharpened by one
    /// Richardson extrapolation step.
    pub fn flow_derivative(&self, field: &dyn FieldAlong, t: f64) -> CoreResult<DVector<f64>> {
        self.flow_derivative_eps(field, t, 1e-4)
    }

    pub fn flow_derivative_eps(
        &self,
        field: &dyn FieldAlong,
        t: f64,
        eps: f64,
    ) -> CoreResult<DVector<f64>> {
        let ts = [t - eps, t - 0.5 * eps, t + 0.5 * eps, t + eps];
        let vals = field.values(&ts)?;
        let mut conj = Vec::with_capacity(4);
        for (i, &s) in ts.iter().enumerate() {
            let tr = self.transition(s, t)?;
            conj.push(tr * &vals[i]);
        }
        let d_full = (&conj[3] - &conj[0]) / (2.0 * eps);
        let d_half = (&conj[2] - &conj[1]) / eps;
        Ok((d_half * 4.0 - d_full) / 3.0)
    }

    /// Jacobi field value J(t) = M(t) v0 for an initial variation v0.
    pub fn jacobi_value(&self, t: f64, v0: &DVector<f64>) -> CoreResult<DVector<f64>> {
        Ok(self.phi_at(t)? * v0)
    }

    /// Maximum drift of H over all accepted nodes (energy conservation).
    pub fn hamiltonian_drift(&self) -> CoreResult<f64> {
        let n2 = self.phase_dim();
        let h0 = self.system.eval_hamiltonian(&self.sol.nodes()[0].y[..n2])?;
        let mut worst = 0.0f64;
        for node in self.sol.nodes() {
            let h = self.system.eval_hamiltonian(&node.y[..n2])?;
            worst = worst.max((h - h0).abs());
        }
        Ok(worst)
    }

    /// Maximum symplecticity defect of the variational matrix over nodes.
    pub fn symplectic_defect_max(&self) -> f64 {
        let n2 = self.phase_dim();
        let mut worst = 0.0f64;
        for node in self.sol.nodes() {
            let m = DMatrix::from_row_slice(n2, n2, &node.y[n2..]);
            worst = worst.max(crate::symplectic::symplecticity_defect(&m));
        }
        worst
    }
}

/// A phase-space vector field restricted to an extremal: value(t) = V(z(t)).
pub struct PullbackField {
    ext: Arc<Extremal>,
    compiled: CompiledExpr,
}

impl PullbackField {
    pub fn new(ext: Arc<Extremal>, vf: &VectorField) -> CoreResult<PullbackField> {
        ext.system().phase_chart().check_same(vf.chart())?;
        let compiled = vf.compile()?;
        Ok(PullbackField { ext, compiled })
    }
}

impl FieldAlong for PullbackField {
    fn phase_dim(&self) -> usize {
        self.ext.phase_dim()
    }

    fn value(&self, t: f64) -> CoreResult<DVector<f64>> {
        Ok(self.values(&[t])?.pop().unwrap())
    }

    fn values(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        let n2 = self.ext.phase_dim();
        let states = self.ext.full_at(ts)?;
        let mut stack = Vec::new();
        let mut out = Vec::with_capacity(ts.len());
        for st in &states {
            let mut v = vec![0.0; n2];
            self.compiled.eval_into(&st[..n2], &mut v, &mut stack);
            out.push(DVector::from_vec(v));
        }
        Ok(out)
    }
}

/// Check the dilation covariance of the flow: starting from (c p0, x0), the
/// trajectory at time t must equal the fiber dilation by c of the trajectory
/// from (p0, x0) at time c t. Returns the largest relative mismatch over a
/// uniform grid of `m` times in `[0, t_end / c]`.
pub fn check_flow_homogeneity(
    system: &Arc<PhaseSystem>,
    z0: &[f64],
    t_end: f64,
    c: f64,
    m: usize,
    tol: f64,
) -> CoreResult<f64> {
    if c <= 0.0 {
        return Err(CoreError::InvalidInput("dilation factor must be positive".into()));
    }
    let base = Extremal::integrate(system.clone(), z0, 0.0, t_end, tol)?;
    let scaled_z0 = system.dilate(z0, c);
    let scaled = Extremal::integrate(system.clone(), &scaled_z0, 0.0, t_end / c, tol)?;

    let grid: Vec<f64> = (0..m)
        .map(|i| t_end / c * i as f64 / (m.max(2) - 1) as f64)
        .collect();
    let fast: Vec<f64> = grid.iter().map(|&t| c * t).collect();
    let a = base.states_at(&fast)?;
    let b = scaled.states_at(&grid)?;
    let mut worst = 0.0f64;
    for (ai, bi) in a.iter().zip(&b) {
        let expected = DVector::from_vec(system.dilate(ai.as_slice(), c));
        let scale = 1.0 + expected.amax();
        worst = worst.max((bi - &expected).amax() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::parse_structure;

    fn heisenberg() -> SRStructure {
        parse_structure("dim 3\nvars x y z\nfield X1 : 1, 0, -y/2\nfield X2 : 0, 1, x/2\n")
            .unwrap()
    }

    fn euclidean3() -> SRStructure {
        parse_structure(
            "dim 3\nvars x y z\nfield X1 : 1, 0, 0\nfield X2 : 0, 1, 0\nfield X3 : 0, 0, 1\n",
        )
        .unwrap()
    }

    #[test]
    fn euclidean_extremals_are_straight_lines_with_explicit_variational_matrix() {
        let ext =
            Extremal::from_structure(&euclidean3(), &[1.0, 2.0, 3.0], &[0.5, -1.0, 0.25], 4.0, 1e-11)
                .unwrap();
        let z = ext.state_at(3.0).unwrap();
        // p constant, x = x0 + t p
        assert!((z[0] - 0.5).abs() < 1e-10);
        assert!((z[3] - (1.0 + 3.0 * 0.5)).abs() < 1e-9);
        let phi = ext.phi_at(3.0).unwrap();
        // variational matrix [[I, 0], [tI, I]] in (p, x) blocks
        for r in 0..6 {
            for c in 0..6 {
                let expected = if r == c {
                    1.0
                } else if r >= 3 && c == r - 3 {
                    3.0
                } else {
                    0.0
                };
                assert!((phi[(r, c)] - expected).abs() < 1e-9, "({r},{c})");
            }
        }
    }

    #[test]
    fn energy_and_symplecticity_are_preserved_on_heisenberg() {
        let ext =
            Extremal::from_structure(&heisenberg(), &[0.1, -0.2, 0.0], &[1.0, 0.5, 2.0], 5.0, 1e-11)
                .unwrap();
        assert!(ext.hamiltonian_drift().unwrap() < 1e-9);
        assert!(ext.symplectic_defect_max() < 1e-7);
    }

    #[test]
    fn transition_matches_variational_quotient_on_short_spans() {
        let ext =
            Extremal::from_structure(&heisenberg(), &[0.0, 0.0, 0.0], &[1.0, 0.0, 1.5], 1.0, 1e-11)
                .unwrap();
        let tr = ext.transition(0.3, 0.5).unwrap();
        let phi_s = ext.phi_at(0.3).unwrap();
        let phi_t = ext.phi_at(0.5).unwrap();
        let quot = phi_t * phi_s.try_inverse().unwrap();
        assert!((tr - quot).amax() < 1e-8);
    }

    #[test]
    fn flow_derivative_of_the_hamiltonian_field_vanishes() {
        let s = heisenberg();
        let ext = Arc::new(
            Extremal::from_structure(&s, &[0.2, 0.1, 0.0], &[0.8, -0.3, 1.2], 2.0, 1e-11).unwrap(),
        );
        let hfield = ext.system().hamiltonian_field();
        let pf = PullbackField::new(ext.clone(), &hfield).unwrap();
        for &t in &[0.3, 1.0, 1.7] {
            let dot = ext.flow_derivative(&pf, t).unwrap();
            assert!(dot.amax() < 1e-7, "t={t}: {}", dot.amax());
        }
    }

    #[test]
    fn flow_derivative_of_the_fiber_dilation_generator_is_minus_the_flow_field() {
        let s = heisenberg();
        let ext = Arc::new(
            Extremal::from_structure(&s, &[0.0, 0.0, 0.0], &[1.0, 0.4, 0.9], 2.0, 1e-11).unwrap(),
        );
        let euler = ext.system().euler_field();
        let pf = PullbackField::new(ext.clone(), &euler).unwrap();
        for &t in &[0.25, 1.1, 1.9] {
            let dot = ext.flow_derivative(&pf, t).unwrap();
            let z = ext.state_at(t).unwrap();
            let hv = ext.hamiltonian_vector(z.as_slice());
            let resid = (dot + hv).amax();
            assert!(resid < 1e-7, "t={t}: {resid}");
        }
    }

    #[test]
    fn variational_matrix_matches_finite_difference_of_the_flow() {
        let s = heisenberg();
        let sys = Arc::new(PhaseSystem::new(&s).unwrap());
        let z0 = [0.7, -0.1, 0.6, 0.05, -0.3, 0.2];
        let ext = Extremal::integrate(sys.clone(), &z0, 0.0, 2.0, 1e-12).unwrap();
        let phi = ext.phi_at(2.0).unwrap();
        let v0 = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6]);
        let delta = 1e-5;
        let mut zp = z0.to_vec();
        let mut zm = z0.to_vec();
        for i in 0..6 {
            zp[i] += delta * v0[i];
            zm[i] -= delta * v0[i];
        }
        let ep = Extremal::integrate(sys.clone(), &zp, 0.0, 2.0, 1e-12).unwrap();
        let em = Extremal::integrate(sys, &zm, 0.0, 2.0, 1e-12).unwrap();
        let fd = (ep.state_at(2.0).unwrap() - em.state_at(2.0).unwrap()) / (2.0 * delta);
        let jv = phi * v0;
        assert!((fd - jv).amax() < 1e-5);
    }

    #[test]
    fn flow_homogeneity_holds_for_euclidean_and_heisenberg() {
        for (s, bound) in [(euclidean3(), 1e-8), (heisenberg(), 1e-7)] {
            let sys = Arc::new(PhaseSystem::new(&s).unwrap());
            let z0 = [0.9, 0.2, -0.4, 0.1, 0.0, 0.3];
            for c in [0.5, 2.0] {
                let r = check_flow_homogeneity(&sys, &z0, 2.0, c, 17, 1e-11).unwrap();
                assert!(r < bound, "c={c}: {r}");
            }
        }
    }
}
