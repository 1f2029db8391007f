//! Jacobi fields along extremals, two ways, and conjugate points.
//!
//! The variational flow of the Hamiltonian system propagates tangent vectors
//! of the phase space; the base projection of such a vector field along an
//! extremal is a Jacobi field. On a full-rank structure the same fields
//! solve the classical second-order equation driven by the Christoffel
//! symbols, which gives an independent route for cross-validation:
//!
//! ```text
//! J''^k + 2 Gamma^k_{ij} x'^i J'^j + d_l Gamma^k_{ij} J^l x'^i x'^j = 0
//! ```
//!
//! Conjugate times are located as sign changes of the determinant of the
//! momentum-to-position block of the variational flow.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, CoreResult};
use crate::expr::CompiledExpr;
use crate::extremal::Extremal;
use crate::frame::{CanonicalFullRankFrame, DarbouxFrame};
use crate::ode::{self, OdeSystem};
use crate::riemann::RiemannData;
use crate::structure::SRStructure;

/// Augmented system `[z, J, J']`: the phase flow together with the classical
/// Jacobi equation along its base projection.
struct ClassicalJacobiSys {
    hvec: CompiledExpr,
    riemann: Arc<RiemannData>,
    n: usize,
    stack: RefCell<Vec<f64>>,
    gbuf: RefCell<Vec<f64>>,
    dgbuf: RefCell<Vec<f64>>,
}

impl OdeSystem for ClassicalJacobiSys {
    fn dim(&self) -> usize {
        4 * self.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let mut stack = self.stack.borrow_mut();
        self.hvec.eval_into(&y[..2 * n], &mut dy[..2 * n], &mut stack);
        let mut gbuf = self.gbuf.borrow_mut();
        let mut dgbuf = self.dgbuf.borrow_mut();
        let x = &y[n..2 * n];
        self.riemann.christoffel_compiled().eval_into(x, &mut gbuf, &mut stack);
        self.riemann
            .christoffel_derivative_compiled()
            .eval_into(x, &mut dgbuf, &mut stack);
        let (jf, jd) = (&y[2 * n..3 * n], &y[3 * n..4 * n]);
        for k in 0..n {
            dy[2 * n + k] = jd[k];
            let mut acc = 0.0;
            for i in 0..n {
                let xi = dy[n + i];
                for j in 0..n {
                    let xj = dy[n + j];
                    acc += 2.0 * gbuf[(k * n + i) * n + j] * xi * jd[j];
                    for l in 0..n {
                        acc += dgbuf[((l * n + k) * n + i) * n + j] * jf[l] * xi * xj;
                    }
                }
            }
            dy[3 * n + k] = -acc;
        }
    }
}

/// A Jacobi field computed by integrating the classical second-order
/// equation along the extremal.
pub struct ClassicalJacobi {
    sys: ClassicalJacobiSys,
    sol: ode::OdeSolution,
    n: usize,
}

impl ClassicalJacobi {
    /// Integrate the classical equation with the initial data induced by a
    /// phase-space tangent vector `v0`: the field starts at the position
    /// block of `v0` and its derivative is the position block of the
    /// linearized generator applied to `v0`.
    pub fn new(s: &SRStructure, ext: &Extremal, v0: &DVector<f64>) -> CoreResult<ClassicalJacobi> {
        let n = ext.base_dim();
        if v0.len() != 2 * n {
            return Err(CoreError::InvalidInput(format!(
                "expected a phase tangent vector of length {}, found {}",
                2 * n,
                v0.len()
            )));
        }
        let riemann = Arc::new(RiemannData::new(s)?);
        let system = ext.system();
        let z0 = ext.state_at(ext.t_start())?;

        // J'(0) = position block of D(flow generator) v0
        let jac_prog = system.compile_jacobian()?;
        let jac_flat = jac_prog.eval_vec(z0.as_slice());
        let dh = DMatrix::from_row_slice(2 * n, 2 * n, &jac_flat);
        let v_dot = &dh * v0;

        let mut y0 = vec![0.0; 4 * n];
        y0[..2 * n].copy_from_slice(z0.as_slice());
        for k in 0..n {
            y0[2 * n + k] = v0[n + k];
            y0[3 * n + k] = v_dot[n + k];
        }
        let sys = ClassicalJacobiSys {
            hvec: system.compile_hvec()?,
            riemann,
            n,
            stack: RefCell::new(Vec::new()),
            gbuf: RefCell::new(vec![0.0; n * n * n]),
            dgbuf: RefCell::new(vec![0.0; n * n * n * n]),
        };
        let sol = ode::integrate(&sys, ext.t_start(), &y0, ext.t_end(), ext.tol())?;
        Ok(ClassicalJacobi { sys, sol, n })
    }

    /// Field values at the query times.
    pub fn values(&self, ts: &[f64]) -> CoreResult<Vec<DVector<f64>>> {
        let states = self.sol.eval_precise(&self.sys, ts)?;
        Ok(states
            .iter()
            .map(|y| DVector::from_column_slice(&y[2 * self.n..3 * self.n]))
            .collect())
    }
}

/// Sup over a uniform grid of the deviation between the classical Jacobi
/// field and the position block of the variational flow applied to `v0`.
pub fn compare_jacobi_routes(
    s: &SRStructure,
    ext: &Extremal,
    v0: &DVector<f64>,
    samples: usize,
) -> CoreResult<f64> {
    let n = ext.base_dim();
    let classical = ClassicalJacobi::new(s, ext, v0)?;
    let m = samples.max(2);
    let ts: Vec<f64> = (0..m)
        .map(|k| {
            ext.t_start() + (ext.t_end() - ext.t_start()) * (k as f64) / ((m - 1) as f64)
        })
        .collect();
    let cls = classical.values(&ts)?;
    let mut worst: f64 = 0.0;
    for (k, &t) in ts.iter().enumerate() {
        let sym = ext.jacobi_value(t, v0)?;
        for i in 0..n {
            worst = worst.max((cls[k][i] - sym[n + i]).abs());
        }
    }
    Ok(worst)
}

/// Residual of the reduced curvature equation `a'' + R a = 0` for the
/// coordinates `a = C^{-1} J` of a variational Jacobi field in the
/// transported frame `C` of a full-rank canonical frame. The second
/// derivative is formed by a five-point stencil of width `h`.
pub fn parallel_frame_residual(
    frame: &CanonicalFullRankFrame,
    v0: &DVector<f64>,
    ts: &[f64],
    h: f64,
) -> CoreResult<f64> {
    let ext = frame.extremal();
    let n = ext.base_dim();
    let coeff = |t: f64| -> CoreResult<DVector<f64>> {
        let j = ext.jacobi_value(t, v0)?;
        let jx = DVector::from_column_slice(&j.as_slice()[n..2 * n]);
        let c = frame.parallel_frame_at(t)?;
        c.lu()
            .solve(&jx)
            .ok_or_else(|| CoreError::Numeric("transported frame is singular".into()))
    };
    let mut worst: f64 = 0.0;
    for &t in ts {
        let am2 = coeff(t - 2.0 * h)?;
        let am1 = coeff(t - h)?;
        let a0 = coeff(t)?;
        let ap1 = coeff(t + h)?;
        let ap2 = coeff(t + 2.0 * h)?;
        let second =
            (-&ap2 + &ap1 * 16.0 - &a0 * 30.0 + &am1 * 16.0 - &am2) / (12.0 * h * h);

        let (x, v) = frame.point_and_velocity(t)?;
        let cols = frame.parallel_frame_at(t)?;
        let r = frame.riemann().directional_curvature(&x, &v, &cols);
        worst = worst.max((second + r * a0).abs().max());
    }
    Ok(worst)
}

/// Search data for conjugate points: the determinant of the
/// momentum-to-position block of the variational flow on the scan grid, and
/// the refined sign-change times.
pub struct ConjugateScan {
    pub times: Vec<f64>,
    pub grid: Vec<(f64, f64)>,
}

fn xp_det(ext: &Extremal, phi: &DMatrix<f64>) -> f64 {
    let n = ext.base_dim();
    let mut block = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] = phi[(n + i, j)];
        }
    }
    block.determinant()
}

/// Locate the zeros of `det` of the momentum-to-position block of the
/// variational flow in `(t_start, t_end]` by a sign-change scan over
/// `samples` points followed by bisection to absolute time accuracy
/// `tol_t`. Zeros of even multiplicity produce no sign change and are not
/// reported.
pub fn conjugate_times(ext: &Extremal, samples: usize, tol_t: f64) -> CoreResult<ConjugateScan> {
    let m = samples.max(8);
    let (t0, t1) = (ext.t_start(), ext.t_end());
    // the block vanishes identically at the start time, so begin slightly in
    let lead = (t1 - t0) * 1e-3;
    let mut grid = Vec::with_capacity(m);
    for k in 0..m {
        let t = t0 + lead + (t1 - t0 - lead) * (k as f64) / ((m - 1) as f64);
        let d = xp_det(ext, &ext.sample_phi(t)?);
        grid.push((t, d));
    }
    let mut times = Vec::new();
    for w in 1..m {
        let (ta, da) = grid[w - 1];
        let (tb, db) = grid[w];
        if da == 0.0 {
            continue;
        }
        if da.signum() * db.signum() < 0.0 || (db == 0.0 && w == m - 1) {
            let (mut lo, mut hi, mut dlo) = (ta, tb, da);
            while hi - lo > tol_t.max(1e-13) {
                let mid = 0.5 * (lo + hi);
                let dm = xp_det(ext, &ext.phi_at(mid)?);
                if dm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if dlo.signum() * dm.signum() < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    dlo = dm;
                }
            }
            times.push(0.5 * (lo + hi));
        }
    }
    Ok(ConjugateScan { times, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ham::PhaseSystem;
    use crate::structure::parse_structure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere() -> SRStructure {
        parse_structure(
            "dim 2\nvars theta phi\nfield E1 : 1, 0\nfield E2 : 0, 1/sin(theta)\n",
        )
        .unwrap()
    }

    fn half_plane() -> SRStructure {
        parse_structure("dim 2\nvars x y\nfield E1 : y, 0\nfield E2 : 0, y\n").unwrap()
    }

    fn euclidean3() -> SRStructure {
        parse_structure(
            "dim 3\nvars x y z\nfield E1 : 1, 0, 0\nfield E2 : 0, 1, 0\nfield E3 : 0, 0, 1\n",
        )
        .unwrap()
    }

    #[test]
    fn flat_jacobi_fields_are_affine_in_time() {
        let s = euclidean3();
        let ext =
            Extremal::from_structure(&s, &[0.1, -0.3, 0.2], &[0.5, 0.2, -0.4], 3.0, 1e-11)
                .unwrap();
        let v0 = DVector::from_column_slice(&[0.3, -0.7, 0.2, 1.0, 0.4, -0.2]);
        let classical = ClassicalJacobi::new(&s, &ext, &v0).unwrap();
        let ts = [0.0, 0.7, 1.9, 3.0];
        let vals = classical.values(&ts).unwrap();
        // flat space: J(t) = J(0) + t dp (momentum block of v0 drives the
        // velocity variation; the generator is [[0, 0], [I, 0]])
        for (k, &t) in ts.iter().enumerate() {
            for i in 0..3 {
                let expected = v0[3 + i] + t * v0[i];
                assert!((vals[k][i] - expected).abs() < 1e-9);
            }
        }
        let dev = compare_jacobi_routes(&s, &ext, &v0, 25).unwrap();
        assert!(dev < 1e-9, "flat deviation {dev}");
    }

    #[test]
    fn classical_and_variational_jacobi_agree_on_curved_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (s, x0, p0) in [
            (sphere(), [1.2, 0.3], [0.4, 0.8]),
            (half_plane(), [0.2, 1.0], [0.7, -0.3]),
        ] {
            let ext = Extremal::from_structure(&s, &x0, &p0, 5.0, 1e-11).unwrap();
            for _ in 0..3 {
                let v0 = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                let dev = compare_jacobi_routes(&s, &ext, &v0, 40).unwrap();
                assert!(dev < 1e-6, "routes disagree by {dev}");
            }
        }
    }

    #[test]
    fn transported_coordinates_satisfy_reduced_curvature_equation() {
        let s = sphere();
        let frame =
            CanonicalFullRankFrame::new(&s, &[1.2, 0.3], &[0.4, 0.8], 3.0, 1e-11).unwrap();
        let v0 = DVector::from_column_slice(&[0.6, -0.2, 0.3, 0.5]);
        let resid =
            parallel_frame_residual(&frame, &v0, &[0.5, 1.2, 2.1], 1e-2).unwrap();
        assert!(resid < 1e-4, "reduced equation residual {resid}");
    }

    #[test]
    fn sphere_equator_has_conjugate_time_pi() {
        let s = sphere();
        let ext = Extremal::from_structure(
            &s,
            &[std::f64::consts::FRAC_PI_2, 0.0],
            &[0.0, 1.0],
            4.0,
            1e-11,
        )
        .unwrap();
        let scan = conjugate_times(&ext, 160, 1e-10).unwrap();
        assert_eq!(scan.times.len(), 1, "times: {:?}", scan.times);
        assert!(
            (scan.times[0] - std::f64::consts::PI).abs() < 1e-8,
            "first conjugate time {}",
            scan.times[0]
        );
    }

    #[test]
    fn flat_and_hyperbolic_scans_find_no_conjugate_points() {
        let s = euclidean3();
        let ext =
            Extremal::from_structure(&s, &[0.0, 0.0, 0.0], &[0.4, 0.1, -0.2], 4.0, 1e-10)
                .unwrap();
        assert!(conjugate_times(&ext, 80, 1e-9).unwrap().times.is_empty());

        let s = half_plane();
        let ext = Extremal::from_structure(&s, &[0.0, 1.0], &[1.0, 0.0], 4.0, 1e-10).unwrap();
        assert!(conjugate_times(&ext, 80, 1e-9).unwrap().times.is_empty());
    }

    #[test]
    fn rejects_wrong_tangent_dimension() {
        let s = sphere();
        let ext = Extremal::from_structure(&s, &[1.2, 0.3], &[0.4, 0.8], 1.0, 1e-10).unwrap();
        let sys = PhaseSystem::new(&s).unwrap();
        let _ = sys;
        let bad = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        assert!(ClassicalJacobi::new(&s, &ext, &bad).is_err());
    }
}
