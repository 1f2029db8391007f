//! The canonical symplectic pairing on phase vectors in (p, x) block order.
//!
//! With the Liouville form theta = sum p_i dx_i and sigma = d(theta),
//! sigma(u, v) = <u_p, v_x> - <u_x, v_p>. In matrix form sigma(u,v) = u^T J v
//! with J = [[0, I], [-I, 0]] on (p, x) blocks.

use nalgebra::{DMatrix, DVector};

/// sigma(u, v) for phase vectors of length 2n in (p, x) block order.
pub fn pairing(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n2 = u.len();
    debug_assert_eq!(n2 % 2, 0);
    debug_assert_eq!(v.len(), n2);
    let n = n2 / 2;
    let mut s = 0.0;
    for i in 0..n {
        s += u[i] * v[n + i] - u[n + i] * v[i];
    }
    s
}

/// The matrix J with sigma(u,v) = u^T J v.
pub fn canonical_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Defect ||Phi^T J Phi - J||_inf; zero for exact linearized Hamiltonian flow.
pub fn symplecticity_defect(phi: &DMatrix<f64>) -> f64 {
    let n = phi.nrows() / 2;
    let j = canonical_matrix(n);
    let m = phi.transpose() * &j * phi - j;
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_matches_matrix_form() {
        let n = 3;
        let j = canonical_matrix(n);
        let u = DVector::from_fn(2 * n, |i, _| (i as f64 * 0.37).sin());
        let v = DVector::from_fn(2 * n, |i, _| (i as f64 * 0.91).cos());
        let via_matrix = (u.transpose() * &j * &v)[(0, 0)];
        assert!((pairing(&u, &v) - via_matrix).abs() < 1e-14);
    }

    #[test]
    fn pairing_is_antisymmetric_and_nondegenerate_on_basis() {
        let n = 2;
        let dim = 2 * n;
        for i in 0..dim {
            for k in 0..dim {
                let ei = DVector::from_fn(dim, |j, _| (j == i) as u8 as f64);
                let ek = DVector::from_fn(dim, |j, _| (j == k) as u8 as f64);
                let s = pairing(&ei, &ek);
                assert_eq!(s, -pairing(&ek, &ei));
                // sigma(dp_i, dx_i-direction) = 1
                if k == i + n {
                    assert_eq!(s, 1.0);
                }
            }
        }
    }
}
