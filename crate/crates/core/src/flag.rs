//! The flag of a geodesic: iterated Lie derivatives of the distribution
//! along an admissible extension of the velocity field, growth vectors, and
//! the resulting Young diagram.
//!
//! The extension is built deterministically from jets. Writing the velocity
//! in the frame as coefficients h_i(t), we look for a field `T = sum_i
//! u_i(x) X_i` whose coefficients depend on position only through the scalar
//! `s(x) = <w, x - q>` for a covector `w` normalized against the velocity.
//! Matching `u_i(gamma(t)) = h_i(t)` to high jet order at the base time
//! reduces to a univariate power-series inversion and composition, carried
//! out with exact symbolic time derivatives along the flow.

use nalgebra::DMatrix;

use crate::error::{CoreError, CoreResult};
use crate::expr::Expr;
use crate::extremal::Extremal;
use crate::field::VectorField;
use crate::ham::PhaseSystem;
use crate::structure::SRStructure;
use crate::young::YoungDiagram;

#[derive(Debug, Clone)]
pub struct FlagOptions {
    /// Cap on the number of flag steps; 0 means the ambient dimension.
    pub max_order: usize,
    /// Relative singular-value threshold for rank decisions.
    pub rank_rel_tol: f64,
    /// Minimum ratio between the smallest kept and largest dropped singular
    /// value; anything closer is reported as indeterminate instead of being
    /// silently rounded.
    pub gap_factor: f64,
    /// Optional covector defining the extension; must pair non-trivially
    /// with the velocity. Defaults to the velocity itself.
    pub witness: Option<Vec<f64>>,
}

impl Default for FlagOptions {
    fn default() -> Self {
        FlagOptions { max_order: 0, rank_rel_tol: 1e-8, gap_factor: 10.0, witness: None }
    }
}

#[derive(Debug, Clone)]
pub struct FlagResult {
    pub t: f64,
    /// Dimensions of the flag spaces, strictly increasing.
    pub growth: Vec<usize>,
    /// Successive jumps of `growth`.
    pub jumps: Vec<usize>,
    pub diagram: YoungDiagram,
    /// Whether the flag reaches the full tangent space.
    pub ample: bool,
    /// Singular values of the span matrices, one list per flag order.
    pub singular_values: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// truncated power-series helpers (index = power, inclusive degree cap)

fn series_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d + 1];
    for (i, &ai) in a.iter().enumerate().take(d + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(d + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// f(g(s)) truncated at degree d; requires g(0) = 0.
fn series_compose(f: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    assert!(g.first().map_or(true, |&g0| g0 == 0.0));
    let mut out = vec![0.0; d + 1];
    // Horner from the top coefficient down: out = f_d; out = out*g + f_j
    for j in (0..=d).rev() {
        out = series_mul(&out, g, d);
        out[0] += f.get(j).copied().unwrap_or(0.0);
    }
    out
}

/// Compositional inverse of s = sigma(tau), sigma(0) = 0, sigma'(0) != 0.
fn series_invert(sigma: &[f64], d: usize) -> CoreResult<Vec<f64>> {
    let s1 = sigma.get(1).copied().unwrap_or(0.0);
    if s1.abs() < 1e-14 {
        return Err(CoreError::Numeric(
            "series inversion needs a non-vanishing linear coefficient".into(),
        ));
    }
    let mut inv = vec![0.0; d + 1];
    inv[1] = 1.0 / s1;
    for m in 2..=d {
        // with inv[m] = 0, the composition sigma(inv(s)) has an excess
        // coefficient at degree m that a correction a_m * s1 s^m cancels
        let comp = series_compose(sigma, &inv, m);
        inv[m] = -comp[m] / s1;
    }
    Ok(inv)
}

// ---------------------------------------------------------------------------

/// Exact symbolic time derivatives of a phase function along the flow:
/// returns `[f, f', ..., f^{(order)}]` with `f' = sum_r df/dz_r Hvec_r`.
fn flow_derivative_exprs(sys: &PhaseSystem, f: &Expr, order: usize) -> Vec<Expr> {
    let chart = sys.phase_chart();
    let hvec = sys.hvec_components();
    let mut out = Vec::with_capacity(order + 1);
    out.push(f.clone());
    for _ in 0..order {
        let prev = out.last().unwrap();
        let terms: Vec<Expr> = (0..chart.dim())
            .map(|r| Expr::mul(prev.diff(chart.name(r)), hvec[r].clone()))
            .collect();
        out.push(Expr::sum(terms));
    }
    out
}

/// Numeric Taylor coefficients (around the base time) of a phase function
/// along the extremal through `z`: entry j is `f^{(j)}(z) / j!`.
fn taylor_along_flow(sys: &PhaseSystem, f: &Expr, z: &[f64], order: usize) -> CoreResult<Vec<f64>> {
    let chart = sys.phase_chart();
    let derivs = flow_derivative_exprs(sys, f, order);
    let mut fact = 1.0;
    let mut out = Vec::with_capacity(order + 1);
    for (j, e) in derivs.iter().enumerate() {
        if j > 0 {
            fact *= j as f64;
        }
        let v = e.eval(&|name| chart.index_of(name).map(|i| z[i]))?;
        out.push(v / fact);
    }
    Ok(out)
}

/// A polynomial in `s(x) = <w, x - q>` as a symbolic base-chart expression.
fn polynomial_in_witness(
    s: &SRStructure,
    coeffs: &[f64],
    w: &[f64],
    q: &[f64],
) -> Expr {
    let chart = s.chart();
    let mut svar_terms = Vec::new();
    for (m, &wm) in w.iter().enumerate() {
        if wm != 0.0 {
            svar_terms.push(Expr::mul(
                Expr::constant(wm),
                Expr::sum(vec![Expr::var(chart.name(m)), Expr::constant(-q[m])]),
            ));
        }
    }
    let svar = Expr::sum(svar_terms);
    // Horner
    let mut acc = Expr::constant(*coeffs.last().unwrap_or(&0.0));
    for &c in coeffs.iter().rev().skip(1) {
        acc = Expr::sum(vec![Expr::constant(c), Expr::mul(svar.clone(), acc)]);
    }
    acc
}

/// Build an admissible extension of the velocity of `ext` at time `t`: a
/// frame-valued field `T = sum_i u_i X_i` with `u_i` polynomial in
/// `<w, x - q>`, matching the velocity along the curve to jet order
/// `jet_order`. `witness` defaults to the velocity (Euclidean-normalized).
pub fn tangent_extension(
    s: &SRStructure,
    ext: &Extremal,
    t: f64,
    jet_order: usize,
    witness: Option<&[f64]>,
) -> CoreResult<VectorField> {
    let sys = ext.system();
    let n = s.dim();
    let z = ext.state_at(t)?;
    let q: Vec<f64> = z.as_slice()[n..2 * n].to_vec();
    let hv = ext.hamiltonian_vector(z.as_slice());
    let xdot: Vec<f64> = hv.as_slice()[n..2 * n].to_vec();
    let speed2: f64 = xdot.iter().map(|v| v * v).sum();
    if speed2.sqrt() < 1e-12 {
        return Err(CoreError::InvalidInput(
            "the curve has vanishing velocity at the base time; no extension exists".into(),
        ));
    }
    let w: Vec<f64> = match witness {
        None => xdot.iter().map(|v| v / speed2).collect(),
        Some(cand) => {
            if cand.len() != n {
                return Err(CoreError::InvalidInput(format!(
                    "witness covector must have {n} entries"
                )));
            }
            let pair: f64 = cand.iter().zip(&xdot).map(|(a, b)| a * b).sum();
            let scale = (cand.iter().map(|v| v * v).sum::<f64>() * speed2).sqrt();
            if pair.abs() < 1e-10 * scale.max(1e-30) {
                return Err(CoreError::InvalidInput(
                    "witness covector is orthogonal to the velocity".into(),
                ));
            }
            cand.iter().map(|v| v / pair).collect()
        }
    };

    let d = jet_order;
    // sigma(tau) = <w, x(t + tau) - q>, as a numeric series with sigma_0 = 0
    let chart = s.chart();
    let sw_expr = Expr::sum(
        (0..n)
            .filter(|&m| w[m] != 0.0)
            .map(|m| Expr::mul(Expr::constant(w[m]), Expr::var(chart.name(m))))
            .collect(),
    );
    let mut sigma = taylor_along_flow(sys, &sw_expr, z.as_slice(), d)?;
    sigma[0] = 0.0; // subtract <w, q> exactly
    let tau_of_s = series_invert(&sigma, d)?;

    let mut coeff_fields = Vec::with_capacity(s.rank());
    for h in sys.frame_functions() {
        let h_series = taylor_along_flow(sys, h, z.as_slice(), d)?;
        let p = series_compose(&h_series, &tau_of_s, d);
        coeff_fields.push(polynomial_in_witness(s, &p, &w, &q));
    }
    Ok(VectorField::linear_combination(&coeff_fields, s.frame())?)
}

/// Compute the flag of the curve at time `t`.
pub fn geodesic_flag(
    s: &SRStructure,
    ext: &Extremal,
    t: f64,
    opts: &FlagOptions,
) -> CoreResult<FlagResult> {
    let n = s.dim();
    let k = s.rank();
    let max_order = if opts.max_order == 0 { n } else { opts.max_order.min(8) };
    let jet_order = max_order + 2;
    let ext_field = tangent_extension(s, ext, t, jet_order, opts.witness.as_deref())?;

    let z = ext.state_at(t)?;
    let q: Vec<f64> = z.as_slice()[n..2 * n].to_vec();

    // iterated brackets ad_T^j X_b, evaluated at q
    let mut bracket_rows: Vec<Vec<VectorField>> = vec![s.frame().to_vec()];
    let mut vectors: Vec<Vec<Vec<f64>>> = Vec::new(); // [order j][field b] -> n-vector
    let eval_row = |row: &[VectorField]| -> CoreResult<Vec<Vec<f64>>> {
        row.iter().map(|f| Ok(f.eval(&q)?)).collect()
    };
    vectors.push(eval_row(&bracket_rows[0])?);

    let mut growth: Vec<usize> = Vec::new();
    let mut jumps: Vec<usize> = Vec::new();
    let mut all_sv: Vec<Vec<f64>> = Vec::new();
    let mut ample = false;

    for order in 1..=max_order {
        // ensure brackets up to j = order - 1 exist
        while bracket_rows.len() < order {
            let prev = bracket_rows.last().unwrap();
            let next: Vec<VectorField> = prev
                .iter()
                .map(|f| ext_field.lie_bracket(f))
                .collect::<Result<_, _>>()?;
            vectors.push(eval_row(&next)?);
            bracket_rows.push(next);
        }
        let cols: Vec<&Vec<f64>> = vectors[..order].iter().flatten().collect();
        let mut m = DMatrix::zeros(n, cols.len());
        for (c, v) in cols.iter().enumerate() {
            for r in 0..n {
                m[(r, c)] = v[r];
            }
        }
        let sv = m.svd(false, false).singular_values;
        let smax = sv.max();
        let rank = if smax == 0.0 {
            0
        } else {
            sv.iter().filter(|&&x| x > opts.rank_rel_tol * smax).count()
        };
        if rank < sv.len() && rank > 0 {
            let gap = sv[rank - 1] / sv[rank];
            if gap < opts.gap_factor {
                return Err(CoreError::IndeterminateRank {
                    order,
                    kept: sv[rank - 1],
                    dropped: sv[rank],
                });
            }
        }
        all_sv.push(sv.iter().copied().collect());

        let prev_dim = growth.last().copied().unwrap_or(0);
        if rank == prev_dim {
            break; // stabilized below full dimension
        }
        jumps.push(rank - prev_dim);
        growth.push(rank);
        if rank == n {
            ample = true;
            break;
        }
        if k * (order + 1) > 64 {
            break; // safety cap on the span size
        }
    }

    if jumps.windows(2).any(|wnd| wnd[0] < wnd[1]) {
        return Err(CoreError::Numeric(format!(
            "flag jumps {jumps:?} are not monotone; rank decisions are unreliable here"
        )));
    }
    let diagram = YoungDiagram::from_columns(jumps.clone())?;
    Ok(FlagResult { t, growth, jumps, diagram, ample, singular_values: all_sv })
}

/// Flag data for a whole curve: the flag is computed at interior Chebyshev
/// times and required to be the same at each of them.
#[derive(Debug, Clone)]
pub struct FlagAlongCurve {
    pub times: Vec<f64>,
    pub per_time: Vec<FlagResult>,
    pub growth: Vec<usize>,
    pub diagram: YoungDiagram,
    pub ample: bool,
}

pub fn chebyshev_times(t0: f64, t1: f64, m: usize) -> Vec<f64> {
    let margin = 0.025 * (t1 - t0);
    let (lo, hi) = (t0 + margin, t1 - margin);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..m)
        .map(|j| mid + half * (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * m) as f64).cos())
        .collect()
}

pub fn require_constant_growth(results: &[FlagResult]) -> CoreResult<()> {
    if let Some(first) = results.first() {
        for r in &results[1..] {
            if r.growth != first.growth {
                return Err(CoreError::NotEquiregular {
                    detail: format!(
                        "growth {:?} at t = {:.6} vs {:?} at t = {:.6}",
                        first.growth, first.t, r.growth, r.t
                    ),
                });
            }
        }
    }
    Ok(())
}

pub fn flag_along_curve(
    s: &SRStructure,
    ext: &Extremal,
    opts: &FlagOptions,
) -> CoreResult<FlagAlongCurve> {
    let times = chebyshev_times(ext.t_start(), ext.t_end(), 17);
    let per_time: Vec<FlagResult> = times
        .iter()
        .map(|&t| geodesic_flag(s, ext, t, opts))
        .collect::<CoreResult<_>>()?;
    require_constant_growth(&per_time)?;
    let first = &per_time[0];
    Ok(FlagAlongCurve {
        times,
        growth: first.growth.clone(),
        diagram: first.diagram.clone(),
        ample: first.ample,
        per_time,
    })
}
