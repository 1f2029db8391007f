//! Built-in structure library: flat spaces, the round sphere, the
//! hyperbolic half-plane, and the first Heisenberg group.

use crate::error::{CoreError, CoreResult};
use crate::structure::{parse_structure, SRStructure};

/// Names accepted by [`builtin_structure`]. `sphere` also accepts an
/// explicit radius as `sphere:R`.
pub const BUILTIN_NAMES: &[&str] = &[
    "euclidean1",
    "euclidean2",
    "euclidean3",
    "euclidean4",
    "sphere",
    "hyperbolic",
    "heisenberg",
];

/// Source text of a named builtin structure.
///
/// The sphere chart is longitude/latitude, regular along the equator
/// `lat = 0`; from `x0 = (0, 0)` with `p0 = (1, 0)` the trajectory is the
/// unit-speed equator for a radius-1 sphere.
pub fn builtin_source(name: &str) -> CoreResult<String> {
    if let Some(rest) = name.strip_prefix("sphere:") {
        let r: f64 = rest.parse().map_err(|_| {
            CoreError::InvalidInput(format!("invalid sphere radius `{rest}`"))
        })?;
        if !r.is_finite() || r <= 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "sphere radius must be positive and finite, found {r}"
            )));
        }
        return Ok(sphere_source(r));
    }
    match name {
        "euclidean1" => Ok(euclidean_source(1)),
        "euclidean2" => Ok(euclidean_source(2)),
        "euclidean3" => Ok(euclidean_source(3)),
        "euclidean4" => Ok(euclidean_source(4)),
        "sphere" => Ok(sphere_source(1.0)),
        "hyperbolic" => {
            Ok("dim 2\nvars x y\nfield E1 : y, 0\nfield E2 : 0, y\n".to_string())
        }
        "heisenberg" => Ok(
            "dim 3\nvars x y z\nfield X1 : 1, 0, -y/2\nfield X2 : 0, 1, x/2\n".to_string(),
        ),
        _ => Err(CoreError::InvalidInput(format!(
            "unknown builtin `{name}` (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Parse a named builtin into a structure.
pub fn builtin_structure(name: &str) -> CoreResult<SRStructure> {
    Ok(parse_structure(&builtin_source(name)?)?)
}

/// Render any structure back to the text format accepted by
/// `parse_structure`.
pub fn render_structure(s: &SRStructure) -> String {
    let mut out = format!("dim {}\nvars {}\n", s.dim(), s.chart().names().join(" "));
    for (name, field) in s.field_names().iter().zip(s.frame()) {
        let comps: Vec<String> =
            field.components().iter().map(|e| e.to_string()).collect();
        out.push_str(&format!("field {name} : {}\n", comps.join(", ")));
    }
    out
}

/// Closed-form frame family for the Heisenberg builtin (growth 2, 3; rows
/// 2, 1), in the frame-file format.
pub fn heisenberg_frame_text() -> &'static str {
    include_str!("../assets/heisenberg_frame.txt")
}

fn euclidean_source(n: usize) -> String {
    let vars = ["x", "y", "z", "w"];
    let mut s = format!("dim {n}\nvars {}\n", vars[..n].join(" "));
    for i in 0..n {
        let comps: Vec<&str> = (0..n).map(|j| if i == j { "1" } else { "0" }).collect();
        s.push_str(&format!("field E{} : {}\n", i + 1, comps.join(", ")));
    }
    s
}

fn sphere_source(r: f64) -> String {
    format!("dim 2\nvars lon lat\nfield E1 : 1/({r}*cos(lat)), 0\nfield E2 : 0, 1/{r}\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::RiemannData;
    use nalgebra::DVector;

    #[test]
    fn every_builtin_parses_and_round_trips_through_its_rendering() {
        for name in BUILTIN_NAMES {
            let s = builtin_structure(name).unwrap();
            let again = parse_structure(&render_structure(&s)).unwrap();
            assert_eq!(s.dim(), again.dim());
            assert_eq!(s.rank(), again.rank());
            let x: Vec<f64> = (0..s.dim()).map(|i| 0.2 + 0.1 * i as f64).collect();
            for (f, g) in s.frame().iter().zip(again.frame()) {
                let a = f.eval(&x).unwrap();
                let b = g.eval(&x).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-14, "{name} render drifts");
                }
            }
        }
    }

    #[test]
    fn sphere_has_constant_curvature_one_over_radius_squared() {
        for (name, expected) in [("sphere", 1.0), ("sphere:2", 0.25), ("sphere:0.5", 4.0)] {
            let s = builtin_structure(name).unwrap();
            let rd = RiemannData::new(&s).unwrap();
            for x in [[0.1, 0.3], [-0.7, -0.4], [2.0, 0.9]] {
                let e1 = DVector::from_column_slice(&[1.0, 0.0]);
                let e2 = DVector::from_column_slice(&[0.0, 1.0]);
                let r122 = rd.curvature_apply(&x, &e1, &e2, &e2);
                let num = rd.metric_inner(&x, &r122, &e1);
                let g11 = rd.metric_inner(&x, &e1, &e1);
                let g22 = rd.metric_inner(&x, &e2, &e2);
                let g12 = rd.metric_inner(&x, &e1, &e2);
                let k = num / (g11 * g22 - g12 * g12);
                assert!(
                    (k - expected).abs() < 1e-9,
                    "{name} at {x:?}: K = {k}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn sphere_equator_runs_past_pi_without_chart_trouble() {
        let s = builtin_structure("sphere").unwrap();
        let ext = crate::extremal::Extremal::from_structure(
            &s,
            &[0.0, 0.0],
            &[1.0, 0.0],
            4.0,
            1e-11,
        )
        .unwrap();
        let z = ext.state_at(3.5).unwrap();
        assert!((z[1]).abs() < 1e-9, "momentum leaves the equator");
        assert!((z[3]).abs() < 1e-9, "latitude leaves the equator");
        assert!((z[2] - 3.5).abs() < 1e-8, "longitude is not unit-speed");
    }

    #[test]
    fn heisenberg_flag_gives_rows_two_one() {
        let s = builtin_structure("heisenberg").unwrap();
        let ext = crate::extremal::Extremal::from_structure(
            &s,
            &[0.0, 0.0, 0.0],
            &[1.0, 0.0, 1.0],
            1.0,
            1e-10,
        )
        .unwrap();
        let flag = crate::flag::geodesic_flag(
            &s,
            &ext,
            0.4,
            &crate::flag::FlagOptions::default(),
        )
        .unwrap();
        assert_eq!(flag.growth, vec![2, 3]);
        assert_eq!(flag.diagram.rows(), &[2, 1]);
    }

    #[test]
    fn bad_names_and_radii_are_rejected() {
        assert!(builtin_structure("torus").is_err());
        assert!(builtin_structure("sphere:0").is_err());
        assert!(builtin_structure("sphere:-1").is_err());
        assert!(builtin_structure("sphere:abc").is_err());
    }

    #[test]
    fn supplied_heisenberg_frame_text_parses() {
        let s = builtin_structure("heisenberg").unwrap();
        let system = crate::ham::PhaseSystem::new(&s).unwrap();
        let doc = crate::frame::parse_frame_file(heisenberg_frame_text(), &system).unwrap();
        assert_eq!(doc.diagram().rows(), &[2, 1]);
    }
}
