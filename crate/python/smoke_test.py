#!/usr/bin/env python3
"""Smoke test for the srcurv_py extension module.

Builds the extension with cargo, loads it, and exercises the main surface:
builtins, geodesics, canonical frames, curvature, Young diagrams, the
normal-form check, and the two-route Jacobi comparison.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "srcurv-py", "--release"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libsrcurv_py.so"
    if not lib.exists():  # macOS fallback
        lib = ROOT / "target" / "release" / "libsrcurv_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="srcurv_py_"))
    shutil.copy2(lib, stage / "srcurv_py.so")
    sys.path.insert(0, str(stage))
    import srcurv_py

    return srcurv_py


def check(label, ok):
    status = "ok" if ok else "FAIL"
    print(f"  {label}: {status}")
    if not ok:
        raise SystemExit(f"smoke test failed at: {label}")


def main():
    m = build_and_import()
    print("module loaded:", m.__name__)

    names = m.builtin_names()
    check("builtin_names includes heisenberg", "heisenberg" in names)

    # Heisenberg: growth vector (2, 3), diagram rows (2, 1), ample.
    heis = m.Structure.builtin("heisenberg")
    check("heisenberg dim/rank", heis.dim == 3 and heis.rank == 2 and not heis.is_riemannian)
    info = heis.young([0.0, 0.0, 0.0], [1.0, 0.3, 1.0], 1.0)
    check("heisenberg growth", info["growth"] == [2, 3])
    check("heisenberg diagram rows", info["rows"] == [2, 1])
    check("heisenberg ample", info["ample"])

    # Round-trip through the text format.
    again = m.Structure.from_text(heis.render())
    check("render/from_text round trip", again.dim == 3 and again.rank == 2)

    # Dilation covariance of the Heisenberg flow.
    res = heis.homogeneity_residual([0.0, 0.0, 0.0], [1.0, 0.3, 1.0], 2.0, 2.0)
    check("heisenberg homogeneity residual < 1e-6", res < 1e-6)

    # Sphere: canonical frame has curvature matrix [[0, 0], [0, 1]]
    # (boxes 1:1 then 2:1), tiny Darboux defect.
    sphere = m.Structure.builtin("sphere")
    frame = sphere.canonical_frame([0.0, 0.0], [1.0, 0.0], 3.0)
    check("sphere frame rows", frame.rows == [1, 1])
    check("sphere box labels", frame.box_labels == ["1:1", "2:1"])
    r = frame.curvature(1.5)
    check("sphere curvature transverse entry = 1", abs(r[1][1] - 1.0) < 1e-6)
    check("sphere curvature flag entry = 0", abs(r[0][0]) < 1e-6)
    check("sphere darboux defect < 1e-8", frame.darboux_defect([0.5, 1.5, 2.5]) < 1e-8)
    defects = frame.structure_defects([0.5, 1.5, 2.5])
    check(
        "sphere structural defects < 1e-7",
        max(defects["shift"], abs(defects["projection"])) < 1e-7,
    )

    # First conjugate time on the unit sphere is pi.
    geo = sphere.geodesic([0.0, 0.0], [1.0, 0.0], 4.0, tol=1e-12)
    times = geo.conjugate_times()
    check("sphere conjugate time = pi", len(times) >= 1 and abs(times[0] - math.pi) < 1e-6)
    x, p = geo.state(1.0)
    check("sphere equator geodesic", abs(x[0] - 1.0) < 1e-9 and abs(x[1]) < 1e-9)
    cols, rows = geo.trajectory(5)
    check("trajectory table shape", cols[0] == "t" and len(rows) == 5 and len(rows[0]) == 5)

    # Two Jacobi routes agree on the sphere.
    diff = geo.jacobi_sup_difference([1.0, 0.0, 0.0, 0.0])
    check("jacobi routes agree < 1e-6", diff < 1e-6)

    # Flat space has no conjugate points.
    e3 = m.Structure.builtin("euclidean3")
    flat = e3.geodesic([0.0, 0.0, 0.0], [1.0, 0.2, -0.4], 10.0)
    check("euclidean3 no conjugate points", flat.conjugate_times() == [])

    # Closed-form Heisenberg frame: transverse-row curvature entry is p_z^2.
    text = m.heisenberg_frame_text()
    hf = heis.frame_from_text(text, [0.0, 0.0, 0.0], [1.0, 0.3, 1.0], 1.0)
    check("heisenberg frame rows", hf.rows == [2, 1])
    rh = hf.curvature(0.5)
    check("heisenberg long-row curvature entry = p_z^2", abs(rh[0][0] - 1.0) < 1e-9)
    check("heisenberg frame darboux defect", hf.darboux_defect([0.25, 0.5, 0.75]) < 1e-9)

    # Normal-form conditions: zero matrix passes, an off-pattern entry fails.
    ok = m.check_normal([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [2, 1])
    check("zero matrix satisfies normal conditions", ok["verdict"])
    bad_mat = [[0.0] * 4 for _ in range(4)]
    bad_mat[0][3] = 1e-3  # boxes 1:1 x 2:1 of rows (3, 1): outside the pattern
    bad_mat[3][0] = 1e-3
    bad = m.check_normal(bad_mat, [3, 1])
    check("off-pattern entry rejected", not bad["verdict"])
    check("violation magnitude reported", abs(bad["max_violation"] - 1e-3) < 1e-12)
    check("violation messages present", len(bad["violations"]) >= 1)

    print("smoke test passed")


if __name__ == "__main__":
    main()
