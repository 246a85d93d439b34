"""End-to-end acceptance gate: one test and one PASS/FAIL line per criterion."""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_unit
from mitbag.assembly import assemble_A2_form, assemble_B2_form, assemble_penalty_form
from mitbag.clifford import boundary_projectors_batch, build_dirac_matrices
from mitbag.experiments import ExperimentError, compare_reports, load_config, run_experiment
from mitbag.geometry import disk_domain, polygon_domain
from mitbag.mesh import mesh_box_with_interface, mesh_domain
from mitbag.oracle import quadrature_form_value

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report_line(capsys):
    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
    return emit


def _run(name, **changes):
    cfg = load_config(CONFIGS / f"{name}.toml")
    if changes:
        cfg = cfg.replace(**changes)
    try:
        return run_experiment(cfg)
    except ExperimentError as exc:
        # failed runs still carry the report
        return exc.report


# --------------------------------------------------------------------------- 1


def _clifford_ok(alg, normals):
    mats = alg.matrices()
    I = np.eye(alg.N)
    exact = all(
        np.array_equal(a @ b + b @ a, 2.0 * I * (i == k))
        for i, a in enumerate(mats) for k, b in enumerate(mats)
    )
    Pp = boundary_projectors_batch(alg, normals, +1)
    Pm = boundary_projectors_batch(alg, normals, -1)
    err = max(
        np.abs(Pp @ Pp - Pp).max(), np.abs(Pm @ Pm - Pm).max(), np.abs(Pp + Pm - I).max(),
        np.abs(np.trace(Pp, axis1=1, axis2=2) - alg.N / 2).max(),
    )
    ranks = {int(np.linalg.matrix_rank(P, tol=1e-10)) for P in Pp[:100]}
    return exact, err, ranks == {alg.N // 2}


def test_criterion_1_clifford(report_line):
    rng = np.random.default_rng(0)
    t = time.perf_counter()
    results = [_clifford_ok(build_dirac_matrices(n), random_unit(rng, n, 1000)) for n in (2, 3)]
    dt = time.perf_counter() - t
    err = max(r[1] for r in results)
    ok = all(r[0] and r[2] for r in results) and err <= 1e-13 and dt < 1.0
    report_line(1, ok, f"exact relations, projector error {err:.1e} (<= 1e-13), {dt:.2f}s (< 1 s)")
    assert ok


# --------------------------------------------------------------------------- 2


def test_criterion_2_assembly_vs_quadrature(report_line):
    alg = build_dirac_matrices(2)
    rng = np.random.default_rng(1)
    t = time.perf_counter()
    worst = 0.0
    for dom in (polygon_domain([(0, 0), (1, 0), (1, 1), (0, 1)]), disk_domain(1.0)):
        mesh = mesh_domain(dom, 0.2)
        box = mesh_box_with_interface(dom, 0.5, 0.2, layer_mass=20.0, layer_beta=0.06)
        forms = [
            ({"form": "A2", "m": 0.7}, mesh, assemble_A2_form(mesh, alg, 0.7)),
            ({"form": "B2", "m": 0.5, "M": 20.0}, box, assemble_B2_form(box, alg, 0.5, 20.0)),
            ({"form": "penalty", "m": 0.3, "M": 50.0}, mesh, assemble_penalty_form(mesh, alg, 0.3, 50.0)),
        ]
        for spec, msh, pair in forms:
            for _ in range(50):
                f = rng.standard_normal(msh.n_nodes * 2) + 1j * rng.standard_normal(msh.n_nodes * 2)
                a = pair.value(f)
                worst = max(worst, abs(quadrature_form_value(msh, spec, f, alg) - a) / abs(a))
    dt = time.perf_counter() - t
    ok = worst <= 1e-12 and dt < 10.0
    report_line(2, ok, f"max relative mismatch {worst:.1e} (<= 1e-12), {dt:.1f}s (< 10 s)")
    assert ok


# --------------------------------------------------------------------------- 3


def test_criterion_3_disk_cross_validation(report_line):
    details, ok = [], True
    for name in ("oracle_disk_m0", "oracle_disk_m1"):
        rep = _run(name)
        rich = rep.diagnostics["richardson"]
        good = rep.status == "ok" and rich["within_0.2pct"] and len(rich["rel_error"]) >= 6
        ok &= good
        details.append(f"m={rep.config['m']:g} max rel error {max(rich['rel_error']):.1e}")
    report_line(3, ok, "; ".join(details) + " (<= 2e-3 after extrapolation)")
    assert ok


# --------------------------------------------------------------------------- 4


def test_criterion_4_penalty_monotone(report_line):
    t = time.perf_counter()
    rep = _run("penalty_square")
    dt = time.perf_counter() - t
    d = rep.diagnostics
    gaps = [c["gap_at_max_M"] / (1 + c["E_constrained"]) for c in d["columns"]]
    ok = d["monotone"] and all(c["gap_within_1e-4"] for c in d["columns"]) and len(gaps) == 4 and dt < 120
    report_line(4, ok, f"monotone={d['monotone']}, max scaled gap at M=1e8 {max(gaps):.1e} (<= 1e-4), {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------- 5


@pytest.mark.slow
def test_criterion_5_infinite_mass_limit(report_line):
    t = time.perf_counter()
    details, ok = [], True
    for name in ("mass_sweep_square", "mass_sweep_disk"):
        rep = _run(name)
        per = rep.diagnostics["per_h"][repr(0.02)]
        for col in per["columns"]:
            ok &= col["decreasing"] and col["gap"][-1] <= col["gap"][0] / 10
        exps = ", ".join(f"{c['exponent']:.2f}" for c in per["columns"])
        ratio = max(c["ratio_last_first"] for c in per["columns"])
        details.append(f"{rep.config['domain']['kind']}: ratio {ratio:.3f}, exponents [{exps}]")
    dt = time.perf_counter() - t
    ok &= dt <= 900
    report_line(5, ok, "; ".join(details) + f" (decreasing, ratio <= 0.1), {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------- 6


def test_criterion_6_upper_bound(report_line):
    t = time.perf_counter()
    details, ok = [], True
    for name in ("upper_bound_square", "upper_bound_disk"):
        rep = _run(name)
        d = rep.diagnostics
        ok &= d["passed"] and not d["violations"] and d["span_preserved"]
        details.append(f"{rep.config['domain']['kind']}: c={d['c']:.3g}, violations {len(d['violations'])}")
    dt = time.perf_counter() - t
    ok &= dt <= 300
    report_line(6, ok, "; ".join(details) + f", {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------- 7


def test_criterion_7_lower_bound(report_line):
    t = time.perf_counter()
    details, ok = [], True
    for name, c in (("lower_bound_disk", 0.5), ("lower_bound_square", 0.0)):
        rep = _run(name)
        d = rep.diagnostics
        per = d["per_gamma"]
        ok &= d["passed"] and d["curvature_constant"] == c
        ok &= sorted(per) == ["0.5", "1.0", "2.0", "4.0"] and all(v["samples"] == 200 for v in per.values())
        worst = min(v["min_margin"] for v in per.values())
        details.append(f"{rep.config['domain']['kind']}: c={d['curvature_constant']:g}, min margin {worst:.3g}")
    dt = time.perf_counter() - t
    ok &= dt < 120
    report_line(7, ok, "; ".join(details) + f", {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------- 8


def test_criterion_8_form_identity(report_line):
    rep = _run("form_identity_disk")
    d = rep.diagnostics
    mism = {p["h"]: p["max_mismatch"] for p in d["per_h"]}
    ok = mism[0.01] < mism[0.04]
    report_line(8, ok, f"mismatch h=0.04 {mism[0.04]:.2e} -> h=0.01 {mism[0.01]:.2e}, order {d['order']:.2f}")
    assert ok


# --------------------------------------------------------------------------- 9


def test_criterion_9_reproducibility(report_line):
    details, ok = [], True
    for name in ("spectrum_disk", "penalty_square"):
        a, b = _run(name), _run(name)
        diff = compare_reports(a, b)
        ok &= diff <= 10 * a.config["tol"]
        details.append(f"{name} max difference {diff:.1e}")
    report_line(9, ok, "; ".join(details) + " (<= 10 * tol)")
    assert ok
