"""The experiments: sweeps, form checks, inequality samplers and the corner-rounding study.

Every run stores raw per-point data in the report and derives its
diagnostics with :func:`compute_diagnostics`, so a stored report can be
re-checked with :func:`verify_report`.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.linalg as sla

from mitbag.assembly import (
    apply_constraint, assemble_A2_form, assemble_B2_form, assemble_exterior_form, assemble_free_form,
    assemble_penalty_form, boundary_mass, extension_trial, from_real_frame, to_real_frame,
)
from mitbag.clifford import build_dirac_matrices
from mitbag.eigensolver import EigensolverError, PartialConvergenceError, smallest_eigenpairs
from mitbag.experiments.config import ExperimentConfig
from mitbag.experiments.report import ExperimentReport, _plain
from mitbag.geometry import ParameterError, domain_from_spec, round_corners
from mitbag.mesh import mesh_box_with_interface, mesh_domain
from mitbag.oracle import (
    OracleError, cross_validate_disk, dirac_norm_squared, disk_secular_spectrum, observed_order, partner_gaps,
    richardson,
)

ALGEBRA = build_dirac_matrices(2)


class ExperimentError(RuntimeError):
    """A hard failure; ``report`` holds everything computed up to that point."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MonotonicityError(ExperimentError):
    pass


class LowerBoundViolation(ExperimentError):
    pass


class UpperBoundViolation(ExperimentError):
    pass


# --------------------------------------------------------------------------- shared solvers

_MESHES: dict = {}


def _key(spec) -> str:
    return json.dumps(_plain(spec), sort_keys=True)


def domain_mesh(spec: dict, h: float):
    key = ("domain", _key(spec), float(h))
    if key not in _MESHES:
        _MESHES[key] = mesh_domain(domain_from_spec(spec), h)
    return _MESHES[key]


def box_mesh(spec: dict, h: float, M: float | None, margin: float, beta: float):
    key = ("box", _key(spec), float(h), M, float(margin), float(beta))
    if key not in _MESHES:
        _MESHES.clear()  # box meshes are large; keep one at a time
        _MESHES[key] = mesh_box_with_interface(domain_from_spec(spec), margin, h, layer_mass=M,
                                               layer_beta=beta)
    return _MESHES[key]


def _solve(pair, j, tol, seed):
    """Returns (result, status, error message)."""
    try:
        return smallest_eigenpairs(pair.stiffness, pair.mass, j, tol=tol, seed=seed), "ok", None
    except PartialConvergenceError as exc:
        return exc.result, "partial", str(exc)
    except EigensolverError as exc:
        return None, "failed", str(exc)


def _assemble(task):
    form, spec, h, m, M = task["form"], task["domain"], task["h"], task["m"], task.get("M")
    if form == "A2":
        mesh = domain_mesh(spec, h)
        return mesh, apply_constraint(to_real_frame(assemble_A2_form(mesh, ALGEBRA, m), ALGEBRA))
    if form == "penalty":
        mesh = domain_mesh(spec, h)
        return mesh, to_real_frame(assemble_penalty_form(mesh, ALGEBRA, m, M), ALGEBRA)
    if form == "free":
        mesh = domain_mesh(spec, h)
        return mesh, to_real_frame(assemble_free_form(mesh, ALGEBRA, m), ALGEBRA)
    if form == "B2":
        mesh = box_mesh(spec, h, M, task["margin"], task["layer_beta"])
        return mesh, to_real_frame(assemble_B2_form(mesh, ALGEBRA, m, M), ALGEBRA)
    raise ExperimentError(f"unknown form {form!r}")


def solve_point(task: dict) -> dict:
    """Assemble and solve one sweep point; never raises on solver trouble."""
    t0 = time.perf_counter()
    mesh, pair = _assemble(task)
    res, status, err = _solve(pair, task["j"], task["tol"], task["seed"])
    point = {k: task[k] for k in ("index", "form", "h", "m") if k in task}
    point.update({"M": task.get("M"), "label": task.get("label"), "status": status, "error": err,
                  "ndof": int(pair.ndof), "wall_time": time.perf_counter() - t0})
    point["spectrum"] = None if res is None else res.to_dict()
    if mesh.kind == "box":
        point["fine_layers"] = mesh.info["fine_layers"]
    return point


def _run_tasks(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        out = [solve_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(solve_point, tasks))
    return sorted(out, key=lambda p: p["index"])


def _base_task(cfg: ExperimentConfig, **kw):
    task = {"domain": cfg.domain, "m": cfg.m, "j": cfg.j, "tol": cfg.tol, "seed": cfg.seed,
            "margin": cfg.margin, "layer_beta": cfg.layer_beta}
    task.update(kw)
    return task


def _finish(report: ExperimentReport) -> ExperimentReport:
    report.diagnostics = compute_diagnostics(report.config, report.points)
    bad = [p for p in report.points if p.get("status") not in (None, "ok", "rejected")]
    report.failures.extend({"index": p.get("index"), "status": p["status"], "error": p.get("error")}
                           for p in bad)
    if bad and report.status == "ok":
        report.status = "partial"
    return report


def _eig(point):
    return np.asarray(point["spectrum"]["eigenvalues"], float) if point.get("spectrum") else None


def _loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.any(y <= 0):
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _is_disk(spec) -> bool:
    return spec.get("kind") == "disk"


# --------------------------------------------------------------------------- experiments


def run_spectrum(cfg: ExperimentConfig) -> ExperimentReport:
    """Lowest ``j`` eigenvalues of one form for every mesh size (and every M for mass-dependent forms)."""
    tasks = []
    for h in cfg.h:
        if cfg.form in ("A2", "free"):
            tasks.append(_base_task(cfg, index=len(tasks), form=cfg.form, h=h))
        else:
            for M in cfg.M_grid:
                tasks.append(_base_task(cfg, index=len(tasks), form=cfg.form, h=h, M=M))
    report = ExperimentReport(config=cfg.to_dict(), points=_run_tasks(tasks, cfg.jobs))
    return _finish(report)


def run_mass_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Whole-box spectra along the exterior-mass grid against the constrained spectrum, per mesh size."""
    tasks = []
    for h in cfg.h:
        tasks.append(_base_task(cfg, index=len(tasks), form="A2", h=h))
        for M in cfg.M_grid:
            tasks.append(_base_task(cfg, index=len(tasks), form="B2", h=h, M=M))
    points = _run_tasks(tasks, cfg.jobs)
    if _is_disk(cfg.domain):
        R = float(cfg.domain.get("radius", 1.0))
        spec = disk_secular_spectrum(R, cfg.m, count=cfg.j)
        points.append({"index": len(points), "form": "oracle", "h": None, "M": None, "status": "ok",
                       "spectrum": {"eigenvalues": spec.eigenvalues.tolist(),
                                    "residual_norms": [md.residual for md in spec.modes]}})
    return _finish(ExperimentReport(config=cfg.to_dict(), points=points))


def run_penalty_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Penalty spectra on one fixed mesh; monotone in M and converging to the constrained values."""
    h = cfg.h[0]
    tasks = [_base_task(cfg, index=0, form="A2", h=h)]
    for M in cfg.M_grid:
        tasks.append(_base_task(cfg, index=len(tasks), form="penalty", h=h, M=M))
    for m2 in cfg.m_compare:
        tasks.append(_base_task(cfg, index=len(tasks), form="A2", h=h, m=float(m2), label="m_compare"))
    report = _finish(ExperimentReport(config=cfg.to_dict(), points=_run_tasks(tasks, cfg.jobs)))
    viol = report.diagnostics.get("monotonicity_violations", [])
    if viol:
        report.status = "failed"
        report.failures.append({"reason": "penalty spectra not monotone in M", "violations": viol})
        raise MonotonicityError("penalty eigenvalues decreased along the M grid", report)
    return report


def verify_form_identity(cfg: ExperimentConfig) -> ExperimentReport:
    """Compare ``||D_m f||^2`` with the assembled form value on constrained eigenvectors, per mesh size."""
    rng = np.random.default_rng(cfg.seed)
    points = []
    for h in cfg.h:
        mesh = domain_mesh(cfg.domain, h)
        full = assemble_A2_form(mesh, ALGEBRA, cfg.m)
        pair = apply_constraint(to_real_frame(full, ALGEBRA))
        res, status, err = _solve(pair, cfg.j, cfg.tol, cfg.seed)
        pt = {"index": len(points), "form": "A2", "h": h, "M": None, "m": cfg.m, "status": status,
              "error": err, "spectrum": None if res is None else res.to_dict()}
        if res is not None:
            F = from_real_frame(pair.prolongation @ res.eigenvectors, ALGEBRA)
            a, d = [], []
            for i in range(F.shape[1]):
                f = F[:, i]
                nrm = float(np.real(np.vdot(f, full.mass @ f)))
                a.append(full.value(f) / nrm)
                d.append(dirac_norm_squared(mesh, ALGEBRA, cfg.m, f) / nrm)
            pt["form_values"], pt["dirac_values"] = a, d
            if not points:
                pt["checks"] = _form_side_checks(mesh, full, F[:, 0], cfg.m, rng)
        points.append(pt)
    return _finish(ExperimentReport(config=cfg.to_dict(), points=points))


def _form_side_checks(mesh, full, f, m, rng):
    """Coefficient linearity of the assembled form and the zero-trace case."""
    base = assemble_A2_form(mesh, ALGEBRA, 0.0)
    norm2 = float(np.real(np.vdot(f, full.mass @ f)))
    bnd = float(np.real(np.vdot(f, boundary_mass(mesh, ALGEBRA) @ f)))
    lhs = full.value(f) - base.value(f)
    rhs = m * m * norm2 + m * bnd
    g = rng.standard_normal((mesh.n_nodes, ALGEBRA.N)) + 1j * rng.standard_normal((mesh.n_nodes, ALGEBRA.N))
    g[mesh.boundary_nodes] = 0.0
    g = g.ravel()
    ag = full.value(g)
    dg = dirac_norm_squared(mesh, ALGEBRA, m, g)
    return {"linearity_error": abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300),
            "zero_trace_mismatch": abs(ag - dg) / abs(ag)}


def _curvature_constant(domain) -> float:
    """``(n - 1) / 2 * sup kappa^2`` for n = 2."""
    theta = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
    kap = domain.curvatures_at(theta)
    return 0.5 * float(np.max(kap) ** 2)


def _exterior_bumps(domain, margin, count, rng):
    theta = rng.uniform(0.0, 2 * np.pi, count)
    base = domain.boundary_points(theta)
    nu = domain.normals_at(theta)
    dist = rng.uniform(0.0, 0.5 * margin, count)
    center = base + dist[:, None] * nu
    width = rng.uniform(0.05, 1.0, count)
    u = rng.standard_normal((count, 2)) + 1j * rng.standard_normal((count, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return center, width, u


def _bump_fields(nodes, center, width, u):
    r2 = np.sum((nodes[:, None, :] - center[None]) ** 2, axis=2)  # (nodes, S)
    g = np.exp(-0.5 * r2 / width[None] ** 2)
    F = g[:, None, :] * u.T[None, :, :]  # (nodes, N, S)
    return F.reshape(len(nodes) * 2, -1)


def verify_lower_bound(cfg: ExperimentConfig) -> ExperimentReport:
    """Sample the exterior energy inequality on random Gaussian spinor bumps near the boundary."""
    rng = np.random.default_rng(cfg.seed)
    domain = domain_from_spec(cfg.domain)
    c = _curvature_constant(domain)
    center, width, u = _exterior_bumps(domain, cfg.margin, cfg.samples, rng)
    hs = cfg.h[-2:] if len(cfg.h) >= 2 else [cfg.h[0], cfg.h[0] / 2]
    points = []
    for h in hs:
        mesh = box_mesh(cfg.domain, h, max(cfg.gammas), cfg.margin, cfg.layer_beta)
        F = _bump_fields(mesh.nodes, center, width, u)
        per_gamma = {}
        for gam in cfg.gammas:
            form = assemble_exterior_form(mesh, ALGEBRA, gam)
            R = np.real(np.einsum("is,is->s", F.conj(), form.stiffness @ F))
            nrm = np.real(np.einsum("is,is->s", F.conj(), form.mass @ F))
            per_gamma[repr(float(gam))] = {"R": R.tolist(), "norm2": nrm.tolist()}
        points.append({"index": len(points), "form": "exterior", "h": h, "M": None, "status": "ok",
                       "curvature_constant": c, "values": per_gamma})
    points.append({"index": len(points), "form": "samples", "h": None, "M": None, "status": "ok",
                   "center": center.tolist(), "width": width.tolist(),
                   "spinor_re": u.real.tolist(), "spinor_im": u.imag.tolist()})
    report = _finish(ExperimentReport(config=cfg.to_dict(), points=points))
    if report.diagnostics["violations"]:
        report.status = "failed"
        report.failures.append({"reason": "lower bound violated beyond slack",
                                "violations": report.diagnostics["violations"]})
        raise LowerBoundViolation("sampled exterior energy fell below the bound", report)
    return report


def run_corner_rounding_study(cfg: ExperimentConfig) -> ExperimentReport:
    """Constrained spectra of rounded polygons for a decreasing rounding radius (exploratory)."""
    poly = domain_from_spec(cfg.domain)
    if poly.kind != "polygon":
        raise ParameterError("corner rounding needs a polygon domain")
    poly_spec = poly.to_spec()
    tasks, rejected = [], []
    for h in cfg.h:
        tasks.append(_base_task(cfg, index=len(tasks), form="A2", h=h, domain=poly_spec, label="polygon"))
    hausdorff = {}
    for eps in cfg.eps_grid:
        if eps <= 0:
            rejected.append(float(eps))
            continue
        rd = round_corners(poly, float(eps))
        hausdorff[repr(float(eps))] = rd.meta["hausdorff"]
        for h in cfg.h:
            tasks.append(_base_task(cfg, index=len(tasks), form="A2", h=h, domain=rd.to_spec(),
                                    label=repr(float(eps))))
    points = _run_tasks(tasks, cfg.jobs)
    for p in points:
        p["eps"] = None if p["label"] == "polygon" else float(p["label"])
        p["hausdorff"] = 0.0 if p["label"] == "polygon" else hausdorff[p["label"]]
    for eps in rejected:
        points.append({"index": len(points), "form": "A2", "h": None, "M": None, "label": "rejected",
                       "eps": eps, "status": "rejected",
                       "error": "rounding radius must be positive; the polygon is solved directly"})
    return _finish(ExperimentReport(config=cfg.to_dict(), points=points))


def run_upper_bound_trial(cfg: ExperimentConfig) -> ExperimentReport:
    """Rayleigh-Ritz values of the whole-box form on exponentially extended constrained eigenvectors."""
    points = []
    for h in cfg.h:
        mesh = domain_mesh(cfg.domain, h)
        pair = apply_constraint(to_real_frame(assemble_A2_form(mesh, ALGEBRA, cfg.m), ALGEBRA))
        res, status, err = _solve(pair, cfg.j, cfg.tol, cfg.seed)
        points.append({"index": len(points), "form": "A2", "h": h, "M": None, "status": status,
                       "error": err, "spectrum": None if res is None else res.to_dict()})
        if res is None:
            continue
        F = from_real_frame(pair.prolongation @ res.eigenvectors, ALGEBRA)
        for M in cfg.M_grid:
            box = box_mesh(cfg.domain, h, M, cfg.margin, cfg.layer_beta)
            B = assemble_B2_form(box, ALGEBRA, cfg.m, M)
            ext = np.column_stack([extension_trial(box, ALGEBRA, F[:, i], M) for i in range(F.shape[1])])
            G = ext.conj().T @ (B.mass @ ext)
            H = ext.conj().T @ (B.stiffness @ ext)
            G, H = 0.5 * (G + G.conj().T), 0.5 * (H + H.conj().T)
            gram = np.linalg.eigvalsh(G)
            rho = sla.eigh(H, G, eigvals_only=True)
            points.append({"index": len(points), "form": "B2-trial", "h": h, "M": M, "status": "ok",
                           "rayleigh": rho.tolist(), "gram_eigenvalues": gram.tolist()})
    report = _finish(ExperimentReport(config=cfg.to_dict(), points=points))
    if report.diagnostics.get("violations"):
        report.status = "failed"
        report.failures.append({"reason": "trial Rayleigh quotient above the bound",
                                "violations": report.diagnostics["violations"]})
        raise UpperBoundViolation("upper-bound trial exceeded E + c/M + slack", report)
    return report


def run_oracle_disk(cfg: ExperimentConfig) -> ExperimentReport:
    """Disk reference spectrum from the secular equation, cross-checked against a fine-mesh solve."""
    if not _is_disk(cfg.domain):
        raise OracleError("the disk oracle needs a disk domain")
    R = float(cfg.domain.get("radius", 1.0))
    count = max(cfg.j, 6)
    spec = disk_secular_spectrum(R, cfg.m, count=count)
    spec.validation = cross_validate_disk(R, cfg.m, spec, h=min(0.01, cfg.h[-1]))
    point = {"index": 0, "form": "oracle", "h": None, "M": None, "status": "ok", "source": "oracle",
             "oracle": spec.to_dict(),
             "spectrum": {"eigenvalues": spec.eigenvalues.tolist(),
                          "residual_norms": [md.residual for md in spec.modes]}}
    # the finite-element route on every configured mesh size, for the extrapolated comparison
    tasks = [_base_task(cfg, index=1 + i, form="A2", h=h, j=count) for i, h in enumerate(cfg.h)]
    points = [point] + _run_tasks(tasks, cfg.jobs)
    return _finish(ExperimentReport(config=cfg.to_dict(), points=points))


RUNNERS = {
    "spectrum": run_spectrum,
    "mass-sweep": run_mass_sweep,
    "penalty-sweep": run_penalty_sweep,
    "verify-form": verify_form_identity,
    "verify-lower-bound": verify_lower_bound,
    "round-corners": run_corner_rounding_study,
    "upper-bound": run_upper_bound_trial,
    "oracle-disk": run_oracle_disk,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.kind](cfg)


# --------------------------------------------------------------------------- diagnostics


def compute_diagnostics(config: dict, points: list) -> dict:
    """Diagnostics of a report, from the config echo and the raw points only."""
    kind = config["kind"]
    fn = _DIAGNOSTICS.get(kind, _diag_spectrum)
    return _plain(fn(config, points))


def verify_report(report: ExperimentReport) -> bool:
    """``True`` when the stored diagnostics equal a fresh recomputation."""
    fresh = compute_diagnostics(report.config, report.points)
    return json.dumps(fresh, sort_keys=True) == json.dumps(_plain(report.diagnostics), sort_keys=True)


def _diag_spectrum(config, points):
    curves = {}
    for p in points:
        ev = _eig(p)
        if ev is None:
            continue
        for i, e in enumerate(ev, start=1):
            key = f"E{i} h={p['h']}"
            c = curves.setdefault(key, {"x": [], "y": []})
            c["x"].append(p["M"] if p.get("M") is not None else p["h"])
            c["y"].append(float(e))
    return {"curves": curves, "x_label": "M or h", "y_label": "E_j"}


def _slack(tol, e):
    return 2.0 * tol * max(1.0, abs(e))


def _diag_mass_sweep(config, points):
    tol, j = config["tol"], config["j"]
    out = {"per_h": {}, "curves": {}, "x_label": "M", "y_label": "|E_j(B2) - E_j(A2)|"}
    oracle = next((p for p in points if p["form"] == "oracle"), None)
    for h in config["h"]:
        ref_pt = next(p for p in points if p["form"] == "A2" and p["h"] == h)
        ref = _eig(ref_pt)
        sweep = sorted((p for p in points if p["form"] == "B2" and p["h"] == h), key=lambda p: p["M"])
        Ms = [p["M"] for p in sweep if p.get("spectrum")]
        diag = {"M": Ms, "reference": None if ref is None else ref.tolist(), "columns": []}
        if ref is None or len(Ms) < 1:
            out["per_h"][repr(h)] = diag
            continue
        for i in range(min(j, len(ref))):
            E = [float(_eig(p)[i]) for p in sweep if p.get("spectrum") and len(_eig(p)) > i]
            gaps = [abs(e - ref[i]) for e in E]
            dec = all(b <= a + _slack(tol, ref[i]) for a, b in zip(gaps, gaps[1:]))
            slope = _loglog_slope(Ms, gaps)
            col = {"j": i + 1, "E_B2": E, "gap": gaps, "signed_gap": [float(ref[i] - e) for e in E],
                   "decreasing": dec, "ratio_last_first": gaps[-1] / gaps[0] if gaps[0] > 0 else None,
                   "exponent": None if slope is None else -slope}
            if len(Ms) >= 2:
                Mt, gt = np.array(Ms[-2:]), np.array(gaps[-2:])
                C = float(np.sum(gt / Mt) / np.sum(1.0 / Mt ** 2))
                col["C_top"] = C
                col["top_within_C_over_M"] = bool(gaps[-1] <= C / Ms[-1] + _slack(tol, ref[i]))
            diag["columns"].append(col)
            out["curves"][f"j={i + 1} h={h}"] = {"x": Ms, "y": gaps}
        if oracle is not None:
            ov = _eig(oracle)[: len(ref)]
            rel = np.abs(ref[: len(ov)] - ov) / np.abs(ov)
            diag["oracle_rel_error"] = rel.tolist()
            diag["oracle_within_0.2pct"] = bool(np.all(rel <= 2e-3))
        out["per_h"][repr(h)] = diag
    return out


def _diag_penalty(config, points):
    tol, j = config["tol"], config["j"]
    base_m = config["m"]
    ref_pt = next(p for p in points if p["form"] == "A2" and p.get("label") != "m_compare")
    ref = _eig(ref_pt)
    sweep = sorted((p for p in points if p["form"] == "penalty"), key=lambda p: p["M"])
    Ms = [p["M"] for p in sweep]
    cols, viol, curves = [], [], {}
    for i in range(j):
        E = [float(_eig(p)[i]) if p.get("spectrum") and len(_eig(p)) > i else float("nan") for p in sweep]
        for a, b, Ma, Mb in zip(E, E[1:], Ms, Ms[1:]):
            if b < a - _slack(tol, a):
                viol.append({"j": i + 1, "M_from": Ma, "M_to": Mb, "E_from": a, "E_to": b})
        gap = abs(E[-1] - ref[i]) if ref is not None else None
        cols.append({"j": i + 1, "E_penalty": E, "E_constrained": None if ref is None else float(ref[i]),
                     "gap_at_max_M": gap,
                     "gap_within_1e-4": None if gap is None else bool(gap <= 1e-4 * (1 + ref[i]))})
        if ref is not None:
            curves[f"j={i + 1}"] = {"x": Ms, "y": [abs(e - ref[i]) for e in E]}
    compare = []
    for p in points:
        if p.get("label") == "m_compare" and p.get("spectrum") and ref is not None:
            e2 = _eig(p)
            up = bool(np.all(e2 >= ref - np.array([_slack(tol, e) for e in ref]))) if p["m"] >= base_m else None
            compare.append({"m": p["m"], "eigenvalues": e2.tolist(), "all_above_base": up})
    return {"M": Ms, "columns": cols, "monotonicity_violations": viol, "monotone": not viol,
            "mass_comparison": compare, "curves": curves, "x_label": "M",
            "y_label": "|E_j(penalty) - E_j(A2)|"}


def _diag_form(config, points):
    hs, mism = [], []
    per = []
    for p in points:
        if "form_values" not in p:
            continue
        a, d = np.array(p["form_values"]), np.array(p["dirac_values"])
        rel = np.abs(a - d) / np.abs(a)
        per.append({"h": p["h"], "mismatch": rel.tolist(), "max_mismatch": float(rel.max())})
        hs.append(p["h"])
        mism.append(float(rel.max()))
    slope = _loglog_slope(hs, mism) if len(hs) >= 2 else None
    checks = next((p["checks"] for p in points if "checks" in p), None)
    return {
        "per_h": per,
        "decreasing_pairwise": all(b < a for a, b in zip(mism, mism[1:])),
        "finest_below_coarsest": bool(len(mism) >= 2 and mism[-1] < mism[0]),
        "order": slope,
        "side_checks": checks,
        "curves": {"max mismatch": {"x": hs, "y": mism}}, "x_label": "h", "y_label": "relative mismatch",
    }


def _diag_lower(config, points):
    ext = [p for p in points if p["form"] == "exterior"]
    samples = next(p for p in points if p["form"] == "samples")
    c = ext[0]["curvature_constant"]
    fine, coarse = ext[-1], ext[0]
    per_gamma, violations = {}, []
    for key in fine["values"]:
        qf = (np.array(fine["values"][key]["R"]) + c * np.array(fine["values"][key]["norm2"])) / np.array(
            fine["values"][key]["norm2"])
        qc = (np.array(coarse["values"][key]["R"]) + c * np.array(coarse["values"][key]["norm2"])) / np.array(
            coarse["values"][key]["norm2"])
        slack = np.abs(qf - qc) + 1e-12
        bad = np.flatnonzero(qf < -slack)
        per_gamma[key] = {"min_value": float(qf.min()), "max_slack": float(slack.max()),
                          "min_margin": float((qf + slack).min()), "violations": int(len(bad)),
                          "samples": int(len(qf))}
        for s in bad:
            violations.append({
                "gamma": float(key), "sample": int(s), "value": float(qf[s]), "slack": float(slack[s]),
                "center": samples["center"][s], "width": samples["width"][s],
                "spinor": [complex(a, b).__repr__() for a, b in zip(samples["spinor_re"][s], samples["spinor_im"][s])],
            })
    return {"curvature_constant": c, "h_fine": fine["h"], "h_coarse": coarse["h"],
            "per_gamma": per_gamma, "violations": violations, "passed": not violations}


def _diag_rounding(config, points):
    poly = {p["h"]: _eig(p) for p in points if p.get("label") == "polygon" and p.get("spectrum")}
    rows = []
    for p in points:
        if p.get("label") in ("polygon", "rejected") or not p.get("spectrum"):
            continue
        ref = poly.get(p["h"])
        ev = _eig(p)
        rows.append({"eps": p["eps"], "h": p["h"], "hausdorff": p["hausdorff"], "eigenvalues": ev.tolist(),
                     "diff_to_polygon": None if ref is None else (ev[: len(ref)] - ref[: len(ev)]).tolist()})
    h_last = config["h"][-1]
    fin = sorted((r for r in rows if r["h"] == h_last), key=lambda r: -r["eps"])
    haus = [r["hausdorff"] for r in fin]
    d1 = [abs(r["diff_to_polygon"][0]) for r in fin if r["diff_to_polygon"] is not None]
    return {
        "label": "EXPLORATORY",
        "rows": rows,
        "hausdorff_strictly_decreasing": all(b < a for a, b in zip(haus, haus[1:])),
        "E1_diff_finest_h": d1,
        "E1_approaches_polygon": bool(len(d1) >= 2 and d1[-1] < d1[0]),
        "rejected": [p["eps"] for p in points if p.get("label") == "rejected"],
        "curves": {"|E1(eps) - E1(polygon)|": {"x": [r["eps"] for r in fin], "y": d1}},
        "x_label": "rounding radius", "y_label": "|E1 difference|",
    }


def _diag_upper(config, points):
    tol = config["tol"]
    refs = {p["h"]: _eig(p) for p in points if p["form"] == "A2" and p.get("spectrum")}
    trials = [p for p in points if p["form"] == "B2-trial"]
    excess = {}
    for p in trials:
        ref = refs[p["h"]]
        rho = np.array(p["rayleigh"])
        excess[(p["h"], p["M"])] = rho - ref[: len(rho)]
    hs = sorted(refs, reverse=True)
    if not hs or not trials:
        return {"violations": [], "passed": False}
    h_f = hs[-1]
    Ms = sorted(M for (h, M) in excess if h == h_f)
    top = Ms[-2:]
    # c may be negative: the extension also enlarges the norm, which lowers the quotient
    c = max(M * float(np.max(excess[(h_f, M)])) for M in top)
    rows, violations = [], []
    for M in Ms:
        ex = excess[(h_f, M)]
        if len(hs) >= 2 and (hs[-2], M) in excess:
            eps_h = np.abs(ex - excess[(hs[-2], M)])
        else:
            eps_h = np.zeros_like(ex)
        ref = refs[h_f]
        # the eigensolver tolerance enters through the reference eigenvalues
        bound = c / M + eps_h + np.array([10.0 * tol * (1.0 + abs(e)) for e in ref[: len(ex)]])
        ok = ex <= bound
        rows.append({"M": M, "excess": ex.tolist(), "bound": bound.tolist(), "slack": eps_h.tolist(),
                     "within": bool(ok.all())})
        for i in np.flatnonzero(~ok):
            violations.append({"M": M, "j": int(i + 1), "excess": float(ex[i]), "bound": float(bound[i])})
    gram_min = min(float(min(p["gram_eigenvalues"])) for p in trials)
    ex1 = [abs(float(excess[(h_f, M)][0])) for M in Ms]
    tail = ex1[len(ex1) // 2:]
    return {
        "c": c, "h": h_f, "rows": rows, "violations": violations, "passed": not violations,
        "gram_min_eigenvalue": gram_min, "span_preserved": gram_min > 1e-8,
        "E1_excess_tail_decreasing": all(b <= a for a, b in zip(tail, tail[1:])),
        "curves": {f"excess j={i + 1}": {"x": Ms, "y": [float(excess[(h_f, M)][i]) for M in Ms]}
                   for i in range(len(excess[(h_f, Ms[0])]))},
        "x_label": "M", "y_label": "Rayleigh(trial) - E_j(A2)",
    }


def _diag_oracle(config, points):
    p = points[0]
    modes = p["oracle"]["modes"]
    E = np.array([md["E"] for md in modes])
    m = config["m"]
    from mitbag.oracle import DiskMode, DiskSpectrum

    spec = DiskSpectrum(R=p["oracle"]["R"], m=m, modes=[DiskMode(**md) for md in modes])
    out = {"eigenvalues": E.tolist(), "min_gap_above_m2": float(np.min(E - m * m)),
           "max_secular_residual": float(max(md["residual"] for md in modes)),
           "partner_gap": partner_gaps(spec), "sorted": bool(np.all(np.diff(E) >= 0)),
           "validation": p["oracle"]["validation"]}
    fem = sorted((q for q in points if q["form"] == "A2" and q.get("spectrum")), key=lambda q: -q["h"])
    if fem:
        n = min(len(E), *(len(_eig(q)) for q in fem))
        ref = E[:n]
        out["fem_rel_error"] = {repr(q["h"]): (np.abs(_eig(q)[:n] - ref) / ref).tolist() for q in fem}
    if len(fem) >= 2:
        mid, fine = _eig(fem[-2])[:n], _eig(fem[-1])[:n]
        ratio = fem[-2]["h"] / fem[-1]["h"]
        # P1 eigenvalues converge at second order on smooth domains
        ext = richardson(mid, fine, ratio=ratio, order=2.0)
        rel = np.abs(ext - ref) / ref
        out["richardson"] = {"h": [fem[-2]["h"], fem[-1]["h"]], "order": 2.0, "extrapolated": ext.tolist(),
                             "rel_error": rel.tolist(), "within_0.2pct": bool(np.all(rel <= 2e-3))}
        if len(fem) >= 3 and np.isclose(fem[-3]["h"] / fem[-2]["h"], ratio):
            obs = observed_order(_eig(fem[-3])[:n], mid, fine, ratio=ratio)
            out["richardson"]["observed_order"] = obs.tolist()
    return out


_DIAGNOSTICS = {
    "spectrum": _diag_spectrum,
    "mass-sweep": _diag_mass_sweep,
    "penalty-sweep": _diag_penalty,
    "verify-form": _diag_form,
    "verify-lower-bound": _diag_lower,
    "round-corners": _diag_rounding,
    "upper-bound": _diag_upper,
    "oracle-disk": _diag_oracle,
}


def compare_reports(a: ExperimentReport, b: ExperimentReport) -> float:
    """Largest eigenvalue difference between two reports of the same config (inf on a shape mismatch)."""
    ta, tb = a.eigenvalue_table(), b.eigenvalue_table()
    if len(ta) != len(tb):
        return math.inf
    return max((abs(x[3] - y[3]) for x, y in zip(ta, tb)), default=0.0)
