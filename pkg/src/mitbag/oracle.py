"""Reference values that do not go through the sparse assembly.

* The exact spectrum of the squared confined Dirac operator on a disk, from
  separation of variables.  With ``u = (J_k(mu r) e^{ik phi},
  i mu J_{k+1}(mu r) / (lam + m) e^{i(k+1) phi})`` the eigen-equation
  ``D_m u = lam u`` holds for ``lam^2 = m^2 + mu^2`` and the infinite-mass
  condition reduces to ``(lam + m) J_k(mu R) = mu J_{k+1}(mu R)``.  The
  negative branch (``lam < 0``) at index ``k`` is the positive branch at
  ``-k - 1``, so every squared eigenvalue ``m^2 + mu^2`` appears twice.
* Element-by-element evaluation of every quadratic form, used to certify
  the assembled matrices.
* The element-local ``||D_m f||^2`` of a P1 spinor field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mitbag.clifford import DiracAlgebra, boundary_projector, build_dirac_matrices
from mitbag.geometry import outer_normal
from mitbag.mesh import GAUSS2, SpinorMesh


class OracleError(RuntimeError):
    pass


class BracketingError(OracleError):
    pass


class CrossValidationError(OracleError):
    pass


# --------------------------------------------------------------------------- Bessel J_n


def _series_j(n_max, x):
    """Ascending series for ``J_0 ... J_{n_max}`` at small ``|x|`` (columns)."""
    out = np.zeros((len(x), n_max + 1))
    half = 0.5 * x
    for n in range(n_max + 1):
        term = half**n / math.factorial(n)
        acc = term.copy()
        for s in range(1, 40):
            term = -term * half * half / (s * (s + n))
            acc += term
            if np.all(np.abs(term) <= 1e-17 * np.abs(acc) + 1e-300):
                break
        out[:, n] = acc
    return out


def bessel_j_table(n_max: int, x) -> np.ndarray:
    """``J_0(x) ... J_{n_max}(x)`` for real ``x >= 0`` as an array of shape ``(len(x), n_max + 1)``.

    Miller's backward recurrence ``J_{k-1} = (2k/x) J_k - J_{k+1}`` started
    well above ``max(n_max, x)`` and normalized by ``J_0 + 2 sum J_{2k} = 1``;
    the ascending series is used for ``x <= 0.5``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("bessel_j_table expects x >= 0")
    out = np.zeros((len(x), n_max + 1))
    small = x <= 0.5
    if small.any():
        out[small] = _series_j(n_max, x[small])
    big = ~small
    if big.any():
        xb = x[big]
        top = int(max(n_max, xb.max())) + 30 + int(math.sqrt(40.0 * max(n_max, xb.max())))
        top += top % 2
        jp1 = np.zeros(len(xb))
        jk = np.full(len(xb), 1e-300)
        table = np.zeros((len(xb), n_max + 1))
        norm = np.zeros(len(xb))
        for k in range(top, 0, -1):
            jm1 = (2.0 * k / xb) * jk - jp1
            jp1, jk = jk, jm1
            # jk now holds J_{k-1}
            if (k - 1) % 2 == 0 and k - 1 > 0:
                norm += 2.0 * jk
            if k - 1 <= n_max:
                table[:, k - 1] = jk
            big_val = np.abs(jk) > 1e250
            if big_val.any():
                jk[big_val] *= 1e-250
                jp1[big_val] *= 1e-250
                norm[big_val] *= 1e-250
                table[big_val] *= 1e-250
        norm += table[:, 0]
        out[big] = table / norm[:, None]
    return out


def bessel_j(n: int, x) -> np.ndarray:
    """Integer-order Bessel function of the first kind, ``J_{-n} = (-1)^n J_n``."""
    sign = 1.0
    if n < 0:
        n = -n
        sign = (-1.0) ** n
    x = np.asarray(x, dtype=float)
    flat = np.abs(x.reshape(-1))
    vals = bessel_j_table(n, flat)[:, n]
    vals = np.where(x.reshape(-1) < 0, (-1.0) ** n * vals, vals)
    return (sign * vals).reshape(x.shape)


# --------------------------------------------------------------------------- disk spectrum


@dataclass(frozen=True)
class DiskMode:
    k: int
    ell: int
    E: float
    mu: float
    branch: int
    residual: float


@dataclass
class DiskSpectrum:
    """Lowest eigenvalues ``E = m^2 + mu^2`` of the squared operator on a disk, with partners listed."""

    R: float
    m: float
    modes: list = field(default_factory=list)
    source: str = "oracle"
    validation: dict | None = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([md.E for md in self.modes])

    def to_dict(self) -> dict:
        return {
            "source": self.source, "R": self.R, "m": self.m,
            "modes": [md.__dict__ for md in self.modes], "validation": self.validation,
        }


def secular_function(k: int, mu, R: float, m: float, branch: int = +1):
    """``(lam + m) J_k(mu R) - mu J_{k+1}(mu R)`` with ``lam = branch * sqrt(m^2 + mu^2)``."""
    mu = np.asarray(mu, dtype=float)
    lam = branch * np.sqrt(m * m + mu * mu)
    return (lam + m) * bessel_j(k, mu * R) - mu * bessel_j(k + 1, mu * R)


def _bisect(fun, a, b, fa, tol=1e-12, it=200):
    for _ in range(it):
        c = 0.5 * (a + b)
        fc = float(fun(c))
        if fc == 0.0:
            return c
        if (fc > 0) == (fa > 0):
            a, fa = c, fc
        else:
            b = c
        if b - a <= tol * max(1.0, abs(c)):
            break
    return 0.5 * (a + b)


def _branch_roots(k, R, m, mu_max, branch, step):
    grid = np.arange(step, mu_max + step, step)
    vals = secular_function(k, grid, R, m, branch)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        f = lambda t: secular_function(k, np.array([t]), R, m, branch)[0]  # noqa: E731
        roots.append(_bisect(f, grid[i], grid[i + 1], vals[i]))
    return roots


def disk_secular_spectrum(R: float, m: float, count: int = 12, k_max: int | None = None,
                          validate: bool = False) -> DiskSpectrum:
    """The ``count`` lowest eigenvalues (with multiplicity) of the squared confined operator on a disk.

    Each root of the positive branch at index ``k`` is listed together with
    the independently computed negative-branch root at ``-k - 1``.  With
    ``validate=True`` the lowest six values are also checked against a
    fine-mesh finite-element solve (:func:`cross_validate_disk`).
    """
    if R <= 0:
        raise OracleError("R must be positive")
    if not 1 <= count <= 50:
        raise OracleError("count must lie in [1, 50]")
    mu_max = 8.0 / R
    for _ in range(12):
        kk = int(math.ceil(mu_max * R + 3)) if k_max is None else max(k_max, int(math.ceil(mu_max * R + 3)))
        found = None
        for step_div in (400.0, 1600.0, 6400.0):
            step = (math.pi / R) / step_div * 10.0
            modes = []
            for k in range(-kk - 1, kk + 1):
                for ell, mu in enumerate(_branch_roots(k, R, m, mu_max, +1, step), start=1):
                    res = abs(float(secular_function(k, np.array([mu]), R, m, +1)[0]))
                    modes.append(DiskMode(k, ell, m * m + mu * mu, mu, +1, res))
                for ell, mu in enumerate(_branch_roots(k, R, m, mu_max, -1, step), start=1):
                    res = abs(float(secular_function(k, np.array([mu]), R, m, -1)[0]))
                    modes.append(DiskMode(k, ell, m * m + mu * mu, mu, -1, res))
            pos = sorted(md.mu for md in modes if md.branch == +1)
            neg = sorted(md.mu for md in modes if md.branch == -1)
            if len(pos) == len(neg) and np.allclose(pos, neg, rtol=0, atol=1e-9 * max(1.0, mu_max)):
                found = modes
                break
        if found is None:
            raise BracketingError("positive and negative branches disagree after grid refinement")
        # modes near mu_max may be incomplete; keep a safety band
        complete = [md for md in found if md.mu < 0.9 * mu_max]
        if len(complete) >= count:
            complete.sort(key=lambda md: (md.E, md.branch, md.k))
            spec = DiskSpectrum(R=float(R), m=float(m), modes=complete[:count])
            if validate:
                spec.validation = cross_validate_disk(R, m, spec)
            return spec
        mu_max *= 2.0
    raise BracketingError("could not bracket enough roots")


def partner_gaps(spec: DiskSpectrum) -> float:
    """Largest mismatch between each positive-branch root at ``k`` and the negative root at ``-k-1``."""
    pos = {(md.k, md.ell): md.E for md in spec.modes if md.branch == +1}
    neg = {(-md.k - 1, md.ell): md.E for md in spec.modes if md.branch == -1}
    common = set(pos) & set(neg)
    return max((abs(pos[key] - neg[key]) for key in common), default=0.0)


@lru_cache(maxsize=16)
def _fem_disk(R, m, h, j):
    from mitbag.assembly import apply_constraint, assemble_A2_form, to_real_frame
    from mitbag.eigensolver import smallest_eigenpairs
    from mitbag.geometry import disk_domain
    from mitbag.mesh import mesh_domain

    alg = build_dirac_matrices(2)
    pair = apply_constraint(to_real_frame(assemble_A2_form(mesh_domain(disk_domain(R), h), alg, m), alg))
    return tuple(smallest_eigenpairs(pair.stiffness, pair.mass, j, tol=1e-10).eigenvalues)


def observed_order(coarse, mid, fine, ratio: float = 2.0) -> np.ndarray:
    """Convergence order from three solves at mesh sizes ``h, h/ratio, h/ratio^2``."""
    coarse, mid, fine = (np.asarray(x, dtype=float) for x in (coarse, mid, fine))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.abs((coarse - mid) / (mid - fine))) / np.log(ratio)


def richardson(mid, fine, ratio: float = 2.0, order: float = 2.0) -> np.ndarray:
    """Extrapolate ``E(h) = E + C h^order`` from solves at ``h`` and ``h/ratio``."""
    mid, fine = np.asarray(mid, dtype=float), np.asarray(fine, dtype=float)
    return fine + (fine - mid) / (ratio**order - 1.0)


def fem_disk_spectrum(R: float, m: float, h: float, n: int = 6) -> np.ndarray:
    """Lowest ``n`` eigenvalues of the constrained form on a meshed disk (cached)."""
    return np.array(_fem_disk(float(R), float(m), float(h), int(n)))


def cross_validate_disk(R: float, m: float, spec: DiskSpectrum | None = None, h: float = 0.01,
                        n: int = 6, rtol: float = 2e-3) -> dict:
    """Compare the lowest ``n`` oracle values with a fine-mesh constrained solve; raise on disagreement."""
    if spec is None:
        spec = disk_secular_spectrum(R, m, max(n, 6))
    if h > 0.01:
        raise OracleError("cross-validation requires h <= 0.01")
    fem = np.array(_fem_disk(float(R), float(m), float(h), int(n)))
    ref = spec.eigenvalues[:n]
    rel = np.abs(fem - ref) / np.abs(ref)
    report = {"h": h, "fem": fem.tolist(), "oracle": ref.tolist(), "rel_gap": rel.tolist(),
              "passed": bool(np.all(rel <= rtol))}
    if not report["passed"]:
        raise CrossValidationError(f"oracle and solver disagree: max relative gap {rel.max():.3e}")
    return report


# --------------------------------------------------------------------------- quadrature oracle

_EDGE_MID = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def _element_data(mesh: SpinorMesh, fn: np.ndarray):
    """Per-triangle constant gradient ``(T, 2, N)`` and midpoint values ``(T, 3, N)`` of a P1 field."""
    p = mesh.nodes[mesh.triangles]
    v = fn[mesh.triangles]  # (T, 3, N)
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=1)  # rows are edge vectors
    dv = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=1)  # (T, 2, N)
    grad = np.linalg.solve(J, dv)  # J @ grad = dv  ->  grad[:, k, :] = d/dx_k
    area = 0.5 * np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
    mids = np.einsum("qi,tia->tqa", _EDGE_MID, v)
    return grad, mids, area


def _quad_densities(mesh: SpinorMesh, fn: np.ndarray):
    """``int |grad f|^2`` and ``int |f|^2`` over each bilinear cell, 3x3 Gauss in reference coordinates."""
    if len(mesh.quads) == 0:
        return np.zeros(0), np.zeros(0)
    x, w = np.polynomial.legendre.leggauss(3)
    p = mesh.nodes[mesh.quads]
    v = fn[mesh.quads]
    # bilinear map x = c0 + c1 xi + c2 eta + c3 xi eta, same for the field
    def coeffs(a):
        a0, a1, a2, a3 = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
        return (0.25 * (a0 + a1 + a2 + a3), 0.25 * (-a0 + a1 + a2 - a3),
                0.25 * (-a0 - a1 + a2 + a3), 0.25 * (a0 - a1 + a2 - a3))
    _, px1, px2, px3 = coeffs(p)
    u0, u1, u2, u3 = coeffs(v)
    grad_sq = np.zeros(len(p))
    mass = np.zeros(len(p))
    for xi, wx in zip(x, w):
        for eta, we in zip(x, w):
            dxdxi = px1 + px3 * eta
            dxdeta = px2 + px3 * xi
            det = dxdxi[:, 0] * dxdeta[:, 1] - dxdxi[:, 1] * dxdeta[:, 0]
            du_xi = u1 + u3 * eta
            du_eta = u2 + u3 * xi
            # solve [dx/dxi; dx/deta] grad u = [du/dxi; du/deta]
            gx = (dxdeta[:, 1, None] * du_xi - dxdxi[:, 1, None] * du_eta) / det[:, None]
            gy = (-dxdeta[:, 0, None] * du_xi + dxdxi[:, 0, None] * du_eta) / det[:, None]
            val = u0 + u1 * xi + u2 * eta + u3 * xi * eta
            grad_sq += wx * we * det * (_sq(gx) + _sq(gy))
            mass += wx * we * det * _sq(val)
    return grad_sq, mass


def _facet_gauss_values(mesh: SpinorMesh, fn, facets):
    a, b = mesh.facets[facets, 0], mesh.facets[facets, 1]
    vals = np.stack([(1 - t) * fn[a] + t * fn[b] for t in GAUSS2], axis=1)  # (F, 2, N)
    return vals, 0.5 * mesh.facet_lengths[facets]


def _sq(v):
    return np.sum(np.abs(v) ** 2, axis=-1)


def _end_normals(mesh: SpinorMesh, facets) -> np.ndarray:
    """Normals at both ends of each facet ``(F, 2, 2)``: the curve normal at a regular node, the
    facet's own edge normal at a corner."""
    ends = mesh.facets[facets]
    corner = np.isin(ends, mesh.corner_nodes)
    out = np.zeros(ends.shape + (2,))
    if (~corner).any():
        out[~corner] = outer_normal(mesh.domain, mesh.nodes[ends[~corner]].reshape(-1, 2))
    if corner.any():
        a, b = mesh.nodes[ends[:, 0]], mesh.nodes[ends[:, 1]]
        t = (b - a) / np.linalg.norm(b - a, axis=1)[:, None]
        nu = np.stack([t[:, 1], -t[:, 0]], axis=1)
        # outward: away from the domain center
        flip = np.sum(nu * (a - mesh.domain.center), axis=1) < 0
        nu[flip] *= -1
        out[corner] = np.repeat(nu[:, None], 2, axis=1)[corner]
    return out


def _vertex_projector_sq(mesh: SpinorMesh, alg: DiracAlgebra, fn, facets, sign) -> float:
    nus = _end_normals(mesh, facets)
    length = mesh.facet_lengths[facets]
    total = 0.0
    for e in range(2):
        vals = fn[mesh.facets[facets, e]]
        for nu, v, L in zip(nus[:, e], vals, length):
            P = boundary_projector(alg, nu, sign)
            total += 0.5 * L * float(np.sum(np.abs(P @ v) ** 2))
    return total


def quadrature_form_value(mesh: SpinorMesh, spec: dict, f, algebra: DiracAlgebra | None = None) -> float:
    """Evaluate a quadratic form on the nodal field ``f`` without assembling a matrix.

    ``spec["form"]`` is one of ``A2``, ``B2``, ``penalty``, ``free``,
    ``exterior``; parameters ``m``, ``M``, ``gamma`` as appropriate.  Volume
    terms are exact, scalar boundary terms use two Gauss points per facet
    and projector terms use the facet endpoints.
    """
    alg = algebra or build_dirac_matrices(2)
    N = alg.N
    fn = np.asarray(f, dtype=complex).reshape(-1, N)
    if len(fn) != mesh.n_nodes:
        raise OracleError("field does not match the mesh")
    form = spec["form"]
    m = float(spec.get("m", 0.0))
    grad, mids, area = _element_data(mesh, fn)
    inside = mesh.triangle_region == 0
    dens_grad = np.sum(np.abs(grad) ** 2, axis=(1, 2)) * area
    dens_mass = _sq(mids).mean(axis=1) * area
    qg, qm = _quad_densities(mesh, fn)
    grad_all = dens_grad.sum() + qg.sum()
    mass_in = dens_mass[inside].sum()
    mass_out = dens_mass[~inside].sum() + qm.sum()
    iface = np.flatnonzero(mesh.facet_tag == 0)
    gv, half = _facet_gauss_values(mesh, fn, iface)
    kappa = mesh.facet_gauss_kappa[iface]

    def bint(weight):
        return float(np.sum(half[:, None] * weight))

    if form in ("A2", "penalty") and mesh.kind != "domain":
        raise OracleError(f"form {form} lives on the domain mesh")
    if form == "A2":
        return float(grad_all + m * m * mass_in + bint((m + 0.5 * kappa) * _sq(gv)))
    if form == "penalty":
        M = float(spec["M"])
        return float(grad_all + m * m * mass_in
                     + bint((m - 1.0 / math.sqrt(M) + 0.5 * kappa) * _sq(gv))
                     + 2.0 * (M - m) * _vertex_projector_sq(mesh, alg, fn, iface, -1))
    if form == "free":
        M = float(spec.get("M", m))
        return float(grad_all + m * m * mass_in + M * M * mass_out)
    if form == "B2":
        if mesh.kind != "box":
            raise OracleError("B2 form needs a box mesh")
        M = float(spec["M"])
        jump = 2.0 * _vertex_projector_sq(mesh, alg, fn, iface, -1) - bint(_sq(gv))
        return float(grad_all + m * m * mass_in + M * M * mass_out + (M - m) * jump)
    if form == "exterior":
        gam = float(spec["gamma"])
        return float(dens_grad[~inside].sum() + qg.sum() + gam * gam * mass_out
                     - bint((gam + 0.5 * kappa) * _sq(gv)))
    raise OracleError(f"unknown form {form!r}")


def dirac_norm_squared(mesh: SpinorMesh, algebra: DiracAlgebra, m: float, f) -> float:
    """``||D_m f||^2`` over the domain triangles for a P1 field, element by element.

    ``D_m f = -i sum_k alpha_k d_k f + m beta f`` is affine on each triangle,
    so the three-edge-midpoint rule integrates its square exactly.
    """
    N = algebra.N
    fn = np.asarray(f, dtype=complex).reshape(-1, N)
    grad, mids, area = _element_data(mesh, fn[: mesh.n_nodes])
    inside = mesh.triangle_region == 0
    grad, mids, area = grad[inside], mids[inside], area[inside]
    kin = sum(-1j * np.einsum("ab,tb->ta", ak, grad[:, k, :]) for k, ak in enumerate(algebra.alphas))
    vals = kin[:, None, :] + m * np.einsum("ab,tqb->tqa", algebra.beta, mids)
    return float((_sq(vals).mean(axis=1) * area).sum())
