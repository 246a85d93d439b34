"""Sparse Hermitian quadratic forms on spinor-valued P1 fields.

Degrees of freedom are ordered node-major: component ``a`` of node ``p`` is
dof ``p * N + a``.  Volume terms are block diagonal over components.  Scalar
boundary terms ``c |f|^2`` use the two-point Gauss rule per facet with the
exact curvature of the parent curve; projector terms ``|P_(+/-) f|^2`` use
the trapezoidal rule with the exact normal at each facet end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from mitbag.clifford import DiracAlgebra, boundary_projectors_batch, real_frame
from mitbag.mesh import GAUSS2, SpinorMesh


class AssemblyError(ValueError):
    pass


class InterfaceError(AssemblyError):
    pass


class ParameterError(AssemblyError):
    pass


class ConstraintDegeneracyError(AssemblyError):
    pass


class PreconditionError(AssemblyError):
    pass


@dataclass(frozen=True, eq=False)
class FormPair:
    """Stiffness/mass pencil of one quadratic form.

    ``constraint`` (if set) has the contract: admissible ``f`` satisfy
    ``constraint @ f = 0``.  A reduced pair carries the ``prolongation`` ``Z``
    mapping reduced coordinates back to nodal dofs.
    """

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    constraint: sp.csr_matrix | None = None
    prolongation: sp.csr_matrix | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def ndof(self) -> int:
        return self.stiffness.shape[0]

    def value(self, f) -> float:
        f = np.asarray(f)
        return float(np.real(np.vdot(f, self.stiffness @ f)))

    def norm2(self, f) -> float:
        f = np.asarray(f)
        return float(np.real(np.vdot(f, self.mass @ f)))


# --------------------------------------------------------------------------- scalar P1 blocks


def p1_gradients(mesh: SpinorMesh):
    """Barycentric gradients ``(T, 3, 2)`` and signed areas ``(T,)``."""
    p = mesh.nodes[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise AssemblyError("inverted or degenerate triangle")
    inv = np.empty((len(det), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    g12 = inv  # rows: grad of lambda_1, lambda_2
    g0 = -g12.sum(axis=1)
    return np.concatenate([g0[:, None, :], g12], axis=1), 0.5 * det


_QUAD_REF = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def q1_reference(order: int = 3):
    """Tensor Gauss points on ``[-1, 1]^2``: weights ``(G,)``, shape values ``(G, 4)``, gradients ``(G, 4, 2)``."""
    x, w = np.polynomial.legendre.leggauss(order)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    wt = np.outer(w, w).ravel()
    sx, sy = _QUAD_REF[:, 0], _QUAD_REF[:, 1]
    phi = 0.25 * (1 + xi[:, None] * sx) * (1 + eta[:, None] * sy)
    dphi = np.stack([0.25 * sx * (1 + eta[:, None] * sy), 0.25 * sy * (1 + xi[:, None] * sx)], axis=-1)
    return wt, phi, dphi


def q1_element_matrices(mesh: SpinorMesh):
    """Bilinear stiffness and mass ``(Q, 4, 4)`` for the quads of ``mesh``."""
    wt, phi, dphi = q1_reference()
    p = mesh.nodes[mesh.quads]  # (Q, 4, 2)
    J = np.einsum("qak,gal->qgkl", p, dphi)  # d x_k / d xi_l
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise AssemblyError("inverted bilinear cell")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    grad = np.einsum("gal,qglk->qgak", dphi, inv)
    wd = wt[None] * det
    ke = np.einsum("qg,qgak,qgbk->qab", wd, grad, grad)
    me = np.einsum("qg,ga,gb->qab", wd, phi, phi)
    return ke, me


def _coo(cells, blocks, n):
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _scalar_blocks(mesh: SpinorMesh, region=None):
    """Scalar stiffness and mass over all cells, or those with ``region`` (0 inside, 1 outside)."""
    grads, area = p1_gradients(mesh)
    tris = mesh.triangles
    if region is not None:
        sel = mesh.triangle_region == region
        grads, area, tris = grads[sel], area[sel], tris[sel]
    n = mesh.n_nodes
    ke = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
    K, Mm = _coo(tris, ke, n), _coo(tris, me, n)
    if len(mesh.quads) and region in (None, 1):
        kq, mq = q1_element_matrices(mesh)
        K, Mm = K + _coo(mesh.quads, kq, n), Mm + _coo(mesh.quads, mq, n)
    return K, Mm


def _spin(A, N):
    return sp.kron(A, sp.identity(N, format="csr"), format="csr").astype(complex)


def boundary_matrix(mesh: SpinorMesh, weights: np.ndarray, facets: np.ndarray) -> sp.csr_matrix:
    """``sum_f sum_g (L_f/2) phi_i(g) phi_j(g) W_{f,g}`` for matrix weights ``W`` of shape ``(F, 2, N, N)``."""
    N = weights.shape[-1]
    n = mesh.n_nodes * N
    if len(facets) == 0:
        return sp.csr_matrix((n, n), dtype=complex)
    L = mesh.facet_lengths[facets]
    phi = np.array([[1.0 - t, t] for t in GAUSS2])  # (g, i)
    # (F, i, j, N, N)
    blk = 0.5 * L[:, None, None, None, None] * np.einsum("gi,gj,fgab->fijab", phi, phi, weights)
    nod = mesh.facets[facets]  # (F, 2)
    a = np.arange(N)
    rows = (nod[:, :, None, None, None] * N + a[None, None, None, :, None])
    cols = (nod[:, None, :, None, None] * N + a[None, None, None, None, :])
    rows = np.broadcast_to(rows, blk.shape).ravel()
    cols = np.broadcast_to(cols, blk.shape).ravel()
    return sp.coo_matrix((blk.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _scalar_weights(values, N):
    """Scalar Gauss-point values ``(F, 2)`` as multiples of the identity."""
    return values[:, :, None, None] * np.eye(N)[None, None]


def facet_end_normals(mesh: SpinorMesh, facets: np.ndarray) -> np.ndarray:
    """Exact normal at both ends of each interface facet, ``(F, 2, 2)``.

    A regular node uses the normal of the curve at the node; a corner node
    uses the normal of the facet's own (straight) edge.
    """
    normal_of = np.full((mesh.n_nodes, 2), np.nan)
    normal_of[mesh.boundary_nodes] = mesh.boundary_node_normals
    ends = mesh.facets[facets]
    out = normal_of[ends]
    for e in range(2):
        bad = np.isnan(out[:, e, 0])
        out[bad, e] = mesh.facet_normal[facets[bad]]
    return out


def vertex_boundary_matrix(mesh: SpinorMesh, weights: np.ndarray, facets: np.ndarray) -> sp.csr_matrix:
    """Trapezoidal boundary rule ``sum_f (L_f/2) (W_{f,0} at node 0 + W_{f,1} at node 1)``.

    ``weights`` has shape ``(F, 2, N, N)``, one matrix per facet end.
    """
    N = weights.shape[-1]
    n = mesh.n_nodes * N
    if len(facets) == 0:
        return sp.csr_matrix((n, n), dtype=complex)
    blk = 0.5 * mesh.facet_lengths[facets][:, None, None, None] * weights
    nod = mesh.facets[facets]
    a = np.arange(N)
    rows = np.broadcast_to(nod[:, :, None, None] * N + a[None, None, :, None], blk.shape).ravel()
    cols = np.broadcast_to(nod[:, :, None, None] * N + a[None, None, None, :], blk.shape).ravel()
    return sp.coo_matrix((blk.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def projector_matrix(mesh: SpinorMesh, algebra: DiracAlgebra, sign: int, facets=None) -> sp.csr_matrix:
    """``int |P_sign f|^2`` over interface facets, trapezoidal rule at exact nodal normals.

    Evaluating the projector at the nodes makes this term vanish exactly on
    fields that satisfy the nodal infinite-mass condition, so the large
    coefficients in front of it do not lock on curved boundaries.
    """
    if facets is None:
        facets = mesh.interface_facets()
    W = boundary_projectors_batch(algebra, facet_end_normals(mesh, facets), sign)
    return vertex_boundary_matrix(mesh, W, facets)


def boundary_coefficients(mesh: SpinorMesh, m: float, shift: float = 0.0) -> np.ndarray:
    """Scalar boundary weight ``m - shift + kappa/2`` at every interface Gauss point."""
    f = mesh.interface_facets()
    return m - shift + 0.5 * mesh.facet_gauss_kappa[f]


def _hermitian_check(K):
    diff = abs(K - K.getH()).sum()
    scale = max(abs(K).sum(), 1e-300)
    if diff > 1e-13 * scale:
        raise AssemblyError("assembled matrix is not Hermitian")


def _mass(mesh, N, region=None):
    return _scalar_blocks(mesh, region)


def _domain_only(mesh: SpinorMesh):
    if mesh.kind != "domain":
        raise AssemblyError("this form lives on the domain mesh; got a box mesh")


# --------------------------------------------------------------------------- forms


def constraint_matrix(mesh: SpinorMesh, algebra: DiracAlgebra) -> sp.csr_matrix:
    """Rows ``P_-(nu_p)`` at regular boundary nodes and the identity at corners."""
    N = algebra.N
    rows, cols, vals = [], [], []
    r0 = 0
    corners = set(mesh.corner_nodes.tolist())
    for node, nu in zip(mesh.boundary_nodes, mesh.boundary_node_normals):
        if int(node) in corners:
            block = np.eye(N, dtype=complex)
        else:
            block = boundary_projectors_batch(algebra, nu[None], -1)[0]
        rr, cc = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        rows.append((r0 + rr).ravel())
        cols.append((node * N + cc).ravel())
        vals.append(block.ravel())
        r0 += N
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(r0, mesh.n_nodes * N))


def assemble_free_form(mesh: SpinorMesh, algebra: DiracAlgebra, m: float, M: float | None = None) -> FormPair:
    """``int |grad f|^2 + m^2 |f|^2`` (inside) ``+ M^2 |f|^2`` (outside) with no boundary terms."""
    N = algebra.N
    K, Ms = _scalar_blocks(mesh)
    if mesh.kind == "box":
        _, Min = _mass(mesh, N, 0)
        _, Mout = _mass(mesh, N, 1)
        Mout_coef = m if M is None else M
        S = K + m * m * Min + Mout_coef * Mout_coef * Mout
    else:
        S = K + m * m * Ms
    return FormPair(_spin(S, N), _spin(Ms, N), metadata={"form": "free", "m": m, "M": M, "h": mesh.h})


def assemble_A2_form(mesh: SpinorMesh, algebra: DiracAlgebra, m: float) -> FormPair:
    """Constrained form ``int |grad f|^2 + m^2|f|^2 + int_bdry (m + kappa/2)|f|^2``."""
    _domain_only(mesh)
    N = algebra.N
    K, Ms = _scalar_blocks(mesh)
    f = mesh.interface_facets()
    B = boundary_matrix(mesh, _scalar_weights(boundary_coefficients(mesh, m), N), f)
    S = _spin(K + m * m * Ms, N) + B
    _hermitian_check(S)
    return FormPair(S, _spin(Ms, N), constraint=constraint_matrix(mesh, algebra),
                    metadata={"form": "A2", "m": m, "M": None, "h": mesh.h, "N": N})


def assemble_B2_form(mesh: SpinorMesh, algebra: DiracAlgebra, m: float, M: float) -> FormPair:
    """Whole-box form with mass ``m`` inside, ``M`` outside and the interface jump term.

    The jump ``(M - m) int (|P_- f|^2 - |P_+ f|^2)`` is assembled in the
    pointwise-equivalent form ``(M - m) int (2 |P_- f|^2 - |f|^2)``: the
    ``|f|^2`` part with the exact Gauss rule (it must cancel against the
    exterior energy, which is exact for linear traces) and the nonnegative
    projector part with the nodal rule.  No constraint; natural condition on
    the box boundary.
    """
    if mesh.kind != "box":
        raise InterfaceError("B2 form needs a fitted box mesh")
    if M < m:
        raise ParameterError("need M >= m")
    N = algebra.N
    K, Ms = _scalar_blocks(mesh)
    _, Min = _mass(mesh, N, 0)
    _, Mout = _mass(mesh, N, 1)
    B = 2.0 * projector_matrix(mesh, algebra, -1) - boundary_mass(mesh, algebra)
    S = _spin(K + m * m * Min + M * M * Mout, N) + (M - m) * B
    S = (0.5 * (S + S.getH())).tocsr()
    _hermitian_check(S)
    return FormPair(S, _spin(Ms, N), metadata={"form": "B2", "m": m, "M": M, "h": mesh.h, "N": N})


def assemble_penalty_form(mesh: SpinorMesh, algebra: DiracAlgebra, m: float, M: float) -> FormPair:
    """Penalty form ``k_M``: free domain form plus ``(m - M^{-1/2} + kappa/2)|f|^2 + 2(M - m)|P_- f|^2`` on the boundary."""
    _domain_only(mesh)
    if M <= 0:
        raise ParameterError("M must be positive")
    N = algebra.N
    K, Ms = _scalar_blocks(mesh)
    f = mesh.interface_facets()
    Bs = boundary_matrix(mesh, _scalar_weights(boundary_coefficients(mesh, m, 1.0 / math.sqrt(M)), N), f)
    Bp = projector_matrix(mesh, algebra, -1)
    S = _spin(K + m * m * Ms, N) + Bs + 2.0 * (M - m) * Bp
    S = (0.5 * (S + S.getH())).tocsr()
    _hermitian_check(S)
    return FormPair(S, _spin(Ms, N), metadata={"form": "penalty", "m": m, "M": M, "h": mesh.h, "N": N})


def assemble_exterior_form(mesh: SpinorMesh, algebra: DiracAlgebra, gamma: float) -> FormPair:
    """``int_ext |grad f|^2 + gamma^2|f|^2 - int_interface (gamma + kappa/2)|f|^2``.

    The mass matrix is the exterior ``L^2`` mass.
    """
    if mesh.kind != "box":
        raise InterfaceError("exterior form needs a box mesh")
    N = algebra.N
    Kout, Mout = _mass(mesh, N, 1)
    f = mesh.interface_facets()
    coef = gamma + 0.5 * mesh.facet_gauss_kappa[f]
    B = boundary_matrix(mesh, _scalar_weights(coef, N), f)
    S = _spin(Kout + gamma * gamma * Mout, N) - B
    return FormPair(S.tocsr(), _spin(Mout, N), metadata={"form": "exterior", "gamma": gamma, "h": mesh.h, "N": N})


def boundary_mass(mesh: SpinorMesh, algebra: DiracAlgebra) -> sp.csr_matrix:
    """``int_interface |f|^2`` as a matrix."""
    f = mesh.interface_facets()
    return boundary_matrix(mesh, _scalar_weights(np.ones((len(f), 2)), algebra.N), f)


def boundary_projector_mass(mesh: SpinorMesh, algebra: DiracAlgebra, sign: int) -> sp.csr_matrix:
    """``int_interface |P_sign f|^2`` as a matrix (same rule as the forms)."""
    return projector_matrix(mesh, algebra, sign)


# --------------------------------------------------------------------------- constraint


def _null_basis(block, tol=1e-10):
    u, s, vh = np.linalg.svd(block)
    rank = int(np.sum(s > tol * max(1.0, s.max(initial=0.0))))
    return vh[rank:].conj().T, rank


def constraint_prolongation(constraint: sp.csr_matrix, N: int) -> sp.csr_matrix:
    """Orthonormal basis ``Z`` of ``ker C`` assembled node by node."""
    C = constraint.tocsc()
    n = C.shape[1]
    n_nodes = n // N
    touched = np.zeros(n_nodes, dtype=bool)
    coo = C.tocoo()
    touched[np.unique(coo.col // N)] = True
    rows, cols, vals = [], [], []
    col = 0
    Ccsr = constraint.tocsr()
    # map each constrained node to its rows
    row_node = np.full(Ccsr.shape[0], -1)
    row_node[coo.row] = coo.col // N
    rows_of = {}
    for r, p in enumerate(row_node):
        rows_of.setdefault(int(p), []).append(r)
    for p in range(n_nodes):
        if not touched[p]:
            for a in range(N):
                rows.append(p * N + a)
                cols.append(col)
                vals.append(1.0)
                col += 1
            continue
        block = Ccsr[rows_of[p]][:, p * N:(p + 1) * N].toarray()
        z, rank = _null_basis(block)
        if rank == 0 or (rank != N and rank != N // 2):
            raise ConstraintDegeneracyError(f"constraint at node {p} has rank {rank}")
        for c in range(z.shape[1]):
            for a in range(N):
                if z[a, c] != 0:
                    rows.append(p * N + a)
                    cols.append(col)
                    vals.append(z[a, c])
            col += 1
    vals = np.asarray(vals)
    if np.iscomplexobj(vals) and np.abs(vals.imag).max(initial=0.0) == 0.0:
        vals = vals.real
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, col))


def apply_constraint(pair: FormPair) -> FormPair:
    """Restrict the pencil to admissible fields through an orthonormal per-node null-space basis."""
    if pair.constraint is None:
        raise AssemblyError("form has no constraint")
    N = pair.metadata.get("N", 2)
    Z = constraint_prolongation(pair.constraint, N)
    ZH = Z.getH().tocsr()
    K = (ZH @ pair.stiffness @ Z).tocsr()
    Mm = (ZH @ pair.mass @ Z).tocsr()
    K = (0.5 * (K + K.getH())).tocsr()
    Mm = (0.5 * (Mm + Mm.getH())).tocsr()
    return FormPair(K, Mm, constraint=None, prolongation=Z,
                    metadata={**pair.metadata, "reduced": True})


def frame_transform(n_nodes: int, U: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal ``I_nodes (x) U`` acting on node-major spinor dofs."""
    return sp.kron(sp.identity(n_nodes, format="csr"), sp.csr_matrix(U), format="csr")


def to_real_frame(pair: FormPair, algebra: DiracAlgebra) -> FormPair:
    """Rewrite an unreduced pair in a spinor frame where it is real symmetric.

    Eigenvalues are unchanged; vectors map back with :func:`from_real_frame`.
    Returns ``pair`` untouched when the algebra has no such frame.
    """
    if pair.prolongation is not None:
        raise AssemblyError("change the spinor frame before reducing the constraint")
    U = real_frame(algebra)
    if U is None:
        return pair
    N = algebra.N
    T = frame_transform(pair.ndof // N, U)
    Th = T.getH().tocsr()

    def real_part(A):
        A = (T @ A @ Th).tocsr()
        if A.nnz and abs(A.imag).max() > 1e-12 * max(abs(A).max(), 1e-300):
            raise AssemblyError("form is not real in the rotated frame")
        A = A.real.tocsr()
        A.eliminate_zeros()
        return A

    C = None
    if pair.constraint is not None:
        C = (pair.constraint @ Th).tocsr()
        if np.abs(C.data.imag).max(initial=0.0) <= 1e-12:
            C = C.real.tocsr()
    meta = dict(pair.metadata, frame="real")
    return FormPair(real_part(pair.stiffness), real_part(pair.mass), constraint=C, metadata=meta)


def from_real_frame(vectors: np.ndarray, algebra: DiracAlgebra) -> np.ndarray:
    """Map node-major dof vectors (rows are dofs) from the real frame back to the standard one."""
    U = real_frame(algebra)
    if U is None:
        return vectors
    Th = frame_transform(vectors.shape[0] // algebra.N, U).getH()
    return np.asarray(Th @ vectors)


def restrict_to_domain(mesh: SpinorMesh, field_box: np.ndarray, N: int) -> np.ndarray:
    return np.asarray(field_box)[: mesh.n_domain_nodes * N]


# --------------------------------------------------------------------------- extension trial


def _trace_at(mesh: SpinorMesh, f_nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Linear interpolation of a boundary trace (``(nodes, N)`` on the domain mesh) at curve points."""
    dom = mesh.domain
    bn = mesh.boundary_nodes
    bp = mesh.nodes[bn]
    c = dom.center
    ang_nodes = np.unwrap(np.arctan2(bp[:, 1] - c[1], bp[:, 0] - c[0]))
    a0 = ang_nodes[0]
    th = a0 + np.mod(np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0]) - a0, 2 * np.pi)
    q = np.clip(np.searchsorted(ang_nodes, th, side="right") - 1, 0, len(bn) - 1)
    pa, pb = bp[q], bp[(q + 1) % len(bn)]
    # intersect ray from center through the point with the chord pa-pb
    e = points - c
    d = pb - pa
    den = d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]
    u = ((c[0] - pa[:, 0]) * e[:, 1] - (c[1] - pa[:, 1]) * e[:, 0]) / den
    u = np.clip(u, 0.0, 1.0)[:, None]
    fa = f_nodes[bn[q]]
    fb = f_nodes[bn[(q + 1) % len(bn)]]
    return (1.0 - u) * fa + u * fb


def extension_trial(mesh: SpinorMesh, algebra: DiracAlgebra, f_domain: np.ndarray, M: float,
                    tol: float = 1e-10) -> np.ndarray:
    """Extend a domain field by ``f(S(x)) exp(-M d(x))`` to every exterior node of the box mesh.

    ``f_domain`` is the nodal dof vector on the domain mesh (its nodes are the
    first nodes of the box mesh); its trace must satisfy ``P_- f = 0``.
    """
    if mesh.kind != "box":
        raise InterfaceError("extension_trial needs a box mesh")
    N = algebra.N
    f_nodes = np.asarray(f_domain, dtype=complex).reshape(-1, N)
    if len(f_nodes) != mesh.n_domain_nodes:
        raise AssemblyError("field size does not match the domain mesh")
    scale = max(np.abs(f_nodes).max(), 1e-300)
    corners = set(mesh.corner_nodes.tolist())
    for node, nu in zip(mesh.boundary_nodes, mesh.boundary_node_normals):
        v = f_nodes[node]
        if int(node) in corners:
            bad = np.abs(v).max()
        else:
            bad = np.abs(boundary_projectors_batch(algebra, nu[None], -1)[0] @ v).max()
        if bad > tol * scale:
            raise PreconditionError(f"trace violates the boundary condition at node {node} ({bad:.2e})")
    out = np.zeros((mesh.n_nodes, N), dtype=complex)
    out[: mesh.n_domain_nodes] = f_nodes
    ext = mesh.nodes[mesh.n_domain_nodes:]
    if len(ext):
        d, S = mesh.domain.nearest_point(ext)
        out[mesh.n_domain_nodes:] = _trace_at(mesh, f_nodes, S) * np.exp(-M * d)[:, None]
    return out.ravel()


# --------------------------------------------------------------------------- triplet export


def export_triplets(pair: FormPair, path, which: str = "stiffness") -> None:
    """Write ``row col re im`` lines after a one-line JSON header ``{form, m, M, h, ndof}``."""
    A = getattr(pair, which).tocoo()
    header = {k: pair.metadata.get(k) for k in ("form", "m", "M", "h")}
    header["ndof"] = int(A.shape[0])
    header["matrix"] = which
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for r, c, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")


def import_triplets(path):
    """Inverse of :func:`export_triplets`; returns ``(header, csr_matrix)``."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        data = np.loadtxt(fh, ndmin=2)
    n = header["ndof"]
    if data.size == 0:
        return header, sp.csr_matrix((n, n), dtype=complex)
    A = sp.coo_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))
    return header, A.tocsr()


def with_metadata(pair: FormPair, **kw) -> FormPair:
    return replace(pair, metadata={**pair.metadata, **kw})
