"""Smallest eigenpairs of sparse Hermitian pencils ``K v = E M v``.

Block shift-invert Lanczos in the ``M`` inner product with full (two-pass
classical Gram-Schmidt) reorthogonalization and thick restart.  The
operator is ``T = (K - sigma M)^{-1} M``, which is ``M``-self-adjoint with
eigenvalues ``1 / (E - sigma)``; for ``sigma`` below the spectrum the
largest of these belong to the smallest ``E``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 2000


class EigensolverError(RuntimeError):
    pass


class ShiftBreakdownError(EigensolverError):
    pass


class DimensionCapError(EigensolverError):
    pass


class PartialConvergenceError(EigensolverError):
    """Raised when the iteration cap is hit; ``result`` holds the converged pairs."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class SpectrumResult:
    """Ascending eigenvalues with ``M``-orthonormal eigenvectors (columns).

    ``residual_norms`` are relative backward errors
    ``||K v - E M v|| / ((||K||_1 + |E| ||M||_1) ||v||)``; ``abs_residuals``
    are the plain ``||K v - E M v|| / ||v||``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residual_norms: np.ndarray
    abs_residuals: np.ndarray
    params: dict = field(default_factory=dict)
    iterations: int = 0
    wall_time: float = 0.0
    shift: float = 0.0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residual_norms": [float(x) for x in self.residual_norms],
            "abs_residuals": [float(x) for x in self.abs_residuals],
            "params": self.params,
            "iterations": int(self.iterations),
            "wall_time": float(self.wall_time),
            "shift": float(self.shift),
            "converged": bool(self.converged),
        }


# --------------------------------------------------------------------------- factorization


class ShiftedFactor:
    """Sparse LU of ``K - sigma M`` with diagonal pivoting, exposing the inertia when it is reliable."""

    def __init__(self, K, M, sigma):
        A = (K - sigma * M).tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spla.MatrixRankWarning)
            try:
                self.lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                    options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise ShiftBreakdownError(f"factorization failed at shift {sigma:.6g}: {exc}") from exc
        d = self.lu.U.diagonal()
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            raise ShiftBreakdownError(f"singular factor at shift {sigma:.6g}")
        self.sigma = sigma
        symmetric = np.array_equal(self.lu.perm_r, self.lu.perm_c)
        self.negative_pivots = int(np.sum(d.real < 0)) if symmetric else None

    def solve(self, b):
        b = np.asarray(b)
        if np.iscomplexobj(b) and not np.iscomplexobj(self.lu.U.data):
            return self.lu.solve(np.ascontiguousarray(b.real)) + 1j * self.lu.solve(np.ascontiguousarray(b.imag))
        return self.lu.solve(b.astype(self.lu.U.dtype, copy=False))


def _as_working(A):
    """CSR copy in real arithmetic when the imaginary part is negligible, complex otherwise."""
    A = sp.csr_matrix(A)
    if np.iscomplexobj(A.data):
        if A.nnz == 0 or np.abs(A.data.imag).max() <= 1e-14 * np.abs(A.data).max():
            return A.real.astype(float).tocsr()
        return A.astype(complex)
    return A.astype(float)


def _default_shift(K, M):
    dk = np.abs(K.diagonal().real)
    dm = np.abs(M.diagonal().real)
    scale = float(np.median(dk) / max(np.median(dm), 1e-300))
    # close to zero so the wanted eigenvalues stay well separated after inversion;
    # the inertia check moves it down if anything lies below
    return -1e-8 * scale, scale


def _factor_with_retreat(K, M, sigma, scale, max_retreats=3):
    tried = []
    for attempt in range(max_retreats + 1):
        try:
            fac = ShiftedFactor(K, M, sigma)
            if fac.negative_pivots:
                raise ShiftBreakdownError(f"{fac.negative_pivots} eigenvalues below shift {sigma:.6g}")
            return fac, attempt
        except ShiftBreakdownError as exc:
            tried.append(str(exc))
            sigma = sigma - 10.0 ** (attempt + 1) * max(abs(sigma), 1e-3 * scale, 1e-12)
    raise ShiftBreakdownError("shift retreat exhausted: " + "; ".join(tried))


# --------------------------------------------------------------------------- Lanczos


def _morth(X, V, MV, M, rng=None, tol=1e-10):
    """``M``-orthonormalize the block ``X`` against ``V`` and itself (CGS2 + eigen-QR with deflation)."""
    for _ in range(2):
        if V.shape[1]:
            X = X - V @ (MV.conj().T @ X)
    MX = M @ X
    G = X.conj().T @ MX
    G = 0.5 * (G + G.conj().T)
    w, U = np.linalg.eigh(G)
    ref = max(float(np.max(np.abs(np.diag(G)), initial=0.0)), 1e-300)
    keep = w > tol * ref
    X = (X @ U[:, keep]) / np.sqrt(w[keep])
    if X.shape[1]:
        if V.shape[1]:
            X = X - V @ (MV.conj().T @ X)
        MX = M @ X
        G = X.conj().T @ MX
        L = np.linalg.cholesky(0.5 * (G + G.conj().T))
        X = sla.solve_triangular(L, X.conj().T, lower=True).conj().T
        MX = M @ X
    return X, MX


def _start_block(rng, n, b, dtype):
    X = rng.standard_normal((n, b))
    if dtype == complex:
        X = X + 1j * rng.standard_normal((n, b))
    return X


def smallest_eigenpairs(K, M, j: int, tol: float = 1e-8, shift: float | None = None,
                        block: int = 4, basis_size: int | None = None, max_restarts: int | None = None,
                        seed: int = 0, params: dict | None = None) -> SpectrumResult:
    """The ``j`` algebraically smallest eigenpairs of ``(K, M)`` with multiplicities."""
    t_start = time.perf_counter()
    K = _as_working(K)
    M = _as_working(M)
    if K.dtype != M.dtype:
        K, M = K.astype(complex), M.astype(complex)
    dtype = K.dtype
    n = K.shape[0]
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise EigensolverError("K and M must be square and of equal size")
    if not 1 <= j <= n:
        raise EigensolverError("need 1 <= j <= dim")
    if tol <= 0:
        raise EigensolverError("tol must be positive")
    sigma0, scale = _default_shift(K, M)
    if shift is not None:
        sigma0 = float(shift)
    fac, retreats = _factor_with_retreat(K, M, sigma0, scale)
    sigma = fac.sigma
    rng = np.random.default_rng(seed)
    b = min(block, n)
    m_max = min(n, basis_size or max(2 * j + 4 * b, 40))
    keep = min(n, max(j + b, j + 2))
    cap = max_restarts if max_restarts is not None else 50 * j
    normK = float(abs(K).sum(axis=0).max())
    normM = float(abs(M).sum(axis=0).max())

    def apply_T(X):
        return fac.solve(M @ X)

    # preallocated basis: V, M V and T V side by side, the first `used` columns live
    V = np.zeros((n, m_max), dtype)
    MV = np.zeros((n, m_max), dtype)
    W = np.zeros((n, m_max), dtype)
    used = 0
    X = _start_block(rng, n, b, dtype)
    X, MX = _morth(X, V[:, :0], MV[:, :0], M, rng)
    restarts = 0
    conv_mask = np.zeros(0, bool)
    while True:
        # expand the Krylov basis block by block
        while X.shape[1] and used < m_max:
            k = min(X.shape[1], m_max - used)
            V[:, used:used + k] = X[:, :k]
            MV[:, used:used + k] = MX[:, :k]
            W[:, used:used + k] = apply_T(X[:, :k])
            used += k
            if used >= m_max:
                break
            X, MX = _morth(W[:, used - k:used], V[:, :used], MV[:, :used], M, rng)
            if X.shape[1] == 0 and used < n:
                # invariant subspace found: continue with fresh random directions
                X = _start_block(rng, n, b, dtype)
                X, MX = _morth(X, V[:, :used], MV[:, :used], M, rng)
        H = MV[:, :used].conj().T @ W[:, :used]
        H = 0.5 * (H + H.conj().T)
        theta, S = np.linalg.eigh(H)
        order = np.argsort(-theta)
        theta, S = theta[order], S[:, order]
        E = sigma + 1.0 / theta
        nw = min(j, len(theta))
        kk = min(keep, len(theta))
        # Ritz vectors only for the kept columns
        Y = V[:, :used] @ S[:, :kk]
        WY = W[:, :used] @ S[:, :kk]
        R = WY[:, :nw] - Y[:, :nw] * theta[:nw]
        rnorm = np.sqrt(np.maximum(np.real(np.einsum("ij,ij->j", R.conj(), M @ R)), 0.0))
        Yw = Y[:, :nw]
        res = np.linalg.norm(K @ Yw - (M @ Yw) * E[:nw], axis=0)
        vn = np.linalg.norm(Yw, axis=0)
        back = res / ((normK + np.abs(E[:nw]) * normM) * vn)
        conv_mask = (rnorm <= tol * np.abs(theta[:nw])) & (back <= tol)
        exhausted = used >= n
        if (conv_mask.all() and nw == j) or exhausted:
            break
        restarts += 1
        if restarts > cap:
            break
        # thick restart: Ritz vectors plus the residual block of the unconverged wanted pairs
        pending = [i for i in range(nw) if not conv_mask[i]]
        Rx = R[:, pending[:b]]
        if len(pending) < b and kk > nw:
            extra = WY[:, nw:kk] - Y[:, nw:kk] * theta[nw:kk]
            Rx = np.hstack([Rx, extra[:, : b - len(pending)]])
        V[:, :kk] = Y
        W[:, :kk] = WY
        MV[:, :kk] = M @ Y
        used = kk
        del Y, WY, R
        X, MX = _morth(Rx, V[:, :used], MV[:, :used], M, rng)
        if X.shape[1] == 0:
            X = _start_block(rng, n, b, dtype)
            X, MX = _morth(X, V[:, :used], MV[:, :used], M, rng)
    vals = E[:nw]
    vecs = Yw
    # M-normalize, sort ascending
    nrm = np.sqrt(np.real(np.einsum("ij,ij->j", vecs.conj(), M @ vecs)))
    vecs = vecs / nrm
    order = np.argsort(vals)
    vals, vecs, back = vals[order], vecs[:, order], back[order]
    abs_res = np.linalg.norm(K @ vecs - (M @ vecs) * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    conv = conv_mask[order]
    out = SpectrumResult(
        eigenvalues=np.real(vals), eigenvectors=vecs, residual_norms=back, abs_residuals=abs_res,
        params=dict(params or {}), iterations=restarts, wall_time=time.perf_counter() - t_start,
        shift=sigma, converged=bool(conv.all()),
    )
    out.params.setdefault("shift_retreats", retreats)
    if not out.converged:
        good = np.flatnonzero(conv)
        partial = SpectrumResult(
            eigenvalues=out.eigenvalues[good], eigenvectors=vecs[:, good], residual_norms=back[good],
            abs_residuals=abs_res[good], params=out.params, iterations=restarts,
            wall_time=out.wall_time, shift=sigma, converged=False,
        )
        raise PartialConvergenceError(f"{len(good)} of {j} pairs converged in {restarts} restarts", partial)
    return out


def dense_spectrum(K, M, vectors: bool = False):
    """Full generalized spectrum by dense reduction (oracle; dimension at most 2000)."""
    n = K.shape[0]
    if n > DENSE_CAP:
        raise DimensionCapError(f"dense oracle is capped at dimension {DENSE_CAP}, got {n}")
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M)
    Kd = 0.5 * (Kd + Kd.conj().T)
    Md = 0.5 * (Md + Md.conj().T)
    if vectors:
        return sla.eigh(Kd, Md)
    return sla.eigh(Kd, Md, eigvals_only=True)
