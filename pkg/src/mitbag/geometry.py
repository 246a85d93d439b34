"""Bounded convex planar domains with piecewise smooth boundary.

A domain is stored as a closed, counter-clockwise chain of smooth boundary
pieces (straight segments, a full circle, or corner fillets) together with a
center from which the domain is star-shaped.  Every query (normals,
curvature, distance, radial function) is answered from the exact pieces,
never from a sampled approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate

TWO_PI = 2.0 * np.pi
SINGULAR_TOL = 1e-12


class GeometryError(ValueError):
    pass


class ConvexityError(GeometryError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TopologyError(GeometryError):
    pass


class SingularPointError(GeometryError):
    pass


class DomainError(GeometryError):
    pass


class ParameterError(GeometryError):
    pass


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _rot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


# --------------------------------------------------------------------------- pieces


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))

    @property
    def direction(self):
        return (self.b - self.a) / self.length

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return self.a + s[..., None] * self.direction

    def tangent(self, s):
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(self.direction, s.shape + (2,)).copy()

    def curvature(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def param_from_ray(self, center, e):
        d = self.b - self.a
        u = _cross(center - self.a, e) / _cross(d, e)
        return np.clip(u, 0.0, 1.0) * self.length

    def closest(self, x):
        d = self.direction
        s = np.clip((x - self.a) @ d, 0.0, self.length)
        return s


@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float

    @property
    def length(self):
        return TWO_PI * self.radius

    def point(self, s):
        phi = np.asarray(s, dtype=float) / self.radius
        return self.center + self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def tangent(self, s):
        phi = np.asarray(s, dtype=float) / self.radius
        return np.stack([-np.sin(phi), np.cos(phi)], axis=-1)

    def curvature(self, s):
        return np.full_like(np.asarray(s, dtype=float), 1.0 / self.radius)

    def param_from_ray(self, center, e):
        # rays are cast from the circle center
        return np.mod(np.arctan2(e[..., 1], e[..., 0]), TWO_PI) * self.radius

    def closest(self, x):
        v = x - self.center
        return np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI) * self.radius


# Curvature bump b(x) = c (1 - x^2)^4 on [-1, 1] with unit integral; its
# antiderivative B maps [-1, 1] onto [0, 1].
_BUMP = npoly.polypow([1.0, 0.0, -1.0], 4) * (315.0 / 256.0)
_BUMP_INT = npoly.polyint(_BUMP, lbnd=-1.0)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _unit_fillet_position(x, turn):
    """Position of the unit-scale fillet at bump coordinate ``x`` (starts at 0, heading +x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    half = 0.5 * (x + 1.0)
    u = -1.0 + half[:, None] * (_GL_X[None, :] + 1.0)
    phi = turn * npoly.polyval(u, _BUMP_INT)
    w = half[:, None] * _GL_W[None, :]
    return np.stack([(w * np.cos(phi)).sum(axis=1), (w * np.sin(phi)).sum(axis=1)], axis=-1)


def _fillet_setback(turn):
    """Distance from the fillet start to the intersection of its two tangent lines, unit scale."""
    q = _unit_fillet_position(1.0, turn)[0]
    mu = -q[1] / np.sin(turn)
    return float(q[0] + mu * np.cos(turn))


@dataclass(frozen=True)
class Fillet:
    """Convex corner arc: curvature ``turn * b(s/w - 1) / w`` for arc length ``s`` in ``[0, 2w]``."""

    start: np.ndarray
    heading: float
    turn: float
    w: float

    @property
    def length(self):
        return 2.0 * self.w

    def point(self, s):
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        local = _unit_fillet_position(flat / self.w - 1.0, self.turn) * self.w
        pts = self.start + local @ _rot(self.heading).T
        return pts.reshape(s.shape + (2,))

    def tangent_angle(self, s):
        x = np.asarray(s, dtype=float) / self.w - 1.0
        return self.heading + self.turn * npoly.polyval(x, _BUMP_INT)

    def tangent(self, s):
        phi = self.tangent_angle(s)
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def curvature(self, s):
        x = np.asarray(s, dtype=float) / self.w - 1.0
        return self.turn * npoly.polyval(x, _BUMP) / self.w

    def param_from_ray(self, center, e, iterations=64):
        e = np.atleast_2d(e)
        target = np.arctan2(e[:, 1], e[:, 0])
        p0 = self.start - center
        a0 = np.arctan2(p0[1], p0[0])
        goal = np.mod(target - a0, TWO_PI)
        lo = np.zeros(len(e))
        hi = np.full(len(e), self.length)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            v = self.point(mid) - center
            ang = np.mod(np.arctan2(v[:, 1], v[:, 0]) - a0, TWO_PI)
            below = ang < goal
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def closest(self, x, samples=65, newton=12):
        x = np.atleast_2d(x)
        grid = np.linspace(0.0, self.length, samples)
        pts = self.point(grid)
        d2 = ((x[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        s = grid[np.argmin(d2, axis=1)]
        for _ in range(newton):
            g = self.point(s) - x
            t = self.tangent(s)
            n_in = np.stack([-t[:, 1], t[:, 0]], axis=-1)
            f = (g * t).sum(axis=1)
            df = 1.0 + self.curvature(s) * (g * n_in).sum(axis=1)
            step = f / np.where(np.abs(df) > 1e-14, df, 1.0)
            s = np.clip(s - step, 0.0, self.length)
        return s


# --------------------------------------------------------------------------- domain


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Bounded convex domain with piecewise smooth, counter-clockwise boundary.

    ``kind`` is ``"polygon"``, ``"disk"`` or ``"smoothed-radial"``.  The
    ``center`` is an interior point from which radial queries are made
    (centroid for polygons).  ``singular_vertices`` lists the boundary
    points where the normal jumps.
    """

    kind: str
    center: np.ndarray
    pieces: tuple
    singular_vertices: np.ndarray
    vertices: np.ndarray | None = None
    radius: float | None = None
    meta: dict = field(default_factory=dict)

    # ---- bookkeeping
    @cached_property
    def _piece_angles(self):
        starts = []
        for piece in self.pieces:
            p = piece.point(0.0) - self.center
            starts.append(np.arctan2(p[1], p[0]))
        starts = np.unwrap(np.array(starts)) if len(starts) > 1 else np.array(starts)
        return starts

    @property
    def perimeter(self) -> float:
        return float(sum(p.length for p in self.pieces))

    @property
    def area(self) -> float:
        th = np.linspace(0.0, TWO_PI, 4097)[:-1]
        if self.kind == "polygon":
            v = self.vertices
            return 0.5 * float(np.sum(_cross(v, np.roll(v, -1, axis=0))))
        if self.kind == "disk":
            return float(np.pi * self.radius**2)
        r = self.radius_at(th)
        return float(0.5 * np.mean(r**2) * TWO_PI)

    @property
    def bounding_box(self):
        if self.kind == "disk":
            c, r = self.center, self.radius
            return np.array([c - r, c + r])
        th = np.linspace(0.0, TWO_PI, 2049)
        pts = self.boundary_points(th)
        if self.vertices is not None:
            pts = np.vstack([pts, self.vertices])
        return np.array([pts.min(axis=0), pts.max(axis=0)])

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    def to_spec(self) -> dict:
        if self.kind == "polygon":
            return {"kind": "polygon", "vertices": self.vertices.tolist()}
        if self.kind == "disk":
            return {"kind": "disk", "center": self.center.tolist(), "radius": self.radius}
        return {
            "kind": "rounded",
            "vertices": self.meta["source_vertices"].tolist(),
            "neighborhood_radius": self.meta["neighborhood_radius"],
            "mollifier_width": self.meta["mollifier_width"],
        }

    # ---- radial parametrization
    def _locate(self, theta):
        """Piece index and arc-length parameter of the boundary point seen at angle ``theta``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        idx = np.zeros(len(theta), dtype=int)
        if len(self.pieces) > 1:
            starts = self._piece_angles
            rel = starts[0] + np.mod(theta - starts[0], TWO_PI)
            idx = np.searchsorted(starts, rel, side="right") - 1
        s = np.empty(len(theta))
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if mask.any():
                s[mask] = piece.param_from_ray(self.center, e[mask])
        return idx, s

    def _eval(self, idx, s, what):
        out = None
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if not mask.any():
                continue
            val = getattr(piece, what)(s[mask])
            if out is None:
                out = np.empty((len(s),) + val.shape[1:])
            out[mask] = val
        return out

    def boundary_points(self, theta):
        idx, s = self._locate(theta)
        return self._eval(idx, s, "point")

    def radius_at(self, theta):
        return np.linalg.norm(self.boundary_points(theta) - self.center, axis=-1)

    def normals_at(self, theta):
        idx, s = self._locate(theta)
        t = self._eval(idx, s, "tangent")
        return np.stack([t[:, 1], -t[:, 0]], axis=-1)

    def curvatures_at(self, theta):
        idx, s = self._locate(theta)
        return self._eval(idx, s, "curvature")

    def angle_of(self, x):
        v = np.atleast_2d(x) - self.center
        return np.arctan2(v[:, 1], v[:, 0])

    def radial_derivatives(self, theta):
        """Return ``R, dR/dtheta, d2R/dtheta2`` of the radial function at ``theta``.

        Derived by the chain rule from the exact arc-length parametrization.
        Only meaningful away from singular vertices.
        """
        idx, s = self._locate(theta)
        p = self._eval(idx, s, "point") - self.center
        t = self._eval(idx, s, "tangent")
        kappa = self._eval(idx, s, "curvature")
        n_in = np.stack([-t[:, 1], t[:, 0]], axis=-1)
        r = np.linalg.norm(p, axis=1)
        a = (p * t).sum(axis=1)
        b = _cross(p, t)
        da = 1.0 + kappa * (p * n_in).sum(axis=1)
        db = kappa * _cross(p, n_in)
        dr = a / r
        r1 = r * a / b
        dr1_ds = (dr * a + r * da) / b - r * a * db / b**2
        r2 = dr1_ds * r**2 / b
        return r, r1, r2

    def radial_curvature(self, theta):
        """Curvature from the polar formula ``(R^2 + 2R'^2 - R R'') / (R^2 + R'^2)^{3/2}``."""
        r, r1, r2 = self.radial_derivatives(theta)
        return (r**2 + 2.0 * r1**2 - r * r2) / (r**2 + r1**2) ** 1.5

    # ---- point queries
    def contains(self, x, tol=0.0):
        """Strict interior test: ``|x - c| < R(theta(x)) - tol``."""
        x = np.atleast_2d(x)
        v = x - self.center
        rho = np.linalg.norm(v, axis=1)
        inside = np.ones(len(x), dtype=bool)
        nz = rho > 0
        if nz.any():
            inside[nz] = rho[nz] < self.radius_at(np.arctan2(v[nz, 1], v[nz, 0])) - tol
        return inside

    def _check_regular(self, s):
        s = np.atleast_2d(s)
        if len(self.singular_vertices):
            d = np.linalg.norm(s[:, None, :] - self.singular_vertices[None, :, :], axis=-1)
            if np.any(d.min(axis=1) <= SINGULAR_TOL):
                raise SingularPointError("normal undefined at singular point")
        theta = self.angle_of(s)
        pts = self.boundary_points(theta)
        off = np.linalg.norm(pts - s, axis=1)
        if np.any(off > 1e-9 * max(1.0, self.diameter)):
            raise DomainError(f"point is not on the boundary (offset {off.max():.3e})")
        return theta

    def nearest_point(self, x):
        """Vectorized nearest boundary point; returns ``(d, S)``.

        ``x`` must not lie strictly inside the domain.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if np.any(self.contains(x, tol=1e-12 * max(1.0, self.diameter))):
            raise DomainError("nearest_point is defined for exterior points only")
        best_d = np.full(len(x), np.inf)
        best_p = np.zeros_like(x)
        for piece in self.pieces:
            s = piece.closest(x)
            p = piece.point(s)
            d = np.linalg.norm(x - p, axis=1)
            better = d < best_d
            best_d[better] = d[better]
            best_p[better] = p[better]
        return best_d, best_p


# --------------------------------------------------------------------------- constructors


def polygon_domain(vertices) -> ConvexDomain:
    """Convex polygon from counter-clockwise vertices.

    Raises :class:`ConvexityError` (with the offending vertex index) for a
    clockwise or reflex vertex, :class:`TopologyError` for a
    self-intersecting vertex loop.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise GeometryError("need at least 3 vertices given as (x, y) pairs")
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths <= 1e-14 * max(1.0, lengths.max())):
        raise TopologyError("repeated vertex")
    incoming = np.roll(edges, 1, axis=0)
    turns = _cross(incoming, edges) / (np.roll(lengths, 1) * lengths)
    scale = 1e-12
    collinear = np.abs(turns) <= scale
    if collinear.any():
        raise ConvexityError(f"three consecutive collinear vertices at index {int(np.argmax(collinear))}",
                             index=int(np.argmax(collinear)))
    if np.any(turns < 0):
        i = int(np.argmax(turns < 0))
        raise ConvexityError(f"polygon is not convex and counter-clockwise at vertex {i}", index=i)
    angles = np.arctan2(turns, (incoming * edges).sum(axis=1) / (np.roll(lengths, 1) * lengths))
    if abs(angles.sum() - TWO_PI) > 1e-9:
        raise TopologyError("vertex loop winds more than once (self-intersecting)")
    area = 0.5 * np.sum(_cross(v, np.roll(v, -1, axis=0)))
    cx = np.sum((v[:, 0] + np.roll(v[:, 0], -1)) * _cross(v, np.roll(v, -1, axis=0))) / (6 * area)
    cy = np.sum((v[:, 1] + np.roll(v[:, 1], -1)) * _cross(v, np.roll(v, -1, axis=0))) / (6 * area)
    pieces = tuple(Segment(v[i].copy(), v[(i + 1) % len(v)].copy()) for i in range(len(v)))
    return ConvexDomain(kind="polygon", center=np.array([cx, cy]), pieces=pieces,
                        singular_vertices=v.copy(), vertices=v.copy())


def disk_domain(radius: float, center=(0.0, 0.0)) -> ConvexDomain:
    if radius <= 0:
        raise ParameterError("radius must be positive")
    c = np.asarray(center, dtype=float)
    return ConvexDomain(kind="disk", center=c, pieces=(Circle(c, float(radius)),),
                        singular_vertices=np.zeros((0, 2)), radius=float(radius))


def round_corners(domain: ConvexDomain, neighborhood_radius: float,
                  mollifier_width: float | None = None) -> ConvexDomain:
    """Replace every polygon corner by a smooth convex fillet.

    Each corner with turning angle ``tau`` becomes an arc whose curvature is
    the bump ``tau * b(s / w - 1) / w`` (``b`` a unit-mass polynomial bump on
    ``[-1, 1]``), of arc length ``2w`` with ``w = mollifier_width``.  The arc
    is placed symmetrically so that it leaves and rejoins the two edges
    tangentially; outside the ``neighborhood_radius`` balls around the
    vertices the boundary is unchanged.  The result has ``C^3`` curvature.
    """
    if domain.kind != "polygon":
        raise ParameterError("round_corners expects a polygon domain")
    eps = float(neighborhood_radius)
    if eps <= 0:
        raise ParameterError("neighborhood radius must be positive")
    v = domain.vertices
    k = len(v)
    pair = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    pair[np.diag_indices(k)] = np.inf
    if 2.0 * eps >= pair.min():
        raise ParameterError("corner neighborhoods overlap; shrink the neighborhood radius")
    dirs = np.roll(v, -1, axis=0) - v
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    d_in = np.roll(dirs, 1, axis=0)
    turns = np.arctan2(_cross(d_in, dirs), (d_in * dirs).sum(axis=1))
    setbacks = np.array([_fillet_setback(t) for t in turns])
    if mollifier_width is None:
        w = 0.9 * eps / setbacks.max()
    else:
        w = float(mollifier_width)
        if w <= 0:
            raise ParameterError("mollifier width must be positive")
        if np.any(setbacks * w >= eps):
            raise ParameterError("mollifier width too large for the corner neighborhood; shrink it")
    lam = setbacks * w
    pieces = []
    for i in range(k):
        j = (i + 1) % k
        a = v[i] + lam[i] * dirs[i]
        b = v[j] - lam[j] * dirs[i]
        pieces.append(Segment(a, b))
        pieces.append(Fillet(b.copy(), float(np.arctan2(dirs[i, 1], dirs[i, 0])), float(turns[j]), w))
    out = ConvexDomain(kind="smoothed-radial", center=domain.center.copy(), pieces=tuple(pieces),
                       singular_vertices=np.zeros((0, 2)),
                       meta={"source_vertices": v.copy(), "neighborhood_radius": eps,
                             "mollifier_width": w, "setbacks": lam})
    hd = [np.linalg.norm(v[(i + 1) % k] - pieces[2 * i + 1].point(np.array([w]))[0]) for i in range(k)]
    out.meta["hausdorff"] = float(max(hd))
    theta = np.linspace(0.0, TWO_PI, 4001)
    if np.any(out.radial_curvature(theta) < -1e-10):
        raise ConvexityError("rounded boundary lost convexity; shrink the mollifier width")
    return out


def domain_from_spec(spec: dict) -> ConvexDomain:
    """Build a domain from a config block ``{kind, vertices | radius | rounding params}``."""
    kind = spec["kind"]
    if kind == "polygon":
        return polygon_domain(spec["vertices"])
    if kind == "square":
        side = float(spec.get("side", 1.0))
        return polygon_domain([(0, 0), (side, 0), (side, side), (0, side)])
    if kind == "disk":
        return disk_domain(float(spec.get("radius", 1.0)), spec.get("center", (0.0, 0.0)))
    if kind in ("rounded", "smoothed-radial"):
        return round_corners(polygon_domain(spec["vertices"]), float(spec["neighborhood_radius"]),
                             spec.get("mollifier_width"))
    raise GeometryError(f"unknown domain kind {kind!r}")


# --------------------------------------------------------------------------- pointwise API


def outer_normal(domain: ConvexDomain, s) -> np.ndarray:
    """Outward unit normal at regular boundary point(s) ``s``."""
    s = np.asarray(s, dtype=float)
    theta = domain._check_regular(s)
    nu = domain.normals_at(theta)
    return nu[0] if s.ndim == 1 else nu


def curvature(domain: ConvexDomain, s):
    """Curvature (the 2D mean curvature) at regular boundary point(s) ``s``."""
    s = np.asarray(s, dtype=float)
    try:
        theta = domain._check_regular(s)
    except SingularPointError as exc:
        raise SingularPointError("curvature undefined at singular point") from exc
    kappa = domain.curvatures_at(theta)
    return float(kappa[0]) if s.ndim == 1 else kappa


def nearest_point(domain: ConvexDomain, x):
    """Distance to and nearest point on the boundary for exterior point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    d, p = domain.nearest_point(x)
    if x.ndim == 1:
        return float(d[0]), p[0]
    return d, p


def tube_jacobian(domain: ConvexDomain, s, t):
    """Normal-coordinate Jacobian ``1 + t * kappa(s)`` of ``(s, t) -> s + t nu(s)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("tube coordinate t must be nonnegative")
    return 1.0 + t * curvature(domain, s)


# --------------------------------------------------------------------------- cut-off family


def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dg(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def bump_chi(t):
    """Smooth even bump: 1 on ``|t| <= 1/2``, 0 on ``|t| >= 1``, built from ``exp(-1/x)``."""
    u = 2.0 * np.abs(np.asarray(t, dtype=float)) - 1.0
    a, b = _g(1.0 - u), _g(u)
    return a / (a + b)


def bump_chi_derivative(t):
    t = np.asarray(t, dtype=float)
    u = 2.0 * np.abs(t) - 1.0
    a, b = _g(1.0 - u), _g(u)
    da, db = -_dg(1.0 - u), _dg(u)
    ds = (da * b - a * db) / (a + b) ** 2
    return 2.0 * np.sign(t) * ds


@dataclass(frozen=True)
class Cutoff:
    """``rho(t) = min(t^alpha, 1) * (1 - chi(n t))`` on ``[0, inf)``."""

    alpha: float
    n: int

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.minimum(np.power(t, self.alpha), 1.0) * (1.0 - bump_chi(self.n * t))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        outer = 1.0 - bump_chi(self.n * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            dpow = np.where((t < 1.0) & (outer > 0), self.alpha * np.power(t, self.alpha - 1.0), 0.0)
        return dpow * outer - np.minimum(np.power(t, self.alpha), 1.0) * self.n * bump_chi_derivative(self.n * t)


def cutoff_family(alpha: float, n_param: int) -> Cutoff:
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    if int(n_param) < 1:
        raise ParameterError("n_param must be a positive integer")
    return Cutoff(float(alpha), int(n_param))


def radial_h1_defect(cutoff: Cutoff, width: float = 1.0) -> float:
    """``|| rho(|x|) f - f ||_{H^1(R^2)}`` for the Gaussian ``f = exp(-|x|^2 / (2 width^2))``.

    Reduced to a radial integral (the integrand is radial) and evaluated by
    adaptive quadrature in ``log t``, which resolves the ``1/n`` scale of the
    cut-off however large ``n`` is.
    """

    def integrand(logt):
        t = np.exp(logt)
        f = np.exp(-0.5 * t**2 / width**2)
        df = -t / width**2 * f
        g = cutoff(t) - 1.0
        dg = cutoff.derivative(t)
        val = (g * f) ** 2 + (dg * f + g * df) ** 2
        return float(TWO_PI * val * t * t)

    lo = np.log(1e-3 / cutoff.n)
    breaks = sorted({np.log(0.5 / cutoff.n), np.log(1.0 / cutoff.n), 0.0})
    hi = np.log(12.0 * width)
    edges = [lo] + [b for b in breaks if lo < b < hi] + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
    # below t = 1e-3/n the cut-off vanishes, so the integrand is just |f|^2 + |f'|^2
    t0 = np.exp(lo)
    total += TWO_PI * integrate.quad(lambda t: (np.exp(-t**2 / width**2) * (1 + t**2 / width**4)) * t, 0, t0)[0]
    return float(np.sqrt(total))
