"""Triangulations of a convex domain and of a box containing it.

The domain mesh is a "radial star" refinement: a reference polygon (the
polygon itself, or an octagon for the disk, or the source polygon for a
rounded domain) is cut into fan triangles around the center, each fan
triangle is refined uniformly into ``k^2`` triangles, and the result is
mapped radially onto the domain.  Boundary nodes lie exactly on the curve.

The box mesh embeds the domain mesh unchanged (its nodes come first) and
sweeps the boundary polyline outward along the exact normals.  Layers are graded toward the interface so that fields decaying like
``exp(-M d)`` are resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mitbag.geometry import ConvexDomain, TWO_PI

GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))

INTERFACE = 0
BOX = 1


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpinorMesh:
    """Triangle mesh with boundary facets carrying exact geometric tags.

    ``facet_gauss_normal`` and ``facet_gauss_kappa`` hold the normal and
    curvature of the parent curve at the two Gauss points of every facet
    (shape ``(F, 2, 2)`` and ``(F, 2)``); ``facet_normal`` is the normal at the
    facet midpoint.  Box facets have zero curvature and the box normal.

    Box meshes also carry counter-clockwise ``quads`` (bilinear cells of the
    exterior tube, all outside the domain).  Their edges are straight, so
    traces are linear and they conform to the neighbouring triangles.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_tag: np.ndarray
    facet_normal: np.ndarray
    facet_gauss_normal: np.ndarray
    facet_gauss_kappa: np.ndarray
    triangle_region: np.ndarray
    boundary_nodes: np.ndarray
    boundary_node_normals: np.ndarray
    corner_nodes: np.ndarray
    n_domain_nodes: int
    h: float
    kind: str
    domain: ConvexDomain = field(repr=False)
    info: dict = field(default_factory=dict)
    quads: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def facet_lengths(self):
        p = self.nodes[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def triangle_areas(self):
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def quad_areas(self):
        p = self.nodes[self.quads]
        x, y = p[..., 0], p[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum() + self.quad_areas.sum())

    def interface_facets(self):
        return np.flatnonzero(self.facet_tag == INTERFACE)

    def ndof(self, ncomp: int) -> int:
        return self.n_nodes * ncomp


# --------------------------------------------------------------------------- helpers


def _reference_polygon(domain: ConvexDomain) -> np.ndarray:
    if domain.kind == "polygon":
        return domain.vertices - domain.center
    if domain.kind == "disk":
        a = TWO_PI * np.arange(8) / 8.0
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    return domain.meta["source_vertices"] - domain.center


def _polygon_radius(ref: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Radial function of a polygon containing the origin."""
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    best = np.full(len(theta), np.inf)
    for i in range(len(ref)):
        a, b = ref[i], ref[(i + 1) % len(ref)]
        d = b - a
        den = d[0] * e[:, 1] - d[1] * e[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (a[1] * e[:, 0] - a[0] * e[:, 1]) / den  # param along edge
            rho = (a[0] * d[1] - a[1] * d[0]) / (e[:, 0] * d[1] - e[:, 1] * d[0])
        ok = (np.abs(den) > 0) & (u >= -1e-12) & (u <= 1 + 1e-12) & (rho > 0)
        best = np.where(ok & (rho < best), rho, best)
    return best


def _facet_tags(domain: ConvexDomain, nodes: np.ndarray, facets: np.ndarray):
    """Exact normals and curvatures at the Gauss points (radially projected onto the curve)."""
    a, b = nodes[facets[:, 0]], nodes[facets[:, 1]]
    gn = np.empty((len(facets), 2, 2))
    gk = np.empty((len(facets), 2))
    for g, t in enumerate(GAUSS2):
        th = domain.angle_of(a + t * (b - a))
        gn[:, g] = domain.normals_at(th)
        gk[:, g] = domain.curvatures_at(th)
    mid = domain.angle_of(0.5 * (a + b))
    return domain.normals_at(mid), gn, gk


def _node_normals(domain: ConvexDomain, nodes: np.ndarray, corner_mask: np.ndarray):
    th = domain.angle_of(nodes)
    nu = domain.normals_at(th)
    nu[corner_mask] = np.nan
    return nu


def _orient(nodes, tris):
    p = nodes[tris]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris = tris.copy()
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


# --------------------------------------------------------------------------- domain mesh


def _star_mesh(domain: ConvexDomain, h: float):
    ref = _reference_polygon(domain)
    P = len(ref)
    edges = np.linalg.norm(np.roll(ref, -1, axis=0) - ref, axis=1)
    spokes = np.linalg.norm(ref, axis=1)
    if domain.kind == "polygon":
        feature = edges.min()
    elif domain.kind == "disk":
        feature = domain.radius
    else:
        feature = min(edges.min(), 2.0 * domain.meta["neighborhood_radius"])
    if not 0.0 < h <= feature:
        raise MeshError(f"mesh size h={h} exceeds the local feature size {feature:.4g}")
    k = int(math.ceil(max(spokes.max(), edges.max()) / h - 1e-9))

    def start(r):
        return 0 if r == 0 else 1 + P * r * (r - 1) // 2

    n_nodes = 1 + P * k * (k + 1) // 2
    y = np.zeros((n_nodes, 2))
    for r in range(1, k + 1):
        i = np.repeat(np.arange(P), r)
        t = np.tile(np.arange(r), P)
        a, b = ref[i], ref[(i + 1) % P]
        y[start(r):start(r + 1)] = (r / k) * (a + (t / r)[:, None] * (b - a))

    def idx(r, i, t):
        if r == 0:
            return np.zeros(np.broadcast(i, t).shape, dtype=np.int64)
        return start(r) + np.mod(i * r + t, P * r)

    tris = []
    for r in range(k):
        i = np.arange(P)[:, None]
        tu = np.arange(r + 1)[None, :]
        up = np.stack(np.broadcast_arrays(idx(r, i, tu), idx(r + 1, i, tu), idx(r + 1, i, tu + 1)), axis=-1)
        tris.append(up.reshape(-1, 3))
        if r > 0:
            td = np.arange(r)[None, :]
            dn = np.stack(np.broadcast_arrays(idx(r, i, td), idx(r + 1, i, td + 1), idx(r, i, td + 1)), axis=-1)
            tris.append(dn.reshape(-1, 3))
    tris = np.concatenate(tris).astype(np.int64)

    if domain.kind == "polygon":
        nodes = domain.center + y
    else:
        rho = np.linalg.norm(y, axis=1)
        nz = rho > 0
        th = np.arctan2(y[nz, 1], y[nz, 0])
        scale = rho[nz] / _polygon_radius(ref, th)
        nodes = np.tile(domain.center, (n_nodes, 1))
        e = np.stack([np.cos(th), np.sin(th)], axis=1)
        nodes[nz] = domain.center + (scale * domain.radius_at(th))[:, None] * e
        # outer ring exactly on the curve
        ring = np.arange(start(k), n_nodes)
        nodes[ring] = domain.boundary_points(np.arctan2(y[ring, 1], y[ring, 0]))
    boundary = np.arange(start(k), n_nodes)
    corners = start(k) + k * np.arange(P) if domain.kind == "polygon" else np.zeros(0, dtype=np.int64)
    return nodes, _orient(nodes, tris), boundary, corners, k


def mesh_domain(domain: ConvexDomain, h: float) -> SpinorMesh:
    """Conforming P1 triangulation of ``domain`` with target edge length ``h``."""
    nodes, tris, boundary, corners, k = _star_mesh(domain, h)
    facets = np.stack([boundary, np.roll(boundary, -1)], axis=1)
    fn, gn, gk = _facet_tags(domain, nodes, facets)
    corner_mask = np.isin(boundary, corners)
    return SpinorMesh(
        nodes=nodes, triangles=tris, facets=facets,
        facet_tag=np.full(len(facets), INTERFACE, dtype=np.int8),
        facet_normal=fn, facet_gauss_normal=gn, facet_gauss_kappa=gk,
        triangle_region=np.zeros(len(tris), dtype=np.int8),
        boundary_nodes=boundary,
        boundary_node_normals=_node_normals(domain, nodes[boundary], corner_mask),
        corner_nodes=corners, n_domain_nodes=len(nodes), h=float(h), kind="domain",
        domain=domain, info={"refinement": k},
    )


# --------------------------------------------------------------------------- box mesh


def graded_layers(M: float, h: float, beta: float = 0.03, growth: float = 2.0 / 3.0,
                  max_depth: float | None = None) -> np.ndarray:
    """Normal offsets ``0 = d_0 < d_1 < ...`` of the fine exterior layers, ending once the step reaches ``h``.

    The first step is ``beta * M**-1.5`` and steps grow like
    ``t_{i+1} = t_i exp(growth * M * t_i)``, which equidistributes the
    linear-element energy error of ``exp(-M d)`` across layers.  With this
    choice the total energy error of the layer stack is independent of
    ``M``.  ``max_depth`` enlarges the first step when the stack would
    otherwise be deeper (only matters for small ``M``).
    """
    if M <= 0:
        return np.array([0.0])
    t = min(h, beta * M**-1.5)
    if max_depth is not None:
        # the step grows like t0 exp(growth M d), so the stack depth is about log(h / t0) / (growth M)
        t = max(t, min(h, h * math.exp(-growth * M * max_depth)))
    d = [0.0]
    while t < h:
        d.append(d[-1] + t)
        t = min(h, t * math.exp(growth * M * t))
    return np.asarray(d)


def _box_corners(lo, hi):
    return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])


def _ray_to_box(c, e, lo, hi):
    with np.errstate(divide="ignore"):
        tx = np.where(e[:, 0] > 0, (hi[0] - c[:, 0]) / e[:, 0], (lo[0] - c[:, 0]) / e[:, 0])
        ty = np.where(e[:, 1] > 0, (hi[1] - c[:, 1]) / e[:, 1], (lo[1] - c[:, 1]) / e[:, 1])
    tx = np.where(np.abs(e[:, 0]) > 0, tx, np.inf)
    ty = np.where(np.abs(e[:, 1]) > 0, ty, np.inf)
    return np.minimum(tx, ty)


def _quad_jacobian_min(nodes, quads):
    """Smallest corner Jacobian of each bilinear cell (positive for convex counter-clockwise quads)."""
    p = nodes[quads]
    e_next = np.roll(p, -1, axis=1) - p
    e_prev = np.roll(p, 1, axis=1) - p
    cross = e_next[..., 0] * e_prev[..., 1] - e_next[..., 1] * e_prev[..., 0]
    return cross.min(axis=1)


def _exterior_rays(inner: SpinorMesh, fan_step: float):
    """Outward normal rays ``(origin node, direction)`` in counter-clockwise order.

    Regular boundary nodes get one ray along the exact normal; a corner gets
    a fan sweeping from the incoming to the outgoing edge normal.
    """
    nb = len(inner.boundary_nodes)
    corner = set(inner.corner_nodes.tolist())
    origin, direction = [], []
    for q, node in enumerate(inner.boundary_nodes):
        if int(node) in corner:
            n_in = inner.facet_normal[(q - 1) % nb]
            n_out = inner.facet_normal[q]
            a0 = math.atan2(n_in[1], n_in[0])
            turn = math.atan2(n_in[0] * n_out[1] - n_in[1] * n_out[0], float(n_in @ n_out))
            k = max(2, int(math.ceil(turn / fan_step)))
            for a in a0 + turn * np.arange(k + 1) / k:
                origin.append(node)
                direction.append((math.cos(a), math.sin(a)))
        else:
            origin.append(node)
            direction.append(inner.boundary_node_normals[q])
    return np.asarray(origin), np.asarray(direction, dtype=float)


def mesh_box_with_interface(domain: ConvexDomain, margin: float, h: float,
                            layer_mass: float | None = None, layer_beta: float = 0.03,
                            layer_growth: float = 2.0 / 3.0, fan_step: float = math.pi / 16) -> SpinorMesh:
    """Fitted triangulation of the box ``bbox(domain) + margin`` with ``boundary(domain)`` as interface.

    The first ``n_domain_nodes`` nodes and the first triangles are exactly
    those of ``mesh_domain(domain, h)``.  The exterior is swept along the
    outward normals (tube coordinates), with a fan of rays at every corner,
    so each layer sits at one exact distance from the domain.  The fine
    layers are graded for decay rate ``layer_mass`` (none when ``None``),
    then uniform steps of about ``h`` reach the box.  The swept cells are
    bilinear quads; only the first ring of each corner fan is triangles.
    """
    if margin <= 0:
        raise MeshError("margin must be positive")
    inner = mesh_domain(domain, h)
    lo, hi = domain.bounding_box
    lo, hi = lo - margin, hi + margin
    origin, e = _exterior_rays(inner, fan_step)
    nr = len(origin)
    o = inner.nodes[origin]
    fine = (graded_layers(layer_mass, h, layer_beta, layer_growth, max_depth=0.5 * margin) if layer_mass
            else np.array([0.0]))
    s_box = _ray_to_box(o, e, lo, hi)
    ends = o + s_box[:, None] * e
    # snap the nearest ray endpoint onto each box corner so the outer facets trace the box exactly
    for corner in _box_corners(lo, hi):
        ends[int(np.argmin(np.linalg.norm(ends - corner, axis=1)))] = corner
    base = o + fine[-1] * e
    if np.any(((ends - base) * e).sum(axis=1) <= 0):
        raise MeshError("graded layers reach the box; enlarge the margin")
    gap = np.linalg.norm(ends - base, axis=1)
    n_outer = max(1, int(math.ceil(gap.max() / h - 1e-9)))

    n0 = inner.n_nodes
    layers = [o + d * e for d in fine[1:]]
    layers += [base + (j / n_outer) * (ends - base) for j in range(1, n_outer + 1)]
    L = len(layers)
    nodes = np.vstack([inner.nodes] + layers)
    ids = np.empty((L + 1, nr), dtype=np.int64)
    ids[0] = origin
    ids[1:] = n0 + np.arange(L * nr).reshape(L, nr)

    r = np.arange(nr)
    r1 = (r + 1) % nr
    fan_tris, quads = [], []
    for i in range(L):
        a, b, c2, d2 = ids[i, r], ids[i, r1], ids[i + 1, r1], ids[i + 1, r]
        if i == 0:
            shared = a == b
            fan_tris.append(np.stack([a[shared], c2[shared], d2[shared]], axis=1))
            keep = ~shared
            a, b, c2, d2 = a[keep], b[keep], c2[keep], d2[keep]
        # marching along the boundary then outward turns clockwise; store counter-clockwise
        quads.append(np.stack([a, d2, c2, b], axis=1))
    ext_tris = _orient(nodes, np.vstack(fan_tris)) if fan_tris else np.zeros((0, 3), np.int64)
    quads = np.vstack(quads)
    if np.any(_quad_jacobian_min(nodes, quads) <= 0):
        raise MeshError("exterior sweep produced an inverted cell")
    all_tris = np.vstack([inner.triangles, ext_tris])
    region = np.concatenate([np.zeros(len(inner.triangles), np.int8), np.ones(len(ext_tris), np.int8)])

    outer = ids[L]
    box_facets = np.stack([outer, np.roll(outer, -1)], axis=1)
    pa, pb = nodes[box_facets[:, 0]], nodes[box_facets[:, 1]]
    tang = (pb - pa) / np.linalg.norm(pb - pa, axis=1)[:, None]
    box_nu = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    facets = np.vstack([inner.facets, box_facets])
    tag = np.concatenate([inner.facet_tag, np.full(nr, BOX, np.int8)])
    fn = np.vstack([inner.facet_normal, box_nu])
    gn = np.concatenate([inner.facet_gauss_normal, np.repeat(box_nu[:, None, :], 2, axis=1)])
    gk = np.concatenate([inner.facet_gauss_kappa, np.zeros((nr, 2))])
    return SpinorMesh(
        nodes=nodes, triangles=all_tris, facets=facets, facet_tag=tag, facet_normal=fn,
        facet_gauss_normal=gn, facet_gauss_kappa=gk, triangle_region=region,
        boundary_nodes=inner.boundary_nodes, boundary_node_normals=inner.boundary_node_normals,
        corner_nodes=inner.corner_nodes, n_domain_nodes=n0, h=float(h), kind="box", domain=domain,
        quads=quads,
        info={"refinement": inner.info["refinement"], "fine_layers": len(fine) - 1,
              "outer_layers": n_outer, "rays": nr, "margin": float(margin), "layer_mass": layer_mass,
              "layer_beta": layer_beta, "box": [lo.tolist(), hi.tolist()],
              "n_domain_triangles": len(inner.triangles)},
    )
