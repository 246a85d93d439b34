import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from mitbag.assembly import (
    AssemblyError, InterfaceError, ParameterError, PreconditionError, apply_constraint,
    assemble_A2_form, assemble_B2_form, assemble_exterior_form, assemble_free_form, assemble_penalty_form,
    boundary_coefficients, boundary_mass, constraint_matrix, export_triplets, extension_trial,
    from_real_frame, import_triplets, projector_matrix, to_real_frame,
)
from mitbag.clifford import boundary_projector
from mitbag.eigensolver import dense_spectrum, smallest_eigenpairs
from mitbag.geometry import disk_domain, polygon_domain
from mitbag.mesh import mesh_box_with_interface, mesh_domain

SQUARE = polygon_domain([(0, 0), (1, 0), (1, 1), (0, 1)])
DISK = disk_domain(1.0)


@pytest.fixture(scope="module")
def sq_mesh():
    return mesh_domain(SQUARE, 0.25)


@pytest.fixture(scope="module")
def disk_mesh():
    return mesh_domain(DISK, 0.3)


@pytest.fixture(scope="module")
def sq_box():
    return mesh_box_with_interface(SQUARE, 0.5, 0.25, layer_mass=16.0, layer_beta=0.06)


@pytest.fixture(scope="module")
def disk_box():
    return mesh_box_with_interface(DISK, 0.5, 0.3, layer_mass=16.0, layer_beta=0.06)


def _herm_err(A):
    return abs(A - A.getH()).sum() / abs(A).sum()


def _constrained_field(pair, rng):
    Z = apply_constraint(pair).prolongation
    c = rng.standard_normal(Z.shape[1]) + 1j * rng.standard_normal(Z.shape[1])
    return Z @ c


def test_hermitian_and_hpd(sq_mesh, disk_mesh, sq_box, alg2):
    pairs = [assemble_A2_form(sq_mesh, alg2, 1.0), assemble_A2_form(disk_mesh, alg2, 0.5),
             assemble_penalty_form(disk_mesh, alg2, 0.0, 100.0), assemble_B2_form(sq_box, alg2, 0.0, 16.0),
             assemble_free_form(sq_box, alg2, 0.0, 16.0)]
    for p in pairs:
        assert _herm_err(p.stiffness) <= 1e-13
        assert _herm_err(p.mass) <= 1e-13
        sla.cholesky(p.mass.toarray())


def test_constraint_rows_touch_one_node(disk_mesh, sq_mesh, alg2):
    for mesh in (disk_mesh, sq_mesh):
        C = constraint_matrix(mesh, alg2).tocsr()
        for r in range(C.shape[0]):
            nodes = set(C.indices[C.indptr[r]:C.indptr[r + 1]] // alg2.N)
            assert len(nodes) <= 1


def test_a2_square_m0_is_dirichlet_energy(sq_mesh, alg2):
    a = assemble_A2_form(sq_mesh, alg2, 0.0)
    free = assemble_free_form(sq_mesh, alg2, 0.0)
    assert abs(a.stiffness - free.stiffness).max() <= 1e-15
    # block diagonal over spinor components
    S = a.stiffness.tocoo()
    assert np.all(S.row % 2 == S.col % 2)


def test_disk_boundary_coefficient(disk_mesh):
    assert np.allclose(boundary_coefficients(disk_mesh, 1.0), 1.5)


@pytest.mark.parametrize("m", [0.0, 1.0, 2.0])
@pytest.mark.parametrize("which", ["sq_mesh", "disk_mesh"])
def test_constrained_lower_bound_m2(m, which, request, alg2):
    mesh = request.getfixturevalue(which)
    red = apply_constraint(assemble_A2_form(mesh, alg2, m))
    ev = dense_spectrum(red.stiffness, red.mass)
    assert ev[0] >= m * m - 1e-10


def test_reduced_dof_counts(sq_mesh, disk_mesh, alg2):
    for mesh in (sq_mesh, disk_mesh):
        red = apply_constraint(assemble_A2_form(mesh, alg2, 0.0))
        n_b = len(mesh.boundary_nodes)
        n_c = len(mesh.corner_nodes)
        expect = alg2.N * (mesh.n_nodes - n_b) + (n_b - n_c) * alg2.N // 2
        assert red.ndof == expect
        Z = red.prolongation
        assert np.allclose((Z.getH() @ Z).toarray(), np.eye(Z.shape[1]), atol=1e-13)
        # interior nodes untouched
        interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes)
        rows = Z[interior * 2].tocoo()
        assert np.all(np.abs(rows.data) == 1.0)


def test_corner_kernels_intersect_trivially(alg2):
    # two distinct edge normals at a corner leave no admissible spinor
    for nu1, nu2 in [((0.0, -1.0), (1.0, 0.0)), ((0.0, -1.0), (np.sqrt(0.5), np.sqrt(0.5)))]:
        stacked = np.vstack([boundary_projector(alg2, np.array(nu1), -1), boundary_projector(alg2, np.array(nu2), -1)])
        assert np.linalg.matrix_rank(stacked, tol=1e-10) == 2


def test_admissible_fields_satisfy_mit(disk_mesh, alg2, rng):
    pair = assemble_A2_form(disk_mesh, alg2, 0.0)
    f = _constrained_field(pair, rng).reshape(-1, 2)
    for node, nu in zip(disk_mesh.boundary_nodes, disk_mesh.boundary_node_normals):
        gamma = -1j * alg2.beta @ (nu[0] * alg2.alphas[0] + nu[1] * alg2.alphas[1])
        assert np.allclose(gamma @ f[node], f[node], atol=1e-12)


def test_b2_equal_masses_is_free_form(sq_box, disk_box, alg2):
    for box in (sq_box, disk_box):
        b = assemble_B2_form(box, alg2, 0.7, 0.7)
        free = assemble_free_form(box, alg2, 0.7)
        assert abs(b.stiffness - free.stiffness).max() <= 1e-13 * abs(free.stiffness).max()


def test_jump_term_on_straight_edge(sq_box, alg2):
    nu = np.array([0.0, -1.0])
    Pp = boundary_projector(alg2, nu, +1)
    w, v = np.linalg.eigh(Pp)
    e = v[:, -1]
    f = np.tile(e, sq_box.n_nodes)
    iface = sq_box.interface_facets()
    mids = sq_box.nodes[sq_box.facets[iface]].mean(axis=1)
    bottom = iface[np.abs(mids[:, 1]) < 1e-12]
    jump = projector_matrix(sq_box, alg2, -1, bottom) - projector_matrix(sq_box, alg2, +1, bottom)
    M, m = 16.0, 0.0
    val = (M - m) * np.real(np.vdot(f, jump @ f))
    assert val == pytest.approx(-(M - m) * 1.0, abs=1e-13)


def test_b2_errors(sq_mesh, sq_box, alg2):
    with pytest.raises(InterfaceError):
        assemble_B2_form(sq_mesh, alg2, 0.0, 10.0)
    with pytest.raises(ParameterError):
        assemble_B2_form(sq_box, alg2, 2.0, 1.0)
    with pytest.raises(AssemblyError):
        assemble_A2_form(sq_box, alg2, 0.0)
    with pytest.raises(AssemblyError):
        assemble_penalty_form(sq_mesh, alg2, 0.0, 0.0)
    with pytest.raises(InterfaceError):
        assemble_exterior_form(sq_mesh, alg2, 1.0)


def test_b2_disk_eigenvalue_window(alg2):
    # m^2 < E1(B2) < E1(A2) for a large exterior mass on a coarse mesh
    mesh = mesh_domain(DISK, 0.35)
    box = mesh_box_with_interface(DISK, 0.6, 0.35, layer_mass=64.0, layer_beta=0.06)
    red = apply_constraint(assemble_A2_form(mesh, alg2, 0.0))
    e_a = dense_spectrum(red.stiffness, red.mass)[0]
    b = to_real_frame(assemble_B2_form(box, alg2, 0.0, 64.0), alg2)
    e_b = smallest_eigenpairs(b.stiffness, b.mass, 1, tol=1e-10).eigenvalues[0]
    assert 0.0 < e_b < e_a


def test_penalty_on_admissible_field(disk_mesh, alg2, rng):
    a = assemble_A2_form(disk_mesh, alg2, 0.5)
    f = _constrained_field(a, rng)
    bnd = np.real(np.vdot(f, boundary_mass(disk_mesh, alg2) @ f))
    for M in (4.0, 100.0, 1e6):
        k = assemble_penalty_form(disk_mesh, alg2, 0.5, M)
        assert k.value(f) == pytest.approx(a.value(f) - bnd / np.sqrt(M), rel=1e-12)


@pytest.mark.parametrize("which", ["sq_mesh", "disk_mesh"])
def test_penalty_monotone_psd(which, request, alg2):
    mesh = request.getfixturevalue(which)
    Ms = [1.0, 10.0, 1e3, 1e5]
    mats = [assemble_penalty_form(mesh, alg2, 0.0, M).stiffness.toarray() for M in Ms]
    for A, B in zip(mats, mats[1:]):
        D = B - A
        assert np.linalg.eigvalsh(0.5 * (D + D.conj().T)).min() >= -1e-10 * np.abs(D).max()


def test_penalty_limit_is_constrained(sq_mesh, alg2):
    red = apply_constraint(assemble_A2_form(sq_mesh, alg2, 0.0))
    ref = dense_spectrum(red.stiffness, red.mass)[:4]
    prev = None
    for M in (1e2, 1e4, 1e6, 1e8):
        k = assemble_penalty_form(sq_mesh, alg2, 0.0, M)
        ev = dense_spectrum(k.stiffness, k.mass)[:4]
        gap = np.abs(ev - ref).max()
        if prev is not None:
            assert gap < prev
        prev = gap
    assert prev <= 1e-3


def test_real_frame_preserves_spectrum(disk_mesh, sq_box, alg2):
    a = assemble_A2_form(disk_mesh, alg2, 1.0)
    r = to_real_frame(a, alg2)
    assert not np.iscomplexobj(r.stiffness.data) and not np.iscomplexobj(r.mass.data)
    e1 = dense_spectrum(*(lambda p: (p.stiffness, p.mass))(apply_constraint(a)))
    e2 = dense_spectrum(*(lambda p: (p.stiffness, p.mass))(apply_constraint(r)))
    assert np.allclose(e1, e2, rtol=1e-11, atol=1e-11)
    b = assemble_B2_form(sq_box, alg2, 0.0, 16.0)
    rb = to_real_frame(b, alg2)
    x = np.random.default_rng(0).standard_normal((b.ndof, 3))
    back = from_real_frame(x, alg2)
    assert np.allclose(np.real(np.einsum("ij,ij->j", back.conj(), b.stiffness @ back)),
                       np.einsum("ij,ij->j", x, rb.stiffness @ x), rtol=1e-11)
    with pytest.raises(AssemblyError):
        to_real_frame(apply_constraint(a), alg2)


def test_extension_trial(sq_box, disk_box, alg2, rng):
    for box, dom in ((sq_box, SQUARE), (disk_box, DISK)):
        inner = mesh_domain(dom, box.h)
        pair = assemble_A2_form(inner, alg2, 0.0)
        f = _constrained_field(pair, rng)
        M = 16.0
        ext = extension_trial(box, alg2, f, M).reshape(-1, 2)
        fn = f.reshape(-1, 2)
        assert np.array_equal(ext[: box.n_domain_nodes], fn)
        # exterior nodes whose nearest boundary point is a boundary node
        out = box.nodes[box.n_domain_nodes:]
        d, S = dom.nearest_point(out)
        bp = box.nodes[inner.boundary_nodes]
        dist = np.linalg.norm(S[:, None] - bp[None], axis=2)
        hit = dist.min(axis=1) < 1e-12
        assert hit.sum() > 10
        src = inner.boundary_nodes[dist.argmin(axis=1)[hit]]
        expect = fn[src] * np.exp(-M * d[hit])[:, None]
        assert np.allclose(ext[box.n_domain_nodes:][hit], expect, atol=1e-14)
        near = np.argmin(np.abs(d[hit] - 1.0 / M))
        if abs(d[hit][near] - 1.0 / M) < 1e-12:
            assert np.allclose(np.abs(ext[box.n_domain_nodes:][hit][near]), np.abs(fn[src[near]]) * np.exp(-1))


def test_extension_trial_precondition(sq_box, alg2):
    bad = np.ones(sq_box.n_domain_nodes * 2, dtype=complex)
    with pytest.raises(PreconditionError):
        extension_trial(sq_box, alg2, bad, 8.0)
    with pytest.raises(InterfaceError):
        extension_trial(mesh_domain(SQUARE, 0.25), alg2, bad, 8.0)


def test_exterior_form_pieces(disk_box, alg2, rng):
    gam = 2.0
    ext = assemble_exterior_form(disk_box, alg2, gam)
    f = rng.standard_normal(ext.ndof) + 1j * rng.standard_normal(ext.ndof)
    f[: disk_box.n_domain_nodes * 2] = 0.0  # interior values do not enter except on the interface
    f_b = f.copy()
    free = assemble_free_form(disk_box, alg2, 0.0, gam)
    bnd = np.real(np.vdot(f_b, boundary_mass(disk_box, alg2) @ f_b))
    assert bnd == 0.0
    assert ext.value(f) == pytest.approx(free.value(f), rel=1e-12)


def test_triplet_round_trip(sq_mesh, alg2, tmp_path):
    pair = assemble_A2_form(sq_mesh, alg2, 1.0)
    path = tmp_path / "k.txt"
    export_triplets(pair, path)
    header, A = import_triplets(path)
    assert header["form"] == "A2" and header["ndof"] == pair.ndof
    assert abs(A - pair.stiffness).max() == 0.0
    assert sp.issparse(A)
