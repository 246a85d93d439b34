import numpy as np
import pytest
import scipy.special as ssp
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from mitbag.assembly import (
    assemble_A2_form, assemble_B2_form, assemble_exterior_form, assemble_free_form, assemble_penalty_form,
)
from mitbag.geometry import disk_domain, polygon_domain, round_corners
from mitbag.mesh import mesh_box_with_interface, mesh_domain
from mitbag.oracle import (
    CrossValidationError, DiskMode, DiskSpectrum, OracleError, bessel_j, bessel_j_table, cross_validate_disk,
    dirac_norm_squared, disk_secular_spectrum, observed_order, partner_gaps, quadrature_form_value,
    richardson, secular_function,
)

SQUARE = polygon_domain([(0, 0), (1, 0), (1, 1), (0, 1)])
DISK = disk_domain(1.0)

# lowest six values of the oracle itself (frozen after the independent checks below)
E_M0 = [2.0583516104802375, 2.0583516104802375, 6.916237844680609, 6.916237844680609,
        9.689925366824045, 9.689925366824045]
E_M1 = [4.2285399818649925, 4.2285399818649925, 9.83983976363643, 9.83983976363643,
        11.51293333928955, 11.51293333928955]


def test_bessel_against_scipy():
    x = np.concatenate([np.linspace(0, 0.5, 50), np.linspace(0.5, 40, 400)])
    tab = bessel_j_table(25, x)
    for n in range(26):
        ref = ssp.jv(n, x)
        assert np.abs(tab[:, n] - ref).max() <= 1e-13 * max(1.0, np.abs(ref).max())


@given(st.integers(-8, 8), st.floats(0.0, 30.0))
def test_bessel_single(n, x):
    assert abs(float(bessel_j(n, x)) - ssp.jv(n, x)) <= 2e-14


@given(st.floats(0.01, 35.0))
def test_bessel_identities(x):
    t = bessel_j_table(60, x)[0]
    # recurrence and the Parseval sum J_0^2 + 2 sum J_k^2 = 1
    k = np.arange(1, 50)
    assert np.allclose(t[k - 1] + t[k + 1], 2 * k / x * t[k], atol=1e-13)
    assert abs(t[0] ** 2 + 2 * np.sum(t[1:] ** 2) - 1.0) <= 1e-13


def test_bessel_negative_argument_error():
    with pytest.raises(ValueError):
        bessel_j_table(3, [-1.0])


def test_massless_roots_independent():
    # m = 0: the secular condition reduces to J_k(mu) = J_{k+1}(mu) (or J_k = -J_{k+1} on the other branch)
    r0 = brentq(lambda t: ssp.jv(0, t) - ssp.jv(1, t), 1.0, 2.0)
    r1 = brentq(lambda t: ssp.jv(1, t) - ssp.jv(2, t), 2.0, 3.0)
    r2 = brentq(lambda t: ssp.jv(0, t) + ssp.jv(1, t), 2.5, 3.5)
    spec = disk_secular_spectrum(1.0, 0.0, 6)
    assert np.allclose(spec.eigenvalues, np.repeat([r0**2, r1**2, r2**2], 2), rtol=1e-11)


def test_massive_roots_independent():
    m = 1.0

    def f(t, k):
        return (np.sqrt(m * m + t * t) + m) * ssp.jv(k, t) - t * ssp.jv(k + 1, t)

    r0 = brentq(lambda t: f(t, 0), 1.0, 2.2)
    assert disk_secular_spectrum(1.0, m, 2).eigenvalues[0] == pytest.approx(m * m + r0 * r0, rel=1e-11)


@pytest.mark.parametrize("m, ref", [(0.0, E_M0), (1.0, E_M1)])
def test_frozen_values(m, ref):
    assert np.allclose(disk_secular_spectrum(1.0, m, 6).eigenvalues, ref, rtol=1e-12)


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0, 3.0])
def test_spectrum_invariants(m):
    spec = disk_secular_spectrum(1.0, m, 16)
    E = spec.eigenvalues
    assert np.all(np.diff(E) >= 0)
    assert np.all(E > m * m)
    assert max(md.residual for md in spec.modes) <= 1e-10
    assert partner_gaps(spec) <= 1e-12 * E.max()
    # every value appears with its partner
    assert np.allclose(E[0::2], E[1::2], rtol=1e-12)


@pytest.mark.parametrize("c", [0.5, 2.0, 3.7])
def test_massless_scaling(c):
    a = disk_secular_spectrum(1.0, 0.0, 10).eigenvalues
    b = disk_secular_spectrum(c, 0.0, 10).eigenvalues
    assert np.allclose(b, a / c**2, rtol=1e-11)


def test_secular_function_vanishes_at_modes():
    spec = disk_secular_spectrum(1.0, 0.7, 6)
    for md in spec.modes:
        assert abs(secular_function(md.k, md.mu, 1.0, 0.7, md.branch)) <= 1e-10


def test_oracle_errors():
    with pytest.raises(OracleError):
        disk_secular_spectrum(0.0, 0.0)
    with pytest.raises(OracleError):
        disk_secular_spectrum(1.0, 0.0, count=51)
    with pytest.raises(OracleError):
        cross_validate_disk(1.0, 0.0, h=0.05)


def test_cross_validation_detects_disagreement():
    good = disk_secular_spectrum(1.0, 0.0, 6)
    rep = cross_validate_disk(1.0, 0.0, good, h=0.01)
    assert rep["passed"] and max(rep["rel_gap"]) <= 2e-3
    bad = DiskSpectrum(R=1.0, m=0.0, modes=[DiskMode(md.k, md.ell, md.E * 1.01, md.mu, md.branch, md.residual)
                                            for md in good.modes])
    with pytest.raises(CrossValidationError):
        cross_validate_disk(1.0, 0.0, bad, h=0.01)


def test_richardson_helpers():
    h = np.array([0.4, 0.2, 0.1])
    vals = 3.0 + 2.0 * h**2
    assert np.allclose(observed_order(*vals), 2.0)
    assert richardson(vals[1], vals[2]) == pytest.approx(3.0, abs=1e-15)
    cubic = 1.0 + h**3
    assert richardson(cubic[1], cubic[2], order=3.0) == pytest.approx(1.0, abs=1e-15)


# --------------------------------------------------------------------------- quadrature oracle


@pytest.fixture(scope="module")
def meshes():
    out = {}
    for name, dom in (("square", SQUARE), ("disk", DISK), ("rounded", round_corners(SQUARE, 0.2))):
        out[name] = (mesh_domain(dom, 0.2), mesh_box_with_interface(dom, 0.5, 0.2, layer_mass=20.0, layer_beta=0.06))
    return out


def _forms(alg, mesh, box):
    return [
        ({"form": "A2", "m": 0.7}, mesh, assemble_A2_form(mesh, alg, 0.7)),
        ({"form": "penalty", "m": 0.3, "M": 50.0}, mesh, assemble_penalty_form(mesh, alg, 0.3, 50.0)),
        ({"form": "free", "m": 0.4}, mesh, assemble_free_form(mesh, alg, 0.4)),
        ({"form": "B2", "m": 0.5, "M": 20.0}, box, assemble_B2_form(box, alg, 0.5, 20.0)),
        ({"form": "exterior", "gamma": 2.0}, box, assemble_exterior_form(box, alg, 2.0)),
    ]


def test_quadrature_trivial(meshes, alg2):
    mesh, box = meshes["square"]
    assert quadrature_form_value(mesh, {"form": "A2", "m": 0.0}, np.zeros(mesh.n_nodes * 2), alg2) == 0.0
    e = np.tile([0.3 - 0.1j, 0.8], mesh.n_nodes)
    assert abs(quadrature_form_value(mesh, {"form": "A2", "m": 0.0}, e, alg2)) <= 1e-14
    with pytest.raises(OracleError):
        quadrature_form_value(mesh, {"form": "A2"}, np.zeros(6), alg2)
    with pytest.raises(OracleError):
        quadrature_form_value(mesh, {"form": "nope"}, np.zeros(mesh.n_nodes * 2), alg2)


@pytest.mark.parametrize("name", ["square", "disk", "rounded"])
@given(seed=st.integers(0, 2**32 - 1))
def test_quadrature_matches_assembly(meshes, alg2, name, seed):
    rng = np.random.default_rng(seed)
    mesh, box = meshes[name]
    for spec, msh, pair in _forms(alg2, mesh, box):
        f = rng.standard_normal(msh.n_nodes * 2) + 1j * rng.standard_normal(msh.n_nodes * 2)
        q = quadrature_form_value(msh, spec, f, alg2)
        a = pair.value(f)
        assert abs(q - a) <= 1e-12 * abs(a), spec


def test_dirac_norm_zero_trace(meshes, alg2, rng):
    # zero boundary values: the identity with the form holds element by element
    mesh, _ = meshes["disk"]
    f = rng.standard_normal((mesh.n_nodes, 2)) + 1j * rng.standard_normal((mesh.n_nodes, 2))
    f[mesh.boundary_nodes] = 0
    f = f.ravel()
    for m in (0.0, 1.3):
        a = assemble_A2_form(mesh, alg2, m).value(f)
        d = dirac_norm_squared(mesh, alg2, m, f)
        assert abs(a - d) <= 1e-12 * abs(a)
