"""Transport ODEs: closed-form oracles, target relations, cube identities."""

import numpy as np
import pytest
import sympy as sp

from gerbe.cocycle import make_single_chart_gerbe
from gerbe.crossed_module import get_crossed_module
from gerbe.errors import ContainmentError
from gerbe.fixtures import get_cocycle, get_surface
from gerbe.geometry import Euclidean, single_chart_cover
from gerbe.linalg import fro
from gerbe.surfaces import Path, SquareMap
from gerbe.transport import (
    LocalHolonomy, TransportConfig, boundary_word, check_edge_cube,
    check_vertex_cube, hol_edge, hol_path, hol_square, hol_vertex,
    transport_along,
)

CFG = TransportConfig()
R2 = Euclidean(2)


def segment(p0, p1, manifold=R2):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    return Path(manifold, lambda tau: p0 + tau * (p1 - p0),
                lambda tau: p1 - p0)


@pytest.fixture(scope="module")
def plane():
    return get_cocycle("heisenberg_plane")


@pytest.fixture(scope="module")
def torus():
    return get_cocycle("heisenberg_torus4")


def test_hol_path_zero_connection_is_identity():
    coc = get_cocycle("trivial")
    u = hol_path(coc, 0, segment([0, 0], [1, 1]), CFG)
    assert fro(u - np.eye(3)) < 1e-14


def test_hol_path_constant_connection_closed_form():
    # constant A: transport along a straight segment is exp(-L A(v))
    cm = get_crossed_module("heisenberg")
    x, y = sp.symbols("cx cy", real=True)
    E12 = sp.Matrix([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    E23 = sp.Matrix([[0, 0, 0], [0, 0, 1], [0, 0, 0]])
    beta = {(0,): sp.Rational(1, 2) * E12 + sp.Rational(1, 5) * E23,
            (1,): sp.Rational(3, 10) * E23}
    coc = make_single_chart_gerbe(cm, single_chart_cover(R2), (x, y), beta)
    v = np.array([0.8, -0.4])
    L = 1.7
    path = segment([0.1, 0.2], np.array([0.1, 0.2]) + L * v)
    got = hol_path(coc, 0, path, CFG)
    Av = coc.A(0)(np.zeros(2), v)
    import scipy.linalg
    want = scipy.linalg.expm(-L * Av)
    assert fro(got - want) < 1e-12

    # independent fine-step midpoint oracle
    n = 100_000
    u = np.eye(3)
    h = 1.0 / n
    tans = path.derivs(np.linspace(h / 2, 1 - h / 2, n))
    for k in range(n):
        Ak = coc.A(0)(np.zeros(2), tans[k])
        u = u + (-h) * Ak @ (u + 0.5 * (-h) * Ak @ u)
    assert fro(got - u) < 1e-9


def test_hol_path_concatenation(plane):
    path = segment([-0.4, 0.1], [0.6, 0.5])
    left = path.restrict(0.0, 0.37)
    right = path.restrict(0.37, 1.0)
    whole = hol_path(plane, 0, path, CFG)
    pieces = hol_path(plane, 0, right, CFG) @ hol_path(plane, 0, left, CFG)
    assert fro(whole - pieces) < 1e-9


def test_hol_path_reparametrization_invariance(plane):
    path = segment([0.0, -0.2], [0.9, 0.7])

    def phi(tau):
        return tau - 0.3 / (2 * np.pi) * np.sin(2 * np.pi * tau)

    def dphi(tau):
        return 1.0 - 0.3 * np.cos(2 * np.pi * tau)

    a = hol_path(plane, 0, path, CFG)
    b = hol_path(plane, 0, path.reparametrize(phi, dphi), CFG)
    assert fro(a - b) < 1e-7


def test_hol_path_containment_error(torus):
    path = segment([0.0, 0.0], [0.9, 0.0], manifold=torus.cover.manifold)
    with pytest.raises(ContainmentError):
        hol_path(torus, 0, path, CFG)


def test_hol_path_order_four():
    # su2 is not nilpotent, so the integrator truncation error is visible
    coc = get_cocycle("su2_plane")
    path = Path(R2, lambda tau: np.array([0.9 * tau, 0.8 * np.sin(1.3 * tau)]),
                lambda tau: np.array([0.9, 0.8 * 1.3 * np.cos(1.3 * tau)]))
    ref = hol_path(coc, 0, path, TransportConfig(ode_steps_per_unit=512))

    def err(n):
        return fro(hol_path(coc, 0, path, TransportConfig(ode_steps_per_unit=n)) - ref)

    ratio = err(16) / err(32)
    assert ratio > 12.0  # order >= 4 would give ~16


def unit_cell(manifold=R2):
    return SquareMap(manifold, lambda t, s: np.array([t, s]),
                     lambda t, s: (np.array([1.0, 0.0]), np.array([0.0, 1.0])))


def test_hol_square_trivial_is_identity():
    coc = get_cocycle("trivial")
    out = hol_square(coc, 0, unit_cell(), CFG)
    assert fro(out.value - np.eye(3)) < 1e-13
    assert out.target_residual < 1e-13


def test_hol_square_abelian_constant_B():
    cm = get_crossed_module("bs1")
    x, y = sp.symbols("ax ay", real=True)
    b = 0.7j
    coc = make_single_chart_gerbe(
        cm, single_chart_cover(R2), (x, y), {},
        z_comps={(0, 1): sp.Matrix([[sp.I * sp.Rational(7, 10)]])})
    out = hol_square(coc, 0, unit_cell(), CFG)
    assert abs(out.value[0, 0] - np.exp(b)) < 1e-12
    assert out.target_residual < 1e-12


def test_hol_square_abelian_quadrature_oracle():
    cm = get_crossed_module("bs1")
    x, y = sp.symbols("qx qy", real=True)
    expr = sp.Rational(1, 2) * sp.sin(3 * x) + x * y
    coc = make_single_chart_gerbe(
        cm, single_chart_cover(R2), (x, y), {},
        z_comps={(0, 1): sp.Matrix([[sp.I * expr]])})
    out = hol_square(coc, 0, unit_cell(), CFG)
    from scipy.integrate import dblquad
    val, _ = dblquad(lambda s, t: 0.5 * np.sin(3 * t) + t * s, 0, 1, 0, 1,
                     epsabs=1e-12)
    assert abs(out.value[0, 0] - np.exp(1j * val)) < 1e-9


def test_hol_square_target_relation_heisenberg(plane):
    # t = id, so the 2-holonomy must literally equal its boundary word
    cell = unit_cell()
    out = hol_square(plane, 0, cell, CFG)
    assert out.target_residual < 1e-8
    word = boundary_word(plane, 0, cell, CFG)
    assert fro(out.value - word) < 1e-8


def test_hol_square_target_order_four(plane):
    cell = unit_cell()

    def res(n):
        return hol_square(plane, 0, cell, TransportConfig(ode_steps_per_unit=n)).target_residual

    r16, r32 = res(16), res(32)
    assert r32 < 1e-6
    assert r16 / max(r32, 1e-15) > 10.0 or r32 < 1e-12


def test_hol_square_self_convergence(plane):
    cell = unit_cell()
    coarse = hol_square(plane, 0, cell, TransportConfig(ode_steps_per_unit=24)).value
    fine = hol_square(plane, 0, cell, TransportConfig(ode_steps_per_unit=240)).value
    assert fro(coarse - fine) < 1e-7


def test_hol_square_reparametrization_invariance(plane):
    cell = unit_cell()

    def phi(tau):
        return tau - 0.25 / (2 * np.pi) * np.sin(2 * np.pi * tau)

    def dphi(tau):
        return 1.0 - 0.25 * np.cos(2 * np.pi * tau)

    repar = SquareMap(R2, lambda t, s: np.array([phi(t), phi(s)]),
                      lambda t, s: (np.array([dphi(t), 0.0]),
                                    np.array([0.0, dphi(s)])))
    a = hol_square(plane, 0, cell, CFG).value
    b = hol_square(plane, 0, repar, CFG).value
    assert fro(a - b) < 1e-7


def test_hol_square_su2_target():
    coc = get_cocycle("su2_plane")
    out = hol_square(coc, 0, unit_cell(), CFG)
    assert out.target_residual < 1e-8


def _overlap_edge_path(torus):
    # horizontal segment inside U_0 and U_1 of the torus cover
    return segment([0.1, 0.5], [0.4, 0.5], manifold=torus.cover.manifold)


def test_hol_edge_trivial_data():
    coc = get_cocycle("trivial")
    out = hol_edge(coc, 0, 0, segment([0.1, 0.1], [0.7, 0.3]), CFG)
    assert fro(out.value - np.eye(3)) < 1e-13


def test_hol_edge_abelian_quadrature(torus=None):
    coc = get_cocycle("abelian_torus4")
    path = _overlap_edge_path(coc)
    out = hol_edge(coc, 0, 1, path, CFG)
    # abelian: the conjugator is invisible and W = exp(int_gamma a)
    taus = np.linspace(0, 1, 20001)
    pts = path.points(taus)
    tans = path.derivs(taus)
    vals = coc.a(0, 1).batch(pts, [tans])[:, 0, 0]
    integral = np.trapezoid(vals, taus)
    assert abs(out.value[0, 0] - np.exp(integral)) < 1e-9
    assert out.target_residual < 1e-10


def test_hol_edge_target_checkpoints(torus):
    out = hol_edge(torus, 0, 1, _overlap_edge_path(torus), CFG)
    assert out.target_residual < 1e-7
    assert out.info["target_ok"]


def test_hol_edge_zero_a_commuting_identity():
    # a = 0 and constant g with commuting data -> identity
    coc = get_cocycle("trivial")
    out = hol_edge(coc, 0, 0, segment([0.2, 0.2], [0.5, 0.8]), CFG)
    assert fro(out.value - np.eye(3)) < 1e-13


def test_hol_vertex_target_algebraic(torus):
    rng = np.random.default_rng(2)
    pts = torus.cover.sample_intersection([0, 1, 2, 3], rng, 50)
    assert pts
    for p in pts:
        out = hol_vertex(torus, 0, 1, 2, 3, p)
        assert out.target_residual <= 1e-10


def test_hol_vertex_trivial_f_is_identity():
    coc = get_cocycle("trivial")
    out = hol_vertex(coc, 0, 0, 0, 0, np.array([0.3, 0.4]))
    assert fro(out.value - np.eye(3)) < 1e-14


def test_hol_vertex_abelian_reduces_to_f_ratio():
    coc = get_cocycle("abelian_torus4")
    rng = np.random.default_rng(3)
    p = coc.cover.sample_intersection([0, 1, 2, 3], rng, 1)[0]
    out = hol_vertex(coc, 0, 1, 2, 3, p)
    want = coc.f(1, 2, 3).value(p) @ np.linalg.inv(coc.f(0, 1, 2).value(p))
    assert fro(out.value - want) < 1e-14


def _sub_cell(x0, y0, w, h, manifold=R2):
    return SquareMap(manifold,
                     lambda t, s: np.array([x0 + w * t, y0 + h * s]),
                     lambda t, s: (np.array([w, 0.0]), np.array([0.0, h])))


def test_edge_cube_trivial():
    coc = get_cocycle("trivial")
    assert check_edge_cube(coc, 0, 0, unit_cell(), CFG) < 1e-12


def test_edge_cube_abelian():
    coc = get_cocycle("abelian_torus4")
    cell = _sub_cell(0.1, 0.42, 0.3, 0.16, manifold=coc.cover.manifold)
    assert check_edge_cube(coc, 0, 1, cell, CFG) < 1e-7


def test_edge_cube_heisenberg(torus):
    cell = _sub_cell(0.1, 0.42, 0.3, 0.16, manifold=torus.cover.manifold)
    assert check_edge_cube(torus, 0, 1, cell, CFG) < 1e-6


def test_vertex_cube_constant_path(torus):
    rng = np.random.default_rng(5)
    p = torus.cover.sample_intersection([0, 1, 2, 3], rng, 1)[0]
    res = check_vertex_cube(torus, 0, 1, 2, 3, Path.constant(torus.cover.manifold, p), CFG)
    assert res < 1e-12


def test_vertex_cube_abelian():
    coc = get_cocycle("abelian_torus4")
    path = segment([0.45, 0.45], [0.55, 0.55], manifold=coc.cover.manifold)
    assert check_vertex_cube(coc, 0, 1, 2, 3, path, CFG) < 1e-7


def test_vertex_cube_heisenberg(torus):
    path = segment([0.45, 0.45], [0.55, 0.55], manifold=torus.cover.manifold)
    assert check_vertex_cube(torus, 0, 1, 2, 3, path, CFG) < 1e-6


def test_transport_config_validation():
    with pytest.raises(ValueError):
        TransportConfig(ode_steps_per_unit=4)
    with pytest.raises(ValueError):
        TransportConfig(tol_target=-1.0)
