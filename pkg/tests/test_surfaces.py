"""Grid search, grid element extraction, and family restriction."""

import numpy as np
import pytest

from gerbe.errors import ContainmentError, GridNotFoundError
from gerbe.fixtures import get_cocycle, get_surface
from gerbe.geometry import Euclidean, single_chart_cover, sphere_halfspace_cover
from gerbe.surfaces import (
    GridAssignment, SquareFamily, extract_grid_elements, find_grid, refine_grid,
    restrict_family, sphere_mode_residual, validate_assignment,
)


def test_single_chart_square_gets_1x1():
    fam = get_surface("flat_disk")
    cover = single_chart_cover(Euclidean(2))
    grid = find_grid(fam.base, cover)
    assert (grid.n, grid.m) == (1, 1)
    assert grid.assign(1, 1) == 0


def test_sphere_closed_surface_grid():
    fam = get_surface("sphere_of_radius")
    cover = sphere_halfspace_cover()
    grid = find_grid(fam.base, cover)
    assert grid.n * grid.m <= 6
    validate_assignment(fam.base, cover, grid)
    # doubling the sampling resolution must not invalidate the assignment
    validate_assignment(fam.base, cover, grid, resolution=2 * grid.resolution - 1)


def test_equator_straddling_patch():
    fam = get_surface("sphere_patch")
    cover = sphere_halfspace_cover()
    grid = find_grid(fam.base, cover)
    validate_assignment(fam.base, cover, grid)
    assert grid.n * grid.m >= 2


def test_find_grid_deterministic():
    fam = get_surface("torus_wrap")
    cover = get_cocycle("heisenberg_torus4").cover
    g1 = find_grid(fam.base, cover)
    g2 = find_grid(fam.base, cover)
    assert (g1.n, g1.m) == (g2.n, g2.m)
    assert np.array_equal(g1.assignment, g2.assignment)


def test_grid_not_found_has_diagnostic():
    # the full torus never fits in a single window
    fam = get_surface("torus_wrap")
    cover = get_cocycle("heisenberg_torus4").cover
    with pytest.raises(GridNotFoundError) as err:
        find_grid(fam.base, cover, max_depth=1)
    assert "cell" in err.value.diagnostic


def test_extract_counts():
    fam = get_surface("flat_disk")
    for (n, m), (faces, vedges, hedges, verts) in {
        (1, 1): (1, 0, 0, 0),
        (2, 2): (4, 2, 2, 1),
        (2, 3): (6, 3, 4, 2),
    }.items():
        grid = GridAssignment(n=n, m=m, assignment=np.zeros((n, m), dtype=int))
        els = extract_grid_elements(fam.base, grid)
        assert len(els.faces) == faces
        assert len(els.v_edges) == vedges * 1 if n > 1 else True
        # interior edge counts: vertical (n-1)*m, horizontal n*(m-1)
        assert len(els.v_edges) == (n - 1) * m
        assert len(els.h_edges) == n * (m - 1)
        assert len(els.vertices) == (n - 1) * (m - 1)
        assert len(els.north) == n and len(els.south) == n
        assert len(els.west) == m and len(els.east) == m


def test_shared_edges_agree_pointwise():
    fam = get_surface("bump_family")
    grid = GridAssignment(n=2, m=2, assignment=np.zeros((2, 2), dtype=int))
    els = extract_grid_elements(fam.base, grid)
    taus = np.linspace(0, 1, 9)
    # east edge of face (1,1) equals the interior vertical edge (1,1)
    face = els.faces[(1, 1)]
    for tau in taus:
        assert np.allclose(face.east_edge()(tau), els.v_edges[(1, 1)](tau),
                           atol=1e-12)
        assert np.allclose(els.faces[(2, 1)].west_edge()(tau),
                           els.v_edges[(1, 1)](tau), atol=1e-12)
        assert np.allclose(els.faces[(1, 1)].south_edge()(tau),
                           els.h_edges[(1, 1)](tau), atol=1e-12)
    assert np.allclose(els.vertices[(1, 1)], fam.base(0.5, 0.5), atol=1e-14)


def test_restricted_jets_scale():
    fam = get_surface("sphere_of_radius")
    cell = fam.base.restrict(0.25, 0.5, 0.5, 1.0)
    t, s = 0.3, 0.7
    dt, ds = cell.jet(t, s)
    gdt, gds = fam.base.jet(0.25 + 0.25 * t, 0.5 + 0.5 * s)
    assert np.allclose(dt, 0.25 * gdt, atol=1e-12)
    assert np.allclose(ds, 0.5 * gds, atol=1e-12)


def test_restrict_family_chain_rule():
    fam = get_surface("bump_family")
    grid = GridAssignment(n=2, m=1, assignment=np.zeros((2, 1), dtype=int))
    cells = restrict_family(fam, grid)
    cell = cells[(2, 1)]
    # variation of the reparametrized cell equals the reparametrized variation
    assert np.allclose(cell.variation(0.3, 0.4), fam.variation(0.65, 0.4),
                       atol=1e-14)
    assert np.allclose(cell.at(0.0)(0.3, 0.4), fam.base(0.65, 0.4), atol=1e-14)


def test_zero_and_translation_variations():
    fam = get_surface("flat_disk")
    v = fam.variation(0.2, 0.9)
    assert np.allclose(v, fam.variation(0.8, 0.1))

    const = SquareFamily(Euclidean(2), lambda r, t, s: np.array([t, s]))
    assert np.allclose(const.variation(0.4, 0.6), 0.0, atol=1e-10)


def test_fd_variation_matches_analytic():
    fam = get_surface("sphere_of_radius")
    no_analytic = SquareFamily(fam.manifold, fam._eval, h_fd=1e-5)
    for (t, s) in [(0.1, 0.3), (0.7, 0.9)]:
        assert np.linalg.norm(no_analytic.variation(t, s)
                              - fam.variation(t, s)) < 1e-8


def test_sphere_mode_flags():
    fam = get_surface("sphere_of_radius")
    assert fam.sphere_mode
    assert sphere_mode_residual(fam.base) < 1e-12
    patch = get_surface("sphere_patch")
    assert sphere_mode_residual(patch.base) > 1e-3


def test_refine_grid_keeps_assignments():
    grid = GridAssignment(n=2, m=1, assignment=np.array([[3], [5]]))
    fine = refine_grid(grid, 2)
    assert (fine.n, fine.m) == (4, 2)
    assert fine.assign(1, 1) == 3 and fine.assign(2, 2) == 3
    assert fine.assign(3, 1) == 5 and fine.assign(4, 2) == 5


def test_validate_assignment_raises_on_bad_grid():
    fam = get_surface("sphere_patch")
    cover = sphere_halfspace_cover()
    bad = GridAssignment(n=1, m=1, assignment=np.array([[0]]))
    with pytest.raises(ContainmentError):
        validate_assignment(fam.base, cover, bad)


def test_path_restrict_reverse_concat():
    fam = get_surface("bump_family")
    edge = fam.base.north_edge()
    sub = edge.restrict(0.25, 0.75)
    assert np.allclose(sub(0.0), edge(0.25), atol=1e-14)
    assert np.allclose(sub.deriv(0.5), 0.5 * edge.deriv(0.5), atol=1e-10)
    rev = edge.reversed()
    assert np.allclose(rev(0.2), edge(0.8), atol=1e-14)
    cat = edge.restrict(0.0, 0.5).concatenate(edge.restrict(0.5, 1.0))
    assert np.allclose(cat(0.25), edge(0.25), atol=1e-12)
    assert np.allclose(cat(0.75), edge(0.75), atol=1e-12)
