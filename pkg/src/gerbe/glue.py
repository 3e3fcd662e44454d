"""Gluing local transports into the global surface holonomy.

The grid of a square is decorated as a (2n-1) x (2m-1) array of 2-cells:
faces at even/even positions, edge seams between neighbouring faces, and
vertex cells where four charts meet.  Each 2-cell carries its boundary word
(four group elements in canonical directions); composition is vertical then
horizontal, with the whiskering conjugators dictated by target preservation.
"""

from dataclasses import dataclass, field
from math import lcm

import numpy as np

from . import linalg
from .errors import EdgeMismatchError
from .surfaces import extract_grid_elements, refine_grid, validate_assignment
from .transport import boundary_word, hol_edge, hol_path, hol_square, hol_vertex

SEAM_TOL = 1e-9


@dataclass
class DecoratedSquare:
    """A 2-cell value together with its boundary word."""

    value: np.ndarray
    north: np.ndarray
    east: np.ndarray
    south: np.ndarray
    west: np.ndarray
    anchor: tuple = ()

    def word(self):
        return (np.linalg.inv(self.north) @ np.linalg.inv(self.east)
                @ self.south @ self.west)

    def target_residual(self, cm):
        return linalg.fro(cm.t(self.value) - self.word())


def _check_seam(a, b, what):
    scale = max(linalg.fro(a), 1.0)
    if linalg.fro(a - b) > SEAM_TOL * scale:
        raise EdgeMismatchError(f"{what} edge labels disagree: {linalg.fro(a - b)}")


def compose_h(cm, left, right):
    """Horizontal gluing; the conjugator walks down-across-up through left."""
    _check_seam(left.east, right.west, "horizontal")
    conj = (np.linalg.inv(left.west) @ np.linalg.inv(left.south) @ left.east)
    value = left.value @ cm.act(conj, right.value)
    return DecoratedSquare(
        value=value,
        north=right.north @ left.north,
        east=right.east,
        south=right.south @ left.south,
        west=left.west,
        anchor=left.anchor,
    )


def compose_v(cm, top, bottom):
    """Vertical gluing; the conjugator is the top cell's west edge."""
    _check_seam(top.south, bottom.north, "vertical")
    conj = np.linalg.inv(top.west)
    value = top.value @ cm.act(conj, bottom.value)
    return DecoratedSquare(
        value=value,
        north=top.north,
        east=bottom.east @ top.east,
        south=bottom.south,
        west=bottom.west @ top.west,
        anchor=top.anchor,
    )


def check_interchange(cm, tl, tr, bl, br):
    """|| (h then v) - (v then h) || on a compatible 2x2 block."""
    h_first = compose_v(cm, compose_h(cm, tl, tr), compose_h(cm, bl, br))
    v_first = compose_h(cm, compose_v(cm, tl, bl), compose_v(cm, tr, br))
    return linalg.fro(h_first.value - v_first.value)


# ---------------------------------------------------------------------------
# grid transport


class GridTransport:
    """All local transports of a gridded square, with shared edge holonomies."""

    def __init__(self, cocycle, square, grid, cfg, check=True):
        self.cocycle = cocycle
        self.square = square
        self.grid = grid
        self.cfg = cfg
        if check:
            validate_assignment(square, cocycle.cover, grid)
        self.elements = extract_grid_elements(square, grid)
        n, m = grid.n, grid.m
        cm = cocycle.cm

        def chart(p, q):
            return grid.assign(p, q)

        self.chart = chart

        # shared edge holonomies (same floats on both sides of every seam)
        self.vedge_hols = {}
        for (p, q), path in self.elements.v_edges.items():
            self.vedge_hols[(p, q)] = {
                "left": hol_path(cocycle, chart(p, q), path, cfg, check=False),
                "right": hol_path(cocycle, chart(p + 1, q), path, cfg, check=False),
            }
        self.hedge_hols = {}
        for (p, q), path in self.elements.h_edges.items():
            self.hedge_hols[(p, q)] = {
                "up": hol_path(cocycle, chart(p, q), path, cfg, check=False),
                "down": hol_path(cocycle, chart(p, q + 1), path, cfg, check=False),
            }
        self.north_hols = {p: hol_path(cocycle, chart(p, 1), self.elements.north[p],
                                       cfg, check=False) for p in range(1, n + 1)}
        self.south_hols = {p: hol_path(cocycle, chart(p, m), self.elements.south[p],
                                       cfg, check=False) for p in range(1, n + 1)}
        self.west_hols = {q: hol_path(cocycle, chart(1, q), self.elements.west[q],
                                      cfg, check=False) for q in range(1, m + 1)}
        self.east_hols = {q: hol_path(cocycle, chart(n, q), self.elements.east[q],
                                      cfg, check=False) for q in range(1, m + 1)}

        self.faces = {}
        self.face_cells = {}
        for (p, q), cell in self.elements.faces.items():
            self.faces[(p, q)] = hol_square(cocycle, chart(p, q), cell, cfg,
                                            check=False, with_target=False)
            self.face_cells[(p, q)] = cell
        self.v_seams = {}
        for (p, q), path in self.elements.v_edges.items():
            i, j = chart(p, q), chart(p + 1, q)
            if i == j:
                self.v_seams[(p, q)] = None
            else:
                self.v_seams[(p, q)] = hol_edge(cocycle, i, j, path, cfg, check=False)
        self.h_seams = {}
        for (p, q), path in self.elements.h_edges.items():
            i, j = chart(p, q), chart(p, q + 1)
            if i == j:
                self.h_seams[(p, q)] = None
            else:
                self.h_seams[(p, q)] = hol_edge(cocycle, i, j, path, cfg, check=False)
        self.vertex_cells = {}
        for (p, q), x in self.elements.vertices.items():
            i, j = chart(p, q), chart(p, q + 1)
            k, l = chart(p + 1, q), chart(p + 1, q + 1)
            if len({i, j, k, l}) == 1:
                self.vertex_cells[(p, q)] = None
            else:
                self.vertex_cells[(p, q)] = hol_vertex(cocycle, i, j, k, l, x)
        self._stair_cache = {}

    # --- label lookups ------------------------------------------------------

    def _face_labels(self, p, q):
        n, m = self.grid.n, self.grid.m
        north = self.north_hols[p] if q == 1 else self.hedge_hols[(p, q - 1)]["down"]
        south = self.south_hols[p] if q == m else self.hedge_hols[(p, q)]["up"]
        west = self.west_hols[q] if p == 1 else self.vedge_hols[(p - 1, q)]["right"]
        east = self.east_hols[q] if p == n else self.vedge_hols[(p, q)]["left"]
        return north, east, south, west

    def _g(self, i, j, x):
        return self.cocycle.g(i, j).value(x)

    def decorated(self, col, row):
        """The 2-cell of the (2n-1) x (2m-1) assembly grid."""
        cm = self.cocycle.cm
        ident_G = cm.identity("G")
        ident_H = cm.identity("H")
        p, q = col // 2 + 1, row // 2 + 1
        if col % 2 == 0 and row % 2 == 0:
            n_, e_, s_, w_ = self._face_labels(p, q)
            return DecoratedSquare(self.faces[(p, q)].value, n_, e_, s_, w_,
                                   anchor=("face", p, q))
        if col % 2 == 1 and row % 2 == 0:
            path = self.elements.v_edges[(p, q)]
            i, j = self.chart(p, q), self.chart(p + 1, q)
            seam = self.v_seams[(p, q)]
            value = ident_H if seam is None else np.linalg.inv(seam.value)
            gN = ident_G if i == j else self._g(i, j, path(0.0))
            gS = ident_G if i == j else self._g(i, j, path(1.0))
            return DecoratedSquare(value, gN, self.vedge_hols[(p, q)]["right"],
                                   gS, self.vedge_hols[(p, q)]["left"],
                                   anchor=("vseam", p, q))
        if col % 2 == 0 and row % 2 == 1:
            path = self.elements.h_edges[(p, q)]
            i, j = self.chart(p, q), self.chart(p, q + 1)
            seam = self.h_seams[(p, q)]
            value = ident_H if seam is None else seam.value
            gW = ident_G if i == j else self._g(i, j, path(0.0))
            gE = ident_G if i == j else self._g(i, j, path(1.0))
            return DecoratedSquare(value, self.hedge_hols[(p, q)]["up"], gE,
                                   self.hedge_hols[(p, q)]["down"], gW,
                                   anchor=("hseam", p, q))
        x = self.elements.vertices[(p, q)]
        i, j = self.chart(p, q), self.chart(p, q + 1)
        k, l = self.chart(p + 1, q), self.chart(p + 1, q + 1)
        vert = self.vertex_cells[(p, q)]
        value = ident_H if vert is None else vert.value
        return DecoratedSquare(
            value,
            ident_G if i == k else self._g(i, k, x),
            ident_G if k == l else self._g(k, l, x),
            ident_G if j == l else self._g(j, l, x),
            ident_G if i == j else self._g(i, j, x),
            anchor=("vertex", p, q))

    # --- staircase conjugators (Convention: down, across, up) ---------------

    def staircase(self, p, q):
        """1-holonomy of the staircase from the grid base corner to the
        upper-left corner of cell (p, q); leftmost factor = last leg."""
        key = (p, q)
        if key in self._stair_cache:
            return self._stair_cache[key]
        n, m = self.grid.n, self.grid.m
        sq = self.square
        acc = self.cocycle.cm.identity("G")
        if (p, q) == (1, 1):
            self._stair_cache[key] = acc
            return acc
        if p == 1:
            # straight down the west boundary
            for l in range(1, q):
                acc = self.west_hols[l] @ acc
                acc = self._g(self.chart(1, l), self.chart(1, l + 1),
                              sq(0.0, l / m)) @ acc
        else:
            for l in range(1, m + 1):
                acc = self.west_hols[l] @ acc
                if l < m:
                    acc = self._g(self.chart(1, l), self.chart(1, l + 1),
                                  sq(0.0, l / m)) @ acc
            for k in range(1, p):
                acc = self.south_hols[k] @ acc
                acc = self._g(self.chart(k, m), self.chart(k + 1, m),
                              sq(k / n, 1.0)) @ acc
            for l in range(m, q - 1, -1):
                up = np.linalg.inv(self.vedge_hols[(p - 1, l)]["right"])
                acc = up @ acc
                if l > q:
                    acc = self._g(self.chart(p, l), self.chart(p, l - 1),
                                  sq((p - 1) / n, (l - 1) / m)) @ acc
        self._stair_cache[key] = acc
        return acc

    def overline_conjugator(self, p, q):
        return np.linalg.inv(self.staircase(p, q))

    def overline(self, p, q, h):
        """alpha-action of the staircase conjugator on a group element of H."""
        return self.cocycle.cm.act(self.overline_conjugator(p, q), h)

    def overline_tangent(self, p, q, Y):
        return self.cocycle.cm.act_push_g(self.overline_conjugator(p, q), Y)

    # --- assembly -------------------------------------------------------------

    def assemble(self):
        cm = self.cocycle.cm
        n, m = self.grid.n, self.grid.m
        columns = []
        for col in range(2 * n - 1):
            stack = self.decorated(col, 0)
            for row in range(1, 2 * m - 1):
                stack = compose_v(cm, stack, self.decorated(col, row))
            columns.append(stack)
        total = columns[0]
        for colsq in columns[1:]:
            total = compose_h(cm, total, colsq)
        return total

    def diagnostics(self):
        cm = self.cocycle.cm
        out = {"faces": {}, "v_seams": {}, "h_seams": {}, "vertices": {}}
        for key, face in self.faces.items():
            word = boundary_word(self.cocycle, self.chart(*key),
                                 self.face_cells[key], self.cfg)
            out["faces"][str(key)] = linalg.fro(cm.t(face.value) - word)
        for key, seam in self.v_seams.items():
            out["v_seams"][str(key)] = 0.0 if seam is None else seam.target_residual
        for key, seam in self.h_seams.items():
            out["h_seams"][str(key)] = 0.0 if seam is None else seam.target_residual
        for key, vert in self.vertex_cells.items():
            out["vertices"][str(key)] = 0.0 if vert is None else vert.target_residual
        return out


@dataclass
class GlobalHolonomy:
    value: np.ndarray
    grid: "GridAssignment"
    basepoint_chart: int
    target_residual: float
    final: DecoratedSquare
    diagnostics: dict = field(default_factory=dict)
    fixture: str = ""

    def to_dict(self):
        return {
            "fixture": self.fixture,
            "value_real": np.real(self.value).tolist(),
            "value_imag": np.imag(self.value).tolist(),
            "grid": self.grid.to_dict(),
            "basepoint_chart": self.basepoint_chart,
            "target_residual": self.target_residual,
            "diagnostics": self.diagnostics,
        }


def assemble_global_hol(cocycle, square, grid, cfg, check=True, diagnostics=False):
    """Glue the local data over the grid into the global holonomy."""
    gt = GridTransport(cocycle, square, grid, cfg, check=check)
    final = gt.assemble()
    residual = final.target_residual(cocycle.cm)
    diag = gt.diagnostics() if diagnostics else {}
    return GlobalHolonomy(value=final.value, grid=grid,
                          basepoint_chart=grid.assign(1, 1),
                          target_residual=residual, final=final,
                          diagnostics=diag, fixture=cocycle.name)


def check_subdivision(cocycle, square, grid, cfg, factor=2):
    """||Hol(grid) - Hol(refined grid)||; nonzero only through integration error."""
    coarse = assemble_global_hol(cocycle, square, grid, cfg)
    fine = assemble_global_hol(cocycle, square, refine_grid(grid, factor), cfg)
    return linalg.fro(coarse.value - fine.value)


def alternative_assignment(square, cover, grid, rank=1, resolution=None):
    """A different admissible assignment (next-ranked set id per cell)."""
    from .surfaces import GridAssignment, _cell_samples
    resolution = grid.resolution if resolution is None else resolution
    assignment = np.empty_like(grid.assignment)
    changed = False
    for p, q in grid.cells():
        pts = _cell_samples(square, grid.n, grid.m, p, q, resolution)
        slacks = np.array([[u.slack(pt) for pt in pts] for u in cover.sets])
        admissible = np.nonzero(slacks.min(axis=1) >= grid.margin)[0]
        pick = admissible[min(rank, len(admissible) - 1)]
        if pick != grid.assign(p, q):
            changed = True
        assignment[p - 1, q - 1] = pick
    if not changed:
        raise EdgeMismatchError("no alternative assignment exists for this square")
    return GridAssignment(n=grid.n, m=grid.m, assignment=assignment,
                          resolution=grid.resolution, margin=grid.margin)


def check_transformation(cocycle, square, grid_a, grid_b, cfg):
    """Residuals of the change-of-assignment law between two grids.

    Returns a dict with the assembled values, the direct difference, the
    basepoint-conjugation residual (the sphere reduction), and, for grids of
    equal shape, the residual of the full boundary-decorated relation.
    """
    cm = cocycle.cm
    n = lcm(grid_a.n, grid_b.n)
    m = lcm(grid_a.m, grid_b.m)
    if (grid_a.n, grid_a.m) != (n, m):
        grid_a = refine_grid_axes(grid_a, n // grid_a.n, m // grid_a.m)
    if (grid_b.n, grid_b.m) != (n, m):
        grid_b = refine_grid_axes(grid_b, n // grid_b.n, m // grid_b.m)

    gt_a = GridTransport(cocycle, square, grid_a, cfg)
    gt_b = GridTransport(cocycle, square, grid_b, cfg)
    hol_a = gt_a.assemble().value
    hol_b = gt_b.assemble().value

    g_base = cocycle.g(grid_a.assign(1, 1), grid_b.assign(1, 1)).value(square(0.0, 0.0))
    conjugated = cm.act(np.linalg.inv(g_base), hol_a)
    reduced = linalg.fro(hol_b - conjugated)
    direct = linalg.fro(hol_b - hol_a)

    full = _transformation_product_residual(cocycle, square, gt_a, gt_b, hol_a,
                                            hol_b, cfg)
    return {
        "hol_a": hol_a,
        "hol_b": hol_b,
        "direct_residual": direct,
        "base_conjugation_residual": reduced,
        "full_relation_residual": full,
    }


def refine_grid_axes(grid, fx, fy):
    from .surfaces import GridAssignment
    n, m = grid.n * fx, grid.m * fy
    assignment = np.empty((n, m), dtype=int)
    for p in range(1, n + 1):
        for q in range(1, m + 1):
            assignment[p - 1, q - 1] = grid.assign((p + fx - 1) // fx,
                                                   (q + fy - 1) // fy)
    return GridAssignment(n=n, m=m, assignment=assignment,
                          resolution=grid.resolution, margin=grid.margin)


def _transformation_product_residual(cocycle, square, gt_a, gt_b, hol_a, hol_b, cfg):
    """Boundary-decorated relation between two assignments of one grid shape.

    hol_b = alpha_{g_ii'(base)}(hol_a) * prod(boundary seam factors) *
    prod(boundary junction factors), with factors taken in N, E, S, W order
    and whiskered by the B-grid staircases.
    """
    cm = cocycle.cm
    grid = gt_a.grid
    n, m = grid.n, grid.m
    els = gt_a.elements

    g_base = cocycle.g(grid.assign(1, 1), gt_b.grid.assign(1, 1)).value(square(0.0, 0.0))
    acc = cm.act(np.linalg.inv(g_base), hol_a)

    def seam(path, j, jp):
        if j == jp:
            return None
        return hol_edge(cocycle, j, jp, path, cfg, check=False).value

    def junction(x, j, jp, k, kp):
        if j == k and jp == kp:
            return None
        return hol_vertex(cocycle, j, jp, k, kp, x).value

    factors = []
    for k in range(1, n + 1):
        val = seam(els.north[k], gt_a.chart(k, 1), gt_b.chart(k, 1))
        if val is not None:
            factors.append((val, (k, 1)))
        if k < n:
            x = square(k / n, 0.0)
            val = junction(x, gt_a.chart(k, 1), gt_b.chart(k, 1),
                           gt_a.chart(k + 1, 1), gt_b.chart(k + 1, 1))
            if val is not None:
                factors.append((val, (k + 1, 1)))
    for l in range(1, m + 1):
        val = seam(els.east[l], gt_a.chart(n, l), gt_b.chart(n, l))
        if val is not None:
            factors.append((val, (n, l)))
        if l < m:
            x = square(1.0, l / m)
            val = junction(x, gt_a.chart(n, l), gt_b.chart(n, l),
                           gt_a.chart(n, l + 1), gt_b.chart(n, l + 1))
            if val is not None:
                factors.append((val, (n, l)))
    for k in range(n, 0, -1):
        val = seam(els.south[k], gt_a.chart(k, m), gt_b.chart(k, m))
        if val is not None:
            factors.append((val, (k, m)))
        if k > 1:
            x = square((k - 1) / n, 1.0)
            val = junction(x, gt_a.chart(k - 1, m), gt_b.chart(k - 1, m),
                           gt_a.chart(k, m), gt_b.chart(k, m))
            if val is not None:
                factors.append((val, (k, m)))
    for l in range(m, 0, -1):
        val = seam(els.west[l], gt_a.chart(1, l), gt_b.chart(1, l))
        if val is not None:
            factors.append((val, (1, l)))
        if l > 1:
            x = square(0.0, (l - 1) / m)
            val = junction(x, gt_a.chart(1, l - 1), gt_b.chart(1, l - 1),
                           gt_a.chart(1, l), gt_b.chart(1, l))
            if val is not None:
                factors.append((val, (1, l)))

    for val, (p, q) in factors:
        acc = acc @ gt_b.overline(p, q, val)
    return linalg.fro(hol_b - acc)
