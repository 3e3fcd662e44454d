"""The derivative of the global holonomy along a family of squares.

The formula assembled here has four pieces:

  total = -(alpha_Hol)_*(A at the base corner)
          + Hol . (bulk 3-curvature integral
                   + directed boundary B integrals
                   + directed boundary a sums)

against which a central-difference oracle differentiates the assembled
holonomy entrywise.  Conjugator paths: the staircase of the gluing
convention into each cell, extended "down to s, then right to t" inside a
cell, or along the boundary for boundary terms; the applied action is by the
inverse (point-back-to-base) holonomy, matching the local transport ODEs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import GridDriftError
from .glue import GridTransport, assemble_global_hol
from .linalg import composite_gauss_nodes, segment_gauss_params, CF4_ALPHA, CF4_BETA
from .surfaces import validate_assignment
from .transport import transport_along


@dataclass
class FDConfig:
    steps: tuple = (4e-3, 2e-3, 1e-3)
    richardson: bool = True

    def __post_init__(self):
        steps = tuple(float(s) for s in self.steps)
        if not steps or any(s <= 0 for s in steps):
            raise ValueError("fd steps must be positive")
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise ValueError("fd steps must decrease")
        object.__setattr__(self, "steps", steps)


@dataclass
class DerivativeBreakdown:
    hol: np.ndarray
    corner_term: np.ndarray
    bulk_term: np.ndarray
    boundary_B: np.ndarray
    boundary_a: np.ndarray
    per_cell_bulk: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.corner_term + self.hol @ (self.bulk_term + self.boundary_B
                                              + self.boundary_a)

    def to_dict(self):
        def mat(m):
            return {"real": np.real(m).tolist(), "imag": np.imag(m).tolist()}
        return {
            "hol": mat(self.hol),
            "corner_term": mat(self.corner_term),
            "bulk_term": mat(self.bulk_term),
            "boundary_B": mat(self.boundary_B),
            "boundary_a": mat(self.boundary_a),
            "total": mat(self.total),
            "per_cell_bulk_norms": {k: linalg.fro(v)
                                    for k, v in self.per_cell_bulk.items()},
        }


# ---------------------------------------------------------------------------
# helper transports along the grid boundary


class _BoundaryRoutes:
    """Prefix holonomies along the N, E, S, W boundary walks of a grid."""

    def __init__(self, gt):
        self.gt = gt
        cocycle, grid, sq = gt.cocycle, gt.grid, gt.square
        n, m = grid.n, grid.m

        def g(i, j, x):
            return cocycle.g(i, j).value(x)

        # north walk: prefix[k] = holonomy from base to start of cell k's edge
        self.preN = {1: cocycle.cm.identity("G")}
        for k in range(1, n):
            cross = g(gt.chart(k, 1), gt.chart(k + 1, 1), sq(k / n, 0.0))
            self.preN[k + 1] = cross @ gt.north_hols[k] @ self.preN[k]
        north_full = gt.north_hols[n] @ self.preN[n]

        # west walk down the far-left boundary
        self.preW = {1: cocycle.cm.identity("G")}
        for l in range(1, m):
            cross = g(gt.chart(1, l), gt.chart(1, l + 1), sq(0.0, l / m))
            self.preW[l + 1] = cross @ gt.west_hols[l] @ self.preW[l]
        west_full = gt.west_hols[m] @ self.preW[m]

        # east walk: north boundary first, then down the east side
        self.preE = {1: north_full}
        for l in range(1, m):
            cross = g(gt.chart(n, l), gt.chart(n, l + 1), sq(1.0, l / m))
            self.preE[l + 1] = cross @ gt.east_hols[l] @ self.preE[l]

        # south walk: west boundary first, then right along the south side
        self.preS = {1: west_full}
        for k in range(1, n):
            cross = g(gt.chart(k, m), gt.chart(k + 1, m), sq(k / n, 1.0))
            self.preS[k + 1] = cross @ gt.south_hols[k] @ self.preS[k]


def _edge_term(cocycle, chart, edge_path, prefix, fam_var, cfg, n_int=None):
    """- directed integral piece: int (alpha_{route^-1})_* B(edge', dr)."""
    cm = cocycle.cm
    n_int = cfg.ode_steps_per_unit if n_int is None else n_int
    nodes, weights = composite_gauss_nodes(n_int, cfg.quadrature_points)
    u = transport_along(cocycle, chart, edge_path,
                        np.concatenate([[0.0], nodes]), cfg)[1:]
    route = np.einsum("nij,jk->nik", u, prefix)
    conj = np.linalg.inv(route)
    pts = edge_path.points(nodes)
    tans = edge_path.derivs(nodes)
    var = fam_var(pts, nodes)
    Bvals = cocycle.B(chart).batch(pts, [tans, var])
    pushed = cm.act_push_g_batch(conj, Bvals)
    return np.einsum("n,nij->ij", weights, pushed)


def boundary_integral_B(cocycle, fam, grid, cfg, gt=None, routes=None):
    """Directed boundary integrals of B against the variation (-N -E +S +W)."""
    gt = gt or GridTransport(cocycle, fam.base, grid, cfg, check=False)
    routes = routes or _BoundaryRoutes(gt)
    n, m = grid.n, grid.m
    els = gt.elements
    total = np.zeros((cocycle.cm.size_H, cocycle.cm.size_H),
                     dtype=cocycle.cm.dtype_H)
    for k in range(1, n + 1):
        def var(pts, taus, k=k):
            ts = (k - 1 + taus) / n
            return fam.variations(ts, np.zeros_like(ts))
        total -= _edge_term(cocycle, gt.chart(k, 1), els.north[k],
                            routes.preN[k], var, cfg)
    for l in range(1, m + 1):
        def var(pts, taus, l=l):
            ss = (l - 1 + taus) / m
            return fam.variations(np.ones_like(ss), ss)
        total -= _edge_term(cocycle, gt.chart(n, l), els.east[l],
                            routes.preE[l], var, cfg)
    for k in range(1, n + 1):
        def var(pts, taus, k=k):
            ts = (k - 1 + taus) / n
            return fam.variations(ts, np.ones_like(ts))
        total += _edge_term(cocycle, gt.chart(k, m), els.south[k],
                            routes.preS[k], var, cfg)
    for l in range(1, m + 1):
        def var(pts, taus, l=l):
            ss = (l - 1 + taus) / m
            return fam.variations(np.zeros_like(ss), ss)
        total += _edge_term(cocycle, gt.chart(1, l), els.west[l],
                            routes.preW[l], var, cfg)
    return total


def boundary_sum_a(cocycle, fam, grid, cfg, gt=None, routes=None):
    """Directed sums of conjugated a-values at boundary chart junctions.

    Sign note: with the seam orientations fixed by the gluing grid (inverse
    edge transports between left-right neighbours, plain ones between
    up-down neighbours), differentiating the assembled holonomy puts the
    junction values in with signs +N +E -S -W; the usual statement's signs
    belong to the opposite pair order.  The finite-difference oracle and the
    exact abelian two-chart computation both pin this choice.
    """
    gt = gt or GridTransport(cocycle, fam.base, grid, cfg, check=False)
    routes = routes or _BoundaryRoutes(gt)
    cm = cocycle.cm
    n, m = grid.n, grid.m
    sq = gt.square
    total = np.zeros((cm.size_H, cm.size_H), dtype=cm.dtype_H)

    def term(pair, x, var, route):
        a_val = cocycle.a(*pair)(x, var)
        return cm.act_push_g(np.linalg.inv(route), a_val)

    for k in range(1, n):
        pair = (gt.chart(k, 1), gt.chart(k + 1, 1))
        if pair[0] != pair[1]:
            x = sq(k / n, 0.0)
            route = gt.north_hols[k] @ routes.preN[k]
            total += term(pair, x, fam.variation(k / n, 0.0), route)
    for l in range(1, m):
        pair = (gt.chart(n, l), gt.chart(n, l + 1))
        if pair[0] != pair[1]:
            x = sq(1.0, l / m)
            route = gt.east_hols[l] @ routes.preE[l]
            total += term(pair, x, fam.variation(1.0, l / m), route)
    for k in range(n, 1, -1):
        pair = (gt.chart(k - 1, m), gt.chart(k, m))
        if pair[0] != pair[1]:
            x = sq((k - 1) / n, 1.0)
            route = gt.south_hols[k - 1] @ routes.preS[k - 1]
            total -= term(pair, x, fam.variation((k - 1) / n, 1.0), route)
    for l in range(m, 1, -1):
        pair = (gt.chart(1, l - 1), gt.chart(1, l))
        if pair[0] != pair[1]:
            x = sq(0.0, (l - 1) / m)
            route = gt.west_hols[l - 1] @ routes.preW[l - 1]
            total -= term(pair, x, fam.variation(0.0, (l - 1) / m), route)
    return total


def bulk_integral_H(cocycle, fam, grid, cfg, gt=None, cell_path="down_right"):
    """Sum over cells of the conjugated 3-curvature contracted with the family.

    cell_path selects the in-cell extension of the staircase conjugator; both
    choices must agree because t(H) = 0 (checked by a dedicated test).
    """
    gt = gt or GridTransport(cocycle, fam.base, grid, cfg, check=False)
    cm = cocycle.cm
    dG, dH = cm.size_G, cm.size_H
    n, m = grid.n, grid.m
    n_int = max(4, cfg.ode_steps_per_unit // 2)
    q = cfg.quadrature_points
    total = np.zeros((dH, dH), dtype=cm.dtype_H)
    per_cell = {}

    for (p, qq) in grid.cells():
        chart = gt.chart(p, qq)
        cell = gt.elements.faces[(p, qq)]
        t0, t1, s0, s1 = grid.bounds(p, qq)
        stair_inv = gt.overline_conjugator(p, qq)

        s_nodes, s_weights = composite_gauss_nodes(n_int, q)
        t_nodes, t_weights = composite_gauss_nodes(n_int, q)
        ns, nt = len(s_nodes), len(t_nodes)

        if cell_path == "down_right":
            # west-edge descent to s, then horizontal transport to t
            uW = transport_along(cocycle, chart, cell.west_edge(),
                                 np.concatenate([[0.0], s_nodes]), cfg)[1:]
            uW_inv = np.linalg.inv(uW)
            Pinv = _horizontal_inverse_transports(cocycle, chart, cell,
                                                  s_nodes, t_nodes, cfg)
            conj = np.einsum("nij,nmjk->nmik", uW_inv, Pinv)
        else:
            # north-edge transport to t, then vertical descent to s
            uN = transport_along(cocycle, chart, cell.north_edge(),
                                 np.concatenate([[0.0], t_nodes]), cfg)[1:]
            uN_inv = np.linalg.inv(uN)
            Qinv = _vertical_inverse_transports(cocycle, chart, cell,
                                                t_nodes, s_nodes, cfg)
            conj = np.einsum("tij,tsjk->tsik", uN_inv, Qinv)
            conj = np.transpose(conj, (1, 0, 2, 3))

        conj = conj.reshape(ns * nt, dG, dG)
        conj = np.einsum("nij,jk->nik", conj, stair_inv)

        flat_t = np.tile(t_nodes, ns)
        flat_s = np.repeat(s_nodes, nt)
        pts = cell.points(flat_t, flat_s)
        jt, js = cell.jets(flat_t, flat_s)
        glob_t = t0 + (t1 - t0) * flat_t
        glob_s = s0 + (s1 - s0) * flat_s
        var = fam.variations(glob_t, glob_s)
        Hvals = cocycle.three_curvature_batch(chart, pts, [jt, js, var])
        pushed = cm.act_push_g_batch(conj, Hvals).reshape(ns, nt, dH, dH)
        cell_total = np.einsum("n,m,nmij->ij", s_weights, t_weights, pushed)
        per_cell[f"({p},{qq})"] = cell_total
        total += cell_total
    return total, per_cell


def _horizontal_inverse_transports(cocycle, chart, cell, s_nodes, t_nodes, cfg):
    """P(t, s)^{-1} for horizontal transports at each s row (lockstep CF4)."""
    cm = cocycle.cm
    dG = cm.size_G
    A = cocycle.A(chart)
    ns, nt = len(s_nodes), len(t_nodes)
    t_params = np.concatenate([[0.0], t_nodes])
    stage_t, ht = segment_gauss_params(t_params)
    flat_t = np.tile(stage_t.ravel(), ns)
    flat_s = np.repeat(s_nodes, 2 * nt)
    pts = cell.points(flat_t, flat_s)
    jt, _ = cell.jets(flat_t, flat_s)
    Avals = A.batch(pts, [jt]).reshape(ns, nt, 2, dG, dG)
    e1 = -ht[None, :, None, None] * (CF4_ALPHA * Avals[:, :, 0] + CF4_BETA * Avals[:, :, 1])
    e2 = -ht[None, :, None, None] * (CF4_BETA * Avals[:, :, 0] + CF4_ALPHA * Avals[:, :, 1])
    exp_G = lambda s: cm.exp_batch("G", s)
    Pinv = np.broadcast_to(np.eye(dG, dtype=e1.dtype), (ns, dG, dG)).copy()
    out = np.empty((ns, nt, dG, dG), dtype=e1.dtype)
    for seg in range(nt):
        Pinv = np.einsum("nij,njk,nkl->nil", Pinv, exp_G(-e1[:, seg]), exp_G(-e2[:, seg]))
        out[:, seg] = Pinv
    return out


def _vertical_inverse_transports(cocycle, chart, cell, t_nodes, s_nodes, cfg):
    """Q(s, t)^{-1} for vertical transports at each t column."""
    cm = cocycle.cm
    dG = cm.size_G
    A = cocycle.A(chart)
    nt, ns = len(t_nodes), len(s_nodes)
    s_params = np.concatenate([[0.0], s_nodes])
    stage_s, hs = segment_gauss_params(s_params)
    flat_s = np.tile(stage_s.ravel(), nt)
    flat_t = np.repeat(t_nodes, 2 * ns)
    pts = cell.points(flat_t, flat_s)
    _, js = cell.jets(flat_t, flat_s)
    Avals = A.batch(pts, [js]).reshape(nt, ns, 2, dG, dG)
    e1 = -hs[None, :, None, None] * (CF4_ALPHA * Avals[:, :, 0] + CF4_BETA * Avals[:, :, 1])
    e2 = -hs[None, :, None, None] * (CF4_BETA * Avals[:, :, 0] + CF4_ALPHA * Avals[:, :, 1])
    exp_G = lambda s: cm.exp_batch("G", s)
    Qinv = np.broadcast_to(np.eye(dG, dtype=e1.dtype), (nt, dG, dG)).copy()
    out = np.empty((nt, ns, dG, dG), dtype=e1.dtype)
    for seg in range(ns):
        Qinv = np.einsum("nij,njk,nkl->nil", Qinv, exp_G(-e1[:, seg]), exp_G(-e2[:, seg]))
        out[:, seg] = Qinv
    return out


# ---------------------------------------------------------------------------
# the assembled formula and its finite-difference oracle


def _validate_family_grid(cocycle, fam, grid, max_step):
    for r in (-max_step, max_step):
        try:
            validate_assignment(fam.at(r), cocycle.cover, grid)
        except Exception as exc:
            raise GridDriftError(
                f"grid assignment invalid at r = {r}: {exc}; use a finer grid "
                "or a smaller finite-difference step") from exc


def d_hol_formula(cocycle, fam, grid, cfg, fdcfg=None, gt=None):
    """Evaluate the derivative formula at r = 0 for the given grid."""
    if fdcfg is not None:
        _validate_family_grid(cocycle, fam, grid, max(fdcfg.steps))
    gt = gt or GridTransport(cocycle, fam.base, grid, cfg, check=False)
    cm = cocycle.cm
    hol = gt.assemble().value

    base_chart = grid.assign(1, 1)
    x0 = gt.square(0.0, 0.0)
    A_corner = cocycle.A(base_chart)(x0, fam.variation(0.0, 0.0))
    corner = -cm.act_push_h(A_corner, hol)

    routes = _BoundaryRoutes(gt)
    bulk, per_cell = bulk_integral_H(cocycle, fam, grid, cfg, gt=gt)
    bB = boundary_integral_B(cocycle, fam, grid, cfg, gt=gt, routes=routes)
    ba = boundary_sum_a(cocycle, fam, grid, cfg, gt=gt, routes=routes)
    return DerivativeBreakdown(hol=hol, corner_term=corner, bulk_term=bulk,
                               boundary_B=bB, boundary_a=ba,
                               per_cell_bulk=per_cell)


def d_hol_finite_difference(cocycle, fam, grid, cfg, fdcfg):
    """Central differences of the assembled holonomy over fdcfg.steps."""
    _validate_family_grid(cocycle, fam, grid, max(fdcfg.steps))
    values = []
    for h in fdcfg.steps:
        plus = assemble_global_hol(cocycle, fam.at(h), grid, cfg, check=False).value
        minus = assemble_global_hol(cocycle, fam.at(-h), grid, cfg, check=False).value
        values.append((plus - minus) / (2.0 * h))

    table = []
    orders = []
    for a in range(len(values) - 1):
        diff = linalg.fro(values[a] - values[a + 1])
        table.append({"step": fdcfg.steps[a], "pair_diff": diff})
        if a > 0:
            prev = table[a - 1]["pair_diff"]
            ratio_h = fdcfg.steps[a - 1] / fdcfg.steps[a]
            if diff > 0:
                orders.append(float(np.log(prev / diff) / np.log(ratio_h)))

    best = values[-1]
    rich_values = []
    if fdcfg.richardson and len(values) >= 2:
        for a in range(len(values) - 1):
            rho = fdcfg.steps[a] / fdcfg.steps[a + 1]
            rich_values.append((rho ** 2 * values[a + 1] - values[a]) / (rho ** 2 - 1.0))
        best = rich_values[-1]

    return {
        "steps": list(fdcfg.steps),
        "values": values,
        "richardson_values": rich_values,
        "best": best,
        "orders": orders,
        "order_estimate": orders[-1] if orders else float("nan"),
        "table": table,
    }


def relative_error(formula_total, fd_value, floor=1e-8):
    return linalg.fro(formula_total - fd_value) / max(linalg.fro(fd_value), floor)


def compare_formula_fd(cocycle, fam, grid, cfg, fdcfg):
    """Run both sides of the main theorem and report their agreement."""
    breakdown = d_hol_formula(cocycle, fam, grid, cfg, fdcfg=fdcfg)
    oracle = d_hol_finite_difference(cocycle, fam, grid, cfg, fdcfg)
    fd = oracle["best"]
    rel = relative_error(breakdown.total, fd)
    rows = []
    for k, h in enumerate(fdcfg.steps):
        abs_err = linalg.fro(oracle["values"][k] - breakdown.total)
        rows.append({
            "step": h,
            "fd_norm": linalg.fro(oracle["values"][k]),
            "formula_norm": linalg.fro(breakdown.total),
            "abs_err": abs_err,
            "rel_err": abs_err / max(linalg.fro(oracle["values"][k]), 1e-8),
            "est_order": (oracle["orders"][k - 2] if 2 <= k < 2 + len(oracle["orders"])
                          else float("nan")),
        })
    return {
        "breakdown": breakdown,
        "oracle": oracle,
        "relative_error": rel,
        "convergence_rows": rows,
    }


def check_local_lemma(cocycle, chart, fam, cfg, fdcfg=None):
    """Single-cell specialization: FD against the one-chart formula."""
    from .surfaces import GridAssignment
    fdcfg = fdcfg or FDConfig()
    grid = GridAssignment(n=1, m=1,
                          assignment=np.array([[chart]], dtype=int))
    out = compare_formula_fd(cocycle, fam, grid, cfg, fdcfg)
    return out


def d_hol_sphere(cocycle, fam, grid, cfg, fdcfg=None):
    """Sphere specialization: boundary terms must cancel; total = corner + bulk."""
    from .surfaces import sphere_mode_residual
    if not fam.sphere_mode:
        raise GridDriftError("d_hol_sphere expects a sphere-mode family")
    res = sphere_mode_residual(fam.base)
    if res > 1e-10:
        raise GridDriftError(f"sphere-mode identifications violated: {res}")
    fdcfg = fdcfg or FDConfig()
    breakdown = d_hol_formula(cocycle, fam, grid, cfg, fdcfg=fdcfg)
    cancellation = linalg.fro(breakdown.boundary_B + breakdown.boundary_a)
    reduced_total = breakdown.corner_term + breakdown.hol @ breakdown.bulk_term
    oracle = d_hol_finite_difference(cocycle, fam, grid, cfg, fdcfg)
    rel = relative_error(reduced_total, oracle["best"])
    return {
        "breakdown": breakdown,
        "boundary_cancellation": cancellation,
        "reduced_total": reduced_total,
        "oracle": oracle,
        "relative_error": rel,
    }


def check_H_transform_and_center(cocycle, fam, grid_a, grid_b, cfg, n_center=20,
                                 seed=0):
    """Bulk-integral transformation law plus the sphere centrality checks."""
    cm = cocycle.cm
    gt_a = GridTransport(cocycle, fam.base, grid_a, cfg, check=False)
    gt_b = GridTransport(cocycle, fam.base, grid_b, cfg, check=False)
    bulk_a, _ = bulk_integral_H(cocycle, fam, grid_a, cfg, gt=gt_a)
    bulk_b, _ = bulk_integral_H(cocycle, fam, grid_b, cfg, gt=gt_b)
    g_ab = cocycle.g(grid_a.assign(1, 1), grid_b.assign(1, 1)).value(fam.base(0.0, 0.0))
    transform_residual = linalg.fro(bulk_a - cm.act_push_g(np.linalg.inv(g_ab), bulk_b))

    hol = gt_a.assemble().value
    rng = np.random.default_rng(seed)
    center_residual = 0.0
    for _ in range(n_center):
        h = cm.random_group(rng, "H")
        center_residual = max(center_residual, linalg.fro(hol @ h - h @ hol))

    # inner setting: H_i agree pointwise on overlaps when central-valued
    overlap_residual = 0.0
    checked = 0
    dim = cocycle.cover.manifold.dim
    for i in range(len(cocycle.cover)):
        for j in range(i + 1, len(cocycle.cover)):
            if checked >= 30:
                break
            for p in cocycle.cover.sample_intersection([i, j], rng, 2):
                vs = [rng.uniform(-1, 1, dim) for _ in range(3)]
                Hi = cocycle.three_curvature_H(i, p, *vs)
                Hj = cocycle.three_curvature_H(j, p, *vs)
                overlap_residual = max(overlap_residual, linalg.fro(Hj - Hi))
                checked += 1
    return {
        "transform_residual": transform_residual,
        "center_residual": center_residual,
        "H_overlap_residual": overlap_residual,
        "bulk_a": bulk_a,
        "bulk_b": bulk_b,
    }


def check_bulk_path_independence(cocycle, fam, grid, cfg):
    """The in-cell conjugator route must not matter (t(H) = 0)."""
    a, _ = bulk_integral_H(cocycle, fam, grid, cfg, cell_path="down_right")
    b, _ = bulk_integral_H(cocycle, fam, grid, cfg, cell_path="right_down")
    return linalg.fro(a - b)
