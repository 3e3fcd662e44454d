"""Local transport over cells, edges, and vertices of a gridded square.

Conventions (pinned in conventions.py and asserted by tests):

* 1-holonomy solves u' = -A(gamma') u with u(0) = 1, so a path traversed
  first contributes the right factor of a product.
* 2-holonomy solves W'(s) = W(s) K(s) with
  K(s) = integral over t of (alpha_{c(t,s)})_* B(d_t, d_s),
  where c(t, s) is the 1-holonomy from the point (t, s) back to the base
  corner (0, 0), i.e. the inverse of "down the west edge, then right".
* edge transport between charts i, j solves W' = W (alpha_{c(t)})_* a_ij(gamma')
  with c(t) = g_ij(gamma(0))^{-1} hol_j(gamma|[0,t])^{-1}; this is the unique
  whiskering matching both the stated t = 0 derivative and the target
  relation along the whole path.

Every transport reports the residual of its target relation; the residual is
the convention check that keeps all of the above honest.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ContainmentError
from .linalg import (
    CF4_ALPHA, CF4_BETA, chain_left, chain_right, composite_gauss_nodes,
    segment_gauss_params,
)

TAG_G, TAG_H = "G", "H"


@dataclass
class TransportConfig:
    ode_steps_per_unit: int = 48
    quadrature_points: int = 4
    tol_target: float = 1e-6
    h_fd: float = 1e-4

    def __post_init__(self):
        if self.ode_steps_per_unit < 16:
            raise ValueError("ode_steps_per_unit must be at least 16")
        if self.quadrature_points < 1 or self.tol_target <= 0 or self.h_fd <= 0:
            raise ValueError("invalid transport configuration")

    def scaled(self, factor):
        return TransportConfig(
            ode_steps_per_unit=int(self.ode_steps_per_unit * factor),
            quadrature_points=self.quadrature_points,
            tol_target=self.tol_target, h_fd=self.h_fd)


@dataclass
class LocalHolonomy:
    value: np.ndarray
    target_residual: float
    kind: str
    info: dict = field(default_factory=dict)

    @property
    def flagged(self):
        return not self.info.get("target_ok", True)


def _require_inside(cocycle, ids, points, margin=None, what="path"):
    margin = cocycle.cover.default_margin if margin is None else margin
    for idx in ids:
        u = cocycle.cover[idx]
        for p in points:
            if not u.contains(p, margin):
                raise ContainmentError(
                    f"{what} leaves open set {idx} (margin {margin}) near {p}")


def _path_samples(path, n=33):
    return path.points(np.linspace(0.0, 1.0, n))


def _cell_samples(cell, n=17):
    taus = np.linspace(0.0, 1.0, n)
    T, S = np.meshgrid(taus, taus, indexing="ij")
    return cell.points(T.ravel(), S.ravel())


def _exp_batch(cm, tag):
    return lambda stack: cm.exp_batch(tag, stack)


def _project(cm, tag):
    return lambda m: cm.project(tag, m)


def transport_along(cocycle, i, path, params, cfg=None, check=False):
    """Transports of u' = -A_i(gamma')u at each of the ascending params."""
    cm = cocycle.cm
    if check:
        _require_inside(cocycle, [i], _path_samples(path))
    A = cocycle.A(i)
    stage, h = segment_gauss_params(params)
    flat = stage.ravel()
    pts = path.points(flat)
    tans = path.derivs(flat)
    Avals = A.batch(pts, [tans]).reshape(len(h), 2, cm.size_G, cm.size_G)
    L1, L2 = -Avals[:, 0], -Avals[:, 1]
    e1 = h[:, None, None] * (CF4_ALPHA * L1 + CF4_BETA * L2)
    e2 = h[:, None, None] * (CF4_BETA * L1 + CF4_ALPHA * L2)
    return chain_right(e1, e2, _exp_batch(cm, TAG_G), project=_project(cm, TAG_G))


def hol_path(cocycle, i, path, cfg, check=True):
    """1-holonomy of A_i along a path (group element in G)."""
    params = np.linspace(0.0, 1.0, cfg.ode_steps_per_unit + 1)
    return transport_along(cocycle, i, path, params, cfg, check=check)[-1]


def boundary_word(cocycle, i, cell, cfg, check=False):
    """hol(N)^-1 hol(E)^-1 hol(S) hol(W) for a cell in chart i."""
    n = hol_path(cocycle, i, cell.north_edge(), cfg, check=check)
    e = hol_path(cocycle, i, cell.east_edge(), cfg, check=check)
    s = hol_path(cocycle, i, cell.south_edge(), cfg, check=check)
    w = hol_path(cocycle, i, cell.west_edge(), cfg, check=check)
    return np.linalg.inv(n) @ np.linalg.inv(e) @ s @ w


def hol_square(cocycle, i, cell, cfg, check=True, with_target=True):
    """2-holonomy of (A_i, B_i) over a cell, with its target residual."""
    cm = cocycle.cm
    if check:
        _require_inside(cocycle, [i], _cell_samples(cell), what="cell")
    N = cfg.ode_steps_per_unit
    q = cfg.quadrature_points
    dG, dH = cm.size_G, cm.size_H
    A, B = cocycle.A(i), cocycle.B(i)

    s_bounds = np.linspace(0.0, 1.0, N + 1)
    stage_s, hs = segment_gauss_params(s_bounds)
    s_nodes = stage_s.ravel()                       # (ns,) ascending
    ns = s_nodes.shape[0]

    # west-edge transports u_W(s) at the s stage nodes
    west = cell.west_edge()
    uW = transport_along(cocycle, i, west,
                         np.concatenate([[0.0], s_nodes]), cfg)[1:]
    uW_inv = np.linalg.inv(uW)

    # inner quadrature nodes along t, shared by all s rows
    t_nodes, t_weights = composite_gauss_nodes(N, q)
    nt = t_nodes.shape[0]
    t_params = np.concatenate([[0.0], t_nodes])
    stage_t, ht = segment_gauss_params(t_params)    # (nt, 2)

    # A(d_t) at every (s row, t stage) pair
    flat_t = np.tile(stage_t.ravel(), ns)                        # (ns*2nt,)
    flat_s = np.repeat(s_nodes, 2 * nt)
    pts = cell.points(flat_t, flat_s)
    jt, _ = cell.jets(flat_t, flat_s)
    Avals = A.batch(pts, [jt]).reshape(ns, nt, 2, dG, dG)
    e1 = -ht[None, :, None, None] * (CF4_ALPHA * Avals[:, :, 0] + CF4_BETA * Avals[:, :, 1])
    e2 = -ht[None, :, None, None] * (CF4_BETA * Avals[:, :, 0] + CF4_ALPHA * Avals[:, :, 1])

    # march P^{-1}(t, s) for all rows in lockstep: P <- E2 E1 P
    exp_G = _exp_batch(cm, TAG_G)
    Pinv = np.broadcast_to(np.eye(dG, dtype=e1.dtype), (ns, dG, dG)).copy()
    Pinv_nodes = np.empty((ns, nt, dG, dG), dtype=e1.dtype)
    for seg in range(nt):
        E1inv = exp_G(-e1[:, seg])
        E2inv = exp_G(-e2[:, seg])
        Pinv = np.einsum("nij,njk,nkl->nil", Pinv, E1inv, E2inv)
        Pinv_nodes[:, seg] = Pinv

    # B(d_t, d_s) at the quadrature nodes
    flat_t = np.tile(t_nodes, ns)
    flat_s = np.repeat(s_nodes, nt)
    pts = cell.points(flat_t, flat_s)
    jt, js = cell.jets(flat_t, flat_s)
    Bvals = B.batch(pts, [jt, js]).reshape(ns * nt, dH, dH)

    conj = np.einsum("nij,nmjk->nmik", uW_inv, Pinv_nodes).reshape(ns * nt, dG, dG)
    pushed = cm.act_push_g_batch(conj, Bvals).reshape(ns, nt, dH, dH)
    K = np.einsum("m,nmij->nij", t_weights, pushed).reshape(N, 2, dH, dH)

    e1K = hs[:, None, None] * (CF4_ALPHA * K[:, 0] + CF4_BETA * K[:, 1])
    e2K = hs[:, None, None] * (CF4_BETA * K[:, 0] + CF4_ALPHA * K[:, 1])
    W = chain_left(e1K, e2K, _exp_batch(cm, TAG_H), project=_project(cm, TAG_H))[-1]

    residual = 0.0
    if with_target:
        word = boundary_word(cocycle, i, cell, cfg)
        residual = linalg.fro(cm.t(W) - word)
    return LocalHolonomy(W, residual, "face",
                         {"chart": i, "target_ok": residual <= cfg.tol_target})


def hol_edge(cocycle, i, j, path, cfg, check=True, with_target=True):
    """Edge transport between charts i and j along a shared-edge path."""
    cm = cocycle.cm
    if check:
        _require_inside(cocycle, [i, j], _path_samples(path), what="edge")
    dH = cm.size_H
    N = cfg.ode_steps_per_unit
    params = np.linspace(0.0, 1.0, N + 1)
    stage, h = segment_gauss_params(params)
    flat = stage.ravel()

    uj_stage = transport_along(cocycle, j, path,
                               np.concatenate([[0.0], flat]), cfg)[1:]
    g0 = cocycle.g(i, j).value(path(0.0))
    g0_inv = np.linalg.inv(g0)
    conj = np.einsum("ij,njk->nik", g0_inv, np.linalg.inv(uj_stage))

    pts = path.points(flat)
    tans = path.derivs(flat)
    avals = cocycle.a(i, j).batch(pts, [tans])
    M = cm.act_push_g_batch(conj, avals).reshape(N, 2, dH, dH)
    e1 = h[:, None, None] * (CF4_ALPHA * M[:, 0] + CF4_BETA * M[:, 1])
    e2 = h[:, None, None] * (CF4_BETA * M[:, 0] + CF4_ALPHA * M[:, 1])
    Ws = chain_left(e1, e2, _exp_batch(cm, TAG_H), project=_project(cm, TAG_H))

    residual = 0.0
    if with_target:
        ui_ends = transport_along(cocycle, i, path, params, cfg)
        uj_ends = transport_along(cocycle, j, path, params, cfg)
        g_ends = cocycle.g(i, j).batch_value(path.points(params))
        for k in range(N + 1):
            word = (np.linalg.inv(ui_ends[k]) @ np.linalg.inv(g_ends[k])
                    @ uj_ends[k] @ g0)
            residual = max(residual, linalg.fro(cm.t(Ws[k]) - word))
    return LocalHolonomy(Ws[-1], residual, "edge",
                         {"charts": (i, j), "target_ok": residual <= cfg.tol_target})


def hol_vertex(cocycle, i, j, k, l, x):
    """Vertex element at x in the quadruple overlap; purely algebraic.

    Chart order is (NW, SW, NE, SE) around the vertex.
    """
    cm = cocycle.cm
    g_ik = cocycle.g(i, k).value(x)
    g_kl = cocycle.g(k, l).value(x)
    g_jl = cocycle.g(j, l).value(x)
    g_ij = cocycle.g(i, j).value(x)
    f_jkl = cocycle.f(j, k, l).value(x)
    f_ijk = cocycle.f(i, j, k).value(x)
    inner = cm.act(np.linalg.inv(g_kl), f_jkl) @ np.linalg.inv(f_ijk)
    value = cm.act(np.linalg.inv(g_ik), inner)
    word = (np.linalg.inv(g_ik) @ np.linalg.inv(g_kl) @ g_jl @ g_ij)
    residual = linalg.fro(cm.t(value) - word)
    return LocalHolonomy(value, residual, "vertex",
                         {"charts": (i, j, k, l), "target_ok": residual <= 1e-8})


# ---------------------------------------------------------------------------
# cube identities


def check_edge_cube(cocycle, i, j, square, cfg):
    """Residual of the five-face cube identity at an intersection U_ij.

    The back face (the edge transport along the north edge) equals the
    whiskered product of the west seam, the chart-i face, the south seam, the
    inverse chart-j face, and the inverse east seam.
    """
    cm = cocycle.cm
    _require_inside(cocycle, [i, j], _cell_samples(square), what="edge-cube cell")
    gN = square.north_edge()
    gS = square.south_edge()
    gW = square.west_edge()
    gE = square.east_edge()

    EN = hol_edge(cocycle, i, j, gN, cfg, check=False).value
    ES = hol_edge(cocycle, i, j, gS, cfg, check=False).value
    EW = hol_edge(cocycle, i, j, gW, cfg, check=False).value
    EE = hol_edge(cocycle, i, j, gE, cfg, check=False).value
    Fi = hol_square(cocycle, i, square, cfg, check=False, with_target=False).value
    Fj = hol_square(cocycle, j, square, cfg, check=False, with_target=False).value

    w_i = hol_path(cocycle, i, gW, cfg, check=False)
    w_j = hol_path(cocycle, j, gW, cfg, check=False)
    n_j = hol_path(cocycle, j, gN, cfg, check=False)

    x0, xS = square(0.0, 0.0), square(0.0, 1.0)
    yN = square(1.0, 0.0)
    g_x0 = cocycle.g(i, j).value(x0)
    g_xS = cocycle.g(i, j).value(xS)
    g_yN = cocycle.g(i, j).value(yN)
    g_x0_inv = np.linalg.inv(g_x0)

    c2 = g_x0_inv @ np.linalg.inv(w_j) @ g_xS @ w_i
    c3 = g_x0_inv @ np.linalg.inv(w_j) @ g_xS
    c4 = g_x0_inv
    c5 = g_x0_inv @ np.linalg.inv(n_j) @ g_yN

    rhs = (EW @ cm.act(c2, Fi) @ cm.act(c3, ES)
           @ cm.act(c4, np.linalg.inv(Fj)) @ cm.act(c5, np.linalg.inv(EE)))
    return linalg.fro(EN - rhs)


def check_vertex_cube(cocycle, i, j, k, l, path, cfg):
    """Residual of the five-face cube identity at a quadruple overlap.

    Chart order around the vertex is (i, j, k, l) = (NW, SW, NE, SE); the
    vertex element at x = path(0) equals the whiskered product of the four
    edge transports along the path and the vertex element at y = path(1).
    """
    cm = cocycle.cm
    _require_inside(cocycle, [i, j, k, l], _path_samples(path), what="vertex-cube path")
    x, y = path(0.0), path(1.0)

    u_i = hol_path(cocycle, i, path, cfg, check=False)
    u_j = hol_path(cocycle, j, path, cfg, check=False)
    u_k = hol_path(cocycle, k, path, cfg, check=False)
    u_l = hol_path(cocycle, l, path, cfg, check=False)

    Eij = hol_edge(cocycle, i, j, path, cfg, check=False).value
    Eik = hol_edge(cocycle, i, k, path, cfg, check=False).value
    Ejl = hol_edge(cocycle, j, l, path, cfg, check=False).value
    Ekl = hol_edge(cocycle, k, l, path, cfg, check=False).value

    Vx = hol_vertex(cocycle, i, j, k, l, x).value
    Vy = hol_vertex(cocycle, i, j, k, l, y).value

    g_ij_x = cocycle.g(i, j).value(x)
    g_ij_y = cocycle.g(i, j).value(y)
    g_jl_x = cocycle.g(j, l).value(x)
    g_kl_y = cocycle.g(k, l).value(y)
    gx_inv = np.linalg.inv(g_ij_x)

    c2 = gx_inv @ np.linalg.inv(u_j) @ g_ij_y @ u_i
    c3 = gx_inv @ np.linalg.inv(u_j) @ g_ij_y
    c4 = gx_inv
    c5 = gx_inv @ np.linalg.inv(g_jl_x) @ np.linalg.inv(u_l) @ g_kl_y @ u_k

    rhs = (Eij @ cm.act(c2, np.linalg.inv(Eik)) @ cm.act(c3, Vy)
           @ cm.act(c4, Ejl) @ cm.act(c5, np.linalg.inv(Ekl)))
    return linalg.fro(Vx - rhs)
