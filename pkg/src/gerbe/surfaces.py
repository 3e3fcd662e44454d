"""Squares mapped into a manifold, one-parameter families, and grid search.

Cells are indexed like the paper's grids: (p, q) with p = 1..n running left
to right ("time") and q = 1..m running top to bottom, so the north edge of
the square is s = 0.  Canonical edge directions are left-to-right for
horizontal edges and top-to-bottom for vertical ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContainmentError, GridNotFoundError
from .geometry import Torus2


def _vector_eval(fn, args, dim):
    """Call fn on arrays; fall back to a scalar loop if it does not broadcast."""
    try:
        out = np.asarray(fn(*args))
        n = np.asarray(args[0]).shape[0]
        if out.shape == (dim, n):
            return out.T
        if out.shape == (n, dim):
            return out
    except Exception:
        pass
    return np.stack([np.asarray(fn(*[a[i] for a in args]), dtype=float)
                     for i in range(len(args[0]))])


class Path:
    """A parametrized path [0, 1] -> M with tangents."""

    def __init__(self, manifold, eval_fn, deriv_fn=None, h_fd=1e-6):
        self.manifold = manifold
        self._eval = eval_fn
        self._deriv = deriv_fn
        self.h_fd = h_fd

    def __call__(self, tau):
        return np.asarray(self._eval(tau), dtype=float)

    def deriv(self, tau):
        if self._deriv is not None:
            return np.asarray(self._deriv(tau), dtype=float)
        h = self.h_fd
        return (self(tau + h) - self(tau - h)) / (2.0 * h)

    def points(self, taus):
        taus = np.asarray(taus, dtype=float)
        return _vector_eval(self._eval, (taus,), self.manifold.dim)

    def derivs(self, taus):
        taus = np.asarray(taus, dtype=float)
        if self._deriv is not None:
            return _vector_eval(self._deriv, (taus,), self.manifold.dim)
        h = self.h_fd
        return (self.points(taus + h) - self.points(taus - h)) / (2.0 * h)

    def restrict(self, a, b):
        """Affine reparametrization of the sub-path [a, b] back to [0, 1]."""
        scale = b - a

        def ev(tau):
            return self._eval(a + scale * tau)

        def dv(tau):
            return scale * self.deriv(a + scale * tau)

        return Path(self.manifold, ev, dv, h_fd=self.h_fd)

    def reversed(self):
        def ev(tau):
            return self._eval(1.0 - tau)

        def dv(tau):
            return -self.deriv(1.0 - tau)

        return Path(self.manifold, ev, dv, h_fd=self.h_fd)

    def reparametrize(self, phi, dphi):
        def ev(tau):
            return self._eval(phi(tau))

        def dv(tau):
            return dphi(tau) * self.deriv(phi(tau))

        return Path(self.manifold, ev, dv, h_fd=self.h_fd)

    def concatenate(self, other):
        """self traversed first, then other (affine split at 1/2)."""

        def ev(tau):
            if tau <= 0.5:
                return self._eval(2.0 * tau)
            return other._eval(2.0 * tau - 1.0)

        def dv(tau):
            if tau <= 0.5:
                return 2.0 * self.deriv(2.0 * tau)
            return 2.0 * other.deriv(2.0 * tau - 1.0)

        return Path(self.manifold, ev, dv, h_fd=self.h_fd)

    def constant(manifold, point):
        p = np.asarray(point, dtype=float)
        return Path(manifold, lambda tau: p, lambda tau: np.zeros_like(p))

    constant = staticmethod(constant)


class SquareMap:
    """A smooth map [0,1]^2 -> M with first partials."""

    def __init__(self, manifold, eval_fn, jet_fn=None, sphere_mode=False, h_fd=1e-6):
        self.manifold = manifold
        self._eval = eval_fn
        self._jet = jet_fn
        self.sphere_mode = sphere_mode
        self.h_fd = h_fd

    def __call__(self, t, s):
        return np.asarray(self._eval(t, s), dtype=float)

    def jet(self, t, s):
        if self._jet is not None:
            dt, ds = self._jet(t, s)
            return np.asarray(dt, dtype=float), np.asarray(ds, dtype=float)
        h = self.h_fd
        dt = (self(t + h, s) - self(t - h, s)) / (2.0 * h)
        ds = (self(t, s + h) - self(t, s - h)) / (2.0 * h)
        return dt, ds

    def points(self, ts, ss):
        ts = np.asarray(ts, dtype=float)
        ss = np.asarray(ss, dtype=float)
        return _vector_eval(self._eval, (ts, ss), self.manifold.dim)

    def jets(self, ts, ss):
        ts = np.asarray(ts, dtype=float)
        ss = np.asarray(ss, dtype=float)
        if self._jet is not None:
            try:
                dt, ds = self._jet(ts, ss)
                dt, ds = np.asarray(dt), np.asarray(ds)
                if dt.shape == (self.manifold.dim, ts.shape[0]):
                    return dt.T, ds.T
                if dt.shape == (ts.shape[0], self.manifold.dim):
                    return dt, ds
                if dt.shape == (self.manifold.dim,):
                    return (np.broadcast_to(dt, (ts.shape[0], self.manifold.dim)),
                            np.broadcast_to(ds, (ts.shape[0], self.manifold.dim)))
            except Exception:
                pass
            out = [self.jet(t, s) for t, s in zip(ts, ss)]
            return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])
        h = self.h_fd
        dt = (self.points(ts + h, ss) - self.points(ts - h, ss)) / (2.0 * h)
        ds = (self.points(ts, ss + h) - self.points(ts, ss - h)) / (2.0 * h)
        return dt, ds

    def restrict(self, t0, t1, s0, s1):
        """The sub-square [t0,t1]x[s0,s1] affinely reparametrized to [0,1]^2."""
        wt, ws = t1 - t0, s1 - s0

        def ev(t, s):
            return self._eval(t0 + wt * t, s0 + ws * s)

        def jet_fn(t, s):
            t_arr = np.asarray(t, dtype=float)
            if t_arr.ndim == 0:
                dt, ds = self.jet(t0 + wt * float(t_arr), s0 + ws * float(s))
            else:
                dt, ds = self.jets(t0 + wt * t_arr, s0 + ws * np.asarray(s, dtype=float))
            return wt * np.asarray(dt), ws * np.asarray(ds)

        return SquareMap(self.manifold, ev, jet_fn, h_fd=self.h_fd)

    # --- edges (canonical directions) ---------------------------------

    def north_edge(self):
        return Path(self.manifold, lambda tau: self._eval(tau, 0.0),
                    lambda tau: self.jet(tau, 0.0)[0])

    def south_edge(self):
        return Path(self.manifold, lambda tau: self._eval(tau, 1.0),
                    lambda tau: self.jet(tau, 1.0)[0])

    def west_edge(self):
        return Path(self.manifold, lambda tau: self._eval(0.0, tau),
                    lambda tau: self.jet(0.0, tau)[1])

    def east_edge(self):
        return Path(self.manifold, lambda tau: self._eval(1.0, tau),
                    lambda tau: self.jet(1.0, tau)[1])

    def horizontal_path(self, s):
        """tau -> Sigma(tau, s)."""
        return Path(self.manifold, lambda tau: self._eval(tau, s),
                    lambda tau: self.jet(tau, s)[0])

    def vertical_path(self, t):
        return Path(self.manifold, lambda tau: self._eval(t, tau),
                    lambda tau: self.jet(t, tau)[1])


def sphere_mode_residual(square, resolution=17):
    """How far the square is from satisfying the sphere identifications."""
    taus = np.linspace(0.0, 1.0, resolution)
    north = square.points(taus, np.zeros_like(taus))
    south = square.points(taus, np.ones_like(taus))
    east = square.points(np.ones_like(taus), taus)
    west = square.points(np.zeros_like(taus), taus)
    res = max(
        float(np.max(np.linalg.norm(north - north[0], axis=1))),
        float(np.max(np.linalg.norm(south - south[0], axis=1))),
        float(np.max(np.linalg.norm(east - west, axis=1))),
    )
    return res


class SquareFamily:
    """A one-parameter family of squares with its variation field at r = 0."""

    def __init__(self, manifold, eval_fn, jet_fn=None, variation_fn=None,
                 name="", sphere_mode=False, h_fd=1e-5):
        self.manifold = manifold
        self._eval = eval_fn
        self._jet = jet_fn          # jets of the r = 0 member only
        self._variation = variation_fn
        self.name = name
        self.sphere_mode = sphere_mode
        self.h_fd = h_fd
        self._base = None

    @classmethod
    def from_callables(cls, manifold, eval_fn, jet=None, variation=None, name="",
                       sphere_mode=False, wrap_to_torus=False):
        if wrap_to_torus:
            manifold = Torus2()
        return cls(manifold, eval_fn, jet_fn=jet, variation_fn=variation,
                   name=name, sphere_mode=sphere_mode)

    def at(self, r):
        """The member square at parameter r (analytic jets only at r = 0)."""
        if r == 0.0:
            if self._base is None:
                self._base = SquareMap(self.manifold,
                                       lambda t, s: self._eval(0.0, t, s),
                                       jet_fn=self._jet,
                                       sphere_mode=self.sphere_mode)
            return self._base
        return SquareMap(self.manifold, lambda t, s: self._eval(r, t, s),
                         sphere_mode=self.sphere_mode)

    @property
    def base(self):
        return self.at(0.0)

    def variation(self, t, s):
        if self._variation is not None:
            return np.asarray(self._variation(t, s), dtype=float)
        h = self.h_fd
        return (np.asarray(self._eval(h, t, s), dtype=float)
                - np.asarray(self._eval(-h, t, s), dtype=float)) / (2.0 * h)

    def variations(self, ts, ss):
        ts = np.asarray(ts, dtype=float)
        ss = np.asarray(ss, dtype=float)
        if self._variation is not None:
            return _vector_eval(self._variation, (ts, ss), self.manifold.dim)
        return np.stack([self.variation(t, s) for t, s in zip(ts, ss)])

    def restrict(self, t0, t1, s0, s1):
        """Family of affinely reparametrized cells; variation is unchanged."""
        wt, ws = t1 - t0, s1 - s0

        def ev(r, t, s):
            return self._eval(r, t0 + wt * t, s0 + ws * s)

        def var(t, s):
            return self.variation(t0 + wt * t, s0 + ws * s)

        jet_fn = None
        if self._jet is not None:
            def jet_fn(t, s):
                dt, ds = self._jet(t0 + wt * t, s0 + ws * s)
                return wt * np.asarray(dt), ws * np.asarray(ds)

        return SquareFamily(self.manifold, ev, jet_fn=jet_fn, variation_fn=var,
                            name=self.name, h_fd=self.h_fd)


# ---------------------------------------------------------------------------
# grids


@dataclass
class GridAssignment:
    n: int
    m: int
    assignment: np.ndarray          # shape (n, m), open-set ids
    resolution: int = 9
    margin: float = 0.05

    def assign(self, p, q):
        """Open-set id of cell (p, q), 1-indexed."""
        return int(self.assignment[p - 1, q - 1])

    def cells(self):
        for q in range(1, self.m + 1):
            for p in range(1, self.n + 1):
                yield p, q

    def bounds(self, p, q):
        return ((p - 1) / self.n, p / self.n, (q - 1) / self.m, q / self.m)

    def to_dict(self):
        return {"n": self.n, "m": self.m,
                "assignment": self.assignment.astype(int).tolist(),
                "resolution": self.resolution, "margin": self.margin}


@dataclass
class GridElements:
    grid: GridAssignment
    faces: dict = field(default_factory=dict)        # (p,q) -> SquareMap
    v_edges: dict = field(default_factory=dict)      # (p,q): between (p,q),(p+1,q)
    h_edges: dict = field(default_factory=dict)      # (p,q): between (p,q),(p,q+1)
    vertices: dict = field(default_factory=dict)     # (p,q): corner point p/n, q/m
    north: dict = field(default_factory=dict)        # p -> Path
    south: dict = field(default_factory=dict)
    west: dict = field(default_factory=dict)         # q -> Path
    east: dict = field(default_factory=dict)


def _cell_samples(square, n, m, p, q, resolution):
    t = np.linspace((p - 1) / n, p / n, resolution)
    s = np.linspace((q - 1) / m, q / m, resolution)
    T, S = np.meshgrid(t, s, indexing="ij")
    return square.points(T.ravel(), S.ravel())


def find_grid(square, cover, max_depth=6, resolution=9, margin=None):
    """Smallest grid (by n*m, then lexicographic) with margin containment.

    Ties between admissible open sets are broken by lowest id.  Raises
    GridNotFoundError with a worst-cell diagnostic when nothing works.
    """
    margin = cover.default_margin if margin is None else margin
    candidates = sorted(
        ((n, m) for n in range(1, max_depth + 1) for m in range(1, max_depth + 1)),
        key=lambda nm: (nm[0] * nm[1], nm[0], nm[1]))
    best_diag = None
    for n, m in candidates:
        assignment = np.full((n, m), -1, dtype=int)
        ok = True
        for p in range(1, n + 1):
            for q in range(1, m + 1):
                pts = _cell_samples(square, n, m, p, q, resolution)
                slacks = np.array([[u.slack(pt) for pt in pts] for u in cover.sets])
                mins = slacks.min(axis=1)
                admissible = np.nonzero(mins >= margin)[0]
                if admissible.size == 0:
                    diag = {"n": n, "m": m, "cell": (p, q),
                            "best_set": int(np.argmax(mins)),
                            "best_slack": float(mins.max()), "margin": margin}
                    if best_diag is None or diag["best_slack"] > best_diag["best_slack"]:
                        best_diag = diag
                    ok = False
                    break
                assignment[p - 1, q - 1] = int(admissible[0])
            if not ok:
                break
        if ok:
            return GridAssignment(n=n, m=m, assignment=assignment,
                                  resolution=resolution, margin=margin)
    raise GridNotFoundError(
        f"no grid up to {max_depth}x{max_depth} fits the cover", best_diag)


def validate_assignment(square, cover, grid, resolution=None, margin=None):
    """Check the containment invariant of an assignment; returns worst slack."""
    resolution = grid.resolution if resolution is None else resolution
    margin = grid.margin if margin is None else margin
    worst = np.inf
    for p, q in grid.cells():
        pts = _cell_samples(square, grid.n, grid.m, p, q, resolution)
        u = cover[grid.assign(p, q)]
        worst = min(worst, min(u.slack(pt) for pt in pts))
    if worst < margin:
        raise ContainmentError(
            f"assignment violates containment: worst slack {worst} < margin {margin}")
    return float(worst)


def extract_grid_elements(square, grid):
    """Faces, interior edges, vertices, and boundary edges of a gridded square."""
    n, m = grid.n, grid.m
    out = GridElements(grid=grid)
    for p, q in grid.cells():
        t0, t1, s0, s1 = grid.bounds(p, q)
        out.faces[(p, q)] = square.restrict(t0, t1, s0, s1)
    for p in range(1, n):
        for q in range(1, m + 1):
            s0, s1 = (q - 1) / m, q / m
            t = p / n
            out.v_edges[(p, q)] = Path(
                square.manifold,
                lambda tau, t=t, s0=s0, s1=s1: square(t, s0 + (s1 - s0) * tau),
                lambda tau, t=t, s0=s0, s1=s1: (s1 - s0) * square.jet(t, s0 + (s1 - s0) * tau)[1])
    for p in range(1, n + 1):
        for q in range(1, m):
            t0, t1 = (p - 1) / n, p / n
            s = q / m
            out.h_edges[(p, q)] = Path(
                square.manifold,
                lambda tau, s=s, t0=t0, t1=t1: square(t0 + (t1 - t0) * tau, s),
                lambda tau, s=s, t0=t0, t1=t1: (t1 - t0) * square.jet(t0 + (t1 - t0) * tau, s)[0])
    for p in range(1, n):
        for q in range(1, m):
            out.vertices[(p, q)] = square(p / n, q / m)
    for p in range(1, n + 1):
        face = out.faces[(p, 1)]
        out.north[p] = face.north_edge()
        out.south[p] = out.faces[(p, m)].south_edge()
    for q in range(1, m + 1):
        out.west[q] = out.faces[(1, q)].west_edge()
        out.east[q] = out.faces[(grid.n, q)].east_edge()
    return out


def restrict_family(family, grid):
    """Per-cell restricted families (exact chain rule for the variation)."""
    out = {}
    for p, q in grid.cells():
        t0, t1, s0, s1 = grid.bounds(p, q)
        out[(p, q)] = family.restrict(t0, t1, s0, s1)
    return out


def refine_grid(grid, factor=2):
    """Subdivide each cell factor x factor keeping the parent assignments."""
    n, m = grid.n * factor, grid.m * factor
    assignment = np.empty((n, m), dtype=int)
    for p in range(1, n + 1):
        for q in range(1, m + 1):
            assignment[p - 1, q - 1] = grid.assign((p + factor - 1) // factor,
                                                   (q + factor - 1) // factor)
    return GridAssignment(n=n, m=m, assignment=assignment,
                          resolution=grid.resolution, margin=grid.margin)
