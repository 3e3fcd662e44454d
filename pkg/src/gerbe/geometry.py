"""Manifold models, open sets, and covers.

Three coordinate models are supported: flat ``euclidean(d)``, the flat
2-torus with coordinates canonicalized to [0, 1), and the unit sphere
embedded in R^3.  Gerbe fields for sphere fixtures are defined ambiently on
a neighbourhood of the sphere in R^3, so sphere geometry mostly rides on the
euclidean(3) model; ``sphere2_embedded`` canonicalizes points to unit norm.
"""

import numpy as np

from .errors import ConstructionError


class Manifold:
    kind = "abstract"

    def __init__(self, dim):
        self.dim = dim

    def wrap(self, x):
        return np.asarray(x, dtype=float)

    def sample(self, rng):
        raise NotImplementedError

    def __repr__(self):
        return f"{self.kind}(dim={self.dim})"


class Euclidean(Manifold):
    kind = "euclidean"

    def __init__(self, dim, sample_box=None):
        super().__init__(dim)
        if sample_box is None:
            sample_box = [(-1.2, 1.2)] * dim
        self.sample_box = sample_box

    def sample(self, rng):
        return np.array([rng.uniform(lo, hi) for lo, hi in self.sample_box])


class Torus2(Manifold):
    kind = "torus2"

    def __init__(self):
        super().__init__(2)

    def wrap(self, x):
        return np.mod(np.asarray(x, dtype=float), 1.0)

    def sample(self, rng):
        return rng.uniform(0.0, 1.0, size=2)


class Sphere2Embedded(Manifold):
    kind = "sphere2_embedded"

    def __init__(self):
        super().__init__(3)

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        n = np.linalg.norm(x)
        if n == 0.0:
            raise ConstructionError("zero vector is not a sphere point")
        if abs(n - 1.0) > 1e-12:
            x = x / n
        return x

    def sample(self, rng):
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)


class ShellSampler(Manifold):
    """Euclidean R^3 sampled near the unit sphere (for sphere-fixture covers)."""

    kind = "euclidean"

    def __init__(self, rmin=0.85, rmax=1.15):
        super().__init__(3)
        self.rmin, self.rmax = rmin, rmax

    def sample(self, rng):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        return v * rng.uniform(self.rmin, self.rmax)


# ---------------------------------------------------------------------------
# open sets


class OpenSet:
    """An open set with a margin-aware membership test.

    ``slack(p)`` is positive inside, and a point is accepted at margin m when
    slack >= m.  Margins keep finite-difference stencils and sampled
    containment checks robust.
    """

    def __init__(self, set_id):
        self.id = set_id

    def slack(self, p):
        raise NotImplementedError

    def contains(self, p, margin=0.0):
        return self.slack(p) >= margin


class WholeSpace(OpenSet):
    def slack(self, p):
        return np.inf


class HalfSpace(OpenSet):
    """{x : a . x > c} with slack a.x - c."""

    def __init__(self, set_id, normal, offset):
        super().__init__(set_id)
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)

    def slack(self, p):
        return float(self.normal @ np.asarray(p)) - self.offset


class TorusWindow(OpenSet):
    """Product of mod-1 intervals (start, start + width) on the torus."""

    def __init__(self, set_id, starts, widths):
        super().__init__(set_id)
        self.starts = np.asarray(starts, dtype=float)
        self.widths = np.asarray(widths, dtype=float)

    def slack(self, p):
        rel = np.mod(np.asarray(p) - self.starts, 1.0)
        return float(np.min(np.minimum(rel, self.widths - rel)))


class Cover:
    """An indexed open cover with rejection sampling of multi-intersections."""

    def __init__(self, manifold, sets, default_margin=0.05):
        self.manifold = manifold
        self.sets = list(sets)
        self.default_margin = default_margin

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def admissible(self, p, margin):
        return [u.id for u in self.sets if u.contains(p, margin)]

    def sample_intersection(self, ids, rng, n_points, margin=None, max_tries=4000):
        """Up to n_points points lying in every named set with margin."""
        margin = self.default_margin if margin is None else margin
        pts = []
        for _ in range(max_tries):
            p = self.manifold.sample(rng)
            if all(self.sets[i].contains(p, margin) for i in ids):
                pts.append(p)
                if len(pts) == n_points:
                    break
        return pts


def sphere_halfspace_cover(offset=-0.2, margin=0.05, caps=False):
    """Six half-spaces {±x_a > offset} covering a shell around the unit sphere.

    With caps=True two more generous polar half-spaces {±z > offset - 0.15}
    are appended; they give closed sphere surfaces a second latitude-band
    grid assignment (needed to exercise the change-of-assignment laws).
    """
    sets = []
    sid = 0
    for axis in range(3):
        for sign in (1.0, -1.0):
            normal = np.zeros(3)
            normal[axis] = sign
            sets.append(HalfSpace(sid, normal, offset))
            sid += 1
    if caps:
        for sign in (1.0, -1.0):
            sets.append(HalfSpace(sid, np.array([0.0, 0.0, sign]), offset - 0.15))
            sid += 1
    return Cover(ShellSampler(), sets, default_margin=margin)


def torus_window_cover(delta=0.15, margin=0.05):
    """Four overlapping windows of side 1/2 + 2*delta tiling the torus."""
    width = 0.5 + 2 * delta
    sets = []
    sid = 0
    for ox in (0.0, 0.5):
        for oy in (0.0, 0.5):
            sets.append(TorusWindow(sid, (ox - delta, oy - delta), (width, width)))
            sid += 1
    return Cover(Torus2(), sets, default_margin=margin)


def single_chart_cover(manifold, margin=0.05):
    return Cover(manifold, [WholeSpace(0)], default_margin=margin)
