"""Named, seeded fixture registry: crossed modules, cocycles, and surfaces.

Fixtures are what the CLI and the test-suite run against.  Cocycle fields are
built symbolically (exact exterior derivatives); everything is memoized, so
repeated lookups are cheap within a process.
"""

import functools

import numpy as np
import sympy as sp

from . import surfaces
from .cocycle import make_single_chart_gerbe, make_twisted_gerbe
from .crossed_module import get_crossed_module
from .errors import ConfigError
from .forms import ConstantMatrixField, SymForm
from .geometry import (
    Euclidean, ShellSampler, single_chart_cover, sphere_halfspace_cover,
    torus_window_cover,
)

_X, _Y = sp.symbols("x y", real=True)
_X3 = sp.symbols("x0 x1 x2", real=True)
_X4 = sp.symbols("u0 u1 u2 u3", real=True)

_E12 = sp.Matrix([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
_E23 = sp.Matrix([[0, 0, 0], [0, 0, 1], [0, 0, 0]])
_E13 = sp.Matrix([[0, 0, 1], [0, 0, 0], [0, 0, 0]])


def _h3_exp(m):
    return sp.eye(3) + m + (m * m) / 2


# ---------------------------------------------------------------------------
# cocycle fixtures


@functools.lru_cache(maxsize=None)
def _cocycle_cached(name, knobs_items):
    knobs = dict(knobs_items)
    builder = _COCYCLE_BUILDERS.get(name)
    if builder is None:
        known = ", ".join(sorted(_COCYCLE_BUILDERS))
        raise ConfigError(f"unknown cocycle fixture {name!r}; known: {known}")
    return builder(**knobs)


def get_cocycle(name, **knobs):
    return _cocycle_cached(name, tuple(sorted(knobs.items())))


def _build_trivial(cm="heisenberg"):
    cmod = get_crossed_module(cm)
    cover = single_chart_cover(Euclidean(2))
    return make_single_chart_gerbe(cmod, cover, (_X, _Y), {}, name="trivial")


def _build_heisenberg_plane():
    cm = get_crossed_module("heisenberg")
    cover = single_chart_cover(Euclidean(2))
    beta = {
        (0,): sp.Rational(1, 2) * _Y * _E12 + sp.Rational(3, 10) * _X * _E23
              + sp.Rational(1, 5) * _X * _Y * _E13,
        (1,): sp.Rational(2, 5) * _X * _E12 - sp.Rational(1, 4) * _Y * _E23
              + sp.Rational(1, 10) * (_X ** 2) * _E13,
    }
    return make_single_chart_gerbe(cm, cover, (_X, _Y), beta, name="heisenberg_plane")


def _build_heisenberg_torus4():
    cm = get_crossed_module("heisenberg")
    cover = torus_window_cover()
    cx, sx = sp.cos(2 * sp.pi * _X), sp.sin(2 * sp.pi * _X)
    cy, sy = sp.cos(2 * sp.pi * _Y), sp.sin(2 * sp.pi * _Y)
    beta = {
        (0,): sp.Rational(2, 5) * sy * _E12 + sp.Rational(1, 4) * cy * _E23,
        (1,): sp.Rational(3, 10) * sx * _E12 + sp.Rational(1, 5) * cx * _E23
              + sp.Rational(1, 10) * sy * _E13,
    }
    phis = [
        _h3_exp(sp.Rational(2, 5) * sx * _E12 + sp.Rational(1, 5) * cy * _E23),
        _h3_exp(sp.Rational(1, 4) * cx * _E12 + sp.Rational(3, 10) * sy * _E13),
        _h3_exp(sp.Rational(1, 5) * sy * _E23 + sp.Rational(1, 4) * sx * _E13),
        _h3_exp(sp.Rational(3, 10) * cy * _E12 + sp.Rational(1, 5) * sx * _E23),
    ]
    etas = {
        (0, 1): _h3_exp(sp.Rational(1, 4) * sx * _E12 + sp.Rational(1, 5) * cy * _E13),
        (0, 2): _h3_exp(sp.Rational(1, 5) * cx * _E23 + sp.Rational(1, 4) * sy * _E13),
        (0, 3): _h3_exp(sp.Rational(1, 5) * sy * _E12),
        (1, 2): _h3_exp(sp.Rational(3, 10) * cy * _E23),
        (1, 3): _h3_exp(sp.Rational(1, 4) * cx * _E13 + sp.Rational(1, 5) * sx * _E12),
        (2, 3): _h3_exp(sp.Rational(1, 5) * sx * _E23 + sp.Rational(1, 10) * cy * _E12),
    }
    return make_twisted_gerbe(cm, cover, (_X, _Y), beta, phis=phis, etas=etas,
                              name="heisenberg_torus4")


def _build_heisenberg_sphere():
    cm = get_crossed_module("heisenberg")
    cover = sphere_halfspace_cover(caps=True)
    x0, x1, x2 = _X3
    beta = {
        (0,): sp.Rational(2, 5) * x1 * _E12 + sp.Rational(1, 5) * x2 * _E23,
        (1,): sp.Rational(3, 10) * x2 * _E12 + sp.Rational(1, 4) * x0 * _E23,
        (2,): sp.Rational(1, 5) * x0 * _E12 + sp.Rational(2, 5) * x1 * _E23
              + sp.Rational(1, 10) * x0 * x1 * _E13,
    }
    phis = [
        _h3_exp(sp.Rational(1, 4) * x0 * _E12),
        _h3_exp(sp.Rational(1, 5) * x1 * _E23),
        _h3_exp(sp.Rational(1, 5) * x2 * _E12 + sp.Rational(1, 10) * x0 * _E13),
        _h3_exp(sp.Rational(3, 10) * x0 * _E23),
        _h3_exp(sp.Rational(1, 10) * x1 * _E12 + sp.Rational(1, 5) * x2 * _E23),
        _h3_exp(sp.Rational(1, 4) * x2 * _E13),
        _h3_exp(sp.Rational(1, 5) * x0 * _E12 + sp.Rational(1, 10) * x1 * _E13),
        _h3_exp(sp.Rational(1, 4) * x1 * _E23),
    ]
    etas = {}
    coeff = [sp.Rational(1, 5), sp.Rational(1, 4), sp.Rational(3, 10)]
    for i in range(8):
        for j in range(i + 1, 8):
            c = coeff[(i + j) % 3]
            etas[(i, j)] = _h3_exp(c * _X3[i % 3] * _E12
                                   + coeff[(2 * i + j) % 3] * _X3[j % 3] * _E23)
    return make_twisted_gerbe(cm, cover, _X3, beta, phis=phis, etas=etas,
                              name="heisenberg_sphere")


def _build_su2_plane():
    cm = get_crossed_module("su2_ad")
    cover = single_chart_cover(Euclidean(2))
    e1 = sp.Matrix([[0, -sp.I / 2], [-sp.I / 2, 0]])
    e2 = sp.Matrix([[0, -sp.Rational(1, 2)], [sp.Rational(1, 2), 0]])
    e3 = sp.Matrix([[-sp.I / 2, 0], [0, sp.I / 2]])
    beta = {
        (0,): sp.Rational(2, 5) * _Y * e1 + sp.Rational(1, 4) * _X * e3,
        (1,): sp.Rational(3, 10) * _X * e2 + sp.Rational(1, 5) * _X * _Y * e1,
    }
    return make_single_chart_gerbe(cm, cover, (_X, _Y), beta, name="su2_plane")


def _build_abelian_sphere(level=1):
    """Circle gerbe around the unit sphere in R^3 with quantized flux.

    B = i*(level/2)*|x| * (solid-angle form), so a radius-R sphere carries
    holonomy exp(2*pi*i*level*R) and the 3-curvature H = dB is nonzero.
    """
    level = int(level)
    cm = get_crossed_module("bs1")
    cover = sphere_halfspace_cover()
    x0, x1, x2 = _X3
    r2 = x0 ** 2 + x1 ** 2 + x2 ** 2
    # solid-angle 2-form scaled by |x|: components of (x dy^dz - y dx^dz + z dx^dy)/|x|^2
    c = sp.I * sp.Rational(level, 2)
    B = {
        (1, 2): sp.Matrix([[c * x0 / r2]]),
        (0, 2): sp.Matrix([[-c * x1 / r2]]),
        (0, 1): sp.Matrix([[c * x2 / r2]]),
    }
    manifold = cover.manifold

    def B_provider(i):
        return SymForm(manifold, _X3, 2, B, space="h", dtype=complex)

    def A_provider(i):
        return SymForm(manifold, _X3, 1, {(0,): sp.zeros(1, 1)}, space="g", dtype=float)

    from .cocycle import GerbeCocycle
    return GerbeCocycle(cm, cover, A_provider, B_provider,
                        name=f"abelian_sphere_level{level}")


def _build_abelian_torus4(level=1):
    """Circle gerbe on the 4-window torus cover with nontrivial a and f data."""
    level = int(level)
    cm = get_crossed_module("bs1")
    cover = torus_window_cover()
    area = 2 * sp.pi * sp.I * level
    beta = {(0,): sp.zeros(1, 1), (1,): sp.zeros(1, 1)}
    z = {(0, 1): sp.Matrix([[area]])}
    cx, sx = sp.cos(2 * sp.pi * _X), sp.sin(2 * sp.pi * _X)
    cy, sy = sp.cos(2 * sp.pi * _Y), sp.sin(2 * sp.pi * _Y)

    def phase(expr):
        return sp.Matrix([[sp.cos(expr) + sp.I * sp.sin(expr)]])

    etas = {
        (0, 1): phase(sp.Rational(2, 5) * sx + sp.Rational(1, 5) * cy),
        (0, 2): phase(sp.Rational(1, 4) * cx),
        (0, 3): phase(sp.Rational(1, 5) * sy - sp.Rational(1, 10) * sx),
        (1, 2): phase(sp.Rational(3, 10) * cy + sp.Rational(1, 5) * sx),
        (1, 3): phase(sp.Rational(1, 4) * sy),
        (2, 3): phase(sp.Rational(1, 5) * cx + sp.Rational(1, 4) * cy),
    }
    return make_twisted_gerbe(cm, cover, (_X, _Y), beta, z_comps=z, etas=etas,
                              name=f"abelian_torus4_level{level}")


def _build_abelian_r4():
    """Circle gerbe on R^4; the only fixture whose nabla(H) check is non-vacuous."""
    cm = get_crossed_module("bs1")
    cover = single_chart_cover(Euclidean(4))
    u0, u1, u2, u3 = _X4
    beta = {(k,): sp.zeros(1, 1) for k in range(4)}
    z = {
        (0, 1): sp.Matrix([[sp.I * (sp.sin(u2) + u3 ** 2 / 2)]]),
        (1, 2): sp.Matrix([[sp.I * sp.cos(u0) * u3]]),
        (2, 3): sp.Matrix([[sp.I * (u0 * u1 + sp.sin(u1))]]),
        (0, 3): sp.Matrix([[sp.I * u2 * u1]]),
    }
    return make_single_chart_gerbe(cm, cover, _X4, beta, z_comps=z, name="abelian_r4")


_COCYCLE_BUILDERS = {
    "trivial": _build_trivial,
    "heisenberg_plane": _build_heisenberg_plane,
    "heisenberg_torus4": _build_heisenberg_torus4,
    "heisenberg_sphere": _build_heisenberg_sphere,
    "su2_plane": _build_su2_plane,
    "abelian_sphere": _build_abelian_sphere,
    "abelian_torus4": _build_abelian_torus4,
    "abelian_r4": _build_abelian_r4,
}


# ---------------------------------------------------------------------------
# corruption wrappers (negative controls; see cli --corrupt)


class _CorruptedCocycle:
    """Shallow proxy replacing one datum of a validated cocycle."""

    def __init__(self, base, override_kind, override_fn):
        self._base = base
        self._kind = override_kind
        self._fn = override_fn
        self.cm = base.cm
        self.cover = base.cover
        self.name = base.name + f"_corrupt_{override_kind}"
        self._cache = {}

    def __getattr__(self, attr):
        return getattr(self._base, attr)

    def B(self, i):
        if self._kind == "B" and i == 0:
            key = ("B", i)
            if key not in self._cache:
                self._cache[key] = self._fn(self._base.B(i))
            return self._cache[key]
        return self._base.B(i)

    def dB(self, i):
        if self._kind == "B" and i == 0:
            key = ("dB", i)
            if key not in self._cache:
                self._cache[key] = self.B(i).d()
            return self._cache[key]
        return self._base.dB(i)

    def g(self, i, j):
        if self._kind == "g" and (i, j) == (0, 1):
            key = ("g", i, j)
            if key not in self._cache:
                self._cache[key] = self._fn(self._base.g(i, j))
            return self._cache[key]
        return self._base.g(i, j)

    def a(self, i, j):
        if self._kind == "a" and (i, j) == (0, 1):
            key = ("a", i, j)
            if key not in self._cache:
                self._cache[key] = self._fn(self._base.a(i, j))
            return self._cache[key]
        return self._base.a(i, j)

    def da(self, i, j):
        if self._kind == "a" and (i, j) == (0, 1):
            return self.a(i, j).d()
        return self._base.da(i, j)

    def f(self, i, j, k):
        if self._kind == "f" and (i, j, k) == (0, 1, 2):
            key = ("f", i, j, k)
            if key not in self._cache:
                self._cache[key] = self._fn(self._base.f(i, j, k))
            return self._cache[key]
        return self._base.f(i, j, k)

    # curvature helpers must see the corrupted data, so rebind them
    def curvature_R(self, i, point, v1, v2):
        from .cocycle import GerbeCocycle
        return GerbeCocycle.curvature_R(self, i, point, v1, v2)

    def fake_curvature_residual(self, i, point, v1, v2):
        from .cocycle import GerbeCocycle
        return GerbeCocycle.fake_curvature_residual(self, i, point, v1, v2)

    def covariant_derivative(self, i, omega, point, *tangents, d_omega=None):
        from .cocycle import GerbeCocycle
        return GerbeCocycle.covariant_derivative(self, i, omega, point, *tangents,
                                                 d_omega=d_omega)

    def three_curvature_H(self, i, point, v1, v2, v3):
        from .cocycle import GerbeCocycle
        return GerbeCocycle.three_curvature_H(self, i, point, v1, v2, v3)


class _ShiftedForm:
    """form + constant matrix on fixed slots (keeps degree and shape)."""

    def __init__(self, base, const):
        self.base = base
        self.const = const
        self.manifold = base.manifold
        self.degree = base.degree
        self.value_shape = base.value_shape
        self.space = base.space

    def __call__(self, point, *tangents):
        scale = 1.0
        for v in tangents:
            scale = scale * float(np.sum(np.asarray(v)))
        return self.base(point, *tangents) + scale * self.const

    def batch(self, points, stacks):
        out = self.base.batch(points, stacks)
        scale = np.ones(out.shape[0])
        for v in stacks:
            scale = scale * np.sum(v, axis=1)
        return out + scale[:, None, None] * self.const

    def d(self, h_fd=1e-4):
        # the shift is constant-coefficient, hence closed only in degree 0;
        # fall back to finite differences to stay honest
        from .forms import _FDDerivativeForm
        return _FDDerivativeForm(self, h_fd)


class _ScaledMatrixField:
    def __init__(self, base, factor):
        self.base = base
        self.factor = np.asarray(factor)

    def value(self, point):
        return self.factor @ self.base.value(point)

    def diff(self, point, v):
        return self.factor @ self.base.diff(point, v)

    def batch_value(self, points):
        return np.einsum("ij,njk->nik", self.factor, self.base.batch_value(points))

    def batch_diff(self, points, vs):
        return np.einsum("ij,njk->nik", self.factor, self.base.batch_diff(points, vs))


CORRUPT_FIXTURES = {
    "B": "heisenberg_plane",
    "g": "heisenberg_torus4",
    "a": "abelian_torus4",
    "f": "abelian_torus4",
}

CORRUPT_TARGET_RELATION = {
    "B": "fake_curvature",
    "g": "triple_g",
    "a": "triple_a",
    "f": "quadruple_f",
}


def corrupt_cocycle(cocycle, which):
    """Deliberately break one datum; the targeted relation must then fail."""
    cm = cocycle.cm
    if which == "B":
        const = 0.3 * (cm.basis_h[0] + cm.basis_h[-1])
        return _CorruptedCocycle(cocycle, "B", lambda B: _ShiftedForm(B, const))
    if which == "g":
        if cm.size_G == 1:
            raise ConfigError("cannot corrupt g: the structure group G is trivial")
        if cm.name == "heisenberg":
            central = cm.exp("G", 0.4 * np.array([[0., 0., 1.], [0., 0., 0.], [0., 0., 0.]]))
        else:
            central = cm.exp("G", 0.3 * cm.basis_g[0])
        return _CorruptedCocycle(cocycle, "g", lambda g: _ScaledMatrixField(g, central))
    if which == "a":
        const = 0.35 * cm.basis_h[0]
        return _CorruptedCocycle(cocycle, "a", lambda a: _ShiftedForm(a, const))
    if which == "f":
        if cm.ker_t_alg_basis:
            central = cm.exp("H", 0.4 * cm.ker_t_alg_basis[0])
        else:
            samples = cm.ker_t_group_samples(np.random.default_rng(0), 8)
            central = next((s for s in samples
                            if np.linalg.norm(s - cm.identity("H")) > 0.1), None)
            if central is None:
                raise ConfigError("cannot corrupt f centrally: ker(t) is trivial")
        return _CorruptedCocycle(cocycle, "f", lambda f: _ScaledMatrixField(f, central))
    raise ConfigError(f"unknown corruption {which!r}; choose one of B, g, a, f")


# ---------------------------------------------------------------------------
# surface fixtures


@functools.lru_cache(maxsize=None)
def _surface_cached(name, knobs_items):
    knobs = dict(knobs_items)
    builder = _SURFACE_BUILDERS.get(name)
    if builder is None:
        known = ", ".join(sorted(_SURFACE_BUILDERS))
        raise ConfigError(f"unknown surface fixture {name!r}; known: {known}")
    return builder(**knobs)


def get_surface(name, **knobs):
    return _surface_cached(name, tuple(sorted(knobs.items())))


def _build_flat_disk(shift=0.25):
    """Unit square in R^2 translated rigidly by r."""
    shift = float(shift)

    def ev(r, t, s):
        return np.array([t + shift * r, s + 0.6 * shift * r])

    def jet(t, s):
        return np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def var(t, s):
        return np.array([shift, 0.6 * shift])

    return surfaces.SquareFamily.from_callables(
        Euclidean(2), ev, jet=jet, variation=var, name="flat_disk")


def _build_bump_family(amplitude=0.3):
    """Unit square in R^2 with a smooth non-vanishing variation field."""
    amplitude = float(amplitude)

    def ev(r, t, s):
        return np.array([
            t + amplitude * r * np.cos(1.1 * t + 0.7 * s + 0.2),
            s + 0.8 * amplitude * r * np.sin(0.9 * t - 0.5 * s + 0.4),
        ])

    def jet(t, s):
        return np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def var(t, s):
        return np.array([
            amplitude * np.cos(1.1 * t + 0.7 * s + 0.2),
            0.8 * amplitude * np.sin(0.9 * t - 0.5 * s + 0.4),
        ])

    return surfaces.SquareFamily.from_callables(
        Euclidean(2), ev, jet=jet, variation=var, name="bump_family")


def _build_torus_wrap(amplitude=0.12):
    """The full torus as a closed square, with a periodic deformation field."""
    amplitude = float(amplitude)
    tau = 2 * np.pi

    def p(t, s):
        return amplitude * (0.5 + 0.4 * np.sin(tau * t) * np.cos(tau * s))

    def q(t, s):
        return amplitude * (0.3 + 0.5 * np.cos(tau * t) * np.sin(tau * s)
                            + 0.2 * np.cos(tau * s))

    def ev(r, t, s):
        return np.array([t + r * p(t, s), s + r * q(t, s)])

    def jet(t, s):
        return np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def var(t, s):
        return np.array([p(t, s), q(t, s)])

    return surfaces.SquareFamily.from_callables(
        Euclidean(2), ev, jet=jet, variation=var, name="torus_wrap",
        wrap_to_torus=True)


def _build_torus_patch(width=0.72, height=0.45):
    """A non-closed rectangle on the torus straddling window boundaries."""
    width, height = float(width), float(height)
    x0, y0 = 0.05, 0.1

    def vx(t, s):
        return 0.2 * (1.0 + 0.3 * np.sin(np.pi * t) + 0.4 * s - 0.3 * s * t)

    def vy(t, s):
        return 0.15 * (1.0 + 0.4 * np.cos(np.pi * s) - 0.5 * t * s)

    def ev(r, t, s):
        return np.array([x0 + width * t + r * vx(t, s),
                         y0 + height * s + r * vy(t, s)])

    def jet(t, s):
        return np.array([width, 0.0]), np.array([0.0, height])

    def var(t, s):
        return np.array([vx(t, s), vy(t, s)])

    return surfaces.SquareFamily.from_callables(
        Euclidean(2), ev, jet=jet, variation=var, name="torus_patch",
        wrap_to_torus=True)


def _unit_vec(t, s):
    th, ph = np.pi * s, 2 * np.pi * t
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def _unit_vec_jet(t, s):
    th, ph = np.pi * s, 2 * np.pi * t
    dt = 2 * np.pi * np.array([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0.0])
    ds = np.pi * np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
    return dt, ds


def _build_sphere_of_radius(rho=1.0):
    """Closed sphere of radius rho + r about the origin (sphere mode)."""
    rho = float(rho)

    def ev(r, t, s):
        return (rho + r) * _unit_vec(t, s)

    def jet(t, s):
        dt, ds = _unit_vec_jet(t, s)
        return rho * dt, rho * ds

    def var(t, s):
        return _unit_vec(t, s)

    return surfaces.SquareFamily.from_callables(
        ShellSampler(), ev, jet=jet, variation=var, name="sphere_of_radius",
        sphere_mode=True)


def _build_sphere_bump(amplitude=0.15):
    """Closed sphere with a longitude-independent radial bump (sphere mode)."""
    amplitude = float(amplitude)

    def rad(s):
        return 1.0 + amplitude * np.sin(np.pi * s) ** 2

    def ev(r, t, s):
        return (1.0 + r * rad(s)) * _unit_vec(t, s)

    def var(t, s):
        return rad(s) * _unit_vec(t, s)

    return surfaces.SquareFamily.from_callables(
        ShellSampler(), ev, variation=var, name="sphere_bump", sphere_mode=True)


def _build_sphere_patch(t0=0.0, t1=0.75, s0=0.22, s1=0.78):
    """An equator-straddling spherical patch with a radial-and-drift family."""
    t0, t1, s0, s1 = map(float, (t0, t1, s0, s1))

    def ev(r, t, s):
        tt = t0 + (t1 - t0) * t
        ss = s0 + (s1 - s0) * s
        return (1.0 + 0.2 * r * (1.0 + 0.2 * np.sin(np.pi * t))) * _unit_vec(tt, ss)

    def var(t, s):
        tt = t0 + (t1 - t0) * t
        ss = s0 + (s1 - s0) * s
        return 0.2 * (1.0 + 0.2 * np.sin(np.pi * t)) * _unit_vec(tt, ss)

    return surfaces.SquareFamily.from_callables(
        ShellSampler(), ev, variation=var, name="sphere_patch")


_SURFACE_BUILDERS = {
    "flat_disk": _build_flat_disk,
    "bump_family": _build_bump_family,
    "torus_wrap": _build_torus_wrap,
    "torus_patch": _build_torus_patch,
    "sphere_of_radius": _build_sphere_of_radius,
    "sphere_bump": _build_sphere_bump,
    "sphere_patch": _build_sphere_patch,
}
