"""Matrix-valued differential forms on coordinate patches.

A k-form is stored either as a plain evaluator (finite-difference exterior
derivative) or as a table of sympy matrix components indexed by sorted
coordinate multi-indices (exact exterior derivative).  Fixture fields are
built symbolically so that every derivative used in validation is analytic;
callable forms exist for tests and ad-hoc data.
"""

import itertools

import numpy as np
import sympy as sp

from .errors import ConstructionError

_FD_STEP = 1e-4


def _as_complex_or_float(expr_matrix):
    return complex if any(e.has(sp.I) for e in expr_matrix) else float


class _CompiledMatrix:
    """A sympy Matrix compiled entrywise for scalar and batched evaluation."""

    def __init__(self, coords, matrix, dtype=None):
        matrix = sp.Matrix(matrix)
        self.shape = matrix.shape
        self.dtype = dtype or _as_complex_or_float(matrix)
        self._entries = []
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                expr = sp.sympify(matrix[i, j])
                if expr.free_symbols:
                    fn = sp.lambdify(coords, expr, modules="numpy")
                    self._entries.append((i, j, fn, None))
                else:
                    self._entries.append((i, j, None, self.dtype(expr)))

    def at(self, point):
        out = np.zeros(self.shape, dtype=self.dtype)
        args = tuple(point)
        for i, j, fn, const in self._entries:
            out[i, j] = const if fn is None else fn(*args)
        return out

    def batch(self, points):
        n = points.shape[0]
        out = np.zeros((n,) + self.shape, dtype=self.dtype)
        cols = tuple(points[:, k] for k in range(points.shape[1]))
        for i, j, fn, const in self._entries:
            if fn is None:
                out[:, i, j] = const
            else:
                out[:, i, j] = np.broadcast_to(fn(*cols), (n,))
        return out


def _minors(tangents, index):
    """det of the k x k submatrix of the tangent columns at the given rows."""
    k = len(index)
    if k == 0:
        return 1.0
    if k == 1:
        return tangents[0][index[0]]
    m = np.empty((k, k), dtype=np.result_type(*[np.asarray(t).dtype for t in tangents]))
    for col, v in enumerate(tangents):
        for row, idx in enumerate(index):
            m[row, col] = v[idx]
    return np.linalg.det(m)


def _minors_batch(tangent_stacks, index):
    """Batched version; tangent_stacks is a list of (n, dim) arrays."""
    k = len(index)
    n = tangent_stacks[0].shape[0]
    if k == 1:
        return tangent_stacks[0][:, index[0]]
    m = np.empty((n, k, k))
    for col, v in enumerate(tangent_stacks):
        for row, idx in enumerate(index):
            m[:, row, col] = v[:, idx]
    return np.linalg.det(m)


class FormField:
    """Base class: a degree-k form with square-matrix values."""

    def __init__(self, manifold, degree, value_shape, space=""):
        self.manifold = manifold
        self.degree = degree
        self.value_shape = value_shape
        self.space = space

    def __call__(self, point, *tangents):
        raise NotImplementedError

    def batch(self, points, tangent_stacks):
        """Evaluate at (n, dim) points with k tangent stacks of shape (n, dim)."""
        return np.stack([
            self(points[i], *[t[i] for t in tangent_stacks])
            for i in range(points.shape[0])
        ])

    def d(self, h_fd=_FD_STEP):
        """Exterior derivative; finite differences unless overridden."""
        return _FDDerivativeForm(self, h_fd)

    @property
    def has_analytic_d(self):
        return False


class CallableForm(FormField):
    """A form backed by a plain evaluator f(point, *tangents)."""

    def __init__(self, manifold, degree, value_shape, evaluator, space=""):
        super().__init__(manifold, degree, value_shape, space)
        self._evaluator = evaluator

    def __call__(self, point, *tangents):
        if len(tangents) != self.degree:
            raise ConstructionError(
                f"degree-{self.degree} form called with {len(tangents)} tangents")
        return self._evaluator(np.asarray(point, dtype=float),
                               *[np.asarray(t, dtype=float) for t in tangents])


class _FDDerivativeForm(FormField):
    """Central-difference exterior derivative of another form."""

    def __init__(self, base, h_fd):
        super().__init__(base.manifold, base.degree + 1, base.value_shape, base.space)
        self.base = base
        self.h_fd = h_fd

    def __call__(self, point, *tangents):
        point = np.asarray(point, dtype=float)
        out = None
        for a, v in enumerate(tangents):
            rest = tangents[:a] + tangents[a + 1:]
            h = self.h_fd
            plus = self.base(point + h * np.asarray(v), *rest)
            minus = self.base(point - h * np.asarray(v), *rest)
            term = (plus - minus) / (2.0 * h)
            term = term if a % 2 == 0 else -term
            out = term if out is None else out + term
        return out


class SymForm(FormField):
    """A form with sympy matrix components over sorted multi-indices.

    components: dict mapping tuples like (0, 2) to sympy Matrices.  Missing
    components are zero.  The exterior derivative is computed symbolically.
    """

    def __init__(self, manifold, coords, degree, components, space="", dtype=None):
        comps = {}
        shape = None
        for idx, mat in components.items():
            idx = tuple(idx)
            if tuple(sorted(idx)) != idx or len(set(idx)) != len(idx):
                raise ConstructionError(f"component index {idx} must be strictly sorted")
            mat = sp.Matrix(mat)
            if not mat.is_zero_matrix:
                comps[idx] = mat
            shape = mat.shape
        if shape is None:
            raise ConstructionError("a SymForm needs at least one component to fix its shape")
        super().__init__(manifold, degree, shape, space)
        self.coords = tuple(coords)
        self.components = comps
        if dtype is None:
            dtype = complex if any(_as_complex_or_float(m) is complex
                                   for m in comps.values()) else float
        self.dtype = dtype
        self._compiled = {idx: _CompiledMatrix(self.coords, m, dtype=self.dtype)
                          for idx, m in comps.items()}

    def __call__(self, point, *tangents):
        if len(tangents) != self.degree:
            raise ConstructionError(
                f"degree-{self.degree} form called with {len(tangents)} tangents")
        out = np.zeros(self.value_shape, dtype=self.dtype)
        point = np.asarray(point, dtype=float)
        for idx, comp in self._compiled.items():
            out = out + comp.at(point) * _minors(tangents, idx)
        return out

    def batch(self, points, tangent_stacks):
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        out = np.zeros((n,) + self.value_shape, dtype=self.dtype)
        for idx, comp in self._compiled.items():
            vals = comp.batch(points)
            out += vals * _minors_batch(tangent_stacks, idx)[:, None, None]
        return out

    @property
    def has_analytic_d(self):
        return True

    def d(self, h_fd=_FD_STEP):
        d_comps = {}
        dim = len(self.coords)
        for idx, mat in self.components.items():
            for j in range(dim):
                if j in idx:
                    continue
                dmat = mat.diff(self.coords[j])
                if dmat.is_zero_matrix:
                    continue
                new_idx = tuple(sorted(idx + (j,)))
                sign = (-1) ** sum(1 for i in idx if i < j)
                prev = d_comps.get(new_idx, sp.zeros(*self.value_shape))
                d_comps[new_idx] = prev + sign * dmat
        if not d_comps:
            d_comps = {tuple(range(self.degree + 1)): sp.zeros(*self.value_shape)}
        return SymForm(self.manifold, self.coords, self.degree + 1, d_comps,
                       space=self.space, dtype=self.dtype)

    def map_linear(self, fn, space=""):
        """Apply a linear map (sympy Matrix -> sympy Matrix) to every component."""
        return SymForm(self.manifold, self.coords, self.degree,
                       {idx: fn(m) for idx, m in self.components.items()},
                       space=space or self.space)


def sym_zero_form(manifold, coords, degree, shape, space="", dtype=float):
    return SymForm(manifold, coords, degree,
                   {tuple(range(degree)): sp.zeros(*shape)}, space=space, dtype=dtype)


def sym_wedge_bracket(a, b):
    """[a ^ b] for matrix-valued sympy 1-forms given as component dicts.

    Returns the components of the 2-form (u, v) -> [a(u), b(v)] - [a(v), b(u)].
    For a = b this is [a ^ a](u, v) = 2 [a(u), a(v)].
    """
    out = {}
    for (i,), ma in a.items():
        for (j,), mb in b.items():
            if i == j:
                continue
            comm = ma * mb - mb * ma
            idx = (min(i, j), max(i, j))
            sign = 1 if i < j else -1
            prev = out.get(idx, sp.zeros(*comm.shape))
            out[idx] = prev + sign * comm
    return out


class MatrixField:
    """A matrix-valued 0-form (map into a group or algebra) with derivatives."""

    def value(self, point):
        raise NotImplementedError

    def diff(self, point, v):
        """Directional derivative along v."""
        raise NotImplementedError

    def batch_value(self, points):
        return np.stack([self.value(p) for p in points])

    def batch_diff(self, points, vs):
        return np.stack([self.diff(p, v) for p, v in zip(points, vs)])


class SymMatrixField(MatrixField):
    def __init__(self, coords, matrix, dtype=None):
        self.coords = tuple(coords)
        self.matrix = sp.Matrix(matrix)
        self._value = _CompiledMatrix(self.coords, self.matrix, dtype=dtype)
        self.dtype = self._value.dtype
        self._partials = [
            _CompiledMatrix(self.coords, self.matrix.diff(c), dtype=self.dtype)
            for c in self.coords
        ]
        self.shape = self._value.shape

    def value(self, point):
        return self._value.at(np.asarray(point, dtype=float))

    def diff(self, point, v):
        point = np.asarray(point, dtype=float)
        out = np.zeros(self.shape, dtype=self.dtype)
        for comp, p in zip(self._partials, np.asarray(v, dtype=float)):
            if p != 0.0:
                out += p * comp.at(point)
        return out

    def batch_value(self, points):
        return self._value.batch(np.asarray(points, dtype=float))

    def batch_diff(self, points, vs):
        points = np.asarray(points, dtype=float)
        vs = np.asarray(vs, dtype=float)
        out = np.zeros((points.shape[0],) + self.shape, dtype=self.dtype)
        for k, comp in enumerate(self._partials):
            out += comp.batch(points) * vs[:, k][:, None, None]
        return out


class CallableMatrixField(MatrixField):
    def __init__(self, fn, h_fd=1e-6):
        self._fn = fn
        self.h_fd = h_fd

    def value(self, point):
        return self._fn(np.asarray(point, dtype=float))

    def diff(self, point, v):
        point = np.asarray(point, dtype=float)
        v = np.asarray(v, dtype=float)
        h = self.h_fd
        return (self._fn(point + h * v) - self._fn(point - h * v)) / (2.0 * h)


class ConstantMatrixField(MatrixField):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix)

    def value(self, point):
        return self.matrix

    def diff(self, point, v):
        return np.zeros_like(self.matrix)

    def batch_value(self, points):
        return np.broadcast_to(self.matrix, (len(points),) + self.matrix.shape)

    def batch_diff(self, points, vs):
        return np.zeros((len(points),) + self.matrix.shape, dtype=self.matrix.dtype)


def exterior_derivative(form, point, *tangents, h_fd=_FD_STEP):
    """Evaluate d(form) at a point on k+1 tangents (analytic when available)."""
    return form.d(h_fd)(point, *tangents)


def antisymmetry_residual(form, rng, point, n_trials=10, scale=1.0):
    """Max residual of swapping two tangent slots (0 for degree < 2)."""
    if form.degree < 2:
        return 0.0
    dim = form.manifold.dim
    worst = 0.0
    for _ in range(n_trials):
        vs = [rng.uniform(-scale, scale, size=dim) for _ in range(form.degree)]
        a, b = rng.choice(form.degree, size=2, replace=False)
        swapped = list(vs)
        swapped[a], swapped[b] = swapped[b], swapped[a]
        worst = max(worst, float(np.linalg.norm(form(point, *vs) + form(point, *swapped))))
    return worst
