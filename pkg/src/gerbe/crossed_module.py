"""Matrix crossed modules (H -> G, t, alpha) with their Lie algebras.

Three instances are bundled and addressable by name:

* ``bs1`` -- the circle mapping to the trivial group; the abelian case.
* ``heisenberg`` -- the 3x3 unipotent group acting on itself by conjugation
  with identity target; nilpotent, so exp/log are exact polynomials.
* ``su2_ad`` -- SU(2) over SO(3) with the adjoint target and the standard
  action by rotation lifts.

All instance methods take and return raw ndarrays; the tagged wrapper
functions at the bottom of the module enforce which group or algebra an
element belongs to.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DomainError, TagMismatchError

TAG_G, TAG_H = "G", "H"
TAG_LG, TAG_LH = "g", "h"

_GROUP_TO_ALG = {TAG_G: TAG_LG, TAG_H: TAG_LH}
_ALG_TO_GROUP = {TAG_LG: TAG_G, TAG_LH: TAG_H}


@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray
    group: str          # "G" or "H"
    cm: str             # owning instance name


@dataclass(frozen=True)
class AlgebraElement:
    matrix: np.ndarray
    algebra: str        # "g" or "h"
    cm: str


class CrossedModule:
    """Base class; subclasses fill in the maps for one concrete realization."""

    name = "abstract"
    size_G = 0
    size_H = 0
    dtype_G = float
    dtype_H = float

    # Subclasses: lists of basis matrices.
    basis_g = ()
    basis_h = ()
    # Basis of ker(t) inside the Lie algebra of H (possibly empty).
    ker_t_alg_basis = ()

    # --- structure maps -------------------------------------------------

    def t(self, h):
        raise NotImplementedError

    def t_alg(self, Y):
        raise NotImplementedError

    def act(self, g, h):
        raise NotImplementedError

    def act_push_g(self, g, Y):
        """(alpha_g)_*: the derivative of alpha_g at the identity of H."""
        raise NotImplementedError

    def act_push_h(self, X, h):
        """(alpha_h)_*(X): ambient tangent at h of eps -> alpha_{exp(eps X)}(h)."""
        raise NotImplementedError

    def alg_act(self, X, Y):
        """The Lie-algebra action alpha_X(Y)."""
        raise NotImplementedError

    # --- exponential coordinates ----------------------------------------

    def exp(self, tag, X):
        raise NotImplementedError

    def log(self, tag, g):
        raise NotImplementedError

    def exp_batch(self, tag, stack):
        return np.stack([self.exp(tag, x) for x in stack])

    def act_push_g_batch(self, gs, Ys):
        return np.stack([self.act_push_g(g, y) for g, y in zip(gs, Ys)])

    def alg_act_batch(self, Xs, Ys):
        return np.stack([self.alg_act(x, y) for x, y in zip(Xs, Ys)])

    # --- manifold bookkeeping --------------------------------------------

    def project(self, tag, g):
        raise NotImplementedError

    def manifold_residual(self, tag, g):
        """Distance from the group manifold (0 means exactly on it)."""
        return linalg.fro(g - self.project(tag, g))

    def algebra_residual(self, tag, Y):
        """Distance from the Lie-algebra subspace."""
        basis = self.basis(tag)
        if not basis:
            return linalg.fro(Y)
        flat = np.stack([b.ravel() for b in basis], axis=1)
        coef, *_ = np.linalg.lstsq(flat, np.asarray(Y).ravel(), rcond=None)
        return linalg.fro(Y - (flat @ coef).reshape(Y.shape))

    # --- conveniences -----------------------------------------------------

    def size(self, tag):
        return self.size_G if tag in (TAG_G, TAG_LG) else self.size_H

    def dtype(self, tag):
        return self.dtype_G if tag in (TAG_G, TAG_LG) else self.dtype_H

    def identity(self, tag):
        return np.eye(self.size(tag), dtype=self.dtype(tag))

    def zero(self, tag):
        return np.zeros((self.size(tag), self.size(tag)), dtype=self.dtype(tag))

    def basis(self, tag):
        return self.basis_g if tag == TAG_LG else self.basis_h

    def dim(self, tag):
        return len(self.basis(tag))

    def bracket(self, X, Y):
        return X @ Y - Y @ X

    def from_coords(self, tag, coeffs):
        out = self.zero(tag)
        for c, b in zip(coeffs, self.basis(tag)):
            out = out + c * b
        return out

    def random_algebra(self, rng, tag, scale=0.5):
        n = self.dim(tag)
        if n == 0:
            return self.zero(tag)
        return self.from_coords(tag, rng.uniform(-scale, scale, size=n))

    def random_group(self, rng, tag, scale=0.5):
        alg = TAG_LG if tag == TAG_G else TAG_LH
        return self.exp(tag, self.random_algebra(rng, alg, scale))

    def ker_t_group_samples(self, rng, count):
        """Group elements of H with t(h) = identity."""
        if self.ker_t_alg_basis:
            out = []
            for _ in range(count):
                coeffs = rng.uniform(-0.5, 0.5, size=len(self.ker_t_alg_basis))
                z = self.zero(TAG_LH)
                for c, b in zip(coeffs, self.ker_t_alg_basis):
                    z = z + c * b
                out.append(self.exp(TAG_H, z))
            return out
        return [self.identity(TAG_H)] * count

    def t_section(self, g):
        """Some h with t(h) = g; only where t is surjective."""
        raise NotImplementedError(f"{self.name} has no section of t")

    def __repr__(self):
        return f"CrossedModule({self.name})"


# ---------------------------------------------------------------------------
# bs1: (S^1 -> {*})


class BS1(CrossedModule):
    name = "bs1"
    size_G = 1
    size_H = 1
    dtype_G = float
    dtype_H = complex

    basis_g = ()
    basis_h = (np.array([[1j]]),)
    ker_t_alg_basis = (np.array([[1j]]),)

    def t(self, h):
        return np.array([[1.0]])

    def t_alg(self, Y):
        return np.array([[0.0]])

    def act(self, g, h):
        return h

    def act_push_g(self, g, Y):
        return Y

    def act_push_h(self, X, h):
        return np.zeros_like(h)

    def alg_act(self, X, Y):
        return np.zeros_like(Y)

    def exp(self, tag, X):
        if tag == TAG_G:
            return np.array([[1.0]])
        return np.exp(X)

    def exp_batch(self, tag, stack):
        if tag == TAG_G:
            return np.ones_like(stack)
        return np.exp(stack)

    def act_push_g_batch(self, gs, Ys):
        return Ys

    def alg_act_batch(self, Xs, Ys):
        return np.zeros_like(Ys)

    def log(self, tag, g):
        if tag == TAG_G:
            return np.array([[0.0]])
        val = complex(g[0, 0])
        if abs(val + 1.0) < 1e-3:
            raise DomainError("bs1 log is gated away from the antipode")
        return np.array([[1j * np.angle(val)]])

    def project(self, tag, g):
        if tag == TAG_G:
            return np.array([[1.0]])
        val = complex(g[0, 0])
        mag = abs(val)
        if mag == 0.0:
            raise DomainError("cannot project the zero matrix onto S^1")
        return np.array([[val / mag]])

    def t_section(self, g):
        return self.identity(TAG_H)


# ---------------------------------------------------------------------------
# heisenberg: (H3 -> H3, t = id, alpha = conjugation)

_E12 = np.zeros((3, 3)); _E12[0, 1] = 1.0
_E23 = np.zeros((3, 3)); _E23[1, 2] = 1.0
_E13 = np.zeros((3, 3)); _E13[0, 2] = 1.0
_H3_MASK = np.triu(np.ones((3, 3)), k=1)


class Heisenberg(CrossedModule):
    name = "heisenberg"
    size_G = 3
    size_H = 3
    dtype_G = float
    dtype_H = float

    basis_g = (_E12, _E23, _E13)
    basis_h = (_E12, _E23, _E13)
    ker_t_alg_basis = ()
    center_h_basis = (_E13,)

    def t(self, h):
        return h

    def t_alg(self, Y):
        return Y

    def act(self, g, h):
        return g @ h @ self._inv(g)

    def act_push_g(self, g, Y):
        return g @ Y @ self._inv(g)

    def act_push_h(self, X, h):
        return X @ h - h @ X

    def alg_act(self, X, Y):
        return X @ Y - Y @ X

    @staticmethod
    def _inv(g):
        n = g - np.eye(3)
        return np.eye(3) - n + n @ n

    def exp(self, tag, X):
        return np.eye(3) + X + 0.5 * (X @ X)

    def exp_batch(self, tag, stack):
        return np.eye(3) + stack + 0.5 * np.einsum("nij,njk->nik", stack, stack)

    def act_push_g_batch(self, gs, Ys):
        invs = np.linalg.inv(gs)
        return np.einsum("nij,njk,nkl->nil", gs, Ys, invs)

    def alg_act_batch(self, Xs, Ys):
        return np.einsum("nij,njk->nik", Xs, Ys) - np.einsum("nij,njk->nik", Ys, Xs)

    def log(self, tag, g):
        n = g - np.eye(3)
        return n - 0.5 * (n @ n)

    def project(self, tag, g):
        return np.eye(3) + g * _H3_MASK

    def t_section(self, g):
        return g


# ---------------------------------------------------------------------------
# su2_ad: (SU(2) -> SO(3), t = Ad, alpha = conjugation by a rotation lift)

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_SU2_BASIS = tuple(-0.5j * s for s in _SIGMA)


def _hat(w):
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def _vee(X):
    return np.array([X[2, 1], X[0, 2], X[1, 0]])


_SO3_BASIS = tuple(_hat(e) for e in np.eye(3))


def _su2_components(Y):
    # <e_a, e_b> = -delta_ab / 2 for e_a = -i sigma_a / 2
    return np.array([-2.0 * np.trace(Y @ e).real for e in _SU2_BASIS])


def _quaternion_from_rotation(R):
    """Unit quaternion (w, x, y, z) with Ad(lift) = R; stable branch choice."""
    tr = np.trace(R)
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        w = 0.5 * np.sqrt(max(1.0 + tr, 0.0))
        s = 0.25 / w
        return np.array([w, (R[2, 1] - R[1, 2]) * s,
                         (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    k = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
    i, j = (k + 1) % 3, (k + 2) % 3
    s = np.sqrt(max(1.0 + R[k, k] - R[i, i] - R[j, j], 0.0))
    q = np.empty(4)
    q[1 + k] = 0.5 * s
    inv = 0.25 / (0.5 * s)
    q[0] = (R[j, i] - R[i, j]) * inv
    q[1 + i] = (R[i, k] + R[k, i]) * inv
    q[1 + j] = (R[j, k] + R[k, j]) * inv
    return q / np.linalg.norm(q)


def _su2_from_quaternion(q):
    w, v = q[0], q[1:]
    u = w * np.eye(2, dtype=complex)
    for c, e in zip(v, _SU2_BASIS):
        u = u + 2.0 * c * e
    return u


class SU2Ad(CrossedModule):
    name = "su2_ad"
    size_G = 3
    size_H = 2
    dtype_G = float
    dtype_H = complex

    basis_g = _SO3_BASIS
    basis_h = _SU2_BASIS
    ker_t_alg_basis = ()

    def t(self, h):
        hinv = h.conj().T
        R = np.empty((3, 3))
        for b, eb in enumerate(_SU2_BASIS):
            conj = h @ eb @ hinv
            for a, ea in enumerate(_SU2_BASIS):
                R[a, b] = -2.0 * np.trace(ea @ conj).real
        return R

    def t_alg(self, Y):
        return _hat(_su2_components(Y))

    def _lift_group(self, g):
        return _su2_from_quaternion(_quaternion_from_rotation(g))

    def _lift_alg(self, X):
        w = _vee(X)
        out = np.zeros((2, 2), dtype=complex)
        for c, e in zip(w, _SU2_BASIS):
            out = out + c * e
        return out

    def act(self, g, h):
        u = self._lift_group(g)
        return u @ h @ u.conj().T

    def act_push_g(self, g, Y):
        u = self._lift_group(g)
        return u @ Y @ u.conj().T

    def act_push_h(self, X, h):
        Xt = self._lift_alg(X)
        return Xt @ h - h @ Xt

    def alg_act(self, X, Y):
        Xt = self._lift_alg(X)
        return Xt @ Y - Y @ Xt

    def exp(self, tag, X):
        if tag == TAG_G:
            w = _vee(X)
            th = np.linalg.norm(w)
            if th < 1e-8:
                return np.eye(3) + X + 0.5 * X @ X
            return (np.eye(3) + np.sin(th) / th * X
                    + (1.0 - np.cos(th)) / th**2 * (X @ X))
        q = _su2_components(X)
        th = 0.5 * np.linalg.norm(q)
        if th < 1e-8:
            return np.eye(2, dtype=complex) + X + 0.5 * X @ X
        return np.cos(th) * np.eye(2, dtype=complex) + np.sin(th) / th * X

    def log(self, tag, g):
        if tag == TAG_G:
            c = 0.5 * (np.trace(g) - 1.0)
            A = 0.5 * (g - g.T)
            s = linalg.fro(A) / np.sqrt(2.0)
            th = np.arctan2(s, c)
            if th > np.pi - 0.2:
                raise DomainError("so(3) log gated away from angle pi")
            if th < 1e-8:
                return A
            return th / np.sin(th) * A
        c = 0.5 * np.trace(g).real
        A = 0.5 * (g - g.conj().T)
        s = linalg.fro(A) / np.sqrt(2.0)
        th = np.arctan2(s, c)
        if th > np.pi - 0.2:
            raise DomainError("su(2) log gated away from angle pi")
        if th < 1e-8:
            return A
        return th / np.sin(th) * A

    def project(self, tag, g):
        if tag == TAG_G:
            return linalg.polar_special_orthogonal(g)
        return linalg.polar_special_unitary(g)

    def ker_t_group_samples(self, rng, count):
        out = []
        for _ in range(count):
            out.append(float(rng.choice([-1.0, 1.0])) * np.eye(2, dtype=complex))
        return out

    def t_section(self, g):
        return self._lift_group(g)


# ---------------------------------------------------------------------------
# registry

_INSTANCES = {}


def get_crossed_module(name):
    """Look up a bundled instance by registry name."""
    if name not in _INSTANCES:
        known = ", ".join(sorted(n for n in ("bs1", "heisenberg", "su2_ad")))
        if name == "bs1":
            _INSTANCES[name] = BS1()
        elif name == "heisenberg":
            _INSTANCES[name] = Heisenberg()
        elif name == "su2_ad":
            _INSTANCES[name] = SU2Ad()
        else:
            raise KeyError(f"unknown crossed module {name!r}; known: {known}")
    return _INSTANCES[name]


# ---------------------------------------------------------------------------
# tagged wrapper API


def _require(cond, msg):
    if not cond:
        raise TagMismatchError(msg)


def target_group(cm, h):
    _require(h.group == TAG_H and h.cm == cm.name, "t expects an element of H")
    return GroupElement(cm.t(h.matrix), TAG_G, cm.name)


def act(cm, g, h):
    _require(g.group == TAG_G and g.cm == cm.name, "act expects g in G")
    _require(h.group == TAG_H and h.cm == cm.name, "act expects h in H")
    return GroupElement(cm.act(g.matrix, h.matrix), TAG_H, cm.name)


def act_pushforward_g(cm, g, Y):
    _require(g.group == TAG_G and g.cm == cm.name, "expects g in G")
    _require(Y.algebra == TAG_LH and Y.cm == cm.name, "expects Y in Lie(H)")
    return AlgebraElement(cm.act_push_g(g.matrix, Y.matrix), TAG_LH, cm.name)


def act_pushforward_h(cm, X, h):
    _require(X.algebra == TAG_LG and X.cm == cm.name, "expects X in Lie(G)")
    _require(h.group == TAG_H and h.cm == cm.name, "expects h in H")
    return cm.act_push_h(X.matrix, h.matrix)


def alg_act(cm, X, Y):
    _require(X.algebra == TAG_LG and X.cm == cm.name, "expects X in Lie(G)")
    _require(Y.algebra == TAG_LH and Y.cm == cm.name, "expects Y in Lie(H)")
    return AlgebraElement(cm.alg_act(X.matrix, Y.matrix), TAG_LH, cm.name)


def exp(cm, X):
    _require(X.cm == cm.name, "element of a different instance")
    tag = _ALG_TO_GROUP[X.algebra]
    return GroupElement(cm.exp(tag, X.matrix), tag, cm.name)


def log(cm, g):
    _require(g.cm == cm.name, "element of a different instance")
    return AlgebraElement(cm.log(g.group, g.matrix), _GROUP_TO_ALG[g.group], cm.name)


def bracket(cm, X, Y):
    _require(X.algebra == Y.algebra and X.cm == Y.cm == cm.name,
             "bracket expects two elements of one Lie algebra")
    return AlgebraElement(cm.bracket(X.matrix, Y.matrix), X.algebra, cm.name)


def mul(cm, a, b):
    _require(a.group == b.group and a.cm == b.cm == cm.name,
             "mul expects two elements of one group")
    return GroupElement(a.matrix @ b.matrix, a.group, cm.name)


def inv(cm, a):
    _require(a.cm == cm.name, "element of a different instance")
    return GroupElement(np.linalg.inv(a.matrix), a.group, cm.name)


def conj(cm, a, b):
    _require(a.group == b.group and a.cm == b.cm == cm.name,
             "conj expects two elements of one group")
    return GroupElement(a.matrix @ b.matrix @ np.linalg.inv(a.matrix), a.group, cm.name)


# ---------------------------------------------------------------------------
# axiom checking


@dataclass
class AxiomReport:
    """Max residuals of the defining relations over seeded random samples."""

    cm: str
    n_samples: int
    seed: int
    eq_t_act: float = 0.0            # t(alpha_g(h)) = g t(h) g^-1
    eq_peiffer: float = 0.0          # alpha_{t(h)}(h') = h h' h^-1
    alg_t_act: float = 0.0           # t(alpha_X Y) = [X, t(Y)]
    alg_peiffer: float = 0.0         # alpha_{t(Y1)}(Y2) = [Y1, Y2]
    push_g_consistency: float = 0.0  # (alpha_g)_* vs finite differences
    kernel_central: float = 0.0      # ker t lands in the center of H
    details: dict = field(default_factory=dict)

    def max_residual(self):
        return max(self.eq_t_act, self.eq_peiffer, self.alg_t_act,
                   self.alg_peiffer, self.kernel_central)

    def to_dict(self):
        return {
            "cm": self.cm,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "eq_t_act": self.eq_t_act,
            "eq_peiffer": self.eq_peiffer,
            "alg_t_act": self.alg_t_act,
            "alg_peiffer": self.alg_peiffer,
            "push_g_consistency": self.push_g_consistency,
            "kernel_central": self.kernel_central,
        }


def check_axioms(cm, n_samples=100, seed=0):
    """Sample the crossed-module axioms and report max residuals."""
    rng = np.random.default_rng(seed)
    rep = AxiomReport(cm=cm.name, n_samples=n_samples, seed=seed)
    eps = 1e-5
    for _ in range(n_samples):
        g = cm.random_group(rng, TAG_G)
        h = cm.random_group(rng, TAG_H)
        h2 = cm.random_group(rng, TAG_H)
        X = cm.random_algebra(rng, TAG_LG)
        Y1 = cm.random_algebra(rng, TAG_LH)
        Y2 = cm.random_algebra(rng, TAG_LH)

        lhs = cm.t(cm.act(g, h))
        rhs = g @ cm.t(h) @ np.linalg.inv(g)
        rep.eq_t_act = max(rep.eq_t_act, linalg.fro(lhs - rhs))

        lhs = cm.act(cm.t(h), h2)
        rhs = h @ h2 @ np.linalg.inv(h)
        rep.eq_peiffer = max(rep.eq_peiffer, linalg.fro(lhs - rhs))

        lhs = cm.t_alg(cm.alg_act(X, Y1))
        rhs = cm.bracket(X, cm.t_alg(Y1))
        rep.alg_t_act = max(rep.alg_t_act, linalg.fro(lhs - rhs))

        lhs = cm.alg_act(cm.t_alg(Y1), Y2)
        rhs = cm.bracket(Y1, Y2)
        rep.alg_peiffer = max(rep.alg_peiffer, linalg.fro(lhs - rhs))

        fd = (cm.act(g, cm.exp(TAG_H, eps * Y1))
              - cm.act(g, cm.exp(TAG_H, -eps * Y1))) / (2 * eps)
        rep.push_g_consistency = max(
            rep.push_g_consistency, linalg.fro(fd - cm.act_push_g(g, Y1)))

    for z in cm.ker_t_group_samples(rng, max(4, n_samples // 25)):
        rep.kernel_central = max(
            rep.kernel_central,
            linalg.fro(cm.t(z) - cm.identity(TAG_G)))
        for _ in range(8):
            h2 = cm.random_group(rng, TAG_H)
            rep.kernel_central = max(
                rep.kernel_central,
                linalg.fro(z @ h2 @ np.linalg.inv(z) - h2))
    return rep


def corrupt_target(cm, offset_scale=0.3):
    """Negative control: an instance whose t is composed with a fixed offset."""
    rng = np.random.default_rng(12345)
    bad = rng.uniform(-offset_scale, offset_scale, size=max(cm.dim(TAG_LG), 1))

    class Corrupted(type(cm)):
        name = cm.name + "_corrupt_t"

        def t(self, h):
            off = self.exp(TAG_G, self.from_coords(TAG_LG, bad))
            return off @ super().t(h)

    return Corrupted()
