"""Dense linear-algebra helpers: norms, projections, matrix exp/log, CF4 stepping.

Everything here operates on plain ndarrays.  Batched variants take a stack of
shape (n, d, d) and are used by the transport integrators to keep the Python
loop out of the field-evaluation hot path.
"""

import numpy as np
import scipy.linalg

SQRT3 = np.sqrt(3.0)

# Commutator-free 4th-order coefficients for the two-point Gauss nodes.
CF4_C1 = 0.5 - SQRT3 / 6.0
CF4_C2 = 0.5 + SQRT3 / 6.0
CF4_ALPHA = 0.25 + SQRT3 / 6.0
CF4_BETA = 0.25 - SQRT3 / 6.0

# Re-project onto the group manifold after this many accumulated factors.
PROJECT_EVERY = 64


def fro(m):
    """Frobenius norm as a float."""
    return float(np.linalg.norm(m))


def rel_fro(a, b, floor=1e-8):
    """Relative Frobenius distance with a degenerate-denominator guard."""
    return fro(np.asarray(a) - np.asarray(b)) / max(fro(b), floor)


def identity_like(size, dtype=float):
    return np.eye(size, dtype=dtype)


def polar_unitary(m):
    """Nearest unitary (or orthogonal) matrix in the polar sense."""
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def polar_special_orthogonal(m):
    """Nearest rotation: polar projection with a determinant guard."""
    u, _, vh = np.linalg.svd(m)
    q = u @ vh
    if np.linalg.det(q) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        q = u @ vh
    return q


def polar_special_unitary(m):
    """Nearest special-unitary matrix (det renormalized along the principal branch)."""
    q = polar_unitary(m)
    d = np.linalg.det(q)
    return q * np.exp(-1j * np.angle(d) / q.shape[0])


def expm(m):
    """Matrix exponential (scipy Pade; used where no closed form applies)."""
    return scipy.linalg.expm(m)


def logm(m):
    """Principal matrix logarithm via scipy, discarding spurious imaginary dust."""
    out = scipy.linalg.logm(m)
    if np.isrealobj(m):
        out = np.real(out)
    return out


def expm_batch(stack):
    """scipy expm applied along the first axis (generic fallback)."""
    return np.stack([scipy.linalg.expm(a) for a in stack])


def gauss_legendre(npoints):
    """Nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


def composite_gauss_nodes(n_intervals, npoints, a=0.0, b=1.0):
    """Composite Gauss-Legendre nodes and weights over [a, b]."""
    x, w = gauss_legendre(npoints)
    h = (b - a) / n_intervals
    starts = a + h * np.arange(n_intervals)
    nodes = (starts[:, None] + h * x[None, :]).ravel()
    weights = np.tile(h * w, n_intervals)
    return nodes, weights


def cf4_exponents(L1, L2, h):
    """The two exponents of one CF4 step given the stage values at the Gauss nodes.

    For a right equation U' = L(t) U the step is
        U <- exp(h*(beta*L1 + alpha*L2)) @ exp(h*(alpha*L1 + beta*L2)) @ U
    and for a left equation W' = W K(t)
        W <- W @ exp(h*(alpha*K1 + beta*K2)) @ exp(h*(beta*K1 + alpha*K2)).
    Returns (first_applied, second_applied) in application order.
    """
    e_first = h * (CF4_ALPHA * L1 + CF4_BETA * L2)
    e_second = h * (CF4_BETA * L1 + CF4_ALPHA * L2)
    return e_first, e_second


def chain_right(exps_first, exps_second, exp_batch, project=None, u0=None):
    """Accumulate U' = L U transports from batched CF4 exponent stacks.

    exps_first/exps_second: (n_seg, d, d) exponents per segment in application
    order.  Returns an (n_seg + 1, d, d) array of transports at the segment
    boundaries, starting from u0 (default identity).
    """
    e1 = exp_batch(exps_first)
    e2 = exp_batch(exps_second)
    n, d = e1.shape[0], e1.shape[1]
    out = np.empty((n + 1, d, d), dtype=e1.dtype)
    u = np.eye(d, dtype=e1.dtype) if u0 is None else u0.astype(e1.dtype)
    out[0] = u
    for k in range(n):
        u = e2[k] @ (e1[k] @ u)
        if project is not None and (k + 1) % PROJECT_EVERY == 0:
            u = project(u)
        out[k + 1] = u
    if project is not None:
        out[n] = project(out[n])
    return out


def chain_left(exps_first, exps_second, exp_batch, project=None, w0=None):
    """Accumulate W' = W K transports; mirror image of chain_right."""
    e1 = exp_batch(exps_first)
    e2 = exp_batch(exps_second)
    n, d = e1.shape[0], e1.shape[1]
    out = np.empty((n + 1, d, d), dtype=e1.dtype)
    w = np.eye(d, dtype=e1.dtype) if w0 is None else w0.astype(e1.dtype)
    out[0] = w
    for k in range(n):
        w = (w @ e1[k]) @ e2[k]
        if project is not None and (k + 1) % PROJECT_EVERY == 0:
            w = project(w)
        out[k + 1] = w
    if project is not None:
        out[n] = project(out[n])
    return out


def segment_gauss_params(params):
    """CF4 stage abscissae for marching through consecutive params.

    Returns (taus, h) where taus has shape (n_seg, 2).
    """
    p = np.asarray(params, dtype=float)
    h = np.diff(p)
    t1 = p[:-1] + CF4_C1 * h
    t2 = p[:-1] + CF4_C2 * h
    return np.stack([t1, t2], axis=1), h
