"""Small dense linear algebra and the fixed-step Euler integrator.

Everything here works on plain ``numpy`` arrays.  The determinant and
adjugate kernels are compiled with numba because the closed-loop run loops
call them at every integration step.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_DT = 1e-4


class DimensionError(ValueError):
    pass


class NumericOverflowError(FloatingPointError):
    """Raised when an integration step produces a non-finite value.

    ``t`` is the simulated time of the offending step; ``partial`` optionally
    carries whatever the caller had recorded up to that point.
    """

    def __init__(self, message, t=float("nan"), partial=None):
        super().__init__(f"{message} (t = {t:.6g} s)")
        self.t = t
        self.partial = partial


class LyapunovError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = DEFAULT_DT
    t_end: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be strictly positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.t_end > 0 and self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


# ----------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _det_small(m):
    n = m.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return m[0, 0]
    if n == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if n == 3:
        return (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
                - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
                + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    # n == 4: Laplace expansion along the first row with 2x2 minors shared
    s0 = m[2, 0] * m[3, 1] - m[2, 1] * m[3, 0]
    s1 = m[2, 0] * m[3, 2] - m[2, 2] * m[3, 0]
    s2 = m[2, 0] * m[3, 3] - m[2, 3] * m[3, 0]
    s3 = m[2, 1] * m[3, 2] - m[2, 2] * m[3, 1]
    s4 = m[2, 1] * m[3, 3] - m[2, 3] * m[3, 1]
    s5 = m[2, 2] * m[3, 3] - m[2, 3] * m[3, 2]
    c0 = m[1, 1] * s5 - m[1, 2] * s4 + m[1, 3] * s3
    c1 = m[1, 0] * s5 - m[1, 2] * s2 + m[1, 3] * s1
    c2 = m[1, 0] * s4 - m[1, 1] * s2 + m[1, 3] * s0
    c3 = m[1, 0] * s3 - m[1, 1] * s1 + m[1, 2] * s0
    return m[0, 0] * c0 - m[0, 1] * c1 + m[0, 2] * c2 - m[0, 3] * c3


@njit(cache=True)
def _lu_inplace(a, perm):
    """Doolittle LU with partial pivoting; returns the permutation sign."""
    n = a.shape[0]
    sign = 1.0
    for i in range(n):
        perm[i] = i
    for k in range(n):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > best:
                best = abs(a[i, k])
                p = i
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            tp = perm[k]
            perm[k] = perm[p]
            perm[p] = tp
            sign = -sign
        if a[k, k] == 0.0:
            continue
        for i in range(k + 1, n):
            a[i, k] /= a[k, k]
            f = a[i, k]
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
    return sign


@njit(cache=True)
def _det_lu(m):
    n = m.shape[0]
    a = m.copy()
    perm = np.empty(n, dtype=np.int64)
    d = _lu_inplace(a, perm)
    for i in range(n):
        d *= a[i, i]
    return d


@njit(cache=True)
def det_kernel(m):
    if m.shape[0] <= 4:
        return _det_small(m)
    return _det_lu(m)


@njit(cache=True)
def _minor(m, row, col):
    n = m.shape[0]
    out = np.empty((n - 1, n - 1))
    ii = 0
    for i in range(n):
        if i == row:
            continue
        jj = 0
        for j in range(n):
            if j == col:
                continue
            out[ii, jj] = m[i, j]
            jj += 1
        ii += 1
    return out


@njit(cache=True)
def _adjugate_cofactor(m):
    n = m.shape[0]
    adj = np.empty((n, n))
    if n == 1:
        adj[0, 0] = 1.0
        return adj
    for i in range(n):
        for j in range(n):
            c = det_kernel(_minor(m, i, j))
            if (i + j) % 2 == 1:
                c = -c
            adj[j, i] = c
    return adj


@njit(cache=True)
def adjugate_kernel(m):
    n = m.shape[0]
    if n <= 4:
        return _adjugate_cofactor(m)
    a = m.copy()
    perm = np.empty(n, dtype=np.int64)
    d = _lu_inplace(a, perm)
    for i in range(n):
        d *= a[i, i]
        if a[i, i] == 0.0:
            # exactly singular: inverse does not exist, fall back to cofactors
            return _adjugate_cofactor(m)
    # adj(m) = det(m) * inv(m), inverse from the LU factors column by column
    adj = np.empty((n, n))
    y = np.empty(n)
    for col in range(n):
        for i in range(n):
            s = 1.0 if perm[i] == col else 0.0
            for k in range(i):
                s -= a[i, k] * y[k]
            y[i] = s
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, n):
                s -= a[i, k] * adj[k, col]
            adj[i, col] = s / a[i, i]
    adj *= d
    if d == 0.0 or not np.all(np.isfinite(adj)):
        # det underflowed or the inverse overflowed; cofactors need neither
        return _adjugate_cofactor(m)
    return adj


@njit(cache=True)
def hadamard_ratio(g):
    """det(g) / prod(diag(g)) for a PSD matrix ``g``; lies in [0, 1] exactly.

    Scale-free measure of how far ``g`` is from numerical singularity.  Zero
    when any diagonal entry vanishes.
    """
    d = det_kernel(g)
    p = 1.0
    for i in range(g.shape[0]):
        p *= g[i, i]
    if p <= 0.0:
        return 0.0
    return d / p


# ----------------------------------------------------------------------------
# public surface


def _square(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return np.ascontiguousarray(m)


def det(m):
    """Determinant; cofactor expansion up to 4x4, pivoted LU above."""
    return float(det_kernel(_square(m)))


def adjugate(m):
    """Transpose of the cofactor matrix.

    Defined for singular input as well, ``adjugate(m) @ m == det(m) * I``.
    """
    return adjugate_kernel(_square(m))


def max_eig_outer(w):
    """Largest eigenvalue of ``w w^T``, which is rank one, so ``||w||^2``."""
    w = np.asarray(w, dtype=float).ravel()
    return float(w @ w)


def euler_step(state, deriv, dt, t=float("nan")):
    if not dt > 0:
        raise ValueError("dt must be strictly positive")
    state = np.asarray(state, dtype=float)
    d = np.asarray(deriv(state), dtype=float)
    if d.shape != state.shape:
        raise DimensionError(f"derivative shape {d.shape} != state shape {state.shape}")
    if not np.all(np.isfinite(d)):
        raise NumericOverflowError("non-finite derivative", t=t)
    return state + dt * d


def solve_lyapunov(a_ref, q):
    """Solve ``a_ref P + P a_ref^T = -q`` by vectorisation.

    With row-major ``vec``, ``vec(A P) = (A kron I) vec(P)`` and
    ``vec(P A^T) = (I kron A) vec(P)``.  The result is symmetrised.
    """
    a = _square(a_ref)
    q = _square(q)
    n = a.shape[0]
    if q.shape[0] != n:
        raise DimensionError("a_ref and q must have the same size")
    eye = np.eye(n)
    k = np.kron(a, eye) + np.kron(eye, a)
    try:
        p = np.linalg.solve(k, -q.ravel())
    except np.linalg.LinAlgError as exc:
        raise LyapunovError("Lyapunov system singular: a_ref not Hurwitz or solver failure") from exc
    p = p.reshape(n, n)
    return 0.5 * (p + p.T)


def is_hurwitz(a):
    return bool(np.all(np.linalg.eigvals(np.atleast_2d(np.asarray(a, dtype=float))).real < 0))
