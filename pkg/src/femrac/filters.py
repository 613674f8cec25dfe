"""Continuous-time filter primitives advanced by one explicit Euler step.

Each filter has a small state dataclass and a ``*_step`` function that
returns the next state without touching the old one.  The arithmetic lives
in in-place numba kernels (``*_update``) so that the compiled run loops in
:mod:`femrac.simulation` share exactly the same update rules.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .numerics import DimensionError, is_hurwitz


# ----------------------------------------------------------------------------
# kernels (in place)


@njit(cache=True)
def first_order_update(value, inp, l, dt):
    for i in range(value.shape[0]):
        value[i] += dt * (-l * value[i] + inp[i])


@njit(cache=True)
def bank_update(states, alphas, betas, inp, dt):
    """``states[i]`` is tap ``i`` filtering the flattened vector ``inp``."""
    for i in range(states.shape[0]):
        a = alphas[i]
        b = betas[i]
        for j in range(states.shape[1]):
            states[i, j] += dt * (-b * states[i, j] + a * inp[j])


@njit(cache=True)
def forgetting_weight(beta):
    return np.exp(-beta)


@njit(cache=True)
def extension_update(zf, phif, zbar, phibar, l, dt):
    """Filtered outer products: ``zf' = -l zf + zbar phibar``, same for phif."""
    n = phibar.shape[0]
    for i in range(n):
        zf[i] += dt * (-l * zf[i] + zbar * phibar[i])
        for j in range(n):
            phif[i, j] += dt * (-l * phif[i, j] + phibar[i] * phibar[j])


@njit(cache=True)
def kreisselmeier_update(eta_u, eta_y, psi_c, u, y, dt):
    """``eta' = psi_c^T eta + e_1 * input`` for the u and y channels."""
    n = eta_u.shape[0]
    du = np.empty(n)
    dy = np.empty(n)
    for i in range(n):
        su = 0.0
        sy = 0.0
        for k in range(n):
            su += psi_c[k, i] * eta_u[k]
            sy += psi_c[k, i] * eta_y[k]
        du[i] = su
        dy[i] = sy
    du[0] += u
    dy[0] += y
    for i in range(n):
        eta_u[i] += dt * du[i]
        eta_y[i] += dt * dy[i]


# ----------------------------------------------------------------------------
# value-type states


def _vec(x, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionError(f"{name} must be a vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


@dataclass(frozen=True)
class FirstOrderFilterState:
    """Filter ``1/(p + l)`` applied to each entry of a vector signal."""

    l: float
    value: np.ndarray

    @classmethod
    def zeros(cls, l, dim):
        if not l > 0:
            raise ValueError("filter constant l must be positive")
        return cls(float(l), np.zeros(int(dim)))


def first_order_step(f, inp, dt):
    inp = _vec(inp, "input")
    if inp.shape != f.value.shape:
        raise DimensionError(f"input has dim {inp.size}, filter has {f.value.size}")
    value = f.value.copy()
    first_order_update(value, inp, f.l, dt)
    return replace(f, value=value)


@dataclass(frozen=True)
class FilterBankState:
    """Parallel taps ``alpha_i / (p + beta_i)`` over one common input."""

    alphas: np.ndarray
    betas: np.ndarray
    states: np.ndarray  # (n_taps, input size)

    def __post_init__(self):
        for name in ("alphas", "betas", "states"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def zeros(cls, alphas, betas, dim):
        alphas = _vec(alphas, "alphas")
        betas = _vec(betas, "betas")
        if alphas.size == 0 or alphas.shape != betas.shape:
            raise DimensionError("need one beta per alpha and at least one tap")
        if np.any(alphas <= 0) or np.any(betas <= 0):
            raise ValueError("bank gains and poles must be positive")
        if np.unique(alphas).size != alphas.size:
            raise ValueError("bank gains alpha must be pairwise distinct")
        return cls(alphas, betas, np.zeros((alphas.size, int(dim))))

    @property
    def outputs(self):
        return self.states


def bank_step(b, inp, dt):
    inp = _vec(inp, "input")
    if inp.size != b.states.shape[1]:
        raise DimensionError(f"input has dim {inp.size}, bank expects {b.states.shape[1]}")
    states = b.states.copy()
    bank_update(states, b.alphas, b.betas, inp, dt)
    return replace(b, states=states)


@dataclass(frozen=True)
class ForgettingFilterState:
    """Running ``out(t) = int_0^t exp(-sigma tau) input(tau) dtau``.

    The weight is kept as the phase ``beta`` (``beta' = sigma``) rather than
    as ``exp(+beta)``, so nothing grows without bound.
    """

    sigma: float
    beta: float = 0.0
    out: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def zeros(cls, sigma, dim=1):
        if not sigma > 0:
            raise ValueError("forgetting rate sigma must be positive")
        return cls(float(sigma), 0.0, np.zeros(int(dim)))


def forgetting_step(f, inp, dt):
    inp = _vec(inp, "input")
    if inp.shape != f.out.shape:
        raise DimensionError(f"input has dim {inp.size}, filter has {f.out.size}")
    # left-endpoint rule: weight at the current phase, then advance the phase
    out = f.out + dt * np.exp(-f.beta) * inp
    return replace(f, beta=f.beta + dt * f.sigma, out=out)


def forgetting_response(samples, sigma, dt):
    """The forgetting filter run over a whole sampled input at once.

    Returns ``out`` with ``out[k]`` the filter output at sample ``k``, using
    the same left-endpoint rule as :func:`forgetting_step`.
    """
    x = np.asarray(samples, dtype=float)
    k = np.arange(x.shape[0], dtype=float)
    w = np.exp(-sigma * dt * k)
    inc = dt * (w.reshape((-1,) + (1,) * (x.ndim - 1)) * x)
    out = np.zeros_like(inc)
    np.cumsum(inc[:-1], axis=0, out=out[1:])
    return out


@dataclass(frozen=True)
class ExtensionFilterState:
    l: float
    zf: np.ndarray
    phif: np.ndarray

    @classmethod
    def zeros(cls, l, dim):
        if not l > 0:
            raise ValueError("filter constant l must be positive")
        return cls(float(l), np.zeros(int(dim)), np.zeros((int(dim), int(dim))))


def extension_step(e, zbar, phibar, dt):
    phibar = _vec(phibar, "phibar")
    if phibar.size != e.zf.size:
        raise DimensionError(f"phibar has dim {phibar.size}, extension filter has {e.zf.size}")
    zf = e.zf.copy()
    phif = e.phif.copy()
    extension_update(zf, phif, float(zbar), phibar, e.l, dt)
    return replace(e, zf=zf, phif=phif)


@dataclass(frozen=True)
class KreisselmeierState:
    psi_c: np.ndarray
    eta_u: np.ndarray
    eta_y: np.ndarray

    @classmethod
    def zeros(cls, psi_c):
        psi_c = np.ascontiguousarray(np.atleast_2d(np.asarray(psi_c, dtype=float)))
        if psi_c.shape[0] != psi_c.shape[1]:
            raise DimensionError("psi_c must be square")
        if not is_hurwitz(psi_c):
            raise ValueError("psi_c is not Hurwitz")
        n = psi_c.shape[0]
        return cls(psi_c, np.zeros(n), np.zeros(n))

    # names used in the literature for the two channels
    @property
    def eta_f1(self):
        return self.eta_u

    @property
    def eta_f2(self):
        return self.eta_y


def kreisselmeier_step(k, u, y, c, dt):
    c = _vec(c, "c")
    n = k.eta_u.size
    if c.size != n or c[0] != 1.0 or np.any(c[1:] != 0.0):
        raise ValueError("c must be the canonical output vector [1, 0, ..., 0]")
    eta_u = k.eta_u.copy()
    eta_y = k.eta_y.copy()
    kreisselmeier_update(eta_u, eta_y, k.psi_c, float(u), float(y), dt)
    return replace(k, eta_u=eta_u, eta_y=eta_y)


@njit(cache=True)
def extension_update_matrix(zf, phif, zbar, phibar, l, dt):
    """Vector-output variant: ``zf' = -l zf + phibar zbar^T`` with zf of shape (q, n)."""
    q = phibar.shape[0]
    for i in range(q):
        for j in range(zbar.shape[0]):
            zf[i, j] += dt * (-l * zf[i, j] + phibar[i] * zbar[j])
        for j in range(q):
            phif[i, j] += dt * (-l * phif[i, j] + phibar[i] * phibar[j])
