"""Output-feedback regression: from measured ``(u, y)`` to ``Y = Delta * theta``.

Here ``theta = [k4, k1, k2, k3]`` are the gains of the controller
``u = k1^T v1 + k2^T v2 + k3 y + k4 r``.  The plant is only known through
its orders ``(n, m)``.  The chain:

* Kreisselmeier filters give a static regression of the output on the plant
  coefficients ``[-a; B_o; x0]``;
* an integral extension filter turns it into a square matrix regression,
  mixed by the adjugate into ``z = phi * [-a; B_o; x0]``;
* the model-matching polynomial identity, multiplied by ``phi``, is linear in
  ``(phi, phi a, phi b)`` and so becomes ``M theta = N`` with measurable
  ``M`` and ``N``; one more mixing step gives ``Y = adj(M) N``,
  ``Delta = det(M)``.

Polynomials are stored with ascending coefficients, as ``numpy.polynomial``
does.  Vectors of plant coefficients (``a``, ``b``, ``psi``) follow the
canonical-form convention instead: descending powers, leading one dropped.
"""

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numba import njit
from numpy.polynomial import polynomial as P
from scipy.linalg import expm

from .filters import extension_update, kreisselmeier_update
from .numerics import (DimensionError, NumericOverflowError, adjugate_kernel, det_kernel,
                       hadamard_ratio, is_hurwitz)
from .regression import RegressionPair

# the extension matrix is graded over dozens of decades right after onset;
# below this Hadamard ratio its solve loses more than six digits
DEFAULT_MIX_TOL = 1e-10


class ConfigurationError(ValueError):
    pass


class Polynomial:
    """Real polynomial with ascending coefficients ``c[0] + c[1] p + ...``."""

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c = P.polytrim(c, 0.0) if np.any(c) else np.zeros(1)
        self.coeffs = c

    @classmethod
    def from_descending(cls, coeffs):
        return cls(np.asarray(coeffs, dtype=float)[::-1])

    @classmethod
    def monic_from_tail(cls, tail):
        """``p^k + tail[0] p^{k-1} + ... + tail[-1]``."""
        return cls.from_descending(np.concatenate([[1.0], np.asarray(tail, dtype=float).ravel()]))

    @classmethod
    def from_roots(cls, roots):
        return cls(np.real_if_close(P.polyfromroots(roots)).real)

    @property
    def degree(self):
        return self.coeffs.size - 1

    @property
    def is_monic(self):
        return self.coeffs[-1] == 1.0

    def tail(self):
        """Descending coefficients below the leading one, divided by it."""
        return (self.coeffs[::-1] / self.coeffs[-1])[1:]

    def roots(self):
        return P.polyroots(self.coeffs) if self.degree > 0 else np.zeros(0)

    def is_hurwitz(self):
        return bool(np.all(self.roots().real < 0))

    def __mul__(self, other):
        other = other.coeffs if isinstance(other, Polynomial) else np.atleast_1d(other)
        return Polynomial(P.polymul(self.coeffs, other))

    __rmul__ = __mul__

    def __call__(self, s):
        return P.polyval(s, self.coeffs)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def observable_canonical(tail):
    """Matrix ``[-tail | [I; 0]]`` whose characteristic polynomial is ``p^n + tail . p^{n-1..0}``."""
    tail = np.asarray(tail, dtype=float).ravel()
    n = tail.size
    a = np.zeros((n, n))
    a[:, 0] = -tail
    a[: n - 1, 1:] = np.eye(n - 1)
    return a


def controllable_companion(poly):
    """Companion of monic ``poly`` with ``(pI - L)^{-1} e_last = [1, p, ...]^T / poly``."""
    c = poly.coeffs
    k = poly.degree
    lam = np.zeros((k, k))
    if k > 0:
        lam[: k - 1, 1:] = np.eye(k - 1)
        lam[k - 1, :] = -c[:k]
    h = np.zeros(k)
    if k > 0:
        h[-1] = 1.0
    return lam, h


def build_transform_matrices(psi_c):
    """Numerator coefficient matrices of ``(sI - psi_c)^{-1} e_i``.

    ``adj(sI - psi_c) = sum_k B_k s^{n-1-k}`` with the Faddeev-LeVerrier
    recursion ``B_0 = I``, ``B_k = psi_c B_{k-1} + d_k I``, where ``d_k`` are
    the characteristic coefficients ``d_k = -tr(psi_c B_{k-1}) / k``.  Column ``k`` of ``T_i`` is ``B_k e_i``.
    """
    psi_c = np.atleast_2d(np.asarray(psi_c, dtype=float))
    n = psi_c.shape[0]
    if psi_c.shape != (n, n):
        raise DimensionError("psi_c must be square")
    bs = [np.eye(n)]
    for k in range(1, n):
        ab = psi_c @ bs[-1]
        d_k = -np.trace(ab) / k
        bs.append(ab + d_k * np.eye(n))
    return [np.column_stack([b[:, i] for b in bs]) for i in range(n)]


def matching_basis(n, m, b_ref, r_ref, lambda0, lam):
    """Tensors ``Mb``, ``Nb`` with ``M = sum_k q_k Mb[k]``, ``N = sum_k q_k Nb[k]``.

    ``q = [phi, z_a (n), z_b (m+1)]`` where ``z_a = phi a`` and
    ``z_b = phi b``.  Row ``r`` of ``M`` holds the coefficient of
    ``p^{2n-1-r}``.
    """
    nq = 1 + n + m + 1
    size = 2 * n
    mb = np.zeros((nq, size, size))
    nb = np.zeros((nq, size))

    def put(col_poly, out):
        c = np.asarray(col_poly, dtype=float)
        if c.size > size and np.any(c[size:]):
            raise ConfigurationError("matching polynomial exceeds degree 2n-1")
        v = np.zeros(size)
        v[: min(c.size, size)] = c[:size]
        out[:] = v[::-1]

    for k in range(nq):
        q = np.zeros(nq)
        q[k] = 1.0
        phi, za, zb = q[0], q[1:n + 1], q[n + 1:]
        phi_r = np.concatenate([za[::-1], [phi]])   # phi * R(p), ascending
        phi_bz = zb[::-1]                           # phi * b_m Z(p), ascending
        cols = [P.polymul(P.polymul(lambda0.coeffs, r_ref.coeffs), phi_bz)]
        cols += [b_ref * P.polymul(np.eye(j + 1)[j], phi_r) for j in range(n - 1)]
        cols += [b_ref * P.polymul(np.eye(j + 1)[j], phi_bz) for j in range(n - 1)]
        cols += [b_ref * P.polymul(lam.coeffs, phi_bz)]
        for j, c in enumerate(cols):
            put(c, mb[k][:, j])
        put(b_ref * P.polymul(lam.coeffs, phi_r), nb[k])
    return mb, nb


@dataclass(frozen=True, eq=False)
class OfConfig:
    """Known structure of the output-feedback problem.

    ``n``, ``m``: plant denominator and numerator degrees.  The reference
    model is ``b_ref Z_ref / R_ref`` (both monic).  ``psi`` sets the
    Kreisselmeier filter poles, ``l`` the extension filter constant.
    """

    n: int
    m: int
    b_ref: float
    z_ref: Polynomial
    r_ref: Polynomial
    psi: np.ndarray
    lambda0: Polynomial = None
    l: float = 0.1
    regressor: str = "reduced"
    free_response: str = "euler"
    mix_tol: float = DEFAULT_MIX_TOL
    mix_every: int = 1

    def __post_init__(self):
        errors = []
        if self.regressor not in ("reduced", "full"):
            errors.append("regressor must be 'reduced' or 'full'")
        if self.free_response not in ("euler", "exact"):
            errors.append("free_response must be 'euler' or 'exact'")
        n, m = int(self.n), int(self.m)
        if n < 1 or m < 0 or m >= n:
            raise ConfigurationError("need n >= 1 and 0 <= m < n")
        z_ref, r_ref = self.z_ref, self.r_ref
        if not isinstance(z_ref, Polynomial):
            z_ref = Polynomial(z_ref)
        if not isinstance(r_ref, Polynomial):
            r_ref = Polynomial(r_ref)
        if not (z_ref.is_monic and r_ref.is_monic):
            errors.append("Z_ref and R_ref must be monic")
        if r_ref.degree - z_ref.degree != n - m:
            errors.append("reference relative degree must equal the plant's n - m")
        if not r_ref.is_hurwitz():
            errors.append("R_ref not Hurwitz")
        if z_ref.degree > 0 and not z_ref.is_hurwitz():
            errors.append("Z_ref not Hurwitz")
        if self.b_ref == 0:
            errors.append("b_ref must be nonzero")
        lambda0 = self.lambda0
        k0 = n - 1 - z_ref.degree
        if lambda0 is None:
            if k0 < 0:
                errors.append("Z_ref degree exceeds n - 1")
                k0 = 0
            lambda0 = Polynomial.from_roots(-np.ones(k0))
        elif not isinstance(lambda0, Polynomial):
            lambda0 = Polynomial(lambda0)
        lam = lambda0 * z_ref
        if lam.degree != n - 1 or not lam.is_monic:
            errors.append("Lambda = Lambda0 * Z_ref must be monic of degree n - 1")
        elif lam.degree > 0 and not lam.is_hurwitz():
            errors.append("Lambda not Hurwitz")
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float)).ravel()
        if psi.size != n:
            errors.append(f"psi must have n = {n} entries")
        elif not is_hurwitz(observable_canonical(psi)):
            errors.append("psi_c not Hurwitz")
        if not self.l > 0:
            errors.append("extension filter constant l must be positive")
        if errors:
            raise ConfigurationError("; ".join(errors))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "b_ref", float(self.b_ref))
        object.__setattr__(self, "z_ref", z_ref)
        object.__setattr__(self, "r_ref", r_ref)
        object.__setattr__(self, "lambda0", lambda0)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "mix_every", int(self.mix_every))
        mb, nb = matching_basis(n, m, self.b_ref, r_ref, lambda0, lam)
        lam_c, h = controllable_companion(lam)
        psi_c = observable_canonical(psi)
        ts = build_transform_matrices(psi_c)
        _assert_pairing(tuple(psi))
        # the first n - m - 1 entries of B_o are structurally zero; the
        # reduced regressor leaves their columns out
        u0 = n - m - 1 if self.regressor == "reduced" else 0
        object.__setattr__(self, "_derived", {
            "u0": u0, "dim": 3 * n - u0, "zb_offset": 2 * n - m - 1 - u0,
            "lam": lam, "lam_c": lam_c, "h": h, "psi_c": psi_c, "T": ts,
            "t_rows": np.ascontiguousarray(np.array([t[0] for t in ts])),
            "mb": mb, "nb": nb,
        })

    lam = property(lambda self: self._derived["lam"])
    lambda_companion = property(lambda self: self._derived["lam_c"])
    h = property(lambda self: self._derived["h"])
    psi_c = property(lambda self: self._derived["psi_c"])
    T = property(lambda self: self._derived["T"])
    t_rows = property(lambda self: self._derived["t_rows"])
    matching_tensors = property(lambda self: (self._derived["mb"], self._derived["nb"]))
    u0 = property(lambda self: self._derived["u0"])
    dim = property(lambda self: self._derived["dim"])
    zb_offset = property(lambda self: self._derived["zb_offset"])

    @property
    def rho(self):
        return self.n - self.m

    def fresh_exp_step(self, dt):
        """One-step propagator of the free-response row ``C^T exp(psi_c t)``.

        ``"euler"`` gives ``I + psi_c dt``, the rule used for the
        Kreisselmeier filters, so that the static regression is exact at
        every sample for any initial state; ``"exact"`` gives
        ``expm(psi_c dt)``.
        """
        if self.free_response == "euler":
            return np.eye(self.n) + self.psi_c * dt
        return _exp_step(tuple(self.psi_c.ravel()), self.n, float(dt))


@lru_cache(maxsize=64)
def _assert_pairing(psi):
    good, swapped = regressor_pairing_residuals(psi, n_steps=2000)
    if not (good < 1e-8 and good < swapped):
        raise ConfigurationError(
            f"Kreisselmeier regressor pairing check failed (residuals {good:.2e}, {swapped:.2e})")


@lru_cache(maxsize=64)
def _exp_step(flat, n, dt):
    return expm(np.array(flat).reshape(n, n) * dt)


def matching_system(cfg, phi, z_a, z_b):
    """``M`` and ``N`` for given ``(phi, phi a, phi b)``."""
    mb, nb = cfg.matching_tensors
    q = np.concatenate([[phi], np.ravel(z_a), np.ravel(z_b)])
    if q.size != mb.shape[0]:
        raise DimensionError("z_a must have n entries and z_b m + 1")
    return np.tensordot(q, mb, axes=1), q @ nb


# ----------------------------------------------------------------------------
# kernels


@njit(cache=True)
def of_regress(y, eta_u, eta_y, g, t_rows, u0, psi, phibar):
    """Fills ``phibar`` (``3n - u0`` entries) and returns ``zbar``.

    The first ``n`` regressor entries filter ``y`` and carry the unknowns
    ``psi - a``; the next ``n - u0`` filter ``u`` and carry ``B_o[u0:]``;
    the last ``n`` are the free response ``C^T exp(psi_c t)`` carrying ``x0``.
    """
    n = eta_u.shape[0]
    nu = n - u0
    zbar = y
    for i in range(n):
        sy = 0.0
        for k in range(n):
            sy += t_rows[i, k] * eta_y[k]
        phibar[i] = sy
        phibar[n + nu + i] = g[i]
        zbar -= psi[i] * sy
    for i in range(nu):
        su = 0.0
        for k in range(n):
            su += t_rows[u0 + i, k] * eta_u[k]
        phibar[n + i] = su
    return zbar


@njit(cache=True)
def of_advance(u, y, zbar, phibar, psi_c, exp_step, l, eta_u, eta_y, g, zf, pf, dt):
    kreisselmeier_update(eta_u, eta_y, psi_c, u, y, dt)
    g[:] = g @ exp_step
    extension_update(zf, pf, zbar, phibar, l, dt)


@njit(cache=True)
def of_mix_kernel(zf, pf, mix_tol, z):
    """``z = adj(pf) zf``; returns ``det(pf)``, or zero while pf is numerically singular."""
    if hadamard_ratio(pf) <= mix_tol:
        z[:] = 0.0
        return 0.0
    # adj(pf) zf = det(pf) pf^{-1} zf; an LU solve is the better-conditioned route
    d = det_kernel(pf)
    z[:] = d * np.linalg.solve(pf, zf)
    return d


@njit(cache=True)
def of_match_kernel(phi, z, n, m, zb_offset, mb, nb, mmat, nvec, y):
    """Builds ``M``, ``N`` from ``(phi, z_a, z_b)``; fills ``Y``; returns ``Delta``."""
    nq = mb.shape[0]
    q = np.empty(nq)
    q[0] = phi
    for i in range(n):
        q[1 + i] = -z[i]
    for i in range(m + 1):
        q[1 + n + i] = z[zb_offset + i]
    mmat[:, :] = 0.0
    nvec[:] = 0.0
    for k in range(nq):
        if q[k] != 0.0:
            mmat += q[k] * mb[k]
            nvec += q[k] * nb[k]
    y[:] = adjugate_kernel(mmat) @ nvec
    return det_kernel(mmat)


# ----------------------------------------------------------------------------
# value-level interface


@dataclass
class OfPipelineState:
    eta_u: np.ndarray
    eta_y: np.ndarray
    g: np.ndarray
    zf: np.ndarray
    pf: np.ndarray
    zbar: float
    phibar: np.ndarray
    z: np.ndarray
    phi: float
    M: np.ndarray
    N: np.ndarray
    Y: np.ndarray
    Delta: float = 0.0
    t: float = 0.0

    @classmethod
    def zeros(cls, n, dim=None):
        dim = 3 * n if dim is None else dim
        g = np.zeros(n)
        g[0] = 1.0
        return cls(np.zeros(n), np.zeros(n), g, np.zeros(dim), np.zeros((dim, dim)),
                   0.0, np.zeros(dim), np.zeros(dim), 0.0,
                   np.zeros((2 * n, 2 * n)), np.zeros(2 * n), np.zeros(2 * n))

    def copy(self):
        return replace(self, **{k: (v.copy() if isinstance(v, np.ndarray) else v)
                                for k, v in self.__dict__.items()})

    @property
    def n(self):
        return self.eta_u.size

    def Phi(self, cfg):
        """Full ``n x 2n`` Kreisselmeier regressor ``[T_i eta_y | T_i eta_u]``."""
        return np.column_stack([t @ self.eta_y for t in cfg.T] + [t @ self.eta_u for t in cfg.T])

    @property
    def z_a(self):
        return -self.z[: self.n]

    def z_b(self, cfg):
        return self.z[cfg.zb_offset: cfg.zb_offset + cfg.m + 1].copy()


def of_regress_step(s, cfg, u, y, t, dt):
    """Form ``(zbar, phibar)`` at the current sample and advance all filters."""
    s = s.copy()
    s.zbar = float(of_regress(float(y), s.eta_u, s.eta_y, s.g, cfg.t_rows, cfg.u0, cfg.psi,
                              s.phibar))
    s.t = float(t)
    of_advance(float(u), float(y), s.zbar, s.phibar, cfg.psi_c, cfg.fresh_exp_step(dt), cfg.l,
               s.eta_u, s.eta_y, s.g, s.zf, s.pf, dt)
    for name in ("eta_u", "eta_y", "zf", "pf"):
        if not np.all(np.isfinite(getattr(s, name))):
            raise NumericOverflowError(f"pipeline state '{name}' is not finite", t=t)
    return s


def of_mix(s, cfg=None):
    s = s.copy()
    tol = DEFAULT_MIX_TOL if cfg is None else cfg.mix_tol
    s.phi = float(of_mix_kernel(s.zf, s.pf, tol, s.z))
    return s


def of_match(s, cfg):
    s = s.copy()
    mb, nb = cfg.matching_tensors
    s.Delta = float(of_match_kernel(s.phi, s.z, cfg.n, cfg.m, cfg.zb_offset, mb, nb,
                                    s.M, s.N, s.Y))
    return RegressionPair(s.Y.copy(), s.Delta), s


class OfPipeline:
    def __init__(self, cfg):
        self.cfg = cfg
        self.state = OfPipelineState.zeros(cfg.n, cfg.dim)

    def update(self, u, y, t, dt):
        # mix the extension filter as it stands at this sample, then advance it
        mixed = of_mix(self.state, self.cfg)
        self.state = of_regress_step(mixed, self.cfg, u, y, t, dt)
        pair, self.state = of_match(self.state, self.cfg)
        return pair


def regressor_pairing_residuals(psi, n_steps=4000, dt=1e-3):
    """Static-regression residual for both ways of pairing filter channels with unknowns.

    Drives a known stable plant of order ``n`` (random coefficients from a
    fixed seed) with a multisine and returns ``(residual_y_first,
    residual_u_first)``: the largest ``|zbar - theta^T phibar|`` when the
    ``psi``-carrying block is built from the output filter, and when it is
    built from the input filter.  Only the first should vanish.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    n = psi.size
    rng = np.random.default_rng(12345)
    a = observable_canonical(psi)[:, 0] * -1.0 + rng.uniform(-0.5, 0.5, n)
    a_o = observable_canonical(a)
    b_o = rng.uniform(0.5, 1.5, n)
    x0 = np.zeros(n)
    psi_c = observable_canonical(psi)
    t_rows = np.array([t[0] for t in build_transform_matrices(psi_c)])
    e = expm(psi_c * dt)
    out = []
    for swap in (False, True):
        x = x0.copy()
        eu, ey, g = np.zeros(n), np.zeros(n), np.eye(n)[0]
        theta = np.concatenate([-a, b_o, x0])
        worst = 0.0
        for k in range(n_steps):
            t = k * dt
            u = np.sin(t) + np.sin(3.1 * t) + 0.5
            y = x[0]
            first, second = (eu, ey) if swap else (ey, eu)
            phibar = np.concatenate([t_rows @ first, t_rows @ second, g])
            zbar = y - psi @ phibar[:n]
            worst = max(worst, abs(zbar - theta @ phibar) / (1 + np.abs(phibar).max()))
            eu = eu + dt * (psi_c.T @ eu + np.eye(n)[0] * u)
            ey = ey + dt * (psi_c.T @ ey + np.eye(n)[0] * y)
            g = g @ e
            x = x + dt * (a_o @ x + b_o * u)
        out.append(worst)
    return tuple(out)
