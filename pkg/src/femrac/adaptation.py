"""Adaptive laws, ideal-gain oracles and excitation diagnostics.

The normalized law drives every parameter error with the same scalar gain::

    theta_hat' = -gamma * Omega * (Omega * theta_hat - Upsilon)
    gamma      = 1                                   if Omega == 0
               = (gamma0 * |omega|^2 + gamma1) / Omega^2  otherwise

Because ``Upsilon = Omega * theta`` the error obeys
``theta_tilde' = -gamma Omega^2 theta_tilde``, a scalar contraction, so each
``|theta_tilde_i|`` can only shrink.  Once ``Omega`` is positive the rate is
``gamma0 |omega|^2 + gamma1`` regardless of how small ``Omega`` is.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .numerics import DimensionError, NumericOverflowError, max_eig_outer, solve_lyapunov
from .of_pipeline import ConfigurationError, matching_system

# Omega is an integral of squares and is exactly 0.0 until the first nonzero
# regressor sample arrives; anything representable above zero is real
# excitation (values around 1e-70 occur in practice), so the cut-off only
# excludes subnormals.
DEFAULT_OMEGA_FLOOR = 1e-300


class ErzbergerError(ValueError):
    """The model-matching conditions have no exact solution."""


@njit(cache=True)
def gamma_kernel(omega, w_norm2, gamma0, gamma1, omega_floor):
    if omega <= omega_floor:
        return 1.0
    return (gamma0 * w_norm2 + gamma1) / (omega * omega)


@njit(cache=True)
def adapt_rate(theta, omega, upsilon, w_norm2, gamma0, gamma1, omega_floor, out):
    """Time derivative of ``theta_hat`` under the normalized law, into ``out``.

    Above the floor the algebraically identical form
    ``-(gamma0 |w|^2 + gamma1) (theta_hat - Upsilon / Omega)`` is used; it
    avoids forming ``1 / Omega^2``, which overflows for tiny ``Omega``.
    """
    if omega <= omega_floor:
        for i in range(theta.shape[0]):
            out[i] = -omega * (omega * theta[i] - upsilon[i])
        return
    k = gamma0 * w_norm2 + gamma1
    for i in range(theta.shape[0]):
        out[i] = -k * (theta[i] - upsilon[i] / omega)


def gamma_value(Omega, omega_vec, gamma0=1.0, gamma1=0.0, omega_floor=DEFAULT_OMEGA_FLOOR):
    if Omega < 0:
        raise ValueError("Omega must be non-negative")
    return float(gamma_kernel(float(Omega), max_eig_outer(omega_vec), float(gamma0),
                              float(gamma1), float(omega_floor)))


@dataclass(frozen=True)
class AdaptiveLawState:
    theta_hat: np.ndarray
    gamma0: float = 1.0
    gamma1: float = 0.0
    omega_floor: float = DEFAULT_OMEGA_FLOOR

    def __post_init__(self):
        if self.gamma0 < 1:
            raise ValueError("gamma0 must be >= 1")
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be >= 0")
        if self.omega_floor < 0:
            raise ValueError("omega_floor must be >= 0")
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float).ravel())


def adapt_step(a, reg, omega_vec, dt):
    ups = np.asarray(reg.Upsilon, dtype=float).ravel()
    if ups.shape != a.theta_hat.shape:
        raise DimensionError("Upsilon and theta_hat differ in size")
    rate = np.empty_like(a.theta_hat)
    adapt_rate(a.theta_hat, float(reg.Omega), ups, max_eig_outer(omega_vec),
               a.gamma0, a.gamma1, a.omega_floor, rate)
    new = a.theta_hat + dt * rate
    if not np.all(np.isfinite(new)):
        raise NumericOverflowError("adaptive law produced a non-finite estimate")
    return replace(a, theta_hat=new)


# ----------------------------------------------------------------------------
# baseline gradient laws


@dataclass(frozen=True)
class BaselineLawState:
    Gamma: np.ndarray
    P: np.ndarray
    theta_hat: np.ndarray

    def __post_init__(self):
        for name in ("Gamma", "P"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.allclose(m, m.T) or np.any(np.linalg.eigvalsh(0.5 * (m + m.T)) <= 0):
                raise ValueError(f"{name} must be symmetric positive definite")
            object.__setattr__(self, name, m)
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float).ravel())

    @classmethod
    def for_reference(cls, a_ref, theta0, Gamma=None, Q=None):
        """Builds ``P`` from ``A_ref^T P + P A_ref = -Q`` (the Lyapunov
        equation of ``V = e^T P e`` along ``e' = A_ref e``)."""
        a_ref = np.atleast_2d(np.asarray(a_ref, dtype=float))
        n = a_ref.shape[0]
        q = np.eye(n) if Q is None else Q
        theta0 = np.asarray(theta0, dtype=float).ravel()
        g = np.eye(theta0.size) if Gamma is None else Gamma
        return cls(g, solve_lyapunov(a_ref.T, q), theta0)


def baseline_sf_step(b, omega_vec, e_ref, B, dt):
    w = np.asarray(omega_vec, dtype=float).ravel()
    e = np.asarray(e_ref, dtype=float).ravel()
    if w.size != b.theta_hat.size or e.size != b.P.shape[0]:
        raise DimensionError("omega or e_ref has the wrong size")
    s = float(e @ b.P @ np.asarray(B, dtype=float).ravel())
    return replace(b, theta_hat=b.theta_hat - dt * (b.Gamma @ w) * s)


def baseline_of_step(b, omega_vec, eps, dt):
    """Gradient law driven by the output error.

    Only meaningful when the error transfer function is strictly positive
    real; see :func:`is_strictly_positive_real`.
    """
    w = np.asarray(omega_vec, dtype=float).ravel()
    if w.size != b.theta_hat.size:
        raise DimensionError("omega has the wrong size")
    return replace(b, theta_hat=b.theta_hat - dt * (b.Gamma @ w) * float(eps))


def is_strictly_positive_real(a, b, c, n_freq=2000):
    """Frequency-grid test of ``c^T (sI - a)^{-1} b`` being SPR.

    Requires ``a`` Hurwitz, a positive real part on the whole grid, including
    zero frequency, and relative degree one with ``c^T b > 0``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if np.any(np.linalg.eigvals(a).real >= 0) or c @ b <= 0:
        return False
    eye = np.eye(a.shape[0])
    for w in np.concatenate([[0.0], np.logspace(-3, 4, n_freq)]):
        if np.real(c @ np.linalg.solve(1j * w * eye - a, b)) <= 0:
            return False
    return True


# ----------------------------------------------------------------------------
# ideal gains


def ideal_gains_sf(A, B, A_ref, B_ref, tol=1e-9):
    """``[k_x, k_r]`` with ``A + B k_x = A_ref`` and ``B k_r = B_ref``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).ravel()
    A_ref = np.atleast_2d(np.asarray(A_ref, dtype=float))
    B_ref = np.asarray(B_ref, dtype=float).ravel()
    bb = B @ B
    if bb == 0:
        raise ErzbergerError("Erzberger conditions unsolvable: B = 0")
    k_x = B @ (A_ref - A) / bb
    k_r = B @ B_ref / bb
    res = max(np.abs(A + np.outer(B, k_x) - A_ref).max(), np.abs(B * k_r - B_ref).max())
    scale = 1.0 + max(np.abs(A_ref).max(), np.abs(B_ref).max())
    if res > tol * scale:
        raise ErzbergerError(f"Erzberger conditions unsolvable (residual {res:.3e})")
    return np.concatenate([k_x, [k_r]])


def ideal_gains_of(plant, cfg):
    """``[k4, k1, k2, k3]`` solving the matching identity with the true coefficients."""
    if plant.n != cfg.n or plant.m != cfg.m:
        raise ConfigurationError("plant orders do not match the configuration")
    M, N = matching_system(cfg, 1.0, plant.a, plant.b)
    if abs(np.linalg.det(M)) < 1e-12 * max(1.0, np.abs(M).max()) ** M.shape[0]:
        raise ConfigurationError("matching system is singular")
    if np.any(M[0, 1:]):
        return np.linalg.solve(M, N)
    # the leading coefficient involves k4 alone (k4 b_m = b_ref); taking it
    # from that row keeps it exact and the rest follows by substitution
    k4 = N[0] / M[0, 0]
    rest = np.linalg.solve(M[1:, 1:], N[1:] - M[1:, 0] * k4)
    return np.concatenate([[k4], rest])


# ----------------------------------------------------------------------------
# excitation


@dataclass(frozen=True)
class ExcitationReport:
    gramian: np.ndarray
    level: float
    window: tuple


def excitation_level(t, samples):
    """Gramian ``int w w^T`` (trapezoidal) and its smallest eigenvalue."""
    t = np.asarray(t, dtype=float).ravel()
    w = np.asarray(samples, dtype=float)
    if t.size == 0:
        raise ValueError("empty excitation window")
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != t.size:
        raise DimensionError("one sample per time stamp is required")
    outer = w[:, :, None] * w[:, None, :]
    gram = np.trapezoid(outer, t, axis=0) if t.size > 1 else np.zeros((w.shape[1],) * 2)
    gram = 0.5 * (gram + gram.T)
    level = float(max(np.linalg.eigvalsh(gram)[0], 0.0))
    return ExcitationReport(gram, level, (float(t[0]), float(t[-1])))
