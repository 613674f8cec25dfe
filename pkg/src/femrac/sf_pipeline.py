"""State-feedback regression: from measured ``(x, u)`` to ``Y = Delta * theta``.

The unknowns are the controller gains ``theta = [k_x, k_r]`` of
``u = k_x x + k_r r``.  The chain is

1. filter ``Phi = [x; u]`` through ``1/(p + l)`` and form the static
   regression ``zbar = x - l xbar = [A B x0] phibar`` with
   ``phibar = [Phibar; exp(-l t)]``;
2. pass ``(zbar, phibar)`` through ``n + 2`` taps ``alpha_i/(p + beta_i)``
   and stack the results into a square-ish system;
3. mix with the adjugate of the Gram matrix so every unknown gets the same
   scalar regressor ``phi``;
4. use the matching conditions ``A + B k_x = A_ref``, ``B k_r = B_ref`` to
   turn ``(phi A, phi B)`` into a regression on ``theta`` itself.

All four steps are numba kernels operating on the arrays of
:class:`SfPipelineState`; :class:`SfPipeline` is a convenience wrapper.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .filters import bank_update, extension_update_matrix, first_order_update
from .numerics import (DimensionError, NumericOverflowError, det_kernel,
                       hadamard_ratio, is_hurwitz)
from .regression import RegressionPair

BANK = 0
EXTENSION = 1
_EXTENSION_MODES = {"bank": BANK, "extension": EXTENSION}

DEFAULT_MIX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SfConfig:
    a_ref: np.ndarray
    b_ref: np.ndarray
    l: float = 1.0
    alphas: np.ndarray = None
    betas: np.ndarray = None
    extension: str = "bank"
    free_response: str = "euler"
    mix_tol: float = DEFAULT_MIX_TOL
    mix_every: int = 1

    def __post_init__(self):
        a_ref = np.atleast_2d(np.asarray(self.a_ref, dtype=float))
        b_ref = np.atleast_1d(np.asarray(self.b_ref, dtype=float)).ravel()
        n = a_ref.shape[0]
        if a_ref.shape != (n, n) or b_ref.size != n:
            raise DimensionError("a_ref must be n x n and b_ref of length n")
        if not is_hurwitz(a_ref):
            raise ValueError("A_ref not Hurwitz")
        if not self.l > 0:
            raise ValueError("filter constant l must be positive")
        taps = np.arange(1, n + 3, dtype=float)
        alphas = taps if self.alphas is None else np.asarray(self.alphas, dtype=float).ravel()
        betas = taps if self.betas is None else np.asarray(self.betas, dtype=float).ravel()
        if alphas.size != n + 2 or betas.size != n + 2:
            raise DimensionError(f"the filter bank needs exactly n + 2 = {n + 2} taps")
        if np.unique(alphas).size != alphas.size:
            raise ValueError("bank gains alpha must be pairwise distinct")
        if np.any(alphas <= 0) or np.any(betas <= 0):
            raise ValueError("bank gains and poles must be positive")
        if self.extension not in _EXTENSION_MODES:
            raise ValueError(f"extension must be one of {sorted(_EXTENSION_MODES)}")
        if self.free_response not in ("euler", "exact"):
            raise ValueError("free_response must be 'euler' or 'exact'")
        if self.mix_tol < 0 or int(self.mix_every) < 1:
            raise ValueError("mix_tol must be >= 0 and mix_every >= 1")
        object.__setattr__(self, "a_ref", np.ascontiguousarray(a_ref))
        object.__setattr__(self, "b_ref", np.ascontiguousarray(b_ref))
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "mix_every", int(self.mix_every))

    @property
    def n(self):
        return self.a_ref.shape[0]

    @property
    def mode(self):
        return _EXTENSION_MODES[self.extension]

    def decay_step(self, dt):
        """Per-step factor of the ``exp(-l t)`` regressor entry.

        ``"euler"`` uses ``1 - l dt``, the same rule that advances the state
        filters, which keeps ``zbar = theta^T phibar`` exact at every sample
        even for a nonzero initial state; ``"exact"`` uses ``exp(-l dt)``.
        """
        return 1.0 - self.l * dt if self.free_response == "euler" else float(np.exp(-self.l * dt))


# ----------------------------------------------------------------------------
# kernels


@njit(cache=True)
def sf_regress(x, exp_term, l, phib, zbar, phibar):
    """Static regression at the current sample, from filter states at that sample."""
    n = x.shape[0]
    for i in range(n):
        zbar[i] = x[i] - l * phib[i]
    for i in range(n + 1):
        phibar[i] = phib[i]
    phibar[n + 1] = exp_term


@njit(cache=True)
def sf_stack(zbar, phibar, tap_z, tap_phi, zf, pf):
    """Rows: the unfiltered pair first, then one row per bank tap."""
    zf[0, :] = zbar
    pf[0, :] = phibar
    for i in range(tap_z.shape[0]):
        zf[i + 1, :] = tap_z[i]
        pf[i + 1, :] = tap_phi[i]


@njit(cache=True)
def sf_advance(x, u, zbar, phibar, l, alphas, betas, phib, tap_z, tap_phi, dt):
    n = x.shape[0]
    big = np.empty(n + 1)
    big[:n] = x
    big[n] = u
    first_order_update(phib, big, l, dt)
    bank_update(tap_z, alphas, betas, zbar, dt)
    bank_update(tap_phi, alphas, betas, phibar, dt)


@njit(cache=True)
def sf_mix_kernel(zf, pf, mix_tol, z):
    """``z = adj(G) pf^T zf`` with ``G = pf^T pf``; returns ``phi = det(G)``.

    While the Gram matrix is numerically singular (Hadamard ratio at or below
    ``mix_tol``) its determinant is pure round-off, so the mixed quantities
    are reported as exact zeros instead.
    """
    g = pf.T @ pf
    if hadamard_ratio(g) <= mix_tol:
        z[:, :] = 0.0
        return 0.0
    # adj(G) pf^T zf = det(G) * pf^+ zf; the least-squares form goes through
    # the QR factors of pf and so avoids squaring its condition number
    q, r = np.linalg.qr(pf)
    w = np.ascontiguousarray(q.T) @ zf
    k = r.shape[0]
    det = 1.0
    for i in range(k):
        det *= r[i, i]
    det *= det
    for c in range(w.shape[1]):
        for i in range(k - 1, -1, -1):
            acc = w[i, c]
            for j in range(i + 1, k):
                acc -= r[i, j] * z[j, c]
            z[i, c] = acc / r[i, i]
    for i in range(k):
        for c in range(w.shape[1]):
            z[i, c] *= det
    return det


@njit(cache=True)
def sf_mix_square_kernel(zf, pf, mix_tol, z):
    """Mixing for the integral extension, where ``pf`` is already square."""
    if hadamard_ratio(pf) <= mix_tol:
        z[:, :] = 0.0
        return 0.0
    d = det_kernel(pf)
    z[:, :] = d * np.linalg.solve(pf, zf)
    return d


@njit(cache=True)
def sf_match_kernel(z, phi, a_ref, b_ref, ybar, y):
    """Fills ``ybar`` ((n+1) x n) and ``y`` (n+1); returns ``Delta``."""
    n = a_ref.shape[0]
    # z rows 0..n-1 hold phi*A^T, row n holds phi*B
    for j in range(n):
        for i in range(n):
            ybar[j, i] = phi * a_ref[i, j] - z[j, i]
        ybar[n, j] = phi * b_ref[j]
    delta = 0.0
    for i in range(n):
        delta += z[n, i] * z[n, i]
    for j in range(n + 1):
        s = 0.0
        for i in range(n):
            s += ybar[j, i] * z[n, i]
        y[j] = s
    return delta


# ----------------------------------------------------------------------------
# value-level interface


@dataclass
class SfPipelineState:
    """Everything the pipeline holds.

    After :func:`sf_step` the derived quantities (``zbar``, ``phibar`` and the stacks)
    describe the sample that was just passed in, while the filter states have
    already moved on to the next sample.
    """

    phib: np.ndarray
    tap_z: np.ndarray
    tap_phi: np.ndarray
    ext_zf: np.ndarray
    ext_pf: np.ndarray
    zbar: np.ndarray
    phibar: np.ndarray
    zbar_f: np.ndarray
    phibar_f: np.ndarray
    z: np.ndarray = None
    phi: float = 0.0
    Ybar: np.ndarray = None
    Y: np.ndarray = None
    Delta: float = 0.0
    exp_term: float = 1.0
    t: float = 0.0

    @classmethod
    def zeros(cls, n):
        q = n + 2
        return cls(
            phib=np.zeros(n + 1), tap_z=np.zeros((q, n)), tap_phi=np.zeros((q, q)),
            ext_zf=np.zeros((q, n)), ext_pf=np.zeros((q, q)),
            zbar=np.zeros(n), phibar=np.zeros(q),
            zbar_f=np.zeros((n + 3, n)), phibar_f=np.zeros((n + 3, q)),
            z=np.zeros((q, n)), Ybar=np.zeros((n + 1, n)), Y=np.zeros(n + 1),
        )

    def copy(self):
        return replace(self, **{k: (v.copy() if isinstance(v, np.ndarray) else v)
                                for k, v in self.__dict__.items()})

    @property
    def n(self):
        return self.zbar.size

    @property
    def z_A(self):
        return self.z[: self.n].T.copy()

    @property
    def z_B(self):
        return self.z[self.n].copy()

    @property
    def Deltabar(self):
        return self.z_B


def _check_finite(s, t):
    for name in ("phib", "tap_z", "tap_phi", "ext_zf", "ext_pf"):
        if not np.all(np.isfinite(getattr(s, name))):
            raise NumericOverflowError(f"pipeline state '{name}' is not finite", t=t)


def sf_step(s, cfg, x, u, t, dt):
    """Form the regression at ``(x, u, t)`` and advance every filter by ``dt``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != cfg.n:
        raise DimensionError(f"x has dim {x.size}, config has n = {cfg.n}")
    s = s.copy()
    u = float(u)
    sf_regress(x, s.exp_term, cfg.l, s.phib, s.zbar, s.phibar)
    sf_stack(s.zbar, s.phibar, s.tap_z, s.tap_phi, s.zbar_f, s.phibar_f)
    s.exp_term *= cfg.decay_step(dt)
    s.t = float(t)
    sf_advance(x, u, s.zbar, s.phibar, cfg.l, cfg.alphas, cfg.betas, s.phib, s.tap_z, s.tap_phi, dt)
    if cfg.mode == EXTENSION:
        extension_update_matrix(s.ext_zf, s.ext_pf, s.zbar, s.phibar, cfg.l, dt)
    _check_finite(s, t)
    return s


def sf_mix(s, cfg=None):
    s = s.copy()
    if cfg is not None and cfg.mode == EXTENSION:
        s.phi = float(sf_mix_square_kernel(s.ext_zf, s.ext_pf, cfg.mix_tol, s.z))
    else:
        tol = DEFAULT_MIX_TOL if cfg is None else cfg.mix_tol
        s.phi = float(sf_mix_kernel(s.zbar_f, s.phibar_f, tol, s.z))
    return s


def sf_match(s, cfg):
    """Returns the regression pair and stores ``Ybar``, ``Y``, ``Delta`` on a copy of ``s``."""
    s = s.copy()
    s.Delta = float(sf_match_kernel(s.z, s.phi, cfg.a_ref, cfg.b_ref, s.Ybar, s.Y))
    return RegressionPair(s.Y.copy(), s.Delta), s


class SfPipeline:
    """Mutable wrapper: ``update(x, u, t, dt)`` returns the current ``RegressionPair``."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.state = SfPipelineState.zeros(cfg.n)

    def update(self, x, u, t, dt):
        if self.cfg.mode == EXTENSION:
            # the extension filter is mixed as it stands at this sample
            self.state = sf_step(sf_mix(self.state, self.cfg), self.cfg, x, u, t, dt)
        else:
            self.state = sf_mix(sf_step(self.state, self.cfg, x, u, t, dt), self.cfg)
        pair, self.state = sf_match(self.state, self.cfg)
        return pair
