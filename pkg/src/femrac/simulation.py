"""Plants, reference models, reference signals and the closed-loop run loops.

The loops :func:`run_sf` and :func:`run_of` are compiled with numba and
record every integration step.  Parameter errors and the augmented error
norm ``|xi|`` use the ideal gains, which the controller never sees; they are
there for evaluation only.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .adaptation import (DEFAULT_OMEGA_FLOOR, adapt_rate, ideal_gains_of, ideal_gains_sf,
                         is_strictly_positive_real)
from .numerics import DEFAULT_DT, DimensionError, NumericOverflowError, is_hurwitz, solve_lyapunov
from .of_pipeline import (OfConfig, Polynomial, of_advance, of_match_kernel, of_mix_kernel,
                          of_regress, observable_canonical)
from .sf_pipeline import (EXTENSION, SfConfig, sf_advance, sf_match_kernel, sf_mix_kernel,
                          sf_mix_square_kernel, sf_regress, sf_stack)
from .filters import extension_update_matrix

NEW_LAW = 0
BASELINE_LAW = 1


# ----------------------------------------------------------------------------
# plants and reference models


@dataclass(frozen=True, eq=False)
class LtiStatePlant:
    A: np.ndarray
    B: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).ravel()
        n = A.shape[0]
        if A.shape != (n, n) or B.size != n:
            raise DimensionError("A must be n x n and B of length n")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.size != n:
            raise DimensionError("x0 must have n entries")
        ctrb = np.column_stack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError("(A, B) is not controllable")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class TransferFunctionPlant:
    """``y = bm Z(p) / R(p) u`` with monic ``Z`` and ``R``, realised in
    observability canonical form ``x' = A_o x + B_o u``, ``y = x_1``."""

    bm: float
    Z: Polynomial
    R: Polynomial
    y0: float = 0.0

    def __post_init__(self):
        Z = self.Z if isinstance(self.Z, Polynomial) else Polynomial(self.Z)
        R = self.R if isinstance(self.R, Polynomial) else Polynomial(self.R)
        if self.bm == 0:
            raise ValueError("bm must be nonzero")
        if not (Z.is_monic and R.is_monic):
            raise ValueError("Z and R must be monic")
        if Z.degree >= R.degree:
            raise ValueError("the plant must be strictly proper")
        if Z.degree > 0 and not Z.is_hurwitz():
            raise ValueError("numerator Z is not Hurwitz (plant not minimum phase)")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "bm", float(self.bm))

    n = property(lambda self: self.R.degree)
    m = property(lambda self: self.Z.degree)
    a = property(lambda self: self.R.tail())

    @property
    def b(self):
        return self.bm * self.Z.coeffs[::-1]

    @property
    def A_o(self):
        return observable_canonical(self.a)

    @property
    def B_o(self):
        out = np.zeros(self.n)
        out[self.n - self.m - 1:] = self.b
        return out

    @property
    def C(self):
        return np.eye(self.n)[0]

    @property
    def x0(self):
        # the output is the first canonical state; the rest start at rest
        x = np.zeros(self.n)
        x[0] = self.y0
        return x


@dataclass(frozen=True, eq=False)
class StateReference:
    A_ref: np.ndarray
    B_ref: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_ref, dtype=float))
        B = np.asarray(self.B_ref, dtype=float).ravel()
        if A.shape != (B.size, B.size):
            raise DimensionError("A_ref must be n x n and B_ref of length n")
        if not is_hurwitz(A):
            raise ValueError("A_ref not Hurwitz")
        x0 = np.zeros(B.size) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        object.__setattr__(self, "A_ref", A)
        object.__setattr__(self, "B_ref", B)
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True, eq=False)
class TransferReference:
    b_ref: float
    Z_ref: Polynomial
    R_ref: Polynomial
    y0: float = 0.0

    def __post_init__(self):
        Z = self.Z_ref if isinstance(self.Z_ref, Polynomial) else Polynomial(self.Z_ref)
        R = self.R_ref if isinstance(self.R_ref, Polynomial) else Polynomial(self.R_ref)
        if not R.is_hurwitz() or (Z.degree > 0 and not Z.is_hurwitz()):
            raise ValueError("reference model polynomials must be Hurwitz")
        object.__setattr__(self, "Z_ref", Z)
        object.__setattr__(self, "R_ref", R)

    @property
    def realization(self):
        tf = TransferFunctionPlant(self.b_ref, self.Z_ref, self.R_ref, self.y0)
        return tf.A_o, tf.B_o, tf.x0


# ----------------------------------------------------------------------------
# reference signals


def _constant(value=1.0):
    return lambda t: np.full_like(t, float(value))


def _exponential(amplitude=1.0, rate=1.0):
    return lambda t: float(amplitude) * np.exp(-float(rate) * t)


def _sine(amplitude=1.0, frequency=1.0, phase=0.0, offset=0.0):
    return lambda t: float(offset) + float(amplitude) * np.sin(float(frequency) * t + float(phase))


def _multisine(components=(), offset=0.0):
    parts = [_sine(**c) for c in components]
    return lambda t: float(offset) + sum((p(t) for p in parts), np.zeros_like(t))


SIGNALS = {
    "constant": _constant,
    "exponential": _exponential,
    "sine": _sine,
    "multisine": _multisine,
}


def register_signal(name, factory):
    """Adds a reference signal; ``factory(**params)`` must return ``f(t_array)``."""
    SIGNALS[name] = factory


def make_signal(spec):
    spec = dict(spec)
    name = spec.pop("name")
    if name not in SIGNALS:
        raise KeyError(f"unknown reference signal '{name}'")
    return SIGNALS[name](**spec)


# ----------------------------------------------------------------------------
# compiled loops


@njit(cache=True)
def _sf_loop(A, B, x0, A_ref, B_ref, xr0, r_arr, theta0, l, decay, alphas, betas, ext_mode,
             mix_tol, mix_every, sigma, gamma0, gamma1, omega_floor, law, Gamma, P,
             theta_star, dt, rec_x, rec_xr, rec_th, rec_sc):
    """rec_sc columns: u, Omega, |omega|^2, |xi|, Delta, regression residual."""
    n = A.shape[0]
    q = n + 2
    n_steps = r_arr.shape[0]
    x = x0.copy()
    xr = xr0.copy()
    th = theta0.copy()
    phib = np.zeros(n + 1)
    tap_z = np.zeros((q, n))
    tap_phi = np.zeros((q, q))
    ext_zf = np.zeros((q, n))
    ext_pf = np.zeros((q, q))
    zbar = np.zeros(n)
    phibar = np.zeros(q)
    zf = np.zeros((n + 3, n))
    pf = np.zeros((n + 3, q))
    z = np.zeros((q, n))
    ybar = np.zeros((n + 1, n))
    y = np.zeros(n + 1)
    w = np.zeros(n + 1)
    ups = np.zeros(n + 1)
    rate = np.zeros(n + 1)
    omega = 0.0
    beta = 0.0
    phi = 0.0
    delta = 0.0
    pb = P @ B
    exp_term = 1.0
    for k in range(n_steps):
        r = r_arr[k]
        w[:n] = x
        w[n] = r
        u = 0.0
        for i in range(n + 1):
            u += th[i] * w[i]
        w2 = 0.0
        for i in range(n + 1):
            w2 += w[i] * w[i]
        # regression at this sample
        sf_regress(x, exp_term, l, phib, zbar, phibar)
        if k % mix_every == 0:
            if ext_mode == EXTENSION:
                phi = sf_mix_square_kernel(ext_zf, ext_pf, mix_tol, z)
            else:
                sf_stack(zbar, phibar, tap_z, tap_phi, zf, pf)
                phi = sf_mix_kernel(zf, pf, mix_tol, z)
            delta = sf_match_kernel(z, phi, A_ref, B_ref, ybar, y)
        # record
        xi2 = 0.0
        for i in range(n):
            rec_x[k, i] = x[i]
            rec_xr[k, i] = xr[i]
            xi2 += (x[i] - xr[i]) ** 2
        res = 0.0
        for i in range(n + 1):
            rec_th[k, i] = th[i]
            xi2 += (th[i] - theta_star[i]) ** 2
            res = max(res, abs(y[i] - delta * theta_star[i]))
        rec_sc[k, 0] = u
        rec_sc[k, 1] = omega
        rec_sc[k, 2] = w2
        rec_sc[k, 3] = np.sqrt(xi2)
        rec_sc[k, 4] = delta
        rec_sc[k, 5] = res / (1.0 + abs(delta))
        # parameter update from the current state
        if law == 0:
            adapt_rate(th, omega, ups, w2, gamma0, gamma1, omega_floor, rate)
        else:
            s = 0.0
            for i in range(n):
                s += (x[i] - xr[i]) * pb[i]
            rate[:] = -(Gamma @ w) * s
        # advance everything
        ew = np.exp(-beta)
        omega += dt * ew * delta * delta
        for i in range(n + 1):
            ups[i] += dt * ew * delta * y[i]
        beta += dt * sigma
        if ext_mode == EXTENSION:
            extension_update_matrix(ext_zf, ext_pf, zbar, phibar, l, dt)
        sf_advance(x, u, zbar, phibar, l, alphas, betas, phib, tap_z, tap_phi, dt)
        exp_term *= decay
        dx = A @ x + B * u
        dxr = A_ref @ xr + B_ref * r
        x += dt * dx
        xr += dt * dxr
        th += dt * rate
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(th)) and np.isfinite(omega)):
            return k
    return -1


@njit(cache=True)
def _of_loop(A_o, B_o, x0, A_r, B_r, xr0, r_arr, theta0, lam_c, h, t_rows, u0, psi, psi_c,
             exp_step, l, mix_tol, mix_every, mb, nb, m, zb_offset, rho, sigma, gamma0, gamma1,
             omega_floor, law, Gamma, theta_star, dt, rec_y, rec_th, rec_sc):
    """rec_y columns: y, y_ref; rec_sc as in the state-feedback loop."""
    n = A_o.shape[0]
    nv = n - 1
    p = 2 * n
    n_steps = r_arr.shape[0]
    x = x0.copy()
    xr = xr0.copy()
    th = theta0.copy()
    v1 = np.zeros(nv)
    v2 = np.zeros(nv)
    eta_u = np.zeros(n)
    eta_y = np.zeros(n)
    g = np.zeros(n)
    g[0] = 1.0
    dim = 3 * n - u0
    zf = np.zeros(dim)
    pf = np.zeros((dim, dim))
    phibar = np.zeros(dim)
    z = np.zeros(dim)
    mmat = np.zeros((p, p))
    nvec = np.zeros(p)
    yv = np.zeros(p)
    w = np.zeros(p)
    ups = np.zeros(p)
    rate = np.zeros(p)
    # rows mapping states to the first rho output derivatives
    cp = np.zeros((rho, n))
    cr = np.zeros((rho, n))
    cp[0, 0] = 1.0
    cr[0, 0] = 1.0
    for j in range(1, rho):
        cp[j] = cp[j - 1] @ A_o
        cr[j] = cr[j - 1] @ A_r
    omega = 0.0
    beta = 0.0
    phi = 0.0
    delta = 0.0
    for k in range(n_steps):
        r = r_arr[k]
        y = x[0]
        w[0] = r
        w[1:1 + nv] = v1
        w[1 + nv:1 + 2 * nv] = v2
        w[p - 1] = y
        u = 0.0
        w2 = 0.0
        for i in range(p):
            u += th[i] * w[i]
            w2 += w[i] * w[i]
        zbar = of_regress(y, eta_u, eta_y, g, t_rows, u0, psi, phibar)
        if k % mix_every == 0:
            phi = of_mix_kernel(zf, pf, mix_tol, z)
            delta = of_match_kernel(phi, z, n, m, zb_offset, mb, nb, mmat, nvec, yv)
        eps = y - xr[0]
        xi2 = 0.0
        for j in range(rho):
            d = 0.0
            for i in range(n):
                d += cp[j, i] * x[i] - cr[j, i] * xr[i]
            xi2 += d * d
        res = 0.0
        for i in range(p):
            rec_th[k, i] = th[i]
            xi2 += (th[i] - theta_star[i]) ** 2
            res = max(res, abs(yv[i] - delta * theta_star[i]))
        rec_y[k, 0] = y
        rec_y[k, 1] = xr[0]
        rec_sc[k, 0] = u
        rec_sc[k, 1] = omega
        rec_sc[k, 2] = w2
        rec_sc[k, 3] = np.sqrt(xi2)
        rec_sc[k, 4] = delta
        rec_sc[k, 5] = res / (1.0 + abs(delta))
        if law == 0:
            adapt_rate(th, omega, ups, w2, gamma0, gamma1, omega_floor, rate)
        else:
            rate[:] = -(Gamma @ w) * eps
        ew = np.exp(-beta)
        omega += dt * ew * delta * delta
        for i in range(p):
            ups[i] += dt * ew * delta * yv[i]
        beta += dt * sigma
        of_advance(u, y, zbar, phibar, psi_c, exp_step, l, eta_u, eta_y, g, zf, pf, dt)
        if nv > 0:
            dv1 = lam_c @ v1 + h * u
            dv2 = lam_c @ v2 + h * y
            v1 += dt * dv1
            v2 += dt * dv2
        dx = A_o @ x + B_o * u
        dxr = A_r @ xr + B_r * r
        x += dt * dx
        xr += dt * dxr
        th += dt * rate
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(th)) and np.isfinite(omega)):
            return k
    return -1


# ----------------------------------------------------------------------------
# run descriptions and traces


@dataclass(frozen=True, eq=False)
class LawSpec:
    kind: str = "new"            # "new" or "baseline"
    gamma0: float = 1.0
    gamma1: float = 0.0
    sigma: float = 0.5
    omega_floor: float = DEFAULT_OMEGA_FLOOR
    Gamma: np.ndarray = None     # baseline only; identity by default
    Q: np.ndarray = None         # baseline only; identity by default

    def __post_init__(self):
        if self.kind not in ("new", "baseline"):
            raise ValueError("law kind must be 'new' or 'baseline'")
        if self.kind == "new" and (self.gamma0 < 1 or self.gamma1 < 0):
            raise ValueError("need gamma0 >= 1 and gamma1 >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class SimulationTrace:
    """Full-rate record of one run.

    ``columns`` maps names to arrays of equal length; ``failed_at`` is the
    time of a numeric overflow, or ``None``.
    """

    mode: str
    columns: dict
    theta_star: np.ndarray
    dt: float
    failed_at: float = None
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def t(self):
        return self.columns["t"]

    @property
    def theta_hat(self):
        names = [c for c in self.columns if c.startswith("theta_hat_")]
        return np.column_stack([self.columns[c] for c in names])

    @property
    def theta_tilde(self):
        return self.theta_hat - self.theta_star

    @property
    def theta_tilde_norm(self):
        return np.linalg.norm(self.theta_tilde, axis=1)

    def decimated(self, every):
        idx = np.arange(0, self.t.size, int(every))
        return {k: v[idx] for k, v in self.columns.items()}


def _reference_array(r_signal, n_steps, dt):
    t = np.arange(n_steps) * dt
    r = np.asarray(r_signal(t), dtype=float)
    if r.shape != t.shape or not np.all(np.isfinite(r)):
        raise ValueError("reference signal must return one finite value per sample")
    return t, r


def _law_flags(law, n_theta, P=None):
    flag = NEW_LAW if law.kind == "new" else BASELINE_LAW
    G = np.eye(n_theta) if law.Gamma is None else np.atleast_2d(np.asarray(law.Gamma, dtype=float))
    if G.shape != (n_theta, n_theta):
        raise DimensionError(f"Gamma must be {n_theta} x {n_theta}")
    return flag, np.ascontiguousarray(G)


def _finish(k_fail, t, cols, dt):
    if k_fail < 0:
        return cols, None
    # keep rows up to and including the last finite one
    return {k: v[: k_fail + 1] for k, v in cols.items()}, float(t[k_fail])


def run_sf(plant, reference, cfg, law, theta0, r_signal, t_end, dt=DEFAULT_DT, raise_on_overflow=False):
    """Closed-loop run with the state-feedback controller ``u = k_x x + k_r r``."""
    n = plant.n
    theta0 = np.asarray(theta0, dtype=float).ravel()
    if theta0.size != n + 1:
        raise DimensionError(f"theta0 must have n + 1 = {n + 1} entries")
    if theta0[-1] == 0:
        raise ValueError("the initial feed-forward gain k_r(0) must be nonzero")
    theta_star = ideal_gains_sf(plant.A, plant.B, reference.A_ref, reference.B_ref)
    n_steps = int(round(t_end / dt)) + 1
    t, r = _reference_array(r_signal, n_steps, dt)
    flag, G = _law_flags(law, n + 1)
    q = np.eye(n) if law.Q is None else np.atleast_2d(np.asarray(law.Q, dtype=float))
    P = solve_lyapunov(reference.A_ref.T, q)
    rec_x = np.zeros((n_steps, n))
    rec_xr = np.zeros((n_steps, n))
    rec_th = np.zeros((n_steps, n + 1))
    rec_sc = np.zeros((n_steps, 6))
    k_fail = _sf_loop(plant.A, plant.B, plant.x0, reference.A_ref, reference.B_ref,
                      reference.x0, r, theta0, cfg.l, cfg.decay_step(dt), cfg.alphas,
                      cfg.betas, cfg.mode,
                      cfg.mix_tol, cfg.mix_every, law.sigma, float(law.gamma0),
                      float(law.gamma1), float(law.omega_floor), flag, G, P, theta_star,
                      dt, rec_x, rec_xr, rec_th, rec_sc)
    cols = {"t": t, "r": r}
    for i in range(n):
        cols[f"x_{i + 1}"] = rec_x[:, i]
    for i in range(n):
        cols[f"x_ref_{i + 1}"] = rec_xr[:, i]
    for i in range(n + 1):
        cols[f"theta_hat_{i + 1}"] = rec_th[:, i]
    for j, name in enumerate(("u", "Omega", "lambda_max", "xi_norm", "Delta", "regression_residual")):
        cols[name] = rec_sc[:, j]
    cols, failed = _finish(k_fail, t, cols, dt)
    trace = SimulationTrace("state_feedback", cols, theta_star, dt, failed,
                            meta={"law": law.kind})
    if failed is not None and raise_on_overflow:
        raise NumericOverflowError("closed loop diverged", t=failed, partial=trace)
    return trace


def run_of(plant, reference, cfg, law, theta0, r_signal, t_end, dt=DEFAULT_DT, raise_on_overflow=False):
    """Closed-loop run with the output-feedback controller; ``theta = [k4, k1, k2, k3]``."""
    n = plant.n
    theta0 = np.asarray(theta0, dtype=float).ravel()
    if theta0.size != 2 * n:
        raise DimensionError(f"theta0 must have 2n = {2 * n} entries")
    if theta0[0] == 0:
        raise ValueError("the initial feed-forward gain k_4(0) must be nonzero")
    if not (np.isclose(reference.b_ref, cfg.b_ref) and reference.Z_ref == cfg.z_ref
            and reference.R_ref == cfg.r_ref):
        raise ValueError("reference model and pipeline configuration disagree")
    theta_star = ideal_gains_of(plant, cfg)
    n_steps = int(round(t_end / dt)) + 1
    t, r = _reference_array(r_signal, n_steps, dt)
    flag, G = _law_flags(law, 2 * n)
    A_r, B_r, xr0 = reference.realization
    mb, nb = cfg.matching_tensors
    rec_y = np.zeros((n_steps, 2))
    rec_th = np.zeros((n_steps, 2 * n))
    rec_sc = np.zeros((n_steps, 6))
    k_fail = _of_loop(plant.A_o, plant.B_o, plant.x0, A_r, B_r, xr0, r, theta0,
                      np.ascontiguousarray(cfg.lambda_companion), cfg.h, cfg.t_rows, cfg.u0,
                      cfg.psi, cfg.psi_c, cfg.fresh_exp_step(dt), cfg.l, cfg.mix_tol,
                      cfg.mix_every, mb, nb, cfg.m, cfg.zb_offset, cfg.rho, law.sigma,
                      float(law.gamma0), float(law.gamma1), float(law.omega_floor), flag, G, theta_star, dt, rec_y, rec_th, rec_sc)
    cols = {"t": t, "r": r, "y": rec_y[:, 0], "y_ref": rec_y[:, 1]}
    for i in range(2 * n):
        cols[f"theta_hat_{i + 1}"] = rec_th[:, i]
    for j, name in enumerate(("u", "Omega", "lambda_max", "xi_norm", "Delta", "regression_residual")):
        cols[name] = rec_sc[:, j]
    cols, failed = _finish(k_fail, t, cols, dt)
    meta = {"law": law.kind}
    if law.kind == "baseline":
        # the output-error gradient law needs an SPR error model
        meta["spr"] = is_strictly_positive_real(A_r, B_r, np.eye(n)[0])
        meta["reference_only"] = not meta["spr"]
    trace = SimulationTrace("output_feedback", cols, theta_star, dt, failed, meta=meta)
    if failed is not None and raise_on_overflow:
        raise NumericOverflowError("closed loop diverged", t=failed, partial=trace)
    return trace


# ----------------------------------------------------------------------------
# post-processing


def estimate_excitation_time(trace, fraction=1e-6):
    """First time the running integral of ``Delta^2`` reaches ``fraction`` of its final value."""
    d2 = trace["Delta"] ** 2
    acc = np.cumsum(d2) * trace.dt
    if acc[-1] <= 0:
        return None
    return float(trace.t[np.argmax(acc >= fraction * acc[-1])])


def excitation_onset(trace):
    """First time ``Omega`` becomes positive, or ``None`` if it never does."""
    pos = np.nonzero(trace["Omega"] > 0)[0]
    return float(trace.t[pos[0]]) if pos.size else None


def decay_window(t, q, t_start, floor=1e-8):
    """``[t_start, t_stop]`` where ``t_stop`` is the last sample before ``q``
    drops below ``floor`` times its largest value from ``t_start`` on.

    Past that point the quantity sits on the round-off floor and a fit
    would measure noise instead of decay.
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    i0 = min(int(np.searchsorted(t, t_start)), t.size - 1)
    ref = q[i0:].max()
    below = np.nonzero(q[i0:] < floor * ref)[0]
    i1 = i0 + int(below[0]) - 1 if below.size else t.size - 1
    return float(t[i0]), float(t[max(i1, i0)])


def _series(trace, quantity):
    if isinstance(trace, SimulationTrace):
        t = trace.t
        if isinstance(quantity, str):
            q = trace.theta_tilde_norm if quantity == "theta_tilde_norm" else trace[quantity]
        else:
            q = np.asarray(quantity, dtype=float)
    else:
        t = np.asarray(trace, dtype=float)
        q = np.asarray(quantity, dtype=float)
    if q.shape != t.shape:
        raise DimensionError("quantity and time stamps differ in length")
    return t, q


def fit_decay_rate(trace, quantity, window=None, anchored=False):
    """Least-squares slope of ``log(quantity)`` against time on ``window``.

    ``trace`` is a :class:`SimulationTrace` or a plain time array.
    ``quantity`` is a column name, ``"theta_tilde_norm"``, or an array of
    values aligned with the time stamps.  With ``anchored=True`` the line is
    pinned to the first sample of the window, so only the slope is fitted.
    """
    t, q = _series(trace, quantity)
    if window is None:
        window = (t[0], t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise ValueError("fit window holds fewer than two samples")
    if np.any(q[sel] <= 0):
        raise ValueError("quantity must be strictly positive on the fit window")
    ts, ls = t[sel], np.log(q[sel])
    if anchored:
        dt = ts - ts[0]
        return float(dt @ (ls - ls[0]) / (dt @ dt))
    return float(np.polyfit(ts, ls, 1)[0])


def convergence_window(trace, quantity="theta_tilde_norm", fraction=1e-6, floor=1e-8):
    """Fit window for the post-excitation decay of ``quantity``.

    Starts at the estimated excitation time; when the quantity has already
    reached its round-off floor by then, the window starts at the excitation
    onset instead.  Returns ``None`` for a run that was never excited.
    """
    t, q = _series(trace, quantity)
    t_e = estimate_excitation_time(trace, fraction)
    if t_e is None:
        return None
    w = decay_window(t, q, t_e, floor)
    onset = excitation_onset(trace)
    if w[1] - w[0] < 10 * trace.dt and onset is not None:
        w = decay_window(t, q, onset, floor)
    return w


def sweep_decay_rates(traces, quantity="xi_norm", floor=1e-8):
    """Anchored decay rates of ``quantity`` over a window shared by all runs.

    The window runs from ``t = 0`` to the earliest time any run reaches its
    round-off floor, so every rate is measured over the same interval from
    the same initial value.  Returns ``(rates, window)``; rates are positive
    for decay.
    """
    if not traces:
        raise ValueError("no traces to compare")
    ends = [decay_window(tr.t, _series(tr, quantity)[1], 0.0, floor)[1] for tr in traces]
    window = (0.0, min(ends))
    return [-fit_decay_rate(tr, quantity, window, anchored=True) for tr in traces], window
