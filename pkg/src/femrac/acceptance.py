"""Reproduction of the shipped experiments and the acceptance report.

:func:`reproduce` runs every preset, a repeat of ``sf_fig1`` for the
reproducibility check, and the four gain sweeps into one output directory.
:func:`check_acceptance` reads that directory back and evaluates the twelve
acceptance criteria; criteria that only need synthetic signals or random
matrices are computed on the spot.
"""

import json
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .filters import forgetting_response
from .harness import (DEFAULT_DECIMATE, EXIT_FAILURE, EXIT_OK, PRESETS, load_preset,
                      read_trace_csv, run_experiment, run_sweep)
from .numerics import adjugate, det, max_eig_outer, solve_lyapunov

NEW_LAW_PRESETS = ("sf_fig1", "sf_fig2", "sf_fig3", "of_fig6", "of_fig7", "of_fig8")
REFERENCES = ({"name": "constant", "value": 1.0}, {"name": "sine"}, {"name": "exponential"})

SWEEPS = {
    "sf_gamma0": ("sf_fig1", "gamma0", [1.0, 10.0, 100.0], None),
    "of_gamma0": ("of_fig6", "gamma0", [1.0, 10.0, 100.0], None),
    "sf_gamma1": ("sf_fig1", "gamma1", [0.0, 10.0], ("reference", list(REFERENCES))),
    "of_gamma1": ("of_fig6", "gamma1", [0.0, 10.0], ("reference", list(REFERENCES))),
}

MONOTONE_TOL = 1e-12
RESIDUAL_TOL = 1e-5
SLOPE_MAX = -0.01
FINAL_RATIO = 1e-2
SIGN_TOL = 1e-2
STABILIZE_TOL = 1e-3
BASELINE_RATIO = 0.5
SF_THETA_STAR = (-6.0, -3.0, 4.0)
OF_K4_STAR = 4.0

CRITERIA = {
    1: "state-feedback regression Y = Delta theta*",
    2: "output-feedback regression Y = Delta theta*, k4* = 4",
    3: "elementwise |theta_tilde| non-increasing",
    4: "bounded |xi|, exponential decay of |theta_tilde|",
    5: "Omega bounds for a bounded FE regressor",
    6: "Omega bounds for an exponentially growing regressor",
    7: "|xi| decay rate nondecreasing in gamma0",
    8: "gamma1 raises the minimum decay rate",
    9: "convergence independent of the gain sign",
    10: "stabilization from a nonzero initial state",
    11: "numerics properties and bit-identical reruns",
    12: "baseline law stalls where the new law converges",
}


# ----------------------------------------------------------------------------
# reproduction


def reproduce(out_dir, decimate=DEFAULT_DECIMATE):
    """Runs everything :func:`check_acceptance` needs; returns an exit status."""
    out = Path(out_dir)
    status = EXIT_OK
    for name in PRESETS:
        status = max(status, run_experiment(load_preset(name), out / "presets" / name,
                                            decimate=decimate))
    status = max(status, run_experiment(load_preset("sf_fig1"), out / "rerun" / "sf_fig1",
                                        decimate=decimate))
    for key, (base, param, values, cross) in SWEEPS.items():
        status = max(status, run_sweep(load_preset(base), param, values, out / "sweeps" / key,
                                       cross=cross, decimate=decimate))
    return status


# ----------------------------------------------------------------------------
# checks


class _Missing(Exception):
    pass


class _Outputs:
    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.missing = set()

    def _load(self, path, label):
        if not path.exists():
            self.missing.add(label)
            raise _Missing(label)
        return path

    def summary(self, name):
        p = self._load(self.root / "presets" / name / "summary.json", name)
        return json.loads(p.read_text(encoding="utf-8"))

    def trace(self, name):
        return read_trace_csv(self._load(self.root / "presets" / name / "trace.csv", name))

    def trace_bytes(self, *parts):
        return self._load(self.root.joinpath(*parts, "trace.csv"), "/".join(parts)).read_bytes()

    def sweep(self, key):
        p = self._load(self.root / "sweeps" / key / "sweep.json", f"sweep {key}")
        return json.loads(p.read_text(encoding="utf-8"))


def _result(number, passed, detail):
    return {"criterion": number, "title": CRITERIA[number],
            "status": "pass" if passed else "fail", "detail": detail}


def trace_monotonicity(columns, theta_star):
    """Largest row-to-row increase of any ``|theta_hat_i - theta_i*|`` in a trace."""
    names = sorted((c for c in columns if c.startswith("theta_hat_")),
                   key=lambda c: int(c.rsplit("_", 1)[1]))
    th = np.column_stack([columns[c] for c in names])
    err = np.abs(th - np.asarray(theta_star, dtype=float))
    return float(np.max(np.diff(err, axis=0))) if err.shape[0] > 1 else 0.0


def _c1(o):
    s = o.summary("sf_fig1")
    star_err = float(np.max(np.abs(np.array(s["theta_star"]) - SF_THETA_STAR)))
    ok = s["max_regression_residual"] <= RESIDUAL_TOL and star_err <= 1e-12
    return _result(1, ok, {"max_residual": s["max_regression_residual"],
                           "theta_star": s["theta_star"]})


def _c2(o):
    s = o.summary("of_fig6")
    k4 = s["theta_star"][0]
    ok = s["max_regression_residual"] <= RESIDUAL_TOL and k4 == OF_K4_STAR
    return _result(2, ok, {"max_residual": s["max_regression_residual"],
                           "theta_star": s["theta_star"]})


def _c3(o):
    detail, ok = {}, True
    for name in NEW_LAW_PRESETS:
        s = o.summary(name)
        from_csv = trace_monotonicity(o.trace(name), s["theta_star"])
        worst = max(s["max_abs_theta_tilde_increase"], from_csv)
        detail[name] = worst
        ok &= worst <= MONOTONE_TOL
    return _result(3, ok, {"max_increase": detail, "tolerance": MONOTONE_TOL})


def _c4(o):
    detail, ok = {}, True
    for name in NEW_LAW_PRESETS:
        s = o.summary(name)
        bounded = s["status"] == "ok" and s["xi_norm_max"] is not None
        entry = {"bounded": bounded, "xi_norm_max": s["xi_norm_max"]}
        ok &= bounded
        if name in ("sf_fig1", "of_fig6"):
            slope = s["decay_rates"]["theta_tilde_norm"]
            ratio = s["theta_tilde_norm_final"] / s["theta_tilde_norm_initial"]
            entry.update(slope=slope, window=s["decay_rates"]["window_theta"], final_ratio=ratio)
            ok &= slope is not None and slope <= SLOPE_MAX and ratio <= FINAL_RATIO
        detail[name] = entry
    return _result(4, ok, detail)


def omega_bounds_bounded(t_end=40.0, dt=1e-4, sigma=0.5, t_e=np.pi, rel=1e-6):
    """``Delta = sin t``: ``int_0^{t_e} e^{-s tau} Delta^2 <= Omega(t) <= sup Delta^2 / sigma``."""
    t = np.arange(int(round(t_end / dt)) + 1) * dt
    delta = np.sin(t)
    omega = forgetting_response(delta ** 2, sigma, dt)
    lower = quad(lambda s: np.exp(-sigma * s) * np.sin(s) ** 2, 0.0, t_e, epsabs=0, epsrel=1e-12)[0]
    upper = np.max(delta ** 2) / sigma
    after = omega[t >= t_e - 1e-12]
    lo_ok = bool(np.all(after >= lower * (1 - rel)))
    hi_ok = bool(np.all(after <= upper * (1 + rel)))
    return lo_ok and hi_ok, {"t_e": t_e, "lower": lower, "upper": upper,
                             "omega_min": float(after.min()), "omega_max": float(after.max())}


def omega_bounds_growing(t_end=40.0, dt=1e-4, c1=1.0, c2=0.1, sigma=0.5, t_es=(0.5, 1.0, 5.0)):
    """``Delta = c1 e^{c2 t}``: ``(c1^2/c3)(1 - e^{-c3 t_e}) <= Omega(t) <= c1^2/c3``.

    The slack is the Euler quadrature bound ``dt * max integrand``.
    """
    c3 = sigma - 2 * c2
    t = np.arange(int(round(t_end / dt)) + 1) * dt
    omega = forgetting_response((c1 * np.exp(c2 * t)) ** 2, sigma, dt)
    tol = dt * c1 ** 2
    upper = c1 ** 2 / c3
    ok = True
    detail = {"upper": upper, "tolerance": tol, "omega_max": float(omega.max()), "lower": {}}
    ok &= bool(np.all(omega <= upper + tol))
    for t_e in t_es:
        lower = upper * (1 - np.exp(-c3 * t_e))
        after = omega[t >= t_e - 1e-12]
        detail["lower"][str(t_e)] = {"bound": lower, "omega_min": float(after.min())}
        ok &= bool(np.all(after >= lower - tol))
    return ok, detail


def _sweep_check(number, o, keys):
    detail, ok = {}, True
    for key in keys:
        sw = o.sweep(key)
        passed = bool(sw["assertions"]) and all(a["passed"] for a in sw["assertions"])
        detail[key] = {"window": sw["window"], "assertions": sw["assertions"]}
        ok &= passed
    return _result(number, ok, detail)


def _c9(o):
    detail, ok = {}, True
    for flipped, base in (("sf_fig2", "sf_fig1"), ("of_fig7", "of_fig6")):
        a, b = o.summary(flipped), o.summary(base)
        fa, fb = np.array(a["theta_hat_final"]), np.array(b["theta_hat_final"])
        gap = float(np.max(np.abs(fa - fb)))
        to_star = float(np.max(np.abs(fa - np.array(a["theta_star"]))))
        detail[flipped] = {"vs_" + base: gap, "vs_theta_star": to_star}
        ok &= gap <= SIGN_TOL and to_star <= SIGN_TOL
    return _result(9, ok, detail)


def _c10(o):
    detail, ok = {}, True
    for name in ("sf_fig3", "of_fig8"):
        s = o.summary(name)
        v = s["final_output_norm"]
        detail[name] = v
        ok &= s["status"] == "ok" and v is not None and v <= STABILIZE_TOL
    return _result(10, ok, detail)


def numerics_properties(n_cases=1000, max_dim=8, seed=20240601):
    """Adjugate identity, ``lambda_max(w w^T) = |w|^2`` and Lyapunov residuals."""
    rng = np.random.default_rng(seed)
    adj_worst = 0.0
    for _ in range(n_cases):
        k = int(rng.integers(1, max_dim + 1))
        m = rng.standard_normal((k, k))
        a = adjugate(m)
        scale = max(abs(det(m)), np.abs(a).max() * np.abs(m).max(), 1e-300)
        adj_worst = max(adj_worst, float(np.abs(a @ m - det(m) * np.eye(k)).max() / scale))
    eig_worst = 0.0
    for _ in range(n_cases):
        w = rng.standard_normal(int(rng.integers(1, 9))) * 10.0 ** rng.uniform(-3, 3)
        n2 = float(w @ w)
        eig_worst = max(eig_worst, abs(max_eig_outer(w) - n2) / n2)
    lyap_worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 6))
        a = rng.standard_normal((k, k))
        a -= (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(k)
        q = np.eye(k)
        p = solve_lyapunov(a, q)
        res = np.abs(a @ p + p @ a.T + q).max() / max(1.0, np.abs(p).max())
        lyap_worst = max(lyap_worst, float(res))
    return {"adjugate": adj_worst, "lambda_max": eig_worst, "lyapunov": lyap_worst}


def _c11(o):
    props = numerics_properties()
    identical = o.trace_bytes("presets", "sf_fig1") == o.trace_bytes("rerun", "sf_fig1")
    ok = (props["adjugate"] <= 1e-9 and props["lambda_max"] <= 1e-12
          and props["lyapunov"] <= 1e-9 and identical)
    return _result(11, ok, dict(props, identical_rerun=identical))


def _c12(o):
    b, n = o.summary("sf_baseline"), o.summary("sf_fig1")
    ratio = b["theta_tilde_norm_final"] / b["theta_tilde_norm_initial"]
    new_ok = _c4(o)["detail"]["sf_fig1"]
    new_ok = new_ok["slope"] is not None and new_ok["slope"] <= SLOPE_MAX \
        and new_ok["final_ratio"] <= FINAL_RATIO
    return _result(12, ratio > BASELINE_RATIO and new_ok and n["status"] == "ok",
                   {"baseline_final_ratio": ratio, "new_law_meets_criterion_4": new_ok})


_CHECKS = {
    1: _c1, 2: _c2, 3: _c3, 4: _c4,
    5: lambda o: _result(5, *omega_bounds_bounded()),
    6: lambda o: _result(6, *omega_bounds_growing()),
    7: lambda o: _sweep_check(7, o, ("sf_gamma0", "of_gamma0")),
    8: lambda o: _sweep_check(8, o, ("sf_gamma1", "of_gamma1")),
    9: _c9, 10: _c10, 11: _c11, 12: _c12,
}


def check_acceptance(out_dir, write=True):
    """Evaluates every criterion against the outputs in ``out_dir``.

    Each entry has ``status`` ``"pass"``, ``"fail"`` or ``"not run"``; the
    report's ``missing`` lists the runs that were not found.  With
    ``write=True`` the report is also saved as ``acceptance.json``.
    """
    o = _Outputs(out_dir)
    results = []
    for number, check in _CHECKS.items():
        before = set(o.missing)
        try:
            results.append(check(o))
        except _Missing:
            results.append({"criterion": number, "title": CRITERIA[number], "status": "not run",
                            "detail": {"missing": sorted(o.missing - before)}})
    report = {"passed": all(r["status"] == "pass" for r in results),
              "missing": sorted(o.missing), "criteria": results}
    if write and o.root.exists():
        (o.root / "acceptance.json").write_text(
            json.dumps(report, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    return report


def report_lines(report):
    return [f"criterion {r['criterion']:2d} {r['status'].upper():7s} {r['title']}"
            for r in report["criteria"]]


def exit_status(report):
    return EXIT_OK if report["passed"] else EXIT_FAILURE
