"""Scenario files, experiment runs, parameter sweeps and their output files.

A scenario is a JSON document (``schema_version`` 1) describing one closed-loop
run.  Polynomials are written as descending coefficient lists, so
``[1, 4, 8]`` is ``p^2 + 4p + 8``.  A state-feedback scenario looks like::

    {"schema_version": 1, "name": "sf_fig1", "mode": "state_feedback",
     "plant": {"A": [[0, 1], [4, 2]], "B": [0, 2], "x0": [0, 0]},
     "reference": {"A_ref": [[0, 1], [-8, -4]], "B_ref": [0, 8], "x0": [0, 0]},
     "law": {"kind": "new", "gamma0": 1, "gamma1": 0, "sigma": 0.5},
     "filters": {"l": 1},
     "signal": {"name": "constant", "value": 1},
     "theta0": [0, 0, 1], "dt": 1e-4, "t_end": 40}

and an output-feedback one replaces ``plant``, ``reference`` and ``filters``
with ``{"bm", "Z", "R", "y0"}``, ``{"b_ref", "Z_ref", "R_ref", "y0"}`` and
``{"psi", "l", "lambda0"}``.  Missing optional fields are filled with their
defaults when a scenario is loaded, so a loaded scenario serializes to a
complete document.
"""

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .adaptation import DEFAULT_OMEGA_FLOOR, ErzbergerError, excitation_level, ideal_gains_sf
from .numerics import DEFAULT_DT, DimensionError
from .of_pipeline import DEFAULT_MIX_TOL as OF_MIX_TOL
from .of_pipeline import ConfigurationError, OfConfig, Polynomial
from .sf_pipeline import DEFAULT_MIX_TOL, SfConfig
from .simulation import (SIGNALS, LawSpec, LtiStatePlant, StateReference, TransferFunctionPlant,
                         TransferReference, convergence_window, estimate_excitation_time,
                         excitation_onset, fit_decay_rate, make_signal, run_of, run_sf,
                         sweep_decay_rates)

SCHEMA_VERSION = 1
MODES = ("state_feedback", "output_feedback")
SWEEP_PARAMETERS = ("gamma0", "gamma1", "reference")
DEFAULT_DECIMATE = 100

PRESETS = ("sf_fig1", "sf_fig2", "sf_fig3", "sf_baseline", "of_fig6", "of_fig7", "of_fig8")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

_TOP_KEYS = {"schema_version", "name", "description", "mode", "plant", "reference", "law",
             "filters", "signal", "theta0", "dt", "t_end"}


class ScenarioError(ValueError):
    """A scenario failed validation; ``errors`` lists every failed check."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario.  ``data`` is the complete JSON document."""

    data: dict
    plant: object
    reference: object
    config: object
    law: LawSpec

    name = property(lambda self: self.data["name"])
    mode = property(lambda self: self.data["mode"])
    theta0 = property(lambda self: np.asarray(self.data["theta0"], dtype=float))
    dt = property(lambda self: float(self.data["dt"]))
    t_end = property(lambda self: float(self.data["t_end"]))

    def signal(self):
        return make_signal(self.data["signal"])

    def with_changes(self, **changes):
        """A re-validated copy; keys are top-level fields or ``law.<field>``."""
        data = json.loads(json.dumps(self.data))
        for key, value in changes.items():
            if "." in key:
                head, sub = key.split(".", 1)
                data[head][sub] = value
            else:
                data[key] = value
        return scenario_from_dict(data)


# ----------------------------------------------------------------------------
# loading and validation


def _matrix(value, path, errors, ndim):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{path}: not a numeric array")
        return None
    if ndim == 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != ndim:
        errors.append(f"{path}: expected a {ndim}-d array")
        return None
    if not np.all(np.isfinite(arr)):
        errors.append(f"{path}: entries must be finite")
        return None
    return arr


def _number(section, key, path, errors, default=None, positive=False, minimum=None):
    value = section.get(key, default)
    if value is None:
        errors.append(f"{path}.{key}: required")
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        errors.append(f"{path}.{key}: must be a finite number")
        return None
    if positive and not value > 0:
        errors.append(f"{path}.{key}: must be positive")
    if minimum is not None and value < minimum:
        errors.append(f"{path}.{key}: must be >= {minimum}")
    return value


def _section(data, key, errors):
    value = data.get(key)
    if not isinstance(value, dict):
        errors.append(f"{key}: required object")
        return {}
    return value


def _is_spd(m):
    m = np.atleast_2d(m)
    return m.shape[0] == m.shape[1] and np.allclose(m, m.T) and np.all(np.linalg.eigvalsh(m) > 0)


def _poly(value, path, errors):
    arr = _matrix(value, path, errors, 1)
    if arr is None:
        return None
    if arr.size == 0 or arr[0] != 1.0:
        errors.append(f"{path}: must be monic (leading coefficient 1)")
        return None
    return Polynomial.from_descending(arr)


def _validate_sf(data, errors):
    out = {}
    plant, ref, flt = (_section(data, k, errors) for k in ("plant", "reference", "filters"))
    A = _matrix(plant.get("A"), "plant.A", errors, 2)
    B = _matrix(plant.get("B"), "plant.B", errors, 1)
    n = None
    if A is not None and B is not None:
        n = A.shape[0]
        if A.shape != (n, n) or B.size != n:
            errors.append("plant: A must be n x n and B of length n")
            n = None
    x0 = _matrix(plant.get("x0", [0.0] * (n or 0)), "plant.x0", errors, 1)
    A_ref = _matrix(ref.get("A_ref"), "reference.A_ref", errors, 2)
    B_ref = _matrix(ref.get("B_ref"), "reference.B_ref", errors, 1)
    xr0 = _matrix(ref.get("x0", [0.0] * (n or 0)), "reference.x0", errors, 1)
    if A_ref is not None and B_ref is not None:
        if n is not None and (A_ref.shape != (n, n) or B_ref.size != n):
            errors.append("reference: A_ref and B_ref must match the plant order")
        elif A_ref.shape[0] == A_ref.shape[1] and np.any(np.linalg.eigvals(A_ref).real >= 0):
            errors.append("reference.A_ref: A_ref not Hurwitz")
    for vec, path in ((x0, "plant.x0"), (xr0, "reference.x0")):
        if vec is not None and n is not None and vec.size != n:
            errors.append(f"{path}: must have n = {n} entries")
    l_val = _number(flt, "l", "filters", errors, default=1.0, positive=True)
    if n is not None and not any(e.startswith(("plant", "reference")) for e in errors):
        try:
            out["plant"] = LtiStatePlant(A, B, x0)
        except (ValueError, DimensionError) as exc:
            errors.append(f"plant: {exc}")
        try:
            out["reference"] = StateReference(A_ref, B_ref, xr0)
        except (ValueError, DimensionError) as exc:
            errors.append(f"reference: {exc}")
        if "plant" in out and "reference" in out:
            try:
                ideal_gains_sf(A, B, A_ref, B_ref)
            except ErzbergerError as exc:
                errors.append(f"reference: {exc}")
    if "reference" in out and l_val is not None and l_val > 0:
        try:
            out["config"] = SfConfig(
                A_ref, B_ref, l=float(l_val), alphas=flt.get("alphas"), betas=flt.get("betas"),
                extension=flt.get("extension", "bank"),
                free_response=flt.get("free_response", "euler"),
                mix_tol=float(flt.get("mix_tol", DEFAULT_MIX_TOL)),
                mix_every=int(flt.get("mix_every", 1)))
        except (ValueError, DimensionError, TypeError) as exc:
            errors.append(f"filters: {exc}")
    return out, (n + 1 if n is not None else None)


def _validate_of(data, errors):
    out = {}
    plant, ref, flt = (_section(data, k, errors) for k in ("plant", "reference", "filters"))
    bm = _number(plant, "bm", "plant", errors)
    if bm == 0:
        errors.append("plant.bm: must be nonzero")
    Z = _poly(plant.get("Z"), "plant.Z", errors)
    R = _poly(plant.get("R"), "plant.R", errors)
    y0 = _number(plant, "y0", "plant", errors, default=0.0)
    b_ref = _number(ref, "b_ref", "reference", errors)
    Z_ref = _poly(ref.get("Z_ref"), "reference.Z_ref", errors)
    R_ref = _poly(ref.get("R_ref"), "reference.R_ref", errors)
    yr0 = _number(ref, "y0", "reference", errors, default=0.0)
    if R_ref is not None and not R_ref.is_hurwitz():
        errors.append("reference.R_ref: R_ref not Hurwitz")
    psi = _matrix(flt.get("psi"), "filters.psi", errors, 1)
    l_val = _number(flt, "l", "filters", errors, default=0.1, positive=True)
    lam0 = flt.get("lambda0")
    if lam0 is not None:
        lam0 = _poly(lam0, "filters.lambda0", errors)
    n = None
    if None not in (bm, Z, R, y0) and bm != 0:
        try:
            out["plant"] = TransferFunctionPlant(bm, Z, R, y0)
            n = R.degree
        except (ValueError, DimensionError) as exc:
            errors.append(f"plant: {exc}")
    if None not in (b_ref, Z_ref, R_ref, yr0) and b_ref != 0:
        try:
            out["reference"] = TransferReference(b_ref, Z_ref, R_ref, yr0)
        except ValueError as exc:
            errors.append(f"reference: {exc}")
    if "plant" in out and "reference" in out and psi is not None and l_val is not None:
        try:
            out["config"] = OfConfig(
                n, Z.degree, b_ref, Z_ref, R_ref, psi, lambda0=lam0, l=float(l_val),
                regressor=flt.get("regressor", "reduced"),
                free_response=flt.get("free_response", "euler"),
                mix_tol=float(flt.get("mix_tol", OF_MIX_TOL)),
                mix_every=int(flt.get("mix_every", 1)))
        except (ConfigurationError, ValueError, TypeError) as exc:
            errors.append(f"filters: {exc}")
    return out, (2 * n if n is not None else None)


def _validate_law(data, errors, n_theta):
    law = _section(data, "law", errors)
    kind = law.get("kind", "new")
    if kind not in ("new", "baseline"):
        errors.append("law.kind: must be 'new' or 'baseline'")
        return None
    sigma = _number(law, "sigma", "law", errors, default=0.5, positive=True)
    if kind == "new":
        g0 = _number(law, "gamma0", "law", errors, default=1.0, minimum=1)
        g1 = _number(law, "gamma1", "law", errors, default=0.0, minimum=0)
        floor = _number(law, "omega_floor", "law", errors, default=DEFAULT_OMEGA_FLOOR, minimum=0)
        if None in (sigma, g0, g1, floor) or g0 < 1 or g1 < 0 or sigma <= 0:
            return None
        return LawSpec("new", float(g0), float(g1), float(sigma), float(floor))
    mats = {}
    for key in ("Gamma", "Q"):
        if law.get(key) is None:
            mats[key] = None
            continue
        m = _matrix(law[key], f"law.{key}", errors, 2)
        if m is not None and not _is_spd(m):
            errors.append(f"law.{key}: must be symmetric positive definite")
            m = None
        mats[key] = m
    if mats["Gamma"] is not None and n_theta is not None and mats["Gamma"].shape[0] != n_theta:
        errors.append(f"law.Gamma: must be {n_theta} x {n_theta}")
    if sigma is None or sigma <= 0:
        return None
    return LawSpec("baseline", sigma=float(sigma), Gamma=mats["Gamma"], Q=mats["Q"])


def _validate_signal(data, errors):
    sig = data.get("signal")
    if not isinstance(sig, dict) or "name" not in sig:
        errors.append("signal: required object with a 'name'")
        return
    if sig["name"] not in SIGNALS:
        errors.append(f"signal.name: unknown reference signal '{sig['name']}'")
        return
    try:
        r = np.asarray(make_signal(sig)(np.linspace(0.0, 1.0, 5)), dtype=float)
        if r.shape != (5,) or not np.all(np.isfinite(r)):
            errors.append("signal: must give one finite value per time sample")
    except (TypeError, ValueError) as exc:
        errors.append(f"signal: {exc}")


def _complete(data, objs):
    """The document with every optional field filled in."""
    d = json.loads(json.dumps(data))
    d.setdefault("description", "")
    law = objs["law"]
    if law.kind == "new":
        d["law"] = {"kind": "new", "gamma0": law.gamma0, "gamma1": law.gamma1,
                    "sigma": law.sigma, "omega_floor": law.omega_floor}
    else:
        d["law"] = {"kind": "baseline", "sigma": law.sigma,
                    "Gamma": None if law.Gamma is None else np.asarray(law.Gamma).tolist(),
                    "Q": None if law.Q is None else np.asarray(law.Q).tolist()}
    cfg, plant, ref = objs["config"], objs["plant"], objs["reference"]
    if d["mode"] == "state_feedback":
        d["plant"] = {"A": plant.A.tolist(), "B": plant.B.tolist(), "x0": plant.x0.tolist()}
        d["reference"] = {"A_ref": ref.A_ref.tolist(), "B_ref": ref.B_ref.tolist(),
                          "x0": ref.x0.tolist()}
        d["filters"] = {"l": cfg.l, "alphas": cfg.alphas.tolist(), "betas": cfg.betas.tolist(),
                        "extension": cfg.extension, "free_response": cfg.free_response,
                        "mix_tol": cfg.mix_tol, "mix_every": cfg.mix_every}
    else:
        desc = lambda p: p.coeffs[::-1].tolist()
        d["plant"] = {"bm": plant.bm, "Z": desc(plant.Z), "R": desc(plant.R), "y0": plant.y0}
        d["reference"] = {"b_ref": ref.b_ref, "Z_ref": desc(ref.Z_ref), "R_ref": desc(ref.R_ref),
                          "y0": ref.y0}
        d["filters"] = {"psi": cfg.psi.tolist(), "l": cfg.l, "lambda0": desc(cfg.lambda0),
                        "regressor": cfg.regressor, "free_response": cfg.free_response,
                        "mix_tol": cfg.mix_tol, "mix_every": cfg.mix_every}
    d["theta0"] = [float(v) for v in d["theta0"]]
    d["dt"] = float(d["dt"])
    d["t_end"] = float(d["t_end"])
    return d


def scenario_from_dict(data):
    """Validates a scenario document; raises :class:`ScenarioError` listing every problem."""
    errors = []
    if not isinstance(data, dict):
        raise ScenarioError(["scenario must be a JSON object"])
    for key in sorted(set(data) - _TOP_KEYS):
        errors.append(f"{key}: unknown field")
    if data.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: must be {SCHEMA_VERSION}")
    if not isinstance(data.get("name"), str) or not data.get("name"):
        errors.append("name: required string")
    mode = data.get("mode")
    objs, n_theta = {}, None
    if mode == "state_feedback":
        objs, n_theta = _validate_sf(data, errors)
    elif mode == "output_feedback":
        objs, n_theta = _validate_of(data, errors)
    else:
        errors.append(f"mode: must be one of {list(MODES)}")
    objs["law"] = _validate_law(data, errors, n_theta)
    _validate_signal(data, errors)
    dt = _number(data, "dt", "scenario", errors, default=DEFAULT_DT, positive=True)
    t_end = _number(data, "t_end", "scenario", errors, positive=True)
    if dt is not None and t_end is not None and dt > 0 and t_end < dt:
        errors.append("scenario.t_end: must cover at least one step")
    theta0 = data.get("theta0")
    th = _matrix(theta0, "theta0", errors, 1) if theta0 is not None else None
    if theta0 is None:
        errors.append("theta0: required")
    elif th is not None:
        if n_theta is not None and th.size != n_theta:
            errors.append(f"theta0: must have {n_theta} entries")
        elif mode == "state_feedback" and th.size and th[-1] == 0:
            errors.append("theta0: the feed-forward gain k_r(0) must be nonzero")
        elif mode == "output_feedback" and th.size and th[0] == 0:
            errors.append("theta0: the feed-forward gain k_4(0) must be nonzero")
    if errors:
        raise ScenarioError(errors)
    data = dict(data, dt=dt)
    return Scenario(_complete(data, objs), objs["plant"], objs["reference"], objs["config"],
                    objs["law"])


def load_scenario(path):
    """Reads and validates a scenario file.

    ``path`` may also be the name of a shipped preset (see :data:`PRESETS`).
    """
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return load_preset(str(path))
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError([f"{path}: file not found"]) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: parse error: {exc}"]) from None
    return scenario_from_dict(data)


def load_preset(name):
    if name not in PRESETS:
        raise ScenarioError([f"unknown preset '{name}'; choose from {list(PRESETS)}"])
    text = resources.files("femrac").joinpath("presets", f"{name}.json").read_text("utf-8")
    return scenario_from_dict(json.loads(text))


def serialize(scenario):
    """The scenario as JSON text; loading it back gives the same document."""
    return json.dumps(scenario.data, indent=2, sort_keys=True) + "\n"


def save_scenario(scenario, path):
    Path(path).write_text(serialize(scenario), encoding="utf-8")


# ----------------------------------------------------------------------------
# running


def simulate(scenario):
    """Runs the scenario and returns the full-rate :class:`SimulationTrace`."""
    run = run_sf if scenario.mode == "state_feedback" else run_of
    return run(scenario.plant, scenario.reference, scenario.config, scenario.law,
               scenario.theta0, scenario.signal(), scenario.t_end, scenario.dt)


def _finite_or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


def summarize(scenario, trace):
    """Summary statistics, always from the full-rate trace."""
    tt = np.abs(trace.theta_tilde)
    tt_norm = trace.theta_tilde_norm
    inc = float(np.max(np.diff(tt, axis=0))) if tt.shape[0] > 1 else 0.0
    t_e = estimate_excitation_time(trace)
    onset = excitation_onset(trace)
    rates = {"theta_tilde_norm": None, "xi_norm": None, "window_theta": None, "window_xi": None}
    for name, key in (("theta_tilde_norm", "window_theta"), ("xi_norm", "window_xi")):
        w = convergence_window(trace, name)
        if w is not None and w[1] > w[0]:
            rates[name] = fit_decay_rate(trace, name, w)
            rates[key] = list(w)
    exc = {"t_onset": onset, "t_e": t_e, "alpha_to_t_e": 0.0, "alpha_total": 0.0}
    if t_e is not None:
        sel = trace.t <= t_e
        exc["alpha_to_t_e"] = excitation_level(trace.t[sel], trace["Delta"][sel]).level
    exc["alpha_total"] = excitation_level(trace.t, trace["Delta"]).level
    if scenario.mode == "state_feedback":
        n = scenario.plant.n
        final_out = float(np.linalg.norm([trace[f"x_{i + 1}"][-1] for i in range(n)]))
    else:
        final_out = float(abs(trace["y"][-1]))
    return {
        "name": scenario.name,
        "mode": scenario.mode,
        "law": scenario.law.kind,
        "status": "ok" if trace.failed_at is None else "overflow",
        "failed_at": trace.failed_at,
        "t_final": float(trace.t[-1]),
        "dt": trace.dt,
        "theta_star": trace.theta_star.tolist(),
        "theta_hat_final": trace.theta_hat[-1].tolist(),
        "theta_tilde_norm_initial": float(tt_norm[0]),
        "theta_tilde_norm_final": float(tt_norm[-1]),
        "max_abs_theta_tilde_increase": inc,
        "xi_norm_max": _finite_or_none(np.max(trace["xi_norm"])),
        "xi_norm_final": _finite_or_none(trace["xi_norm"][-1]),
        "final_output_norm": _finite_or_none(final_out),
        "max_regression_residual": _finite_or_none(np.max(trace["regression_residual"])),
        "decay_rates": rates,
        "excitation": exc,
        "meta": trace.meta,
    }


def write_trace_csv(trace, path, decimate=DEFAULT_DECIMATE):
    """UTF-8 CSV with a header row; floats are written with full precision."""
    cols = trace.decimated(decimate)
    names = list(cols)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(cols[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])


def read_trace_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, j] for j, name in enumerate(header)}


def write_plots(scenario, trace, out_dir):
    """Static PNG panels: states or output, gains, error norms and Omega."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = trace.t
    fig, ax = plt.subplots(2, 2, figsize=(10, 7))
    if scenario.mode == "state_feedback":
        for i in range(scenario.plant.n):
            ax[0, 0].plot(t, trace[f"x_{i + 1}"], label=f"x{i + 1}")
            ax[0, 0].plot(t, trace[f"x_ref_{i + 1}"], "--", label=f"x{i + 1} ref")
    else:
        ax[0, 0].plot(t, trace["y"], label="y")
        ax[0, 0].plot(t, trace["y_ref"], "--", label="y ref")
    ax[0, 0].legend()
    ax[0, 0].set_title("tracking")
    ax[0, 1].plot(t, trace.theta_hat)
    ax[0, 1].set_title("adjustable gains")
    ax[1, 0].semilogy(t, np.maximum(trace["xi_norm"], 1e-300))
    ax[1, 0].set_title("|xi|")
    ax[1, 1].plot(t, trace["Omega"])
    ax[1, 1].set_title("Omega")
    for a in ax.flat:
        a.set_xlabel("t, s")
    fig.tight_layout()
    path = Path(out_dir) / "plots.png"
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_outputs(scenario, trace, out_dir, decimate=DEFAULT_DECIMATE, plots=False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(scenario, trace)
    write_trace_csv(trace, out / "trace.csv", decimate)
    _write_json(out / "summary.json", summary)
    save_scenario(scenario, out / "scenario.json")
    if plots:
        write_plots(scenario, trace, out)
    return summary


def run_experiment(scenario, out_dir, plots=False, decimate=DEFAULT_DECIMATE):
    """Runs one scenario and writes its outputs; returns an exit status.

    On overflow the rows up to the failure are still written and the
    status is :data:`EXIT_FAILURE`.
    """
    if int(decimate) < 1:
        raise ScenarioError(["decimate: must be >= 1"])
    trace = simulate(scenario)
    summary = write_outputs(scenario, trace, out_dir, decimate, plots)
    return EXIT_OK if summary["status"] == "ok" else EXIT_FAILURE


# ----------------------------------------------------------------------------
# sweeps


def _value_label(parameter, value):
    if parameter == "reference":
        params = "_".join(f"{k}{v}" for k, v in sorted(value.items()) if k != "name")
        return value["name"] + (f"_{params}" if params else "")
    return f"{float(value):g}"


def _apply(scenario, parameter, value):
    if parameter == "reference":
        return scenario.with_changes(signal=dict(value))
    return scenario.with_changes(**{f"law.{parameter}": float(value)})


def _check_sweep_values(parameter, values, path="values"):
    if parameter not in SWEEP_PARAMETERS:
        raise ScenarioError([f"parameter: must be one of {list(SWEEP_PARAMETERS)}"])
    if not values:
        raise ScenarioError([f"{path}: the value list is empty"])
    errors = []
    for i, v in enumerate(values):
        if parameter == "reference":
            if not isinstance(v, dict) or v.get("name") not in SIGNALS:
                errors.append(f"{path}[{i}]: not a known reference signal")
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            errors.append(f"{path}[{i}]: must be a number")
    if errors:
        raise ScenarioError(errors)


def run_sweep(base, parameter, values, out_dir, cross=None, decimate=DEFAULT_DECIMATE):
    """One sub-run per value (per grid point with ``cross = (parameter, values)``).

    Writes every sub-run under ``out_dir`` and a ``sweep.json`` table with
    the fitted ``|xi|`` decay rates and the ordering checks.  A failing
    sub-run is recorded and the sweep carries on.  Returns an exit status.
    """
    _check_sweep_values(parameter, values)
    if base.law.kind != "new" and parameter in ("gamma0", "gamma1"):
        raise ScenarioError(["law.kind: gain sweeps need the normalized law"])
    if cross is not None:
        _check_sweep_values(cross[0], cross[1], "cross values")
        if cross[0] == parameter:
            raise ScenarioError(["cross: must differ from the swept parameter"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = [(v, c) for v in values for c in (cross[1] if cross else [None])]
    runs, traces = [], []
    for v, c in grid:
        label = f"{parameter}={_value_label(parameter, v)}"
        try:
            sc = _apply(base, parameter, v)
            if c is not None:
                label += f",{cross[0]}={_value_label(cross[0], c)}"
                sc = _apply(sc, cross[0], c)
            trace = simulate(sc)
            write_outputs(sc, trace, out / label, decimate)
            ok = trace.failed_at is None
            runs.append({"label": label, "value": v, "cross_value": c,
                         "status": "ok" if ok else "overflow", "rate": None})
            traces.append(trace if ok else None)
        except (ScenarioError, ValueError, ArithmeticError) as exc:
            runs.append({"label": label, "value": v, "cross_value": c, "status": "error",
                         "error": str(exc), "rate": None})
            traces.append(None)
    good = [tr for tr in traces if tr is not None]
    window = None
    if good:
        rates, window = sweep_decay_rates(good)
        it = iter(rates)
        for run, tr in zip(runs, traces):
            if tr is not None:
                run["rate"] = next(it)
    report = {"parameter": parameter, "values": list(values),
              "cross": None if cross is None else {"parameter": cross[0], "values": cross[1]},
              "scenario": base.name, "window": None if window is None else list(window),
              "runs": runs, "assertions": _sweep_assertions(parameter, values, cross, runs)}
    _write_json(out / "sweep.json", report)
    save_scenario(base, out / "base_scenario.json")
    all_ok = all(r["status"] == "ok" for r in runs)
    return EXIT_OK if all_ok and all(a["passed"] for a in report["assertions"]) else EXIT_FAILURE


def _sweep_assertions(parameter, values, cross, runs):
    if parameter == "reference":
        return []
    order = sorted(set(float(v) for v in values))
    by_value = {}
    for r in runs:
        by_value.setdefault(float(r["value"]), []).append(r["rate"])
    if any(rt is None for rs in by_value.values() for rt in rs):
        return [{"name": "complete", "passed": False, "detail": "a sub-run failed"}]
    if cross is None:
        seq = [by_value[v][0] for v in order]
        ok = all(b >= a for a, b in zip(seq, seq[1:]))
        return [{"name": f"|xi| decay rate nondecreasing in {parameter}", "passed": ok,
                 "values": order, "rates": seq}]
    mins = [min(by_value[v]) for v in order]
    ok = all(b > a for a, b in zip(mins, mins[1:]))
    return [{"name": f"min-over-{cross[0]} decay rate increasing in {parameter}",
             "passed": ok, "values": order, "min_rates": mins}]
