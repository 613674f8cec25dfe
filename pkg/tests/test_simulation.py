import numpy as np
import pytest

from femrac.harness import load_preset, scenario_from_dict, simulate
from femrac.numerics import DimensionError, NumericOverflowError
from femrac.of_pipeline import Polynomial
from femrac.sf_pipeline import SfConfig
from femrac.simulation import (SIGNALS, LawSpec, LtiStatePlant, StateReference,
                               TransferFunctionPlant, TransferReference, decay_window,
                               estimate_excitation_time, fit_decay_rate, make_signal,
                               register_signal, run_sf, sweep_decay_rates)

A_REF = np.array([[0.0, 1.0], [-8.0, -4.0]])
B_REF = np.array([0.0, 8.0])
SF_STAR = [-6.0, -3.0, 4.0]
OF_STAR = [4.0, -6.0, -3.0, -15.0]


@pytest.mark.parametrize("signal", [{"name": "constant", "value": 1.0}, {"name": "sine"}])
def test_sf_fixed_point(signal):
    tr = simulate(load_preset("sf_fig1").with_changes(theta0=SF_STAR, signal=signal))
    assert np.abs(tr["x_1"] - tr["x_ref_1"]).max() <= 1e-9
    assert np.abs(tr["x_2"] - tr["x_ref_2"]).max() <= 1e-9
    assert np.abs(tr.theta_tilde).max() <= 1e-9


@pytest.mark.parametrize("signal", [{"name": "constant", "value": 1.0}, {"name": "sine"}])
def test_of_fixed_point(signal):
    tr = simulate(load_preset("of_fig6").with_changes(theta0=OF_STAR, signal=signal))
    assert np.abs(tr["y"] - tr["y_ref"]).max() <= 1e-9
    assert np.abs(tr.theta_tilde).max() <= 1e-9


def test_error_dynamics_consistency(short_traces):
    """Finite differences of the recorded error obey e' = A_ref e + B theta_tilde^T omega."""
    tr = short_traces("sf_fig1")
    B = np.array([0.0, 2.0])
    x = np.column_stack([tr["x_1"], tr["x_2"]])
    e = x - np.column_stack([tr["x_ref_1"], tr["x_ref_2"]])
    w = np.column_stack([x, tr["r"]])
    th_t = tr.theta_tilde
    rhs = e[:-1] @ A_REF.T + np.outer(np.sum(th_t[:-1] * w[:-1], axis=1), B)
    fd = np.diff(e, axis=0) / tr.dt
    states = np.abs(np.column_stack([x, th_t])).max()
    assert np.abs(fd - rhs).max() <= 10 * tr.dt * states


def test_lambda_max_column(short_traces):
    tr = short_traces("sf_fig1")
    w2 = tr["x_1"] ** 2 + tr["x_2"] ** 2 + tr["r"] ** 2
    np.testing.assert_allclose(tr["lambda_max"], w2, rtol=1e-15)


@pytest.mark.parametrize("name", ["sf_fig1", "of_fig6"])
def test_xi_bounded_and_decaying(name, short_traces):
    tr = short_traces(name)
    xi = tr["xi_norm"]
    assert np.all(np.isfinite(xi)) and np.all(xi >= 0)
    assert xi[-1] < 1e-3 * xi.max()


def test_fit_decay_rate_examples():
    t = np.linspace(0, 5, 501)
    assert fit_decay_rate(t, np.exp(-2 * t)) == pytest.approx(-2.0, abs=1e-6)
    assert fit_decay_rate(t, np.exp(-2 * t), anchored=True) == pytest.approx(-2.0, abs=1e-6)
    assert fit_decay_rate(t, np.full(t.size, 3.0)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_decay_rate(t, np.zeros(t.size))
    with pytest.raises(ValueError):
        fit_decay_rate(t, np.exp(-t), window=(1.0, 1.001))
    with pytest.raises(DimensionError):
        fit_decay_rate(t, np.ones(3))


def test_decay_window_stops_at_floor():
    t = np.linspace(0, 50, 5001)
    q = np.maximum(np.exp(-t), 1e-16)
    start, stop = decay_window(t, q, 1.0)
    assert start == 1.0
    assert np.exp(-stop) >= 1e-8 * np.exp(-1.0) > np.exp(-stop - 0.02)


def test_sf_decay_after_excitation(short_traces):
    tr = short_traces("sf_fig1")
    t_e = estimate_excitation_time(tr)
    assert 0 < t_e < 5
    w = decay_window(tr.t, tr.theta_tilde_norm, t_e)
    assert fit_decay_rate(tr, "theta_tilde_norm", w) < 0


def test_sweep_rates_share_window(short_traces):
    rates, window = sweep_decay_rates([short_traces("sf_fig1"), short_traces("sf_fig2")])
    assert window[0] == 0.0 and window[1] > 1.0
    assert all(r > 0 for r in rates)


def test_overflow_is_reported():
    plant = LtiStatePlant([[0.0, 1.0], [400.0, 200.0]], [0.0, 2.0])
    ref = StateReference(A_REF, B_REF)
    cfg = SfConfig(A_REF, B_REF, mix_tol=1.0)  # never mixes, so nothing adapts
    sig = make_signal({"name": "constant", "value": 1.0})
    tr = run_sf(plant, ref, cfg, LawSpec(), [0.0, 0.0, 1.0], sig, 10.0, 1e-3)
    assert tr.failed_at is not None and 0 < tr.failed_at < 10
    assert tr.t[-1] == tr.failed_at
    with pytest.raises(NumericOverflowError) as info:
        run_sf(plant, ref, cfg, LawSpec(), [0.0, 0.0, 1.0], sig, 10.0, 1e-3,
               raise_on_overflow=True)
    assert info.value.t == tr.failed_at and info.value.partial is not None


def test_plant_validation():
    with pytest.raises(ValueError, match="controllable"):
        LtiStatePlant([[1.0, 0.0], [0.0, 2.0]], [1.0, 0.0])
    with pytest.raises(DimensionError):
        LtiStatePlant(np.eye(2), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="minimum phase"):
        TransferFunctionPlant(1.0, Polynomial([-1.0, 1.0]), Polynomial([1.0, 2.0, 1.0]))
    with pytest.raises(ValueError, match="proper"):
        TransferFunctionPlant(1.0, Polynomial([1.0, 1.0]), Polynomial([1.0, 1.0]))
    with pytest.raises(ValueError, match="Hurwitz"):
        StateReference([[0.0, 1.0], [4.0, 2.0]], B_REF)
    with pytest.raises(ValueError, match="Hurwitz"):
        TransferReference(8.0, Polynomial([1.0]), Polynomial([-8.0, 4.0, 1.0]))


def test_canonical_realization():
    plant = TransferFunctionPlant(2.0, Polynomial([1.0]), Polynomial([-4.0, -2.0, 1.0]), y0=1.0)
    np.testing.assert_array_equal(plant.A_o, [[2.0, 1.0], [4.0, 0.0]])
    np.testing.assert_array_equal(plant.B_o, [0.0, 2.0])
    np.testing.assert_array_equal(plant.x0, [1.0, 0.0])
    s = 0.7 + 0.3j
    tf = plant.C @ np.linalg.solve(s * np.eye(2) - plant.A_o, plant.B_o)
    assert tf == pytest.approx(2.0 / (s * s - 2 * s - 4))


def test_initial_feedforward_gain_required():
    sc = load_preset("sf_fig1")
    with pytest.raises(ValueError):
        run_sf(sc.plant, sc.reference, sc.config, sc.law, [0.0, 0.0, 0.0], sc.signal(), 1.0)


def test_law_spec_validation():
    with pytest.raises(ValueError):
        LawSpec(gamma0=0.5)
    with pytest.raises(ValueError):
        LawSpec(kind="other")
    with pytest.raises(ValueError):
        LawSpec(sigma=0.0)


def test_signals():
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(make_signal({"name": "exponential"})(t), np.exp(-t))
    np.testing.assert_allclose(make_signal({"name": "sine", "amplitude": 2.0})(t), 2 * np.sin(t))
    multi = make_signal({"name": "multisine", "components": [{"frequency": 1.0},
                                                             {"frequency": 3.0}]})
    np.testing.assert_allclose(multi(t), np.sin(t) + np.sin(3 * t))
    with pytest.raises(KeyError):
        make_signal({"name": "nope"})
    register_signal("ramp", lambda slope=1.0: (lambda tt: slope * tt))
    try:
        np.testing.assert_allclose(make_signal({"name": "ramp", "slope": 2.0})(t), 2 * t)
    finally:
        SIGNALS.pop("ramp")


def test_baseline_of_flags_reference_only():
    sc = load_preset("of_fig6")
    data = dict(sc.data, law={"kind": "baseline"}, t_end=1.0)
    tr = simulate(scenario_from_dict(data))
    assert tr.meta["law"] == "baseline"
    assert tr.meta["spr"] is False and tr.meta["reference_only"] is True
