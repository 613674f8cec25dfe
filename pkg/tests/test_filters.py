import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from femrac.filters import (ExtensionFilterState, FilterBankState, FirstOrderFilterState,
                            ForgettingFilterState, KreisselmeierState, bank_step, extension_step,
                            first_order_step, forgetting_response, forgetting_step,
                            kreisselmeier_step)
from femrac.numerics import DimensionError

DT = 1e-4


def run(step, state, inputs, dt=DT):
    for inp in inputs:
        state = step(state, inp, dt)
    return state


def test_first_order_single_step():
    f = first_order_step(FirstOrderFilterState.zeros(1.0, 1), [1.0], 0.1)
    np.testing.assert_allclose(f.value, [0.1])


def test_first_order_steady_state():
    c = np.array([2.0, -3.0])
    # after 20 / l seconds the error has shrunk by (1 - l dt)^n, about e^-20
    f = run(first_order_step, FirstOrderFilterState.zeros(1.0, 2), [c] * int(20 / 1e-3), 1e-3)
    assert np.all(np.abs(f.value - c) <= 1e-6 * np.abs(c))


def test_first_order_alias_free():
    f = FirstOrderFilterState.zeros(2.0, 1)
    g = first_order_step(f, [1.0], 0.1)
    assert f.value[0] == 0.0 and g.value[0] == pytest.approx(0.1)


def test_first_order_rejects_bad_input():
    with pytest.raises(ValueError):
        FirstOrderFilterState.zeros(0.0, 1)
    with pytest.raises(DimensionError):
        first_order_step(FirstOrderFilterState.zeros(1.0, 2), [1.0], DT)
    with pytest.raises(ValueError):
        first_order_step(FirstOrderFilterState.zeros(1.0, 1), [np.nan], DT)


def test_bank_single_tap_is_first_order():
    b = FilterBankState.zeros([1.0], [1.0], 2)
    f = FirstOrderFilterState.zeros(1.0, 2)
    rng = np.random.default_rng(1)
    for u in rng.normal(size=(500, 2)):
        b = bank_step(b, u, 1e-3)
        f = first_order_step(f, u, 1e-3)
    np.testing.assert_allclose(b.outputs[0], f.value, rtol=1e-14)


def test_bank_dc_gain():
    b = FilterBankState.zeros([2.0, 3.0], [1.0, 4.0], 1)
    dt = 1e-3
    for _ in range(int(30 / dt)):
        b = bank_step(b, [1.0], dt)
    np.testing.assert_allclose(b.outputs[:, 0], [2.0, 0.75], rtol=1e-6)


def test_bank_zero_input_decays():
    b = FilterBankState([1.0, 2.0], [1.0, 2.0], np.array([[1.0], [-2.0]]))
    norms = []
    for _ in range(200):
        b = bank_step(b, [0.0], 1e-2)
        norms.append(np.linalg.norm(b.outputs))
    assert np.all(np.diff(norms) < 0)


def test_bank_validation():
    with pytest.raises(ValueError):
        FilterBankState.zeros([1.0, 1.0], [1.0, 2.0], 1)
    with pytest.raises(DimensionError):
        FilterBankState.zeros([1.0], [1.0, 2.0], 1)


def test_forgetting_constant_input():
    sigma = 0.5
    f = ForgettingFilterState.zeros(sigma, 1)
    n = int(10 / 1e-3)
    f = run(forgetting_step, f, np.ones((n, 1)), 1e-3)
    t = n * 1e-3
    exact = (1 - np.exp(-sigma * t)) / sigma
    # left-endpoint Riemann sum overshoots by at most dt * (first sample)
    assert f.out[0] == pytest.approx(exact, abs=1e-3)
    assert f.out[0] <= 1 / sigma + 1e-3


def test_forgetting_limit_and_monotone():
    f = ForgettingFilterState.zeros(0.5, 1)
    outs = []
    for _ in range(5000):
        f = forgetting_step(f, [1.0], 1e-2)
        outs.append(f.out[0])
    assert np.all(np.diff(outs) > 0)
    assert outs[-1] == pytest.approx(2.0, abs=2e-2)


def test_forgetting_response_matches_step():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(400, 3))
    f = ForgettingFilterState.zeros(0.5, 3)
    ref = np.zeros_like(x)
    for k in range(x.shape[0]):
        ref[k] = f.out
        f = forgetting_step(f, x[k], 1e-2)
    np.testing.assert_allclose(forgetting_response(x, 0.5, 1e-2), ref, rtol=1e-12, atol=1e-15)


def test_extension_zero_stays_zero():
    e = ExtensionFilterState.zeros(1.0, 3)
    for _ in range(100):
        e = extension_step(e, 0.0, np.zeros(3), 1e-2)
    assert not np.any(e.zf) and not np.any(e.phif)


def test_extension_steady_state():
    e = ExtensionFilterState.zeros(1.0, 2)
    phibar = np.array([1.0, 0.0])
    for _ in range(int(30 / 1e-2)):
        e = extension_step(e, 3.0, phibar, 1e-2)
    np.testing.assert_allclose(e.phif, [[1.0, 0.0], [0.0, 0.0]], atol=1e-9)
    np.testing.assert_allclose(e.zf, [3.0, 0.0], atol=1e-9)


def test_extension_regression_identity():
    # zbar = theta^T phibar at every step implies zf = phif theta
    theta = np.array([1.5, -2.0, 0.5])
    rng = np.random.default_rng(5)
    e = ExtensionFilterState.zeros(0.5, 3)
    for phibar in rng.normal(size=(300, 3)):
        e = extension_step(e, theta @ phibar, phibar, 1e-2)
    np.testing.assert_allclose(e.zf, e.phif @ theta, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (40, 4), elements=st.floats(-100, 100)), st.floats(0.01, 10))
def test_extension_phif_psd(samples, l):
    e = ExtensionFilterState.zeros(l, 4)
    dt = min(1e-2, 0.5 / l)
    for phibar in samples:
        e = extension_step(e, 0.0, phibar, dt)
        assert np.abs(e.phif - e.phif.T).max() == 0.0
        lam = np.linalg.eigvalsh(e.phif)
        assert lam[0] >= -1e-12 * max(1.0, lam[-1])


def test_kreisselmeier_zero():
    k = KreisselmeierState.zeros([[-1.0]])
    k = kreisselmeier_step(k, 0.0, 0.0, [1.0], DT)
    assert k.eta_u[0] == 0.0 and k.eta_y[0] == 0.0


def test_kreisselmeier_first_order_step_response():
    k = KreisselmeierState.zeros([[-1.0]])
    dt = 1e-4
    n = int(3 / dt)
    for _ in range(n):
        k = kreisselmeier_step(k, 1.0, 0.0, [1.0], dt)
    assert k.eta_u[0] == pytest.approx(1 - np.exp(-3.0), abs=1e-4)
    assert k.eta_y[0] == 0.0


def test_kreisselmeier_bounded():
    psi_c = np.array([[-20.0, 1.0], [-100.0, 0.0]])
    k = KreisselmeierState.zeros(psi_c)
    dt = 1e-3
    peak = 0.0
    for i in range(int(100 / dt)):
        t = i * dt
        k = kreisselmeier_step(k, np.sin(t), np.cos(2 * t), [1.0, 0.0], dt)
        peak = max(peak, np.abs(k.eta_u).max(), np.abs(k.eta_y).max())
    assert np.isfinite(peak) and peak < 1.0


def test_kreisselmeier_validation():
    with pytest.raises(ValueError):
        KreisselmeierState.zeros([[1.0]])
    k = KreisselmeierState.zeros([[-1.0, 0.0], [0.0, -2.0]])
    with pytest.raises(ValueError):
        kreisselmeier_step(k, 1.0, 1.0, [0.0, 1.0], DT)


def test_omega_lower_bound_after_excitation():
    # scalar regressor sin(t): excitation level pi/2 over [0, pi]
    dt, sigma, t_e = 1e-3, 0.5, np.pi
    t = np.arange(0, 20, dt)
    omega = forgetting_response(np.sin(t) ** 2, sigma, dt)
    alpha = np.pi / 2
    assert np.all(omega[t >= t_e] >= np.exp(-sigma * t_e) * alpha * (1 - 1e-3))
    assert np.all(omega <= 1 / sigma + dt)
