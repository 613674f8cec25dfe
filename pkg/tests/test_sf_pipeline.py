import numpy as np
import pytest

from femrac.adaptation import excitation_level
from femrac.harness import load_preset
from femrac.numerics import DimensionError
from femrac.sf_pipeline import SfConfig, SfPipeline, SfPipelineState, sf_match, sf_mix, sf_step

A = np.array([[0.0, 1.0], [4.0, 2.0]])
B = np.array([0.0, 2.0])
A_REF = np.array([[0.0, 1.0], [-8.0, -4.0]])
B_REF = np.array([0.0, 8.0])
THETA_STAR = np.array([-6.0, -3.0, 4.0])
DT = 1e-4


def replay(trace, cfg, t_stop):
    """Drives the value-level pipeline with the recorded closed-loop (x, u)."""
    x = np.column_stack([trace["x_1"], trace["x_2"]])
    u = trace["u"]
    pipe = SfPipeline(cfg)
    out = []
    for k in range(int(round(t_stop / DT)) + 1):
        pair = pipe.update(x[k], u[k], k * DT, DT)
        s = pipe.state
        out.append((s.zbar.copy(), s.phibar.copy(), s.z_A, s.z_B, s.phi, pair.Y, pair.Delta))
    return out


@pytest.fixture(scope="module")
def cfg():
    return load_preset("sf_fig1").config


@pytest.fixture(scope="module")
def replay_fig1(short_traces, cfg):
    return replay(short_traces("sf_fig1"), cfg, 3.0), short_traces("sf_fig1")


@pytest.fixture(scope="module")
def replay_fig3(short_traces, cfg):
    return replay(short_traces("sf_fig3"), cfg, 3.0), short_traces("sf_fig3")


def test_default_taps():
    c = SfConfig(A_REF, B_REF)
    np.testing.assert_array_equal(c.alphas, [1, 2, 3, 4])
    np.testing.assert_array_equal(c.betas, [1, 2, 3, 4])


def test_config_validation():
    with pytest.raises(ValueError, match="Hurwitz"):
        SfConfig(A, B_REF)
    with pytest.raises(DimensionError):
        SfConfig(A_REF, B_REF, alphas=[1, 2, 3], betas=[1, 2, 3])
    with pytest.raises(ValueError):
        SfConfig(A_REF, B_REF, alphas=[1, 1, 3, 4])
    with pytest.raises(ValueError):
        SfConfig(A_REF, B_REF, l=0.0)


def test_zero_signals_give_zero_regression(cfg):
    s = SfPipelineState.zeros(2)
    for k in range(50):
        s = sf_mix(sf_step(s, cfg, np.zeros(2), 0.0, k * DT, DT), cfg)
        pair, s = sf_match(s, cfg)
        assert not np.any(s.zbar) and not np.any(pair.Y) and pair.Delta == 0.0
        assert s.phibar[-1] > 0  # the free-response entry is the only nonzero one


@pytest.mark.parametrize("which", ["replay_fig1", "replay_fig3"])
def test_static_regression_identity(which, request):
    rows, trace = request.getfixturevalue(which)
    x0 = np.array([trace["x_1"][0], trace["x_2"][0]])
    theta_bar = np.column_stack([A, B, x0])
    for zbar, phibar, *_ in rows:
        assert np.abs(zbar - theta_bar @ phibar).max() <= 1e-6 * (1 + np.abs(phibar).max())


@pytest.mark.parametrize("which", ["replay_fig1", "replay_fig3"])
def test_mixing_identity(which, request):
    rows, _ = request.getfixturevalue(which)
    for _, _, z_a, z_b, phi, _, _ in rows:
        scale = 1e-6 * (abs(phi) + 1e-300)
        assert np.abs(z_a - phi * A).max() <= scale * np.abs(A).max()
        assert np.abs(z_b - phi * B).max() <= scale * np.abs(B).max()


@pytest.mark.parametrize("which", ["replay_fig1", "replay_fig3"])
def test_regression_pair_identity(which, request):
    rows, trace = request.getfixturevalue(which)
    for k, (*_, y, delta) in enumerate(rows):
        assert np.abs(y - delta * THETA_STAR).max() <= 1e-6 * (1 + abs(delta))
        # the compiled loop computes the same pair
        assert delta == pytest.approx(trace["Delta"][k], rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("name", ["sf_fig1", "sf_fig2", "sf_fig3"])
def test_scale_free_regression(name, short_traces):
    tr = short_traces(name)
    d = np.abs(tr["Delta"])
    res = tr["regression_residual"] * (1 + d)
    live = tr["Omega"] > 1e-300
    assert live.any()
    assert np.all(res[live] <= 1e-6 * d[live] * (1 + np.abs(THETA_STAR).max()))


@pytest.mark.parametrize("name", ["sf_fig1", "sf_fig2", "sf_fig3"])
def test_delta_nonnegative(name, short_traces):
    assert np.all(short_traces(name)["Delta"] >= 0)


@pytest.mark.parametrize("name", ["sf_fig1", "sf_fig3"])
def test_excitation_preserved(name, short_traces):
    tr = short_traces(name)
    assert excitation_level(tr.t, tr["Delta"]).level > 0


def test_extension_mode_identity(short_traces):
    trace = short_traces("sf_fig1")
    cfg = SfConfig(A_REF, B_REF, extension="extension")
    rows = replay(trace, cfg, 2.0)
    deltas = np.array([r[-1] for r in rows])
    assert np.any(deltas > 0)
    for *_, y, delta in rows:
        assert np.abs(y - delta * THETA_STAR).max() <= 1e-6 * (1 + abs(delta))


def test_step_does_not_mutate(cfg):
    s = SfPipelineState.zeros(2)
    s2 = sf_step(s, cfg, [1.0, 0.0], 1.0, 0.0, DT)
    assert not np.any(s.phib) and np.any(s2.phib)
    with pytest.raises(DimensionError):
        sf_step(s, cfg, [1.0], 1.0, 0.0, DT)
