import numpy as np
import pytest

from femrac.harness import load_preset, simulate


@pytest.fixture(scope="session")
def short_traces():
    """Full-rate traces of the new-law presets over the first 10 s."""
    cache = {}

    def get(name, t_end=10.0):
        key = (name, t_end)
        if key not in cache:
            cache[key] = simulate(load_preset(name).with_changes(t_end=t_end))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def reproduced(tmp_path_factory):
    """Output directory of a complete reproduction run, shared by the acceptance tests."""
    from femrac.acceptance import reproduce

    out = tmp_path_factory.mktemp("reproduce")
    reproduce(out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
