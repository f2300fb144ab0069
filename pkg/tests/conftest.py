import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ghicopula.pipeline import FitConfig, fit_model
from ghicopula.synth import SynthConfig, synth_panel, true_bundle

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_cfg():
    return SynthConfig()


@pytest.fixture(scope="session")
def truth(synth_cfg):
    return true_bundle(synth_cfg)


@pytest.fixture(scope="session")
def panel7(synth_cfg, truth):
    return synth_panel(7, 101, synth_cfg, truth)


@pytest.fixture(scope="session")
def fitted7(panel7):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_model(panel7, FitConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""
    def record(n: int, ok: bool, detail: str):
        ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, ACCEPTANCE[n]
    yield record
    n = int(request.node.name.split("_")[2])
    ACCEPTANCE.setdefault(n, f"criterion {n}: FAIL  raised before reaching its checks")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
