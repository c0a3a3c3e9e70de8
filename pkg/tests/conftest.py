import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vrpipe.preprocess import preprocess
from vrpipe.scene import canonical_camera, synth_layered, synth_random

settings.register_profile(
    "vrpipe", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("vrpipe")

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, text = marker.args
    entry = _criteria.setdefault(n, {"text": text, "ok": True, "ran": False})
    if rep.when == "call" or rep.failed:
        entry["ran"] = True
        if rep.failed:
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if e["ran"] else "SKIP")
        terminalreporter.write_line(f"[{status}] criterion {n}: {e['text']}")


@pytest.fixture
def small_camera():
    return canonical_camera(48, 40)


@pytest.fixture
def small_random_prims(small_camera):
    return preprocess(synth_random(30, seed=11), small_camera), small_camera


@pytest.fixture(scope="session")
def layered_small():
    cam = canonical_camera(64, 64)
    return preprocess(synth_layered(24, 4, 0.5, 5, width=64, height=64), cam), cam


def max_abs(a, b):
    return float(np.max(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64)))) if np.size(a) else 0.0
