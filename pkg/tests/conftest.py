import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ghostbench.coarse_space import build_space
from ghostbench.generators import SplitMix64

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

_CRITERIA: dict[str, list[str]] = {}
_NOTES: dict[str, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach a measured figure to the summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def add(text: str) -> None:
        _NOTES.setdefault(marker.args[0], []).append(text)

    return add


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test decides")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    _CRITERIA.setdefault(marker.args[0], []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    order = ["A1", "A2", "A3", "A4", "A5", "A6", "G1", "G2", "G3", "G4"]
    for name in sorted(_CRITERIA, key=lambda k: order.index(k) if k in order else 99):
        ok = all(o == "passed" for o in _CRITERIA[name])
        extra = "; ".join(_NOTES.get(name, []))
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}" + (f"  [{extra}]" if extra else ""))


def random_graph_space(seed: int, max_points: int = 200, weighted: bool = False):
    """Random connected-or-not sparse graph metric, reproducible from ``seed``."""
    rng = SplitMix64(seed)
    n = 1 + rng.below(max_points)
    edges = []
    for i in range(1, n):
        if rng.below(10) < 9:  # occasionally disconnected
            j = rng.below(i)
            w = 1 + rng.below(3) if weighted else 1
            edges.append((i, j, w))
    for _ in range(rng.below(n + 1)):
        i, j = rng.below(n), rng.below(n)
        if i != j:
            edges.append((i, j, 1 + rng.below(3) if weighted else 1))
    return build_space(edges, n)


def unit_vectors(seed: int, n: int, count: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, n))
