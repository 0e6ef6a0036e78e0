import numpy as np
import pytest

from kernelfin import _backend

BACKENDS = sorted(_backend.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the hot kernels through each importable backend in turn."""
    impl = _backend.available_backends()[request.param]
    for name in ("lap_dense", "garch_filter", "garch_unfilter"):
        monkeypatch.setattr(_backend, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one criterion outcome: ``acceptance(number, title, ok, detail)``."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, title: str, ok: bool, detail: str):
        lines.append((number, f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title}: {detail}"))
        print(lines[-1][1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
