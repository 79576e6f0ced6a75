import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_density(rng, rank=None):
    """Random 4x4 density matrix (Ginibre construction)."""
    k = rank or 4
    g = rng.standard_normal((4, k)) + 1j * rng.standard_normal((4, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, n=4):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA.append((props["criterion"], report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"criterion {name}: {'PASS' if passed else 'FAIL'} | {detail}")
