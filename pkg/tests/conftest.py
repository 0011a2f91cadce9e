import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

entries = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def complex_matrices(draw, min_r=1, max_r=5):
    r = draw(st.integers(min_r, max_r))
    re = draw(arrays(np.float64, (r, r), elements=entries))
    im = draw(arrays(np.float64, (r, r), elements=entries))
    return re + 1j * im


@st.composite
def unitaries(draw, r):
    seed = draw(st.integers(0, 2**32 - 1))
    from aluthge.linalg import haar_unitary

    return haar_unitary(r, np.random.default_rng(seed))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def ginibre(r, rng):
    return rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))


def pytest_terminal_summary(terminalreporter):
    import sys
    acc = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acc.RESULTS, key=lambda k: int(k.split()[0][1:])):
        terminalreporter.write_line(acc.RESULTS[key])
