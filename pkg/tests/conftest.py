import numpy as np
import pytest
from hypothesis import strategies as st

finite = st.floats(-20.0, 20.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def unit_quats(draw):
    q = np.array(draw(st.tuples(*(st.floats(-1, 1) for _ in range(4)))))
    n = np.linalg.norm(q)
    if n < 1e-3:
        q, n = np.array([1.0, 0, 0, 0]), 1.0
    return q / n


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_quats(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def sign_free_error(a, b):
    """Componentwise error up to the quaternion double cover."""
    a, b = np.asarray(a), np.asarray(b)
    return np.minimum(np.abs(a - b).max(axis=-1), np.abs(a + b).max(axis=-1))


ACCEPTANCE_LINES = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(ok, detail)``; asserts ``ok``."""

    def _report(ok, detail):
        label = request.node.name.replace("test_", "", 1)
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
