import numpy as np
import pytest

from gsocc.core import GaussianSet

# One (criterion number, passed, detail) entry per acceptance criterion;
# printed by pytest_terminal_summary so the lines survive output capture.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for num, ok, detail in sorted(ACCEPTANCE_RESULTS):
            status = "PASS" if ok else "FAIL"
            terminalreporter.write_line(f"[criterion {num:2d}] {status}  {detail}")


def random_unit_quaternions(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_gaussian_set(rng, n, num_classes=3, lo=(-8.0, -8.0, -4.0), hi=(8.0, 8.0, 4.0),
                        scale_range=(0.05, 0.6)):
    return GaussianSet(
        means=rng.uniform(lo, hi, size=(n, 3)),
        scales=rng.uniform(*scale_range, size=(n, 3)),
        rotations=random_unit_quaternions(rng, n),
        opacities=rng.uniform(0.05, 0.95, size=n),
        semantics=rng.standard_normal((n, num_classes)) * 2.0,
        source_index=np.zeros((n, 3), dtype=np.uint32),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
