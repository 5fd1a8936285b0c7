import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def solid(h, w, rgb):
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = rgb
    return img


@pytest.fixture
def square_image():
    """64x64 dark background with a bright red centered 24x24 square."""
    img = solid(64, 64, (30, 40, 50))
    img[20:44, 20:44] = (230, 30, 30)
    return img


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: test_acceptance records (number, passed, detail) here
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
