import numpy as np
import pytest
from scipy import ndimage


def random_confidence(rng: np.random.Generator, shape=(12, 12, 12), n_views: int = 24) -> np.ndarray:
    """Spatially correlated vote counts in [0, n_views].

    Half of the draws are smoothed noise (blobby components of many sizes),
    the other half sparse uniform noise (many tiny components).
    """
    if rng.random() < 0.5:
        field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=rng.uniform(0.6, 2.0))
        ranks = field.ravel().argsort().argsort().reshape(shape)
        conf = (ranks * (n_views + 1)) // field.size
    else:
        conf = rng.integers(0, n_views + 1, size=shape)
        conf[rng.random(shape) < rng.uniform(0.2, 0.8)] = 0
    return conf.astype(np.int32)


def random_thresholds(rng: np.random.Generator, n_views: int = 24) -> tuple[int, int]:
    tau1 = int(rng.integers(0, n_views))
    tau2 = int(rng.integers(0, tau1 + 1))
    return tau1, tau2


def random_mask(rng: np.random.Generator, shape=(16, 16, 16)) -> np.ndarray:
    density = rng.uniform(0.05, 0.6)
    return (rng.random(shape) < density).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# (criterion number, title, passed, seconds) filled in by test_acceptance
ACCEPTANCE: list[tuple[int, str, bool, float]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, secs in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{num:2d}] {title}  ({secs:.2f} s)")
