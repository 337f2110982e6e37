import numpy as np
import pytest

SEEDS = (1, 2, 3)


@pytest.fixture(params=SEEDS, ids=lambda s: f"seed{s}")
def rng(request):
    return np.random.default_rng(request.param)


def random_spd(rng, cond_max=50.0):
    """Random SPD 2x2 matrix with condition number at most ``cond_max``."""
    th = rng.uniform(0, np.pi)
    lam = np.exp(rng.uniform(-1, 1, size=2) * 0.5 * np.log(cond_max))
    c, s = np.cos(th), np.sin(th)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag(lam) @ rot.T


def random_right_half(rng, n, scale=10.0):
    re = np.exp(rng.uniform(np.log(1e-3), np.log(scale), n))
    im = rng.uniform(-scale, scale, n)
    return re + 1j * im
