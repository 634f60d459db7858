import numpy as np
import pytest

from selqr import ObservationSet, SimulationSpec, generate


def toy_data(n=400, seed=3, all_selected=False):
    """Small MNAR sample with one instrument and one covariate."""
    rng = np.random.default_rng(seed)
    wx = rng.multivariate_normal([2.0, 1.0], [[1.0, 0.5], [0.5, 1.0]], size=n)
    w, x = wx[:, 0], wx[:, 1]
    y_star = 1.0 + w + 2.0 * x + rng.standard_normal(n)
    if all_selected:
        d = np.ones(n, dtype=int)
    else:
        p = 1.0 / (1.0 + np.exp(2.4 - 0.6 * x - 0.6 * y_star))
        d = (rng.random(n) < p).astype(int)
    return ObservationSet(d=d, y=np.where(d == 1, y_star, np.nan),
                          w=w.reshape(-1, 1), x=x.reshape(-1, 1))


@pytest.fixture
def data_mnar():
    return toy_data()


@pytest.fixture
def data_full():
    return toy_data(all_selected=True)


@pytest.fixture
def dataset_m2():
    return generate(SimulationSpec("C", "M2", n=1000, reps=1, seed=11), 0)
