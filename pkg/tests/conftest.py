import numpy as np
import pytest

from surropte.data import Dataset


def make_dataset(
    n: int = 120,
    seed: int = 0,
    p: int = 2,
    confounded: bool = True,
    outcome=None,
) -> Dataset:
    """Small synthetic Dataset for unit tests.

    With ``confounded=False`` treatment is a fair coin, so both weighted and
    unweighted estimators target the same quantities. ``outcome`` overrides
    the default linear response; it receives (s, x, a, rng).
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    logits = 0.8 * x[:, 0] - 0.5 * x[:, 1] if confounded else np.zeros(n)
    a = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logits))).astype(int)
    # guard the degenerate-arm check on unlucky tiny draws
    if a.sum() == 0:
        a[0] = 1
    elif a.sum() == n:
        a[0] = 0
    s = x[:, 0] + 0.5 * a + rng.normal(scale=0.8, size=n)
    if outcome is None:
        y = 1.0 + 0.7 * s + 0.3 * x[:, 1] + 0.4 * a + rng.normal(scale=0.5, size=n)
    else:
        y = outcome(s, x, a, rng)
    names = tuple(f"x{j+1}" for j in range(p))
    return Dataset(y=y, s=s, a=a, x=x, colnames=names)


@pytest.fixture
def small_data() -> Dataset:
    return make_dataset(n=120, seed=3)


@pytest.fixture
def rct_data() -> Dataset:
    return make_dataset(n=150, seed=5, confounded=False)
