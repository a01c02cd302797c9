import numpy as np
import pytest

from otflow.core import ProbabilityVolume


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_probability_volume(rng, h, w, dustbin_frac=0.3):
    """Row-stochastic random plan with dustbin masses, for oracle tests."""
    n = h * w
    raw = rng.uniform(0.0, 1.0, (n, n + 1))
    raw[:, n] *= dustbin_frac * n / max(n, 1)
    raw /= raw.sum(axis=1, keepdims=True)
    dustbin_tgt = rng.uniform(0.0, 1.0, n)
    return ProbabilityVolume(
        h=h,
        w=w,
        data=raw[:, :n],
        dustbin_src=raw[:, n],
        dustbin_tgt=dustbin_tgt,
        corner=float(rng.uniform(0.0, n)),
    )
