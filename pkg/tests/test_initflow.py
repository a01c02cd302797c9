import numpy as np
import pytest

import oracles
from conftest import random_probability_volume
from otflow.core import ProbabilityVolume, ValueOutOfRange, flat_index
from otflow.initflow import WindowSpec, init_confidence, init_flow, init_occlusion


def _point_mass_volume(h, w, pairs, dustbin_rest=True):
    """Plan with all of each listed source row's mass on one target."""
    n = h * w
    data = np.zeros((n, n))
    dustbin = np.ones(n)
    for (u, v), (u2, v2) in pairs.items():
        i = flat_index(u, v, w)
        data[i, flat_index(u2, v2, w)] = 1.0
        dustbin[i] = 0.0
    return ProbabilityVolume(h=h, w=w, data=data, dustbin_src=dustbin,
                             dustbin_tgt=np.zeros(n), corner=0.0)


def test_window_spec_validation():
    with pytest.raises(ValueOutOfRange):
        WindowSpec(radius=-1)
    with pytest.raises(ValueOutOfRange):
        WindowSpec(eps_denom=0.0)


def test_point_mass_gives_exact_integer_flow():
    P = _point_mass_volume(8, 8, {(2, 2): (5, 3)})
    flow = init_flow(P, WindowSpec(radius=1))
    assert flow.u[2, 2] == 5.0 - 2.0
    assert flow.v[2, 2] == 3.0 - 2.0
    assert flow.scale == 4


def test_uniform_window_centroid_is_center():
    h = w = 9
    n = h * w
    data = np.zeros((n, n))
    i = flat_index(4, 4, w)
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            data[i, flat_index(4 + du, 4 + dv, w)] = 1.0 / 9.0
    P = ProbabilityVolume(h=h, w=w, data=data, dustbin_src=1.0 - data.sum(axis=1),
                          dustbin_tgt=np.zeros(n), corner=0.0)
    flow = init_flow(P, WindowSpec(radius=1))
    assert flow.u[4, 4] == pytest.approx(0.0, abs=1e-12)
    assert flow.v[4, 4] == pytest.approx(0.0, abs=1e-12)


def test_all_zero_row_falls_back_to_argmax_tiebreak():
    h = w = 4
    n = h * w
    data = np.zeros((n, n))
    P = ProbabilityVolume(h=h, w=w, data=data, dustbin_src=np.ones(n),
                          dustbin_tgt=np.zeros(n), corner=0.0)
    flow = init_flow(P, WindowSpec(radius=2))
    # argmax of an all-zero row is target index 0 = (0, 0)
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    assert np.array_equal(flow.u, 0.0 - us)
    assert np.array_equal(flow.v, 0.0 - vs)


def test_confidence_point_mass_and_dustbin():
    P = _point_mass_volume(4, 4, {(1, 1): (2, 2)})
    conf = init_confidence(P, WindowSpec(radius=1))
    assert conf.data[1, 1] == pytest.approx(1.0, abs=1e-12)
    occ = init_occlusion(P)
    assert occ.data[1, 1] == pytest.approx(1.0, abs=1e-12)
    # every other row is pure dustbin
    assert occ.data[0, 0] == 0.0
    assert conf.data[0, 0] == 0.0


def test_occlusion_is_dustbin_complement(rng):
    P = random_probability_volume(rng, 3, 4)
    occ = init_occlusion(P)
    expected = 1.0 - P.dustbin_src.reshape(3, 4)
    assert np.allclose(occ.data, expected, atol=1e-12)


@pytest.mark.parametrize("radius", [0, 1, 2, 3])
def test_matches_scalar_oracles(rng, radius):
    for _ in range(5):
        h, w = rng.integers(2, 7, 2)
        P = random_probability_volume(rng, int(h), int(w))
        spec = WindowSpec(radius=radius)
        flow = init_flow(P, spec)
        conf = init_confidence(P, spec)
        occ = init_occlusion(P)

        u_hat, v_hat = oracles.window_centroid(P.data, P.h, P.w, radius, spec.eps_denom)
        mass = oracles.window_mass(P.data, P.h, P.w, radius)
        marg = oracles.full_marginal(P.data)
        us, vs = np.meshgrid(np.arange(P.w), np.arange(P.h))
        assert np.allclose(flow.u, u_hat.reshape(P.h, P.w) - us, atol=1e-12)
        assert np.allclose(flow.v, v_hat.reshape(P.h, P.w) - vs, atol=1e-12)
        assert np.allclose(conf.data, mass.reshape(P.h, P.w), atol=1e-12)
        assert np.allclose(occ.data, marg.reshape(P.h, P.w), atol=1e-12)


def test_confidence_never_exceeds_occlusion(rng):
    for _ in range(20):
        h, w = rng.integers(2, 7, 2)
        P = random_probability_volume(rng, int(h), int(w))
        conf = init_confidence(P, WindowSpec(radius=int(rng.integers(0, 4))))
        occ = init_occlusion(P)
        assert np.all(conf.data <= occ.data + 1e-15)


def test_window_growth_monotonicity(rng):
    P = random_probability_volume(rng, 4, 4)
    prev = None
    for radius in range(4):
        conf = init_confidence(P, WindowSpec(radius=radius))
        if prev is not None:
            assert np.all(conf.data >= prev - 1e-15)
        prev = conf.data


def test_flow_stays_inside_grid(rng):
    for _ in range(10):
        P = random_probability_volume(rng, 5, 3)
        flow = init_flow(P, WindowSpec(radius=2))
        us, vs = np.meshgrid(np.arange(3), np.arange(5))
        assert np.all(flow.u + us >= 0) and np.all(flow.u + us <= 2)
        assert np.all(flow.v + vs >= 0) and np.all(flow.v + vs <= 4)
