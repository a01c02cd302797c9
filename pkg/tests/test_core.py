import numpy as np
import pytest

from otflow.core import (
    ConfidenceMap,
    CostVolume,
    DimensionMismatch,
    FlowField,
    ImagePair,
    NonFiniteValue,
    OcclusionMap,
    ProbabilityVolume,
    RefineState,
    ValueOutOfRange,
    flat_index,
    grid_coords,
    validate,
)


def test_flat_index_roundtrip():
    for u, v, w in [(0, 0, 5), (4, 3, 5), (2, 7, 3)]:
        idx = flat_index(u, v, w)
        assert grid_coords(idx, w) == (u, v)
    assert flat_index(2, 1, 4) == 6


def test_flowfield_accepts_flat_data():
    f = FlowField(4, 4, np.arange(32, dtype=float), scale=1)
    assert f.data.shape == (4, 4, 2)
    assert f.u[0, 1] == 2.0
    validate(f)  # idempotent


def test_flowfield_wrong_length():
    with pytest.raises(DimensionMismatch):
        FlowField(4, 4, np.zeros(30))


def test_flowfield_rejects_nan():
    data = np.zeros((2, 2, 2))
    data[1, 1, 0] = np.nan
    with pytest.raises(NonFiniteValue):
        FlowField(2, 2, data)


def test_flowfield_rejects_bad_scale():
    with pytest.raises(ValueOutOfRange):
        FlowField(2, 2, np.zeros((2, 2, 2)), scale=2)


def test_confidence_range_enforced():
    with pytest.raises(ValueOutOfRange):
        ConfidenceMap(2, 2, np.array([[0.5, 1.2], [0.0, 1.0]]))
    ConfidenceMap(2, 2, np.array([[0.0, 1.0], [0.3, 0.7]]))


def test_occlusion_range_enforced():
    with pytest.raises(ValueOutOfRange):
        OcclusionMap(1, 1, np.array([[-0.1]]))


def test_imagepair_dimension_rules():
    ok = np.zeros((8, 8))
    with pytest.raises(DimensionMismatch):
        ImagePair(I1=np.zeros((6, 6)), I2=np.zeros((6, 6)))
    with pytest.raises(DimensionMismatch):
        ImagePair(I1=ok, I2=np.zeros((8, 12)))
    with pytest.raises(ValueOutOfRange):
        ImagePair(I1=ok + 2.0, I2=ok)
    pair = ImagePair(I1=ok, I2=ok)
    assert pair.width == 8 and pair.height == 8


def test_probability_volume_row_sums():
    data = np.full((4, 4), 0.2)
    dustbin = np.full(4, 0.2)
    P = ProbabilityVolume(h=2, w=2, data=data, dustbin_src=dustbin,
                          dustbin_tgt=np.zeros(4), corner=0.0)
    assert P.mass(0, 0, 1, 1) == pytest.approx(0.2)
    with pytest.raises(ValueOutOfRange):
        ProbabilityVolume(h=2, w=2, data=data * 2, dustbin_src=dustbin,
                          dustbin_tgt=np.zeros(4), corner=0.0)
    with pytest.raises(ValueOutOfRange):
        ProbabilityVolume(h=2, w=2, data=-data, dustbin_src=dustbin,
                          dustbin_tgt=np.zeros(4), corner=0.0)


def test_costvolume_shape_and_access():
    c = CostVolume(h=2, w=2, data=np.arange(16, dtype=float))
    assert c.score(1, 0, 0, 1) == c.data[1, 2]
    with pytest.raises(NonFiniteValue):
        CostVolume(h=1, w=2, data=np.array([[1.0, np.inf], [0.0, 0.0]]))


def test_refine_state_dimension_check():
    flow = FlowField.zeros(4, 4, scale=4)
    conf = ConfidenceMap(4, 4, np.zeros((4, 4)), scale=4)
    occ = OcclusionMap(4, 4, np.ones((4, 4)), scale=4)
    state = RefineState(flow=flow, confidence=conf, occlusion=occ)
    assert state.step == 0
    with pytest.raises(DimensionMismatch):
        RefineState(flow=FlowField.zeros(8, 4, scale=4), confidence=conf, occlusion=occ)
    with pytest.raises(ValueOutOfRange):
        RefineState(flow=FlowField.zeros(4, 4, scale=1),
                    confidence=ConfidenceMap(4, 4, np.zeros((4, 4)), scale=1),
                    occlusion=OcclusionMap(4, 4, np.ones((4, 4)), scale=1))


def test_grids_are_immutable():
    f = FlowField.zeros(4, 4)
    with pytest.raises(ValueError):
        f.data[0, 0, 0] = 1.0
