import numpy as np
import pytest

import oracles
from otflow.core import (
    ConfidenceMap,
    CostVolume,
    DimensionMismatch,
    FlowField,
    OcclusionMap,
    RefineState,
    ValueOutOfRange,
)
from otflow.features import extract_features
from otflow.evalio import band_noise
from otflow.refine import (
    IterationExhausted,
    RefineConfig,
    Residuals,
    UpsampleWeights,
    apply_residuals,
    bilinear_upsample_weights,
    compute_local_residuals,
    convex_upsample,
    correlation_lookup,
    diffuse_aggregate,
    global_refine,
    local_refine_step,
    run_refinement,
)


def _conf(width, height, values, scale=4):
    return ConfidenceMap(width, height, values, scale=scale)


def _flow(width, height, du, dv, scale=4):
    return FlowField.constant(width, height, du, dv, scale)


def _noise_features(w, h, seed=0):
    return extract_features(band_noise(4 * h, 4 * w, seed))


def test_config_validation():
    with pytest.raises(ValueOutOfRange):
        RefineConfig(conf_threshold=0.0)
    with pytest.raises(ValueOutOfRange):
        RefineConfig(steps=-1)
    with pytest.raises(ValueOutOfRange):
        RefineConfig(logit_clamp=0.5)


# ---------------------------------------------------------------- gating

def test_gate_keeps_confident_pixels_bitwise(rng):
    h = w = 6
    flow_data = rng.standard_normal((h, w, 2))
    F0 = FlowField(w, h, flow_data, scale=4)
    conf = _conf(w, h, np.full((h, w), 0.9))
    out = global_refine(F0, conf, _noise_features(w, h), lambda g, c, f: FlowField.zeros(w, h, 4),
                        RefineConfig())
    assert np.array_equal(out.data, F0.data)


def test_gate_replaces_low_confidence_pixels():
    h = w = 4
    F0 = _flow(w, h, 1.0, 2.0)
    conf = _conf(w, h, np.zeros((h, w)))
    replacement = _flow(w, h, -3.0, 5.0)
    out = global_refine(F0, conf, _noise_features(w, h), lambda g, c, f: replacement,
                        RefineConfig())
    assert np.array_equal(out.data, replacement.data)


def test_gate_threshold_is_inclusive():
    h = w = 2
    F0 = _flow(w, h, 1.0, 1.0)
    conf = _conf(w, h, np.full((h, w), 0.2))
    out = global_refine(F0, conf, _noise_features(w, h), lambda g, c, f: FlowField.zeros(w, h, 4),
                        RefineConfig(conf_threshold=0.2))
    assert np.array_equal(out.data, F0.data)


# ------------------------------------------------------------- diffusion

def test_diffusion_zero_confidence_is_identity(rng):
    h = w = 5
    F0 = FlowField(w, h, rng.standard_normal((h, w, 2)), scale=4)
    conf = _conf(w, h, np.zeros((h, w)))
    out = diffuse_aggregate(_noise_features(w, h), conf, F0, RefineConfig())
    assert np.array_equal(out.data, F0.data)


def test_diffusion_constant_field_fixed_point(rng):
    h = w = 5
    F0 = _flow(w, h, 7.0, -3.0)
    conf = _conf(w, h, rng.uniform(0, 1, (h, w)))
    out = diffuse_aggregate(_noise_features(w, h), conf, F0, RefineConfig())
    assert np.allclose(out.data, F0.data, atol=1e-12)


def test_diffusion_fills_from_single_confident_pixel():
    h = w = 5
    flow_data = np.zeros((h, w, 2))
    flow_data[2, 2] = (4.0, -1.0)
    conf_data = np.zeros((h, w))
    conf_data[2, 2] = 1.0
    F0 = FlowField(w, h, flow_data, scale=4)
    out = diffuse_aggregate(_noise_features(w, h), _conf(w, h, conf_data), F0,
                            RefineConfig(diffusion_passes=8))
    assert np.allclose(out.data[:, :, 0], 4.0, atol=1e-3)
    assert np.allclose(out.data[:, :, 1], -1.0, atol=1e-3)


def test_diffusion_matches_scalar_oracle(rng):
    h, w = 4, 5
    flow_data = rng.standard_normal((h, w, 2))
    conf_data = rng.uniform(0, 1, (h, w))
    cfg = RefineConfig(diffusion_passes=3)
    out = diffuse_aggregate(_noise_features(w, h), _conf(w, h, conf_data),
                            FlowField(w, h, flow_data, scale=4), cfg)
    expected = oracles.diffuse(flow_data, conf_data, passes=3, radius=1, eps=1e-8)
    assert np.allclose(out.data, expected, atol=1e-10)


def test_gate_plus_diffusion_fills_hole():
    h = w = 7
    flow_data = np.full((h, w, 2), (5.0, 0.0))
    flow_data[3, 3] = (40.0, -12.0)  # bogus value in the hole
    conf_data = np.full((h, w), 0.9)
    conf_data[3, 3] = 0.05
    F0 = FlowField(w, h, flow_data, scale=4)
    conf = _conf(w, h, conf_data)
    cfg = RefineConfig()
    out = global_refine(F0, conf, _noise_features(w, h),
                        lambda g, c, f: diffuse_aggregate(g, c, f, cfg), cfg)
    assert np.allclose(out.data[3, 3], (5.0, 0.0), atol=1e-6)
    keep = np.ones((h, w), dtype=bool)
    keep[3, 3] = False
    assert np.array_equal(out.data[keep], F0.data[keep])


# ------------------------------------------------------------ logit laws

def _state(width=4, height=4, conf=0.5, occ=0.5, du=0.0, dv=0.0, step=0):
    return RefineState(
        flow=_flow(width, height, du, dv),
        confidence=_conf(width, height, np.full((height, width), conf)),
        occlusion=OcclusionMap(width, height, np.full((height, width), occ), scale=4),
        step=step,
    )


def test_zero_residuals_are_identity():
    state = _state(conf=0.37, occ=0.81, du=1.5, dv=-2.5)
    out = apply_residuals(state, Residuals.zeros(4, 4), RefineConfig())
    assert np.array_equal(out.flow.data, state.flow.data)
    assert np.allclose(out.confidence.data, state.confidence.data, atol=1e-12)
    assert np.allclose(out.occlusion.data, state.occlusion.data, atol=1e-12)
    assert out.step == state.step + 1


def test_logit_update_half_to_nine_tenths():
    state = _state(conf=0.5)
    res = Residuals.zeros(4, 4)
    res.dconf[:, :] = np.log(9.0)
    out = apply_residuals(state, res, RefineConfig())
    assert np.allclose(out.confidence.data, 0.9, atol=1e-12)


def test_logit_saturation_stays_inside_unit_interval():
    cfg = RefineConfig()
    state = _state(conf=1.0 - cfg.logit_clamp, occ=1.0 - cfg.logit_clamp)
    res = Residuals.zeros(4, 4)
    res.dconf[:, :] = 100.0
    res.docc[:, :] = 10.0
    out = apply_residuals(state, res, cfg)
    assert np.all(out.confidence.data < 1.0) and np.all(out.confidence.data > 0.0)
    assert np.all(out.occlusion.data < 1.0) and np.all(np.isfinite(out.occlusion.data))
    res.dconf[:, :] = -100.0
    out = apply_residuals(state, res, cfg)
    assert np.all(out.confidence.data > 0.0)


def test_logit_roundtrip_inverse():
    cfg = RefineConfig()
    state = _state(conf=0.3, occ=0.7)
    up = Residuals.zeros(4, 4)
    up.dconf[:, :] = 2.5
    up.docc[:, :] = -1.25
    down = Residuals.zeros(4, 4)
    down.dconf[:, :] = -2.5
    down.docc[:, :] = 1.25
    out = apply_residuals(apply_residuals(state, up, cfg), down, cfg)
    assert np.allclose(out.confidence.data, 0.3, atol=1e-9)
    assert np.allclose(out.occlusion.data, 0.7, atol=1e-9)


def test_iteration_exhausted():
    state = _state(step=3)
    C = CostVolume(h=4, w=4, data=np.zeros((16, 16)))
    with pytest.raises(IterationExhausted):
        local_refine_step(state, correlation_lookup(C), RefineConfig(steps=3))


def test_axis_independence(rng):
    # perturbing correlation only along the vertical slice must not change
    # the u residuals (axis-wise evaluation), and vice versa
    h = w = 9
    scores = rng.standard_normal((h * w, h * w))
    state = _state(w, h, conf=0.8, occ=0.8)
    cfg = RefineConfig()
    C1 = CostVolume(h=h, w=w, data=scores)
    base = compute_local_residuals(state, correlation_lookup(C1), cfg)

    bumped = scores.copy().reshape(h * w, h, w)
    for v in range(h):
        for u in range(w):
            # change the vertical slice except the row the u-slice reads
            col = bumped[v * w + u, :, u].copy()
            col[:v] += 3.0
            col[v + 1 :] += 3.0
            bumped[v * w + u, :, u] = col
    C2 = CostVolume(h=h, w=w, data=bumped.reshape(h * w, h * w))
    moved = compute_local_residuals(state, correlation_lookup(C2), cfg)
    assert np.allclose(base.du, moved.du, atol=1e-12)
    assert not np.allclose(base.dv, moved.dv, atol=1e-6)


def test_coupled_residuals_share_window_but_differ(rng):
    h = w = 8
    scores = rng.standard_normal((h * w, h * w))
    state = _state(w, h, conf=0.8, occ=0.8)
    cfg = RefineConfig()
    axis = compute_local_residuals(state, correlation_lookup(CostVolume(h=h, w=w, data=scores)), cfg)
    joint = compute_local_residuals(state, correlation_lookup(CostVolume(h=h, w=w, data=scores)),
                                    cfg, coupled=True)
    assert axis.du.shape == joint.du.shape
    assert not np.allclose(axis.du, joint.du, atol=1e-9)
    # confidence/occlusion residuals are identical across the two paths
    assert np.allclose(axis.dconf, joint.dconf, atol=1e-12)
    assert np.allclose(axis.docc, joint.docc, atol=1e-12)


# -------------------------------------------------------------- upsample

def test_upsample_weights_validation():
    bad = np.full((4, 4, 9), 1.0 / 9.0)
    UpsampleWeights(bad)
    with pytest.raises(ValueOutOfRange):
        UpsampleWeights(bad * 2.0)
    neg = bad.copy()
    neg[0, 0, 0] = -0.1
    neg[0, 0, 1] = 0.1 + 2.0 / 9.0
    with pytest.raises(ValueOutOfRange):
        UpsampleWeights(neg)


def test_upsample_constant_field_exact():
    field = ConfidenceMap(3, 2, np.full((2, 3), 0.7), scale=4)
    out = convex_upsample(field, bilinear_upsample_weights(2, 3))
    assert np.array_equal(out.data, np.full((8, 12), 0.7))
    flow = _flow(3, 2, 7.0, 7.0)
    fout = convex_upsample(flow, bilinear_upsample_weights(2, 3))
    assert np.array_equal(fout.data, np.full((8, 12, 2), 28.0))
    assert fout.scale == 1


def test_upsample_one_hot_center_is_nearest_neighbor(rng):
    h, w = 2, 3
    weights = np.zeros((4 * h, 4 * w, 9))
    weights[:, :, 4] = 1.0  # center slot
    coarse = rng.standard_normal((h, w, 2))
    out = convex_upsample(FlowField(w, h, coarse, scale=4), UpsampleWeights(weights))
    expected = np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1) * 4.0
    assert np.allclose(out.data, expected, atol=1e-12)


def test_upsample_bilinear_reproduces_ramp():
    h = w = 4
    a, bu, bv = 0.3, 0.25, -0.125
    cu, cv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    coarse = a + bu * cu + bv * cv
    field = ConfidenceMap(w, h, np.clip(coarse, 0, 1), scale=4)
    out = convex_upsample(field, bilinear_upsample_weights(h, w))
    ys, xs = np.mgrid[0 : 4 * h, 0 : 4 * w].astype(float)
    fx = np.clip((xs - 1.5) / 4.0, 0, w - 1)
    fy = np.clip((ys - 1.5) / 4.0, 0, h - 1)
    expected = np.clip(a + bu * fx + bv * fy, 0, 1)
    assert np.allclose(out.data, expected, atol=1e-9)


def test_upsample_respects_neighborhood_bounds(rng):
    h, w = 3, 4
    coarse = rng.standard_normal((h, w, 2))
    weights_data = rng.uniform(0, 1, (4 * h, 4 * w, 9))
    weights_data /= weights_data.sum(axis=2, keepdims=True)
    out = convex_upsample(FlowField(w, h, coarse, scale=4), UpsampleWeights(weights_data))
    for y in range(4 * h):
        for x in range(4 * w):
            cy, cx = y // 4, x // 4
            ys = slice(max(0, cy - 1), min(h, cy + 2))
            xs = slice(max(0, cx - 1), min(w, cx + 2))
            nb = coarse[ys, xs]
            for c in range(2):
                val = out.data[y, x, c] / 4.0
                assert nb[:, :, c].min() <= val <= nb[:, :, c].max()


def test_upsample_requires_scale4_and_matching_weights():
    with pytest.raises(ValueOutOfRange):
        convex_upsample(FlowField.zeros(2, 2, scale=1), bilinear_upsample_weights(2, 2))
    with pytest.raises(DimensionMismatch):
        convex_upsample(FlowField.zeros(2, 2, scale=4), bilinear_upsample_weights(3, 2))


# -------------------------------------------------------------- pipeline

def test_run_refinement_pipeline_collapse(rng):
    # steps = 0 and confident everywhere: output is exactly the upsampled inputs
    h = w = 6
    g1 = _noise_features(w, h)
    C = CostVolume(h=h, w=w, data=rng.standard_normal((h * w, h * w)))
    F0 = FlowField(w, h, rng.standard_normal((h, w, 2)), scale=4)
    conf0 = _conf(w, h, rng.uniform(0.5, 1.0, (h, w)))
    occ0 = OcclusionMap(w, h, rng.uniform(0, 1, (h, w)), scale=4)
    flow, conf, occ = run_refinement(F0, conf0, occ0, g1, C, RefineConfig(steps=0))
    weights = bilinear_upsample_weights(h, w)
    assert np.array_equal(flow.data, convex_upsample(F0, weights).data)
    assert np.array_equal(conf.data, convex_upsample(conf0, weights).data)
    assert np.array_equal(occ.data, convex_upsample(occ0, weights).data)
    assert flow.scale == 1 and conf.scale == 1


def test_run_refinement_is_deterministic(rng):
    h = w = 6
    g1 = _noise_features(w, h, seed=5)
    C = CostVolume(h=h, w=w, data=rng.standard_normal((h * w, h * w)))
    F0 = FlowField(w, h, rng.standard_normal((h, w, 2)) * 0.5, scale=4)
    conf0 = _conf(w, h, rng.uniform(0, 1, (h, w)))
    occ0 = OcclusionMap(w, h, rng.uniform(0, 1, (h, w)), scale=4)
    a = run_refinement(F0, conf0, occ0, g1, C, RefineConfig())
    b = run_refinement(F0, conf0, occ0, g1, C, RefineConfig())
    for x, y in zip(a, b):
        assert np.array_equal(x.data, y.data)
