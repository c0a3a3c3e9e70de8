import numpy as np
import pytest

from vrpipe.preprocess import SplatPrimitiveSet, preprocess
from vrpipe.reference import (
    ALPHA_MAX, FrameOutput, RenderOptions, blend_step, et_reduction_ratio, eval_alpha, render_reference,
)
from vrpipe.scene import canonical_camera, synth_layered, synth_random


def test_blend_step_examples():
    assert np.allclose(blend_step([0, 0, 0, 0], [0.5, 0, 0, 0.5]), [0.5, 0, 0, 0.5])
    out = blend_step([0.5, 0, 0, 0.5], [0, 0.5, 0, 0.5])
    assert np.allclose(out, [0.5, 0.25, 0, 0.75])
    assert np.allclose(blend_step([0.2, 0.3, 0.1, 1.0], [1, 1, 1, 1]), [0.2, 0.3, 0.1, 1.0])


def test_eval_alpha_peak_and_clamp(small_random_prims):
    prims, _ = small_random_prims
    sp = prims[0]
    assert eval_alpha(sp, sp.mean2d) == pytest.approx(min(sp.opacity, ALPHA_MAX))
    far = sp.mean2d + 50 * (sp.axes[0] + sp.axes[1])
    assert eval_alpha(sp, far) < 1e-6


def test_render_rejects_unsorted(small_random_prims):
    prims, cam = small_random_prims
    prims.depth = prims.depth[::-1].copy()
    if len(prims) > 1:
        with pytest.raises(ValueError):
            render_reference(prims, cam)


def test_empty_scene_is_blank():
    cam = canonical_camera(16, 16)
    frame = render_reference(SplatPrimitiveSet.empty(), cam)
    assert not frame.color.any() and frame.blended_count.sum() == 0


def test_et_truncates_suffix_only(layered_small):
    prims, cam = layered_small
    full = render_reference(prims, cam)
    et = render_reference(prims, cam, RenderOptions(et_enabled=True))
    assert np.all(et.blended_count <= full.blended_count)
    assert np.max(np.abs(et.color - full.color)) <= 1 - 0.996 + 1e-5
    assert et_reduction_ratio(full, et) > 1.0
    assert et.dropped_terminated > 0


def test_single_opaque_layer_et_is_identity():
    cam = canonical_camera(32, 32)
    prims = preprocess(synth_layered(1, 1, 0.9, 0, width=32, height=32), cam)
    a = render_reference(prims, cam)
    b = render_reference(prims, cam, RenderOptions(et_enabled=True))
    assert np.array_equal(a.color, b.color)


def test_pruning_counts(small_random_prims):
    prims, cam = small_random_prims
    frame = render_reference(prims, cam)
    assert frame.shaded_count.sum() - frame.blended_count.sum() == frame.dropped_pruned


def test_et_reduction_ratio_errors():
    a, b = FrameOutput.blank(4, 4), FrameOutput.blank(5, 4)
    with pytest.raises(ValueError):
        et_reduction_ratio(a, b)
    assert et_reduction_ratio(a, a) == 1.0


def test_render_options_validation():
    with pytest.raises(ValueError):
        RenderOptions(prune_epsilon=0.999)


def test_reference_deterministic():
    cam = canonical_camera(40, 40)
    prims = preprocess(synth_random(40, seed=8), cam)
    assert np.array_equal(render_reference(prims, cam).color, render_reference(prims, cam).color)
