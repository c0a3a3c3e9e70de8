import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrpipe.multipass import fullscreen_rectangle, run_multipass, split_batches
from vrpipe.pipeline import PipelineConfig, simulate
from vrpipe.reference import render_reference

from conftest import max_abs


def test_split_examples():
    assert split_batches(10, 1).sizes == (10,)
    plan = split_batches(10, 3)
    assert plan.sizes == (4, 3, 3)
    assert [i for a, b in plan.batches for i in range(a, b)] == list(range(10))
    assert split_batches(2, 4).sizes == (1, 0, 1, 0) or sum(split_batches(2, 4).sizes) == 2
    with pytest.raises(ValueError):
        split_batches(5, 0)


@settings(max_examples=300)
@given(m=st.integers(0, 500), n=st.integers(1, 40))
def test_split_partition(m, n):
    plan = split_batches(m, n)
    sizes = plan.sizes
    assert len(sizes) == n and sum(sizes) == m and max(sizes) - min(sizes) <= 1
    assert [i for a, b in plan.batches for i in range(a, b)] == list(range(m))


def test_fullscreen_rectangle_fragments():
    rect = fullscreen_rectangle(20, 12)
    assert rect.n_triangles == 2


def test_multipass_behaviour(layered_small):
    prims, cam = layered_small
    base_frame, base = simulate(prims, cam)
    ref = render_reference(prims, cam)
    one = run_multipass(prims, cam, 1)
    assert np.array_equal(one.frame.color, base_frame.color)
    assert one.stats.fragments_blended == base.fragments_blended
    assert one.draw_kinds == ["batch"]
    four = run_multipass(prims, cam, 4)
    assert four.draw_kinds.count("batch") == 4 and four.draw_kinds.count("stencil") == 3
    assert four.stats.draws == 7
    assert max_abs(four.frame.color, ref.color) <= 1 - 0.996 + 1e-6
    for s, kind in zip(four.draw_stats, four.draw_kinds):
        s.check_conservation()
        if kind == "stencil":
            assert s.fragments_shaded == cam.width * cam.height and s.fragments_blended == 0
    four.stats.check_conservation()
    assert np.all((four.frame.stencil & 0x7F) <= 1)


def test_multipass_rejects_het(layered_small):
    prims, cam = layered_small
    with pytest.raises(ValueError):
        run_multipass(prims, cam, 2, PipelineConfig(het_enabled=True))
