import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrpipe.preprocess import (
    MIN_ALPHA, SplatPrimitiveSet, boundary_radius, build_obb, compute_cov3d, depth_sort, eig_sym2,
    eval_color, frustum_cull, preprocess, project_to_splat,
)
from vrpipe.reference import eval_alpha
from vrpipe.scene import Gaussian3D, Scene, canonical_camera, synth_random

SH_C0 = 0.28209479177387814


def test_cov3d_examples():
    assert np.allclose(compute_cov3d([1, 2, 3], [1, 0, 0, 0]), np.diag([1, 4, 9]))
    c = math.cos(math.pi / 4)
    cov = compute_cov3d([2, 1, 1], [c, 0, 0, c])  # 90 degrees about z swaps x and y
    assert np.allclose(cov, np.diag([1, 4, 1]))


@settings(max_examples=200)
@given(st.lists(st.floats(1e-3, 10), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 1e-3))
def test_cov3d_symmetric_psd(scale, quat):
    cov = compute_cov3d(scale, quat)
    assert np.allclose(cov, cov.T, atol=1e-12 * max(scale) ** 2)
    eig = np.linalg.eigvalsh(cov)
    assert eig.min() >= -1e-9 * max(scale) ** 2
    assert np.allclose(sorted(eig), sorted(np.square(scale)), rtol=1e-6, atol=1e-9)


def test_eval_color_dc_and_clamp():
    sh = np.zeros((1, 3))
    sh[0] = [(0.7 - 0.5) / SH_C0, 0.0, -5.0]
    rgb = eval_color(sh, [0, 0, 1])
    assert rgb == pytest.approx([0.7, 0.5, 0.0])


def test_depth_sort_stable_and_nan():
    assert list(depth_sort([3.0, 1.0, 3.0, 2.0])) == [1, 3, 0, 2]
    with pytest.raises(ValueError):
        depth_sort([1.0, float("nan")])


def test_eig_sym2_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, c = rng.uniform(0.1, 5, 2)
        b = rng.uniform(-1, 1) * math.sqrt(a * c)
        l1, l2, e1, e2 = eig_sym2(a, b, c)
        ref = np.linalg.eigvalsh([[a, b], [b, c]])
        assert (l2, l1) == pytest.approx(tuple(ref))
        m = np.array([[a, b], [b, c]])
        assert np.allclose(m @ e1, l1 * e1)
        assert np.allclose(m @ e2, l2 * e2)


def _gauss(x=0.0, y=0.0, z=4.0, s=(0.2, 0.1, 0.01), o=0.8):
    return Gaussian3D((x, y, z), s, (1.0, 0.0, 0.0, 0.0), o, ((1.0, 0.5, 0.2),))


def test_project_centre_and_depth():
    cam = canonical_camera(64, 64)
    sp = project_to_splat(_gauss(), cam)
    assert sp.mean2d == pytest.approx([32, 32])
    assert sp.depth == pytest.approx(4.0)


def test_obb_contains_alpha_boundary():
    cam = canonical_camera(64, 64)
    sp = project_to_splat(_gauss(s=(0.3, 0.1, 0.01)), cam)
    tris = build_obb(sp)
    corners = tris.reshape(-1, 2)
    # sample the ellipse just inside alpha == 1/255: every point lies inside the OBB
    for t in np.linspace(0, 2 * np.pi, 64, endpoint=False):
        d = 0.999 * (math.cos(t) * sp.axes[0] + math.sin(t) * sp.axes[1])
        p = sp.mean2d + d
        assert eval_alpha(sp, p) >= MIN_ALPHA * 0.99
        assert corners[:, 0].min() - 1e-9 <= p[0] <= corners[:, 0].max() + 1e-9


def test_build_obb_low_opacity():
    sp = project_to_splat(_gauss(o=0.003), canonical_camera(64, 64))
    assert build_obb(sp) is None
    assert boundary_radius(1 / 255) == 0.0


def test_frustum_cull_behind_and_offscreen():
    cam = canonical_camera(64, 64)
    scene = Scene((_gauss(), _gauss(z=-3.0), _gauss(x=100.0), _gauss(z=2000.0)))
    assert list(frustum_cull(scene, cam)) == [0]


def test_preprocess_sorted_and_counted():
    cam = canonical_camera(64, 64)
    scene = synth_random(60, seed=4)
    prims = preprocess(scene, cam)
    c = prims.counters
    assert c["input"] == 60
    assert len(prims) + c["culled"] + c["dropped_singular"] + c["dropped_low_opacity"] == 60
    assert np.all(np.diff(prims.depth) >= 0)
    assert prims.triangles.shape == (2 * len(prims), 3, 2)
    assert prims.rgb.dtype == np.float32


def test_preprocess_empty():
    prims = preprocess(Scene(()), canonical_camera(8, 8))
    assert len(prims) == 0 and prims.n_triangles == 0


def test_flat_primitives_single_triangle_padding():
    tri = np.array([[[0, 0], [4, 0], [0, 4]]], dtype=float)
    prims = SplatPrimitiveSet.flat_primitives(tri, (1, 0, 0), 0.5, tris_per_prim=1)
    assert len(prims) == 1 and prims.n_triangles == 2
    assert np.all(prims.triangles[1] == prims.triangles[1][0])


def test_slice_keeps_triangle_pairs():
    prims = preprocess(synth_random(20, seed=2), canonical_camera(32, 32))
    part = prims.slice(2, 5)
    assert len(part) == 3
    assert np.array_equal(part.triangles, prims.triangles[4:10])
