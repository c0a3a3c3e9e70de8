import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrpipe.scene import (
    Camera, Gaussian3D, Scene, SceneFormatError, canonical_camera, load_gaussian_ply, read_camera,
    read_splat_file, synth_layered, synth_random, validate_scene, write_camera, write_gaussian_ply,
    write_splat_file,
)


def test_gaussian_validation():
    with pytest.raises(ValueError):
        Gaussian3D((0, 0, 0), (1, 1, 1), (1, 0, 0, 0), 1.5, ((0, 0, 0),))
    with pytest.raises(ValueError):
        Gaussian3D((0, 0, 0), (0, 1, 1), (1, 0, 0, 0), 0.5, ((0, 0, 0),))
    with pytest.raises(ValueError):
        Gaussian3D((0, 0, 0), (1, 1, 1), (2, 0, 0, 0), 0.5, ((0, 0, 0),))
    with pytest.raises(ValueError):
        Gaussian3D((0, 0, 0), (1, 1, 1), (1, 0, 0, 0), 0.5, ((0, 0, 0),) * 2)


def test_vrsc_roundtrip_is_exact(tmp_path):
    scene = synth_random(25, seed=3, sh_degree=2)
    path = tmp_path / "s.vrsc"
    write_splat_file(scene, path)
    back = read_splat_file(path)
    assert back.gaussians == scene.gaussians


def test_vrsc_write_is_deterministic(tmp_path):
    a, b = tmp_path / "a.vrsc", tmp_path / "b.vrsc"
    write_splat_file(synth_layered(5, 3, 0.5, 1), a)
    write_splat_file(synth_layered(5, 3, 0.5, 1), b)
    assert a.read_bytes() == b.read_bytes()


def test_vrsc_errors(tmp_path):
    path = tmp_path / "s.vrsc"
    write_splat_file(synth_random(3, seed=0), path)
    data = path.read_bytes()
    (tmp_path / "magic.vrsc").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(SceneFormatError, match="magic"):
        read_splat_file(tmp_path / "magic.vrsc")
    (tmp_path / "short.vrsc").write_bytes(data[:-5])
    with pytest.raises(SceneFormatError, match="truncated"):
        read_splat_file(tmp_path / "short.vrsc")
    (tmp_path / "long.vrsc").write_bytes(data + b"\0" * 8)
    with pytest.raises(SceneFormatError, match="count mismatch"):
        read_splat_file(tmp_path / "long.vrsc")


def _raw_ply(n, rest=0, seed=0):
    rng = np.random.default_rng(seed)
    raw = {k: rng.normal(size=n).astype(np.float32) for k in ("x", "y", "z")}
    raw["opacity"] = rng.normal(size=n).astype(np.float32)
    for i in range(3):
        raw[f"scale_{i}"] = rng.uniform(-4, 0, n).astype(np.float32)
        raw[f"f_dc_{i}"] = rng.normal(size=n).astype(np.float32)
    for i in range(4):
        raw[f"rot_{i}"] = rng.normal(size=n).astype(np.float32) + (2.0 if i == 0 else 0.0)
    for i in range(rest):
        raw[f"f_rest_{i}"] = rng.normal(size=n).astype(np.float32)
    return raw


def test_ply_activations(tmp_path):
    raw = _raw_ply(6, rest=9)
    path = tmp_path / "g.ply"
    write_gaussian_ply(path, raw)
    scene = load_gaussian_ply(path)
    assert len(scene) == 6
    g = scene.gaussians[2]
    assert g.opacity == pytest.approx(1 / (1 + math.exp(-float(raw["opacity"][2]))), rel=1e-6)
    assert g.scale[1] == pytest.approx(math.exp(float(raw["scale_1"][2])), rel=1e-6)
    assert np.linalg.norm(g.rotation) == pytest.approx(1.0, abs=1e-6)
    assert len(g.sh) == 4
    # channel-major rest coefficients: f_rest_0..2 are red for bands 1..3
    assert g.sh[1][0] == pytest.approx(float(raw["f_rest_0"][2]), rel=1e-6)
    assert g.sh[1][1] == pytest.approx(float(raw["f_rest_3"][2]), rel=1e-6)


def test_ply_roundtrip_through_vrsc(tmp_path):
    write_gaussian_ply(tmp_path / "g.ply", _raw_ply(10))
    scene = load_gaussian_ply(tmp_path / "g.ply")
    write_splat_file(scene, tmp_path / "g.vrsc")
    assert read_splat_file(tmp_path / "g.vrsc").gaussians == scene.gaussians


def test_ply_missing_property(tmp_path):
    raw = _raw_ply(3)
    del raw["scale_2"]
    write_gaussian_ply(tmp_path / "g.ply", raw)
    with pytest.raises(SceneFormatError, match="scale_2"):
        load_gaussian_ply(tmp_path / "g.ply")


def test_ply_ascii_rejected(tmp_path):
    (tmp_path / "a.ply").write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(SceneFormatError, match="binary_little_endian"):
        load_gaussian_ply(tmp_path / "a.ply")


def test_camera_roundtrip_and_errors(tmp_path):
    cam = canonical_camera(64, 32)
    write_camera(cam, tmp_path / "c.json")
    assert read_camera(tmp_path / "c.json") == cam
    doc = json.loads((tmp_path / "c.json").read_text())
    del doc["zfar"]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError, match="zfar"):
        read_camera(tmp_path / "bad.json")
    doc["zfar"] = 10
    doc["fov"] = 1
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError, match="fov"):
        read_camera(tmp_path / "bad.json")


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(view=tuple(np.eye(4).ravel()), fx=1, fy=1, width=0, height=4, znear=0.1, zfar=1)
    with pytest.raises(ValueError):
        Camera(view=tuple(np.eye(4).ravel()), fx=1, fy=1, width=4, height=4, znear=2, zfar=1)


def test_synth_layered_shape():
    scene = synth_layered(7, 4, 0.3, 2)
    assert len(scene) == 28
    zs = sorted({g.position[2] for g in scene.gaussians})
    assert len(zs) == 7
    assert all(g.opacity == pytest.approx(0.3) for g in scene.gaussians)
    with pytest.raises(ValueError):
        synth_layered(0, 1, 0.5, 0)


def test_synth_random_trivia():
    assert len(synth_random(0, seed=1)) == 0
    assert synth_random(12, seed=4).gaussians == synth_random(12, seed=4).gaussians
    assert synth_random(12, seed=4).gaussians != synth_random(12, seed=5).gaussians
    validate_scene(synth_random(50, seed=9))


@settings(max_examples=60)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(0, 20))
def test_synth_random_is_valid_and_roundtrips(tmp_path_factory, seed, n):
    scene = synth_random(n, seed=seed)
    validate_scene(scene)
    path = tmp_path_factory.mktemp("rt") / "s.vrsc"
    write_splat_file(scene, path)
    assert read_splat_file(path).gaussians == scene.gaussians


def test_scene_arrays():
    scene = Scene(synth_random(4, seed=1, sh_degree=0).gaussians + synth_random(1, seed=2, sh_degree=1).gaussians)
    arr = scene.arrays
    assert arr["position"].shape == (5, 3)
    assert arr["sh"].shape == (5, 4, 3)
    assert np.all(arr["sh"][:4, 1:] == 0)
