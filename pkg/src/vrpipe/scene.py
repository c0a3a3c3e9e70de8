"""Scene representation, PLY ingestion, the canonical VRSC format and synthetic scenes."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

SH_C0 = 0.28209479177387814
VALID_SH_LENGTHS = (1, 4, 9, 16)

VRSC_MAGIC = b"VRSC"
VRSC_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class SceneFormatError(ValueError):
    """Raised for malformed scene, camera or PLY files."""


def _f32(x) -> float:
    return float(np.float32(x))


@dataclass(frozen=True)
class Gaussian3D:
    position: tuple[float, float, float]
    scale: tuple[float, float, float]
    rotation: tuple[float, float, float, float]  # (w, x, y, z)
    opacity: float
    sh: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.position) != 3 or len(self.scale) != 3 or len(self.rotation) != 4:
            raise ValueError("position/scale need 3 components, rotation needs 4")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity {self.opacity} outside [0, 1]")
        if any(not s > 0.0 for s in self.scale):
            raise ValueError(f"scale components must be > 0, got {self.scale}")
        norm = math.sqrt(sum(q * q for q in self.rotation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"rotation quaternion norm {norm} is not 1")
        if len(self.sh) not in VALID_SH_LENGTHS:
            raise ValueError(f"sh length {len(self.sh)} not in {VALID_SH_LENGTHS}")
        if any(len(c) != 3 for c in self.sh):
            raise ValueError("sh coefficients must be RGB triples")

    @property
    def sh_degree(self) -> int:
        return VALID_SH_LENGTHS.index(len(self.sh))


@dataclass(frozen=True)
class Camera:
    view: tuple[float, ...]  # 16 floats, row-major world-to-camera
    fx: float
    fy: float
    width: int
    height: int
    znear: float
    zfar: float

    def __post_init__(self):
        if len(self.view) != 16:
            raise ValueError("view must hold 16 floats")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if not 0.0 < self.znear < self.zfar:
            raise ValueError("need 0 < znear < zfar")
        r = self.view_matrix[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5) or np.linalg.det(r) < 0:
            raise ValueError("upper-left 3x3 of view is not a rotation")

    @cached_property
    def view_matrix(self) -> np.ndarray:
        return np.asarray(self.view, dtype=np.float64).reshape(4, 4)

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space."""
        m = self.view_matrix
        return -m[:3, :3].T @ m[:3, 3]


_CAMERA_KEYS = ("view", "fx", "fy", "width", "height", "znear", "zfar")


def read_camera(path) -> Camera:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"camera file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SceneFormatError(f"camera file {path}: expected an object")
    for key in doc:
        if key not in _CAMERA_KEYS:
            raise SceneFormatError(f"camera file {path}: unknown key '{key}'")
    for key in _CAMERA_KEYS:
        if key not in doc:
            raise SceneFormatError(f"camera file {path}: missing key '{key}'")
    view = doc["view"]
    if not isinstance(view, list) or len(view) != 16:
        raise SceneFormatError(f"camera file {path}: key 'view' needs 16 numbers")
    try:
        return Camera(
            view=tuple(float(v) for v in view),
            fx=float(doc["fx"]),
            fy=float(doc["fy"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            znear=float(doc["znear"]),
            zfar=float(doc["zfar"]),
        )
    except (TypeError, ValueError) as exc:
        raise SceneFormatError(f"camera file {path}: {exc}") from exc


def write_camera(camera: Camera, path) -> None:
    doc = {
        "view": list(camera.view),
        "fx": camera.fx,
        "fy": camera.fy,
        "width": camera.width,
        "height": camera.height,
        "znear": camera.znear,
        "zfar": camera.zfar,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def canonical_camera(width: int = 256, height: int = 256) -> Camera:
    """Identity view looking down +z with a horizontal half-angle of atan(0.5)."""
    eye = tuple(float(v) for v in np.eye(4).ravel())
    f = float(width)
    return Camera(view=eye, fx=f, fy=f, width=width, height=height, znear=0.1, zfar=1000.0)


@dataclass(frozen=True)
class Scene:
    gaussians: tuple[Gaussian3D, ...]
    name: str = "scene"

    def __len__(self):
        return len(self.gaussians)

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Struct-of-arrays view; SH padded with zeros to the largest degree present."""
        n = len(self.gaussians)
        k = max((len(g.sh) for g in self.gaussians), default=1)
        sh = np.zeros((n, k, 3))
        for i, g in enumerate(self.gaussians):
            sh[i, : len(g.sh)] = g.sh
        return {
            "position": np.array([g.position for g in self.gaussians], dtype=np.float64).reshape(n, 3),
            "scale": np.array([g.scale for g in self.gaussians], dtype=np.float64).reshape(n, 3),
            "rotation": np.array([g.rotation for g in self.gaussians], dtype=np.float64).reshape(n, 4),
            "opacity": np.array([g.opacity for g in self.gaussians], dtype=np.float64),
            "sh": sh,
        }


def validate_scene(scene: Scene) -> None:
    """Re-run Gaussian3D invariants on every element (raises ValueError)."""
    for i, g in enumerate(scene.gaussians):
        try:
            Gaussian3D(g.position, g.scale, g.rotation, g.opacity, g.sh)
        except ValueError as exc:
            raise ValueError(f"gaussian {i}: {exc}") from exc


# -- canonical binary format -------------------------------------------------

def write_splat_file(scene: Scene, path) -> None:
    parts = [_HEADER.pack(VRSC_MAGIC, VRSC_VERSION, len(scene.gaussians), 0)]
    for g in scene.gaussians:
        flat_sh = [c for coeff in g.sh for c in coeff]
        parts.append(
            struct.pack(
                f"<11fI{len(flat_sh)}f",
                *g.position, *g.scale, *g.rotation, g.opacity, g.sh_degree, *flat_sh,
            )
        )
    Path(path).write_bytes(b"".join(parts))


def read_splat_file(path) -> Scene:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SceneFormatError(f"{path}: truncated header")
    magic, version, count, _ = _HEADER.unpack_from(data, 0)
    if magic != VRSC_MAGIC:
        raise SceneFormatError(f"{path}: bad magic {magic!r}")
    if version != VRSC_VERSION:
        raise SceneFormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    gaussians = []
    for i in range(count):
        if off + 48 > len(data):
            raise SceneFormatError(f"{path}: truncated payload at record {i} of {count}")
        vals = struct.unpack_from("<11fI", data, off)
        off += 48
        degree = vals[11]
        if degree > 3:
            raise SceneFormatError(f"{path}: record {i} has sh_degree {degree}")
        k = (degree + 1) ** 2
        if off + 12 * k > len(data):
            raise SceneFormatError(f"{path}: truncated payload at record {i} of {count}")
        sh = struct.unpack_from(f"<{3 * k}f", data, off)
        off += 12 * k
        gaussians.append(
            Gaussian3D(
                position=vals[0:3],
                scale=vals[3:6],
                rotation=vals[6:10],
                opacity=vals[10],
                sh=tuple(tuple(sh[3 * j: 3 * j + 3]) for j in range(k)),
            )
        )
    if off != len(data):
        raise SceneFormatError(f"{path}: count mismatch, {len(data) - off} trailing bytes after {count} records")
    return Scene(tuple(gaussians), name=Path(path).stem)


# -- PLY ----------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_PLY_REQUIRED = (
    ["x", "y", "z", "opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
    + [f"f_dc_{i}" for i in range(3)]
)


def _parse_ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise SceneFormatError(f"{path}: malformed PLY header")
    body_start = data.index(b"\n", end) + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    fmt = None
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise SceneFormatError(f"{path}: malformed element line '{line}'")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise SceneFormatError(f"{path}: property before any element")
            if tok[1] == "list":
                raise SceneFormatError(f"{path}: list property '{tok[-1]}' not supported")
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise SceneFormatError(f"{path}: malformed property line '{line}'")
            elements[-1][2].append((tok[2], tok[1]))
        else:
            raise SceneFormatError(f"{path}: unexpected header line '{line}'")
    if fmt != "binary_little_endian":
        raise SceneFormatError(f"{path}: only binary_little_endian PLY is supported (got {fmt})")
    return elements, body_start


def load_gaussian_ply(path) -> Scene:
    data = Path(path).read_bytes()
    elements, off = _parse_ply_header(data, path)
    vertex = None
    for name, count, props in elements:
        dtype = np.dtype([(p, "<" + _PLY_TYPES[t]) for p, t in props])
        if name == "vertex":
            if off + dtype.itemsize * count > len(data):
                raise SceneFormatError(f"{path}: element count mismatch, body shorter than {count} vertices")
            vertex = np.frombuffer(data, dtype=dtype, count=count, offset=off)
            break
        off += dtype.itemsize * count
    if vertex is None:
        raise SceneFormatError(f"{path}: no vertex element")
    names = vertex.dtype.names
    for prop in _PLY_REQUIRED:
        if prop not in names:
            raise SceneFormatError(f"{path}: missing required property '{prop}'")
    rest_names = sorted((n for n in names if n.startswith("f_rest_")), key=lambda s: int(s[7:]))
    if len(rest_names) % 3 or (len(rest_names) // 3 + 1) not in VALID_SH_LENGTHS:
        raise SceneFormatError(f"{path}: property 'f_rest_*' count {len(rest_names)} is not a valid SH layout")
    k = len(rest_names) // 3 + 1

    def col(n):
        return np.asarray(vertex[n], dtype=np.float64)

    pos = np.stack([col("x"), col("y"), col("z")], axis=1)
    opacity = 1.0 / (1.0 + np.exp(-col("opacity")))
    scale = np.exp(np.stack([col(f"scale_{i}") for i in range(3)], axis=1))
    rot = np.stack([col(f"rot_{i}") for i in range(4)], axis=1)
    norms = np.linalg.norm(rot, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise SceneFormatError(f"{path}: property 'rot_*' holds a zero quaternion")
    rot = rot / norms
    dc = np.stack([col(f"f_dc_{i}") for i in range(3)], axis=1)
    if k > 1:
        # channel-major on disk: all red coefficients, then green, then blue
        rest = np.stack([col(n) for n in rest_names], axis=1).reshape(-1, 3, k - 1).transpose(0, 2, 1)
        sh = np.concatenate([dc[:, None, :], rest], axis=1)
    else:
        sh = dc[:, None, :]
    # fields are carried at 32-bit precision so VRSC round-trips are exact
    pos, opacity, scale, rot, sh = (
        a.astype(np.float32).astype(np.float64) for a in (pos, opacity, scale, rot, sh)
    )
    gaussians = tuple(
        Gaussian3D(
            position=tuple(map(float, pos[i])),
            scale=tuple(map(float, scale[i])),
            rotation=tuple(map(float, rot[i])),
            opacity=float(opacity[i]),
            sh=tuple(tuple(map(float, c)) for c in sh[i]),
        )
        for i in range(len(vertex))
    )
    return Scene(gaussians, name=Path(path).stem)


def write_gaussian_ply(path, raw: dict[str, np.ndarray]) -> None:
    """Write raw (pre-activation) vertex columns as a binary little-endian PLY."""
    names = list(raw)
    n = len(raw[names[0]])
    dtype = np.dtype([(k, "<f4") for k in names])
    arr = np.empty(n, dtype=dtype)
    for k in names:
        arr[k] = raw[k]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {k}" for k in names]
    header.append("end_header")
    Path(path).write_bytes(("\n".join(header) + "\n").encode("ascii") + arr.tobytes())


# -- synthetic scenes ---------------------------------------------------------

def _quat_about_z(angle: float) -> tuple[float, float, float, float]:
    return (_f32(math.cos(angle / 2)), 0.0, 0.0, _f32(math.sin(angle / 2)))


def synth_layered(
    layers: int,
    splats_per_layer: int,
    opacity: float,
    seed: int,
    width: int = 256,
    height: int = 256,
    z_start: float = 2.0,
    z_step: float = 0.1,
) -> Scene:
    """Depth-separated sheets of Gaussians filling the canonical camera frustum.

    With ``splats_per_layer == 1`` each layer is one wide Gaussian spanning the
    whole image, so per-pixel overdraw equals ``layers``. Larger counts tile
    each sheet on a jittered grid with overlapping neighbours.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    rng = np.random.default_rng(seed)
    aspect = height / width
    g = max(1, math.ceil(math.sqrt(max(splats_per_layer, 1))))
    # a lone sheet is made very wide so its alpha is nearly flat across the image
    spread = 16.0 if splats_per_layer == 1 else 0.6
    out = []
    for layer in range(layers):
        z = z_start + layer * z_step
        hw, hh = 0.5 * z, 0.5 * z * aspect
        cw, ch = 2 * hw / g, 2 * hh / g
        for j in range(splats_per_layer):
            cx = -hw + (j % g + 0.5) * cw
            cy = -hh + (j // g % g + 0.5) * ch
            jx, jy = rng.uniform(-0.25, 0.25, size=2)
            color = rng.uniform(0.2, 0.9, size=3)
            angle = rng.uniform(0.0, math.pi) if splats_per_layer > 1 else 0.0
            out.append(
                Gaussian3D(
                    position=(_f32(cx + jx * cw), _f32(cy + jy * ch), _f32(z)),
                    scale=(_f32(spread * cw), _f32(spread * ch), _f32(1e-3 * z)),
                    rotation=_quat_about_z(angle),
                    opacity=_f32(opacity),
                    sh=(tuple(_f32((c - 0.5) / SH_C0) for c in color),),
                )
            )
    return Scene(tuple(out), name=f"layered_{layers}x{splats_per_layer}")


def _random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q.astype(np.float32).astype(np.float64)


def synth_random(
    count: int,
    bounds: Sequence[Sequence[float]] = ((-1.0, -1.0, 2.0), (1.0, 1.0, 6.0)),
    seed: int = 0,
    scale_range: tuple[float, float] = (0.01, 0.3),
    opacity_range: tuple[float, float] = (0.05, 1.0),
    sh_degree: int = 1,
) -> Scene:
    """Uniform positions, log-uniform scales, uniform opacities."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    pos = rng.uniform(lo, hi, size=(count, 3))
    scale = np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), size=(count, 3)))
    opac = rng.uniform(*opacity_range, size=count)
    quats = _random_unit_quats(rng, count)
    k = (sh_degree + 1) ** 2
    sh = rng.normal(scale=0.5, size=(count, k, 3))
    sh[:, 1:] *= 0.2
    out = tuple(
        Gaussian3D(
            position=tuple(_f32(v) for v in pos[i]),
            scale=tuple(max(_f32(v), 1e-6) for v in scale[i]),
            rotation=tuple(float(v) for v in quats[i]),
            opacity=_f32(opac[i]),
            sh=tuple(tuple(_f32(v) for v in c) for c in sh[i]),
        )
        for i in range(count)
    )
    return Scene(out, name=f"random_{count}")
