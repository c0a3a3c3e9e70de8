"""Exact per-pixel compositing oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import MIN_ALPHA, Splat2D, SplatPrimitiveSet
from .raster import coverage, pixel_bbox, setup_triangles
from .scene import Camera

ET_THRESHOLD = 0.996
ALPHA_MAX = 0.99


@dataclass
class FrameOutput:
    color: np.ndarray           # (H, W, 4) premultiplied RGB + accumulated alpha
    shaded_count: np.ndarray    # (H, W) int64
    blended_count: np.ndarray   # (H, W) int64
    dropped_pruned: int = 0
    dropped_terminated: int = 0
    stencil: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.color.shape[0]

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @classmethod
    def blank(cls, width: int, height: int, dtype=np.float32) -> "FrameOutput":
        return cls(
            color=np.zeros((height, width, 4), dtype=dtype),
            shaded_count=np.zeros((height, width), dtype=np.int64),
            blended_count=np.zeros((height, width), dtype=np.int64),
        )


@dataclass(frozen=True)
class RenderOptions:
    prune_epsilon: float = MIN_ALPHA
    et_enabled: bool = False
    et_threshold: float = ET_THRESHOLD
    alpha_max: float = ALPHA_MAX
    dtype: type = np.float32

    def __post_init__(self):
        if not 0.0 <= self.prune_epsilon < self.et_threshold <= 1.0:
            raise ValueError("need 0 <= prune_epsilon < et_threshold <= 1")


def alpha_at(mean2d, conic, opacity, px, py, alpha_max=ALPHA_MAX) -> np.ndarray:
    """o * exp(-d^T inv_cov d / 2) clamped to alpha_max, evaluated in float64.

    Every alpha in both the oracle and the simulator goes through this one
    expression on contiguous arrays, which keeps the two paths bit-identical.
    """
    dx = np.ascontiguousarray(px, dtype=np.float64) - mean2d[0]
    dy = np.ascontiguousarray(py, dtype=np.float64) - mean2d[1]
    a, b, c = conic
    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
    return np.minimum(opacity * np.exp(power), alpha_max)


def eval_alpha(splat: Splat2D, pixel_center, alpha_max: float = ALPHA_MAX) -> float:
    p = np.asarray(pixel_center, dtype=np.float64)
    return float(alpha_at(splat.mean2d, splat.conic, splat.opacity, p[0:1], p[1:2], alpha_max)[0])


def premultiply(alpha, rgb, dtype=np.float32) -> np.ndarray:
    """(k, 4) premultiplied RGBA from per-fragment alpha and one RGB triple."""
    a = np.asarray(alpha).astype(dtype)
    out = np.empty((len(a), 4), dtype=dtype)
    out[:, :3] = a[:, None] * np.asarray(rgb, dtype=dtype)[None, :]
    out[:, 3] = a
    return out


def blend_step(dst, src):
    """Front-to-back 'over': dst + (1 - dst.alpha) * src on all four channels."""
    dst = np.asarray(dst)
    src = np.asarray(src)
    return dst + (1 - dst[..., 3:4]) * src


def blend_into(color_rows: np.ndarray, src: np.ndarray) -> np.ndarray:
    """The exact float expression used by every compositing site (oracle, CROP, SM merge)."""
    return color_rows + (1 - color_rows[:, 3:4]) * src


def splat_coverage(edges, tri_index: int, width: int, height: int, triangles):
    """Union of the two OBB triangles of a splat over their clipped bbox: (x0, y0, mask)."""
    boxes = [pixel_bbox(triangles[tri_index + k], width, height) for k in (0, 1)]
    boxes = [b for b in boxes if b is not None]
    if not boxes:
        return None
    x0 = min(b[0] for b in boxes)
    y0 = min(b[1] for b in boxes)
    x1 = max(b[2] for b in boxes)
    y1 = max(b[3] for b in boxes)
    w, h = x1 - x0 + 1, y1 - y0 + 1
    mask = coverage(edges[tri_index], x0, y0, w, h) | coverage(edges[tri_index + 1], x0, y0, w, h)
    return x0, y0, mask


def render_reference(prims: SplatPrimitiveSet, camera: Camera, options: RenderOptions = RenderOptions()) -> FrameOutput:
    depth = prims.depth
    if len(depth) > 1 and np.any(np.diff(depth) < 0):
        raise ValueError("render_reference needs depth-sorted splats")
    W, H = camera.width, camera.height
    dt = options.dtype
    frame = FrameOutput.blank(W, H, dtype=dt)
    color = frame.color
    active = np.ones((H, W), dtype=bool)
    theta = dt(options.et_threshold)
    eps = dt(options.prune_epsilon)
    edges = setup_triangles(prims.triangles)
    pruned = terminated = 0
    for k in range(len(prims)):
        cov = splat_coverage(edges, 2 * k, W, H, prims.triangles)
        if cov is None:
            continue
        x0, y0, mask = cov
        h, w = mask.shape
        if options.et_enabled:
            live = mask & active[y0:y0 + h, x0:x0 + w]
            terminated += int(mask.sum() - live.sum())
            mask = live
        ys, xs = np.nonzero(mask)
        if len(ys) == 0:
            continue
        ys += y0
        xs += x0
        alpha = alpha_at(prims.mean2d[k], prims.conic[k], prims.opacity[k], xs + 0.5, ys + 0.5, options.alpha_max)
        src = premultiply(alpha, prims.rgb[k], dt)
        frame.shaded_count[ys, xs] += 1
        keep = src[:, 3] >= eps
        pruned += int(len(keep) - keep.sum())
        ys, xs, src = ys[keep], xs[keep], src[keep]
        out = blend_into(color[ys, xs], src)
        color[ys, xs] = out
        frame.blended_count[ys, xs] += 1
        if options.et_enabled:
            active[ys, xs] = out[:, 3] < theta
    frame.dropped_pruned = pruned
    frame.dropped_terminated = terminated
    return frame


def et_reduction_ratio(frame_no_et: FrameOutput, frame_et: FrameOutput) -> float:
    if frame_no_et.color.shape != frame_et.color.shape:
        raise ValueError("resolution mismatch")
    num = int(frame_no_et.blended_count.sum())
    den = int(frame_et.blended_count.sum())
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den
