"""Per-view preprocessing: culling, EWA projection, SH colour, depth sort, OBB triangles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import Camera, Gaussian3D, Scene

LOW_PASS = 0.3
MIN_ALPHA = 1.0 / 255.0

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray      # (2,) pixels
    inv_cov2d: np.ndarray   # (2, 2)
    depth: float
    rgb: np.ndarray         # (3,) float32
    opacity: float
    axes: np.ndarray        # (2, 2) semi-axis vectors, one per row
    source_id: int

    @property
    def conic(self) -> tuple[float, float, float]:
        return (float(self.inv_cov2d[0, 0]), float(self.inv_cov2d[0, 1]), float(self.inv_cov2d[1, 1]))


@dataclass
class SplatPrimitiveSet:
    """Depth-sorted splats in struct-of-arrays form plus two OBB triangles per splat.

    Triangle ``t`` belongs to splat ``t // 2``; triangle index is the draw ordinal.
    """

    mean2d: np.ndarray      # (n, 2) float64
    conic: np.ndarray       # (n, 3) float64: inverse covariance (a, b, c)
    depth: np.ndarray       # (n,)
    rgb: np.ndarray         # (n, 3) float32
    opacity: np.ndarray     # (n,) float64
    axes: np.ndarray        # (n, 2, 2)
    source_id: np.ndarray   # (n,) int64
    triangles: np.ndarray   # (2n, 3, 2) float64
    counters: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.depth)

    def __getitem__(self, i) -> Splat2D:
        a, b, c = self.conic[i]
        return Splat2D(
            mean2d=self.mean2d[i].copy(),
            inv_cov2d=np.array([[a, b], [b, c]]),
            depth=float(self.depth[i]),
            rgb=self.rgb[i].copy(),
            opacity=float(self.opacity[i]),
            axes=self.axes[i].copy(),
            source_id=int(self.source_id[i]),
        )

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def slice(self, start: int, stop: int) -> "SplatPrimitiveSet":
        return SplatPrimitiveSet(
            mean2d=self.mean2d[start:stop], conic=self.conic[start:stop],
            depth=self.depth[start:stop], rgb=self.rgb[start:stop],
            opacity=self.opacity[start:stop], axes=self.axes[start:stop],
            source_id=self.source_id[start:stop],
            triangles=self.triangles[2 * start: 2 * stop],
        )

    @classmethod
    def empty(cls) -> "SplatPrimitiveSet":
        return cls(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3), np.float32),
                   np.zeros(0), np.zeros((0, 2, 2)), np.zeros(0, np.int64), np.zeros((0, 3, 2)))

    @classmethod
    def flat_primitives(cls, triangles, rgb, opacity, tris_per_prim: int = 2) -> "SplatPrimitiveSet":
        """Constant-alpha primitives (zero conic) for microbenchmarks.

        ``triangles`` is (m, 3, 2); each group of ``tris_per_prim`` consecutive
        triangles shares one colour. With ``tris_per_prim == 1`` every triangle
        is padded with a zero-area partner so the two-per-splat layout holds.
        """
        tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 2)
        if tris_per_prim == 1:
            pad = np.repeat(tris[:, :1, :], 3, axis=1)
            tris = np.stack([tris, pad], axis=1).reshape(-1, 3, 2)
        n = len(tris) // 2
        centers = tris.reshape(n, 6, 2).mean(axis=1)
        return cls(
            mean2d=centers, conic=np.zeros((n, 3)), depth=np.arange(n, dtype=np.float64) + 1.0,
            rgb=np.broadcast_to(np.asarray(rgb, np.float32), (n, 3)).copy(),
            opacity=np.full(n, float(opacity)), axes=np.zeros((n, 2, 2)),
            source_id=np.arange(n, dtype=np.int64), triangles=tris,
        )


def quat_to_rotmat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q / np.linalg.norm(q, axis=-1, keepdims=True), -1, 0)
    r = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return r.reshape(q.shape[:-1] + (3, 3))


def compute_cov3d(scale, rotation) -> np.ndarray:
    """R diag(s^2) R^T; broadcasts over leading axes."""
    r = quat_to_rotmat(rotation)
    s2 = np.asarray(scale, dtype=np.float64) ** 2
    m = r * s2[..., None, :]
    return m @ np.swapaxes(r, -1, -2)


def eval_color(sh, view_direction) -> np.ndarray:
    """Real SH up to the stored degree, +0.5, clamped at zero. Broadcasts over leading axes."""
    sh = np.asarray(sh, dtype=np.float64)
    d = np.asarray(view_direction, dtype=np.float64)
    k = sh.shape[-2]
    x, y, z = d[..., 0:1], d[..., 1:2], d[..., 2:3]
    res = SH_C0 * sh[..., 0, :]
    if k > 1:
        res = res - SH_C1 * y * sh[..., 1, :] + SH_C1 * z * sh[..., 2, :] - SH_C1 * x * sh[..., 3, :]
    if k > 4:
        xx, yy, zz = x * x, y * y, z * z
        res = (res + SH_C2[0] * x * y * sh[..., 4, :] + SH_C2[1] * y * z * sh[..., 5, :]
               + SH_C2[2] * (2 * zz - xx - yy) * sh[..., 6, :]
               + SH_C2[3] * x * z * sh[..., 7, :] + SH_C2[4] * (xx - yy) * sh[..., 8, :])
    if k > 9:
        res = (res + SH_C3[0] * y * (3 * xx - yy) * sh[..., 9, :]
               + SH_C3[1] * x * y * z * sh[..., 10, :]
               + SH_C3[2] * y * (4 * zz - xx - yy) * sh[..., 11, :]
               + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[..., 12, :]
               + SH_C3[4] * x * (4 * zz - xx - yy) * sh[..., 13, :]
               + SH_C3[5] * z * (xx - yy) * sh[..., 14, :]
               + SH_C3[6] * x * (xx - 3 * yy) * sh[..., 15, :])
    return np.maximum(res + 0.5, 0.0)


def boundary_radius(opacity):
    """Mahalanobis radius where o * exp(-r^2 / 2) == 1/255 (0 when o <= 1/255)."""
    o = np.asarray(opacity, dtype=np.float64)
    return np.sqrt(2.0 * np.log(np.maximum(255.0 * o, 1.0)))


def _project(pos, cov3d, camera: Camera, low_pass: float):
    """Camera-space centres, 2D means and 2D covariances (a, b, c) for arrays of Gaussians."""
    view = camera.view_matrix
    w = view[:3, :3]
    t = pos @ w.T + view[:3, 3]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    safe_z = np.where(tz > 0, tz, 1.0)
    limx = 1.3 * camera.width / (2.0 * camera.fx)
    limy = 1.3 * camera.height / (2.0 * camera.fy)
    cx_ = np.clip(tx / safe_z, -limx, limx) * safe_z
    cy_ = np.clip(ty / safe_z, -limy, limy) * safe_z
    n = len(pos)
    j = np.zeros((n, 2, 3))
    j[:, 0, 0] = camera.fx / safe_z
    j[:, 0, 2] = -camera.fx * cx_ / safe_z ** 2
    j[:, 1, 1] = camera.fy / safe_z
    j[:, 1, 2] = -camera.fy * cy_ / safe_z ** 2
    m = j @ w
    cov2 = m @ cov3d @ np.swapaxes(m, 1, 2)
    a = cov2[:, 0, 0] + low_pass
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + low_pass
    mean = np.stack([camera.fx * tx / safe_z + camera.cx, camera.fy * ty / safe_z + camera.cy], axis=1)
    return t, mean, np.stack([a, b, c], axis=1)


def _screen_aabb_visible(mean, cov, radius, camera: Camera):
    hx = radius * np.sqrt(cov[:, 0])
    hy = radius * np.sqrt(cov[:, 2])
    return ((mean[:, 0] + hx >= 0) & (mean[:, 0] - hx <= camera.width)
            & (mean[:, 1] + hy >= 0) & (mean[:, 1] - hy <= camera.height))


def frustum_cull(scene: Scene, camera: Camera, low_pass: float = LOW_PASS) -> np.ndarray:
    """Indices of Gaussians with centre depth in (znear, zfar) and an on-screen 1/255 AABB."""
    if len(scene) == 0:
        return np.zeros(0, dtype=np.int64)
    arr = scene.arrays
    cov3d = compute_cov3d(arr["scale"], arr["rotation"])
    t, mean, cov = _project(arr["position"], cov3d, camera, low_pass)
    z = t[:, 2]
    keep = (z > camera.znear) & (z < camera.zfar)
    keep &= _screen_aabb_visible(mean, cov, boundary_radius(arr["opacity"]), camera)
    return np.flatnonzero(keep)


def project_to_splat(gaussian: Gaussian3D, camera: Camera, low_pass: float = LOW_PASS) -> Splat2D | None:
    """Single-Gaussian projection; returns None when the 2D covariance is singular."""
    pos = np.asarray([gaussian.position], dtype=np.float64)
    cov3d = compute_cov3d(np.asarray([gaussian.scale]), np.asarray([gaussian.rotation]))
    t, mean, cov = _project(pos, cov3d, camera, low_pass)
    a, b, c = cov[0]
    det = a * c - b * b
    if det <= 1e-12:
        return None
    conic = np.array([[c / det, -b / det], [-b / det, a / det]])
    direction = np.asarray(gaussian.position) - camera.center
    direction /= np.linalg.norm(direction)
    rgb = eval_color(np.asarray(gaussian.sh), direction).astype(np.float32)
    axes = obb_axes(np.array([[a, b, c]]), np.array([gaussian.opacity]))[0]
    return Splat2D(mean[0], conic, float(t[0, 2]), rgb, float(gaussian.opacity), axes, 0)


def depth_sort(depths) -> np.ndarray:
    d = np.asarray(depths, dtype=np.float64)
    if np.isnan(d).any():
        raise ValueError("NaN depth in depth_sort")
    return np.argsort(d, kind="stable")


def eig_sym2(a, b, c):
    """Closed-form eigenpairs of [[a, b], [b, c]]: (lam_major, lam_minor, e_major (n,2), e_minor (n,2))."""
    a, b, c = (np.asarray(v, dtype=np.float64) for v in (a, b, c))
    mid = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam1, lam2 = mid + disc, mid - disc
    # eigenvector of lam1; fall back to the dominant axis when b == 0
    vx = np.where(b != 0, lam1 - c, np.where(a >= c, 1.0, 0.0))
    vy = np.where(b != 0, b, np.where(a >= c, 0.0, 1.0))
    norm = np.hypot(vx, vy)
    e1 = np.stack([vx / norm, vy / norm], axis=-1)
    e2 = np.stack([-e1[..., 1], e1[..., 0]], axis=-1)
    return lam1, lam2, e1, e2


def obb_axes(cov2, opacity) -> np.ndarray:
    """Semi-axes (n, 2, 2) of the ellipse where alpha == 1/255."""
    cov2 = np.asarray(cov2, dtype=np.float64)
    r = boundary_radius(opacity)
    lam1, lam2, e1, e2 = eig_sym2(cov2[:, 0], cov2[:, 1], cov2[:, 2])
    ax1 = (r * np.sqrt(np.maximum(lam1, 0.0)))[:, None] * e1
    ax2 = (r * np.sqrt(np.maximum(lam2, 0.0)))[:, None] * e2
    return np.stack([ax1, ax2], axis=1)


def obb_triangles(mean2d, axes) -> np.ndarray:
    """Corners c0..c3 = mean -/+ a1 -/+ a2; triangles (c0, c1, c2), (c2, c1, c3). Shape (n, 2, 3, 2)."""
    m = np.asarray(mean2d, dtype=np.float64)
    a1, a2 = axes[:, 0], axes[:, 1]
    c0, c1, c2, c3 = m - a1 - a2, m + a1 - a2, m - a1 + a2, m + a1 + a2
    t0 = np.stack([c0, c1, c2], axis=1)
    t1 = np.stack([c2, c1, c3], axis=1)
    return np.stack([t0, t1], axis=1)


def build_obb(splat: Splat2D) -> np.ndarray | None:
    """Two OBB triangles (2, 3, 2) for one splat, or None if the splat is below 1/255 opacity."""
    if 255.0 * splat.opacity <= 1.0:
        return None
    return obb_triangles(splat.mean2d[None], splat.axes[None])[0]


def preprocess(scene: Scene, camera: Camera, low_pass: float = LOW_PASS) -> SplatPrimitiveSet:
    """Cull, project, colour, sort and build OBBs; returns the draw-ready primitive set."""
    counters = {"input": len(scene), "culled": 0, "dropped_singular": 0, "dropped_low_opacity": 0}
    if len(scene) == 0:
        out = SplatPrimitiveSet.empty()
        out.counters = counters
        return out
    arr = scene.arrays
    cov3d = compute_cov3d(arr["scale"], arr["rotation"])
    t, mean, cov = _project(arr["position"], cov3d, camera, low_pass)
    opacity = arr["opacity"]
    z = t[:, 2]
    visible = (z > camera.znear) & (z < camera.zfar)
    visible &= _screen_aabb_visible(mean, cov, boundary_radius(opacity), camera)
    counters["culled"] = int((~visible).sum())
    det = cov[:, 0] * cov[:, 2] - cov[:, 1] ** 2
    singular = visible & (det <= 1e-12)
    counters["dropped_singular"] = int(singular.sum())
    faint = visible & ~singular & (255.0 * opacity <= 1.0)
    counters["dropped_low_opacity"] = int(faint.sum())
    idx = np.flatnonzero(visible & ~singular & ~faint)

    idx = idx[depth_sort(z[idx])]
    cov, mean, det = cov[idx], mean[idx], det[idx]
    conic = np.stack([cov[:, 2] / det, -cov[:, 1] / det, cov[:, 0] / det], axis=1)
    dirs = arr["position"][idx] - camera.center
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rgb = eval_color(arr["sh"][idx], dirs).astype(np.float32)
    axes = obb_axes(cov, opacity[idx])
    tris = obb_triangles(mean, axes).reshape(-1, 3, 2)
    counters["drawn"] = len(idx)
    return SplatPrimitiveSet(
        mean2d=mean, conic=conic, depth=z[idx], rgb=rgb, opacity=opacity[idx].copy(),
        axes=axes, source_id=idx.astype(np.int64), triangles=tris, counters=counters,
    )
