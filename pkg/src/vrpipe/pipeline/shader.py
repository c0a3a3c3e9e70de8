"""Fragment shading on the SM array: pruning, quad merging and the stencil-update shader."""
from __future__ import annotations

import numpy as np

from ..reference import blend_into
from .packets import FULL_MASK, QuadPacket, popcount4

# (4, 1) float32 row selectors: multiplying by them zeroes fragments outside a mask exactly
from .rop import ROW_KEEP as _ROW_KEEP


def warp_cost(warp, config) -> int:
    return config.warp_shade_cost + (config.warp_merge_cost if warp.merge_flags else 0)


def merge_pair(front: QuadPacket, back: QuadPacket) -> QuadPacket:
    """Blend two same-position quads in the shader: front + (1 - front.alpha) * back.

    Dead fragments (uncovered, killed or pruned) act as the transparent
    identity, so the merged quad is exact wherever only one side is live.
    """
    lf = front.cov & ~front.kill & ~front.prune & FULL_MASK
    lb = back.cov & ~back.kill & ~back.prune & FULL_MASK
    f = front.rgba * _ROW_KEEP[lf]
    b = back.rgba * _ROW_KEEP[lb]
    return QuadPacket(
        tile=front.tile, qx=front.qx, qy=front.qy, pos=front.pos, cov=front.cov | back.cov,
        ordinal=front.ordinal, prim=front.prim, rgba=blend_into(f, b), live=lf | lb, merged=True,
    )


def sm_shade(warp, stats=None, shaded_log=None, targets=None, pixels=None) -> list[QuadPacket]:
    """Shade one warp; returns the quads handed to CROP (merged pairs collapse to one)."""
    slots = warp.slots
    flags = warp.merge_flags
    for q in slots:
        alive = q.cov & ~q.kill & FULL_MASK
        if stats is not None:
            stats.fragments_shaded += popcount4(alive)
            stats.fragments_pruned += popcount4(alive & q.prune)
        if shaded_log is not None:
            px = pixels(q.pos)
            for i in range(4):
                if alive >> i & 1:
                    shaded_log.append(px[i])
    out = []
    i = 0
    n = len(slots)
    while i < n:
        q = slots[i]
        if i + 1 < n and flags >> (i + 1) & 1:
            out.append(merge_pair(q, slots[i + 1]))
            i += 2
        else:
            q.live = q.cov & ~q.kill & ~q.prune & FULL_MASK
            out.append(q)
            i += 1
    return out


def alpha_test_shade(warp, color: np.ndarray, threshold: float, pixels, stats=None, shaded_log=None) -> list[QuadPacket]:
    """Stencil-update shader: keep fragments whose pixel alpha already reached ``threshold``."""
    theta = np.float32(threshold)
    for q in warp.slots:
        alive = q.cov & ~q.kill & FULL_MASK
        px = pixels(q.pos)
        live = 0
        for i in range(4):
            if alive >> i & 1:
                if shaded_log is not None:
                    shaded_log.append(px[i])
                if color[px[i], 3] >= theta:
                    live |= 1 << i
        q.live = live
        if stats is not None:
            stats.fragments_shaded += popcount4(alive)
    return list(warp.slots)
