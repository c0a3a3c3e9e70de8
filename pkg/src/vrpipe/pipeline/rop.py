"""ZROP termination test/update and the CROP blend path with its colour cache."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..reference import blend_into
from .packets import FULL_MASK, STENCIL_TEST_MASK, TERMINATION_BIT


def zrop_het_filter(quad, stencil, pixels, het: bool = True, stencil_test: bool = False) -> tuple[int, int]:
    """Kill bits from the termination MSB (and optionally the low-7-bit == 0 stencil test).

    Returns (het_kills, stencil_kills) as 4-bit masks over covered fragments.
    """
    het_kill = st_kill = 0
    cov = quad.cov
    for i in range(4):
        if cov >> i & 1:
            s = stencil[pixels[i]]
            if het and s & TERMINATION_BIT:
                het_kill |= 1 << i
            elif stencil_test and s & STENCIL_TEST_MASK:
                st_kill |= 1 << i
    return het_kill, st_kill


def zrop_update(stencil, pixel: int) -> None:
    """Set the termination bit; the low 7 bits are untouched."""
    stencil[pixel] |= TERMINATION_BIT


def should_signal(alpha_before, alpha_after, threshold):
    """Newly terminated: was below the threshold, reached it with this blend."""
    t = np.float32(threshold)
    return (alpha_before < t) & (alpha_after >= t)


def quantize_unorm8(values: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(values, 0, 1) * 255) / 255).astype(np.float32)


class CropCache:
    """Set-associative LRU colour cache with a fully associative shadow for 3C miss classification.

    Lines are 2D pixel blocks (4 rows high) so a quad never straddles lines.
    ``access`` returns the cycle at which the line's data is available.
    """

    def __init__(self, size: int, line: int, ways: int, bytes_per_pixel: int, width: int, counters: dict | None = None):
        self.geometry = (size, line, ways, bytes_per_pixel)
        self.n_lines = size // line
        self.ways = ways
        self.n_sets = max(1, self.n_lines // ways)
        pixels_per_line = line // bytes_per_pixel
        self.block_h = 4
        self.block_w = max(2, pixels_per_line // self.block_h)
        self.lines_x = -(-width // self.block_w)
        self.sets = [OrderedDict() for _ in range(self.n_sets)]
        self.shadow: OrderedDict[int, None] = OrderedDict()
        self.seen: set[int] = set()
        self.counters = counters if counters is not None else {
            "hits": 0, "misses": 0, "compulsory": 0, "capacity": 0, "conflict": 0, "pending_hits": 0,
        }

    def settle(self) -> None:
        """Complete all outstanding fills (a new draw restarts the cycle counter at 0)."""
        for ways in self.sets:
            for line in ways:
                ways[line] = 0

    def line_of(self, x: int, y: int) -> int:
        return (y // self.block_h) * self.lines_x + x // self.block_w

    def set_of(self, line: int) -> int:
        bits = max(1, (self.n_sets - 1).bit_length())
        return (line ^ (line >> bits) ^ (line >> 2 * bits)) % self.n_sets

    def access(self, line: int, now: int, latency: int) -> int:
        c = self.counters
        in_shadow = line in self.shadow
        if in_shadow:
            self.shadow.move_to_end(line)
        else:
            self.shadow[line] = None
            if len(self.shadow) > self.n_lines:
                self.shadow.popitem(last=False)
        ways = self.sets[self.set_of(line)]
        ready = ways.get(line)
        if ready is not None:
            ways.move_to_end(line)
            if ready > now:
                c["pending_hits"] += 1
                return ready
            c["hits"] += 1
            return now
        c["misses"] += 1
        if line not in self.seen:
            c["compulsory"] += 1
            self.seen.add(line)
        elif in_shadow:
            c["conflict"] += 1
        else:
            c["capacity"] += 1
        ways[line] = now + latency
        if len(ways) > self.ways:
            ways.popitem(last=False)
        return now + latency


# fragment index tuples and (4, 1) float32 row selectors per live mask
LIVE_ROWS = [tuple(i for i in range(4) if m >> i & 1) for m in range(16)]
ROW_KEEP = [np.array([[1.0 if m >> i & 1 else 0.0] for i in range(4)], dtype=np.float32) for m in range(16)]


def crop_blend(quad, image: np.ndarray, x0: int, y0: int, pixels, threshold: float | None = None,
               rgba8: bool = False):
    """Blend the quad's live fragments into ``image`` (H x W x 4) at quad origin (x0, y0).

    Dead fragments carry zero source rows, and dst + (1 - a) * 0 == dst
    exactly, so the whole 2x2 block can be blended through one slice view.
    Returns (flat pixel indices written, indices newly crossing ``threshold``).
    """
    live = quad.live & FULL_MASK
    rows = LIVE_ROWS[live]
    if not rows:
        return [], []
    src = quad.rgba if live == FULL_MASK else quad.rgba * ROW_KEEP[live]
    block = image[y0:y0 + 2, x0:x0 + 2]
    h, w = block.shape[:2]
    src = src.reshape(2, 2, 4)[:h, :w]
    dst = block.copy() if threshold is not None else block
    out = blend_into(block.reshape(-1, 4), src.reshape(-1, 4)).reshape(h, w, 4)
    if rgba8:
        out = quantize_unorm8(out)
    block[...] = out
    idx = [pixels[i] for i in rows]
    if threshold is None:
        return idx, []
    cross = should_signal(dst[..., 3], out[..., 3], threshold).reshape(-1)
    if not cross.any():
        return idx, []
    flat = [pixels[i] for i in range(4) if pixels[i] >= 0]
    return idx, [flat[j] for j in np.flatnonzero(cross)]
