"""Work items flowing through the pipeline and the render targets they update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# fragment bit i of a quad sits at (i & 1, i >> 1) relative to the quad origin
FRAGMENT_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))
FULL_MASK = 0xF
TERMINATION_BIT = 0x80
STENCIL_TEST_MASK = 0x7F


def popcount4(mask: int) -> int:
    return (mask & 1) + (mask >> 1 & 1) + (mask >> 2 & 1) + (mask >> 3 & 1)


@dataclass(slots=True, eq=False)
class QuadPacket:
    tile: int            # screen tile id (row-major)
    qx: int              # quad position inside the tile
    qy: int
    pos: int             # global quad index, unique per (tile, qx, qy)
    cov: int             # coverage mask
    ordinal: int         # primitive submission sequence number
    prim: int            # splat index
    rgba: np.ndarray | None = None   # (4, 4) float32 premultiplied, zero rows where uncovered
    prune: int = 0       # fragments whose alpha falls under the pruning threshold
    kill: int = 0        # fragments removed by the termination bit or the stencil test
    live: int = 0        # fragments CROP must write (set by the shader)
    merged: bool = False

    @property
    def quad_pos(self) -> tuple[int, int]:
        return (self.qx, self.qy)


@dataclass(slots=True, eq=False)
class WarpPacket:
    slots: list = field(default_factory=list)
    merge_flags: int = 0

    @property
    def has_merge(self) -> bool:
        return self.merge_flags != 0

    def pairs(self):
        """Slot indices (2n, 2n+1) flagged for merging."""
        return [(i, i + 1) for i in range(0, len(self.slots) - 1, 2) if self.merge_flags >> (i + 1) & 1]


class TargetBuffers:
    """Colour (flat H*W x 4, float32) and 8-bit stencil; z is not modelled."""

    def __init__(self, width: int, height: int, screen_tile: int = 16):
        self.width = width
        self.height = height
        self.color = np.zeros((width * height, 4), dtype=np.float32)
        self.stencil = bytearray(width * height)
        self.tile = screen_tile
        self.tiles_x = -(-width // screen_tile)
        self.tiles_y = -(-height // screen_tile)
        self.quads_x = -(-width // 2)
        self.crop_cache = None  # attached by the first draw
        self._pixels: dict[int, tuple[int, int, int, int]] = {}

    def quad_pixels(self, pos: int) -> tuple[int, int, int, int]:
        """Flat pixel indices of the four fragments of global quad ``pos`` (-1 when off-screen)."""
        px = self._pixels.get(pos)
        if px is None:
            x0 = (pos % self.quads_x) * 2
            y0 = (pos // self.quads_x) * 2
            px = tuple(
                (y0 + dy) * self.width + x0 + dx if x0 + dx < self.width and y0 + dy < self.height else -1
                for dx, dy in FRAGMENT_OFFSETS
            )
            self._pixels[pos] = px
        return px

    def stencil_array(self) -> np.ndarray:
        return np.frombuffer(bytes(self.stencil), dtype=np.uint8).reshape(self.height, self.width).copy()

    def color_image(self) -> np.ndarray:
        return self.color.reshape(self.height, self.width, 4).copy()
