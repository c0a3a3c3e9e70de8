"""Screen-tile binning (VPO), tile-grid coalescing (TGC) and tile coalescing (TC)."""
from __future__ import annotations

from collections import OrderedDict

from ..raster import pixel_bbox


def vpo_bin_primitive(triangle, width: int, height: int, screen_tile: int = 16) -> list[int]:
    """Row-major ids of the screen tiles overlapped by the triangle's clipped pixel AABB."""
    box = pixel_bbox(triangle, width, height)
    if box is None:
        return []
    x0, y0, x1, y1 = box
    tiles_x = -(-width // screen_tile)
    return [
        ty * tiles_x + tx
        for ty in range(y0 // screen_tile, y1 // screen_tile + 1)
        for tx in range(x0 // screen_tile, x1 // screen_tile + 1)
    ]


class TileGridCoalescer:
    """Bins primitives by tile grid; a bin holds up to ``bin_size`` primitives.

    Each bin entry is ``[prim, [tiles...]]``; a primitive touching several
    tiles of one grid is stored once. Flushed groups are lists of
    ``(prim, tile)`` pairs in insertion order.
    """

    def __init__(self, n_bins: int, bin_size: int, tiles_x: int, grid: int):
        self.n_bins = n_bins
        self.bin_size = bin_size
        self.tiles_x = tiles_x
        self.grid = grid
        self.grids_x = -(-tiles_x // grid)
        self.bins: OrderedDict[int, list] = OrderedDict()  # least recently inserted first
        self._touched: set[int] = set()

    def grid_id(self, tile: int) -> int:
        ty, tx = divmod(tile, self.tiles_x)
        return (ty // self.grid) * self.grids_x + tx // self.grid

    def insert(self, prim: int, tile: int, last: bool) -> list[tuple[str, list]]:
        """Add one (prim, tile) entry; returns [(reason, group), ...] flushed by it."""
        flushed = []
        gid = self.grid_id(tile)
        bin_ = self.bins.get(gid)
        if bin_ is None:
            if len(self.bins) >= self.n_bins:
                old, contents = self.bins.popitem(last=False)
                self._touched.discard(old)
                flushed.append(("evict", self._expand(contents)))
            bin_ = self.bins[gid] = []
        if bin_ and bin_[-1][0] == prim:
            bin_[-1][1].append(tile)
        else:
            bin_.append([prim, [tile]])
        self.bins.move_to_end(gid)
        self._touched.add(gid)
        if last:
            for g in sorted(self._touched):
                b = self.bins.get(g)
                if b is not None and len(b) >= self.bin_size:
                    flushed.append(("full", self._expand(self.bins.pop(g))))
            self._touched.clear()
        return flushed

    def flush_oldest(self) -> list | None:
        if not self.bins:
            return None
        gid, contents = self.bins.popitem(last=False)
        self._touched.discard(gid)
        return self._expand(contents)

    @staticmethod
    def _expand(contents) -> list[tuple[int, int]]:
        return [(prim, tile) for prim, tiles in contents for tile in tiles]

    def __len__(self):
        return len(self.bins)


class TileCoalescer:
    """Per-screen-tile quad bins with full / evict-oldest / timeout / end-of-draw flushes."""

    def __init__(self, n_bins: int, bin_size: int, timeout: int):
        self.n_bins = n_bins
        self.bin_size = bin_size
        self.timeout = timeout
        self.bins: OrderedDict[int, list] = OrderedDict()     # allocation order
        self.arrivals: OrderedDict[int, int] = OrderedDict()  # tile -> last arrival cycle, oldest first

    def _take(self, tile: int) -> list:
        self.arrivals.pop(tile, None)
        return self.bins.pop(tile)

    def insert(self, quad, now: int) -> list[tuple[str, list]]:
        flushed = []
        tile = quad.tile
        bin_ = self.bins.get(tile)
        if bin_ is None:
            if len(self.bins) >= self.n_bins:
                oldest = next(iter(self.bins))
                flushed.append(("evict", self._take(oldest)))
            bin_ = self.bins[tile] = []
        bin_.append(quad)
        self.arrivals[tile] = now
        self.arrivals.move_to_end(tile)
        if len(bin_) >= self.bin_size:
            flushed.append(("full", self._take(tile)))
        return flushed

    def expired(self, now: int) -> list | None:
        """Flush the least recently fed bin if it has idled for ``timeout`` cycles."""
        if self.arrivals:
            tile, t = next(iter(self.arrivals.items()))
            if now - t >= self.timeout:
                return self._take(tile)
        return None

    def next_timeout(self) -> int | None:
        if self.arrivals:
            return next(iter(self.arrivals.values())) + self.timeout
        return None

    def flush_oldest(self) -> list | None:
        if not self.bins:
            return None
        return self._take(next(iter(self.bins)))

    def __len__(self):
        return len(self.bins)
