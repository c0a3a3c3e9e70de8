"""Cycle-level model of the splat rendering pipeline.

Units advance once per cycle, downstream first, so a work item moves at
most one stage per cycle. Queues between units are bounded; a full queue
stalls its producer. Cycles where nothing can change are skipped in one
jump to the next scheduled event.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..preprocess import SplatPrimitiveSet
from ..raster import pixel_bbox, setup_triangles
from ..reference import FrameOutput
from .binning import TileCoalescer, TileGridCoalescer, vpo_bin_primitive
from .config import PipelineConfig
from .packets import TERMINATION_BIT, TargetBuffers, popcount4
from .qru import qru_reorder
from .rasterizer import coarse_tiles, rasterize
from .rop import CropCache, crop_blend, zrop_het_filter
from .shader import alpha_test_shade, sm_shade, warp_cost
from .stats import SimStats

SHADERS = ("splat", "alpha_test")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DrawState:
    """Per-draw fixed-function state.

    ``stencil_test`` passes a fragment only when the low 7 stencil bits are
    zero. The ``alpha_test`` shader writes ``stencil_ref`` into the low bits
    of every pixel whose accumulated alpha has reached the termination
    threshold and blends nothing.
    """
    stencil_test: bool = False
    shader: str = "splat"
    stencil_ref: int = 1

    def __post_init__(self):
        if self.shader not in SHADERS:
            raise ValueError(f"shader must be one of {SHADERS}")
        if not 0 < self.stencil_ref < TERMINATION_BIT:
            raise ValueError("stencil_ref must fit in the low 7 bits and be non-zero")


class Pipeline:
    """One draw call in flight. ``run()`` drains it and returns its stats."""

    def __init__(self, prims: SplatPrimitiveSet, width: int, height: int,
                 config: PipelineConfig = PipelineConfig(), targets: TargetBuffers | None = None,
                 draw: DrawState = DrawState()):
        self.cfg = config
        self.draw = draw
        self.prims = prims
        self.width, self.height = width, height
        self.targets = targets if targets is not None else TargetBuffers(width, height, config.screen_tile)
        if (self.targets.width, self.targets.height, self.targets.tile) != (width, height, config.screen_tile):
            raise ValueError("render targets do not match the draw's resolution or tile size")
        self.tris = prims.triangles
        self.n_tris = len(self.tris)
        self.edges = setup_triangles(self.tris) if self.n_tris else np.zeros((0, 3, 3), dtype=np.int64)
        self.stats = SimStats(draws=1)
        self.now = 0
        self.het = config.het_enabled and draw.shader == "splat"
        self.rgba8 = config.color_format == "RGBA8"
        self._pixels = self.targets.quad_pixels
        self._image = self.targets.color.reshape(height, width, 4)
        cap = config.queue_capacity

        # VPO
        self.next_tri = 0
        self.vpo_pending: deque = deque()
        self.boxes: dict[int, tuple] = {}
        # TGC
        self.tgc_in: deque = deque()
        self.tgc = (TileGridCoalescer(config.tgc_bins, config.tgc_bin_size, self.targets.tiles_x, config.tile_grid)
                    if config.tgc_active else None)
        # raster
        self.raster_in: deque = deque()
        self.raster_ready: int | None = None
        self.raster_out: deque = deque()
        # TC
        self.tc = TileCoalescer(config.tc_bins, config.tc_bin_size, config.tc_timeout)
        self.tc_pending: deque = deque()
        # ZROP
        self.zrop_in: deque = deque()
        self.zrop_in_quads = 0
        self.zrop_cur: list | None = None
        self.zrop_idx = 0
        self.zrop_keep: list = []
        self.zrop_done: list | None = None
        # PROP / QRU
        self.prop_in: deque = deque()
        self.prop_in_quads = 0
        self.prop_cur: list | None = None
        self.prop_scanned = 0
        self.prop_warps: deque = deque()
        # SM
        self.warp_q: deque = deque()
        self.sm_inflight: deque = deque()  # [warp, finish_cycle, outputs]
        # CROP
        self.crop_in: deque = deque()
        self.crop_fills: list = []
        self.crop_waiting: set[int] = set()
        self.cache = self._attach_cache()
        self.het_updates: deque = deque()  # (commit_cycle, pixel)
        self.last_ordinal: dict[int, int] = {}
        self._seq = 0
        self._cap = cap

        self.shaded_log: list[int] = []
        self.blended_log: list[int] = []
        self._sm_stalled = False

    # ------------------------------------------------------------------ helpers

    def _attach_cache(self) -> CropCache:
        """The colour cache lives with the render targets, so its contents persist across draws."""
        c = self.cfg
        geometry = (c.crop_cache, c.crop_cache_line, c.crop_cache_ways, c.bytes_per_pixel)
        cache = getattr(self.targets, "crop_cache", None)
        if cache is None or cache.geometry != geometry:
            cache = CropCache(*geometry, self.width)
            self.targets.crop_cache = cache
        cache.settle()
        cache.counters = self.stats.crop_cache
        return cache

    def _upstream_of_tc_done(self) -> bool:
        return (self.next_tri >= self.n_tris and not self.vpo_pending and not self.tgc_in
                and (self.tgc is None or len(self.tgc) == 0) and not self.raster_in
                and self.raster_ready is None and not self.raster_out)

    def drained(self) -> bool:
        return (self._upstream_of_tc_done() and len(self.tc) == 0 and not self.tc_pending
                and not self.zrop_in and self.zrop_cur is None and self.zrop_done is None
                and not self.prop_in and self.prop_cur is None and not self.prop_warps
                and not self.warp_q and not self.sm_inflight and not self.crop_in
                and not self.crop_fills and not self.het_updates)

    def _next_event(self) -> int | None:
        cands = []
        if self.sm_inflight:
            cands.append(self.sm_inflight[0][1])
        if self.crop_fills:
            cands.append(self.crop_fills[0][0])
        if self.het_updates:
            cands.append(self.het_updates[0][0])
        if self.raster_ready is not None:
            cands.append(self.raster_ready)
        t = self.tc.next_timeout()
        if t is not None:
            cands.append(t)
        cands = [c for c in cands if c >= self.now]
        return min(cands) if cands else None

    # ------------------------------------------------------------------ units

    def _commit_updates(self) -> bool:
        moved = False
        st = self.targets.stencil
        while self.het_updates and self.het_updates[0][0] <= self.now:
            st[self.het_updates.popleft()[1]] |= TERMINATION_BIT
            moved = True
        return moved

    def _crop_commit(self, q) -> None:
        s = self.stats
        px = self._pixels(q.pos)
        if self.draw.shader == "alpha_test":
            st = self.targets.stencil
            ref = self.draw.stencil_ref
            for i in range(4):
                if q.live >> i & 1:
                    st[px[i]] = (st[px[i]] & TERMINATION_BIT) | ref
                    s.stencil_writes += 1
        else:
            qy, qx = divmod(q.pos, self.targets.quads_x)
            idx, crossed = crop_blend(q, self._image, qx * 2, qy * 2, px,
                                      self.cfg.et_threshold if self.het else None, self.rgba8)
            self.blended_log.extend(idx)
            s.fragments_blended += len(idx)
            if crossed:
                commit = self.now + self.cfg.zrop_update_latency
                for p in crossed:
                    self.het_updates.append((commit, p))
                s.termination_signals += len(crossed)
        last = self.last_ordinal.get(q.pos, -1)
        if q.ordinal <= last:
            s.order_violations += 1
        self.last_ordinal[q.pos] = q.ordinal

    def _crop(self) -> bool:
        u = self.stats.units["crop"]
        progress = False
        fills = self.crop_fills
        while fills and fills[0][0] <= self.now:
            q = heapq.heappop(fills)[2]
            self._crop_commit(q)
            self.crop_waiting.discard(q.pos)
            progress = True
        limit = self.cfg.crop_quads_per_cycle
        window = self.cfg.crop_window
        blocked: set[int] = set()
        issued = 0
        i = 0
        cin = self.crop_in
        while i < len(cin) and i < window and issued < limit:
            q = cin[i]
            if q.pos in blocked or q.pos in self.crop_waiting:
                blocked.add(q.pos)
                i += 1
                continue
            del cin[i]
            issued += 1
            if self.draw.shader == "alpha_test" or not q.live:
                self._crop_commit(q)
                continue
            pos = q.pos
            qx = (pos % self.targets.quads_x) * 2
            qy = (pos // self.targets.quads_x) * 2
            ready = self.cache.access(self.cache.line_of(qx, qy), self.now, self.cfg.l2_latency)
            if ready <= self.now:
                self._crop_commit(q)
            else:
                self._seq += 1
                heapq.heappush(fills, (ready, self._seq, q))
                self.crop_waiting.add(pos)
                blocked.add(pos)
        if issued:
            u.items_out += issued
            u.busy_cycles += 1
            progress = True
        elif cin:
            u.stall_cycles += 1
        return progress

    def _sm(self) -> bool:
        u = self.stats.units["sm"]
        s = self.stats
        progress = False
        stalled = False
        inflight = self.sm_inflight
        while inflight and inflight[0][1] <= self.now:
            entry = inflight[0]
            if entry[2] is None:
                entry[2] = self._shade(entry[0])
            outs = entry[2]
            if self.crop_in and len(self.crop_in) + len(outs) > self.cfg.crop_queue_capacity:
                stalled = True
                break
            inflight.popleft()
            self.crop_in.extend(outs)
            u.items_out += 1
            s.quads_to_crop += len(outs)
            s.units["crop"].items_in += len(outs)
            progress = True
        if self.warp_q and len(inflight) < self.cfg.sm_cores:
            w = self.warp_q.popleft()
            inflight.append([w, self.now + warp_cost(w, self.cfg), None])
            u.items_in += 1
            s.warps_launched += 1
            progress = True
        if inflight:
            u.busy_cycles += 1
        if stalled:
            u.stall_cycles += 1
        self._sm_stalled = stalled
        return progress

    def _shade(self, warp):
        if self.draw.shader == "alpha_test":
            return alpha_test_shade(warp, self.targets.color, self.cfg.et_threshold, self._pixels,
                                    self.stats, self.shaded_log)
        return sm_shade(warp, self.stats, self.shaded_log, pixels=self._pixels)

    def _prop(self) -> bool:
        u = self.stats.units["prop"]
        progress = False
        while self.prop_warps and len(self.warp_q) < self.cfg.warp_queue_capacity:
            w = self.prop_warps.popleft()
            self.warp_q.append(w)
            u.items_out += len(w.slots)
            progress = True
        if self.prop_warps:
            u.stall_cycles += 1
            return progress
        if self.prop_cur is None and self.prop_in:
            self.prop_cur = self.prop_in.popleft()
            self.prop_in_quads -= len(self.prop_cur)
            self.prop_scanned = 0
            u.items_in += len(self.prop_cur)
            self.stats.quads_into_qru += len(self.prop_cur)
            progress = True
        if self.prop_cur is not None:
            self.prop_scanned += self.cfg.qru_throughput
            u.busy_cycles += 1
            progress = True
            if self.prop_scanned >= len(self.prop_cur):
                warps = qru_reorder(self.prop_cur, self.cfg.qm_enabled, self.cfg.screen_tile // 2)
                self.stats.quads_merged += sum(len(w.pairs()) for w in warps)
                self.prop_warps.extend(warps)
                self.prop_cur = None
        return progress

    def _zrop(self) -> bool:
        u = self.stats.units["zrop"]
        s = self.stats
        progress = False
        if self.zrop_done is not None:
            group = self.zrop_done
            if self.prop_in and self.prop_in_quads + len(group) > self._cap:
                u.stall_cycles += 1
                return False
            self.prop_in.append(group)
            self.prop_in_quads += len(group)
            self.zrop_done = None
            progress = True
        if self.zrop_cur is None and self.zrop_in:
            self.zrop_cur = self.zrop_in.popleft()
            self.zrop_in_quads -= len(self.zrop_cur)
            self.zrop_idx = 0
            self.zrop_keep = []
            progress = True
        if self.zrop_cur is None:
            return progress
        st = self.targets.stencil
        stest = self.draw.stencil_test
        cur = self.zrop_cur
        end = min(len(cur), self.zrop_idx + self.cfg.zrop_throughput)
        for q in cur[self.zrop_idx:end]:
            if self.het or stest:
                hk, sk = zrop_het_filter(q, st, self._pixels(q.pos), self.het, stest)
                if hk or sk:
                    s.fragments_killed_het += popcount4(hk)
                    s.fragments_killed_stencil += popcount4(sk)
                    q.kill = hk | sk
                    if q.kill == q.cov:
                        if hk:
                            s.quads_killed_het += 1
                        else:
                            s.quads_killed_stencil += 1
                        continue
            self.zrop_keep.append(q)
        u.items_in += end - self.zrop_idx
        u.busy_cycles += 1
        self.zrop_idx = end
        progress = True
        if end == len(cur):
            self.zrop_cur = None
            u.items_out += len(self.zrop_keep)
            if self.zrop_keep:
                if not self.prop_in or self.prop_in_quads + len(self.zrop_keep) <= self._cap:
                    self.prop_in.append(self.zrop_keep)
                    self.prop_in_quads += len(self.zrop_keep)
                else:
                    self.zrop_done = self.zrop_keep
            self.zrop_keep = []
        return progress

    def _tc(self) -> bool:
        u = self.stats.units["tc"]
        progress = False
        while self.tc_pending:
            group = self.tc_pending[0][1]
            if self.zrop_in and self.zrop_in_quads + len(group) > self._cap:
                u.stall_cycles += 1
                break
            self.tc_pending.popleft()
            self.zrop_in.append(group)
            self.zrop_in_quads += len(group)
            u.items_out += len(group)
            progress = True
        if not self.tc_pending:
            group = self.tc.expired(self.now)
            reason = "timeout"
            if group is None and len(self.tc) and self._upstream_of_tc_done():
                group = self.tc.flush_oldest()
                reason = "end"
            if group is not None:
                self.stats.tc_flushes[reason] += 1
                self.tc_pending.append((reason, group))
                progress = True
        if progress:
            u.busy_cycles += 1
        return progress

    def _raster(self) -> bool:
        u = self.stats.units["raster"]
        s = self.stats
        progress = False
        if self.raster_ready is not None:
            if self.now < self.raster_ready:
                u.busy_cycles += 1
                return False
            tc = self.tc
            while self.raster_out:
                if self.tc_pending:
                    u.stall_cycles += 1
                    return progress
                q = self.raster_out.popleft()
                for reason, group in tc.insert(q, self.now):
                    s.tc_flushes[reason] += 1
                    self.tc_pending.append((reason, group))
                u.items_out += 1
                s.units["tc"].items_in += 1
                s.quads_rasterized += 1
                s.fragments_rasterized += popcount4(q.cov)
                progress = True
            self.raster_ready = None
        if self.raster_in:
            tri, tile = self.raster_in.popleft()
            u.items_in += 1
            u.busy_cycles += 1
            self.raster_out.extend(rasterize(self.prims, self.edges, tri, tile, self.targets, self.cfg,
                                             shade=self.draw.shader == "splat"))
            S = self.cfg.screen_tile
            ty, tx = divmod(tile, self.targets.tiles_x)
            coarse = coarse_tiles(self.boxes[tri], tx * S, ty * S, S, self.cfg.raster_tile)
            self.raster_ready = self.now + max(1, math.ceil(coarse / self.cfg.raster_throughput))
            progress = True
        return progress

    def _tgc(self) -> bool:
        u = self.stats.units["tgc"]
        progress = False
        rate = self.cfg.vpo_throughput
        if self.tgc is None:
            n = 0
            while self.tgc_in and n < rate and len(self.raster_in) < self._cap:
                tri, tile, _ = self.tgc_in.popleft()
                self.raster_in.append((tri, tile))
                n += 1
            if n:
                u.items_in += n
                u.items_out += n
                u.busy_cycles += 1
                progress = True
            elif self.tgc_in:
                u.stall_cycles += 1
            return progress
        if len(self.raster_in) >= self._cap:
            if self.tgc_in or len(self.tgc):
                u.stall_cycles += 1
            return False
        n = 0
        while self.tgc_in and n < rate:
            tri, tile, last = self.tgc_in.popleft()
            for reason, group in self.tgc.insert(tri, tile, last):
                self.stats.tgc_flushes[reason] += 1
                self.raster_in.extend(group)
                u.items_out += len(group)
            n += 1
        if n:
            u.items_in += n
            progress = True
        elif (len(self.tgc) and self.next_tri >= self.n_tris and not self.vpo_pending):
            group = self.tgc.flush_oldest()
            self.stats.tgc_flushes["end"] += 1
            self.raster_in.extend(group)
            u.items_out += len(group)
            progress = True
        if progress:
            u.busy_cycles += 1
        return progress

    def _vpo(self) -> bool:
        u = self.stats.units["vpo"]
        if self.next_tri >= self.n_tris and not self.vpo_pending:
            return False
        if len(self.tgc_in) >= self._cap:
            u.stall_cycles += 1
            return False
        emitted = 0
        progress = False
        while emitted < self.cfg.vpo_throughput:
            if not self.vpo_pending:
                if self.next_tri >= self.n_tris:
                    break
                tri = self.next_tri
                self.next_tri += 1
                u.items_in += 1
                progress = True
                box = pixel_bbox(self.tris[tri], self.width, self.height)
                if box is None:
                    continue
                self.boxes[tri] = box
                tiles = vpo_bin_primitive(self.tris[tri], self.width, self.height, self.cfg.screen_tile)
                last = len(tiles) - 1
                self.vpo_pending.extend((tri, t, i == last) for i, t in enumerate(tiles))
                continue
            self.tgc_in.append(self.vpo_pending.popleft())
            emitted += 1
        if emitted:
            u.items_out += emitted
            u.busy_cycles += 1
            progress = True
        return progress

    # ------------------------------------------------------------------ driver

    def step_cycle(self) -> bool:
        """Advance one cycle; returns whether any state changed."""
        progress = self._commit_updates()
        progress |= self._crop()
        progress |= self._sm()
        progress |= self._prop()
        progress |= self._zrop()
        progress |= self._tc()
        progress |= self._raster()
        progress |= self._tgc()
        progress |= self._vpo()
        self.now += 1
        return progress

    def _skip_to(self, t: int) -> None:
        gap = t - self.now
        if gap <= 0:
            return
        units = self.stats.units
        if self.sm_inflight:
            units["sm"].busy_cycles += gap
            if self._sm_stalled:
                units["sm"].stall_cycles += gap
        if self.raster_ready is not None and self.now < self.raster_ready:
            units["raster"].busy_cycles += min(gap, self.raster_ready - self.now)
        if self.crop_in:
            units["crop"].stall_cycles += gap
        self.now = t

    def run(self, max_cycles: int | None = None) -> SimStats:
        while not self.drained():
            if max_cycles is not None and self.now >= max_cycles:
                raise SimulationError(f"draw did not drain within {max_cycles} cycles")
            if not self.step_cycle():
                t = self._next_event()
                if t is None:
                    if self.drained():
                        break
                    raise SimulationError(f"pipeline deadlocked at cycle {self.now}")
                self._skip_to(t)
        self.stats.cycles = self.now
        return self.stats

    def frame(self) -> FrameOutput:
        n = self.width * self.height
        shaded = np.bincount(np.asarray(self.shaded_log, dtype=np.int64), minlength=n)
        blended = np.bincount(np.asarray(self.blended_log, dtype=np.int64), minlength=n)
        return FrameOutput(
            color=self.targets.color_image(),
            shaded_count=shaded.reshape(self.height, self.width),
            blended_count=blended.reshape(self.height, self.width),
            dropped_pruned=self.stats.fragments_pruned,
            dropped_terminated=self.stats.fragments_killed_het,
            stencil=self.targets.stencil_array(),
        )


def run_draw(prims: SplatPrimitiveSet, width: int, height: int, config: PipelineConfig = PipelineConfig(),
             targets: TargetBuffers | None = None, draw: DrawState = DrawState(),
             max_cycles: int | None = None) -> tuple[FrameOutput, SimStats]:
    """Simulate one draw of depth-sorted primitives; returns the frame and the stats."""
    pipe = Pipeline(prims, width, height, config, targets, draw)
    stats = pipe.run(max_cycles)
    return pipe.frame(), stats


def simulate(prims: SplatPrimitiveSet, camera, config: PipelineConfig = PipelineConfig(),
             max_cycles: int | None = None) -> tuple[FrameOutput, SimStats]:
    """Single-pass render of ``prims`` at the camera's resolution on fresh render targets."""
    return run_draw(prims, camera.width, camera.height, config, max_cycles=max_cycles)
