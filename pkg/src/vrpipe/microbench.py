"""Constructed workloads that isolate one pipeline behaviour (binning, CROP rate, CROP cache)."""
from __future__ import annotations

import numpy as np

from .pipeline.config import PipelineConfig
from .pipeline.engine import DrawState, Pipeline
from .pipeline.packets import FULL_MASK, QuadPacket, TargetBuffers
from .pipeline.stats import SimStats
from .preprocess import SplatPrimitiveSet


def single_quad_triangle(x0: int, y0: int) -> np.ndarray:
    """A triangle whose pixel-centre coverage is exactly the 2x2 quad at even (x0, y0)."""
    return np.array([[x0 + 1.0, y0 - 0.6], [x0 - 0.1, y0 + 1.6], [x0 + 2.1, y0 + 1.6]])


def rectangle(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[[x0, y0], [x1, y0], [x0, y1]], [[x0, y1], [x1, y0], [x1, y1]]])


def round_robin_quads(n_prims: int, n_tiles: int, width: int, height: int, screen_tile: int = 16,
                      quad_in_tile: tuple[int, int] = (3, 3)) -> SplatPrimitiveSet:
    """``n_prims`` single-quad primitives cycling over the first ``n_tiles`` screen tiles (row-major)."""
    tiles_x = width // screen_tile
    if n_tiles > tiles_x * (height // screen_tile):
        raise ValueError("viewport too small for that many tiles")
    tris = []
    for i in range(n_prims):
        ty, tx = divmod(i % n_tiles, tiles_x)
        tris.append(single_quad_triangle(tx * screen_tile + 2 * quad_in_tile[0],
                                         ty * screen_tile + 2 * quad_in_tile[1]))
    return SplatPrimitiveSet.flat_primitives(np.array(tris).reshape(-1, 3, 2), (1.0, 1.0, 1.0), 0.1,
                                             tris_per_prim=1)


def binning_warps(n_prims: int, n_tiles: int, config: PipelineConfig = PipelineConfig(),
                  width: int = 128, height: int = 96) -> SimStats:
    prims = round_robin_quads(n_prims, n_tiles, width, height, config.screen_tile)
    pipe = Pipeline(prims, width, height, config)
    return pipe.run()


def crop_stream_rate(config: PipelineConfig, coverage: int = FULL_MASK, n_quads: int = 4096,
                     width: int = 64, height: int = 32) -> float:
    """Steady-state CROP quads/cycle for a stream of quads with the given coverage mask.

    The stream is fed straight into CROP with its input queue kept full. One
    warm-up sweep over the viewport fills the colour cache (the viewport fits
    in it), then the rate of a second, measured stream is returned.
    """
    targets = TargetBuffers(width, height, config.screen_tile)
    pipe = Pipeline(SplatPrimitiveSet.empty(), width, height, config, targets, DrawState())
    n_pos = (width // 2) * (height // 2)
    rgba = np.full((4, 4), 0.01, dtype=np.float32)
    ordinal = 0

    def stream(count):
        nonlocal ordinal
        for k in range(count):
            pos = k % n_pos
            ordinal += 1
            q = QuadPacket(tile=0, qx=0, qy=0, pos=pos, cov=coverage, ordinal=ordinal, prim=0,
                           rgba=rgba * np.array([[coverage >> i & 1] for i in range(4)], np.float32))
            q.live = coverage
            yield q

    def drain(source):
        start = pipe.now
        issued_before = pipe.stats.units["crop"].items_out
        pending = list(source)
        fed = 0
        while fed < len(pending) or pipe.crop_in or pipe.crop_fills:
            while fed < len(pending) and len(pipe.crop_in) < config.crop_queue_capacity:
                pipe.crop_in.append(pending[fed])
                fed += 1
            pipe._commit_updates()
            pipe._crop()
            pipe.now += 1
        return pipe.stats.units["crop"].items_out - issued_before, pipe.now - start

    drain(stream(n_pos))
    issued, cycles = drain(stream(n_quads))
    return issued / cycles


def cache_rectangles(n_rects: int, repeats: int = 2, config: PipelineConfig = PipelineConfig(),
                     rect_w: int = 8, rect_h: int = 16) -> SimStats:
    """Draw ``n_rects`` disjoint rectangles ``repeats`` times, one draw per sweep, on shared targets.

    Returns the accumulated stats; with a cache that holds all rectangles,
    sweeps after the first only hit.
    """
    per_row = 8
    width = per_row * 2 * rect_w
    rows = -(-n_rects // per_row)
    height = rows * rect_h
    tris = []
    for r in range(n_rects):
        ry, rx = divmod(r, per_row)
        x0, y0 = rx * 2 * rect_w, ry * rect_h
        tris.append(rectangle(x0, y0, x0 + rect_w, y0 + rect_h))
    prims = SplatPrimitiveSet.flat_primitives(np.concatenate(tris), (0.2, 0.2, 0.2), 0.1)
    targets = TargetBuffers(width, height, config.screen_tile)
    total = SimStats(draws=0)
    for _ in range(repeats):
        total.add(Pipeline(prims, width, height, config, targets).run())
    return total
