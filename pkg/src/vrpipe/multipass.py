"""Software early termination: N batch draws separated by stencil-update draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pipeline.config import PipelineConfig
from .pipeline.engine import DrawState, Pipeline
from .pipeline.packets import TargetBuffers
from .pipeline.stats import SimStats
from .preprocess import SplatPrimitiveSet
from .reference import FrameOutput

BATCH_DRAW = DrawState(stencil_test=True, shader="splat")
STENCIL_DRAW = DrawState(stencil_test=False, shader="alpha_test", stencil_ref=1)


@dataclass(frozen=True)
class MultipassPlan:
    n_passes: int
    batches: tuple[tuple[int, int], ...]  # half-open [start, stop) ranges over the sorted splats

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.batches)


def split_batches(n_splats: int, n: int) -> MultipassPlan:
    """Contiguous near-equal ranges; earlier batches take the remainder (10 over 3 gives 4, 3, 3)."""
    if n < 1:
        raise ValueError("need at least one pass")
    if n_splats < 0:
        raise ValueError("negative splat count")
    bounds = [-(-i * n_splats // n) for i in range(n + 1)]
    return MultipassPlan(n, tuple(zip(bounds[:-1], bounds[1:])))


def fullscreen_rectangle(width: int, height: int) -> SplatPrimitiveSet:
    """Two triangles exactly covering the viewport, so every pixel centre is hit once."""
    w, h = float(width), float(height)
    tris = np.array([[[0, 0], [w, 0], [0, h]], [[0, h], [w, 0], [w, h]]])
    return SplatPrimitiveSet.flat_primitives(tris, (0.0, 0.0, 0.0), 1.0)


@dataclass
class MultipassResult:
    frame: FrameOutput
    stats: SimStats
    draw_stats: list[SimStats]
    draw_kinds: list[str]
    plan: MultipassPlan


def run_multipass(prims: SplatPrimitiveSet, camera, n: int, config: PipelineConfig = PipelineConfig(),
                  max_cycles: int | None = None) -> MultipassResult:
    """Render sorted ``prims`` in ``n`` batches; 2n - 1 draws share one set of render targets."""
    if config.het_enabled:
        raise ValueError("multipass is the software alternative to HET; disable het_enabled")
    W, H = camera.width, camera.height
    plan = split_batches(len(prims), n)
    targets = TargetBuffers(W, H, config.screen_tile)
    rect = fullscreen_rectangle(W, H)
    total = SimStats(draws=0)
    per_draw, kinds = [], []
    shaded = np.zeros(W * H, dtype=np.int64)
    blended = np.zeros(W * H, dtype=np.int64)
    for i, (start, stop) in enumerate(plan.batches):
        pipe = Pipeline(prims.slice(start, stop), W, H, config, targets, BATCH_DRAW)
        stats = pipe.run(max_cycles)
        shaded += np.bincount(np.asarray(pipe.shaded_log, dtype=np.int64), minlength=W * H)
        blended += np.bincount(np.asarray(pipe.blended_log, dtype=np.int64), minlength=W * H)
        per_draw.append(stats)
        kinds.append("batch")
        total.add(stats)
        if i < n - 1:
            pipe = Pipeline(rect, W, H, config, targets, STENCIL_DRAW)
            stats = pipe.run(max_cycles)
            per_draw.append(stats)
            kinds.append("stencil")
            total.add(stats)
    frame = FrameOutput(
        color=targets.color_image(),
        shaded_count=shaded.reshape(H, W),
        blended_count=blended.reshape(H, W),
        dropped_pruned=sum(s.fragments_pruned for s, k in zip(per_draw, kinds) if k == "batch"),
        dropped_terminated=total.fragments_killed_stencil,
        stencil=targets.stencil_array(),
    )
    return MultipassResult(frame, total, per_draw, kinds, plan)
