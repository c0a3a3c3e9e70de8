"""Pipeline configuration and its JSON file form."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from ..preprocess import MIN_ALPHA
from ..reference import ALPHA_MAX, ET_THRESHOLD

COLOR_FORMATS = {"RGBA16F": 8, "RGBA8": 4}  # bytes per pixel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    screen_tile: int = 16          # pixels per side
    raster_tile: int = 8           # pixels per side
    tile_grid: int = 4             # screen tiles per side
    tgc_bins: int = 128
    tgc_bin_size: int = 16         # primitives
    tc_bins: int = 32
    tc_bin_size: int = 128         # quads
    tc_timeout: int = 64           # cycles since the bin's last arrival
    crop_throughput: int = 2       # quads/cycle at RGBA16F; doubled for RGBA8
    crop_cache: int = 16384        # bytes
    crop_cache_line: int = 128     # bytes
    crop_cache_ways: int = 8
    crop_window: int = 16          # CROP input entries examined per cycle
    zrop_update_latency: int = 8
    sm_cores: int = 16
    warp_shade_cost: int = 32
    warp_merge_cost: int = 4
    l2_latency: int = 100
    vpo_throughput: int = 4        # tile entries/cycle
    raster_throughput: int = 1     # raster tiles/cycle (up to 16 quads each)
    zrop_throughput: int = 8       # quads/cycle
    qru_throughput: int = 8        # quads/cycle
    queue_capacity: int = 256      # quads buffered between TC, ZROP and PROP
    warp_queue_capacity: int = 16  # warps waiting for an SM core
    crop_queue_capacity: int = 64  # quads waiting for CROP
    het_enabled: bool = False
    qm_enabled: bool = False
    tgc_enabled: bool | None = None  # None: on exactly when qm_enabled
    et_threshold: float = ET_THRESHOLD
    prune_epsilon: float = MIN_ALPHA
    alpha_max: float = ALPHA_MAX
    color_format: str = "RGBA16F"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and not isinstance(v, bool) and v <= 0 and f.name != "zrop_update_latency":
                raise ConfigError(f"{f.name} must be > 0, got {v}")
        if self.zrop_update_latency < 0:
            raise ConfigError("zrop_update_latency must be >= 0")
        if self.color_format not in COLOR_FORMATS:
            raise ConfigError(f"color_format must be one of {sorted(COLOR_FORMATS)}")
        if self.screen_tile % 2 or self.screen_tile % self.raster_tile:
            raise ConfigError("screen_tile must be even and a multiple of raster_tile")
        if self.tc_bin_size > 128:
            raise ConfigError("tc_bin_size above 128 exceeds the 7-bit quad ID space")
        if self.tile_grid * self.tile_grid > 2 * self.tc_bins:
            raise ConfigError("tile grid covers far more screen tiles than the TC bins can hold")
        if not 0.0 <= self.prune_epsilon < self.et_threshold <= 1.0:
            raise ConfigError("need 0 <= prune_epsilon < et_threshold <= 1")
        if self.crop_cache % (self.crop_cache_line * self.crop_cache_ways):
            raise ConfigError("crop_cache must be a whole number of sets")

    @property
    def tgc_active(self) -> bool:
        return self.qm_enabled if self.tgc_enabled is None else self.tgc_enabled

    @property
    def crop_quads_per_cycle(self) -> int:
        return self.crop_throughput * (2 if self.color_format == "RGBA8" else 1)

    @property
    def bytes_per_pixel(self) -> int:
        return COLOR_FORMATS[self.color_format]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        for key in doc:
            if key not in names:
                raise ConfigError(f"unknown config key '{key}'")
        return cls(**doc)


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    return PipelineConfig.from_dict(doc)


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
