"""Derived metrics, image encoders and run reports."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pipeline.config import PipelineConfig
from .pipeline.stats import UNITS, SimStats
from .reference import FrameOutput

PSNR_IDENTICAL = "inf"  # sentinel written for identical images
WARP_THREADS = 32


def max_throughput(unit: str, config: PipelineConfig) -> float:
    """Peak items_out per cycle for each unit, in the unit's own items."""
    quads_per_raster_tile = (config.raster_tile // 2) ** 2
    return {
        "vpo": config.vpo_throughput,
        "tgc": config.vpo_throughput,
        "raster": config.raster_throughput * quads_per_raster_tile,
        "tc": config.raster_throughput * quads_per_raster_tile,
        "zrop": config.zrop_throughput,
        "prop": config.qru_throughput,
        "sm": config.sm_cores / config.warp_shade_cost,
        "crop": config.crop_quads_per_cycle,
    }[unit]


def utilization(stats: SimStats, config: PipelineConfig) -> dict[str, float]:
    """Measured / peak throughput per unit, as a percentage."""
    if stats.cycles <= 0:
        raise ValueError("utilization needs a run with at least one cycle")
    return {u: 100.0 * stats.units[u].items_out / (stats.cycles * max_throughput(u, config)) for u in UNITS}


def image_diff(a: FrameOutput, b: FrameOutput) -> dict:
    if a.color.shape != b.color.shape:
        raise ValueError(f"resolution mismatch: {a.color.shape[:2]} vs {b.color.shape[:2]}")
    d = np.abs(a.color.astype(np.float64) - b.color.astype(np.float64))
    mse = float(np.mean(d * d)) if d.size else 0.0
    return {
        "max_abs": float(d.max()) if d.size else 0.0,
        "mean_abs": float(d.mean()) if d.size else 0.0,
        "psnr": math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse),
    }


def _ratio(num, den):
    return num / den if den else None


def warp_blend_occupancy(stats: SimStats) -> float | None:
    """Percentage of launched shader threads that run the merge blend (back quad of a pair)."""
    return _ratio(100.0 * stats.quads_merged * 4, stats.warps_launched * WARP_THREADS)


def image_checksum(color: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(color, dtype=np.float32).tobytes()).hexdigest()


@dataclass
class RunReport:
    name: str
    config: dict
    totals: dict
    derived: dict = field(default_factory=dict)
    baseline: str | None = None
    checksum: str = ""
    metadata: dict = field(default_factory=lambda: {"psnr_domain": "premultiplied linear, peak 1.0"})

    def to_dict(self) -> dict:
        return {
            "name": self.name, "baseline": self.baseline, "config": self.config, "totals": self.totals,
            "derived": self.derived, "image_sha256": self.checksum, "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        return cls(name=doc["name"], config=doc["config"], totals=doc["totals"], derived=doc.get("derived", {}),
                   baseline=doc.get("baseline"), checksum=doc.get("image_sha256", ""),
                   metadata=doc.get("metadata", {}))


def derive(totals: dict, config: PipelineConfig, baseline_totals: dict | None = None) -> dict:
    """Every derived value recomputed from flat SimStats totals alone."""
    stats = SimStats.from_flat_dict(totals)
    out = {
        "utilization": utilization(stats, config) if stats.cycles else {u: 0.0 for u in UNITS},
        "warp_blend_occupancy": warp_blend_occupancy(stats),
    }
    if baseline_totals is not None:
        out["speedup"] = _ratio(baseline_totals["cycles"], totals["cycles"])
        out["fragment_reduction"] = _ratio(baseline_totals["fragments_blended"], totals["fragments_blended"])
        out["quad_reduction"] = _ratio(baseline_totals["quads_to_crop"], totals["quads_to_crop"])
    return out


def build_report(name: str, stats: SimStats, config: PipelineConfig, frame: FrameOutput | None = None,
                 baseline: tuple[str, SimStats] | None = None, extra: dict | None = None) -> RunReport:
    totals = stats.to_flat_dict()
    base_name, base_totals = (baseline[0], baseline[1].to_flat_dict()) if baseline else (None, None)
    report = RunReport(
        name=name, config=config.to_dict(), totals=totals,
        derived=derive(totals, config, base_totals), baseline=base_name,
        checksum=image_checksum(frame.color) if frame is not None else "",
    )
    if base_totals is not None:
        report.metadata["baseline_totals"] = base_totals
    if extra:
        report.metadata.update(extra)
    return report


def verify_report(report: RunReport) -> None:
    """Recompute derived values from the raw totals; raises AssertionError on any mismatch."""
    config = PipelineConfig.from_dict(report.config)
    expect = derive(report.totals, config, report.metadata.get("baseline_totals"))
    if _jsonable(expect) != _jsonable(report.derived):
        raise AssertionError(f"derived values of '{report.name}' do not match its totals")


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return PSNR_IDENTICAL
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_report(report, path) -> None:
    doc = report.to_dict() if isinstance(report, RunReport) else report
    Path(path).write_text(dumps(doc))


def read_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))


def to_rgb8(frame: FrameOutput, background=None) -> np.ndarray:
    c = frame.color.astype(np.float32)
    rgb = c[..., :3]
    if background is not None:
        rgb = rgb + (1 - c[..., 3:4]) * np.asarray(background, dtype=np.float32)
    return np.round(np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8)


def write_ppm(frame: FrameOutput, path, background=None) -> None:
    """Binary P6. Premultiplied RGB is emitted directly (black background) unless one is given."""
    img = to_rgb8(frame, background)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit P6 file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def write_pfm(frame: FrameOutput, path) -> None:
    """Colour PFM, little-endian (scale -1.0), rows stored bottom to top."""
    rgb = np.ascontiguousarray(frame.color[..., :3], dtype="<f4")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(rgb[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    """(H, W, 3) float32 image from a colour PFM of either endianness."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0].strip() != b"PF":
        raise ValueError(f"{path}: not a colour PFM file")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    pixels = np.frombuffer(parts[3], dtype=dtype, count=w * h * 3)
    return pixels.reshape(h, w, 3)[::-1].astype(np.float32)


def frame_from_rgb(rgb: np.ndarray) -> FrameOutput:
    """Wrap a decoded RGB image (alpha unknown, set to 0) for image_diff."""
    h, w = rgb.shape[:2]
    frame = FrameOutput.blank(w, h)
    frame.color[..., :3] = rgb
    return frame
