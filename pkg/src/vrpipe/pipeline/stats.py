"""Simulation counters, conservation checks and stable serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

UNITS = ("vpo", "tgc", "raster", "tc", "zrop", "prop", "sm", "crop")


class ConservationError(AssertionError):
    pass


@dataclass
class UnitStats:
    items_in: int = 0
    items_out: int = 0
    busy_cycles: int = 0
    stall_cycles: int = 0

    def add(self, other: "UnitStats") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


@dataclass
class SimStats:
    units: dict = field(default_factory=lambda: {u: UnitStats() for u in UNITS})
    cycles: int = 0
    draws: int = 0
    warps_launched: int = 0
    quads_rasterized: int = 0
    fragments_rasterized: int = 0
    quads_into_qru: int = 0
    quads_to_crop: int = 0
    quads_merged: int = 0
    fragments_shaded: int = 0
    fragments_pruned: int = 0
    fragments_blended: int = 0
    quads_killed_het: int = 0
    fragments_killed_het: int = 0
    quads_killed_stencil: int = 0
    fragments_killed_stencil: int = 0
    stencil_writes: int = 0
    termination_signals: int = 0
    order_violations: int = 0
    tgc_flushes: dict = field(default_factory=lambda: {"full": 0, "evict": 0, "end": 0})
    tc_flushes: dict = field(default_factory=lambda: {"full": 0, "evict": 0, "timeout": 0, "end": 0})
    crop_cache: dict = field(default_factory=lambda: {
        "hits": 0, "misses": 0, "compulsory": 0, "capacity": 0, "conflict": 0, "pending_hits": 0,
    })

    @property
    def quads_killed(self) -> int:
        return self.quads_killed_het + self.quads_killed_stencil

    def unit(self, name: str) -> UnitStats:
        return self.units[name]

    def add(self, other: "SimStats") -> None:
        """Accumulate another draw's counters (multi-draw runs)."""
        for f in fields(self):
            mine, theirs = getattr(self, f.name), getattr(other, f.name)
            if f.name == "units":
                for u in UNITS:
                    mine[u].add(theirs[u])
            elif isinstance(mine, dict):
                for k in mine:
                    mine[k] += theirs[k]
            else:
                setattr(self, f.name, mine + theirs)

    def to_flat_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "units":
                for u in UNITS:
                    for g in fields(UnitStats):
                        out[f"units.{u}.{g.name}"] = getattr(v[u], g.name)
            elif isinstance(v, dict):
                for k, x in v.items():
                    out[f"{f.name}.{k}"] = x
            else:
                out[f.name] = v
        return dict(sorted(out.items()))

    @classmethod
    def from_flat_dict(cls, doc: dict) -> "SimStats":
        s = cls()
        for key, value in doc.items():
            parts = key.split(".")
            if parts[0] == "units":
                setattr(s.units[parts[1]], parts[2], value)
            elif len(parts) == 2:
                getattr(s, parts[0])[parts[1]] = value
            else:
                setattr(s, key, value)
        return s

    def to_json(self) -> str:
        return json.dumps(self.to_flat_dict(), indent=2, sort_keys=True) + "\n"

    def check_conservation(self) -> None:
        """Quad bookkeeping across every stage boundary; raises ConservationError."""
        u = self.units
        checks = [
            ("rasterizer out == TC in", u["raster"].items_out, u["tc"].items_in),
            ("TC in == TC out", u["tc"].items_in, u["tc"].items_out),
            ("TC out == ZROP in", u["tc"].items_out, u["zrop"].items_in),
            ("TC in == killed + QRU in", u["tc"].items_in, self.quads_killed + self.quads_into_qru),
            ("ZROP out == QRU in", u["zrop"].items_out, self.quads_into_qru),
            ("PROP in == QRU in", u["prop"].items_in, self.quads_into_qru),
            ("quads_to_crop == QRU in - merged", self.quads_to_crop, self.quads_into_qru - self.quads_merged),
            ("CROP in == quads_to_crop", u["crop"].items_in, self.quads_to_crop),
            ("CROP out == CROP in", u["crop"].items_out, u["crop"].items_in),
            ("warps in == warps out", u["sm"].items_in, u["sm"].items_out),
            ("warps launched == SM in", self.warps_launched, u["sm"].items_in),
            ("rasterized quads", self.quads_rasterized, u["raster"].items_out),
            ("VPO out == TGC in", u["vpo"].items_out, u["tgc"].items_in),
            ("TGC in == TGC out", u["tgc"].items_in, u["tgc"].items_out),
            ("TGC out == raster in", u["tgc"].items_out, u["raster"].items_in),
            ("shaded + killed == rasterized fragments",
             self.fragments_shaded + self.fragments_killed_het + self.fragments_killed_stencil,
             self.fragments_rasterized),
        ]
        bad = [f"{name}: {a} != {b}" for name, a, b in checks if a != b]
        if self.order_violations:
            bad.append(f"{self.order_violations} per-pixel ordering violations")
        if bad:
            raise ConservationError("; ".join(bad))
