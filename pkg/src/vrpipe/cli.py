"""Command line: vrpipe {synth, render, simulate, compare}.

Exit codes: 0 ok / within tolerance, 1 tolerance breach, 2 usage,
3 unreadable or malformed input, 4 invariant or internal failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import metrics
from .multipass import run_multipass
from .pipeline.config import ConfigError, PipelineConfig, load_config
from .pipeline.engine import SimulationError, run_draw
from .pipeline.stats import ConservationError
from .preprocess import preprocess
from .reference import RenderOptions, et_reduction_ratio, render_reference
from .scene import SceneFormatError, canonical_camera, read_camera, read_splat_file, synth_layered, synth_random, write_splat_file

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3, 4
DEFAULT_SEED = 0
FEATURES = {"base": (False, False), "het": (True, False), "qm": (False, True), "het+qm": (True, True)}

log = logging.getLogger("vrpipe")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunSpec:
    feature: str
    het: bool = False
    qm: bool = False
    passes: int = 0  # > 0 for multipass:N

    @classmethod
    def parse(cls, text: str) -> "RunSpec":
        text = text.strip()
        if text in FEATURES:
            het, qm = FEATURES[text]
            return cls(text, het, qm)
        if text.startswith("multipass:"):
            try:
                n = int(text.split(":", 1)[1])
            except ValueError:
                raise UsageError(f"bad pass count in feature '{text}'") from None
            if n < 1:
                raise UsageError("multipass needs N >= 1")
            return cls(text, passes=n)
        raise UsageError(f"unknown feature '{text}' (choose from base, het, qm, het+qm, multipass:N)")

    def configure(self, config: PipelineConfig) -> PipelineConfig:
        return config.replace(het_enabled=self.het, qm_enabled=self.qm)


def parse_features(text: str) -> list[RunSpec]:
    specs = [RunSpec.parse(t) for t in text.split(",") if t.strip()]
    if not specs:
        raise UsageError("no features given")
    names = [s.feature for s in specs]
    if len(set(names)) != len(names):
        raise UsageError("duplicate feature in matrix")
    return specs


def default_seed() -> int:
    env = os.environ.get("VRPIPE_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"VRPIPE_SEED must be an integer, got '{env}'") from None


def _camera(args):
    if args.camera:
        return read_camera(args.camera)
    return canonical_camera(args.width, args.height)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.kind == "layered":
        if args.layers < 1 or args.per_layer < 1:
            raise UsageError("--layers and --per-layer must be >= 1")
        scene = synth_layered(args.layers, args.per_layer, args.opacity, seed, width=args.width, height=args.height)
    else:
        if args.count < 0:
            raise UsageError("--count must be >= 0")
        scene = synth_random(args.count, seed=seed)
    write_splat_file(scene, args.output)
    print(f"wrote {len(scene)} gaussians to {args.output}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = read_splat_file(args.scene)
    camera = _camera(args)
    prims = preprocess(scene, camera)
    frame = render_reference(prims, camera, RenderOptions(et_enabled=args.et))
    prefix = Path(args.output)
    metrics.write_pfm(frame, f"{prefix}.pfm")
    metrics.write_ppm(frame, f"{prefix}.ppm")
    counters = {
        "et_enabled": args.et,
        "splats": len(prims),
        "preprocess": dict(prims.counters),
        "fragments_shaded": int(frame.shaded_count.sum()),
        "fragments_blended": int(frame.blended_count.sum()),
        "fragments_pruned": frame.dropped_pruned,
        "fragments_terminated": frame.dropped_terminated,
        "image_sha256": metrics.image_checksum(frame.color),
    }
    if args.et:
        full = render_reference(prims, camera, RenderOptions(et_enabled=False))
        counters["et_reduction_ratio"] = et_reduction_ratio(full, frame)
    metrics.write_report(counters, f"{prefix}.counters.json")
    print(json.dumps({k: counters[k] for k in ("fragments_blended", "fragments_shaded")}, sort_keys=True))
    return EXIT_OK


def _simulate_one(spec: RunSpec, prims, camera, config: PipelineConfig):
    cfg = spec.configure(config)
    if spec.passes:
        result = run_multipass(prims, camera, spec.passes, cfg)
        frame, stats, draws = result.frame, result.stats, result.draw_kinds
    else:
        frame, stats = run_draw(prims, camera.width, camera.height, cfg)
        draws = ["batch"]
    stats.check_conservation()
    return spec, cfg, frame, stats, draws


def cmd_simulate(args) -> int:
    specs = parse_features(args.features)
    config = load_config(args.config) if args.config else PipelineConfig()
    scene = read_splat_file(args.scene)
    camera = _camera(args)
    prims = preprocess(scene, camera)  # one sorted list shared by every variant
    jobs = [(s, prims, camera, config) for s in specs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, *zip(*jobs)))
    else:
        results = [_simulate_one(*j) for j in jobs]

    base_name = "base" if any(s.feature == "base" for s in specs) else specs[0].feature
    base_stats = next(r[3] for r in results if r[0].feature == base_name)
    prefix = Path(args.output)
    summary = {}
    for spec, cfg, frame, stats, draws in results:
        tag = spec.feature.replace(":", "").replace("+", "_")
        metrics.write_pfm(frame, f"{prefix}.{tag}.pfm")
        metrics.write_ppm(frame, f"{prefix}.{tag}.ppm")
        Path(f"{prefix}.{tag}.stats.json").write_text(stats.to_json())
        report = metrics.build_report(spec.feature, stats, cfg, frame, (base_name, base_stats),
                                      extra={"draws": draws, "features": spec.feature})
        metrics.write_report(report, f"{prefix}.{tag}.report.json")
        summary[spec.feature] = {
            "cycles": stats.cycles, "fragments_blended": stats.fragments_blended,
            "quads_merged": stats.quads_merged, "draws": len(draws),
            "speedup": report.derived.get("speedup"),
        }
    print(metrics.dumps(summary), end="")
    return EXIT_OK


def _load_for_compare(path: str):
    p = Path(path)
    if p.suffix == ".pfm":
        return "image", metrics.frame_from_rgb(metrics.read_pfm(p))
    if p.suffix == ".json":
        return "report", metrics.read_report(p)
    raise UsageError(f"cannot compare '{path}': expected a .pfm image or a .json report")


def cmd_compare(args) -> int:
    kind_a, a = _load_for_compare(args.a)
    kind_b, b = _load_for_compare(args.b)
    if kind_a != kind_b:
        raise UsageError("compare needs two images or two reports")
    if kind_a == "image":
        try:
            diff = metrics.image_diff(a, b)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        print(metrics.dumps(diff), end="")
        return EXIT_OK if diff["max_abs"] <= args.tolerance else EXIT_TOLERANCE
    metrics.verify_report(a)
    metrics.verify_report(b)
    ta, tb = a.totals, b.totals
    table = {
        "baseline": a.name,
        "run": b.name,
        "speedup": metrics._ratio(ta["cycles"], tb["cycles"]),
        "fragment_reduction": metrics._ratio(ta["fragments_blended"], tb["fragments_blended"]),
        "quad_reduction": metrics._ratio(ta["quads_to_crop"], tb["quads_to_crop"]),
    }
    print(metrics.dumps(table), end="")
    return EXIT_OK


# ---------------------------------------------------------------- argv

def _add_view_args(p):
    p.add_argument("--camera", help="camera JSON; defaults to the canonical camera at --width x --height")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrpipe", description="Gaussian-splat rendering pipeline simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("--kind", choices=("layered", "random"), default="layered")
    p.add_argument("--layers", type=int, default=50)
    p.add_argument("--per-layer", type=int, default=1)
    p.add_argument("--opacity", type=float, default=0.5)
    p.add_argument("--count", type=int, default=1000, help="gaussians for --kind random")
    p.add_argument("--seed", type=int, default=None, help="defaults to $VRPIPE_SEED or 0")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="oracle render with or without early termination")
    p.add_argument("--scene", required=True)
    _add_view_args(p)
    p.add_argument("--et", dest="et", action="store_true")
    p.add_argument("--no-et", dest="et", action="store_false")
    p.set_defaults(et=False)
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("simulate", help="cycle-level simulation of one or more feature variants")
    p.add_argument("--scene", required=True)
    _add_view_args(p)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--features", default="base", help="comma list of base, het, qm, het+qm, multipass:N")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="diff two images (.pfm) or two reports (.json)")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tolerance", type=float, default=0.0)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vrpipe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SceneFormatError) as exc:
        print(f"vrpipe: cannot read input: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ConservationError, SimulationError, AssertionError) as exc:
        print(f"vrpipe: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, KeyError) as exc:
        print(f"vrpipe: bad input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
