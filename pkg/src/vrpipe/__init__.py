"""Cycle-level simulation of hardware-accelerated Gaussian splat rendering.

Covers scene loading and synthesis, splat preprocessing, an exact per-pixel
compositing oracle, the pipeline simulator with hardware early termination
and quad merging, software multipass termination, and run reports.
"""
from .multipass import MultipassPlan, run_multipass, split_batches
from .pipeline import PipelineConfig, SimStats, run_draw, simulate
from .preprocess import SplatPrimitiveSet, preprocess
from .reference import FrameOutput, RenderOptions, et_reduction_ratio, render_reference
from .scene import Camera, Gaussian3D, Scene, canonical_camera, synth_layered, synth_random

__version__ = "0.1.0"

__all__ = [
    "Camera", "FrameOutput", "Gaussian3D", "MultipassPlan", "PipelineConfig", "RenderOptions", "Scene",
    "SimStats", "SplatPrimitiveSet", "canonical_camera", "et_reduction_ratio", "preprocess",
    "render_reference", "run_draw", "run_multipass", "simulate", "split_batches", "synth_layered",
    "synth_random",
]
