"""Cycle-level simulator of the splat rendering pipeline."""
from .config import ConfigError, PipelineConfig, load_config, save_config
from .engine import DrawState, Pipeline, SimulationError, run_draw, simulate
from .packets import QuadPacket, TargetBuffers, WarpPacket
from .stats import ConservationError, SimStats, UnitStats

__all__ = [
    "ConfigError", "ConservationError", "DrawState", "Pipeline", "PipelineConfig", "QuadPacket",
    "SimStats", "SimulationError", "TargetBuffers", "UnitStats", "WarpPacket", "load_config",
    "run_draw", "save_config", "simulate",
]
