"""Experiment harness: scenarios, presets, sweeps, and emission."""

from .emit import HEADER, emit, parse_csv, render_csv, render_json
from .presets import PRESET_NAMES, SweepSpec, describe_presets, get_preset
from .scenario import Scenario, ScenarioError, with_sweep_value
from .sweep import (SWEEP_SOLVER_OPTIONS, Row, SweepResult, Variant,
                    parse_variant, run_sweep)

__all__ = [
    "HEADER",
    "PRESET_NAMES",
    "Row",
    "SWEEP_SOLVER_OPTIONS",
    "Scenario",
    "ScenarioError",
    "SweepResult",
    "SweepSpec",
    "Variant",
    "describe_presets",
    "emit",
    "get_preset",
    "parse_csv",
    "parse_variant",
    "render_csv",
    "render_json",
    "run_sweep",
    "with_sweep_value",
]
