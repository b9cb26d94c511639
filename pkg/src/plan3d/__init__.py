"""Planner and auto-tuner for tensor x pipeline x sharded-data parallel GPT training."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CalibrationFailed,
    ConfigError,
    InvalidFactorization,
    OutOfMemory,
    PlannerError,
    TopologyError,
)
from .hardware import HardwareConfig, effective_peak, group_of, tiles_per_node  # noqa: E402
from .memory import MemoryBreakdown, ParallelConfig, activation_bytes, fits, model_state_bytes  # noqa: E402
from .model import ModelConfig, flops_per_step, param_count  # noqa: E402
from .perf import EfficiencyParams, StepTimeBreakdown, step_time, throughput  # noqa: E402
from .pipeline import BACKEND, StageTiming, bubble_closed_form, simulate_1f1b  # noqa: E402
