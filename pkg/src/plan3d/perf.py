"""Step-time and throughput model composing compute, TP, pipeline and DP costs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .comm import dp_comm_time, p2p_time, tp_comm_per_microbatch
from .errors import ConfigError, OutOfMemory
from .hardware import HardwareConfig, effective_peak
from .memory import (
    DEFAULT_HEADROOM,
    MemoryBreakdown,
    ParallelConfig,
    fits,
    layers_per_stage,
    memory_breakdown,
    validate,
)
from .model import ModelConfig, flops_per_step, param_count
from .pipeline import StageTiming, simulate_1f1b

FWD_SHARE = 1.0 / 3.0  # backward costs twice the forward


@dataclass(frozen=True)
class EfficiencyParams:
    """Free parameters fitted by calibration.

    compute_efficiency scales the power-capped peak; dp_bw_scale multiplies
    the DP collective time (0 removes it).
    """

    compute_efficiency: float = 0.5
    dp_bw_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.compute_efficiency <= 1:
            raise ConfigError(f"compute_efficiency must be in (0, 1], got {self.compute_efficiency}")
        if not self.dp_bw_scale >= 0:
            raise ConfigError(f"dp_bw_scale must be >= 0, got {self.dp_bw_scale}")


DEFAULT_EFFICIENCY = EfficiencyParams()


@dataclass(frozen=True)
class StepTimeBreakdown:
    compute: float
    tp_comm: float
    pp_p2p: float
    pp_bubble: float
    dp_comm: float
    total: float
    achieved_flops_per_tile: float
    mfu: float
    memory: MemoryBreakdown


def _pipeline_terms(pp: int, gas: int, fwd: float, bwd: float, p2p: float) -> tuple[float, float]:
    """(makespan without p2p, makespan with p2p) of one 1F1B step."""
    if pp == 1:
        base = gas * (fwd + bwd)
        return base, base
    base = simulate_1f1b(pp, gas, StageTiming(fwd, bwd, 0.0)).makespan
    if p2p == 0.0:
        return base, base
    return base, simulate_1f1b(pp, gas, StageTiming(fwd, bwd, p2p)).makespan


@lru_cache(maxsize=65536)
def _step_time(m, pc, h, e, strict_layers, recompute, headroom):
    validate(m, pc, strict_layers)
    mem = memory_breakdown(m, pc, recompute=recompute)
    if not fits(mem, h, headroom):
        raise OutOfMemory(
            f"{mem.total_bytes} B per tile exceeds {h.hbm_per_tile * headroom:.0f} B usable", mem
        )
    world = pc.world_tiles
    flops = flops_per_step(m, pc.global_batch)
    peak = effective_peak(h)
    compute = flops / (world * peak * e.compute_efficiency)

    # Stages are timed at the heaviest stage's layer count.
    imbalance = layers_per_stage(m, pc) * pc.pp / m.num_layers
    compute_mb = compute / pc.gas * imbalance
    tp_mb = tp_comm_per_microbatch(m, pc, h)
    tp_comm = pc.gas * tp_mb
    fwd = compute_mb * FWD_SHARE + tp_mb / 2
    bwd = compute_mb * (1.0 - FWD_SHARE) + tp_mb / 2
    base, with_p2p = _pipeline_terms(pc.pp, pc.gas, fwd, bwd, p2p_time(m, pc, h))
    bubble = 0.0 if pc.pp == 1 else max(0.0, base - compute - tp_comm)
    p2p = with_p2p - base
    dp = e.dp_bw_scale * dp_comm_time(param_count(m), pc, h)

    total = compute + tp_comm + p2p + bubble + dp
    achieved = flops / (total * world)
    return StepTimeBreakdown(compute, tp_comm, p2p, bubble, dp, total, achieved, achieved / peak, mem)


def step_time(
    m: ModelConfig,
    pc: ParallelConfig,
    h: HardwareConfig,
    e: EfficiencyParams = DEFAULT_EFFICIENCY,
    *,
    strict_layers: bool = False,
    recompute: str = "selective",
    headroom: float = DEFAULT_HEADROOM,
) -> StepTimeBreakdown:
    """Predicted per-step time decomposition on one tile.

    Raises InvalidFactorization for shapes ``pc`` cannot partition and
    OutOfMemory (carrying the MemoryBreakdown) when the tile overflows.
    """
    return _step_time(m, pc, h, e, strict_layers, recompute, headroom)


def throughput(
    m: ModelConfig,
    pc: ParallelConfig,
    h: HardwareConfig,
    e: EfficiencyParams = DEFAULT_EFFICIENCY,
    **kwargs,
) -> float:
    """Achieved model flop/s per tile."""
    return step_time(m, pc, h, e, **kwargs).achieved_flops_per_tile
