"""Weak/strong scaling efficiencies and calibration of the free model parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError, PlannerError
from .hardware import HardwareConfig, tiles_per_node
from .memory import ParallelConfig
from .model import ModelConfig, flops_per_step
from .perf import EfficiencyParams, step_time

DEFAULT_MULTIPLIERS = (1, 2, 4, 8)  # 16..128 nodes from a 16-node replica
# Reference 175B layout, run with ZeRO-1 for scaling.
REFERENCE_BEST = ParallelConfig(tp=8, pp=16, dp=1, mbs=3, gas=100, zero_stage=1)


@dataclass(frozen=True)
class ScalingPoint:
    nodes: int
    tiles: int
    global_batch: int
    step_time: float
    throughput: float  # aggregate model flop/s
    efficiency: float  # percent


@dataclass(frozen=True)
class ScalingReport:
    mode: str
    baseline: ScalingPoint
    points: tuple[ScalingPoint, ...]

    def efficiency_at(self, tiles: int) -> float:
        for p in self.points:
            if p.tiles == tiles:
                return p.efficiency
        raise KeyError(tiles)


def _evaluate(m, pc, h, e) -> ScalingPoint:
    tpn = tiles_per_node(h)
    if pc.world_tiles % tpn:
        raise ConfigError(f"{pc.world_tiles} tiles do not fill whole {tpn}-tile nodes")
    try:
        t = step_time(m, pc, h, e).total
    except PlannerError as exc:
        raise type(exc)(f"scaling point with {pc.world_tiles} tiles: {exc}") from exc
    agg = flops_per_step(m, pc.global_batch) / t
    return ScalingPoint(pc.world_tiles // tpn, pc.world_tiles, pc.global_batch, t, agg, 100.0)


def _report(mode, m, configs, h, e, efficiency) -> ScalingReport:
    raw = [_evaluate(m, pc, h, e) for pc in configs]
    base = raw[0]
    points = sorted(
        (replace(p, efficiency=efficiency(base, p)) for p in raw), key=lambda p: p.tiles
    )
    return ScalingReport(mode, points[0], tuple(points))


def weak_scaling(
    m: ModelConfig,
    base: ParallelConfig,
    h: HardwareConfig,
    e: EfficiencyParams,
    multipliers=DEFAULT_MULTIPLIERS,
) -> ScalingReport:
    """Grow dp (and the global batch) with the node count; per-replica work is fixed."""
    configs = [replace(base, dp=base.dp * k) for k in multipliers]

    def eff(b, p):
        return 100.0 * (p.throughput / p.tiles) / (b.throughput / b.tiles)

    return _report("weak", m, configs, h, e, eff)


def strong_scaling(
    m: ModelConfig,
    base: ParallelConfig,
    h: HardwareConfig,
    e: EfficiencyParams,
    multipliers=DEFAULT_MULTIPLIERS,
) -> ScalingReport:
    """Grow dp at a fixed global batch; gas shrinks by each multiplier."""
    configs = []
    for k in multipliers:
        dp = base.dp * k
        if base.global_batch % (dp * base.mbs):
            raise ConfigError(
                f"global batch {base.global_batch} not divisible by dp*mbs = {dp}*{base.mbs}"
            )
        configs.append(replace(base, dp=dp, gas=base.global_batch // (dp * base.mbs)))

    def eff(b, p):
        return 100.0 * (b.step_time * b.tiles) / (p.step_time * p.tiles)

    return _report("strong", m, configs, h, e, eff)


@dataclass(frozen=True)
class ScalingSetup:
    """Model, hardware and base configurations shared by scaling runs and calibration.

    The strong-scaling run holds the global batch of the largest weak-scaling
    point, so its last point coincides with ``weak_base`` at max multiplier.
    """

    model: ModelConfig
    hardware: HardwareConfig
    weak_base: ParallelConfig = REFERENCE_BEST
    throughput_config: ParallelConfig = REFERENCE_BEST
    multipliers: tuple[int, ...] = DEFAULT_MULTIPLIERS

    @property
    def strong_base(self) -> ParallelConfig:
        return replace(self.weak_base, gas=self.weak_base.gas * max(self.multipliers))

    def weak(self, e: EfficiencyParams) -> ScalingReport:
        return weak_scaling(self.model, self.weak_base, self.hardware, e, self.multipliers)

    def strong(self, e: EfficiencyParams) -> ScalingReport:
        return strong_scaling(self.model, self.strong_base, self.hardware, e, self.multipliers)


@dataclass(frozen=True)
class Target:
    """A measurement to fit: efficiency percent at ``tiles`` or per-tile TFLOP/s."""

    mode: str  # "weak", "strong" or "throughput"
    value: float
    tiles: int | None = None
    tolerance: float = math.inf

    def __post_init__(self):
        if self.mode not in ("weak", "strong", "throughput"):
            raise ConfigError(f"unknown target mode {self.mode!r}")
        if self.mode != "throughput" and self.tiles is None:
            raise ConfigError(f"{self.mode} target needs a tile count")


DEFAULT_TARGETS = (
    Target("weak", 93.0, tiles=1024, tolerance=2.0),
    Target("strong", 82.0, tiles=1024, tolerance=3.0),
    Target("throughput", 57.0, tolerance=3.0),
)


def predict(target: Target, setup: ScalingSetup, e: EfficiencyParams) -> float:
    if target.mode == "throughput":
        return step_time(setup.model, setup.throughput_config, setup.hardware, e).achieved_flops_per_tile / 1e12
    report = setup.weak(e) if target.mode == "weak" else setup.strong(e)
    return report.efficiency_at(target.tiles)


@dataclass(frozen=True)
class CalibrationResult:
    params: EfficiencyParams
    residuals: tuple[float, ...]  # predicted - target, per target
    converged: bool
    evaluations: int
    targets: tuple[Target, ...] = field(default=())

    @property
    def sse(self) -> float:
        return sum(r * r for r in self.residuals)


FREE_PARAMS = ("compute_efficiency", "dp_bw_scale")
# Log-scaled search box per free parameter.
BOUNDS = {"compute_efficiency": (1e-4, 1.0), "dp_bw_scale": (1e-4, 1e4)}


def calibrate(
    targets=DEFAULT_TARGETS,
    setup: ScalingSetup | None = None,
    start: EfficiencyParams = EfficiencyParams(),
    free=FREE_PARAMS,
    *,
    initial_step: float = 1.0,
    min_step: float = 1e-12,
    max_evals: int = 5000,
) -> CalibrationResult:
    """Fit ``free`` parameters by coordinate search in log space.

    Minimizes the sum of squared residuals. Moves are taken only on strict
    improvement, so parameters that already match the targets come back
    unchanged. ``converged`` is False when any residual exceeds its target's
    tolerance.
    """
    targets = tuple(targets)
    free = tuple(free)
    if setup is None:
        raise ConfigError("calibrate needs a ScalingSetup")
    if len(targets) < len(free):
        raise ConfigError(f"{len(targets)} targets cannot determine {len(free)} free parameters")
    for name in free:
        if name not in BOUNDS:
            raise ConfigError(f"unknown free parameter {name!r}")

    evals = 0

    def residuals(x):
        nonlocal evals
        evals += 1
        e = replace(start, **{n: math.exp(v) for n, v in zip(free, x)})
        return e, tuple(predict(t, setup, e) - t.value for t in targets)

    def sse(r):
        return sum(v * v for v in r)

    lo = [math.log(BOUNDS[n][0]) for n in free]
    hi = [math.log(BOUNDS[n][1]) for n in free]
    x = [math.log(getattr(start, n)) for n in free]
    best_e, best_r = residuals(x)
    best = sse(best_r)
    step = initial_step
    while step > min_step and evals < max_evals and best > 0.0:
        improved = False
        for i in range(len(x)):
            for sign in (1.0, -1.0):
                cand = list(x)
                cand[i] = min(hi[i], max(lo[i], cand[i] + sign * step))
                if cand[i] == x[i]:
                    continue
                e, r = residuals(cand)
                if sse(r) < best:
                    x, best_e, best_r, best = cand, e, r, sse(r)
                    improved = True
                    break
        if not improved:
            step /= 2.0
    converged = all(abs(r) <= t.tolerance for r, t in zip(best_r, targets))
    return CalibrationResult(best_e, best_r, converged, evals, targets)
