"""1F1B and GPipe pipeline schedules on a deterministic discrete-event engine.

The event loop lives in a compiled kernel (``plan3d._schedule``) when it has
been built, otherwise in ``plan3d._schedule_py``. Set ``PLAN3D_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the kernel in use.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _schedule_py
from .errors import ConfigError

if os.environ.get("PLAN3D_PURE_PYTHON", "") == "1":
    _kernel = _schedule_py
else:
    try:
        from . import _schedule as _kernel
    except ImportError:
        _kernel = _schedule_py

BACKEND = "python" if _kernel is _schedule_py else "cython"
KERNELS = {"python": _schedule_py.run_schedule}
if BACKEND == "cython":
    KERNELS["cython"] = _kernel.run_schedule

SCHEDULES = {"1f1b": _schedule_py.ONE_F_ONE_B, "gpipe": _schedule_py.GPIPE}
PHASES = ("F", "B")

DEFAULT_BWD_RATIO = 2.0


@dataclass(frozen=True)
class StageTiming:
    fwd_time: float
    bwd_time: float | None = None
    p2p_time: float = 0.0

    def __post_init__(self):
        if self.bwd_time is None:
            object.__setattr__(self, "bwd_time", DEFAULT_BWD_RATIO * self.fwd_time)
        if min(self.fwd_time, self.bwd_time, self.p2p_time) < 0:
            raise ConfigError("stage timings must be >= 0")


class Event(NamedTuple):
    stage: int
    micro_batch: int
    phase: str
    start: float
    end: float


@dataclass(frozen=True, eq=False)
class ScheduleResult:
    pp: int
    m: int
    makespan: float
    busy_time_per_stage: tuple[float, ...]
    starts: np.ndarray  # (pp, m, 2), phase 0 forward / 1 backward
    ends: np.ndarray

    @property
    def bubble_fraction(self) -> float:
        if self.makespan <= 0.0:
            return 0.0
        return 1.0 - sum(self.busy_time_per_stage) / (self.pp * self.makespan)

    @cached_property
    def event_log(self) -> tuple[Event, ...]:
        events = [
            Event(k, j, PHASES[ph], float(self.starts[k, j, ph]), float(self.ends[k, j, ph]))
            for k in range(self.pp)
            for j in range(self.m)
            for ph in (0, 1)
        ]
        events.sort(key=lambda e: (e.start, e.stage, e.micro_batch, e.phase != "F"))
        return tuple(events)


def simulate(
    pp: int, m: int, timing: StageTiming, schedule: str = "1f1b", backend: str | None = None
) -> ScheduleResult:
    if pp < 1 or m < 1:
        raise ConfigError(f"pp and m must be >= 1, got pp={pp}, m={m}")
    try:
        kind = SCHEDULES[schedule]
    except KeyError:
        raise ConfigError(f"unknown schedule {schedule!r}") from None
    run = KERNELS[backend or BACKEND]
    starts = np.zeros((pp, m, 2))
    ends = np.full((pp, m, 2), -1.0)
    makespan = run(pp, m, float(timing.fwd_time), float(timing.bwd_time), float(timing.p2p_time),
                   kind, starts, ends)
    busy = tuple((ends[k] - starts[k]).sum() for k in range(pp))
    return ScheduleResult(pp, m, float(makespan), tuple(float(b) for b in busy), starts, ends)


def simulate_1f1b(pp: int, m: int, timing: StageTiming, backend: str | None = None) -> ScheduleResult:
    """Non-interleaved 1F1B: stage k runs at most pp-k forwards ahead of its backwards."""
    return simulate(pp, m, timing, "1f1b", backend)


def simulate_gpipe(pp: int, m: int, timing: StageTiming, backend: str | None = None) -> ScheduleResult:
    """All forwards, then all backwards, on every stage."""
    return simulate(pp, m, timing, "gpipe", backend)


def bubble_closed_form(pp: int, m: int) -> float:
    """Idle fraction (pp-1)/(m+pp-1) of a uniform pipeline."""
    if pp < 1 or m < 1:
        raise ConfigError(f"pp and m must be >= 1, got pp={pp}, m={m}")
    return (pp - 1) / (m + pp - 1)
