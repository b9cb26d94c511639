"""Per-tile memory of model states and activations, and feasibility checks."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError, InvalidFactorization
from .hardware import HardwareConfig
from .model import ModelConfig, param_count

# Mixed-precision Adam accounting, bytes per parameter.
PARAM_BYTES = 6  # bf16 compute copy + fp32 master
GRAD_BYTES = 2
OPTIM_BYTES = 8  # fp32 momentum + variance

DEFAULT_HEADROOM = 0.92


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class ParallelConfig:
    tp: int = 1
    pp: int = 1
    dp: int = 1
    mbs: int = 1
    gas: int = 1
    zero_stage: int = 0

    def __post_init__(self):
        for f in ("tp", "pp", "dp", "mbs", "gas"):
            v = getattr(self, f)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"parallel field {f!r} must be an integer >= 1, got {v!r}")
        if self.zero_stage not in (0, 1, 2, 3):
            raise ConfigError(f"zero_stage must be 0..3, got {self.zero_stage!r}")

    @property
    def world_tiles(self) -> int:
        return self.tp * self.pp * self.dp

    @property
    def global_batch(self) -> int:
        return self.mbs * self.gas * self.dp

    @property
    def model_parallel_size(self) -> int:
        return self.tp * self.pp

    @classmethod
    def from_dict(cls, data: dict) -> "ParallelConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown parallel field(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate(m: ModelConfig, pc: ParallelConfig, strict_layers: bool = False) -> None:
    """Raise InvalidFactorization if ``pc`` cannot partition ``m``.

    With ``strict_layers`` the layer count must divide evenly across stages;
    otherwise stages get ceil(L/pp) or floor(L/pp) layers.
    """
    if m.num_heads % pc.tp:
        raise InvalidFactorization(f"tp={pc.tp} does not divide num_heads={m.num_heads}")
    if m.hidden_size % pc.tp:
        raise InvalidFactorization(f"tp={pc.tp} does not divide hidden_size={m.hidden_size}")
    if pc.pp > m.num_layers:
        raise InvalidFactorization(f"pp={pc.pp} exceeds num_layers={m.num_layers}")
    if strict_layers and m.num_layers % pc.pp:
        raise InvalidFactorization(
            f"pp={pc.pp} does not divide num_layers={m.num_layers} (strict layer split)"
        )


def layers_per_stage(m: ModelConfig, pc: ParallelConfig) -> int:
    """Layers on the heaviest pipeline stage."""
    return _ceil_div(m.num_layers, pc.pp)


@dataclass(frozen=True)
class MemoryBreakdown:
    """Per-tile bytes."""

    param_bytes: int
    grad_bytes: int
    optim_bytes: int
    activation_bytes: int = 0

    @property
    def total_bytes(self) -> int:
        return self.param_bytes + self.grad_bytes + self.optim_bytes + self.activation_bytes

    @property
    def model_state_bytes(self) -> int:
        return self.param_bytes + self.grad_bytes + self.optim_bytes


def model_state_bytes(num_params: int, pc: ParallelConfig) -> MemoryBreakdown:
    """Parameter, gradient and optimizer bytes on one tile.

    ZeRO shards optimizer states over DP from stage 1, gradients from stage 2
    and the 6-byte parameter bucket only from stage 3. Shares are rounded up.
    """
    if num_params < 1:
        raise ConfigError("num_params must be >= 1")
    mp = pc.tp * pc.pp
    z = pc.zero_stage
    return MemoryBreakdown(
        param_bytes=_ceil_div(PARAM_BYTES * num_params, mp * (pc.dp if z >= 3 else 1)),
        grad_bytes=_ceil_div(GRAD_BYTES * num_params, mp * (pc.dp if z >= 2 else 1)),
        optim_bytes=_ceil_div(OPTIM_BYTES * num_params, mp * (pc.dp if z >= 1 else 1)),
    )


RECOMPUTE_MODES = ("none", "selective")


def activation_bytes(m: ModelConfig, pc: ParallelConfig, recompute: str = "selective") -> int:
    """Activation bytes held by the first pipeline stage under 1F1B.

    Per layer and micro-batch, s*b*d*(34 + 5*a*s/d)/tp bytes are stored
    without recomputation; ``"selective"`` recomputes the attention core and
    drops the 5*a*s/d term. Stage 0 keeps min(pp, gas) micro-batches alive.
    """
    if recompute not in RECOMPUTE_MODES:
        raise ConfigError(f"recompute must be one of {RECOMPUTE_MODES}, got {recompute!r}")
    s, d, a = m.seq_len, m.hidden_size, m.num_heads
    attn = 5 * a * s if recompute == "none" else 0
    per_layer = _ceil_div(s * pc.mbs * (34 * d + attn), pc.tp)
    inflight = min(pc.pp, pc.gas)
    return layers_per_stage(m, pc) * per_layer * inflight


def memory_breakdown(
    m: ModelConfig, pc: ParallelConfig, num_params: int | None = None, recompute: str = "selective"
) -> MemoryBreakdown:
    p = param_count(m) if num_params is None else num_params
    states = model_state_bytes(p, pc)
    return MemoryBreakdown(
        states.param_bytes, states.grad_bytes, states.optim_bytes, activation_bytes(m, pc, recompute)
    )


def usable_bytes(h: HardwareConfig, headroom: float = DEFAULT_HEADROOM) -> float:
    return h.hbm_per_tile * headroom


def fits(mb: MemoryBreakdown, h: HardwareConfig, headroom: float = DEFAULT_HEADROOM) -> bool:
    return mb.total_bytes <= usable_bytes(h, headroom)
