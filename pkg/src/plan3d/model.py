"""GPT model shapes, parameter counts and per-step model FLOPs."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Decoder-only GPT shape.

    Counts are exact integers. ``flops_per_step`` returns a float: for the
    shipped presets it stays far below 2**53 per sequence, but very large
    global batches lose integer exactness (not accuracy).
    """

    name: str
    num_layers: int
    hidden_size: int
    num_heads: int
    vocab_size: int
    seq_len: int

    def __post_init__(self):
        for f in ("num_layers", "hidden_size", "num_heads", "vocab_size", "seq_len"):
            v = getattr(self, f)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"model field {f!r} must be a positive integer, got {v!r}")
        if self.hidden_size % self.num_heads:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = [f.name for f in fields(cls)]
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(f"unknown model field(s): {', '.join(unknown)}")
        missing = [n for n in names if n not in data]
        if missing:
            raise ConfigError(f"missing model field(s): {', '.join(missing)}")
        return cls(**{n: data[n] for n in names})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def param_count(m: ModelConfig) -> int:
    """12*L*d^2 + V*d, in exact integer arithmetic."""
    return 12 * m.num_layers * m.hidden_size**2 + m.vocab_size * m.hidden_size


def flops_per_step(m: ModelConfig, global_batch: int) -> float:
    """Model FLOPs of one forward+backward step over ``global_batch`` sequences.

    96*B*s*L*d^2 * (1 + s/(6d) + V/(16*L*d)), the usual decoder estimate used
    by Megatron-style frameworks (no recomputation counted).
    """
    if global_batch < 1:
        raise ConfigError(f"global_batch must be >= 1, got {global_batch}")
    L, d, s, V = m.num_layers, m.hidden_size, m.seq_len, m.vocab_size
    # Same polynomial over a common denominator: exact integer until the cast.
    return float(2 * global_batch * s * d * (48 * L * d + 8 * L * s + 3 * V))


# Shapes are reconstructions: only total parameter counts are known.
PRESETS = {
    "gpt-3.6b": ModelConfig("gpt-3.6b", 30, 3072, 32, 50304, 2048),
    "gpt-20b": ModelConfig("gpt-20b", 32, 7168, 64, 50304, 2048),
    "gpt-175b": ModelConfig("gpt-175b", 96, 12288, 96, 50304, 2048),
}

NOMINAL_PARAMS = {"gpt-3.6b": 3.6e9, "gpt-20b": 20e9, "gpt-175b": 175e9}


def get_preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown model preset {name!r} (known: {', '.join(sorted(PRESETS))})"
        ) from None
