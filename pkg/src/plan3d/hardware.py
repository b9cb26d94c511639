"""Cluster topology: tiles, nodes, link parameters and power derating."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable

from .errors import ConfigError, TopologyError

_UNCALIBRATED = ("intra_node_bw", "intra_latency", "inter_latency")


@dataclass(frozen=True)
class HardwareConfig:
    """Accelerator cluster description.

    Bandwidths are bytes/s. ``intra_node_bw`` is the effective per tile-pair
    rate inside a node; ``inter_node_bw`` is the per-node injection rate.
    ``peak_flops_per_tile`` is the nominal bf16 rate before power capping.
    """

    name: str = "smng-p2"
    gpus_per_node: int = 4
    tiles_per_gpu: int = 2
    hbm_per_tile: int = 64 * 10**9
    # bf16 matrix peak of one tile.
    peak_flops_per_tile: float = 570e12
    # 450 W cap on a 600 W part.
    power_cap_ratio: float = 0.75
    intra_node_bw: float = 300e9
    # 2 x HDR = 400 Gbit/s per node.
    inter_node_bw: float = 50e9
    intra_latency: float = 3e-6
    inter_latency: float = 10e-6
    num_nodes: int = 234

    def __post_init__(self):
        for f in ("gpus_per_node", "tiles_per_gpu", "hbm_per_tile", "num_nodes"):
            v = getattr(self, f)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"hardware field {f!r} must be a positive integer, got {v!r}")
        for f in ("peak_flops_per_tile", "intra_node_bw", "inter_node_bw"):
            if not getattr(self, f) > 0:
                raise ConfigError(f"hardware field {f!r} must be > 0")
        for f in ("intra_latency", "inter_latency"):
            if not getattr(self, f) >= 0:
                raise ConfigError(f"hardware field {f!r} must be >= 0")
        if not 0 < self.power_cap_ratio <= 1:
            raise ConfigError(f"power_cap_ratio must be in (0, 1], got {self.power_cap_ratio}")
        if not self.inter_node_bw < self.intra_node_bw * tiles_per_node(self):
            raise ConfigError("inter_node_bw must be below intra_node_bw * tiles_per_node")

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown hardware field(s): {', '.join(unknown)}")
        kw = {}
        for k, v in data.items():
            if k in ("gpus_per_node", "tiles_per_gpu", "hbm_per_tile", "num_nodes"):
                if isinstance(v, float) and v.is_integer():
                    v = int(v)
            elif k != "name":
                v = float(v)
            kw[k] = v
        return cls(**kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def uncalibrated_fields(self) -> list[str]:
        """Fields still at placeholder values that were never measured."""
        default = HardwareConfig()
        return [f for f in _UNCALIBRATED if getattr(self, f) == getattr(default, f)]


@dataclass(frozen=True)
class DeviceGroup:
    member_tiles: tuple[int, ...]
    spans_nodes: bool

    def __len__(self):
        return len(self.member_tiles)


def tiles_per_node(h: HardwareConfig) -> int:
    return h.gpus_per_node * h.tiles_per_gpu


def total_tiles(h: HardwareConfig) -> int:
    return h.num_nodes * tiles_per_node(h)


def effective_peak(h: HardwareConfig) -> float:
    """Power-capped per-tile peak in flop/s."""
    return h.peak_flops_per_tile * h.power_cap_ratio


def node_of(h: HardwareConfig, tile: int) -> int:
    return tile // tiles_per_node(h)


def group_of(h: HardwareConfig, tile_indices: Iterable[int]) -> DeviceGroup:
    members = tuple(int(t) for t in tile_indices)
    if not members:
        raise TopologyError("device group must not be empty")
    if len(set(members)) != len(members):
        raise TopologyError(f"duplicate tiles in group {members}")
    limit = total_tiles(h)
    bad = [t for t in members if not 0 <= t < limit]
    if bad:
        raise TopologyError(f"tile index {bad[0]} outside cluster of {limit} tiles")
    nodes = {node_of(h, t) for t in members}
    return DeviceGroup(members, len(nodes) > 1)


SMNG_P2 = HardwareConfig()
PRESETS = {"smng-p2": SMNG_P2}


def get_preset(name: str) -> HardwareConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown hardware preset {name!r} (known: {', '.join(sorted(PRESETS))})"
        ) from None
