"""Alpha-beta ring cost model for TP, PP and DP collectives."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .hardware import DeviceGroup, HardwareConfig, group_of
from .memory import ParallelConfig, layers_per_stage
from .model import ModelConfig

KINDS = ("all_reduce", "reduce_scatter", "all_gather", "p2p")

ACT_BYTES = 2  # bf16
TP_ALLREDUCES_PER_LAYER = 4  # attention + MLP, forward and backward


@dataclass(frozen=True)
class CollectiveSpec:
    kind: str
    bytes: float
    group: DeviceGroup

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown collective kind {self.kind!r}")
        if self.bytes < 0:
            raise ConfigError("collective payload must be >= 0 bytes")
        if len(self.group) == 0:
            raise ConfigError("collective group is empty")
        if self.kind == "p2p" and len(self.group) != 2:
            raise ConfigError("p2p needs exactly two members")


def link_params(group: DeviceGroup, h: HardwareConfig) -> tuple[float, float]:
    """(bandwidth, latency) for a group; a cross-node group runs at the inter-node rate throughout."""
    if group.spans_nodes:
        return h.inter_node_bw, h.inter_latency
    return h.intra_node_bw, h.intra_latency


def collective_time(c: CollectiveSpec, h: HardwareConfig) -> float:
    n = len(c.group)
    if n == 1:
        return 0.0
    bw, lat = link_params(c.group, h)
    if c.kind == "p2p":
        return c.bytes / bw + lat
    steps = 2 * (n - 1) if c.kind == "all_reduce" else n - 1
    return steps / n * c.bytes / bw + steps * lat


# Rank layout: tile = tp_rank + tp * (pp_rank + pp * dp_rank). TP ranks are
# packed densest-first, so a TP group only leaves a node once tp > tiles/node.


def tile_index(pc: ParallelConfig, tp_rank: int, pp_rank: int, dp_rank: int) -> int:
    return tp_rank + pc.tp * (pp_rank + pc.pp * dp_rank)


def tp_group(pc: ParallelConfig, h: HardwareConfig) -> DeviceGroup:
    return group_of(h, range(pc.tp))


def dp_group(pc: ParallelConfig, h: HardwareConfig) -> DeviceGroup:
    return group_of(h, (tile_index(pc, 0, 0, j) for j in range(pc.dp)))


def p2p_groups(pc: ParallelConfig, h: HardwareConfig) -> list[DeviceGroup]:
    return [
        group_of(h, (tile_index(pc, 0, k, 0), tile_index(pc, 0, k + 1, 0)))
        for k in range(pc.pp - 1)
    ]


def activation_message_bytes(m: ModelConfig, pc: ParallelConfig) -> int:
    """One micro-batch of hidden states, s*b*d in bf16."""
    return ACT_BYTES * pc.mbs * m.seq_len * m.hidden_size


def tp_comm_per_microbatch(m: ModelConfig, pc: ParallelConfig, h: HardwareConfig) -> float:
    """TP all-reduce time of one micro-batch (forward+backward) on the heaviest stage."""
    if pc.tp == 1:
        return 0.0
    spec = CollectiveSpec("all_reduce", activation_message_bytes(m, pc), tp_group(pc, h))
    return layers_per_stage(m, pc) * TP_ALLREDUCES_PER_LAYER * collective_time(spec, h)


def p2p_time(m: ModelConfig, pc: ParallelConfig, h: HardwareConfig) -> float:
    """Slowest stage-boundary transfer of one micro-batch's activations."""
    if pc.pp == 1:
        return 0.0
    nbytes = activation_message_bytes(m, pc)
    return max(collective_time(CollectiveSpec("p2p", nbytes, g), h) for g in p2p_groups(pc, h))


def dp_comm_time(num_params: int, pc: ParallelConfig, h: HardwareConfig) -> float:
    """Gradient reduce-scatter plus parameter all-gather over the DP group.

    A plain all-reduce (ZeRO-0) costs the same under the ring model.
    """
    if pc.dp == 1:
        return 0.0
    nbytes = ACT_BYTES * num_params / (pc.tp * pc.pp)
    g = dp_group(pc, h)
    if pc.zero_stage == 0:
        return collective_time(CollectiveSpec("all_reduce", nbytes, g), h)
    return collective_time(CollectiveSpec("reduce_scatter", nbytes, g), h) + collective_time(
        CollectiveSpec("all_gather", nbytes, g), h
    )


def collective_rows(m: ModelConfig, pc: ParallelConfig, h: HardwareConfig, num_params: int):
    """Per-collective timing rows for one configuration (used by ``sweep --collectives``)."""
    rows = []
    if pc.tp > 1:
        g = tp_group(pc, h)
        spec = CollectiveSpec("all_reduce", activation_message_bytes(m, pc), g)
        rows.append(("tp", spec.kind, len(g), g.spans_nodes, spec.bytes, collective_time(spec, h)))
    for k, g in enumerate(p2p_groups(pc, h)):
        spec = CollectiveSpec("p2p", activation_message_bytes(m, pc), g)
        rows.append((f"pp{k}", spec.kind, 2, g.spans_nodes, spec.bytes, collective_time(spec, h)))
    if pc.dp > 1:
        g = dp_group(pc, h)
        nbytes = ACT_BYTES * num_params / (pc.tp * pc.pp)
        for kind in ("reduce_scatter", "all_gather"):
            spec = CollectiveSpec(kind, nbytes, g)
            rows.append(("dp", kind, len(g), g.spans_nodes, nbytes, collective_time(spec, h)))
    return rows
