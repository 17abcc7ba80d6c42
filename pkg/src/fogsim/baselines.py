"""Comparison policies behind the same per-slot interface as PORA.

Baselines fix the routing and size resources greedily: the CPU drains the
whole local backlog (up to ``f_max``) and a non-empty offload queue
transmits at ``p_max`` split evenly over the accessible CFNs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fogsim.config import ConfigError, SimulationConfig
from fogsim.pora import SlotDecision, pora_slot
from fogsim.queueing import CfnState, EfnState
from fogsim.topology import FogTopology

POLICY_STREAM = 0x90

LOCAL, OFFLOAD = 0, 1


@dataclass(frozen=True)
class PolicyKind:
    name: str
    d: int = 0

    @classmethod
    def from_config(cls, config: SimulationConfig) -> "PolicyKind":
        return cls(config.policy, config.d if config.policy == "pora-d" else 0)

    def __str__(self) -> str:
        return f"pora-{self.d}" if self.name == "pora-d" else self.name


def _greedy_frequency(backlog: float, L: float, f_max: float, slot_s: float) -> float:
    return min(f_max, L * backlog / slot_s)


def baseline_slot(
    kind: PolicyKind,
    topology: FogTopology,
    efns: list[EfnState],
    cfns: list[CfnState],
    config: SimulationConfig,
    rng: np.random.Generator,
) -> SlotDecision:
    if kind.name not in ("nol", "o2cft", "o2cloud", "random"):
        raise ConfigError("policy", f"{kind.name!r} is not a baseline")
    n, m = topology.n_efn, topology.n_cfn
    dec = SlotDecision.zeros(n, m)

    if kind.name == "random":
        efn_route = rng.integers(0, 2, size=n)
        cfn_route = rng.integers(0, 2, size=m)
    else:
        efn_route = np.full(n, LOCAL if kind.name == "nol" else OFFLOAD)
        cfn_route = np.full(m, OFFLOAD if kind.name == "o2cloud" else LOCAL)
    dec.meta["efn_route"] = efn_route
    dec.meta["cfn_route"] = cfn_route

    for i, e in enumerate(efns):
        cap = e.b_local_max if efn_route[i] == LOCAL else e.b_offload_max
        dec.b_efn[i, efn_route[i]] = cap
        dec.f_efn[i] = _greedy_frequency(e.local, config.cycles_per_bit_efn, config.f_max_efn_hz, config.slot_s)
        if e.offload > 0:
            targets = list(topology.accessible_cfns[i])
            dec.p[i, targets] = config.p_max_w / len(targets)
    for j, c in enumerate(cfns):
        cap = c.b_local_max if cfn_route[j] == LOCAL else c.b_offload_max
        dec.b_cfn[j, cfn_route[j]] = cap
        dec.f_cfn[j] = _greedy_frequency(c.local, config.cycles_per_bit_cfn, config.f_max_cfn_hz, config.slot_s)
    return dec


def probe_subsets(topology: FogTopology, d: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Pick ``d`` accessible CFNs per EFN, uniformly without replacement."""
    out = []
    for cfns in topology.accessible_cfns:
        if not 1 <= d <= len(cfns):
            raise ConfigError("d", f"d={d} outside [1, {len(cfns)}]")
        if d == len(cfns):
            out.append(tuple(cfns))
        else:
            out.append(tuple(sorted(rng.choice(cfns, size=d, replace=False).tolist())))
    return out


def pora_d_slot(
    d: int,
    topology: FogTopology,
    efns: list[EfnState],
    cfns: list[CfnState],
    config: SimulationConfig,
    rng: np.random.Generator,
    gains: np.ndarray | None = None,
) -> SlotDecision:
    subsets = probe_subsets(topology, d, rng)
    dec = pora_slot(topology, efns, cfns, config, gains=gains, subsets=subsets)
    dec.meta["probed"] = subsets
    return dec


Policy = Callable[[list, list, np.ndarray], SlotDecision]


def make_policy(config: SimulationConfig, topology: FogTopology, seed: int | None = None) -> Policy:
    """Return ``policy(efns, cfns, gains) -> SlotDecision`` owning its random stream."""
    kind = PolicyKind.from_config(config)
    seed = config.seed_policy if seed is None else seed
    rng = np.random.default_rng([seed, POLICY_STREAM])
    if kind.name == "pora":
        return lambda efns, cfns, gains: pora_slot(topology, efns, cfns, config, gains=gains)
    if kind.name == "pora-d":
        return lambda efns, cfns, gains: pora_d_slot(kind.d, topology, efns, cfns, config, rng, gains=gains)
    return lambda efns, cfns, gains: baseline_slot(kind, topology, efns, cfns, config, rng)
