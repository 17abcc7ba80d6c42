"""Fog network construction: node placement, EFN->CFN adjacency and link gains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fogsim.config import ConfigError, SimulationConfig

CARRIER_GHZ = 5.8
# stream tags keep the topology/traffic/policy generators independent for equal seeds
TOPOLOGY_STREAM = 0x70


def path_loss_db(distance_m: float) -> float:
    return 24.0 * math.log10(distance_m) + 20.0 * math.log10(CARRIER_GHZ) + 60.0


def channel_gain(distance_m: float) -> float:
    """Linear channel power gain for a link of ``distance_m`` meters at 5.8 GHz."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m!r}")
    return 10.0 ** (-path_loss_db(distance_m) / 10.0)


@dataclass(frozen=True)
class FogTopology:
    n_efn: int
    n_cfn: int
    accessible_cfns: tuple[tuple[int, ...], ...]
    accessible_efns: tuple[tuple[int, ...], ...]
    efn_positions: np.ndarray  # (N, 2) meters
    cfn_positions: np.ndarray  # (M, 2) meters
    gains: np.ndarray  # (N, M) linear gain, every pair
    h_max: float

    def distance(self, i: int, j: int, min_distance_m: float = 1.0) -> float:
        d = float(np.hypot(*(self.efn_positions[i] - self.cfn_positions[j])))
        return max(d, min_distance_m)

    def links(self):
        for i, cfns in enumerate(self.accessible_cfns):
            for j in cfns:
                yield i, j

    def dump(self) -> str:
        """Plain-text tables of positions, adjacency lists and link gains."""
        out = [f"# fog topology: {self.n_efn} EFNs, {self.n_cfn} CFNs", "[efn_positions]", "node x_m y_m"]
        out += [f"{i} {x:.3f} {y:.3f}" for i, (x, y) in enumerate(self.efn_positions)]
        out += ["[cfn_positions]", "node x_m y_m"]
        out += [f"{j} {x:.3f} {y:.3f}" for j, (x, y) in enumerate(self.cfn_positions)]
        out += ["[adjacency]", "efn cfns"]
        out += [f"{i} {' '.join(map(str, cfns))}" for i, cfns in enumerate(self.accessible_cfns)]
        out += ["[links]", "efn cfn gain"]
        out += [f"{i} {j} {self.gains[i, j]:.6e}" for i, j in self.links()]
        return "\n".join(out) + "\n"


def build_topology(config: SimulationConfig, seed: int | None = None) -> FogTopology:
    n, m, k = config.n_efn, config.n_cfn, config.n_access
    if n < 1 or m < 1:
        raise ConfigError("n_efn" if n < 1 else "n_cfn", "need at least one node per tier")
    if k > m:
        raise ConfigError("n_access", f"adjacency size {k} exceeds number of CFNs {m}")
    seed = config.seed_topology if seed is None else seed
    rng = np.random.default_rng([seed, TOPOLOGY_STREAM])

    accessible = tuple(tuple(sorted(int(j) for j in rng.choice(m, size=k, replace=False))) for _ in range(n))
    reverse: list[list[int]] = [[] for _ in range(m)]
    for i, cfns in enumerate(accessible):
        for j in cfns:
            reverse[j].append(i)

    efn_pos = rng.uniform(0.0, config.region_m, size=(n, 2))
    cfn_pos = rng.uniform(0.0, config.region_m, size=(m, 2))
    dist = np.hypot(efn_pos[:, None, 0] - cfn_pos[None, :, 0], efn_pos[:, None, 1] - cfn_pos[None, :, 1])
    dist = np.maximum(dist, config.min_distance_m)
    gains = np.vectorize(channel_gain)(dist)

    return FogTopology(
        n_efn=n,
        n_cfn=m,
        accessible_cfns=accessible,
        accessible_efns=tuple(tuple(r) for r in reverse),
        efn_positions=efn_pos,
        cfn_positions=cfn_pos,
        gains=gains,
        h_max=channel_gain(config.min_distance_m),
    )


def fading_factors(rng: np.random.Generator, shape: tuple[int, int], variance: float) -> np.ndarray | None:
    """Unit-mean gamma fading multipliers; ``None`` when fading is off."""
    if variance <= 0:
        return None
    shape_k = 1.0 / variance
    return rng.gamma(shape_k, variance, size=shape)
