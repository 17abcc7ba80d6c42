"""Per-node queue state and the slot update rules of both fog tiers.

An EFN holds its prediction queues as ``W`` buckets (one per future slot,
oldest first) and its arrival queue as a FIFO of ``[arrival_slot, bits]``
batches. Serving the integrate queue drains the arrival queue first and
then the buckets in increasing lookahead, which is FIFO in arrival time.
Local, offload and all CFN queues are fluid.

Every service step drains the start-of-slot backlog before admitting the
bits routed to it during the same slot.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class ContractViolation(RuntimeError):
    pass


@dataclass
class EfnState:
    W: int
    b_local_max: float
    b_offload_max: float
    window: deque = field(default_factory=deque)  # [slot, true_bits, phantom_bits]
    arrivals: deque = field(default_factory=deque)  # [slot, bits]
    local: float = 0.0
    offload: float = 0.0

    @classmethod
    def empty(cls, W: int, b_local_max: float, b_offload_max: float, start_slot: int = 0) -> "EfnState":
        window = deque([start_slot + w, 0.0, 0.0] for w in range(W))
        return cls(W=W, b_local_max=b_local_max, b_offload_max=b_offload_max, window=window)

    @property
    def arrival_backlog(self) -> float:
        return math.fsum(b for _, b in self.arrivals)

    def prediction_backlogs(self) -> list[float]:
        return [t + p for _, t, p in self.window]

    @property
    def integrate_backlog(self) -> float:
        return self.arrival_backlog + math.fsum(self.prediction_backlogs())

    @property
    def phantom_backlog(self) -> float:
        return math.fsum(p for _, _, p in self.window)


@dataclass
class CfnState:
    b_local_max: float
    b_offload_max: float
    cloud_rate: float
    arrival: float = 0.0
    local: float = 0.0
    offload: float = 0.0


@dataclass
class ServiceAmounts:
    """Bits drained from one EFN's integrate queue in one slot.

    ``mu[0]`` is the arrival queue, ``mu[w + 1]`` prediction queue ``w``.
    ``latency_bits`` maps a latency in slots to the real bits leaving with it.
    """

    mu: list[float]
    to_local: float
    to_offload: float
    latency_bits: dict[int, float]
    phantom_bits: float

    @property
    def total(self) -> float:
        return self.to_local + self.to_offload


def _check_cap(name: str, value: float, cap: float) -> None:
    if value < 0 or value > cap * (1 + 1e-12):
        raise ContractViolation(f"{name}={value!r} outside [0, {cap!r}]")


def split_routing(available: float, b_l: float, b_o: float) -> tuple[float, float]:
    """Local first up to ``b_l``, the remainder to offload up to ``b_o``."""
    total = min(available, b_l + b_o)
    to_local = min(total, b_l)
    return to_local, total - to_local


def distribute_efn(state: EfnState, b_l: float, b_o: float, slot: int) -> ServiceAmounts:
    _check_cap("b_local", b_l, state.b_local_max)
    _check_cap("b_offload", b_o, state.b_offload_max)
    to_local, to_offload = split_routing(state.integrate_backlog, b_l, b_o)
    budget = to_local + to_offload
    mu = [0.0] * (state.W + 1)
    latency_bits: dict[int, float] = {}
    phantom = 0.0

    arrivals = state.arrivals
    while budget > 0 and arrivals:
        batch = arrivals[0]
        take = min(batch[1], budget)
        batch[1] -= take
        budget -= take
        mu[0] += take
        lat = slot - batch[0]
        latency_bits[lat] = latency_bits.get(lat, 0.0) + take
        if batch[1] <= 0:
            arrivals.popleft()

    for w, bucket in enumerate(state.window):
        if budget <= 0:
            break
        size = bucket[1] + bucket[2]
        if size <= 0:
            continue
        take = min(size, budget)
        # the node cannot tell phantoms apart, so both drain pro rata
        true_part = take * bucket[1] / size
        phantom_part = take - true_part
        bucket[1] = max(bucket[1] - true_part, 0.0)
        bucket[2] = max(bucket[2] - phantom_part, 0.0)
        if take == size:
            bucket[1] = bucket[2] = 0.0
        budget -= take
        mu[w + 1] += take
        if true_part > 0:
            # pre-served bits have not arrived yet: zero waiting time
            latency_bits[0] = latency_bits.get(0, 0.0) + true_part
        phantom += phantom_part

    drained = math.fsum(mu)
    to_local = min(drained, to_local)
    return ServiceAmounts(mu, to_local, max(drained - to_local, 0.0), latency_bits, phantom)


def advance_window(state: EfnState, slot: int, tail_true: float, tail_phantom: float = 0.0, missed: float = 0.0) -> float:
    """Move the window one slot ahead at the end of ``slot``.

    ``tail_*`` are the predicted bits of slot ``slot + W``; ``missed`` are real
    bits of ``slot`` that were never predicted. Returns the phantom bits
    dropped because their predicted arrival did not happen.
    """
    if state.W == 0:
        bits = tail_true + missed
        if bits > 0:
            state.arrivals.append([slot, bits])
        return 0.0
    head_slot, true_left, phantom_left = state.window.popleft()
    if head_slot != slot:
        raise ContractViolation(f"window head is slot {head_slot}, expected {slot}")
    bits = true_left + missed
    if bits > 0:
        state.arrivals.append([slot, bits])
    state.window.append([slot + state.W, float(tail_true), float(tail_phantom)])
    return phantom_left


def distribute_cfn(state: CfnState, b_l: float, b_o: float) -> tuple[float, float]:
    _check_cap("b_local", b_l, state.b_local_max)
    _check_cap("b_offload", b_o, state.b_offload_max)
    to_local, to_offload = split_routing(state.arrival, b_l, b_o)
    state.arrival = max(state.arrival - to_local - to_offload, 0.0)
    return to_local, to_offload


def apply_local_processing(backlog: float, f: float, L: float, slot_s: float, admitted: float = 0.0) -> tuple[float, float]:
    """Return ``(new_backlog, processed_bits)`` after one slot at frequency ``f``."""
    if f < 0:
        raise ContractViolation(f"negative CPU frequency {f!r}")
    processed = min(backlog, slot_s * f / L)
    return max(backlog - processed, 0.0) + admitted, processed


def link_capacity(p, gain, bandwidth_hz: float, noise_w_hz: float, slot_s: float):
    """Bits per slot over a link at transmit power ``p``."""
    return slot_s * bandwidth_hz * np.log2(1.0 + np.asarray(p) * gain / (noise_w_hz * bandwidth_hz))


def apply_transmission(
    efns: list[EfnState],
    cfns: list[CfnState],
    powers: np.ndarray,
    gains: np.ndarray,
    bandwidth_hz: float,
    noise_w_hz: float,
    slot_s: float,
    admitted: np.ndarray | None = None,
    p_max: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Drain every EFN offload queue over its links and deliver to CFN arrival queues.

    Drained bits are split over destinations in proportion to link capacity.
    Returns ``(sent_per_efn, received_per_cfn)``.
    """
    powers = np.asarray(powers, dtype=float)
    if (powers < 0).any():
        raise ContractViolation("negative transmit power")
    if p_max is not None and (powers.sum(axis=1) > p_max * (1 + 1e-9)).any():
        raise ContractViolation("per-EFN transmit power budget exceeded")
    caps = link_capacity(powers, gains, bandwidth_hz, noise_w_hz, slot_s)
    total_cap = caps.sum(axis=1)
    sent = np.zeros(len(efns))
    received = np.zeros(len(cfns))
    for i, efn in enumerate(efns):
        if total_cap[i] > 0 and efn.offload > 0:
            moved = min(efn.offload, total_cap[i])
            sent[i] = moved
            received += moved * caps[i] / total_cap[i]
            efn.offload = max(efn.offload - moved, 0.0)
        if admitted is not None:
            efn.offload += admitted[i]
    for j, cfn in enumerate(cfns):
        cfn.arrival += received[j]
    return sent, received


def apply_cloud_offload(cfn: CfnState, admitted: float = 0.0) -> float:
    """Push up to the cloud link rate to the cloud; returns bits actually offloaded."""
    moved = min(cfn.offload, cfn.cloud_rate)
    cfn.offload = max(cfn.offload - moved, 0.0) + admitted
    return moved


KINDS = ("efn_arrival", "efn_local", "efn_offload", "cfn_arrival", "cfn_local", "cfn_offload")


def backlog_by_kind(efns: list[EfnState], cfns: list[CfnState]) -> dict[str, float]:
    return {
        "efn_arrival": math.fsum(e.integrate_backlog for e in efns),
        "efn_local": math.fsum(e.local for e in efns),
        "efn_offload": math.fsum(e.offload for e in efns),
        "cfn_arrival": math.fsum(c.arrival for c in cfns),
        "cfn_local": math.fsum(c.local for c in cfns),
        "cfn_offload": math.fsum(c.offload for c in cfns),
    }


def snapshot_rows(slot: int, efns: list[EfnState], cfns: list[CfnState]):
    """CSV rows ``(slot, node, kind, backlog_bits)`` for one slot."""
    for i, e in enumerate(efns):
        yield slot, f"efn{i}", "arrival", e.arrival_backlog
        for w, b in enumerate(e.prediction_backlogs()):
            yield slot, f"efn{i}", f"prediction{w}", b
        yield slot, f"efn{i}", "local", e.local
        yield slot, f"efn{i}", "offload", e.offload
    for j, c in enumerate(cfns):
        yield slot, f"cfn{j}", "arrival", c.arrival
        yield slot, f"cfn{j}", "local", c.local
        yield slot, f"cfn{j}", "offload", c.offload
