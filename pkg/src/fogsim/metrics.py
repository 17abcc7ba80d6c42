"""Running measurements, summaries and the latency-reduction estimator."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from fogsim.queueing import KINDS, CfnState, ContractViolation, EfnState, backlog_by_kind


class MetricsAccumulator:
    """Sums over the measurement window (slots at or after ``warmup``).

    Power sums are in W*slots and backlog sums in bit*slots, so dividing by
    ``slot_count`` gives time averages. ``latency_hist[i][w]`` holds the real
    bits of EFN ``i`` that left its arrival/prediction queues ``w`` slots after
    their true arrival.
    """

    def __init__(self, n_efn: int, slot_s: float, varsigma: float, warmup: int = 0, keep_trace: bool = True):
        self.n_efn = n_efn
        self.slot_s = slot_s
        self.varsigma = varsigma
        self.warmup = warmup
        self.keep_trace = keep_trace
        self.last_slot = -1
        self.slot_count = 0
        self.power = {"proc_eft": 0.0, "proc_cft": 0.0, "tx": 0.0}
        self.backlog = dict.fromkeys(KINDS, 0.0)
        self.arrival_queue_sum = 0.0
        self.finished = defaultdict(float)
        self.latency_hist: list[dict[int, float]] = [defaultdict(float) for _ in range(n_efn)]
        self.true_arrivals = np.zeros(n_efn)
        self.trace_backlog: list[float] = []
        self.trace_power: list[float] = []

    def slot_power(self, decision) -> tuple[float, float, float]:
        """(EFT processing, CFT processing, transmit) energy of one slot."""
        tau, s = self.slot_s, self.varsigma
        return (
            tau * s * float(np.sum(decision.f_efn ** 3)),
            tau * s * float(np.sum(decision.f_cfn ** 3)),
            tau * float(np.sum(decision.p)),
        )

    def record_slot(
        self,
        slot: int,
        decision,
        efns: Sequence[EfnState],
        cfns: Sequence[CfnState],
        finished: Optional[Mapping[str, float]] = None,
        latency_bits: Optional[Sequence[Mapping[int, float]]] = None,
        arrived_bits: Optional[np.ndarray] = None,
    ) -> None:
        if slot <= self.last_slot:
            raise ContractViolation(f"slot {slot} recorded twice")
        self.last_slot = slot
        eft, cft, tx = self.slot_power(decision)
        kinds = backlog_by_kind(efns, cfns)
        if self.keep_trace:
            self.trace_backlog.append(math.fsum(kinds.values()))
            self.trace_power.append(eft + cft + tx)
        if slot < self.warmup:
            return
        self.slot_count += 1
        self.power["proc_eft"] += eft
        self.power["proc_cft"] += cft
        self.power["tx"] += tx
        for k, v in kinds.items():
            self.backlog[k] += v
        self.arrival_queue_sum += math.fsum(e.arrival_backlog for e in efns)
        for k, v in (finished or {}).items():
            self.finished[k] += v
        if latency_bits is not None:
            for i, hist in enumerate(latency_bits):
                target = self.latency_hist[i]
                for w, bits in hist.items():
                    target[max(w, 0)] += bits
        if arrived_bits is not None:
            self.true_arrivals += arrived_bits

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        """Combine two runs' accumulators (sums add, histograms add)."""
        out = MetricsAccumulator(self.n_efn, self.slot_s, self.varsigma, self.warmup, keep_trace=False)
        out.slot_count = self.slot_count + other.slot_count
        out.last_slot = max(self.last_slot, other.last_slot)
        for k in out.power:
            out.power[k] = self.power[k] + other.power[k]
        for k in out.backlog:
            out.backlog[k] = self.backlog[k] + other.backlog[k]
        out.arrival_queue_sum = self.arrival_queue_sum + other.arrival_queue_sum
        for src in (self, other):
            for k, v in src.finished.items():
                out.finished[k] += v
            for i, hist in enumerate(src.latency_hist):
                for w, bits in hist.items():
                    out.latency_hist[i][w] += bits
        out.true_arrivals = self.true_arrivals + other.true_arrivals
        return out

    def latency_mass(self) -> float:
        return math.fsum(math.fsum(h.values()) for h in self.latency_hist)

    def mean_latency(self) -> float:
        """Bit-weighted mean arrival-queue latency in slots."""
        mass = self.latency_mass()
        if mass <= 0:
            return 0.0
        return math.fsum(w * b for h in self.latency_hist for w, b in h.items()) / mass

    def littles_latency(self) -> float:
        """Arrival-queue latency from mean backlog over throughput."""
        mass = self.latency_mass()
        if mass <= 0 or self.slot_count == 0:
            return 0.0
        return (self.arrival_queue_sum / self.slot_count) / (mass / self.slot_count)

    def distribution(self) -> "LatencyDistribution":
        return LatencyDistribution.from_histograms(self.latency_hist, self.true_arrivals / max(self.slot_count, 1))


@dataclass
class LatencyDistribution:
    """Per-EFN latency pmfs ``pi[i][w]`` and mean arrival rates ``lam[i]`` (bits/slot)."""

    pi: list[dict[int, float]]
    lam: list[float]

    @classmethod
    def from_histograms(cls, hists: Sequence[Mapping[int, float]], lam) -> "LatencyDistribution":
        pi = []
        for h in hists:
            mass = math.fsum(h.values())
            pi.append({w: b / mass for w, b in sorted(h.items())} if mass > 0 else {})
        return cls(pi=pi, lam=[float(x) for x in lam])

    def mean_latency(self) -> float:
        num = math.fsum(lam * math.fsum(w * p for w, p in pi.items() if w >= 1) for lam, pi in zip(self.lam, self.pi))
        den = math.fsum(lam for lam, pi in zip(self.lam, self.pi) if pi)
        return num / den if den > 0 else 0.0


def eta_prediction(dist: LatencyDistribution, W) -> float:
    """Predicted mean arrival-queue latency reduction (slots) for window sizes ``W``.

    ``dist`` must come from a run without prediction. ``W`` is a single size
    shared by all EFNs or one size per EFN.
    """
    active = [i for i, pi in enumerate(dist.pi) if pi and dist.lam[i] > 0]
    if not active:
        raise ValueError("empty latency distribution")
    sizes = [int(W)] * len(dist.pi) if np.isscalar(W) else [int(x) for x in W]
    num = []
    for i in active:
        pi, wi = dist.pi[i], sizes[i]
        head = math.fsum(w * p for w, p in pi.items() if 1 <= w <= wi)
        tail = wi * math.fsum(p for w, p in pi.items() if w > wi)
        num.append(dist.lam[i] * (head + tail))
    return math.fsum(num) / math.fsum(dist.lam[i] for i in active)


CSV_COLUMNS = [
    "run_id", "policy", "V", "W", "p1", "p2", "seed", "slots",
    "avg_power_total_W", "avg_power_proc_eft_W", "avg_power_proc_cft_W", "avg_power_tx_W",
    "avg_backlog_total_bits",
    *[f"avg_backlog_{k}_bits" for k in KINDS],
    "avg_arrival_latency_slots", "eta_predicted_slots",
]


@dataclass
class SimulationResult:
    run_id: str
    policy: str
    V: float
    W: int
    p1: float
    p2: float
    seed: int
    slots: int
    avg_power: dict[str, float]
    avg_backlog: dict[str, float]
    avg_arrival_latency: float
    littles_latency: float
    eta_predicted: float = float("nan")
    accumulator: Optional[MetricsAccumulator] = field(default=None, repr=False)
    trace: Optional[dict[str, np.ndarray]] = field(default=None, repr=False)
    config: Any = field(default=None, repr=False)

    @property
    def avg_power_total(self) -> float:
        return self.avg_power["total"]

    @property
    def avg_backlog_total(self) -> float:
        return self.avg_backlog["total"]

    def row(self) -> dict[str, Any]:
        row = {
            "run_id": self.run_id, "policy": self.policy, "V": self.V, "W": self.W,
            "p1": self.p1, "p2": self.p2, "seed": self.seed, "slots": self.slots,
            "avg_power_total_W": self.avg_power["total"],
            "avg_power_proc_eft_W": self.avg_power["proc_eft"],
            "avg_power_proc_cft_W": self.avg_power["proc_cft"],
            "avg_power_tx_W": self.avg_power["tx"],
            "avg_backlog_total_bits": self.avg_backlog["total"],
        }
        for k in KINDS:
            row[f"avg_backlog_{k}_bits"] = self.avg_backlog[k]
        row["avg_arrival_latency_slots"] = self.avg_arrival_latency
        row["eta_predicted_slots"] = self.eta_predicted
        return row

    def summary_line(self) -> str:
        return (
            f"{self.run_id}: power={self.avg_power['total']:.4g} W "
            f"backlog={self.avg_backlog['total']:.4g} bits latency={self.avg_arrival_latency:.4g} slots"
        )


def summarize(acc: MetricsAccumulator, run_id: str = "run", policy: str = "", V: float = 0.0, W: int = 0,
              p1: float = 0.0, p2: float = 0.0, seed: int = 0) -> SimulationResult:
    n = acc.slot_count
    # a slot's energy over its length is its average power
    to_w = 1.0 / (n * acc.slot_s) if n else 0.0
    power = {k: v * to_w for k, v in acc.power.items()}
    power["total"] = math.fsum(acc.power.values()) * to_w
    backlog = {k: (v / n if n else 0.0) for k, v in acc.backlog.items()}
    backlog["total"] = math.fsum(acc.backlog.values()) / n if n else 0.0
    return SimulationResult(
        run_id=run_id, policy=policy, V=V, W=W, p1=p1, p2=p2, seed=seed, slots=n,
        avg_power=power, avg_backlog=backlog,
        avg_arrival_latency=acc.mean_latency(), littles_latency=acc.littles_latency(),
        accumulator=acc,
    )


def write_csv(results: Sequence[SimulationResult], stream, header_comment: Optional[str] = None) -> None:
    if header_comment:
        for line in header_comment.splitlines():
            stream.write(f"# {line}\n")
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.row())


def csv_text(results: Sequence[SimulationResult], header_comment: Optional[str] = None) -> str:
    buf = io.StringIO()
    write_csv(results, buf, header_comment)
    return buf.getvalue()
