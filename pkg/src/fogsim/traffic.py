"""Workload arrivals, the lookahead window and prediction-error injection.

Arrivals are whole packets. In stochastic mode each EFN sees a Poisson
number of flows per slot, each flow carrying a geometric number of packets
(mean ``mean_flow_bits / packet_bits``). A trace file replays fixed counts:
one line per slot, whitespace-separated packet counts, one column per EFN.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fogsim.config import ConfigError, SimulationConfig

log = logging.getLogger(__name__)

TRAFFIC_STREAM = 0x7A
ERROR_STREAM = 0x7E


@dataclass(frozen=True)
class PredictionErrorModel:
    p_false_alarm: float = 0.0
    p_missed_detection: float = 0.0

    def __post_init__(self):
        for name in ("p_false_alarm", "p_missed_detection"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def perfect(self) -> bool:
        return self.p_false_alarm == 0.0 and self.p_missed_detection == 0.0


@dataclass(frozen=True)
class SlotArrivals:
    """Arrivals of one slot plus the predicted window for slots ``t .. t+W-1``.

    ``window_true`` counts real packets that were predicted, ``window_phantom``
    counts false alarms. Both are packet counts of shape (N, W).
    """

    slot: int
    true_packets: np.ndarray
    window_true: np.ndarray
    window_phantom: np.ndarray
    packet_bits: int

    @property
    def true_arrivals(self) -> np.ndarray:
        return self.true_packets * float(self.packet_bits)

    @property
    def predicted_window(self) -> np.ndarray:
        return (self.window_true + self.window_phantom) * float(self.packet_bits)


def inject_errors(counts: np.ndarray, model: PredictionErrorModel, rng: np.random.Generator):
    """Split true packet counts into (predicted, phantom) counts.

    Each true packet is missed with probability ``p_missed_detection`` and
    spawns one phantom with probability ``p_false_alarm``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if model.perfect:
        return counts.copy(), np.zeros_like(counts)
    missed = rng.binomial(counts, model.p_missed_detection)
    phantom = rng.binomial(counts, model.p_false_alarm)
    return counts - missed, phantom


def apply_prediction_errors(window: SlotArrivals, model: PredictionErrorModel, rng: np.random.Generator) -> SlotArrivals:
    predicted, phantom = inject_errors(window.window_true, model, rng)
    return SlotArrivals(
        slot=window.slot,
        true_packets=window.true_packets,
        window_true=predicted,
        window_phantom=window.window_phantom + phantom,
        packet_bits=window.packet_bits,
    )


def read_trace(path: str | Path, n_efn: int) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            row = [int(tok) for tok in line.split()]
        except ValueError:
            raise ConfigError("trace_file", f"line {lineno}: packet counts must be integers") from None
        if len(row) != n_efn or min(row) < 0:
            raise ConfigError("trace_file", f"line {lineno}: expected {n_efn} non-negative counts")
        rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, n_efn)


def write_trace(path: str | Path, packets: np.ndarray) -> None:
    Path(path).write_text("".join(" ".join(str(int(x)) for x in row) + "\n" for row in packets))


class TrafficGenerator:
    """Pre-draws the arrival trace (and its prediction errors) for a whole run."""

    def __init__(self, config: SimulationConfig, seed: int | None = None):
        self.config = config
        self.n_efn = config.n_efn
        self.W = config.W
        self.packet_bits = config.packet_bits
        self.length = config.horizon + config.W + 1
        seed = config.seed_traffic if seed is None else seed
        rng = np.random.default_rng([seed, TRAFFIC_STREAM])

        if config.trace_file:
            trace = read_trace(config.trace_file, self.n_efn)
            packets = np.zeros((self.length, self.n_efn), dtype=np.int64)
            rows = min(len(trace), self.length)
            packets[:rows] = trace[:rows]
        else:
            packets = self._draw(rng)
        self.true_packets = packets

        model = PredictionErrorModel(config.p_false_alarm, config.p_missed)
        if config.W == 0:
            # nothing is predicted without a window
            self.predicted_true = np.zeros_like(packets)
            self.phantom = np.zeros_like(packets)
        else:
            err_rng = np.random.default_rng([seed, ERROR_STREAM])
            self.predicted_true, self.phantom = inject_errors(packets, model, err_rng)
        self.missed = packets - self.predicted_true

    @property
    def amax_packets(self) -> int:
        return math.ceil(self.config.amax_factor * self.config.mean_slot_bits / self.packet_bits)

    def _draw(self, rng: np.random.Generator) -> np.ndarray:
        shape = (self.length, self.n_efn)
        flows = rng.poisson(self.config.flow_rate * self.config.slot_s, size=shape)
        mean_pkts = max(self.config.mean_flow_bits / self.packet_bits, 1.0)
        p = 1.0 / mean_pkts
        # sum of `flows` geometric(p) variables on {1,2,...}
        extra = np.zeros(shape, dtype=np.int64)
        busy = flows > 0
        extra[busy] = rng.negative_binomial(flows[busy], p)
        packets = flows + extra
        amax = self.amax_packets
        clipped = int((packets > amax).sum())
        if clipped:
            log.warning("truncated %d slot arrivals at A_max=%d packets", clipped, amax)
            packets = np.minimum(packets, amax)
        return packets.astype(np.int64)

    def generate_slot(self, t: int) -> SlotArrivals:
        if t < 0 or t + self.W > self.length - 1:
            raise IndexError(f"slot {t} outside the pre-drawn horizon")
        window = slice(t, t + self.W)
        return SlotArrivals(
            slot=t,
            true_packets=self.true_packets[t].copy(),
            window_true=self.predicted_true[window].T.copy(),
            window_phantom=self.phantom[window].T.copy(),
            packet_bits=self.packet_bits,
        )
