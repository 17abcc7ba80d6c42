"""Slot loop, the deterministic two-node example and parameter sweeps.

Within a slot the order is fixed: decisions, distribution from the
integrate/arrival queues, EFN->CFN transmission, local processing, cloud
drain, window advance. Each service step acts on the start-of-slot backlog
and the bits routed to a queue during the slot join it afterwards.
"""

from __future__ import annotations

import logging
import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from fogsim.baselines import PolicyKind, make_policy
from fogsim.config import SimulationConfig
from fogsim.metrics import (
    LatencyDistribution,
    MetricsAccumulator,
    SimulationResult,
    eta_prediction,
    summarize,
)
from fogsim.pora import NumericalFailure, check_feasible
from fogsim.queueing import (
    CfnState,
    ContractViolation,
    EfnState,
    advance_window,
    apply_cloud_offload,
    apply_local_processing,
    apply_transmission,
    distribute_cfn,
    distribute_efn,
    snapshot_rows,
)
from fogsim.topology import FogTopology, build_topology, fading_factors
from fogsim.traffic import TrafficGenerator

log = logging.getLogger(__name__)

FADING_STREAM = 0xFA


def _initial_states(config: SimulationConfig, traffic: TrafficGenerator):
    caps = config.caps()
    pb = float(config.packet_bits)
    efns = []
    for i in range(config.n_efn):
        e = EfnState.empty(config.W, caps["efn_local"], caps["efn_offload"])
        for w, bucket in enumerate(e.window):
            bucket[1] = traffic.predicted_true[w, i] * pb
            bucket[2] = traffic.phantom[w, i] * pb
        efns.append(e)
    cfns = [CfnState(caps["cfn_local"], caps["cfn_offload"], caps["cloud"]) for _ in range(config.n_cfn)]
    return efns, cfns


def _node_totals(efns, cfns):
    return (
        [e.integrate_backlog + e.local + e.offload for e in efns],
        [c.arrival + c.local + c.offload for c in cfns],
    )


def run(
    config: SimulationConfig,
    topology: Optional[FogTopology] = None,
    *,
    check: bool = False,
    record_queues: bool = False,
    reference: Optional[LatencyDistribution] = None,
    run_id: Optional[str] = None,
) -> SimulationResult:
    """Simulate ``config.horizon`` slots.

    ``check`` validates feasibility and per-node bit conservation every slot.
    ``reference`` is a no-prediction latency distribution used to fill the
    predicted latency reduction for this run's window size.
    """
    topo = topology or build_topology(config)
    traffic = TrafficGenerator(config)
    policy = make_policy(config, topo)
    efns, cfns = _initial_states(config, traffic)
    acc = MetricsAccumulator(config.n_efn, config.slot_s, config.varsigma, warmup=config.warmup_slots)
    fade_rng = np.random.default_rng([config.seed_topology, FADING_STREAM])

    pb = float(config.packet_bits)
    tau = config.slot_s
    L_e, L_c = config.cycles_per_bit_efn, config.cycles_per_bit_cfn
    W = config.W
    queue_rows: list[tuple] = []
    ledger = {"arrived": 0.0, "phantom_in": 0.0, "processed_efn": 0.0, "processed_cfn": 0.0,
              "cloud": 0.0, "phantom_dropped": 0.0}

    for t in range(config.horizon):
        factors = fading_factors(fade_rng, topo.gains.shape, config.fading_var)
        gains = topo.gains if factors is None else np.minimum(topo.gains * factors, topo.h_max)
        try:
            dec = policy(efns, cfns, gains)
        except NumericalFailure as exc:
            exc.diagnostics["slot"] = t
            raise
        if check:
            check_feasible(dec, topo, config)
            before = _node_totals(efns, cfns)

        served = [distribute_efn(e, dec.b_efn[i, 0], dec.b_efn[i, 1], t) for i, e in enumerate(efns)]
        routed = [distribute_cfn(c, dec.b_cfn[j, 0], dec.b_cfn[j, 1]) for j, c in enumerate(cfns)]

        sent, received = apply_transmission(
            efns, cfns, dec.p, gains, config.bandwidth_hz, config.noise_w_hz, tau,
            admitted=[s.to_offload for s in served],
        )

        proc_e = np.zeros(len(efns))
        for i, e in enumerate(efns):
            e.local, proc_e[i] = apply_local_processing(e.local, dec.f_efn[i], L_e, tau, served[i].to_local)
        proc_c = np.zeros(len(cfns))
        cloud = np.zeros(len(cfns))
        for j, c in enumerate(cfns):
            c.local, proc_c[j] = apply_local_processing(c.local, dec.f_cfn[j], L_c, tau, routed[j][0])
            cloud[j] = apply_cloud_offload(c, routed[j][1])

        arrived = traffic.true_packets[t] * pb
        inflow = np.zeros(len(efns))
        dropped = np.zeros(len(efns))
        for i, e in enumerate(efns):
            tail_true = traffic.predicted_true[t + W, i] * pb
            tail_phantom = traffic.phantom[t + W, i] * pb
            missed = traffic.missed[t, i] * pb
            dropped[i] = advance_window(e, t, tail_true, tail_phantom, missed)
            inflow[i] = tail_true + tail_phantom + missed

        if check:
            after = _node_totals(efns, cfns)
            for i in range(len(efns)):
                lhs = before[0][i] + inflow[i]
                rhs = after[0][i] + sent[i] + proc_e[i] + dropped[i]
                if abs(lhs - rhs) > 1e-6 * max(1.0, lhs):
                    raise ContractViolation(f"slot {t}: EFN {i} bit ledger off by {lhs - rhs!r}")
            for j in range(len(cfns)):
                lhs = before[1][j] + received[j]
                rhs = after[1][j] + proc_c[j] + cloud[j]
                if abs(lhs - rhs) > 1e-6 * max(1.0, lhs):
                    raise ContractViolation(f"slot {t}: CFN {j} bit ledger off by {lhs - rhs!r}")
            for node in (*efns, *cfns):
                for name in ("local", "offload"):
                    if getattr(node, name) < 0:
                        raise ContractViolation(f"slot {t}: negative {name} backlog")
            for e in efns:
                if any(b[1] < 0 or b[2] < 0 for b in e.window) or any(b[1] < 0 for b in e.arrivals):
                    raise ContractViolation(f"slot {t}: negative EFN queue")

        finished = {
            "processed_efn": float(proc_e.sum()),
            "processed_cfn": float(proc_c.sum()),
            "cloud": float(cloud.sum()),
            "phantom_served": math.fsum(s.phantom_bits for s in served),
            "phantom_dropped": float(dropped.sum()),
            "transmitted": float(sent.sum()),
        }
        acc.record_slot(t, dec, efns, cfns, finished=finished,
                        latency_bits=[s.latency_bits for s in served], arrived_bits=arrived)
        if record_queues:
            queue_rows.extend(snapshot_rows(t, efns, cfns))

    kind = PolicyKind.from_config(config)
    result = summarize(
        acc,
        run_id=run_id or f"{kind}-V{config.V:g}-W{config.W}",
        policy=str(kind), V=config.V, W=config.W,
        p1=config.p_false_alarm, p2=config.p_missed, seed=config.seed_traffic,
    )
    result.config = config
    result.trace = {
        "total_backlog_bits": np.array(acc.trace_backlog),
        "instant_power_W": np.array(acc.trace_power) / tau,
    }
    if record_queues:
        result.trace["queues"] = queue_rows
    if config.W == 0:
        result.eta_predicted = 0.0
    elif reference is not None:
        result.eta_predicted = eta_prediction(reference, config.W)
    return result


def trace_csv(result: SimulationResult) -> str:
    lines = ["slot,total_backlog_bits,instant_power_W"]
    for t, (b, p) in enumerate(zip(result.trace["total_backlog_bits"], result.trace["instant_power_W"])):
        lines.append(f"{t},{b!r},{p!r}")
    return "\n".join(lines) + "\n"


# --- two-node example -------------------------------------------------------

EXAMPLE = dict(
    initial=8,  # packets at the EFN and at the CFN
    efn_local_rate=1,
    cfn_local_rate=8,
    efn_to_cfn_rate=4,
    cfn_to_cloud_rate=5,
    process_mw=Fraction(1),
    transmit_mw=Fraction(1, 2),
)


def run_motivating_example(efn_policy: str, cfn_policy: str) -> tuple[Fraction, Fraction]:
    """Total power (mW) and mean packet latency (slots) of the two-node example.

    Each node sticks to one policy. A packet finishes when it is processed
    in the fog or handed to the cloud; transfers to the CFN join its FIFO
    at the end of the slot.
    """
    for name, value in (("efn_policy", efn_policy), ("cfn_policy", cfn_policy)):
        if value not in ("local", "offload"):
            raise ValueError(f"{name} must be 'local' or 'offload', got {value!r}")
    ex = EXAMPLE
    efn = deque([[0, ex["initial"]]])  # FIFO of [origin, count]
    cfn = deque([[1, ex["initial"]]])
    power = Fraction(0)
    latency_sum = 0
    finished = 0
    total = 2 * ex["initial"]

    def take(queue: deque, n: int) -> list[list[int]]:
        out = []
        while n > 0 and queue:
            head = queue[0]
            k = min(n, head[1])
            out.append([head[0], k])
            head[1] -= k
            n -= k
            if head[1] == 0:
                queue.popleft()
        return out

    slot = 0
    while finished < total:
        slot += 1
        if efn_policy == "local":
            moved_to_cfn = []
            for _, k in take(efn, ex["efn_local_rate"]):
                power += k * ex["process_mw"]
                latency_sum += k * slot
                finished += k
        else:
            moved_to_cfn = take(efn, ex["efn_to_cfn_rate"])
            power += sum(k for _, k in moved_to_cfn) * ex["transmit_mw"]
        rate = ex["cfn_local_rate"] if cfn_policy == "local" else ex["cfn_to_cloud_rate"]
        for _, k in take(cfn, rate):
            if cfn_policy == "local":
                power += k * ex["process_mw"]
            latency_sum += k * slot
            finished += k
        cfn.extend(moved_to_cfn)
    return power, Fraction(latency_sum, total)


MOTIVATING_POLICIES = [("local", "local"), ("local", "offload"), ("offload", "local"), ("offload", "offload")]


# --- sweeps -----------------------------------------------------------------

AXES = ("V", "W", "errors", "policy", "d")


def axis_overrides(axis: str, value: Any) -> dict[str, Any]:
    if axis == "V":
        return {"V": float(value)}
    if axis == "W":
        return {"W": int(value)}
    if axis == "errors":
        p1, p2 = value
        return {"p_false_alarm": float(p1), "p_missed": float(p2)}
    if axis == "policy":
        name = str(value).lower()
        if name.startswith("pora-") and name[5:].isdigit():
            return {"policy": "pora-d", "d": int(name[5:])}
        return {"policy": name}
    if axis == "d":
        return {"policy": "pora-d", "d": int(value)}
    raise ValueError(f"unknown sweep axis {axis!r}")


def _run_job(args):
    config, point, rep = args
    try:
        res = run(config)
        return point, rep, res.accumulator, None
    except (NumericalFailure, ContractViolation) as exc:
        return point, rep, None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepOutcome:
    results: list[SimulationResult]
    failures: list[tuple[Any, int, str]]


def sweep(
    base: SimulationConfig,
    axis: str,
    values: Sequence[Any],
    replications: int = 5,
    jobs: int = 1,
) -> SweepOutcome:
    """Run every axis value for ``replications`` seeds and pool each point.

    Replication ``r`` of every point uses the same seeds (base seeds + r),
    so points are compared on common random numbers.
    """
    if not values:
        raise ValueError("sweep axis is empty")
    if replications < 1:
        raise ValueError("need at least one replication")
    configs = [base.replace(**axis_overrides(axis, v)) for v in values]
    tasks = [(cfg.with_seed_offset(r), k, r) for k, cfg in enumerate(configs) for r in range(replications)]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_job, tasks))
    else:
        outputs = [_run_job(t) for t in tasks]
    outputs.sort(key=lambda o: (o[0], o[1]))

    pooled: dict[int, MetricsAccumulator] = {}
    failures = []
    for point, rep, acc, err in outputs:
        if err is not None:
            failures.append((values[point], rep, err))
            log.error("sweep point %r replication %d failed: %s", values[point], rep, err)
            continue
        pooled[point] = acc if point not in pooled else pooled[point].merge(acc)

    reference = None
    if axis == "W":
        zero = [k for k, v in enumerate(values) if int(v) == 0 and k in pooled]
        if zero:
            reference = pooled[zero[0]].distribution()

    results = []
    for k, cfg in enumerate(configs):
        if k not in pooled:
            continue
        kind = PolicyKind.from_config(cfg)
        res = summarize(
            pooled[k], run_id=f"{axis}={values[k]}", policy=str(kind), V=cfg.V, W=cfg.W,
            p1=cfg.p_false_alarm, p2=cfg.p_missed, seed=cfg.seed_traffic,
        )
        res.config = cfg
        if cfg.W == 0:
            res.eta_predicted = 0.0
        elif reference is not None:
            res.eta_predicted = eta_prediction(reference, cfg.W)
        results.append(res)
    return SweepOutcome(results, failures)


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))
