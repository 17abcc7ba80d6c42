"""One slot of PORA control: routing splits, DVFS frequencies and water-filling powers.

Each rule minimises its own term of the per-slot drift-plus-penalty bound,
using only start-of-slot backlogs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fogsim.config import SimulationConfig
from fogsim.queueing import CfnState, ContractViolation, EfnState
from fogsim.topology import FogTopology

LN2 = math.log(2.0)


class NumericalFailure(RuntimeError):
    """The dual bisection did not converge; carries the bracket for diagnosis."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics

    def __str__(self) -> str:
        # callers up the stack add the slot and node, so render on demand
        return self.message + "".join(f" {k}={v!r}" for k, v in self.diagnostics.items())


@dataclass
class SlotDecision:
    """Control outputs of one slot.

    ``b_efn``/``b_cfn`` hold (local, offload) routing amounts in bits per slot,
    ``p`` is an (N, M) matrix of transmit powers in W, zero off the adjacency.
    """

    b_efn: np.ndarray
    b_cfn: np.ndarray
    f_efn: np.ndarray
    f_cfn: np.ndarray
    p: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_efn: int, n_cfn: int) -> "SlotDecision":
        return cls(
            b_efn=np.zeros((n_efn, 2)),
            b_cfn=np.zeros((n_cfn, 2)),
            f_efn=np.zeros(n_efn),
            f_cfn=np.zeros(n_cfn),
            p=np.zeros((n_efn, n_cfn)),
        )

    def is_zero(self) -> bool:
        return not any(np.any(a) for a in (self.b_efn, self.b_cfn, self.f_efn, self.f_cfn, self.p))


@dataclass(frozen=True)
class DualSearchParams:
    tol_rel: float = 1e-9
    max_iterations: int = 200

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise ValueError("tolerance must be positive")


def decide_offload_split(q_src: float, q_dst: float, cap: float) -> float:
    """Route the full cap when the source backlog strictly exceeds the destination's."""
    return cap if q_dst < q_src else 0.0


def decide_cpu_frequency(q_local: float, V: float, varsigma: float, L: float, f_max: float) -> float:
    if q_local <= 0:
        return 0.0
    return min(math.sqrt(q_local / (3.0 * V * varsigma * L)), f_max)


def cpu_objective(f: float, q_local: float, V: float, varsigma: float, L: float) -> float:
    return V * varsigma * f ** 3 - q_local * f / L


def power_objective(p, m, l, V: float, log=math.log2) -> float:
    """Sum of ``V p_j - m_j log2(1 + l_j p_j)`` (pass ``log=math.log`` for the natural-log form)."""
    return math.fsum(V * pj - mj * log(1.0 + lj * pj) for pj, mj, lj in zip(p, m, l))


def water_fill(m, l, V: float, p_max: float, params: DualSearchParams = DualSearchParams()) -> tuple[list[float], float]:
    """Minimise ``sum V p_j - m_j ln(1 + l_j p_j)`` over ``p >= 0, sum p <= p_max``.

    The minimiser is ``p_j = [m_j / (V + lambda) - 1 / l_j]^+``. Returns ``(powers, lambda_star)``. The dual variable is found by bisection
    on ``[0, max_j m_j l_j - V]``: first over the sorted points where a link
    switches off, then continuously inside the remaining bracket. The bracket
    is closed exactly on the active set it identifies.
    """
    m = [float(x) for x in m]
    l = [float(x) for x in l]
    inv_l = [1.0 / x for x in l]
    ml = [mj * lj for mj, lj in zip(m, l)]
    k = len(m)

    def powers(lam: float) -> list[float]:
        level = V + lam
        # a link whose gain-weighted backlog does not clear the level gets exactly zero
        return [max(mj / level - il, 0.0) if t > level else 0.0 for mj, il, t in zip(m, inv_l, ml)]

    p = powers(0.0)
    if sum(p) <= p_max:
        return p, 0.0

    lo = 0.0
    hi = max(ml) - V
    if hi <= 0:
        return p, 0.0
    eps = params.tol_rel * (V + hi)
    iterations = 0

    # the power sum is piecewise smooth in lambda with kinks where links switch off
    kinks = sorted(t - V for t in ml if lo < t - V < hi)
    a, b = 0, len(kinks)
    while a < b:
        iterations += 1
        if iterations > params.max_iterations:
            raise NumericalFailure("dual bisection did not converge", lam_lo=lo, lam_hi=hi, eps=eps)
        c = (a + b) // 2
        if sum(powers(kinks[c])) > p_max:
            lo = kinks[c]
            a = c + 1
        else:
            hi = kinks[c]
            b = c
    # one active set on (lo, hi): the budget equation has a closed form
    level_mid = V + 0.5 * (lo + hi)
    active = [j for j in range(k) if ml[j] > level_mid]
    if active:
        level = math.fsum(m[j] for j in active) / (p_max + math.fsum(inv_l[j] for j in active))
        if lo <= level - V <= hi:
            lam = level - V
            p = powers(lam)
            total = math.fsum(p)
            if total > p_max:
                p = [x * (p_max / total) for x in p]
            return p, lam

    while hi - lo > eps:
        iterations += 1
        if iterations > params.max_iterations:
            raise NumericalFailure("dual bisection did not converge", lam_lo=lo, lam_hi=hi, eps=eps)
        mid = 0.5 * (lo + hi)
        if sum(powers(mid)) > p_max:
            lo = mid
        else:
            hi = mid

    lam = hi
    # solve the budget equation exactly on the active set of the bracket midpoint
    level_mid = V + 0.5 * (lo + hi)
    active = [j for j in range(k) if ml[j] > level_mid]
    if active:
        level = math.fsum(m[j] for j in active) / (p_max + math.fsum(inv_l[j] for j in active))
        refined = level - V
        consistent = all((m[j] / inv_l[j] > level) == (j in active) for j in range(k))
        if consistent and refined >= 0 and lo - eps <= refined <= hi + eps:
            lam = refined
    p = powers(lam)
    total = math.fsum(p)
    if total > p_max:
        p = [x * (p_max / total) for x in p]
    return p, lam


def link_coefficients(q_offload: float, q_cfn_arrivals, gains, bandwidth_hz: float, noise_w_hz: float):
    m = [(q_offload - qa) * bandwidth_hz for qa in q_cfn_arrivals]
    l = [h / (noise_w_hz * bandwidth_hz) for h in gains]
    return m, l


def allocate_transmit_power(
    q_offload: float,
    q_cfn_arrivals,
    gains,
    V: float,
    bandwidth_hz: float,
    noise_w_hz: float,
    p_max: float,
    params: DualSearchParams = DualSearchParams(),
) -> np.ndarray:
    """Powers minimising ``sum V p_j - m_j log2(1 + l_j p_j)`` under the budget."""
    m, l = link_coefficients(q_offload, q_cfn_arrivals, gains, bandwidth_hz, noise_w_hz)
    if all(mj <= 0 for mj in m):
        return np.zeros(len(m))
    # log2(x) = ln(x) / ln 2, so the rate weights pick up a 1/ln 2 factor
    p, _ = water_fill([mj / LN2 for mj in m], l, V, p_max, params)
    return np.array(p)


def kkt_residuals(p, lam: float, m, l, V: float, p_max: float) -> dict[str, float]:
    """Worst violations of the optimality conditions of :func:`water_fill`.

    Stationarity is checked on links with positive power; links at zero
    must have non-negative reduced cost.
    """
    stationarity = 0.0
    dual_feas = 0.0
    for pj, mj, lj in zip(p, m, l):
        grad = V - mj * lj / (1.0 + lj * pj) + lam
        scale = V + lam
        if pj > 0:
            stationarity = max(stationarity, abs(grad) / scale)
        else:
            dual_feas = max(dual_feas, max(-grad, 0.0) / scale)
    total = math.fsum(p)
    return {
        "stationarity": stationarity,
        "dual_feasibility": dual_feas,
        "complementary_slackness": abs(lam * (total - p_max)) / max(V, 1.0),
        "primal_excess": max(total - p_max, 0.0),
        "negative_power": max([0.0, *(-x for x in p)]),
    }


def pora_slot(
    topology: FogTopology,
    efns: list[EfnState],
    cfns: list[CfnState],
    config: SimulationConfig,
    gains: np.ndarray | None = None,
    subsets: list | None = None,
) -> SlotDecision:
    """PORA decisions for every node. ``subsets`` restricts each EFN's power
    allocation to a subset of its CFNs (used by PORA-d)."""
    gains = topology.gains if gains is None else gains
    params = DualSearchParams(config.dual_tol_rel, config.dual_max_iter)
    dec = SlotDecision.zeros(topology.n_efn, topology.n_cfn)
    V = config.V
    noise = config.noise_w_hz
    B = config.bandwidth_hz

    for i, e in enumerate(efns):
        qa = e.integrate_backlog
        dec.b_efn[i, 0] = decide_offload_split(qa, e.local, e.b_local_max)
        dec.b_efn[i, 1] = decide_offload_split(qa, e.offload, e.b_offload_max)
        dec.f_efn[i] = decide_cpu_frequency(e.local, V, config.varsigma, config.cycles_per_bit_efn, config.f_max_efn_hz)
    for j, c in enumerate(cfns):
        dec.b_cfn[j, 0] = decide_offload_split(c.arrival, c.local, c.b_local_max)
        dec.b_cfn[j, 1] = decide_offload_split(c.arrival, c.offload, c.b_offload_max)
        dec.f_cfn[j] = decide_cpu_frequency(c.local, V, config.varsigma, config.cycles_per_bit_cfn, config.f_max_cfn_hz)

    for i, e in enumerate(efns):
        targets = topology.accessible_cfns[i] if subsets is None else subsets[i]
        if e.offload <= 0 or not targets:
            continue
        qa = [cfns[j].arrival for j in targets]
        if all(e.offload <= q for q in qa):
            continue
        try:
            p = allocate_transmit_power(
                e.offload, qa, [gains[i, j] for j in targets], V, B, noise, config.p_max_w, params
            )
        except NumericalFailure as exc:
            exc.diagnostics["efn"] = i
            raise
        for j, pj in zip(targets, p):
            dec.p[i, j] = pj
    return dec


def slot_objective(
    decision: SlotDecision,
    efns: list[EfnState],
    cfns: list[CfnState],
    topology: FogTopology,
    config: SimulationConfig,
    gains: np.ndarray | None = None,
) -> float:
    """Per-slot drift-plus-penalty objective minimised by :func:`pora_slot`."""
    gains = topology.gains if gains is None else gains
    tau, V, s = config.slot_s, config.V, config.varsigma
    B, noise = config.bandwidth_hz, config.noise_w_hz
    terms = []
    for i, e in enumerate(efns):
        qa = e.integrate_backlog
        bl, bo = decision.b_efn[i]
        f = decision.f_efn[i]
        terms.append((e.local - qa) * bl + (e.offload - qa) * bo)
        terms.append(V * tau * s * f ** 3 - tau * e.local * f / config.cycles_per_bit_efn)
        for j in topology.accessible_cfns[i]:
            p = decision.p[i, j]
            m = (e.offload - cfns[j].arrival) * B
            l = gains[i, j] / (noise * B)
            terms.append(V * tau * p - tau * m * math.log2(1.0 + l * p))
    for j, c in enumerate(cfns):
        bl, bo = decision.b_cfn[j]
        f = decision.f_cfn[j]
        terms.append((c.local - c.arrival) * bl + (c.offload - c.arrival) * bo)
        terms.append(V * tau * s * f ** 3 - tau * c.local * f / config.cycles_per_bit_cfn)
    return math.fsum(terms)


def check_feasible(decision: SlotDecision, topology: FogTopology, config: SimulationConfig) -> None:
    """Raise ``ContractViolation`` if a decision breaks any per-slot constraint."""
    caps = config.caps()
    tol = 1 + 1e-9
    checks = [
        ("b_efn_local", decision.b_efn[:, 0], caps["efn_local"]),
        ("b_efn_offload", decision.b_efn[:, 1], caps["efn_offload"]),
        ("b_cfn_local", decision.b_cfn[:, 0], caps["cfn_local"]),
        ("b_cfn_offload", decision.b_cfn[:, 1], caps["cfn_offload"]),
        ("f_efn", decision.f_efn, config.f_max_efn_hz),
        ("f_cfn", decision.f_cfn, config.f_max_cfn_hz),
    ]
    for name, values, cap in checks:
        if (values < 0).any() or (values > cap * tol).any():
            raise ContractViolation(f"{name} outside [0, {cap}]")
    p = decision.p
    if (p < 0).any():
        raise ContractViolation("negative transmit power")
    if (p.sum(axis=1) > config.p_max_w * tol).any():
        raise ContractViolation("transmit power budget exceeded")
    mask = np.ones_like(p, dtype=bool)
    for i, cfns in enumerate(topology.accessible_cfns):
        mask[i, list(cfns)] = False
    if (p[mask] != 0).any():
        raise ContractViolation("power on a link outside the adjacency")
