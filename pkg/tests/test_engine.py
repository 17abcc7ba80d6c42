from fractions import Fraction

import numpy as np
import pytest

import fogsim.engine as engine
from fogsim.config import preset
from fogsim.engine import MOTIVATING_POLICIES, run, run_motivating_example, sweep, trace_csv
from fogsim.pora import NumericalFailure
from fogsim.queueing import ContractViolation

TABLE = {
    ("local", "local"): (Fraction(16), Fraction(11, 4)),
    ("local", "offload"): (Fraction(8), Fraction(47, 16)),
    ("offload", "local"): (Fraction(20), Fraction(7, 4)),
    ("offload", "offload"): (Fraction(4), Fraction(17, 8)),
}


@pytest.mark.parametrize("policies", MOTIVATING_POLICIES)
def test_motivating_example(policies):
    assert run_motivating_example(*policies) == TABLE[policies]


def test_motivating_example_rejects_unknown_policy():
    with pytest.raises(ValueError):
        run_motivating_example("cloud", "local")


def test_zero_horizon(tiny):
    r = run(tiny.replace(horizon=0))
    assert r.slots == 0 and r.avg_power_total == 0.0 and r.avg_backlog_total == 0.0


def test_deterministic(tiny):
    a, b = run(tiny), run(tiny)
    assert a.row() == b.row()
    np.testing.assert_array_equal(a.trace["total_backlog_bits"], b.trace["total_backlog_bits"])
    c = run(tiny.with_seed_offset(1))
    assert c.row() != a.row()


@pytest.mark.parametrize("policy", ["pora", "nol", "o2cft", "o2cloud", "random", "pora-d"])
@pytest.mark.parametrize("errors", [(0.0, 0.0), (0.5, 0.25)])
def test_checked_runs(tiny, policy, errors):
    c = tiny.replace(policy=policy, d=1 if policy == "pora-d" else 0, p_false_alarm=errors[0], p_missed=errors[1])
    r = run(c, check=True)
    assert r.slots == c.horizon
    assert all(v >= 0 for v in r.avg_backlog.values())


def test_checked_run_with_fading(tiny):
    run(tiny.replace(fading_var=0.5), check=True)


def test_no_window_ignores_error_model(tiny):
    a = run(tiny.replace(W=0))
    b = run(tiny.replace(W=0, p_false_alarm=0.5, p_missed=0.25))
    np.testing.assert_array_equal(a.trace["total_backlog_bits"], b.trace["total_backlog_bits"])


def test_no_window_latency_at_least_one(tiny):
    r = run(tiny.replace(W=0))
    assert min(w for h in r.accumulator.latency_hist for w in h) >= 1
    assert r.eta_predicted == 0.0


def test_littles_law_agrees_with_histogram():
    r = run(preset("desk", W=0, horizon=3000))
    assert r.littles_latency == pytest.approx(r.avg_arrival_latency, rel=0.02)


def test_numerical_failure_names_slot_and_efn(tiny):
    c = tiny.replace(n_cfn=5, n_access=5, dual_max_iter=1, V=1e6)
    with pytest.raises(NumericalFailure) as err:
        run(c)
    assert {"slot", "efn", "lam_lo", "lam_hi"} <= set(err.value.diagnostics)


def test_o2cloud_diverges():
    r = run(preset("desk", policy="o2cloud", horizon=3000))
    b = r.trace["total_backlog_bits"]
    assert b[-1] > b[len(b) // 2 - 1]


def test_pora_no_window_is_stable():
    r = run(preset("desk", W=0, V=1e10, horizon=4000))
    b = r.trace["total_backlog_bits"]
    half = b[len(b) // 2:]
    running = np.maximum.accumulate(half)
    # the running maximum stops growing: last quarter adds little over the third
    assert running[-1] <= 1.1 * running[len(running) // 2]


def test_trace_and_queue_snapshots(tiny):
    r = run(tiny.replace(horizon=5), record_queues=True)
    text = trace_csv(r).splitlines()
    assert text[0] == "slot,total_backlog_bits,instant_power_W"
    assert len(text) == 6
    rows = r.trace["queues"]
    # arrival + W predictions + local + offload per EFN, three per CFN, per slot
    assert len(rows) == 5 * (3 * (1 + 3 + 2) + 2 * 3)


def test_sweep_rows_and_common_seeds(tiny):
    out = sweep(tiny, "V", [1e9, 1e10, 1e11, 2e11], replications=2)
    assert [r.V for r in out.results] == [1e9, 1e10, 1e11, 2e11]
    assert all(r.slots == 2 * tiny.horizon for r in out.results)
    assert not out.failures


def test_sweep_windows_fill_eta(tiny):
    out = sweep(tiny, "W", [0, 5, 10, 20, 30], replications=1)
    assert len(out.results) == 5
    assert out.results[0].eta_predicted == 0.0
    assert all(not np.isnan(r.eta_predicted) for r in out.results)


def test_sweep_error_grid_and_policies(tiny):
    grid = [(0, 0), (0.05, 0.05), (0.5, 0.05), (0.05, 0.25), (0.5, 0.25)]
    out = sweep(tiny, "errors", grid, replications=1)
    assert [(r.p1, r.p2) for r in out.results] == [tuple(map(float, g)) for g in grid]
    pol = sweep(tiny, "policy", ["pora", "pora-1", "nol"], replications=1)
    assert [r.policy for r in pol.results] == ["pora", "pora-1", "nol"]
    d = sweep(tiny, "d", [1, 2], replications=1)
    assert [r.policy for r in d.results] == ["pora-1", "pora-2"]


def test_sweep_parallel_matches_serial(tiny):
    a = sweep(tiny, "V", [1e9, 1e11], replications=2, jobs=1)
    b = sweep(tiny, "V", [1e9, 1e11], replications=2, jobs=2)
    assert [r.row() for r in a.results] == [r.row() for r in b.results]


def test_sweep_collects_failures(tiny, monkeypatch):
    real = engine.run

    def flaky(config, *a, **kw):
        if config.V == 1e10:
            raise ContractViolation("boom")
        return real(config, *a, **kw)

    monkeypatch.setattr(engine, "run", flaky)
    out = sweep(tiny, "V", [1e9, 1e10], replications=1)
    assert [r.V for r in out.results] == [1e9]
    assert out.failures[0][0] == 1e10 and "boom" in out.failures[0][2]


def test_sweep_validation(tiny):
    with pytest.raises(ValueError):
        sweep(tiny, "V", [])
    with pytest.raises(ValueError):
        sweep(tiny, "speed", [1])
