import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogsim.queueing import (
    CfnState,
    ContractViolation,
    EfnState,
    advance_window,
    apply_cloud_offload,
    apply_local_processing,
    apply_transmission,
    backlog_by_kind,
    distribute_cfn,
    distribute_efn,
    link_capacity,
    snapshot_rows,
    split_routing,
)


def efn(W=0, arrivals=(), window=None, bl=6.0, bo=6.0):
    e = EfnState.empty(W, bl, bo)
    e.arrivals = deque([list(a) for a in arrivals])
    if window is not None:
        e.window = deque([list(b) for b in window])
    return e


def test_integrate_queue_update():
    e = efn(arrivals=[(0, 10.0)], bl=4.0, bo=4.0)
    served = distribute_efn(e, 2.0, 2.0, slot=1)
    assert served.total == 4.0
    advance_window(e, 1, tail_true=0.0, missed=3.0)
    assert e.integrate_backlog == 9.0


def test_only_available_bits_move():
    e = efn(arrivals=[(0, 2.0)])
    served = distribute_efn(e, 6.0, 6.0, slot=1)
    assert (served.to_local, served.to_offload) == (2.0, 0.0)
    assert e.integrate_backlog == 0.0


def test_local_first_then_offload():
    e = efn(arrivals=[(0, 10.0)])
    served = distribute_efn(e, 6.0, 6.0, slot=1)
    assert (served.to_local, served.to_offload) == (6.0, 4.0)


def test_split_routing():
    assert split_routing(10, 6, 6) == (6, 4)
    assert split_routing(3, 0, 6) == (0, 3)


def test_cap_violation():
    with pytest.raises(ContractViolation):
        distribute_efn(efn(), 7.0, 0.0, slot=0)
    with pytest.raises(ContractViolation):
        distribute_cfn(CfnState(12.0, 12.0, 6.0), -1.0, 0.0)


def test_fully_pre_served_slot_leaves_arrival_queue_alone():
    e = efn(W=1, window=[(0, 5.0, 0.0)])
    served = distribute_efn(e, 5.0, 0.0, slot=0)
    assert served.mu == [0.0, 5.0]
    advance_window(e, 0, tail_true=7.0)
    assert e.prediction_backlogs() == [7.0]
    assert e.arrival_backlog == 0.0
    assert served.latency_bits == {0: 5.0}


def test_unserved_head_joins_arrival_queue():
    e = efn(W=1, arrivals=[(-1, 3.0)], window=[(0, 2.0, 0.0)])
    distribute_efn(e, 1.0, 0.0, slot=0)
    advance_window(e, 0, tail_true=0.0)
    assert e.arrival_backlog == 4.0


def test_fifo_service_and_latency():
    e = efn(W=2, arrivals=[(3, 1.0), (4, 2.0)], window=[(5, 3.0, 0.0), (6, 4.0, 0.0)])
    served = distribute_efn(e, 4.0, 0.0, slot=5)
    assert served.mu == [3.0, 1.0, 0.0]
    assert served.latency_bits == {2: 1.0, 1: 2.0, 0: 1.0}


def test_phantoms_drain_pro_rata_and_are_dropped():
    e = efn(W=1, window=[(0, 3.0, 1.0)])
    served = distribute_efn(e, 2.0, 0.0, slot=0)
    assert served.phantom_bits == pytest.approx(0.5)
    assert served.latency_bits[0] == pytest.approx(1.5)
    dropped = advance_window(e, 0, tail_true=0.0, missed=1.0)
    assert dropped == pytest.approx(0.5)
    assert e.arrival_backlog == pytest.approx(2.5)


def test_window_slot_mismatch():
    e = efn(W=1, window=[(3, 0.0, 0.0)])
    with pytest.raises(ContractViolation):
        advance_window(e, 4, 0.0)


def test_no_window_gets_full_arrival():
    e = efn(W=0)
    advance_window(e, 0, tail_true=0.0, missed=5.0)
    assert list(e.arrivals) == [[0, 5.0]]


def test_local_processing_drain():
    cap = 4e9 / 297.62
    assert cap == pytest.approx(1.344e7, rel=1e-3)
    assert apply_local_processing(1e6, 4e9, 297.62, 1.0, admitted=5.0) == (5.0, 1e6)
    assert apply_local_processing(10.0, 0.0, 297.62, 1.0, admitted=2.0) == (12.0, 0.0)
    assert apply_local_processing(8.0, 8.0, 2.0, 2.0) == (0.0, 8.0)
    with pytest.raises(ContractViolation):
        apply_local_processing(1.0, -1.0, 1.0, 1.0)


def test_link_rate_example():
    r = link_capacity(0.5, 4.71e-13, 2e6, 7.96e-15 / 2e6, 1.0)
    assert r == pytest.approx(9.8e6, rel=0.01)


def test_transmission():
    efns = [efn(), efn()]
    efns[0].offload = 100.0
    efns[1].offload = 5e6
    cfns = [CfnState(12.0, 12.0, 6.0), CfnState(12.0, 12.0, 6.0)]
    gains = np.full((2, 2), 4.71e-13)
    zero = apply_transmission(efns, cfns, np.zeros((2, 2)), gains, 2e6, 3.98e-21, 1.0)
    assert not zero[0].any() and efns[0].offload == 100.0

    p = np.array([[0.5, 0.0], [0.25, 0.25]])
    sent, received = apply_transmission(efns, cfns, p, gains, 2e6, 3.98e-21, 1.0, admitted=[1.0, 2.0])
    assert sent[0] == 100.0
    assert efns[0].offload == 1.0
    # equal links split evenly
    assert received[1] == pytest.approx(sent[1] / 2)
    assert received.sum() == pytest.approx(sent.sum())
    assert cfns[0].arrival == received[0]
    with pytest.raises(ContractViolation):
        apply_transmission(efns, cfns, -p, gains, 2e6, 3.98e-21, 1.0)
    with pytest.raises(ContractViolation):
        apply_transmission(efns, cfns, p * 3, gains, 2e6, 3.98e-21, 1.0, p_max=0.5)


@pytest.mark.parametrize("backlog,moved,left", [(10e6, 6e6, 4e6), (0.0, 0.0, 0.0), (6e6, 6e6, 0.0)])
def test_cloud_offload(backlog, moved, left):
    c = CfnState(12e6, 12e6, 6e6, offload=backlog)
    assert apply_cloud_offload(c) == moved
    assert c.offload == left


def test_cfn_distribution():
    c = CfnState(12.0, 12.0, 6.0, arrival=20.0)
    assert distribute_cfn(c, 12.0, 12.0) == (12.0, 8.0)
    assert c.arrival == 0.0


def test_snapshots_and_kinds():
    e = efn(W=2, arrivals=[(0, 1.0)], window=[(1, 2.0, 0.0), (2, 3.0, 1.0)])
    e.local, e.offload = 4.0, 5.0
    c = CfnState(1.0, 1.0, 1.0, arrival=6.0, local=7.0, offload=8.0)
    kinds = backlog_by_kind([e], [c])
    assert kinds["efn_arrival"] == 7.0 and kinds["cfn_offload"] == 8.0
    rows = list(snapshot_rows(3, [e], [c]))
    assert ("efn0", "prediction1", 4.0) == rows[2][1:]
    assert len(rows) == 5 + 3


@settings(max_examples=300, deadline=None)
@given(
    st.integers(0, 4),
    st.lists(st.tuples(st.floats(0, 8), st.floats(0, 8), st.floats(0, 10), st.floats(0, 3), st.floats(0, 3)),
             min_size=1, max_size=25),
)
def test_integrate_identity_and_conservation(W, steps):
    e = EfnState.empty(W, 8.0, 8.0)
    for t, (bl, bo, true, phantom, missed) in enumerate(steps):
        if W == 0:
            # nothing is predicted without a window, so no false alarms either
            true, phantom = 0.0, 0.0
        before = e.integrate_backlog
        served = distribute_efn(e, bl, bo, t)
        dropped = advance_window(e, t, true, phantom, missed)
        after = e.integrate_backlog
        assert after == pytest.approx(before - served.total - dropped + true + phantom + missed, abs=1e-6)
        assert math.isclose(after, e.arrival_backlog + sum(e.prediction_backlogs()), abs_tol=1e-9)
        assert all(b >= 0 for _, b in e.arrivals)
        assert all(x >= 0 and y >= 0 for _, x, y in e.window)
        assert served.total <= bl + bo + 1e-9
