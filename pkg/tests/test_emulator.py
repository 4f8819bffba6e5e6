import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsv.circuit import Circuit, build_hadamard_bench, cphase, hadamard, random_circuit, swap
from distsv.emulator import (
    ContractError,
    Exchanger,
    GiB,
    Locality,
    PartitionError,
    classify,
    gate_comm,
    make_plan,
    partner_ranks,
    run_distributed,
)
from distsv.statevector import random_state, run_circuit


def test_plan_geometry():
    p = make_plan(38, 6)
    assert (p.m, p.ranks, p.local_bytes) == (32, 64, 64 * GiB)
    assert p.messages_per_exchange == 32


@pytest.mark.parametrize("n,r,cap", [(4, 4, 1), (4, -1, 1), (4, 1, 0)])
def test_plan_errors(n, r, cap):
    with pytest.raises(PartitionError):
        make_plan(n, r, cap)


@given(st.integers(1, 60), st.data())
def test_message_count_is_ceiling(n, data):
    r = data.draw(st.integers(0, n - 1))
    cap = data.draw(st.integers(1, 2**40))
    p = make_plan(n, r, cap)
    k = p.messages_per_exchange
    assert (k - 1) * cap < p.local_bytes <= k * cap


def test_classify():
    p = make_plan(6, 2)
    assert classify(cphase(0, 5, 1.0), p) is Locality.FULLY_LOCAL
    assert classify(hadamard(3), p) is Locality.LOCAL_MEMORY
    assert classify(swap(0, 3), p) is Locality.LOCAL_MEMORY
    assert classify(hadamard(4), p) is Locality.DISTRIBUTED
    assert classify(swap(1, 5), p) is Locality.DISTRIBUTED


def test_partners():
    p = make_plan(6, 2)
    assert partner_ranks(hadamard(5), p, 0) == {2}
    assert partner_ranks(swap(0, 4), p, 3) == {2}
    assert partner_ranks(swap(4, 5), p, 0) == frozenset()
    assert partner_ranks(swap(4, 5), p, 1) == {2}
    with pytest.raises(ContractError):
        partner_ranks(hadamard(0), p, 0)
    with pytest.raises(ContractError):
        partner_ranks(hadamard(5), p, 4)


@given(st.integers(2, 12), st.data())
def test_partner_relation_is_an_involution(n, data):
    r = data.draw(st.integers(1, min(n - 1, 6)))
    p = make_plan(n, r)
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(p.m, n - 1).filter(lambda x: x != a))
    g = data.draw(st.sampled_from([hadamard(b), swap(a, b)]))
    for rank in range(p.ranks):
        for q in partner_ranks(g, p, rank):
            assert q != rank
            assert rank in partner_ranks(g, p, q)


def test_exchanger_chunking_and_schedule():
    payloads = {0: np.arange(10, dtype=np.complex128), 1: np.ones(10, dtype=np.complex128)}
    for mode, rounds in (("blocking", {0, 1, 2, 3}), ("nonblocking", {0})):
        recv = np.zeros((2, 10), dtype=np.complex128)
        log = Exchanger(48, mode).exchange(payloads, {0: 1, 1: 0}, recv)
        np.testing.assert_array_equal(recv[1], payloads[0])
        np.testing.assert_array_equal(recv[0], payloads[1])
        assert len(log) == 8 and {m.round for m in log} == rounds
        assert sum(m.nbytes for m in log if m.src == 0) == 160
        assert max(m.nbytes for m in log) <= 48


def test_mode_validation():
    with pytest.raises(ValueError):
        Exchanger(16, "eager")
    with pytest.raises(ValueError):
        run_distributed(Circuit(2, []), make_plan(2, 1), exchange="quarter")


@given(st.integers(2, 9), st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=60, deadline=None)
def test_distributed_matches_dense(n, seed, data):
    r = data.draw(st.integers(0, min(4, n - 1)))
    mode = data.draw(st.sampled_from(["blocking", "nonblocking"]))
    exchange = data.draw(st.sampled_from(["full", "swap_halved"]))
    cap = data.draw(st.sampled_from([16, 100, 2 * GiB]))
    rng = np.random.default_rng(seed)
    c = random_circuit(n, 25, rng)
    psi = random_state(n, rng)
    out, trace = run_distributed(c, make_plan(n, r, cap), mode, exchange, psi)
    ref = run_circuit(psi.copy(), c)
    assert np.abs(out.amps - ref.amps).max() < 1e-13
    # trace agrees with plan arithmetic gate by gate
    for g, rec in zip(c.gates, trace.records):
        gc = gate_comm(g, make_plan(n, r, cap), exchange)
        assert (rec.locality, rec.bytes, rec.messages) == (gc.locality, gc.bytes, gc.messages)
        assert sum(m.nbytes for m in rec.log) == rec.bytes
        assert len(rec.log) == rec.messages


def test_hbench_trace():
    plan = make_plan(12, 2)
    _, trace = run_distributed(build_hadamard_bench(11, 50, 12), plan)
    assert trace.distributed_gates == 50
    assert trace.total_bytes == 50 * 4 * plan.local_bytes
    first = trace.to_jsonl().splitlines()[0]
    assert '"class": "Distributed"' in first


def test_both_rank_qubit_swap_traffic():
    plan = make_plan(6, 2)
    gc = gate_comm(swap(4, 5), plan)
    assert gc.ranks == (1, 2) and gc.bytes == 2 * plan.local_bytes
    # halving does not apply: every amplitude of a participating rank moves
    assert gate_comm(swap(4, 5), plan, "swap_halved") == gc
    assert gate_comm(swap(0, 5), plan, "swap_halved").bytes * 2 == gate_comm(swap(0, 5), plan).bytes


def test_rank_limit():
    with pytest.raises(PartitionError):
        run_distributed(Circuit(14, []), make_plan(14, 13))
