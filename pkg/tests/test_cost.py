import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsv.blocking import block_qft, comm_stats
from distsv.circuit import Circuit, build_hadamard_bench, build_qft, cphase, hadamard, swap
from distsv.cost import (
    CalibrationError,
    CalibrationRecord,
    CostModelError,
    CostParams,
    MachineConfig,
    UnknownFrequencyError,
    calibrate,
    energy_network,
    load_config,
    parse_records,
    plan_for_machine,
    predict_circuit,
    predict_gate_time,
    save_config,
    hbench_records,
)
from distsv.emulator import GiB, make_plan

TRUE = CostParams(
    t_amp_compute=3e-11, t_amp_mem=9e-11, alpha=2e-3, beta=1.5e-10, kappa=1.4,
    numa_factors={"blocking": (1.7, 1.2), "nonblocking": (2.1, 1.5)},
    energy_per_amp=2e-8, energy_per_byte=1e-9,
)
TRUE_POWER = {1.5: 250.0, 2.0: 280.0, 2.25: 360.0}


def test_network_energy_example():
    assert energy_network(64, 0.51, MachineConfig()) == 958.8


@given(st.integers(1, 10**5), st.floats(0, 1e4), st.floats(0, 1e4), st.integers(1, 64))
def test_network_energy_linear(nodes, t1, t2, ratio):
    cfg = MachineConfig(switch_ratio=ratio)
    e = energy_network(nodes, t1 + t2, cfg)
    assert e == pytest.approx(energy_network(nodes, t1, cfg) + energy_network(nodes, t2, cfg),
                              rel=1e-12, abs=1e-9)
    assert e == pytest.approx(math.ceil(nodes / ratio) * 235.0 * (t1 + t2), rel=1e-12, abs=1e-9)


def test_network_energy_rejects_negative_time():
    with pytest.raises(CostModelError):
        energy_network(8, -1.0, MachineConfig())


def test_machine_sizing():
    assert plan_for_machine(44, MachineConfig()).ranks == 4096
    assert plan_for_machine(44, MachineConfig()).m == 32
    assert plan_for_machine(44, MachineConfig(node_mem_bytes=512 * GiB)).m == 33
    assert plan_for_machine(20, MachineConfig()).r == 0


def test_unknown_frequency():
    with pytest.raises(UnknownFrequencyError):
        MachineConfig(frequency=3.0).node_power()


def test_param_validation():
    with pytest.raises(CostModelError):
        CostParams(1e-11, 1e-11, kappa=0.5)
    with pytest.raises(CostModelError):
        CostParams(-1.0, 1e-11)


def _cfg(plan, f=2.0):
    return MachineConfig(nodes=plan.ranks, node_power_watts=TRUE_POWER, frequency=f)


@given(st.integers(20, 44), st.integers(1, 12), st.sampled_from(["blocking", "nonblocking"]),
       st.floats(0.05, 0.95))
@settings(deadline=None)
def test_frequency_monotone_and_bounded(n, r, mode, cf):
    plan = make_plan(n, min(r, n - 1))
    params = CostParams(3e-11, 9e-11, 1e-3, 1e-10, 1.3, compute_fraction=cf)
    c = build_qft(n)
    times = [predict_circuit(c, plan, params, _cfg(plan, f), mode).runtime_s
             for f in (1.5, 2.0, 2.25)]
    assert times[0] >= times[1] >= times[2]
    assert times[1] / times[2] - 1 < 0.125


@given(st.integers(8, 44), st.integers(1, 12), st.integers(16, 2**32), st.floats(1.0, 4.0))
@settings(deadline=None)
def test_nonblocking_exchange_not_slower(n, r, cap, kappa):
    plan = make_plan(n, min(r, n - 1), cap)
    params = CostParams(3e-11, 9e-11, 1e-4, 1e-10, kappa)
    g = hadamard(n - 1)
    cfg = _cfg(plan)
    tb = predict_gate_time(g, plan, params, cfg, "blocking")
    tn = predict_gate_time(g, plan, params, cfg, "nonblocking")
    local = predict_gate_time(hadamard(0), plan, params, cfg, "blocking")
    assert tn - local <= tb - local + 1e-15


@pytest.mark.parametrize("exchange", ["full", "swap_halved"])
def test_model_counts_equal_comm_stats(exchange):
    for n, r in ((12, 3), (40, 8), (44, 12)):
        plan = make_plan(n, r)
        for c in (build_qft(n), block_qft(n, n - r), Circuit(n, [swap(0, n - 1), cphase(0, n - 1, 1)])):
            rep = predict_circuit(c, plan, TRUE, _cfg(plan), "blocking", exchange)
            s = comm_stats(c, plan, exchange)
            assert (rep.distributed_gates, rep.bytes, rep.messages) == (
                s.distributed_gates, s.bytes, s.messages)


def test_predict_rejects_node_mismatch():
    plan = make_plan(10, 2)
    with pytest.raises(CostModelError):
        predict_circuit(build_qft(10), plan, TRUE, MachineConfig(nodes=8))


def test_report_serialisation():
    plan = make_plan(10, 2)
    rep = predict_circuit(build_qft(10), plan, TRUE, _cfg(plan))
    rows = rep.to_csv().strip().splitlines()
    assert len(rows) == len(build_qft(10)) + 2 and rows[-1].startswith("total")
    d = rep.to_json()
    assert len(d["per_gate"]) == len(build_qft(10))
    assert d["total_energy_J"] == pytest.approx(sum(
        g["node_energy_J"] for g in d["per_gate"]) + rep.network_energy_J)
    assert rep.network_energy_J == pytest.approx(1 * 235.0 * rep.runtime_s)


def _synthetic_records():
    recs = []
    specs = []
    for n, r in ((30, 4), (34, 6)):
        m = n - r
        for cap in (2 * GiB, GiB // 4):
            for f in (1.5, 2.0, 2.25):
                for mode in ("blocking", "nonblocking"):
                    for q in (m - 5, m - 2, m - 1, m):
                        specs.append((hadamard(q), make_plan(n, r, cap), mode, f))
    for gate, plan, mode, f in specs:
        rep = predict_circuit(Circuit(plan.n_qubits, [gate]), plan, TRUE, _cfg(plan, f), mode)
        recs.append(CalibrationRecord(gate, plan, mode, rep.runtime_s, rep.total_energy_J, f))
    return recs


def test_calibration_roundtrip():
    res = calibrate(_synthetic_records())
    p = res.params
    for name in ("t_amp_compute", "t_amp_mem", "alpha", "beta", "kappa",
                 "energy_per_amp", "energy_per_byte"):
        assert getattr(p, name) == pytest.approx(getattr(TRUE, name), rel=0.01), name
    for mode, fac in TRUE.numa_factors.items():
        assert p.numa_factors[mode] == pytest.approx(fac, rel=0.01)
    for f, w in TRUE_POWER.items():
        assert res.node_power_watts[f] == pytest.approx(w, rel=0.01)
    assert res.max_time_residual < 0.01 and res.max_energy_residual < 0.01


def test_calibration_needs_both_classes():
    local_only = [r for r in hbench_records() if r.gate.target < 32]
    with pytest.raises(CalibrationError):
        calibrate(local_only)
    with pytest.raises(CalibrationError):
        calibrate([])


def test_shipped_records_fit():
    res = calibrate(hbench_records())
    assert len(res.residuals) == 8
    assert res.max_time_residual < 0.05 and res.max_energy_residual < 0.05
    assert any("alpha" in w or "latency" in w for w in res.warnings)


def test_record_parse_errors():
    with pytest.raises(CalibrationError):
        parse_records("label,gate,targets,n_qubits,r,chunk_cap,mode,frequency_ghz,seconds,joules\n"
                      "x,H,40,38,6,2147483648,blocking,2.0,1.0,\n")
    assert parse_records("# only a comment\n") == []


def test_config_roundtrip(tmp_path):
    res = calibrate(hbench_records())
    path = tmp_path / "cfg.json"
    save_config(path, res.params, res.machine())
    params, machine = load_config(path)
    assert params == res.params
    assert MachineConfig.from_json(machine).node_power_watts == res.node_power_watts


def test_hbench_local_cheaper_than_distributed():
    res = calibrate(hbench_records())
    plan = make_plan(38, 6)
    cfg = res.machine(nodes=64)
    t = [predict_circuit(build_hadamard_bench(q, 50, 38), plan, res.params, cfg).runtime_s
         for q in (29, 32)]
    assert t[1] > 5 * t[0]
