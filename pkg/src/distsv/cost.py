"""Analytic time/energy model for distributed statevector runs.

Per gate the model is additive::

    time = local + exchange
    local = A_rank * (t_amp_mem * numa + t_amp_compute * scale(f))
    exchange (blocking)    = k * alpha + B * beta
    exchange (nonblocking) = alpha + B * beta / kappa

with ``A_rank`` the amplitudes the busiest rank touches, ``k`` and ``B`` the
messages and bytes each participating rank sends, and
``scale(f) = compute_fraction * f_ref / f + (1 - compute_fraction)``.

Node energy is ``nodes * P(f) * t`` plus optional dynamic terms per amplitude
touched and per byte sent; network energy is ``n_s * P_s * t`` with
``n_s = ceil(nodes / switch_ratio)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from decimal import Decimal

import numpy as np
from scipy.optimize import nnls

from .circuit import Circuit, Gate, GateKind
from .emulator import GiB, PartitionPlan, Locality, classify, gate_comm, make_plan
from .statevector import BYTES_PER_AMP, ShapeError

FREQUENCY_LEVELS = (1.5, 2.0, 2.25)
# 2.25 GHz draws ~25% more energy for a 5-10% shorter run
HIGH_FREQ_POWER_RATIO = 1.3
# rounded static node power from the shipped Table-1 fit
DEFAULT_NODE_POWER = 276.0


class CostModelError(ValueError):
    pass


class UnknownFrequencyError(CostModelError):
    pass


class CalibrationError(CostModelError):
    pass


@dataclass
class CostParams:
    t_amp_compute: float
    t_amp_mem: float
    alpha: float = 0.0
    beta: float = 0.0
    kappa: float = 1.0
    f_ref: float = 2.0
    compute_fraction: float = 1.0 / 3.0
    # mode -> multipliers on the memory term for the top local qubits
    # (entry 0 is qubit m-1, entry 1 is qubit m-2, ...)
    numa_factors: dict[str, tuple[float, ...]] = field(default_factory=dict)
    energy_per_amp: float = 0.0
    energy_per_byte: float = 0.0

    def __post_init__(self) -> None:
        self.numa_factors = {k: tuple(float(x) for x in v) for k, v in self.numa_factors.items()}
        for name in ("t_amp_compute", "t_amp_mem", "alpha", "beta", "energy_per_amp",
                     "energy_per_byte"):
            if getattr(self, name) < 0:
                raise CostModelError(f"{name} must be nonnegative")
        if self.kappa < 1:
            raise CostModelError(f"kappa must be >= 1, got {self.kappa}")
        if not 0 <= self.compute_fraction <= 1:
            raise CostModelError("compute_fraction must lie in [0, 1]")
        if self.f_ref <= 0:
            raise CostModelError("f_ref must be positive")
        if any(x < 0 for v in self.numa_factors.values() for x in v):
            raise CostModelError("numa factors must be nonnegative")

    def scale(self, f: float) -> float:
        return self.compute_fraction * (self.f_ref / f) + (1.0 - self.compute_fraction)

    def numa(self, mode: str, depth: int) -> float:
        factors = self.numa_factors.get(mode, ())
        return factors[depth] if 0 <= depth < len(factors) else 1.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["numa_factors"] = {k: list(v) for k, v in self.numa_factors.items()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> CostParams:
        return cls(**d)


@dataclass
class MachineConfig:
    nodes: int | None = None
    node_mem_bytes: int = 256 * GiB
    switch_ratio: int = 8
    switch_power_watts: float = 235.0
    node_power_watts: dict[float, float] = field(default_factory=lambda: {
        1.5: DEFAULT_NODE_POWER,
        2.0: DEFAULT_NODE_POWER,
        2.25: DEFAULT_NODE_POWER * HIGH_FREQ_POWER_RATIO,
    })
    frequency: float = 2.0
    usable_mem_fraction: float = 0.9

    def __post_init__(self) -> None:
        self.node_power_watts = {float(k): float(v) for k, v in self.node_power_watts.items()}
        if self.nodes is not None and self.nodes < 1:
            raise CostModelError(f"nodes must be >= 1, got {self.nodes}")
        if self.switch_ratio < 1:
            raise CostModelError("switch_ratio must be >= 1")

    def switches(self, nodes: int | None = None) -> int:
        nodes = self.nodes if nodes is None else nodes
        return max(1, -(-nodes // self.switch_ratio))

    def node_power(self, frequency: float | None = None) -> float:
        f = self.frequency if frequency is None else frequency
        for k, v in self.node_power_watts.items():
            if math.isclose(k, f, abs_tol=1e-9):
                return v
        raise UnknownFrequencyError(
            f"no node power for {f} GHz (known: {sorted(self.node_power_watts)})"
        )

    def to_json(self) -> dict:
        d = asdict(self)
        d["node_power_watts"] = {str(k): v for k, v in self.node_power_watts.items()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> MachineConfig:
        return cls(**d)


def energy_network(nodes: int, dt: float, cfg: MachineConfig) -> float:
    if dt < 0:
        raise CostModelError(f"negative duration {dt}")
    # decimal product of the shortest reprs: 8 * 235 * 0.51 gives 958.8, not 958.8000000000001
    watts = Decimal(cfg.switches(nodes)) * Decimal(repr(float(cfg.switch_power_watts)))
    return float(watts * Decimal(repr(float(dt))))


def plan_for_machine(n: int, cfg: MachineConfig, chunk_cap: int = 2 * GiB) -> PartitionPlan:
    """Fewest power-of-two nodes that hold an n-qubit state.

    A single node keeps just the statevector; once distributed, each node
    also needs a receive buffer as large as its share.
    """
    usable = cfg.node_mem_bytes * cfg.usable_mem_fraction
    if (1 << n) * BYTES_PER_AMP <= usable:
        return make_plan(n, 0, chunk_cap)
    m = int(math.floor(math.log2(usable / (2 * BYTES_PER_AMP))))
    if m < 1:
        raise CostModelError(f"{cfg.node_mem_bytes} bytes per node cannot hold a share")
    return make_plan(n, n - m, chunk_cap)


# -- per-gate prediction ------------------------------------------------------


def _touched(gate: Gate, plan: PartitionPlan) -> tuple[float, float]:
    """(fraction of a rank's amplitudes the busiest rank touches, global fraction)."""
    if gate.kind is GateKind.H:
        return 1.0, 1.0
    if gate.kind is GateKind.SWAP:
        return 0.5, 0.5
    local_bits = sum(1 for q in gate.qubits if q < plan.m)
    return 0.5 ** local_bits, 0.25


def _numa_depth(gate: Gate, plan: PartitionPlan) -> int:
    if classify(gate, plan) is not Locality.LOCAL_MEMORY:
        return -1
    return plan.m - 1 - max(gate.qubits)


@dataclass
class GateCost:
    index: int
    kind: str
    targets: tuple[int, ...]
    locality: Locality
    local_s: float
    exchange_s: float
    bytes: int
    messages: int
    amps_touched: float
    node_energy_J: float = 0.0
    network_energy_J: float = 0.0

    @property
    def time_s(self) -> float:
        return self.local_s + self.exchange_s


def _gate_cost(index: int, gate: Gate, plan: PartitionPlan, params: CostParams,
               frequency: float, mode: str, exchange: str) -> GateCost:
    gc = gate_comm(gate, plan, exchange)
    rank_frac, global_frac = _touched(gate, plan)
    numa = params.numa(mode, _numa_depth(gate, plan))
    per_amp = params.t_amp_mem * numa + params.t_amp_compute * params.scale(frequency)
    local = plan.local_amps * rank_frac * per_amp
    ex = 0.0
    if gc.locality is Locality.DISTRIBUTED:
        k, b = gc.messages_per_rank, gc.bytes_per_rank
        if mode == "blocking":
            ex = k * params.alpha + b * params.beta
        elif mode == "nonblocking":
            ex = params.alpha + b * params.beta / params.kappa
        else:
            raise CostModelError(f"unknown schedule mode {mode!r}")
    return GateCost(index, gate.kind.value, gate.qubits, gc.locality, local, ex,
                    gc.bytes, gc.messages, (1 << plan.n_qubits) * global_frac)


def predict_gate_time(gate: Gate, plan: PartitionPlan, params: CostParams,
                      cfg: MachineConfig, mode: str = "blocking", exchange: str = "full") -> float:
    return _gate_cost(0, gate, plan, params, cfg.frequency, mode, exchange).time_s


@dataclass
class RunReport:
    runtime_s: float
    node_energy_J: float
    network_energy_J: float
    gates: list[GateCost]
    plan: PartitionPlan
    nodes: int
    frequency: float
    mode: str
    exchange: str

    @property
    def total_energy_J(self) -> float:
        return self.node_energy_J + self.network_energy_J

    @property
    def distributed_gates(self) -> int:
        return sum(1 for g in self.gates if g.locality is Locality.DISTRIBUTED)

    @property
    def bytes(self) -> int:
        return sum(g.bytes for g in self.gates)

    @property
    def messages(self) -> int:
        return sum(g.messages for g in self.gates)

    def summary(self) -> dict:
        return {
            "runtime_s": self.runtime_s,
            "node_energy_J": self.node_energy_J,
            "network_energy_J": self.network_energy_J,
            "total_energy_J": self.total_energy_J,
            "gates": len(self.gates),
            "distributed_gates": self.distributed_gates,
            "bytes": self.bytes,
            "messages": self.messages,
            "nodes": self.nodes,
            "frequency_ghz": self.frequency,
            "mode": self.mode,
            "exchange": self.exchange,
            "plan": self.plan.as_dict(),
        }

    def to_json(self, per_gate: bool = True) -> dict:
        d = self.summary()
        if per_gate:
            d["per_gate"] = [_gate_row(g) for g in self.gates]
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for g in self.gates:
            w.writerow(_gate_row(g))
        w.writerow({
            "index": "total", "kind": "", "targets": "", "class": "",
            "local_s": sum(g.local_s for g in self.gates),
            "exchange_s": sum(g.exchange_s for g in self.gates),
            "time_s": self.runtime_s, "bytes": self.bytes, "messages": self.messages,
            "node_energy_J": self.node_energy_J, "network_energy_J": self.network_energy_J,
            "total_energy_J": self.total_energy_J,
        })
        return buf.getvalue()


REPORT_CSV_COLUMNS = ["index", "kind", "targets", "class", "local_s", "exchange_s", "time_s",
                      "bytes", "messages", "node_energy_J", "network_energy_J", "total_energy_J"]


def _gate_row(g: GateCost) -> dict:
    return {
        "index": g.index, "kind": g.kind, "targets": " ".join(map(str, g.targets)),
        "class": g.locality.value, "local_s": g.local_s, "exchange_s": g.exchange_s,
        "time_s": g.time_s, "bytes": g.bytes, "messages": g.messages,
        "node_energy_J": g.node_energy_J, "network_energy_J": g.network_energy_J,
        "total_energy_J": g.node_energy_J + g.network_energy_J,
    }


def _nodes_for(plan: PartitionPlan, cfg: MachineConfig) -> int:
    if cfg.nodes is not None and cfg.nodes != plan.ranks:
        raise CostModelError(
            f"machine has {cfg.nodes} nodes but the plan uses {plan.ranks} ranks "
            f"(one rank per node)"
        )
    return plan.ranks


def predict_circuit(circuit: Circuit, plan: PartitionPlan, params: CostParams,
                    cfg: MachineConfig, mode: str = "blocking",
                    exchange: str = "full") -> RunReport:
    if circuit.n_qubits != plan.n_qubits:
        raise ShapeError(f"circuit has {circuit.n_qubits} qubits, plan has {plan.n_qubits}")
    nodes = _nodes_for(plan, cfg)
    power = cfg.node_power()
    net_power = cfg.switches(nodes) * cfg.switch_power_watts
    gates = []
    for i, g in enumerate(circuit.gates):
        gc = _gate_cost(i, g, plan, params, cfg.frequency, mode, exchange)
        gc.node_energy_J = (nodes * power * gc.time_s + params.energy_per_amp * gc.amps_touched
                            + params.energy_per_byte * gc.bytes)
        gc.network_energy_J = net_power * gc.time_s
        gates.append(gc)
    runtime = sum(g.time_s for g in gates)
    return RunReport(
        runtime_s=runtime,
        node_energy_J=sum(g.node_energy_J for g in gates),
        network_energy_J=energy_network(nodes, runtime, cfg),
        gates=gates, plan=plan, nodes=nodes, frequency=cfg.frequency,
        mode=mode, exchange=exchange,
    )


# -- calibration --------------------------------------------------------------


@dataclass
class CalibrationRecord:
    gate: Gate
    plan: PartitionPlan
    mode: str
    seconds: float
    joules: float | None = None
    frequency: float = 2.0
    exchange: str = "full"
    label: str = ""

    @property
    def locality(self) -> Locality:
        return classify(self.gate, self.plan)


@dataclass
class CalibrationResult:
    params: CostParams
    node_power_watts: dict[float, float]
    residuals: list[dict]
    warnings: list[str]

    def machine(self, **overrides) -> MachineConfig:
        return MachineConfig(node_power_watts=dict(self.node_power_watts), **overrides)

    @property
    def max_time_residual(self) -> float:
        return max(abs(r["time_rel"]) for r in self.residuals)

    @property
    def max_energy_residual(self) -> float:
        vals = [abs(r["energy_rel"]) for r in self.residuals if r["energy_rel"] is not None]
        return max(vals, default=0.0)


def _per_amp_local(rec: CalibrationRecord) -> float:
    rank_frac, _ = _touched(rec.gate, rec.plan)
    return rec.seconds / (rec.plan.local_amps * rank_frac)


def calibrate(records: list[CalibrationRecord], *, f_ref: float = 2.0,
              compute_fraction: float = 1.0 / 3.0, numa_qubits: int = 2,
              memory_share: float = 2.0 / 3.0, alpha_prior: float = 0.0,
              dynamic_energy: bool = True,
              switch_ratio: int = 8, switch_power_watts: float = 235.0) -> CalibrationResult:
    """Fit :class:`CostParams` and per-frequency node power to measurements.

    Local records give the per-amplitude terms (split between memory and
    compute by frequency variation, or by ``memory_share`` when all records
    share one frequency) and the NUMA multipliers for the ``numa_qubits``
    highest local qubits. Blocking distributed records give ``alpha`` and
    ``beta``; nonblocking ones give ``kappa``.
    """
    warnings: list[str] = []
    local = [r for r in records if r.locality is not Locality.DISTRIBUTED]
    dist = [r for r in records if r.locality is Locality.DISTRIBUTED]
    missing = [name for name, rs in (("local", local), ("distributed", dist)) if not rs]
    if missing:
        raise CalibrationError(f"calibration needs at least one record per class; missing: "
                               f"{', '.join(missing)}")
    probe = CostParams(0.0, 0.0, f_ref=f_ref, compute_fraction=compute_fraction)

    # per-amplitude local terms
    base = [r for r in local
            if r.locality is Locality.FULLY_LOCAL or _numa_depth(r.gate, r.plan) >= numa_qubits]
    if not base:
        warnings.append("no records below the NUMA-sensitive qubits; NUMA factors not fitted")
        base = local
    y = np.array([_per_amp_local(r) for r in base])
    scales = np.array([probe.scale(r.frequency) for r in base])
    if len({round(r.frequency, 9) for r in base}) >= 2 and compute_fraction > 0:
        (t_mem, t_comp), _ = nnls(np.column_stack([np.ones_like(scales), scales]), y)
    else:
        x = float(np.dot(y, memory_share + (1 - memory_share) * scales)
                  / np.dot(memory_share + (1 - memory_share) * scales,
                           memory_share + (1 - memory_share) * scales))
        t_mem, t_comp = memory_share * x, (1 - memory_share) * x
    t_mem, t_comp = float(t_mem), float(t_comp)

    numa: dict[str, list[float]] = {}
    if base is not local:
        samples: dict[tuple[str, int], list[float]] = {}
        for r in local:
            d = _numa_depth(r.gate, r.plan)
            if 0 <= d < numa_qubits:
                tau = _per_amp_local(r)
                factor = (tau - t_comp * probe.scale(r.frequency)) / t_mem if t_mem > 0 else 1.0
                samples.setdefault((r.mode, d), []).append(max(factor, 0.0))
        modes = sorted({m for m, _ in samples})
        for mode in modes:
            row = []
            for d in range(numa_qubits):
                vals = samples.get((mode, d))
                if vals is None:
                    vals = [v for (mm, dd), vs in samples.items() if dd == d for v in vs] or [1.0]
                row.append(float(np.mean(vals)))
            numa[mode] = row

    params = CostParams(t_comp, t_mem, f_ref=f_ref, compute_fraction=compute_fraction,
                        numa_factors=numa)

    # exchange terms
    def exch(r: CalibrationRecord) -> tuple[float, int, int]:
        local_s = _gate_cost(0, r.gate, r.plan, params, r.frequency, r.mode, r.exchange).local_s
        gc = gate_comm(r.gate, r.plan, r.exchange)
        return r.seconds - local_s, gc.messages_per_rank, gc.bytes_per_rank

    blocking = [exch(r) for r in dist if r.mode == "blocking"]
    nonblocking = [exch(r) for r in dist if r.mode == "nonblocking"]
    alpha, beta, kappa = alpha_prior, 0.0, 1.0
    if blocking:
        A = np.array([[k, b] for _, k, b in blocking], dtype=float)
        e = np.array([x for x, _, _ in blocking])
        if np.linalg.matrix_rank(A / A.max(axis=0)) >= 2:
            colscale = A.max(axis=0)
            sol, _ = nnls(A / colscale, e)
            alpha, beta = (float(v) for v in sol / colscale)
        else:
            warnings.append(f"latency not identifiable from one message count; alpha fixed at "
                            f"{alpha_prior:g} s")
            b = A[:, 1]
            beta = float(max(np.dot(e - A[:, 0] * alpha, b) / np.dot(b, b), 0.0))
        if nonblocking:
            y_nb = np.array([x - alpha for x, _, _ in nonblocking])
            bb = np.array([b * beta for _, _, b in nonblocking])
            inv = float(np.dot(y_nb, bb) / np.dot(bb, bb)) if beta > 0 else 1.0
            kappa = 1.0 / inv if inv > 0 else math.inf
            if kappa < 1.0:
                warnings.append(f"fitted kappa {kappa:.4g} < 1 clamped to 1")
                kappa = 1.0
        else:
            warnings.append("no nonblocking records; kappa fixed at 1")
    else:
        warnings.append("no blocking records; kappa fixed at 1 and alpha/beta fitted from "
                        "nonblocking records")
        A = np.array([[1.0, b] for _, _, b in nonblocking])
        e = np.array([x for x, _, _ in nonblocking])
        colscale = A.max(axis=0)
        sol, _ = nnls(A / colscale, e)
        alpha, beta = (float(v) for v in sol / colscale)
    params.alpha, params.beta, params.kappa = alpha, beta, kappa

    # power / energy
    machine = MachineConfig(switch_ratio=switch_ratio, switch_power_watts=switch_power_watts)
    with_j = [r for r in records if r.joules is not None]
    power: dict[float, float] = {}
    if with_j:
        freqs = sorted({round(r.frequency, 9) for r in with_j})
        rows, target = [], []
        for r in with_j:
            nodes = r.plan.ranks
            gc = _gate_cost(0, r.gate, r.plan, params, r.frequency, r.mode, r.exchange)
            row = [nodes * r.seconds if round(r.frequency, 9) == f else 0.0 for f in freqs]
            if dynamic_energy:
                row += [gc.amps_touched, float(gc.bytes)]
            rows.append(row)
            target.append(r.joules - energy_network(nodes, r.seconds, machine))
        # relative weighting: small local records count as much as large exchanges
        w = 1.0 / np.array([r.joules for r in with_j])
        A = np.array(rows)
        colscale = np.where(A.max(axis=0) > 0, A.max(axis=0), 1.0)
        sol, _ = nnls(A * w[:, None] / colscale, np.array(target) * w)
        sol = sol / colscale
        power = {f: float(p) for f, p in zip(freqs, sol[:len(freqs)])}
        if dynamic_energy:
            params.energy_per_amp, params.energy_per_byte = float(sol[-2]), float(sol[-1])
    else:
        warnings.append("no energy measurements; node power left at defaults")
        power = dict(MachineConfig().node_power_watts)
    for level in FREQUENCY_LEVELS:
        if any(math.isclose(level, f) for f in power):
            continue
        known = sorted(power)
        if level > known[-1]:
            power[level] = power[known[-1]] * HIGH_FREQ_POWER_RATIO
        else:
            power[level] = power[min(known, key=lambda f: abs(f - level))]
        warnings.append(f"node power at {level} GHz not measured; assumed {power[level]:.1f} W")

    machine.node_power_watts = power
    residuals = []
    for r in records:
        cfg = MachineConfig(nodes=r.plan.ranks, node_power_watts=power, frequency=r.frequency,
                            switch_ratio=switch_ratio, switch_power_watts=switch_power_watts)
        rep = predict_circuit(Circuit(r.plan.n_qubits, [r.gate]), r.plan, params, cfg,
                              r.mode, r.exchange)
        residuals.append({
            "label": r.label,
            "class": r.locality.value,
            "mode": r.mode,
            "seconds": r.seconds,
            "predicted_s": rep.runtime_s,
            "time_rel": rep.runtime_s / r.seconds - 1.0,
            "joules": r.joules,
            "predicted_J": rep.total_energy_J,
            "energy_rel": None if r.joules is None else rep.total_energy_J / r.joules - 1.0,
        })
    return CalibrationResult(params, power, residuals, warnings)


# -- files --------------------------------------------------------------------

RECORD_COLUMNS = ["label", "gate", "targets", "n_qubits", "r", "chunk_cap", "mode",
                  "frequency_ghz", "seconds", "joules"]


def parse_records(text: str) -> list[CalibrationRecord]:
    from .circuit import parse_circuit

    out = []
    reader = csv.DictReader(line for line in io.StringIO(text) if not line.lstrip().startswith("#"))
    for i, row in enumerate(reader, start=2):
        try:
            n = int(row["n_qubits"])
            gate_line = f"QUBITS {n}\n{row['gate']} {row['targets']}\n"
            gate = parse_circuit(gate_line).gates[0]
            plan = make_plan(n, int(row["r"]), int(float(row["chunk_cap"])))
            joules = row.get("joules", "")
            out.append(CalibrationRecord(
                gate=gate, plan=plan, mode=row["mode"].strip(),
                seconds=float(row["seconds"]),
                joules=float(joules) if joules not in ("", None) else None,
                frequency=float(row.get("frequency_ghz") or 2.0),
                label=row.get("label", "") or "",
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise CalibrationError(f"record on line {i}: {exc}") from None
    return out


def load_records(path) -> list[CalibrationRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh.read())


def hbench_records() -> list[CalibrationRecord]:
    """The per-gate Hadamard benchmark measurements shipped with the package."""
    from importlib import resources

    text = resources.files("distsv.data").joinpath("hbench_38q.csv").read_text(encoding="utf-8")
    return parse_records(text)


def save_config(path, params: CostParams | None = None, machine: MachineConfig | None = None) -> None:
    d = {}
    if params is not None:
        d["cost"] = params.to_json()
    if machine is not None:
        d["machine"] = machine.to_json()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2)
        fh.write("\n")


def load_config(path) -> tuple[CostParams | None, dict]:
    """Return the cost parameters (if present) and raw machine overrides."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    params = CostParams.from_json(d["cost"]) if "cost" in d else None
    return params, dict(d.get("machine", {}))
