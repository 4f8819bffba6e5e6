"""Emulation of a statevector split evenly over 2^r ranks.

Each rank owns one contiguous block of 2^m amplitudes (the low m qubits) and
one receive buffer of the same size. Gates touching a rank qubit (index >= m)
move data between rank pairs through :class:`Exchanger`, which splits every
payload into messages of at most ``chunk_cap`` bytes and logs them.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Gate, GateKind
from .statevector import (
    BYTES_PER_AMP,
    INV_SQRT2,
    ShapeError,
    Statevector,
    _split,
    hadamard_kernel,
    init_basis_state,
    phase_kernel,
    swap_kernel,
)

GiB = 1 << 30
DEFAULT_CHUNK_CAP = 2 * GiB
MAX_EMULATED_RANK_BITS = 12

MODES = ("blocking", "nonblocking")
EXCHANGES = ("full", "swap_halved")


class PartitionError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class Locality(str, enum.Enum):
    FULLY_LOCAL = "FullyLocal"
    LOCAL_MEMORY = "LocalMemory"
    DISTRIBUTED = "Distributed"


@dataclass(frozen=True)
class PartitionPlan:
    n_qubits: int
    r: int
    chunk_cap: int = DEFAULT_CHUNK_CAP
    bytes_per_amp: int = BYTES_PER_AMP

    @property
    def m(self) -> int:
        return self.n_qubits - self.r

    @property
    def ranks(self) -> int:
        return 1 << self.r

    @property
    def local_amps(self) -> int:
        return 1 << self.m

    @property
    def local_bytes(self) -> int:
        return self.local_amps * self.bytes_per_amp

    def messages_for(self, nbytes: int) -> int:
        return -(-nbytes // self.chunk_cap)

    @property
    def messages_per_exchange(self) -> int:
        return self.messages_for(self.local_bytes)

    def as_dict(self) -> dict:
        return {"n": self.n_qubits, "r": self.r, "m": self.m, "chunk_cap": self.chunk_cap}


def make_plan(n: int, r: int, chunk_cap: int = DEFAULT_CHUNK_CAP) -> PartitionPlan:
    if r < 0 or r >= n:
        raise PartitionError(f"cannot split {n} qubits with {r} rank bits (need 0 <= r < n)")
    if chunk_cap <= 0:
        raise PartitionError(f"chunk cap must be positive, got {chunk_cap}")
    return PartitionPlan(n, r, int(chunk_cap))


def classify(gate: Gate, plan: PartitionPlan) -> Locality:
    if gate.kind is GateKind.CP:
        return Locality.FULLY_LOCAL
    if max(gate.qubits) < plan.m:
        return Locality.LOCAL_MEMORY
    return Locality.DISTRIBUTED


def _rank_mask(gate: Gate, plan: PartitionPlan) -> int:
    m = plan.m
    return sum(1 << (q - m) for q in gate.qubits if q >= m)


def partner_ranks(gate: Gate, plan: PartitionPlan, rank: int) -> frozenset[int]:
    if classify(gate, plan) is not Locality.DISTRIBUTED:
        raise ContractError(f"{gate} is not distributed under {plan}")
    if not 0 <= rank < plan.ranks:
        raise ContractError(f"rank {rank} out of range for {plan.ranks} ranks")
    mask = _rank_mask(gate, plan)
    if gate.kind is GateKind.SWAP and min(gate.qubits) >= plan.m:
        a, b = (q - plan.m for q in gate.qubits)
        if (rank >> a) & 1 == (rank >> b) & 1:
            return frozenset()
    return frozenset({rank ^ mask})


@dataclass(frozen=True)
class GateComm:
    """Static communication footprint of one gate under a plan.

    Only the participant count is stored; :attr:`ranks` enumerates them on
    demand, which is fine for emulated plans but not for 2^32-rank ones.
    """

    locality: Locality
    participants: int
    bytes_per_rank: int
    messages_per_rank: int
    total_ranks: int = 0
    # rank bits that must differ for a rank to take part (swap of two rank qubits)
    differing_bits: tuple[int, int] | None = None

    @property
    def ranks(self) -> tuple[int, ...]:
        if self.participants == 0:
            return ()
        if self.differing_bits is None:
            return tuple(range(self.total_ranks))
        a, b = self.differing_bits
        return tuple(p for p in range(self.total_ranks) if (p >> a) & 1 != (p >> b) & 1)

    @property
    def bytes(self) -> int:
        return self.participants * self.bytes_per_rank

    @property
    def messages(self) -> int:
        return self.participants * self.messages_per_rank


def gate_comm(gate: Gate, plan: PartitionPlan, exchange: str = "full") -> GateComm:
    """Plan arithmetic only: which ranks exchange and how much each sends."""
    loc = classify(gate, plan)
    if loc is not Locality.DISTRIBUTED:
        return GateComm(loc, 0, 0, 0, plan.ranks)
    nbytes = plan.local_bytes
    if gate.kind is GateKind.SWAP:
        lo, hi = sorted(gate.qubits)
        if lo >= plan.m:
            # half the ranks have differing bits; all of their amplitudes move
            return GateComm(loc, plan.ranks // 2, nbytes, plan.messages_for(nbytes), plan.ranks,
                            (lo - plan.m, hi - plan.m))
        if exchange == "swap_halved":
            nbytes //= 2
    return GateComm(loc, plan.ranks, nbytes, plan.messages_for(nbytes), plan.ranks)


# -- exchange layer -----------------------------------------------------------


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    chunk: int
    nbytes: int
    round: int


class Exchanger:
    """The only channel between emulated ranks.

    ``blocking`` completes one chunk of every pair (a send-receive) before
    moving to the next chunk. ``nonblocking`` posts every chunk of the gate
    first and completes them all afterwards.
    """

    def __init__(self, chunk_cap: int, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown schedule mode {mode!r}")
        self.chunk_cap = chunk_cap
        self.mode = mode

    def _chunks(self, nbytes: int):
        cap = self.chunk_cap
        return [(i, i * cap, min(nbytes, (i + 1) * cap)) for i in range(-(-nbytes // cap))]

    def exchange(self, payloads: dict[int, np.ndarray], partners: dict[int, int],
                 recv: np.ndarray) -> list[Message]:
        """Deliver ``payloads[p]`` into the head of ``recv[partners[p]]``."""
        src = {p: np.ascontiguousarray(buf).view(np.uint8).reshape(-1) for p, buf in payloads.items()}
        dst = {p: recv[partners[p]].view(np.uint8) for p in payloads}
        log: list[Message] = []
        if self.mode == "blocking":
            plans = {p: self._chunks(src[p].size) for p in src}
            rounds = max((len(c) for c in plans.values()), default=0)
            for rnd in range(rounds):
                for p in sorted(src):
                    if rnd < len(plans[p]):
                        i, lo, hi = plans[p][rnd]
                        dst[p][lo:hi] = src[p][lo:hi]
                        log.append(Message(p, partners[p], i, hi - lo, rnd))
        else:
            pending = []
            for p in sorted(src):
                for i, lo, hi in self._chunks(src[p].size):
                    pending.append((p, lo, hi))
                    log.append(Message(p, partners[p], i, hi - lo, 0))
            for p, lo, hi in pending:
                dst[p][lo:hi] = src[p][lo:hi]
        return log


# -- trace --------------------------------------------------------------------


@dataclass
class CommRecord:
    gate_index: int
    kind: str
    targets: tuple[int, ...]
    locality: Locality
    ranks: tuple[int, ...]
    partners: dict[int, int]
    messages: int
    bytes: int
    mode: str
    exchange: str
    rounds: int = 0
    log: list[Message] = field(default_factory=list, repr=False)
    wall_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "gate_index": self.gate_index,
            "kind": self.kind,
            "targets": list(self.targets),
            "class": self.locality.value,
            "ranks": list(self.ranks),
            "messages": self.messages,
            "bytes": self.bytes,
            "mode": self.mode,
            "exchange": self.exchange,
        }


@dataclass
class CommTrace:
    plan: PartitionPlan
    records: list[CommRecord] = field(default_factory=list)

    @property
    def distributed_gates(self) -> int:
        return sum(1 for r in self.records if r.locality is Locality.DISTRIBUTED)

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes for r in self.records)

    @property
    def total_messages(self) -> int:
        return sum(r.messages for r in self.records)

    def count(self, locality: Locality, kind: GateKind | None = None) -> int:
        return sum(
            1 for r in self.records
            if r.locality is locality and (kind is None or r.kind == kind.value)
        )

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json()) + "\n" for r in self.records)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


# -- distributed execution ----------------------------------------------------


def _bit_rows(plan: PartitionPlan, bit: int) -> tuple[np.ndarray, np.ndarray]:
    ranks = np.arange(plan.ranks)
    on = (ranks >> bit) & 1 == 1
    return ranks[~on], ranks[on]


def _apply_phase(buffers: np.ndarray, gate: Gate, plan: PartitionPlan) -> None:
    m = plan.m
    c, t = gate.control, gate.target  # c < t
    if t < m:
        phase_kernel(buffers, c, t, gate.angle)
        return
    phase = np.exp(1j * gate.angle)
    for p in range(plan.ranks):
        if (p >> (t - m)) & 1 == 0:
            continue
        if c < m:
            _split(buffers[p], c)[..., 1, :] *= phase
        elif (p >> (c - m)) & 1:
            buffers[p] *= phase


def run_distributed(circuit: Circuit, plan: PartitionPlan, mode: str = "blocking",
                    exchange: str = "full", initial: Statevector | None = None,
                    ) -> tuple[Statevector, CommTrace]:
    """Run ``circuit`` over ``plan.ranks`` emulated ranks.

    Returns the concatenated final state and a per-gate communication trace.
    """
    if circuit.n_qubits != plan.n_qubits:
        raise ShapeError(f"circuit has {circuit.n_qubits} qubits, plan has {plan.n_qubits}")
    if plan.r > MAX_EMULATED_RANK_BITS:
        raise PartitionError(f"refusing to emulate more than 2^{MAX_EMULATED_RANK_BITS} ranks")
    if exchange not in EXCHANGES:
        raise ValueError(f"unknown exchange mode {exchange!r}")
    if initial is None:
        initial = init_basis_state(plan.n_qubits, 0)
    elif initial.n_qubits != plan.n_qubits:
        raise ShapeError(f"state has {initial.n_qubits} qubits, plan has {plan.n_qubits}")

    m = plan.m
    buffers = initial.amps.copy().reshape(plan.ranks, plan.local_amps)
    recv = np.empty_like(buffers)
    ex = Exchanger(plan.chunk_cap, mode)
    trace = CommTrace(plan)

    for idx, gate in enumerate(circuit.gates):
        t0 = time.perf_counter()
        loc = classify(gate, plan)
        log: list[Message] = []
        partners: dict[int, int] = {}
        if loc is Locality.FULLY_LOCAL:
            _apply_phase(buffers, gate, plan)
        elif loc is Locality.LOCAL_MEMORY:
            if gate.kind is GateKind.H:
                hadamard_kernel(buffers, gate.target)
            else:
                swap_kernel(buffers, gate.target, gate.second_target)
        else:
            for p in range(plan.ranks):
                for q in partner_ranks(gate, plan, p):
                    partners[p] = q
            if gate.kind is GateKind.H:
                log = ex.exchange({p: buffers[p] for p in partners}, partners, recv)
                lo, hi = _bit_rows(plan, gate.target - m)
                new_lo = (buffers[lo] + recv[lo]) * INV_SQRT2
                new_hi = (recv[hi] - buffers[hi]) * INV_SQRT2
                buffers[lo] = new_lo
                buffers[hi] = new_hi
            else:
                a, b = sorted(gate.qubits)
                if a >= m:
                    log = ex.exchange({p: buffers[p] for p in partners}, partners, recv)
                    for p in partners:
                        buffers[p] = recv[p]
                else:
                    lo, hi = _bit_rows(plan, b - m)
                    side = {int(p): 1 for p in lo} | {int(p): 0 for p in hi}
                    if exchange == "swap_halved":
                        # ship only the half whose local bit disagrees with the rank bit
                        payloads = {p: _split(buffers[p], a)[:, side[p], :] for p in partners}
                        log = ex.exchange(payloads, partners, recv)
                        half = plan.local_amps // 2
                        for p in partners:
                            got = recv[p, :half].reshape(_split(buffers[p], a)[:, 0, :].shape)
                            _split(buffers[p], a)[:, side[p], :] = got
                    else:
                        log = ex.exchange({p: buffers[p] for p in partners}, partners, recv)
                        for p in partners:
                            _split(buffers[p], a)[:, side[p], :] = _split(recv[p], a)[:, 1 - side[p], :]
        ranks = tuple(sorted(partners))
        trace.records.append(CommRecord(
            gate_index=idx,
            kind=gate.kind.value,
            targets=gate.qubits,
            locality=loc,
            ranks=ranks,
            partners=partners,
            messages=len(log),
            bytes=sum(msg.nbytes for msg in log),
            mode=mode,
            exchange=exchange,
            rounds=len({msg.round for msg in log}),
            log=log,
            wall_s=time.perf_counter() - t0,
        ))
    return Statevector(plan.n_qubits, buffers.reshape(-1)), trace

