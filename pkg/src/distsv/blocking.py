"""Cache-blocked QFT and static communication accounting."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, build_qft, qft_group, qft_reversal_swaps
from .emulator import PartitionPlan, gate_comm, Locality
from .statevector import (
    ShapeError,
    fidelity,
    init_basis_state,
    random_state,
    run_circuit,
)


class BlockingError(ValueError):
    pass


@dataclass(frozen=True)
class QubitPermutation:
    """``mapping[logical]`` is the physical qubit currently holding ``logical``."""

    mapping: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise BlockingError(f"not a permutation: {self.mapping}")

    @classmethod
    def identity(cls, n: int) -> QubitPermutation:
        return cls(tuple(range(n)))

    @classmethod
    def reversal(cls, n: int) -> QubitPermutation:
        return cls(tuple(range(n - 1, -1, -1)))

    def __getitem__(self, q: int) -> int:
        return self.mapping[q]

    def after_swap(self, a: int, b: int) -> QubitPermutation:
        """Permutation after a physical SWAP of qubits ``a`` and ``b``."""
        swap = {a: b, b: a}
        return QubitPermutation(tuple(swap.get(p, p) for p in self.mapping))

    def remap(self, gate: Gate) -> Gate:
        return gate.remap(self.mapping)


def block_qft(n: int, m: int, swap_after: int | None = None) -> Circuit:
    """QFT rewritten so that no Hadamard touches a qubit >= ``m``.

    The reversal swaps of :func:`build_qft` are pulled forward to just after
    the ``swap_after``-th Hadamard group; every later gate is re-addressed
    through the qubit permutation the swaps leave behind (q -> n-1-q). The
    result implements the same unitary as ``build_qft(n)`` and adds no gates.
    """
    if not 1 <= m <= n:
        raise BlockingError(f"need 1 <= m <= n, got m={m}, n={n}")
    r = n - m
    if r == 0:
        return build_qft(n)
    if r > m:
        raise BlockingError(
            f"{r} rank qubits but only {m} local ones: a single swap block cannot "
            f"make every Hadamard local"
        )
    if swap_after is None:
        swap_after = m
    if not r <= swap_after <= m:
        raise BlockingError(f"swap_after must lie in [{r}, {m}] for n={n}, m={m}; got {swap_after}")

    gates: list[Gate] = []
    for t in range(swap_after):
        gates.extend(qft_group(t, n))
    perm = QubitPermutation.identity(n)
    for g in qft_reversal_swaps(n):
        gates.append(g)
        perm = perm.after_swap(*g.qubits)
    for t in range(swap_after, n):
        gates.extend(perm.remap(g) for g in qft_group(t, n))
    return Circuit(n, gates)


@dataclass(frozen=True)
class CommStats:
    distributed_gates: int
    bytes: int
    messages: int
    plan: PartitionPlan

    def to_json(self) -> dict:
        return {
            "distributed_gates": self.distributed_gates,
            "bytes": self.bytes,
            "messages": self.messages,
            "plan": self.plan.as_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def comm_stats(circuit: Circuit, plan: PartitionPlan, exchange: str = "full") -> CommStats:
    if circuit.n_qubits != plan.n_qubits:
        raise ShapeError(f"circuit has {circuit.n_qubits} qubits, plan has {plan.n_qubits}")
    dist = nbytes = msgs = 0
    for g in circuit.gates:
        gc = gate_comm(g, plan, exchange)
        if gc.locality is Locality.DISTRIBUTED:
            dist += 1
            nbytes += gc.bytes
            msgs += gc.messages
    return CommStats(dist, nbytes, msgs, plan)


@dataclass(frozen=True)
class EquivalenceReport:
    max_infidelity: float
    trials: int
    exhaustive: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_infidelity < self.tol


def verify_equivalence(c1: Circuit, c2: Circuit, n: int, trials: int | None = None,
                       tol: float = 1e-10, seed: int = 0) -> EquivalenceReport:
    """Run both circuits on the same inputs and report the worst 1 - fidelity.

    With ``trials=None`` and n <= 14 every basis state is tried; otherwise
    ``trials`` random normalized states are drawn.
    """
    if c1.n_qubits != n or c2.n_qubits != n:
        raise ShapeError(f"circuits have {c1.n_qubits} and {c2.n_qubits} qubits, expected {n}")
    exhaustive = trials is None and n <= 14
    if exhaustive:
        inputs = (init_basis_state(n, x) for x in range(1 << n))
        count = 1 << n
    else:
        count = 50 if trials is None else trials
        rng = np.random.default_rng(seed)
        inputs = (random_state(n, rng) for _ in range(count))
    worst = 0.0
    for s in inputs:
        a = run_circuit(s.copy(), c1)
        b = run_circuit(s, c2)
        worst = max(worst, 1.0 - fidelity(a, b))
    return EquivalenceReport(max(worst, 0.0), count, exhaustive, tol)
