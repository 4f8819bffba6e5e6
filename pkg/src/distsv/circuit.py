"""Gate/circuit data model, benchmark generators and the text circuit format.

Qubit 0 is the least significant bit of an amplitude index.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class CircuitError(ValueError):
    pass


class ParseError(CircuitError):
    def __init__(self, lineno: int, msg: str) -> None:
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}")


class GateKind(str, enum.Enum):
    H = "H"
    CP = "CP"
    SWAP = "SWAP"


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    target: int
    control: int | None = None
    angle: float | None = None
    second_target: int | None = None

    def __post_init__(self) -> None:
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is GateKind.CP:
            if self.control is None or self.angle is None:
                raise CircuitError("CP needs a control and an angle")
            if self.control == self.target:
                raise CircuitError(f"CP control and target coincide ({self.target})")
            # diagonal gate: store control < target
            if self.control > self.target:
                c, t = self.target, self.control
                object.__setattr__(self, "control", c)
                object.__setattr__(self, "target", t)
            object.__setattr__(self, "angle", float(self.angle))
        elif kind is GateKind.SWAP:
            if self.second_target is None:
                raise CircuitError("SWAP needs two targets")
            if self.second_target == self.target:
                raise CircuitError(f"SWAP targets coincide ({self.target})")
        for q in self.qubits:
            if q < 0:
                raise CircuitError(f"negative qubit index {q}")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.kind is GateKind.H:
            return (self.target,)
        if self.kind is GateKind.CP:
            return (self.control, self.target)
        return (self.target, self.second_target)

    def remap(self, mapping) -> Gate:
        """Return the gate with every qubit index ``q`` replaced by ``mapping[q]``."""
        if self.kind is GateKind.H:
            return hadamard(mapping[self.target])
        if self.kind is GateKind.CP:
            return cphase(mapping[self.control], mapping[self.target], self.angle)
        return swap(mapping[self.target], mapping[self.second_target])

    def __str__(self) -> str:
        if self.kind is GateKind.H:
            return f"H {self.target}"
        if self.kind is GateKind.CP:
            return f"CP {self.control} {self.target} {self.angle!r}"
        return f"SWAP {self.target} {self.second_target}"


def hadamard(t: int) -> Gate:
    return Gate(GateKind.H, t)


def cphase(c: int, t: int, angle: float) -> Gate:
    return Gate(GateKind.CP, t, control=c, angle=angle)


def swap(a: int, b: int) -> Gate:
    return Gate(GateKind.SWAP, a, second_target=b)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise CircuitError(f"invalid register size {self.n_qubits}")
        object.__setattr__(self, "gates", tuple(self.gates))
        for i, g in enumerate(self.gates):
            if max(g.qubits) >= self.n_qubits:
                raise CircuitError(
                    f"gate {i} ({g}) out of range for {self.n_qubits} qubits"
                )

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def count(self, kind: GateKind) -> int:
        return sum(1 for g in self.gates if g.kind is kind)


# -- generators ---------------------------------------------------------------

# SWAP-benchmark target pairs; the repeated 36 is intentional.
SWAP_BENCH_LOCAL_TARGETS = (0, 4, 8, 12, 16)
SWAP_BENCH_DISTRIBUTED_TARGETS = (35, 36, 36)


def qft_group(t: int, n: int) -> list[Gate]:
    """Hadamard on ``t`` followed by its controlled phases from qubits above it."""
    gates = [hadamard(t)]
    for k in range(t + 1, n):
        gates.append(cphase(t, k, math.pi / 2 ** (k - t)))
    return gates


def qft_reversal_swaps(n: int) -> list[Gate]:
    return [swap(i, n - 1 - i) for i in range(n // 2)]


def build_qft(n: int) -> Circuit:
    """Standard QFT: Hadamard groups on qubits 0..n-1, then the reversal swaps.

    Qubit 0 is treated as the most significant bit of the transformed
    integer, so the first Hadamards land on low (local) qubits and the
    distributed ones come last. See :func:`distsv.statevector.qft_oracle`.
    """
    if n < 1:
        raise CircuitError(f"invalid QFT size {n}")
    gates: list[Gate] = []
    for t in range(n):
        gates.extend(qft_group(t, n))
    gates.extend(qft_reversal_swaps(n))
    return Circuit(n, gates)


def qft_gate_count(n: int) -> int:
    return n * (n + 1) // 2 + n // 2


def build_hadamard_bench(q: int, k: int, n: int | None = None) -> Circuit:
    if k < 1:
        raise CircuitError(f"invalid gate count {k}")
    return Circuit(q + 1 if n is None else n, [hadamard(q)] * k)


def build_swap_bench(a: int, b: int, k: int, n: int | None = None) -> Circuit:
    if a == b:
        raise CircuitError(f"invalid SWAP targets ({a}, {b})")
    if k < 1:
        raise CircuitError(f"invalid gate count {k}")
    return Circuit(max(a, b) + 1 if n is None else n, [swap(a, b)] * k)


def swap_bench_pairs() -> list[tuple[int, int]]:
    return [(a, b) for a in SWAP_BENCH_LOCAL_TARGETS for b in SWAP_BENCH_DISTRIBUTED_TARGETS]


def random_circuit(n: int, k: int, rng: np.random.Generator) -> Circuit:
    """Uniformly mixed H / CP / SWAP gates with random targets and angles."""
    gates = []
    for _ in range(k):
        kind = rng.integers(3) if n > 1 else 0
        if kind == 0:
            gates.append(hadamard(int(rng.integers(n))))
        else:
            a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
            if kind == 1:
                gates.append(cphase(a, b, float(rng.uniform(-math.pi, math.pi))))
            else:
                gates.append(swap(a, b))
    return Circuit(n, gates)


# -- text format --------------------------------------------------------------


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"QUBITS {circuit.n_qubits}"]
    lines.extend(str(g) for g in circuit.gates)
    return "\n".join(lines) + "\n"


def _index(tok: str, lineno: int, n: int | None) -> int:
    try:
        q = int(tok)
    except ValueError:
        raise ParseError(lineno, f"bad qubit index {tok!r}") from None
    if q < 0 or (n is not None and q >= n):
        raise ParseError(lineno, f"qubit index {q} out of range for {n} qubits")
    return q


def parse_circuit(text: str) -> Circuit:
    n: int | None = None
    gates: list[Gate] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        op = tok[0].upper()
        if n is None:
            if op != "QUBITS" or len(tok) != 2:
                raise ParseError(lineno, "expected 'QUBITS <n>' header")
            try:
                n = int(tok[1])
            except ValueError:
                raise ParseError(lineno, f"bad register size {tok[1]!r}") from None
            if n < 1:
                raise ParseError(lineno, f"invalid register size {n}")
            continue
        arity = {"H": 2, "CP": 4, "SWAP": 3}.get(op)
        if arity is None:
            raise ParseError(lineno, f"unknown mnemonic {tok[0]!r}")
        if len(tok) != arity:
            raise ParseError(lineno, f"{op} takes {arity - 1} operands, got {len(tok) - 1}")
        qs = [_index(t, lineno, n) for t in tok[1:3]]
        try:
            if op == "H":
                gates.append(hadamard(qs[0]))
            elif op == "SWAP":
                gates.append(swap(qs[0], qs[1]))
            else:
                try:
                    angle = float(tok[3])
                except ValueError:
                    raise ParseError(lineno, f"malformed angle {tok[3]!r}") from None
                if not math.isfinite(angle):
                    raise ParseError(lineno, f"malformed angle {tok[3]!r}")
                gates.append(cphase(qs[0], qs[1], angle))
        except ParseError:
            raise
        except CircuitError as exc:
            raise ParseError(lineno, str(exc)) from None
    if n is None:
        raise ParseError(0, "missing 'QUBITS <n>' header")
    return Circuit(n, gates)


def load_circuit(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_circuit(fh.read())

