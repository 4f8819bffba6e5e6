"""Dense single-process statevector engine and brute-force oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, GateKind

INV_SQRT2 = 1.0 / math.sqrt(2.0)
BYTES_PER_AMP = 16


class ShapeError(ValueError):
    pass


class InvalidIndexError(IndexError):
    pass


@dataclass
class Statevector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self) -> None:
        self.amps = np.ascontiguousarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (1 << self.n_qubits,):
            raise ShapeError(
                f"expected {1 << self.n_qubits} amplitudes, got shape {self.amps.shape}"
            )

    def copy(self) -> Statevector:
        return Statevector(self.n_qubits, self.amps.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def dump(self) -> bytes:
        """Little-endian (re, im) float64 pairs."""
        return self.amps.astype("<c16").tobytes()

    @classmethod
    def load(cls, data: bytes) -> Statevector:
        amps = np.frombuffer(data, dtype="<c16").astype(np.complex128)
        n = len(amps).bit_length() - 1
        if len(amps) == 0 or 1 << n != len(amps):
            raise ShapeError(f"raw dump holds {len(amps)} amplitudes, not a power of two")
        return cls(n, amps)


def init_basis_state(n: int, x: int) -> Statevector:
    if n < 1:
        raise ShapeError(f"invalid register size {n}")
    if not 0 <= x < 1 << n:
        raise InvalidIndexError(f"basis index {x} out of range for {n} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[x] = 1.0
    return Statevector(n, amps)


def random_state(n: int, rng: np.random.Generator) -> Statevector:
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return Statevector(n, amps / np.linalg.norm(amps))


# -- kernels ------------------------------------------------------------------
# Each kernel takes an array whose last axis is a 2^k block of amplitudes and
# addresses bit q of that block through a strided reshape view, so leading
# axes (e.g. one row per emulated rank) are processed in the same pass.


def _split(amps: np.ndarray, q: int) -> np.ndarray:
    """View with shape (..., hi, 2, 2^q); axis -2 is bit ``q``."""
    size = amps.shape[-1]
    return amps.reshape(amps.shape[:-1] + (size >> (q + 1), 2, 1 << q))


def _split2(amps: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """View with shape (..., *, 2, *, 2, 2^lo); axes -4 and -2 are bits hi and lo."""
    size = amps.shape[-1]
    return amps.reshape(
        amps.shape[:-1] + (size >> (hi + 1), 2, 1 << (hi - lo - 1), 2, 1 << lo)
    )


def hadamard_kernel(amps: np.ndarray, q: int) -> None:
    v = _split(amps, q)
    a = v[..., 0, :].copy()
    b = v[..., 1, :]
    v[..., 0, :] = (a + b) * INV_SQRT2
    v[..., 1, :] = (a - b) * INV_SQRT2


def phase_kernel(amps: np.ndarray, c: int, t: int, angle: float) -> None:
    lo, hi = sorted((c, t))
    v = _split2(amps, lo, hi)
    v[..., 1, :, 1, :] *= np.exp(1j * angle)


def swap_kernel(amps: np.ndarray, a: int, b: int) -> None:
    lo, hi = sorted((a, b))
    v = _split2(amps, lo, hi)
    tmp = v[..., 0, :, 1, :].copy()
    v[..., 0, :, 1, :] = v[..., 1, :, 0, :]
    v[..., 1, :, 0, :] = tmp


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply ``gate`` to ``state`` in place and return it."""
    if max(gate.qubits) >= state.n_qubits:
        raise InvalidIndexError(f"{gate} out of range for {state.n_qubits} qubits")
    if gate.kind is GateKind.H:
        hadamard_kernel(state.amps, gate.target)
    elif gate.kind is GateKind.CP:
        phase_kernel(state.amps, gate.control, gate.target, gate.angle)
    else:
        swap_kernel(state.amps, gate.target, gate.second_target)
    return state


def run_circuit(state: Statevector, circuit: Circuit, callback=None) -> Statevector:
    """Apply every gate of ``circuit`` in order (in place).

    ``callback(index, state)`` is invoked after each gate when given.
    """
    if circuit.n_qubits != state.n_qubits:
        raise ShapeError(
            f"circuit has {circuit.n_qubits} qubits, state has {state.n_qubits}"
        )
    for i, g in enumerate(circuit.gates):
        apply_gate(state, g)
        if callback is not None:
            callback(i, state)
    return state


# -- oracles ------------------------------------------------------------------


def bit_reverse(x: np.ndarray | int, n: int):
    """Reverse the low ``n`` bits of each entry of ``x``."""
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    for b in range(n):
        out |= ((x >> b) & 1) << (n - 1 - b)
    return out


def qft_oracle(n: int, x: int) -> Statevector:
    """QFT of basis state ``x`` evaluated straight from the DFT definition.

    The register is read with qubit 0 as the most significant bit of the
    transformed integer, which is the orientation :func:`build_qft` uses:
    ``amp[j] = exp(2*pi*i * rev(x) * rev(j) / 2^n) / sqrt(2^n)``.
    """
    if not 0 <= x < 1 << n:
        raise InvalidIndexError(f"basis index {x} out of range for {n} qubits")
    size = 1 << n
    j = bit_reverse(np.arange(size), n)
    xr = int(bit_reverse(x, n))
    # exact integer phase modulo 2^n before going to floating point
    k = (xr * j) % size
    amps = np.exp(2j * np.pi * k / size) / math.sqrt(size)
    return Statevector(n, amps)


def qft_matrix_oracle(n: int) -> np.ndarray:
    """Full QFT unitary (columns indexed by input basis state)."""
    size = 1 << n
    r = bit_reverse(np.arange(size), n)
    k = np.outer(r, r) % size
    return np.exp(2j * np.pi * k / size) / math.sqrt(size)


def fidelity(a: Statevector, b: Statevector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ShapeError(f"fidelity of {a.n_qubits}- and {b.n_qubits}-qubit states")
    f = abs(np.vdot(a.amps, b.amps)) ** 2
    return float(min(f, 1.0))
