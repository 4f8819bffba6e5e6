import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsv.circuit import Circuit, build_qft, cphase, hadamard, random_circuit, swap
from distsv.statevector import (
    InvalidIndexError,
    ShapeError,
    Statevector,
    apply_gate,
    bit_reverse,
    fidelity,
    init_basis_state,
    qft_matrix_oracle,
    qft_oracle,
    random_state,
    run_circuit,
)
from oracles import ascending_qft_via_fft, circuit_matrix, reverse_bits


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_gates_match_dense_matrices(n, seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(n, 12, rng)
    psi = random_state(n, rng)
    expected = circuit_matrix(c) @ psi.amps
    got = run_circuit(psi.copy(), c).amps
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_hadamard_on_zero():
    s = apply_gate(init_basis_state(2, 0), hadamard(1))
    np.testing.assert_allclose(s.amps, [2**-0.5, 0, 2**-0.5, 0])


def test_swap_moves_basis_state():
    s = apply_gate(init_basis_state(3, 0b001), swap(0, 2))
    assert s.amps[0b100] == 1


def test_cphase_only_hits_11():
    s = Statevector(2, np.full(4, 0.5))
    apply_gate(s, cphase(0, 1, np.pi))
    np.testing.assert_allclose(s.amps, [0.5, 0.5, 0.5, -0.5])


def test_qft_matches_fft_oracle():
    for n in range(1, 9):
        u = circuit_matrix(build_qft(n))
        np.testing.assert_allclose(u, qft_matrix_oracle(n), atol=1e-12)
        rng = np.random.default_rng(n)
        psi = random_state(n, rng)
        np.testing.assert_allclose(u @ psi.amps, ascending_qft_via_fft(psi.amps), atol=1e-12)


def test_qft_is_msb_first_dft_in_reversed_labels():
    # reading qubit 0 as the most significant bit gives the textbook DFT
    n = 4
    size = 1 << n
    rev = [reverse_bits(i, n) for i in range(size)]
    f = np.exp(2j * np.pi * np.outer(np.arange(size), np.arange(size)) / size) / 4
    np.testing.assert_allclose(qft_matrix_oracle(n)[np.ix_(rev, rev)], f, atol=1e-12)


def test_qft_oracle_columns():
    n = 5
    u = qft_matrix_oracle(n)
    for x in (0, 1, 17, 31):
        np.testing.assert_allclose(qft_oracle(n, x).amps, u[:, x], atol=1e-13)


def test_bit_reverse():
    assert [int(bit_reverse(i, 3)) for i in range(8)] == [0, 4, 2, 6, 1, 5, 3, 7]


def test_errors():
    with pytest.raises(InvalidIndexError):
        init_basis_state(2, 4)
    with pytest.raises(InvalidIndexError):
        apply_gate(init_basis_state(2, 0), hadamard(2))
    with pytest.raises(ShapeError):
        run_circuit(init_basis_state(2, 0), Circuit(3, []))
    with pytest.raises(ShapeError):
        Statevector(2, np.zeros(3))
    with pytest.raises(ShapeError):
        Statevector.load(b"\0" * 48)


def test_dump_roundtrip():
    s = random_state(4, np.random.default_rng(1))
    raw = s.dump()
    assert len(raw) == 16 * 16
    np.testing.assert_array_equal(Statevector.load(raw).amps, s.amps)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_norm_and_reversibility(n, seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(n, 30, rng)
    psi = random_state(n, rng)
    out = run_circuit(psi.copy(), c)
    assert abs(out.norm() - 1) < 1e-12
    inv = Circuit(n, [g if g.kind.value != "CP" else cphase(g.control, g.target, -g.angle)
                      for g in reversed(c.gates)])
    back = run_circuit(out, inv)
    assert fidelity(back, psi) == pytest.approx(1.0, abs=1e-12)
