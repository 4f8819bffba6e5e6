"""Distributed statevector simulation with a rank emulator, QFT cache blocking and a cost model."""
from .blocking import BlockingError, CommStats, QubitPermutation, block_qft, comm_stats, verify_equivalence
from .circuit import (
    Circuit,
    CircuitError,
    Gate,
    GateKind,
    ParseError,
    build_hadamard_bench,
    build_qft,
    build_swap_bench,
    cphase,
    hadamard,
    load_circuit,
    parse_circuit,
    qft_gate_count,
    random_circuit,
    serialize_circuit,
    swap,
)
from .cost import (
    CalibrationError,
    CalibrationRecord,
    CostParams,
    MachineConfig,
    RunReport,
    calibrate,
    energy_network,
    plan_for_machine,
    predict_circuit,
    predict_gate_time,
)
from .emulator import (
    CommTrace,
    Locality,
    PartitionError,
    PartitionPlan,
    classify,
    gate_comm,
    make_plan,
    partner_ranks,
    run_distributed,
)
from .statevector import (
    Statevector,
    apply_gate,
    fidelity,
    init_basis_state,
    qft_oracle,
    random_state,
    run_circuit,
)

__version__ = "0.1.0"
