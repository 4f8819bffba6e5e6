"""Command-line harness: ``distsv {run,predict,calibrate,sweep}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time

import numpy as np

from .blocking import BlockingError, block_qft, comm_stats
from .circuit import (
    CircuitError,
    build_hadamard_bench,
    build_qft,
    build_swap_bench,
    load_circuit,
)
from .cost import (
    CalibrationError,
    CostModelError,
    MachineConfig,
    calibrate,
    load_config,
    load_records,
    plan_for_machine,
    predict_circuit,
    save_config,
    hbench_records,
)
from .emulator import DEFAULT_CHUNK_CAP, PartitionError, make_plan, run_distributed
from .statevector import BYTES_PER_AMP, fidelity, init_basis_state, qft_oracle, random_state, run_circuit

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_CALIBRATION = 0, 1, 2, 3
EXPERIMENTS = ("qft", "qft-blocked", "hbench", "swapbench", "custom-circuit")
DESK_CAP_QUBITS = 26
VERIFY_TOL = 1e-10

SUMMARY_COLUMNS = [
    "experiment", "n_qubits", "r", "m", "chunk_cap", "mode", "exchange", "seed", "gates",
    "distributed_gates", "messages", "bytes", "verified", "max_deviation", "max_infidelity",
    "repetitions", "wall_min_s", "wall_median_s", "pred_runtime_s", "pred_node_energy_J",
    "pred_network_energy_J", "pred_total_energy_J",
]
WALL_COLUMNS = ("wall_min_s", "wall_median_s")
SWEEP_COLUMNS = [
    "experiment", "n_qubits", "r", "m", "mode", "exchange", "gates", "distributed_gates",
    "messages", "bytes", "pred_runtime_s", "pred_node_energy_J", "pred_network_energy_J",
    "pred_total_energy_J",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _exchange(value: str) -> str:
    return value.replace("-", "_")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--exp", choices=EXPERIMENTS, default="qft")
    p.add_argument("--n", type=int, required=True, help="qubit count")
    p.add_argument("--chunk-cap", type=int, default=DEFAULT_CHUNK_CAP, help="bytes per message")
    p.add_argument("--mode", choices=("blocking", "nonblocking"), default="blocking")
    p.add_argument("--exchange", choices=("full", "swap-halved"), default="full")
    p.add_argument("--target", default=None,
                   help="hbench: qubit (default n-1); swapbench: 'a,b' (default 0,n-1)")
    p.add_argument("--gates", type=int, default=50, help="benchmark gate count")
    p.add_argument("--swap-after", type=int, default=None,
                   help="qft-blocked: Hadamard groups before the swap block (default m)")
    p.add_argument("--circuit", default=None, help="circuit file for custom-circuit")
    p.add_argument("--config", default=None, help="calibrated cost parameters (JSON)")
    p.add_argument("--machine", default=None, help="machine overrides (JSON)")
    p.add_argument("--freq", type=float, default=None, help="CPU frequency in GHz")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="distsv", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute an experiment on the rank emulator")
    _common(run)
    run.add_argument("--r", type=int, default=0, help="rank bits (2^r emulated ranks)")
    run.add_argument("--verify", action="store_true", help="check against the dense engine")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--repetitions", type=int, default=1)
    run.add_argument("--max-qubits", type=int, default=DESK_CAP_QUBITS)

    pred = sub.add_parser("predict", help="cost-model prediction, no simulation")
    _common(pred)
    pred.add_argument("--r", type=int, default=None,
                      help="rank bits (default: fewest nodes that fit the machine memory)")

    cal = sub.add_parser("calibrate", help="fit cost parameters to measurements")
    cal.add_argument("records", nargs="?", default=None,
                     help="records CSV (default: shipped Hadamard-benchmark table)")
    cal.add_argument("--out", default=None, help="write the fitted config JSON here")
    cal.add_argument("--compute-fraction", type=float, default=1.0 / 3.0)
    cal.add_argument("--numa-qubits", type=int, default=2)

    sw = sub.add_parser("sweep", help="static counts and predictions over n or r")
    sw.add_argument("--exp", choices=EXPERIMENTS[:4], default="qft")
    sw.add_argument("--n", required=True, help="qubit range: 8:16, 8,10,12 or 12")
    sw.add_argument("--r", default="0", help="rank-bit range, same syntax")
    sw.add_argument("--mode", default="blocking", help="comma list of schedule modes")
    sw.add_argument("--exchange", choices=("full", "swap-halved"), default="full")
    sw.add_argument("--chunk-cap", type=int, default=DEFAULT_CHUNK_CAP)
    sw.add_argument("--target", default=None)
    sw.add_argument("--gates", type=int, default=50)
    sw.add_argument("--swap-after", type=int, default=None)
    sw.add_argument("--config", default=None)
    sw.add_argument("--machine", default=None)
    sw.add_argument("--freq", type=float, default=None)
    sw.add_argument("--out", default=None, help="CSV path (default: stdout)")
    return ap


# -- helpers ------------------------------------------------------------------


def sizing_hint(n: int, cap: int) -> str:
    need = (1 << n) * BYTES_PER_AMP
    return (f"{n} qubits needs {need / 2**30:.3g} GiB of amplitudes, beyond the desk-scale cap "
            f"of {cap} qubits ({(1 << cap) * BYTES_PER_AMP / 2**30:.3g} GiB); use 'predict' "
            f"for larger registers")


def parse_range(spec: str) -> list[int]:
    spec = spec.strip()
    try:
        if ":" in spec:
            lo, hi = (int(x) for x in spec.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"invalid range {spec!r}") from None
    if not values:
        raise UsageError(f"invalid range {spec!r}: empty")
    return values


def build_experiment(exp: str, n: int, r: int, target=None, gates: int = 50,
                     swap_after=None, circuit_path=None):
    if exp == "qft":
        return build_qft(n)
    if exp == "qft-blocked":
        return block_qft(n, n - r, swap_after)
    if exp == "hbench":
        q = n - 1 if target is None else int(target)
        return build_hadamard_bench(q, gates, n)
    if exp == "swapbench":
        a, b = (0, n - 1) if target is None else (int(x) for x in str(target).split(","))
        return build_swap_bench(a, b, gates, n)
    if circuit_path is None:
        raise UsageError("custom-circuit needs --circuit FILE")
    if not os.path.exists(circuit_path):
        raise UsageError(f"circuit file {circuit_path!r} does not exist")
    circuit = load_circuit(circuit_path)
    if circuit.n_qubits != n:
        raise UsageError(f"circuit file declares {circuit.n_qubits} qubits, --n is {n}")
    return circuit


def _machine(args, config_machine: dict | None = None) -> MachineConfig:
    d = dict(config_machine or {})
    if args.machine:
        with open(args.machine, encoding="utf-8") as fh:
            d.update(json.load(fh))
    if args.freq is not None:
        d["frequency"] = args.freq
    d.pop("nodes", None)
    return MachineConfig.from_json(d)


def _model(args, required: bool):
    """(params, machine, source) from --config, or the shipped calibration."""
    if args.config:
        try:
            params, machine = load_config(args.config)
        except FileNotFoundError:
            raise CalibrationError(f"config file {args.config!r} not found") from None
        except (ValueError, TypeError) as exc:
            raise CalibrationError(f"config file {args.config!r} is malformed: {exc}") from None
        if params is None:
            raise CalibrationError(f"{args.config} holds no 'cost' section; run "
                                   f"'distsv calibrate RECORDS --out {args.config}' first")
        return params, _machine(args, machine), args.config
    if required:
        raise CalibrationError(
            "no calibration given: run 'distsv calibrate [RECORDS] --out params.json' "
            "and pass '--config params.json'"
        )
    res = calibrate(hbench_records())
    return res.params, _machine(args, res.machine().to_json()), "builtin:hbench_38q"


def _write_csv(path_or_none, columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if path_or_none:
        with open(path_or_none, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# -- commands -----------------------------------------------------------------


def cmd_run(args) -> int:
    n = args.n
    if n > args.max_qubits:
        print(f"refusing to run: {sizing_hint(n, args.max_qubits)}; raise --max-qubits to "
              f"override", file=sys.stderr)
        return EXIT_USAGE
    if args.repetitions < 1:
        raise UsageError("--repetitions must be >= 1")
    exchange = _exchange(args.exchange)
    plan = make_plan(n, args.r, args.chunk_cap)
    circuit = build_experiment(args.exp, n, args.r, args.target, args.gates, args.swap_after,
                               args.circuit)

    rng = np.random.default_rng(args.seed)
    basis = None
    if args.exp in ("qft", "qft-blocked"):
        basis = int(rng.integers(1 << n))
        initial = init_basis_state(n, basis)
    else:
        initial = random_state(n, rng)

    walls = []
    for _ in range(args.repetitions):
        t0 = time.perf_counter()
        state, trace = run_distributed(circuit, plan, args.mode, exchange, initial)
        walls.append(time.perf_counter() - t0)

    stats = comm_stats(circuit, plan, exchange)
    verification = None
    ok = True
    if args.verify:
        ref = run_circuit(initial.copy(), circuit)
        dev = float(np.abs(state.amps - ref.amps).max())
        inf = 1.0 - fidelity(state, ref)
        checks = {"dense_engine": inf}
        if basis is not None:
            checks["qft_oracle"] = 1.0 - fidelity(state, qft_oracle(n, basis))
        worst = max(max(checks.values()), 0.0)
        # fidelity saturates at 1 for unnormalized states, so the raw deviation is checked too
        ok = worst < VERIFY_TOL and dev < VERIFY_TOL
        verification = {"passed": ok, "max_deviation": dev, "max_infidelity": worst,
                        "tolerance": VERIFY_TOL, "checks": checks, "input_basis_state": basis}

    params, machine, source = _model(args, required=False)
    prediction = predict_circuit(circuit, plan, params, machine, args.mode, exchange)

    row = {
        "experiment": args.exp, "n_qubits": n, "r": plan.r, "m": plan.m,
        "chunk_cap": plan.chunk_cap, "mode": args.mode, "exchange": exchange, "seed": args.seed,
        "gates": len(circuit), "distributed_gates": trace.distributed_gates,
        "messages": trace.total_messages, "bytes": trace.total_bytes,
        "verified": "" if verification is None else str(ok).lower(),
        "max_deviation": "" if verification is None else f"{verification['max_deviation']:.3e}",
        "max_infidelity": "" if verification is None else f"{verification['max_infidelity']:.3e}",
        "repetitions": args.repetitions,
        "wall_min_s": f"{min(walls):.6f}", "wall_median_s": f"{statistics.median(walls):.6f}",
        "pred_runtime_s": f"{prediction.runtime_s:.6e}",
        "pred_node_energy_J": f"{prediction.node_energy_J:.6e}",
        "pred_network_energy_J": f"{prediction.network_energy_J:.6e}",
        "pred_total_energy_J": f"{prediction.total_energy_J:.6e}",
    }
    report = {
        "experiment": args.exp,
        "plan": plan.as_dict(),
        "mode": args.mode,
        "exchange": exchange,
        "seed": args.seed,
        "gates": len(circuit),
        "comm_stats": stats.to_json(),
        "trace": {"distributed_gates": trace.distributed_gates, "bytes": trace.total_bytes,
                  "messages": trace.total_messages},
        "verification": verification,
        "wall_s": {"min": min(walls), "median": statistics.median(walls), "all": walls},
        "prediction": prediction.summary(),
        "calibration": source,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "summary.csv"), SUMMARY_COLUMNS, [row])
        trace.write_jsonl(os.path.join(args.out, "trace.jsonl"))
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")

    print(f"{args.exp}: n={n} r={plan.r} m={plan.m} gates={len(circuit)} "
          f"distributed={trace.distributed_gates} messages={trace.total_messages} "
          f"bytes={trace.total_bytes} wall={min(walls):.4f}s")
    if stats.bytes != trace.total_bytes or stats.messages != trace.total_messages:
        print("warning: static comm_stats disagree with the trace", file=sys.stderr)
    if verification is not None:
        status = "PASS" if ok else "FAIL"
        print(f"verify: {status} max_deviation={verification['max_deviation']:.3e} "
              f"max_infidelity={verification['max_infidelity']:.3e}")
        if not ok:
            return EXIT_VERIFY
    return EXIT_OK


def cmd_predict(args) -> int:
    params, machine, source = _model(args, required=True)
    exchange = _exchange(args.exchange)
    plan = (make_plan(args.n, args.r, args.chunk_cap) if args.r is not None
            else plan_for_machine(args.n, machine, args.chunk_cap))
    circuit = build_experiment(args.exp, args.n, plan.r, args.target, args.gates,
                               args.swap_after, args.circuit)
    report = predict_circuit(circuit, plan, params, machine, args.mode, exchange)
    summary = report.summary()
    summary["calibration"] = source
    summary["experiment"] = args.exp
    print(json.dumps(summary, indent=2))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        d = report.to_json()
        d.update(calibration=source, experiment=args.exp)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(d, fh, indent=2)
            fh.write("\n")
        with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    records = hbench_records() if args.records is None else load_records(args.records)
    res = calibrate(records, compute_fraction=args.compute_fraction, numa_qubits=args.numa_qubits)
    print(f"{'record':<20} {'class':<12} {'mode':<12} {'time_rel':>9} {'energy_rel':>11}")
    for r in res.residuals:
        e = "" if r["energy_rel"] is None else f"{r['energy_rel']:+.2%}"
        print(f"{r['label']:<20} {r['class']:<12} {r['mode']:<12} {r['time_rel']:>+9.2%} {e:>11}")
    for w in res.warnings:
        print(f"note: {w}", file=sys.stderr)
    if args.out:
        save_config(args.out, res.params, res.machine())
        print(f"wrote {args.out}")
    else:
        print(json.dumps({"cost": res.params.to_json(),
                          "machine": res.machine().to_json()}, indent=2))
    return EXIT_OK


def sweep_rows(exp, ns, rs, modes, exchange, chunk_cap, params, machine, target=None,
               gates=50, swap_after=None) -> list[dict]:
    rows = []
    for n in ns:
        for r in rs:
            if not 0 <= r < n:
                continue
            plan = make_plan(n, r, chunk_cap)
            try:
                circuit = build_experiment(exp, n, r, target, gates, swap_after)
            except (BlockingError, CircuitError):
                continue
            stats = comm_stats(circuit, plan, exchange)
            for mode in modes:
                rep = predict_circuit(circuit, plan, params, machine, mode, exchange)
                rows.append({
                    "experiment": exp, "n_qubits": n, "r": r, "m": plan.m, "mode": mode,
                    "exchange": exchange, "gates": len(circuit),
                    "distributed_gates": stats.distributed_gates, "messages": stats.messages,
                    "bytes": stats.bytes, "pred_runtime_s": f"{rep.runtime_s:.6e}",
                    "pred_node_energy_J": f"{rep.node_energy_J:.6e}",
                    "pred_network_energy_J": f"{rep.network_energy_J:.6e}",
                    "pred_total_energy_J": f"{rep.total_energy_J:.6e}",
                })
    return rows


def cmd_sweep(args) -> int:
    ns, rs = parse_range(args.n), parse_range(args.r)
    modes = [m.strip() for m in args.mode.split(",") if m.strip()]
    for m in modes:
        if m not in ("blocking", "nonblocking"):
            raise UsageError(f"unknown mode {m!r}")
    params, machine, _ = _model(args, required=False)
    rows = sweep_rows(args.exp, ns, rs, modes, _exchange(args.exchange), args.chunk_cap,
                      params, machine, args.target, args.gates, args.swap_after)
    if not rows:
        raise UsageError("invalid range: no feasible (n, r) configuration")
    text = _write_csv(args.out, SWEEP_COLUMNS, rows)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "predict": cmd_predict, "calibrate": cmd_calibrate,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (UsageError, CircuitError, PartitionError, BlockingError, CostModelError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
