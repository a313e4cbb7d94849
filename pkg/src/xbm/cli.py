"""Command-line front end: ``xbm group|estimate|bench|export-qasm|gen``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .baselines import pauli_counts
from .core import cnot_cost
from .estimation import (
    AGGREGATORS,
    ALLOCATIONS,
    estimate,
    estimate_half,
    estimate_two_state,
    exact_moments,
    resolve_model,
    resolve_threads,
    variance_bounds,
)
from .grouping import GroupingResult, embed_offdiagonal, expected_groups, group_terms, upper_bound_m
from .matrix import (
    MatrixFormatError,
    PauliString,
    SparseObservable,
    gen_one_sparse_all_colors,
    gen_random_band,
    gen_random_sparse,
    load_observable,
    matrix_stats,
    pauli_string_observable,
)
from .qasm import export_qasm
from .simulator import Statevector, basis_state, product_state, random_state

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2
CHECK_DENSE_TOL = 1e-10
CHECK_DENSE_MAX_QUBITS = 6


class InvariantViolation(RuntimeError):
    """A result broke a guarantee the library is supposed to uphold."""


def _config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _emit(payload, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_csv(rows: list[dict], config: dict, out: Optional[str]) -> None:
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def parse_state(spec: str, n: int) -> Statevector:
    """zero | plus | basis:<int> | random:<seed> | path to a JSON list of [re, im]."""
    if spec == "zero":
        return basis_state(n, 0)
    if spec == "plus":
        return product_state([[1, 1]] * n)
    if spec.startswith("basis:"):
        return basis_state(n, int(spec.split(":", 1)[1], 0))
    if spec.startswith("random:"):
        return random_state(n, int(spec.split(":", 1)[1]))
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"unknown state spec {spec!r}")
    state = Statevector.from_json(json.loads(path.read_text()))
    if state.n != n:
        raise ValueError(f"state in {spec} has {state.n} qubits, expected {n}")
    return state


def _summary(a: SparseObservable, groups: GroupingResult, seconds: float) -> dict:
    stats = matrix_stats(a)
    has_diag = bool(np.any(a.rows == a.cols))
    bound = upper_bound_m(a.n, stats.bandwidth, has_diag) if a.nnz else 0
    return {
        "n": a.n,
        "nnz": stats.nnz,
        "m": groups.m,
        "m_half": groups.real_part().m,
        "bandwidth": stats.bandwidth,
        "m_bound": bound,
        # variance-bound diagnostics; reported only, never enforced
        "m2_over_q": groups.m ** 2 / stats.nnz if stats.nnz else 0.0,
        "max_sq_over_mean_sq": stats.max_abs ** 2 * stats.nnz / stats.trace_sq if stats.trace_sq else 0.0,
        "grouping_seconds": seconds,
    }


def cmd_group(args) -> int:
    a = load_observable(args.input)
    t0 = time.perf_counter()
    groups = group_terms(a)
    summary = _summary(a, groups, time.perf_counter() - t0)
    if groups.m > summary["m_bound"]:
        raise InvariantViolation(f"m = {groups.m} exceeds the bandwidth bound {summary['m_bound']}")
    _emit({"config": _config(args), "summary": summary, "groups": groups.to_json()}, args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    a = load_observable(args.input)
    exact = args.mode == "exact" or args.exact
    knobs = {"exact": exact, "model": args.model, "config": _config(args)}
    if not exact:
        knobs.update(seed=args.seed, aggregator=args.aggregator, allocation=args.allocation,
                     threads=resolve_threads(args.threads))

    def shots_for(groups: GroupingResult) -> int:
        return args.shots_per_group * groups.m if args.shots_per_group else args.shots

    oracle = None
    if args.mode == "two-state":
        psi0 = parse_state(args.state, a.n)
        psi1 = parse_state(args.state1 or args.state, a.n)
        if not exact:
            knobs["shots"] = shots_for(group_terms(embed_offdiagonal(a)))
        report = estimate_two_state(a, psi0, psi1, **knobs)
        if args.check_dense:
            oracle = lambda: np.vdot(psi0.data, a.to_dense() @ psi1.data)  # noqa: E731
    else:
        phi = parse_state(args.state, a.n)
        groups = group_terms(a)
        stats = matrix_stats(a)
        if not exact:
            knobs["shots"] = shots_for(groups.real_part() if args.mode == "half" else groups)
        if args.mode == "half":
            report = estimate_half(groups, phi, **knobs)
        else:
            report = estimate(groups, phi, stats=stats, **knobs)
        if args.check_dense:
            oracle = lambda: np.vdot(phi.data, a.to_dense() @ phi.data)  # noqa: E731

    payload = report.to_json()
    if oracle is not None:
        if a.n > CHECK_DENSE_MAX_QUBITS:
            raise ValueError(f"--check-dense supports at most {CHECK_DENSE_MAX_QUBITS} qubits")
        ref = complex(oracle())
        # half mode only recovers the real part
        delta = abs(ref.real - report.estimate.real) if args.mode == "half" else abs(ref - report.estimate)
        payload["dense_oracle"] = [ref.real, ref.imag]
        payload["dense_delta"] = delta
        if exact and delta > CHECK_DENSE_TOL * max(1.0, abs(ref)):
            _emit(payload, args.output)
            raise InvariantViolation(f"exact estimate differs from the dense oracle by {delta:.3e}")
    _emit(payload, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench suites


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def bench_exp1(args) -> list[dict]:
    rows = []
    for n in range(args.n_min, args.n_max + 1):
        for k in _int_list(args.k):
            if k >= 1 << n:
                continue
            a = gen_random_band(n, k, fill=args.fill, seed=args.seed, kind=args.kind)
            t0 = time.perf_counter()
            groups = group_terms(a)
            elapsed = time.perf_counter() - t0
            naive = qwc = ""
            if n <= args.pauli_max_n:
                naive, qwc = pauli_counts(a)
            rows.append({
                "n": n, "k": k, "nnz": a.nnz, "m_xbm": groups.m, "m_xbm_half": groups.real_part().m,
                "m_bound": upper_bound_m(n, k, has_diagonal=True), "naive_pauli": naive, "qwc": qwc,
                "grouping_seconds": f"{elapsed:.6f}",
            })
    return rows


def bench_exp2(args) -> list[dict]:
    n = args.n_max
    return [{"n": n, "b": b, "c": c, "cnot_cost": cnot_cost(b, c)}
            for b in range(1 << n) for c in range(1 << n)]


def bench_exp3(args) -> list[dict]:
    n = args.n_max
    N = 1 << n
    rows = []
    for d in _int_list(args.d):
        pred = 2 * expected_groups(d, N)
        for rep in range(args.repeats):
            a = gen_random_sparse(n, d, seed=args.seed * 1_000_003 + rep * 7919 + d)
            rows.append({"n": n, "d": d, "repeat": rep, "m_xbm": group_terms(a).m, "predicted": f"{pred:.6f}"})
    return rows


def bench_variance(args) -> list[dict]:
    rows = []
    for n in range(args.n_min, args.n_max + 1):
        for k in _int_list(args.k):
            if k >= 1 << n:
                continue
            for rep in range(args.repeats):
                seed = args.seed + rep
                a = gen_random_band(n, k, seed=seed, kind="hermitian")
                phi = random_state(n, seed)
                groups = group_terms(a)
                stats = matrix_stats(a)
                var = exact_moments(groups, resolve_model(groups, args.model), phi).variance
                bu, bw, bs = variance_bounds(groups, stats)
                rows.append({
                    "n": n, "k": k, "seed": seed, "m": groups.m, "q": a.nnz, "m2_over_q": groups.m ** 2 / a.nnz,
                    "trace_sq": stats.trace_sq, "variance": var, "variance_over_trace": var / stats.trace_sq,
                    "bound_uniform": bu, "bound_weighted": bw, "bound_shadow": bs,
                })
    return rows


BENCH_SUITES: dict[str, Callable[[argparse.Namespace], list[dict]]] = {
    "exp1-groups": bench_exp1,
    "exp2-cnot-map": bench_exp2,
    "exp3-random-support": bench_exp3,
    "variance-scaling": bench_variance,
}


def cmd_bench(args) -> int:
    if args.n_min > args.n_max:
        raise ValueError("--n-min must not exceed --n-max")
    rows = BENCH_SUITES[args.suite](args)
    if args.format == "json":
        _emit({"config": _config(args), "rows": rows}, args.output)
    else:
        _emit_csv(rows, _config(args), args.output)
    return EXIT_OK


def cmd_export_qasm(args) -> int:
    data = json.loads(Path(args.groups).read_text())
    records = data["groups"] if isinstance(data, dict) else data
    n = int(data["summary"]["n"]) if isinstance(data, dict) and "summary" in data else args.n
    if n is None:
        raise ValueError("bare group lists need --n")
    groups = GroupingResult.from_json(n, records)
    paths = export_qasm(groups, args.output)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "band":
        a = gen_random_band(args.n, args.k, fill=args.fill, seed=args.seed, kind=args.matrix_kind)
    elif args.kind == "random-sparse":
        a = gen_random_sparse(args.n, args.d, seed=args.seed,
                              kind="hermitian" if args.matrix_kind == "hermitian" else "complex")
    elif args.kind == "one-sparse-all-colors":
        a = gen_one_sparse_all_colors(args.n)
    else:
        if not args.letters:
            raise ValueError("pauli-string needs --letters")
        a = pauli_string_observable(PauliString(args.letters, complex(args.coefficient)))
    _emit({**a.to_json(), "config": _config(args)}, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xbm", description="Extended Bell measurement toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (0 = all cores; default from XBM_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("group", help="group matrix elements into measurement circuits")
    g.add_argument("input", help="observable (.json or .mtx)")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_group)

    e = sub.add_parser("estimate", help="estimate <phi|A|phi> or <psi0|A|psi1>")
    e.add_argument("input")
    e.add_argument("--state", default="zero", help="zero | plus | basis:<b> | random:<seed> | file.json")
    e.add_argument("--state1", help="second state for --mode two-state")
    e.add_argument("--mode", choices=("exact", "sampled", "half", "two-state"), default="exact")
    e.add_argument("--exact", action="store_true", help="use exact probabilities in half/two-state modes")
    e.add_argument("--model", choices=("uniform", "weighted"), default="uniform")
    e.add_argument("--shots", type=int, default=8192)
    e.add_argument("--shots-per-group", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--aggregator", choices=AGGREGATORS, default="mean")
    e.add_argument("--allocation", choices=ALLOCATIONS, default="sampled")
    e.add_argument("--check-dense", action="store_true", help="compare against dense <phi|A|phi> (n <= 6)")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", help="desk-scale experiment tables")
    b.add_argument("suite", choices=tuple(BENCH_SUITES))
    b.add_argument("--n-min", type=int, default=2)
    b.add_argument("--n-max", type=int, default=8)
    b.add_argument("--k", default="3", help="comma-separated bandwidths")
    b.add_argument("--d", default="1,5,10,20,50,100", help="comma-separated nonzero counts")
    b.add_argument("--fill", type=float, default=1.0)
    b.add_argument("--kind", choices=("complex", "hermitian", "real_symmetric"), default="complex")
    b.add_argument("--model", choices=("uniform", "weighted"), default="uniform")
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--pauli-max-n", type=int, default=6)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("export-qasm", help="write one OpenQASM 2.0 file per group")
    q.add_argument("groups", help="output of `xbm group`")
    q.add_argument("-o", "--output", required=True, help="output directory")
    q.add_argument("--n", type=int, default=None, help="qubit count for bare group lists")
    q.set_defaults(func=cmd_export_qasm)

    gen = sub.add_parser("gen", help="generate an observable")
    gen.add_argument("kind", choices=("band", "random-sparse", "one-sparse-all-colors", "pauli-string"))
    gen.add_argument("--n", type=int, default=3)
    gen.add_argument("--k", type=int, default=1)
    gen.add_argument("--d", type=int, default=10)
    gen.add_argument("--fill", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--matrix-kind", choices=("complex", "hermitian", "real_symmetric"), default="complex")
    gen.add_argument("--letters")
    gen.add_argument("--coefficient", default="1")
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 0:
        parser.error("--threads must be >= 0")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"xbm: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, ValueError, KeyError, MatrixFormatError, json.JSONDecodeError) as exc:
        print(f"xbm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
