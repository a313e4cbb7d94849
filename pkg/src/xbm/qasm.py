"""OpenQASM 2.0 export of measurement circuits."""
from __future__ import annotations

from pathlib import Path
from typing import Union

from .core import GroupKey, MeasurementCircuit
from .grouping import GroupingResult

_NAMES = {"H": "h", "S": "s", "Sdg": "sdg", "X": "x", "CNOT": "cx"}


def circuit_to_qasm(circuit: MeasurementCircuit) -> str:
    n = circuit.n
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{n}];", f"creg c[{n}];"]
    for g in circuit.gates:
        if g.kind == "CNOT":
            lines.append(f"cx q[{g.control}],q[{g.target}];")
        else:
            lines.append(f"{_NAMES[g.kind]} q[{g.target}];")
    lines += [f"measure q[{j}] -> c[{j}];" for j in range(n)]
    return "\n".join(lines) + "\n"


def qasm_filename(key: GroupKey, n: int) -> str:
    width = max(1, (n + 3) // 4)
    return f"l-{key.l:0{width}x}-{key.s.value}.qasm"


def export_qasm(groups: GroupingResult, outdir: Union[str, Path]) -> list[Path]:
    """Write one file per group; returns the paths in group order."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for g in groups:
        path = outdir / qasm_filename(g.key, groups.n)
        path.write_text(circuit_to_qasm(g.circuit))
        paths.append(path)
    return paths
