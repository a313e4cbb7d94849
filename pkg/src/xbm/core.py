"""Bit-string helpers, gates, measurement circuits and group keys.

Basis labels are plain Python ints. Qubit 0 is the least-significant bit, so
the label ``0b110`` prints as ``|110>`` with qubit 2 on the left.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional


class Part(str, Enum):
    """Which part of <phi|b><c|phi> a measurement group estimates."""

    RE = "Re"
    IM = "Im"

    def __str__(self) -> str:
        return self.value


class GroupKey(NamedTuple):
    l: int
    s: Part

    def __str__(self) -> str:
        return f"({self.l:#x},{self.s.value})"


def xor_key(b: int, c: int) -> int:
    return b ^ c


def top_set_bit(l: int) -> int:
    """Index of the most significant set bit of ``l``."""
    if l <= 0:
        raise ValueError("top_set_bit is undefined for l = 0 (diagonal group has no pivot qubit)")
    return l.bit_length() - 1


def cnot_cost(b: int, c: int) -> int:
    """Number of CNOTs the measurement circuit for entry (b, c) needs."""
    return max(0, (b ^ c).bit_count() - 1)


def format_label(b: int, n: int) -> str:
    return format(b, f"0{n}b") if n > 0 else ""


GATE_KINDS = ("H", "S", "Sdg", "X", "CNOT")
_ADJOINT = {"H": "H", "S": "Sdg", "Sdg": "S", "X": "X", "CNOT": "CNOT"}


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.target < 0:
            raise ValueError("negative qubit index")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT needs a control qubit")
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")
            if self.control < 0:
                raise ValueError("negative qubit index")
        elif self.control is not None:
            raise ValueError(f"{self.kind} takes no control qubit")

    def adjoint(self) -> "Gate":
        return Gate(_ADJOINT[self.kind], self.target, self.control)

    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)

    def to_json(self) -> dict:
        rec = {"kind": self.kind, "target": self.target}
        if self.control is not None:
            rec["control"] = self.control
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "Gate":
        return cls(rec["kind"], int(rec["target"]), None if rec.get("control") is None else int(rec["control"]))

    def __str__(self) -> str:
        if self.kind == "CNOT":
            return f"CNOT({self.control},{self.target})"
        return f"{self.kind}({self.target})"


@dataclass(frozen=True)
class MeasurementCircuit:
    """Gates in application order: ``gates[0]`` acts on the state first."""

    n: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits()) >= self.n:
                raise ValueError(f"gate {g} out of range for {self.n} qubits")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)

    @property
    def cnot_count(self) -> int:
        return self.count("CNOT")

    def adjoint(self) -> "MeasurementCircuit":
        return MeasurementCircuit(self.n, tuple(g.adjoint() for g in reversed(self.gates)))

    def to_json(self) -> list[dict]:
        return [g.to_json() for g in self.gates]

    @classmethod
    def from_json(cls, n: int, recs: list[dict]) -> "MeasurementCircuit":
        return cls(n, tuple(Gate.from_json(r) for r in recs))

    def __str__(self) -> str:
        return " ; ".join(str(g) for g in self.gates) or "I"
