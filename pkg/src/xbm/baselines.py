"""Pauli-basis reference estimators: one circuit per string, and greedy QWC batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Gate, MeasurementCircuit
from .estimation import EstimationReport, GroupTally
from .matrix import PauliString, SparseObservable, pauli_decompose
from .simulator import Statevector, apply_circuit, probabilities, sample_indices

_CODE = {"I": 0, "Z": 1, "X": 2, "Y": 3}


def basis_rotation(letters: str) -> MeasurementCircuit:
    """Single-qubit rotations taking each letter's eigenbasis to Z (X: H, Y: Sdg then H)."""
    n = len(letters)
    gates = []
    for q in range(n):
        ch = letters[n - 1 - q]
        if ch == "X":
            gates.append(Gate("H", q))
        elif ch == "Y":
            gates += [Gate("Sdg", q), Gate("H", q)]
    return MeasurementCircuit(n, tuple(gates))


def support_mask(p: PauliString) -> int:
    return sum(1 << q for q in range(p.n) if p.letter(q) != "I")


def parity_signs(n: int, mask: int) -> np.ndarray:
    """(-1)^{popcount(b & mask)} for every basis label b."""
    b = np.arange(1 << n, dtype=np.int64)
    bits = np.zeros(b.shape, dtype=np.int64)
    for q in range(n):
        if (mask >> q) & 1:
            bits ^= (b >> q) & 1
    return 1.0 - 2.0 * bits


@dataclass(frozen=True)
class PauliGroup:
    members: tuple[PauliString, ...]
    basis_rotation: MeasurementCircuit

    @property
    def basis(self) -> str:
        n = self.basis_rotation.n
        out = ["I"] * n
        for p in self.members:
            for i, ch in enumerate(p.letters):
                if ch != "I":
                    out[i] = ch
        return "".join(out)

    def to_json(self) -> dict:
        return {
            "basis": self.basis,
            "members": [{"letters": p.letters, "coefficient": [p.coefficient.real, p.coefficient.imag]}
                        for p in self.members],
            "circuit": self.basis_rotation.to_json(),
        }


def qubitwise_commute(p: PauliString, q: PauliString) -> bool:
    return all(a == b or a == "I" or b == "I" for a, b in zip(p.letters, q.letters))


def qwc_group(strings: Sequence[PauliString]) -> list[PauliGroup]:
    """Greedy first-fit grouping under qubit-wise commutativity, largest |c| first."""
    if not strings:
        return []
    n = strings[0].n
    order = sorted(range(len(strings)), key=lambda i: -abs(strings[i].coefficient))
    codes = np.array([[_CODE[ch] for ch in strings[i].letters] for i in order], dtype=np.int8).reshape(len(order), n)
    bases = np.zeros((0, n), dtype=np.int8)
    members: list[list[int]] = []
    for row, idx in zip(codes, order):
        if len(members):
            clash = (bases != row) & (bases != 0) & (row != 0)
            ok = np.flatnonzero(~clash.any(axis=1))
        else:
            ok = ()
        if len(ok):
            gi = int(ok[0])
            bases[gi] = np.where(row != 0, row, bases[gi])
            members[gi].append(idx)
        else:
            bases = np.vstack((bases, row[None, :]))
            members.append([idx])
    groups = []
    for basis, idxs in zip(bases, members):
        letters = "".join("IZXY"[c] for c in basis)
        groups.append(PauliGroup(tuple(strings[i] for i in idxs), basis_rotation(letters)))
    return groups


def _measure(
    groups: list[PauliGroup], phi: Statevector, shots: Optional[int], seed: int, mode: str, config: dict
) -> EstimationReport:
    """Shared back end: each group is one circuit; every member is read from its samples."""
    n = phi.n
    total = 0j
    tallies = []
    var_sum = 0.0
    shots_total = 0
    for gi, grp in enumerate(groups):
        probs = probabilities(apply_circuit(phi, grp.basis_rotation))
        signs = [parity_signs(n, support_mask(p)) for p in grp.members]
        coeffs = np.array([p.coefficient for p in grp.members])
        # per-outcome value of sum_i c_i P_i in the rotated basis
        table = np.sum(coeffs[:, None] * np.array(signs), axis=0)
        if shots is None:
            part = complex(np.dot(table, probs))
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, gi]))
            x = table[sample_indices(probs, shots, rng)]
            part = complex(x.mean())
            var_sum += float(np.mean(np.abs(x - x.mean()) ** 2)) / shots
            shots_total += shots
        total += part
        tallies.append(GroupTally(None, 0 if shots is None else shots, part))
    variance = shots_total * var_sum if shots is not None else 0.0
    return EstimationReport(
        total, shots_total, tuple(tallies), variance, 0.0, 0.0, 0.0, False,
        "exact" if shots is None else "mean", mode, "pauli", len(groups), config,
    )


def naive_pauli_estimate(
    a: SparseObservable,
    phi: Statevector,
    shots_per_string: Optional[int] = None,
    seed: int = 0,
    config: Optional[dict] = None,
) -> EstimationReport:
    """One circuit per Pauli string; exact when ``shots_per_string`` is None."""
    if a.n != phi.n:
        raise ValueError("dimension mismatch between observable and state")
    strings = pauli_decompose(a)
    groups = [PauliGroup((p,), basis_rotation(p.letters)) for p in strings]
    return _measure(groups, phi, shots_per_string, seed, "naive-pauli", dict(config or {}))


def qwc_estimate(
    a: SparseObservable,
    phi: Statevector,
    shots_per_group: Optional[int] = None,
    seed: int = 0,
    config: Optional[dict] = None,
) -> EstimationReport:
    if a.n != phi.n:
        raise ValueError("dimension mismatch between observable and state")
    groups = qwc_group(pauli_decompose(a))
    return _measure(groups, phi, shots_per_group, seed, "qwc", dict(config or {}))


def pauli_counts(a: SparseObservable) -> tuple[int, int]:
    """(string count, QWC group count) for ``a``."""
    strings = pauli_decompose(a)
    return len(strings), len(qwc_group(strings))


def expectation_pauli(p: PauliString, phi: Statevector) -> complex:
    """<phi|P|phi> by rotation and parity (coefficient included)."""
    probs = probabilities(apply_circuit(phi, basis_rotation(p.letters)))
    return p.coefficient * complex(np.dot(parity_signs(p.n, support_mask(p)), probs))

