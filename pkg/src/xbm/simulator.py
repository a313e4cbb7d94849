"""Dense statevector simulator for the H/S/Sdg/X/CNOT gate set."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Gate, GroupKey, MeasurementCircuit

NORM_ATOL = 1e-10

_SQRT1_2 = np.sqrt(0.5)
_SINGLE = {
    "H": np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=np.complex128),
    "S": np.array([[1, 0], [0, 1j]], dtype=np.complex128),
    "Sdg": np.array([[1, 0], [0, -1j]], dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
}


class Statevector:
    """Immutable vector of 2**n amplitudes; amplitude index b is the basis label."""

    __slots__ = ("n", "data")

    def __init__(self, data, normalize_check: bool = True) -> None:
        arr = np.array(data, dtype=np.complex128).reshape(-1)
        n = int(arr.size).bit_length() - 1
        if arr.size == 0 or (1 << n) != arr.size:
            raise ValueError(f"statevector length {arr.size} is not a power of two")
        if normalize_check and abs(np.vdot(arr, arr).real - 1.0) > NORM_ATOL:
            raise ValueError("statevector is not normalized")
        arr.flags.writeable = False
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Statevector is immutable")

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Statevector":
        return cls(arr, normalize_check=False)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def inner(self, other: "Statevector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.data, other.data))

    def fidelity(self, other: "Statevector") -> float:
        return abs(self.inner(other))

    def equiv(self, other: "Statevector", atol: float = 1e-10) -> bool:
        """Equal up to a global phase."""
        return self.n == other.n and abs(self.fidelity(other) - 1.0) <= atol

    def to_json(self) -> list[list[float]]:
        return [[z.real, z.imag] for z in self.data.tolist()]

    @classmethod
    def from_json(cls, pairs) -> "Statevector":
        return cls([complex(re, im) for re, im in pairs])

    def __repr__(self) -> str:
        return f"Statevector(n={self.n})"


@dataclass(frozen=True)
class ShotRecord:
    key: Optional[GroupKey]
    bitstring: int
    count: int


def basis_state(n: int, b: int) -> Statevector:
    if not 0 <= b < (1 << n):
        raise ValueError(f"basis label {b} out of range for {n} qubits")
    v = np.zeros(1 << n, dtype=np.complex128)
    v[b] = 1.0
    return Statevector._wrap(v)


def product_state(qubits: Sequence) -> Statevector:
    """Tensor product of single-qubit states; ``qubits[0]`` is qubit 0."""
    v = np.ones(1, dtype=np.complex128)
    for q in qubits:
        q = np.asarray(q, dtype=np.complex128)
        q = q / np.linalg.norm(q)
        v = np.kron(q, v)
    return Statevector(v)


def _rotation(axis: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])


def rotated_qubit(theta_x: float, theta_y: float, theta_z: float) -> np.ndarray:
    """Rx(theta_x) Ry(theta_y) Rz(theta_z) |0>."""
    q = np.array([1, 0], dtype=np.complex128)
    return _rotation("x", theta_x) @ _rotation("y", theta_y) @ _rotation("z", theta_z) @ q


def random_state(n: int, seed: int) -> Statevector:
    """Random product state with per-qubit Euler angles uniform in [0, 2 pi)."""
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2 * np.pi, size=(n, 3))
    return product_state([rotated_qubit(*row) for row in angles])


def random_dense_state(n: int, seed: int) -> Statevector:
    """Haar-like random state (normalized complex Gaussian)."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return Statevector(v / np.linalg.norm(v))


def _check_qubits(n: int, g: Gate) -> None:
    if max(g.qubits()) >= n:
        raise ValueError(f"gate {g} out of range for {n} qubits")


def _apply_inplace(psi: np.ndarray, n: int, g: Gate) -> None:
    # qubit j lives on axis n-1-j of the (2,)*n view
    t = psi.reshape((1 << (n - 1 - g.target), 2, 1 << g.target))
    if g.kind == "CNOT":
        c, tq = g.control, g.target
        view = psi.reshape((2,) * n)
        idx = [slice(None)] * n
        idx[n - 1 - c] = 1
        sub = view[tuple(idx)]
        # target axis shifts down by one if it sits after the removed control axis
        ax = n - 1 - tq if tq > c else n - 2 - tq
        sub[...] = np.flip(sub, axis=ax).copy()
        return
    if g.kind == "X":
        t[...] = t[:, ::-1, :].copy()
    elif g.kind == "S":
        t[:, 1, :] *= 1j
    elif g.kind == "Sdg":
        t[:, 1, :] *= -1j
    else:
        a0 = t[:, 0, :].copy()
        a1 = t[:, 1, :]
        t[:, 0, :] = (a0 + a1) * _SQRT1_2
        t[:, 1, :] = (a0 - a1) * _SQRT1_2


def apply_gate(state: Statevector, g: Gate) -> Statevector:
    _check_qubits(state.n, g)
    psi = state.data.copy()
    _apply_inplace(psi, state.n, g)
    return Statevector._wrap(psi)


def apply_circuit(state: Statevector, circuit: MeasurementCircuit) -> Statevector:
    if circuit.n != state.n:
        raise ValueError(f"circuit acts on {circuit.n} qubits, state has {state.n}")
    psi = state.data.copy()
    for g in circuit.gates:
        _apply_inplace(psi, state.n, g)
    return Statevector._wrap(psi)


def probabilities(state: Statevector) -> np.ndarray:
    return np.abs(state.data) ** 2


def sample_indices(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of basis labels."""
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    out = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.minimum(out, probs.size - 1)


def sample(state: Statevector, shots: int, seed, key: Optional[GroupKey] = None) -> list[ShotRecord]:
    """Draw ``shots`` bit-strings; records are sorted by bit-string."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = sample_indices(probabilities(state), shots, rng)
    labels, counts = np.unique(draws, return_counts=True)
    return [ShotRecord(key, int(b), int(c)) for b, c in zip(labels, counts)]


def prepare_bipartite(psi0: Statevector, psi1: Statevector) -> Statevector:
    """(|0>|psi0> + |1>|psi1>)/sqrt(2) with the ancilla as the top qubit."""
    if psi0.n != psi1.n:
        raise ValueError(f"dimension mismatch: {psi0.n} vs {psi1.n} qubits")
    return Statevector(np.concatenate((psi0.data, psi1.data)) * _SQRT1_2)
