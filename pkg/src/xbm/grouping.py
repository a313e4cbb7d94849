"""Term grouping by XOR key, measurement-circuit synthesis and count predictors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np

from .core import Gate, GroupKey, MeasurementCircuit, Part, top_set_bit
from .matrix import PauliString, SparseObservable

# the vectorised path packs (l, b) into one int64
_PACKED_MAX_QUBITS = 31


class OutcomeTable:
    """Sparse map from measured bit-string b to outcome coefficient alpha(l, s, b)."""

    __slots__ = ("labels", "values")

    def __init__(self, labels, values) -> None:
        labels = np.asarray(labels, dtype=np.int64)
        values = np.asarray(values, dtype=np.complex128)
        order = np.argsort(labels, kind="stable")
        self.labels = labels[order]
        self.values = values[order]
        self.labels.flags.writeable = False
        self.values.flags.writeable = False

    @classmethod
    def from_dict(cls, table: dict) -> "OutcomeTable":
        items = sorted(table.items())
        return cls([b for b, _ in items], [v for _, v in items])

    def __len__(self) -> int:
        return int(self.labels.size)

    def __contains__(self, b: int) -> bool:
        i = np.searchsorted(self.labels, b)
        return bool(i < self.labels.size and self.labels[i] == b)

    def __getitem__(self, b: int) -> complex:
        i = np.searchsorted(self.labels, b)
        if i < self.labels.size and self.labels[i] == b:
            return complex(self.values[i])
        raise KeyError(b)

    def get(self, b: int, default: complex = 0.0) -> complex:
        try:
            return self[b]
        except KeyError:
            return default

    def lookup(self, bs: np.ndarray) -> np.ndarray:
        """Vectorised alpha lookup; labels absent from the table map to 0."""
        bs = np.asarray(bs, dtype=np.int64)
        if self.labels.size == 0:
            return np.zeros(bs.shape, dtype=np.complex128)
        idx = np.minimum(np.searchsorted(self.labels, bs), self.labels.size - 1)
        hit = self.labels[idx] == bs
        return np.where(hit, self.values[idx], 0.0)

    def items(self) -> Iterator[tuple[int, complex]]:
        return zip(self.labels.tolist(), self.values.tolist())

    def as_dict(self) -> dict:
        return dict(self.items())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutcomeTable):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"OutcomeTable(size={len(self)})"


@dataclass(frozen=True)
class MeasurementGroup:
    key: GroupKey
    circuit: MeasurementCircuit
    outcomes: OutcomeTable

    def to_json(self) -> dict:
        return {
            "l": self.key.l,
            "s": self.key.s.value,
            "circuit": self.circuit.to_json(),
            "outcomes": [[b, v.real, v.imag] for b, v in self.outcomes.items()],
        }


@dataclass(frozen=True)
class GroupingResult:
    n: int
    groups: tuple[MeasurementGroup, ...]

    @property
    def m(self) -> int:
        return len(self.groups)

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def keys(self) -> list[GroupKey]:
        return [g.key for g in self.groups]

    def get(self, key: GroupKey) -> Optional[MeasurementGroup]:
        return self._index().get(key)

    def _index(self) -> dict:
        idx = self.__dict__.get("_by_key")
        if idx is None:
            idx = {g.key: g for g in self.groups}
            object.__setattr__(self, "_by_key", idx)
        return idx

    def real_part(self) -> "GroupingResult":
        """Only the Re groups (the diagonal group is one of them)."""
        return GroupingResult(self.n, tuple(g for g in self.groups if g.key.s is Part.RE))

    def to_json(self) -> list[dict]:
        return [g.to_json() for g in self.groups]

    @classmethod
    def from_json(cls, n: int, records: list[dict]) -> "GroupingResult":
        groups = []
        for rec in records:
            key = GroupKey(int(rec["l"]), Part(rec["s"]))
            circuit = MeasurementCircuit.from_json(n, rec["circuit"])
            outs = rec["outcomes"]
            table = OutcomeTable([int(o[0]) for o in outs], [complex(o[1], o[2]) for o in outs])
            groups.append(MeasurementGroup(key, circuit, table))
        return cls(n, tuple(groups))


@lru_cache(maxsize=4096)
def build_measurement_circuit(l: int, s: Part, n: int) -> MeasurementCircuit:
    """Measurement circuit for key ``l`` and part ``s``, in application order.

    Re: CNOT(j0, k) for each other set bit k of l, then H(j0).
    Im: S^dagger(j0) first, then the Re circuit. j0 is the top set bit.
    """
    s = Part(s)
    if not 0 <= l < (1 << n):
        raise ValueError(f"key {l} out of range for {n} qubits")
    if l == 0:
        if s is Part.IM:
            raise ValueError("there is no imaginary diagonal group")
        return MeasurementCircuit(n, ())
    j0 = top_set_bit(l)
    gates = [Gate("Sdg", j0)] if s is Part.IM else []
    gates += [Gate("CNOT", k, control=j0) for k in range(n) if (l >> k) & 1 and k != j0]
    gates.append(Gate("H", j0))
    return MeasurementCircuit(n, tuple(gates))


def _make_groups(n: int, tables: list[tuple[GroupKey, np.ndarray, np.ndarray]]) -> GroupingResult:
    tables.sort(key=lambda t: (t[0].l, t[0].s is Part.IM))
    groups = tuple(
        MeasurementGroup(key, build_measurement_circuit(key.l, key.s, n), OutcomeTable(labels, vals))
        for key, labels, vals in tables
    )
    return GroupingResult(n, groups)


def group_terms(a: SparseObservable) -> GroupingResult:
    """Assemble the nonzero entries of ``a`` into XOR-keyed measurement groups.

    For b < c the entry A_bc adds +A/2 at b and -A/2 at b xor 2^j0 to the Re
    table of key l = b xor c, and +iA/2 / -iA/2 to the Im table; b > c is
    handled through the mirrored pair with the Im signs flipped. Outcome
    entries and whole groups that cancel to exactly zero are dropped.
    """
    if a.n > _PACKED_MAX_QUBITS:
        return group_terms_reference(a)
    n = a.n
    rows, cols, vals = a.rows, a.cols, a.values
    l = rows ^ cols
    diag = l == 0
    off = ~diag

    lo = np.minimum(rows[off], cols[off])
    loff = l[off]
    # frexp gives the exact bit length for ints below 2^53
    pivot = np.left_shift(np.int64(1), np.frexp(loff.astype(np.float64))[1].astype(np.int64) - 1)
    lo_bar = lo ^ pivot
    half = vals[off] * 0.5
    sign = np.where(rows[off] < cols[off], 1.0, -1.0)

    keys = np.concatenate(((loff << n) | lo, (loff << n) | lo_bar, rows[diag]))
    re_part = np.concatenate((half, -half, vals[diag]))
    im_half = 1j * sign * half
    im_part = np.concatenate((im_half, -im_half, np.zeros(int(diag.sum()), dtype=np.complex128)))

    if keys.size == 0:
        return GroupingResult(n, ())
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    starts = np.flatnonzero(np.concatenate(([True], skeys[1:] != skeys[:-1])))
    ukeys = skeys[starts]
    re_sum = np.add.reduceat(re_part[order], starts)
    im_sum = np.add.reduceat(im_part[order], starts)
    ul = ukeys >> n
    ub = ukeys & ((1 << n) - 1)

    tables: list[tuple[GroupKey, np.ndarray, np.ndarray]] = []
    # ukeys are sorted, so each key l occupies one contiguous run
    bounds = np.flatnonzero(np.concatenate(([True], ul[1:] != ul[:-1], [True])))
    for s, e in zip(bounds[:-1], bounds[1:]):
        lval = int(ul[s])
        labels = ub[s:e]
        for part, sums in ((Part.RE, re_sum), (Part.IM, im_sum)):
            if part is Part.IM and lval == 0:
                continue
            chunk = sums[s:e]
            nz = chunk != 0
            if nz.any():
                tables.append((GroupKey(lval, part), labels[nz], chunk[nz]))
    return _make_groups(n, tables)


def group_terms_reference(a: SparseObservable) -> GroupingResult:
    """Entry-by-entry grouping with dictionaries; slow but literal."""
    n = a.n
    acc: dict[GroupKey, dict[int, complex]] = {}

    def add(key: GroupKey, b: int, v: complex) -> None:
        t = acc.setdefault(key, {})
        t[b] = t.get(b, 0) + v

    for b, c, v in a.iter_entries():
        l = b ^ c
        if l == 0:
            add(GroupKey(0, Part.RE), b, v)
            continue
        pivot = 1 << top_set_bit(l)
        re, im = GroupKey(l, Part.RE), GroupKey(l, Part.IM)
        if b < c:
            bb = b ^ pivot
            add(re, b, v / 2)
            add(re, bb, -v / 2)
            add(im, b, 1j * v / 2)
            add(im, bb, -1j * v / 2)
        else:
            cb = c ^ pivot
            add(re, c, v / 2)
            add(re, cb, -v / 2)
            add(im, c, -1j * v / 2)
            add(im, cb, 1j * v / 2)

    tables = []
    for key, t in acc.items():
        items = sorted((b, x) for b, x in t.items() if x != 0)
        if items:
            tables.append((key, np.array([b for b, _ in items], dtype=np.int64),
                           np.array([x for _, x in items], dtype=np.complex128)))
    return _make_groups(n, tables)


def embed_offdiagonal(a: SparseObservable) -> SparseObservable:
    """Block matrix [[0, 2A'], [0, 0]] on n+1 qubits (ancilla is the top qubit)."""
    shift = 1 << a.n
    return SparseObservable._trusted(a.n + 1, a.rows.copy(), a.cols + shift, 2 * a.values)


def outcome_pair(l: int, b: int) -> tuple[int, int, int]:
    """(b', c', w) for outcome ``b`` of key ``l``: the entry pair it measures and its sign bit."""
    if l == 0:
        return b, b, 0
    c = b ^ l
    if b < c:
        return b, c, 0
    pivot = 1 << top_set_bit(l)
    return b ^ pivot, c ^ pivot, 1


# ---------------------------------------------------------------------------
# Count predictors


def ceil_log2(k: int) -> int:
    return (k - 1).bit_length() if k > 0 else 0


def band_color_count(n: int, k: int) -> int:
    """Number of distinct keys b xor c with |b - c| <= k on n qubits."""
    if not 0 <= k < (1 << n):
        raise ValueError(f"bandwidth k={k} must satisfy 0 <= k < 2^n")
    if k == 0:
        return 1
    r = ceil_log2(k)
    return (n - r) * k + (1 << r)


def upper_bound_m(n: int, k: int, has_diagonal: bool = False) -> int:
    """Worst-case number of measurement circuits for bandwidth ``k``.

    With a nonzero diagonal and k > 1 the imaginary diagonal circuit is
    never needed, which saves one.
    """
    if k == 0:
        return 1
    m = 2 * band_color_count(n, k)
    return m - 1 if has_diagonal and k > 1 else m


def pauli_string_count(n: int, k: int, distinct_states: bool = False) -> int:
    """Pauli strings needed to expand a full band of width ``k`` (generic values)."""
    colors = band_color_count(n, k)
    return (1 << (n + 1)) * colors if distinct_states else (1 << n) * colors


def pauli_to_xbm_groups(p: PauliString) -> int:
    """XBM circuits needed for the support of one Pauli string: 1 if diagonal else 2.

    All entries of the string share the key x (its X/Y pattern), so one
    Re and one Im circuit cover it. For a Hermitian multiple of a string one
    of the two parts cancels, and ``group_terms`` will keep only one.
    """
    return 1 if p.x_bits == 0 else 2


def expected_groups(d: int, N: int) -> float:
    """Expected number of distinct XOR keys among ``d`` random positions of an N x N matrix.

    Uses the exact ball-type recursion in integer arithmetic for N <= 64 and
    the equivalent complement formula N (1 - C(N^2 - N, d) / C(N^2, d)) in
    log space above that.
    """
    if N < 1 or not 1 <= d <= N * N:
        raise ValueError(f"need 1 <= d <= N^2, got d={d}, N={N}")
    if N <= 64:
        return float(_expected_groups_exact(d, N))
    if d > N * N - N:
        return float(N)
    return N * -math.expm1(_log_miss_ratio(d, N))


_LOG1P_TERMS_MAX = 1 << 24


def _log_miss_ratio(d: int, N: int) -> float:
    """log of C(N^2 - N, d) / C(N^2, d), the chance that one given key is absent."""
    if d <= _LOG1P_TERMS_MAX:
        i = np.arange(d, dtype=np.float64)
        return float(np.sum(np.log1p(-N / (N * N - i))))
    lg = math.lgamma
    return lg(N * N - N + 1) - lg(N * N - N - d + 1) - lg(N * N + 1) + lg(N * N - d + 1)


@lru_cache(maxsize=256)
def _expected_groups_exact(d: int, N: int) -> Fraction:
    # ways[k]: number of d-subsets whose key set has exactly k elements
    ways = [0] * (min(d, N) + 1)
    total = 0
    for k in range(1, min(d, N) + 1):
        w = math.comb(N, k) * math.comb(k * N, d)
        for i in range(1, k):
            # C(N,k) C(k,i) / C(N,i) == C(N-i, k-i)
            w -= math.comb(N - i, k - i) * ways[i]
        ways[k] = w
        total += k * w
    return Fraction(total, math.comb(N * N, d))
