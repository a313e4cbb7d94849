"""Sparse observables: storage, file I/O, generators and Pauli decomposition."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

DEFAULT_MAX_QUBITS = 24
DENSE_MAX_QUBITS = 14


class MatrixFormatError(ValueError):
    """Raised for malformed or unsupported matrix input."""


def qubits_for_dimension(dim: int) -> int:
    if dim < 1:
        raise MatrixFormatError(f"matrix dimension must be positive, got {dim}")
    return (dim - 1).bit_length()


class SparseObservable:
    """Coordinate-list complex matrix on ``n`` qubits.

    Duplicate coordinates are summed and entries that end up exactly zero are
    dropped. The coordinate arrays are read-only.
    """

    __slots__ = ("n", "rows", "cols", "values")

    def __init__(self, n: int, rows, cols, values) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.complex128).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have equal length")
        if n < 0:
            raise ValueError("qubit count must be non-negative")
        dim = 1 << n
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim):
            raise ValueError(f"entry index out of range for {n} qubits")
        rows, cols, values = _canonicalize(n, rows, cols, values)
        self._set(n, rows, cols, values)

    def _set(self, n, rows, cols, values) -> None:
        for arr in (rows, cols, values):
            arr.flags.writeable = False
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("SparseObservable is immutable")

    @classmethod
    def _trusted(cls, n: int, rows: np.ndarray, cols: np.ndarray, values: np.ndarray) -> "SparseObservable":
        # caller guarantees unique coordinates and nonzero values
        obj = cls.__new__(cls)
        obj._set(n, np.ascontiguousarray(rows, dtype=np.int64), np.ascontiguousarray(cols, dtype=np.int64),
                 np.ascontiguousarray(values, dtype=np.complex128))
        return obj

    @classmethod
    def from_entries(cls, n: int, entries: Iterable[tuple[int, int, complex]]) -> "SparseObservable":
        entries = list(entries)
        if not entries:
            return cls(n, [], [], [])
        r, c, v = zip(*entries)
        return cls(n, r, c, v)

    @classmethod
    def from_dense(cls, matrix) -> "SparseObservable":
        m = np.asarray(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("dense matrix must be square")
        n = qubits_for_dimension(m.shape[0])
        r, c = np.nonzero(m)
        return cls(n, r, c, m[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseObservable":
        idx = np.arange(1 << n, dtype=np.int64)
        return cls._trusted(n, idx, idx.copy(), np.ones(idx.size, dtype=np.complex128))

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.nnz

    @property
    def entries(self) -> list[tuple[int, int, complex]]:
        return list(self.iter_entries())

    def iter_entries(self) -> Iterator[tuple[int, int, complex]]:
        for r, c, v in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
            yield r, c, v

    def to_dense(self) -> np.ndarray:
        if self.n > DENSE_MAX_QUBITS:
            raise ValueError(f"refusing to densify a {self.n}-qubit observable")
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        out[self.rows, self.cols] = self.values
        return out

    def adjoint(self) -> "SparseObservable":
        return SparseObservable._trusted(self.n, self.cols.copy(), self.rows.copy(), np.conj(self.values))

    def is_hermitian(self, atol: float = 0.0) -> bool:
        a = _coord_dict(self)
        for (r, c), v in a.items():
            w = a.get((c, r), 0.0)
            if abs(v - np.conj(w)) > atol:
                return False
        return True

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseObservable):
            return NotImplemented
        return self.n == other.n and _coord_dict(self) == _coord_dict(other)

    def __repr__(self) -> str:
        return f"SparseObservable(n={self.n}, nnz={self.nnz})"

    # JSON interchange: {"n": int, "entries": [[row, col, re, im], ...]}
    def to_json(self) -> dict:
        return {
            "n": self.n,
            "entries": [[r, c, float(v.real), float(v.imag)] for r, c, v in self.iter_entries()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SparseObservable":
        try:
            n = int(data["n"])
            ent = data["entries"]
        except (KeyError, TypeError) as exc:
            raise MatrixFormatError(f"observable JSON needs 'n' and 'entries': {exc}") from exc
        if not ent:
            return cls(n, [], [], [])
        arr = np.asarray(ent, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise MatrixFormatError("each observable entry must be [row, col, re, im]")
        rows = arr[:, 0].astype(np.int64)
        cols = arr[:, 1].astype(np.int64)
        if np.any(rows != arr[:, 0]) or np.any(cols != arr[:, 1]):
            raise MatrixFormatError("row/col indices must be integers")
        try:
            return cls(n, rows, cols, arr[:, 2] + 1j * arr[:, 3])
        except ValueError as exc:
            raise MatrixFormatError(str(exc)) from exc


def _coord_dict(a: SparseObservable) -> dict:
    return {(r, c): v for r, c, v in a.iter_entries()}


def _canonicalize(n, rows, cols, values):
    if rows.size == 0:
        return rows, cols, values
    key = (rows << n) | cols if 2 * n <= 62 else None
    if key is not None:
        order = np.argsort(key, kind="stable")
        skey = key[order]
        if skey.size > 1 and not np.any(skey[1:] == skey[:-1]):
            keep = values != 0
            if keep.all():
                return rows, cols, values
            return rows[keep], cols[keep], values[keep]
        starts = np.flatnonzero(np.concatenate(([True], skey[1:] != skey[:-1])))
        summed = np.add.reduceat(values[order], starts)
        r = rows[order][starts]
        c = cols[order][starts]
    else:
        acc: dict = {}
        for rr, cc, vv in zip(rows.tolist(), cols.tolist(), values.tolist()):
            acc[(rr, cc)] = acc.get((rr, cc), 0) + vv
        r = np.array([k[0] for k in acc], dtype=np.int64)
        c = np.array([k[1] for k in acc], dtype=np.int64)
        summed = np.array(list(acc.values()), dtype=np.complex128)
    keep = summed != 0
    return r[keep], c[keep], summed[keep]


@dataclass(frozen=True)
class MatrixStats:
    nnz: int
    bandwidth: int
    key_set: frozenset
    max_abs: float
    trace_sq: float
    abs_sum: float
    is_hermitian: bool

    def to_json(self) -> dict:
        return {
            "nnz": self.nnz,
            "bandwidth": self.bandwidth,
            "n_keys": len(self.key_set),
            "max_abs": self.max_abs,
            "trace_sq": self.trace_sq,
            "abs_sum": self.abs_sum,
            "is_hermitian": self.is_hermitian,
        }


def matrix_stats(a: SparseObservable) -> MatrixStats:
    """Structural statistics; ``trace_sq`` is tr(A^dagger A)."""
    if a.nnz == 0:
        return MatrixStats(0, 0, frozenset(), 0.0, 0.0, 0.0, True)
    mag = np.abs(a.values)
    keys = np.unique(a.rows ^ a.cols)
    return MatrixStats(
        nnz=a.nnz,
        bandwidth=int(np.max(np.abs(a.rows - a.cols))),
        key_set=frozenset(keys.tolist()),
        max_abs=float(mag.max()),
        trace_sq=float(np.sum(mag**2)),
        abs_sum=float(mag.sum()),
        is_hermitian=_is_hermitian_fast(a),
    )


def _is_hermitian_fast(a: SparseObservable) -> bool:
    if 2 * a.n > 62:
        return a.is_hermitian()
    fwd = (a.rows << a.n) | a.cols
    bwd = (a.cols << a.n) | a.rows
    of, ob = np.argsort(fwd), np.argsort(bwd)
    if not np.array_equal(fwd[of], bwd[ob]):
        return False
    return bool(np.array_equal(a.values[of], np.conj(a.values[ob])))


# ---------------------------------------------------------------------------
# Matrix Market


def load_matrix_market(path: Union[str, Path], max_qubits: int = DEFAULT_MAX_QUBITS) -> SparseObservable:
    """Read a coordinate-format ``.mtx`` file.

    Supports real/integer/complex/pattern fields and general/symmetric/
    skew-symmetric/hermitian symmetry. Matrices whose dimension is not a power
    of two are padded with implicit zeros up to the next one.
    """
    path = Path(path)
    with path.open("r") as fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
            raise MatrixFormatError(f"{path}: missing %%MatrixMarket header")
        obj, fmt, field, symmetry = (p.lower() for p in parts[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixFormatError(f"{path}: only 'matrix coordinate' files are supported")
        if field not in ("real", "integer", "complex", "pattern"):
            raise MatrixFormatError(f"{path}: unsupported field {field!r}")
        if symmetry not in ("general", "symmetric", "skew-symmetric", "hermitian"):
            raise MatrixFormatError(f"{path}: unsupported symmetry {symmetry!r}")
        if symmetry == "hermitian" and field != "complex":
            raise MatrixFormatError(f"{path}: hermitian symmetry requires a complex field")

        size_line = _next_data_line(fh)
        if size_line is None:
            raise MatrixFormatError(f"{path}: missing size line")
        try:
            nrows, ncols, nnz = (int(x) for x in size_line.split())
        except ValueError as exc:
            raise MatrixFormatError(f"{path}: bad size line {size_line!r}") from exc
        if nrows != ncols:
            raise MatrixFormatError(f"{path}: matrix is not square ({nrows}x{ncols})")
        n = qubits_for_dimension(nrows)
        if n > max_qubits:
            raise MatrixFormatError(f"{path}: dimension {nrows} needs {n} qubits, above the limit {max_qubits}")

        width = {"pattern": 2, "real": 3, "integer": 3, "complex": 4}[field]
        body = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("%")]
    if len(body) != nnz:
        raise MatrixFormatError(f"{path}: expected {nnz} entries, found {len(body)}")
    if nnz == 0:
        return SparseObservable(n, [], [], [])
    try:
        data = np.array([ln.split() for ln in body], dtype=float)
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: malformed entry line") from exc
    if data.ndim != 2 or data.shape[1] != width:
        raise MatrixFormatError(f"{path}: each entry needs {width} fields for field type {field!r}")

    rows = data[:, 0].astype(np.int64) - 1
    cols = data[:, 1].astype(np.int64) - 1
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= nrows or cols.max() >= ncols:
        raise MatrixFormatError(f"{path}: entry index out of range")
    if field == "pattern":
        vals = np.ones(rows.size, dtype=np.complex128)
    elif field == "complex":
        vals = data[:, 2] + 1j * data[:, 3]
    else:
        vals = data[:, 2].astype(np.complex128)

    if symmetry != "general":
        off = rows != cols
        mirror = vals[off]
        if symmetry == "skew-symmetric":
            mirror = -mirror
        elif symmetry == "hermitian":
            mirror = np.conj(mirror)
        rows, cols, vals = (
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, mirror)),
        )
    return SparseObservable(n, rows, cols, vals)


def _next_data_line(fh) -> Optional[str]:
    for line in fh:
        s = line.strip()
        if s and not s.startswith("%"):
            return s
    return None


def save_matrix_market(a: SparseObservable, path: Union[str, Path]) -> None:
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate complex general\n")
        fh.write(f"{a.dim} {a.dim} {a.nnz}\n")
        for r, c, v in a.iter_entries():
            fh.write(f"{r + 1} {c + 1} {v.real!r} {v.imag!r}\n")


def load_observable(path: Union[str, Path], max_qubits: int = DEFAULT_MAX_QUBITS) -> SparseObservable:
    """Load ``.mtx`` (Matrix Market) or JSON observable files."""
    path = Path(path)
    if path.suffix.lower() == ".mtx":
        return load_matrix_market(path, max_qubits=max_qubits)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(data, dict) and "observable" in data:
        data = data["observable"]
    obs = SparseObservable.from_json(data)
    if obs.n > max_qubits:
        raise MatrixFormatError(f"{path}: {obs.n} qubits is above the limit {max_qubits}")
    return obs


def save_observable(a: SparseObservable, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(a.to_json()))


# ---------------------------------------------------------------------------
# Generators

VALUE_RANGE = 100.0


def _random_values(rng: np.random.Generator, size: int, kind: str) -> np.ndarray:
    re = rng.uniform(-VALUE_RANGE, VALUE_RANGE, size)
    if kind == "real_symmetric":
        return re.astype(np.complex128)
    im = rng.uniform(-VALUE_RANGE, VALUE_RANGE, size)
    return re + 1j * im


def _symmetrize(n: int, rows, cols, vals, kind: str) -> SparseObservable:
    # keep the upper triangle (incl. diagonal) and mirror it
    upper = rows <= cols
    r, c, v = rows[upper], cols[upper], vals[upper]
    diag = r == c
    if kind == "hermitian":
        v = np.where(diag, v.real + 0j, v)
        mirror = np.conj(v[~diag])
    else:
        mirror = v[~diag]
    return SparseObservable._trusted(
        n, np.concatenate((r, c[~diag])), np.concatenate((c, r[~diag])), np.concatenate((v, mirror))
    )


def band_positions(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """All (row, col) with |row - col| <= k, in row-major order."""
    dim = 1 << n
    if not 0 <= k < dim:
        raise ValueError(f"bandwidth k={k} must satisfy 0 <= k < 2^n = {dim}")
    offsets = np.arange(-k, k + 1, dtype=np.int64)
    rows = np.repeat(np.arange(dim, dtype=np.int64), offsets.size)
    cols = rows + np.tile(offsets, dim)
    ok = (cols >= 0) & (cols < dim)
    return rows[ok], cols[ok]


def gen_random_band(
    n: int, k: int, fill: float = 1.0, seed: int = 0, kind: str = "complex"
) -> SparseObservable:
    """Random band matrix of bandwidth ``k``.

    Band positions are visited in row-major order; each is kept when a
    seeded uniform draw is below ``fill``, then values are drawn with real
    and imaginary parts uniform in [-100, 100]. ``kind`` is ``"complex"``,
    ``"hermitian"`` or ``"real_symmetric"``; the symmetric kinds draw the
    upper triangle and mirror it.
    """
    if not 0 < fill <= 1:
        raise ValueError("fill must lie in (0, 1]")
    if kind not in ("complex", "hermitian", "real_symmetric"):
        raise ValueError(f"unknown matrix kind {kind!r}")
    rng = np.random.default_rng(seed)
    rows, cols = band_positions(n, k)
    if fill < 1:
        keep = rng.random(rows.size) < fill
        rows, cols = rows[keep], cols[keep]
    vals = _random_values(rng, rows.size, kind)
    if kind != "complex":
        return _symmetrize(n, rows, cols, vals, kind)
    nz = vals != 0
    return SparseObservable._trusted(n, rows[nz], cols[nz], vals[nz])


def gen_random_sparse(n: int, d: int, seed: int = 0, kind: str = "complex") -> SparseObservable:
    """``d`` nonzeros placed uniformly at random among the 4^n positions.

    With ``kind="hermitian"`` the result is (B + B^dagger) / 2 for such a B,
    so it may hold up to 2d entries.
    """
    dim = 1 << n
    if not 0 <= d <= dim * dim:
        raise ValueError(f"d={d} out of range for {n} qubits")
    if kind not in ("complex", "hermitian"):
        raise ValueError(f"unknown matrix kind {kind!r}")
    rng = np.random.default_rng(seed)
    flat = rng.choice(dim * dim, size=d, replace=False).astype(np.int64)
    rows, cols = flat // dim, flat % dim
    vals = _random_values(rng, d, "complex")
    if kind == "hermitian":
        return SparseObservable(
            n, np.concatenate((rows, cols)), np.concatenate((cols, rows)),
            np.concatenate((vals, np.conj(vals))) / 2,
        )
    return SparseObservable(n, rows, cols, vals)


_ALL_COLORS_SEED = (0, 3, 1, 2)


def one_sparse_all_colors_permutation(n: int) -> list[int]:
    """Column index of the single nonzero in each row.

    Starts from a hand-made 4x4 pattern and doubles: the top half of the
    rows moves to the top-left block, the bottom half to the bottom-right
    block, and both are copied (shifted by half a block) into the
    off-diagonal blocks.
    """
    if n < 2:
        raise ValueError("the all-colors construction starts at n = 2")
    perm = list(_ALL_COLORS_SEED)
    for _ in range(n - 2):
        size = len(perm)
        half = size // 2
        nxt = [0] * (2 * size)
        for b in range(half):
            nxt[b] = perm[b]
            nxt[b + half] = perm[b] + size
        for b in range(half, size):
            nxt[b + size] = perm[b] + size
            nxt[b + half] = perm[b]
        perm = nxt
    return perm


def gen_one_sparse_all_colors(n: int) -> SparseObservable:
    """1-sparse 0/1 matrix whose entries hit every XOR key once."""
    perm = one_sparse_all_colors_permutation(n)
    rows = np.arange(1 << n, dtype=np.int64)
    return SparseObservable._trusted(n, rows, np.asarray(perm, dtype=np.int64), np.ones(rows.size, dtype=np.complex128))


# ---------------------------------------------------------------------------
# Pauli strings

_LETTERS = "IXYZ"
_PAULI_DENSE = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of Pauli letters; ``letters[0]`` acts on qubit n-1."""

    letters: str
    coefficient: complex = 1.0

    def __post_init__(self) -> None:
        letters = self.letters.upper()
        if any(ch not in _LETTERS for ch in letters):
            raise ValueError(f"invalid Pauli string {self.letters!r}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def n(self) -> int:
        return len(self.letters)

    def letter(self, qubit: int) -> str:
        return self.letters[self.n - 1 - qubit]

    @property
    def x_bits(self) -> int:
        """Bit j set where qubit j carries X or Y (the flip pattern)."""
        return sum(1 << j for j in range(self.n) if self.letter(j) in "XY")

    @property
    def z_bits(self) -> int:
        return sum(1 << j for j in range(self.n) if self.letter(j) in "YZ")

    @property
    def is_diagonal(self) -> bool:
        return self.x_bits == 0

    def to_dense(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=np.complex128)
        for ch in self.letters:
            out = np.kron(out, _PAULI_DENSE[ch])
        return self.coefficient * out

    def __str__(self) -> str:
        return f"{self.coefficient:+.6g}*{self.letters}"


def pauli_string_observable(p: PauliString) -> SparseObservable:
    """Matrix of ``p``: entries (b, b xor x) for every basis label b."""
    n, x, z = p.n, p.x_bits, p.z_bits
    b = np.arange(1 << n, dtype=np.int64)
    c = b ^ x
    # <b| i^{|x&z|} X^x Z^z |c> = i^{|x&z|} (-1)^{z.c}
    parity = _popcount(c & z) & 1
    phase = 1j ** ((x & z).bit_count() % 4)
    vals = p.coefficient * phase * np.where(parity == 1, -1.0, 1.0)
    return SparseObservable._trusted(n, b, c, vals.astype(np.complex128))


def _popcount(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(arr).astype(np.int64)
    out = np.zeros(arr.shape, dtype=np.int64)
    while np.any(arr):
        out += (arr & np.uint64(1)).astype(np.int64)
        arr = arr >> np.uint64(1)
    return out


def _letters_from_bits(n: int, x: int, z: int) -> str:
    chars = []
    for j in range(n - 1, -1, -1):
        xb, zb = (x >> j) & 1, (z >> j) & 1
        chars.append("IZXY"[2 * xb + zb])
    return "".join(chars)


def _walsh_hadamard(f: np.ndarray) -> np.ndarray:
    """Unnormalised transform F[z] = sum_b f[b] (-1)^{popcount(z & b)}."""
    f = f.copy()
    size = f.size
    h = 1
    while h < size:
        v = f.reshape(-1, 2, h)
        a, b = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = a + b
        v[:, 1, :] = a - b
        h *= 2
    return f


def pauli_decompose(a: SparseObservable, rtol: float = 1e-12) -> list[PauliString]:
    """Expand ``a`` as sum_i c_i P_i with c_i = Tr(P_i a) / 2^n.

    Entries sharing the flip pattern x = row xor col feed one Walsh-Hadamard
    transform, which yields every coefficient with that X/Y pattern.
    Coefficients below ``rtol * max|a|`` are treated as zero (round-off).
    """
    n = a.n
    if n > 16:
        raise ValueError("Pauli decomposition beyond 16 qubits is not supported")
    if a.nnz == 0:
        return []
    dim = 1 << n
    cutoff = rtol * float(np.abs(a.values).max())
    keys = a.rows ^ a.cols
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    starts = np.flatnonzero(np.concatenate(([True], skeys[1:] != skeys[:-1])))
    ends = np.append(starts[1:], skeys.size)
    z_all = np.arange(dim, dtype=np.int64)
    out: list[PauliString] = []
    for s, e in zip(starts, ends):
        x = int(skeys[s])
        sel = order[s:e]
        f = np.zeros(dim, dtype=np.complex128)
        f[a.rows[sel]] = a.values[sel]
        coeffs = _walsh_hadamard(f) / dim
        phases = (1j) ** (_popcount(z_all & x) % 4)
        coeffs = coeffs * phases
        for z in np.flatnonzero(np.abs(coeffs) > cutoff).tolist():
            out.append(PauliString(_letters_from_bits(n, x, z), complex(coeffs[z])))
    return out


def reconstruct(n: int, strings: Iterable[PauliString]) -> SparseObservable:
    parts = [pauli_string_observable(p) for p in strings]
    if not parts:
        return SparseObservable(n, [], [], [])
    return SparseObservable(
        n,
        np.concatenate([p.rows for p in parts]),
        np.concatenate([p.cols for p in parts]),
        np.concatenate([p.values for p in parts]),
    )
