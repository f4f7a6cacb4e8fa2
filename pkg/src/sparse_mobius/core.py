"""Dense Möbius/zeta transforms, OR-semiring arithmetic and sparse evaluation.

Index vectors are plain Python ints: bit ``i`` is variable ``i``.  Inside a
dense function of dimension ``b`` the same convention gives the array index,
so ``values[l]`` is the value at the mask whose bit ``a`` is ``(l >> a) & 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

MAX_DENSE_DIM = 30
MAX_BRUTE_FORCE_DIM = 20


class DimensionError(ValueError):
    """Raised when operands disagree on the ambient dimension."""


# ---------------------------------------------------------------------------
# mask helpers
# ---------------------------------------------------------------------------

def popcount(k: int) -> int:
    return int(k).bit_count()


def mask_to_str(k: int, n: int) -> str:
    """Render mask ``k`` as an ``n``-char 0/1 string, char ``i`` = variable ``i``."""
    if k >> n:
        raise DimensionError(f"mask has bits beyond dimension {n}")
    return format(k, f"0{n}b")[::-1] if n else ""


def str_to_mask(s: str) -> int:
    s = s.strip()
    if s and set(s) - {"0", "1"}:
        raise ValueError(f"not a 0/1 mask string: {s!r}")
    return int(s[::-1], 2) if s else 0


def mask_to_bits(k: int, n: int) -> np.ndarray:
    """Bool vector of length ``n`` for mask ``k``."""
    if k >> n:
        raise DimensionError(f"mask has bits beyond dimension {n}")
    nbytes = (n + 7) // 8
    raw = np.frombuffer(int(k).to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


def bits_to_mask(bits) -> int:
    bits = np.asarray(bits, dtype=bool).ravel()
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def masks_to_matrix(masks: Iterable[int], n: int) -> np.ndarray:
    """Stack masks into a bool matrix of shape ``(len(masks), n)``."""
    masks = list(masks)
    nbytes = (n + 7) // 8
    if not masks:
        return np.zeros((0, n), dtype=bool)
    raw = b"".join(int(k).to_bytes(nbytes, "little") for k in masks)
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(len(masks), nbytes)
    return np.unpackbits(arr, axis=1, bitorder="little")[:, :n].astype(bool)


def matrix_to_masks(rows: np.ndarray) -> list[int]:
    rows = np.asarray(rows, dtype=bool)
    packed = np.packbits(rows, axis=1, bitorder="little")
    return [int.from_bytes(r.tobytes(), "little") for r in packed]


def _as_bits(x, n: int) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return mask_to_bits(int(x), n)
    arr = np.asarray(x, dtype=bool).ravel()
    if arr.size != n:
        raise DimensionError(f"vector has length {arr.size}, expected {n}")
    return arr


# ---------------------------------------------------------------------------
# boolean arithmetic
# ---------------------------------------------------------------------------

def bool_matvec(M, x) -> np.ndarray:
    """OR-semiring product: ``out[a] = OR_i (M[a, i] AND x[i])``.

    ``x`` may be a bool vector or an int mask.  Returns a bool vector of
    length ``M.shape[0]``; use :func:`bits_to_mask` for the int form.
    """
    M = np.asarray(M, dtype=bool)
    if M.ndim != 2:
        raise DimensionError("M must be a 2-d binary matrix")
    xb = _as_bits(x, M.shape[1])
    return (M & xb).any(axis=1)


def bool_sub(x, y) -> np.ndarray:
    """Boolean subtraction ``x - y``, defined only when ``y <= x`` elementwise."""
    x = np.asarray(x, dtype=bool)
    y = np.asarray(y, dtype=bool)
    if np.any(y & ~x):
        raise ValueError("boolean subtraction x - y requires y <= x")
    return x & ~y


# ---------------------------------------------------------------------------
# dense transforms
# ---------------------------------------------------------------------------

def _check_dense(values) -> tuple[np.ndarray, int]:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError("dense function must be one-dimensional")
    size = arr.size
    b = size.bit_length() - 1
    if size == 0 or size != 1 << b:
        raise DimensionError(f"dense function length {size} is not a power of two")
    if b > MAX_DENSE_DIM:
        raise DimensionError(f"dense dimension {b} exceeds cap {MAX_DENSE_DIM}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dense function has non-finite entries")
    return arr, b


def _sweep(arr: np.ndarray, b: int, sign: float) -> np.ndarray:
    # arr has shape (..., 2**b) along the last axis; in-place subset sweep
    lead = arr.shape[:-1]
    for a in range(b):
        view = arr.reshape(*lead, 1 << (b - a - 1), 2, 1 << a)
        if sign < 0:
            view[..., 1, :] -= view[..., 0, :]
        else:
            view[..., 1, :] += view[..., 0, :]
    return arr


def forward_mobius_dense(f) -> np.ndarray:
    """Möbius transform ``F(k) = sum_{m <= k} (-1)^{|k - m|} f(m)`` in O(b 2^b)."""
    arr, b = _check_dense(f)
    return _sweep(arr, b, -1.0)


def inverse_mobius_dense(F) -> np.ndarray:
    """Zeta transform ``f(m) = sum_{k <= m} F(k)``."""
    arr, b = _check_dense(F)
    return _sweep(arr, b, +1.0)


def forward_mobius_batch(values: np.ndarray) -> np.ndarray:
    """Forward transform along the last axis of a stacked ``(..., 2**b)`` array, in place."""
    b = values.shape[-1].bit_length() - 1
    if values.shape[-1] != 1 << b:
        raise DimensionError("last axis length must be a power of two")
    if b > MAX_DENSE_DIM:
        raise DimensionError(f"dense dimension {b} exceeds cap {MAX_DENSE_DIM}")
    return _sweep(values, b, -1.0)


def direct_mobius(f) -> np.ndarray:
    """Reference O(3^b) double sum of the Möbius transform, for testing."""
    f = np.asarray(f, dtype=float)
    size = f.size
    F = np.zeros(size)
    for k in range(size):
        # enumerate submasks of k
        m = k
        total = 0.0
        while True:
            sgn = -1.0 if popcount(k ^ m) & 1 else 1.0
            total += sgn * f[m]
            if m == 0:
                break
            m = (m - 1) & k
        F[k] = total
    return F


# ---------------------------------------------------------------------------
# sparse representation
# ---------------------------------------------------------------------------

@dataclass
class SparseMobius:
    """Sparse Möbius coefficients of a function on ``{0,1}^dim``.

    ``entries`` maps int masks to non-zero real coefficients.  ``metadata``
    carries whatever the producer wants to record (recovery statistics etc.).
    """

    dim: int
    entries: dict[int, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.entries).items():
            k = int(k)
            if k < 0 or k >> self.dim:
                raise DimensionError(f"mask {k} does not fit in dimension {self.dim}")
            v = float(v)
            if v != 0.0:
                clean[k] = v
        self.entries = clean

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries))

    def __getitem__(self, k: int) -> float:
        return self.entries.get(int(k), 0.0)

    def __setitem__(self, k: int, v: float):
        k = int(k)
        if k < 0 or k >> self.dim:
            raise DimensionError(f"mask {k} does not fit in dimension {self.dim}")
        if v == 0.0:
            self.entries.pop(k, None)
        else:
            self.entries[k] = float(v)

    def items(self):
        return sorted(self.entries.items())

    def support(self) -> set[int]:
        return set(self.entries)

    def max_degree(self) -> int:
        return max((popcount(k) for k in self.entries), default=0)

    def to_dense(self) -> np.ndarray:
        if self.dim > MAX_DENSE_DIM:
            raise DimensionError(f"dimension {self.dim} too large for a dense array")
        out = np.zeros(1 << self.dim)
        for k, v in self.entries.items():
            out[k] = v
        return out

    def coefficient_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(K x dim bool matrix, K values)`` in sorted mask order."""
        keys = sorted(self.entries)
        return masks_to_matrix(keys, self.dim), np.array([self.entries[k] for k in keys])

    # serialization --------------------------------------------------------

    def to_records(self, precision: int | None = None) -> list[dict]:
        """``precision`` rounds values to that many significant digits."""
        def fmt(v):
            return v if precision is None else float(f"{v:.{precision}g}")
        recs = [{"mask": mask_to_str(k, self.dim), "value": fmt(v)} for k, v in self.entries.items()]
        recs.sort(key=lambda r: r["mask"])
        return recs

    def to_json(self, precision: int | None = None, **kwargs) -> str:
        return json.dumps(self.to_records(precision), **kwargs)

    @classmethod
    def from_records(cls, records: Iterable[Mapping], dim: int | None = None) -> "SparseMobius":
        records = list(records)
        if dim is None:
            if not records:
                raise ValueError("dimension required for an empty coefficient list")
            dim = len(records[0]["mask"])
        entries = {}
        for r in records:
            if len(r["mask"]) != dim:
                raise DimensionError(f"mask {r['mask']!r} has length != {dim}")
            entries[str_to_mask(r["mask"])] = float(r["value"])
        return cls(dim, entries)

    @classmethod
    def from_json(cls, text: str, dim: int | None = None) -> "SparseMobius":
        return cls.from_records(json.loads(text), dim)

    def save(self, path, precision: int | None = None):
        with open(path, "w") as fh:
            fh.write(self.to_json(precision, indent=1))
            fh.write("\n")

    @classmethod
    def load(cls, path, dim: int | None = None) -> "SparseMobius":
        with open(path) as fh:
            return cls.from_json(fh.read(), dim)


def evaluate(F: SparseMobius, m) -> float:
    """``f(m) = sum_{k <= m} F(k)`` over the stored entries."""
    if isinstance(m, (int, np.integer)):
        m = int(m)
        if m < 0 or m >> F.dim:
            raise DimensionError(f"mask does not fit in dimension {F.dim}")
    else:
        bits = np.asarray(m, dtype=bool).ravel()
        if bits.size != F.dim:
            raise DimensionError(f"mask has length {bits.size}, expected {F.dim}")
        m = bits_to_mask(bits)
    return float(sum(v for k, v in F.entries.items() if k & m == k))


def evaluate_many(F: SparseMobius, masks: np.ndarray) -> np.ndarray:
    """Vectorised :func:`evaluate` over a bool matrix of shape ``(N, dim)``."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != F.dim:
        raise DimensionError(f"expected an (N, {F.dim}) mask matrix")
    if not F.entries:
        return np.zeros(masks.shape[0])
    kmat, vals = F.coefficient_arrays()
    # count bits of k missing from m; k <= m iff the count is zero
    missing = (~masks).astype(np.float32) @ kmat.T.astype(np.float32)
    return (missing == 0) @ vals


def dense_to_sparse(F_dense: np.ndarray, tol: float | None = None) -> SparseMobius:
    """Drop coefficients with ``|F| <= tol`` (default ``1e-9 * max|F|``)."""
    F_dense = np.asarray(F_dense, dtype=float)
    dim = F_dense.size.bit_length() - 1
    scale = float(np.max(np.abs(F_dense))) if F_dense.size else 0.0
    if tol is None:
        tol = 1e-9 * scale
    idx = np.nonzero(np.abs(F_dense) > tol)[0]
    return SparseMobius(dim, {int(i): float(F_dense[i]) for i in idx})


def all_masks(n: int) -> np.ndarray:
    """Bool matrix of all ``2**n`` masks, row ``l`` is the mask with integer code ``l``."""
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def brute_force_transform(oracle, n: int, cap: int = MAX_BRUTE_FORCE_DIM,
                          tol: float | None = None) -> SparseMobius:
    """Query all ``2**n`` masks and take the dense transform.

    ``oracle`` is anything with a ``query(bool_matrix) -> values`` method, or
    a plain callable mapping such a matrix to values.
    """
    if n > cap:
        raise DimensionError(f"brute force needs 2**{n} queries; cap is n <= {cap}")
    query = oracle.query if hasattr(oracle, "query") else oracle
    masks = all_masks(n)
    values = np.asarray(query(masks), dtype=float)
    if values.shape != (1 << n,):
        raise ValueError("oracle returned the wrong number of values")
    if not np.all(np.isfinite(values)):
        raise ValueError("oracle returned non-finite values")
    F = dense_to_sparse(forward_mobius_dense(values), tol)
    F.metadata = {"samples": 1 << n, "method": "brute_force"}
    return F


def from_callable(func: Callable[[np.ndarray], float]):
    """Wrap a per-mask scalar function as a batch query function."""
    def query(masks):
        return np.array([func(row) for row in np.asarray(masks, dtype=bool)], dtype=float)
    return query
