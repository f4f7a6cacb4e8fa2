"""Query generation, black-box value oracles and subsampled bin tables."""
from __future__ import annotations

import logging
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (DimensionError, SparseMobius, evaluate_many, forward_mobius_batch,
                   mask_to_bits, masks_to_matrix, str_to_mask)
from .designs import SubsamplingDesign

log = logging.getLogger(__name__)

DEFAULT_BATCH = 1024


class OracleError(RuntimeError):
    """The value oracle failed or returned something unusable."""


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

class ValueOracle:
    """Base class: ``query`` maps a bool matrix ``(N, n)`` to ``N`` reals."""

    kind = "abstract"
    n: int
    # std of Gaussian noise added to every subsampled transform coefficient
    bin_noise_sigma: float = 0.0

    def query(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bin_noise(self, shape) -> np.ndarray | None:
        """Noise to add to a block of subsampled coefficients, or ``None``."""
        return None

    def __call__(self, masks):
        return self.query(masks)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class FunctionOracle(ValueOracle):
    """In-process oracle around a Python callable.

    With ``vectorized=True`` the callable receives the whole bool batch,
    otherwise one bool row at a time.
    """

    kind = "in_process"

    def __init__(self, func: Callable, n: int, vectorized: bool = False):
        self.func = func
        self.n = n
        self.vectorized = vectorized

    def query(self, masks):
        masks = _check_masks(masks, self.n)
        if self.vectorized:
            out = np.asarray(self.func(masks), dtype=float).reshape(-1)
        else:
            out = np.array([float(self.func(row)) for row in masks])
        return out


class SparseOracle(ValueOracle):
    """Evaluates ``f(m) = sum_{k <= m} F(k)`` for a known sparse ``F``."""

    kind = "synthetic_sparse"

    def __init__(self, F: SparseMobius):
        self.F = F
        self.n = F.dim

    def query(self, masks):
        return evaluate_many(self.F, _check_masks(masks, self.n))


class NoisyOracle(ValueOracle):
    """Wraps an oracle with Gaussian noise.

    ``mode="bin"`` (the default) adds ``N(0, sigma^2)`` to every subsampled
    Möbius coefficient after the fast transform; queries themselves stay
    exact.  ``mode="query"`` instead perturbs every returned ``f(m)``.
    """

    kind = "synthetic_noisy"

    def __init__(self, inner: ValueOracle, sigma: float, mode: str = "bin", seed=None):
        if mode not in ("bin", "query"):
            raise ValueError("mode must be 'bin' or 'query'")
        self.inner = inner
        self.n = inner.n
        self.sigma = float(sigma)
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    @property
    def bin_noise_sigma(self):
        return self.sigma if self.mode == "bin" else 0.0

    def bin_noise(self, shape):
        if self.mode != "bin" or self.sigma == 0:
            return None
        return self.rng.normal(0.0, self.sigma, size=shape)

    def query(self, masks):
        vals = self.inner.query(masks)
        if self.mode == "query" and self.sigma > 0:
            vals = vals + self.rng.normal(0.0, self.sigma, size=vals.shape)
        return vals

    def close(self):
        self.inner.close()


class CachingOracle(ValueOracle):
    """Memoises another oracle; safe under concurrent use."""

    def __init__(self, inner: ValueOracle):
        self.inner = inner
        self.n = inner.n
        self.kind = inner.kind
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def bin_noise_sigma(self):
        return getattr(self.inner, "bin_noise_sigma", 0.0)

    def bin_noise(self, shape):
        return self.inner.bin_noise(shape)

    def query(self, masks):
        masks = _check_masks(masks, self.n)
        packed = np.packbits(masks, axis=1, bitorder="little")
        keys = [r.tobytes() for r in packed]
        out = np.empty(len(keys))
        # held across the inner call so every key is evaluated exactly once
        with self._lock:
            todo = []
            for i, key in enumerate(keys):
                v = self._cache.get(key)
                if v is None:
                    todo.append(i)
                else:
                    out[i] = v
            if todo:
                # duplicates inside one batch are only sent once
                first: dict[bytes, int] = {}
                for i in todo:
                    first.setdefault(keys[i], i)
                uniq = list(first.values())
                vals = np.asarray(self.inner.query(masks[uniq]), dtype=float)
                for i, v in zip(uniq, vals):
                    self._cache[keys[i]] = float(v)
                for i in todo:
                    out[i] = self._cache[keys[i]]
                self.misses += len(uniq)
            self.hits += len(keys) - len(todo)
        return out

    def close(self):
        self.inner.close()


class SubprocessOracle(ValueOracle):
    """Talks to an external program over the line protocol.

    The engine sends ``QUERY <count>`` followed by ``count`` mask lines
    (``n`` chars of 0/1, char ``i`` = variable ``i``); the program answers
    with ``count`` float lines.  ``END`` terminates the session.
    """

    kind = "subprocess"

    def __init__(self, cmd, n: int, batch_size: int = DEFAULT_BATCH, timeout: float | None = None):
        self.cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.n = n
        self.batch_size = batch_size
        self.timeout = timeout
        self.proc = None
        self._lock = threading.Lock()

    def _start(self):
        try:
            self.proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise OracleError(f"cannot start oracle {self.cmd!r}: {exc}") from exc

    def query(self, masks):
        masks = _check_masks(masks, self.n)
        with self._lock:
            if self.proc is None:
                self._start()
            out = np.empty(masks.shape[0])
            for lo in range(0, masks.shape[0], self.batch_size):
                chunk = masks[lo:lo + self.batch_size]
                out[lo:lo + len(chunk)] = self._round_trip(chunk)
        return out

    def _round_trip(self, chunk):
        lines = ["".join("1" if x else "0" for x in row) for row in chunk]
        payload = f"QUERY {len(lines)}\n" + "".join(s + "\n" for s in lines)
        try:
            self.proc.stdin.write(payload)
            self.proc.stdin.flush()
            vals = []
            for _ in lines:
                line = self.proc.stdout.readline()
                if not line:
                    raise OracleError(f"oracle exited early (code {self.proc.poll()})")
                vals.append(float(line))
        except ValueError as exc:
            raise OracleError(f"malformed oracle reply: {exc}") from exc
        except (BrokenPipeError, OSError) as exc:
            raise OracleError(f"oracle pipe failure: {exc}") from exc
        return np.array(vals)

    def close(self):
        if self.proc is None:
            return
        try:
            self.proc.stdin.write("END\n")
            self.proc.stdin.flush()
            self.proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        code = self.proc.wait(timeout=self.timeout)
        self.proc.stdout.close()
        self.proc = None
        if code != 0:
            raise OracleError(f"oracle exited with code {code}")


def serve(func: Callable[[np.ndarray], np.ndarray], n: int, stdin, stdout) -> int:
    """Oracle side of the line protocol; ``func`` gets a bool batch.

    Returns the number of masks answered.
    """
    answered = 0
    while True:
        header = stdin.readline()
        if not header or header.strip() == "END":
            return answered
        parts = header.split()
        if len(parts) != 2 or parts[0] != "QUERY":
            raise OracleError(f"bad request header {header!r}")
        count = int(parts[1])
        rows = [stdin.readline().strip() for _ in range(count)]
        if any(len(r) != n for r in rows):
            raise OracleError("mask of the wrong length")
        masks = masks_to_matrix([str_to_mask(r) for r in rows], n)
        vals = np.asarray(func(masks), dtype=float).reshape(-1)
        stdout.write("".join(f"{v!r}\n" for v in vals.tolist()))
        stdout.flush()
        answered += count


def _check_masks(masks, n):
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != n:
        raise DimensionError(f"expected masks of shape (N, {n}), got {masks.shape}")
    return masks


# ---------------------------------------------------------------------------
# query points
# ---------------------------------------------------------------------------

def query_point(H, ell, d) -> np.ndarray:
    """Query mask for bin input ``ell`` under delay ``d``.

    ``m_i = 1`` iff ``d_i = 0`` and ``H[a, i] = 0`` for every row ``a``
    with ``ell_a = 0``.
    """
    H = np.asarray(H, dtype=bool)
    b, n = H.shape
    ell = mask_to_bits(ell, b) if isinstance(ell, (int, np.integer)) else np.asarray(ell, dtype=bool)
    d = mask_to_bits(d, n) if isinstance(d, (int, np.integer)) else np.asarray(d, dtype=bool)
    if ell.shape != (b,) or d.shape != (n,):
        raise DimensionError("ell must have length b and d length n")
    zeroed = H[~ell].any(axis=0) | d
    return ~zeroed


def group_queries(design: SubsamplingDesign) -> np.ndarray:
    """All query masks of one group, shape ``(P+1, 2**b, n)``; row 0 is the undelayed one."""
    H, b, n = design.H, design.b, design.n
    codes = np.arange(1 << b)
    zeroed = np.zeros((1 << b, n), dtype=bool)
    for a in range(b):
        off = ((codes >> a) & 1) == 0
        zeroed[off] |= H[a]
    delays = np.vstack([np.zeros((1, n), dtype=bool), design.D])
    return ~(zeroed[None, :, :] | delays[:, None, :])


def _query_codes(design: SubsamplingDesign) -> np.ndarray:
    """``group_queries`` as integer masks (``n <= 64``), shape ``(P+1, 2**b)``."""
    n, b = design.n, design.b
    full = np.uint64((1 << n) - 1)
    h_rows, d_rows = design.row_masks
    h = np.array(h_rows, dtype=np.uint64)
    d = np.array([0] + d_rows, dtype=np.uint64)
    zeroed = np.zeros(1 << b, dtype=np.uint64)
    codes = np.arange(1 << b)
    for a in range(b):
        zeroed[((codes >> a) & 1) == 0] |= h[a]
    return ~(zeroed[None, :] | d[:, None]) & full


# ---------------------------------------------------------------------------
# bin tables
# ---------------------------------------------------------------------------

@dataclass
class BinTable:
    """Subsampled transforms of one group: ``U[j, p]`` for bins ``j`` and delays ``p``."""

    group: int
    U: np.ndarray

    @property
    def b(self) -> int:
        return self.U.shape[0].bit_length() - 1

    @property
    def P(self) -> int:
        return self.U.shape[1] - 1

    def __getitem__(self, j) -> np.ndarray:
        return self.U[j]

    def function(self, p: int) -> np.ndarray:
        """The dense transform ``U_{c,p}`` over all bins."""
        return self.U[:, p]


@dataclass
class SamplingStats:
    total_queries: int = 0
    unique_queries: int = 0
    timings: dict = field(default_factory=dict)


def build_bin_tables(oracle, designs: list[SubsamplingDesign], batch_size: int = DEFAULT_BATCH,
                     noise_sigma: float | None = None, noise_seed=None,
                     stats: SamplingStats | None = None) -> list[BinTable]:
    """Query every design point once (deduplicated) and transform each delay.

    Bin-level noise is added after the transforms: ``N(0, noise_sigma^2)``
    drawn from ``noise_seed`` when ``noise_sigma`` is given, otherwise
    whatever ``oracle.bin_noise`` supplies.
    """
    if stats is None:
        stats = SamplingStats()
    n = oracle.n
    for des in designs:
        if des.n != n:
            raise DimensionError(f"design has n={des.n}, oracle has n={n}")
    t0 = time.perf_counter()
    shapes = [(des.P + 1, 1 << des.b) for des in designs]
    if n <= 64:
        # one uint64 code per query; only the unique ones are unpacked
        codes = np.concatenate([_query_codes(des).ravel() for des in designs])
        total = codes.shape[0]
        ucodes, inverse = np.unique(codes, return_inverse=True)
        shifts = np.arange(n, dtype=np.uint64)

        def unpack(lo, hi):
            return ((ucodes[lo:hi, None] >> shifts) & np.uint64(1)).astype(bool)
        n_unique = ucodes.shape[0]
    else:
        packed = np.concatenate([np.packbits(group_queries(des).reshape(-1, n), axis=1, bitorder="little")
                                 for des in designs], axis=0)
        total = packed.shape[0]
        # dedupe on raw row bytes
        rows = np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()
        _, first, inverse = np.unique(rows, return_index=True, return_inverse=True)
        uniq = packed[first]

        def unpack(lo, hi):
            return np.unpackbits(uniq[lo:hi], axis=1, bitorder="little")[:, :n].astype(bool)
        n_unique = uniq.shape[0]
    t1 = time.perf_counter()

    values = np.empty(n_unique)
    for lo in range(0, n_unique, batch_size):
        chunk = unpack(lo, lo + batch_size)
        try:
            vals = np.asarray(oracle.query(chunk), dtype=float).reshape(-1)
        except (OracleError, DimensionError):
            raise
        except Exception as exc:
            raise OracleError(f"oracle failed on batch starting at unique query {lo}: {exc}") from exc
        if vals.shape[0] != chunk.shape[0]:
            raise OracleError(f"oracle returned {vals.shape[0]} values for {chunk.shape[0]} masks")
        if not np.all(np.isfinite(vals)):
            raise OracleError(f"oracle returned non-finite values in batch starting at {lo}")
        values[lo:lo + len(vals)] = vals
    t2 = time.perf_counter()

    all_vals = values[inverse.ravel()]
    rng = np.random.default_rng(noise_seed) if noise_sigma else None
    tables = []
    pos = 0
    for c, (P1, B) in enumerate(shapes):
        block = all_vals[pos:pos + P1 * B].reshape(P1, B).copy()
        pos += P1 * B
        forward_mobius_batch(block)
        if rng is not None:
            block += rng.normal(0.0, noise_sigma, size=block.shape)
        elif hasattr(oracle, "bin_noise"):
            noise = oracle.bin_noise(block.shape)
            if noise is not None:
                block += noise
        tables.append(BinTable(c, np.ascontiguousarray(block.T)))
    t3 = time.perf_counter()

    stats.total_queries += total
    stats.unique_queries += n_unique
    stats.timings["query_generation"] = stats.timings.get("query_generation", 0.0) + (t1 - t0)
    stats.timings["oracle"] = stats.timings.get("oracle", 0.0) + (t2 - t1)
    stats.timings["transforms"] = stats.timings.get("transforms", 0.0) + (t3 - t2)
    log.debug("sampled %d queries (%d unique)", total, n_unique)
    return tables


def expected_bins(F: SparseMobius, design: SubsamplingDesign) -> np.ndarray:
    """Noiseless ``U[j, p] = sum_{k <= ~d_p, H k = j} F(k)`` computed straight from ``F``."""
    U = np.zeros((1 << design.b, design.P + 1))
    if not F.entries:
        return U
    kmat, vals = F.coefficient_arrays()
    j = kmat.astype(np.float32) @ design.H.T.astype(np.float32) > 0
    jcodes = j.astype(np.int64) @ (1 << np.arange(design.b, dtype=np.int64))
    keep = np.ones((len(vals), design.P + 1), dtype=bool)
    if design.P:
        keep[:, 1:] = ~(kmat.astype(np.float32) @ design.D.T.astype(np.float32) > 0)
    np.add.at(U, jcodes, keep * vals[:, None])
    return U


__all__ = [
    "OracleError", "ValueOracle", "FunctionOracle", "SparseOracle", "NoisyOracle",
    "CachingOracle", "SubprocessOracle", "serve", "query_point", "group_queries",
    "BinTable", "SamplingStats", "build_bin_tables", "expected_bins",
]
