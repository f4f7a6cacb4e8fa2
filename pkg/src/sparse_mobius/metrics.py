"""Quantities derived from a sparse Möbius representation.

Shapley and Banzhaf values are linear in the coefficients:
``sv(i) = sum_{k ∋ i} F(k) / |k|`` and ``bz(i) = sum_{k ∋ i} F(k) / 2**(|k|-1)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import (MAX_BRUTE_FORCE_DIM, DimensionError, SparseMobius, all_masks, evaluate_many,
                   inverse_mobius_dense, popcount)


@dataclass
class FitReport:
    r2: float
    norm_f: float
    norm_residual: float
    sample_count: int | None = None
    estimator_std: float | None = None
    mode: str = "exact"

    def to_dict(self) -> dict:
        return asdict(self)


def _r2(norm_f2: float, norm_res2: float) -> float:
    if norm_f2 == 0:
        return 1.0 if norm_res2 == 0 else -math.inf
    return 1.0 - norm_res2 / norm_f2


def _query(oracle, masks, batch: int = 1 << 16) -> np.ndarray:
    query = oracle.query if hasattr(oracle, "query") else oracle
    out = np.empty(masks.shape[0])
    for lo in range(0, masks.shape[0], batch):
        out[lo:lo + batch] = np.asarray(query(masks[lo:lo + batch]), dtype=float).reshape(-1)
    return out


def faithfulness(F_hat: SparseMobius, oracle, mode: str = "exact", N: int = 10_000,
                 seed=None) -> FitReport:
    """``R² = 1 - ||f_hat - f||² / ||f||²`` over the hypercube.

    ``mode="exact"`` enumerates all ``2**n`` masks (``n <= 20``).
    ``mode="sampled"`` uses ``N`` uniform masks; the reported std is a
    delta-method estimate for the ratio estimator.
    """
    n = F_hat.dim
    if getattr(oracle, "n", n) != n:
        raise DimensionError(f"oracle has n={oracle.n}, coefficients have n={n}")
    if mode == "exact":
        if n > MAX_BRUTE_FORCE_DIM:
            raise DimensionError(f"exact faithfulness needs n <= {MAX_BRUTE_FORCE_DIM}; use mode='sampled'")
        f = _query(oracle, all_masks(n))
        f_hat = inverse_mobius_dense(F_hat.to_dense())
        nf2 = float(f @ f)
        nr2 = float((f_hat - f) @ (f_hat - f))
        return FitReport(_r2(nf2, nr2), math.sqrt(nf2), math.sqrt(nr2), mode="exact")
    if mode != "sampled":
        raise ValueError("mode must be 'exact' or 'sampled'")
    if N < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    masks = rng.random((N, n)) < 0.5
    f = _query(oracle, masks)
    r = evaluate_many(F_hat, masks) - f
    a, b = r ** 2, f ** 2
    ma, mb = a.mean(), b.mean()
    scale = 2.0 ** n
    r2 = _r2(mb, ma)
    std = None
    if mb > 0:
        # var(ma/mb) by the delta method
        cov = np.cov(a, b)
        g = np.array([1.0 / mb, -ma / mb ** 2])
        std = float(math.sqrt(max(g @ cov @ g, 0.0) / N))
    return FitReport(r2, math.sqrt(mb * scale), math.sqrt(ma * scale), sample_count=N,
                     estimator_std=std, mode="sampled")


def _weighted(F: SparseMobius, weight) -> np.ndarray:
    out = np.zeros(F.dim)
    for k, v in F.entries.items():
        d = popcount(k)
        if d == 0:
            continue
        w = v * weight(d)
        while k:
            low = k & -k
            out[low.bit_length() - 1] += w
            k ^= low
    return out


def shapley(F: SparseMobius) -> np.ndarray:
    return _weighted(F, lambda d: 1.0 / d)


def banzhaf(F: SparseMobius) -> np.ndarray:
    return _weighted(F, lambda d: 2.0 ** (1 - d))


def degree_profile(F: SparseMobius) -> dict[int, dict]:
    """``{degree: {"count", "energy", "cumulative_energy"}}`` for the degrees present."""
    prof: dict[int, dict] = {}
    for k, v in F.entries.items():
        d = popcount(k)
        cell = prof.setdefault(d, {"count": 0, "energy": 0.0})
        cell["count"] += 1
        cell["energy"] += v * v
    total = 0.0
    for d in sorted(prof):
        total += prof[d]["energy"]
        prof[d]["cumulative_energy"] = total
    return dict(sorted(prof.items()))


# brute-force definitions, for checking ---------------------------------------

def _dense_f(oracle_or_F, n: int) -> np.ndarray:
    if n > MAX_BRUTE_FORCE_DIM:
        raise DimensionError("brute-force values need n <= 20")
    if isinstance(oracle_or_F, SparseMobius):
        return inverse_mobius_dense(oracle_or_F.to_dense())
    return _query(oracle_or_F, all_masks(n))


def shapley_brute_force(oracle_or_F, n: int) -> np.ndarray:
    """Subset formula ``sum_S |S|!(n-|S|-1)!/n! (f(S+i) - f(S))``."""
    f = _dense_f(oracle_or_F, n)
    codes = np.arange(1 << n)
    sizes = np.array([popcount(int(c)) for c in codes])
    wts = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) if s < n else 0.0
                    for s in range(n + 1)])
    out = np.zeros(n)
    for i in range(n):
        S = codes[(codes >> i) & 1 == 0]
        out[i] = float(wts[sizes[S]] @ (f[S | (1 << i)] - f[S]))
    return out


def banzhaf_brute_force(oracle_or_F, n: int) -> np.ndarray:
    """Average marginal contribution over all subsets not containing ``i``."""
    f = _dense_f(oracle_or_F, n)
    codes = np.arange(1 << n)
    out = np.zeros(n)
    for i in range(n):
        S = codes[(codes >> i) & 1 == 0]
        out[i] = float(np.mean(f[S | (1 << i)] - f[S]))
    return out


# CSV ---------------------------------------------------------------------------

def write_attribution_csv(path, F: SparseMobius, shapley_values: bool = True, banzhaf_values: bool = True):
    cols = ["feature"]
    data = []
    if shapley_values:
        cols.append("shapley")
        data.append(shapley(F))
    if banzhaf_values:
        cols.append("banzhaf")
        data.append(banzhaf(F))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(F.dim):
            w.writerow([i] + [repr(float(col[i])) for col in data])


def write_degree_csv(path, F: SparseMobius):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["degree", "count", "energy", "cumulative_energy"])
        for d, cell in degree_profile(F).items():
            w.writerow([d, cell["count"], repr(cell["energy"]), repr(cell["cumulative_energy"])])
