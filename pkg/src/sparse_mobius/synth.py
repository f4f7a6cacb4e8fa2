"""Planted sparse instances and the reconstruction / SNR / runtime sweeps."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import SparseMobius, bits_to_mask, brute_force_transform, str_to_mask
from .designs import DesignConfig, SubsamplingDesign
from .detection import DetectorConfig
from .peeling import transform
from .sampling import NoisyOracle, SparseOracle


@dataclass
class SyntheticSpec:
    n: int
    K: int
    assumption: str = "uniform"
    t: int | None = None
    value_law: str = "uniform"
    v_min: float = 0.1
    rho: float = 1.0
    sigma: float = 0.0
    noise_mode: str = "bin"
    seed: int = 0

    def __post_init__(self):
        if self.assumption not in ("uniform", "lowdeg"):
            raise ValueError("assumption must be 'uniform' or 'lowdeg'")
        if self.value_law not in ("uniform", "fixed"):
            raise ValueError("value_law must be 'uniform' or 'fixed'")
        if self.K < 0 or self.n < 1:
            raise ValueError("need n >= 1 and K >= 0")
        if self.value_law == "uniform" and not 0 <= self.v_min < 1:
            raise ValueError("v_min must lie in [0, 1)")
        if self.value_law == "fixed" and self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.assumption == "lowdeg":
            if self.t is None or not 0 <= self.t <= self.n:
                raise ValueError("lowdeg needs 0 <= t <= n")
        if self.K > self.capacity():
            raise ValueError(f"cannot plant K={self.K} distinct masks; only {self.capacity()} exist")

    def capacity(self) -> int:
        if self.assumption == "uniform":
            return 1 << self.n
        return sum(math.comb(self.n, d) for d in range(self.t + 1))


def _uniform_masks(rng, n, K) -> list[int]:
    seen: set[int] = set()
    out = []
    while len(out) < K:
        bits = rng.random((K - len(out), n)) < 0.5
        for row in bits:
            k = bits_to_mask(row)
            if k not in seen:
                seen.add(k)
                out.append(k)
    return out


def _lowdeg_masks(rng, n, t, K) -> list[int]:
    # uniform over {k : |k| <= t}: pick the degree by its share, then the subset
    weights = np.array([math.comb(n, d) for d in range(t + 1)], dtype=float)
    weights /= weights.sum()
    seen: set[int] = set()
    out = []
    while len(out) < K:
        d = int(rng.choice(t + 1, p=weights))
        k = sum(1 << int(i) for i in rng.choice(n, size=d, replace=False))
        if k not in seen:
            seen.add(k)
            out.append(k)
    return out


def generate(spec: SyntheticSpec):
    """Plant ``K`` coefficients; returns ``(F_true, oracle)``."""
    rng = np.random.default_rng(spec.seed)
    if spec.assumption == "uniform":
        masks = _uniform_masks(rng, spec.n, spec.K)
    else:
        masks = _lowdeg_masks(rng, spec.n, spec.t, spec.K)
    if spec.value_law == "uniform":
        mags = rng.uniform(spec.v_min, 1.0, size=spec.K)
    else:
        mags = np.full(spec.K, spec.rho)
    vals = mags * rng.choice([-1.0, 1.0], size=spec.K)
    F = SparseMobius(spec.n, dict(zip(masks, vals.tolist())))
    oracle = SparseOracle(F)
    if spec.sigma > 0:
        oracle = NoisyOracle(oracle, spec.sigma, mode=spec.noise_mode, seed=rng.integers(2**63))
    return F, oracle


# recovery scores ----------------------------------------------------------------

def coefficient_r2(F_hat: SparseMobius, F_true: SparseMobius) -> float:
    """``1 - ||F_hat - F||² / ||F||²`` over the union of supports."""
    keys = F_hat.support() | F_true.support()
    err = sum((F_hat[k] - F_true[k]) ** 2 for k in keys)
    norm = sum(v * v for v in F_true.entries.values())
    if norm == 0:
        return 1.0 if err == 0 else -math.inf
    return 1.0 - err / norm


def support_f1(F_hat: SparseMobius, F_true: SparseMobius) -> float:
    a, b = F_hat.support(), F_true.support()
    if not a and not b:
        return 1.0
    tp = len(a & b)
    return 2.0 * tp / (len(a) + len(b))


def exact_match(F_hat: SparseMobius, F_true: SparseMobius, atol: float = 1e-8) -> bool:
    if F_hat.support() != F_true.support():
        return False
    return all(abs(F_hat[k] - v) <= atol for k, v in F_true.entries.items())


def snr_to_sigma(snr_db: float, rho: float = 1.0) -> float:
    """``SNR = rho² / sigma²`` in decibels."""
    return rho / 10.0 ** (snr_db / 20.0)


# worked example -------------------------------------------------------------------

TOY_COEFFS = {"100000": -0.8, "010000": -0.9, "110000": 2.2, "110100": 0.48}


def toy_instance() -> tuple[SparseMobius, list[SubsamplingDesign]]:
    """Four coefficients on six variables and two ``b = 2`` groups.

    Group 1 hashes on variables 0 and 1, group 2 on variables 2 and 3; the
    delay matrix is the identity.  Group 1 ends up with one zeroton, two
    singletons and a multiton; group 2 with two zerotons, a singleton and a
    multiton.  Peeling group 2's singleton turns group 1's multiton into a
    singleton.
    """
    n = 6
    F = SparseMobius(n, {str_to_mask(s): v for s, v in TOY_COEFFS.items()})
    eye = np.eye(n, dtype=bool)
    designs = [SubsamplingDesign(eye[[0, 1]], eye, "uniform", index_set=[0, 1]),
               SubsamplingDesign(eye[[2, 3]], eye, "uniform", index_set=[2, 3])]
    return F, designs


# sweeps ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    name: str
    axes: list[str]
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def cells(self) -> dict[tuple, list[dict]]:
        out: dict[tuple, list[dict]] = {}
        for r in self.rows:
            out.setdefault(tuple(r[a] for a in self.axes), []).append(r)
        return out

    def aggregate(self, metric: str, how: str = "mean") -> dict[tuple, float]:
        fn = {"mean": np.mean, "median": np.median, "std": np.std}[how]
        return {key: float(fn([r[metric] for r in rs])) for key, rs in sorted(self.cells().items())}

    def summary(self) -> list[dict]:
        out = []
        for key, rs in sorted(self.cells().items()):
            row = dict(zip(self.axes, key))
            row["trials"] = len(rs)
            for m in rs[0]:
                if m in self.axes or m in ("trial", "seed") or not isinstance(rs[0][m], (int, float, bool)):
                    continue
                vals = [float(r[m]) for r in rs]
                row[f"{m}_mean"] = float(np.mean(vals))
                row[f"{m}_std"] = float(np.std(vals))
                row[f"{m}_median"] = float(np.median(vals))
            out.append(row)
        return out

    def to_csv(self, path):
        """One row per trial followed by one aggregate row per cell."""
        trial_cols = list(self.rows[0]) if self.rows else list(self.axes)
        summ = self.summary()
        agg_cols = [c for c in (summ[0] if summ else {}) if c not in self.axes]
        cols = ["kind"] + trial_cols + [c for c in agg_cols if c not in trial_cols]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow({"kind": "trial", **r})
            for r in summ:
                w.writerow({"kind": "aggregate", **r})

    def manifest(self) -> dict:
        return {"name": self.name, "axes": self.axes, "config": self.config,
                "extras": self.extras, "summary": self.summary()}

    def digest(self) -> str:
        import hashlib
        return hashlib.sha256(json.dumps(self.config, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _map(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def reconstruction_trial(n: int, b: int, K: int, C: int, seed: int, track_conservation: bool = False) -> dict:
    F_true, oracle = generate(SyntheticSpec(n, K, seed=seed))
    cfg = DesignConfig(n=n, b=b, C=C, regime="uniform", seed=seed + 1, overlap=C * b > n)
    res = transform(oracle, cfg, track_conservation=track_conservation)
    row = {"n": n, "b": b, "seed": seed, "success": exact_match(res.F, F_true),
           "samples": C * (n + 1) << b, "unique_samples": res.report["unique_queries"],
           "rounds": res.report["rounds"], "runtime": res.report["timings"]["total"]}
    if track_conservation:
        row["max_drift"] = res.report["max_conservation_drift"]
    return row


def sweep_reconstruction(ns=(32, 64, 128), bs=(4, 5, 6, 7, 8, 9), K: int = 100, trials: int = 20,
                         C: int = 3, seed: int = 0, threads: int = 1) -> SweepResult:
    """Exact-recovery rate against ``n`` and ``b`` (uniform regime, ``D = I``)."""
    jobs = []
    for n in ns:
        for b in bs:
            if C * b > n and b > n:
                continue
            for i in range(trials):
                jobs.append((n, b, seed + 1000 * n + 100 * b + i, i))

    def one(job):
        n, b, s, i = job
        return {"trial": i, **reconstruction_trial(n, b, K, C, s)}

    rows = _map(one, jobs, threads)
    cfg = dict(ns=list(ns), bs=list(bs), K=K, trials=trials, C=C, seed=seed)
    return SweepResult("reconstruction", ["n", "b"], rows, cfg)


def min_b_for_success(result: SweepResult, level: float = 0.9) -> dict[int, int | None]:
    rates = result.aggregate("success")
    out: dict[int, int | None] = {}
    for (n, b), r in sorted(rates.items()):
        if r >= level and out.get(n) is None:
            out[n] = b
        out.setdefault(n, None)
    return out


def snr_trial(n: int, K: int, t: int, snr_db: float, b: int, C: int, seed: int, rho: float = 1.0,
              c_gt: float = 2.0, c_ver: float = 2.0, gamma: float = 0.5) -> dict:
    sigma = snr_to_sigma(snr_db, rho) if math.isfinite(snr_db) else 0.0
    F_true, oracle = generate(SyntheticSpec(n, K, "lowdeg", t, "fixed", rho=rho, sigma=sigma, seed=seed))
    cfg = DesignConfig(n=n, b=b, C=C, regime="noisy", t=t, sigma=sigma, rho=rho, seed=seed + 1,
                       c_gt=c_gt, c_ver=c_ver, gamma=gamma)
    det = DetectorConfig(mode="noisy", sigma=sigma, rho=rho, gamma=gamma)
    res = transform(oracle, cfg, det)
    return {"snr_db": snr_db, "seed": seed, "r2": coefficient_r2(res.F, F_true),
            "f1": support_f1(res.F, F_true), "recovered": len(res.F),
            "unique_samples": res.report["unique_queries"], "runtime": res.report["timings"]["total"]}


def sweep_snr(snrs_db=(0, 5, 10, 15, 20), n: int = 100, K: int = 20, t: int = 5, b: int = 6, C: int = 3,
              trials: int = 10, rho: float = 1.0, seed: int = 0, threads: int = 1, **kw) -> SweepResult:
    """Coefficient-domain R² and support F1 against SNR (noisy low-degree regime)."""
    jobs = [(s, seed + i, i) for s in snrs_db for i in range(trials)]

    def one(job):
        s, sd, i = job
        return {"trial": i, **snr_trial(n, K, t, s, b, C, sd, rho, **kw)}

    rows = _map(one, jobs, threads)
    cfg = dict(snrs_db=list(snrs_db), n=n, K=K, t=t, b=b, C=C, trials=trials, rho=rho, seed=seed, **kw)
    return SweepResult("snr", ["snr_db"], rows, cfg)


def runtime_trial(n: int, K: int, b: int, C: int, seed: int, t: int | None = None) -> dict:
    if t is None:
        F_true, oracle = generate(SyntheticSpec(n, K, seed=seed))
        cfg = DesignConfig(n=n, b=b, C=C, regime="uniform", seed=seed + 1, overlap=C * b > n)
    else:
        F_true, oracle = generate(SyntheticSpec(n, K, "lowdeg", t, seed=seed))
        cfg = DesignConfig(n=n, b=b, C=C, regime="lowdeg", t=t, seed=seed + 1)
    res = transform(oracle, cfg)
    tm = res.report["timings"]
    return {"n": n, "seed": seed, "success": exact_match(res.F, F_true), "total": tm["total"],
            "query_generation": tm["query_generation"], "oracle": tm["oracle"],
            "transforms": tm["transforms"], "detection": tm["detection"], "peeling": tm["peeling"]}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def sweep_runtime(ns=(64, 128, 256, 512), K: int = 50, b: int | None = None, C: int = 3, t: int | None = None,
                  trials: int = 3, seed: int = 0, brute_n: int | None = None, threads: int = 1) -> SweepResult:
    """Wall-clock per phase against ``n``; fits the log-log slope of the median total.

    With ``brute_n`` a brute-force transform of a ``K``-sparse function at that
    ``n`` is timed against the sparse transform for comparison.
    """
    if b is None:
        b = max(1, math.ceil(math.log2(max(K, 1))) + 2)
    jobs = [(n, seed + 1000 * n + i, i) for n in ns for i in range(trials)]

    def one(job):
        n, sd, i = job
        return {"trial": i, **runtime_trial(n, K, b, C, sd, t)}

    rows = _map(one, jobs, threads)
    res = SweepResult("runtime", ["n"], rows, dict(ns=list(ns), K=K, b=b, C=C, t=t, trials=trials, seed=seed))
    med = res.aggregate("total", "median")
    res.extras["loglog_slope"] = loglog_slope([k[0] for k in med], list(med.values()))
    if brute_n is not None:
        res.extras["brute_force"] = compare_brute_force(brute_n, K, seed=seed)
    return res


def compare_brute_force(n: int, K: int, b: int | None = None, C: int = 3, seed: int = 0,
                        repeats: int = 3) -> dict:
    """Time the sparse transform against exhaustive querying on the same instance.

    Each side is timed ``repeats`` times and the fastest run is kept.
    """
    F_true, oracle = generate(SyntheticSpec(n, K, seed=seed))
    if b is None:
        b = max(1, math.ceil(math.log2(max(K, 1))) + 2)
    cfg = DesignConfig(n=n, b=b, C=C, seed=seed + 1, overlap=C * b > n)
    t_smt = t_bf = math.inf
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        res = transform(oracle, cfg)
        t_smt = min(t_smt, time.perf_counter() - t0)
        t0 = time.perf_counter()
        F_bf = brute_force_transform(oracle, n)
        t_bf = min(t_bf, time.perf_counter() - t0)
    return {"n": n, "K": K, "smt_seconds": t_smt, "brute_seconds": t_bf, "speedup": t_bf / t_smt,
            "smt_exact": exact_match(res.F, F_true), "brute_exact": exact_match(F_bf, F_true),
            "smt_samples": res.report["unique_queries"], "brute_samples": 1 << n}


def group_testing_trials(n: int = 200, t: int = 3, P: int | None = None, trials: int = 1000,
                         decoder: str = "comp_dd", flip_rate: float = 0.0, seed: int = 0,
                         design: str = "ccw", nu: float = math.log(2)) -> float:
    """Fraction of planted ``|k| = t`` indices a decoder recovers exactly.

    ``flip_rate > 0`` flips each outcome independently before decoding (the
    LP then runs without re-encoding verification).
    """
    from . import group_testing as gt
    from .designs import group_test_rows, group_testing_matrix
    if P is None:
        P = group_test_rows(n, t, 2.0)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        D = group_testing_matrix(P, n, t, nu, rng, design)
        k = np.zeros(n, dtype=bool)
        k[rng.choice(n, t, replace=False)] = True
        y = gt.encode(D, k)
        if flip_rate > 0:
            y = y ^ (rng.random(P) < flip_rate)
        if decoder == "comp_dd":
            k_hat = gt.decode_comp_dd(D, y)
        elif decoder == "lp":
            k_hat = gt.decode_lp(D, y, verify=flip_rate == 0)
        else:
            raise ValueError(f"unknown decoder {decoder!r}")
        hits += k_hat is not None and bool(np.array_equal(k_hat, k))
    return hits / trials


def spec_dict(spec: SyntheticSpec) -> dict:
    return asdict(spec)
