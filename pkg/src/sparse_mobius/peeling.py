"""The peeling decoder: detect singletons, subtract them everywhere, repeat."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import SparseMobius
from .designs import DesignConfig, SubsamplingDesign, make_designs
from .detection import (DetectorConfig, Multiton, Singleton, Zeroton, check_gamma,
                        detect_table)
from .sampling import SamplingStats, build_bin_tables

log = logging.getLogger(__name__)


@dataclass
class PeelingState:
    designs: list[SubsamplingDesign]
    tables: list[np.ndarray]
    detector: DetectorConfig
    scale: float = 1.0
    recovered: dict[int, float] = field(default_factory=dict)
    types: list[dict] = field(default_factory=list)
    rounds: int = 0
    duplicates: int = 0
    inconsistent: bool = False
    history: list[dict] = field(default_factory=list)
    initial: list[np.ndarray] | None = None
    _counts: dict[int, int] = field(default_factory=dict)
    ambiguous_fallback: bool = False
    _rows: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.designs[0].n

    def contribution(self, c: int, k: int) -> tuple[int, np.ndarray]:
        """Bin index and per-delay pattern ``1{k <= ~d_p}`` of ``k`` in group ``c``."""
        if self._rows is None:
            self._rows = [(d.row_masks[0], np.array(d.row_masks[1], dtype=object))
                          for d in self.designs]
        h_rows, d_rows = self._rows[c]
        j = 0
        for a, h in enumerate(h_rows):
            if h & k:
                j |= 1 << a
        keep = np.empty(d_rows.size + 1, dtype=bool)
        keep[0] = True
        keep[1:] = (d_rows & k) == 0
        return j, keep

    def conservation_drift(self) -> float:
        """Max deviation of ``U + sum(recovered contributions)`` from the initial tables."""
        if self.initial is None:
            raise ValueError("initial tables were not kept")
        worst = 0.0
        for c, U in enumerate(self.tables):
            rebuilt = U.copy()
            for k, v in self.recovered.items():
                j, keep = self.contribution(c, k)
                rebuilt[j] += v * keep
            worst = max(worst, float(np.max(np.abs(rebuilt - self.initial[c]))))
        return worst


def initial_frontier(state: PeelingState) -> list[tuple[int, int, int, float]]:
    """Classify every bin and return the singletons as ``(c, j, k, v)``."""
    state.types = []
    for c, (U, des) in enumerate(zip(state.tables, state.designs)):
        state.types.append(detect_table(U, des, state.detector, state.scale))
    return _frontier(state)


def _frontier(state: PeelingState, only=None) -> list[tuple[int, int, int, float]]:
    out = []
    for c, types in enumerate(state.types):
        for j, t in types.items():
            if only is not None and (c, j) not in only:
                continue
            if isinstance(t, Singleton):
                out.append((c, j, t.k, t.v))
    out.sort(key=lambda e: (e[0], e[1]))
    return out


def _select(state: PeelingState, frontier):
    """Singletons to peel this round.

    Only unambiguous decodes are peeled: an ambiguous one may be a
    superset key or a multiton in disguise.  With ``ambiguous_fallback`` they
    are used once nothing else is left, provided the key looks present in
    every other group; this recovers more but can report false coefficients.
    """
    fresh = [e for e in frontier if e[2] not in state.recovered or state.detector.mode == "noisy"]
    clean = [e for e in fresh if not state.types[e[0]][e[1]].ambiguous]
    if clean or not state.ambiguous_fallback:
        return clean
    return [e for e in fresh if _consistent(state, e[0], e[2])]


def _consistent(state: PeelingState, c: int, k: int) -> bool:
    """Could ``k`` still sit in its bin of every group other than ``c``?"""
    for other, types in enumerate(state.types):
        if other == c:
            continue
        t = types[state.contribution(other, k)[0]]
        if isinstance(t, Zeroton) or (isinstance(t, Singleton) and not t.ambiguous and t.k != k):
            return False
    return True


def peel_once(state: PeelingState, k: int, v: float) -> list[tuple[int, int]]:
    """Record ``F(k) = v`` and subtract it from its bin in every group.

    Returns the touched ``(c, j)`` bins.  A key that was already recovered is
    skipped (noiseless) or averaged in (noisy).
    """
    if k in state.recovered:
        old = state.recovered[k]
        if state.detector.mode == "noisy":
            cnt = state._counts.get(k, 1)
            new = (old * cnt + v) / (cnt + 1)
            state._counts[k] = cnt + 1
            delta = new - old
            state.recovered[k] = new
        else:
            state.duplicates += 1
            if abs(v - old) > 1e-6 * max(abs(old), abs(v)):
                state.inconsistent = True
            return []
    else:
        delta = v
        state.recovered[k] = v
        state._counts[k] = 1
    touched = []
    for c, U in enumerate(state.tables):
        j, keep = state.contribution(c, k)
        U[j] -= delta * keep
        touched.append((c, j))
    return touched


@dataclass
class RecoveryResult:
    F: SparseMobius
    report: dict
    state: PeelingState

    @property
    def complete(self) -> bool:
        return self.report["complete"]


def run(oracle, designs: list[SubsamplingDesign], detector: DetectorConfig | None = None,
        max_rounds: int | None = None, full_rescan: bool = False, track_conservation: bool = False,
        batch_size: int = 1024, noise_seed=None, seed=None, config_digest: str | None = None,
        ambiguous_fallback: bool = False) -> RecoveryResult:
    """Sparse Möbius transform of a black-box function.

    Samples every design, classifies bins, then peels singletons round by
    round until no new singleton appears.  Only bins changed by a round are
    re-classified unless ``full_rescan`` is set.  Ambiguous singletons are
    left alone unless ``ambiguous_fallback`` (see :func:`_select`).
    """
    t_start = time.perf_counter()
    if detector is None:
        detector = DetectorConfig(mode="noisy" if designs[0].regime == "noisy" else "noiseless")
    if detector.mode == "noisy":
        check_gamma(detector)
    stats = SamplingStats()
    tables = [t.U for t in build_bin_tables(oracle, designs, batch_size=batch_size,
                                            noise_seed=noise_seed, stats=stats)]
    scale = max((float(np.max(np.abs(U))) for U in tables if U.size), default=0.0) or 1.0
    state = PeelingState(designs, tables, detector, scale, ambiguous_fallback=ambiguous_fallback)
    if track_conservation:
        state.initial = [U.copy() for U in tables]
    t_sampled = time.perf_counter()

    t_detect = 0.0
    t_peel = 0.0
    t0 = time.perf_counter()
    frontier = initial_frontier(state)
    t_detect += time.perf_counter() - t0
    nonzero = sum(1 for types in state.types for t in types.values() if not isinstance(t, Zeroton))
    if max_rounds is None:
        max_rounds = 4 * max(1, nonzero)
    max_drift = 0.0

    pending = {(c, j) for c, j, _, _ in frontier}
    while frontier and state.rounds < max_rounds:
        if not any(e[2] not in state.recovered for e in frontier):
            break
        batch = _select(state, frontier)
        if not batch:
            break
        state.rounds += 1
        before = len(state.recovered)
        t0 = time.perf_counter()
        touched = set()
        for c, j, k, v in batch:
            if (c, j) in touched:
                # changed by an earlier peel in this batch; classify it again first
                continue
            touched.update(peel_once(state, k, v))
            pending.discard((c, j))
        t_peel += time.perf_counter() - t0

        t0 = time.perf_counter()
        if full_rescan:
            frontier = initial_frontier(state)
        else:
            by_group: dict[int, list[int]] = {}
            for c, j in touched:
                by_group.setdefault(c, []).append(j)
            for c, js in by_group.items():
                state.types[c].update(detect_table(state.tables[c], designs[c], detector, scale,
                                                   bins=sorted(set(js))))
            pending |= touched
            frontier = [e for e in _frontier(state, only=pending) if e[2] not in state.recovered]
            pending = {(c, j) for c, j, _, _ in frontier}
        t_detect += time.perf_counter() - t0
        entry = {"round": state.rounds, "new": len(state.recovered) - before,
                 "redetected": len(touched)}
        if track_conservation:
            drift = state.conservation_drift()
            max_drift = max(max_drift, drift)
            entry["drift"] = drift
        state.history.append(entry)
        log.debug("round %d: %d new coefficients", state.rounds, entry["new"])

    counts = {"zeroton": 0, "singleton": 0, "multiton": 0}
    stuck = 0
    for types in state.types:
        for t in types.values():
            if isinstance(t, Zeroton):
                counts["zeroton"] += 1
            elif isinstance(t, Multiton):
                counts["multiton"] += 1
            else:
                counts["singleton"] += 1
                stuck += t.k not in state.recovered
    hit_cap = any(e[2] not in state.recovered for e in frontier) and state.rounds >= max_rounds
    F = SparseMobius(state.n, dict(state.recovered))
    report = {
        "unique_queries": stats.unique_queries,
        "total_queries": stats.total_queries,
        "rounds": state.rounds,
        "bins": counts,
        "unresolved": counts["multiton"] + stuck,
        "unused_singletons": stuck,
        "recovered": len(F),
        "complete": counts["multiton"] == 0 and stuck == 0 and not hit_cap,
        "hit_round_cap": hit_cap,
        "inconsistent": state.inconsistent,
        "duplicates": state.duplicates,
        "seed": seed,
        "config_digest": config_digest,
        "timings": {
            **stats.timings,
            "sampling": t_sampled - t_start,
            "detection": t_detect,
            "peeling": t_peel,
            "total": time.perf_counter() - t_start,
        },
    }
    if track_conservation:
        report["max_conservation_drift"] = max_drift
    F.metadata = {"samples": stats.unique_queries, "bins": counts, "rounds": state.rounds}
    return RecoveryResult(F, report, state)


def detector_for(config: DesignConfig, **overrides) -> DetectorConfig:
    """Detector settings matching a design configuration."""
    if config.regime == "noisy":
        kw = dict(mode="noisy", gamma=config.gamma, sigma=config.sigma, rho=config.rho)
    else:
        kw = dict(mode="noiseless")
    kw.update(overrides)
    return DetectorConfig(**kw)


def transform(oracle, config: DesignConfig, detector: DetectorConfig | None = None, **kwargs) -> RecoveryResult:
    """Build designs from ``config`` and run the peeling decoder."""
    designs = make_designs(config)
    if detector is None:
        detector = detector_for(config)
    kwargs.setdefault("seed", config.seed)
    kwargs.setdefault("config_digest", config.digest())
    return run(oracle, designs, detector, **kwargs)


def report_json(report: dict, **kwargs) -> str:
    return json.dumps(report, sort_keys=True, **kwargs)


def digest_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]
