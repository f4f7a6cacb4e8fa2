"""Recover a singleton's index from OR-pooled test outcomes.

A test row ``d_p`` is *positive* (``y_p = 1``) when it overlaps the active
index ``k``, i.e. ``y = D k`` in the OR semiring.  Decoders return a bool
vector, or ``None`` when they cannot commit to an answer (callers treat the
bin as a multiton).
"""
from __future__ import annotations

import logging

import numpy as np
from scipy import optimize, stats

log = logging.getLogger(__name__)


def _as_instance(D, y):
    D = np.asarray(D, dtype=bool)
    y = np.asarray(y).astype(bool).ravel()
    if D.ndim != 2 or D.shape[0] != y.size:
        raise ValueError(f"D has {D.shape[0] if D.ndim == 2 else '?'} rows but y has {y.size} entries")
    return D, y


def encode(D, k) -> np.ndarray:
    """Noiseless outcomes ``D k`` (OR product)."""
    D = np.asarray(D, dtype=bool)
    k = np.asarray(k, dtype=bool)
    return (D & k).any(axis=1)


def decode_identity(y) -> np.ndarray:
    """With ``D = I`` the outcomes are the index itself."""
    return np.asarray(y).astype(bool).copy()


def decode_comp_dd(D, y, strict: bool = True) -> np.ndarray | None:
    """COMP elimination followed by definite-defective confirmation.

    Items in any negative test are cleared.  An item that is the only
    surviving candidate in some positive test is a definite defective.  The
    definite set is returned when it explains every positive test; otherwise
    ``None`` in strict mode, or the full COMP candidate set.
    """
    D, y = _as_instance(D, y)
    n = D.shape[1]
    if not y.any():
        return np.zeros(n, dtype=bool)
    candidates = ~D[~y].any(axis=0)
    pos = D[y] & candidates
    counts = pos.sum(axis=1)
    if np.any(counts == 0):
        # a positive test with no candidate cannot be explained
        return None
    definite = pos[counts == 1].any(axis=0)
    if np.array_equal(encode(D, definite), y):
        return definite
    if strict:
        return None
    return candidates


def is_ambiguous(D, y, k) -> bool:
    """True when a COMP candidate outside ``k`` could be added without changing ``D k``.

    Such an item only appears in tests ``k`` already makes positive, so a
    defective hidden behind the others looks exactly like it.
    """
    D, y = _as_instance(D, y)
    k = np.asarray(k, dtype=bool)
    candidates = ~D[~y].any(axis=0)
    return bool(np.any(candidates & ~k))


def decode_lp(D, y, lam: float = 1.0, verify: bool = True, threshold: float = 0.5,
              integral_fallback: bool = True) -> np.ndarray | None:
    """Linear-programming relaxation with slack on every test.

    Minimises ``sum(k) + lam * sum(xi)`` subject to ``d_p.k = xi_p`` on
    negative tests and ``d_p.k + xi_p >= 1``, ``xi_p <= 1`` on positive
    ones, then rounds ``k > threshold``.  With ``verify`` the rounded
    answer must reproduce ``y`` exactly; if it does not (a fractional
    vertex, or slack tying with the true set), the program is re-solved
    without slack and with integral ``k`` before giving up.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    D, y = _as_instance(D, y)
    P, n = D.shape
    if not y.any() and verify:
        return np.zeros(n, dtype=bool)
    Df = D.astype(float)
    cost = np.concatenate([np.ones(n), np.full(P, lam)])
    neg = np.nonzero(~y)[0]
    posi = np.nonzero(y)[0]
    # negative tests: d.k - xi = 0
    A_eq = np.hstack([Df[neg], -np.eye(P)[neg]]) if neg.size else None
    b_eq = np.zeros(neg.size) if neg.size else None
    # positive tests: -(d.k) - xi <= -1
    A_ub = np.hstack([-Df[posi], -np.eye(P)[posi]]) if posi.size else None
    b_ub = -np.ones(posi.size) if posi.size else None
    bounds = [(0, None)] * n + [(0, 1) if y[p] else (0, None) for p in range(P)]
    res = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                           bounds=bounds, method="highs")
    if res.status != 0:
        log.debug("group-testing LP failed: %s", res.message)
        return None
    k = res.x[:n] > threshold
    if verify and not np.array_equal(encode(D, k), y):
        if not integral_fallback:
            return None
        # noiseless integer program: no slack, integral k
        tight = [(0, None)] * n + [(0, 0)] * P
        res = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=tight,
                               method="highs", integrality=np.r_[np.ones(n), np.zeros(P)])
        if res.status != 0:
            return None
        k = res.x[:n] > threshold
        if not np.array_equal(encode(D, k), y):
            return None
    return k


def decode(D, y, method: str = "auto", lam: float = 1.0) -> np.ndarray | None:
    """Noiseless decoding: identity shortcut, then COMP/DD, then LP."""
    D, y = _as_instance(D, y)
    if method == "identity" or (method == "auto" and D.shape[0] == D.shape[1]
                                and np.array_equal(D, np.eye(D.shape[0], dtype=bool))):
        return decode_identity(y)
    if method in ("auto", "comp_dd"):
        k = decode_comp_dd(D, y)
        if k is not None or method == "comp_dd":
            return k
    return decode_lp(D, y, lam=lam)


# ---------------------------------------------------------------------------
# noisy tests
# ---------------------------------------------------------------------------

def threshold_outcomes(u_rows, gamma_thr: float) -> np.ndarray:
    """Positive test where the delayed coefficient vanished: ``|U_p| <= gamma``."""
    if gamma_thr <= 0:
        raise ValueError("threshold must be positive")
    return np.abs(np.asarray(u_rows, dtype=float)) <= gamma_thr


def crossover_probs(gamma: float, rho: float, sigma: float) -> tuple[float, float]:
    """``(p01, p10)`` of the threshold test ``|X| > gamma``.

    ``p01`` is a false alarm under ``X ~ N(0, sigma^2)``; ``p10`` a miss
    under ``X ~ N(rho, sigma^2)``.
    """
    p01 = 2.0 * stats.norm.sf(gamma / sigma)
    p10 = stats.norm.cdf((gamma - rho) / sigma) - stats.norm.cdf((-gamma - rho) / sigma)
    return float(p01), float(p10)


def _log_gap(gamma, rho, sigma):
    log_p01 = np.log(2.0) + stats.norm.logsf(gamma / sigma)
    a = (gamma - rho) / sigma
    b = (-gamma - rho) / sigma
    la, lb = stats.norm.logcdf(a), stats.norm.logcdf(b)
    # -inf near gamma = 0 is fine: only the sign matters to the root finder
    with np.errstate(divide="ignore"):
        log_p10 = la + np.log1p(-np.exp(lb - la))
    return log_p10 - log_p01


def solve_gamma(rho: float, sigma: float) -> tuple[float, float]:
    """Threshold equalising both crossover probabilities; returns ``(gamma, q)``.

    The root is bracketed on ``(0, rho + 40 sigma)``: below ``rho`` for any
    reasonable SNR, but at low SNR the crossing moves past ``rho``.
    """
    if rho <= 0 or sigma < 0:
        raise ValueError("need rho > 0 and sigma >= 0")
    if sigma == 0:
        return rho / 2.0, 0.0
    lo = 1e-9 * min(rho, sigma)
    hi = rho + 40.0 * sigma
    gamma = optimize.brentq(_log_gap, lo, hi, args=(rho, sigma), xtol=1e-15 * max(rho, sigma),
                            rtol=4 * np.finfo(float).eps, maxiter=500)
    p01, p10 = crossover_probs(gamma, rho, sigma)
    return float(gamma), 0.5 * (p01 + p10)
