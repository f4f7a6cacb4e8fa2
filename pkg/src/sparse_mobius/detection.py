"""Classify bins as zeroton, singleton or multiton.

A bin vector ``U`` has ``P + 1`` entries: the undelayed coefficient ``U[0]``
followed by one entry per delay row of the group's design.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import group_testing as gt
from .core import bits_to_mask, mask_to_bits
from .designs import SubsamplingDesign


@dataclass(frozen=True)
class Zeroton:
    pass


@dataclass(frozen=True)
class Multiton:
    pass


@dataclass(frozen=True)
class Singleton:
    k: int
    v: float
    # another index would explain the same test outcomes
    ambiguous: bool = False

    def __post_init__(self):
        if self.v == 0:
            raise ValueError("a singleton carries a non-zero value")


ZEROTON = Zeroton()
MULTITON = Multiton()
BinType = Zeroton | Singleton | Multiton


@dataclass
class DetectorConfig:
    mode: str = "noiseless"
    eps_ratio: float = 0.2
    eps_zero: float = 1e-8
    gamma: float = 0.5
    sigma: float = 0.0
    rho: float | None = None
    lam: float = 1.0
    decoder: str = "auto"
    snap: bool = True
    refine: bool = True
    z_rss: float = 3.0
    # false-alarm rate of the head-row energy check in the noisy zeroton test
    alpha_zero: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("noiseless", "noisy"):
            raise ValueError("mode must be 'noiseless' or 'noisy'")
        if self.eps_ratio <= 0 or self.eps_zero <= 0 or self.gamma <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.alpha_zero < 1:
            raise ValueError("alpha_zero must be in (0, 1)")
        if self.mode == "noisy" and self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def nu2(self) -> float:
        """Noise variance of a paired (differenced) observation."""
        return 2.0 * self.sigma ** 2

    def diagnostics(self, eta: float = 1.0) -> dict:
        """Bookkeeping for the verification slack condition ``gamma < eta * SNR / 4``."""
        out = {"gamma": self.gamma, "nu2": self.nu2}
        if self.rho and self.sigma > 0:
            snr = self.rho ** 2 / self.sigma ** 2
            out.update(snr=snr, eta=eta, gamma_limit=eta * snr / 4.0,
                       gamma_ok=self.gamma < eta * snr / 4.0)
        return out


def ratio_vector(U_bin) -> np.ndarray:
    """``y_p = 1 - U_p / U_0`` for ``p = 1..P``."""
    U_bin = np.asarray(U_bin, dtype=float)
    if U_bin[0] == 0:
        raise ZeroDivisionError("ratio vector undefined for U_0 = 0; classify zerotons first")
    return 1.0 - U_bin[1:] / U_bin[0]


def _survives(D, k_bits) -> np.ndarray:
    # 1{k <= complement(d_p)} for every row
    return ~gt.encode(D, k_bits)


def detect_noiseless(U_bin, design: SubsamplingDesign, j: int, config: DetectorConfig | None = None,
                     scale: float = 1.0) -> BinType:
    """Exact-arithmetic type rule made float safe.

    Zeroton when every entry is negligible.  Otherwise the ratio vector must
    be within ``eps_ratio`` of binary; the rounded outcomes are decoded
    (together with the bin's own hash bits) and the candidate must explain
    every entry of ``U`` to within ``eps_zero * scale``.
    """
    config = config or DetectorConfig()
    U_bin = np.asarray(U_bin, dtype=float)
    tol = config.eps_zero * scale
    if np.max(np.abs(U_bin)) <= tol:
        return ZEROTON
    u0 = U_bin[0]
    if abs(u0) <= tol:
        return MULTITON
    y = ratio_vector(U_bin)
    near1 = np.abs(y - 1.0) <= config.eps_ratio
    near0 = np.abs(y) <= config.eps_ratio
    if not np.all(near0 | near1):
        return MULTITON
    yb = near1
    jbits = mask_to_bits(j, design.b)
    ambiguous = False
    if design.is_identity:
        k_bits = gt.decode_identity(yb)
    else:
        tests = np.vstack([design.D, design.H])
        outcomes = np.concatenate([yb, jbits])
        k_bits = gt.decode(tests, outcomes, method=config.decoder, lam=config.lam)
        if k_bits is None:
            return MULTITON
        ambiguous = gt.is_ambiguous(tests, outcomes, k_bits)
    if not np.array_equal(gt.encode(design.H, k_bits), jbits):
        return MULTITON
    if not np.array_equal(gt.encode(design.D, k_bits), yb):
        return MULTITON
    model = u0 * np.concatenate([[True], _survives(design.D, k_bits)])
    if np.max(np.abs(U_bin - model)) > tol:
        return MULTITON
    return Singleton(bits_to_mask(k_bits), float(u0), ambiguous)


def _fit_value(U_bin, keep, config: DetectorConfig) -> float:
    v = float(keep @ U_bin) / float(keep.sum())
    if config.snap and config.rho:
        v = float(np.sign(v) * config.rho)
    return v


def refine_index(U_bin, design: SubsamplingDesign, j: int, k_bits, config: DetectorConfig,
                 max_iter: int | None = None) -> np.ndarray:
    """Greedy single-bit flips that lower the residual over every row of the bin.

    Only flips keeping ``H k = j`` are considered.  The model for a singleton
    ``(k, v)`` is ``v * [1; 1{k <= ~d_p}]``.
    """
    U_bin = np.asarray(U_bin, dtype=float)
    D = design.D.astype(np.int32)
    H = design.H.astype(np.int32)
    jbits = mask_to_bits(j, design.b)
    k = np.asarray(k_bits, dtype=bool).copy()
    n = design.n
    max_iter = n if max_iter is None else max_iter

    def rss(keep):
        v = _fit_value(U_bin, keep, config)
        return float(np.sum((U_bin - v * keep) ** 2))

    keep = np.concatenate([[1.0], (D @ k == 0).astype(float)])
    best = rss(keep)
    for _ in range(max_iter):
        sign = np.where(k, -1, 1)
        dcnt = (D @ k)[:, None] + D * sign
        hcnt = (H @ k)[:, None] + H * sign
        ok = np.all((hcnt > 0) == jbits[:, None], axis=0)
        keeps = np.vstack([np.ones((1, n)), (dcnt == 0)]).astype(float)
        v = (keeps * U_bin[:, None]).sum(0) / keeps.sum(0)
        if config.snap and config.rho:
            v = np.sign(v) * config.rho
        scores = np.sum((U_bin[:, None] - keeps * v) ** 2, axis=0)
        scores[~ok] = np.inf
        i = int(np.argmin(scores))
        if not scores[i] < best - 1e-12:
            break
        best = float(scores[i])
        k[i] = ~k[i]
    return k


def detect_noisy(U_bin, design: SubsamplingDesign, j: int, config: DetectorConfig,
                 scale: float = 1.0) -> BinType:
    """Noise-robust detection on a ``[D_id; D1; D2]`` design.

    Zeroton test on the energy of the paired differences ``U1 - U2`` (and of
    the undelayed plus identification rows), identification by thresholded
    group testing on the ``D_id`` rows, then a least-squares value and a
    residual test on the paired rows.
    """
    if design.regime != "noisy":
        raise ValueError("noisy detection needs a noisy-regime design")
    U_bin = np.asarray(U_bin, dtype=float)
    P1, P2 = design.P1, design.P2
    head = U_bin[: 1 + P1]
    U_id = U_bin[1:1 + P1]
    pair = U_bin[1 + P1:1 + P1 + P2] - U_bin[1 + P1 + P2:]
    floor = (config.eps_zero * scale) ** 2
    sigma2 = max(config.sigma ** 2, floor)
    nu2 = max(config.nu2, floor)
    slack = 1.0 + config.gamma

    if P2 == 0:
        raise ValueError("noisy design has no verification rows")
    # the paired rows cancel a constant term, so the undelayed and
    # identification rows get their own chi-square bound
    if (np.mean(pair ** 2) <= slack * nu2
            and np.sum(head ** 2) <= sigma2 * stats.chi2.isf(config.alpha_zero, head.size)):
        return ZEROTON

    rho = config.rho if config.rho else abs(U_bin[0])
    if rho <= 0:
        return MULTITON
    if config.sigma > 0:
        thr, _ = gt.solve_gamma(rho, config.sigma)
    else:
        thr = rho / 2.0
    y = gt.threshold_outcomes(U_id, thr)
    jbits = mask_to_bits(j, design.b)
    k_bits = gt.decode_lp(np.vstack([design.D_id, design.H]), np.concatenate([y, jbits]),
                          lam=config.lam, verify=False)
    if k_bits is None:
        return MULTITON
    if not np.array_equal(gt.encode(design.H, k_bits), jbits):
        return MULTITON
    if config.refine:
        k_bits = refine_index(U_bin, design, j, k_bits, config)
    keep = np.concatenate([[True], _survives(design.D, k_bits)]).astype(float)
    v_all = _fit_value(U_bin, keep, config)
    N = U_bin.size
    # chi-square style check over every row: RSS ~ sigma^2 chi2_N for a true singleton
    if np.sum((U_bin - v_all * keep) ** 2) > sigma2 * (N + config.z_rss * np.sqrt(2.0 * N)):
        return MULTITON

    s = _survives(design.D1, k_bits).astype(float) - _survives(design.D2, k_bits).astype(float)
    ss = float(s @ s)
    if ss == 0:
        if k_bits.any() or v_all == 0:
            return MULTITON
        # the constant term is invisible to paired rows; the full-row check above stands in
        return Singleton(0, v_all)
    v = float(s @ pair) / ss
    if config.snap and config.rho:
        v = float(np.sign(v) * config.rho)
    if v == 0:
        return MULTITON
    if np.mean((pair - v * s) ** 2) > slack * nu2:
        return MULTITON
    return Singleton(bits_to_mask(k_bits), v)


def detect(U_bin, design: SubsamplingDesign, j: int, config: DetectorConfig, scale: float = 1.0) -> BinType:
    if config.mode == "noisy":
        return detect_noisy(U_bin, design, j, config, scale)
    return detect_noiseless(U_bin, design, j, config, scale)


def detect_table(U: np.ndarray, design: SubsamplingDesign, config: DetectorConfig,
                 scale: float = 1.0, bins=None) -> dict[int, BinType]:
    """Classify the given bins (default: all) of one group's table."""
    if bins is None:
        bins = range(U.shape[0])
    bins = np.asarray(list(bins), dtype=np.int64)
    out: dict[int, BinType] = {}
    if bins.size == 0:
        return out
    if config.mode == "noiseless":
        # cheap vectorised screen before the per-bin decode
        sub = U[bins]
        tol = config.eps_zero * scale
        zero = np.max(np.abs(sub), axis=1) <= tol
        u0 = sub[:, 0]
        small0 = np.abs(u0) <= tol
        with np.errstate(divide="ignore", invalid="ignore"):
            y = 1.0 - sub[:, 1:] / u0[:, None]
        binary = np.all((np.abs(y) <= config.eps_ratio) | (np.abs(y - 1) <= config.eps_ratio), axis=1)
        live = ~zero & ~small0 & binary
        if design.is_identity and live.any():
            # D = I: the rounded ratio vector is the index itself, check all at once
            kb = np.abs(y[live] - 1.0) <= config.eps_ratio
            jb = ((bins[live, None] >> np.arange(design.b)) & 1).astype(bool)
            hk = (kb.astype(np.float32) @ design.H.T.astype(np.float32)) > 0
            model = sub[live, :1] * np.hstack([np.ones((kb.shape[0], 1)), ~kb])
            fits = np.all(hk == jb, axis=1) & (np.max(np.abs(sub[live] - model), axis=1) <= tol)
            fast = dict(zip(np.nonzero(live)[0].tolist(), zip(fits.tolist(), kb)))
        else:
            fast = {}
        for idx, j in enumerate(bins.tolist()):
            if zero[idx]:
                out[j] = ZEROTON
            elif not live[idx]:
                out[j] = MULTITON
            elif idx in fast:
                ok, kbits = fast[idx]
                out[j] = Singleton(bits_to_mask(kbits), float(sub[idx, 0])) if ok else MULTITON
            else:
                out[j] = detect_noiseless(sub[idx], design, j, config, scale)
        return out
    for j in bins.tolist():
        out[j] = detect_noisy(U[j], design, j, config, scale)
    return out


def check_gamma(config: DetectorConfig, eta: float = 1.0):
    """Warn when the verification slack breaks ``gamma < eta * SNR / 4``."""
    diag = config.diagnostics(eta)
    if diag.get("gamma_ok") is False:
        warnings.warn(f"gamma={config.gamma} exceeds eta*SNR/4={diag['gamma_limit']:.3g}; "
                      "verification guarantees do not apply", RuntimeWarning, stacklevel=2)
    return diag
