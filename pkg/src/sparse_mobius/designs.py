"""Subsampling matrices ``H_c`` and delay matrices ``D_c``.

Three regimes are supported:

``uniform``
    unit-vector rows of ``H`` over disjoint index sets, ``D = I``.
``lowdeg``
    constant column weight ``H`` and a group-testing ``D`` for interactions of
    degree at most ``t`` (noiseless).
``noisy``
    the same ``H`` and ``D = [D_id; D1; D2]``: identification rows followed
    by two blocks of paired verification rows.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import matrix_to_masks, masks_to_matrix, str_to_mask

REGIMES = ("uniform", "lowdeg", "noisy")


class DesignError(ValueError):
    pass


@dataclass
class DesignConfig:
    n: int
    b: int
    C: int = 3
    regime: str = "uniform"
    t: int | None = None
    nu: float = math.log(2)
    gamma: float = 0.5
    sigma: float = 0.0
    rho: float | None = None
    seed: int = 0
    c_gt: float = 2.0
    c_ver: float = 2.0
    beta: float = 1.0
    # uniform regime only: let index windows overlap when C*b > n
    overlap: bool = False
    # explicit row count for the noiseless group-testing D (overrides c_gt)
    P: int | None = None
    # i.i.d. Bernoulli H instead of constant column weight (lowdeg/noisy)
    bernoulli_H: bool = False
    # group-testing rows: "ccw" (constant column weight) or "bernoulli"
    gt_design: str = "ccw"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.regime not in REGIMES:
            raise DesignError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.n < 1:
            raise DesignError("n must be positive")
        if self.b < 0:
            raise DesignError("b must be non-negative")
        if self.C < 2:
            raise DesignError("C must be at least 2")
        if self.regime == "uniform":
            if self.b > self.n:
                raise DesignError("uniform regime needs b <= n")
            if self.C * self.b > self.n and not self.overlap:
                raise DesignError(f"uniform regime needs C*b <= n (got {self.C}*{self.b} > {self.n})")
        else:
            if self.t is None or self.t < 1:
                raise DesignError(f"regime {self.regime!r} needs a degree bound t >= 1")
            if self.t > self.n:
                raise DesignError("t must not exceed n")
        if self.gamma <= 0:
            raise DesignError("gamma must be positive")
        if self.nu <= 0:
            raise DesignError("nu must be positive")
        if self.regime == "noisy" and self.sigma < 0:
            raise DesignError("sigma must be non-negative")
        if self.P is not None and self.P < 0:
            raise DesignError("P must be non-negative")
        if self.gt_design not in ("ccw", "bernoulli"):
            raise DesignError("gt_design must be 'ccw' or 'bernoulli'")

    def digest(self) -> str:
        import hashlib
        blob = json.dumps(vars(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class SubsamplingDesign:
    """One subsampling group: ``H`` (b x n) and stored delay rows ``D`` (P x n).

    The implicit all-zero delay ``d_0`` is not stored.  In the noisy regime
    ``D`` stacks ``P1`` identification rows and two ``P2``-row paired blocks.
    """

    H: np.ndarray
    D: np.ndarray
    regime: str
    P1: int = 0
    P2: int = 0
    index_set: list[int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=bool)
        self.D = np.asarray(self.D, dtype=bool).reshape(-1, self.H.shape[1])
        if self.regime == "noisy" and self.P1 + 2 * self.P2 != self.D.shape[0]:
            raise DesignError("noisy design needs P = P1 + 2*P2 delay rows")

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def b(self) -> int:
        return self.H.shape[0]

    @property
    def P(self) -> int:
        return self.D.shape[0]

    @property
    def D_id(self) -> np.ndarray:
        return self.D[: self.P1] if self.regime == "noisy" else self.D

    @property
    def D1(self) -> np.ndarray:
        return self.D[self.P1: self.P1 + self.P2]

    @property
    def D2(self) -> np.ndarray:
        return self.D[self.P1 + self.P2:]

    @cached_property
    def is_identity(self) -> bool:
        return self.D.shape == (self.n, self.n) and np.array_equal(self.D, np.eye(self.n, dtype=bool))

    @cached_property
    def row_masks(self) -> tuple[list[int], list[int]]:
        """Rows of ``H`` and ``D`` as integer masks."""
        return matrix_to_masks(self.H), matrix_to_masks(self.D)

    def samples(self) -> int:
        return (self.P + 1) << self.b

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "n": self.n,
            "b": self.b,
            "P1": self.P1,
            "P2": self.P2,
            "H": [_row_str(r) for r in self.H],
            "D": [_row_str(r) for r in self.D],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubsamplingDesign":
        n = d["n"]
        H = masks_to_matrix([str_to_mask(s) for s in d["H"]], n)
        D = masks_to_matrix([str_to_mask(s) for s in d["D"]], n)
        return cls(H, D, d["regime"], d.get("P1", 0), d.get("P2", 0))


def _row_str(row) -> str:
    return "".join("1" if x else "0" for x in row)


def designs_to_json(designs: list[SubsamplingDesign], **kwargs) -> str:
    return json.dumps([d.to_dict() for d in designs], **kwargs)


def designs_from_json(text: str) -> list[SubsamplingDesign]:
    return [SubsamplingDesign.from_dict(d) for d in json.loads(text)]


# ---------------------------------------------------------------------------
# H constructions
# ---------------------------------------------------------------------------

def uniform_index_sets(n: int, b: int, C: int, perm=None, overlap: bool = False) -> list[list[int]]:
    """Index sets ``I_c`` as consecutive windows of a permutation of ``range(n)``.

    Windows are disjoint when ``C*b <= n``.  With ``overlap`` they wrap
    cyclically, offset by ``n // C`` so the discarded coordinates differ
    between groups.
    """
    if perm is None:
        perm = np.arange(n)
    perm = [int(i) for i in perm]
    if sorted(perm) != list(range(n)):
        raise DesignError("perm must be a permutation of range(n)")
    if b > n:
        raise DesignError("need b <= n")
    if C * b <= n:
        return [perm[c * b:(c + 1) * b] for c in range(C)]
    if not overlap:
        raise DesignError(f"cannot place {C} disjoint index sets of size {b} in {n} variables")
    step = max(1, n // C)
    return [[perm[(c * step + i) % n] for i in range(b)] for c in range(C)]


def make_uniform_H(n: int, b: int, C: int, seed=None, perm=None, overlap: bool = False) -> list[np.ndarray]:
    """Unit-vector ``H_c`` over disjoint index sets drawn from a seeded permutation.

    Pass ``perm`` to fix the permutation (e.g. the identity) instead of
    drawing it from ``seed``.
    """
    if perm is None:
        perm = np.random.default_rng(seed).permutation(n)
    sets = uniform_index_sets(n, b, C, perm, overlap)
    out = []
    for I in sets:
        H = np.zeros((b, n), dtype=bool)
        H[np.arange(b), I] = True
        out.append(H)
    return out


def lowdeg_density(t: int) -> float:
    """Bernoulli density making a degree-``t`` index hash to each bit with probability 1/2."""
    if t < 1:
        raise DesignError("t must be >= 1")
    return -math.expm1(-math.log(2) / t)


def lowdeg_column_weights(b: int, t: int, n: int, rng) -> np.ndarray:
    """Per-column weights ``floor(b p)`` or ``ceil(b p)`` with mean ``b p`` (at least 1).

    ``p = 1 - 2**(-1/t)``, so each row covers a given column with probability
    ``p`` and a degree-``t`` index sets each hash bit with probability 1/2.
    """
    bp = b * lowdeg_density(t)
    lo = int(np.floor(bp))
    w = lo + (rng.random(n) < bp - lo)
    return np.clip(w, 1, b)


def make_lowdeg_H(n: int, b: int, C: int, t: int, seed=None, bernoulli: bool = False) -> list[np.ndarray]:
    """``C`` hashing matrices for degree-``t`` interactions.

    By default every column has near-constant weight
    (:func:`lowdeg_column_weights`) and rows are filled evenly, so no variable
    is ignored by the hash and every hash bit is unbiased.  With
    ``bernoulli`` the entries are i.i.d. Bernoulli(``1 - 2**(-1/t)``) instead.
    """
    rng = np.random.default_rng(seed)
    if bernoulli:
        p = lowdeg_density(t)
        return [rng.random((b, n)) < p for _ in range(C)]
    out = []
    if b == 0:
        return [np.zeros((0, n), dtype=bool) for _ in range(C)]
    for _ in range(C):
        w = lowdeg_column_weights(b, t, n, rng)
        H = np.zeros((b, n), dtype=bool)
        fill = np.zeros(b)
        # least-filled rows first (random tie-break) keeps every row near n*p ones
        for i in rng.permutation(n):
            rows = np.argsort(fill + 0.5 * rng.random(b))[:w[i]]
            H[rows, i] = True
            fill[rows] += 1
        out.append(H)
    return out


# ---------------------------------------------------------------------------
# D constructions
# ---------------------------------------------------------------------------

def group_test_rows(n: int, t: int, c: float) -> int:
    return int(math.ceil(c * t * math.log2(n))) if n > 1 else 1


def binary_search_D() -> np.ndarray:
    """The 3 x 6 delay matrix that identifies any single active variable among six."""
    return np.array([[1, 1, 1, 1, 0, 0],
                     [1, 1, 0, 0, 1, 1],
                     [1, 0, 1, 0, 1, 0]], dtype=bool)


def group_testing_matrix(P: int, n: int, t: int, nu: float, rng, kind: str = "ccw") -> np.ndarray:
    """``P x n`` test matrix with each item in about ``nu / t`` of the tests.

    ``kind="ccw"`` puts every column in exactly ``max(1, round(nu P / t))``
    random tests; ``"bernoulli"`` draws entries i.i.d. Bernoulli(``nu / t``).
    """
    if kind == "bernoulli":
        return rng.random((P, n)) < nu / t
    if kind != "ccw":
        raise DesignError(f"unknown group-testing design {kind!r}")
    D = np.zeros((P, n), dtype=bool)
    if P == 0:
        return D
    L = min(P, max(1, int(round(nu * P / t))))
    rows = np.argpartition(rng.random((n, P)), L - 1, axis=1)[:, :L]
    D[rows.T, np.arange(n)[None, :]] = True
    return D


def _degenerate(config: DesignConfig) -> bool:
    return config.t is not None and 2 * config.t >= config.n


def make_D(config: DesignConfig, rng=None) -> tuple[np.ndarray, int, int]:
    """Delay rows for one group; returns ``(D, P1, P2)``.

    ``P1``/``P2`` are only meaningful in the noisy regime (zero otherwise).
    """
    n, t = config.n, config.t
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.regime == "uniform" or (config.regime == "lowdeg" and _degenerate(config)):
        return np.eye(n, dtype=bool), 0, 0
    if config.regime == "lowdeg":
        P = config.P if config.P is not None else group_test_rows(n, t, config.c_gt)
        return group_testing_matrix(P, n, t, config.nu, rng, config.gt_design), 0, 0
    # noisy
    P1 = group_test_rows(n, t, config.c_gt * (1 + config.beta))
    P2 = group_test_rows(n, t, config.c_ver)
    if _degenerate(config):
        D_id = np.eye(n, dtype=bool)
        P1 = n
    else:
        D_id = group_testing_matrix(P1, n, t, config.nu, rng, config.gt_design)
    # verification rows keep a degree-t index with probability 1/2 each
    q = lowdeg_density(t)
    D1 = rng.random((P2, n)) < q
    D2 = rng.random((P2, n)) < q
    return np.vstack([D_id, D1, D2]), P1, P2


def make_designs(config: DesignConfig) -> list[SubsamplingDesign]:
    """All ``C`` groups for a configuration, deterministic in ``config.seed``."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    h_seed, *d_seeds = root.spawn(config.C + 1)
    if config.regime == "uniform":
        perm = np.random.default_rng(h_seed).permutation(config.n)
        sets = uniform_index_sets(config.n, config.b, config.C, perm, config.overlap)
        Hs = make_uniform_H(config.n, config.b, config.C, perm=perm, overlap=config.overlap)
    else:
        sets = [None] * config.C
        Hs = make_lowdeg_H(config.n, config.b, config.C, config.t, seed=h_seed,
                           bernoulli=config.bernoulli_H)
    designs = []
    for c in range(config.C):
        D, P1, P2 = make_D(config, np.random.default_rng(d_seeds[c]))
        designs.append(SubsamplingDesign(Hs[c], D, config.regime, P1, P2, index_set=sets[c]))
    return designs

