"""Slow, independent reference implementations used as test oracles.

Everything here works on plain Python ints (bit i = variable i) and lists,
and shares no code with the package.
"""
import itertools
import math


def submasks(k):
    s = k
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & k


def popcount(k):
    return bin(k).count("1")


def mobius(f, n):
    """F(k) = sum_{m <= k} (-1)^{|k|-|m|} f(m), straight from the definition."""
    return [sum((-1) ** (popcount(k) - popcount(m)) * f[m] for m in submasks(k)) for k in range(1 << n)]


def zeta(F, n):
    return [sum(F[k] for k in submasks(m)) for m in range(1 << n)]


def evaluate(entries, m):
    return sum(v for k, v in entries.items() if k & m == k)


def or_product(rows, x):
    """OR product of a matrix (rows as int masks) with an int mask; returns an int over the rows."""
    return sum(1 << a for a, r in enumerate(rows) if r & x)


def bins(entries, H_rows, D_rows, b):
    """U[j][p] = sum of F(k) with H k = j and k disjoint from d_p (p = 0 is d = 0)."""
    delays = [0] + list(D_rows)
    U = [[0.0] * len(delays) for _ in range(1 << b)]
    for k, v in entries.items():
        j = or_product(H_rows, k)
        for p, d in enumerate(delays):
            if k & d == 0:
                U[j][p] += v
    return U


def shapley_permutations(f, n):
    """Average marginal contribution over all n! orderings."""
    out = [0.0] * n
    perms = list(itertools.permutations(range(n)))
    for order in perms:
        S = 0
        for i in order:
            out[i] += f[S | (1 << i)] - f[S]
            S |= 1 << i
    return [x / len(perms) for x in out]


def shapley_subsets(f, n):
    out = [0.0] * n
    for i in range(n):
        for S in range(1 << n):
            if S >> i & 1:
                continue
            s = popcount(S)
            w = math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
            out[i] += w * (f[S | (1 << i)] - f[S])
    return out


def banzhaf_subsets(f, n):
    out = [0.0] * n
    for i in range(n):
        tot = 0.0
        for S in range(1 << n):
            if not S >> i & 1:
                tot += f[S | (1 << i)] - f[S]
        out[i] = tot / (1 << (n - 1))
    return out
