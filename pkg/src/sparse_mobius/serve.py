"""Serve a coefficient file as a line-protocol oracle on stdin/stdout.

    python -m sparse_mobius.serve --coeffs coeffs.json
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .core import SparseMobius, evaluate_many
from .sampling import serve


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m sparse_mobius.serve")
    p.add_argument("--coeffs", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="std of Gaussian noise added to each answer")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    F = SparseMobius.load(args.coeffs)
    rng = np.random.default_rng(args.seed)

    def answer(masks):
        vals = evaluate_many(F, masks)
        if args.noise:
            vals = vals + rng.normal(0.0, args.noise, size=vals.shape)
        return vals

    serve(answer, F.dim, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
