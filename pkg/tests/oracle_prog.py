"""Line-protocol oracle used by the CLI tests.

usage: oracle_prog.py COEFFS.json [--die-after N]
"""
import sys

import numpy as np

from sparse_mobius.core import SparseMobius, evaluate_many


def main(argv):
    F = SparseMobius.load(argv[0])
    die_after = int(argv[2]) if len(argv) > 2 and argv[1] == "--die-after" else None
    served = 0
    for line in sys.stdin:
        line = line.strip()
        if line == "END":
            break
        count = int(line.split()[1])
        rows = [sys.stdin.readline().strip() for _ in range(count)]
        if die_after is not None and served + count > die_after:
            sys.exit(1)
        masks = np.array([[c == "1" for c in r] for r in rows], dtype=bool).reshape(count, F.dim)
        for v in evaluate_many(F, masks):
            sys.stdout.write(repr(float(v)) + "\n")
        sys.stdout.flush()
        served += count


if __name__ == "__main__":
    main(sys.argv[1:])
