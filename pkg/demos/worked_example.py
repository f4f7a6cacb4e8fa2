"""Walk through the six-variable toy instance bin by bin.

Two groups of four bins each; the delay matrix is the identity.  Prints the
bin tables, the bin types, and what changes when one singleton is peeled.
"""
import numpy as np

from sparse_mobius.core import mask_to_str
from sparse_mobius.detection import DetectorConfig, Singleton, detect_table
from sparse_mobius.peeling import PeelingState, initial_frontier, peel_once, run
from sparse_mobius.sampling import SparseOracle, build_bin_tables
from sparse_mobius.synth import toy_instance

np.set_printoptions(precision=3, suppress=True, linewidth=120)


def describe(t, n):
    if isinstance(t, Singleton):
        return f"Singleton  F({mask_to_str(t.k, n)}) = {t.v:+.3f}"
    return type(t).__name__


F, designs = toy_instance()
n = F.dim
print("planted coefficients:")
for k, v in sorted(F.items()):
    print(f"  {mask_to_str(k, n)}  {v:+.3f}")

tables = [t.U for t in build_bin_tables(SparseOracle(F), designs)]
scale = max(float(np.abs(U).max()) for U in tables)
state = PeelingState(designs, [U.copy() for U in tables], DetectorConfig(), scale)
initial_frontier(state)

for c, (U, types) in enumerate(zip(tables, state.types)):
    print(f"\ngroup {c + 1}: rows are bins, column 0 undelayed, then one column per delay")
    for j in range(U.shape[0]):
        print(f"  bin {mask_to_str(j, 2)}  {U[j]}  -> {describe(types[j], n)}")

single = state.types[1][2]
print(f"\npeel group 2 bin 01: {describe(single, n)}")
peel_once(state, single.k, single.v)
after = detect_table(state.tables[0], designs[0], DetectorConfig(), scale, bins=[3])[3]
print(f"group 1 bin 11 is now: {describe(after, n)}")

res = run(SparseOracle(F), designs)
print(f"\nfull run: {len(res.F)} coefficients, {res.report['rounds']} rounds, "
      f"{res.report['unique_queries']} unique queries (2^{n} = {1 << n})")
