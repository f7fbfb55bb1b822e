"""
Heavy insertions, KPZ scaling and Mobius covariance
===================================================

A charge chi at z bends U like -chi ln|x - z|.  The scaling identity is
exact sample by sample, and the chaos measure transforms covariantly
under disk automorphisms.
"""

import numpy as np

from liouville_lab import (InsertionSet, build_lattice, conformal_check, kpz_exponent, kpz_rescaling_identity,
                           mobius, sample_exact, solve_liouville)

lat = build_lattice(1 / 32)
ins = InsertionSet.of(((0.0, 0.0), 1.0))
sol = solve_liouville(lat, 0.1, ins=ins)
for r in (0.05, 0.1, 0.2, 0.4):
    k = lat.nearest_node((r, 0.0))
    print(f"r = {r:4.2f}  U = {sol.U[k]:7.3f}  regular part = {sol.regular_part[k]:7.3f}")

X = sample_exact(lat, seed=3)
x = lat.points[:, 0]
rep = kpz_rescaling_identity(lat, 1.0, [0.5, 1.0], [x > 0.1, x < -0.1], 2.7, X)
print("KPZ pathwise deviation", rep.estimates["max_rel_dev"])
print("exponent for one gamma insertion", kpz_exponent(1.0, [1.0]))

res = conformal_check(sample_exact(lat, seed=4, size=4), 0.5, mobius((0.3, 0.0)))
for row in res["regions"]:
    print(row["region"], np.round(row["relative_error"], 4))
