"""
Free field samples and the chaos measure
========================================

Exact lattice GFF samples have covariance G.  Wick-ordering the
exponential, with the conformal radius correction, gives a random
measure whose mean total mass is 2 pi / (2 + gamma^2).
"""

import numpy as np

from liouville_lab import build_lattice, gmc_measure, sample_exact, wick_power

lat = build_lattice(1 / 32)

X = sample_exact(lat, seed=1, size=2000)
i, j = lat.nearest_node((0, 0)), lat.nearest_node((0.5, 0))
print("Cov(X(0), X(0.5)) =", np.cov(X.field[:, i], X.field[:, j])[0, 1], " ln 2 =", np.log(2))

# Wick powers are centred: the mean of :X^3: is zero up to noise
w3 = wick_power(X, 3)[:, i]
print(f"mean :X^3: at the centre {w3.mean():.2f} +- {w3.std() / np.sqrt(len(w3)):.2f}")

for gamma in (0.5, 1.0, 1.4):
    mass = gmc_measure(X, gamma).total_mass
    print(f"gamma {gamma}: mean mass {mass.mean():.3f} +- {mass.std() / np.sqrt(len(mass)):.3f}"
          f"   2 pi/(2+gamma^2) = {2 * np.pi / (2 + gamma**2):.3f}")
