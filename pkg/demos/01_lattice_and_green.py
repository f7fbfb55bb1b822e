"""
The disk lattice and its Green function
=======================================

Build the clipped grid, check the discrete Green kernel against the
closed form ln|1 - x conj(y)| - ln|x - y|, and watch Poisson errors
shrink at second order.
"""

import numpy as np

from liouville_lab import build_lattice, conformal_radius, green_apply, green_kernel

lat = build_lattice(1 / 32)
print(lat, "bandwidth", lat.bandwidth)

# one column of G = 2 pi A^{-1}, next to the continuum kernel
i = lat.nearest_node((0.0, 0.0))
col = lat.green_columns([i])[:, 0]
for x in (0.125, 0.25, 0.5, 0.75):
    j = lat.nearest_node((x, 0.0))
    print(f"G(0, {x:5.3f}) lattice {col[j]:.4f}  exact {green_kernel((0, 0), (x, 0)):.4f}")

# -Laplacian u = 2 pi has the solution u = (pi / 2)(1 - |x|^2)
for h in (1 / 16, 1 / 32, 1 / 64):
    L = build_lattice(h)
    u = green_apply(L, np.ones(L.n))
    err = np.abs(u - np.pi / 2 * conformal_radius(L.points)).max()
    print(f"h = 1/{round(1 / h):<3d} nodes {L.n:6d}  max error {err:.2e}")
