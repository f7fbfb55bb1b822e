"""
Solving the Liouville equation
==============================

Newton on the convex energy.  With Lambda = 2 / pi^2 the flat solution
is 2 ln((1 - a) / (1 - a |x|^2)) with a = 1/2; refine to see O(h^2).
Then a source perturbation f and the rate function I*.
"""

import numpy as np

from liouville_lab import (build_lattice, disk_spectrum, gateaux_derivative, radial_solution, rate_function,
                           solve_liouville)

Lambda = 2 / np.pi**2
for h in (1 / 16, 1 / 32, 1 / 64):
    lat = build_lattice(h)
    sol = solve_liouville(lat, Lambda)
    err = np.abs(sol.U - radial_solution(lat.points, Lambda)).max()
    print(f"h = 1/{round(1 / h):<3d} iterations {sol.iterations}  residual {sol.residual_norm:.1e}"
          f"  Linf error {err:.2e}  F = {-sol.energy:.4f}")

# linear response to a source in the second Laplacian mode
f = disk_spectrum(lat, 2).vectors[:, 1]
W = gateaux_derivative(sol, f)
t = 1e-3
Ut = solve_liouville(lat, Lambda, f=t * f, initial=sol.regular_part).U
print("finite difference vs derivative:", np.abs((Ut - sol.U) / t - W).max())

print("I*(0) =", rate_function(lat, np.zeros(lat.n), Lambda, base=sol))
print("I*(0.1 f) =", rate_function(lat, 0.1 * f, Lambda, base=sol))
