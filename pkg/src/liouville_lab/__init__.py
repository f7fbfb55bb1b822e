"""Semiclassical Liouville field theory on the unit disk.

Lattice geometry and Green operators, exact Gaussian free field sampling,
Wick calculus and multiplicative chaos, a Newton solver for the Liouville
equation, weighted spectra, and Monte Carlo checks of the semiclassical
limit.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DomainError, LiouvilleLabError, NumericalError,  # noqa: E402
                     UsageError)
from .geometry import (DiskLattice, InsertionSet, LftParams, MetricTensor, MobiusMap,  # noqa: E402
                       build_lattice, conformal_radius, green_apply, green_kernel, h1_energy,
                       hminus1_norm, integrate, laplacian_apply, mobius)
from .gff import (GffSample, SpectralBasis, circle_average, covariance_panel, disk_spectrum,  # noqa: E402
                  sample_exact, sample_obe, sample_wn_cutoff)
from .chaos import (ChaosMeasure, conformal_check, gmc_measure, insertion_weight,  # noqa: E402
                    pushforward_measure, wick_exponential, wick_power)
from .solver import (LiouvilleSolution, SolverConfig, energy, free_energy, gateaux_derivative,  # noqa: E402
                     legendre_check, perturbed_free_energy, radial_solution, rate_function,
                     solution_continuity_check, solve_liouville)
from .spectra import (SpectralData, exact_log_fluctuation_constant, fluctuation_constant,  # noqa: E402
                      massive_green, weighted_eigs, wick_square_functional)
from .semiclassics import (ExperimentReport, central_charge_to_gamma, conformal_weight,  # noqa: E402
                           convergence_in_probability, fluctuation_covariance_test,
                           heavy_insertion_suite, kpz_exponent, kpz_rescaling_identity,
                           laplace_ldp_check, partition_asymptotics, tilted_expectation)
