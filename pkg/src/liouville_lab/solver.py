"""Classical Liouville equation on the disk lattice.

Solves, with zero boundary values,

    Laplacian U = g (8 pi^2 Lambda e^U + R) - 2 pi f - 2 pi sum_i chi_i delta_{z_i}

by writing ``U = V + H`` where ``H = sum chi_i G(., z_i)`` is the analytic
singular part, then running damped Newton on the regular part ``V``.  The
problem is the Euler-Lagrange equation of the strictly convex functional

    J(V) = 1/2 V^T A V + h^2 sum [ g (8 pi^2 Lambda e^{V+H} + R V) - 2 pi f V ]

so every Newton step is globalised by an Armijo line search on ``J``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, asdict

import numpy as np
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chaos import insertion_weight
from .errors import DomainError, NumericalError, UsageError, ConfigurationError
from .geometry import DiskLattice, InsertionSet, MetricTensor, h1_energy, hminus1_norm

__all__ = [
    "SolverConfig",
    "LiouvilleSolution",
    "solve_liouville",
    "energy",
    "free_energy",
    "perturbed_free_energy",
    "gateaux_derivative",
    "rate_function",
    "legendre_check",
    "solution_continuity_check",
    "radial_solution",
]


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 50
    armijo: float = 1e-4
    min_step: float = 1e-10
    gradient_fallback_steps: int = 200

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigurationError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")


@dataclass
class LiouvilleSolution:
    lattice: DiskLattice
    U: np.ndarray = dc_field(repr=False)
    regular_part: np.ndarray = dc_field(repr=False)
    singular_part: np.ndarray = dc_field(repr=False)
    residual_norm: float
    energy: float
    iterations: int
    Lambda: float
    metric: MetricTensor | None = dc_field(default=None, repr=False)
    f: np.ndarray | None = dc_field(default=None, repr=False)
    insertions: InsertionSet = dc_field(default_factory=InsertionSet)
    config: SolverConfig = dc_field(default_factory=SolverConfig)
    objective_trace: list = dc_field(default_factory=list, repr=False)

    def manifest(self) -> dict:
        return {
            "Lambda": self.Lambda,
            "metric": "flat" if self.metric is None else self.metric.kind,
            "insertions": [{"z": list(z), "chi": c} for z, c in
                           zip(self.insertions.points, self.insertions.weights)],
            "residual_norm": self.residual_norm,
            "energy": self.energy,
            "iterations": self.iterations,
            "h": self.lattice.h,
            "nodes": self.lattice.n,
            "config": asdict(self.config),
        }


def _metric_arrays(lat, metric):
    if metric is None or metric.is_flat:
        return np.ones(lat.n), np.zeros(lat.n)
    return metric.factor, metric.curvature


def _slack(J):
    # objective differences below this are rounding noise
    return 64 * np.finfo(float).eps * (abs(J) + 1.0)


def _l2(lat, r):
    return float(np.sqrt((r**2).sum() * lat.h**2))


def solve_liouville(lat: DiskLattice, Lambda: float, metric: MetricTensor | None = None,
                    f=None, ins: InsertionSet | None = None, cfg: SolverConfig | None = None,
                    initial=None) -> LiouvilleSolution:
    """Solve the (possibly curved, perturbed, singular) Liouville equation.

    ``initial`` is an optional starting guess for the regular part.

    Raises
    ------
    DomainError
        ``Lambda < 0``.
    NumericalError
        No convergence within ``cfg.max_iterations``; carries the last residual.
    """
    if Lambda < 0:
        raise DomainError(f"Lambda must be >= 0, got {Lambda}")
    cfg = cfg or SolverConfig()
    ins = ins or InsertionSet()
    h2 = lat.h**2
    g, R = _metric_arrays(lat, metric)
    f = np.zeros(lat.n) if f is None else np.asarray(f, dtype=float)
    if f.shape != (lat.n,):
        raise UsageError(f"source f has shape {f.shape}, lattice has {lat.n} nodes")
    eH, H = insertion_weight(lat, ins) if ins else (np.ones(lat.n), np.zeros(lat.n))
    c = 8 * np.pi**2 * Lambda * g * eH
    lin = g * R - 2 * np.pi * f
    A = lat.A

    def objective(V):
        return 0.5 * V @ (A @ V) + h2 * np.sum(c * np.exp(V) + lin * V)

    def residual(V):
        return A @ V / h2 + c * np.exp(V) + lin

    V = np.zeros(lat.n) if initial is None else np.array(initial, dtype=float)
    J = objective(V)
    trace = [J]
    it = 0
    r = residual(V)
    res = _l2(lat, r)
    while res > cfg.tolerance:
        if it >= cfg.max_iterations:
            raise NumericalError("Liouville Newton iteration did not converge",
                                 residual=res, iterations=it)
        it += 1
        jac = (A / h2 + sp.diags(c * np.exp(V))).tocsc()
        d = spla.spsolve(jac, r)
        slope = -h2 * (r @ d)
        t = 1.0
        while True:
            trial = V - t * d
            Jt = objective(trial)
            if np.isfinite(Jt) and Jt <= J + cfg.armijo * t * slope + _slack(J):
                break
            t *= 0.5
            if t < cfg.min_step:
                break
        if t < cfg.min_step:
            # Newton direction stalled at rounding level; polish with preconditioned descent
            trial, Jt = _gradient_fallback(V, J, objective, residual, lat, cfg)
            if trial is None:
                if res < 100 * cfg.tolerance:
                    break
                raise NumericalError("line search failed", residual=res, iterations=it)
        V, J = trial, Jt
        trace.append(J)
        r = residual(V)
        res = _l2(lat, r)
    U = V + H
    sol = LiouvilleSolution(lat, U, V, H, res, 0.0, it, float(Lambda), metric, f, ins, cfg, trace)
    sol.energy = energy(lat, U, Lambda, ins, metric)
    return sol


def _gradient_fallback(V, J, objective, residual, lat, cfg):
    h2 = lat.h**2
    for _ in range(cfg.gradient_fallback_steps):
        grad = h2 * residual(V)
        d = lat.solve(grad)
        slope = -(grad @ d)
        t = 1.0
        while t >= cfg.min_step:
            trial = V - t * d
            Jt = objective(trial)
            if np.isfinite(Jt) and Jt <= J + cfg.armijo * t * slope + _slack(J):
                return trial, Jt
            t *= 0.5
    return None, None


def energy(lat: DiskLattice, u, Lambda: float, ins: InsertionSet | None = None,
           metric: MetricTensor | None = None) -> float:
    """Liouville energy of a field.

    Flat: ``(1/4pi) [ int |grad(u - H)|^2 + 16 pi^2 Lambda int e^u ]``.
    Curved: ``(1/4pi) int [ |grad u|^2 + 2 R u g + 16 pi^2 Lambda g e^u ]``.
    """
    u = np.asarray(u, dtype=float)
    H = insertion_weight(lat, ins)[1] if ins else 0.0
    g, R = _metric_arrays(lat, metric)
    with np.errstate(over="raise"):
        try:
            ex = np.exp(u)
        except FloatingPointError as exc:
            raise NumericalError("overflow evaluating e^u in the energy") from exc
    val = h1_energy(lat, u - H) + lat.h**2 * np.sum(16 * np.pi**2 * Lambda * g * ex + 2 * R * u * g)
    return float(val / (4 * np.pi))


def free_energy(lat: DiskLattice, Lambda: float, metric: MetricTensor | None = None,
                ins: InsertionSet | None = None, cfg: SolverConfig | None = None,
                solution: LiouvilleSolution | None = None) -> float:
    """``F(Lambda) = -E(U)`` at the solution of the Liouville equation."""
    sol = solution or solve_liouville(lat, Lambda, metric, ins=ins, cfg=cfg)
    return -sol.energy


def perturbed_free_energy(lat: DiskLattice, Lambda: float, f, ins: InsertionSet | None = None,
                          cfg: SolverConfig | None = None, base: LiouvilleSolution | None = None,
                          return_solution: bool = False):
    """``F(Lambda, f) = -E(V) + int f (V - U)`` with ``V`` solving the perturbed equation."""
    base = base or solve_liouville(lat, Lambda, ins=ins, cfg=cfg)
    pert = solve_liouville(lat, Lambda, f=f, ins=ins, cfg=cfg, initial=base.regular_part)
    val = -pert.energy + lat.h**2 * float(np.asarray(f) @ (pert.U - base.U))
    return (val, pert) if return_solution else val


def gateaux_derivative(sol: LiouvilleSolution, hdir) -> np.ndarray:
    """Derivative of the solution map ``f -> U_f`` at ``sol`` in direction ``hdir``.

    Solves ``(Laplacian - 8 pi^2 Lambda g e^U) W = -2 pi hdir`` with zero boundary.
    """
    lat = sol.lattice
    g, _ = _metric_arrays(lat, sol.metric)
    m = 8 * np.pi**2 * sol.Lambda * g * np.exp(sol.U)
    op = (lat.A / lat.h**2 + sp.diags(m)).tocsc()
    return spla.spsolve(op, 2 * np.pi * np.asarray(hdir, dtype=float))


def rate_function(lat: DiskLattice, hfield, Lambda: float, ins: InsertionSet | None = None,
                  base: LiouvilleSolution | None = None) -> float:
    """``I*(h) = E(U + h) - E(U)``; nonnegative, zero only at ``h = 0``."""
    base = base or solve_liouville(lat, Lambda, ins=ins)
    hfield = np.asarray(hfield, dtype=float)
    if not np.any(hfield):
        return 0.0
    return energy(lat, base.U + hfield, Lambda, ins) - base.energy


def legendre_check(lat: DiskLattice, hfield, Lambda: float, modes: int = 16,
                   ins: InsertionSet | None = None, basis=None,
                   base: LiouvilleSolution | None = None, cfg: SolverConfig | None = None) -> dict:
    """Maximise ``<h, f> - (F(Lambda, f) - F(Lambda))`` over ``f`` in the span of low modes.

    The gradient in the mode coefficients is ``<e_j, h - (V_f - U)>``.  The
    restricted supremum is a lower bound for ``I*(h)``, tight when ``h`` is
    of the form ``V_f - U`` for ``f`` in the span.
    """
    from .gff import disk_spectrum
    base = base or solve_liouville(lat, Lambda, ins=ins, cfg=cfg)
    basis = basis or disk_spectrum(lat, modes)
    E = basis.vectors[:, :modes]
    h2 = lat.h**2
    hfield = np.asarray(hfield, dtype=float)
    F0 = -base.energy
    warm = {"V": base.regular_part}

    def neg(cvec):
        f = E @ cvec
        pert = solve_liouville(lat, Lambda, f=f, ins=ins, cfg=cfg, initial=warm["V"])
        warm["V"] = pert.regular_part
        dV = pert.U - base.U
        Ff = -pert.energy + h2 * f @ dV
        val = h2 * f @ hfield - (Ff - F0)
        grad = h2 * E.T @ (hfield - dV)
        return -val, -grad

    res = scipy.optimize.minimize(neg, np.zeros(modes), jac=True, method="BFGS",
                                  options={"gtol": 1e-10, "maxiter": 200})
    sup = -float(res.fun)
    rate = rate_function(lat, hfield, Lambda, ins, base)
    gap = abs(sup - rate) / max(abs(rate), 1e-300)
    return {"supremum": sup, "rate_function": rate, "relative_gap": gap,
            "coefficients": res.x, "iterations": int(res.nit), "converged": bool(res.success),
            "modes": modes}


def solution_continuity_check(lat: DiskLattice, Lambda: float, f0, f_seq,
                              ins: InsertionSet | None = None, cfg: SolverConfig | None = None) -> dict:
    """Distances ``||U_t - U_0||_{H^1}`` against ``||f_t - f_0||`` for a sequence ``f_t``."""
    base = solve_liouville(lat, Lambda, f=f0, ins=ins, cfg=cfg)
    rows = []
    for ft in f_seq:
        ft = np.asarray(ft, dtype=float)
        sol = solve_liouville(lat, Lambda, f=ft, ins=ins, cfg=cfg, initial=base.regular_part)
        du = sol.U - base.U
        df = ft - np.asarray(f0, dtype=float)
        rows.append({
            "gap_h1": float(np.sqrt(max(h1_energy(lat, du), 0.0))),
            "source_l2": float(np.sqrt((df**2).sum() * lat.h**2)),
            "source_hminus1": float(np.sqrt(hminus1_norm(lat, df))),
        })
    gaps = [r["gap_h1"] for r in rows]
    sizes = [r["source_l2"] for r in rows]
    order = np.argsort(sizes)[::-1]
    monotone = bool(np.all(np.diff(np.asarray(gaps)[order]) <= 1e-12))
    ratio = [g / s for g, s in zip(gaps, sizes) if s > 0]
    return {"rows": rows, "monotone_decay": monotone,
            "max_ratio_h1_over_l2": float(max(ratio)) if ratio else 0.0}


def radial_alpha(Lambda: float) -> float:
    """Root ``alpha in (0, 1)`` of ``pi^2 Lambda = alpha / (1 - alpha)^2``."""
    if Lambda < 0:
        raise DomainError("Lambda must be >= 0")
    if Lambda == 0:
        return 0.0
    k = np.pi**2 * Lambda
    b = 2 * k + 1
    return float((b - np.sqrt(b * b - 4 * k * k)) / (2 * k))


def radial_solution(points, Lambda: float) -> np.ndarray:
    """Closed-form flat solution ``2 ln((1 - a) / (1 - a |x|^2))``."""
    a = radial_alpha(Lambda)
    r2 = (np.asarray(points, dtype=float) ** 2).sum(axis=-1)
    return 2 * np.log((1 - a) / (1 - a * r2))
