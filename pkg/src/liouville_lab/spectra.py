"""Weighted Laplacian spectra in the metric ``e^U dx^2``.

The generalized problem ``-Laplacian e = 2 pi lambda e^U e`` reads, on the
lattice, ``(A / 2 pi) e = lambda D e`` with ``D = diag(e^U h^2)``.  It is
solved through the symmetric matrix ``B = D^{-1/2} (A / 2 pi) D^{-1/2}``.
Eigenvectors satisfy ``sum e_i e_j e^U h^2 = delta_ij``.

Two exact all-mode identities avoid truncation where it matters::

    sum_j e_j e_j^T / (lambda_j + 2 alpha) = (A / 2 pi + 2 alpha D)^{-1}
    log prod_j sqrt(lambda_j / (lambda_j + 2 alpha)) e^{alpha / lambda_j}
        = 1/2 [logdet(A / 2 pi) - logdet(A / 2 pi + 2 alpha D)] + alpha tr(G D)
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import rng as _rng
from .errors import DomainError, NumericalError, UsageError
from .geometry import DiskLattice

__all__ = [
    "SpectralData",
    "weighted_eigs",
    "massive_green",
    "fluctuation_constant",
    "exact_log_fluctuation_constant",
    "wick_square_functional",
    "default_mode_count",
]

DENSE_LIMIT = 4000


def default_mode_count(lat: DiskLattice) -> int:
    return int(min(200, lat.n // 4))


@dataclass(frozen=True)
class SpectralData:
    lattice: DiskLattice
    U: np.ndarray = dc_field(repr=False)
    eigenvalues: np.ndarray = dc_field(repr=False)
    vectors: np.ndarray = dc_field(repr=False)
    normalization_residual: float = 0.0
    weyl_slope: float = float("nan")

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def weight(self) -> np.ndarray:
        """Diagonal of ``D = e^U h^2``."""
        return np.exp(self.U) * self.lattice.h**2

    def index(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist(), "count": self.count,
                "normalization_residual": self.normalization_residual,
                "weyl_slope": self.weyl_slope}


def weighted_eigs(lat: DiskLattice, U, k: int | None = None) -> SpectralData:
    """Lowest ``k`` pairs of ``-Laplacian e = 2 pi lambda e^U e`` (zero boundary).

    ``U`` must contain any singular insertion part already; the weight
    ``e^U`` stays integrable for ``chi < 2``.
    """
    U = np.asarray(U, dtype=float)
    if U.shape != (lat.n,):
        raise UsageError(f"U has shape {U.shape}, lattice has {lat.n} nodes")
    k = default_mode_count(lat) if k is None else int(k)
    if not (0 < k <= lat.n):
        raise UsageError(f"requested {k} eigenpairs on a lattice with {lat.n} nodes")
    s = 1.0 / np.sqrt(np.exp(U) * lat.h**2)
    S = sp.diags(s)
    B = (S @ (lat.A / (2 * np.pi)) @ S).tocsc()
    if lat.n <= DENSE_LIMIT or k > lat.n // 3:
        lam, v = scipy.linalg.eigh(B.toarray(), subset_by_index=[0, k - 1])
    else:
        try:
            lam, v = spla.eigsh(B, k=k, sigma=0.0, which="LM", tol=1e-12,
                                v0=np.random.default_rng(0).standard_normal(lat.n))
        except spla.ArpackError as exc:
            raise NumericalError("weighted eigensolve did not converge", requested=k,
                                 detail=str(exc)) from exc
        order = np.argsort(lam)
        lam, v = lam[order], v[:, order]
    lead = v[np.argmax(np.abs(v) > 1e-12, axis=0), np.arange(k)]
    v = v * np.where(lead < 0, -1.0, 1.0)
    e = v * s[:, None]
    gram = v.T @ v
    resid = float(np.abs(gram - np.eye(k)).max())
    slope = float("nan")
    if k >= 8:
        j = np.arange(k // 2, k) + 1
        slope = float(np.polyfit(j, lam[k // 2:], 1)[0])
    return SpectralData(lat, U, lam, e, resid, slope)


def _check_alpha(spec: SpectralData, alpha: float):
    if alpha <= -spec.eigenvalues[0] / 2:
        raise DomainError(f"tilt alpha={alpha} must exceed -lambda_1/2 = {-spec.eigenvalues[0] / 2}")


@dataclass
class MassiveKernel:
    """Massive Green kernel restricted to a node set.

    ``truncated`` is the ``k``-mode spectral sum, ``exact`` the all-mode
    resolvent; ``tail = exact - truncated`` is what truncation leaves out.
    ``mass`` is reported as ``4 pi alpha``.
    """

    nodes: np.ndarray
    alpha: float
    truncated: np.ndarray = dc_field(repr=False)
    exact: np.ndarray = dc_field(repr=False)
    modes: int = 0

    @property
    def tail(self) -> np.ndarray:
        return self.exact - self.truncated

    @property
    def mass(self) -> float:
        return 4 * np.pi * self.alpha


def massive_green(spec: SpectralData, alpha: float, nodes=None) -> MassiveKernel:
    """``sum_j e_j(x) e_j(y) / (lambda_j + 2 alpha)`` on ``nodes x nodes``."""
    _check_alpha(spec, alpha)
    lat = spec.lattice
    nodes = np.arange(lat.n) if nodes is None else np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    E = spec.vectors[nodes]
    trunc = (E / (spec.eigenvalues + 2 * alpha)) @ E.T
    exact = massive_resolvent_columns(lat, spec.U, alpha, nodes)[nodes]
    return MassiveKernel(nodes, float(alpha), 0.5 * (trunc + trunc.T), 0.5 * (exact + exact.T), spec.count)


def massive_resolvent_columns(lat: DiskLattice, U, alpha: float, nodes) -> np.ndarray:
    """Columns of ``(A / 2 pi + 2 alpha D)^{-1}`` for the given nodes."""
    D = np.exp(np.asarray(U, dtype=float)) * lat.h**2
    M = (lat.A / (2 * np.pi) + sp.diags(2 * alpha * D)).tocsc()
    rhs = np.zeros((lat.n, len(nodes)))
    rhs[nodes, np.arange(len(nodes))] = 1.0
    return spla.splu(M).solve(rhs)


def _logdet_spd(M) -> float:
    lu = spla.splu(sp.csc_matrix(M), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    d = lu.U.diagonal()
    if np.any(d <= 0):
        raise NumericalError("matrix is not positive definite in logdet")
    return float(np.log(d).sum())


def exact_log_fluctuation_constant(lat: DiskLattice, U, alpha: float) -> float:
    """All-mode ``log Z_alpha`` through sparse log-determinants."""
    U = np.asarray(U, dtype=float)
    D = np.exp(U) * lat.h**2
    K = lat.A / (2 * np.pi)
    trace = float(lat.green_diagonal @ D)
    return 0.5 * (_logdet_spd(K) - _logdet_spd(K + sp.diags(2 * alpha * D))) + alpha * trace


def fluctuation_constant(spec: SpectralData, alpha: float) -> dict:
    """Truncated ``log Z_alpha`` with a Weyl-tail estimate.

    Terms are ``1/2 ln(lambda / (lambda + 2 alpha)) + alpha / lambda`` which
    behave like ``alpha^2 / lambda^2``; beyond ``k`` modes with
    ``lambda_j ~ s j`` the remainder is about ``alpha^2 / (s^2 k)``.
    """
    _check_alpha(spec, alpha)
    lam = spec.eigenvalues
    terms = 0.5 * np.log(lam / (lam + 2 * alpha)) + alpha / lam
    s = spec.weyl_slope if np.isfinite(spec.weyl_slope) and spec.weyl_slope > 0 else lam[-1] / spec.count
    tail = alpha**2 / (s**2 * spec.count)
    logz = float(terms.sum())
    return {"log_Z": logz, "Z": float(np.exp(logz)), "tail_estimate": float(tail),
            "terms": terms, "alpha": float(alpha), "mass": 4 * np.pi * alpha, "modes": spec.count}


def wick_square_functional(spec: SpectralData, *, seed: int = 0, size: int = 1,
                           start: int = 0, modes: int | None = None) -> np.ndarray:
    """Samples of ``sum_{j<=k} (xi_j^2 - 1) / lambda_j``."""
    k = spec.count if modes is None else int(modes)
    xi = _rng.normals(seed, start, size, spec.count, stream=7)[:, :k]
    return ((xi**2 - 1) / spec.eigenvalues[:k]).sum(axis=1)
