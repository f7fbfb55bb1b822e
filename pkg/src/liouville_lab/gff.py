"""Gaussian free field samplers on the disk lattice.

Covariance convention: ``Cov(X(x), X(y)) = G[x, y]`` with ``G = 2 pi A^{-1}``,
the discrete Dirichlet Green kernel normalised so that it approximates
``ln(1/|x - y|) + O(1)`` at short distances.

Four cutoffs are provided:

* ``exact``         the lattice field itself (spectral or banded Cholesky)
* ``obe(n)``        projection onto the lowest ``n`` Laplacian modes
* ``circle_avg(e)`` circle averages of an exact field
* ``white_noise(e)`` heat-kernel smoothing, ``exp(-lambda e^2 / 2)`` per mode

Samples come in batches: ``field`` has shape ``(size, n_nodes)`` and row
``r`` is replica ``start + r`` of the seeded stream (see :mod:`.rng`).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.linalg.lapack as lapack
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import rng as _rng
from .errors import ConfigurationError, NumericalError, UsageError
from .geometry import DiskLattice, interpolation_matrix

__all__ = [
    "GffSample",
    "SpectralBasis",
    "disk_spectrum",
    "sample_exact",
    "sample_obe",
    "sample_wn_cutoff",
    "circle_average",
    "circle_average_operator",
    "covariance_panel",
]

DENSE_LIMIT = 6000


@dataclass(frozen=True)
class SpectralBasis:
    """Lowest eigenpairs of the discrete Dirichlet ``-Laplacian``.

    ``vectors[:, j]`` is normalised so that ``sum vectors[:, j]**2 h^2 = 1``.
    """

    lattice: DiskLattice
    eigenvalues: np.ndarray
    vectors: np.ndarray = dc_field(repr=False)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def complete(self) -> bool:
        return self.count == self.lattice.n

    def gram(self) -> np.ndarray:
        return self.vectors.T @ self.vectors * self.lattice.h**2

    def variance_weights(self, cutoff=None) -> np.ndarray:
        """Per-mode standard deviations ``sqrt(2 pi / lambda)``, optionally smoothed."""
        s = np.sqrt(2 * np.pi / self.eigenvalues)
        if cutoff is not None:
            s = s * np.exp(-self.eigenvalues * cutoff**2 / 2)
        return s


@dataclass
class GffSample:
    """A batch of cutoff GFF samples.

    ``pointwise_variance`` is the exact per-node variance of the cutoff
    field (not an empirical estimate).  ``boundary_flag`` marks nodes whose
    circle average had to be restricted to the disk.
    """

    lattice: DiskLattice
    field: np.ndarray = dc_field(repr=False)
    cutoff: str
    parameter: float | None
    variance_source: object = dc_field(repr=False)
    seed: int | None = None
    start: int = 0
    boundary_flag: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def pointwise_variance(self) -> np.ndarray:
        """Exact variance per node (computed on first access when deferred)."""
        if callable(self.variance_source):
            self.variance_source = self.variance_source()
        return self.variance_source

    @property
    def size(self) -> int:
        return self.field.shape[0]

    def metadata(self) -> dict:
        return {"cutoff": self.cutoff, "parameter": self.parameter, "seed": self.seed,
                "start": self.start, "size": self.size, "h": self.lattice.h, "nodes": self.lattice.n}


def disk_spectrum(lat: DiskLattice, n: int | None = None) -> SpectralBasis:
    """Lowest ``n`` eigenpairs (all of them when ``n`` is None).

    Small lattices use a dense symmetric eigensolver; otherwise shift-invert
    Lanczos about zero.
    """
    n = lat.n if n is None else int(n)
    if not (0 < n <= lat.n):
        raise UsageError(f"requested {n} eigenpairs on a lattice with {lat.n} nodes")
    h2 = lat.h**2
    if lat.n <= DENSE_LIMIT or n > lat.n // 2:
        if lat.n > 2 * DENSE_LIMIT:
            raise UsageError(f"dense eigensolve of {lat.n} nodes refused; request fewer modes")
        mu, v = scipy.linalg.eigh(lat.A.toarray(), subset_by_index=[0, n - 1])
    else:
        try:
            mu, v = spla.eigsh(lat.A, k=n, sigma=0.0, which="LM", tol=1e-12,
                                v0=np.random.default_rng(0).standard_normal(lat.n))
        except spla.ArpackError as exc:
            raise NumericalError("Lanczos eigensolve did not converge", requested=n,
                                 nodes=lat.n, detail=str(exc)) from exc
        order = np.argsort(mu)
        mu, v = mu[order], v[:, order]
    # sign convention: first nonzero entry positive, so bases are reproducible
    lead = v[np.argmax(np.abs(v) > 1e-12, axis=0), np.arange(v.shape[1])]
    v = v * np.where(lead < 0, -1.0, 1.0)
    return SpectralBasis(lat, mu / h2, v / lat.h)


def _spectral(basis: SpectralBasis, n_modes: int, weights, seed, size, start, cutoff, param):
    xi = _rng.normals(seed, start, size, basis.count)[:, :n_modes]
    V = basis.vectors[:, :n_modes]
    X = (xi * weights[:n_modes]) @ V.T
    var = (V**2) @ (weights[:n_modes] ** 2)
    return GffSample(basis.lattice, X, cutoff, param, var, seed, start)


def sample_exact(lat: DiskLattice, basis: SpectralBasis | None = None, *, seed: int = 0,
                 size: int = 1, start: int = 0) -> GffSample:
    """Exact lattice GFF.

    With a complete ``basis`` the field is the full spectral sum (so that
    ``sample_obe`` truncations are prefixes of it).  Without a basis the
    banded Cholesky factor ``A = R^T R`` gives ``X = sqrt(2 pi) R^{-1} xi``,
    which scales to lattices where a full eigendecomposition is too big.
    """
    if basis is not None:
        if basis.lattice is not lat:
            raise UsageError("basis was computed on a different lattice")
        if not basis.complete:
            raise UsageError(f"exact sampling needs a complete basis ({basis.count} of {lat.n} modes)")
        return _spectral(basis, basis.count, basis.variance_weights(), seed, size, start, "exact", None)
    xi = _rng.normals(seed, start, size, lat.n, stream=1)
    x, info = lapack.dtbtrs(lat.cholesky_banded, xi.T, uplo="U")
    if info != 0:
        raise NumericalError("banded triangular solve failed", info=info)
    return GffSample(lat, np.sqrt(2 * np.pi) * x.T, "exact", None,
                     lambda: lat.green_diagonal, seed, start)


def sample_obe(lat: DiskLattice, basis: SpectralBasis, n: int, *, seed: int = 0,
               size: int = 1, start: int = 0) -> GffSample:
    """Projection of the spectral field onto the lowest ``n`` modes."""
    if not (0 <= n <= basis.count):
        raise UsageError(f"truncation n={n} exceeds the {basis.count} available modes")
    return _spectral(basis, n, basis.variance_weights(), seed, size, start, "obe", n)


def sample_wn_cutoff(lat: DiskLattice, basis: SpectralBasis, eps: float, *, seed: int = 0,
                     size: int = 1, start: int = 0) -> GffSample:
    """Heat-kernel cutoff: mode ``j`` has variance ``2 pi exp(-lambda_j eps^2) / lambda_j``.

    All cutoffs share the same normals, so for ``eps <= eps'`` the covariance
    of ``X_eps(x)`` and ``X_eps'(y)`` involves ``exp(-lambda (eps^2 + eps'^2)/2)``;
    the single-cutoff covariance is ``pi * int_{eps^2}^inf p_r(x, y) dr`` where
    ``p`` is the heat kernel of ``Laplacian / 2``.
    """
    if eps <= 0:
        raise ConfigurationError(f"white-noise cutoff must be positive, got {eps}")
    return _spectral(basis, basis.count, basis.variance_weights(eps), seed, size, start,
                     "white_noise", float(eps))


def wn_covariance(basis: SpectralBasis, eps: float, eps2: float | None = None) -> np.ndarray:
    """Covariance matrix ``sum 2 pi exp(-lambda (e1^2 + e2^2)/2) e e^T / lambda``."""
    eps2 = eps if eps2 is None else eps2
    w = 2 * np.pi / basis.eigenvalues * np.exp(-basis.eigenvalues * (eps**2 + eps2**2) / 2)
    return (basis.vectors * w) @ basis.vectors.T


@lru_cache(maxsize=8)
def _circle_operator(lat: DiskLattice, eps: float):
    K = max(16, int(np.ceil(2 * np.pi * eps / lat.h)))
    t = 2 * np.pi * np.arange(K) / K
    ring = eps * np.column_stack([np.cos(t), np.sin(t)])
    pts = (lat.points[:, None, :] + ring[None]).reshape(-1, 2)
    inside = np.hypot(pts[:, 0], pts[:, 1]) < 1.0
    owner = np.repeat(np.arange(lat.n), K)
    kept = np.bincount(owner[inside], minlength=lat.n)
    W = interpolation_matrix(lat, pts[inside])
    # average of the kept quadrature points per node
    S = sp.csr_matrix((1.0 / kept[owner[inside]], (owner[inside], np.arange(inside.sum()))),
                      shape=(lat.n, inside.sum()))
    P = (S @ W).tocsr()
    empty = kept == 0
    if empty.any():
        P = P + sp.csr_matrix((np.ones(empty.sum()), (np.nonzero(empty)[0], np.nonzero(empty)[0])),
                              shape=(lat.n, lat.n))
    flag = kept < K
    # exact variance diag(P G P^T) by chunked solves
    var = np.empty(lat.n)
    PT = P.T.tocsc()
    for s in range(0, lat.n, 512):
        e = min(s + 512, lat.n)
        Y = lat.solve(PT[:, s:e].toarray())
        var[s:e] = 2 * np.pi * np.asarray(P[s:e].multiply(Y.T).sum(axis=1)).ravel()
    return P, var, flag


def circle_average_operator(lat: DiskLattice, eps: float):
    """``(P, variance, boundary_flag)`` for the circle average of radius ``eps``.

    ``P`` is sparse; ``(P @ X)[x]`` averages ``X`` bilinearly interpolated at
    ``K = max(16, ceil(2 pi eps / h))`` equispaced points of the circle around
    ``x``.  Points outside the disk are dropped and the average renormalised;
    ``boundary_flag`` marks the nodes where that happened.
    """
    if eps < 2 * lat.h:
        raise ConfigurationError(f"circle radius {eps} is below the resolvable 2h = {2 * lat.h}")
    return _circle_operator(lat, float(eps))


def circle_average(X: GffSample, eps: float) -> GffSample:
    """Circle-average cutoff of an exact sample batch."""
    if X.cutoff != "exact":
        raise UsageError("circle averages are taken of exact samples")
    P, var, flag = circle_average_operator(X.lattice, eps)
    return GffSample(X.lattice, (P @ X.field.T).T, "circle_avg", float(eps), var, X.seed,
                     X.start, boundary_flag=flag)


def covariance_panel(lat: DiskLattice, pairs, n_samples: int, *, seed: int = 0,
                     basis: SpectralBasis | None = None, threads: int = 1,
                     sampler=None) -> dict:
    """Streamed empirical covariances at node pairs.

    Returns ``{"cov", "se", "mean", "mean_se"}`` arrays (one entry per pair,
    means per distinct node).  ``sampler(start, size)`` may override the
    default exact sampler; it must return a field batch ``(size, n)``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    nodes, inv = np.unique(pairs, return_inverse=True)
    inv = inv.reshape(-1, 2)
    if sampler is None:
        def sampler(start, size):
            return sample_exact(lat, basis, seed=seed, size=size, start=start).field

    def work(start, size):
        Z = sampler(start, size)[:, nodes]
        return Z

    vals = np.concatenate(_rng.map_batches(work, n_samples, threads))
    a, b = vals[:, inv[:, 0]], vals[:, inv[:, 1]]
    ac, bc = a - a.mean(axis=0), b - b.mean(axis=0)
    prod = ac * bc
    N = len(vals)
    return {
        "nodes": nodes,
        "cov": prod.sum(axis=0) / (N - 1),
        "se": prod.std(axis=0, ddof=1) / np.sqrt(N),
        "mean": vals.mean(axis=0),
        "mean_se": vals.std(axis=0, ddof=1) / np.sqrt(N),
        "n_samples": N,
    }
