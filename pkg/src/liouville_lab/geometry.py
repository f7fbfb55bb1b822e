"""Discretized unit disk, background metrics, Green operators and norms.

The disk is covered by the square grid ``h * Z^2`` clipped to ``|x| < 1``.
The five-point Laplacian is closed at the circle by a linear ghost value:
when the neighbour of node ``i`` in direction ``d`` lies outside the disk,
the circle is crossed at distance ``theta * h`` and the ghost value
``u_i * (1 - 1/theta)`` makes ``u`` vanish on the true boundary.  This only
modifies the diagonal, so the matrix stays symmetric positive definite,
and the solution error is O(h^2) up to the boundary.

Throughout, ``A`` denotes the dimensionless stiffness matrix with
``-Laplacian = A / h**2`` and the discrete Green kernel (convention
``Laplacian_y G(x, .) = -2 pi delta_x``) is ``G = 2 pi A^{-1}``, so that
``sum_y G[x, y] f[y] h**2`` approximates ``int G(x, y) f(y) dy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DomainError, NumericalError, UsageError

__all__ = [
    "LftParams",
    "DiskLattice",
    "MetricTensor",
    "InsertionSet",
    "build_lattice",
    "laplacian_apply",
    "green_apply",
    "green_kernel",
    "conformal_radius",
    "mobius",
    "MobiusMap",
    "h1_energy",
    "hminus1_norm",
    "integrate",
    "stencil_curvature",
    "interpolation_matrix",
]

MIN_NODES = 9
_THETA_FLOOR = 1e-8


@dataclass(frozen=True)
class LftParams:
    """Coupling constants of Liouville field theory.

    Build with either ``mu`` or ``Lambda``; the other one follows from
    ``Lambda = mu * gamma**2``.
    """

    gamma: float
    mu: float

    def __post_init__(self):
        if not (0.0 < self.gamma < 2.0):
            raise ConfigurationError(
                f"gamma must satisfy 0 < gamma < 2 (critical case gamma=2 unsupported), got {self.gamma}")
        if self.mu < 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")

    @classmethod
    def from_lambda(cls, gamma: float, Lambda: float) -> "LftParams":
        if not (0.0 < gamma < 2.0):
            raise ConfigurationError(
                f"gamma must satisfy 0 < gamma < 2 (critical case gamma=2 unsupported), got {gamma}")
        if Lambda < 0:
            raise ConfigurationError(f"Lambda must be >= 0, got {Lambda}")
        return cls(gamma=gamma, mu=Lambda / gamma**2)

    @property
    def Lambda(self) -> float:
        return self.mu * self.gamma**2

    @property
    def Q(self) -> float:
        return 2.0 / self.gamma + self.gamma / 2.0


@dataclass(frozen=True)
class InsertionSet:
    """Heavy matter insertions ``(z_i, chi_i)``."""

    points: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        chis = tuple(float(c) for c in self.weights)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", chis)
        if len(pts) != len(chis):
            raise ConfigurationError("each insertion needs exactly one point and one weight chi")
        for p, chi in zip(pts, chis):
            if len(p) != 2:
                raise ConfigurationError(f"insertion point {p} is not two-dimensional")
            if np.hypot(*p) >= 1.0:
                raise ConfigurationError(f"insertion point {p} is not inside the open unit disk")
            if not (0.0 <= chi < 2.0):
                raise ConfigurationError(f"insertion weight chi={chi} must lie in [0, 2)")
        if len(set(pts)) != len(pts):
            raise ConfigurationError("insertion points must be pairwise distinct")

    @classmethod
    def of(cls, *pairs) -> "InsertionSet":
        """``InsertionSet.of(((0, 0), 1.0), ((0.3, 0.1), 0.5))``."""
        return cls(tuple(p for p, _ in pairs), tuple(c for _, c in pairs))

    def __len__(self):
        return len(self.points)

    def __bool__(self):
        return len(self.points) > 0

    def union(self, other: "InsertionSet") -> "InsertionSet":
        return InsertionSet(self.points + other.points, self.weights + other.weights)


class DiskLattice:
    """Square grid of spacing ``h`` restricted to the open unit disk.

    Node order is row major in ``(y, x)`` which keeps the stiffness matrix
    banded with bandwidth about ``2/h``.  Instances are immutable; the
    factorizations below are computed lazily and then only read.
    """

    def __init__(self, h: float):
        self.h = float(h)
        m = int(np.floor(1.0 / self.h)) + 1
        k = np.arange(-m, m + 1)
        jj, ii = np.meshgrid(k, k, indexing="ij")
        x, y = ii * self.h, jj * self.h
        inside = np.hypot(x, y) < 1.0
        self.ij = np.column_stack([ii[inside], jj[inside]]).astype(np.int64)
        self.points = self.ij * self.h
        self.n = len(self.points)
        self._offset = m
        grid = -np.ones((2 * m + 1, 2 * m + 1), dtype=np.int64)
        grid[self.ij[:, 1] + m, self.ij[:, 0] + m] = np.arange(self.n)
        self._grid = grid
        self._assemble()

    def __repr__(self):
        return f"DiskLattice(h={self.h:g}, n={self.n})"

    def index_of(self, i: int, j: int) -> int:
        """Node index of grid point ``(i h, j h)``, or -1 if not a node."""
        m = self._offset
        if abs(i) > m or abs(j) > m:
            return -1
        return int(self._grid[j + m, i + m])

    def nearest_node(self, point) -> int:
        """Index of the node closest to ``point`` (must be inside the disk)."""
        d = np.hypot(*(self.points - np.asarray(point, dtype=float)).T)
        return int(np.argmin(d))

    def _assemble(self):
        h, m = self.h, self._offset
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n)
        ghost_theta = []
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni = self.ij[:, 0] + d[0]
            nj = self.ij[:, 1] + d[1]
            nbr = self._grid[nj + m, ni + m]
            interior = nbr >= 0
            rows.append(np.nonzero(interior)[0])
            cols.append(nbr[interior])
            vals.append(-np.ones(interior.sum()))
            diag[interior] += 1.0
            # distance to the circle along direction d, in units of h
            p = self.points[~interior]
            pd = p @ np.asarray(d, dtype=float)
            s = -pd + np.sqrt(pd**2 - (p**2).sum(axis=1) + 1.0)
            theta = np.maximum(s / h, _THETA_FLOOR)
            diag[~interior] += 1.0 / theta
            ghost_theta.append((np.nonzero(~interior)[0], theta))
        rows.append(np.arange(self.n))
        cols.append(np.arange(self.n))
        vals.append(diag)
        self.A = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n))
        self.boundary_links = (
            np.concatenate([g[0] for g in ghost_theta]),
            np.concatenate([g[1] for g in ghost_theta]),
        )
        self.bandwidth = int(np.max(np.abs(np.concatenate(cols[:4]) - np.concatenate(rows[:4]))))

    # -- lazily built solvers -------------------------------------------------

    @cached_property
    def _lu(self):
        return spla.splu(self.A)

    def solve(self, b):
        """Solve ``A x = b`` (``b`` may hold several right-hand sides as columns)."""
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise NumericalError("stiffness solve produced non-finite values")
        return x

    @cached_property
    def cholesky_banded(self):
        """Upper banded Cholesky factor of ``A`` in LAPACK ``ab`` storage."""
        u = self.bandwidth
        ab = np.zeros((u + 1, self.n))
        A = self.A.tocoo()
        upper = A.col >= A.row
        r, c, v = A.row[upper], A.col[upper], A.data[upper]
        ab[u + r - c, c] = v
        return scipy.linalg.cholesky_banded(ab, lower=False)

    @cached_property
    def green_diagonal(self) -> np.ndarray:
        """Diagonal of the discrete Green matrix ``2 pi A^{-1}``."""
        out = np.empty(self.n)
        chunk = 512
        for start in range(0, self.n, chunk):
            stop = min(start + chunk, self.n)
            e = np.zeros((self.n, stop - start))
            e[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[start:stop] = self.solve(e)[np.arange(start, stop), np.arange(stop - start)]
        return 2 * np.pi * out

    def green_columns(self, nodes) -> np.ndarray:
        """Columns ``G[:, nodes]`` of the discrete Green matrix."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        e = np.zeros((self.n, len(nodes)))
        e[nodes, np.arange(len(nodes))] = 1.0
        return 2 * np.pi * self.solve(e)

    def green_matrix(self, max_nodes: int = 6000) -> np.ndarray:
        """Dense discrete Green matrix; refused above ``max_nodes`` nodes."""
        if self.n > max_nodes:
            raise UsageError(f"dense Green matrix requested for {self.n} nodes (limit {max_nodes})")
        return self.green_columns(np.arange(self.n))

    @property
    def cell_area(self) -> float:
        return self.h**2

    @cached_property
    def radius(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])


def build_lattice(h: float) -> DiskLattice:
    """Clip the grid ``h Z^2`` to the open unit disk.

    Raises
    ------
    ConfigurationError
        If ``h`` is not in ``(0, 1/2]`` or the lattice has fewer than 9 nodes.
    """
    if not (0.0 < h <= 0.5):
        raise ConfigurationError(f"lattice spacing must lie in (0, 1/2], got {h}")
    lat = DiskLattice(h)
    if lat.n < MIN_NODES:
        raise ConfigurationError(
            f"spacing h={h} gives only {lat.n} interior nodes (need at least {MIN_NODES})")
    return lat


def _check_field(lat: DiskLattice, u, name="field") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != lat.n:
        raise UsageError(f"{name} has {u.shape[-1]} values but the lattice has {lat.n} nodes")
    return u


def laplacian_apply(lat: DiskLattice, u) -> np.ndarray:
    """Five-point Laplacian with the Dirichlet closure at the circle."""
    u = _check_field(lat, u)
    return -(lat.A @ u.T).T / lat.h**2


def green_apply(lat: DiskLattice, f) -> np.ndarray:
    """Solve ``-Laplacian u = 2 pi f`` with zero boundary values."""
    f = _check_field(lat, f)
    return 2 * np.pi * lat.h**2 * lat.solve(f.T).T


def integrate(lat: DiskLattice, u) -> float:
    """Lattice quadrature ``sum u h^2``."""
    u = _check_field(lat, u)
    return u.sum(axis=-1) * lat.h**2


def h1_energy(lat: DiskLattice, u) -> float:
    """Discrete Dirichlet energy ``int |grad u|^2 dx`` (equal to ``u^T A u``).

    Interior edges contribute squared differences; a link to the circle at
    distance ``theta h`` contributes ``u_i^2 / theta``.
    """
    u = _check_field(lat, u)
    return float(u @ (lat.A @ u))


def green_kernel(x, y) -> float:
    """Disk Green function ``ln|1 - x conj(y)| - ln|x - y|``.

    Raises
    ------
    DomainError
        If ``x == y`` or either point is outside the open disk.
    """
    zx, zy = _as_complex(x), _as_complex(y)
    if abs(zx) >= 1 or abs(zy) >= 1:
        raise DomainError("Green kernel arguments must lie in the open unit disk")
    if zx == zy:
        raise DomainError("Green kernel is singular on the diagonal x == y")
    return float(np.log(abs(1 - zx * np.conj(zy))) - np.log(abs(zx - zy)))


def green_kernel_field(points, y) -> np.ndarray:
    """Vectorised ``green_kernel(points[k], y)``; no diagonal check."""
    z = points[:, 0] + 1j * points[:, 1]
    zy = _as_complex(y)
    return np.log(np.abs(1 - z * np.conj(zy))) - np.log(np.abs(z - zy))


def conformal_radius(x) -> np.ndarray:
    """Conformal radius ``1 - |x|^2`` of the unit disk seen from ``x``.

    Accepts a single point or an array of points with shape ``(..., 2)``.
    """
    x = np.asarray(x, dtype=float)
    r2 = (x**2).sum(axis=-1)
    if np.any(r2 >= 1.0):
        raise DomainError("conformal radius is only defined inside the open unit disk")
    return 1.0 - r2


def _as_complex(p) -> complex:
    if isinstance(p, complex):
        return p
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return complex(float(p), 0.0)
    return complex(p[0], p[1])


@dataclass(frozen=True)
class MobiusMap:
    """Disk automorphism ``psi_a(z) = (z - a) / (1 - conj(a) z)``."""

    a: complex

    def __call__(self, pts):
        """Map points of shape ``(..., 2)``."""
        pts = np.asarray(pts, dtype=float)
        z = pts[..., 0] + 1j * pts[..., 1]
        w = (z - self.a) / (1 - np.conj(self.a) * z)
        return np.stack([w.real, w.imag], axis=-1)

    def derivative_modulus(self, pts):
        """``|psi_a'(z)| = (1 - |a|^2) / |1 - conj(a) z|^2``."""
        pts = np.asarray(pts, dtype=float)
        z = pts[..., 0] + 1j * pts[..., 1]
        return (1 - abs(self.a) ** 2) / np.abs(1 - np.conj(self.a) * z) ** 2

    @property
    def inverse(self) -> "MobiusMap":
        return MobiusMap(-self.a)


def mobius(a) -> MobiusMap:
    """Disk automorphism sending ``a`` to the origin."""
    za = _as_complex(a)
    if abs(za) >= 1:
        raise DomainError(f"Mobius parameter {a} must lie in the open unit disk")
    return MobiusMap(za)


def hminus1_norm(lat: DiskLattice, u, jmax: int = 64) -> np.ndarray:
    """Sine-series negative Sobolev norm ``sum a_jk^2 / (j^2 + k^2)``.

    ``u`` is extended by zero to ``[-1, 1]^2`` which is mapped affinely onto
    the unit square; ``a_jk`` are the coefficients of
    ``sum a_jk sin(pi j s) sin(pi k t)``.  The series is truncated at
    ``j, k <= jmax``.  ``u`` may be a batch of fields with shape ``(N, n)``;
    one value per field is returned.
    """
    u = _check_field(lat, u)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    m = lat._offset
    size = 2 * m + 1
    grid = np.zeros((u.shape[0], size, size))
    grid[:, lat.ij[:, 1] + m, lat.ij[:, 0] + m] = u
    s = (np.arange(-m, m + 1) * lat.h + 1.0) / 2.0
    j = np.arange(1, jmax + 1)
    S = np.sin(np.pi * np.outer(j, s))            # (jmax, size)
    # coefficient a_jk = 4 int f sin sin ds dt = sum f sin sin h^2
    a = S @ grid @ S.T * lat.h**2                 # a[n, j, k]: j along y, k along x
    jj, kk = np.meshgrid(j, j, indexing="ij")
    out = (a**2 / (jj**2 + kk**2)).sum(axis=(1, 2))
    return float(out[0]) if single else out


def interpolation_matrix(lat: DiskLattice, pts) -> sp.csr_matrix:
    """Sparse bilinear interpolation from nodes to arbitrary points.

    Grid corners that are not lattice nodes contribute zero (the field
    vanishes outside the disk).
    """
    pts = np.asarray(pts, dtype=float)
    g = pts / lat.h
    i0 = np.floor(g[:, 0]).astype(np.int64)
    j0 = np.floor(g[:, 1]).astype(np.int64)
    fx, fy = g[:, 0] - i0, g[:, 1] - j0
    rows, cols, vals = [], [], []
    m = lat._offset
    for di, dj, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                      (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        ii, jj = i0 + di, j0 + dj
        ok = (np.abs(ii) <= m) & (np.abs(jj) <= m)
        idx = -np.ones(len(pts), dtype=np.int64)
        idx[ok] = lat._grid[jj[ok] + m, ii[ok] + m]
        keep = idx >= 0
        rows.append(np.nonzero(keep)[0])
        cols.append(idx[keep])
        vals.append(w[keep])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(pts), lat.n))


@dataclass(frozen=True)
class MetricTensor:
    """Conformal background metric ``g(x) dx^2`` sampled at the nodes."""

    kind: str
    factor: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)

    @classmethod
    def flat(cls, lat: DiskLattice) -> "MetricTensor":
        return cls("flat", np.ones(lat.n), np.zeros(lat.n))

    @classmethod
    def hyperbolic(cls, lat: DiskLattice) -> "MetricTensor":
        """Poincare metric ``4 / (1 - |x|^2)^2``; curvature -2 taken analytically."""
        return cls("hyperbolic", 4.0 / (1.0 - lat.radius**2) ** 2, np.full(lat.n, -2.0))

    @classmethod
    def conformal(cls, lat: DiskLattice, U) -> "MetricTensor":
        """Metric ``e^U dx^2``; curvature ``-e^{-U} Laplacian U`` on the lattice."""
        U = _check_field(lat, U, "U")
        return cls("conformal", np.exp(U), -np.exp(-U) * laplacian_apply(lat, U))

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"


def stencil_curvature(lat: DiskLattice, log_factor) -> tuple[np.ndarray, np.ndarray]:
    """Curvature ``-g^{-1} Laplacian ln g`` of an analytic conformal factor.

    ``log_factor`` is a callable returning ``ln g`` at points of shape
    ``(..., 2)``.  The five-point stencil is evaluated at the true neighbour
    positions, so only nodes whose whole stencil lies in the disk get a
    value; returns ``(node_indices, curvature)``.
    """
    h = lat.h
    p = lat.points
    offs = np.array([[h, 0], [-h, 0], [0, h], [0, -h]])
    nb = p[:, None, :] + offs[None]
    ok = np.all(np.hypot(nb[..., 0], nb[..., 1]) < 1.0, axis=1)
    p, nb = p[ok], nb[ok]
    lg = log_factor(p)
    lap = (log_factor(nb).sum(axis=1) - 4 * lg) / h**2
    return np.nonzero(ok)[0], -np.exp(-lg) * lap
