"""Quasi-distances on [0,1]^d x [0,1]^d and their entropy geometry.

A quasi-distance is a symmetric nonnegative function q(x,y) with q(x,x)=0;
no triangle inequality is assumed.  Everything here is lattice-discretized:
normalization maxima, covering numbers, and the window functional sigma are
all computed over lattice node pairs.

The covering numbers use greedy maximum-coverage (exact minimal covers are
NP-hard); a brute-force exact cover is kept in the test suite as an oracle
for tiny lattices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .domain import Lattice, as_point
from .errors import (
    ArgumentError,
    DegenerateDistanceError,
    DegenerateWindowError,
    FitError,
    PreconditionError,
)

_BLOCK = 512  # row block for pairwise matrices


class QuasiDistance:
    """Base class; subclasses implement ``raw`` (unscaled evaluation)."""

    scale: float = 1.0

    def raw(self, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        xp, yp = as_point(x), as_point(y)
        if xp.size != yp.size:
            raise ArgumentError(f"dimension mismatch: {xp.size} vs {yp.size}")
        return self.scale * float(self.raw(xp, yp))

    def raw_rows(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Unscaled q between row sets, shape (len(xs), len(ys))."""
        raise NotImplementedError

    def pair_matrix(self, lattice: Lattice, dtype=None) -> np.ndarray:
        """Scaled q over all node pairs, shape (N, N).

        Defaults to float64 on small lattices and float32 above 1500 nodes
        (memory; entropy fits at that scale are statistical anyway).
        """
        nodes = lattice.nodes()
        n = nodes.shape[0]
        if dtype is None:
            dtype = np.float64 if n <= 1500 else np.float32
        out = np.empty((n, n), dtype=dtype)
        for lo in range(0, n, _BLOCK):
            hi = min(lo + _BLOCK, n)
            out[lo:hi] = self.raw_rows(nodes[lo:hi], nodes)
        out *= dtype(self.scale) if dtype == np.float32 else self.scale
        return out

    def raw_lattice_max(self, lattice: Lattice) -> float:
        """Unscaled maximum over lattice pairs."""
        best = 0.0
        nodes = lattice.nodes()
        for lo in range(0, nodes.shape[0], _BLOCK):
            hi = min(lo + _BLOCK, nodes.shape[0])
            best = max(best, float(self.raw_rows(nodes[lo:hi], nodes).max()))
        return best

    def gap_profile(self, lattice: Lattice) -> Optional[np.ndarray]:
        """For d=1 distances monotone in |x-y|: scaled q at each gap count.

        Returns None when the distance has no such structure; callers then
        fall back to generic pair enumeration.
        """
        return None


@dataclass(frozen=True)
class PowerEuclidean(QuasiDistance):
    """q(x,y) = coeff * |x-y|^alpha with the Euclidean norm."""

    alpha: float
    coeff: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.coeff <= 0:
            raise ArgumentError("alpha and coeff must be positive")

    def raw(self, x, y):
        return self.coeff * np.linalg.norm(x - y) ** self.alpha

    def raw_rows(self, xs, ys):
        diff = xs[:, None, :] - ys[None, :, :]
        return self.coeff * np.sqrt((diff**2).sum(axis=2)) ** self.alpha

    def raw_lattice_max(self, lattice):
        # Opposite corners are lattice nodes, so the maximum is exact.
        return self.coeff * float(np.sqrt(lattice.d)) ** self.alpha

    def gap_profile(self, lattice):
        if lattice.d != 1:
            return None
        gaps = np.arange(lattice.m) / (lattice.m - 1)
        return self.scale * self.coeff * gaps**self.alpha


@dataclass(frozen=True)
class AnisotropicSum(QuasiDistance):
    """q(x,y) = coeff * sum_j |x_j - y_j|^alpha(j)."""

    alphas: tuple
    coeff: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if any(a <= 0 for a in self.alphas) or self.coeff <= 0:
            raise ArgumentError("exponents and coeff must be positive")

    def raw(self, x, y):
        if x.size != len(self.alphas):
            raise ArgumentError(f"expected dimension {len(self.alphas)}, got {x.size}")
        return self.coeff * float(np.sum(np.abs(x - y) ** np.asarray(self.alphas)))

    def raw_rows(self, xs, ys):
        diff = np.abs(xs[:, None, :] - ys[None, :, :])
        return self.coeff * (diff ** np.asarray(self.alphas)).sum(axis=2)

    def raw_lattice_max(self, lattice):
        return self.coeff * float(len(self.alphas))

    def gap_profile(self, lattice):
        if lattice.d != 1:
            return None
        gaps = np.arange(lattice.m) / (lattice.m - 1)
        return self.scale * self.coeff * gaps ** self.alphas[0]


class TabulatedQ(QuasiDistance):
    """Quasi-distance tabulated on lattice node pairs.

    Off-lattice queries use nearest-node lookup (no interpolation), which
    preserves symmetry and q(x,x)=0 exactly.  When ``gap_values`` is given
    (d=1, values nondecreasing in the gap count), window computations can
    use nested gap windows.
    """

    def __init__(self, lattice: Lattice, matrix: np.ndarray, scale: float = 1.0,
                 gap_values: Optional[np.ndarray] = None):
        matrix = np.asarray(matrix, dtype=np.float64)
        n = lattice.size
        if matrix.shape != (n, n):
            raise ArgumentError(f"matrix shape {matrix.shape} does not match lattice size {n}")
        if np.any(matrix < 0):
            raise ArgumentError("quasi-distance values must be nonnegative")
        if not np.allclose(matrix, matrix.T, atol=1e-12):
            raise ArgumentError("tabulated quasi-distance must be symmetric")
        if np.any(np.abs(np.diag(matrix)) > 1e-12):
            raise ArgumentError("tabulated quasi-distance must vanish on the diagonal")
        self.lattice = lattice
        self.matrix = matrix
        self.scale = float(scale)
        if gap_values is not None:
            gap_values = np.asarray(gap_values, dtype=np.float64)
            if gap_values.shape != (lattice.m,) or lattice.d != 1:
                raise ArgumentError("gap_values requires d=1 and one value per gap count")
            if np.any(np.diff(gap_values) < 0):
                raise ArgumentError("gap_values must be nondecreasing")
        self.gap_values = gap_values

    def _nearest_flat(self, x: np.ndarray) -> int:
        idx = np.clip(np.rint(x * (self.lattice.m - 1)).astype(int), 0, self.lattice.m - 1)
        return self.lattice.flat_index(tuple(idx))

    def raw(self, x, y):
        return float(self.matrix[self._nearest_flat(x), self._nearest_flat(y)])

    def raw_rows(self, xs, ys):
        ix = [self._nearest_flat(x) for x in xs]
        iy = [self._nearest_flat(y) for y in ys]
        return self.matrix[np.ix_(ix, iy)]

    def pair_matrix(self, lattice, dtype=None):
        if lattice.m != self.lattice.m or lattice.d != self.lattice.d:
            raise ArgumentError("tabulated distance queried on a different lattice")
        return (self.scale * self.matrix).astype(dtype or np.float64)

    def raw_lattice_max(self, lattice):
        return float(self.matrix.max())

    def gap_profile(self, lattice):
        if self.gap_values is None:
            return None
        return self.scale * self.gap_values

    def rescaled(self, scale: float) -> "TabulatedQ":
        return TabulatedQ(self.lattice, self.matrix, scale, self.gap_values)


def normalize(q: QuasiDistance, lattice: Lattice) -> QuasiDistance:
    """Rescale q so its maximum over lattice pairs equals one."""
    raw_max = q.raw_lattice_max(lattice)
    if raw_max <= 0:
        raise DegenerateDistanceError("quasi-distance is identically zero on the lattice")
    if isinstance(q, TabulatedQ):
        return q.rescaled(1.0 / raw_max)
    return replace(q, scale=1.0 / raw_max)


def covering_number(
    q: QuasiDistance,
    lattice: Lattice,
    eps: float,
    pair_matrix: Optional[np.ndarray] = None,
) -> int:
    """Size of a greedy cover of the lattice by closed q-balls of radius eps.

    Greedy maximum coverage: repeatedly center a ball on the node covering
    the most uncovered nodes (first index wins ties).  The result is an
    upper bound on the minimal lattice cover.
    """
    if eps <= 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    if pair_matrix is None:
        pair_matrix = q.pair_matrix(lattice)
    # Relative slack keeps balls closed under the float noise of coordinate
    # subtraction; inflating a ball by 1e-9 can only shrink the cover.
    covers = pair_matrix <= eps * (1 + 1e-9) + 1e-15
    n = covers.shape[0]
    # Gains via BLAS matvec; counts below 2^24 are exact in float32.
    covers_f = covers.astype(np.float32)
    uncovered = np.ones(n, dtype=np.float32)
    count = 0
    while uncovered.any():
        gains = covers_f @ uncovered
        center = int(np.argmax(gains))
        if gains[center] == 0:  # unreachable: each node covers itself
            raise DegenerateWindowError("greedy cover stalled")
        uncovered[covers[center]] = 0.0
        count += 1
    return count


@dataclass
class CoveringReport:
    """Covering counts over a radius grid plus the fitted entropy power law
    N(eps) ~ cn_hat * eps**(-gamma_hat)."""

    epsilons: np.ndarray
    counts: np.ndarray
    gamma_hat: float
    cn_hat: float
    residual: float

    def csv_rows(self):
        yield ("eps", "count")
        for e, c in zip(self.epsilons, self.counts):
            yield (float(e), int(c))

    def json_header(self) -> str:
        return json.dumps(
            {"gamma_hat": self.gamma_hat, "cn_hat": self.cn_hat, "residual": self.residual},
            sort_keys=True,
        )


def entropy_fit(q: QuasiDistance, lattice: Lattice, eps_grid: Sequence[float]) -> CoveringReport:
    """Least-squares fit of ln N = ln C - gamma * ln eps over a radius grid."""
    eps = np.asarray(sorted(set(float(e) for e in eps_grid), reverse=True))
    if eps.size < 3:
        raise FitError(f"need at least 3 radii for an entropy fit, got {eps.size}")
    if np.any(eps <= 0) or np.any(eps > 1):
        raise PreconditionError("entropy radii must lie in (0, 1]")
    pm = q.pair_matrix(lattice)
    counts = np.array([covering_number(q, lattice, e, pair_matrix=pm) for e in eps])
    log_eps = np.log(eps)
    log_n = np.log(counts)
    slope, intercept = np.polyfit(log_eps, log_n, 1)
    fitted = slope * log_eps + intercept
    residual = float(np.sqrt(np.mean((log_n - fitted) ** 2)))
    return CoveringReport(
        epsilons=eps,
        counts=counts,
        gamma_hat=float(-slope),
        cn_hat=float(np.exp(intercept)),
        residual=residual,
    )


def sigma(q: QuasiDistance, lattice: Lattice, h: float) -> float:
    """Window functional h^(-d) * sup { q(x,y) : |x-y| <= 2h } over lattice pairs.

    The pair constraint uses the raw Euclidean norm; the supremum saturates
    once 2h exceeds the diameter.  Raises if no distinct pair fits in the
    window (h below lattice resolution).
    """
    if h <= 0:
        raise PreconditionError(f"window scale must be positive, got {h}")
    if 2 * h < lattice.spacing - 1e-15:
        raise DegenerateWindowError(
            f"no lattice pair within Euclidean distance {2 * h} (spacing {lattice.spacing})"
        )
    profile = q.gap_profile(lattice)
    if profile is not None and lattice.d == 1:
        gmax = min(int(np.floor(2 * h / lattice.spacing + 1e-12)), lattice.m - 1)
        return float(profile[: gmax + 1].max()) / h**lattice.d
    if isinstance(q, (PowerEuclidean, AnisotropicSum)):
        # Translation invariant: enumerate nonnegative difference vectors.
        grids = np.meshgrid(*([np.arange(lattice.m)] * lattice.d), indexing="ij")
        diffs = np.stack([g.ravel() for g in grids], axis=1) / (lattice.m - 1)
        ok = np.sqrt((diffs**2).sum(axis=1)) <= 2 * h + 1e-15
        vals = q.raw_rows(np.zeros((1, lattice.d)), diffs[ok])[0]
        return q.scale * float(vals.max()) / h**lattice.d
    nodes = lattice.nodes()
    pm = q.pair_matrix(lattice)
    best = 0.0
    for lo in range(0, nodes.shape[0], _BLOCK):
        hi = min(lo + _BLOCK, nodes.shape[0])
        diff = nodes[lo:hi, None, :] - nodes[None, :, :]
        ok = np.sqrt((diff**2).sum(axis=2)) <= 2 * h + 1e-15
        if ok.any():
            best = max(best, float(pm[lo:hi][ok].max()))
    return best / h**lattice.d
