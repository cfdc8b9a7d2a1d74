"""Random-field models sampled on a lattice.

Models: indicator fields I(eta < x) for a random vector eta with continuous
marginals, their centered versions, normalized partial sums of centered
fields, and Gaussian reference fields with a prescribed covariance.

Reproducibility contract: a path is a pure function of
(model, lattice, SeedSpec).  Replicates are independent streams keyed by
(master_seed, replicate_index), so replicate-level parallelism cannot change
results.  Within one replicate all randomness is drawn sequentially from
that replicate's stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .domain import Lattice
from .errors import ArgumentError, CovarianceError, EstimationError, ModelError

PSD_JITTER_REL = 1e-10  # eigenvalue floor, relative to trace


@dataclass(frozen=True)
class SeedSpec:
    """Stream key: (master_seed, replicate_index) -> independent RNG."""

    master_seed: int
    replicate_index: int = 0

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.replicate_index,))
        return np.random.default_rng(ss)

    def replicate(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, index)


# ---------------------------------------------------------------------------
# marginal distributions (continuous on [0,1])


class UniformMarginal:
    def cdf(self, t):
        return np.clip(t, 0.0, 1.0)

    def ppf(self, u):
        return u


@dataclass(frozen=True)
class BetaMarginal:
    a: float
    b: float

    def cdf(self, t):
        return stats.beta.cdf(t, self.a, self.b)

    def ppf(self, u):
        return stats.beta.ppf(u, self.a, self.b)


class TabulatedMarginal:
    """User-tabulated CDF on [0,1]; linear interpolation between knots."""

    def __init__(self, knots, values):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise ArgumentError("need matching 1-d knot/value tables with >= 2 entries")
        if np.any(np.diff(knots) <= 0) or np.any(np.diff(values) < 0):
            raise ArgumentError("knots must increase strictly and CDF values must not decrease")
        if abs(values[0]) > 1e-12 or abs(values[-1] - 1) > 1e-12:
            raise ArgumentError("tabulated CDF must run from 0 to 1")
        self.knots = knots
        self.values = values

    def cdf(self, t):
        return np.interp(t, self.knots, self.values)

    def ppf(self, u):
        return np.interp(u, self.values, self.knots)


@dataclass(frozen=True)
class ProductDistribution:
    """Independent marginals; F(x) = prod_j F_j(x_j) = P(eta < x)."""

    marginals: tuple

    @property
    def d(self) -> int:
        return len(self.marginals)

    def cdf(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones(pts.shape[0])
        for j, marg in enumerate(self.marginals):
            out *= marg.cdf(pts[:, j])
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random((size, self.d))
        cols = [np.asarray(m.ppf(u[:, j])) for j, m in enumerate(self.marginals)]
        return np.stack(cols, axis=1)


def uniform_distribution(d: int) -> ProductDistribution:
    return ProductDistribution(tuple(UniformMarginal() for _ in range(d)))


# ---------------------------------------------------------------------------
# field models


@dataclass(frozen=True)
class SamplePath:
    """One realization on a lattice; values are flat C-order node values."""

    lattice: Lattice
    values: np.ndarray
    provenance: tuple  # (model description, master_seed, replicate_index)

    def csv_rows(self):
        nodes = self.lattice.nodes()
        yield tuple(f"x{j + 1}" for j in range(self.lattice.d)) + ("value",)
        for row, v in zip(nodes, self.values):
            yield tuple(float(c) for c in row) + (float(v),)


class FieldModel:
    """Base class; subclasses implement sampling of flat node values."""

    d: int
    centered: bool = False

    def describe(self) -> str:
        raise NotImplementedError

    def sample_values(self, lattice: Lattice, seed: SeedSpec) -> np.ndarray:
        raise NotImplementedError

    def sample_batch(self, lattice: Lattice, seed: SeedSpec, replicates: int) -> np.ndarray:
        """Replicates r = 0..B-1 from streams (master, base_index + r)."""
        out = np.empty((replicates, lattice.size))
        for r in range(replicates):
            out[r] = self.sample_values(lattice, seed.replicate(seed.replicate_index + r))
        return out

    def draw_from(self, lattice: Lattice, rng: np.random.Generator) -> np.ndarray:
        """One path drawn from an externally managed stream (for summand loops)."""
        raise ModelError(f"no sequential sampler for model {self.describe()}")

    def covariance_matrix(self, lattice: Lattice) -> Optional[np.ndarray]:
        """Closed-form covariance over node pairs, if the model knows one."""
        return None


def sample_path(model: FieldModel, lattice: Lattice, seed: SeedSpec) -> SamplePath:
    if model.d != lattice.d:
        raise ArgumentError(f"model dimension {model.d} != lattice dimension {lattice.d}")
    values = model.sample_values(lattice, seed)
    return SamplePath(lattice, values, (model.describe(), seed.master_seed, seed.replicate_index))


@dataclass(frozen=True)
class ConstantField(FieldModel):
    d: int
    value: float = 0.0

    @property
    def centered(self):
        return self.value == 0.0

    def describe(self):
        return f"constant({self.value})"

    def sample_values(self, lattice, seed):
        return np.full(lattice.size, self.value, dtype=float)

    def draw_from(self, lattice, rng):
        return np.full(lattice.size, self.value, dtype=float)

    def covariance_matrix(self, lattice):
        return np.zeros((lattice.size, lattice.size))


class IndicatorField(FieldModel):
    """xi(x) = I(eta < x), strict coordinatewise; one eta per path.

    Paths are {0,1}-valued and nondecreasing along every axis; any node with
    a zero coordinate gets value 0 because eta lives in [0,1]^d.
    """

    centered = False

    def __init__(self, distribution: ProductDistribution):
        self.distribution = distribution
        self.d = distribution.d

    def describe(self):
        return f"indicator(d={self.d})"

    def _indicator(self, lattice: Lattice, eta: np.ndarray) -> np.ndarray:
        nodes = lattice.nodes()
        return np.all(eta[None, :] < nodes, axis=1).astype(float)

    def sample_values(self, lattice, seed):
        return self.draw_from(lattice, seed.rng())

    def draw_from(self, lattice, rng):
        eta = self.distribution.sample(rng, 1)[0]
        return self._indicator(lattice, eta)

    def cdf_values(self, lattice: Lattice) -> np.ndarray:
        return self.distribution.cdf(lattice.nodes())

    def covariance_matrix(self, lattice):
        # E I(eta<x) I(eta<y) = F(min(x,y)) for independent marginals.
        nodes = lattice.nodes()
        f = self.cdf_values(lattice)
        mins = np.minimum(nodes[:, None, :], nodes[None, :, :])
        joint = np.ones((nodes.shape[0],) * 2)
        for j, marg in enumerate(self.distribution.marginals):
            joint *= marg.cdf(mins[:, :, j])
        return joint - np.outer(f, f)


class CenteredIndicatorField(IndicatorField):
    """xi(x) = I(eta < x) - F(x); mean zero at every node."""

    centered = True

    def describe(self):
        return f"centered-indicator(d={self.d})"

    def draw_from(self, lattice, rng):
        eta = self.distribution.sample(rng, 1)[0]
        return self._indicator(lattice, eta) - self.cdf_values(lattice)

    def sample_summand_block(self, lattice: Lattice, rng: np.random.Generator,
                             count: int) -> np.ndarray:
        """Sum of ``count`` i.i.d. centered indicator paths, one eta draw each."""
        eta = self.distribution.sample(rng, count)
        nodes = lattice.nodes()
        if self.d == 1:
            order = np.sort(eta[:, 0])
            below = np.searchsorted(order, nodes[:, 0], side="left").astype(float)
        else:
            below = np.all(eta[:, None, :] < nodes[None, :, :], axis=2).sum(axis=0).astype(float)
        return below - count * self.cdf_values(lattice)


class PartialSumField(FieldModel):
    """S_n(x) = n^(-1/2) * sum of n independent copies of a centered base field.

    All summand randomness is drawn sequentially from the replicate stream,
    so a replicate is reproducible from (master_seed, replicate_index) alone.
    """

    centered = True

    def __init__(self, base: FieldModel, n: int):
        if not base.centered:
            raise ModelError("partial sums need a centered base field (zero mean at every node)")
        if n < 1:
            raise ModelError(f"need n >= 1 summands, got {n}")
        self.base = base
        self.n = int(n)
        self.d = base.d

    def describe(self):
        return f"partial-sum(n={self.n}, base={self.base.describe()})"

    def sample_values(self, lattice, seed):
        rng = seed.rng()
        if isinstance(self.base, CenteredIndicatorField):
            total = self.base.sample_summand_block(lattice, rng, self.n)
        else:
            total = np.zeros(lattice.size)
            for _ in range(self.n):
                total += self.base.draw_from(lattice, rng)
        return total / np.sqrt(self.n)

    def covariance_matrix(self, lattice):
        return self.base.covariance_matrix(lattice)


class GaussianField(FieldModel):
    """Centered Gaussian field on the lattice with a fixed covariance factor."""

    centered = True

    def __init__(self, lattice: Lattice, factor: np.ndarray, cov: np.ndarray):
        self.lattice = lattice
        self.factor = factor
        self.cov = cov
        self.d = lattice.d

    def describe(self):
        return f"gaussian-ref(d={self.d}, rank={self.factor.shape[1]})"

    def draw_from(self, lattice, rng):
        if lattice.size != self.lattice.size:
            raise ArgumentError("gaussian reference is bound to the lattice it was built on")
        z = rng.standard_normal(self.factor.shape[1])
        return self.factor @ z

    def sample_values(self, lattice, seed):
        return self.draw_from(lattice, seed.rng())

    def covariance_matrix(self, lattice):
        return self.cov


def gaussian_reference(cov, lattice: Lattice, seed: Optional[SeedSpec] = None) -> GaussianField:
    """Gaussian field model matching a covariance table.

    The table is symmetrized and eigen-factorized; eigenvalues below the
    jitter threshold (1e-10 * trace) are zeroed, so exactly degenerate
    covariances (zero, rank-one) reproduce their structure without noise.
    Eigenvalues below minus the threshold raise.
    """
    cov = np.asarray(cov, dtype=float)
    n = lattice.size
    if cov.shape != (n, n):
        raise CovarianceError(f"covariance shape {cov.shape} does not match lattice size {n}")
    if not np.allclose(cov, cov.T, atol=1e-8 * max(1.0, np.abs(cov).max())):
        raise CovarianceError("covariance table is not symmetric")
    sym = 0.5 * (cov + cov.T)
    jitter = PSD_JITTER_REL * max(float(np.trace(sym)), 0.0)
    w, u = np.linalg.eigh(sym)
    if w.min() < -max(jitter, 1e-12):
        raise CovarianceError(f"covariance has eigenvalue {w.min():.3e} below -{jitter:.3e}")
    keep = w > jitter
    factor = u[:, keep] * np.sqrt(w[keep])
    if factor.size == 0:
        factor = np.zeros((n, 1))
    return GaussianField(lattice, factor, sym)


@dataclass
class CovarianceTable:
    lattice: Lattice
    matrix: np.ndarray
    stderr: np.ndarray
    replicates: int

    def csv_rows(self):
        nodes = self.lattice.nodes()
        header = ("",) + tuple("|".join(f"{c:.6g}" for c in row) for row in nodes)
        yield header
        for i, row in enumerate(nodes):
            label = "|".join(f"{c:.6g}" for c in row)
            yield (label,) + tuple(float(v) for v in self.matrix[i])


def empirical_covariance(model: FieldModel, lattice: Lattice, replicates: int,
                         seed: SeedSpec) -> CovarianceTable:
    """Monte Carlo estimate of R(x,y) = E xi(x) xi(y) for a centered model."""
    if replicates < 2:
        raise EstimationError(f"need at least 2 replicates, got {replicates}")
    if not model.centered:
        raise EstimationError("empirical covariance is defined for centered models")
    paths = model.sample_batch(lattice, seed, replicates)
    prods_mean = paths.T @ paths / replicates
    sq_mean = (paths**2).T @ (paths**2) / replicates
    var = np.maximum(sq_mean - prods_mean**2, 0.0)
    return CovarianceTable(lattice, prods_mean, np.sqrt(var / replicates), replicates)


def partial_sum_path(base: FieldModel, n: int, lattice: Lattice, seed: SeedSpec) -> SamplePath:
    return sample_path(PartialSumField(base, n), lattice, seed)
