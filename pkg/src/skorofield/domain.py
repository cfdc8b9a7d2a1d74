"""Index set X = [0,1]^d: points, the coordinatewise partial order, corner
vectors over coordinate subsets, and ordered-triple enumeration on a lattice.

Points are plain 1-d float arrays.  Coordinate subsets are encoded as d-bit
integer masks (bit j set = coordinate j selected).  All enumeration is over a
regular lattice; suprema computed downstream are therefore lattice suprema,
i.e. lower bounds on the continuum quantities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, ConfigError, PreconditionError

# 2^d masks enter every increment evaluation; refuse silly dimensions.
MASK_DIMENSION_CAP = 8


def as_point(x, d: Optional[int] = None) -> np.ndarray:
    """Validate and convert ``x`` to a point of [0,1]^d."""
    p = np.asarray(x, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1:
        raise ArgumentError(f"a point must be one-dimensional, got shape {p.shape}")
    if d is not None and p.size != d:
        raise ArgumentError(f"expected dimension {d}, got {p.size}")
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ArgumentError(f"coordinates must lie in [0,1], got {p}")
    return np.clip(p, 0.0, 1.0)


def leq(x, y) -> bool:
    """Coordinatewise partial order: true iff x(i) <= y(i) for every i."""
    xp, yp = as_point(x), as_point(y)
    if xp.size != yp.size:
        raise ArgumentError(f"dimension mismatch: {xp.size} vs {yp.size}")
    return bool(np.all(xp <= yp))


def enumerate_masks(d: int) -> list[int]:
    """All 2^d coordinate-subset masks, empty mask first, full mask last."""
    if d < 1:
        raise ArgumentError(f"dimension must be >= 1, got {d}")
    if d > MASK_DIMENSION_CAP:
        raise ConfigError(
            f"mask enumeration capped at d={MASK_DIMENSION_CAP} (2^d blow-up), got d={d}"
        )
    return list(range(1 << d))


def mask_complement(mask: int, d: int) -> int:
    return ((1 << d) - 1) ^ mask


def corner_vector(x1, x3, mask: int, convention: str = "low-off") -> np.ndarray:
    """Corner z of the box [x1, x3] selected by a coordinate-subset mask.

    Under the default convention the corner takes x1's coordinate off the
    mask and x3's coordinate on it; ``convention="high-off"`` swaps the
    roles.  The set of corners over all masks is identical either way, so
    every minimum-over-masks statistic is convention independent.
    """
    p1, p3 = as_point(x1), as_point(x3)
    if p1.size != p3.size:
        raise ArgumentError(f"dimension mismatch: {p1.size} vs {p3.size}")
    if not np.all(p1 <= p3):
        raise PreconditionError(f"corner vectors need x1 <= x3, got {p1} vs {p3}")
    d = p1.size
    bits = np.array([(mask >> j) & 1 for j in range(d)], dtype=bool)
    if convention == "high-off":
        bits = ~bits
    elif convention != "low-off":
        raise ArgumentError(f"unknown corner convention {convention!r}")
    return np.where(bits, p3, p1)


@dataclass(frozen=True)
class Lattice:
    """Regular grid {0, 1/(m-1), ..., 1}^d with C-order flat indexing."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1:
            raise ArgumentError(f"dimension must be >= 1, got {self.d}")
        if self.m < 2:
            raise ArgumentError(f"need at least 2 points per axis, got {self.m}")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.m - 1)

    @property
    def axis(self) -> np.ndarray:
        # i/(m-1) rather than linspace: keeps coords() and axis bit-identical
        # and makes both endpoints exact.
        return np.arange(self.m) / (self.m - 1)

    @property
    def size(self) -> int:
        return self.m**self.d

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (m^d, d), C order."""
        grids = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in multi), (self.m,) * self.d))

    def multi_index(self, flat: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, (self.m,) * self.d))

    def coords(self, multi: Sequence[int]) -> np.ndarray:
        return np.asarray(multi, dtype=float) / (self.m - 1)

    def index_of(self, point) -> Tuple[int, ...]:
        """Multi-index of a node; raises if the point is off-lattice."""
        p = as_point(point, self.d)
        idx = np.rint(p * (self.m - 1)).astype(int)
        if np.max(np.abs(idx / (self.m - 1) - p)) > 1e-9:
            raise ArgumentError(f"point {p} is not a lattice node (m={self.m})")
        return tuple(int(i) for i in idx)


@dataclass(frozen=True)
class OrderedTriple:
    """Triple x1 <= x2 <= x3 (coordinatewise)."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def __post_init__(self):
        p1 = as_point(self.x1)
        p2 = as_point(self.x2, p1.size)
        p3 = as_point(self.x3, p1.size)
        if not (np.all(p1 <= p2) and np.all(p2 <= p3)):
            raise PreconditionError(f"triple is not ordered: {p1}, {p2}, {p3}")
        object.__setattr__(self, "x1", p1)
        object.__setattr__(self, "x2", p2)
        object.__setattr__(self, "x3", p3)

    @property
    def d(self) -> int:
        return self.x1.size


def _triple_unchecked(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray) -> OrderedTriple:
    # Free-mode middle points are allowed to violate the ordering; skip validation.
    t = OrderedTriple.__new__(OrderedTriple)
    object.__setattr__(t, "x1", p1)
    object.__setattr__(t, "x2", p2)
    object.__setattr__(t, "x3", p3)
    return t


def _ordered_pairs(m: int, d: int) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    for i1 in itertools.product(range(m), repeat=d):
        hi_ranges = [range(a, m) for a in i1]
        for i3 in itertools.product(*hi_ranges):
            yield i1, i3


def enumerate_triples(
    lattice: Lattice,
    window: Optional[tuple] = None,
    x2_mode: str = "box",
) -> Iterator[OrderedTriple]:
    """Yield every lattice triple x1 <= x2 <= x3, deterministically ordered.

    ``window=(q, h)`` restricts to pairs with q(x1, x3) <= h (h >= 0; h=0
    keeps only coincident pairs).  ``x2_mode`` selects the range of the
    middle point: ``"box"`` (default) walks x2 over [x1, x3]; ``"free"``
    walks it over the whole lattice, in which case the yielded triples are
    not coordinate-ordered and only x1 <= x3 is guaranteed.
    """
    if x2_mode not in ("box", "free"):
        raise ArgumentError(f"unknown x2_mode {x2_mode!r}")
    q = h = None
    if window is not None:
        q, h = window
        if h < 0:
            raise PreconditionError(f"window radius must be >= 0, got {h}")
    all_nodes = lattice.nodes() if x2_mode == "free" else None
    for i1, i3 in _ordered_pairs(lattice.m, lattice.d):
        p1 = lattice.coords(i1)
        p3 = lattice.coords(i3)
        if q is not None and q(p1, p3) > h:
            continue
        if x2_mode == "box":
            mid_ranges = [range(a, b + 1) for a, b in zip(i1, i3)]
            for i2 in itertools.product(*mid_ranges):
                yield OrderedTriple(p1, lattice.coords(i2), p3)
        else:
            for p2 in all_nodes:
                yield _triple_unchecked(p1, p2, p3)
