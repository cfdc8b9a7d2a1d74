"""Two-sided increment system, the minimum statistic tau, and the
generalized (Skorokhod-type) discontinuity modulus kappa.

For an ordered triple x1 <= x2 <= x3 and a coordinate-subset mask M, the
increment is path(x2) - path(z_M) where z_M is the box corner selected by
M.  tau is the minimum absolute increment over all 2^d masks; kappa_q(h)
is the supremum of tau over lattice triples whose endpoints satisfy
q(x1, x3) <= h, with the middle point walking the box [x1, x3].

Two implementations are kept deliberately:

* a naive enumerator (``ps_modulus_naive``) that walks every triple, the
  correctness oracle;
* a production path: for d=1 with a window monotone in the gap count, an
  O(m * w) cumulative-max sweep (exact, see the budget-split argument in
  ``_kappa_fast_batch``); otherwise pair enumeration vectorized over the
  interior box.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import Lattice, OrderedTriple, corner_vector, enumerate_masks
from .errors import (
    ArgumentError,
    DegenerateWindowError,
    PreconditionError,
    ResourceCapError,
)
from .fields import FieldModel, SamplePath, SeedSpec
from .quasidist import QuasiDistance

_PAIR_CELL_CAP = 2_000_000_000  # pairs x box x masks guard for the general path


def increments(path: SamplePath, triple: OrderedTriple) -> dict:
    """Map mask -> path(x2) - path(z_M) for every coordinate subset."""
    lat = path.lattice
    i2 = lat.flat_index(lat.index_of(triple.x2))
    out = {}
    for mask in enumerate_masks(lat.d):
        z = corner_vector(triple.x1, triple.x3, mask)
        iz = lat.flat_index(lat.index_of(z))
        out[mask] = float(path.values[i2] - path.values[iz])
    return out


def tau(path: SamplePath, triple: OrderedTriple) -> float:
    """Minimum absolute increment over all corner vectors; >= 0."""
    return min(abs(v) for v in increments(path, triple).values())


# ---------------------------------------------------------------------------
# windows


def gap_window(q: QuasiDistance, lattice: Lattice, h: float) -> Optional[int]:
    """Largest gap count g with q(x, x + g*spacing) <= h, for d=1 distances
    monotone in the gap.  None when q has no gap profile."""
    profile = q.gap_profile(lattice)
    if profile is None:
        return None
    return int(np.searchsorted(profile, h, side="right") - 1)


def default_h_grid(lattice: Lattice, count: int = 8, q: Optional[QuasiDistance] = None,
                   lo: Optional[float] = None, hi: float = 0.5) -> np.ndarray:
    """Log-spaced window grid; default span [2/(m-1), 1/2].

    When q is given the lower end is clamped so that at least the two-step
    window is nonempty (tabulated distances can sit above 2/(m-1))."""
    if lo is None:
        lo = 2.0 / (lattice.m - 1)
    if q is not None:
        profile = q.gap_profile(lattice)
        if profile is not None and lattice.m > 2:
            lo = max(lo, float(profile[2]) * (1 + 1e-9))
    if not 0 < lo < hi:
        raise ArgumentError(f"bad window grid bounds [{lo}, {hi}]")
    return np.geomspace(lo, hi, count)


# ---------------------------------------------------------------------------
# d=1 fast sweep


def _kappa_fast_batch(values: np.ndarray, windows: Sequence[int]) -> np.ndarray:
    """kappa for a batch of d=1 paths at several gap windows at once.

    For a fixed middle index i, let L(a) = |v[i] - v[i-a]| and
    R(b) = |v[i] - v[i+b]| (-inf off the lattice), and ML, MR their running
    maxima.  Since max_{a+b<=w} min(L(a), R(b)) equals
    max_{a*+b*=w} min(ML(a*), MR(b*)) (enlarging either budget never hurts,
    and the maximizers of each side fit in the combined budget), one pair of
    cumulative maxima serves every window.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[None, :]
    n_paths, m = v.shape
    w_list = [min(int(w), m - 1) for w in windows]
    w_max = max(w_list)
    out = np.zeros((n_paths, len(w_list)))
    if w_max < 1:
        return out
    a = np.arange(w_max + 1)
    i = np.arange(m)[:, None]
    left_idx = i - a[None, :]
    left_ok = left_idx >= 0
    right_idx = i + a[None, :]
    right_ok = right_idx <= m - 1
    chunk = max(1, int(2.5e7 / (m * (w_max + 1))))
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        vc = v[lo:hi]
        center = vc[:, :, None]
        left = np.abs(center - vc[:, np.clip(left_idx, 0, None)])
        left[:, ~left_ok] = -np.inf
        ml = np.maximum.accumulate(left, axis=2)
        del left
        right = np.abs(center - vc[:, np.clip(right_idx, None, m - 1)])
        right[:, ~right_ok] = -np.inf
        mr = np.maximum.accumulate(right, axis=2)
        del right
        for k, w in enumerate(w_list):
            if w < 1:
                continue
            cand = np.minimum(ml[:, :, : w + 1], mr[:, :, w::-1])
            out[lo:hi, k] = cand.max(axis=(1, 2))
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# general path


@functools.lru_cache(maxsize=8)
def _ordered_pairs_flat(d: int, m: int):
    """All ordered node index pairs (i1 <= i3 componentwise), flat + multi."""
    shape = (m,) * d
    pairs = []
    for multi1 in itertools.product(range(m), repeat=d):
        f1 = int(np.ravel_multi_index(multi1, shape))
        for multi3 in itertools.product(*[range(a, m) for a in multi1]):
            f3 = int(np.ravel_multi_index(multi3, shape))
            pairs.append((f1, f3, multi1, multi3))
    return pairs


def _corner_flat(multi1, multi3, mask, shape):
    z = tuple(multi3[j] if (mask >> j) & 1 else multi1[j] for j in range(len(shape)))
    return int(np.ravel_multi_index(z, shape))


def _kappa_general_batch(values: np.ndarray, lattice: Lattice, q: QuasiDistance,
                         h: float, x2_mode: str) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[None, :]
    shape = (lattice.m,) * lattice.d
    masks = enumerate_masks(lattice.d)
    pairs = _ordered_pairs_flat(lattice.d, lattice.m)
    pm = q.pair_matrix(lattice)
    selected = [(f1, f3, m1, m3) for f1, f3, m1, m3 in pairs if pm[f1, f3] <= h]
    if not any(f1 != f3 for f1, f3, _, _ in selected):
        raise DegenerateWindowError(f"no distinct ordered pair with q <= {h}")
    box_cells = sum(int(np.prod([b - a + 1 for a, b in zip(m1, m3)]))
                    for _, _, m1, m3 in selected)
    if box_cells * len(masks) * v.shape[0] > _PAIR_CELL_CAP:
        raise ResourceCapError(
            f"general modulus cost ~{box_cells * len(masks) * v.shape[0]:.2e} cells"
        )
    grid = v.reshape(v.shape[0], *shape)
    best = np.zeros(v.shape[0])
    for f1, f3, m1, m3 in selected:
        if x2_mode == "box":
            sl = tuple(slice(a, b + 1) for a, b in zip(m1, m3))
            box = grid[(slice(None),) + sl].reshape(v.shape[0], -1)
        else:
            box = v
        t = None
        for mask in masks:
            z = _corner_flat(m1, m3, mask, shape)
            diff = np.abs(box - v[:, z][:, None])
            t = diff if t is None else np.minimum(t, diff)
        np.maximum(best, t.max(axis=1), out=best)
    return best


# ---------------------------------------------------------------------------
# public modulus API


def kappa_batch(values: np.ndarray, lattice: Lattice, q: QuasiDistance,
                h_grid: Sequence[float], x2_mode: str = "box") -> np.ndarray:
    """kappa over a batch of paths (rows) and a window grid (columns)."""
    h_arr = [float(h) for h in h_grid]
    if any(h <= 0 for h in h_arr):
        raise PreconditionError("window thresholds must be positive")
    if lattice.d == 1 and x2_mode == "box":
        ws = []
        for h in h_arr:
            w = gap_window(q, lattice, h)
            if w is None:
                ws = None
                break
            if w < 1:
                raise DegenerateWindowError(
                    f"window q <= {h} is below lattice resolution"
                )
            ws.append(w)
        if ws is not None:
            return _kappa_fast_batch(values, ws)
    cols = [_kappa_general_batch(values, lattice, q, h, x2_mode) for h in h_arr]
    return np.stack(cols, axis=1)


def ps_modulus(path: SamplePath, q: QuasiDistance, h: float, x2_mode: str = "box") -> float:
    """kappa_q(h) for one path: sup of tau over windowed ordered triples."""
    return float(kappa_batch(path.values, path.lattice, q, [h], x2_mode)[0, 0])


def ps_modulus_naive(path: SamplePath, q: QuasiDistance, h: float,
                     x2_mode: str = "box") -> float:
    """Literal triple-loop evaluation of kappa; the correctness oracle.

    Walks every windowed ordered pair, every middle node, every corner mask,
    with no pruning or shared work; only the index arithmetic is unrolled.
    """
    lat = path.lattice
    m, d = lat.m, lat.d
    vals = path.values
    strides = [m ** (d - 1 - j) for j in range(d)]
    masks = enumerate_masks(d)
    if x2_mode == "free":
        mids_all = list(itertools.product(range(m), repeat=d))
    best = 0.0
    for i1 in itertools.product(range(m), repeat=d):
        p1 = lat.coords(i1)
        for i3 in itertools.product(*[range(a, m) for a in i1]):
            if q(p1, lat.coords(i3)) > h:
                continue
            corner_vals = [
                vals[sum((i3[j] if (mk >> j) & 1 else i1[j]) * strides[j] for j in range(d))]
                for mk in masks
            ]
            if x2_mode == "box":
                mids = itertools.product(*[range(a, b + 1) for a, b in zip(i1, i3)])
            else:
                mids = mids_all
            for i2 in mids:
                v2 = vals[sum(i2[j] * strides[j] for j in range(d))]
                t = min(abs(v2 - c) for c in corner_vals)
                if t > best:
                    best = t
    return best


def classical_modulus(path: SamplePath, h: float) -> float:
    """sup |path(x) - path(y)| over lattice pairs with Euclidean |x-y| <= h."""
    lat = path.lattice
    if h <= 0:
        raise PreconditionError(f"window must be positive, got {h}")
    if h < lat.spacing:
        raise DegenerateWindowError(f"window {h} below lattice spacing {lat.spacing}")
    v = path.values
    if lat.d == 1:
        w = min(int(np.floor(h * (lat.m - 1) + 1e-12)), lat.m - 1)
        best = 0.0
        for g in range(1, w + 1):
            best = max(best, float(np.abs(v[g:] - v[:-g]).max()))
        return best
    grid = v.reshape((lat.m,) * lat.d)
    best = 0.0
    rng = range(-(lat.m - 1), lat.m)
    for delta in itertools.product(rng, repeat=lat.d):
        if delta <= (0,) * lat.d:
            continue  # (0,...,0) and sign mirrors
        if np.sqrt(sum((g / (lat.m - 1)) ** 2 for g in delta)) > h + 1e-15:
            continue
        src = tuple(slice(max(0, -g), lat.m - max(0, g)) for g in delta)
        dst = tuple(slice(max(0, g), lat.m + min(0, g)) for g in delta)
        diff = np.abs(grid[src] - grid[dst])
        if diff.size:
            best = max(best, float(diff.max()))
    return best


# ---------------------------------------------------------------------------
# curves and Monte Carlo tails


@dataclass
class ModulusCurve:
    h_grid: np.ndarray
    values: np.ndarray
    kind: str  # "kappa" or "omega"

    def csv_rows(self):
        yield ("h", self.kind)
        for h, v in zip(self.h_grid, self.values):
            yield (float(h), float(v))


def kappa_curve(path: SamplePath, q: QuasiDistance, h_grid: Sequence[float],
                x2_mode: str = "box") -> ModulusCurve:
    vals = kappa_batch(path.values, path.lattice, q, h_grid, x2_mode)[0]
    return ModulusCurve(np.asarray(h_grid, dtype=float), vals, "kappa")


def omega_curve(path: SamplePath, h_grid: Sequence[float]) -> ModulusCurve:
    vals = np.array([classical_modulus(path, h) for h in h_grid])
    return ModulusCurve(np.asarray(h_grid, dtype=float), vals, "omega")


@dataclass
class TailCurve:
    """Monte Carlo exceedance curve u -> P(kappa(h) > u) with normal CIs."""

    u_grid: np.ndarray
    prob: np.ndarray
    ci_halfwidth: np.ndarray
    replicates: int
    h: float
    meta: dict = field(default_factory=dict)

    def csv_rows(self):
        yield ("u", "prob", "ci_halfwidth")
        for u, p, c in zip(self.u_grid, self.prob, self.ci_halfwidth):
            yield (float(u), float(p), float(c))


def _exceed_counts(model: FieldModel, lattice: Lattice, q: QuasiDistance,
                   h_grid, u_grid, seed: SeedSpec, x2_mode: str,
                   chunk: tuple) -> np.ndarray:
    start, count = chunk
    paths = model.sample_batch(lattice, seed.replicate(seed.replicate_index + start), count)
    kappas = kappa_batch(paths, lattice, q, h_grid, x2_mode)
    return (kappas[:, :, None] > np.asarray(u_grid)[None, None, :]).sum(axis=0)


def tail_curve_mc(model: FieldModel, q: QuasiDistance, h: float,
                  u_grid: Sequence[float], replicates: int, seed: SeedSpec,
                  lattice: Lattice, workers: int = 1,
                  x2_mode: str = "box") -> TailCurve:
    """Fraction of replicates with kappa(h) > u, per u, with 95% CIs.

    Replicate r always uses the stream (master_seed, r), and worker chunks
    reduce by integer-count addition, so results are independent of the
    worker count.
    """
    if replicates < 100:
        raise PreconditionError(f"need >= 100 replicates for a tail curve, got {replicates}")
    from ._parallel import map_chunks

    u_arr = np.asarray(u_grid, dtype=float)
    chunks = _chunk_ranges(replicates)
    counts = map_chunks(
        functools.partial(_exceed_counts, model, lattice, q, [h], u_arr, seed, x2_mode),
        chunks,
        workers,
    )
    total = np.sum(counts, axis=0)[0]
    prob = total / replicates
    ci = 1.96 * np.sqrt(prob * (1 - prob) / replicates)
    return TailCurve(u_arr, prob, ci, replicates, h,
                     {"model": model.describe(), "seed": seed.master_seed})


def _chunk_ranges(total: int, chunk: int = 64):
    return [(start, min(chunk, total - start)) for start in range(0, total, chunk)]


@dataclass
class ArctanReport:
    """Monte Carlo E arctan kappa(h) per model, plus the max across models.

    A vanishing max as h -> 0 is the membership/weak-compactness criterion
    for the supplied family.
    """

    h_grid: np.ndarray
    means: np.ndarray  # (n_models, H)
    stderr: np.ndarray
    sup_curve: np.ndarray  # (H,)
    model_names: list
    replicates: int

    def csv_rows(self):
        yield ("h", "sup") + tuple(self.model_names) + tuple(
            f"se_{name}" for name in self.model_names
        )
        for j, h in enumerate(self.h_grid):
            yield (float(h), float(self.sup_curve[j])) + tuple(
                float(v) for v in self.means[:, j]
            ) + tuple(float(v) for v in self.stderr[:, j])


def arctan_criterion(models: Sequence[FieldModel], lattice: Lattice,
                     q: QuasiDistance, h_grid: Sequence[float], replicates: int,
                     seed: SeedSpec, x2_mode: str = "box") -> ArctanReport:
    """E arctan kappa(h) per model over the window grid.

    One path batch per model is reused across all h, which makes each
    model's curve pathwise (hence exactly) nondecreasing in h.
    """
    if replicates < 100:
        raise PreconditionError(f"need >= 100 replicates, got {replicates}")
    h_arr = np.asarray(h_grid, dtype=float)
    means, ses = [], []
    for model in models:
        paths = model.sample_batch(lattice, seed, replicates)
        at = np.arctan(kappa_batch(paths, lattice, q, h_arr, x2_mode))
        means.append(at.mean(axis=0))
        ses.append(at.std(axis=0, ddof=1) / np.sqrt(replicates))
    means = np.stack(means)
    ses = np.stack(ses)
    return ArctanReport(h_arr, means, ses, means.max(axis=0),
                        [m.describe() for m in models], replicates)
