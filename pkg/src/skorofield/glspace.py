"""Grand-Lebesgue moment calculus.

A generating function psi lives on p in [1, b) with inf psi > 0; the
associated norm of a random variable zeta is sup_p |zeta|_p / psi(p) with
|.|_p the L_p norm.  This module provides:

* psi-function construction (degenerate/closed-form/tabulated/natural);
* the norm itself and the Young-Fenchel (Legendre) exponential tail bound
  exp(-v*(ln(y/K))), v(p) = p ln psi(p);
* Hoelder mixed-moment optimization over conjugate tuples a with
  sum 1/a(i) = 1, and the induced tail bound for min_i |xi_i|;
* moment quasi-distances between box endpoints (beta) and their
  sum-uniform inflation via the Rosenthal factor p/ln p (delta-plus).

All optimizers work on the open simplex t(i) = 1/a(i) via a dense seed grid
plus Nelder-Mead refinement; objectives are evaluated in log space.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import optimize, special

from .domain import Lattice, as_point, enumerate_masks, leq
from .errors import (
    ArgumentError,
    DomainError,
    NoFiniteBoundError,
    NotInGlsError,
    PreconditionError,
)
from .fields import FieldModel, SeedSpec

P_CAP = 64.0  # truncation for unbounded psi supports
SIMPLEX_SEEDS = 17  # per-axis seed density for tuple optimizers (k <= 3)


def lp_norm(samples, p: float) -> float:
    """Monte Carlo L_p norm: (mean |x|^p)^(1/p)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ArgumentError("cannot take an L_p norm of an empty sample")
    if not np.isfinite(p) or p < 1:
        raise ArgumentError(f"need finite p >= 1, got {p}")
    return float(np.mean(np.abs(x) ** p) ** (1.0 / p))


def gaussian_abs_norm(p) -> np.ndarray:
    """|Z|_p for standard normal Z: sqrt(2) * (Gamma((p+1)/2)/Gamma(1/2))^(1/p)."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(2.0) * np.exp(
        (special.gammaln((p + 1) / 2) - special.gammaln(0.5)) / p
    )


@dataclass
class PsiFunction:
    """Tabulated generating function on [1, b), optionally with a closed form.

    Evaluation inside the grid uses the closed form when available and
    log-linear interpolation otherwise; beyond b the value is +inf (the
    standard formal extension).
    """

    p_grid: np.ndarray
    values: np.ndarray
    b: float
    fn: Optional[Callable] = None

    def __post_init__(self):
        self.p_grid = np.asarray(self.p_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.p_grid.ndim != 1 or self.p_grid.size < 1:
            raise ArgumentError("psi needs a nonempty 1-d grid")
        if np.any(np.diff(self.p_grid) <= 0):
            raise ArgumentError("psi grid must be strictly increasing")
        if self.p_grid[0] < 1 - 1e-12:
            raise ArgumentError("psi grid must start at p >= 1")
        if self.b <= 1:
            raise ArgumentError(f"support endpoint must exceed 1, got {self.b}")
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ArgumentError("psi values must be finite and strictly positive")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 0
        p = np.atleast_1d(p)
        out = np.empty_like(p)
        inside = (p >= 1 - 1e-12) & (p <= self.b + 1e-12)
        if self.fn is not None:
            out[inside] = self.fn(p[inside])
        else:
            out[inside] = np.exp(
                np.interp(np.log(p[inside]), np.log(self.p_grid), np.log(self.values))
            )
        out[~inside] = np.inf
        return float(out[0]) if scalar else out

    @classmethod
    def degenerate(cls, r: float, points: int = 16) -> "PsiFunction":
        """psi = 1 on [1, r]: the norm collapses to the plain L_r norm."""
        if r < 1:
            raise ArgumentError(f"degenerate order must be >= 1, got {r}")
        grid = np.linspace(1.0, r, points) if r > 1 else np.array([1.0])
        return cls(grid, np.ones_like(grid), b=max(r, 1 + 1e-9), fn=lambda p: np.ones_like(p))

    @classmethod
    def from_function(cls, fn: Callable, b: float = np.inf, points: int = 64) -> "PsiFunction":
        hi = min(b, P_CAP)
        grid = np.geomspace(1.0, hi, points, endpoint=False)
        vals = np.asarray(fn(grid), dtype=float)
        return cls(grid, vals, b=b, fn=fn)

    @classmethod
    def gaussian_natural(cls, points: int = 64) -> "PsiFunction":
        return cls.from_function(gaussian_abs_norm, b=np.inf, points=points)

    def csv_rows(self):
        yield ("p", "psi")
        for p, v in zip(self.p_grid, self.values):
            yield (float(p), float(v))


def natural_psi(norm_oracle: Callable[[float], float], p_grid: Sequence[float]) -> PsiFunction:
    """Tabulate the family-sup of L_p norms as a generating function.

    The oracle must already take the supremum over the family.  An infinite
    value at the smallest grid point means the family has no finite moment
    there; the grid is truncated at the first infinite value otherwise.
    """
    grid = np.asarray(sorted(float(p) for p in p_grid))
    vals = np.array([float(norm_oracle(p)) for p in grid])
    if not np.isfinite(vals[0]) or vals[0] <= 0:
        raise NotInGlsError(f"family norm at p={grid[0]} is {vals[0]}")
    finite = np.isfinite(vals)
    if not finite.all():
        cut = int(np.argmin(finite))
        grid, vals = grid[:cut], vals[:cut]
        b = float(grid[-1])  # divergence inside the grid fixes the endpoint
    else:
        b = float(grid[-1]) + 1e-9
    return PsiFunction(grid, vals, b=b)


def gls_norm(samples_or_oracle, psi: PsiFunction) -> float:
    """sup_p |zeta|_p / psi(p) over the psi grid.

    For unbounded supports truncated at the grid cap, a ratio still rising
    at the cap signals an infinite norm and returns +inf.
    """
    if callable(samples_or_oracle):
        norms = np.array([samples_or_oracle(p) for p in psi.p_grid])
    else:
        x = np.asarray(samples_or_oracle, dtype=float).ravel()
        norms = np.array([lp_norm(x, p) for p in psi.p_grid])
    ratios = norms / psi.values
    top = int(np.argmax(ratios))
    if (
        not np.isfinite(psi.b)
        and psi.p_grid.size >= 4
        and top >= psi.p_grid.size - 2
        and np.all(np.diff(ratios[-4:]) > 0)
    ):
        return math.inf
    return float(ratios[top])


# ---------------------------------------------------------------------------
# Young-Fenchel tail


def legendre(psi: PsiFunction, w: float) -> float:
    """v*(w) = sup_{p in [1,b)} (p*w - p ln psi(p)), computed on the grid and
    refined by a bounded 1-d search around the grid argmax.

    Grid evaluation can only undershoot the true supremum, which keeps the
    resulting tail bound conservative.
    """
    grid = psi.p_grid
    phi = grid * w - grid * np.log(psi.values)
    k = int(np.argmax(phi))
    best = float(phi[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda p: -(p * w - p * math.log(psi(p))),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if res.success:
            best = max(best, float(-res.fun))
    return best


def yf_tail(psi: PsiFunction, K: float, y: float) -> float:
    """Exponential tail bound exp(-v*(ln(y/K))) valid for y >= e*K.

    Below the threshold the transform is not a certified bound and the call
    refuses rather than extrapolates.
    """
    if K <= 0:
        raise DomainError(f"norm constant must be positive, got {K}")
    if y < math.e * K * (1 - 1e-12):
        raise DomainError(f"tail point y={y} below validity threshold e*K={math.e * K}")
    return math.exp(-legendre(psi, math.log(y / K)))


# ---------------------------------------------------------------------------
# Hoelder tuple optimization


@dataclass(frozen=True)
class HolderTuple:
    """Conjugate tuple: a(i) > 1 with sum 1/a(i) = 1 (a=(1,) allowed for k=1)."""

    a: tuple

    def __post_init__(self):
        arr = np.asarray(self.a, dtype=float)
        if arr.size == 0:
            raise ArgumentError("empty tuple")
        if arr.size == 1:
            if abs(arr[0] - 1.0) > 1e-9:
                raise ArgumentError("a singleton tuple must be (1,)")
            return
        if np.any(arr <= 1):
            raise ArgumentError("tuple entries must exceed 1")
        if abs(np.sum(1.0 / arr) - 1.0) > 1e-9:
            raise ArgumentError(f"sum of reciprocals is {np.sum(1.0 / arr)}, not 1")


def _simplex_seeds(k: int, per_axis: int):
    ticks = np.arange(1, per_axis + 1) / (per_axis + 1)
    if k == 2:
        for t1 in ticks:
            yield np.array([t1, 1 - t1])
        return
    for combo in itertools.product(ticks, repeat=k - 1):
        rest = 1 - sum(combo)
        if rest > 1e-9:
            yield np.array(list(combo) + [rest])


def _minimize_on_simplex(log_objective, k: int, per_axis: int = SIMPLEX_SEEDS):
    """Minimize over the open simplex {t > 0, sum t = 1}; returns (t, value).

    Seeds on a dense grid, then Nelder-Mead on softmax coordinates.  The
    objective returns +inf off its effective domain; -inf means the true
    infimum 0 (a zero factor) and short-circuits.
    """
    if k == 1:
        t = np.array([1.0])
        return t, log_objective(t)
    best_t, best_v = None, np.inf
    for t in _simplex_seeds(k, per_axis):
        v = log_objective(t)
        if v == -np.inf:
            return t, -np.inf
        if v < best_v:
            best_t, best_v = t, v
    if best_t is None or not np.isfinite(best_v):
        return None, np.inf

    def packed(y):
        z = np.append(y, 0.0)
        z = np.exp(z - z.max())
        t = z / z.sum()
        v = log_objective(t)
        return v if np.isfinite(v) or v == -np.inf else 1e300

    y0 = np.log(best_t[:-1] / best_t[-1])
    res = optimize.minimize(packed, y0, method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
    if res.fun < best_v:
        z = np.append(res.x, 0.0)
        z = np.exp(z - z.max())
        best_t, best_v = z / z.sum(), float(res.fun)
    return best_t, best_v


@dataclass
class MixedMomentBound:
    value: float
    tuple_a: HolderTuple
    log_value: float


def holder_mixed_bound(norm_oracle: Callable[[int, float], float],
                       p_vec: Sequence[float]) -> MixedMomentBound:
    """Optimized Hoelder bound for the mixed moment E prod |xi_i|^{p_i}.

    Minimizes prod_i norm(i, a(i) p_i)^{p_i} over conjugate tuples; the
    result dominates the true mixed moment for any a, hence in particular
    at the optimizer.
    """
    p = np.asarray(p_vec, dtype=float)
    if np.any(p < 1):
        raise PreconditionError(f"moment exponents must be >= 1, got {p}")
    k = p.size

    def log_obj(t):
        total = 0.0
        for i in range(k):
            norm = norm_oracle(i, p[i] / t[i])
            if not np.isfinite(norm):
                return np.inf
            if norm <= 0:
                return -np.inf
            total += p[i] * math.log(norm)
        return total

    t, v = _minimize_on_simplex(log_obj, k)
    if t is None:
        raise NoFiniteBoundError("norm oracle is infinite on the whole tuple simplex")
    if v == -np.inf:
        return MixedMomentBound(0.0, HolderTuple(tuple(1.0 / t)) if k > 1 else HolderTuple((1.0,)), -np.inf)
    a = HolderTuple(tuple(1.0 / t) if k > 1 else (1.0,))
    return MixedMomentBound(math.exp(v), a, v)


@dataclass
class MinTailBound:
    value: float
    log_value: float
    p_opt: np.ndarray
    tuple_a: Optional[HolderTuple]
    vacuous: bool


def min_tail_bound(psis: Sequence[PsiFunction], norms: Sequence[float], u: float,
                   p_points: int = 9) -> MinTailBound:
    """Tail bound for P(min_i |xi_i| > u): inf over exponent vectors of
    Y(p) / u^(sum p), Y the optimized Hoelder product of psi envelopes.

    Exponents beyond a psi support make that factor infinite, so the search
    domain is effectively {p : achievable conjugate tuples exist}; if no
    finite value is found anywhere the call raises.
    """
    if u <= 0:
        raise PreconditionError(f"tail level must be positive, got {u}")
    k = len(psis)
    if k != len(norms):
        raise ArgumentError("psis and norms must align")
    log_u = math.log(u)

    def oracle(i, p):
        return norms[i] * psis[i](p)

    if k == 1:
        psi, norm = psis[0], norms[0]
        hi = min(psi.b, P_CAP)
        grid = np.geomspace(1.0, hi, 4 * p_points, endpoint=False)

        def log_obj1(p):
            val = norm * psi(float(p))
            if not np.isfinite(val):
                return np.inf
            if val <= 0:
                return -np.inf
            return float(p) * (math.log(val) - log_u)

        vals = np.array([log_obj1(p) for p in grid])
        j = int(np.nanargmin(vals))
        res = optimize.minimize_scalar(
            log_obj1, bounds=(grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]),
            method="bounded")
        best_log = min(float(vals[j]), float(res.fun))
        if not np.isfinite(best_log) and best_log != -np.inf:
            raise NoFiniteBoundError("no finite scalar tail bound on the grid")
        return MinTailBound(math.exp(best_log), best_log, np.array([grid[j]]),
                            HolderTuple((1.0,)), best_log >= 0)

    grids = [np.geomspace(1.0, min(psi.b, P_CAP), p_points, endpoint=False) for psi in psis]

    def eval_p(p):
        try:
            mixed = holder_mixed_bound(oracle, p)
        except NoFiniteBoundError:
            return np.inf, None
        return mixed.log_value - float(np.sum(p)) * log_u, mixed.tuple_a

    best = (np.inf, None, None)
    for combo in itertools.product(*grids):
        p = np.asarray(combo)
        lv, a = eval_p(p)
        if lv < best[0]:
            best = (lv, p, a)
    if best[1] is None:
        raise NoFiniteBoundError("no exponent vector admits a finite product bound")

    def packed(logp):
        p = np.clip(np.exp(logp), 1.0, None)
        lv, _ = eval_p(p)
        return lv if np.isfinite(lv) or lv == -np.inf else 1e300

    res = optimize.minimize(packed, np.log(best[1]), method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 400})
    log_val, p_opt, a_opt = best
    if res.fun < log_val:
        p_opt = np.clip(np.exp(res.x), 1.0, None)
        log_val = float(res.fun)
        a_opt = eval_p(p_opt)[1]
    value = math.exp(log_val) if log_val < 700 else math.inf
    return MinTailBound(value, log_val, p_opt, a_opt, log_val >= 0)


# ---------------------------------------------------------------------------
# Rosenthal inflation


def rosenthal_K(p, C_R: float = 1.0) -> np.ndarray:
    """Sum-uniformity factor C_R * p / ln p (meaningful for p >= 2)."""
    p = np.asarray(p, dtype=float)
    return C_R * p / np.log(p)


def rosenthal_transform(psi: PsiFunction, C_R: float = 1.0) -> PsiFunction:
    """Pointwise product K_R(p) * psi(p) on the grid restricted to p >= 2.

    Grid points below 2 are trimmed with a warning (the factor p/ln p is
    only a sum bound from the second moment up).
    """
    if C_R <= 0:
        raise ArgumentError(f"C_R must be positive, got {C_R}")
    keep = psi.p_grid >= 2.0
    if not keep.all():
        warnings.warn("trimming psi grid to p >= 2 for the Rosenthal transform")
    grid = psi.p_grid[keep]
    vals = psi.values[keep]
    if grid.size == 0:
        grid = np.array([2.0])
        vals = np.array([float(psi(2.0))])
        if not np.isfinite(vals[0]):
            raise DomainError("psi has no support at p >= 2")
    fn = None
    if psi.fn is not None:
        base = psi.fn
        fn = lambda p, _b=base, _c=C_R: rosenthal_K(p, _c) * np.asarray(_b(p), dtype=float)
    return PsiFunction(grid, rosenthal_K(grid, C_R) * vals, b=psi.b, fn=fn)


def delta_plus(U_oracle: Callable[[int, float], float], s: Mapping[int, float],
               C_R: float = 1.0) -> MixedMomentBound:
    """Sum-uniform moment quasi-distance bound.

    inf over conjugate tuples alpha (indexed by masks) of
    prod_M [K_R(alpha_M s_M) * U(M, alpha_M s_M)]^(1/alpha_M);
    dominates the expected sup-over-n product of normalized-sum increments.
    """
    masks = sorted(s)
    sv = np.array([float(s[m]) for m in masks])
    if np.any(sv <= 0):
        raise PreconditionError("moment exponents s(M) must be positive")
    k = len(masks)

    def log_obj(t):
        total = 0.0
        for j in range(k):
            p = sv[j] / t[j]
            if p < 2.0:
                return np.inf  # Rosenthal factor needs p >= 2
            u_val = U_oracle(masks[j], p)
            if not np.isfinite(u_val):
                return np.inf
            ku = rosenthal_K(p, C_R) * u_val
            if ku <= 0:
                return -np.inf
            total += t[j] * math.log(ku)
        return total

    t, v = _minimize_on_simplex(log_obj, k)
    if t is None:
        raise NoFiniteBoundError("no conjugate tuple keeps all exponents inside support")
    if v == -np.inf:
        return MixedMomentBound(0.0, HolderTuple(tuple(1.0 / t)) if k > 1 else HolderTuple((1.0,)), -np.inf)
    a = HolderTuple(tuple(1.0 / t) if k > 1 else (1.0,))
    return MixedMomentBound(math.exp(v), a, v)


# ---------------------------------------------------------------------------
# moment quasi-distance between box endpoints


def beta_distance(model: FieldModel, lattice: Lattice, x1, x3,
                  s: Mapping[int, float], replicates: int, seed: SeedSpec) -> float:
    """Monte Carlo sup over middle nodes of E prod_M |increment(M)|^{s(M)}.

    The product runs over all corner increments of the box [x1, x3]; the
    middle point walks the lattice nodes of the box.  Zero at x1 == x3 and
    symmetric under swapping the roles of the endpoints (mask complement).
    """
    p1, p3 = as_point(x1, lattice.d), as_point(x3, lattice.d)
    if not leq(p1, p3):
        raise PreconditionError(f"need x1 <= x3, got {p1} vs {p3}")
    masks = enumerate_masks(lattice.d)
    sv = {m: float(s[m]) for m in masks} if not isinstance(s, (int, float)) else None
    if sv is None:
        sv = {m: float(s) for m in masks}
    if any(v <= 0 for v in sv.values()):
        raise PreconditionError("moment exponents s(M) must be positive")
    i1 = lattice.index_of(p1)
    i3 = lattice.index_of(p3)
    shape = (lattice.m,) * lattice.d
    paths = model.sample_batch(lattice, seed, replicates)
    corners = {m: int(np.ravel_multi_index(
        tuple(i3[j] if (m >> j) & 1 else i1[j] for j in range(lattice.d)), shape))
        for m in masks}
    best = 0.0
    for mid in itertools.product(*[range(a, b + 1) for a, b in zip(i1, i3)]):
        f2 = int(np.ravel_multi_index(mid, shape))
        prod = np.ones(replicates)
        for m in masks:
            prod *= np.abs(paths[:, f2] - paths[:, corners[m]]) ** sv[m]
        best = max(best, float(prod.mean()))
    return best
