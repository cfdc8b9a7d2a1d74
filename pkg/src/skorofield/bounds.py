"""Tail-bound engine.

Everything here assembles one inequality: for a field whose minimum-increment
statistic tau admits the factorized tail estimate

    sup_{x2} P(tau(x1, x2, x3) >= u) <= q(x1, x3) / lambda(u),

the entropy-weighted series

    Q(u) = inf_{eps, theta} sum_k N(q, eps(k+1)) * eps(k) / lambda(u * theta(k))

bounds P(tau > u), and P(kappa(h) > u) <= Q(u) * sigma(2h) with sigma the
window functional of the quasi-distance q.

The module provides the calibrated ("natural") key estimate extracted from
Monte Carlo trajectories, the series evaluator with divergence as a tagged
value, sequence-family optimizers, the closed-form power-law bound with the
W(gamma) constant, envelope bounds over moment scales, and the assembled
product with vacuity flags.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .domain import Lattice
from .errors import (
    ArgumentError,
    ConfigError,
    DegenerateKeyEstimateError,
    DomainError,
    NoFiniteBoundError,
    PreconditionError,
    ResourceCapError,
)
from .fields import FieldModel, SeedSpec
from .glspace import PsiFunction
from .quasidist import TabulatedQ, covering_number, sigma

SERIES_TOL = 1e-12
SERIES_K_MAX = 10_000


def W(gamma: float) -> float:
    """Geometric chaining constant (1 - 2^(-(1-gamma)/2))^(-1), gamma in (0,1)."""
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0,1), got {gamma}")
    return 1.0 / (1.0 - 2.0 ** (-(1.0 - gamma) / 2.0))


def theorem31_bound(C_N: float, C_lambda: float, gamma: float, p: float, u: float) -> float:
    """Closed-form power-law tail bound 2 C_N/C_lambda * W(gamma)^(p+1) * u^(-p).

    Valid for entropy exponent gamma in (0,1) and moment exponent p > 0, at
    levels u >= 1.
    """
    if p <= 0:
        raise DomainError(f"need p > 0, got {p}")
    if C_N <= 0 or C_lambda <= 0:
        raise DomainError("constants must be positive")
    if u < 1:
        raise DomainError(f"the bound is stated for u >= 1, got {u}")
    return 2.0 * C_N / C_lambda * W(gamma) ** (p + 1.0) * u ** (-p)


def theorem31_sequences(gamma: float, p: float) -> "SequenceFamily":
    """The prescribed sequences behind the closed form: eps(k) = 2^-k and
    geometric theta with theta0 = 2^((gamma-1)/(2p)); for series cross-checks."""
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0,1), got {gamma}")
    if p <= 0:
        raise DomainError(f"need p > 0, got {p}")
    theta0 = 2.0 ** ((gamma - 1.0) / (2.0 * p))
    return SequenceFamily.halving_theta(theta0)


@dataclass(frozen=True)
class SequenceFamily:
    """Admissible sequence pair (eps, theta) for the chaining series.

    * ``geometric(s)``: eps(k) = s^(k-1), theta(k) = (1-s) s^k -- one knob,
      eps(1) = 1 and theta sums to one.
    * ``geometric2(s, theta0)``: eps(k) = s^(k-1), theta(k) = (1-theta0) theta0^k.
    * ``halving_theta(theta0)``: eps(k) = 2^-k with geometric theta; the
      closed-form cross-check family (note eps(1) = 1/2, not 1).
    * ``custom(eps, theta)``: explicit tables, validated strictly
      (eps(1) = 1, eps decreasing to 0; theta decreasing, summing to 1).
    """

    kind: str
    s: Optional[float] = None
    theta0: Optional[float] = None
    eps_table: Optional[tuple] = None
    theta_table: Optional[tuple] = None

    @classmethod
    def geometric(cls, s: float) -> "SequenceFamily":
        if not 0 < s < 1:
            raise ConfigError(f"geometric ratio must lie in (0,1), got {s}")
        return cls("geometric", s=s)

    @classmethod
    def geometric2(cls, s: float, theta0: float) -> "SequenceFamily":
        if not 0 < s < 1 or not 0 < theta0 < 1:
            raise ConfigError("both ratios must lie in (0,1)")
        return cls("geometric2", s=s, theta0=theta0)

    @classmethod
    def halving_theta(cls, theta0: float) -> "SequenceFamily":
        if not 0 < theta0 < 1:
            raise ConfigError(f"theta0 must lie in (0,1), got {theta0}")
        return cls("halving-theta", theta0=theta0)

    @classmethod
    def custom(cls, eps: Sequence[float], theta: Sequence[float]) -> "SequenceFamily":
        eps = tuple(float(e) for e in eps)
        theta = tuple(float(t) for t in theta)
        if len(eps) < 3 or len(theta) < 3:
            raise ConfigError("custom tables need at least 3 entries")
        if abs(eps[1] - 1.0) > 1e-12:
            raise ConfigError(f"eps(1) must equal 1, got {eps[1]}")
        if any(e2 >= e1 for e1, e2 in zip(eps[1:], eps[2:])) or min(eps) <= 0:
            raise ConfigError("eps must decrease strictly to 0 from index 1")
        if any(t2 > t1 for t1, t2 in zip(theta, theta[1:])) or min(theta) <= 0:
            raise ConfigError("theta must be positive and nonincreasing")
        if abs(sum(theta) - 1.0) > 1e-6:
            raise ConfigError(f"theta must sum to 1, got {sum(theta)}")
        return cls("custom", eps_table=eps, theta_table=theta)

    def eps(self, k: int) -> float:
        if self.kind in ("geometric", "geometric2"):
            return self.s ** (k - 1)
        if self.kind == "halving-theta":
            return 2.0 ** (-k)
        if k < len(self.eps_table):
            return self.eps_table[k]
        # geometric continuation by the last observed ratio
        ratio = self.eps_table[-1] / self.eps_table[-2]
        return self.eps_table[-1] * ratio ** (k - len(self.eps_table) + 1)

    def theta(self, k: int) -> float:
        if self.kind == "geometric":
            return (1.0 - self.s) * self.s**k
        if self.kind in ("geometric2", "halving-theta"):
            return (1.0 - self.theta0) * self.theta0**k
        if k < len(self.theta_table):
            return self.theta_table[k]
        ratio = self.theta_table[-1] / self.theta_table[-2]
        return self.theta_table[-1] * ratio ** (k - len(self.theta_table) + 1)

    def label(self) -> str:
        if self.kind == "geometric":
            return f"geometric(s={self.s:.6g})"
        if self.kind == "geometric2":
            return f"geometric2(s={self.s:.6g}, theta0={self.theta0:.6g})"
        if self.kind == "halving-theta":
            return f"halving-theta(theta0={self.theta0:.6g})"
        return "custom"


@dataclass
class QSeriesResult:
    """Tagged series value: divergence is a value state, not an exception."""

    value: float
    diverged: bool
    k_stop: int
    remainder: float
    family: str = ""

    @property
    def finite(self) -> bool:
        return not self.diverged and np.isfinite(self.value)


def q_series(N_oracle: Callable[[float], float], lam: Callable[[float], float],
             u: float, family: SequenceFamily, tol: float = SERIES_TOL,
             k_max: int = SERIES_K_MAX) -> QSeriesResult:
    """Evaluate sum_k N(eps(k+1)) * eps(k) / lambda(u * theta(k)).

    Truncates once the running term drops below tol times the partial sum
    with the last five term ratios below one; the geometric remainder
    estimate is folded into the returned value (upper bound).  Failure to
    decay within k_max terms returns a divergent result with value +inf.
    """
    if u <= 0:
        raise PreconditionError(f"tail level must be positive, got {u}")
    partial = 0.0
    prev = None
    ratios = []
    stall = 0  # consecutive terms without meaningful decay
    for k in range(k_max):
        try:
            lam_val = lam(u * family.theta(k))
            eps_next = family.eps(k + 1)
            n_val = N_oracle(eps_next) if eps_next > 0 else math.inf
        except (ArithmeticError, OverflowError):
            return QSeriesResult(math.inf, True, k, math.inf, family.label())
        if lam_val <= 0 or not np.isfinite(n_val):
            return QSeriesResult(math.inf, True, k, math.inf, family.label())
        term = n_val * family.eps(k) / lam_val
        if not np.isfinite(term):
            return QSeriesResult(math.inf, True, k, math.inf, family.label())
        partial += term
        if prev is not None and prev > 0:
            ratios.append(term / prev)
            ratios = ratios[-5:]
            stall = stall + 1 if term >= prev * (1 - 1e-6) else 0
        prev = term
        if stall >= 200:
            # two hundred terms without decay: treat as divergent
            return QSeriesResult(math.inf, True, k, math.inf, family.label())
        if (
            k >= 5
            and term < tol * partial
            and len(ratios) == 5
            and all(r < 1 for r in ratios)
        ):
            r = max(ratios)
            remainder = term * r / (1.0 - r)
            return QSeriesResult(partial + remainder, False, k, remainder, family.label())
    return QSeriesResult(math.inf, True, k_max, math.inf, family.label())


@dataclass
class QOptimizeResult:
    value: float
    diverged: bool
    family: Optional[SequenceFamily]
    series: Optional[QSeriesResult]


def q_optimize(N_oracle, lam, u: float, family_kind: str = "geometric",
               tol: float = SERIES_TOL, s_points: int = 25) -> QOptimizeResult:
    """Minimize the chaining series over a sequence family.

    ``geometric``: 1-d scan plus bounded refinement over s in (0,1).
    ``geometric2``: coarse 2-d grid over (s, theta0) plus Nelder-Mead.
    Divergence everywhere yields a divergent result, not an exception.
    """
    if family_kind == "geometric":
        grid = np.linspace(0.03, 0.97, s_points)

        def val(s):
            res = q_series(N_oracle, lam, u, SequenceFamily.geometric(float(s)), tol)
            return res.value if res.finite else math.inf

        vals = np.array([val(s) for s in grid])
        j = int(np.argmin(vals))
        if not np.isfinite(vals[j]):
            return QOptimizeResult(math.inf, True, None, None)
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        res = optimize.minimize_scalar(val, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-6})
        s_best = float(res.x) if res.fun <= vals[j] else float(grid[j])
        fam = SequenceFamily.geometric(s_best)
        series = q_series(N_oracle, lam, u, fam, tol)
        if not series.finite or series.value > vals[j]:
            fam = SequenceFamily.geometric(float(grid[j]))
            series = q_series(N_oracle, lam, u, fam, tol)
        return QOptimizeResult(series.value, False, fam, series)

    if family_kind == "geometric2":
        ss = np.linspace(0.05, 0.95, 13)
        ths = np.linspace(0.05, 0.95, 13)
        best = (math.inf, None)
        for s in ss:
            for t0 in ths:
                res = q_series(N_oracle, lam, u, SequenceFamily.geometric2(s, t0), tol)
                if res.finite and res.value < best[0]:
                    best = (res.value, (float(s), float(t0)))
        if best[1] is None:
            return QOptimizeResult(math.inf, True, None, None)

        def packed(z):
            s, t0 = 1 / (1 + np.exp(-z))
            res = q_series(N_oracle, lam, u, SequenceFamily.geometric2(float(s), float(t0)), tol)
            return res.value if res.finite else 1e300

        z0 = np.log(np.array(best[1]) / (1 - np.array(best[1])))
        opt = optimize.minimize(packed, z0, method="Nelder-Mead",
                                options={"xatol": 1e-6, "fatol": 1e-10})
        if opt.fun < best[0]:
            s, t0 = 1 / (1 + np.exp(-opt.x))
            best = (float(opt.fun), (float(s), float(t0)))
        fam = SequenceFamily.geometric2(*best[1])
        return QOptimizeResult(best[0], False, fam, q_series(N_oracle, lam, u, fam, tol))

    raise ArgumentError(f"unknown sequence family kind {family_kind!r}")


# ---------------------------------------------------------------------------
# natural key estimate


@dataclass
class KeyEstimate:
    """Calibrated factorized tail estimate for one model family.

    ``q`` is the operative tabulated quasi-distance (normalized to max 1;
    for d=1 monotonized over the gap so windows nest, which can only
    enlarge q and therefore preserves the defining inequality).  ``lam``
    interpolates the tabulated monotone tail-decay function; below the
    tabulated range it falls back to the constant min(lambda(u_lo), min q),
    which keeps q/lambda >= 1, a bound no sample can violate.
    """

    lattice: Lattice
    q: TabulatedQ
    raw_matrix: np.ndarray
    u_grid: np.ndarray
    lambda_values: np.ndarray
    u0: float
    scale: float
    replicates: int
    models: tuple
    floor: float

    def lam(self, u: float) -> float:
        if u <= 0:
            return self._lam_floor()
        lo = self.u_grid[0]
        if u < lo:
            return self._lam_floor()
        logs = np.interp(math.log(u), np.log(self.u_grid), np.log(self.lambda_values))
        return float(np.exp(logs)) if u <= self.u_grid[-1] else float(self.lambda_values[-1])

    def _lam_floor(self) -> float:
        off = self.q.matrix[~np.eye(self.q.matrix.shape[0], dtype=bool)]
        qmin = float(off[off > 0].min()) * self.q.scale if np.any(off > 0) else 1e-300
        return min(float(self.lambda_values[0]), qmin)

    def n_oracle(self) -> Callable[[float], float]:
        """Memoized greedy covering numbers of the lattice under q.

        With a gap profile the covering count is a step function of the
        gap-window index, so the cache is keyed by that index and saturates
        after at most m distinct greedy runs.
        """
        pm = self.q.pair_matrix(self.lattice)
        profile = self.q.gap_profile(self.lattice)
        cache = {}

        def n_of(eps: float) -> float:
            eps = max(eps, 1e-300)
            if profile is not None:
                key = int(np.searchsorted(profile, eps, side="right") - 1)
            else:
                key = round(math.log(eps), 9)
            if key not in cache:
                cache[key] = covering_number(self.q, self.lattice, eps, pair_matrix=pm)
            return cache[key]

        return n_of

    def json_dict(self) -> dict:
        return {
            "u0": self.u0,
            "scale": self.scale,
            "replicates": self.replicates,
            "models": list(self.models),
            "floor": self.floor,
            "u_grid": [float(v) for v in self.u_grid],
            "lambda": [float(v) for v in self.lambda_values],
        }


def _tau_exceed_profiles(model: FieldModel, lattice: Lattice, thresholds: np.ndarray,
                         replicates: int, seed: SeedSpec) -> np.ndarray:
    """P-hat[i1, i3, t] = sup over middle nodes of the fraction of replicates
    with tau(x1, ., x3) >= threshold t; upper triangle only (d=1).

    Works from precomputed offset-increment tables: for the middle node at
    offset j inside a gap-g pair, tau is the minimum of the offset-j and
    offset-(g-j) absolute increments, so every (g, j) slice is a pair of
    contiguous views.
    """
    m = lattice.m
    paths = model.sample_batch(lattice, seed, replicates).astype(np.float32)
    b = replicates
    thr = thresholds.astype(np.float32)
    nt = thr.size
    # offsets[j] = |V(. + j) - V(.)|, total memory B * m^2 / 2 floats
    offsets = [np.abs(paths[:, j:] - paths[:, : m - j]) for j in range(m)]
    out = np.zeros((m, m, nt), dtype=np.float32)
    idx = np.arange(m)
    for g in range(1, m):
        npairs = m - g
        best = np.zeros((npairs, nt), dtype=np.int64)
        for j in range(g + 1):
            left = offsets[j][:, :npairs]
            right = offsets[g - j][:, j : j + npairs]
            taus = np.minimum(left, right)
            counts = (taus[:, :, None] >= thr).sum(axis=0)
            np.maximum(best, counts, out=best)
        prob = best / b
        i = idx[:npairs]
        out[i, i + g] = prob
        out[i + g, i] = prob
    return out


def natural_key_estimate(models: Union[FieldModel, Sequence[FieldModel]],
                         lattice: Lattice, u_grid: Sequence[float],
                         replicates: int, seed: SeedSpec, u0: float = 1.0,
                         isotropic: Optional[bool] = None) -> KeyEstimate:
    """Extract (q, lambda) from trajectories.

    q(x1,x3) is the sup over middle nodes of P-hat(tau >= u0), maximized
    over the supplied models (a family estimate), floored at half a count
    (the Monte Carlo resolution), then normalized to max 1.  lambda(u) is
    the reciprocal of the sup over distinct pairs of P-hat(tau >= u)/q,
    monotonized by running maximum.  Both tables certify the factorized
    tail inequality on the calibration sample by construction.

    For d=1 (default) q is additionally monotonized over the gap count so
    that windows nest; the raw pairwise table is retained on the result.
    """
    if replicates < 1000:
        raise PreconditionError(f"need >= 1000 calibration replicates, got {replicates}")
    if u0 <= 0:
        raise PreconditionError(f"threshold u0 must be positive, got {u0}")
    model_list = [models] if isinstance(models, FieldModel) else list(models)
    if not model_list:
        raise ArgumentError("need at least one model")
    if lattice.d != 1:
        raise ResourceCapError(
            "natural key estimates are implemented for d=1 lattices; "
            "higher dimensions exceed the desk-scale budget"
        )
    if isotropic is None:
        isotropic = lattice.d == 1
    u_arr = np.asarray(sorted(set(float(v) for v in u_grid)))
    if u_arr.size < 2:
        raise ArgumentError("need at least two tabulation levels")
    thresholds = np.asarray(sorted(set([u0] + list(u_arr))))
    prof = None
    for model in model_list:
        cur = _tau_exceed_profiles(model, lattice, thresholds, replicates, seed)
        prof = cur if prof is None else np.maximum(prof, cur)
    idx_u0 = int(np.searchsorted(thresholds, u0))
    q_raw = prof[:, :, idx_u0].astype(np.float64)
    if q_raw.max() <= 0:
        raise DegenerateKeyEstimateError(
            f"no replicate reached tau >= {u0} anywhere; lower u0 or use "
            "normalized partial sums"
        )
    floor = 0.5 / replicates
    m = lattice.m
    off_diag = ~np.eye(m, dtype=bool)
    q_mat = q_raw.copy()
    q_mat[off_diag] = np.maximum(q_mat[off_diag], floor)
    gap_values = None
    if isotropic:
        gaps = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
        prof_gap = np.zeros(m)
        for g in range(1, m):
            prof_gap[g] = q_mat[gaps == g].max()
        prof_gap = np.maximum.accumulate(prof_gap)
        q_mat = prof_gap[gaps]
        gap_values = prof_gap
    scale = float(q_mat.max())
    q_mat /= scale
    if gap_values is not None:
        gap_values = gap_values / scale
    q_tab = TabulatedQ(lattice, q_mat, scale=1.0, gap_values=gap_values)

    # Levels with no observed exceedance anywhere cap lambda at the Monte
    # Carlo resolution (one count in `replicates`); claiming more decay than
    # the sample can resolve would be uncertified.
    lam_cap = float(replicates)
    lam_vals = np.empty(u_arr.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, u in enumerate(u_arr):
            t_idx = int(np.searchsorted(thresholds, u))
            p_u = prof[:, :, t_idx].astype(np.float64)
            ratio = np.where(off_diag, p_u / q_mat, 0.0)
            top = float(ratio.max())
            lam_vals[j] = min(1.0 / top if top > 0 else lam_cap, lam_cap)
    lam_vals = np.maximum.accumulate(lam_vals)

    raw_norm = q_raw / scale
    return KeyEstimate(
        lattice=lattice,
        q=q_tab,
        raw_matrix=raw_norm,
        u_grid=u_arr,
        lambda_values=lam_vals,
        u0=u0,
        scale=scale,
        replicates=replicates,
        models=tuple(mo.describe() for mo in model_list),
        floor=floor / scale,
    )


# ---------------------------------------------------------------------------
# assembled bounds


@dataclass
class AssembledBound:
    value: float
    vacuous: bool
    diverged: bool = False
    sigma_decaying: Optional[bool] = None

    @property
    def certifying(self) -> bool:
        return (not self.vacuous and not self.diverged
                and self.sigma_decaying is not False)


def assemble_kappa_bound(Q_value: Union[float, QSeriesResult, QOptimizeResult],
                         sigma_oracle: Union[float, Callable[[float], float]],
                         h: float, u: float,
                         sigma_decaying: Optional[bool] = None) -> AssembledBound:
    """Product Q(u) * sigma(2h); flags vacuity (>= 1) and divergence.

    ``sigma_decaying=False`` marks assemblies whose window functional does
    not vanish as h -> 0: the product may be finite at fixed h yet certify
    no membership statement.
    """
    diverged = False
    if isinstance(Q_value, (QSeriesResult, QOptimizeResult)):
        diverged = Q_value.diverged
        Q_value = Q_value.value
    sig = sigma_oracle(2.0 * h) if callable(sigma_oracle) else float(sigma_oracle)
    value = Q_value * sig
    return AssembledBound(value, bool(not np.isfinite(value) or value >= 1.0),
                          diverged, sigma_decaying)


@dataclass
class BoundReport:
    """Assembled tail-bound table over (h, u) with optimizer diagnostics."""

    kind: str
    u_grid: np.ndarray
    h_grid: np.ndarray
    q_values: np.ndarray           # (U,)
    sigma_values: np.ndarray       # (H,)  evaluated at 2h
    bound: np.ndarray              # (H, U)
    flags: np.ndarray              # (H, U) strings
    argmin: list                   # per-u family labels
    constants: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def csv_rows(self):
        yield ("h", "u", "bound", "flag")
        for i, h in enumerate(self.h_grid):
            for j, u in enumerate(self.u_grid):
                yield (float(h), float(u), float(self.bound[i, j]), self.flags[i, j])

    def json_dict(self) -> dict:
        return {
            "bound_kind": self.kind,
            "constants": self.constants,
            "u_grid": [float(v) for v in self.u_grid],
            "h_grid": [float(v) for v in self.h_grid],
            "q_values": [float(v) for v in self.q_values],
            "sigma_at_2h": [float(v) for v in self.sigma_values],
            "argmin": self.argmin,
            "flags": sorted(set(self.flags.ravel().tolist())),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.json_dict(), sort_keys=True, indent=2)


def kappa_bound_report(key: KeyEstimate, u_grid: Sequence[float],
                       h_grid: Sequence[float], family_kind: str = "geometric2",
                       tol: float = SERIES_TOL) -> BoundReport:
    """Optimize the series at every u and assemble Q(u) * sigma(2h)."""
    u_arr = np.asarray(u_grid, dtype=float)
    h_arr = np.asarray(h_grid, dtype=float)
    n_of = key.n_oracle()
    q_vals = np.empty(u_arr.size)
    labels = []
    diverged = np.zeros(u_arr.size, dtype=bool)
    for j, u in enumerate(u_arr):
        res = q_optimize(n_of, key.lam, u, family_kind, tol)
        q_vals[j] = res.value
        diverged[j] = res.diverged
        labels.append(res.family.label() if res.family else "divergent")
    sig_vals = np.array([sigma(key.q, key.lattice, 2.0 * h) for h in h_arr])
    bound = sig_vals[:, None] * q_vals[None, :]
    flags = np.empty(bound.shape, dtype=object)
    for i in range(h_arr.size):
        for j in range(u_arr.size):
            if diverged[j]:
                flags[i, j] = "divergent"
            elif bound[i, j] >= 1.0 or not np.isfinite(bound[i, j]):
                flags[i, j] = "vacuous"
            else:
                flags[i, j] = "ok"
    return BoundReport(
        kind="entropy-series",
        u_grid=u_arr,
        h_grid=h_arr,
        q_values=q_vals,
        sigma_values=sig_vals,
        bound=bound,
        flags=flags,
        argmin=labels,
        constants={"u0": key.u0, "replicates": key.replicates, "floor": key.floor},
        provenance={"models": list(key.models), "scale": key.scale},
    )


# ---------------------------------------------------------------------------
# envelope bounds over moment scales


@dataclass
class EnvelopeBound:
    value: float
    log_value: float
    argmin: float
    vacuous: bool


def gls_envelope_bound(u: float, mode: str, K_oracle: Optional[Callable] = None,
                       upsilon: Optional[PsiFunction] = None,
                       gamma: Optional[float] = None,
                       C_N: float = 1.0, C_lambda: float = 1.0,
                       q_max: float = 200.0) -> EnvelopeBound:
    """Optimized power-envelope tail bounds.

    ``mode="envelope"``: inf over q > 0 of K(q) * u^(-q) for a supplied
    envelope K of the power-law constants.
    ``mode="moment-scale"``: 2 C_N/C_lambda * inf over p in [1,b) of
    upsilon(p)^gamma * W(gamma)^(p+1) * u^(-p) for the natural moment
    profile upsilon of the minimum statistic.
    """
    if u <= 0:
        raise DomainError(f"need u > 0, got {u}")
    if mode == "envelope":
        if K_oracle is None:
            raise ArgumentError("mode='envelope' needs K_oracle")
        log_u = math.log(u)

        def neg(q):
            try:
                k = K_oracle(float(q))
            except OverflowError:
                return np.inf
            if not np.isfinite(k) or k <= 0:
                return np.inf
            return math.log(k) - float(q) * log_u

        grid = np.geomspace(1e-3, q_max, 400)
        vals = np.array([neg(q) for q in grid])
        j = int(np.argmin(vals))
        if not np.isfinite(vals[j]):
            raise NoFiniteBoundError("envelope K is infinite on the probed range")
        res = optimize.minimize_scalar(
            neg, bounds=(grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]),
            method="bounded", options={"xatol": 1e-12})
        if res.fun < vals[j]:
            best_log, best_q = float(res.fun), float(res.x)
        else:
            best_log, best_q = float(vals[j]), float(grid[j])
        return EnvelopeBound(math.exp(best_log), best_log, best_q, best_log >= 0)

    if mode == "moment-scale":
        if upsilon is None or gamma is None:
            raise ArgumentError("mode='moment-scale' needs upsilon and gamma")
        if u < 1:
            raise DomainError(f"moment-scale bound is stated for u >= 1, got {u}")
        w_g = W(gamma)
        log_u = math.log(u)
        log_pref = math.log(2.0 * C_N / C_lambda)

        def neg(p):
            up = upsilon(float(p))
            if not np.isfinite(up) or up <= 0:
                return np.inf
            return gamma * math.log(up) + (float(p) + 1) * math.log(w_g) - float(p) * log_u

        hi = min(upsilon.b, 1e6)
        grid = np.geomspace(1.0, hi, 400, endpoint=False)
        vals = np.array([neg(p) for p in grid])
        j = int(np.argmin(vals))
        if not np.isfinite(vals[j]):
            raise NoFiniteBoundError("upsilon is infinite on the probed range")
        res = optimize.minimize_scalar(
            neg, bounds=(grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]),
            method="bounded", options={"xatol": 1e-12})
        if res.fun < vals[j]:
            best_log, best_p = float(res.fun), float(res.x)
        else:
            best_log, best_p = float(vals[j]), float(grid[j])
        best_log += log_pref
        value = math.exp(best_log) if best_log < 700 else math.inf
        return EnvelopeBound(value, best_log, best_p, best_log >= 0)

    raise ArgumentError(f"unknown envelope mode {mode!r}")


def clt_uniform_bound(C_delta_N: float, C_delta_lambda: float, gamma: float,
                      p: float, u: float, h: float,
                      sigma_oracle: Union[float, Callable[[float], float]]) -> AssembledBound:
    """Uniform-in-n tail bound for normalized-sum moduli: the closed-form
    power bound with sum-level constants, times sigma(2h)."""
    q_val = theorem31_bound(C_delta_N, C_delta_lambda, gamma, p, u)
    return assemble_kappa_bound(q_val, sigma_oracle, h, u)
