"""Desk-scale checks that normalized partial sums of a centered field
converge to their Gaussian reference, observed through three proxies:

* finite-dimensional moments (mean / variance / covariance / excess
  kurtosis against the reference values);
* the law of the sup statistic sup_x |S_n(x)| against an analytic series
  (d=1 uniform empirical fields) or a simulated Gaussian reference;
* uniform-in-n dominance of Monte Carlo modulus tails by an assembled
  entropy bound.

Plus the moment side: empirical sum-uniformity ratios |S_n|_p / |xi|_p
against the p/ln p envelope, with the fitted admissible constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .bounds import BoundReport
from .domain import Lattice
from .errors import ArgumentError, PreconditionError
from .fields import (
    CenteredIndicatorField,
    FieldModel,
    GaussianField,
    PartialSumField,
    SeedSpec,
    UniformMarginal,
    gaussian_reference,
)
from .modulus import kappa_batch
from .quasidist import QuasiDistance


def kolmogorov_cdf(u: float, tol: float = 1e-12) -> float:
    """P(sup |bridge| <= u) = 1 - 2 sum_k (-1)^(k-1) exp(-2 k^2 u^2)."""
    if u <= 0:
        return 0.0
    total = 0.0
    sign = 1.0
    k = 1
    while True:
        term = sign * math.exp(-2.0 * k * k * u * u)
        total += term
        if abs(term) < tol or k > 10_000:
            break
        sign = -sign
        k += 1
    return min(max(1.0 - 2.0 * total, 0.0), 1.0)


# ---------------------------------------------------------------------------
# finite-dimensional moments


@dataclass
class FddEntry:
    n: int
    point: tuple
    mean: float
    mean_se: float
    var: float
    var_se: float
    excess_kurtosis: float
    kurt_se: float
    var_target: float
    passed: bool


@dataclass
class FddPairEntry:
    n: int
    points: tuple
    cov: float
    cov_se: float
    cov_target: float
    passed: bool


@dataclass
class FddReport:
    entries: list
    pair_entries: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries) and all(
            e.passed for e in self.pair_entries
        )

    def csv_rows(self):
        yield ("n", "point", "stat", "value", "se", "target", "pass")
        for e in self.entries:
            pt = "|".join(f"{c:.6g}" for c in e.point)
            yield (e.n, pt, "mean", e.mean, e.mean_se, 0.0, e.passed)
            yield (e.n, pt, "var", e.var, e.var_se, e.var_target, e.passed)
            yield (e.n, pt, "excess_kurtosis", e.excess_kurtosis, e.kurt_se, 0.0, e.passed)
        for e in self.pair_entries:
            pt = ";".join("|".join(f"{c:.6g}" for c in p) for p in e.points)
            yield (e.n, pt, "cov", e.cov, e.cov_se, e.cov_target, e.passed)


def fdd_check(model: FieldModel, lattice: Lattice, points: Sequence,
              n_list: Sequence[int], replicates: int, seed: SeedSpec,
              z_crit: float = 4.0) -> FddReport:
    """Per-point moment comparison of S_n against the Gaussian reference.

    Targets: mean 0, variance R(x,x), excess kurtosis 0, covariance R(x,y).
    A statistic passes when it sits within z_crit standard errors of its
    target (kurtosis uses the normal-sample approximation sqrt(24/B))."""
    if replicates < 1000:
        raise PreconditionError(f"need >= 1000 replicates, got {replicates}")
    if not model.centered:
        raise ArgumentError("finite-dimensional checks need a centered base model")
    cov = model.covariance_matrix(lattice)
    if cov is None:
        raise ArgumentError("model must expose a covariance for fdd targets")
    flat_pts = [lattice.flat_index(lattice.index_of(p)) for p in points]
    entries, pair_entries = [], []
    for n in n_list:
        sn = model if (isinstance(model, GaussianField) or n == 0) else PartialSumField(model, n)
        paths = sn.sample_batch(lattice, seed, replicates)[:, flat_pts]
        b = replicates
        for col, (pf, point) in enumerate(zip(flat_pts, points)):
            x = paths[:, col]
            mean = float(x.mean())
            mean_se = float(x.std(ddof=1) / np.sqrt(b))
            var = float(x.var(ddof=1))
            m2 = x - x.mean()
            var_se = float(np.sqrt(max((m2**4).mean() - var**2, 0.0) / b))
            m2c = float((m2**2).mean())
            kurt = float((m2**4).mean() / m2c**2 - 3.0) if m2c > 0 else 0.0
            kurt_se = math.sqrt(24.0 / b)
            var_target = float(cov[pf, pf])
            # Kurtosis of a normalized n-sum decays like 1/n; allow that bias.
            kurt_budget = z_crit * kurt_se + (6.0 / max(n, 1) if not isinstance(model, GaussianField) else 0.0)
            ok = (
                abs(mean) <= z_crit * mean_se + 1e-12
                and abs(var - var_target) <= z_crit * var_se + 1e-12
                and abs(kurt) <= kurt_budget + 1e-12
            )
            entries.append(FddEntry(n, tuple(np.atleast_1d(point).tolist()), mean,
                                    mean_se, var, var_se, kurt, kurt_se, var_target, ok))
        for aa in range(len(flat_pts)):
            for bb in range(aa + 1, len(flat_pts)):
                x, y = paths[:, aa], paths[:, bb]
                prod = x * y
                cv = float(prod.mean())
                cv_se = float(prod.std(ddof=1) / np.sqrt(b))
                target = float(cov[flat_pts[aa], flat_pts[bb]])
                ok = abs(cv - target) <= z_crit * cv_se + 1e-12
                pair_entries.append(FddPairEntry(
                    n, (tuple(np.atleast_1d(points[aa]).tolist()),
                        tuple(np.atleast_1d(points[bb]).tolist())),
                    cv, cv_se, target, ok))
    return FddReport(entries, pair_entries)


# ---------------------------------------------------------------------------
# sup-statistic law


@dataclass
class SupLawReport:
    sorted_sups: np.ndarray
    reference_cdf: np.ndarray
    discrepancy: float
    reference: str
    n: int
    replicates: int

    def csv_rows(self):
        yield ("sup_value", "ecdf", "reference_cdf")
        b = self.sorted_sups.size
        for i, (v, r) in enumerate(zip(self.sorted_sups, self.reference_cdf)):
            yield (float(v), (i + 1) / b, float(r))


def _is_uniform_empirical(model: FieldModel) -> bool:
    return (
        isinstance(model, CenteredIndicatorField)
        and model.d == 1
        and all(isinstance(m, UniformMarginal) for m in model.distribution.marginals)
    )


def sup_statistic_law(model: FieldModel, n: int, lattice: Lattice, replicates: int,
                      seed: SeedSpec, reference: str = "auto") -> SupLawReport:
    """Empirical law of sup_x |S_n(x)| against a reference CDF.

    Reference: the analytic bridge-sup series for d=1 uniform empirical
    fields, otherwise the simulated Gaussian field with the model's
    covariance.  The reported discrepancy is the one-sample KS statistic
    of the Monte Carlo sample against the reference, evaluated at the
    sample points; finite-n and lattice bias are included, not corrected.
    """
    if replicates < 100:
        raise PreconditionError(f"need >= 100 replicates, got {replicates}")
    if reference == "auto":
        reference = "kolmogorov" if _is_uniform_empirical(model) else "gaussian-sim"
    sn = PartialSumField(model, n)
    sups = np.abs(sn.sample_batch(lattice, seed, replicates)).max(axis=1)
    sups.sort()
    b = replicates
    if reference == "kolmogorov":
        ref = np.array([kolmogorov_cdf(v) for v in sups])
    elif reference == "gaussian-sim":
        cov = model.covariance_matrix(lattice)
        if cov is None:
            raise ArgumentError("gaussian-sim reference needs a model covariance")
        gauss = gaussian_reference(cov, lattice)
        gsups = np.abs(gauss.sample_batch(
            lattice, SeedSpec(seed.master_seed + 1, seed.replicate_index), replicates
        )).max(axis=1)
        gsups.sort()
        ref = np.searchsorted(gsups, sups, side="right") / b
    else:
        raise ArgumentError(f"unknown reference {reference!r}")
    hi = np.abs(np.arange(1, b + 1) / b - ref)
    lo = np.abs(np.arange(0, b) / b - ref)
    disc = float(np.maximum(hi, lo).max())
    return SupLawReport(sups, ref, disc, reference, n, replicates)


# ---------------------------------------------------------------------------
# uniform tail dominance


@dataclass
class UniformTailCell:
    h: float
    u: float
    bound: float
    mc_sup: float
    mc_se: float
    checked: bool
    passed: bool


@dataclass
class UniformTailReport:
    cells: list
    n_list: tuple
    replicates: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells if c.checked)

    @property
    def checked_cells(self) -> int:
        return sum(1 for c in self.cells if c.checked)

    def csv_rows(self):
        yield ("h", "u", "bound", "mc_sup", "mc_se", "checked", "pass")
        for c in self.cells:
            yield (c.h, c.u, c.bound, c.mc_sup, c.mc_se, c.checked, c.passed)


def uniform_tail_check(model: FieldModel, n_list: Sequence[int], q: QuasiDistance,
                       bound: BoundReport, lattice: Lattice, replicates: int,
                       seed: SeedSpec, se_mult: float = 4.0) -> UniformTailReport:
    """max over n of the Monte Carlo exceedance P(kappa[S_n](h) > u), cell by
    cell against the assembled bound; a checked cell (bound < 1) passes when
    mc + se_mult * SE <= bound."""
    if replicates < 100:
        raise PreconditionError(f"need >= 100 replicates, got {replicates}")
    h_arr = np.asarray(bound.h_grid, dtype=float)
    u_arr = np.asarray(bound.u_grid, dtype=float)
    sup_prob = np.zeros((h_arr.size, u_arr.size))
    sup_se = np.zeros_like(sup_prob)
    for n in n_list:
        sn = PartialSumField(model, n)
        paths = sn.sample_batch(lattice, seed, replicates)
        kap = kappa_batch(paths, lattice, q, h_arr)
        prob = (kap[:, :, None] > u_arr[None, None, :]).mean(axis=0)
        se = np.sqrt(prob * (1 - prob) / replicates)
        take = prob > sup_prob
        sup_se = np.where(take, se, sup_se)
        sup_prob = np.maximum(sup_prob, prob)
    cells = []
    for i, h in enumerate(h_arr):
        for j, u in enumerate(u_arr):
            b_val = float(bound.bound[i, j])
            checked = bool(np.isfinite(b_val) and b_val < 1.0)
            ok = (not checked) or (sup_prob[i, j] + se_mult * sup_se[i, j] <= b_val)
            cells.append(UniformTailCell(float(h), float(u), b_val,
                                         float(sup_prob[i, j]), float(sup_se[i, j]),
                                         checked, bool(ok)))
    return UniformTailReport(cells, tuple(int(n) for n in n_list), replicates)


# ---------------------------------------------------------------------------
# sum-uniformity (Rosenthal) ratios


def _iota_norm(kind: str, p: float) -> float:
    if kind == "rademacher":
        return 1.0
    if kind == "uniform-centered":
        # E|U - 1/2|^p = 2^(-p) / (p+1)
        return 0.5 / (p + 1.0) ** (1.0 / p)
    if kind == "gaussian":
        return float(np.sqrt(2.0) * np.exp(
            (special.gammaln((p + 1) / 2) - special.gammaln(0.5)) / p))
    raise ArgumentError(f"unknown summand kind {kind!r}")


def _sum_samples(kind: str, n: int, replicates: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "rademacher":
        # S_n = (2 Binom(n, 1/2) - n)/sqrt(n): exact distribution, O(B) memory.
        k = rng.binomial(n, 0.5, size=replicates)
        return (2.0 * k - n) / np.sqrt(n)
    if kind == "uniform-centered":
        out = np.zeros(replicates)
        chunk = max(1, int(2e7 / max(n, 1)))
        for lo in range(0, replicates, chunk):
            hi = min(lo + chunk, replicates)
            out[lo:hi] = (rng.random((hi - lo, n)) - 0.5).sum(axis=1)
        return out / np.sqrt(n)
    if kind == "gaussian":
        return rng.standard_normal(replicates)
    raise ArgumentError(f"unknown summand kind {kind!r}")


@dataclass
class RosenthalCell:
    n: int
    p: float
    ratio: float
    ratio_lo: float
    ratio_hi: float


@dataclass
class RosenthalReport:
    """|S_n|_p / |iota|_p ratio table with the fitted smallest admissible C
    such that every ratio <= C * p/ln p."""

    kind: str
    cells: list
    fitted_c: float
    per_n_c: dict
    replicates: int

    def csv_rows(self):
        yield ("n", "p", "ratio", "ratio_lo", "ratio_hi")
        for c in self.cells:
            yield (c.n, c.p, c.ratio, c.ratio_lo, c.ratio_hi)

    def json_dict(self):
        return {
            "kind": self.kind,
            "fitted_c": self.fitted_c,
            "per_n_c": {str(k): v for k, v in self.per_n_c.items()},
            "replicates": self.replicates,
        }


def rosenthal_empirical(rv_kind: str, p_list: Sequence[float], n_list: Sequence[int],
                        replicates: int, seed: SeedSpec,
                        se_mult: float = 4.0) -> RosenthalReport:
    """Monte Carlo sum-uniformity ratios for i.i.d. centered summands.

    For each (n, p): |S_n|_p estimated over replicates (exact binomial
    representation for the rademacher kind), divided by the closed-form
    |iota|_p; confidence limits by the delta method at se_mult sigma."""
    if replicates < 1000:
        raise PreconditionError(f"need >= 1000 replicates, got {replicates}")
    if any(p < 2 for p in p_list):
        raise PreconditionError("sum-uniformity ratios are defined for p >= 2")
    cells = []
    per_n_c = {}
    fitted = 0.0
    for idx_n, n in enumerate(n_list):
        rng = SeedSpec(seed.master_seed, seed.replicate_index + idx_n).rng()
        s = _sum_samples(rv_kind, int(n), replicates, rng)
        c_n = 0.0
        for p in p_list:
            powed = np.abs(s) ** p
            mean = float(powed.mean())
            se = float(powed.std(ddof=1) / np.sqrt(replicates))
            denom = _iota_norm(rv_kind, p)
            ratio = mean ** (1.0 / p) / denom
            lo = max(mean - se_mult * se, 0.0) ** (1.0 / p) / denom
            hi = (mean + se_mult * se) ** (1.0 / p) / denom
            cells.append(RosenthalCell(int(n), float(p), ratio, lo, hi))
            c_n = max(c_n, ratio / (p / math.log(p)))
        per_n_c[int(n)] = c_n
        fitted = max(fitted, c_n)
    return RosenthalReport(rv_kind, cells, fitted, per_n_c, replicates)


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class CltReport:
    model: str
    fdd: Optional[FddReport] = None
    sup_law: Optional[SupLawReport] = None
    uniform_tail: Optional[UniformTailReport] = None
    rosenthal: Optional[RosenthalReport] = None
    sup_law_tol: float = 0.05
    extra_flags: dict = field(default_factory=dict)

    def flags(self) -> dict:
        out = dict(self.extra_flags)
        if self.fdd is not None:
            out["fdd"] = self.fdd.passed
        if self.sup_law is not None:
            out["sup_law"] = self.sup_law.discrepancy <= self.sup_law_tol
        if self.uniform_tail is not None:
            out["uniform_tail"] = self.uniform_tail.passed
        return out

    @property
    def passed(self) -> bool:
        return all(self.flags().values())

    def to_json(self) -> str:
        body = {"model": self.model, "flags": self.flags(), "passed": self.passed}
        if self.sup_law is not None:
            body["sup_discrepancy"] = self.sup_law.discrepancy
            body["sup_reference"] = self.sup_law.reference
        if self.uniform_tail is not None:
            body["uniform_tail_checked_cells"] = self.uniform_tail.checked_cells
        if self.rosenthal is not None:
            body["rosenthal"] = self.rosenthal.json_dict()
        return json.dumps(body, sort_keys=True, indent=2)
