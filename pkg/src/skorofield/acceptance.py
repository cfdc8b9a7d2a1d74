"""Acceptance suite: one callable per criterion, shared by pytest and the
``verify`` subcommand.

Every criterion is self-contained, uses fixed seeds, and returns a
CriterionResult with a one-line pass/fail summary.  Scales and tolerances
are pinned here; nothing defers to later calibration.
"""

from __future__ import annotations

import hashlib
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bounds import (
    SequenceFamily,
    kappa_bound_report,
    natural_key_estimate,
    q_optimize,
    q_series,
    theorem31_bound,
)
from .clt import kolmogorov_cdf, rosenthal_empirical, sup_statistic_law, uniform_tail_check
from .domain import Lattice
from .errors import SkorofieldError
from .fields import (
    CenteredIndicatorField,
    IndicatorField,
    PartialSumField,
    SamplePath,
    SeedSpec,
    uniform_distribution,
)
from .glspace import PsiFunction, gaussian_abs_norm, yf_tail
from .modulus import arctan_criterion, kappa_batch, ps_modulus, ps_modulus_naive
from .quasidist import PowerEuclidean, AnisotropicSum, entropy_fit, normalize

MASTER_SEED = 20260810


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    details: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.cid}: {self.name} -- {self.details} ({self.seconds:.1f}s)"


def _result(cid, name, passed, details, t0) -> CriterionResult:
    return CriterionResult(cid, name, bool(passed), details, time.time() - t0)


# ---------------------------------------------------------------------------


def criterion_1(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Single-jump indicator paths have kappa identically zero (exact)."""
    t0 = time.time()
    worst = 0.0
    checked = 0
    for m in (51, 101, 201):
        lat = Lattice(1, m)
        qs = [normalize(PowerEuclidean(1.0), lat), normalize(PowerEuclidean(2.0), lat)]
        for rep in range(4):
            path = IndicatorField(uniform_distribution(1)).sample_values(
                lat, SeedSpec(MASTER_SEED, rep))
            sp = SamplePath(lat, path, ("indicator", MASTER_SEED, rep))
            # exhaustive sweep: every ordered triple at the full window
            full = kappa_batch(path, lat, qs[0], [1.0])[0, 0]
            worst = max(worst, full)
            for q in qs:
                for h in (2.0 / (m - 1), 0.1, 0.5):
                    worst = max(worst, ps_modulus(sp, q, h))
                    checked += 1
    return _result(1, "single-jump modulus is exactly zero", worst == 0.0,
                   f"max kappa over {checked} windowed evals = {worst}", t0)


def criterion_2(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Production modulus equals the naive triple loop on random paths."""
    t0 = time.time()
    rng = np.random.default_rng(MASTER_SEED)
    cases = [(1, int(m)) for m in rng.integers(4, 13, size=30)]
    cases += [(2, int(m)) for m in rng.integers(3, 9, size=17)]
    cases += [(2, 12)] * 3
    mismatches = 0
    total = 0
    for d, m in cases:
        lat = Lattice(d, m)
        fam = rng.integers(0, 2)
        q = normalize(PowerEuclidean(1.0 if fam else 2.0), lat)
        values = rng.standard_normal(lat.size)
        sp = SamplePath(lat, values, ("random", 0, 0))
        pm = np.unique(q.pair_matrix(lat))
        pm = pm[pm > 0]
        # collapse ulp clusters (the same level reached by different float
        # paths), then take thresholds midway between separated levels
        keep = np.concatenate(([True], np.diff(pm) > 1e-9 * pm[1:]))
        pm = pm[keep]
        for frac in (0.35, 0.8):
            k = min(int(frac * pm.size), pm.size - 2)
            h = 0.5 * (pm[k] + pm[k + 1])
            a = ps_modulus(sp, q, h)
            b = ps_modulus_naive(sp, q, h)
            total += 1
            if a != b:
                mismatches += 1
    return _result(2, "production modulus == naive oracle",
                   mismatches == 0 and total == 100,
                   f"{total} comparisons over {len(cases)} paths, {mismatches} mismatches", t0)


def criterion_3(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Entropy fits recover the covering exponent within +-15%."""
    t0 = time.time()
    checks = []
    lat1 = Lattice(1, 512)
    lat2 = Lattice(2, 64)
    cases = [
        ("d1-a1", normalize(PowerEuclidean(1.0), lat1), lat1,
         np.geomspace(5e-3, 0.2, 16), 1.0),
        ("d1-a2", normalize(PowerEuclidean(2.0), lat1), lat1,
         np.geomspace(2e-4, 0.05, 16), 0.5),
        ("d2-a1", normalize(PowerEuclidean(1.0), lat2), lat2,
         np.geomspace(0.035, 0.3, 12), 2.0),
        ("d2-aniso12", normalize(AnisotropicSum((1.0, 2.0)), lat2), lat2,
         np.geomspace(0.03, 0.35, 12), 1.5),
    ]
    ok = True
    for name, q, lat, eps, target in cases:
        rep = entropy_fit(q, lat, eps)
        rel = abs(rep.gamma_hat - target) / target
        checks.append(f"{name}: {rep.gamma_hat:.3f} vs {target} ({100 * rel:.1f}%)")
        ok &= rel <= 0.15
    # the anisotropic fit must reject the reciprocal-sum misreading 2/3
    aniso_gamma = entropy_fit(cases[3][1], lat2, cases[3][3]).gamma_hat
    ok &= abs(aniso_gamma - 2.0 / 3.0) / (2.0 / 3.0) > 0.5
    return _result(3, "entropy exponent recovery", ok, "; ".join(checks), t0)


def criterion_4(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Headline: assembled series bound dominates Monte Carlo modulus tails
    uniformly over n, at every non-vacuous grid cell."""
    t0 = time.time()
    lat = Lattice(1, 200)
    base = CenteredIndicatorField(uniform_distribution(1))
    n_list = (10, 50, 250)
    models = [PartialSumField(base, n) for n in n_list]
    key = natural_key_estimate(models, lat, np.geomspace(0.05, 16.0, 13),
                               replicates=1000, seed=SeedSpec(MASTER_SEED), u0=1.0)
    report = kappa_bound_report(key, np.geomspace(1.0, 16.0, 9),
                                np.geomspace(0.01, 0.25, 6))
    tail = uniform_tail_check(base, n_list, key.q, report, lat, replicates=2000,
                              seed=SeedSpec(MASTER_SEED + 1))
    checked = tail.checked_cells
    ok = tail.passed and checked >= 10
    if out_dir is not None:
        _write_csv(out_dir / "criterion4_bound.csv", report.csv_rows())
        _write_csv(out_dir / "criterion4_tails.csv", tail.csv_rows())
    return _result(4, "series bound dominates MC tails (uniform in n)", ok,
                   f"{checked}/{len(tail.cells)} cells checked (bound<1), "
                   f"dominance={'ok' if tail.passed else 'VIOLATED'}", t0)


def criterion_5(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Power-law exponents of the optimized series and the closed form;
    divergence signaled exactly on the critical line."""
    t0 = time.time()
    gamma, rho, c_n, c_lam = 0.5, 0.2, 1.0, 1.0
    n_oracle = lambda e: c_n * e ** (-gamma)
    lam = lambda u: c_lam * np.sign(u) * abs(u) ** (2 * rho)
    u_grid = np.geomspace(2.0, 64.0, 6)
    q_vals = []
    for u in u_grid:
        res = q_optimize(n_oracle, lam, float(u), "geometric")
        if res.diverged:
            return _result(5, "power-law exponents", False, "unexpected divergence", t0)
        q_vals.append(res.value)
    slope_q = float(np.polyfit(np.log(u_grid), np.log(q_vals), 1)[0])
    t_vals = [theorem31_bound(1.0, 1.0, gamma, 2.0, float(u)) for u in u_grid]
    slope_t = float(np.polyfit(np.log(u_grid), np.log(t_vals), 1)[0])
    diverge_ok = True
    for g, r in [(0.5, 0.25), (0.6, 0.2), (0.9, 0.05), (0.3, 0.36)]:
        res = q_optimize(lambda e: e ** (-g), lambda u: abs(u) ** (2 * r), 8.0, "geometric")
        should = g + 2 * r >= 1.0
        diverge_ok &= res.diverged == should
    ok = abs(slope_q + 2 * rho) <= 0.05 and abs(slope_t + 2.0) <= 0.05 and diverge_ok
    return _result(5, "power-law exponents and divergence line", ok,
                   f"series slope {slope_q:.4f} (target {-2 * rho}), closed-form slope "
                   f"{slope_t:.4f} (target -2), divergence-line {'ok' if diverge_ok else 'WRONG'}",
                   t0)


def criterion_6(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Closed-form spot values."""
    t0 = time.time()
    v1 = theorem31_bound(1.0, 1.0, 0.5, 2.0, 10.0)
    ok1 = abs(v1 - 4.966) <= 1e-3
    res = q_series(lambda e: e ** -0.5, lambda u: u ** 0.25, 16.0,
                   SequenceFamily.geometric(0.5))
    ok2 = (not res.diverged) and abs(res.value - 7.4746) <= 5e-4
    from .bounds import gls_envelope_bound

    env = gls_envelope_bound(math.e ** 2, "envelope",
                             K_oracle=lambda q: q ** q)
    ok3 = abs(env.value - math.exp(-math.e)) <= 1e-4
    return _result(6, "closed-form spot values", ok1 and ok2 and ok3,
                   f"power bound {v1:.6f} (4.966+-1e-3), series {res.value:.6f} "
                   f"(7.4746+-5e-4), envelope {env.value:.6f} (exp(-e)+-1e-4)", t0)


def criterion_7(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Young-Fenchel tail with the Gaussian moment profile dominates the
    true Gaussian tail on [e, 8]."""
    t0 = time.time()
    from scipy import stats

    psi = PsiFunction.gaussian_natural()
    margins = []
    for y in np.geomspace(math.e, 8.0, 20):
        bound = yf_tail(psi, 1.0, float(y))
        truth = 2.0 * stats.norm.sf(y)
        margins.append(bound - truth)
    worst = min(margins)
    return _result(7, "Gaussian tail dominance of the exponential bound",
                   worst >= 0.0, f"min margin {worst:.3e} over 20 points in [e, 8]", t0)


def criterion_8(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Sum-uniformity ratios: exact fourth-moment law and stable fitted C."""
    t0 = time.time()
    n_list = [2 ** k for k in range(1, 11)]
    rep = rosenthal_empirical("rademacher", [2.0, 4.0, 6.0, 8.0], n_list,
                              replicates=400_000, seed=SeedSpec(MASTER_SEED + 8))
    ok_p4 = True
    worst_gap = 0.0
    for cell in rep.cells:
        if cell.p == 4.0:
            target = (3.0 - 2.0 / cell.n) ** 0.25
            inside = cell.ratio_lo <= target <= cell.ratio_hi
            ok_p4 &= inside
            worst_gap = max(worst_gap, abs(cell.ratio - target))
    c_vals = np.array([rep.per_n_c[n] for n in n_list])
    mean_c = float(c_vals.mean())
    max_dev = float(np.abs(c_vals - mean_c).max() / mean_c)
    ok = ok_p4 and max_dev <= 0.10
    if out_dir is not None:
        _write_csv(out_dir / "criterion8_rosenthal.csv", rep.csv_rows())
    return _result(8, "sum-uniformity (Rosenthal) dominance", ok,
                   f"p=4 exact law within CI ({'ok' if ok_p4 else 'VIOLATED'}, max gap "
                   f"{worst_gap:.4f}); fitted C per n within {100 * max_dev:.1f}% of mean "
                   f"{mean_c:.4f}", t0)


def criterion_9(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Sup-statistic law of the empirical field vs the analytic series."""
    t0 = time.time()
    lat = Lattice(1, 200)
    base = CenteredIndicatorField(uniform_distribution(1))
    rep = sup_statistic_law(base, 1000, lat, 2000, SeedSpec(MASTER_SEED + 9))
    ok = rep.discrepancy <= 0.05
    if out_dir is not None:
        _write_csv(out_dir / "criterion9_suplaw.csv", rep.csv_rows())
    return _result(9, "sup statistic matches the bridge-sup law", ok,
                   f"KS discrepancy {rep.discrepancy:.4f} <= 0.05 "
                   f"(n=1000, m=200, 2000 replicates)", t0)


def criterion_10(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Membership criterion trend: E arctan kappa nonincreasing toward small
    windows, with small-window value under 20% of the large-window value."""
    t0 = time.time()
    lat = Lattice(1, 200)
    base = CenteredIndicatorField(uniform_distribution(1))
    model = PartialSumField(base, 50)
    q = normalize(PowerEuclidean(1.0), lat)
    h_grid = np.geomspace(2.0 / (lat.m - 1), 0.5, 8)
    rep = arctan_criterion([model], lat, q, h_grid, 2000, SeedSpec(MASTER_SEED + 10))
    curve = rep.sup_curve
    inversions = int((np.diff(curve) < -1e-12).sum())
    ratio = float(curve[0] / curve[-1]) if curve[-1] > 0 else math.inf
    ok = inversions <= 1 and ratio < 0.20
    if out_dir is not None:
        _write_csv(out_dir / "criterion10_arctan.csv", rep.csv_rows())
    return _result(10, "vanishing-window trend of E arctan kappa", ok,
                   f"{inversions} inversions (<=1), smallest/largest = {ratio:.3f} (<0.20)",
                   t0)


def criterion_11(out_dir: Optional[Path] = None, workers: int = 1) -> CriterionResult:
    """Determinism: identical reruns and worker counts give byte-identical
    CSV bodies (exercised through the CLI on a reduced config)."""
    t0 = time.time()
    from . import cli

    cfg_text = (
        "lattice_m = 60\nreplicates = 300\nn_list = 10,50\nmodel = partial-sum\n"
        "model_n = 20\nu_count = 5\nh_count = 4\nlambda_u_count = 9\nu_max = 12\n"
        f"master_seed = {MASTER_SEED}\n"
    )
    mismatch = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg_path = tmp / "exp.cfg"
        cfg_path.write_text(cfg_text)

        def run(cmd, name, extra=()):
            d = tmp / name
            rc = cli.main([cmd, "--config", str(cfg_path), "--out", str(d), *extra])
            if rc != 0:
                raise SkorofieldError(f"cli {cmd} exited {rc}")
            return d

        a = run("modulus", "mod_a")
        b = run("modulus", "mod_b")
        w1 = run("modulus", "mod_w1", ("--workers", "1"))
        w8 = run("modulus", "mod_w8", ("--workers", "8"))
        ba = run("bound", "bound_a")
        bb = run("bound", "bound_b")
        pairs = [
            (a, b, ("kappa_mean.csv", "tail.csv", "arctan.csv")),
            (w1, w8, ("kappa_mean.csv", "tail.csv", "arctan.csv")),
            (ba, bb, ("bound.csv", "q_profile.csv")),
        ]
        for left, right, names in pairs:
            for nm in names:
                ha = hashlib.sha256((left / nm).read_bytes()).hexdigest()
                hb = hashlib.sha256((right / nm).read_bytes()).hexdigest()
                if ha != hb:
                    mismatch.append(f"{left.name}/{nm} != {right.name}/{nm}")
    return _result(11, "byte-identical reruns and worker independence",
                   not mismatch,
                   "all compared CSV bodies identical" if not mismatch
                   else "; ".join(mismatch), t0)


# ---------------------------------------------------------------------------

CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
    9: criterion_9, 10: criterion_10, 11: criterion_11,
}


def run_all(out_dir=None, workers: int = 1,
            criteria: Optional[Sequence[int]] = None) -> list:
    ids = sorted(criteria) if criteria else sorted(CRITERIA)
    out_dir = Path(out_dir) if out_dir is not None else None
    results = []
    for cid in ids:
        results.append(CRITERIA[cid](out_dir, workers))
    return results


def _write_csv(path: Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with Path(path).open("w", newline="") as fh:
        for row in rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
