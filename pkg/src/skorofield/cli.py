"""Experiment runner.

Subcommands: simulate, entropy, modulus, gls, bound, clt, verify, defaults.
Each run writes CSV/JSON reports plus ``manifest.json`` carrying the config
hash, the master seed, and a sha256 per emitted file.  Reruns with the same
config and seed produce byte-identical CSV bodies regardless of the worker
count.

Exit codes: 0 success, 1 criterion failure, 2 usage error, 3 resource
refusal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .bounds import kappa_bound_report, natural_key_estimate
from .clt import (
    CltReport,
    fdd_check,
    rosenthal_empirical,
    sup_statistic_law,
    uniform_tail_check,
)
from .config import CONFIG_KEYS, ExperimentConfig, default_config_text
from .domain import Lattice
from .errors import ConfigError, ResourceCapError, SkorofieldError
from .fields import (
    BetaMarginal,
    CenteredIndicatorField,
    ConstantField,
    IndicatorField,
    PartialSumField,
    ProductDistribution,
    SeedSpec,
    UniformMarginal,
    empirical_covariance,
    sample_path,
)
from .glspace import PsiFunction, holder_mixed_bound, lp_norm, min_tail_bound, yf_tail
from .modulus import arctan_criterion, kappa_batch, tail_curve_mc
from .quasidist import AnisotropicSum, PowerEuclidean, entropy_fit, normalize

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


# ---------------------------------------------------------------------------
# report emission


class RunDir:
    """Collects emitted files and writes the manifest."""

    def __init__(self, out_dir: Path, config: ExperimentConfig):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.files = {}
        self.results = {}

    def _register(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files[path.name] = digest

    def write_csv(self, name: str, rows) -> Path:
        path = self.out / name
        with path.open("w", newline="") as fh:
            for row in rows:
                fh.write(",".join(_csv_cell(c) for c in row))
                fh.write("\n")
        self._register(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self._register(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, sort_keys=True, indent=2) + "\n")

    def finish(self, extra=None) -> Path:
        manifest = {
            "config": self.config.values if self.config else None,
            "config_hash": self.config.hash() if self.config else None,
            "seed": self.config.master_seed if self.config else None,
            "files": self.files,
            "results": self.results,
        }
        if extra:
            manifest.update(extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n")
        return path


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# config-driven object construction


def _distribution(cfg: ExperimentConfig) -> ProductDistribution:
    d = cfg.dimension
    if cfg.marginal == "uniform":
        return ProductDistribution(tuple(UniformMarginal() for _ in range(d)))
    return ProductDistribution(tuple(BetaMarginal(cfg.beta_a, cfg.beta_b) for _ in range(d)))


def build_model(cfg: ExperimentConfig):
    dist = _distribution(cfg)
    if cfg.model == "constant":
        return ConstantField(cfg.dimension)
    if cfg.model == "indicator":
        return IndicatorField(dist)
    if cfg.model == "centered-indicator":
        return CenteredIndicatorField(dist)
    if cfg.model == "partial-sum":
        return PartialSumField(CenteredIndicatorField(dist), cfg.model_n)
    raise ConfigError(f"config key 'model': unknown model {cfg.model!r}")


def build_q(cfg: ExperimentConfig, lattice: Lattice):
    if cfg.q_family == "power":
        q = PowerEuclidean(cfg.q_alpha)
    else:
        alphas = cfg.q_alphas or tuple([cfg.q_alpha] * cfg.dimension)
        if len(alphas) != cfg.dimension:
            raise ConfigError("config key 'q_alphas': length must match dimension")
        q = AnisotropicSum(alphas)
    return normalize(q, lattice)


def _check_cap(cfg: ExperimentConfig, force: bool):
    est = cfg.estimated_triples()
    if est > cfg.triple_cap and not force:
        raise ResourceCapError(
            f"estimated triple count {est:.3g} exceeds cap {cfg.triple_cap:.3g}; "
            "rerun with --force to override"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    model = build_model(cfg)
    seed = SeedSpec(cfg.master_seed)
    shown = min(5, cfg.replicates)
    header = tuple(f"x{j + 1}" for j in range(lattice.d))
    rows = [header + tuple(f"path{r}" for r in range(shown))]
    paths = [sample_path(model, lattice, seed.replicate(r)).values for r in range(shown)]
    nodes = lattice.nodes()
    for i in range(lattice.size):
        rows.append(tuple(float(c) for c in nodes[i]) + tuple(float(p[i]) for p in paths))
    run.write_csv("paths.csv", rows)
    if model.centered and cfg.replicates >= 2:
        cov = empirical_covariance(model, lattice, cfg.replicates, seed)
        run.write_csv("covariance.csv", cov.csv_rows())
    run.results["model"] = model.describe()
    return EXIT_OK


def cmd_entropy(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    q = build_q(cfg, lattice)
    report = entropy_fit(q, lattice, cfg.eps_grid())
    run.write_csv("entropy.csv", report.csv_rows())
    run.write_text("entropy.json", report.json_header() + "\n")
    run.results["gamma_hat"] = report.gamma_hat
    return EXIT_OK


def cmd_modulus(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    model = build_model(cfg)
    q = build_q(cfg, lattice)
    seed = SeedSpec(cfg.master_seed)
    h_grid = cfg.h_grid()
    reps = cfg.replicates
    paths = model.sample_batch(lattice, seed, min(reps, 200))
    kap = kappa_batch(paths, lattice, q, h_grid)
    rows = [("h", "kappa_mean", "kappa_se")]
    for j, h in enumerate(h_grid):
        rows.append((float(h), float(kap[:, j].mean()),
                     float(kap[:, j].std(ddof=1) / math.sqrt(kap.shape[0]))))
    run.write_csv("kappa_mean.csv", rows)
    h_mid = float(h_grid[len(h_grid) // 2])
    tail = tail_curve_mc(model, q, h_mid, cfg.u_grid(), max(reps, 100), seed,
                         lattice, workers=args.workers)
    run.write_csv("tail.csv", tail.csv_rows())
    run.write_json("tail.json", {"h": h_mid, "model": model.describe(),
                                 "replicates": tail.replicates})
    base = CenteredIndicatorField(_distribution(cfg))
    fam = [PartialSumField(base, n) for n in cfg.n_list]
    arct = arctan_criterion(fam, lattice, q, h_grid, max(min(reps, 2000), 100), seed)
    run.write_csv("arctan.csv", arct.csv_rows())
    run.results["kappa_mean_at_hmax"] = float(kap[:, -1].mean())
    return EXIT_OK


def cmd_gls(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    seed = SeedSpec(cfg.master_seed)
    psi_g = PsiFunction.gaussian_natural()
    run.write_csv("psi_gaussian.csv", psi_g.csv_rows())
    y_grid = np.geomspace(math.e, 8.0, 20)
    rows = [("y", "tail_bound")]
    for y in y_grid:
        rows.append((float(y), yf_tail(psi_g, 1.0, float(y))))
    run.write_csv("yf_tail.csv", rows)

    base = CenteredIndicatorField(_distribution(cfg))
    model = PartialSumField(base, cfg.model_n) if cfg.model == "partial-sum" else base
    paths = model.sample_batch(lattice, seed, max(cfg.replicates, 1000))
    lo = 0
    hi = lattice.size - 1
    mid = lattice.size // 2
    inc = {0: paths[:, mid] - paths[:, lo], 1: paths[:, mid] - paths[:, hi]}
    p_grid = cfg.p_grid()

    def oracle(i, p):
        return lp_norm(inc[i], p) if p <= p_grid[-1] * 4 else math.inf

    mixed = holder_mixed_bound(oracle, (2.0, 2.0))
    run.write_json("mixed_bound.json", {
        "bound": mixed.value, "tuple": [float(a) for a in mixed.tuple_a.a],
        "exponents": [2.0, 2.0], "model": model.describe()})
    psis = [PsiFunction(p_grid, np.array([lp_norm(inc[i], p) for p in p_grid]),
                        b=float(p_grid[-1]) + 1e-9) for i in (0, 1)]
    mt = min_tail_bound(psis, [1.0, 1.0], u=2.0)
    run.write_json("min_tail.json", {
        "bound": mt.value, "vacuous": mt.vacuous,
        "p_opt": [float(p) for p in mt.p_opt], "model": model.describe()})
    run.results["mixed_bound"] = mixed.value
    return EXIT_OK


def _key_and_bound(cfg: ExperimentConfig, lattice: Lattice, run: RunDir):
    base = CenteredIndicatorField(_distribution(cfg))
    models = [PartialSumField(base, n) for n in cfg.n_list]
    lam_grid = np.geomspace(cfg.lambda_u_min, cfg.u_max, cfg.lambda_u_count)
    key = natural_key_estimate(models, lattice, lam_grid, max(cfg.replicates, 1000),
                               SeedSpec(cfg.master_seed), u0=cfg.u0)
    gp = key.q.gap_profile(lattice)
    hi = float(gp[-1])
    h_lo = max(float(gp[2]) * (1 + 1e-9), hi * 1e-4)
    h_grid = np.geomspace(h_lo, min(0.5, hi * 0.5), cfg.h_count)
    report = kappa_bound_report(key, cfg.u_grid(), h_grid, tol=cfg.series_tol)
    return base, key, report


def cmd_bound(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    base, key, report = _key_and_bound(cfg, lattice, run)
    run.write_json("key_estimate.json", key.json_dict())
    gp = key.q.gap_profile(lattice)
    run.write_csv("q_profile.csv", [("gap", "q")] + [
        (g, float(v)) for g, v in enumerate(gp)])
    run.write_csv("bound.csv", report.csv_rows())
    run.write_text("bound.json", report.to_json() + "\n")
    run.results["min_bound"] = float(np.nanmin(report.bound))
    run.results["nonvacuous_cells"] = int((report.bound < 1).sum())
    return EXIT_OK


def cmd_clt(cfg: ExperimentConfig, run: RunDir, args) -> int:
    lattice = Lattice(cfg.dimension, cfg.lattice_m)
    seed = SeedSpec(cfg.master_seed)
    base = CenteredIndicatorField(_distribution(cfg))
    pts = [lattice.coords(lattice.index_of([x])) if lattice.d == 1 else None
           for x in (0.3, 0.5, 0.7)]
    pts = [p for p in pts if p is not None] or [lattice.nodes()[lattice.size // 2]]
    fdd = fdd_check(base, lattice, pts, cfg.n_list, max(cfg.replicates, 1000),
                    seed.replicate(1))
    run.write_csv("fdd.csv", fdd.csv_rows())
    sup = sup_statistic_law(base, max(cfg.n_list), lattice,
                            max(cfg.replicates, 100), seed.replicate(2))
    run.write_csv("suplaw.csv", sup.csv_rows())
    _, key, bound = _key_and_bound(cfg, lattice, run)
    run.write_csv("bound.csv", bound.csv_rows())
    tail = uniform_tail_check(base, cfg.n_list, key.q, bound, lattice,
                              max(cfg.replicates, 100), seed.replicate(3))
    run.write_csv("uniform_tail.csv", tail.csv_rows())
    ros = rosenthal_empirical("rademacher", list(cfg.p_grid()),
                              [int(n) for n in cfg.n_list],
                              max(cfg.replicates, 1000), seed.replicate(4))
    run.write_csv("rosenthal.csv", ros.csv_rows())
    report = CltReport(model=base.describe(), fdd=fdd, sup_law=sup,
                       uniform_tail=tail, rosenthal=ros)
    run.write_text("clt.json", report.to_json() + "\n")
    run.results["passed"] = report.passed
    return EXIT_OK if report.passed else EXIT_CRITERION


def cmd_verify(cfg: ExperimentConfig, run: RunDir, args) -> int:
    results = acceptance.run_all(run.out, workers=args.workers,
                                 criteria=args.criteria)
    all_pass = True
    lines = []
    for res in results:
        line = res.line()
        print(line)
        lines.append(line)
        run.results[f"criterion_{res.cid}"] = {"name": res.name, "passed": res.passed,
                                               "details": res.details}
        all_pass &= res.passed
    run.write_text("acceptance.txt", "\n".join(lines) + "\n")
    return EXIT_OK if all_pass else EXIT_CRITERION


# ---------------------------------------------------------------------------
# entry point


def _add_common(sp):
    sp.add_argument("--config", type=str, default=None, help="config file path")
    sp.add_argument("--out", type=str, required=True, help="output directory")
    sp.add_argument("--workers", type=int, default=None,
                    help="parallel replicate workers (overrides config)")
    sp.add_argument("--force", action="store_true",
                    help="override the resource cap refusal")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="skorofield",
        description="Lattice experiments for discontinuity moduli of random "
                    "fields: tail bounds, entropy fits, and CLT checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("simulate", cmd_simulate), ("entropy", cmd_entropy),
                     ("modulus", cmd_modulus), ("gls", cmd_gls),
                     ("bound", cmd_bound), ("clt", cmd_clt)]:
        sp = sub.add_parser(name)
        _add_common(sp)
        sp.set_defaults(fn=fn)
    sp = sub.add_parser("verify", help="run the acceptance suite")
    _add_common(sp)
    sp.add_argument("--criteria", type=str, default=None,
                    help="comma-separated criterion ids (default: all)")
    sp.set_defaults(fn=cmd_verify)
    sp = sub.add_parser("defaults", help="print the default config")
    sp.set_defaults(fn=None)

    args = parser.parse_args(argv)
    if args.command == "defaults":
        print(default_config_text(), end="")
        return EXIT_OK

    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        if args.workers is None:
            args.workers = cfg.workers
        if getattr(args, "criteria", None):
            args.criteria = [int(tok) for tok in args.criteria.split(",")]
        _check_cap(cfg, args.force)
        run = RunDir(Path(args.out), cfg)
        code = args.fn(cfg, run, args)
        run.finish()
        return code
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceCapError as exc:
        print(f"resource refusal: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SkorofieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
