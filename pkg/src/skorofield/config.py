"""Flat, typed key-value experiment configuration.

Config files are plain text: one ``key = value`` per line, ``#`` comments.
Every key has a documented default; unknown keys are rejected with the
offending name.  The canonical dump (sorted keys) feeds the config hash
recorded in every run manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError

# name -> (type tag, default, help)
CONFIG_KEYS = {
    "dimension": ("int", 1, "index-set dimension d"),
    "lattice_m": ("int", 200, "lattice points per axis"),
    "model": ("str", "centered-indicator",
              "constant | indicator | centered-indicator | partial-sum"),
    "model_n": ("int", 50, "summand count for the partial-sum model"),
    "marginal": ("str", "uniform", "uniform | beta  (marginals of eta)"),
    "beta_a": ("float", 2.0, "beta marginal shape a"),
    "beta_b": ("float", 2.0, "beta marginal shape b"),
    "q_family": ("str", "power", "power | aniso"),
    "q_alpha": ("float", 1.0, "power family exponent"),
    "q_alphas": ("floatlist", (), "per-axis exponents for the aniso family"),
    "replicates": ("int", 1000, "Monte Carlo replicates"),
    "master_seed": ("int", 20260810, "seed of every replicate stream"),
    "workers": ("int", 1, "parallel replicate workers"),
    "h_min": ("float", 0.0, "window grid lower end (0 = auto 2/(m-1))"),
    "h_max": ("float", 0.5, "window grid upper end"),
    "h_count": ("int", 8, "window grid size"),
    "u_min": ("float", 1.0, "tail level grid lower end"),
    "u_max": ("float", 16.0, "tail level grid upper end"),
    "u_count": ("int", 9, "tail level grid size"),
    "eps_min": ("float", 5e-3, "entropy radius grid lower end"),
    "eps_max": ("float", 0.2, "entropy radius grid upper end"),
    "eps_count": ("int", 12, "entropy radius grid size"),
    "p_min": ("float", 2.0, "moment exponent grid lower end"),
    "p_max": ("float", 8.0, "moment exponent grid upper end"),
    "p_count": ("int", 4, "moment exponent grid size"),
    "n_list": ("intlist", (10, 50, 250), "summand counts for uniform-in-n checks"),
    "gamma": ("float", 0.5, "entropy exponent for closed-form bounds"),
    "rho": ("float", 0.25, "half tail-decay exponent of the power family"),
    "c_n": ("float", 1.0, "entropy constant C_N"),
    "c_lambda": ("float", 1.0, "tail-decay constant C_lambda"),
    "c_r": ("float", 1.0, "sum-uniformity (Rosenthal) constant"),
    "u0": ("float", 1.0, "key-estimate threshold"),
    "lambda_u_min": ("float", 0.05, "key-estimate tabulation lower level"),
    "lambda_u_count": ("int", 13, "key-estimate tabulation size"),
    "series_tol": ("float", 1e-12, "series truncation tolerance"),
    "triple_cap": ("float", 1e9, "refuse configs above this estimated triple count"),
}


def _parse_value(key: str, raw: str):
    tag = CONFIG_KEYS[key][0]
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "str":
            return raw
        if tag == "intlist":
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        if tag == "floatlist":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {tag}") from exc
    raise ConfigError(f"config key {key!r}: unknown type tag {tag}")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: spec[1] for k, spec in CONFIG_KEYS.items()}
        for k, v in self.values.items():
            if k not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = v
        self.values = merged
        self._validate()

    def _validate(self):
        v = self.values
        if v["dimension"] < 1:
            raise ConfigError("config key 'dimension': must be >= 1")
        if v["lattice_m"] < 2:
            raise ConfigError("config key 'lattice_m': must be >= 2")
        if v["replicates"] < 1:
            raise ConfigError("config key 'replicates': must be >= 1")
        for grid in ("h", "u", "eps"):
            if v[f"{grid}_count"] < 1:
                raise ConfigError(f"config key '{grid}_count': must be >= 1")
        if v["model"] not in ("constant", "indicator", "centered-indicator", "partial-sum"):
            raise ConfigError(f"config key 'model': unknown model {v['model']!r}")
        if v["marginal"] not in ("uniform", "beta"):
            raise ConfigError(f"config key 'marginal': unknown marginal {v['marginal']!r}")
        if v["q_family"] not in ("power", "aniso"):
            raise ConfigError(f"config key 'q_family': unknown family {v['q_family']!r}")
        if not v["n_list"]:
            raise ConfigError("config key 'n_list': must not be empty")

    def __getattr__(self, name):
        values = object.__getattribute__(self, "__dict__").get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = {}
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {body!r}")
            key, raw = body.split("=", 1)
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
        return cls(values)

    def dump(self) -> str:
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()

    # grid helpers ---------------------------------------------------------

    def h_grid(self) -> np.ndarray:
        lo = self.h_min if self.h_min > 0 else 2.0 / (self.lattice_m - 1)
        return np.geomspace(lo, self.h_max, self.h_count)

    def u_grid(self) -> np.ndarray:
        return np.geomspace(self.u_min, self.u_max, self.u_count)

    def eps_grid(self) -> np.ndarray:
        return np.geomspace(self.eps_min, self.eps_max, self.eps_count)

    def p_grid(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.p_count)

    def estimated_triples(self) -> float:
        m, d = self.lattice_m, self.dimension
        return float((m**3 / 6.0) ** d)


def default_config_text() -> str:
    lines = ["# skorofield experiment configuration (defaults)"]
    for k in sorted(CONFIG_KEYS):
        tag, default, doc = CONFIG_KEYS[k]
        if isinstance(default, tuple):
            default = ",".join(str(x) for x in default)
        lines.append(f"{k} = {default}  # {doc}")
    return "\n".join(lines) + "\n"
