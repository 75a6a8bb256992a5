"""Run configuration: TOML loading, validation and object construction.

A config file has four tables::

    [target]     kind = "gaussian" | "mixture" | "box" plus its parameters
    [proposal]   family, theta0, optional dim and nu
    [optimizer]  scheme, eta, beta, gamma, grad_estimator, grad_batch,
                 clip_norm, sghmc_momentum_order, eta_max, divergence_radius
    [run]        N, K, replicates, master_seed, test_functions,
                 indicator_threshold, quad_bounds, quad_nodes, quad_track,
                 plateau_fraction

Unknown tables or keys are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from typing import Any

import numpy as np

from oais.adapt import MOMENTUM_ORDERS, SCHEMES
from oais.errors import ConfigError, ContractError
from oais.grad import ESTIMATORS
from oais.model import FAMILY_KINDS, box_target, gaussian_target, make_proposal, mixture_target
from oais.oracle import QuadratureSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

TEST_FUNCTIONS = ("tanh", "indicator", "const")

_TARGET_KEYS = {
    "gaussian": {"kind", "mean", "std", "cov"},
    "mixture": {"kind", "means", "stds", "weights"},
    "box": {"kind", "low", "high"},
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "proposal": {"family": "gaussian-meanchol", "dim": None, "theta0": None, "nu": 5.0},
    "optimizer": {
        "scheme": "sgld",
        "eta": 1e-3,
        "beta": 1e4,
        "gamma": 1.0,
        "grad_estimator": "pathwise",
        "grad_batch": 1,
        "clip_norm": None,
        "sghmc_momentum_order": "as-paper",
        "eta_max": 1.0,
        "divergence_radius": 1e6,
    },
    "run": {
        "N": 100,
        "K": 1000,
        "replicates": 10,
        "master_seed": 0,
        "test_functions": ["tanh", "indicator", "const"],
        "indicator_threshold": 0.0,
        "quad_bounds": [-20.0, 20.0],
        "quad_nodes": 2001,
        "quad_track": True,
        "plateau_fraction": 0.4,
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully defaulted configuration (``raw`` holds the tables)."""

    raw: dict

    @property
    def target(self):
        return self.raw["target"]

    @property
    def proposal(self):
        return self.raw["proposal"]

    @property
    def optimizer(self):
        return self.raw["optimizer"]

    @property
    def run(self):
        return self.raw["run"]

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **sections) -> "RunConfig":
        """Copy with selected keys replaced, e.g. ``with_overrides(run={"N": 10})``."""
        raw = copy.deepcopy(self.raw)
        for sec, vals in sections.items():
            if sec not in raw:
                raise ConfigError(f"unknown section [{sec}]")
            raw[sec].update(vals)
        return validate(raw)

    def build_target(self):
        return build_target(self.target)

    def build_proposal(self, dim_x=None):
        p = self.proposal
        dim = p["dim"] if p["dim"] is not None else (dim_x or self.build_target().dim_x)
        params = {"nu": float(p["nu"])} if p["family"] == "student-t-locscale" else {}
        return make_proposal(p["family"], int(dim), **params)

    def theta0(self, proposal=None) -> np.ndarray:
        proposal = proposal or self.build_proposal()
        theta = np.asarray(self.proposal["theta0"], dtype=np.float64)
        if theta.shape != (proposal.dim_theta,):
            raise ConfigError(f"theta0 must have {proposal.dim_theta} entries, got {theta.shape}")
        return theta

    def quadrature(self, dim_x) -> QuadratureSpec:
        b = np.asarray(self.run["quad_bounds"], dtype=np.float64)
        if b.ndim == 1:
            b = np.tile(b, (dim_x, 1))
        return QuadratureSpec(tuple(map(tuple, b)), int(self.run["quad_nodes"]))


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(type(o))


def build_target(spec: dict):
    kind = spec.get("kind")
    if kind not in _TARGET_KEYS:
        raise ConfigError(f"unknown target kind {kind!r}; expected one of {sorted(_TARGET_KEYS)}")
    extra = set(spec) - _TARGET_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown [target] keys for kind {kind!r}: {sorted(extra)}")
    try:
        if kind == "gaussian":
            return gaussian_target(spec.get("mean", [0.0]), spec.get("cov"), std=spec.get("std"))
        if kind == "mixture":
            return mixture_target(spec["means"], spec.get("stds", 1.0), spec.get("weights"))
        return box_target(spec["low"], spec["high"])
    except KeyError as e:
        raise ConfigError(f"[target] kind {kind!r} requires key {e.args[0]!r}") from None
    except ContractError as e:
        raise ConfigError(str(e)) from None


def _coerce_beta(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"beta must be a number or 'inf', got {v!r}")
    return float(v)


def validate(raw: dict) -> RunConfig:
    """Fill defaults, reject unknown keys and check ranges."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    unknown = set(raw) - {"target", "proposal", "optimizer", "run"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if "target" not in raw:
        raise ConfigError("missing [target] section")
    out = {"target": dict(raw["target"])}
    for sec, defaults in DEFAULTS.items():
        given = dict(raw.get(sec, {}))
        extra = set(given) - set(defaults)
        if extra:
            raise ConfigError(f"unknown [{sec}] keys: {sorted(extra)}")
        merged = copy.deepcopy(defaults)
        merged.update(given)
        out[sec] = merged

    target = build_target(out["target"])
    p, o, r = out["proposal"], out["optimizer"], out["run"]
    if p["family"] not in FAMILY_KINDS:
        raise ConfigError(f"unknown proposal family {p['family']!r}; expected one of {FAMILY_KINDS}")
    if p["dim"] is not None and int(p["dim"]) != target.dim_x:
        raise ConfigError("proposal dim differs from target dimension")
    if o["scheme"] not in SCHEMES:
        raise ConfigError(f"unknown scheme {o['scheme']!r}; expected one of {SCHEMES}")
    if o["grad_estimator"] not in ESTIMATORS:
        raise ConfigError(f"unknown grad_estimator {o['grad_estimator']!r}; expected one of {ESTIMATORS}")
    if o["sghmc_momentum_order"] not in MOMENTUM_ORDERS:
        raise ConfigError(f"unknown sghmc_momentum_order {o['sghmc_momentum_order']!r}")
    o["beta"] = _coerce_beta(o["beta"])
    for key in ("eta", "gamma", "eta_max", "divergence_radius"):
        o[key] = float(o[key])
    if not (0.0 <= o["eta"] <= o["eta_max"]):
        raise ConfigError(f"eta={o['eta']} must lie in [0, eta_max={o['eta_max']}]")
    if not o["beta"] > 0:
        raise ConfigError("beta must be positive")
    if not o["gamma"] >= 0:
        raise ConfigError("gamma must be nonnegative")
    if int(o["grad_batch"]) < 1:
        raise ConfigError("grad_batch must be >= 1")
    if o["clip_norm"] is not None and not float(o["clip_norm"]) > 0:
        raise ConfigError("clip_norm must be positive")
    for key in ("N", "K", "replicates"):
        if int(r[key]) < 1 or int(r[key]) != r[key]:
            raise ConfigError(f"[run] {key} must be a positive integer")
        r[key] = int(r[key])
    if not (0 <= int(r["master_seed"]) < 2**64):
        raise ConfigError("master_seed must be an unsigned 64-bit integer")
    r["master_seed"] = int(r["master_seed"])
    names = list(r["test_functions"])
    bad = [n for n in names if n not in TEST_FUNCTIONS]
    if bad or not names or len(set(names)) != len(names):
        raise ConfigError(f"test_functions must be distinct names from {TEST_FUNCTIONS}, got {names}")
    if not 0.0 < float(r["plateau_fraction"]) <= 1.0:
        raise ConfigError("plateau_fraction must lie in (0, 1]")
    if p["theta0"] is None:
        raise ConfigError("[proposal] theta0 is required")
    cfg = RunConfig(out)
    try:
        proposal = cfg.build_proposal(target.dim_x)
        cfg.theta0(proposal)
        cfg.quadrature(target.dim_x) if target.dim_x <= 2 else None
    except ContractError as e:
        raise ConfigError(str(e)) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from None
    return validate(raw)


def make_test_function(name: str, threshold: float = 0.0):
    """Bounded test function on ``(n, d_x)`` arrays, all with sup-norm 1."""
    if name == "tanh":
        return lambda x: np.tanh(x[:, 0])
    if name == "indicator":
        return lambda x: (x[:, 0] > threshold).astype(np.float64)
    if name == "const":
        return lambda x: np.ones(x.shape[0])
    raise ConfigError(f"unknown test function {name!r}")
