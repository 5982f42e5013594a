"""JSON experiment configuration.

Schema (all keys optional unless noted)::

    {
      "master_seed": 20240601,
      "model": {                                  # required
        "X": [[1, 1], [0, 1]] | "design.csv" | {"kind": "gaussian", "seed": 3, "n": 6, "d": 3},
        "n": 2, "d": 2,                           # checked against X when given
        "beta_star": [1, -1],                     # default zeros
        "noise": "gaussian_unit" | "rademacher"
      },
      "schemes": [{"scheme": "dropout", "alpha": 0.05, "p": 0.5, "k_max": 500,
                   "init": [0, 0], "checkpoints": [5, 20, 50, 500]}],
      "ensemble": {"replicas": 4000, "resample_Y": true, "blocks": 50, "keep_trajectories": 3},
      "moments": {"instances": 30, "dims": [2, 3, 4], "ps": [0.2, 0.5, 0.8]},
      "bounds": {"mean_k": [5, 20, 50], "rp_k": [100, 200, 400], "chain_k": 8,
                 "check_theorem_gate": false,
                 "simplified": {"d": 3, "k": 100, "alpha": null, "p": 0.5},
                 "singular": {"d_values": [2, 5], "alpha": 0.1, "p": 0.5, "k": 100, "replicas": 4000}},
      "suites": ["moments", ...],
      "output_dir": "results",
      "format": "json" | "csv" | "both",
      "parallel": 4
    }

Relative CSV paths are resolved against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dropout_algebra import MAX_ENUMERATION_DIM, stream_generator
from .dynamics import SCHEMES, SchemeConfig
from .errors import DropoutLinregError
from .matrix_core import read_matrix_csv
from .model import NOISE_LAWS, LinearModel

__all__ = ["SUITES", "FORMATS", "ConfigError", "ExperimentConfig", "load_config", "parse_config", "build_design"]

SUITES = ("moments", "minimizer", "dynamics", "fixed_point", "bounds", "gauss_markov", "rp",
          "simplified", "singular_design")
FORMATS = ("json", "csv", "both")
GENERATORS = ("gaussian", "ones", "identity", "custom")


class ConfigError(DropoutLinregError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    model: LinearModel
    schemes: list
    master_seed: int = 0
    ensemble: dict = field(default_factory=dict)
    moments: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    suites: list = field(default_factory=lambda: list(SUITES))
    output_dir: Path = Path("results")
    format: str = "json"
    parallel: int = 1
    raw: dict = field(default_factory=dict)
    source: Path | None = None

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def replicas(self) -> int:
        return int(self.ensemble.get("replicas", 2000))


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def _int(value, path: str, minimum: int | None = None) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), path, f"expected an integer, got {value!r}")
    if minimum is not None:
        _expect(value >= minimum, path, f"must be >= {minimum}")
    return value


def _number(value, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path, f"expected a number, got {value!r}")
    return float(value)


def build_design(spec, path: str, base: Path, n=None, d=None) -> np.ndarray:
    if isinstance(spec, list):
        try:
            X = np.array(spec, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigError(path, "rows must be lists of numbers of equal length") from None
        _expect(X.ndim == 2 and X.size > 0, path, "expected a non-empty list of rows")
    elif isinstance(spec, str):
        file = (base / spec) if not Path(spec).is_absolute() else Path(spec)
        _expect(file.is_file(), path, f"design file not found: {file}")
        try:
            X = read_matrix_csv(file)
        except (ValueError, DropoutLinregError) as exc:
            raise ConfigError(path, f"cannot read {file}: {exc}") from None
    elif isinstance(spec, dict):
        kind = spec.get("kind")
        _expect(kind in GENERATORS, f"{path}.kind", f"must be one of {GENERATORS}, got {kind!r}")
        n = spec.get("n", n)
        d = spec.get("d", d)
        if kind == "custom":
            _expect("rows" in spec, f"{path}.rows", "custom designs need inline rows")
            return build_design(spec["rows"], f"{path}.rows", base)
        n = _int(n, f"{path}.n", 1)
        d = _int(d, f"{path}.d", 1)
        if kind == "gaussian":
            seed = _int(spec.get("seed", 0), f"{path}.seed", 0)
            X = stream_generator(seed, 0).standard_normal((n, d))
        elif kind == "ones":
            X = np.ones((n, d))
        else:
            X = np.eye(n, d)
    else:
        raise ConfigError(path, "expected inline rows, a CSV path, or a generator object")
    return X


def _parse_model(raw, base: Path) -> LinearModel:
    _expect(isinstance(raw, dict), "model", "required object")
    _expect("X" in raw, "model.X", "required")
    X = build_design(raw["X"], "model.X", base, raw.get("n"), raw.get("d"))
    if "n" in raw:
        _expect(_int(raw["n"], "model.n", 1) == X.shape[0], "model.n", f"does not match X with {X.shape[0]} rows")
    if "d" in raw:
        _expect(_int(raw["d"], "model.d", 1) == X.shape[1], "model.d", f"does not match X with {X.shape[1]} columns")
    beta = raw.get("beta_star", [0.0] * X.shape[1])
    _expect(isinstance(beta, list) and len(beta) == X.shape[1], "model.beta_star",
            f"expected a list of {X.shape[1]} numbers")
    beta = [_number(b, f"model.beta_star[{i}]") for i, b in enumerate(beta)]
    noise = raw.get("noise", "gaussian_unit")
    _expect(noise in NOISE_LAWS, "model.noise", f"must be one of {NOISE_LAWS}")
    try:
        return LinearModel(X, beta, noise, allow_zero_columns=bool(raw.get("allow_zero_columns", False)))
    except DropoutLinregError as exc:
        raise ConfigError("model", str(exc)) from None


def _parse_scheme(raw, path: str, d: int, seed: int) -> SchemeConfig:
    _expect(isinstance(raw, dict), path, "expected an object")
    name = raw.get("scheme")
    _expect(name in SCHEMES, f"{path}.scheme", f"must be one of {SCHEMES}, got {name!r}")
    alpha = _number(raw.get("alpha"), f"{path}.alpha")
    p = _number(raw.get("p", 0.5), f"{path}.p")
    _expect(0 < p < 1, f"{path}.p", "must lie strictly between 0 and 1")
    k_max = _int(raw.get("k_max", 100), f"{path}.k_max", 0)
    init = raw.get("init")
    if init is not None:
        _expect(isinstance(init, list) and len(init) == d, f"{path}.init", f"expected {d} numbers")
    cps = raw.get("checkpoints")
    if cps is not None:
        _expect(isinstance(cps, list) and all(isinstance(c, int) and 0 <= c <= k_max for c in cps),
                f"{path}.checkpoints", f"expected integers in [0, {k_max}]")
    try:
        return SchemeConfig(name, alpha, p, k_max, init, seed, None if cps is None else tuple(cps))
    except (ValueError, DropoutLinregError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(raw: dict, base: Path = Path("."), source: Path | None = None) -> ExperimentConfig:
    _expect(isinstance(raw, dict), "<root>", "config must be a JSON object")
    seed = _int(raw.get("master_seed", 0), "master_seed", 0)
    model = _parse_model(raw.get("model"), base)
    schemes_raw = raw.get("schemes", [])
    _expect(isinstance(schemes_raw, list), "schemes", "expected a list")
    schemes = [_parse_scheme(s, f"schemes[{i}]", model.d, seed) for i, s in enumerate(schemes_raw)]

    suites = raw.get("suites", list(SUITES))
    _expect(isinstance(suites, list), "suites", "expected a list")
    for i, s in enumerate(suites):
        _expect(s in SUITES, f"suites[{i}]", f"unknown suite {s!r}; known: {', '.join(SUITES)}")

    fmt = raw.get("format", "json")
    _expect(fmt in FORMATS, "format", f"must be one of {FORMATS}")
    parallel = raw.get("parallel")
    parallel = (os.cpu_count() or 1) if parallel is None else _int(parallel, "parallel", 1)

    ens = raw.get("ensemble", {})
    _expect(isinstance(ens, dict), "ensemble", "expected an object")
    if "replicas" in ens:
        _int(ens["replicas"], "ensemble.replicas", 1)

    mom = raw.get("moments", {})
    _expect(isinstance(mom, dict), "moments", "expected an object")
    for i, dd in enumerate(mom.get("dims", [2, 3, 4])):
        _int(dd, f"moments.dims[{i}]", 1)
        _expect(dd <= MAX_ENUMERATION_DIM, f"moments.dims[{i}]",
                f"BudgetExceeded: 2^{dd} masks exceeds the enumeration budget (d <= {MAX_ENUMERATION_DIM})")
    for i, p in enumerate(mom.get("ps", [0.2, 0.5, 0.8])):
        _expect(0 < _number(p, f"moments.ps[{i}]") < 1, f"moments.ps[{i}]", "must lie in (0, 1)")

    bnd = raw.get("bounds", {})
    _expect(isinstance(bnd, dict), "bounds", "expected an object")
    chain_k = bnd.get("chain_k", 8)
    _int(chain_k, "bounds.chain_k", 0)
    _expect(model.d * chain_k <= 20, "bounds.chain_k", f"BudgetExceeded: 2^(d*k) = 2^{model.d * chain_k} > 2^20")

    out = raw.get("output_dir", "results")
    _expect(isinstance(out, str), "output_dir", "expected a path string")
    return ExperimentConfig(model=model, schemes=schemes, master_seed=seed, ensemble=ens, moments=mom,
                            bounds=bnd, suites=list(suites), output_dir=Path(out), format=fmt,
                            parallel=parallel, raw=raw, source=source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return parse_config(raw, path.parent, path)
