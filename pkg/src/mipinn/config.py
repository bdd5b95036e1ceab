"""Experiment configuration: a strict YAML schema and the run manifest.

One file describes a full experiment: benchmark id, solver and flow-map
network sizes, sample counts, damping settings, evaluation lattice, and
kernel-analysis settings. Parsing is strict: unknown keys and
out-of-range values are collected and reported together, each under its
dotted field path, so a typo never silently falls back to a default.

The manifest written next to every run's artifacts records the config
hash, the effective seed, and the versions of the numerical stack; runs
with equal manifests are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, Optional, Tuple

import yaml

from .extension import ABS_LEVEL_SET, INDICATOR
from .problems import BENCHMARK_NAMES

__all__ = ["ConfigError", "SolverConfig", "SampleConfig", "LmSection",
           "FlowConfig", "EvalConfig", "NtkConfig", "ExperimentConfig",
           "load_config", "config_from_dict", "config_hash",
           "write_manifest", "MANIFEST_NAME"]

MANIFEST_NAME = "manifest.txt"


class ConfigError(ValueError):
    """All schema violations for one file, each tagged with its field path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# ---------------------------------------------------------------------------
# field converters; each raises ValueError with a reason (no path)


def _int_min(lo):
    def conv(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"expected an integer, got {v!r}")
        if v < lo:
            raise ValueError(f"must be >= {lo}, got {v}")
        return v
    return conv


def _float_range(lo, hi, lo_open=False, hi_open=False):
    def conv(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"expected a number, got {v!r}")
        v = float(v)
        if (v < lo or (lo_open and v == lo)) or (v > hi or (hi_open and v == hi)):
            b = ("(" if lo_open else "["), (")" if hi_open else "]")
            raise ValueError(f"must be in {b[0]}{lo}, {hi}{b[1]}, got {v}")
        return v
    return conv


def _hidden(v):
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError(f"expected a nonempty list of layer widths, got {v!r}")
    out = []
    for w in v:
        if isinstance(w, bool) or not isinstance(w, int) or w < 1:
            raise ValueError(f"layer widths must be positive integers, got {w!r}")
        out.append(w)
    return tuple(out)


def _choice(options, allow_none=False):
    def conv(v):
        if v is None and allow_none:
            return None
        if v not in options:
            opts = ", ".join(sorted(options))
            raise ValueError(f"must be one of {opts}, got {v!r}")
        return v
    return conv


def _opt_str(v):
    if v is None:
        return None
    if not isinstance(v, str):
        raise ValueError(f"expected a path string, got {v!r}")
    return v


def _weights(v):
    if v is None:
        return None
    if not isinstance(v, dict):
        raise ValueError(f"expected a block -> weight mapping, got {v!r}")
    out = {}
    for k, w in v.items():
        if isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0:
            raise ValueError(f"weight for {k!r} must be a nonnegative number")
        out[str(k)] = float(w)
    return out


def _times(v):
    if not isinstance(v, (list, tuple)):
        raise ValueError(f"expected a list of times, got {v!r}")
    out = []
    for t in v:
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise ValueError(f"times must be numbers, got {t!r}")
        out.append(float(t))
    return tuple(out)


_POSITIVE = _float_range(0.0, float("inf"), lo_open=True)


# ---------------------------------------------------------------------------
# sections; _SPEC maps field name -> converter


@dataclass(frozen=True)
class SolverConfig:
    hidden: Tuple[int, ...] = (32, 32, 32)
    rule: Optional[str] = None
    levelset: str = "analytic"
    flow_checkpoint: Optional[str] = None
    weights: Optional[Dict[str, float]] = None
    mode: str = "mean"
    interface_tol: float = 1e-12

    _SPEC = {"hidden": _hidden,
             "rule": _choice({INDICATOR, ABS_LEVEL_SET}, allow_none=True),
             "levelset": _choice({"analytic", "neural"}),
             "flow_checkpoint": _opt_str,
             "weights": _weights,
             "mode": _choice({"mean", "sum"}),
             "interface_tol": _float_range(0.0, 1.0)}


@dataclass(frozen=True)
class SampleConfig:
    n_interior: int = 2000
    n_boundary: int = 400
    n_initial: int = 300
    n_interface_times: int = 10
    n_interface_per_time: int = 10

    _SPEC = {"n_interior": _int_min(1), "n_boundary": _int_min(1),
             "n_initial": _int_min(1), "n_interface_times": _int_min(2),
             "n_interface_per_time": _int_min(1)}


@dataclass(frozen=True)
class LmSection:
    max_iters: int = 500
    loss_stop: float = 1e-13
    lambda_init: float = 1e-3

    _SPEC = {"max_iters": _int_min(1), "loss_stop": _POSITIVE,
             "lambda_init": _POSITIVE}


@dataclass(frozen=True)
class FlowConfig:
    hidden: Tuple[int, ...] = (24, 24)
    n_reference: int = 100
    n_times: int = 16
    delta: float = 0.2
    substeps: int = 16
    max_iters: int = 150
    loss_stop: float = 1e-13
    lambda_init: float = 1e-3
    zeroset_times: Tuple[float, ...] = ()
    zeroset_resolution: int = 201

    _SPEC = {"hidden": _hidden, "n_reference": _int_min(2),
             "n_times": _int_min(2),
             "delta": _float_range(0.0, 1.0, lo_open=True, hi_open=True),
             "substeps": _int_min(1), "max_iters": _int_min(1),
             "loss_stop": _POSITIVE, "lambda_init": _POSITIVE,
             "zeroset_times": _times, "zeroset_resolution": _int_min(2)}


@dataclass(frozen=True)
class EvalConfig:
    resolution: Optional[int] = None      # None: 101 for 2D, 41 for 3D
    n_times: int = 11

    _SPEC = {"resolution": lambda v: None if v is None else _int_min(2)(v),
             "n_times": _int_min(1)}


@dataclass(frozen=True)
class NtkConfig:
    hidden: Tuple[int, ...] = (512,)
    n_interior: int = 1000
    n_boundary: int = 400
    n_initial: int = 200
    n_interface_times: int = 10
    n_interface_per_time: int = 40
    full_spectrum: bool = True

    _SPEC = {"hidden": _hidden, "n_interior": _int_min(1),
             "n_boundary": _int_min(1), "n_initial": _int_min(1),
             "n_interface_times": _int_min(2), "n_interface_per_time": _int_min(1),
             "full_spectrum": lambda v: v if isinstance(v, bool)
             else (_ for _ in ()).throw(ValueError(f"expected true/false, got {v!r}"))}


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str = "ex1"
    seed: int = 0
    out_dir: Optional[str] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    lm: LmSection = field(default_factory=LmSection)
    flow: FlowConfig = field(default_factory=FlowConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ntk: NtkConfig = field(default_factory=NtkConfig)

    _SPEC = {"benchmark": _choice(set(BENCHMARK_NAMES)),
             "seed": _int_min(0),
             "out_dir": _opt_str}
    _SECTIONS = {"solver": SolverConfig, "samples": SampleConfig,
                 "lm": LmSection, "flow": FlowConfig, "eval": EvalConfig,
                 "ntk": NtkConfig}


def _section_from_dict(cls, data, path, errors):
    values = {}
    for key, raw in data.items():
        conv = cls._SPEC.get(key)
        if conv is None:
            errors.append(f"{path}{key}: unknown key")
            continue
        try:
            values[key] = conv(raw)
        except ValueError as exc:
            errors.append(f"{path}{key}: {exc}")
    return cls(**values) if not errors else None


def config_from_dict(data) -> ExperimentConfig:
    """Build and validate a config from a parsed mapping; raises ConfigError
    listing every violation with its dotted field path."""
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping of config keys"])
    errors = []
    top = {}
    sections = {}
    for key, raw in data.items():
        if key in ExperimentConfig._SECTIONS:
            cls = ExperimentConfig._SECTIONS[key]
            if not isinstance(raw, dict):
                errors.append(f"{key}: expected a mapping")
                continue
            sec_errors = []
            sec = _section_from_dict(cls, raw, f"{key}.", sec_errors)
            errors.extend(sec_errors)
            if sec is not None:
                sections[key] = sec
        elif key in ExperimentConfig._SPEC:
            try:
                top[key] = ExperimentConfig._SPEC[key](raw)
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
        else:
            errors.append(f"{key}: unknown key")
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**top, **sections)
    post = _cross_checks(cfg)
    if post:
        raise ConfigError(post)
    return cfg


def _cross_checks(cfg: ExperimentConfig):
    errors = []
    if cfg.solver.levelset == "neural" and cfg.solver.flow_checkpoint is None:
        errors.append("solver.flow_checkpoint: required when solver.levelset "
                      "is neural")
    if (cfg.solver.flow_checkpoint is not None
            and not os.path.exists(cfg.solver.flow_checkpoint)):
        errors.append(f"solver.flow_checkpoint: no such file "
                      f"{cfg.solver.flow_checkpoint!r}")
    return errors


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"])
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"])
    if data is None:
        data = {}
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# manifest


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 over the canonical JSON form of the validated config."""
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _versions():
    from importlib.metadata import version
    out = [("python", "%d.%d.%d" % sys.version_info[:3])]
    for name in ("mipinn", "numpy", "scipy", "sympy", "scikit-learn",
                 "scikit-image", "PyYAML", "click"):
        try:
            out.append((name, version(name)))
        except Exception:
            out.append((name, "unknown"))
    return out


def write_manifest(out_dir, cfg: ExperimentConfig, seed: int, command: str) -> str:
    """Record what produced this run directory; returns the manifest path."""
    lines = [f"command = {command}",
             f"benchmark = {cfg.benchmark}",
             f"seed = {seed}",
             f"config_hash = {config_hash(cfg)}"]
    lines += [f"{name} = {ver}" for name, ver in _versions()]
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
