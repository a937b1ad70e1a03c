"""JSON/CSV loaders for model and control descriptions used by the CLI.

Control values are always given for the model's *free* channels (pinned
channels such as the unit drift channel are filled in automatically).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import models
from .ode import DEFAULT_RTOL
from .periodic import DEFAULT_NEWTON_TOL
from .system import LINEAR, TRIG, BilinearSystem, PeriodicControl

DEFAULT_K = 256


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class SolverConfig:
    newton_tol: float = DEFAULT_NEWTON_TOL
    max_iter: int = 50
    ode_tol: float = DEFAULT_RTOL
    grid_k: Optional[int] = None

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.ode_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.grid_k is not None and (self.grid_k < 4 or self.grid_k % 2):
            raise ConfigError("grid_k must be an even integer >= 4")


@dataclass
class RunConfig:
    model: dict
    control: Optional[dict] = None
    perturbation: Optional[dict] = None
    zero_mean: bool = False
    seed: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    base_dir: str = "."


def load_json_arg(arg: Union[str, dict]) -> dict:
    """A JSON object from a file path, an inline JSON string, or a bare model name."""
    if isinstance(arg, dict):
        return arg
    text = None
    if os.path.exists(arg):
        with open(arg, encoding="utf-8") as fh:
            text = fh.read()
    elif arg.lstrip().startswith("{"):
        text = arg
    elif arg in models.BUILTIN_MODELS:
        return {"name": arg}
    else:
        raise ConfigError(f"no such file: {arg}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {arg}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a JSON object")
    return obj


# -- models -----------------------------------------------------------------

def _reward(spec):
    if spec is None or spec == "activity":
        return "activity"
    if isinstance(spec, dict) and "flux" in spec:
        return ("flux", {(int(i), int(j)): float(w) for i, j, w in spec["flux"]})
    if isinstance(spec, dict) and "occupancy" in spec:
        return ("occupancy", [float(w) for w in spec["occupancy"]])
    raise ConfigError(f"unknown reward {spec!r}")


def build_model(cfg: Union[str, dict]) -> BilinearSystem:
    """Instantiate a built-in model from ``{"name": ..., **params}``."""
    cfg = load_json_arg(cfg) if isinstance(cfg, str) else cfg
    name = cfg.get("name")
    lb = float(cfg.get("rate_lower_bound", models.DEFAULT_RATE_LOWER_BOUND))
    try:
        if name == "rfm":
            return models.build_rfm(models.RfmSpec(int(cfg["n"]), lb))
        if name == "master":
            pairs = cfg.get("pairs")
            Q = None if pairs is None else [tuple(p) for p in pairs]
            spec = models.MasterChainSpec(int(cfg["n"]), Q, lb, _reward(cfg.get("reward")))
            return models.build_master(spec)
        if name == "linear":
            if "random_n" in cfg:
                if "seed" not in cfg:
                    raise ConfigError("a random linear model needs a seed")
                n = int(cfg["random_n"])
                A = models.random_hurwitz(n, int(cfg["seed"]))
                return models.build_example_linear(A, cfg.get("b", np.ones(n)), cfg.get("c", np.ones(n)))
            return models.build_example_linear(cfg.get("A", [[-1.0]]), cfg.get("b", [1.0]),
                                               cfg.get("c", [1.0]))
        if name == "pavlov":
            return models.build_example_pavlov()
        if name == "scalar":
            return models.build_example_scalar(lb)
    except KeyError as exc:
        raise ConfigError(f"model {name!r} is missing parameter {exc}") from exc
    raise ConfigError(f"unknown model {name!r}; built-ins are {', '.join(models.BUILTIN_MODELS)}")


# -- controls ---------------------------------------------------------------

def _vector(value, width: int, what: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        v = np.full(width, v[0])
    if v.shape != (width,):
        raise ConfigError(f"{what} needs {width} values (one per free channel), got {v.size}")
    return v


def _read_samples_csv(path: str) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                if rows:
                    raise ConfigError(f"non-numeric row in {path}: {row}")
                continue  # header
    if not rows:
        raise ConfigError(f"no samples in {path}")
    return np.array(rows)


def build_free_control(cfg: dict, width: int, period: Optional[float] = None,
                       k: Optional[int] = None, seed: Optional[int] = None,
                       perturbation: bool = False, base_dir: str = ".") -> PeriodicControl:
    """Control on the free channels from a ``{"kind": ...}`` description."""
    kind = cfg.get("kind")
    interp = cfg.get("interpolation")
    if kind == "constant":
        T = float(cfg.get("period", period if period is not None else np.nan))
        if not T > 0:
            raise ConfigError("a constant control needs a positive period")
        return PeriodicControl.constant(_vector(cfg["value"], width, "value"), T,
                                        k or DEFAULT_K, interp or TRIG)
    if kind == "harmonic":
        omega = float(cfg["omega"])
        T = float(cfg.get("period", period if period is not None else 2 * np.pi / omega))
        cycles = omega * T / (2 * np.pi)
        if not abs(cycles - round(cycles)) < 1e-9 or round(cycles) < 1:
            raise ConfigError("omega must complete a whole number of cycles per period")
        mean = _vector(cfg.get("mean", 0.0), width, "mean")
        amp = _vector(cfg.get("amplitude", 0.0), width, "amplitude")
        phase = _vector(cfg.get("phase", 0.0), width, "phase")
        u = PeriodicControl.harmonic(mean, amp, omega, phase, k or DEFAULT_K, period=T)
        return u if interp in (None, "trig", TRIG) else PeriodicControl(T, u.samples, interp)
    if kind == "samples":
        T = float(cfg.get("period", period if period is not None else np.nan))
        if not T > 0:
            raise ConfigError("sampled controls need a positive period")
        if "file" in cfg:
            path = cfg["file"]
            path = path if os.path.isabs(path) else os.path.join(base_dir, path)
            vals = _read_samples_csv(path)
        else:
            vals = np.asarray(cfg["values"], dtype=float)
        vals = vals.reshape(len(vals), -1)
        if vals.shape[1] != width:
            raise ConfigError(f"samples need {width} columns, got {vals.shape[1]}")
        u = PeriodicControl(T, vals, interp or LINEAR)
        return u if k is None or k == u.k else u.resample(k)
    if kind == "random":
        if seed is None and "seed" not in cfg:
            raise ConfigError("random controls need a seed (--seed)")
        T = float(cfg.get("period", period if period is not None else np.nan))
        if not T > 0:
            raise ConfigError("random controls need a positive period")
        rng = np.random.default_rng(int(cfg.get("seed", seed)))
        H = int(cfg.get("harmonics", 3))
        scale = float(cfg.get("scale", 1.0))
        kk = k or DEFAULT_K
        t = T * np.arange(kk) / kk
        a = rng.normal(size=(H, width)) / H
        b = rng.normal(size=(H, width)) / H
        j = np.arange(1, H + 1)[:, None]
        S = np.sin(2 * np.pi * j * t / T).T @ a + np.cos(2 * np.pi * j * t / T).T @ b
        mean = 0.0 if perturbation else _vector(cfg.get("mean", 0.0), width, "mean")
        return PeriodicControl(T, mean + scale * S, interp or TRIG)
    raise ConfigError(f"unknown control kind {kind!r}")


def build_control(sys: BilinearSystem, cfg: dict, period: Optional[float] = None,
                  k: Optional[int] = None, seed: Optional[int] = None,
                  perturbation: bool = False, base_dir: str = ".") -> PeriodicControl:
    """Full control for ``sys`` (pinned channels filled in)."""
    cfg = load_json_arg(cfg) if isinstance(cfg, str) else cfg
    try:
        free = build_free_control(cfg, len(sys.free_channels), period, k, seed,
                                  perturbation, base_dir)
    except KeyError as exc:
        raise ConfigError(f"control is missing field {exc}") from exc
    if free.k % 2:
        raise ConfigError("the number of samples per period must be even")
    return sys.embed_perturbation(free) if perturbation else sys.embed_control(free)
