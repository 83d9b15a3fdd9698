"""Experiment configuration files and command-line overrides.

Config files are YAML mappings. Keys may sit at the top level or inside the
``experiment``, ``learner`` and ``output`` sections. Any experiment or learner
key may hold a list, which ``sweep`` expands into a Cartesian product.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from rltc.engine import FailureModel
from rltc.harness import ExperimentConfig, SweepAxes, derive_seeds
from rltc.learning import DecayGranularity, LearnerConfig
from rltc.policy import PolicyKind

WORKERS_ENV = "RLTC_WORKERS"

SECTIONS = {
    "experiment": ("grid_dim", "frac_reliable", "noise", "failure_model", "policy", "horizon",
                   "train_episodes", "eval_episodes", "seeds"),
    "learner": ("alpha", "gamma", "epsilon0", "decay_r", "decay_granularity"),
    "output": ("workers", "out"),
}
AXIS_KEYS = ("grid_dim", "frac_reliable", "noise", "failure_model", "policy",
             "alpha", "gamma", "epsilon0", "decay_r", "decay_granularity")
SCALAR_KEYS = ("horizon", "train_episodes", "eval_episodes", "workers", "out")
KNOWN_KEYS = frozenset(k for keys in SECTIONS.values() for k in keys)

DEFAULTS: dict[str, Any] = {
    "grid_dim": 4,
    "frac_reliable": 0.75,
    "noise": 0.0,
    "failure_model": FailureModel.ALWAYS_ZERO,
    "policy": PolicyKind.RLTC,
    "horizon": 30,
    "train_episodes": 20_000,
    "eval_episodes": 2_000,
    "alpha": 0.03,
    "gamma": 0.999,
    "epsilon0": 0.3,
    "decay_r": 0.9996,
    "decay_granularity": DecayGranularity.GLOBAL_TIMESTEP,
    "seeds": tuple(range(30)),
    "workers": 1,
    "out": "results.csv",
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _int(lo: int) -> Callable[[Any], int]:
    def check(v: Any) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"expected an integer, got {v!r}")
        if v < lo:
            raise ValueError(f"must be >= {lo}, got {v}")
        return v
    return check


def _real(lo: float, hi: float, lo_open: bool = False, hi_open: bool = False) -> Callable[[Any], float]:
    def check(v: Any) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"expected a number, got {v!r}")
        v = float(v)
        if (v < lo or (lo_open and v == lo)) or (v > hi or (hi_open and v == hi)):
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            raise ValueError(f"must be in {lb}{lo}, {hi}{rb}, got {v}")
        return v
    return check


def _enum(cls: type) -> Callable[[Any], Any]:
    def check(v: Any) -> Any:
        try:
            return cls(v)
        except ValueError:
            raise ValueError(f"expected one of {[m.value for m in cls]}, got {v!r}") from None
    return check


def _seeds(v: Any) -> tuple[int, ...]:
    if isinstance(v, Mapping):
        if set(v) != {"master", "count"}:
            raise ValueError("seed splitting needs exactly the keys 'master' and 'count'")
        master, count = _int(0)(v["master"]), _int(1)(v["count"])
        return derive_seeds(master, count)
    if isinstance(v, (list, tuple)) and v and all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in v):
        return tuple(v)
    raise ValueError(f"expected a non-empty list of nonnegative integers or {{master, count}}, got {v!r}")


def _path(v: Any) -> str:
    if not isinstance(v, str) or not v:
        raise ValueError(f"expected a file path, got {v!r}")
    return v


VALIDATORS: dict[str, Callable[[Any], Any]] = {
    "grid_dim": _int(2),
    "frac_reliable": _real(0, 1, lo_open=True),
    "noise": _real(0, 1),
    "failure_model": _enum(FailureModel),
    "policy": _enum(PolicyKind),
    "horizon": _int(1),
    "train_episodes": _int(0),
    "eval_episodes": _int(1),
    "alpha": _real(0, float("inf"), lo_open=True),
    "gamma": _real(0, 1, hi_open=True),
    "epsilon0": _real(0, 1),
    "decay_r": _real(0, 1, lo_open=True),
    "decay_granularity": _enum(DecayGranularity),
    "seeds": _seeds,
    "workers": _int(1),
    "out": _path,
}


@dataclass
class Settings:
    values: dict[str, Any]  # axis keys map to lists, others to scalars

    def axes(self) -> SweepAxes:
        v = self.values
        learners = [
            LearnerConfig(a, g, e, r, d)
            for a in v["alpha"] for g in v["gamma"] for e in v["epsilon0"]
            for r in v["decay_r"] for d in v["decay_granularity"]
        ]
        return SweepAxes(
            frac_reliable=v["frac_reliable"], noise=v["noise"], grid_dim=v["grid_dim"],
            failure_model=v["failure_model"], policy=v["policy"], learner=learners, seeds=v["seeds"],
        )

    def base(self) -> ExperimentConfig:
        v = self.values
        first = {k: v[k][0] for k in AXIS_KEYS}
        return ExperimentConfig(
            grid_dim=first["grid_dim"], frac_reliable=first["frac_reliable"], noise=first["noise"],
            failure_model=first["failure_model"], policy=first["policy"], horizon=v["horizon"],
            train_episodes=v["train_episodes"], eval_episodes=v["eval_episodes"],
            learner=LearnerConfig(first["alpha"], first["gamma"], first["epsilon0"], first["decay_r"],
                                  first["decay_granularity"]),
            seeds=v["seeds"],
        )

    def single(self) -> ExperimentConfig:
        """The one configuration a ``run`` executes; rejects multi-valued keys."""
        for k in AXIS_KEYS:
            if len(self.values[k]) != 1:
                raise ConfigError(k, "has several values; use the sweep command")
        return self.base()

    @property
    def workers(self) -> int:
        return self.values["workers"]

    @property
    def out(self) -> str:
        return self.values["out"]


def _flatten(raw: Mapping[str, Any]) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in raw.items():
        if key in SECTIONS:
            if not isinstance(value, Mapping):
                raise ConfigError(key, "section must be a mapping")
            for sub, v in value.items():
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
                flat[sub] = v
        elif key in KNOWN_KEYS:
            flat[key] = value
        else:
            raise ConfigError(key, "unknown key")
    return flat


def _validate(key: str, value: Any) -> Any:
    check = VALIDATORS[key]
    try:
        if key in AXIS_KEYS:
            items = list(value) if isinstance(value, (list, tuple)) else [value]
            if not items:
                raise ValueError("list must be non-empty")
            return [check(x) for x in items]
        return check(value)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Settings:
    """Merge defaults, then the config file, then ``WORKERS_ENV``, then flags."""
    merged: dict[str, Any] = dict(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
        if not isinstance(raw, Mapping):
            raise ConfigError("<root>", "config file must be a mapping")
        merged.update(_flatten(raw))
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers:
        try:
            merged["workers"] = int(env_workers)
        except ValueError:
            raise ConfigError("workers", f"{WORKERS_ENV}={env_workers!r} is not an integer") from None
    for key, value in (overrides or {}).items():
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        if value is not None:
            merged[key] = value
    return Settings({k: _validate(k, v) for k, v in merged.items()})
