"""Flat ``section.key = value`` run configuration.

Lines starting with ``#`` are comments. Every key has a default; unknown keys are
rejected with the closest valid spelling.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np


class ConfigError(ValueError):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        n = int(np.floor((stop - start) / step + 1e-9))
        return tuple(float(x) for x in np.round(start + step * np.arange(n + 1), 12))
    return tuple(float(p) for p in text.split(","))


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _interval(text: str):
    text = text.strip()
    if text == "auto":
        return None
    lo, hi = (float(p) for p in text.split(","))
    return (lo, hi)


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    default: Any
    parse: Callable[[str], Any]
    doc: str


METRIC_NAMES = ("qfi", "variance", "uncertainty")

SCHEMA: dict[str, Key] = {
    "model.kappa": Key(0.15, float, "next-nearest-neighbour coupling (units of J = 1)"),
    "model.b": Key(0.75, float, "transverse field B"),
    "model.n_sites": Key(20, int, "number of spins N"),
    "model.boundary": Key("periodic", str, "periodic | open"),
    "grid.t_max": Key(15.0, float, "averaging window T (units 1/J)"),
    "grid.dt_sample": Key(0.1, float, "metric sampling interval"),
    "propagator.subspace_dim": Key(30, int, "maximum Krylov dimension"),
    "propagator.step": Key(0.05, float, "maximum Krylov time step"),
    "propagator.tol": Key(1e-10, float, "per-step truncation tolerance"),
    "metric.name": Key("qfi", str, "qfi | variance | uncertainty (scan command)"),
    "metric.delta": Key(0.0, float, "measurement resolution (Gaussian width) for variance"),
    "metric.m": Key(10000, int, "outcomes per time for variance; 0 = exact variance"),
    "estimation.theta_true": Key(0.01, float, "true interferometric phase (rad)"),
    "estimation.n_shots": Key(50000, int, "outcomes per estimate"),
    "estimation.repeats": Key(2000, int, "estimates per time; 0 = Cramer-Rao value only"),
    "estimation.search_interval": Key(None, _interval, "lo,hi in rad, or auto"),
    "estimation.grid_points": Key(64, int, "likelihood pre-scan points"),
    "estimation.t": Key(7.5, float, "probe time for the mle command"),
    "sweep.kappa_grid": Key(_float_list("0:0.5:0.0125"), _float_list, "kappa values or start:stop:step"),
    "sweep.b_grid": Key((0.2, 0.4, 0.6, 0.8), _float_list, "B values for phase-diagram"),
    "sweep.metrics": Key(METRIC_NAMES, _str_list, "metrics for phase-diagram"),
    "run.seed": Key(0, int, "master RNG seed (64-bit)"),
    "run.out": Key("out", str, "output directory"),
}


class RunConfig:
    """Resolved configuration: every schema key mapped to a typed value."""

    def __init__(self, values: dict[str, Any] | None = None):
        self.values = {k: v.default for k, v in SCHEMA.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def __getitem__(self, key: str):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            close = difflib.get_close_matches(key, SCHEMA, n=3, cutoff=0.5)
            hint = f"; did you mean {', '.join(close)}?" if close else ""
            raise ConfigError(f"unknown config key {key!r}{hint}")
        if isinstance(value, str):
            try:
                value = SCHEMA[key].parse(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        self.values[key] = value

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in sorted(self.values))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
            key, value = (p.strip() for p in line.split("=", 1))
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read())


def describe() -> str:
    """Human-readable key reference with defaults."""
    width = max(map(len, SCHEMA))
    return "\n".join(
        f"{k:<{width}}  {_fmt(v.default):<22} {v.doc}" for k, v in SCHEMA.items()
    )
