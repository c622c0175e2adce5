"""Flat INI-style run configuration.

Sections and keys (``section.key``):

    physics     tau, c, b, eta
    basis       kind, lengths, modes, zero_mode
    solver      dt, t_end, scheme, dealias, blowup_threshold, save_every,
                margin_min, steady_tol, max_periods
    forcing     kind, omega, amplitude
    experiment  kind, seed, zeta_max, zeta_samples, initial, amplitude,
                harmonics, fp_tol, relaxation, cross_validate, a_min, a_max,
                scan_points, bracket_ratio, workers
    sweep       parameter, values

Lists are comma separated, optionally wrapped in brackets.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ConfigError

EXPERIMENT_KINDS = ("stability", "simulate", "periodic", "blowup-sweep", "tau-sweep")

_REQUIRED = object()


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan")
    return value


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _list(conv: Callable) -> Callable:
    def parse(text: str):
        body = text.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1]
        items = [item.strip() for item in body.split(",") if item.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(item) for item in items)

    parse.__name__ = f"list of {conv.__name__.strip('_')}"
    return parse


def _optional_float(text: str):
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return _float(text)


def _choice(*options: str) -> Callable:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value

    parse.__name__ = "one of " + "|".join(options)
    return parse


def _str(text: str) -> str:
    return text.strip()


# key -> (converter, default, validator or None)
SCHEMA: dict[str, tuple] = {
    "physics.tau": (_float, _REQUIRED, lambda v: v >= 0 or "must be >= 0"),
    "physics.c": (_float, _REQUIRED, lambda v: v > 0 or "must be > 0"),
    "physics.b": (_float, _REQUIRED, lambda v: v >= 0 or "must be >= 0"),
    "physics.eta": (_float, 0.0, None),
    "basis.kind": (_choice("dirichlet-interval", "dirichlet-rectangle", "torus"), "dirichlet-interval", None),
    "basis.lengths": (_list(_float), (math.pi,), lambda v: all(x > 0 for x in v) or "must be positive"),
    "basis.modes": (_list(_int), (8,), lambda v: all(x >= 1 for x in v) or "must be >= 1"),
    "basis.zero_mode": (_bool, False, None),
    "solver.dt": (_float, 1e-3, lambda v: v > 0 or "must be > 0"),
    "solver.t_end": (_float, 10.0, lambda v: v > 0 or "must be > 0"),
    "solver.scheme": (_choice("exponential-imex", "rk4-explicit"), "exponential-imex", None),
    "solver.dealias": (_bool, True, None),
    "solver.blowup_threshold": (_optional_float, None, lambda v: v is None or v > 0 or "must be > 0"),
    "solver.save_every": (_int, 1, lambda v: v >= 1 or "must be >= 1"),
    "solver.margin_min": (_float, 1e-3, lambda v: v > 0 or "must be > 0"),
    "solver.steady_tol": (_float, 1e-8, lambda v: v > 0 or "must be > 0"),
    "solver.max_periods": (_int, 400, lambda v: v >= 2 or "must be >= 2"),
    "forcing.kind": (_choice("none", "modal-harmonic"), "none", None),
    "forcing.omega": (_float, 0.0, lambda v: v >= 0 or "must be >= 0"),
    "forcing.amplitude": (_list(_float), (0.0,), None),
    "experiment.kind": (_choice(*EXPERIMENT_KINDS), _REQUIRED, None),
    "experiment.seed": (_int, 0, lambda v: v >= 0 or "must be >= 0"),
    "experiment.zeta_max": (_optional_float, None, lambda v: v is None or v > 0 or "must be > 0"),
    "experiment.zeta_samples": (_int, 100, lambda v: v >= 1 or "must be >= 1"),
    "experiment.initial": (_choice("zero", "phi1", "random"), "phi1", None),
    "experiment.amplitude": (_float, 0.0, None),
    "experiment.harmonics": (_int, 8, lambda v: v >= 1 or "must be >= 1"),
    "experiment.fp_tol": (_float, 1e-12, lambda v: v > 0 or "must be > 0"),
    "experiment.relaxation": (_float, 0.5, lambda v: 0 < v <= 1 or "must lie in (0, 1]"),
    "experiment.cross_validate": (_bool, True, None),
    "experiment.a_min": (_float, 0.1, lambda v: v > 0 or "must be > 0"),
    "experiment.a_max": (_float, 1.0, lambda v: v > 0 or "must be > 0"),
    "experiment.scan_points": (_int, 10, lambda v: v >= 2 or "must be >= 2"),
    "experiment.bracket_ratio": (_float, 1.1, lambda v: v > 1 or "must be > 1"),
    "experiment.workers": (_int, 1, lambda v: v >= 1 or "must be >= 1"),
    "sweep.parameter": (_str, None, None),
    "sweep.values": (_list(_float), None, None),
}

SECTIONS = ("physics", "basis", "solver", "forcing", "experiment", "sweep")

# parameters a sweep may vary
SWEEPABLE = tuple(k for k, (conv, _, _) in SCHEMA.items() if conv in (_float, _optional_float))


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration: every schema key mapped to a typed value."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def kind(self) -> str:
        return self.values["experiment.kind"]

    @property
    def seed(self) -> int:
        return self.values["experiment.seed"]

    @property
    def sweep(self) -> Optional[tuple]:
        param = self.values.get("sweep.parameter")
        if param is None:
            return None
        return param, self.values["sweep.values"]

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def with_value(self, key: str, value) -> "RunConfig":
        values = dict(self.values)
        values[key] = value
        return validate(values)


def _resolve_parameter(name: str) -> str:
    if name in SCHEMA:
        key = name
    else:
        matches = [k for k in SCHEMA if k.split(".", 1)[1] == name]
        if len(matches) != 1:
            raise ConfigError(f"sweep.parameter: unknown parameter {name!r}")
        key = matches[0]
    if key not in SWEEPABLE or key.startswith("sweep."):
        raise ConfigError(f"sweep.parameter: {key!r} cannot be swept")
    return key


def validate(values: dict) -> RunConfig:
    """Check constraints on already-typed values and return a RunConfig."""
    for key, (_, _, check) in SCHEMA.items():
        if check is None or values.get(key) is None:
            continue
        verdict = check(values[key])
        if verdict is not True:
            raise ConfigError(f"{key}: {verdict} (got {values[key]!r})")
    param, svals = values.get("sweep.parameter"), values.get("sweep.values")
    if (param is None) != (svals is None):
        raise ConfigError("sweep: parameter and values must be given together")
    if param is not None:
        key = _resolve_parameter(param)
        values = dict(values)
        values["sweep.parameter"] = key
        _, _, check = SCHEMA[key]
        for v in svals:
            verdict = check(v) if check else True
            if verdict is not True:
                raise ConfigError(f"sweep.values: {key} {verdict} (got {v!r})")
    if values["experiment.a_max"] <= values["experiment.a_min"]:
        raise ConfigError("experiment.a_max: must exceed experiment.a_min")
    return RunConfig(values)


def parse_config(text: str, kind: Optional[str] = None) -> RunConfig:
    """Parse configuration text; ``kind`` fills in (and must agree with) experiment.kind."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    raw = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            path = f"{section}.{key}"
            if path not in SCHEMA:
                raise ConfigError(f"unknown key {path}")
            raw[path] = value
    if kind is not None:
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment.kind: unknown experiment {kind!r}")
        given = raw.get("experiment.kind")
        if given is not None and given.strip() != kind:
            raise ConfigError(f"experiment.kind: config says {given.strip()!r} but {kind!r} was requested")
        raw["experiment.kind"] = kind
    values = {}
    for key, (conv, default, _) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: expected {conv.__name__.strip('_')}, got {raw[key]!r} ({exc})") from None
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key}")
        else:
            values[key] = default
    return validate(values)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def format_config(config: RunConfig) -> str:
    """Render every resolved key; ``parse_config(format_config(c)) == c``."""
    lines = []
    for section in SECTIONS:
        entries = [(k, v) for k, v in config.values.items() if k.startswith(section + ".") and v is not None]
        if not entries:
            continue
        lines.append(f"[{section}]")
        for key, value in entries:
            lines.append(f"{key.split('.', 1)[1]} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def expand_sweep(config: RunConfig) -> list:
    """One RunConfig per sweep value (the config itself when there is no sweep)."""
    if config.sweep is None:
        return [config]
    key, values = config.sweep
    members = []
    for v in values:
        vals = dict(config.values)
        vals[key] = v
        vals["sweep.parameter"] = None
        vals["sweep.values"] = None
        members.append(validate(vals))
    return members
