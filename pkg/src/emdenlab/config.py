"""Typed, sectioned key-value run configuration.

Files use INI syntax (parsed with :mod:`configparser`). Every key has a
declared type; unknown sections or keys are rejected and reported with the
offending line number. Vectors are comma-separated, lists of vectors are
separated by ``;``.

Example::

    [model]
    N = 2
    gamma = 2
    xi = -1
    [initial]
    a0 = 1, 1
    a1 = -1, -0.5
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import EmdenLabError
from .params import EmdenState, ModelParams


class ConfigError(EmdenLabError):
    """Invalid configuration file or value."""


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return text.strip()


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _vectors(text: str) -> List[List[float]]:
    return [_floats(chunk) for chunk in text.split(";") if chunk.strip()]


PARSERS = {"float": _float, "int": _int, "bool": _bool, "str": _str,
           "floats": _floats, "ints": _ints, "vectors": _vectors}


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "str":
        return str(value)
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "vectors":
        return "; ".join(", ".join(repr(float(v)) for v in vec) for vec in value)
    raise AssertionError(kind)


SCHEMA: Dict[str, Dict[str, str]] = {
    "model": {"N": "int", "gamma": "float", "K": "float", "mu": "float", "xi": "float",
              "alpha": "float", "d": "floats"},
    "initial": {"a0": "floats", "a1": "floats", "t0": "float"},
    "integration": {"t_end": "float", "rtol": "float", "atol": "float",
                    "touch_fraction": "float"},
    "sweep": {"gamma": "floats", "xi": "floats", "a1": "vectors", "horizon": "float"},
    "field": {"t": "float", "lower": "floats", "upper": "floats", "points": "ints"},
    "residual": {"t": "float", "points": "vectors", "random_points": "int", "h0": "float",
                 "halvings": "int", "t_end": "float"},
    "mass": {"times": "floats", "nodes": "int", "rule": "str", "tail_exponent": "float"},
    "crosscheck": {"lower": "floats", "upper": "floats", "t_end": "float", "levels": "ints",
                   "cfl": "float", "order": "int", "rho_floor": "float",
                   "snapshots": "bool"},
    "output": {"path": "str", "seed": "int"},
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "model": {"gamma": 1.0, "K": 1.0, "mu": 0.0, "xi": 1.0, "alpha": 1.0},
    "initial": {"t0": 0.0},
    "integration": {"t_end": 1.0, "rtol": 1e-10, "atol": 1e-12, "touch_fraction": 1e-8},
    "sweep": {"horizon": 10.0},
    "field": {"t": 0.0},
    "residual": {"t": 0.5, "random_points": 0, "h0": 1e-2, "halvings": 4},
    "mass": {"times": [0.0], "rule": "midpoint", "tail_exponent": 40.0},
    "crosscheck": {"levels": [64, 128, 256, 512], "cfl": 0.4, "order": 2,
                   "rho_floor": 1e-15, "snapshots": False},
    "output": {"seed": 0},
}


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            m = re.match(r"^([^=:#;]+?)\s*[=:]", stripped)
            if m and m.group(1) == key:
                return lineno
    return None


@dataclass
class RunConfig:
    """Validated configuration; ``values`` holds only keys present in the file."""

    values: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    # -- access ---------------------------------------------------------
    def get(self, section: str, key: str, default=None):
        if key in self.values.get(section, {}):
            return self.values[section][key]
        if key in DEFAULTS.get(section, {}):
            return DEFAULTS[section][key]
        return default

    def has(self, section: str, key: Optional[str] = None) -> bool:
        if key is None:
            return section in self.values
        return key in self.values.get(section, {})

    def require(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return value

    def model_params(self, **overrides) -> ModelParams:
        N = self.require("model", "N")
        kwargs = dict(N=N, gamma=self.get("model", "gamma"), K=self.get("model", "K"),
                      mu=self.get("model", "mu"), xi=self.get("model", "xi"),
                      alpha=self.get("model", "alpha"), d=self.get("model", "d"))
        kwargs.update(overrides)
        try:
            return ModelParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"[model] {exc}") from exc

    def initial_state(self, a1=None) -> EmdenState:
        N = self.require("model", "N")
        a0 = self.get("initial", "a0", [1.0] * N)
        a1 = self.get("initial", "a1", [0.0] * N) if a1 is None else a1
        if len(a0) != N or len(a1) != N:
            raise ConfigError(f"[initial] a0 and a1 must have N={N} entries")
        try:
            return EmdenState(self.get("initial", "t0"), a0, a1)
        except ValueError as exc:
            raise ConfigError(f"[initial] {exc}") from exc

    @property
    def seed(self) -> int:
        return int(self.get("output", "seed"))

    # -- (de)serialisation ----------------------------------------------
    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, strict=True,
                                           inline_comment_prefixes=("#",))
        parser.optionxform = str  # keys are case-sensitive (N vs n, K vs k)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        values: Dict[str, Dict[str, Any]] = {}
        for section in parser.sections():
            if section not in SCHEMA:
                line = _line_of(text, section)
                raise ConfigError(f"{source}:{line}: unknown section [{section}]")
            values[section] = {}
            for key, raw in parser.items(section):
                line = _line_of(text, section, key)
                kind = SCHEMA[section].get(key)
                if kind is None:
                    raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{section}]")
                try:
                    values[section][key] = PARSERS[kind](raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"{source}:{line}: [{section}] {key}: expected {kind}: {exc}") from exc
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def from_path(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    def to_text(self) -> str:
        out = io.StringIO()
        for section in SCHEMA:
            if section not in self.values:
                continue
            out.write(f"[{section}]\n")
            for key, kind in SCHEMA[section].items():
                if key in self.values[section]:
                    out.write(f"{key} = {_format_value(kind, self.values[section][key])}\n")
            out.write("\n")
        return out.getvalue()

    def validate(self) -> None:
        if "model" not in self.values or "N" not in self.values["model"]:
            raise ConfigError("[model] N is required")
        params = self.model_params()
        self.initial_state()
        N = params.N
        for vec in self.get("sweep", "a1", []) or []:
            if len(vec) != N:
                raise ConfigError(f"[sweep] a1 vectors must have N={N} entries")
        for vec in self.get("residual", "points", []) or []:
            if len(vec) != N:
                raise ConfigError(f"[residual] points must have N={N} coordinates")
        for key in ("lower", "upper"):
            for section in ("field", "crosscheck"):
                v = self.get(section, key)
                if v is not None and len(v) != N:
                    raise ConfigError(f"[{section}] {key} must have N={N} entries")
        pts = self.get("field", "points")
        if pts is not None and (len(pts) != N or min(pts) < 1):
            raise ConfigError(f"[field] points must be N={N} positive counts")
        if self.get("integration", "rtol") <= 0 or self.get("integration", "atol") <= 0:
            raise ConfigError("[integration] tolerances must be positive")
        if self.get("mass", "rule") not in ("midpoint", "gauss"):
            raise ConfigError("[mass] rule must be 'midpoint' or 'gauss'")
        cfl = self.get("crosscheck", "cfl")
        if not 0.0 < cfl < 1.0:
            raise ConfigError("[crosscheck] cfl must lie in (0, 1)")
        if self.get("crosscheck", "order") not in (1, 2):
            raise ConfigError("[crosscheck] order must be 1 or 2")
        if len(self.get("crosscheck", "levels")) < 3:
            raise ConfigError("[crosscheck] at least three levels are required")
        if self.get("residual", "halvings") < 2:
            raise ConfigError("[residual] halvings must be >= 2")

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return _normalise(self.values) == _normalise(other.values)


def _normalise(values):
    return {s: {k: (np.asarray(v).tolist() if isinstance(v, (list, np.ndarray)) else v)
                for k, v in sec.items()} for s, sec in values.items()}
