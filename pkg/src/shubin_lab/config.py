"""Experiment configuration: INI-style ``key = value`` files with ``[section]`` headers.

Grid values accept a comma list (``1, 2.5, 4``) or ``linspace(a, b, n)`` /
``geomspace(a, b, n)``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("spectrum", "constant_sweep", "thickness_gallery", "bernstein", "smoothing", "control", "cost_blowup")
REGION_NAMES = ("omega_delta", "omega_zero", "omega_planar", "cone", "half_line", "interval", "whole_line")


class ConfigError(ValueError):
    def __init__(self, issues: list["Issue"]):
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


@dataclass(frozen=True)
class Issue:
    field: str
    kind: str  # unknown-key | type | range | required | parse
    message: str

    def __str__(self):
        return f"{self.field}: {self.kind}: {self.message}"


_GRID = re.compile(r"^(linspace|geomspace)\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)$")


def parse_grid(text: str) -> np.ndarray:
    text = text.strip()
    m = _GRID.match(text)
    if m:
        fn, a, b, n = m.groups()
        a, b, n = float(a), float(b), int(n)
        if n < 1:
            raise ValueError("grid size must be >= 1")
        if fn == "geomspace" and (a <= 0 or b <= 0):
            raise ValueError("geomspace endpoints must be positive")
        return getattr(np, fn)(a, b, n)
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty grid")
    return np.asarray(vals)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# section -> key -> (parser, range check or None, range description, default)
SCHEMA = {
    "experiment": {
        "kind": (str, lambda v: v in KINDS, f"one of {', '.join(KINDS)}", None),
        "seed": (int, _nonneg, ">= 0", 0),
        "output": (str, None, "", "out"),
        "name": (str, None, "", ""),
    },
    "operator": {
        "k": (int, lambda v: v >= 1, ">= 1", 1),
        "m": (int, lambda v: v >= 1, ">= 1", 1),
        "s": (float, _positive, "> 0", 1.0),
        "n": (int, lambda v: v >= 8, ">= 8", 256),
    },
    "region": {
        "name": (str, lambda v: v in REGION_NAMES, f"one of {', '.join(REGION_NAMES)}", None),
        "delta": (float, lambda v: 0 <= v <= 1, "0 <= delta <= 1", None),
        "R": (float, _positive, "> 0", None),
        "theta": (float, lambda v: 0 <= v < math.pi / 2, "0 <= theta < pi/2", None),
        "a": (float, None, "", None),
        "b": (float, None, "", None),
        "clip": (float, _positive, "> 0", 40.0),
        "samples": (int, lambda v: v >= 100, ">= 100", 20000),
    },
    "grids": {
        "lambda": (parse_grid, lambda g: np.all(g > 0), "all > 0", None),
        "T": (parse_grid, lambda g: np.all(g > 0), "all > 0", None),
        "t": (parse_grid, lambda g: np.all(g > 0), "all > 0", None),
        "radii": (parse_grid, lambda g: np.all(g > 0) and np.all(np.diff(g) > 0), "positive ascending", None),
        "p_max": (int, _nonneg, ">= 0", 8),
        "beta_max": (int, _nonneg, ">= 0", 8),
        "n_control": (int, lambda v: v >= 1, ">= 1", None),
        "n_probes": (int, lambda v: v >= 1, ">= 1", 10),
    },
    "fit": {
        "delta": (float, lambda v: 0 <= v <= 1, "0 <= delta <= 1", None),
        "log_factor": (_bool, None, "", None),
        "eps": (float, _positive, "> 0", 0.05),
    },
    "tolerances": {
        "stability": (float, _positive, "> 0", 0.2),
        "residual": (float, _positive, "> 0", 1e-6),
        "hum_residual": (float, _positive, "> 0", 1e-8),
        "r2_min": (float, lambda v: 0 < v <= 1, "0 < r2_min <= 1", 0.9),
        "max_cond": (float, _positive, "> 0", 1e12),
        "slack": (float, _positive, "> 0", 1e-12),
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    output: str = "out"
    name: str = ""
    operator: dict = field(default_factory=dict)
    region: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    source: str | None = None

    def echo(self) -> dict:
        """JSON-friendly copy for manifests."""
        def clean(d):
            return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in sorted(d.items())}
        return {"kind": self.kind, "seed": self.seed, "output": self.output, "name": self.name,
                "operator": clean(self.operator), "region": clean(self.region), "grids": clean(self.grids),
                "fit": clean(self.fit), "tolerances": clean(self.tolerances)}


def _parse(text: str) -> tuple[dict, list[Issue]]:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (T vs t)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        return {}, [Issue("<file>", "parse", str(exc).splitlines()[0])]
    issues: list[Issue] = []
    values: dict = {sec: {} for sec in SCHEMA}
    for sec in cp.sections():
        if sec not in SCHEMA:
            issues.append(Issue(f"[{sec}]", "unknown-key", f"unknown section; expected one of {', '.join(SCHEMA)}"))
            continue
        for key, raw in cp.items(sec):
            name = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                issues.append(Issue(name, "unknown-key", f"unknown key in [{sec}]"))
                continue
            conv, check, desc, _ = SCHEMA[sec][key]
            try:
                val = conv(raw.strip())
            except (ValueError, TypeError) as exc:
                issues.append(Issue(name, "type", f"cannot parse {raw!r}: {exc}"))
                continue
            if check is not None and not check(val):
                issues.append(Issue(name, "range", f"value {raw.strip()!r} violates {desc}"))
                continue
            values[sec][key] = val
    return values, issues


def _cross_checks(values: dict, seen: list[Issue]) -> list[Issue]:
    issues = []
    if "kind" not in values["experiment"] and not any(i.field == "experiment.kind" for i in seen):
        issues.append(Issue("experiment.kind", "required", "experiment kind is required"))
    reg = values["region"]
    if reg.get("name") == "omega_delta" and reg.get("delta") == 1.0:
        issues.append(Issue("region.delta", "range", "omega_delta needs delta < 1"))
    if reg.get("name") == "interval" and "a" in reg and "b" in reg and not reg["a"] < reg["b"]:
        issues.append(Issue("region.b", "range", "interval needs a < b"))
    if values["experiment"].get("kind") in ("control", "cost_blowup") and reg.get("name") in ("omega_planar", "cone"):
        issues.append(Issue("region.name", "range", "control experiments run on line regions"))
    return issues


def validate_text(text: str) -> list[Issue]:
    values, issues = _parse(text)
    if values:
        issues += _cross_checks(values, issues)
    return issues


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` carrying every issue found."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([Issue("<file>", "parse", str(exc))]) from exc
    return config_from_text(text, source=str(path))


def config_from_text(text: str, source: str | None = None) -> ExperimentConfig:
    values, issues = _parse(text)
    if values:
        issues += _cross_checks(values, issues)
    if issues:
        raise ConfigError(issues)
    sections = {}
    for sec, keys in SCHEMA.items():
        sections[sec] = {k: values[sec].get(k, spec[3]) for k, spec in keys.items()
                         if k in values[sec] or spec[3] is not None}
    exp = sections.pop("experiment")
    return ExperimentConfig(kind=exp["kind"], seed=exp["seed"], output=exp["output"], name=exp["name"],
                            source=source, **sections)
