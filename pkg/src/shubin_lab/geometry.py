"""Control regions, thickness profiling and the Vitali covering selection.

Line regions are finite unions of closed intervals inside a clip window and are
handled with exact interval arithmetic.  Planar regions are named families with
a membership predicate and are measured by seeded Monte Carlo.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INF = math.inf


class GeometryError(ValueError):
    pass


def _merge(intervals) -> tuple[tuple[float, float], ...]:
    ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
    out: list[list[float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


@dataclass(frozen=True)
class LineRegion:
    """Finite union of disjoint closed intervals, clipped to ``[-L, L]``."""

    intervals: tuple[tuple[float, float], ...]
    clip: float
    name: str = "intervals"
    params: dict = field(default_factory=dict, compare=False)

    dim = 1

    @classmethod
    def from_intervals(cls, intervals, clip: float, name: str = "intervals", params=None) -> "LineRegion":
        clipped = [(max(a, -clip), min(b, clip)) for a, b in intervals]
        return cls(_merge(clipped), float(clip), name, dict(params or {}))

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x >= a) & (x <= b)
        return inside

    def intersect(self, a: float, b: float) -> list[tuple[float, float]]:
        out = []
        for lo, hi in self.intervals:
            lo2, hi2 = max(lo, a), min(hi, b)
            if hi2 > lo2:
                out.append((lo2, hi2))
        return out

    def measure_in(self, a: float, b: float) -> float:
        return float(sum(hi - lo for lo, hi in self.intersect(a, b)))

    def restrict(self, a: float, b: float) -> "LineRegion":
        return LineRegion(tuple(self.intersect(a, b)), self.clip, self.name + "|restricted", dict(self.params))

    def to_dict(self) -> dict:
        return {"kind": "line", "name": self.name, "clip": self.clip, "params": self.params,
                "intervals": [list(iv) for iv in self.intervals]}


# named planar families: membership predicates on arrays of shape (n, 2)
def _planar_predicate(name: str, params: dict) -> Callable[[np.ndarray], np.ndarray]:
    if name == "omega_planar":
        R, delta = params["R"], params["delta"]
        return lambda p: np.abs(p[:, 1]) > R * (1.0 + p[:, 0] ** 2) ** (delta / 2)
    if name == "cone":
        theta = params["theta"]
        half = np.pi / 2 - theta
        return lambda p: (np.abs(np.arctan2(p[:, 1], p[:, 0])) <= half) & (np.hypot(p[:, 0], p[:, 1]) > 0)
    raise GeometryError(f"unknown planar family {name!r}")


@dataclass(frozen=True)
class PlanarRegion:
    """Named 2-D region inside the square ``[-L, L]^2``, measured by Monte Carlo."""

    name: str
    params: dict
    clip: float
    samples: int = 1_000_000
    seed: int = 0

    dim = 2

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inside = _planar_predicate(self.name, self.params)(pts)
        return inside & (np.abs(pts).max(axis=1) <= self.clip)

    def to_dict(self) -> dict:
        return {"kind": "planar", "name": self.name, "clip": self.clip, "params": self.params,
                "samples": self.samples, "seed": self.seed}


Region = LineRegion | PlanarRegion


def region_to_json(region: Region) -> str:
    return json.dumps(region.to_dict(), sort_keys=True)


def region_from_json(text: str) -> Region:
    d = json.loads(text)
    if d["kind"] == "line":
        return LineRegion(tuple(tuple(iv) for iv in d["intervals"]), float(d["clip"]), d["name"], d.get("params", {}))
    if d["kind"] == "planar":
        return PlanarRegion(d["name"], d["params"], float(d["clip"]), int(d["samples"]), int(d["seed"]))
    raise GeometryError(f"unknown region kind {d['kind']!r}")


@dataclass(frozen=True)
class ThicknessDensity:
    """rho(x) = R (1 + |x|^2)^(delta/2)."""

    R: float
    delta: float

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError("density scale R must be positive")
        if not 0 <= self.delta <= 1:
            raise GeometryError("density exponent delta must lie in [0, 1]")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = x ** 2 if x.ndim <= 1 else (x ** 2).sum(axis=-1)
        return self.R * (1.0 + r2) ** (self.delta / 2)


@dataclass
class BallMeasure:
    measure: float
    stderr: float = 0.0
    clipped: bool = False


def ball_intersection_measure(region: Region, center, radius: float, *, samples: int | None = None,
                              seed: int | None = None) -> BallMeasure:
    if not radius > 0:
        raise GeometryError("radius must be positive")
    if isinstance(region, LineRegion):
        c = float(center)
        clipped = c - radius < -region.clip or c + radius > region.clip
        return BallMeasure(region.measure_in(c - radius, c + radius), 0.0, clipped)
    c = np.asarray(center, dtype=float).reshape(2)
    n = samples or region.samples
    rng = np.random.default_rng(region.seed if seed is None else seed)
    # uniform samples in the disc
    r = radius * np.sqrt(rng.random(n))
    t = 2 * np.pi * rng.random(n)
    pts = c + np.column_stack([r * np.cos(t), r * np.sin(t)])
    hit = region.contains(pts)
    area = np.pi * radius ** 2
    frac = hit.mean()
    clipped = bool(np.any(np.abs(c) + radius > region.clip))
    return BallMeasure(area * frac, area * math.sqrt(frac * (1 - frac) / n), clipped)


@dataclass
class ThicknessReport:
    gamma: float
    worst_center: object
    centers: np.ndarray
    ratios: np.ndarray
    density: ThicknessDensity
    empty: bool = False
    clipped: bool = False


def center_grid(clip: float, density: ThicknessDensity, extent: float | None = None) -> np.ndarray:
    """Uniform centres on ``[-extent, extent]`` with spacing ``rho_min / 4``."""
    extent = clip if extent is None else extent
    h = density.R / 4
    n = int(math.ceil(2 * extent / h))
    return np.linspace(-extent, extent, n + 1)


def thickness_profile(region: Region, density: ThicknessDensity, centers) -> ThicknessReport:
    centers = np.asarray(centers, dtype=float)
    if isinstance(region, LineRegion) and not region.intervals:
        return ThicknessReport(0.0, None, centers, np.zeros(len(centers)), density, empty=True)
    ratios = np.empty(len(centers))
    clipped = False
    for i, c in enumerate(centers):
        rad = float(density(np.linalg.norm(c)))
        bm = ball_intersection_measure(region, c, rad)
        vol = 2 * rad if region.dim == 1 else np.pi * rad ** 2
        ratios[i] = bm.measure / vol
        clipped |= bm.clipped
    i = int(np.argmin(ratios))
    gamma = float(min(max(ratios[i], 0.0), 1.0))
    return ThicknessReport(gamma, centers[i], centers, ratios, density, clipped=clipped)


@dataclass
class DensitySeries:
    radii: np.ndarray
    ratios: np.ndarray
    stderr: np.ndarray
    tail_min: float
    one_weakly_thick: bool


def liminf_density(region: Region, radii: Sequence[float], threshold: float = 0.05,
                   tail_fraction: float = 1 / 3) -> DensitySeries:
    """Ratios |omega cap B(0,R)| / |B(0,R)| for ascending radii.

    The tail minimum over the last ``tail_fraction`` of radii stands in for the
    liminf; the region is flagged consistent with 1-weak thickness when it
    exceeds ``threshold``.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise GeometryError("radii must be positive and strictly ascending")
    ratios = np.empty(len(radii))
    errs = np.zeros(len(radii))
    for i, r in enumerate(radii):
        bm = ball_intersection_measure(region, np.zeros(region.dim) if region.dim == 2 else 0.0, r)
        vol = 2 * r if region.dim == 1 else np.pi * r ** 2
        ratios[i] = bm.measure / vol
        errs[i] = bm.stderr / vol
    tail = ratios[int(len(ratios) * (1 - tail_fraction)):] if len(ratios) > 1 else ratios
    tail_min = float(tail.min())
    return DensitySeries(radii, ratios, errs, tail_min, tail_min > threshold)


def vitali_select(balls: Sequence[tuple[object, float]]) -> list[int]:
    """Greedy Vitali selection: scan balls by decreasing radius, keep those disjoint from all kept.

    Kept (open) balls are pairwise disjoint and every input ball lies inside the
    threefold dilation of a kept ball of at least its radius.
    """
    centers = [np.atleast_1d(np.asarray(c, dtype=float)) for c, _ in balls]
    radii = [float(r) for _, r in balls]
    if any(r <= 0 for r in radii):
        raise GeometryError("radii must be positive")
    order = sorted(range(len(balls)), key=lambda i: (-radii[i], i))
    kept: list[int] = []
    for i in order:
        if all(np.linalg.norm(centers[i] - centers[j]) >= radii[i] + radii[j] for j in kept):
            kept.append(i)
    return sorted(kept)


def _omega_delta_intervals(delta: float, clip: float):
    e = 1.0 / (1.0 - delta)
    out = []
    n = 0
    while True:
        a = n ** e
        if a > clip:
            break
        b = (a + (n + 1) ** e) / 2
        out.append((a, b))
        out.append((-b, -a))
        n += 1
    return out


def example_region(name: str, params: dict | None = None, clip: float = 40.0) -> Region:
    """Example sets: ``omega_delta``, ``omega_zero``, ``omega_planar``, ``cone``, plus
    ``half_line`` and ``interval`` for convenience."""
    params = dict(params or {})
    if name in ("omega_delta", "omega_zero"):
        delta = 0.0 if name == "omega_zero" else float(params.get("delta", 0.0))
        if not 0 <= delta < 1:
            raise GeometryError(f"omega_delta requires 0 <= delta < 1, got {delta}")
        return LineRegion.from_intervals(_omega_delta_intervals(delta, clip), clip, name, {"delta": delta})
    if name == "omega_planar":
        R, delta = float(params.get("R", 1.0)), float(params.get("delta", 0.0))
        ThicknessDensity(R, delta)
        return PlanarRegion(name, {"R": R, "delta": delta}, clip)
    if name == "cone":
        theta = float(params.get("theta", 0.0))
        if not 0 <= theta < np.pi / 2:
            raise GeometryError("cone aperture requires 0 <= theta < pi/2")
        return PlanarRegion(name, {"theta": theta}, clip)
    if name == "half_line":
        return LineRegion.from_intervals([(0.0, clip)], clip, name)
    if name == "interval":
        a, b = float(params.get("a", 0.0)), float(params.get("b", 1.0))
        return LineRegion.from_intervals([(a, b)], clip, name, {"a": a, "b": b})
    if name == "whole_line":
        return LineRegion.from_intervals([(-clip, clip)], clip, name)
    raise GeometryError(f"unknown example region {name!r}")


def every_other(region: LineRegion) -> LineRegion:
    """Drop every second interval on each side of the origin (a strict subset)."""
    pos = [iv for iv in region.intervals if iv[0] >= 0]
    neg = [iv for iv in region.intervals if iv[1] <= 0 and iv[0] < 0][::-1]
    mid = [iv for iv in region.intervals if iv[0] < 0 < iv[1]]
    keep = mid + pos[1::2] + neg[1::2] if mid else pos[::2] + neg[::2]
    return LineRegion(_merge(keep), region.clip, region.name + "|every_other", dict(region.params))
