"""Experiment runners behind the command line.

Each kind writes CSV series and JSON summaries into the output directory and
returns its verdicts; :func:`run` wraps that into a hashed manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bernstein as bern
from . import control as ctl
from . import geometry as geo
from . import spectral as spec
from .config import ExperimentConfig
from .operator import ShubinParams, eigenbasis

VERDICTS = ("PASS", "FAIL", "INCONCLUSIVE")


class ExperimentError(RuntimeError):
    """A downstream numerical failure, tagged with the module that raised it."""

    def __init__(self, module: str, exc: Exception):
        self.module = module
        self.cause = exc
        super().__init__(f"{module}: {type(exc).__name__}: {exc}")


def tool_version() -> str:
    try:
        return metadata.version("shubin-lab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


class Outputs:
    """Collects emitted files (CSV with LF endings, JSON with sorted keys)."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> Path:
        path = self.root / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.files.append(path)
        return path

    def json(self, name: str, payload) -> Path:
        path = self.root / name
        path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        self.files.append(path)
        return path


def build_region(cfg: ExperimentConfig):
    r = dict(cfg.region)
    name = r.pop("name", "whole_line")
    clip = r.pop("clip", 40.0)
    samples = r.pop("samples", None)
    params = {k: v for k, v in r.items() if k in ("delta", "R", "theta", "a", "b")}
    region = geo.example_region(name, params, clip)
    if isinstance(region, geo.PlanarRegion) and samples:
        region = dataclasses.replace(region, samples=samples, seed=cfg.seed)
    return region


def _params(cfg: ExperimentConfig) -> ShubinParams:
    o = cfg.operator
    return ShubinParams(o.get("k", 1), o.get("m", 1), o.get("s", 1.0))


def _basis(cfg: ExperimentConfig):
    return eigenbasis(_params(cfg), cfg.operator.get("n", 256))


def _guard(module: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(module, exc) from exc


def _threads(default: int | None = None) -> int:
    if default:
        return default
    try:
        return max(1, int(os.environ.get("SHUBIN_LAB_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- kinds

def run_spectrum(cfg, out: Outputs, threads: int) -> tuple[dict, dict]:
    basis = _guard("operator", _basis, cfg)
    rel = basis.reliability_index()
    out.csv("eigenvalues.csv", ["n", "lambda", "lambda_s", "reliable"],
            ((i, float(l), float(l ** basis.params.s), int(i <= rel)) for i, l in enumerate(basis.eigenvalues)))
    ok = bool(np.all(basis.eigenvalues > 0) and np.all(np.diff(basis.eigenvalues) > 0))
    return {"spectrum_ordered": "PASS" if ok else "FAIL"}, {"reliability_index": rel}


def _fit_setup(cfg, region) -> tuple[float, bool]:
    name = cfg.region.get("name", "whole_line")
    delta_default = {"omega_zero": 0.0, "omega_delta": cfg.region.get("delta", 0.0), "half_line": 1.0,
                     "interval": 1.0, "whole_line": 0.0}.get(name, 0.0)
    delta = cfg.fit.get("delta", delta_default)
    log_factor = cfg.fit.get("log_factor", name == "interval")
    return delta, log_factor


def run_constant_sweep(cfg, out: Outputs, threads: int):
    basis = _guard("operator", _basis, cfg)
    region = build_region(cfg)
    if not isinstance(region, geo.LineRegion):
        raise ExperimentError("spectral", ValueError("constant sweeps need a line region"))
    lam = cfg.grids.get("lambda")
    if lam is None:
        lam = basis.eigenvalues[: basis.reliability_index()]
    series = _guard("spectral", spec.constant_sweep, basis.params, region, lam, basis=basis,
                    stop_on_ill_conditioned=True)
    out.csv("constants.csv", ["lambda", "C", "log_C", "n_modes", "cond_G"],
            ([r["lambda"], r["C"], r["log_C"], r["n_modes"], r["cond_G"]] for r in series.rows()))
    delta, log_factor = _fit_setup(cfg, region)
    e = (0.5 * (1 / basis.params.k + 1 / basis.params.m) if log_factor
         else spec.theoretical_exponent(basis.params, delta))
    fit = spec.fit_exponent(series.lam, series.C, e, log_factor=log_factor)
    out.json("fit.json", {"e_theory": e, "delta": delta, "log_factor": log_factor, "e_fit": fit.e_fit,
                          "K_fit": fit.K_fit, "residual": fit.residual, "tail_max": fit.tail_max,
                          "median": fit.median, "verdict": fit.verdict, "truncated_at": series.truncated_at,
                          "quadrature": series.quadrature, "region": region.to_dict()})
    return {"exponent_bound": fit.verdict}, {"reliability_index": series.reliability_index}


GALLERY = (("omega_zero", {}, 0.0, 2.0), ("omega_delta", {"delta": 1 / 3}, 1 / 3, 2.0),
           ("half_line", {}, 1.0, 2.0), ("omega_planar", {"R": 1.0, "delta": 0.5}, 0.5, 2.0),
           ("cone", {"theta": math.pi / 6}, 1.0, 2.0))


def _gallery_entries(cfg):
    if "name" in cfg.region:
        r = cfg.region
        delta = r.get("delta", 1.0 if r["name"] in ("half_line", "cone") else 0.0)
        return [(r["name"], {k: v for k, v in r.items() if k in ("delta", "R", "theta", "a", "b")},
                 delta, r.get("R", 2.0))]
    return list(GALLERY)


def _thickness_pair(region, delta, R, clip):
    """gamma at (delta, R) and at (delta', 6R), delta' = min(1, delta + 1/4), on one centre grid."""
    d2 = min(1.0, delta + 0.25)
    big = geo.ThicknessDensity(6 * R, d2)
    # keep every dilated ball inside the clip window
    ext = clip
    while ext > 0 and ext + float(big(ext)) > clip:
        ext -= R / 4
    if ext <= 0:
        ext = R / 4
    if region.dim == 1:
        centers = geo.center_grid(clip, geo.ThicknessDensity(R, delta), ext)
    else:
        g = np.linspace(-ext, ext, 7)
        centers = np.array([(x, y) for x in g for y in g])
    small = geo.thickness_profile(region, geo.ThicknessDensity(R, delta), centers)
    large = geo.thickness_profile(region, big, centers)
    return small, large, d2


def run_thickness_gallery(cfg, out: Outputs, threads: int):
    entries = _gallery_entries(cfg)
    clip = cfg.region.get("clip", 40.0)
    radii = cfg.grids.get("radii")
    if radii is None:
        radii = np.geomspace(1, clip / 2, 12)

    def one(entry):
        name, params, delta, R = entry
        region = geo.example_region(name, params, clip)
        if isinstance(region, geo.PlanarRegion):
            region = dataclasses.replace(region, samples=cfg.region.get("samples", 20000), seed=cfg.seed)
        small, large, d2 = _thickness_pair(region, delta, R, clip)
        dens = geo.liminf_density(region, radii)
        return name, delta, R, d2, small, large, dens

    with ThreadPoolExecutor(threads) as pool:
        results = list(pool.map(one, entries))
    rows, drows, ok = [], [], True
    for name, delta, R, d2, small, large, dens in results:
        holds = large.gamma >= small.gamma / 6 - 1e-12
        ok &= holds
        rows.append([name, delta, R, small.gamma, d2, 6 * R, large.gamma, int(holds)])
        drows += [[name, float(r), float(q), float(e)] for r, q, e in zip(dens.radii, dens.ratios, dens.stderr)]
    out.csv("thickness.csv", ["region", "delta", "R", "gamma", "delta_prime", "R_prime", "gamma_prime",
                              "surrogate_holds"], rows)
    out.csv("density.csv", ["region", "radius", "ratio", "stderr"], drows)
    return {"thickness_monotonicity": "PASS" if ok else "FAIL"}, {}


def run_bernstein(cfg, out: Outputs, threads: int):
    basis = _guard("operator", _basis, cfg)
    lam = cfg.grids.get("lambda")
    if lam is None:
        lam = basis.eigenvalues[: basis.reliability_index()]
    p_max, b_max = cfg.grids.get("p_max", 8), cfg.grids.get("beta_max", 8)
    fit = _guard("bernstein", bern.bernstein_check, basis.params, lam, p_max, b_max, basis=basis,
                 tol=cfg.tolerances.get("stability", 0.2))
    table = bern.weighted_norm_table(basis, lam, p_max, b_max)
    out.csv("weighted_norms.csv", ["lambda", "p", "beta", "value"], table.rows())
    out.json("bernstein_fit.json", {"C": fit.C, "C_half": fit.C_half, "eta_prime": fit.eta_prime,
                                    "max_violation": fit.max_violation, "verdict": fit.verdict,
                                    "p_max": p_max, "beta_max": b_max})
    return {"bernstein": fit.verdict}, {"reliability_index": basis.reliability_index()}


def run_smoothing(cfg, out: Outputs, threads: int):
    basis = _guard("operator", _basis, cfg)
    t = cfg.grids.get("t")
    if t is None:
        t = np.geomspace(1e-3, 1.0, 16)
    a_max = b_max = min(cfg.grids.get("p_max", 4), cfg.grids.get("beta_max", 4))
    tab = _guard("bernstein", bern.smoothing_check, basis, t, a_max, b_max,
                 tol=cfg.tolerances.get("stability", 0.2))
    out.csv("smoothing.csv", ["t", "C_t"], zip(tab.t, tab.C_t))
    return {"smoothing": tab.verdict}, {"reliability_index": basis.reliability_index(), "regime": tab.regime}


def _random_states(rng, n, count):
    f = rng.standard_normal((count, n))
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def run_control(cfg, out: Outputs, threads: int):
    basis = _guard("operator", _basis, cfg)
    region = build_region(cfg)
    nf = basis.reliability_index()
    nc = min(cfg.grids.get("n_control", 20), nf)
    T_grid = cfg.grids.get("T")
    if T_grid is None:
        T_grid = np.array([0.1, 1.0])
    tol = cfg.tolerances.get("residual", 1e-6)
    hum_tol = cfg.tolerances.get("hum_residual", 1e-8)
    max_cond = cfg.tolerances.get("max_cond", 1e12)
    rng = np.random.default_rng(cfg.seed)
    probes = _random_states(rng, nf, cfg.grids.get("n_probes", 10))
    base = _guard("control", ctl.ControlProblem, float(T_grid[0]), basis, region, probes[0], nc)

    diss = ctl.dissipation_check(basis, basis.eigenvalues[[1, nf // 4, nf // 2]], [0.01, 0.1, 1.0],
                                 probes, slack=cfg.tolerances.get("slack", 1e-12))

    def one(job):
        T, i = job
        prob = ctl.ControlProblem(float(T), basis, region, probes[i], nc, gram=base.gram, factor=base.factor)
        lr = ctl.lr_synthesize(prob, tol=tol, max_cond=max_cond)
        hum = ctl.hum_control(dataclasses.replace(prob), max_cond=max_cond)
        return T, i, lr, hum

    jobs = [(T, i) for T in T_grid for i in range(len(probes))]
    try:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, jobs))
    except ctl.ControlError as exc:
        raise ExperimentError("control", exc) from exc
    rows, lr_ok, hum_ok = [], True, True
    for T, i, lr, hum in results:
        hres = ctl.truncated_residual(hum, nc)
        lr_ok &= lr.residual <= tol * lr.f0_norm
        hum_ok &= hres <= hum_tol * hum.f0_norm
        rows.append([float(T), i, "lr", lr.residual, lr.cost, sum(p.kind == "active" for p in lr.phases)])
        rows.append([float(T), i, "hum", hres, hum.cost, 1])
        if i == 0:
            tag = f"T{float(T):g}"
            out.json(f"schedule_lr_{tag}.json", lr.to_dict())
            out.csv(f"trajectory_lr_{tag}.csv", ["t", "mode", "control_coefficient"], lr.trajectory_rows())
    out.csv("control_summary.csv", ["T", "probe", "method", "residual", "cost", "active_phases"], rows)
    verdicts = {"dissipation": diss.verdict, "lr_null_control": "PASS" if lr_ok else "FAIL",
                "hum_null_control": "PASS" if hum_ok else "FAIL"}
    return verdicts, {"reliability_index": nf, "n_control": nc}


def run_cost_blowup(cfg, out: Outputs, threads: int):
    basis = _guard("operator", _basis, cfg)
    region = build_region(cfg)
    nc = min(cfg.grids.get("n_control", 64), basis.reliability_index())
    T_grid = cfg.grids.get("T")
    if T_grid is None:
        T_grid = np.geomspace(0.05, 2.0, 12)
    eps = cfg.fit.get("eps", 0.05)
    prob = _guard("control", ctl.ControlProblem, float(T_grid[0]), basis, region, np.zeros(nc), nc)
    fit = _guard("control", ctl.cost_blowup_study, prob, T_grid, eps=eps, r2_min=cfg.tolerances.get("r2_min", 0.9))
    out.csv("observability.csv", ["T", "x", "C_obs", "log_C_obs"],
            ([float(T), float(T) ** -fit.power, float(c), math.log(c)] for T, c in zip(fit.T, fit.C_obs)))
    out.json("blowup_fit.json", {"power": fit.power, "slope": fit.slope, "intercept": fit.intercept,
                                 "r2": fit.r2, "tail_max": fit.tail_max, "median": fit.median,
                                 "verdict": fit.verdict, "eps": eps, "n_control": nc})
    return {"cost_blowup": fit.verdict}, {"reliability_index": basis.reliability_index(), "n_control": nc}


RUNNERS = {
    "spectrum": run_spectrum,
    "constant_sweep": run_constant_sweep,
    "thickness_gallery": run_thickness_gallery,
    "bernstein": run_bernstein,
    "smoothing": run_smoothing,
    "control": run_control,
    "cost_blowup": run_cost_blowup,
}

DESCRIPTIONS = {
    "spectrum": "eigenvalues of the anisotropic Shubin operator and the reliable range",
    "constant_sweep": "spectral-inequality constants C_lambda(omega) and the exponent boundedness test",
    "thickness_gallery": "thickness profiles and ball densities of the example regions",
    "bernstein": "weighted derivative norms on spectral subspaces and the fitted Bernstein constants",
    "smoothing": "short-time smoothing ratios of the fractional heat semigroup",
    "control": "dissipation check, Lebeau-Robbiano and HUM null-controls for random initial states",
    "cost_blowup": "observability constant versus horizon and the blow-up fit",
}


@dataclasses.dataclass
class RunManifest:
    config: dict
    tool_version: str
    reliability_index: int | None
    wall_time: float
    verdicts: dict
    files: list
    info: dict = dataclasses.field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(v == "FAIL" for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int | None = None) -> RunManifest:
    """Run one experiment; write its artifacts plus ``manifest.json`` (which lists every other file)."""
    root = Path(out_dir if out_dir is not None else cfg.output)
    out = Outputs(root)
    t0 = time.perf_counter()
    try:
        verdicts, info = RUNNERS[cfg.kind](cfg, out, _threads(threads))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(cfg.kind, exc) from exc
    wall = time.perf_counter() - t0
    bad = {k: v for k, v in verdicts.items() if v not in VERDICTS}
    if bad:
        raise RuntimeError(f"unknown verdicts {bad}")
    files = [{"path": p.relative_to(root).as_posix(), "sha256": _sha256(p), "bytes": p.stat().st_size}
             for p in sorted(out.files)]
    manifest = RunManifest(cfg.echo(), tool_version(), info.pop("reliability_index", None), wall,
                           dict(sorted(verdicts.items())), files, info)
    out.json("manifest.json", manifest.to_dict())
    return manifest
