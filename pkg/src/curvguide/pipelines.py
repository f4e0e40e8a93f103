"""Pipeline orchestration behind the command line.

Each pipeline writes its files into the run's output directory and returns
the scalars that go into ``manifest.json``.  ``run`` maps failures to exit
codes: 2 for configuration or assumption problems, 3 for solver failures.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import copy
import json
import logging
import math
import os
from pathlib import Path
import platform
import time

import numpy as np
import scipy

from . import __version__
from . import manufactured
from .config import ConfigError, RunConfig, build_config, get_path, load_config, set_path
from .errors import AssumptionError, GuideError, SolverError
from .fieldio import atomic_write_text, read_field, write_field, write_reconstruction_csv, write_rows_csv
from .geometry import check_injectivity, metric_factor, reference_curve_2d, reference_curve_3d
from .inverse import (
    discrimination_residual,
    reconstruct_from_eigenpair,
    reconstruct_from_poisson,
    select_branch,
)
from .operator import Field, assemble
from .profiles import CurvatureProfile, validate_assumptions
from .solve import discrete_threshold, eigenpairs, essential_spectrum_threshold, poisson_solve

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage
        self.exc = exc


class _Timer:
    def __init__(self):
        self.timings = {}

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, et, ev, tb):
                timer.timings[name] = time.perf_counter() - self.t0
                if ev is not None and not isinstance(ev, StageError):
                    raise StageError(name, ev) from ev
                return False

        return _Ctx()


def _versions() -> dict:
    return {
        "curvguide": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _assumption_gate(cfg: RunConfig, need_smoothness: int = 2):
    rep = validate_assumptions(cfg.profile, cfg.spec, need_smoothness)
    if not rep.geometry_ok:
        raise AssumptionError("; ".join(rep.notes))
    return rep


def pipeline_validate(cfg: RunConfig, out: Path, timer: _Timer) -> tuple[int, dict, list]:
    with timer.stage("assumptions"):
        rep = validate_assumptions(cfg.profile, cfg.spec)
    with timer.stage("injectivity"):
        inj_ok, approach = (False, 0.0)
        if rep.geometry_ok:
            inj_ok, approach = check_injectivity(cfg.spec, cfg.profile)
    report = rep.to_dict()
    report["injective"] = inj_ok
    report["self_approach"] = approach if math.isfinite(approach) else "inf"
    report["injectivity_method"] = "sampled cross-section distance scan (heuristic)"
    path = out / "validation.json"
    atomic_write_text(path, json.dumps(report, indent=2))
    status = EXIT_OK if (rep.ok and inj_ok) else EXIT_CONFIG
    scalars = {"assumptions_ok": rep.ok, "injective": inj_ok, "sup_gamma": rep.sup_gamma}
    if status != EXIT_OK:
        scalars["error"] = "; ".join(rep.notes) or "guide self-overlaps"
    return status, scalars, [path]


def _forward(cfg: RunConfig, timer: _Timer, m: int):
    with timer.stage("assemble"):
        _assumption_gate(cfg)
        A = assemble(cfg.grid, cfg.spec, cfg.profile)
    thr = essential_spectrum_threshold(cfg.spec)
    with timer.stage("eigensolve"):
        pairs = eigenpairs(A, m, cfg.opts, threshold=thr)
    return A, pairs, thr


def _eigen_outputs(cfg, out, pairs, thr):
    files = []
    for j, e in enumerate(pairs):
        files.append(write_field(out / f"phi_{j + 1}.fld", e.phi, eigenvalue=e.lam, residual=e.residual_norm))
    rows = [[j + 1, e.lam, e.residual_norm, e.iterations, e.near_threshold] for j, e in enumerate(pairs)]
    files.append(
        write_rows_csv(out / "eigenvalues.csv", ["index", "lambda", "residual", "iterations", "near_threshold"], rows)
    )
    scalars = {
        "lambda1": pairs[0].lam,
        "residual1": pairs[0].residual_norm,
        "threshold": thr,
        "discrete_threshold": discrete_threshold(cfg.grid),
        "below_threshold": pairs[0].lam < thr,
    }
    if len(pairs) > 1:
        scalars["gap"] = pairs[1].lam - pairs[0].lam
    return scalars, files


def pipeline_forward(cfg, out, timer):
    _, pairs, thr = _forward(cfg, timer, cfg.effective["n_eigs"])
    scalars, files = _eigen_outputs(cfg, out, pairs, thr)
    return EXIT_OK, scalars, files


def pipeline_inverse_eigen(cfg, out, timer):
    _, pairs, thr = _forward(cfg, timer, cfg.effective["n_eigs"])
    scalars, files = _eigen_outputs(cfg, out, pairs, thr)
    with timer.stage("reconstruct"):
        res = reconstruct_from_eigenpair(pairs[0], cfg.effective["mask_eps"], truth=cfg.profile)
        res = select_branch(res, cfg.effective["sign"])
    files.append(write_reconstruction_csv(out / "reconstruction.csv", res))
    scalars.update(_recon_scalars(res))
    return EXIT_OK, scalars, files


def _recon_scalars(res, prefix=""):
    d = res.diagnostics
    out = {prefix + "masked_nodes": res.n_masked}
    for key in ("max_rel_err", "median_rel_err", "max_abs_err"):
        if key in d:
            out[prefix + key] = d[key]
    if "negative_nodes" in d:
        out[prefix + "negative_nodes"] = len(d["negative_nodes"])
    return out


def pipeline_inverse_poisson(cfg, out, timer):
    eff = cfg.effective
    with timer.stage("assemble"):
        _assumption_gate(cfg, need_smoothness=5)
        A = assemble(cfg.grid, cfg.spec, cfg.profile)
    files, scalars = [], {}
    if eff["poisson"]["source"] == "file":
        path = eff["poisson"]["f_file"]
        if not path:
            raise ConfigError("required when source is 'file'", "poisson.f_file")
        f, _ = read_field(path)
        if f.grid != cfg.grid:
            raise ConfigError("field grid does not match the configured grid", "poisson.f_file")
        phi_exact = None
    else:
        phi_exact, f = manufactured.sample(cfg.grid, cfg.spec, cfg.profile)
    with timer.stage("poisson"):
        phi = poisson_solve(A, f, cfg.opts)
    scalars["poisson_relative_residual"] = float(np.linalg.norm(A.matrix @ phi.values - f.values) / np.linalg.norm(f.values))
    files.append(write_field(out / "phi.fld", phi))
    files.append(write_field(out / "f.fld", f))
    with timer.stage("reconstruct"):
        discrete = select_branch(
            reconstruct_from_poisson(phi, f, eff["mask_eps"], truth=cfg.profile), eff["sign"]
        )
        files.append(write_reconstruction_csv(out / "reconstruction_discrete.csv", discrete))
        scalars.update(_recon_scalars(discrete, "discrete_"))
        if phi_exact is not None:
            # the observation is the continuum solution itself, so the error
            # reflects the O(h^2) consistency of the centreline Laplacian
            cont = select_branch(
                reconstruct_from_poisson(phi_exact, f, eff["mask_eps"], truth=cfg.profile), eff["sign"]
            )
            files.append(write_reconstruction_csv(out / "reconstruction.csv", cont))
            scalars.update(_recon_scalars(cont))
            scalars["field_max_err"] = float(np.max(np.abs(phi.values - phi_exact.values)))
    return EXIT_OK, scalars, files


def _default_alternative(p: CurvatureProfile) -> CurvatureProfile:
    if p.family == "zero":
        return CurvatureProfile("gaussian", 0.1, 1.0)
    return CurvatureProfile(p.family, p.a + 0.1 * (1 if p.a >= 0 else -1), p.sigma, p.plateau, p.smoothness_class)


def pipeline_discriminate(cfg, out, timer):
    eff = cfg.effective
    disc = eff["discriminate"]
    alt = CurvatureProfile(**disc["alternative"]) if disc["alternative"] else _default_alternative(cfg.profile)
    M = disc["M"]
    if disc["source"] == "eigen":
        A, pairs, _ = _forward(cfg, timer, 1)
        phi = pairs[0].phi
        f = Field(cfg.grid, pairs[0].lam * phi.values)
        if M is None:
            M = pairs[0].lam
    else:
        with timer.stage("assemble"):
            _assumption_gate(cfg)
            A = assemble(cfg.grid, cfg.spec, cfg.profile)
        f = Field(cfg.grid, manufactured.exact_solution(cfg.spec, *cfg.grid.mesh()).ravel())
        with timer.stage("poisson"):
            phi = poisson_solve(A, f, cfg.opts)
    with timer.stage("discriminate"):
        rep = discrimination_residual(cfg.spec, cfg.profile, alt, phi, f, M)
    scalars = {
        "residual_matched": rep.residual_matched,
        "residual_alternative": rep.residual_alternative,
        "ratio": rep.ratio,
        "alternative": alt.to_dict(),
        "M": M,
        "m_bound_ok": rep.m_bound_ok if M is not None else None,
    }
    path = out / "discrimination.json"
    atomic_write_text(path, json.dumps(scalars, indent=2))
    return EXIT_OK, scalars, [path]


PIPELINE_FUNCS = {
    "validate": pipeline_validate,
    "forward": pipeline_forward,
    "inverse-eigen": pipeline_inverse_eigen,
    "inverse-poisson": pipeline_inverse_poisson,
    "discriminate": pipeline_discriminate,
}


def execute(cfg: RunConfig, pipeline: str | None = None, out: str | Path | None = None) -> tuple[int, dict]:
    """Run one pipeline on a built config; always writes a manifest."""
    pipeline = pipeline or cfg.pipeline
    cfg.effective["pipeline"] = pipeline
    out = Path(out) if out is not None else cfg.out_dir
    cfg.effective["output"] = str(out)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    manifest = {"pipeline": pipeline, "config": cfg.effective, "versions": _versions()}
    try:
        status, scalars, files = PIPELINE_FUNCS[pipeline](cfg, out, timer)
    except StageError as err:
        exc = err.exc
        if isinstance(exc, (ConfigError, AssumptionError)) or (
            isinstance(exc, GuideError) and not isinstance(exc, SolverError)
        ):
            status = EXIT_CONFIG
        elif isinstance(exc, (SolverError, ValueError)):
            status = EXIT_SOLVER
        else:
            raise exc
        scalars = {"error": str(exc), "stage": err.stage}
        files = []
    except (ConfigError, AssumptionError) as exc:
        status, scalars, files = EXIT_CONFIG, {"error": str(exc)}, []
    manifest.update(
        status=status,
        timings=timer.timings,
        scalars=_jsonable(scalars),
        outputs=[str(Path(f).name) for f in files] + ["manifest.json"],
    )
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return status, manifest


def run(config_path, pipeline: str | None = None, out=None, overrides: dict | None = None) -> tuple[int, dict]:
    """Load ``config_path`` and run the pipeline; config errors give status 2."""
    try:
        cfg = load_config(config_path, overrides)
    except (ConfigError, OSError) as exc:
        return EXIT_CONFIG, {"status": EXIT_CONFIG, "scalars": {"error": str(exc)}}
    return execute(cfg, pipeline, out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def geometry_dump(cfg: RunConfig, path, n_samples: int | None = None) -> Path:
    """CSV of the reference curve: s, Gamma_x, Gamma_y[, Gamma_z], theta, jacobian.

    ``theta`` is the tangent angle in 2D and the Tang rotation angle in 3D;
    ``jacobian`` is the smallest Jacobian over the cross-section edge at s.
    """
    spec, p = cfg.spec, cfg.profile
    n = n_samples or cfg.grid.n_s + 2
    s = np.linspace(-spec.L, spec.L, n)
    if spec.dim == 2:
        curve = reference_curve_2d(p, s)
        jac = 1.0 - 0.5 * spec.d * np.abs(np.asarray(p(s)))
        cols = ["s", "Gamma_x", "Gamma_y", "theta", "jacobian"]
    else:
        curve = reference_curve_3d(p, spec.torsion, s)
        corners = [(sx * 0.5 * spec.d2, sy * 0.5 * spec.d3) for sx in (-1, 1) for sy in (-1, 1)]
        jac = np.min([metric_factor(spec, p, s, c, check=False).jacobian for c in corners], axis=0)
        cols = ["s", "Gamma_x", "Gamma_y", "Gamma_z", "theta", "jacobian"]
    rows = [[s[i], *curve.Gamma[i], curve.theta[i], jac[i]] for i in range(n)]
    return write_rows_csv(path, cols, rows)


def _sweep_one(args):
    raw, axis, value, out = args
    raw = copy.deepcopy(raw)
    set_path(raw, axis, value)
    if axis == "grid.n_s":
        base = raw["_base_grid"]
        ratio = (value + 1) / (base["n_s"] + 1)
        raw["grid"]["n_u"] = int(round((base["n_u"] + 1) * ratio)) - 1
        if raw["grid"]["n_u"] % 2 == 0:
            raw["grid"]["n_u"] += 1
    raw.pop("_base_grid", None)
    try:
        cfg = build_config(raw)
    except ConfigError as exc:
        return value, EXIT_CONFIG, {"scalars": {"error": str(exc)}}
    status, manifest = execute(cfg, None, out)
    return value, status, manifest


def sweep(config_path, axis: str, values, out=None, pipeline: str | None = None,
          workers: int | None = None) -> tuple[int, list[dict]]:
    """Independent runs over ``values`` of the dotted config key ``axis``.

    Writes ``sweep.csv`` (value, status, lambda1, max_rel_err) into ``out``.
    For ``grid.n_s`` the transverse count scales proportionally and the
    observed convergence order of lambda1 is recorded from the first three
    values.
    """
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return EXIT_CONFIG, [{"scalars": {"error": f"config error: {exc}"}}]
    if pipeline:
        raw["pipeline"] = pipeline
    if raw.get("pipeline", "forward") == "validate":
        raw["pipeline"] = "forward"
    out = Path(out or raw.get("output", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        get_path(build_config(copy.deepcopy(raw)).effective, axis)
    except ConfigError as exc:
        return EXIT_CONFIG, [{"scalars": {"error": str(exc)}}]
    except KeyError:
        return EXIT_CONFIG, [{"scalars": {"error": f"{axis}: unknown config path"}}]
    raw["_base_grid"] = dict(raw["grid"])
    jobs = [(raw, axis, v, out / f"run_{i:03d}") for i, v in enumerate(values)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) < 2:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    rows, manifests = [], []
    # pool.map keeps submission order, so the aggregate is reproducible
    for value, status, manifest in results:
        sc = manifest.get("scalars", {})
        rows.append([value, status, sc.get("lambda1", math.nan), sc.get("max_rel_err", math.nan)])
        manifests.append(manifest)
    write_rows_csv(out / "sweep.csv", ["value", "status", "lambda1", "max_rel_err"], rows)
    summary = {"axis": axis, "values": list(values), "statuses": [r[1] for r in rows]}
    lams = [r[2] for r in rows]
    if axis == "grid.n_s" and len(values) >= 3 and all(math.isfinite(x) for x in lams[:3]):
        summary["observed_order"] = observed_order(lams[:3], values[:3])
    summary["monotone_decreasing"] = bool(all(a > b for a, b in zip(lams, lams[1:]))) if lams else None
    atomic_write_text(out / "sweep.json", json.dumps(_jsonable(summary), indent=2))
    return EXIT_OK, manifests


def observed_order(vals, n_s_values) -> float:
    """Richardson order estimate from three nested grids (coarse to fine)."""
    r = (n_s_values[1] + 1) / (n_s_values[0] + 1)
    d1 = vals[0] - vals[1]
    d2 = vals[1] - vals[2]
    return math.log(abs(d1 / d2)) / math.log(r)
