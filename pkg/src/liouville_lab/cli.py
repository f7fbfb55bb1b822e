"""Command line runner: one JSON config in, one report directory out.

    liouville-lab --config run.json [--seed S] [--threads N] [--out DIR] [--dry-run]
    liouville-lab summarize report1.json report2.json ... [--out DIR]
    liouville-lab schema

Exit codes: 0 all tolerance gates passed, 1 a gate failed (named on
stderr), 2 invalid config or usage, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io as lio
from . import rng as _rng
from .chaos import conformal_check, gmc_measure
from .errors import ConfigurationError, DomainError, NumericalError, UsageError
from .geometry import InsertionSet, LftParams, MetricTensor, build_lattice, mobius
from .gff import covariance_panel, disk_spectrum, sample_exact
from .semiclassics import (ExperimentReport, convergence_in_probability, default_pair_panel,
                           fluctuation_covariance_test, heavy_insertion_suite, kpz_exponent,
                           kpz_rescaling_identity, laplace_ldp_check, partition_asymptotics)
from .solver import SolverConfig, legendre_check, radial_solution, solve_liouville
from .spectra import (default_mode_count, exact_log_fluctuation_constant, fluctuation_constant,
                      weighted_eigs, wick_square_functional)

log = logging.getLogger("liouville_lab")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

EXPERIMENTS = ("solve", "gff-cov", "chaos-mass", "spectrum", "partition", "convergence",
               "fluctuations", "ldp", "insertions", "kpz", "conformal-check")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_gamma = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2,
          "description": "coupling, must satisfy 0 < gamma < 2"}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "liouville-lab run config",
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "h": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "gamma": _gamma,
        "gammas": {"type": "array", "items": _gamma, "minItems": 1},
        "Lambda": {"type": "number", "minimum": 0},
        "mu": {"type": "number", "minimum": 0},
        "metric": {"enum": ["flat", "hyperbolic"]},
        "insertions": {"type": "array", "items": {
            "type": "object", "required": ["z", "chi"], "additionalProperties": False,
            "properties": {"z": _point, "chi": {"type": "number", "exclusiveMinimum": 0,
                                                "exclusiveMaximum": 2}}}},
        "n_samples": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "eigen_count": {"type": "integer", "minimum": 1},
        "jmax": {"type": "integer", "minimum": 1},
        "pairs": {"type": "integer", "minimum": 1},
        "alpha": _num,
        "alphas": {"type": "array", "items": _num, "minItems": 1},
        "L": _pos,
        "mobius_a": _point,
        "f_mode": {"type": "integer", "minimum": 0},
        "f_amplitude": _num,
        "legendre_modes": {"type": "integer", "minimum": 1},
        "subsample": {"type": "integer", "minimum": 1},
        "solver_tolerance": _pos,
        "bias_budget": {"type": "number", "minimum": 0},
        "tolerance": {"type": "number", "minimum": 0},
        "tolerance_constant": {"type": "number", "minimum": 0},
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "solve": {"h": 1 / 64, "Lambda": 2 / np.pi**2, "metric": "flat", "tolerance": 5e-3},
    "gff-cov": {"h": 1 / 64, "n_samples": 10000, "pairs": 50, "tolerance": 0.99},
    "chaos-mass": {"h": 1 / 64, "gammas": [0.5, 1.0, 1.4], "n_samples": 10000},
    "spectrum": {"h": 1 / 64, "Lambda": 0.1, "alpha": 0.2, "n_samples": 100000, "tolerance": 0.05},
    "partition": {"h": 1 / 64, "Lambda": 2 / np.pi**2, "gammas": [0.4, 0.3, 0.2],
                  "n_samples": 10000, "tolerance": 0.05, "tolerance_constant": 0.10},
    "convergence": {"h": 1 / 64, "Lambda": 2 / np.pi**2, "gammas": [0.4, 0.3, 0.2],
                    "n_samples": 2000, "jmax": 64},
    "fluctuations": {"h": 1 / 64, "Lambda": 0.2, "gamma": 0.2, "n_samples": 10000, "pairs": 20,
                     "tolerance": 0.10},
    "ldp": {"h": 1 / 64, "Lambda": 0.2, "gammas": [0.4, 0.3, 0.2], "n_samples": 4000,
            "f_mode": 1, "f_amplitude": 1.0, "legendre_modes": 16, "tolerance": 0.05},
    "insertions": {"h": 1 / 64, "Lambda": 0.1, "gammas": [0.4, 0.3, 0.2], "n_samples": 4000,
                   "insertions": [{"z": [0.0, 0.0], "chi": 1.0}], "tolerance": 0.05},
    "kpz": {"h": 1 / 64, "gamma": 1.0, "alphas": [0.5, 1.0], "L": 2.7},
    "conformal-check": {"h": 1 / 64, "gamma": 0.5, "mobius_a": [0.3, 0.0], "n_samples": 16,
                        "subsample": 4, "tolerance": 0.03},
}
GAMMA_LIMITS = {"partition": 0.6, "convergence": 0.6, "fluctuations": 0.6, "ldp": 0.6,
                "insertions": 0.6}


# ---------------------------------------------------------------- config

def _line_of(text: str, path) -> int | None:
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _schema_message(err, text) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    line = _line_of(text, list(err.absolute_path))
    hint = err.schema.get("description", "") if isinstance(err.schema, dict) else ""
    msg = f"config field '{where}'"
    if line:
        msg += f" (line {line})"
    msg += f": {err.message}"
    if hint:
        msg += f" [{hint}]"
    return msg


def load_config(path, seed=None) -> dict:
    """Read, schema-check and resolve a run config; raises ConfigurationError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: line {exc.lineno} column {exc.colno}: "
                                 f"{exc.msg}") from exc
    return resolve_config(raw, seed=seed, text=text)


def resolve_config(raw: dict, seed=None, text: str = "") -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        raise ConfigurationError("; ".join(_schema_message(e, text) for e in errors))
    exp = raw["experiment"]
    cfg = dict(DEFAULTS[exp])
    cfg.update(raw)
    if seed is not None:
        if not (0 <= seed < 2**64):
            raise ConfigurationError(f"--seed must be an unsigned 64-bit integer, got {seed}")
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)

    if "gamma" in raw and "gammas" in raw:
        raise ConfigurationError("give either 'gamma' or 'gammas', not both")
    if exp in ("partition", "convergence", "ldp", "insertions", "chaos-mass") and "gamma" in raw:
        cfg["gammas"] = [raw["gamma"]]
        cfg.pop("gamma", None)
    if "mu" in raw:
        if "Lambda" in raw:
            raise ConfigurationError("give either 'Lambda' or 'mu', not both")
        g = cfg.get("gamma") or (cfg.get("gammas") or [None])[0]
        if g is None:
            raise ConfigurationError("'mu' needs a gamma to fix Lambda = mu * gamma^2")
        cfg["Lambda"] = LftParams(g, raw["mu"]).Lambda
        cfg.pop("mu")
    # module-level constraints, checked before any compute
    for g in cfg.get("gammas", []) + ([cfg["gamma"]] if "gamma" in cfg else []):
        LftParams.from_lambda(g, cfg.get("Lambda", 0.0))
    if exp in GAMMA_LIMITS:
        gl = cfg.get("gammas", [cfg.get("gamma")])
        if max(gl) > GAMMA_LIMITS[exp]:
            raise ConfigurationError(f"'{exp}' supports gamma <= {GAMMA_LIMITS[exp]}, got {max(gl)}")
        if "gammas" in cfg and list(cfg["gammas"]) != sorted(cfg["gammas"], reverse=True):
            raise ConfigurationError("'gammas' must be strictly descending")
        if len(set(cfg.get("gammas", []))) != len(cfg.get("gammas", [])):
            raise ConfigurationError("'gammas' must be strictly descending")
    if cfg.get("metric") == "hyperbolic" and cfg.get("insertions"):
        raise ConfigurationError("insertions are only supported on the flat background")
    for item in cfg.get("insertions", []):
        if np.hypot(*item["z"]) >= 1:
            raise ConfigurationError(f"insertion point {item['z']} is not inside the unit disk")
    if "mobius_a" in cfg and np.hypot(*cfg["mobius_a"]) >= 1:
        raise ConfigurationError("'mobius_a' must lie inside the unit disk")
    if exp == "spectrum" and cfg["alpha"] < 0:
        raise ConfigurationError("'alpha' must be >= 0")
    if exp == "kpz" and "alphas" in cfg:
        for a in cfg["alphas"]:
            if not (0 <= a < 2):
                raise ConfigurationError(f"kpz weights must satisfy 0 <= alpha < 2, got {a}")
    return cfg


def derived_quantities(cfg: dict) -> dict:
    """Cheap quantities printed by ``--dry-run``."""
    lat = build_lattice(cfg["h"])
    out = {"experiment": cfg["experiment"], "h": cfg["h"], "nodes": lat.n, "seed": cfg["seed"]}
    gammas = cfg.get("gammas") or ([cfg["gamma"]] if "gamma" in cfg else [])
    if "Lambda" in cfg:
        out["Lambda"] = cfg["Lambda"]
    if gammas:
        out["Q"] = {str(g): 2 / g + g / 2 for g in gammas}
        if "Lambda" in cfg:
            out["mu"] = {str(g): cfg["Lambda"] / g**2 for g in gammas}
    out["eigen_count"] = cfg.get("eigen_count", default_mode_count(lat))
    if "n_samples" in cfg:
        out["n_samples"] = cfg["n_samples"]
    return out


# ---------------------------------------------------------------- runners

def _insertions(cfg) -> InsertionSet:
    items = cfg.get("insertions") or []
    return InsertionSet.of(*[(tuple(i["z"]), i["chi"]) for i in items])


def _run_solve(cfg, lat, threads, art):
    ins = _insertions(cfg)
    metric = MetricTensor.hyperbolic(lat) if cfg["metric"] == "hyperbolic" else None
    scfg = SolverConfig(tolerance=cfg.get("solver_tolerance", 1e-10))
    sol = solve_liouville(lat, cfg["Lambda"], metric=metric, ins=ins, cfg=scfg)
    rep = ExperimentReport("solve", {"h": lat.h, "nodes": lat.n, "Lambda": cfg["Lambda"],
                                     "metric": cfg["metric"], "insertions": cfg.get("insertions", [])})
    rep.estimates = sol.manifest()
    rep.estimates["free_energy"] = -sol.energy
    rep.check("residual", sol.residual_norm, 0.0, scfg.tolerance, sol.residual_norm <= scfg.tolerance)
    axis = np.abs(lat.points[:, 1]) < 1e-12
    order = np.argsort(lat.points[axis, 0])
    prof = {"x": lat.points[axis, 0][order], "U": sol.U[axis][order]}
    if cfg["metric"] == "flat" and not ins:
        ref = radial_solution(lat.points, cfg["Lambda"])
        err = float(np.abs(sol.U - ref).max())
        rep.estimates["linf_error_vs_radial"] = err
        rep.references["radial"] = "2 ln((1 - a) / (1 - a |x|^2)) with pi^2 Lambda = a / (1 - a)^2"
        rep.check("linf_error_vs_radial", err, 0.0, cfg["tolerance"], err <= cfg["tolerance"])
        prof["radial"] = ref[axis][order]
    rep.table = [dict(zip(prof, vals)) for vals in zip(*prof.values())]
    art["fields"]["U"] = sol.U
    art["fields"]["regular_part"] = sol.regular_part
    art["traces"]["objective_trace"] = [{"iteration": k, "objective": v}
                                        for k, v in enumerate(sol.objective_trace)]
    return rep


def _run_gff_cov(cfg, lat, threads, art):
    i0, j0 = lat.nearest_node((0.0, 0.0)), lat.nearest_node((0.5, 0.0))
    panel = default_pair_panel(lat, cfg["pairs"], seed=12345, sep=(0.05, 0.5), rmax=0.6)
    pairs = np.vstack([[i0, j0], panel])
    res = covariance_panel(lat, pairs, cfg["n_samples"], seed=cfg["seed"], threads=threads)
    nodes = res["nodes"]
    G = lat.green_columns(nodes)[nodes]
    loc = {int(v): k for k, v in enumerate(nodes)}
    ref = np.array([G[loc[int(a)], loc[int(b)]] for a, b in pairs])
    z = np.abs(res["cov"] - ref) / res["se"]
    rep = ExperimentReport("gff-cov", {"h": lat.h, "nodes": lat.n, "n_samples": cfg["n_samples"],
                                       "seed": cfg["seed"], "pairs": len(panel)})
    for k, (a, b) in enumerate(pairs):
        rep.table.append({"i": int(a), "j": int(b), "x": lat.points[a].tolist(),
                          "y": lat.points[b].tolist(), "empirical": res["cov"][k], "se": res["se"][k],
                          "green": ref[k], "z_score": z[k]})
    frac = float(np.mean(z[1:] <= 3))
    zc = abs(res["cov"][0] - np.log(2)) / res["se"][0]
    rep.estimates = {"cov_center_half": res["cov"][0], "se_center_half": res["se"][0],
                     "fraction_within_3se": frac}
    rep.references = {"center_half": "ln 2 = G((0,0), (0.5,0))", "panel": "discrete Green matrix"}
    rep.check("cov_center_half_vs_ln2", float(res["cov"][0]), float(np.log(2)), 3.0, zc <= 3,
              "within 3 SE")
    rep.check("panel_within_3se", frac, cfg["tolerance"], None, frac >= cfg["tolerance"])
    return rep


def _run_chaos_mass(cfg, lat, threads, art):
    gammas = cfg["gammas"]
    bias = cfg.get("bias_budget", 2 * np.pi * lat.h)

    def work(start, size):
        X = sample_exact(lat, seed=cfg["seed"], size=size, start=start)
        X.variance_source = lat.green_diagonal
        return np.column_stack([gmc_measure(X, g).total_mass for g in gammas])

    mass = np.concatenate(_rng.map_batches(work, cfg["n_samples"], threads))
    rep = ExperimentReport("chaos-mass", {"h": lat.h, "nodes": lat.n, "gammas": gammas,
                                          "n_samples": cfg["n_samples"], "seed": cfg["seed"]})
    rep.references = {"mass": "2 pi / (2 + gamma^2)", "bias_budget": "2 pi h unless configured"}
    for k, g in enumerate(gammas):
        m, se = float(mass[:, k].mean()), float(mass[:, k].std(ddof=1) / np.sqrt(len(mass)))
        ref = 2 * np.pi / (2 + g**2)
        rep.table.append({"gamma": g, "mean": m, "se": se, "reference": ref,
                          "abs_gap": abs(m - ref), "allowed": 3 * se + bias})
        rep.check(f"mass_gamma_{g}", m, ref, 3 * se + bias, abs(m - ref) <= 3 * se + bias,
                  "3 SE + bias budget")
    return rep


def _run_spectrum(cfg, lat, threads, art):
    Lambda, alpha = cfg["Lambda"], cfg["alpha"]
    sol = solve_liouville(lat, Lambda)
    k = cfg.get("eigen_count", default_mode_count(lat))
    spec = weighted_eigs(lat, sol.U, k)
    fc = fluctuation_constant(spec, alpha)

    def work(start, size):
        return np.exp(-alpha * wick_square_functional(spec, seed=cfg["seed"], size=size, start=start))

    vals = np.concatenate(_rng.map_batches(work, cfg["n_samples"], threads))
    est, se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))
    rel = abs(est - fc["Z"]) / fc["Z"]
    rep = ExperimentReport("spectrum", {"h": lat.h, "nodes": lat.n, "Lambda": Lambda, "alpha": alpha,
                                        "eigen_count": k, "n_samples": cfg["n_samples"],
                                        "seed": cfg["seed"]})
    rep.estimates = {"mc_estimate": est, "mc_se": se, "product_formula": fc["Z"],
                     "log_product": fc["log_Z"], "tail_estimate": fc["tail_estimate"],
                     "all_mode_log_Z": exact_log_fluctuation_constant(lat, sol.U, alpha),
                     "weyl_slope": spec.weyl_slope, "normalization_residual": spec.normalization_residual,
                     "mass": fc["mass"], "relative_error": rel}
    rep.references = {"product": "prod_j sqrt(lambda_j / (lambda_j + 2 alpha)) exp(alpha / lambda_j)",
                      "weyl_slope": "2 / pi for the unit disk"}
    rep.table = [{"j": j + 1, "eigenvalue": lam, "log_factor": t}
                 for j, (lam, t) in enumerate(zip(spec.eigenvalues, fc["terms"]))]
    rep.check("mc_vs_product", rel, 0.0, cfg["tolerance"], rel <= cfg["tolerance"])
    return rep


def _run_partition(cfg, lat, threads, art):
    return partition_asymptotics(lat, cfg["Lambda"], cfg["gammas"], cfg["n_samples"], cfg["seed"],
                                 _insertions(cfg), threads, tol_rel=cfg["tolerance"],
                                 tol_const=cfg["tolerance_constant"])


def _run_convergence(cfg, lat, threads, art):
    return convergence_in_probability(lat, cfg["Lambda"], cfg["gammas"], cfg["n_samples"],
                                      cfg["seed"], _insertions(cfg), threads, jmax=cfg["jmax"])


def _run_fluctuations(cfg, lat, threads, art):
    pairs = default_pair_panel(lat, cfg["pairs"])
    return fluctuation_covariance_test(lat, cfg["Lambda"], cfg["gamma"], cfg["n_samples"],
                                       cfg["seed"], pairs, _insertions(cfg), threads,
                                       tol_mean_rel=cfg["tolerance"])


def _run_ldp(cfg, lat, threads, art):
    ins = _insertions(cfg)
    basis = disk_spectrum(lat, max(cfg["legendre_modes"], cfg["f_mode"] + 1))
    f = cfg["f_amplitude"] * basis.vectors[:, cfg["f_mode"]]
    base = solve_liouville(lat, cfg["Lambda"], ins=ins)
    rep = laplace_ldp_check(lat, cfg["Lambda"], f, cfg["gammas"], cfg["n_samples"], cfg["seed"],
                            ins, threads, tol_rel=cfg["tolerance"], solution=base)
    pert = solve_liouville(lat, cfg["Lambda"], f=f, ins=ins, initial=base.regular_part)
    leg = legendre_check(lat, pert.U - base.U, cfg["Lambda"], cfg["legendre_modes"], ins,
                         basis, base)
    rep.params.update(f_mode=cfg["f_mode"], f_amplitude=cfg["f_amplitude"])
    rep.estimates["legendre"] = {k: v for k, v in leg.items() if k != "coefficients"}
    rep.check("legendre_gap", leg["relative_gap"], 0.0, 0.01, leg["relative_gap"] <= 0.01)
    return rep


def _run_insertions(cfg, lat, threads, art):
    return heavy_insertion_suite(lat, cfg["Lambda"], _insertions(cfg), cfg["gammas"],
                                 cfg["n_samples"], cfg["seed"], threads, tol_rel=cfg["tolerance"])


def _run_kpz(cfg, lat, threads, art):
    X = sample_exact(lat, seed=cfg["seed"])
    X.variance_source = lat.green_diagonal
    alphas = cfg["alphas"]
    angle = np.mod(np.arctan2(lat.points[:, 1], lat.points[:, 0]), 2 * np.pi)
    sector = np.minimum((angle / (2 * np.pi) * len(alphas)).astype(int), len(alphas) - 1)
    sets = [sector == k for k in range(len(alphas))]
    rep = kpz_rescaling_identity(lat, cfg["gamma"], alphas, sets, cfg["L"], X)
    g = cfg["gamma"]
    e = kpz_exponent(g, [g])
    rep.estimates["exponent_single_gamma_insertion"] = e
    rep.check("exponent_single_gamma_insertion", e, -1.0, 1e-12, abs(e + 1) <= 1e-12)
    return rep


def _run_conformal(cfg, lat, threads, art):
    psi = mobius(tuple(cfg["mobius_a"]))
    X = sample_exact(lat, seed=cfg["seed"], size=cfg["n_samples"])
    X.variance_source = lat.green_diagonal
    res = conformal_check(X, cfg["gamma"], psi, subsample=cfg["subsample"])
    rep = ExperimentReport("conformal-check", {"h": lat.h, "nodes": lat.n, "gamma": cfg["gamma"],
                                               "mobius_a": cfg["mobius_a"], "n_samples": cfg["n_samples"],
                                               "seed": cfg["seed"], "subsample": cfg["subsample"]})
    for r in res["regions"]:
        for k in range(len(r["relative_error"])):
            rep.table.append({"region": r["region"], "replica": k, "target_mass": r["target_mass"][k],
                              "pushforward_mass": r["pushforward_mass"][k],
                              "relative_error": r["relative_error"][k]})
    rep.estimates = {"max_relative_error": res["max_relative_error"],
                     "max_total_relative_error": float(np.max(res["total_relative_error"]))}
    rep.references = {"pushforward": "image of the pulled-back chaos measure under the Mobius map"}
    rep.check("region_masses", res["max_relative_error"], 0.0, cfg["tolerance"],
              res["max_relative_error"] <= cfg["tolerance"])
    return rep


RUNNERS = {
    "solve": _run_solve, "gff-cov": _run_gff_cov, "chaos-mass": _run_chaos_mass,
    "spectrum": _run_spectrum, "partition": _run_partition, "convergence": _run_convergence,
    "fluctuations": _run_fluctuations, "ldp": _run_ldp, "insertions": _run_insertions,
    "kpz": _run_kpz, "conformal-check": _run_conformal,
}


# ---------------------------------------------------------------- persistence

def _git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             timeout=10, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def report_payload(cfg: dict, rep: ExperimentReport) -> dict:
    """The hashed report body: config echo and results, no timestamps."""
    body = {k: v for k, v in cfg.items() if k != "out"}
    return {"schema_version": SCHEMA_VERSION, "experiment": rep.experiment, "config": body,
            "result": rep.to_dict()}


def run_experiment(cfg: dict, threads: int = 1):
    """Run a resolved config; returns ``(report, artifacts)``."""
    lat = build_lattice(cfg["h"])
    art = {"fields": {}, "traces": {}}
    rep = RUNNERS[cfg["experiment"]](cfg, lat, threads, art)
    art["lattice"] = lat
    return rep, art


def write_artifacts(out: Path, cfg: dict, rep: ExperimentReport, art: dict, threads: int,
                    wall: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lio.write_json(out / "report.json", report_payload(cfg, rep))
    if rep.table:
        lio.write_table_csv(out / "table.csv", rep.table)
    for name, rows in art["traces"].items():
        lio.write_table_csv(out / f"{name}.csv", rows)
    for name, values in art["fields"].items():
        lio.write_field_csv(out / f"{name}.csv", art["lattice"], values)
        lio.write_field_binary(out / f"{name}.bin", art["lattice"], values)
    lio.write_json(out / "manifest.json", {
        "schema_version": SCHEMA_VERSION, "package_version": __version__,
        "git_revision": _git_revision(), "seed": cfg["seed"], "threads": threads,
        "wall_time_seconds": round(wall, 3), "experiment": cfg["experiment"],
        "files": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    })


# ---------------------------------------------------------------- summarize

TREND_COLUMNS = {"partition": "abs_gap", "convergence": "median_hminus1", "ldp": "rel_gap",
                 "chaos-mass": None}


def report_summarize(paths) -> dict:
    """Merge report tables; recompute pass/fail and, for gamma sweeps, a monotone-trend verdict."""
    paths = list(paths)
    if not paths:
        raise UsageError("report_summarize needs at least one report file")
    reports = []
    for p in paths:
        try:
            doc = lio.read_json(p)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read report {p}: {exc}") from exc
        if "result" not in doc or "experiment" not in doc:
            raise UsageError(f"{p} is not a liouville-lab report")
        reports.append((str(p), doc))
    kinds = {d["experiment"] for _, d in reports}
    if len(kinds) > 1:
        raise UsageError(f"cannot merge different experiments: {sorted(kinds)}")
    exp = kinds.pop()
    rows, columns, failed = [], ["source"], []
    for p, doc in reports:
        for c in doc["result"]["checks"]:
            if not c["passed"]:
                failed.append(f"{p}:{c['name']}")
        for r in doc["result"]["table"]:
            rows.append({"source": p, **r})
            columns += [k for k in r if k not in columns]
    verdict = None
    key = TREND_COLUMNS.get(exp)
    if len(reports) == 1:
        pass
    elif key and rows and all("gamma" in r and key in r for r in rows):
        ordered = sorted(rows, key=lambda r: -r["gamma"])
        vals = [r[key] for r in ordered]
        verdict = {"column": key, "gammas": [r["gamma"] for r in ordered], "values": vals,
                   "monotone": all(b <= a for a, b in zip(vals, vals[1:]))}
        rows = ordered
    passed = not failed and (verdict is None or verdict["monotone"])
    return {"experiment": exp, "columns": columns, "rows": rows, "failed_checks": failed,
            "trend": verdict, "passed": passed, "sources": [p for p, _ in reports]}


def format_summary(summary: dict) -> str:
    cols = [c for c in summary["columns"] if all(not isinstance(r.get(c), (list, dict))
                                                 for r in summary["rows"])]
    lines = [f"experiment: {summary['experiment']}  reports: {len(summary['sources'])}"]

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return "" if v is None else str(v)

    table = [[fmt(r.get(c)) for c in cols] for r in summary["rows"]]
    widths = [max([len(c)] + [len(t[i]) for t in table]) for i, c in enumerate(cols)]
    lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    lines += ["  ".join(v.ljust(w) for v, w in zip(t, widths)) for t in table]
    if summary["trend"]:
        t = summary["trend"]
        lines.append(f"trend of {t['column']} over descending gamma: "
                     f"{'monotone' if t['monotone'] else 'NOT monotone'}")
    for f in summary["failed_checks"]:
        lines.append(f"failed: {f}")
    lines.append("PASS" if summary["passed"] else "FAIL")
    return "\n".join(lines)


# ---------------------------------------------------------------- entry points

def _run_parser():
    p = argparse.ArgumentParser(prog="liouville-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides the config")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replicas")
    p.add_argument("--out", help="output directory (default runs/<experiment>)")
    p.add_argument("--dry-run", action="store_true", help="validate and print derived quantities")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _summarize_main(argv) -> int:
    p = argparse.ArgumentParser(prog="liouville-lab summarize")
    p.add_argument("reports", nargs="*")
    p.add_argument("--out", help="directory for summary.csv and summary.txt")
    args = p.parse_args(argv)
    try:
        s = report_summarize(args.reports)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = format_summary(s)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lio.write_table_csv(out / "summary.csv", s["rows"], s["columns"])
        (out / "summary.txt").write_text(text + "\n")
        lio.write_json(out / "summary.json", {k: v for k, v in s.items() if k != "rows"})
    return EXIT_OK if s["passed"] else EXIT_GATE


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "summarize":
        return _summarize_main(argv[1:])
    if argv and argv[0] == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    if argv and argv[0] == "run":
        argv = argv[1:]
    try:
        args = _run_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = load_config(args.config, seed=args.seed)
        if args.dry_run:
            print(json.dumps(lio.to_jsonable(derived_quantities(cfg)), indent=2, sort_keys=True))
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.get("out") or Path("runs") / cfg["experiment"])
    t0 = time.perf_counter()
    try:
        rep, art = run_experiment(cfg, args.threads)
    except (ConfigurationError, DomainError, UsageError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        diag = getattr(exc, "diagnostics", {})
        print(f"numerical failure in {type(exc).__module__}: {exc} {json.dumps(lio.to_jsonable(diag))}",
              file=sys.stderr)
        return EXIT_NUMERIC
    write_artifacts(out, cfg, rep, art, args.threads, time.perf_counter() - t0)
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    print(f"report: {out / 'report.json'}")
    if not rep.passed:
        print(f"tolerance gate failed: {', '.join(rep.failed())}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
