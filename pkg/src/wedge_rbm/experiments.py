"""Experiment orchestration: estimator runners, artifact export, presets.

Every artifact is written deterministically (sorted keys, shortest
round-trip float representation, no timestamps), so re-running an experiment
with the same spec reproduces each output byte for byte.  Statistical trend
verdicts are reported but never fail the process; only structural invariants
(constrained-path consistency, exact flatness, determinism) set a nonzero
exit status.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimators as est
from .admissible_functions import make_f_eps_C, make_origin_bump
from .config import ExperimentSpec, parse_int_list, parse_list, parse_scalar, parse_vector
from .errors import ConfigError
from .geometry import REGIME_AT_LEAST_TWO, build_wedge
from .simulator import SimConfig, batch_simulate
from .skorokhod import MODE_ABSORBED, MODE_REFLECTED, check_esp

HARD_TOL = 1e-9

_BIN_MAGIC = b"RBMWEDGE"
_BIN_VERSION = 1
_CSV_COLUMNS = ("path_index", "t", "X1", "X2", "Z1", "Z2", "eta1", "eta2", "absorbed")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Path export
# ---------------------------------------------------------------------------


def _path_rows(paths) -> list[tuple]:
    rows = []
    for p in paths:
        n = p.times.size
        for k in range(n):
            rows.append(
                (
                    float(p.path_index),
                    float(p.times[k]),
                    float(p.X[k, 0]),
                    float(p.X[k, 1]),
                    float(p.Z[k, 0]),
                    float(p.Z[k, 1]),
                    float(p.eta[k, 0]),
                    float(p.eta[k, 1]),
                    1.0 if p.absorbed else 0.0,
                )
            )
    return rows


def export_paths(paths, fmt: str, target: str | Path) -> Path:
    """Write a path collection as csv, jsonl, or packed binary.

    The CSV columns are exactly path_index, t, X1, X2, Z1, Z2, eta1, eta2,
    absorbed; the binary format is the same nine columns as little-endian
    float64 rows behind a 16-byte magic + version header.
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(",".join(_CSV_COLUMNS) + "\n")
            for row in _path_rows(paths):
                fh.write(f"{int(row[0])}," + ",".join(_fmt(v) for v in row[1:8])
                         + f",{int(row[8])}\n")
    elif fmt == "jsonl":
        with open(target, "w", encoding="utf-8") as fh:
            for p in paths:
                rec = {
                    "path_index": p.path_index,
                    "times": p.times.tolist(),
                    "X": p.X.tolist(),
                    "Z": p.Z.tolist(),
                    "eta": p.eta.tolist(),
                    "free": p.free.tolist() if p.free is not None else None,
                    "absorbed": bool(p.absorbed),
                    "tau0_index": int(p.tau0_index),
                    "zeta_T": float(p.zeta_T),
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    elif fmt == "bin":
        rows = _path_rows(paths)
        with open(target, "wb") as fh:
            fh.write(_BIN_MAGIC + struct.pack("<II", _BIN_VERSION, len(_CSV_COLUMNS)))
            arr = np.asarray(rows, dtype="<f8").reshape(-1, len(_CSV_COLUMNS))
            fh.write(arr.tobytes(order="C"))
    else:
        raise ConfigError(f"unknown export format {fmt!r}; use csv, jsonl, or bin")
    return target


def read_paths_binary(source: str | Path) -> np.ndarray:
    """Read a packed-binary export back as an (n_rows, 9) float64 array."""
    data = Path(source).read_bytes()
    if data[:8] != _BIN_MAGIC:
        raise ConfigError(f"{source}: bad magic, not a packed path file")
    version, ncols = struct.unpack("<II", data[8:16])
    if version != _BIN_VERSION:
        raise ConfigError(f"{source}: unsupported version {version}")
    return np.frombuffer(data[16:], dtype="<f8").reshape(-1, ncols)


# ---------------------------------------------------------------------------
# Estimator runners
# ---------------------------------------------------------------------------


def _geometry_echo(cfg: SimConfig) -> dict:
    g = cfg.geometry
    return {
        "xi": g.xi,
        "theta1": g.theta1,
        "theta2": g.theta2,
        "v1": list(g.v1),
        "v2": list(g.v2),
        "alpha": g.alpha,
        "regime": g.regime,
        "mode": cfg.mode,
        "mu": list(cfg.mu),
        "z0": list(cfg.z0),
        "T": cfg.T,
        "dt": cfg.T / cfg.n_steps,
        "n_paths": cfg.n_paths,
        "seed": cfg.seed,
        "eps_vertex": cfg.eps_vertex,
    }


def _report_dict(r: est.EstimateReport) -> dict:
    return {
        "estimate": r.estimate,
        "std_error": r.std_error,
        "ci95": list(r.ci95),
        "n": r.n,
        "theorem_tag": r.theorem_tag,
    }


def run_hitting(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    t_grid = parse_list(params.get("t_grid", "")) or [cfg.T]
    reports = est.hitting_time_profile(cfg, t_grid, n_workers=n_workers)
    return {
        "t_grid": t_grid,
        "reports": [_report_dict(r) for r in reports],
        "nondecreasing": all(
            a.estimate <= b.estimate + 1e-12 for a, b in zip(reports, reports[1:])
        ),
    }


def run_occupancy(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    deltas = parse_list(params.get("deltas", "0.1, 0.05, 0.025"))
    paths = batch_simulate(cfg, n_workers=n_workers, record=("Z",))
    reports = [est.estimate_boundary_occupation(paths, d) for d in deltas]
    return {
        "deltas": deltas,
        "reports": [_report_dict(r) for r in reports],
        "strictly_decreasing": all(
            a.estimate > b.estimate for a, b in zip(reports, reports[1:])
        ),
    }


def run_variation(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    levels = parse_int_list(params.get("levels", "6,7,8,9,10"))
    p_grid = parse_list(params.get("p_grid", "1.0, 1.9"))
    paths = batch_simulate(cfg, n_workers=n_workers, record=("X", "Z"))
    sweeps = [est.variation_sweep(cfg, p, levels, paths=paths) for p in p_grid]
    zero = est.zero_energy_sweep(paths, levels)
    return {
        "levels": levels,
        "sweeps": [
            {"p": s.p, "values": list(s.values), "verdict": s.verdict} for s in sweeps
        ],
        "zero_energy": {"values": list(zero.values), "verdict": zero.verdict},
    }


def run_submartingale(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    eps = parse_scalar(params.get("eps", "0.3"))
    big_c = parse_scalar(params.get("C", "2"))
    n_times = int(params.get("n_times", "20"))
    f = make_f_eps_C(cfg.geometry, eps, big_c)
    paths = batch_simulate(cfg, n_workers=n_workers, record=("Z",))
    grid = np.linspace(0.0, cfg.T, cfg.n_steps + 1)[
        np.linspace(0, cfg.n_steps, n_times).astype(int)
    ]
    min_z = est.submartingale_check(paths, f, grid)
    return {
        "test_function": f.label,
        "boundary_certificates": list(f.boundary_certificates),
        "min_z_score": min_z,
        "supports_submartingale": min_z >= -3.0,
    }


def run_feller(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    t = parse_scalar(params.get("t", "1.0"))
    ks = parse_int_list(params.get("ks", "1,2,3,4"))
    base = parse_vector(params.get("z", "0.5, 0.5")) if "z" in params else cfg.z0
    dists = []
    for k in ks:
        za = base
        zb = (base[0] + 2.0**-k, base[1])
        dists.append(est.feller_distance(cfg, za, zb, t, n_workers=n_workers))
    return {
        "t": t,
        "ks": ks,
        "distances": dists,
        "decreasing": all(a > b for a, b in zip(dists, dists[1:])),
    }


def run_scaling(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    x = parse_vector(params.get("x", "2.0, 1.0"))
    t = parse_scalar(params.get("t", "1.0"))
    check = est.scaling_check(replace(cfg, mu=(0.0, 0.0)), x, t, n_workers=n_workers)
    return {
        "x": list(x),
        "t": t,
        "distance": check.distance,
        "null_distances": list(check.null_distances),
        "threshold": check.threshold,
        "passed": check.passed,
    }


def run_esp_check(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    tol = parse_scalar(params.get("tol", "1e-9"))
    delta = parse_scalar(params.get("delta", "0.05"))
    paths = batch_simulate(cfg, n_workers=n_workers)
    max_decomp = 0.0
    max_contain = 0.0
    n_cone = 0
    max_flat = 0.0
    for p in paths:
        rep = check_esp(cfg.geometry, p.times, p.X, p.Z, p.eta, tol=tol, free=p.free)
        max_decomp = max(max_decomp, rep.max_decomposition_error)
        max_contain = max(max_contain, rep.containment_violation)
        n_cone += len(rep.cone_violations)
        max_flat = max(max_flat, est.flatness_audit(p, delta))
    passed = max_decomp < tol and max_contain < tol and n_cone == 0 and max_flat == 0.0
    return {
        "tol": tol,
        "flatness_delta": delta,
        "max_decomposition_error": max_decomp,
        "max_containment_violation": max_contain,
        "cone_violations": n_cone,
        "max_flatness_audit": max_flat,
        "passed": passed,
        "hard_invariant": True,
    }


def run_girsanov(cfg: SimConfig, params: dict, n_workers: int) -> dict:
    mu = parse_vector(params.get("mu", "0.3, 0.1"))
    radius = parse_scalar(params.get("radius", "0.8"))
    base = replace(cfg, mu=(0.0, 0.0))

    def in_disk(zt: np.ndarray) -> np.ndarray:
        return (np.hypot(zt[:, 0], zt[:, 1]) <= radius).astype(float)

    check = est.girsanov_crosscheck(base, mu, in_disk, n_workers=n_workers)
    return {
        "mu": list(mu),
        "radius": radius,
        "reweighted": check.reweighted,
        "direct": check.direct,
        "gap": check.gap,
        "combined_se": check.combined_se,
        "z_score": check.z_score,
        "within_3se": abs(check.gap) <= 3.0 * max(check.combined_se, 1e-300),
    }


_RUNNERS = {
    "hitting": run_hitting,
    "occupancy": run_occupancy,
    "variation": run_variation,
    "submartingale": run_submartingale,
    "feller": run_feller,
    "scaling": run_scaling,
    "esp-check": run_esp_check,
    "girsanov": run_girsanov,
}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _estimator_table(name: str, result: dict) -> tuple[list[str], list[list]]:
    if name == "hitting":
        header = ["T", "estimate", "std_error", "ci_lo", "ci_hi", "n"]
        rows = [
            [t, r["estimate"], r["std_error"], r["ci95"][0], r["ci95"][1], r["n"]]
            for t, r in zip(result["t_grid"], result["reports"])
        ]
    elif name == "occupancy":
        header = ["delta", "estimate", "std_error", "n"]
        rows = [
            [d, r["estimate"], r["std_error"], r["n"]]
            for d, r in zip(result["deltas"], result["reports"])
        ]
    elif name == "variation":
        header = ["p", "level", "value"]
        rows = []
        for sweep in result["sweeps"]:
            for level, v in zip(result["levels"], sweep["values"]):
                rows.append([sweep["p"], level, v])
        for level, v in zip(result["levels"], result["zero_energy"]["values"]):
            rows.append(["zero-energy", level, v])
    elif name == "feller":
        header = ["k", "distance"]
        rows = [[k, d] for k, d in zip(result["ks"], result["distances"])]
    else:
        header = ["key", "value"]
        rows = [[k, v] for k, v in sorted(result.items()) if not isinstance(v, (list, dict))]
    return header, rows


def run_experiment(spec: ExperimentSpec, out_dir: str | Path, n_workers: int = 1) -> int:
    """Run every estimator of the spec, write artifacts, return exit status.

    Exit status is nonzero only when a hard (structural) invariant fails.
    """
    spec.validate()
    cfg = spec.sim
    if cfg.mode == MODE_REFLECTED and cfg.geometry.regime == REGIME_AT_LEAST_TWO:
        raise ConfigError(
            f"alpha = {cfg.geometry.alpha:.6g} >= 2 with mode=reflected: nonexistence "
            f"regime (the reflected dynamics with drift have no solution); "
            f"use mode=absorbed"
        )
    out = Path(out_dir)
    summary: dict = {"name": spec.name, "geometry": _geometry_echo(cfg), "results": {}}
    hard_failed = False
    for name in spec.estimators:
        runner = _RUNNERS[name]
        result = runner(cfg, spec.params.get(name, {}), n_workers)
        summary["results"][name] = result
        header, rows = _estimator_table(name, result)
        _write_table(out / f"{spec.name}.{name}.csv", header, rows)
        if result.get("hard_invariant") and not result.get("passed", True):
            hard_failed = True
    summary["hard_failed"] = hard_failed
    _write_json(out / f"{spec.name}.summary.json", summary)
    return 1 if hard_failed else 0


# ---------------------------------------------------------------------------
# Theorem-suite preset
# ---------------------------------------------------------------------------


def _alpha_half_geometry():
    return build_wedge(math.pi / 2, math.pi / 8, math.pi / 8)


def _alpha_15_geometry():
    return build_wedge(math.pi / 4, 3 * math.pi / 16, 3 * math.pi / 16)


def _alpha_neg_geometry():
    return build_wedge(math.pi / 2, -math.pi / 8, -math.pi / 8)


def theorem_suite_specs(seed: int, paths_cap: int | None = None) -> list[ExperimentSpec]:
    """Desk-scale preset battery covering each numerically checkable claim.

    paths_cap bounds every sub-experiment's path count; the full-size
    acceptance runs live in the test suite.
    """

    def n(default: int) -> int:
        return min(default, paths_cap) if paths_cap else default

    specs = [
        ExperimentSpec(
            name="esp-consistency",
            sim=SimConfig(
                geometry=_alpha_half_geometry(),
                mu=(0.1, 0.1),
                z0=(0.5, 0.5),
                T=1.0,
                dt=1e-3,
                n_paths=n(100),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("esp-check",),
        ),
        ExperimentSpec(
            name="hitting-nonpositive",
            sim=SimConfig(
                geometry=_alpha_neg_geometry(),
                mu=(-0.2, 0.1),
                z0=(1.0, 0.5),
                T=2.0,
                dt=1e-3,
                n_paths=n(200),
                seed=seed,
                mode=MODE_ABSORBED,
                eps_vertex=1e-3,
            ),
            estimators=("hitting",),
            params={"hitting": {"t_grid": "0.5, 1, 2"}},
        ),
        ExperimentSpec(
            name="hitting-attracting",
            sim=SimConfig(
                geometry=build_wedge(math.pi / 4, 0.9 * math.pi / 4, 0.9 * math.pi / 4),
                mu=(0.0, 0.0),
                z0=(0.5, 0.2),
                T=8.0,
                dt=2e-3,
                n_paths=n(200),
                seed=seed,
                mode=MODE_ABSORBED,
            ),
            estimators=("hitting",),
            params={"hitting": {"t_grid": "2, 4, 8"}},
        ),
        ExperimentSpec(
            name="occupation",
            sim=SimConfig(
                geometry=_alpha_half_geometry(),
                mu=(0.0, 0.0),
                z0=(0.5, 0.5),
                T=1.0,
                dt=2e-4,
                n_paths=n(200),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("occupancy",),
            params={"occupancy": {"deltas": "0.1, 0.05, 0.025"}},
        ),
        ExperimentSpec(
            name="variation-thresholds",
            sim=SimConfig(
                geometry=_alpha_15_geometry(),
                mu=(0.0, 0.0),
                z0=(0.0, 0.0),
                T=1.0,
                dt=2.0**-13,
                n_paths=n(50),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("variation",),
            params={"variation": {"levels": "5,6,7,8,9,10,11", "p_grid": "1.0, 1.9"}},
        ),
        ExperimentSpec(
            name="submartingale",
            sim=SimConfig(
                geometry=_alpha_half_geometry(),
                mu=(0.1, 0.1),
                z0=(0.5, 0.3),
                T=1.0,
                dt=1e-3,
                n_paths=n(2000),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("submartingale",),
            params={"submartingale": {"eps": "0.3", "C": "2", "n_times": "10"}},
        ),
        ExperimentSpec(
            name="feller-scaling",
            sim=SimConfig(
                geometry=_alpha_half_geometry(),
                mu=(0.0, 0.0),
                z0=(1.0, 0.5),
                T=1.0,
                dt=1e-3,
                n_paths=n(2000),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("feller", "scaling"),
            params={
                "feller": {"t": "1.0", "ks": "1,2,3", "z": "1.0, 0.5"},
                "scaling": {"x": "2.0, 1.0", "t": "1.0"},
            },
        ),
        ExperimentSpec(
            name="girsanov",
            sim=SimConfig(
                geometry=_alpha_half_geometry(),
                mu=(0.0, 0.0),
                z0=(0.5, 0.25),
                T=1.0,
                dt=2e-3,
                n_paths=n(5000),
                seed=seed,
                mode=MODE_REFLECTED,
            ),
            estimators=("girsanov",),
            params={"girsanov": {"mu": "0.3, 0.1", "radius": "0.8"}},
        ),
    ]
    return specs


def run_theorem_suite(out_dir: str | Path, seed: int = 0, paths_cap: int | None = None,
                      n_workers: int = 1) -> int:
    """Run the preset battery plus an in-process determinism hard check."""
    out = Path(out_dir)
    status = 0
    for spec in theorem_suite_specs(seed, paths_cap):
        status = max(status, run_experiment(spec, out, n_workers=n_workers))

    # Determinism hard check: a small batch simulated twice must agree bitwise.
    cfg = SimConfig(
        geometry=_alpha_half_geometry(),
        mu=(0.1, -0.05),
        z0=(0.7, 0.4),
        T=0.5,
        dt=1e-3,
        n_paths=8,
        seed=seed,
        mode=MODE_REFLECTED,
    )
    a = batch_simulate(cfg)
    b = batch_simulate(cfg)
    identical = all(
        np.array_equal(x.Z, y.Z) and np.array_equal(x.eta, y.eta)
        for x, y in zip(a, b)
    )
    _write_json(
        out / "determinism.summary.json",
        {"identical": identical, "n_paths": cfg.n_paths, "hard_invariant": True},
    )
    if not identical:
        status = max(status, 1)
    return status
