"""Command line entry point.

``fracfb run --config cfg.json [--set key=value ...]`` runs one experiment and
writes its outputs, ``manifest.json`` and (on failure) ``error.json`` into the
configured output directory. ``fracfb validate --config cfg.json`` only checks
the config.

Exit codes: 0 success, 2 invalid config or inputs, 3 numerical failure,
1 unexpected internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import platform
import sys
import time
import traceback
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .config import ConfigError, config_hash, load_config
from .elliptic import SolverError
from .field import AdmissibilityError

__all__ = ["main", "run_experiment"]

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class NumericalFailure(RuntimeError):
    pass


class Phases:
    def __init__(self):
        self.wall: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.wall[name] = self.wall.get(name, 0.0) + time.perf_counter() - t


# ------------------------------------------------------------------ builders


def _grid(cfg):
    from .field import build_grid

    g = cfg["grid"]
    return build_grid(g["nx"], g["box_half_width"], g["upsilon"])


def _omega(cfg, grid):
    from .field import Region, omega_ball, omega_box

    o = cfg["omega"]
    c = tuple(o["center"])
    if o["shape"] == "ball":
        return omega_ball(grid, o["radius"], c)
    if o["shape"] == "box":
        return omega_box(grid, o["radius"], c)
    X, Y = grid.centers()
    r = np.hypot(X - c[0], Y - c[1])
    return Region(grid, (r > o["inner_radius"]) & (r < o["radius"]), "annulus",
                  {"inner_radius": o["inner_radius"], "radius": o["radius"]})


def _set(cfg, grid, omega):
    from .field import IndicatorSet

    s = cfg["set"]
    X, Y = grid.centers()
    cx, cy = s["center"]
    if s["shape"] == "ball":
        m = np.hypot(X - cx, Y - cy) < s["radius"]
    elif s["shape"] == "complement_ball":
        m = np.hypot(X - cx, Y - cy) >= s["radius"]
    elif s["shape"] == "box":
        m = np.maximum(np.abs(X - cx), np.abs(Y - cy)) < s["radius"]
    elif s["shape"] == "saddle":
        m = X * Y > 0
    else:
        nx, ny = s["normal"]
        nrm = np.hypot(nx, ny)
        if nrm == 0:
            raise ConfigError("set.normal must be nonzero")
        m = ((X - cx) * nx + (Y - cy) * ny) / nrm > s["offset"]
    return IndicatorSet.from_mask(grid, m, omega)


def _profile(cfg):
    from .energy import NonlinearityProfile

    p = cfg["phi"]
    return NonlinearityProfile(p["kind"], p["gamma"], p["k_o"], p["coercive_slope"],
                               tuple(p["table_t"]), tuple(p["table_phi"]))


def datum_pair(cfg, grid, omega):
    """Starting pair for the minimizer (also a synthetic pair in its own right)."""
    from .curvature import ball_curvature
    from .field import AdmissiblePair, IndicatorSet, ScalarField

    d = cfg["datum"]
    X, Y = grid.centers()
    if d["kind"] in ("saddle", "saddle_plus"):
        xy = X * Y
        u = xy if d["kind"] == "saddle" else np.maximum(xy, 0.0)
        e = xy > 0
    elif d["kind"] == "planar":
        beta = d["beta"] or 1.0
        u = beta * np.maximum(X, 0.0)
        e = X > 0
    else:
        R = d["radius"]
        beta = d["beta"] or float(np.sqrt(ball_curvature(R, cfg["sigma"])))
        r = np.hypot(X, Y)
        u = np.where(r < R, beta * R * np.log(R / np.maximum(r, 1e-300)), 0.0)
        e = r < R
    field = ScalarField.from_values(grid, u, omega)
    inside = e.copy()
    vals = field.values.copy()
    r0 = d["initial_radius"]
    if r0 > 0:
        shrink = omega.mask & ~field.frozen & (np.hypot(X, Y) >= r0)
        inside[shrink] = False
        vals[shrink] = 0.0
    pair = AdmissiblePair(field.with_values(vals), IndicatorSet.from_mask(grid, inside, omega))
    if pair.violation_count:
        raise AdmissibilityError(f"datum pair has {pair.violation_count} sign violations")
    return pair


def _options(cfg, checkpoint_dir=None):
    from .minimizer import MinimizeOptions

    m = cfg["minimize"]
    return MinimizeOptions(
        max_outer=m["max_outer"],
        flip_sweeps_per_outer=m["flip_sweeps_per_outer"],
        energy_tol=m["energy_tol"],
        seed=cfg["seed"],
        temperature=m["temperature"],
        cooling=m["cooling"],
        anneal_steps=m["anneal_steps"],
        relax_u=m["relax_u"],
        audit_every=m["audit_every"],
        checkpoint_every=m["checkpoint_every"],
        checkpoint_dir=str(checkpoint_dir) if m["checkpoint_every"] else None,
    )


def _kernel_checksum(sigma, grid) -> str:
    if sigma < 1.0:
        from .perimeter import default_kernel

        return default_kernel(sigma, grid).checksum
    from .marching import SMOOTH_TAPS

    return hashlib.sha256(np.asarray(SMOOTH_TAPS, "<f8").tobytes()).hexdigest()


def _bd(bd) -> dict:
    return {"dirichlet": bd.dirichlet, "perimeter": bd.perimeter.value,
            "perimeter_truncation_bound": bd.perimeter.truncation_bound,
            "phi_of_perimeter": bd.phi_of_perimeter, "total": bd.total}


def _finite(x, what):
    if not np.all(np.isfinite(np.asarray(x, float))):
        raise NumericalFailure(f"{what} is not finite")


# ------------------------------------------------------------------ experiments


def _minimized_pair(cfg, grid, omega, out, phases, summary):
    from .io import save_checkpoint
    from .minimizer import alternating_minimize
    from .report import line_plot_svg
    from .io import atomic_write_text, write_csv

    p = _profile(cfg)
    with phases("setup"):
        start = datum_pair(cfg, grid, omega)
    ck = out / "checkpoints"
    resume = str(ck) if cfg["minimize"]["resume"] and (ck / "state.json").exists() else None
    with phases("minimize"):
        rep = alternating_minimize(start, omega, p, cfg["sigma"], _options(cfg, ck), resume_from=resume)
    _finite(rep.breakdown.total, "final energy")
    with phases("export"):
        save_checkpoint(out / "pair", rep.pair)
        trace = np.asarray(rep.energy_trace)
        write_csv(out / "energy_trace.csv", ["iteration", "total"], zip(range(trace.size), trace))
        atomic_write_text(out / "energy_trace.svg", line_plot_svg(
            {"total energy": (np.arange(1, trace.size + 1), trace)}, "energy trace", "outer iteration + 1", "energy"))
    summary["minimize"] = {
        "initial_total": float(trace[0]),
        "breakdown": _bd(rep.breakdown),
        "converged": rep.converged,
        "outer_iterations": rep.outer_iterations,
        "accepted_flips": list(rep.accepted_flips),
        "max_audit_error": rep.max_audit_error,
        "resumed": resume is not None,
    }
    return rep.pair, p


def _analysis_pair(cfg, grid, omega, out, phases, summary):
    src = cfg["pair"]["source"]
    if src == "minimize":
        return _minimized_pair(cfg, grid, omega, out, phases, summary)
    if src == "datum":
        with phases("setup"):
            return datum_pair(cfg, grid, omega), _profile(cfg)
    from .io import load_checkpoint

    with phases("setup"):
        pair = load_checkpoint(cfg["pair"]["path"])
    if pair.grid != grid:
        raise ConfigError("checkpoint grid does not match the configured grid")
    return pair, _profile(cfg)


def _interface_centers(pair, omega, n):
    from .curvature import interface_arrays

    ia = interface_arrays(pair.e, omega)
    if len(ia) == 0:
        return np.zeros((0, 2))
    idx = np.unique(np.linspace(0, len(ia) - 1, min(n, len(ia))).round().astype(int))
    return np.column_stack([ia.x[idx], ia.y[idx]])


def exp_perimeter(cfg, out, phases):
    from .io import write_json
    from .perimeter import default_kernel, fractional_perimeter, per_star

    with phases("setup"):
        grid = _grid(cfg)
        omega = _omega(cfg, grid)
        E = _set(cfg, grid, omega)
    sigma = cfg["sigma"]
    t = time.perf_counter()
    with phases("perimeter"):
        if sigma < 1.0:
            pv = fractional_perimeter(E, omega, default_kernel(sigma, grid), cfg["perimeter"]["tail"],
                                      cfg["perimeter"]["ntheta"])
        else:
            pv = per_star(E, omega, sigma)
    runtime = time.perf_counter() - t
    _finite(pv.value, "perimeter")
    res = {"value": pv.value, "kind": pv.kind, "sigma": sigma, "region": pv.region_label,
           "truncation_bound": pv.truncation_bound, "runtime": runtime}
    write_json(out / "perimeter.json", res)
    return grid, f"perimeter {pv.value:.10g} (truncation bound {pv.truncation_bound:.3g})", res


def exp_curvature(cfg, out, phases):
    from .curvature import curvature_at_points, interface_arrays
    from .io import write_json
    from .report import write_curvature_csv

    with phases("setup"):
        grid = _grid(cfg)
        omega = _omega(cfg, grid)
        E = _set(cfg, grid, omega)
        ia = interface_arrays(E, omega)
        pts = cfg["curvature"]["points"]
        if pts:
            P = np.asarray(pts, float).reshape(-1, 2)
            k = [int(np.argmin(np.hypot(ia.x - x, ia.y - y))) for x, y in P] if len(ia) else []
            if len(k) != len(P) or any(np.hypot(ia.x[j] - x, ia.y[j] - y) > grid.h for j, (x, y) in zip(k, P)):
                raise ConfigError("curvature.points must lie within one cell of the interface")
            x, y, nx, ny = P[:, 0], P[:, 1], ia.nx[k], ia.ny[k]
        else:
            x, y, nx, ny = ia.x, ia.y, ia.nx, ia.ny
    with phases("curvature"):
        H = curvature_at_points(E, x, y, cfg["sigma"], cfg["curvature"]["delta_cells"] * grid.h,
                                normals=np.column_stack([nx, ny])) if len(x) else np.zeros(0)
    _finite(H, "curvature")
    write_curvature_csv(out / "curvature.csv", x, y, nx, ny, H)
    res = {"count": int(len(H)), "sigma": cfg["sigma"],
           "median": float(np.median(H)) if len(H) else None,
           "min": float(H.min()) if len(H) else None, "max": float(H.max()) if len(H) else None}
    write_json(out / "curvature.json", res)
    return grid, f"curvature at {len(H)} points", res


def exp_minimize(cfg, out, phases):
    from .elliptic import max_principle_check, subharmonicity_defect
    from .io import write_json

    grid = _grid(cfg)
    omega = _omega(cfg, grid)
    summary: dict = {}
    pair, _ = _minimized_pair(cfg, grid, omega, out, phases, summary)
    res = summary["minimize"]
    with phases("diagnostics"):
        res["diagnostics"] = {"violation_count": pair.violation_count,
                              "subharmonicity_defect": subharmonicity_defect(pair.u, omega),
                              "max_principle_lower": max_principle_check(pair.u, omega, side="lower"),
                              "max_principle_upper": max_principle_check(pair.u, omega, side="upper")}
    write_json(out / "minimize.json", res)
    return grid, f"energy {res['initial_total']:.10g} -> {res['breakdown']['total']:.10g}", res


def exp_residual(cfg, out, phases):
    from .analysis import free_boundary_residual, residual_summary
    from .io import write_json
    from .report import write_residual_csv

    grid = _grid(cfg)
    omega = _omega(cfg, grid)
    summary: dict = {}
    pair, p = _analysis_pair(cfg, grid, omega, out, phases, summary)
    with phases("residual"):
        samples = free_boundary_residual(pair, omega, p, cfg["sigma"],
                                         exclude=[tuple(e) for e in cfg["residual"]["exclude"]],
                                         delta=cfg["residual"]["delta_cells"] * grid.h)
    write_residual_csv(out / "residual.csv", samples)
    summary["residual"] = residual_summary(samples)
    write_json(out / "residual.json", summary)
    med = summary["residual"].get("median_abs_xi")
    return grid, f"residual at {summary['residual'].get('count', 0)} points, median |xi| {med}", summary


def exp_density(cfg, out, phases):
    from .analysis import density_profile
    from .io import write_json
    from .report import write_density_csv

    grid = _grid(cfg)
    omega = _omega(cfg, grid)
    summary: dict = {}
    pair, _ = _analysis_pair(cfg, grid, omega, out, phases, summary)
    d = cfg["density"]
    centers = _interface_centers(pair, omega, d["n_centers"])
    rows, worst, worst_val = [], None, np.inf
    with phases("density"):
        for c in centers:
            prof = density_profile(pair.e, tuple(c), d["r_min_cells"] * grid.h, d["r_max"], d["n_radii"])
            m = float(min(prof.ratio_in.min(), prof.ratio_out.min()))
            rows.append({"center": list(c), "min_ratio_in": float(prof.ratio_in.min()),
                         "min_ratio_out": float(prof.ratio_out.min())})
            if m < worst_val:
                worst, worst_val = prof, m
    if worst is None:
        from .analysis import DensityProfile

        z = np.zeros(0)
        worst = DensityProfile(z, z, z, z, z, z, z)
    write_density_csv(out / "density.csv", worst)
    summary["density"] = {"centers": rows, "min_ratio": None if not rows else worst_val}
    write_json(out / "density.json", summary)
    return grid, f"density at {len(rows)} centers, min ratio {worst_val:.4g}", summary


def exp_growth(cfg, out, phases):
    from .analysis import growth_fit, growth_profile
    from .io import atomic_write_text, write_json
    from .report import line_plot_svg, write_growth_csv

    grid = _grid(cfg)
    omega = _omega(cfg, grid)
    summary: dict = {}
    pair, _ = _analysis_pair(cfg, grid, omega, out, phases, summary)
    gcfg = cfg["growth"]
    centers = _interface_centers(pair, omega, gcfg["n_centers"])
    r_min = gcfg["r_min_cells"] * grid.h
    radii = np.geomspace(r_min, gcfg["r_max"], gcfg["n_radii"])
    fits, worst, worst_slope = [], None, np.inf
    with phases("growth"):
        for c in centers:
            slope, pref = growth_fit(pair.u, tuple(c), r_min, gcfg["r_max"], cfg["sigma"], gcfg["n_radii"])
            fits.append({"center": list(c), "slope": slope, "prefactor": pref})
            if slope < worst_slope:
                worst, worst_slope = c, slope
    sup = growth_profile(pair.u, tuple(worst), radii) if worst is not None else np.zeros(0)
    write_growth_csv(out / "growth.csv", radii if worst is not None else [], sup)
    if worst is not None:
        atomic_write_text(out / "growth.svg", line_plot_svg({"sup |u|": (radii, sup)}, "growth", "r", "sup |u|"))
    summary["growth"] = {"fits": fits, "min_slope": None if not fits else worst_slope,
                         "reference_exponent": 1.0 - cfg["sigma"] / 2.0}
    write_json(out / "growth.json", summary)
    return grid, f"growth at {len(fits)} centers, min slope {worst_slope:.4g}", summary


def exp_instability(cfg, out, phases):
    from .instability import SaddleConfiguration, run_instability
    from .io import atomic_write_text, write_json
    from .report import line_plot_svg

    i = cfg["instability"]
    sc = SaddleConfiguration(sigma=cfg["sigma"], gamma=i["gamma"], r_small_list=tuple(i["r_small_list"]),
                             r_large=i["r_large"], n=i["n"], box_factor=i["box_factor"],
                             pinch_width=i["pinch_width"], restarts=i["restarts"], seed=cfg["seed"])
    p = None
    if cfg["phi"]["kind"] != "identity":
        p = _profile(cfg)
    with phases("instability"):
        rep = run_instability(sc, p, _options(cfg), large=i["large"], crossover=i["crossover"])
    res = rep.to_dict()
    res.pop("timings", None)
    write_json(out / "instability_report.json", res)
    r = np.array([s["r"] for s in rep.small])
    gap = np.array([s["gap"] for s in rep.small])
    series = {"energy gap (saddle - competitor)": (r, gap)}
    atomic_write_text(out / "instability.svg", line_plot_svg(series, "small-ball energy gap", "r", "gap"))
    beaten = sum(rep.small_verdicts)
    msg = f"competitor wins at {beaten}/{len(rep.small)} small radii"
    if rep.large is not None:
        msg += f"; large ball not beaten: {rep.large['not_beaten']}"
    return sc.grid_for(min(sc.r_small_list)), msg, res


EXPERIMENT_FUNCS = {
    "perimeter": exp_perimeter,
    "curvature": exp_curvature,
    "minimize": exp_minimize,
    "residual": exp_residual,
    "density": exp_density,
    "growth": exp_growth,
    "instability": exp_instability,
}


def run_experiment(cfg: dict) -> tuple[str, dict]:
    """Run a validated config, writing outputs and ``manifest.json``; returns ``(summary line, results)``."""
    from .io import write_json

    out = Path(cfg["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir {str(out)!r} is not writable: {exc.strerror or exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output_dir {str(out)!r} is not writable")
    if cfg["workers"]:
        os.environ.setdefault("FRACFB_WORKERS", str(cfg["workers"]))
    phases = Phases()
    t0 = time.perf_counter()
    grid, line, res = EXPERIMENT_FUNCS[cfg["experiment"]](cfg, out, phases)
    sigma = cfg["sigma"]
    manifest = {
        "fracfb_version": __version__,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "experiment": cfg["experiment"],
        "grid": grid.header(),
        "kernel_table_checksum": _kernel_checksum(sigma, grid),
        "backend": backend(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "phases_wall_clock": dict(phases.wall, total=time.perf_counter() - t0),
    }
    write_json(out / "manifest.json", manifest)
    return line, res


def _write_error(cfg_or_dir, kind: str, exc: BaseException, code: int):
    from .io import write_json

    out = None
    if isinstance(cfg_or_dir, dict):
        out = Path(cfg_or_dir["output_dir"])
    elif cfg_or_dir:
        out = Path(cfg_or_dir)
    if out is None:
        return
    try:
        write_json(out / "error.json", {"exit_code": code, "kind": kind, "message": str(exc),
                                        "type": type(exc).__name__})
    except OSError:
        pass


def _fallback_output_dir(path, overrides):
    """Best-effort output directory of an invalid config, for ``error.json``."""
    import json

    try:
        raw = json.loads(Path(path).read_text())
        out = raw.get("output_dir") if isinstance(raw, dict) else None
    except (OSError, ValueError):
        out = None
    for item in overrides or ():
        if item.startswith("output_dir="):
            out = item.split("=", 1)[1]
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fracfb", description="Free-boundary energy lab on a 2D grid.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to a JSON run config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. --set sigma=0.3 --set grid.nx=128")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        if args.command == "run":
            _write_error(_fallback_output_dir(args.config, args.set), "validation", exc, EXIT_VALIDATION)
        return EXIT_VALIDATION
    if args.command == "validate":
        print(f"config ok: experiment={cfg['experiment']} hash={config_hash(cfg)[:12]}")
        return EXIT_OK
    try:
        line, _ = run_experiment(cfg)
    except (ConfigError, AdmissibilityError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        _write_error(cfg, "validation", exc, EXIT_VALIDATION)
        return EXIT_VALIDATION
    except (SolverError, NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _write_error(cfg, "numerical", exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001 - report anything else as an internal error
        traceback.print_exc()
        _write_error(cfg, "internal", exc, EXIT_INTERNAL)
        return EXIT_INTERNAL
    print(f"{cfg['experiment']}: {line}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
