"""CSV, JSON and SVG exporters for experiment results.

Floats are written with 17 significant digits and every file goes through a
temp-file-and-rename, so equal inputs give byte-identical files and readers
never see a partial write.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .io import atomic_write_text, write_csv, write_json

__all__ = [
    "CURVATURE_HEADER",
    "DENSITY_HEADER",
    "GROWTH_HEADER",
    "RESIDUAL_HEADER",
    "export_report",
    "line_plot_svg",
    "write_curvature_csv",
    "write_density_csv",
    "write_growth_csv",
    "write_residual_csv",
]

RESIDUAL_HEADER = ["x", "y", "nx", "ny", "dplus", "dminus", "H", "phiprime", "xi"]
DENSITY_HEADER = ["r", "v_out", "v_in", "a_out", "a_in", "ratio_out", "ratio_in"]
GROWTH_HEADER = ["r", "sup_u"]
CURVATURE_HEADER = ["x", "y", "nx", "ny", "H"]


def write_residual_csv(path, samples) -> None:
    rows = []
    for s in samples:
        if s.skipped:
            continue
        (x, y), (nx, ny) = s.point.position, s.point.normal
        rows.append((x, y, nx, ny, s.dplus, s.dminus, s.curvature, s.phi_prime, s.xi))
    write_csv(path, RESIDUAL_HEADER, rows)


def write_density_csv(path, profile) -> None:
    write_csv(path, DENSITY_HEADER, profile.rows())


def write_growth_csv(path, radii, sup) -> None:
    write_csv(path, GROWTH_HEADER, zip(radii, sup))


def write_curvature_csv(path, x, y, nx, ny, H) -> None:
    write_csv(path, CURVATURE_HEADER, zip(x, y, nx, ny, H))


# ------------------------------------------------------------------ SVG


def _axis(vals, log):
    v = np.log10(vals) if log else np.asarray(vals, float)
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-300:
        lo, hi = lo - 0.5, hi + 0.5
    return v, lo, hi


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [t for t in range(a, b + 1) if lo - 1e-9 <= t <= hi + 1e-9] or [lo, hi]
    step = 10 ** math.floor(math.log10((hi - lo) / 4))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _label(t, log):
    return f"1e{int(t)}" if log else f"{t:.4g}"


def line_plot_svg(series, title: str = "", xlabel: str = "", ylabel: str = "",
                  width: int = 640, height: int = 420) -> str:
    """Minimal SVG line plot of ``{name: (xs, ys)}``.

    Each axis is log-scaled when every value on it is positive.
    """
    series = {k: (np.asarray(x, float), np.asarray(y, float)) for k, (x, y) in series.items()}
    series = {k: (x[np.isfinite(x) & np.isfinite(y)], y[np.isfinite(x) & np.isfinite(y)])
              for k, (x, y) in series.items()}
    allx = np.concatenate([x for x, _ in series.values()]) if series else np.zeros(0)
    ally = np.concatenate([y for _, y in series.values()]) if series else np.zeros(0)
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>']
    if allx.size:
        logx, logy = bool(np.all(allx > 0)), bool(np.all(ally > 0))
        _, x0, x1 = _axis(allx, logx)
        _, y0, y1 = _axis(ally, logy)

        def px(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def py(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for t in _ticks(x0, x1, logx):
            out.append(f'<line x1="{px(t):.2f}" y1="{mt + ph}" x2="{px(t):.2f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(t):.2f}" y="{mt + ph + 18}" text-anchor="middle" '
                       f'font-size="11">{_label(t, logx)}</text>')
        for t in _ticks(y0, y1, logy):
            out.append(f'<line x1="{ml - 5}" y1="{py(t):.2f}" x2="{ml}" y2="{py(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{py(t) + 4:.2f}" text-anchor="end" '
                       f'font-size="11">{_label(t, logy)}</text>')
        colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
        for n, (name, (x, y)) in enumerate(series.items()):
            if x.size == 0:
                continue
            xv = np.log10(x) if logx else x
            yv = np.log10(y) if logy else y
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xv, yv))
            c = colors[n % len(colors)]
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
            out.append(f'<text x="{ml + 8}" y="{mt + 16 + 14 * n}" font-size="11" fill="{c}">{name}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{ylabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_report(results: dict, out_dir, fmt_: str, name: str) -> Path:
    """Write ``results`` as ``name.json``, ``name.csv`` (``header``/``rows`` keys) or ``name.svg`` (``series``)."""
    d = Path(out_dir)
    if fmt_ == "json":
        path = d / f"{name}.json"
        write_json(path, results)
    elif fmt_ == "csv":
        path = d / f"{name}.csv"
        write_csv(path, list(results["header"]), results.get("rows", ()))
    elif fmt_ == "svg":
        path = d / f"{name}.svg"
        atomic_write_text(path, line_plot_svg(results["series"], results.get("title", ""),
                                              results.get("xlabel", ""), results.get("ylabel", "")))
    else:
        raise ValueError(f"unknown report format {fmt_!r}")
    return path

