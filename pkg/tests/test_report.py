import re
import threading

import numpy as np
import pytest

from fracfb.analysis import density_profile
from fracfb.field import IndicatorSet, build_grid
from fracfb.io import read_csv
from fracfb.parallel import ENV_WORKERS, pmap, worker_count
from fracfb.report import (
    DENSITY_HEADER,
    RESIDUAL_HEADER,
    export_report,
    line_plot_svg,
    write_density_csv,
    write_growth_csv,
    write_residual_csv,
)


def _tick_labels(svg):
    return re.findall(r">(1e-?\d+)</text>", svg)


def test_positive_trace_uses_log_axes():
    trace = 10.0 ** -np.arange(6)
    svg = line_plot_svg({"energy": (np.arange(1, 7), trace)}, "trace", "iteration", "energy")
    labels = _tick_labels(svg)
    assert "1e-5" in labels and "1e0" in labels
    assert svg.count("<polyline") == 1


def test_signed_values_use_linear_axis():
    svg = line_plot_svg({"gap": ([0.1, 0.2, 0.4], [-1.0, 0.5, 2.0])})
    ys = re.findall(r'text-anchor="end" font-size="11">([^<]+)<', svg)
    assert ys and not any(v.startswith("1e") for v in ys)


def test_empty_and_nonfinite_series():
    assert line_plot_svg({}).startswith("<svg")
    svg = line_plot_svg({"a": ([1.0, 2.0, 3.0], [1.0, np.nan, 4.0])})
    pts = re.search(r'points="([^"]+)"', svg).group(1)
    assert len(pts.split()) == 2


def test_density_csv_schema(tmp_path):
    g = build_grid(64, 1.0)
    prof = density_profile(IndicatorSet.from_function(g, lambda X, Y: X > 0), (0.0, 0.0), 4 * g.h, 0.3, 5)
    write_density_csv(tmp_path / "density.csv", prof)
    header, rows = read_csv(tmp_path / "density.csv")
    assert header == DENSITY_HEADER
    assert len(rows) == 5
    got = np.array([[float(v) for v in r] for r in rows])
    want = np.array(list(prof.rows()))
    assert np.array_equal(got, want)


def test_empty_residual_csv_has_header(tmp_path):
    write_residual_csv(tmp_path / "residual.csv", [])
    assert (tmp_path / "residual.csv").read_text() == ",".join(RESIDUAL_HEADER) + "\n"


def test_export_report_formats(tmp_path):
    a = export_report({"value": 0.1}, tmp_path, "json", "r")
    b = export_report({"header": ["r", "sup_u"], "rows": [(0.1, 0.2)]}, tmp_path, "csv", "g")
    c = export_report({"series": {"s": ([1, 2], [3, 4])}}, tmp_path, "svg", "p")
    assert a.read_text().strip().startswith("{")
    assert b.read_text().splitlines()[1] == "0.10000000000000001,0.20000000000000001"
    assert c.read_text().startswith("<svg")
    with pytest.raises(ValueError, match="unknown report format"):
        export_report({}, tmp_path, "pdf", "x")


def test_growth_csv_round_trip(tmp_path):
    write_growth_csv(tmp_path / "growth.csv", [0.1, 0.2], [1.0 / 3.0, 2.0 / 3.0])
    _, rows = read_csv(tmp_path / "growth.csv")
    assert float(rows[0][1]) == 1.0 / 3.0


def test_worker_count_respects_environment(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "1")
    assert worker_count() == 1
    assert worker_count(8) == 1
    monkeypatch.setenv(ENV_WORKERS, "lots")
    with pytest.raises(ValueError, match=ENV_WORKERS):
        worker_count()
    monkeypatch.delenv(ENV_WORKERS)
    assert worker_count(1) == 1
    assert worker_count() >= 1


def test_pmap_keeps_order_and_caps_threads(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "2")
    seen = set()

    def work(x):
        seen.add(threading.get_ident())
        return x * x

    assert pmap(work, range(20)) == [x * x for x in range(20)]
    assert len(seen) <= 2
    monkeypatch.setenv(ENV_WORKERS, "1")
    seen.clear()
    assert pmap(work, range(5)) == [0, 1, 4, 9, 16]
    assert seen == {threading.get_ident()}
