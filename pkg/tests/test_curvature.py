import numpy as np
import pytest

from fracfb import curvature
from fracfb.curvature import (
    ball_curvature,
    classical_curvature,
    curvature_at_points,
    interface_arrays,
    interface_points,
    nonlocal_curvature_profile,
    nonlocal_mean_curvature,
)
from fracfb.field import IndicatorSet, build_grid, omega_ball
from fracfb.perimeter import classical_perimeter
from oracles import disc_curvature_reference


@pytest.fixture(scope="module")
def g256():
    return build_grid(256, 1.0, 0.01)


def _disc(grid, R, c=(0.0, 0.0)):
    return IndicatorSet.from_function(grid, lambda X, Y: np.hypot(X - c[0], Y - c[1]) < R)


def _sample_points(E, k=16, omega=None):
    ia = interface_arrays(E, omega)
    idx = np.linspace(0, len(ia) - 1, k).round().astype(int)
    return ia.x[idx], ia.y[idx], ia.nx[idx], ia.ny[idx]


# ------------------------------------------------------------------ interface


def test_halfplane_interface(g256):
    om = omega_ball(g256, 0.5)
    E = IndicatorSet.from_function(g256, lambda X, Y: X > 0)
    pts = interface_points(E, om)
    # exterior normal of {x > 0} points towards -x
    assert all(abs(p.normal[0] + 1) < 1e-6 and abs(p.normal[1]) < 1e-6 for p in pts)
    assert sum(p.segment_length for p in pts) == pytest.approx(1.0, rel=0.02)


def test_disc_normals_are_radial(g256):
    E = _disc(g256, 0.5)
    ia = interface_arrays(E)
    ang = np.arctan2(ia.ny, ia.nx) - np.arctan2(ia.y, ia.x)
    ang = np.angle(np.exp(1j * ang))
    assert np.max(np.abs(ang)) < 0.1
    assert np.allclose(np.hypot(ia.nx, ia.ny), 1.0, atol=1e-12)


def test_full_set_has_no_interface(grid64):
    E = IndicatorSet.from_mask(grid64, np.ones(grid64.shape, bool))
    assert interface_points(E) == []


@pytest.mark.parametrize("shape", ["disc", "cross", "wave"])
def test_segment_lengths_sum_to_classical_perimeter(grid128, shape):
    f = {
        "disc": lambda X, Y: np.hypot(X, Y) < 0.4,
        "cross": lambda X, Y: X * Y > 0,
        "wave": lambda X, Y: Y > 0.2 * np.sin(5 * X),
    }[shape]
    E = IndicatorSet.from_function(grid128, f)
    om = omega_ball(grid128, 0.6)
    total = sum(p.segment_length for p in interface_points(E, om))
    assert total == pytest.approx(classical_perimeter(E, om).value, rel=1e-12)


# ------------------------------------------------------------------ nonlocal


@pytest.mark.parametrize("sigma", [0.3, 0.5, 0.8])
def test_halfplane_nonlocal_curvature_vanishes(g256, sigma):
    E = IndicatorSet.from_function(g256, lambda X, Y: X > 0)
    h = g256.h
    for y in (-0.2, 0.0, 0.3):
        H = nonlocal_mean_curvature(E, (0.0, y + h / 2), sigma)
        assert abs(H) <= 0.05 * h ** (-sigma) * h


def test_disc_reference_matches_closed_form():
    for sigma in (0.2, 0.5, 0.9):
        assert disc_curvature_reference(0.5, sigma) == pytest.approx(ball_curvature(0.5, sigma), rel=1e-9)


def test_disc_nonlocal_curvature_matches_quadrature(g256):
    E = _disc(g256, 0.5)
    ref = disc_curvature_reference(0.5, 0.5)
    x, y, nx, ny = _sample_points(E, 12)
    H = curvature_at_points(E, x, y, 0.5, normals=np.column_stack([nx, ny]))
    assert np.all(np.abs(H / ref - 1) < 0.05)


def test_sign_flip_under_complement(grid128):
    E = _disc(grid128, 0.4, (0.05, -0.03))
    x, y, nx, ny = _sample_points(E, 6)
    for i in range(6):
        a = nonlocal_mean_curvature(E, (x[i], y[i]), 0.5, normal=(nx[i], ny[i]))
        b = nonlocal_mean_curvature(E.complement(), (x[i], y[i]), 0.5, normal=(-nx[i], -ny[i]))
        assert abs(a + b) <= 1e-9 * max(1.0, abs(a))


def test_monotone_inclusion_sign(grid128):
    E = _disc(grid128, 0.4)
    x, y, _, _ = _sample_points(E, 24)
    assert np.all(curvature_at_points(E, x, y, 0.5) > 0)
    assert np.all(curvature_at_points(E.complement(), x, y, 0.5) < 0)


def test_delta_stability(g256):
    h = g256.h
    for E in (_disc(g256, 0.5), IndicatorSet.from_function(g256, lambda X, Y: X > 0)):
        x, y, _, _ = _sample_points(E, 8, omega_ball(g256, 0.6))
        prof = nonlocal_curvature_profile(E, x, y, 0.5, [2 * h, 4 * h])
        a, b = prof["corrected"][:, 0], prof["corrected"][:, 1]
        scale = np.maximum(np.abs(b), 0.05 * h ** (1 - 0.5))
        assert np.all(np.abs(a - b) < 0.2 * scale)


def test_translation_with_the_grid(grid128):
    E = _disc(grid128, 0.4)
    ia = interface_arrays(E)
    k = int(np.argmax(ia.x))
    shift = 5 * grid128.h
    g2 = grid128.shifted(shift, -shift)
    E2 = _disc(g2, 0.4, (shift, -shift))
    x1 = (ia.x[k], ia.y[k])
    x2 = (ia.x[k] + shift, ia.y[k] - shift)
    assert nonlocal_mean_curvature(E2, x2, 0.5) == pytest.approx(nonlocal_mean_curvature(E, x1, 0.5), rel=1e-12)
    assert classical_curvature(E2, x2) == pytest.approx(classical_curvature(E, x1), rel=1e-12)


def test_translation_inside_a_fixed_box(grid128):
    h = grid128.h
    ia = interface_arrays(_disc(grid128, 0.4))
    k = int(np.argmax(ia.x))
    vals = []
    for s in (0, 3):
        E = _disc(grid128, 0.4, (s * h, 0.0))
        x = (ia.x[k] + s * h, ia.y[k])
        vals.append((nonlocal_mean_curvature(E, x, 0.5), classical_curvature(E, x)))
    assert vals[1][1] == pytest.approx(vals[0][1], rel=1e-12)
    # the box exterior is seen from a different position: only the tail quadrature changes
    assert vals[1][0] == pytest.approx(vals[0][0], rel=1e-6)


def test_off_boundary_point_is_rejected(grid128):
    E = _disc(grid128, 0.4)
    with pytest.raises(ValueError, match="off the boundary"):
        nonlocal_mean_curvature(E, (0.0, 0.0), 0.5)
    with pytest.raises(ValueError, match="off the boundary"):
        classical_curvature(E, (0.0, 0.0))


# ------------------------------------------------------------------ classical


def test_classical_disc_half(g256):
    E = _disc(g256, 0.5)
    x, y, _, _ = _sample_points(E, 32)
    for p in zip(x, y):
        assert classical_curvature(E, p) == pytest.approx(2.0, rel=0.1)


def test_classical_disc_quarter():
    g = build_grid(512, 1.0, 0.01)
    E = _disc(g, 0.25)
    x, y, _, _ = _sample_points(E, 32)
    H = curvature_at_points(E, x, y, 1.0)
    assert np.all(np.abs(H / 4.0 - 1) < 0.1)


def test_classical_halfplane(g256):
    E = IndicatorSet.from_function(g256, lambda X, Y: X > 0)
    h = g256.h
    for y in (-0.3, 0.0, 0.25):
        assert abs(classical_curvature(E, (0.0, y + h / 2))) <= 0.2


def test_classical_sign_convention(grid128):
    E = _disc(grid128, 0.4)
    p = (interface_arrays(E).x[0], interface_arrays(E).y[0])
    assert classical_curvature(E, p) > 0
    assert classical_curvature(E.complement(), p) < 0


def test_classical_insufficient_sampling(grid64, monkeypatch):
    E = _disc(grid64, 0.3)
    ia = interface_arrays(E)
    sparse = curvature.InterfaceArrays(*(np.asarray(a)[::8] for a in (ia.x, ia.y, ia.nx, ia.ny, ia.length)))
    monkeypatch.setattr(curvature, "interface_arrays", lambda _E: sparse)
    with pytest.raises(ValueError, match="insufficient interface sampling"):
        classical_curvature(E, (sparse.x[0], sparse.y[0]), stencil=3 * grid64.h)


def test_classical_stencil_range(grid128):
    E = _disc(grid128, 0.4)
    ia = interface_arrays(E)
    with pytest.raises(ValueError, match="stencil"):
        classical_curvature(E, (ia.x[0], ia.y[0]), stencil=20 * grid128.h)
