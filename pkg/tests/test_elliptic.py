import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracfb.elliptic import (
    SolverError,
    dirichlet_energy,
    harmonic_replacement,
    laplacian_residual,
    max_principle_check,
    sign_constrained_replacement,
    subharmonicity_defect,
)
from fracfb.field import IndicatorSet, Region, ScalarField, build_grid, omega_ball, omega_box


def test_constant_has_zero_energy(grid64, ball_half):
    u = ScalarField.from_values(grid64, np.full(grid64.shape, 3.7), ball_half)
    assert dirichlet_energy(u, ball_half) == 0.0


def test_saddle_energy_matches_polar_integral():
    g = build_grid(256, 1.0, 0.01)
    X, Y = g.centers()
    om = omega_ball(g, 0.8)
    u = ScalarField.from_values(g, X * Y, om)
    exact = np.pi * 0.8**4 / 2
    assert dirichlet_energy(u, om) == pytest.approx(exact, rel=0.02)


def test_linear_function_on_unit_square():
    g = build_grid(64, 1.0)
    X, _ = g.centers()
    sq = omega_box(g, 0.5)
    assert sq.ncells == 32 * 32
    u = ScalarField.from_values(g, X, sq)
    assert dirichlet_energy(u, sq) == pytest.approx(1.0, abs=1e-9)


def _perturbed(g, values, omega, seed=0):
    u = ScalarField.from_values(g, values, omega)
    rng = np.random.default_rng(seed)
    noisy = np.where(u.frozen, u.values, u.values + rng.normal(0, 0.1, g.shape))
    return u, u.with_values(noisy)


def test_harmonic_data_is_reproduced(grid64):
    X, Y = grid64.centers()
    om = omega_ball(grid64, 0.7)
    exact, noisy = _perturbed(grid64, X * Y, om)
    out, rep = harmonic_replacement(noisy, om, tol=1e-10)
    assert rep.residual <= 1e-10
    assert np.max(np.abs(out.values - exact.values)) <= 5e-10
    assert np.array_equal(out.values[out.frozen], noisy.values[noisy.frozen])


def test_zero_set_gives_linear_profile_across_strip():
    g = build_grid(128, 1.0)
    X, Y = g.centers()
    strip = Region(g, (X < 0.5) & (np.abs(Y) < 0.9))
    u = ScalarField(g, np.ones(g.shape), ~strip.mask)
    zero = strip.mask & (X < 0)
    out, _ = harmonic_replacement(u, strip, zero_set=zero)
    assert np.all(out.values[zero] == 0.0)
    right = strip.mask & ~zero
    assert laplacian_residual(out, right) <= 1e-9
    row = g.cell_of(0.0, 0.0)[1]
    cols = right[:, row]
    assert np.max(np.abs(out.values[cols, row] - X[cols, row] / 0.5)) <= 0.02


def test_zero_data_gives_zero(grid64, ball_half):
    u = ScalarField.from_values(grid64, np.zeros(grid64.shape), ball_half)
    u = u.with_values(np.where(u.frozen, 0.0, 1.0))
    out, _ = harmonic_replacement(u, ball_half)
    assert np.max(np.abs(out.values)) <= 1e-10


def test_region_touching_box_edge_is_rejected(grid64):
    u = ScalarField(grid64, np.zeros(grid64.shape), np.zeros(grid64.shape, bool))
    with pytest.raises(ValueError, match="box edge"):
        harmonic_replacement(u, Region(grid64, np.ones(grid64.shape, bool)))


def test_solver_failure_is_reported(grid64, ball_half):
    X, Y = grid64.centers()
    u = ScalarField.from_values(grid64, X + Y, ball_half)
    with pytest.raises(SolverError):
        harmonic_replacement(u.with_values(np.where(u.frozen, u.values, 5.0)), ball_half, tol=1e-14, maxiter=1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_replacement_never_raises_energy(seed):
    g = build_grid(32, 1.0)
    om = omega_ball(g, 0.7)
    rng = np.random.default_rng(seed)
    u = ScalarField.from_values(g, rng.normal(size=g.shape), om)
    out, _ = harmonic_replacement(u, om)
    assert dirichlet_energy(out, om) <= dirichlet_energy(u, om) + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_replacement_is_monotone_in_data(seed):
    g = build_grid(32, 1.0)
    om = omega_ball(g, 0.7)
    rng = np.random.default_rng(seed)
    low = ScalarField.from_values(g, rng.normal(size=g.shape), om)
    bump = np.where(low.frozen, rng.uniform(0, 1, g.shape), 0.0)
    high = ScalarField(g, low.values + bump, low.frozen)
    a, _ = harmonic_replacement(low, om)
    b, _ = harmonic_replacement(high, om)
    assert np.all(b.values >= a.values - 1e-9)


def test_sign_constrained_replacement_keeps_saddle(grid64):
    X, Y = grid64.centers()
    om = omega_ball(grid64, 0.7)
    e = IndicatorSet.from_mask(grid64, X * Y > 0, om)
    exact, noisy = _perturbed(grid64, X * Y, om, seed=3)
    out, rep = sign_constrained_replacement(noisy, e, om)
    sgn = np.where(e.inside, 1.0, -1.0)
    assert np.all(sgn * out.values >= 0)
    assert np.max(np.abs(out.values - exact.values)) <= 1e-8
    assert rep.outer_iterations >= 1


def test_sign_constraint_pins_wrong_sign_cells(grid64, ball_half):
    X, Y = grid64.centers()
    u = ScalarField.from_values(grid64, X, ball_half)
    e = IndicatorSet.from_mask(grid64, Y > 0, ball_half)
    out, rep = sign_constrained_replacement(u, e, ball_half)
    sgn = np.where(e.inside, 1.0, -1.0)
    free = ball_half.mask & ~u.frozen
    assert np.all(sgn[free] * out.values[free] >= 0)
    assert rep.active_cells > 0
    clamped = u.with_values(np.where(free & (sgn * u.values < 0), 0.0, u.values))
    assert dirichlet_energy(out, ball_half) <= dirichlet_energy(clamped, ball_half) + 1e-9


def test_subharmonicity_of_harmonic_and_convex(grid64, ball_half):
    X, Y = grid64.centers()
    assert subharmonicity_defect(ScalarField.from_values(grid64, X * Y, ball_half), ball_half) <= 1e-9
    bowl = ScalarField.from_values(grid64, -(X**2 + Y**2), ball_half)
    assert subharmonicity_defect(bowl, ball_half) <= 1e-9


def test_subharmonicity_spike(grid64, ball_half):
    v = np.zeros(grid64.shape)
    i, j = grid64.cell_of(0.0, 0.0)
    v[i, j] = 0.8
    v[i + 1, j] = 0.4
    u = ScalarField.from_values(grid64, v, ball_half)
    assert subharmonicity_defect(u, ball_half) == pytest.approx(0.8 - 0.1)


def test_max_principle_equality_and_dip(grid64, ball_half):
    flat = ScalarField.from_values(grid64, np.full(grid64.shape, 0.25), ball_half)
    assert max_principle_check(flat, ball_half, 0.25) == 0.0
    assert max_principle_check(flat, ball_half, 0.25, "upper") == 0.0
    v = np.full(grid64.shape, 0.25)
    i, j = grid64.cell_of(0.1, 0.0)
    v[i, j] = 0.25 - 0.3
    dip = ScalarField.from_values(grid64, v, ball_half)
    assert max_principle_check(dip, ball_half, 0.25) == pytest.approx(0.3)
    assert max_principle_check(dip, ball_half) == pytest.approx(0.3)


def test_max_principle_errors(grid64, ball_half):
    X, _ = grid64.centers()
    u = ScalarField.from_values(grid64, X, ball_half)
    with pytest.raises(ValueError, match="violates"):
        max_principle_check(u, ball_half, 0.0)
    with pytest.raises(ValueError, match="side"):
        max_principle_check(u, ball_half, side="middle")
    free = ScalarField(grid64, X, np.zeros(grid64.shape, bool))
    with pytest.raises(ValueError, match="no frozen data"):
        max_principle_check(free, ball_half)
