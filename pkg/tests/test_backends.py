import os
import subprocess
import sys

import numpy as np
import pytest

from fracfb import HAVE_NUMBA, set_backend
from fracfb.curvature import curvature_at_points, interface_arrays
from fracfb.energy import FlipCache, NonlinearityProfile
from fracfb.field import AdmissiblePair, IndicatorSet, ScalarField, omega_ball
from fracfb.tails import tails_at

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")


def _both(fn):
    out = {}
    for name in ("numba", "numpy"):
        set_backend(name)
        out[name] = np.asarray(fn(), float)
    return out["numba"], out["numpy"]


def _wavy(g):
    X, Y = g.centers()
    return IndicatorSet.from_mask(g, np.hypot(X, Y) < 0.3 + 0.05 * np.sin(5 * np.arctan2(Y, X)))


@pytest.mark.parametrize("sigma", [0.3, 0.8])
def test_nonlocal_curvature_parity(grid64, sigma):
    E = _wavy(grid64)
    ia = interface_arrays(E)
    k = slice(0, None, 7)
    a, b = _both(lambda: curvature_at_points(E, ia.x[k], ia.y[k], sigma))
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


def test_tail_parity(grid64):
    E = _wavy(grid64)
    X, Y = grid64.centers()
    sel = omega_ball(grid64, 0.5).mask
    a, b = _both(lambda: np.concatenate(tails_at(grid64, E.inside, X[sel], Y[sel], 0.5, 256)))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_classical_flip_parity(grid64, ball_half):
    E = _wavy(grid64)
    pair = AdmissiblePair(ScalarField.from_values(grid64, np.zeros(grid64.shape), ball_half),
                          IndicatorSet(grid64, E.inside, ~ball_half.mask))
    cells = np.argwhere(ball_half.mask)[::5]

    def deltas():
        cache = FlipCache.build(pair, ball_half, NonlinearityProfile(), 1.0)
        return [cache.delta(tuple(c))[1] for c in cells]

    a, b = _both(deltas)
    assert np.allclose(a, b, rtol=0, atol=1e-13)


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    env = dict(os.environ, FRACFB_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import fracfb; print(fracfb.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_unknown_backend_rejected():
    with pytest.raises(ValueError, match="unknown backend"):
        set_backend("fortran")
