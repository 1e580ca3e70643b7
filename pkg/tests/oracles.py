"""Independent continuum references for the discrete quantities.

Every reference here is computed from the defining integral of
``|x - y|^(-2 - sigma)`` with scipy adaptive quadrature. Inner integrals over
a set are done along rays from the outer point, where the radial integral
of ``r^(-1 - sigma)`` is elementary, so each reference is a (at most) 3D
adaptive quadrature of the original 4D integral.
"""
import warnings

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn

QUAD = {"epsabs": 0.0, "epsrel": 1e-10, "limit": 400}


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return fn(*args, **kw)


def tent_reference(d, sigma):
    """``I(d)`` as the 4D integral over two unit cells, reduced to the tent density
    and integrated in Cartesian pieces (the production code uses polar pieces)."""
    d1, d2 = d
    p = 2.0 + sigma

    def f(z2, z1):
        return (1 - abs(z1 - d1)) * (1 - abs(z2 - d2)) * (z1 * z1 + z2 * z2) ** (-p / 2)

    total = 0.0
    for a, b in ((d1 - 1, d1), (d1, d1 + 1)):
        for c, e in ((d2 - 1, d2), (d2, d2 + 1)):
            v, _ = _quiet(integrate.nquad, f, [[c, e], [a, b]], opts={"epsabs": 0.0, "epsrel": 1e-11, "limit": 200})
            total += v
    return total


def cell_pair_reference(d, sigma, nodes=12):
    """``I(d)`` by a 4D tensor Gauss-Legendre rule; accurate only for well separated cells."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * t
    w = 0.5 * w
    X1, Y1, X2, Y2 = np.meshgrid(t, t, t + d[0], t + d[1], indexing="ij")
    W = np.einsum("i,j,k,l->ijkl", w, w, w, w)
    return float(np.sum(W * ((X1 - X2) ** 2 + (Y1 - Y2) ** 2) ** (-(2 + sigma) / 2)))


def _exit_distance(px, py, R, theta):
    """Distance from an interior point of ``B_R`` to the circle along direction ``theta``."""
    ex, ey = np.cos(theta), np.sin(theta)
    b = px * ex + py * ey
    return -b + np.sqrt(b * b - (px * px + py * py) + R * R)


def disc_perimeter_reference(R, sigma):
    """``L(B_R, R^2 \\ B_R)`` in polar coordinates about the center."""

    def inner(rho):
        g = lambda th: _exit_distance(rho, 0.0, R, th) ** (-sigma) / sigma
        v, _ = _quiet(integrate.quad, g, 0.0, np.pi, **QUAD)
        return 2.0 * v * 2.0 * np.pi * rho

    v, _ = _quiet(integrate.quad, inner, 0.0, R, **QUAD)
    return v


_GL_T, _GL_W = np.polynomial.legendre.leggauss(96)


def _gl(f, a, b):
    t = 0.5 * (b - a) * _GL_T + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.dot(_GL_W, f(t)))


def _corner_angles(px, py, R):
    """Directions from a left-half-disc point to the corners ``(0, -R)`` and ``(0, R)``.

    Between them a ray crosses the diameter before the circle; the radial
    integrands below are smooth on each side of these two angles.
    """
    return np.arctan2(-R - py, -px), np.arctan2(R - py, -px)


def halfplane_perimeter_reference(R, sigma):
    """``Per_sigma({x > 0}, B_R)``.

    ``L(E n B_R, E^c)`` uses the elementary half-plane potential
    ``c_sigma x^(-sigma) / sigma``; ``L(E^c n B_R, E \\ B_R)`` is integrated
    along rays from points of the left half-disc.
    """
    c = np.sqrt(np.pi) * gamma_fn((1 + sigma) / 2) / gamma_fn(1 + sigma / 2)
    # int over the half disc of x^(-sigma): R^(2-sigma) * B((1-sigma)/2, 3/2)
    first = c / sigma * R ** (2 - sigma) * beta_fn((1 - sigma) / 2, 1.5)

    def at_point(py, px):
        lo, hi = _corner_angles(px, py, R)
        across = lambda th: (-px / np.cos(th)) ** (-sigma) / sigma
        circle = lambda th: _exit_distance(px, py, R, th) ** (-sigma) / sigma
        return _gl(across, -np.pi / 2, lo) + _gl(circle, lo, hi) + _gl(across, hi, np.pi / 2)

    second, _ = _quiet(integrate.dblquad, at_point, -R, 0.0,
                       lambda x: -np.sqrt(R * R - x * x), lambda x: np.sqrt(R * R - x * x),
                       epsabs=0.0, epsrel=1e-7)
    return first + second


def half_discs_interaction_reference(R, sigma):
    """``L(left half of B_R, right half of B_R)``."""

    def at_point(py, px):
        lo, hi = _corner_angles(px, py, R)
        f = lambda th: ((-px / np.cos(th)) ** (-sigma) - _exit_distance(px, py, R, th) ** (-sigma)) / sigma
        return _gl(f, lo, hi)

    v, _ = _quiet(integrate.dblquad, at_point, -R, 0.0,
                  lambda x: -np.sqrt(R * R - x * x), lambda x: np.sqrt(R * R - x * x),
                  epsabs=0.0, epsrel=1e-7)
    return v


def disc_curvature_reference(R, sigma):
    """Nonlocal curvature of ``B_R`` at a boundary point.

    Pairing each inward direction with its opposite, the principal value
    reduces to ``(2/sigma) int L(theta)^(-sigma) dtheta`` over inward
    directions, ``L`` being the chord length.
    """
    g = lambda th: 2.0 / sigma * (2.0 * R * np.cos(th)) ** (-sigma)
    v, _ = _quiet(integrate.quad, g, -np.pi / 2, np.pi / 2, **QUAD)
    return v
