"""Fractional and classical perimeters of cell sets relative to a region.

For ``0 < sigma < 1``

    Per_sigma(E, Omega) = L(E n Omega, E^c) + L(E^c n Omega, E \\ Omega),
    L(A, B) = sum_{a in A, b in B} W(a - b),

i.e. every pair of cells split by ``E`` with at least one cell in ``Omega``
is counted once. In-box pairs use FFT convolution with the tabulated pair
weights; pairs reaching beyond the box use the conical exterior extension of
:mod:`fracfb.tails`.

For ``sigma = 1`` the perimeter is the length of the ``1/2`` level line of
the smoothed indicator (:mod:`fracfb.marching`) inside the region, and the
functional ``per_star`` measures it in the region enlarged by ``upsilon``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .field import Grid, IndicatorSet, Region
from .kernel import Convolver, InteractionKernel
from .marching import LOCALITY, smooth_indicator, square_fraction, square_lengths
from .tails import tails_at

DEFAULT_NTHETA = 2048


@dataclass(frozen=True)
class PerimeterValue:
    value: float
    kind: str
    sigma: float
    region_label: str
    truncation_bound: float = 0.0

    def __float__(self):
        return float(self.value)


@lru_cache(maxsize=16)
def _kernel_cached(sigma: float, h: float, near_radius: float) -> InteractionKernel:
    return InteractionKernel.build(sigma, h, near_radius)


def default_kernel(sigma: float, grid: Grid, near_radius: float = 4.0) -> InteractionKernel:
    return _kernel_cached(float(sigma), float(grid.h), float(near_radius))


_CONV_CACHE: dict = {}


def convolver(kernel: InteractionKernel, shape) -> Convolver:
    key = (kernel, tuple(shape))
    conv = _CONV_CACHE.get(key)
    if conv is None:
        if len(_CONV_CACHE) >= 8:
            _CONV_CACHE.pop(next(iter(_CONV_CACHE)))
        conv = Convolver(kernel, tuple(shape))
        _CONV_CACHE[key] = conv
    return conv


def _check_kernel(kernel: InteractionKernel, grid: Grid):
    if abs(kernel.h - grid.h) > 1e-12 * grid.h:
        raise ValueError(f"kernel spacing {kernel.h} differs from grid spacing {grid.h}")


def interaction(A: IndicatorSet, B: IndicatorSet, kernel: InteractionKernel) -> float:
    """``L(A, B)`` summed over in-box cell pairs, symmetric in its arguments."""
    if A.grid != B.grid:
        raise ValueError("sets live on different grids")
    if np.any(A.inside & B.inside):
        raise ValueError("interaction requires disjoint sets")
    _check_kernel(kernel, A.grid)
    conv = convolver(kernel, A.grid.shape)
    a = A.inside.astype(np.float64)
    b = B.inside.astype(np.float64)
    return 0.5 * (float(np.sum(conv(b)[A.inside])) + float(np.sum(conv(a)[B.inside])))


_TAIL_CACHE: dict = {}


def omega_tails(grid: Grid, inside: np.ndarray, omega_mask: np.ndarray, sigma: float, nth: int = DEFAULT_NTHETA):
    """Per-cell exterior densities ``(T_E, T_all)`` on the cells of ``omega_mask`` (row-major order)."""
    from .tails import _change_angles, ring_sectors

    sec = ring_sectors(grid, inside)
    key = (grid, sec.starts.tobytes(), sec.member.tobytes(), np.packbits(omega_mask).tobytes(), float(sigma), int(nth))
    hit = _TAIL_CACHE.get(key)
    if hit is not None:
        return hit
    X, Y = grid.centers()
    res = tails_at(grid, inside, X[omega_mask], Y[omega_mask], sigma, nth)
    if len(_TAIL_CACHE) >= 32:
        _TAIL_CACHE.pop(next(iter(_TAIL_CACHE)))
    _TAIL_CACHE[key] = res
    return res


def _fractional_parts(E: IndicatorSet, omega: Region, kernel: InteractionKernel, tail: str, nth: int):
    grid = E.grid
    conv = convolver(kernel, grid.shape)
    ins = E.inside
    om = omega.mask
    chi = ins.astype(np.float64)
    pot_e = conv(chi)
    pot_all = conv.total()
    pot_out = conv(chi * ~om)  # potential of E \ Omega
    a = om & ins
    b = om & ~ins
    inbox = float(np.sum((pot_all - pot_e)[a])) + float(np.sum(pot_out[b]))
    if tail == "none":
        return inbox, None
    te, tall = omega_tails(grid, ins, om, kernel.sigma, nth)
    h2 = grid.h**2
    ins_o = ins[om]
    ext = h2 * (float(np.sum((tall - te)[ins_o])) + float(np.sum(te[~ins_o])))
    return inbox, (ext, te, tall)


def fractional_perimeter(
    E: IndicatorSet,
    omega: Region,
    kernel: InteractionKernel,
    tail: str = "conical",
    ntheta: int = DEFAULT_NTHETA,
) -> PerimeterValue:
    """Fractional perimeter of ``E`` relative to ``omega``.

    ``tail="conical"`` adds the interaction with the conical exterior
    extension; the reported ``truncation_bound`` is then an estimate of the
    angular quadrature error. With ``tail="none"`` the exterior is dropped and
    the bound is the full exterior mass seen from ``omega``.
    """
    if E.grid != omega.grid:
        raise ValueError("set and region live on different grids")
    _check_kernel(kernel, E.grid)
    if tail not in ("conical", "none"):
        raise ValueError(f"unknown tail model {tail!r}")
    if omega.margin_to_box() < 1:
        raise ValueError("region touches the box boundary; the exterior tail is uncontrolled")
    inbox, ext = _fractional_parts(E, omega, kernel, tail, ntheta)
    h2 = E.grid.h**2
    if ext is None:
        X, Y = E.grid.centers()
        _, tall = omega_tails(E.grid, E.inside, omega.mask, kernel.sigma, ntheta)
        return PerimeterValue(inbox, "fractional", kernel.sigma, omega.label, h2 * float(tall.sum()))
    value = inbox + ext[0]
    _, ext_half = _fractional_parts(E, omega, kernel, tail, ntheta // 2)
    bound = abs(ext[0] - ext_half[0])
    return PerimeterValue(value, "fractional", kernel.sigma, omega.label, bound)


def classical_perimeter(E: IndicatorSet, omega: Region) -> PerimeterValue:
    """Length of the smoothed interface inside ``omega``.

    Each dual square contributes its segment length times the fraction of its
    corner cells lying in ``omega``, which makes the value additive over
    disjoint regions.
    """
    if E.grid != omega.grid:
        raise ValueError("set and region live on different grids")
    f = smooth_indicator(E.inside)
    lengths = square_lengths(f)
    frac = square_fraction(omega.mask)
    return PerimeterValue(float(np.sum(lengths * frac)) * E.grid.h, "classical", 1.0, omega.label, 0.0)


def per_star(E: IndicatorSet, omega: Region, sigma: float, kernel: InteractionKernel | None = None) -> PerimeterValue:
    """The perimeter entering the energy: fractional in ``omega`` or classical in the collar."""
    if not (0.0 < sigma <= 1.0):
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")
    if sigma == 1.0:
        if E.grid.upsilon <= 0:
            raise ValueError("classical perimeter needs a positive upsilon on the grid")
        return classical_perimeter(E, omega.collar())
    kernel = kernel or default_kernel(sigma, E.grid)
    if abs(kernel.sigma - sigma) > 0:
        raise ValueError("kernel order does not match sigma")
    return fractional_perimeter(E, omega, kernel)


def clean_cut_closure(inner: Region, sigma: float) -> np.ndarray:
    """Discrete closure of an inner region for the clean-cut identity.

    For the fractional perimeter a set of cells is already closed. For the
    classical perimeter a cell influences interface segments up to
    ``LOCALITY`` cells away, so the closure is the inner region grown by that
    many cells (Chebyshev distance).
    """
    if sigma < 1.0:
        return inner.mask.copy()
    from scipy import ndimage

    return ndimage.binary_dilation(inner.mask, structure=np.ones((3, 3), bool), iterations=LOCALITY)


def _perimeter_on(E: IndicatorSet, mask: np.ndarray, sigma: float, kernel, label: str) -> float:
    reg = Region(E.grid, mask, label)
    if sigma < 1.0:
        return fractional_perimeter(E, reg, kernel).value
    return classical_perimeter(E, reg).value


def clean_cut_delta(
    E: IndicatorSet,
    F: IndicatorSet,
    omega: Region,
    omega_inner: Region,
    sigma: float,
    kernel: InteractionKernel | None = None,
) -> tuple[float, float]:
    """Both sides of the clean-cut identity for sets that agree outside ``omega_inner``.

    ``lhs = Per*(E, omega) - Per*(F, omega)`` and ``rhs`` is the same
    difference of perimeters measured on the closure of ``omega_inner``.
    """
    if not (0.0 < sigma <= 1.0):
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")
    if E.grid != F.grid or E.grid != omega.grid or omega.grid != omega_inner.grid:
        raise ValueError("sets and regions live on different grids")
    if np.any((E.inside != F.inside) & ~omega_inner.mask):
        raise ValueError("sets differ outside the cut")
    closure = clean_cut_closure(omega_inner, sigma)
    if np.any(closure & ~omega.mask):
        raise ValueError("the inner region is not compactly contained in omega")
    if np.array_equal(E.inside, F.inside):
        return 0.0, 0.0
    if sigma < 1.0 and kernel is None:
        kernel = default_kernel(sigma, E.grid)
    lhs = float(per_star(E, omega, sigma, kernel)) - float(per_star(F, omega, sigma, kernel))
    rhs = _perimeter_on(E, closure, sigma, kernel, "closure") - _perimeter_on(F, closure, sigma, kernel, "closure")
    return lhs, rhs


def ball_perimeter(radius: float, sigma: float) -> float:
    """Closed-form perimeter of a disc in the plane: ``2 pi R`` or the ``sigma``-perimeter.

    For ``sigma < 1``, ``d/dR Per(B_R)`` equals the boundary integral of the
    disc's nonlocal curvature, and ``Per(B_R)`` is homogeneous of degree
    ``2 - sigma``, giving ``2 pi R H(B_R) R / (2 - sigma)``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if sigma == 1.0:
        return 2.0 * np.pi * radius
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1]")
    H = (2.0 / sigma) * (2.0 * radius) ** (-sigma) * np.sqrt(np.pi) * gamma_fn((1.0 - sigma) / 2.0) / gamma_fn(1.0 - sigma / 2.0)
    return float(2.0 * np.pi * radius * radius * H / (2.0 - sigma))

