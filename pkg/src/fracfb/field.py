"""Grids, regions, cell sets and scalar fields on a uniform square lattice.

Arrays are indexed ``[ix, iy]`` so that ``values[i, j]`` is the cell whose
center is ``(x0 + (i + 1/2) h, y0 + (j + 1/2) h)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

__all__ = [
    "AdmissibilityError",
    "AdmissiblePair",
    "Grid",
    "IndicatorSet",
    "Region",
    "ScalarField",
    "boundary_cells",
    "build_grid",
    "make_admissible",
    "omega_ball",
    "omega_box",
]


class AdmissibilityError(ValueError):
    """Raised when a pair violates the sign constraint where it cannot be fixed."""


def _frozen_array(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float]
    upsilon: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinate arrays ``(X, Y)`` of shape ``(nx, ny)``."""
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def center(self) -> tuple[float, float]:
        return (
            self.origin[0] + 0.5 * self.nx * self.h,
            self.origin[1] + 0.5 * self.ny * self.h,
        )

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.h, y0, y0 + self.ny * self.h)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        i = int(np.floor((x - self.origin[0]) / self.h))
        j = int(np.floor((y - self.origin[1]) / self.h))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"point ({x}, {y}) lies outside the box")
        return i, j

    def shifted(self, dx: float, dy: float) -> "Grid":
        return Grid(self.nx, self.ny, self.h, (self.origin[0] + dx, self.origin[1] + dy), self.upsilon)

    def header(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "h": self.h,
            "origin": [self.origin[0], self.origin[1]],
            "upsilon": self.upsilon,
        }


def build_grid(n: int, box_half_width: float, upsilon: float = 0.0, center=(0.0, 0.0)) -> Grid:
    """Square ``n x n`` grid covering ``center + [-L, L]^2``.

    ``upsilon`` is the collar width used by the classical perimeter. It must
    lie in ``[0, L / 50]``, i.e. at most one hundredth of the box side.
    """
    n = int(n)
    if n < 16 or n % 2:
        raise ValueError(f"nx must be even and ≥ 16, got {n}")
    if not (box_half_width > 0 and np.isfinite(box_half_width)):
        raise ValueError(f"box half-width must be positive, got {box_half_width}")
    if not (0.0 <= upsilon <= 0.02 * box_half_width + 1e-15):
        raise ValueError(
            f"upsilon={upsilon} outside [0, {0.02 * box_half_width}] (1/100 of the box side)"
        )
    h = 2.0 * box_half_width / n
    return Grid(n, n, h, (center[0] - box_half_width, center[1] - box_half_width), float(upsilon))


@dataclass(frozen=True)
class Region:
    grid: Grid
    mask: np.ndarray
    label: str = "region"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m = _frozen_array(self.mask, bool)
        if m.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        object.__setattr__(self, "mask", m)

    @property
    def ncells(self) -> int:
        return int(self.mask.sum())

    def dilate(self, radius: float, label: str | None = None) -> "Region":
        """Cells whose center lies within ``radius`` of some cell center of the region."""
        if radius <= 0:
            return self
        dist = ndimage.distance_transform_edt(~self.mask) * self.grid.h
        return Region(self.grid, dist <= radius * (1 + 1e-12), label or f"{self.label}+{radius:g}", dict(self.params))

    def collar(self) -> "Region":
        """The region enlarged by the grid's ``upsilon``."""
        return self.dilate(self.grid.upsilon, label=f"{self.label}_upsilon")

    def margin_to_box(self) -> int:
        """Number of cells between the region and the nearest box edge."""
        ii, jj = np.nonzero(self.mask)
        if ii.size == 0:
            return min(self.grid.nx, self.grid.ny)
        return int(min(ii.min(), jj.min(), self.grid.nx - 1 - ii.max(), self.grid.ny - 1 - jj.max()))


def omega_ball(grid: Grid, radius: float, center=(0.0, 0.0)) -> Region:
    """Cells whose center lies in the open disc of the given radius."""
    X, Y = grid.centers()
    m = (X - center[0]) ** 2 + (Y - center[1]) ** 2 < radius**2
    if not m.any():
        raise ValueError("ball does not intersect grid")
    return Region(grid, m, f"B_{radius:g}", {"kind": "ball", "radius": radius, "center": tuple(center)})


def omega_box(grid: Grid, half_width: float, center=(0.0, 0.0)) -> Region:
    X, Y = grid.centers()
    m = (np.abs(X - center[0]) < half_width) & (np.abs(Y - center[1]) < half_width)
    return Region(grid, m, f"Q_{half_width:g}", {"kind": "box", "half_width": half_width, "center": tuple(center)})


def boundary_cells(mask: np.ndarray) -> np.ndarray:
    """Cells of ``mask`` having a 4-neighbour outside ``mask`` (box edge counts as outside)."""
    m = np.asarray(mask, bool)
    p = np.pad(m, 1, constant_values=False)
    inner = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~inner


@dataclass(frozen=True)
class IndicatorSet:
    """A cell set ``E`` together with the cells it may not change on (outside the region)."""

    grid: Grid
    inside: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inside", _frozen_array(self.inside, bool))
        object.__setattr__(self, "frozen", _frozen_array(self.frozen, bool))
        if self.inside.shape != self.grid.shape or self.frozen.shape != self.grid.shape:
            raise ValueError("array shape does not match grid")

    @classmethod
    def from_mask(cls, grid: Grid, inside, omega: Region | None = None) -> "IndicatorSet":
        frozen = np.zeros(grid.shape, bool) if omega is None else ~omega.mask
        return cls(grid, inside, frozen)

    @classmethod
    def from_function(cls, grid: Grid, pred: Callable, omega: Region | None = None) -> "IndicatorSet":
        X, Y = grid.centers()
        return cls.from_mask(grid, np.asarray(pred(X, Y), bool), omega)

    def complement(self) -> "IndicatorSet":
        return IndicatorSet(self.grid, ~self.inside, self.frozen)

    def with_inside(self, inside) -> "IndicatorSet":
        inside = np.asarray(inside, bool)
        if np.any(inside[self.frozen] != self.inside[self.frozen]):
            raise AdmissibilityError("attempt to change a frozen cell of the set")
        return IndicatorSet(self.grid, inside, self.frozen)

    def union(self, other: "IndicatorSet") -> "IndicatorSet":
        return IndicatorSet(self.grid, self.inside | other.inside, self.frozen & other.frozen)

    def intersection(self, other: "IndicatorSet") -> "IndicatorSet":
        return IndicatorSet(self.grid, self.inside & other.inside, self.frozen & other.frozen)

    @property
    def count(self) -> int:
        return int(self.inside.sum())


@dataclass(frozen=True)
class ScalarField:
    """Cell values of ``u``; ``frozen`` cells carry Dirichlet data."""

    grid: Grid
    values: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        v = _frozen_array(self.values, np.float64)
        if v.shape != self.grid.shape:
            raise ValueError("array shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frozen", _frozen_array(self.frozen, bool))

    @classmethod
    def from_values(cls, grid: Grid, values, omega: Region | None = None) -> "ScalarField":
        if omega is None:
            frozen = np.zeros(grid.shape, bool)
        else:
            frozen = ~omega.mask | boundary_cells(omega.mask)
        return cls(grid, values, frozen)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, omega: Region | None = None) -> "ScalarField":
        X, Y = grid.centers()
        return cls.from_values(grid, np.broadcast_to(np.asarray(f(X, Y), float), grid.shape), omega)

    def with_values(self, values) -> "ScalarField":
        values = np.asarray(values, float)
        if not np.array_equal(values[self.frozen], self.values[self.frozen]):
            raise AdmissibilityError("attempt to change a frozen value of the field")
        return ScalarField(self.grid, values, self.frozen)


@dataclass(frozen=True)
class AdmissiblePair:
    u: ScalarField
    e: IndicatorSet

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def violations(self) -> np.ndarray:
        u = self.u.values
        ins = self.e.inside
        return (ins & (u < 0)) | (~ins & (u > 0))

    @property
    def violation_count(self) -> int:
        return int(self.violations().sum())


def make_admissible(u: ScalarField, e: IndicatorSet, policy: str = "reject") -> AdmissiblePair:
    """Return a pair with ``u >= 0`` on ``E`` and ``u <= 0`` off ``E``.

    ``reject`` raises on any violation, ``clamp_u`` zeroes the offending values
    of ``u`` and ``flip_e`` moves offending cells to the side given by the sign of
    ``u``. Violations on cells that the chosen policy may not modify raise
    :class:`AdmissibilityError`.
    """
    if u.grid != e.grid:
        raise ValueError("field and set live on different grids")
    pair = AdmissiblePair(u, e)
    bad = pair.violations()
    if not bad.any():
        return pair
    if policy == "reject":
        raise AdmissibilityError(f"{int(bad.sum())} cells violate the sign constraint")
    if policy == "clamp_u":
        if np.any(bad & u.frozen):
            raise AdmissibilityError("sign violation on frozen field data")
        vals = u.values.copy()
        vals[bad] = 0.0
        return AdmissiblePair(ScalarField(u.grid, vals, u.frozen), e)
    if policy == "flip_e":
        if np.any(bad & e.frozen):
            raise AdmissibilityError("sign violation on frozen exterior cells; cannot flip")
        ins = e.inside.copy()
        ins[bad] = u.values[bad] > 0
        return AdmissiblePair(u, IndicatorSet(e.grid, ins, e.frozen))
    raise ValueError(f"unknown admissibility policy {policy!r}")
