"""Cell-pair weights of the kernel ``|z|^(-2-sigma)``.

For two grid cells at integer offset ``d`` the exact pair integral is
``h^(2-sigma) * I(d)`` with

    I(d) = int_{[-1,1]^2} (1-|s1|)(1-|s2|) |d+s|^(-2-sigma) ds,

the tent weight being the autocorrelation of the unit square. ``I`` is
tabulated by quadrature for ``|d| <= near_radius`` and replaced by the
midpoint value ``|d|^(-2-sigma)`` beyond. Tables are cached on disk as a JSON
header plus a raw ``float64`` array.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .io import atomic_write_bytes, write_json

TABLE_VERSION = 1


def canonical_offsets(near_radius: float) -> list[tuple[int, int]]:
    """Offsets ``(a, b)`` with ``0 <= a <= b`` and ``0 < a^2 + b^2 <= R^2``."""
    r = int(np.floor(near_radius))
    out = []
    for b in range(0, r + 1):
        for a in range(0, b + 1):
            if 0 < a * a + b * b <= near_radius**2 + 1e-12:
                out.append((a, b))
    return out


def _corner_polar(sigma, alpha, beta):
    """Integral over t in [0,1]^2 of (a1+b1 t1)(a2+b2 t2)|t|^(-2-sigma), with a1*a2 == 0."""
    a1, a2 = alpha
    b1, b2 = beta
    s = sigma

    def radial(phi):
        c, sn = np.cos(phi), np.sin(phi)
        R = 1.0 / max(c, sn)
        lin = (a1 * b2 * sn + b1 * a2 * c) * R ** (1 - s) / (1 - s)
        quad = b1 * b2 * c * sn * R ** (2 - s) / (2 - s)
        return lin + quad

    tot = 0.0
    for lo, hi in ((0.0, np.pi / 4), (np.pi / 4, np.pi / 2)):
        v, _ = integrate.quad(radial, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        tot += v
    return tot


def tent_integral(d, sigma: float) -> float:
    """``I(d)`` for a nonzero integer offset ``d`` and ``0 < sigma < 1``."""
    d1, d2 = float(d[0]), float(d[1])
    if d1 == 0 and d2 == 0:
        raise ValueError("offset must be nonzero")
    p = 2.0 + sigma
    sing = (-d1, -d2)
    total = 0.0
    for e1 in (-1.0, 1.0):
        for e2 in (-1.0, 1.0):
            lo1, hi1 = (0.0, 1.0) if e1 > 0 else (-1.0, 0.0)
            lo2, hi2 = (0.0, 1.0) if e2 > 0 else (-1.0, 0.0)
            corner = None
            for c1 in (lo1, hi1):
                for c2 in (lo2, hi2):
                    if (c1, c2) == sing:
                        corner = (c1, c2)
            if corner is not None:
                # polar coordinates about the singular corner, t = direction into the square
                dirs = (1.0 if corner[0] == lo1 else -1.0, 1.0 if corner[1] == lo2 else -1.0)
                alpha = (1.0 - e1 * corner[0], 1.0 - e2 * corner[1])
                beta = (-e1 * dirs[0], -e2 * dirs[1])
                if abs(alpha[0] * alpha[1]) > 0:
                    raise ArithmeticError("tent weight does not vanish at the singular corner")
                total += _corner_polar(sigma, alpha, beta)
            else:
                f = lambda s2, s1: (1 - e1 * s1) * (1 - e2 * s2) * ((d1 + s1) ** 2 + (d2 + s2) ** 2) ** (-p / 2)
                v, _ = integrate.dblquad(f, lo1, hi1, lo2, hi2, epsabs=0.0, epsrel=1e-11)
                total += v
    return total


def _cache_dir() -> Path:
    env = os.environ.get("FRACFB_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "fracfb"


def _table_key(sigma, near_radius):
    return f"kernel_s{sigma!r}_r{near_radius!r}_v{TABLE_VERSION}".replace(".", "p")


def near_table(sigma: float, near_radius: float = 4.0, use_cache: bool = True) -> np.ndarray:
    """Values ``I(d)`` for :func:`canonical_offsets`, loaded from or written to the cache."""
    offs = canonical_offsets(near_radius)
    path = _cache_dir() / _table_key(sigma, near_radius)
    if use_cache:
        try:
            header = json.loads(path.with_suffix(".json").read_text())
            raw = path.with_suffix(".bin").read_bytes()
            vals = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            ok = (
                header.get("version") == TABLE_VERSION
                and header.get("sigma") == sigma
                and header.get("near_radius") == near_radius
                and [tuple(o) for o in header.get("offsets", [])] == offs
                and header.get("sha256") == hashlib.sha256(raw).hexdigest()
                and vals.size == len(offs)
            )
            if ok:
                return vals
        except (OSError, ValueError, KeyError):
            pass
    vals = np.array([tent_integral(o, sigma) for o in offs])
    if use_cache:
        try:
            raw = vals.astype("<f8").tobytes()
            atomic_write_bytes(path.with_suffix(".bin"), raw)
            write_json(path.with_suffix(".json"), {
                "version": TABLE_VERSION,
                "sigma": sigma,
                "near_radius": near_radius,
                "offsets": offs,
                "sha256": hashlib.sha256(raw).hexdigest(),
            })
        except OSError:
            pass
    return vals


@dataclass(frozen=True)
class InteractionKernel:
    """Pair weights ``W(d) = h^(2-sigma) I(d)`` on a grid of spacing ``h``."""

    sigma: float
    h: float
    near_radius: float = 4.0
    near_values: tuple = ()

    @classmethod
    def build(cls, sigma: float, h: float, near_radius: float = 4.0, use_cache: bool = True):
        if not (0.0 < sigma < 1.0):
            raise ValueError(f"sigma must lie in (0, 1) for the fractional kernel, got {sigma}")
        if near_radius < 0:
            raise ValueError("near_radius must be nonnegative")
        vals = near_table(sigma, near_radius, use_cache) if near_radius >= 1 else np.zeros(0)
        return cls(float(sigma), float(h), float(near_radius), tuple(float(v) for v in vals))

    @property
    def tail_coefficient(self) -> float:
        """``int_{|z|>r} |z|^(-2-sigma) dz = tail_coefficient * r^(-sigma)``."""
        return 2.0 * np.pi / self.sigma

    @property
    def checksum(self) -> str:
        return hashlib.sha256(np.asarray(self.near_values, "<f8").tobytes()).hexdigest()

    def unit_weight(self, d1: int, d2: int) -> float:
        """``I(d)`` in cell units (exact inside the near radius, midpoint beyond)."""
        a, b = sorted((abs(int(d1)), abs(int(d2))))
        if a == 0 and b == 0:
            return 0.0
        r2 = a * a + b * b
        if r2 <= self.near_radius**2 + 1e-12:
            return self.near_values[canonical_offsets(self.near_radius).index((a, b))]
        return float(r2) ** (-(2.0 + self.sigma) / 2.0)

    def weight(self, d1: int, d2: int) -> float:
        return self.h ** (2.0 - self.sigma) * self.unit_weight(d1, d2)

    def offset_array(self, nx: int, ny: int) -> np.ndarray:
        """``W`` over offsets ``(-(nx-1)..nx-1) x (-(ny-1)..ny-1)``; entry ``[nx-1, ny-1]`` is ``d = 0``."""
        a = np.arange(-(nx - 1), nx, dtype=np.float64)
        b = np.arange(-(ny - 1), ny, dtype=np.float64)
        A, B = np.meshgrid(a, b, indexing="ij")
        r2 = A * A + B * B
        r2[nx - 1, ny - 1] = 1.0
        w = r2 ** (-(2.0 + self.sigma) / 2.0)
        w[nx - 1, ny - 1] = 0.0
        for (p, q), v in zip(canonical_offsets(self.near_radius), self.near_values):
            for s1 in (-1, 1):
                for s2 in (-1, 1):
                    for u, t in ((p, q), (q, p)):
                        i, j = s1 * u, s2 * t
                        if abs(i) < nx and abs(j) < ny:
                            w[nx - 1 + i, ny - 1 + j] = v
        return w * self.h ** (2.0 - self.sigma)


class Convolver:
    """``out[x] = sum_y chi[y] W(x - y)`` over the box, by zero-padded FFT."""

    def __init__(self, kernel: InteractionKernel, shape: tuple[int, int]):
        nx, ny = shape
        self.shape = shape
        self.kernel = kernel
        self.warr = kernel.offset_array(nx, ny)
        self.fshape = (sfft.next_fast_len(2 * nx - 1, real=True), sfft.next_fast_len(2 * ny - 1, real=True))
        self._wf = sfft.rfft2(self.warr, self.fshape)

    def __call__(self, chi: np.ndarray) -> np.ndarray:
        nx, ny = self.shape
        f = sfft.rfft2(np.asarray(chi, np.float64), self.fshape)
        full = sfft.irfft2(f * self._wf, self.fshape)
        return full[nx - 1: 2 * nx - 1, ny - 1: 2 * ny - 1]

    def total(self) -> np.ndarray:
        """Sum of weights from each cell to every other cell of the box."""
        return self(np.ones(self.shape))
