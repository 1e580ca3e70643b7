"""Diagnostics on computed pairs: free-boundary residual, densities, growth and Hölder norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .curvature import InterfacePoint, curvature_at_points, interface_arrays
from .energy import NonlinearityProfile, phi_eval
from .field import AdmissiblePair, Grid, IndicatorSet, Region, ScalarField
from .kernel import InteractionKernel
from .perimeter import per_star

__all__ = [
    "DensityProfile",
    "ResidualSample",
    "density_profile",
    "detect_u0",
    "free_boundary_residual",
    "growth_fit",
    "growth_profile",
    "holder_seminorm",
    "residual_summary",
]


@dataclass(frozen=True)
class ResidualSample:
    point: InterfacePoint
    dplus: float
    dminus: float
    curvature: float
    phi_prime: float
    xi: float
    skipped: bool = False

    @staticmethod
    def assemble(point, dplus, dminus, curvature, phi_prime) -> "ResidualSample":
        xi = dplus * dplus - dminus * dminus - curvature * phi_prime
        return ResidualSample(point, float(dplus), float(dminus), float(curvature), float(phi_prime), float(xi))


def _sample(values: np.ndarray, grid: Grid, x, y) -> np.ndarray:
    """Bilinear interpolation of cell values at physical points."""
    ci = (np.asarray(x) - grid.origin[0]) / grid.h - 0.5
    cj = (np.asarray(y) - grid.origin[1]) / grid.h - 0.5
    return ndimage.map_coordinates(values, [np.ravel(ci), np.ravel(cj)], order=1, mode="nearest").reshape(np.shape(x))


# weights of the quadratic through (s, 2s, 3s) differentiated at 0, times s
_ONE_SIDED = np.array([-5.0, 8.0, -3.0]) / 2.0


def one_sided_derivatives(u: ScalarField, px, py, nx, ny, step: float | None = None):
    """``(dplus, dminus)``: derivatives of ``u`` at the points moving into ``E`` (against
    the exterior normal) and out of it, from samples at one, two and three steps.

    The value at the point itself is not used, so a small misplacement of the
    discrete interface does not enter as an O(1) error.
    """
    g = u.grid
    s = step or 2.0 * g.h
    px, py, nx, ny = (np.atleast_1d(np.asarray(a, float)) for a in (px, py, nx, ny))
    t = s * np.arange(1, 4)
    inner = _sample(u.values, g, px[:, None] - t[None, :] * nx[:, None], py[:, None] - t[None, :] * ny[:, None])
    outer = _sample(u.values, g, px[:, None] + t[None, :] * nx[:, None], py[:, None] + t[None, :] * ny[:, None])
    dplus = inner @ _ONE_SIDED / s
    dminus = outer @ _ONE_SIDED / s
    return dplus, dminus


def free_boundary_residual(
    pair: AdmissiblePair,
    omega: Region,
    p: NonlinearityProfile,
    sigma: float,
    k: InteractionKernel | None = None,
    exclude=((0.0, 0.0),),
    exclude_radius: float | None = None,
    delta: float | None = None,
    stencil: float | None = None,
) -> list[ResidualSample]:
    """Residual ``xi = dplus^2 - dminus^2 - H * Phi'(Per*)`` at interface points in ``omega``.

    Points within ``exclude_radius`` (default one cell) of any point in
    ``exclude`` are dropped. Points whose derivative stencil leaves ``omega``
    are returned with ``skipped=True`` and NaN entries.
    """
    g = pair.grid
    h = g.h
    ia = interface_arrays(pair.e, omega)
    if len(ia) == 0:
        return []
    keep = np.ones(len(ia), bool)
    rad = exclude_radius if exclude_radius is not None else h
    for ex in exclude or ():
        keep &= np.hypot(ia.x - ex[0], ia.y - ex[1]) > rad
    # the derivative stencils reach three steps along both normals
    reach = 6.0 * h + h
    dist_in = ndimage.distance_transform_edt(omega.mask) * h
    d_at = _sample(dist_in, g, ia.x, ia.y)
    ok = keep & (d_at >= reach)
    per = per_star(pair.e, omega, sigma, k).value
    phip = phi_eval(p, per)[1]
    out: list[ResidualSample] = []
    idx = np.nonzero(ok)[0]
    if idx.size:
        dp, dm = one_sided_derivatives(pair.u, ia.x[idx], ia.y[idx], ia.nx[idx], ia.ny[idx])
        H = curvature_at_points(pair.e, ia.x[idx], ia.y[idx], sigma, delta,
                                normals=np.column_stack([ia.nx[idx], ia.ny[idx]]), stencil=stencil)
    pts = ia.points()
    pos = {int(i): n for n, i in enumerate(idx)}
    for i in np.nonzero(keep)[0]:
        if i in pos:
            n = pos[i]
            out.append(ResidualSample.assemble(pts[i], dp[n], dm[n], H[n], phip))
        else:
            nan = float("nan")
            out.append(ResidualSample(pts[i], nan, nan, nan, phip, nan, True))
    return out


def residual_summary(samples: list[ResidualSample]) -> dict:
    used = [s for s in samples if not s.skipped]
    if not used:
        return {"count": 0, "skipped": len(samples), "median_abs_xi": float("nan")}
    xi = np.array([s.xi for s in used])
    return {
        "count": len(used),
        "skipped": len(samples) - len(used),
        "median_abs_xi": float(np.median(np.abs(xi))),
        "mean_xi": float(xi.mean()),
        "max_abs_xi": float(np.abs(xi).max()),
    }


# ------------------------------------------------------------------ densities


@dataclass(frozen=True)
class DensityProfile:
    radii: np.ndarray
    v_out: np.ndarray
    v_in: np.ndarray
    a_out: np.ndarray
    a_in: np.ndarray
    ratio_out: np.ndarray
    ratio_in: np.ndarray

    def rows(self):
        return zip(self.radii, self.v_out, self.v_in, self.a_out, self.a_in, self.ratio_out, self.ratio_in)


_SUB = 16


def _disc_cell_weights(grid: Grid, center, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells meeting ``B_r(center)`` and the area of each intersection (sub-sampled on the rim)."""
    h = grid.h
    lo_i = max(int(np.floor((center[0] - r - grid.origin[0]) / h)), 0)
    hi_i = min(int(np.floor((center[0] + r - grid.origin[0]) / h)), grid.nx - 1)
    lo_j = max(int(np.floor((center[1] - r - grid.origin[1]) / h)), 0)
    hi_j = min(int(np.floor((center[1] + r - grid.origin[1]) / h)), grid.ny - 1)
    ii, jj = np.meshgrid(np.arange(lo_i, hi_i + 1), np.arange(lo_j, hi_j + 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    xl = grid.origin[0] + ii * h - center[0]
    yl = grid.origin[1] + jj * h - center[1]
    # nearest and farthest points of each cell from the center
    nxp = np.clip(0.0, xl, xl + h)
    nyp = np.clip(0.0, yl, yl + h)
    near = np.hypot(nxp, nyp)
    far = np.hypot(np.maximum(np.abs(xl), np.abs(xl + h)), np.maximum(np.abs(yl), np.abs(yl + h)))
    w = np.where(far <= r, h * h, 0.0)
    rim = (near < r) & (far > r)
    if rim.any():
        s = (np.arange(_SUB) + 0.5) / _SUB * h
        sx = xl[rim][:, None, None] + s[None, :, None]
        sy = yl[rim][:, None, None] + s[None, None, :]
        frac = np.mean(sx * sx + sy * sy < r * r, axis=(1, 2))
        w[rim] = frac * h * h
    sel = w > 0
    return ii[sel], jj[sel], w[sel]


def density_profile(E: IndicatorSet, center, r_min: float, r_max: float, n_radii: int = 8,
                    grid: Grid | None = None, n_circle: int = 4096) -> DensityProfile:
    """Volumes and sphere lengths of ``E`` and its complement in ``B_r(center)`` at geometric radii."""
    grid = grid or E.grid
    if r_min < 2 * grid.h:
        raise ValueError("radius below resolution")
    if r_max < r_min or n_radii < 1:
        raise ValueError("need r_min <= r_max and at least one radius")
    radii = np.geomspace(r_min, r_max, n_radii)
    v_in, v_out, a_in, a_out = [], [], [], []
    th = 2 * np.pi * (np.arange(n_circle) + 0.5) / n_circle
    for r in radii:
        ii, jj, w = _disc_cell_weights(grid, center, r)
        m = E.inside[ii, jj]
        v_in.append(float(np.sum(w[m])))
        v_out.append(float(np.sum(w[~m])))
        cx = center[0] + r * np.cos(th)
        cy = center[1] + r * np.sin(th)
        ci = np.clip(np.floor((cx - grid.origin[0]) / grid.h).astype(int), 0, grid.nx - 1)
        cj = np.clip(np.floor((cy - grid.origin[1]) / grid.h).astype(int), 0, grid.ny - 1)
        frac_in = float(np.mean(E.inside[ci, cj]))
        a_in.append(2 * np.pi * r * frac_in)
        a_out.append(2 * np.pi * r * (1 - frac_in))
    v_in, v_out = np.array(v_in), np.array(v_out)
    return DensityProfile(radii, v_out, v_in, np.array(a_out), np.array(a_in), v_out / radii**2, v_in / radii**2)


# ------------------------------------------------------------------ growth and regularity


def growth_profile(u: ScalarField, center, radii) -> np.ndarray:
    """``sup`` of ``|u|`` over cell centers within each radius of ``center``."""
    X, Y = u.grid.centers()
    d = np.hypot(X - center[0], Y - center[1])
    vals = np.abs(u.values)
    order = np.argsort(d, axis=None)
    ds = d.ravel()[order]
    run = np.maximum.accumulate(vals.ravel()[order])
    k = np.searchsorted(ds, np.asarray(radii), side="right") - 1
    return np.where(k >= 0, run[np.maximum(k, 0)], 0.0)


def growth_fit(u: ScalarField, center, r_min: float, r_max: float, sigma: float | None = None,
               n_radii: int = 8) -> tuple[float, float]:
    """Least-squares slope and prefactor of ``log sup_{B_r} u`` against ``log r``."""
    radii = np.geomspace(r_min, r_max, n_radii)
    sup = growth_profile(u, center, radii)
    use = sup > 0
    if use.sum() < 4:
        raise ValueError("fewer than four radii with positive supremum")
    slope, icpt = np.polyfit(np.log(radii[use]), np.log(sup[use]), 1)
    return float(slope), float(np.exp(icpt))


def holder_seminorm(u: ScalarField, region: Region, alpha: float, seed: int = 0,
                    max_all_pairs: int = 10_000, n_pairs: int = 100_000) -> float:
    """Largest ``|u(x) - u(y)| / |x - y|^alpha`` over cell pairs of ``region``."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    X, Y = u.grid.centers()
    m = region.mask
    x, y, v = X[m], Y[m], u.values[m]
    n = v.size
    if n < 2:
        return 0.0
    best = 0.0
    if n <= max_all_pairs:
        chunk = max(1, 4_000_000 // n)
        for s in range(0, n, chunk):
            dx = x[s: s + chunk, None] - x[None, :]
            dy = y[s: s + chunk, None] - y[None, :]
            dist = np.hypot(dx, dy)
            dv = np.abs(v[s: s + chunk, None] - v[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(dist > 0, dv / dist**alpha, 0.0)
            best = max(best, float(q.max()))
        return best
    rng = np.random.default_rng(seed)
    a = rng.integers(0, n, n_pairs)
    b = rng.integers(0, n, n_pairs)
    dist = np.hypot(x[a] - x[b], y[a] - y[b])
    ok = dist > 0
    return float(np.max(np.abs(v[a] - v[b])[ok] / dist[ok] ** alpha))


def detect_u0(u: ScalarField, omega: Region, eps: float) -> IndicatorSet:
    """Region cells where ``|u| <= eps`` together with the cells of ``{u > eps}`` bordering them."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    small = np.abs(u.values) <= eps
    grown = ndimage.binary_dilation(small, structure=ndimage.generate_binary_structure(2, 1))
    sel = omega.mask & (small | (grown & (u.values > eps)))
    return IndicatorSet(u.grid, sel, ~omega.mask)
