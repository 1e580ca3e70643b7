"""Interaction of in-box points with the part of a set lying beyond the box.

Outside the box a cell set is extended conically about the box center: the
direction ``y - c`` of a far point ``y`` inherits the membership of the
outermost cell ring at that direction. The extension is exact for sets that
are unions of sectors about the center (half-planes through it, quadrant
cones, the empty and the full set).

For a point ``x`` in the box

    T_F(x) = int_{R^2 \\ box} chi_F(y) |x - y|^(-2-sigma) dy
           = int_0^{2 pi} sum_pieces m (a^-sigma - b^-sigma) / sigma dtheta,

where the ray ``x + rho e(theta)`` leaves the box at ``rho_b`` and is split
into pieces ``[a, b]`` where it crosses the sector boundary lines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import kernel
from .field import Grid


@dataclass(frozen=True)
class RingSectors:
    """Angular sectors (about the box center) of constant exterior membership."""

    theta0: float  # angle of the first sector start; sectors cover [theta0, theta0 + 2 pi)
    starts: np.ndarray  # increasing sector start angles, starts[0] == theta0
    member: np.ndarray  # int8 membership of each sector
    center: tuple[float, float]
    bounds: tuple[float, float, float, float]

    def lookup(self, ang) -> np.ndarray:
        a = np.mod(np.asarray(ang, float) - self.theta0, 2 * np.pi) + self.theta0
        k = np.searchsorted(self.starts, a, side="right") - 1
        return self.member[np.clip(k, 0, self.member.size - 1)]


def ring_sectors(grid: Grid, inside: np.ndarray) -> RingSectors:
    nx, ny, h = grid.nx, grid.ny, grid.h
    x0, x1, y0, y1 = grid.bounds
    cx, cy = grid.center
    ins = np.asarray(inside, bool)
    # boundary unit segments in counter-clockwise order, starting at the lower-left corner
    pts, mem = [], []
    for i in range(nx):
        pts.append((x0 + i * h, y0)); mem.append(ins[i, 0])
    for j in range(ny):
        pts.append((x1, y0 + j * h)); mem.append(ins[nx - 1, j])
    for i in range(nx - 1, -1, -1):
        pts.append((x0 + (i + 1) * h, y1)); mem.append(ins[i, ny - 1])
    for j in range(ny - 1, -1, -1):
        pts.append((x0, y0 + (j + 1) * h)); mem.append(ins[0, j])
    pts = np.array(pts)
    mem = np.array(mem, np.int8)
    ang = np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx)
    theta0 = ang[0]
    ang = np.mod(ang - theta0, 2 * np.pi) + theta0
    ang[0] = theta0
    keep = np.ones(mem.size, bool)
    keep[1:] = mem[1:] != mem[:-1]
    starts = ang[keep]
    member = mem[keep]
    return RingSectors(float(theta0), starts, member, (cx, cy), grid.bounds)


def _change_angles(sec: RingSectors) -> np.ndarray:
    if sec.member.size <= 1:
        return np.zeros(0)
    ch = list(sec.starts[1:])
    if sec.member[-1] != sec.member[0]:
        ch.append(sec.theta0)
    return np.array(ch)


def _tails_numpy(px, py, cx, cy, xlo, xhi, ylo, yhi, theta0, starts, member, chg, sigma, nth):
    n = px.size
    tin = np.zeros(n)
    tall = np.zeros(n)
    qx = px - cx
    qy = py - cy
    ux, uy = np.cos(chg), np.sin(chg)
    cross_q = qx[:, None] * uy[None, :] - qy[:, None] * ux[None, :]
    twopi = 2.0 * np.pi
    for t in range(nth):
        th = twopi * (t + 0.5) / nth
        ex, ey = np.cos(th), np.sin(th)
        with np.errstate(divide="ignore"):
            rx = np.where(ex > 0, (xhi - px) / ex, np.where(ex < 0, (xlo - px) / ex, np.inf))
            ry = np.where(ey > 0, (yhi - py) / ey, np.where(ey < 0, (ylo - py) / ey, np.inf))
        rb = np.minimum(rx, ry)
        tall += rb ** (-sigma)
        if chg.size == 0:
            if member.size and member[0]:
                tin += rb ** (-sigma)
            continue
        den = ex * uy - ey * ux
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = -cross_q / den[None, :]
            ok = (rho > rb[:, None]) & (((qx[:, None] + rho * ex) * ux[None, :] + (qy[:, None] + rho * ey) * uy[None, :]) > 0)
        rho = np.where(ok, rho, np.inf)
        rho.sort(axis=1)
        a = rb.copy()
        for k in range(chg.size + 1):
            b = rho[:, k] if k < chg.size else np.full(n, np.inf)
            live = np.isfinite(a)
            mid_r = np.where(np.isfinite(b), 0.5 * (a + b), np.inf)
            with np.errstate(invalid="ignore"):
                ang = np.where(np.isfinite(mid_r), np.arctan2(qy + mid_r * ey, qx + mid_r * ex), th)
            am = np.mod(ang - theta0, twopi) + theta0
            idx = np.clip(np.searchsorted(starts, am, side="right") - 1, 0, member.size - 1)
            m = member[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                piece = np.where(np.isfinite(b), a ** (-sigma) - b ** (-sigma), a ** (-sigma))
            tin += np.where(live & (m > 0), piece, 0.0)
            a = b
    fac = twopi / nth / sigma
    return tin * fac, tall * fac


@kernel(_tails_numpy)
def exterior_tails(px, py, cx, cy, xlo, xhi, ylo, yhi, theta0, starts, member, chg, sigma, nth):
    n = px.size
    K = chg.size
    tin = np.zeros(n)
    tall = np.zeros(n)
    twopi = 2.0 * np.pi
    ux = np.cos(chg)
    uy = np.sin(chg)
    rho = np.empty(K + 1)
    nsec = member.size
    for p in range(n):
        qx = px[p] - cx
        qy = py[p] - cy
        acc_in = 0.0
        acc_all = 0.0
        for t in range(nth):
            th = twopi * (t + 0.5) / nth
            ex = np.cos(th)
            ey = np.sin(th)
            rb = np.inf
            if ex > 0:
                rb = min(rb, (xhi - px[p]) / ex)
            elif ex < 0:
                rb = min(rb, (xlo - px[p]) / ex)
            if ey > 0:
                rb = min(rb, (yhi - py[p]) / ey)
            elif ey < 0:
                rb = min(rb, (ylo - py[p]) / ey)
            rbs = rb ** (-sigma)
            acc_all += rbs
            if K == 0:
                if nsec > 0 and member[0] > 0:
                    acc_in += rbs
                continue
            m = 0
            for k in range(K):
                den = ex * uy[k] - ey * ux[k]
                if den == 0.0:
                    continue
                r = -(qx * uy[k] - qy * ux[k]) / den
                if r > rb and (qx + r * ex) * ux[k] + (qy + r * ey) * uy[k] > 0:
                    # insertion into the sorted prefix
                    q = m
                    while q > 0 and rho[q - 1] > r:
                        rho[q] = rho[q - 1]
                        q -= 1
                    rho[q] = r
                    m += 1
            a = rb
            for k in range(m + 1):
                if k < m:
                    b = rho[k]
                    mr = 0.5 * (a + b)
                    ang = np.arctan2(qy + mr * ey, qx + mr * ex)
                else:
                    b = np.inf
                    ang = th
                am = (ang - theta0) % twopi + theta0
                lo = 0
                hi = nsec
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if starts[mid] <= am:
                        lo = mid
                    else:
                        hi = mid
                if member[lo] > 0:
                    if k < m:
                        acc_in += a ** (-sigma) - b ** (-sigma)
                    else:
                        acc_in += a ** (-sigma)
                a = b
        tin[p] = acc_in * twopi / nth / sigma
        tall[p] = acc_all * twopi / nth / sigma
    return tin, tall


def tails_at(grid: Grid, inside: np.ndarray, px, py, sigma: float, nth: int = 2048):
    """Exterior interaction densities ``(T_E, T_all)`` at points ``(px, py)``.

    ``T_E`` integrates the kernel over the conical extension of ``inside``
    beyond the box; ``T_all`` over the whole exterior of the box.
    """
    sec = ring_sectors(grid, inside)
    chg = _change_angles(sec)
    xlo, xhi, ylo, yhi = grid.bounds
    px = np.ascontiguousarray(px, np.float64).ravel()
    py = np.ascontiguousarray(py, np.float64).ravel()
    return exterior_tails(px, py, sec.center[0], sec.center[1], xlo, xhi, ylo, yhi,
                          sec.theta0, np.ascontiguousarray(sec.starts, np.float64),
                          np.ascontiguousarray(sec.member, np.int8), np.ascontiguousarray(chg, np.float64),
                          float(sigma), int(nth))
