"""Interface extraction from a lightly smoothed indicator.

The cell indicator is smoothed with the separable binomial filter
``[1, 4, 6, 4, 1] / 16`` (nearest-value padding) and the level set ``1/2`` of
the bilinear interpolant is traced square by square. Every value of the
smoothed field is an exact multiple of ``1/256``, so local updates after a
single-cell change reproduce a full recomputation bit for bit.

Dual square ``(i, j)`` has corners at the centers of cells ``(i, j)``,
``(i+1, j)``, ``(i+1, j+1)`` and ``(i, j+1)``.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ._accel import Kernel, njit

LEVEL = 0.5
SMOOTH_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
SMOOTH_RADIUS = 2
# cells farther than this (Chebyshev) from a square's corners cannot affect its segment
LOCALITY = SMOOTH_RADIUS + 1


def smooth_indicator(inside: np.ndarray) -> np.ndarray:
    f = np.asarray(inside, np.float64)
    f = ndimage.correlate1d(f, SMOOTH_TAPS, axis=0, mode="nearest")
    return ndimage.correlate1d(f, SMOOTH_TAPS, axis=1, mode="nearest")


def stencil2d() -> np.ndarray:
    return np.outer(SMOOTH_TAPS, SMOOTH_TAPS)


def square_fraction(mask: np.ndarray) -> np.ndarray:
    """Fraction of each dual square's four corner cells that lie in ``mask``."""
    m = np.asarray(mask, np.float64)
    return 0.25 * (m[:-1, :-1] + m[1:, :-1] + m[1:, 1:] + m[:-1, 1:])


def _square_lengths_numpy(f, level):
    a = f[:-1, :-1]
    b = f[1:, :-1]
    c = f[1:, 1:]
    d = f[:-1, 1:]
    ia, ib, ic, id_ = a >= level, b >= level, c >= level, d >= level
    with np.errstate(divide="ignore", invalid="ignore"):
        # crossing points in local square coordinates
        fb, tb = ia != ib, (level - a) / (b - a)
        fr, tr = ib != ic, (level - b) / (c - b)
        ft, tt = id_ != ic, (level - d) / (c - d)
        fl, tl = ia != id_, (level - a) / (d - a)
    P = {
        "b": (np.where(fb, tb, 0.0), np.zeros_like(a)),
        "r": (np.ones_like(a), np.where(fr, tr, 0.0)),
        "t": (np.where(ft, tt, 0.0), np.ones_like(a)),
        "l": (np.zeros_like(a), np.where(fl, tl, 0.0)),
    }
    F = {"b": fb, "r": fr, "t": ft, "l": fl}

    def dist(p, q):
        return np.hypot(P[p][0] - P[q][0], P[p][1] - P[q][1])

    n = fb.astype(int) + fr + ft + fl
    out = np.zeros_like(a)
    two = n == 2
    for p, q in (("b", "r"), ("b", "t"), ("b", "l"), ("r", "t"), ("r", "l"), ("t", "l")):
        sel = two & F[p] & F[q]
        out[sel] = dist(p, q)[sel]
    four = n == 4
    if four.any():
        m = 0.25 * (a + b + c + d)
        join_a = (m >= level) == ia
        sep_a = dist("b", "r") + dist("t", "l")  # corners b and d cut off
        sep_bd = dist("b", "l") + dist("t", "r")  # corners a and c cut off
        out[four] = np.where(join_a, sep_a, sep_bd)[four]
    return out


@njit
def _square_segments(a, b, c, d, level, seg):
    """Write up to two segments ``(x0, y0, x1, y1)`` into ``seg``; return their count."""
    ia = a >= level
    ib = b >= level
    ic = c >= level
    id_ = d >= level
    px = np.empty(4)
    py = np.empty(4)
    fl = np.zeros(4, np.bool_)
    if ia != ib:
        px[0] = (level - a) / (b - a)
        py[0] = 0.0
        fl[0] = True
    if ib != ic:
        px[1] = 1.0
        py[1] = (level - b) / (c - b)
        fl[1] = True
    if id_ != ic:
        px[2] = (level - d) / (c - d)
        py[2] = 1.0
        fl[2] = True
    if ia != id_:
        px[3] = 0.0
        py[3] = (level - a) / (d - a)
        fl[3] = True
    n = 0
    for k in range(4):
        if fl[k]:
            n += 1
    if n == 0:
        return 0
    if n == 2:
        k0 = -1
        k1 = -1
        for k in range(4):
            if fl[k]:
                if k0 < 0:
                    k0 = k
                else:
                    k1 = k
        seg[0, 0] = px[k0]
        seg[0, 1] = py[k0]
        seg[0, 2] = px[k1]
        seg[0, 3] = py[k1]
        return 1
    m = 0.25 * (a + b + c + d)
    if (m >= level) == ia:
        pairs = ((0, 1), (2, 3))
    else:
        pairs = ((0, 3), (2, 1))
    for s in range(2):
        p, q = pairs[s]
        seg[s, 0] = px[p]
        seg[s, 1] = py[p]
        seg[s, 2] = px[q]
        seg[s, 3] = py[q]
    return 2


def _window_length_numpy(f, i0, i1, j0, j1, frac, level):
    sub = f[i0: i1 + 1, j0: j1 + 1]
    return float(np.sum(_square_lengths_numpy(sub, level) * frac[i0:i1, j0:j1]))


@njit
def window_length_nb(f, i0, i1, j0, j1, frac, level):
    """Weighted interface length over dual squares ``[i0, i1) x [j0, j1)``."""
    seg = np.empty((2, 4))
    tot = 0.0
    for i in range(i0, i1):
        for j in range(j0, j1):
            w = frac[i, j]
            if w == 0.0:
                continue
            ns = _square_segments(f[i, j], f[i + 1, j], f[i + 1, j + 1], f[i, j + 1], level, seg)
            for s in range(ns):
                tot += w * np.hypot(seg[s, 2] - seg[s, 0], seg[s, 3] - seg[s, 1])
    return tot


window_length = Kernel(getattr(window_length_nb, "py_func", window_length_nb), _window_length_numpy)


def square_lengths(f: np.ndarray, level: float = LEVEL) -> np.ndarray:
    """Interface length (cell units) inside each dual square."""
    return _square_lengths_numpy(np.asarray(f, np.float64), level)


def segments(f: np.ndarray, frac: np.ndarray | None = None, level: float = LEVEL):
    """All interface segments with positive region weight.

    Returns ``(sq_i, sq_j, seg, weight, normal)``: segment endpoints in
    local square coordinates ``seg[k] = (x0, y0, x1, y1)``, the region weight
    of the square and the exterior unit normal (pointing to decreasing ``f``)
    at the segment midpoint.
    """
    f = np.asarray(f, np.float64)
    lengths = _square_lengths_numpy(f, level)
    sel = lengths > 0
    if frac is not None:
        sel &= frac > 0
    ii, jj = np.nonzero(sel)
    out_i, out_j, out_seg, out_w, out_n = [], [], [], [], []
    buf = np.empty((2, 4))
    segfun = _square_segments.py_func if hasattr(_square_segments, "py_func") else _square_segments
    for i, j in zip(ii.tolist(), jj.tolist()):
        a, b, c, d = f[i, j], f[i + 1, j], f[i + 1, j + 1], f[i, j + 1]
        ns = segfun(a, b, c, d, level, buf)
        for s in range(ns):
            x0, y0, x1, y1 = buf[s]
            xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            gx = (b - a) * (1 - ym) + (c - d) * ym
            gy = (d - a) * (1 - xm) + (c - b) * xm
            g = np.hypot(gx, gy)
            out_i.append(i)
            out_j.append(j)
            out_seg.append((x0, y0, x1, y1))
            out_w.append(1.0 if frac is None else frac[i, j])
            out_n.append((-gx / g, -gy / g))
    return (
        np.array(out_i, int),
        np.array(out_j, int),
        np.array(out_seg, float).reshape(-1, 4),
        np.array(out_w, float),
        np.array(out_n, float).reshape(-1, 2),
    )
