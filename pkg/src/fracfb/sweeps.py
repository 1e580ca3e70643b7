"""Compiled single-cell flip sweeps over a region.

Both sweeps visit region cells in a given order, compute the energy change of
moving each cell across ``E`` (setting ``u`` to zero there when its sign
becomes incompatible) and accept it when it lowers the energy by more than
``thresh`` or, at positive temperature, with Metropolis probability. The
random permutation and uniforms are drawn by the caller so both backends
consume identical randomness. With ``relax`` set, the flipped cell's value
is instead moved to the neighbour mean clamped to the sign of its new side,
which lets a flip lower the Dirichlet term on its own.
"""
from __future__ import annotations

import numpy as np

from ._accel import kernel, njit
from .energy import phi_value
from .marching import _square_lengths_numpy, window_length_nb


@njit
def _u_after(inside, u, ufrozen, i, j, relax):
    ui = u[i, j]
    if relax and not ufrozen[i, j]:
        avg = 0.25 * (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1])
        if inside[i, j]:
            return True, min(avg, 0.0)
        return True, max(avg, 0.0)
    if (inside[i, j] and ui > 0.0) or ((not inside[i, j]) and ui < 0.0):
        if ufrozen[i, j]:
            return False, ui
        return True, 0.0
    return True, ui


@njit
def _dd(u, om_mask, i, j, new):
    old = u[i, j]
    if new == old:
        return 0.0
    d = 0.0
    for t in range(4):
        a = i
        b = j
        if t == 0:
            a = i - 1
        elif t == 1:
            a = i + 1
        elif t == 2:
            b = j - 1
        else:
            b = j + 1
        w = 1.0 if om_mask[a, b] else 0.5
        d += w * ((new - u[a, b]) ** 2 - (old - u[a, b]) ** 2)
    return d


def _accept_py(dE, thresh, temp, r):
    if dE < -thresh:
        return True
    if temp > 0.0 and np.isfinite(dE):
        return r < np.exp(-dE / temp)
    return False


def _dd_py(u, om_mask, i, j, new):
    old = u[i, j]
    if new == old:
        return 0.0
    d = 0.0
    for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
        w = 1.0 if om_mask[a, b] else 0.5
        d += w * ((new - u[a, b]) ** 2 - (old - u[a, b]) ** 2)
    return d


def _u_after_py(inside, u, ufrozen, i, j, relax):
    ui = u[i, j]
    if relax and not ufrozen[i, j]:
        avg = 0.25 * (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1])
        if inside[i, j]:
            return True, min(avg, 0.0)
        return True, max(avg, 0.0)
    if (inside[i, j] and ui > 0.0) or ((not inside[i, j]) and ui < 0.0):
        if ufrozen[i, j]:
            return False, ui
        return True, 0.0
    return True, ui


def _sweep_fractional_numpy(order, rand, temp, thresh, inside, u, ufrozen, om_mask, om_i, om_j,
                            pot_e, pot_all, warr, pcode, pg, pk, ps, ptk, pvk, per, dir_, relax):
    nx, ny = inside.shape
    phi = getattr(phi_value, "py_func", phi_value)
    acc = 0
    ph0 = phi(pcode, pg, pk, ps, ptk, pvk, per)
    for n in range(order.size):
        k = order[n]
        i, j = int(om_i[k]), int(om_j[k])
        ok, new = _u_after_py(inside, u, ufrozen, i, j, relax)
        if not ok:
            continue
        s = 2.0 * pot_e[k] - pot_all[k]
        dP = s if inside[i, j] else -s
        dD = _dd_py(u, om_mask, i, j, new)
        ph1 = phi(pcode, pg, pk, ps, ptk, pvk, max(per + dP, 0.0))
        dE = (ph1 - ph0) + dD
        if _accept_py(dE, thresh, temp, rand[n]):
            sgn = -1.0 if inside[i, j] else 1.0
            pot_e += sgn * warr[om_i - i + nx - 1, om_j - j + ny - 1]
            inside[i, j] = not inside[i, j]
            u[i, j] = new
            per += dP
            dir_ += dD
            ph0 = ph1
            acc += 1
    return per, dir_, acc


@kernel(_sweep_fractional_numpy)
def sweep_fractional(order, rand, temp, thresh, inside, u, ufrozen, om_mask, om_i, om_j,
                     pot_e, pot_all, warr, pcode, pg, pk, ps, ptk, pvk, per, dir_, relax):
    nx, ny = inside.shape
    acc = 0
    nom = om_i.size
    ph0 = phi_value(pcode, pg, pk, ps, ptk, pvk, per)
    for n in range(order.size):
        k = order[n]
        i = om_i[k]
        j = om_j[k]
        ok, new = _u_after(inside, u, ufrozen, i, j, relax)
        if not ok:
            continue
        s = 2.0 * pot_e[k] - pot_all[k]
        dP = s if inside[i, j] else -s
        dD = _dd(u, om_mask, i, j, new)
        ph1 = phi_value(pcode, pg, pk, ps, ptk, pvk, max(per + dP, 0.0))
        dE = (ph1 - ph0) + dD
        take = dE < -thresh
        if not take and temp > 0.0 and np.isfinite(dE):
            take = rand[n] < np.exp(-dE / temp)
        if take:
            sgn = -1.0 if inside[i, j] else 1.0
            for q in range(nom):
                pot_e[q] += sgn * warr[om_i[q] - i + nx - 1, om_j[q] - j + ny - 1]
            inside[i, j] = not inside[i, j]
            u[i, j] = new
            per += dP
            dir_ += dD
            ph0 = ph1
            acc += 1
    return per, dir_, acc


_ST = np.outer([1.0, 4.0, 6.0, 4.0, 1.0], [1.0, 4.0, 6.0, 4.0, 1.0]) / 256.0


def _sweep_classical_numpy(order, rand, temp, thresh, inside, u, ufrozen, om_mask, om_i, om_j,
                           smooth, frac, h, pcode, pg, pk, ps, ptk, pvk, per, dir_, relax):
    phi = getattr(phi_value, "py_func", phi_value)
    acc = 0
    ph0 = phi(pcode, pg, pk, ps, ptk, pvk, per)
    for n in range(order.size):
        k = order[n]
        i, j = int(om_i[k]), int(om_j[k])
        ok, new = _u_after_py(inside, u, ufrozen, i, j, relax)
        if not ok:
            continue
        win = (slice(i - 3, i + 4), slice(j - 3, j + 4))
        fw = (slice(i - 3, i + 3), slice(j - 3, j + 3))
        before = float(np.sum(_square_lengths_numpy(smooth[win], 0.5) * frac[fw]))
        sgn = -1.0 if inside[i, j] else 1.0
        smooth[i - 2: i + 3, j - 2: j + 3] += sgn * _ST
        after = float(np.sum(_square_lengths_numpy(smooth[win], 0.5) * frac[fw]))
        dP = (after - before) * h
        dD = _dd_py(u, om_mask, i, j, new)
        ph1 = phi(pcode, pg, pk, ps, ptk, pvk, max(per + dP, 0.0))
        dE = (ph1 - ph0) + dD
        if _accept_py(dE, thresh, temp, rand[n]):
            inside[i, j] = not inside[i, j]
            u[i, j] = new
            per += dP
            dir_ += dD
            ph0 = ph1
            acc += 1
        else:
            smooth[i - 2: i + 3, j - 2: j + 3] -= sgn * _ST
    return per, dir_, acc


@kernel(_sweep_classical_numpy)
def sweep_classical(order, rand, temp, thresh, inside, u, ufrozen, om_mask, om_i, om_j,
                    smooth, frac, h, pcode, pg, pk, ps, ptk, pvk, per, dir_, relax):
    acc = 0
    st = np.empty((5, 5))
    taps = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    for a in range(5):
        for b in range(5):
            st[a, b] = taps[a] * taps[b] / 256.0
    ph0 = phi_value(pcode, pg, pk, ps, ptk, pvk, per)
    for n in range(order.size):
        k = order[n]
        i = om_i[k]
        j = om_j[k]
        ok, new = _u_after(inside, u, ufrozen, i, j, relax)
        if not ok:
            continue
        before = window_length_nb(smooth, i - 3, i + 3, j - 3, j + 3, frac, 0.5)
        sgn = -1.0 if inside[i, j] else 1.0
        for a in range(5):
            for b in range(5):
                smooth[i - 2 + a, j - 2 + b] += sgn * st[a, b]
        after = window_length_nb(smooth, i - 3, i + 3, j - 3, j + 3, frac, 0.5)
        dP = (after - before) * h
        dD = _dd(u, om_mask, i, j, new)
        ph1 = phi_value(pcode, pg, pk, ps, ptk, pvk, max(per + dP, 0.0))
        dE = (ph1 - ph0) + dD
        take = dE < -thresh
        if not take and temp > 0.0 and np.isfinite(dE):
            take = rand[n] < np.exp(-dE / temp)
        if take:
            inside[i, j] = not inside[i, j]
            u[i, j] = new
            per += dP
            dir_ += dD
            ph0 = ph1
            acc += 1
        else:
            for a in range(5):
                for b in range(5):
                    smooth[i - 2 + a, j - 2 + b] -= sgn * st[a, b]
    return per, dir_, acc
