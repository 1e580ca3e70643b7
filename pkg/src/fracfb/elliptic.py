"""Discrete Dirichlet energy and harmonic replacement on the 5-point stencil.

Every cell owns half of each of its four edges, so an edge between two
region cells has weight 1 and an edge between a region cell and a neighbour
outside has weight 1/2:

    D(u; Omega) = sum_edges w_e (u_i - u_j)^2.

With this convention ``u(x, y) = x`` on the unit square has energy exactly 1.
Minimizing ``D`` over the non-frozen cells gives the 5-point Laplace
equation ``4 u_i = sum of the four neighbours`` there; the residual reported
everywhere is the max-norm of ``4 u_i - sum u_j`` (not scaled by ``h``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .field import IndicatorSet, Region, ScalarField

__all__ = [
    "SolveReport",
    "SolverError",
    "dirichlet_energy",
    "harmonic_replacement",
    "laplacian_residual",
    "max_principle_check",
    "sign_constrained_replacement",
    "subharmonicity_defect",
]


class SolverError(RuntimeError):
    """Iterative solve failed; carries the last residual."""

    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    free_cells: int
    active_cells: int = 0
    outer_iterations: int = 1


def dirichlet_energy(u: ScalarField, omega: Region) -> float:
    v = u.values
    m = omega.mask.astype(np.float64)
    wx = 0.5 * (m[1:, :] + m[:-1, :])
    wy = 0.5 * (m[:, 1:] + m[:, :-1])
    return float(np.sum(wx * np.diff(v, axis=0) ** 2) + np.sum(wy * np.diff(v, axis=1) ** 2))


def _neighbour_sum(v: np.ndarray) -> np.ndarray:
    s = np.zeros_like(v)
    s[1:, :] += v[:-1, :]
    s[:-1, :] += v[1:, :]
    s[:, 1:] += v[:, :-1]
    s[:, :-1] += v[:, 1:]
    return s


def laplacian_residual(u: ScalarField, cells: np.ndarray) -> float:
    """Max of ``|4 u_i - sum_j u_j|`` over the given cells."""
    cells = np.asarray(cells, bool)
    if not cells.any():
        return 0.0
    r = 4.0 * u.values - _neighbour_sum(u.values)
    return float(np.max(np.abs(r[cells])))


def _check_interior(mask: np.ndarray):
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("cells to solve for must not touch the box edge")


def _solve_free(values: np.ndarray, free: np.ndarray, tol: float, maxiter: int):
    """Solve the 5-point Laplace equation on ``free`` with all other cells fixed, in place."""
    nfree = int(free.sum())
    if nfree == 0:
        return 0, 0.0
    idx = -np.ones(free.shape, np.int64)
    idx[free] = np.arange(nfree)
    fixed = np.where(free, 0.0, values)
    b = _neighbour_sum(fixed)[free]
    rows, cols = [np.arange(nfree)], [np.arange(nfree)]
    data = [np.full(nfree, 4.0)]
    for sl_a, sl_b in (
        ((slice(1, None), slice(None)), (slice(None, -1), slice(None))),
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None))),
        ((slice(None), slice(1, None)), (slice(None), slice(None, -1))),
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
    ):
        ia, ib = idx[sl_a], idx[sl_b]
        sel = (ia >= 0) & (ib >= 0)
        rows.append(ia[sel])
        cols.append(ib[sel])
        data.append(np.full(int(sel.sum()), -1.0))
    A = sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nfree, nfree))
    x0 = values[free].copy()
    M = sparse.diags(np.full(nfree, 0.25))
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, x0=x0, rtol=0.0, atol=0.25 * tol, maxiter=maxiter, M=M, callback=cb)
    res = float(np.max(np.abs(A @ x - b)))
    if res > tol:
        # one polishing pass; CG's recursive residual can drift from the true one
        x, info = spla.cg(A, b, x0=x, rtol=0.0, atol=0.1 * tol, maxiter=maxiter, M=M, callback=cb)
        res = float(np.max(np.abs(A @ x - b)))
    if res > tol:
        raise SolverError(f"conjugate gradients stopped at residual {res:.3e} after {count[0]} iterations", res)
    values[free] = x
    return count[0], res


def harmonic_replacement(
    u: ScalarField,
    solve_region: Region,
    zero_set: np.ndarray | None = None,
    tol: float = 1e-10,
    maxiter: int = 20000,
) -> tuple[ScalarField, SolveReport]:
    """Replace ``u`` on the non-frozen cells of ``solve_region`` by the discrete harmonic function.

    Cells in ``zero_set`` (if given) are set to zero and held there. Frozen
    cells are never modified.
    """
    free = solve_region.mask & ~u.frozen
    vals = u.values.copy()
    if zero_set is not None:
        pin = np.asarray(zero_set, bool) & free
        vals[pin] = 0.0
        free = free & ~pin
    _check_interior(free)
    it, res = _solve_free(vals, free, tol, maxiter)
    return ScalarField(u.grid, vals, u.frozen), SolveReport(it, res, int(free.sum()))


def sign_constrained_replacement(
    u: ScalarField,
    e: IndicatorSet,
    solve_region: Region,
    tol: float = 1e-10,
    maxiter: int = 20000,
    max_outer: int = 200,
) -> tuple[ScalarField, SolveReport]:
    """Minimize the Dirichlet energy subject to ``u >= 0`` on ``E`` and ``u <= 0`` off ``E``.

    Primal-dual active set iteration: cells held at zero are released when
    their multiplier changes sign, and free cells of the wrong sign are
    pinned. Each step solves the Laplace equation on the released cells.
    """
    free = solve_region.mask & ~u.frozen
    _check_interior(free)
    sgn = np.where(e.inside, 1.0, -1.0)
    vals = u.values.copy()
    active = free & (sgn * vals <= 0.0)
    vals[active] = 0.0
    total_it = 0
    res = 0.0
    eps = tol
    for outer in range(1, max_outer + 1):
        it, res = _solve_free(vals, free & ~active, tol, maxiter)
        total_it += it
        mult = sgn * (4.0 * vals - _neighbour_sum(vals))
        new_active = free & ((active & (mult > eps)) | (~active & (sgn * vals < -eps)))
        if np.array_equal(new_active, active):
            break
        active = new_active
        vals[active] = 0.0
    else:
        raise SolverError(f"active-set iteration did not settle in {max_outer} steps", res)
    # remove round-off sign violations on released cells
    tiny = free & (sgn * vals < 0.0)
    vals[tiny] = 0.0
    return ScalarField(u.grid, vals, u.frozen), SolveReport(total_it, res, int((free & ~active).sum()), int(active.sum()), outer)


def subharmonicity_defect(u: ScalarField, omega: Region) -> float:
    """Largest violation of ``w_i <= mean of neighbours`` for ``w = u^+`` and ``w = u^-``.

    Evaluated on region cells whose four neighbours are all in the region.
    """
    from .field import boundary_cells

    interior = omega.mask & ~boundary_cells(omega.mask)
    if not interior.any():
        return 0.0
    worst = -np.inf
    for w in (np.maximum(u.values, 0.0), np.maximum(-u.values, 0.0)):
        d = w - 0.25 * _neighbour_sum(w)
        worst = max(worst, float(d[interior].max()))
    return worst


def max_principle_check(u: ScalarField, omega: Region, a: float | None = None, side: str = "lower") -> float:
    """Worst violation of ``u >= a`` (``side="lower"``) or ``u <= a`` (``"upper"``) inside ``omega``.

    The bound must hold on the frozen cells outside ``omega``; by default
    ``a`` is their minimum (lower) or maximum (upper).
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    ext = u.frozen & ~omega.mask
    if not ext.any():
        raise ValueError("no frozen data outside the region")
    vals = u.values
    if a is None:
        a = float(vals[ext].min() if side == "lower" else vals[ext].max())
    if side == "lower":
        if np.any(vals[ext] < a):
            raise ValueError("exterior data violates the lower bound")
        return float(max(0.0, a - vals[omega.mask].min())) if omega.mask.any() else 0.0
    if np.any(vals[ext] > a):
        raise ValueError("exterior data violates the upper bound")
    return float(max(0.0, vals[omega.mask].max() - a)) if omega.mask.any() else 0.0


def _touches(mask):
    m = np.asarray(mask, bool)
    out = np.zeros_like(m)
    out[1:, :] |= m[:-1, :]
    out[:-1, :] |= m[1:, :]
    out[:, 1:] |= m[:, :-1]
    out[:, :-1] |= m[:, 1:]
    return out & ~m
