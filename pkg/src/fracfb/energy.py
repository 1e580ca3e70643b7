"""Total energy ``D(u) + Phi(Per*(E))`` and its change under single-cell flips."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .elliptic import dirichlet_energy
from .field import AdmissiblePair, Region
from .kernel import InteractionKernel
from .marching import LOCALITY, smooth_indicator, square_fraction, square_lengths, stencil2d
from .perimeter import PerimeterValue, convolver, default_kernel, omega_tails, per_star

__all__ = [
    "EnergyBreakdown",
    "FlipCache",
    "NonlinearityProfile",
    "flip_delta",
    "phi_eval",
    "total_energy",
]

_KIND_CODES = {"identity": 0, "power_cap": 1, "table": 2}


@dataclass(frozen=True)
class NonlinearityProfile:
    """Nondecreasing ``Phi`` applied to the perimeter.

    ``power_cap``: ``t^gamma`` on ``[0, 1]``, ``1`` on ``[1, k_o]`` and
    ``1 + coercive_slope (t - k_o)`` beyond. ``table``: piecewise linear
    through ``(table_t, table_phi)`` starting at ``(0, 0)``, continued with
    ``coercive_slope`` after the last knot. ``identity``: ``Phi(t) = t``.
    """

    kind: str = "identity"
    gamma: float = 1.0
    k_o: float = 1.0
    coercive_slope: float = 1.0
    table_t: tuple = ()
    table_phi: tuple = ()

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "power_cap":
            if not self.gamma > 0:
                raise ValueError("gamma must be positive")
            if not self.k_o >= 1:
                raise ValueError("k_o must be at least 1")
            if not self.coercive_slope > 0:
                raise ValueError("coercive_slope must be positive")
        if self.kind == "table":
            t = np.asarray(self.table_t, float)
            v = np.asarray(self.table_phi, float)
            if t.size < 2 or t.size != v.size:
                raise ValueError("table needs at least two matching knots")
            if t[0] != 0.0 or v[0] != 0.0:
                raise ValueError("table must start at (0, 0)")
            if np.any(np.diff(t) <= 0) or np.any(np.diff(v) < 0):
                raise ValueError("table knots must increase and values must not decrease")
            if not self.coercive_slope > 0:
                raise ValueError("coercive_slope must be positive")

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    def packed(self):
        """Arguments understood by the compiled evaluator."""
        tk = np.asarray(self.table_t if self.kind == "table" else (0.0,), np.float64)
        vk = np.asarray(self.table_phi if self.kind == "table" else (0.0,), np.float64)
        return (self.code, float(self.gamma), float(self.k_o), float(self.coercive_slope), tk, vk)

    def lipschitz_on(self, q: float) -> float:
        """Lipschitz constant of ``Phi`` on ``[1/q, q]``."""
        ts = np.linspace(1.0 / q, q, 2001)
        return float(max(phi_eval(self, t)[1] for t in ts))


@njit
def phi_value(code, gamma, k_o, slope, tk, vk, t):
    if code == 0:
        return t
    if code == 1:
        if t <= 1.0:
            return t**gamma if t > 0.0 else 0.0
        if t <= k_o:
            return 1.0
        return 1.0 + slope * (t - k_o)
    n = tk.size
    if t >= tk[n - 1]:
        return vk[n - 1] + slope * (t - tk[n - 1])
    k = 0
    while tk[k + 1] <= t:
        k += 1
    return vk[k] + (vk[k + 1] - vk[k]) * (t - tk[k]) / (tk[k + 1] - tk[k])


def phi_eval(p: NonlinearityProfile, t: float) -> tuple[float, float]:
    """``(Phi(t), Phi'(t))`` with the right derivative at knots."""
    if t < 0:
        raise ValueError("perimeter must be nonnegative")
    code, g, ko, slope, tk, vk = p.packed()
    fn = getattr(phi_value, "py_func", phi_value)
    val = fn(code, g, ko, slope, tk, vk, float(t))
    if code == 0:
        return val, 1.0
    if code == 1:
        if t < 1.0:
            return val, (g * t ** (g - 1.0)) if t > 0 else (np.inf if g < 1 else (1.0 if g == 1 else 0.0))
        if t < ko:
            return val, 0.0
        return val, slope
    if t >= tk[-1]:
        return val, slope
    k = int(np.searchsorted(tk, t, side="right") - 1)
    return val, float((vk[k + 1] - vk[k]) / (tk[k + 1] - tk[k]))


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    perimeter: PerimeterValue
    phi_of_perimeter: float
    total: float


def total_energy(
    pair: AdmissiblePair,
    omega: Region,
    p: NonlinearityProfile,
    sigma: float,
    kernel: InteractionKernel | None = None,
) -> EnergyBreakdown:
    if pair.violation_count:
        raise ValueError(f"pair is not admissible ({pair.violation_count} sign violations)")
    d = dirichlet_energy(pair.u, omega)
    per = per_star(pair.e, omega, sigma, kernel)
    ph = phi_eval(p, per.value)[0]
    return EnergyBreakdown(d, per, ph, d + ph)


# ------------------------------------------------------------------ flips


@dataclass
class FlipCache:
    """Incremental state for single-cell flips of ``E`` inside ``omega``.

    Fractional order keeps, for every region cell ``x``, the potential
    ``A(x)`` of ``E`` (in-box pair weights plus the exterior density) and the
    potential ``B(x)`` of everything; flipping ``c`` changes the perimeter by
    ``+-(2 A(c) - B(c))`` and updates ``A`` by one row of weights. Classical
    order keeps the smoothed indicator and re-traces the 6 x 6 dual squares
    around ``c``.
    """

    omega: Region
    sigma: float
    profile: NonlinearityProfile
    inside: np.ndarray
    u: np.ndarray
    u_frozen: np.ndarray
    e_frozen: np.ndarray
    perimeter: float
    dirichlet: float
    kernel: InteractionKernel | None = None
    # fractional state
    om_i: np.ndarray | None = None
    om_j: np.ndarray | None = None
    om_index: np.ndarray | None = None
    pot_e: np.ndarray | None = None
    pot_all: np.ndarray | None = None
    warr: np.ndarray | None = None
    # classical state
    smooth: np.ndarray | None = None
    frac: np.ndarray | None = None
    length_cells: float = 0.0
    flips: int = field(default=0)
    relax: bool = False

    @classmethod
    def build(cls, pair: AdmissiblePair, omega: Region, p: NonlinearityProfile, sigma: float,
              kernel: InteractionKernel | None = None) -> "FlipCache":
        g = pair.grid
        margin = omega.margin_to_box()
        need = LOCALITY + 1 + (int(np.ceil(g.upsilon / g.h)) if sigma == 1.0 else 0)
        if margin < need:
            raise ValueError(f"region must stay {need} cells away from the box edge (margin {margin})")
        inside = np.array(pair.e.inside, dtype=np.bool_)
        u = np.array(pair.u.values, dtype=np.float64)
        c = cls(omega, float(sigma), p, inside, u, np.array(pair.u.frozen), np.array(pair.e.frozen), 0.0,
                dirichlet_energy(pair.u, omega))
        if sigma < 1.0:
            k = kernel or default_kernel(sigma, g)
            c.kernel = k
            conv = convolver(k, g.shape)
            om = omega.mask
            c.om_i, c.om_j = (a.astype(np.int64) for a in np.nonzero(om))
            c.om_index = -np.ones(g.shape, np.int64)
            c.om_index[om] = np.arange(c.om_i.size)
            te, tall = omega_tails(g, inside, om, sigma)
            h2 = g.h**2
            c.pot_e = conv(inside.astype(np.float64))[om] + h2 * te
            c.pot_all = conv.total()[om] + h2 * tall
            c.warr = np.ascontiguousarray(conv.warr)
            c.perimeter = per_star(pair.e, omega, sigma, k).value
        else:
            c.smooth = smooth_indicator(inside)
            c.frac = square_fraction(omega.collar().mask)
            c.length_cells = float(np.sum(square_lengths(c.smooth) * c.frac))
            c.perimeter = c.length_cells * g.h
        return c

    @property
    def grid(self):
        return self.omega.grid

    def _u_after(self, i, j):
        """New ``u`` value at a flipped cell, or ``None`` when the flip is not allowed.

        By default an incompatible value is set to zero; with ``relax`` the
        value becomes the neighbour mean clamped to the sign of the new side.
        """
        ui = self.u[i, j]
        if self.relax and not self.u_frozen[i, j]:
            avg = 0.25 * (self.u[i - 1, j] + self.u[i + 1, j] + self.u[i, j - 1] + self.u[i, j + 1])
            return min(avg, 0.0) if self.inside[i, j] else max(avg, 0.0)
        if self.inside[i, j] and ui > 0 or (not self.inside[i, j]) and ui < 0:
            return None if self.u_frozen[i, j] else 0.0
        return ui

    def _dirichlet_change(self, i, j, new):
        old = self.u[i, j]
        if new == old:
            return 0.0
        d = 0.0
        for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            w = 1.0 if self.omega.mask[a, b] else 0.5
            d += w * ((new - self.u[a, b]) ** 2 - (old - self.u[a, b]) ** 2)
        return d

    def perimeter_change(self, i, j) -> float:
        if self.sigma < 1.0:
            k = self.om_index[i, j]
            s = 2.0 * self.pot_e[k] - self.pot_all[k]
            return s if self.inside[i, j] else -s
        from .marching import window_length

        i0, i1, j0, j1 = i - LOCALITY, i + LOCALITY, j - LOCALITY, j + LOCALITY
        before = window_length(self.smooth, i0, i1, j0, j1, self.frac, 0.5)
        sgn = -1.0 if self.inside[i, j] else 1.0
        st = sgn * stencil2d()
        self.smooth[i - 2: i + 3, j - 2: j + 3] += st
        after = window_length(self.smooth, i0, i1, j0, j1, self.frac, 0.5)
        self.smooth[i - 2: i + 3, j - 2: j + 3] -= st
        return (after - before) * self.grid.h

    def delta(self, cell) -> tuple[float, float, float]:
        """``(dE, dPer, dD)`` for flipping ``cell``; ``dE = inf`` when the flip is not allowed."""
        i, j = int(cell[0]), int(cell[1])
        if self.e_frozen[i, j] or not self.omega.mask[i, j]:
            return np.inf, 0.0, 0.0
        new = self._u_after(i, j)
        if new is None:
            return np.inf, 0.0, 0.0
        dD = self._dirichlet_change(i, j, new)
        dP = self.perimeter_change(i, j)
        ph0 = phi_eval(self.profile, self.perimeter)[0]
        ph1 = phi_eval(self.profile, max(self.perimeter + dP, 0.0))[0]
        return (ph1 - ph0) + dD, dP, dD

    def accept(self, cell) -> None:
        i, j = int(cell[0]), int(cell[1])
        dE, dP, dD = self.delta((i, j))
        if not np.isfinite(dE):
            raise ValueError("flip not allowed at this cell")
        new = self._u_after(i, j)
        joining = not self.inside[i, j]
        if self.sigma < 1.0:
            nx, ny = self.grid.shape
            sgn = 1.0 if joining else -1.0
            self.pot_e += sgn * self.warr[self.om_i - i + nx - 1, self.om_j - j + ny - 1]
        else:
            sgn = 1.0 if joining else -1.0
            self.smooth[i - 2: i + 3, j - 2: j + 3] += sgn * stencil2d()
            self.length_cells += dP / self.grid.h
        self.inside[i, j] = joining
        self.u[i, j] = new
        self.perimeter += dP
        self.dirichlet += dD
        self.flips += 1

    def set_u(self, u: np.ndarray) -> None:
        from .field import ScalarField

        self.u = np.array(u, dtype=np.float64)
        self.dirichlet = dirichlet_energy(ScalarField(self.grid, self.u, self.u_frozen), self.omega)

    def pair(self) -> AdmissiblePair:
        from .field import IndicatorSet, ScalarField

        return AdmissiblePair(
            ScalarField(self.grid, self.u, self.u_frozen),
            IndicatorSet(self.grid, self.inside, self.e_frozen),
        )

    def energy(self) -> float:
        return self.dirichlet + phi_eval(self.profile, self.perimeter)[0]

    def audit(self) -> float:
        """Largest discrepancy between cached and freshly computed perimeter and Dirichlet energy."""
        pr = self.pair()
        fresh_p = per_star(pr.e, self.omega, self.sigma, self.kernel).value
        fresh_d = dirichlet_energy(pr.u, self.omega)
        return max(abs(fresh_p - self.perimeter), abs(fresh_d - self.dirichlet))


def flip_delta(pair: AdmissiblePair, cell, p: NonlinearityProfile, sigma: float, state: FlipCache | None = None,
               omega: Region | None = None) -> tuple[float, float]:
    """Energy and perimeter change of flipping ``cell``, using (or building) a :class:`FlipCache`."""
    if state is None:
        if omega is None:
            raise ValueError("need either a flip cache or the region")
        state = FlipCache.build(pair, omega, p, sigma)
    dE, dP, _ = state.delta(cell)
    return dE, dP
