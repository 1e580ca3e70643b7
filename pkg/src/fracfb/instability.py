"""Energy comparisons around the saddle pair ``u = xy``, ``E = {xy > 0}``.

Small balls: the pair is compared with a competitor that agrees with it
outside ``B_{9r/10}``, vanishes in ``B_{3r/4}`` and, inside ``B_{r/2}``,
separates the two quadrants of ``E`` by removing a diagonal strip (corners
rounded). Its Dirichlet term scales like ``r^4`` and its perimeter gain like
``r^(2-sigma)``, so it wins for small ``r`` when ``Phi`` is a power with
``gamma < 4 / (2 - sigma)``.

Large balls: with ``Phi`` flat above the saddle's perimeter, no competitor can
lower the perimeter term below 1 and none can lower the Dirichlet term below
that of ``xy``. Three competitor families are tried; failure to beat the
saddle is reported as such (it is not a proof of minimality).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import sign_constrained_replacement
from .energy import EnergyBreakdown, NonlinearityProfile, total_energy
from .field import AdmissiblePair, Grid, IndicatorSet, Region, ScalarField, build_grid, omega_ball
from .minimizer import MinimizeOptions, alternating_minimize
from .parallel import pmap
from .perimeter import per_star

__all__ = [
    "InstabilityReport",
    "SaddleConfiguration",
    "competitor_small_ball",
    "large_ball_comparison",
    "pinched_cross",
    "run_instability",
    "saddle_pair",
    "small_ball_comparison",
    "smooth_step",
]


@dataclass(frozen=True)
class SaddleConfiguration:
    sigma: float = 0.5
    gamma: float = 1.0
    r_small_list: tuple = (0.05, 0.025, 0.0125, 0.00625)
    r_large: float = 1.0
    n: int = 512
    box_factor: float = 4.0
    pinch_width: float = 1.0 / 16.0
    upsilon: float | None = None
    restarts: int = 8
    seed: int = 0
    crossover_steps: int = 6

    def __post_init__(self):
        if not (0.0 < self.sigma <= 1.0):
            raise ValueError("sigma must lie in (0, 1]")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not (0.0 < self.pinch_width < 0.125):
            raise ValueError("pinch_width must lie in (0, 1/8)")
        if self.box_factor < 4.0:
            raise ValueError("the box must be at least four times the ball radius")
        if not self.r_small_list or min(self.r_small_list) <= 0 or self.r_large <= 0:
            raise ValueError("radii must be positive")

    def grid_for(self, r: float) -> Grid:
        half = self.box_factor * r
        ups = self.upsilon if self.upsilon is not None else min(0.01, 0.02 * half)
        return build_grid(self.n, half, ups)


def saddle_pair(grid: Grid, omega: Region | None = None) -> AdmissiblePair:
    u = ScalarField.from_function(grid, lambda X, Y: X * Y, omega)
    e = IndicatorSet.from_function(grid, lambda X, Y: X * Y > 0, omega)
    return AdmissiblePair(u, e)


def smooth_step(s):
    """Quintic C^2 transition: 0 for ``s <= 3/4``, 1 for ``s >= 9/10``."""
    s = np.asarray(s, float)
    t = np.clip((s - 0.75) / 0.15, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _dist_to_eroded(px, py, w, rho):
    """Distance from points of the first quadrant to ``{x>=rho, y>=rho, x+y>=w+rho*sqrt2}``."""
    c = w + rho * np.sqrt(2.0)
    inside = (px >= rho) & (py >= rho) & (px + py >= c)
    # the three boundary pieces: vertical ray, diagonal segment, horizontal ray
    v1 = np.array([rho, c - rho])
    v2 = np.array([c - rho, rho])
    d_vert = np.where(py >= v1[1], np.abs(px - rho), np.hypot(px - v1[0], py - v1[1]))
    d_hor = np.where(px >= v2[0], np.abs(py - rho), np.hypot(px - v2[0], py - v2[1]))
    dx, dy = v2 - v1
    t = np.clip(((px - v1[0]) * dx + (py - v1[1]) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    d_seg = np.hypot(px - (v1[0] + t * dx), py - (v1[1] + t * dy))
    return np.where(inside, 0.0, np.minimum(np.minimum(d_vert, d_hor), d_seg))


def pinched_cross(X, Y, pinch_width: float = 1.0 / 16.0, rounding: bool = True):
    """Membership of the unit-scale competitor set: the cross with the two quadrants
    separated by the strip ``|x + y| < w`` inside ``B_{1/2}``."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    cross = X * Y > 0
    w = pinch_width
    inner = X * X + Y * Y < 0.25
    if not rounding:
        return cross & ~(inner & (np.abs(X + Y) < w))
    # opening of each quadrant piece by a disc of radius w rounds its two corners
    flip = X + Y < 0
    ax = np.where(flip, -X, X)
    ay = np.where(flip, -Y, Y)
    opened = _dist_to_eroded(ax, ay, w, w) <= w
    return np.where(inner, cross & opened, cross)


def competitor_small_ball(grid: Grid, r: float, pinch_width: float = 1.0 / 16.0,
                          omega: Region | None = None, rounding: bool = True) -> AdmissiblePair:
    """Competitor pair in ``B_r``: ``u = xy psi(|X|/r)`` and the pinched cross scaled by ``r``."""
    if r < 20 * grid.h:
        raise ValueError("competitor under-resolved")
    if not (0.0 < pinch_width < 0.125):
        raise ValueError("pinch_width must lie in (0, 1/8)")
    X, Y = grid.centers()
    psi = smooth_step(np.hypot(X, Y) / r)
    u = X * Y * psi + 0.0  # "+ 0.0" turns -0.0 into 0.0
    e = pinched_cross(X / r, Y / r, pinch_width, rounding)
    return AdmissiblePair(ScalarField.from_values(grid, u, omega), IndicatorSet.from_mask(grid, e, omega))


def _bd_dict(bd: EnergyBreakdown) -> dict:
    return {
        "dirichlet": bd.dirichlet,
        "perimeter": bd.perimeter.value,
        "perimeter_kind": bd.perimeter.kind,
        "truncation_bound": bd.perimeter.truncation_bound,
        "phi_of_perimeter": bd.phi_of_perimeter,
        "total": bd.total,
    }


def small_ball_comparison(cfg: SaddleConfiguration, r: float, p: NonlinearityProfile) -> dict:
    g = cfg.grid_for(r)
    om = omega_ball(g, r)
    sad = saddle_pair(g, om)
    comp = competitor_small_ball(g, r, cfg.pinch_width, om)
    b0 = total_energy(sad, om, p, cfg.sigma)
    b1 = total_energy(comp, om, p, cfg.sigma)
    gap = b0.total - b1.total
    scale = r ** ((2.0 - cfg.sigma) * p.gamma) if p.kind == "power_cap" else r ** (2.0 - cfg.sigma)
    return {
        "r": r,
        "h": g.h,
        "upsilon": g.upsilon,
        "saddle": _bd_dict(b0),
        "competitor": _bd_dict(b1),
        "gap": gap,
        "normalized_gap": gap / scale,
        "dirichlet_increase": b1.dirichlet - b0.dirichlet,
        "perimeter_gain": b0.perimeter.value - b1.perimeter.value,
        "beaten": bool(b1.total < b0.total),
        "margin_below_truncation": bool(abs(gap) <= b0.perimeter.truncation_bound + b1.perimeter.truncation_bound),
    }


def _perturbed(pair: AdmissiblePair, om: Region, rng, fraction: float) -> AdmissiblePair:
    ins = pair.e.inside.copy()
    u = pair.u.values.copy()
    cand = om.mask & ~pair.u.frozen
    flip = cand & (rng.random(ins.shape) < fraction)
    ins[flip] = ~ins[flip]
    u[flip] = 0.0
    return AdmissiblePair(ScalarField(pair.grid, u, pair.u.frozen), IndicatorSet(pair.grid, ins, pair.e.frozen))


def large_ball_comparison(cfg: SaddleConfiguration, opts: MinimizeOptions, p_base: NonlinearityProfile) -> dict:
    R = cfg.r_large
    g = cfg.grid_for(R)
    om = omega_ball(g, R)
    sad = saddle_pair(g, om)
    per0 = per_star(sad.e, om, cfg.sigma).value
    k_o = per0 + 3.0
    p = NonlinearityProfile("power_cap", gamma=cfg.gamma, k_o=k_o, coercive_slope=p_base.coercive_slope)
    b0 = total_energy(sad, om, p, cfg.sigma)
    out = {"r_large": R, "h": g.h, "upsilon": g.upsilon, "k_o": k_o, "saddle": _bd_dict(b0), "competitors": {}}
    # (a) everything in E where the sign allows, u re-solved
    ins = sad.e.inside | (om.mask & ~(sad.u.frozen & (sad.u.values < 0)))
    e_all = IndicatorSet(g, ins, sad.e.frozen)
    u0 = np.where(om.mask & ~sad.u.frozen, 0.0, sad.u.values)
    ua, _ = sign_constrained_replacement(ScalarField(g, u0, sad.u.frozen), e_all, om)
    ba = total_energy(AdmissiblePair(ua, e_all), om, p, cfg.sigma)
    out["competitors"]["full_set_harmonic"] = _bd_dict(ba)
    # (b) the small-ball construction at the large radius
    comp = competitor_small_ball(g, R, cfg.pinch_width, om)
    bb = total_energy(comp, om, p, cfg.sigma)
    out["competitors"]["scaled_pinch"] = _bd_dict(bb)
    # (c) annealed restarts from perturbed saddles
    def restart(k):
        rng = np.random.default_rng([cfg.seed, 1000 + k])
        start = _perturbed(sad, om, rng, 0.05 + 0.05 * (k % 4))
        o = replace(opts, seed=cfg.seed * 1000 + k,
                    temperature=opts.temperature or 1e-3 * b0.total,
                    anneal_steps=opts.anneal_steps or 8)
        rep = alternating_minimize(start, om, p, cfg.sigma, o)
        return {"seed": o.seed, "total": rep.breakdown.total, "converged": rep.converged,
                "outer_iterations": rep.outer_iterations}

    runs = pmap(restart, range(cfg.restarts))
    best = min((r["total"] for r in runs), default=np.inf)
    out["competitors"]["annealed_restarts"] = {"best_total": best, "runs": runs}
    totals = [ba.total, bb.total, best]
    out["best_competitor_total"] = min(totals)
    out["not_beaten"] = bool(min(totals) >= b0.total - 1e-6)
    return out


def crossover_radius(cfg: SaddleConfiguration, p: NonlinearityProfile, r_lo: float, r_hi: float) -> float | None:
    """Radius where the small-ball competitor stops beating the saddle (geometric bisection)."""
    def gap(r):
        return small_ball_comparison(cfg, r, p)["gap"]

    g_lo, g_hi = gap(r_lo), gap(r_hi)
    if g_lo <= 0 or g_hi > 0:
        return None
    for _ in range(cfg.crossover_steps):
        mid = np.sqrt(r_lo * r_hi)
        if gap(mid) > 0:
            r_lo = mid
        else:
            r_hi = mid
    return float(np.sqrt(r_lo * r_hi))


@dataclass
class InstabilityReport:
    config: SaddleConfiguration
    profile: NonlinearityProfile
    small: list = field(default_factory=list)
    large: dict | None = None
    crossover: float | None = None
    timings: dict = field(default_factory=dict)

    @property
    def small_verdicts(self) -> list[bool]:
        return [s["beaten"] for s in self.small]

    def to_dict(self) -> dict:
        c = self.config
        return {
            "sigma": c.sigma,
            "gamma": c.gamma,
            "grid_n": c.n,
            "box_factor": c.box_factor,
            "pinch_width": c.pinch_width,
            "profile": {"kind": self.profile.kind, "gamma": self.profile.gamma, "k_o": self.profile.k_o,
                        "coercive_slope": self.profile.coercive_slope},
            "small_ball": self.small,
            "small_ball_monotone": _monotone(self.small),
            "large_ball": self.large,
            "large_ball_note": "not beaten by the tested competitor families; minimality itself is not checked",
            "crossover_radius": self.crossover,
            "timings": self.timings,
        }


def _monotone(small: list) -> bool:
    """Winning at a radius implies winning at every smaller listed radius."""
    rows = sorted(small, key=lambda s: s["r"])
    seen_loss = False
    for s in rows:
        if not s["beaten"]:
            seen_loss = True
        elif seen_loss:
            return False
    return True


def run_instability(cfg: SaddleConfiguration, p: NonlinearityProfile | None = None,
                    opts: MinimizeOptions = MinimizeOptions(), large: bool = True,
                    crossover: bool = True) -> InstabilityReport:
    p = p or NonlinearityProfile("power_cap", gamma=cfg.gamma, k_o=1e6)
    rep = InstabilityReport(cfg, p)
    t = time.perf_counter()
    radii = sorted(cfg.r_small_list, reverse=True)
    rep.small.extend(pmap(lambda r: small_ball_comparison(cfg, r, p), radii))
    rep.timings["small_ball"] = time.perf_counter() - t
    if large:
        t = time.perf_counter()
        rep.large = large_ball_comparison(cfg, opts, p)
        rep.timings["large_ball"] = time.perf_counter() - t
    if crossover:
        t = time.perf_counter()
        rep.crossover = crossover_radius(cfg, p, min(cfg.r_small_list), cfg.r_large)
        rep.timings["crossover"] = time.perf_counter() - t
    return rep
