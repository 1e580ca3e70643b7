"""Alternating minimization of ``D(u) + Phi(Per*(E))`` over admissible pairs.

Each outer iteration replaces ``u`` by the sign-constrained Dirichlet
minimizer for the current ``E`` and then runs flip sweeps over the region.
Randomness is drawn per outer iteration from ``default_rng([seed, k])`` so a
run resumed from a checkpoint continues exactly as the uninterrupted one.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .elliptic import sign_constrained_replacement
from .energy import EnergyBreakdown, FlipCache, NonlinearityProfile, total_energy
from .field import AdmissiblePair, Region
from .io import load_checkpoint, save_checkpoint, write_json
from .kernel import InteractionKernel
from .sweeps import sweep_classical, sweep_fractional

__all__ = [
    "MinimizeOptions",
    "MinimizeReport",
    "alternating_minimize",
    "annealed_restarts",
    "minimize_set_sweep",
    "minimize_u",
]


@dataclass(frozen=True)
class MinimizeOptions:
    max_outer: int = 60
    flip_sweeps_per_outer: int = 2
    energy_tol: float = 1e-9
    seed: int = 0
    temperature: float = 0.0
    cooling: float = 0.7
    anneal_steps: int = 0
    u_tol: float = 1e-10
    relax_u: bool = True
    audit_every: int = 10
    audit_tol: float = 1e-8
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.max_outer < 1 or self.flip_sweeps_per_outer < 0:
            raise ValueError("iteration counts must be positive")
        if self.energy_tol < 0 or self.temperature < 0:
            raise ValueError("tolerances and temperature must be nonnegative")
        if not 0 < self.cooling <= 1:
            raise ValueError("cooling factor must lie in (0, 1]")
        if self.checkpoint_every and not self.checkpoint_dir:
            raise ValueError("checkpointing needs a checkpoint directory")


@dataclass(frozen=True)
class MinimizeReport:
    pair: AdmissiblePair
    breakdown: EnergyBreakdown
    energy_trace: tuple
    accepted_flips: tuple
    converged: bool
    outer_iterations: int
    max_audit_error: float
    seed: int
    timings: dict = field(default_factory=dict)


def minimize_u(pair: AdmissiblePair, omega: Region, tol: float = 1e-10) -> AdmissiblePair:
    """Best ``u`` for a fixed ``E``: the Dirichlet minimizer under the sign constraint."""
    u, _ = sign_constrained_replacement(pair.u, pair.e, omega, tol)
    return AdmissiblePair(u, pair.e)


def _sweep(cache: FlipCache, order, rand, temp, thresh, relax):
    om = cache.omega.mask
    if cache.om_i is None:
        cache.om_i, cache.om_j = (a.astype(np.int64) for a in np.nonzero(om))
    packed = cache.profile.packed()
    if cache.sigma < 1.0:
        per, dd, acc = sweep_fractional(order, rand, float(temp), float(thresh), cache.inside, cache.u,
                                        cache.u_frozen, om, cache.om_i, cache.om_j, cache.pot_e,
                                        cache.pot_all, cache.warr, *packed, float(cache.perimeter),
                                        float(cache.dirichlet), bool(relax))
    else:
        per, dd, acc = sweep_classical(order, rand, float(temp), float(thresh), cache.inside, cache.u,
                                       cache.u_frozen, om, cache.om_i, cache.om_j, cache.smooth, cache.frac,
                                       float(cache.grid.h), *packed, float(cache.perimeter),
                                       float(cache.dirichlet), bool(relax))
    cache.perimeter, cache.dirichlet = float(per), float(dd)
    cache.flips += int(acc)
    return int(acc)


def minimize_set_sweep(pair: AdmissiblePair, omega: Region, p: NonlinearityProfile, sigma: float,
                       opts: MinimizeOptions, cache: FlipCache | None = None, sweep_index: int = 0,
                       temperature: float = 0.0):
    """One seeded flip sweep over the free cells of ``omega``; returns ``(pair, accepted)``."""
    if cache is None:
        cache = FlipCache.build(pair, omega, p, sigma)
    if opts.flip_sweeps_per_outer == 0:
        return pair, 0
    rng = np.random.default_rng([opts.seed, sweep_index])
    n = cache.omega.ncells
    order = rng.permutation(n).astype(np.int64)
    rand = rng.random(n)
    acc = _sweep(cache, order, rand, temperature, opts.energy_tol * pair.grid.h**2, opts.relax_u)
    return cache.pair(), acc


def alternating_minimize(
    pair: AdmissiblePair,
    omega: Region,
    p: NonlinearityProfile,
    sigma: float,
    opts: MinimizeOptions = MinimizeOptions(),
    kernel: InteractionKernel | None = None,
    resume_from: str | None = None,
) -> MinimizeReport:
    """Lower the energy by alternating ``u``-solves and greedy (or annealed) flip sweeps.

    In greedy mode (zero temperature) the energy trace never increases. The
    loop stops when an outer iteration accepts no flip and lowers the energy
    by at most ``energy_tol``.
    """
    if pair.violation_count:
        raise ValueError("initial pair is not admissible")
    start = 0
    trace: list[float] = []
    if resume_from is not None:
        pair = load_checkpoint(Path(resume_from) / "pair")
        state = json.loads((Path(resume_from) / "state.json").read_text())
        start = int(state["iteration"])
        trace = [float(v) for v in state["energy_trace"]]
    t0 = time.perf_counter()
    cache = FlipCache.build(pair, omega, p, sigma, kernel)
    timings = {"build": time.perf_counter() - t0, "u_step": 0.0, "sweeps": 0.0, "audit": 0.0}
    if not trace:
        trace.append(cache.energy())
    thresh = opts.energy_tol * pair.grid.h**2
    accepted: list[int] = []
    max_audit = 0.0
    converged = False
    n = cache.omega.ncells
    it = start
    for it in range(start, opts.max_outer):
        t = time.perf_counter()
        cur = cache.pair()
        u_new, _ = sign_constrained_replacement(cur.u, cur.e, omega, opts.u_tol)
        e_before_u = cache.energy()
        cache.set_u(u_new.values)
        if cache.energy() > e_before_u + 1e-12 * max(1.0, abs(e_before_u)):
            # the constrained solve cannot raise the energy; keep the old field if round-off says otherwise
            cache.set_u(cur.u.values)
        timings["u_step"] += time.perf_counter() - t
        annealing = opts.temperature > 0 and it < opts.anneal_steps
        temp = opts.temperature * opts.cooling**it if annealing else 0.0
        rng = np.random.default_rng([opts.seed, it])
        t = time.perf_counter()
        acc = 0
        for _ in range(opts.flip_sweeps_per_outer):
            order = rng.permutation(n).astype(np.int64)
            rand = rng.random(n)
            acc += _sweep(cache, order, rand, temp, thresh, opts.relax_u)
        timings["sweeps"] += time.perf_counter() - t
        accepted.append(acc)
        trace.append(cache.energy())
        if opts.audit_every and (it + 1) % opts.audit_every == 0:
            t = time.perf_counter()
            err = cache.audit()
            timings["audit"] += time.perf_counter() - t
            max_audit = max(max_audit, err)
            if err > opts.audit_tol * max(1.0, abs(trace[-1])):
                from .elliptic import SolverError

                raise SolverError(f"cached energy drifted from recomputation by {err:.3e}", err)
        if opts.checkpoint_every and (it + 1) % opts.checkpoint_every == 0:
            _write_checkpoint(opts.checkpoint_dir, cache.pair(), it + 1, trace)
        if not annealing and acc == 0 and trace[-2] - trace[-1] <= opts.energy_tol:
            converged = True
            break
    final = cache.pair()
    t = time.perf_counter()
    bd = total_energy(final, omega, p, sigma, cache.kernel)
    timings["audit"] += time.perf_counter() - t
    max_audit = max(max_audit, abs(bd.total - trace[-1]))
    return MinimizeReport(final, bd, tuple(trace), tuple(accepted), converged, it + 1, max_audit, opts.seed, timings)


def _write_checkpoint(directory, pair, iteration, trace):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(d / "pair", pair)
    write_json(d / "state.json", {"iteration": iteration, "energy_trace": list(trace)})


def with_seed(opts: MinimizeOptions, seed: int) -> MinimizeOptions:
    return replace(opts, seed=seed)


def annealed_restarts(starts, omega: Region, p: NonlinearityProfile, sigma: float,
                      opts: MinimizeOptions, workers: int | None = None) -> list[MinimizeReport]:
    """Independent runs from several starting pairs, seeds ``opts.seed + k``; best first."""
    from .parallel import pmap

    starts = list(starts)
    reps = pmap(lambda k: alternating_minimize(starts[k], omega, p, sigma, with_seed(opts, opts.seed + k)),
                range(len(starts)), workers)
    return sorted(reps, key=lambda r: r.breakdown.total)
