"""Frame-plan and power optimization of the tagged user.

The objective is the deterministic averaged spectral efficiency::

    DASE(q, P) = sum_{data slots t} SE(t) / (delta_M - 1)

Pilot slots contribute zero. :func:`opt_resource` enumerates frame plans
and, for each, alternates beamformer updates with projected gradient
ascent on the tagged user's ``(pilot_max, data_max)`` budget pair.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detequiv import assign_beamformers, slot_se
from .frame import FramePlan
from .scenario import Scenario

log = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    """Enumeration limits and ascent settings.

    ``step`` is the initial ascent step; ``None`` means ``0.1 * P_tot``.
    ``fd_step`` is the finite-difference step relative to ``P_tot``.
    """

    q_max: int = 6
    m_max: int = 3
    tol: float = 1e-7
    max_iter: int = 50
    max_iter_ao: int = 4
    step: float | None = None
    fd_step: float = 1e-4
    max_halvings: int = 20
    optimize_powers: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.q_max < 2 or self.m_max < 1:
            raise ValueError("need q_max >= 2 and m_max >= 1")
        if min(self.tol, self.max_iter, self.max_iter_ao, self.fd_step) <= 0:
            raise ValueError("optimizer settings must be positive")


@dataclass(frozen=True)
class PlanResult:
    sizes: tuple[int, ...]
    pilot_max: float
    data_max: float
    dase: float
    beamformers: dict = field(repr=False)  # slot -> per-user beamformers
    history: tuple[float, ...] = ()

    @property
    def frames(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class ResourceSolution:
    sizes: tuple[int, ...]
    frames: int
    pilot_max: float
    data_max: float
    beamformers: tuple[np.ndarray, ...]  # tagged user's beamformer per slot, None at pilots
    dase: float
    plans: tuple[PlanResult, ...] = field(repr=False)
    best_index: int = 0


def enumerate_plans(q_max: int, m_max: int) -> list[tuple[int, ...]]:
    """All plans with ``M <= m_max`` frames of sizes ``2..ceil(q_max / M)``, in tie-break order."""
    plans = []
    for m in range(1, m_max + 1):
        upper = math.ceil(q_max / m)
        if upper < 2:
            log.info("no frame sizes for M=%d (q_max=%d)", m, q_max)
            continue
        plans.extend(itertools.product(range(2, upper + 1), repeat=m))
    if not plans:
        raise ValueError("empty plan enumeration")
    return plans


def dase(scenario: Scenario, plan: FramePlan, powers: Sequence[float] | None = None,
         beamformers: dict | None = None, per_slot: bool = False):
    """DASE of ``plan`` with tagged budgets ``powers = (pilot_max, data_max)``.

    ``beamformers`` maps data slots to per-user beamformer lists; missing
    slots get every user's rule applied at the given powers.
    """
    if powers is None:
        powers = (scenario.tagged.budget.pilot_max, scenario.tagged.budget.data_max)
    cfg = scenario.detequiv
    values = {t: 0.0 for t in range(1, plan.horizon + 1)}
    for t in plan.data_slots:
        slot = scenario.slot(plan, t, tuple(powers))
        ws = None if beamformers is None else beamformers.get(t)
        values[t] = slot_se(slot, cfg, ws)[0].se
    total = math.fsum(values.values()) / plan.horizon
    return (total, values) if per_slot else total


def update_beamformers(scenario: Scenario, plan: FramePlan, powers, previous: dict | None = None) -> dict:
    """Per-slot beamformers of all users at the given tagged budgets."""
    out = {}
    for t in plan.data_slots:
        slot = scenario.slot(plan, t, tuple(powers))
        init = None if previous is None else previous.get(t)
        out[t] = [u.beamformer for u in assign_beamformers(slot, scenario.detequiv, init).users]
    return out


def project_power(v, p_tot: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, x_1 + x_2 <= p_tot}``."""
    if p_tot <= 0:
        raise ValueError("total power must be positive")
    x = np.maximum(np.asarray(v, dtype=float), 0.0)
    if x.sum() <= p_tot:
        return x
    # projection onto the simplex face 1^T x = p_tot
    y = np.asarray(v, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - p_tot
    k = np.nonzero(u - css / np.arange(1, y.size + 1) > 0)[0][-1]
    return np.maximum(y - css[k] / (k + 1), 0.0)


def _gradient(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        if x[i] - h >= 0:
            g[i] = (f(x + e) - f(x - e)) / (2 * h)
        else:
            g[i] = (f(x + e) - f(x)) / h
    return g


def power_ascent(objective: Callable[[np.ndarray], float], init, p_tot: float,
                 config: OptimizerConfig = OptimizerConfig()) -> tuple[np.ndarray, float]:
    """Projected gradient ascent with backtracking; returns the best-seen point and value."""
    x = project_power(init, p_tot)
    fx = objective(x)
    best_x, best_f = x, fx
    h = config.fd_step * p_tot
    mu0 = config.step if config.step is not None else 0.1 * p_tot
    for _ in range(config.max_iter):
        grad = _gradient(objective, x, h)
        if not np.any(grad):
            break
        mu = mu0
        for _ in range(config.max_halvings + 1):
            xn = project_power(x + mu * grad, p_tot)
            fn = objective(xn)
            if fn > fx:
                break
            mu /= 2
        else:
            break
        step, gain = np.linalg.norm(xn - x), fn - fx
        x, fx = xn, fn
        if fx > best_f:
            best_x, best_f = x, fx
        if step < config.tol or gain < config.tol:
            break
    return best_x, best_f


def optimize_plan(scenario: Scenario, sizes: Sequence[int], config: OptimizerConfig) -> PlanResult:
    """Alternating beamformer and power updates for one plan."""
    plan = scenario.plan(sizes)
    b = scenario.tagged.budget
    x = np.array([b.pilot_max, b.data_max], dtype=float)
    p_tot = b.total
    best = None
    history = []
    bfs = None
    for _ in range(config.max_iter_ao):
        bfs = update_beamformers(scenario, plan, x, bfs)
        fx = dase(scenario, plan, x, bfs)
        if best is None or fx > best[0]:
            best = (fx, x.copy(), bfs)
        history.append(best[0])
        if not config.optimize_powers:
            break
        x_new, f_new = power_ascent(lambda p: dase(scenario, plan, p, bfs), x, p_tot, config)
        if f_new > best[0]:
            best = (f_new, x_new.copy(), bfs)
        history.append(best[0])
        if f_new - fx < config.tol:
            break
        x = x_new
    fx, x, bfs = best
    return PlanResult(tuple(sizes), float(x[0]), float(x[1]), fx, bfs, tuple(history))


def opt_resource(scenario: Scenario, config: OptimizerConfig = OptimizerConfig()) -> ResourceSolution:
    """Search frame plans and powers for the largest DASE."""
    plans = enumerate_plans(config.q_max, config.m_max)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(lambda q: optimize_plan(scenario, q, config), plans))
    else:
        results = [optimize_plan(scenario, q, config) for q in plans]
    best = 0
    for i, r in enumerate(results):
        if r.dase > results[best].dase + TIE_TOL:
            best = i
    r = results[best]
    plan = scenario.plan(r.sizes)
    tagged = tuple(r.beamformers[t][0] if t in r.beamformers else None
                   for t in range(1, plan.horizon + 1))
    return ResourceSolution(r.sizes, r.frames, r.pilot_max, r.data_max, tagged, r.dase,
                            tuple(results), best)
