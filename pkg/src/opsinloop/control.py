"""Designing the next stimulus to split two fitted candidates.

The objective rewards integrated squared disagreement between the two
candidates' predicted photocurrents and penalizes stimulus energy and
correlation with recently used stimuli (so consecutive stimuli keep probing
new directions).  It is maximized directly over the sampled stimulus values
with projected gradient ascent under box bounds, plus a minimum-energy floor
that keeps the trivial all-dark stimulus out of the feasible set.

The search restarts from several points: the previous optimum (or the
default opening pulse when there is none), a mid-amplitude constant, and
random piecewise-constant signals.  All restarts share one compiled
objective, so the whole design typically costs a few thousand kernel calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ContractError
from .grid import ControlSignal, TimeGrid, box_pulse, random_piecewise_constant, trapezoid
from .kinetics import ModelInstance, ModelKind, observation_gains, rest_state

# Objective value reported when either candidate's trajectory diverges.
DIVERGED_OBJECTIVE = -1e12

# Opening stimulus used before any design has happened: a box pulse at
# half the default ceiling covering the first fifth of the horizon.
FIRST_PULSE_AMPLITUDE = 5.0
FIRST_PULSE_FRACTION = 0.2

_SIM = {
    ModelKind.THREE_STATE: _kernels.sim3,
    ModelKind.FOUR_STATE: _kernels.sim4,
    ModelKind.SIX_STATE: _kernels.sim6,
}

_INPUT_ADJOINT = {
    ModelKind.THREE_STATE: _kernels.input_adjoint3,
    ModelKind.FOUR_STATE: _kernels.input_adjoint4,
    ModelKind.SIX_STATE: _kernels.input_adjoint6,
}


@dataclass(frozen=True)
class ControlDesignConfig:
    """Objective weights, feasible box, and search budget for stimulus design."""

    c1: float = 1e-3              # energy penalty weight
    c2: float = 5e-4              # history-correlation penalty weight
    u_min_energy: float = 1.0     # floor on integrated squared amplitude
    u_hi: float = 10.0            # box upper bound (lower bound is 0)
    memory_size: int = 5          # how many past stimuli the penalty sees
    restarts: int = 8
    max_outer: int = 100          # ascent iterations per restart
    step_init: float = 1.0        # initial ascent step, adapted per iterate
    tol: float = 1e-6             # stationarity tolerance on the projected gradient

    def __post_init__(self):
        for name in ("c1", "c2", "u_min_energy", "u_hi", "step_init", "tol"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ContractError(f"{name} must be positive, got {val!r}")
        for name in ("memory_size", "restarts", "max_outer"):
            val = getattr(self, name)
            if not (isinstance(val, (int, np.integer)) and val >= 1):
                raise ContractError(f"{name} must be a positive integer, got {val!r}")


class ControlMemory:
    """The most recent stimuli, newest first, capped at a fixed length."""

    def __init__(self, limit: int):
        if not (isinstance(limit, (int, np.integer)) and limit >= 1):
            raise ContractError(f"memory limit must be a positive integer, got {limit!r}")
        self.limit = int(limit)
        self._items: list[ControlSignal] = []

    def push(self, signal: ControlSignal) -> None:
        if self._items and self._items[0].grid != signal.grid:
            raise ContractError("stimulus grid differs from the signals already remembered")
        self._items.insert(0, signal)
        del self._items[self.limit:]

    @property
    def signals(self) -> tuple[ControlSignal, ...]:
        return tuple(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def first_pulse(grid: TimeGrid, cfg: ControlDesignConfig) -> ControlSignal:
    """The opening stimulus applied before any model-driven design."""
    amplitude = min(FIRST_PULSE_AMPLITUDE, cfg.u_hi)
    return box_pulse(grid, amplitude, 0.0, FIRST_PULSE_FRACTION * grid.horizon,
                     (0.0, cfg.u_hi))


def repair_energy(values: np.ndarray, grid: TimeGrid, cfg: ControlDesignConfig,
                  max_passes: int = 1) -> np.ndarray:
    """Scale a stimulus up until its energy meets the floor, re-applying the box.

    Rescaling can push samples above the ceiling where the projection then
    flattens them, so the pass may need repeating; ``max_passes=1`` is enough
    inside the line search, while the final repair loops until the floor
    holds.  Scaling alone stalls when every lit sample already sits at the
    ceiling, so multi-pass repairs fall back to raising the remaining samples
    to a common level; the feasibility invariant (floor below the all-ceiling
    energy) guarantees some level works.
    """
    out = np.clip(values, 0.0, cfg.u_hi)
    energy = trapezoid(out * out, grid.dt)
    if energy <= 1e-300:
        level = min(np.sqrt(cfg.u_min_energy / grid.horizon), cfg.u_hi)
        out = np.full(grid.n_points, level)
        energy = trapezoid(out * out, grid.dt)
    for _ in range(max_passes):
        if energy >= cfg.u_min_energy * (1.0 - 1e-12):
            break
        out = np.clip(out * np.sqrt(cfg.u_min_energy / energy), 0.0, cfg.u_hi)
        energy = trapezoid(out * out, grid.dt)
    if max_passes > 1 and energy < cfg.u_min_energy * (1.0 - 1e-12):
        lo, hi = 0.0, cfg.u_hi
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            lifted = np.maximum(out, mid)
            if trapezoid(lifted * lifted, grid.dt) >= cfg.u_min_energy:
                hi = mid
            else:
                lo = mid
        out = np.maximum(out, hi)
    return out


def _predictions(model: ModelInstance, u_values: np.ndarray, dt: float):
    """(states, outputs) of one candidate, or None when it diverges."""
    xs, bad = _SIM[model.kind](model.theta, u_values, dt, rest_state(model.kind))
    if bad >= 0:
        return None
    return xs, xs @ observation_gains(model.kind, model.theta)


def _penalties(u_values: np.ndarray, w: np.ndarray, memory_values: list[np.ndarray],
               cfg: ControlDesignConfig) -> float:
    pen = cfg.c1 * float(w @ (u_values * u_values))
    for past in memory_values:
        pen += cfg.c2 * float(w @ (u_values * past))
    return pen


def _objective_values(u_values: np.ndarray, model1: ModelInstance, model2: ModelInstance,
                      memory_values: list[np.ndarray], grid: TimeGrid,
                      cfg: ControlDesignConfig):
    """Objective value plus the intermediates the gradient pass reuses."""
    p1 = _predictions(model1, u_values, grid.dt)
    p2 = _predictions(model2, u_values, grid.dt)
    if p1 is None or p2 is None:
        return DIVERGED_OBJECTIVE, None
    w = grid.quadrature_weights()
    diff = p1[1] - p2[1]
    value = float(w @ (diff * diff)) - _penalties(u_values, w, memory_values, cfg)
    return value, (p1, p2, w, diff)


def objective(u: ControlSignal, model1: ModelInstance, model2: ModelInstance,
              memory: ControlMemory, cfg: ControlDesignConfig) -> float:
    """Discrepancy-minus-penalties score of a stimulus for the given pair."""
    mem = [s.values for s in memory][:cfg.memory_size]
    value, _ = _objective_values(u.values, model1, model2, mem, u.grid, cfg)
    return value


def objective_gradient(u: ControlSignal, model1: ModelInstance, model2: ModelInstance,
                       memory: ControlMemory, cfg: ControlDesignConfig) -> np.ndarray:
    """Exact gradient of ``objective`` in the stimulus samples (zeros on divergence)."""
    mem = [s.values for s in memory][:cfg.memory_size]
    _, grad = _objective_and_gradient(u.values, model1, model2, mem, u.grid, cfg)
    return grad


def _objective_and_gradient(u_values, model1, model2, memory_values, grid, cfg):
    value, extra = _objective_values(u_values, model1, model2, memory_values, grid, cfg)
    if extra is None:
        return value, np.zeros(grid.n_points)
    (xs1, _), (xs2, _), w, diff = extra
    coeff = 2.0 * w * diff
    du = _INPUT_ADJOINT[model1.kind](model1.theta, u_values, coeff, grid.dt, xs1)
    du += _INPUT_ADJOINT[model2.kind](model2.theta, u_values, -coeff, grid.dt, xs2)
    du -= 2.0 * cfg.c1 * w * u_values
    for past in memory_values:
        du -= cfg.c2 * w * past
    return value, du


@dataclass(frozen=True)
class AscentInfo:
    """Diagnostics of one projected-ascent run."""

    objective: float
    iterations: int
    projected_gradient_norm: float
    converged: bool


def _tune_scale(u: np.ndarray, model1, model2, memory_values, grid, cfg
                ) -> np.ndarray:
    """Pick the best multiplicative rescaling of a feasible iterate.

    The amplitude penalty grows with the square of the scale while the
    discrepancy reward saturates, so a start at the wrong overall level can
    sit so deep in penalty-dominated territory that the ascent spends its
    whole budget shrinking it — or collapses onto a floor-tight signal the
    dynamics barely see.  Probing a ladder of scales from floor-tight to
    ceiling-touching puts every restart at its best energy level first; it
    also rescues starts whose full-amplitude trajectory diverges.
    """
    energy = trapezoid(u * u, grid.dt)
    peak = float(np.max(u))
    if not (energy > 0.0 and peak > 0.0):
        return u
    best_u = u
    best_value, _ = _objective_values(u, model1, model2, memory_values, grid, cfg)
    s_lo = np.sqrt(cfg.u_min_energy / energy)      # scales the energy to the floor
    s_hi = max(cfg.u_hi / peak, s_lo)              # first contact with the ceiling
    for s in np.geomspace(s_lo, s_hi, 12):
        if abs(s - 1.0) < 1e-12:
            continue
        cand = repair_energy(np.clip(s * u, 0.0, cfg.u_hi), grid, cfg)
        cand_value, _ = _objective_values(cand, model1, model2, memory_values, grid, cfg)
        if cand_value > best_value:
            best_value = cand_value
            best_u = cand
    return best_u


def _ascend(u0: np.ndarray, model1, model2, memory_values, grid, cfg
            ) -> tuple[np.ndarray, AscentInfo]:
    """Projected gradient ascent with backtracking from one starting point."""
    u = repair_energy(u0, grid, cfg, max_passes=8)
    u = _tune_scale(u, model1, model2, memory_values, grid, cfg)
    value = DIVERGED_OBJECTIVE
    step = cfg.step_init
    pg_norm = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_outer + 1):
        value, grad = _objective_and_gradient(u, model1, model2, memory_values, grid, cfg)
        pg_norm = float(np.max(np.abs(u - np.clip(u + grad, 0.0, cfg.u_hi))))
        if pg_norm < cfg.tol:
            converged = True
            break
        accepted = False
        for _ in range(40):
            cand = repair_energy(np.clip(u + step * grad, 0.0, cfg.u_hi), grid, cfg)
            cand_value, _ = _objective_values(cand, model1, model2, memory_values, grid, cfg)
            gain = float(grad @ (cand - u))
            if cand_value >= value + 1e-4 * max(gain, 0.0) and cand_value > value:
                u = cand
                value = cand_value
                step = min(step * 1.6, 1e6)
                accepted = True
                break
            step *= 0.5
            if step < 1e-14:
                break
        if not accepted:
            break
    return u, AscentInfo(value, iterations, pg_norm, converged)


def design_control(model1: ModelInstance, model2: ModelInstance, memory: ControlMemory,
                   grid: TimeGrid, cfg: ControlDesignConfig, seed=0) -> ControlSignal:
    """Search for the stimulus that best splits the two candidates.

    Deterministic given (models, memory, grid, cfg, seed).  The returned
    signal satisfies the box exactly and the energy floor to within 1e-9.
    """
    if not cfg.u_min_energy < cfg.u_hi ** 2 * grid.horizon:
        raise ConfigurationError(
            f"energy floor {cfg.u_min_energy} is infeasible inside the box: "
            f"ceiling admits at most {cfg.u_hi ** 2 * grid.horizon}")
    mem = [s.values for s in memory][:cfg.memory_size]
    for past in mem:
        if past.size != grid.n_points:
            raise ContractError("remembered stimulus does not match the design grid")

    rng = np.random.default_rng(seed)
    starts: list[np.ndarray] = []
    if len(memory):
        starts.append(memory.signals[0].values.copy())
    else:
        starts.append(first_pulse(grid, cfg).values.copy())
    starts.append(np.full(grid.n_points, cfg.u_hi / 2.0))
    while len(starts) < cfg.restarts:
        starts.append(random_piecewise_constant(grid, rng, 8, 0.0, cfg.u_hi).values)
    starts = starts[:cfg.restarts]

    best_u = None
    best_value = -np.inf
    for u0 in starts:
        u_opt, info = _ascend(np.clip(u0, 0.0, cfg.u_hi), model1, model2, mem, grid, cfg)
        if info.objective > best_value:
            best_value = info.objective
            best_u = u_opt

    final = repair_energy(best_u, grid, cfg, max_passes=64)
    energy = trapezoid(final * final, grid.dt)
    if energy < cfg.u_min_energy - 1e-9:
        raise ConfigurationError(
            f"could not reach the energy floor {cfg.u_min_energy} inside the box "
            f"(achieved {energy})")
    return ControlSignal(final, grid, (0.0, cfg.u_hi))
