"""Forward simulation: deterministic Euler and stochastic ensembles.

Deterministic trajectories integrate the free state with forward Euler on
the shared grid.  Stochastic trajectories integrate the full simplex state
with Euler-Maruyama; the multiplicative noise is built so that, before
clamping, the increment sums to zero across states, and each step is
renormalized so the state remains a probability vector exactly.

Noise is counter-based: path ``p`` of stream ``s`` under seed ``q`` always
sees the same normal draws, independent of how many paths run or in what
order, so ensembles are reproducible across processes and machines.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import ContractError, IntegrationDivergedError
from .grid import ControlSignal, ObservationSeries, TimeGrid
from .kinetics import ModelKind, observation_gains, rest_state, validate_state, validate_theta

_SIM = {
    ModelKind.THREE_STATE: _kernels.sim3,
    ModelKind.FOUR_STATE: _kernels.sim4,
    ModelKind.SIX_STATE: _kernels.sim6,
}

_KIND_ID = {
    ModelKind.THREE_STATE: _kernels.KIND3,
    ModelKind.FOUR_STATE: _kernels.KIND4,
    ModelKind.SIX_STATE: _kernels.KIND6,
}

# Fraction of clamped steps above which an ensemble is considered
# noise-dominated and a warning is emitted.
CLAMP_WARN_FRACTION = 0.5


class SimOutput(NamedTuple):
    states: np.ndarray            # (n_points, state_dim) free-state trajectory
    observations: ObservationSeries


def _simulate_raw(kind: ModelKind, theta: np.ndarray, control: ControlSignal,
                  x0: np.ndarray) -> tuple[np.ndarray, int]:
    """Kernel call without error translation; returns (states, diverged_step)."""
    return _SIM[kind](theta, control.values, control.grid.dt, x0)


def simulate(kind: ModelKind, theta, control: ControlSignal,
             initial=None) -> SimOutput:
    """Integrate the free state from rest (or ``initial``) under ``control``.

    Raises IntegrationDivergedError if the state leaves the probability
    simplex beyond tolerance; the error carries the offending step index.
    """
    th = validate_theta(kind, theta)
    x0 = rest_state(kind) if initial is None else validate_state(kind, initial)
    xs, bad = _simulate_raw(kind, th, control, x0)
    if bad >= 0:
        raise IntegrationDivergedError(bad, f"{kind.value}-state model")
    ys = xs @ observation_gains(kind, th)
    return SimOutput(xs, ObservationSeries(ys, control.grid))


def simulate_clamped(kind: ModelKind, theta, control: ControlSignal,
                     initial=None) -> ObservationSeries:
    """Integrate on the full simplex, clamping each step into it.

    Deterministic Euler in the full state: any component a step would push
    negative is clamped to zero and the state renormalized to sum one, so the
    trajectory can never leave the simplex.  On trajectories the strict
    integrator accepts, no clamp fires and the observations agree with
    ``simulate`` to machine precision; where the strict integrator would
    reject the trajectory, this one saturates instead, the way a physical
    preparation does.
    """
    th = validate_theta(kind, theta)
    grid = control.grid
    x_free = rest_state(kind) if initial is None else validate_state(kind, initial)
    n_states = kind.n_states
    x_full = np.empty(n_states)
    x_full[:-1] = x_free
    x_full[-1] = 1.0 - x_free.sum()
    xs = np.empty((grid.n_points, n_states))
    zeros = np.zeros((grid.n_steps, n_states))
    _kernels.sde_path(_KIND_ID[kind], th, control.values, grid.dt,
                      x_full, 0.0, zeros, xs)
    ys = xs[:, :-1] @ observation_gains(kind, th)
    return ObservationSeries(ys, grid)


@dataclass(frozen=True)
class StochasticConfig:
    """Noise amplitude and ensemble layout for stochastic runs."""

    alpha: float = 0.02
    n_paths: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ContractError(f"alpha must be >= 0, got {self.alpha!r}")
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            raise ContractError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2 ** 64):
            raise ContractError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")


class NoiseOverdriveWarning(UserWarning):
    """The noise amplitude dominates the dynamics; results are mostly clamping."""


def path_normals(seed: int, stream: int, path: int, shape: tuple[int, int]) -> np.ndarray:
    """Standard-normal draws for one path, derived from counter-based streams.

    The (stream, path) pair selects a disjoint counter block, so any path can
    be regenerated in isolation.
    """
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(stream), int(path)])
    return np.random.Generator(bitgen).standard_normal(shape)


@dataclass(frozen=True)
class StochasticEnsemble:
    """Observation paths plus their mean and clamping diagnostics."""

    observations: np.ndarray          # (n_paths, n_points)
    mean: ObservationSeries
    clamp_fraction: float
    grid: TimeGrid
    states: np.ndarray | None = None  # (n_paths, n_points, n_states), optional


def simulate_stochastic(kind: ModelKind, theta, control: ControlSignal,
                        config: StochasticConfig, initial=None, *,
                        stream: int = 0, keep_states: bool = False) -> StochasticEnsemble:
    """Sample an ensemble of full-simplex paths and observe each one.

    ``stream`` distinguishes successive calls that share a seed (for example
    consecutive stimuli applied to one reference cell).  With ``alpha == 0``
    the deterministic kernel is used, so results match ``simulate`` exactly.
    """
    th = validate_theta(kind, theta)
    grid = control.grid
    n_pts = grid.n_points
    n_states = kind.n_states
    gains = observation_gains(kind, th)

    if initial is None:
        x_free = rest_state(kind)
    else:
        x_free = validate_state(kind, initial)
    x_full = np.empty(n_states)
    x_full[:-1] = x_free
    x_full[-1] = 1.0 - x_free.sum()

    if config.alpha == 0.0:
        out = simulate(kind, th, control, initial)
        obs = np.tile(out.observations.values, (config.n_paths, 1))
        states = None
        if keep_states:
            full = np.empty((n_pts, n_states))
            full[:, :-1] = out.states
            full[:, -1] = 1.0 - out.states.sum(axis=1)
            states = np.tile(full, (config.n_paths, 1, 1))
        return StochasticEnsemble(obs, out.observations, 0.0, grid, states)

    obs = np.empty((config.n_paths, n_pts))
    states = np.empty((config.n_paths, n_pts, n_states)) if keep_states else None
    xs = np.empty((n_pts, n_states))
    kind_id = _KIND_ID[kind]
    clamped_total = 0
    for path in range(config.n_paths):
        normals = path_normals(config.seed, stream, path, (grid.n_steps, n_states))
        clamped_total += _kernels.sde_path(kind_id, th, control.values, grid.dt,
                                           x_full, config.alpha, normals, xs)
        obs[path] = xs[:, :-1] @ gains
        if keep_states:
            states[path] = xs
    clamp_fraction = clamped_total / (config.n_paths * grid.n_steps)
    if clamp_fraction > CLAMP_WARN_FRACTION:
        warnings.warn(
            f"noise amplitude alpha={config.alpha} clamps {clamp_fraction:.0%} of steps; "
            "the ensemble is noise-dominated", NoiseOverdriveWarning, stacklevel=2)
    mean = ObservationSeries(obs.mean(axis=0), grid)
    return StochasticEnsemble(obs, mean, clamp_fraction, grid, states)


# ------------------------------------------------------------- CSV export

def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


@contextmanager
def _opened(path_or_file):
    if hasattr(path_or_file, "write"):
        yield path_or_file
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def write_control_csv(path, control: ControlSignal) -> None:
    """Stimulus-only export with columns ``t,u``."""
    t = control.grid.times()
    with _opened(path) as fh:
        fh.write("t,u\n")
        for m in range(control.grid.n_points):
            fh.write(f"{_fmt(t[m])},{_fmt(control.values[m])}\n")


def write_trajectory_csv(path, control: ControlSignal, series: ObservationSeries) -> None:
    """Deterministic trajectory export with columns ``t,u,y``."""
    if series.grid != control.grid:
        raise ContractError("control and series live on different grids")
    t = control.grid.times()
    with _opened(path) as fh:
        fh.write("t,u,y\n")
        for m in range(control.grid.n_points):
            fh.write(f"{_fmt(t[m])},{_fmt(control.values[m])},{_fmt(series.values[m])}\n")


def write_ensemble_csv(path, control: ControlSignal, ensemble: StochasticEnsemble) -> None:
    """Stochastic export: mean and the 1/25/75/99 percent quantile bands."""
    if ensemble.grid != control.grid:
        raise ContractError("control and ensemble live on different grids")
    t = control.grid.times()
    qs = np.quantile(ensemble.observations, [0.01, 0.25, 0.75, 0.99], axis=0)
    mean = ensemble.mean.values
    with _opened(path) as fh:
        fh.write("t,u,y_mean,y_q01,y_q25,y_q75,y_q99\n")
        for m in range(control.grid.n_points):
            fh.write(",".join([_fmt(t[m]), _fmt(control.values[m]), _fmt(mean[m]),
                               _fmt(qs[0, m]), _fmt(qs[1, m]), _fmt(qs[2, m]),
                               _fmt(qs[3, m])]) + "\n")


def read_trajectory_csv(path) -> tuple[TimeGrid, ControlSignal, ObservationSeries]:
    """Parse a ``t,u,y`` file back into grid-aligned signals.

    The time column must be uniform; the control bounds are widened to fit
    the stored samples.
    """
    data = np.genfromtxt(path, delimiter=",", names=True)
    for col in ("t", "u", "y"):
        if col not in (data.dtype.names or ()):
            raise ContractError(f"trajectory CSV is missing column {col!r}")
    t = np.atleast_1d(data["t"])
    u = np.atleast_1d(data["u"])
    y = np.atleast_1d(data["y"])
    if t.size < 2:
        raise ContractError("trajectory CSV must hold at least two samples")
    steps = np.diff(t)
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ContractError("trajectory CSV time column is not uniform")
    grid = TimeGrid(float(dt), t.size - 1)
    hi = max(10.0, float(u.max()))
    lo = min(0.0, float(u.min()))
    return grid, ControlSignal(u, grid, (lo, hi)), ObservationSeries(y, grid)
