"""Uniform time grids and the sampled signals that live on them.

Every stage of the loop (simulation, fitting, stimulus design, the wire
protocol) shares a single discretization: ``n_steps + 1`` samples at
``t_m = m * dt``.  Integrals are always evaluated with the trapezoidal rule
on that grid, so the quadrature weights defined here are the single source
of truth for every loss and objective in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DEFAULT_DT = 0.05
DEFAULT_N_STEPS = 1000
DEFAULT_CONTROL_BOUNDS = (0.0, 10.0)


def _frozen_array(values) -> np.ndarray:
    out = np.array(values, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``n_steps + 1`` points ``t_m = m * dt``."""

    dt: float = DEFAULT_DT
    n_steps: int = DEFAULT_N_STEPS

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and np.isfinite(self.dt) and self.dt > 0):
            raise ContractError(f"dt must be a positive finite number, got {self.dt!r}")
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 2):
            raise ContractError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    @property
    def horizon(self) -> float:
        """Total duration ``n_steps * dt``."""
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_points, dtype=np.float64) * self.dt

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal weights: ``dt`` everywhere, halved at both endpoints."""
        w = np.full(self.n_points, self.dt, dtype=np.float64)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def trapezoid(values, dt: float) -> float:
    """Trapezoidal quadrature of uniformly sampled data; exact for affine samples."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ContractError(f"trapezoid needs a 1-d array of at least 2 samples, got shape {v.shape}")
    if not (np.isfinite(dt) and dt > 0):
        raise ContractError(f"dt must be a positive finite number, got {dt!r}")
    return float(dt * (0.5 * (v[0] + v[-1]) + v[1:-1].sum()))


@dataclass(frozen=True)
class ControlSignal:
    """A sampled stimulus: one value per grid point, confined to a box.

    The bounds are part of the signal because they travel with it through
    design, the wire protocol, and CSV export.  Values must satisfy the box
    exactly; producers are expected to clip before constructing.
    """

    values: np.ndarray
    grid: TimeGrid
    bounds: tuple[float, float] = DEFAULT_CONTROL_BOUNDS

    def __post_init__(self):
        v = _frozen_array(self.values)
        object.__setattr__(self, "values", v)
        lo, hi = float(self.bounds[0]), float(self.bounds[1])
        object.__setattr__(self, "bounds", (lo, hi))
        if v.ndim != 1 or v.size != self.grid.n_points:
            raise ContractError(
                f"control must hold {self.grid.n_points} samples, got shape {v.shape}"
            )
        if not lo < hi:
            raise ContractError(f"bounds must satisfy lo < hi, got ({lo}, {hi})")
        if not np.all(np.isfinite(v)):
            raise ContractError("control contains non-finite samples")
        if v.min() < lo or v.max() > hi:
            raise ContractError(
                f"control leaves its box [{lo}, {hi}]: range [{v.min()}, {v.max()}]"
            )

    def energy(self) -> float:
        """Integrated squared amplitude over the horizon."""
        return trapezoid(self.values * self.values, self.grid.dt)

    def with_values(self, values) -> "ControlSignal":
        return ControlSignal(values, self.grid, self.bounds)


@dataclass(frozen=True)
class ObservationSeries:
    """A scalar measurement (or model output) sampled on a grid."""

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        v = _frozen_array(self.values)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size != self.grid.n_points:
            raise ContractError(
                f"series must hold {self.grid.n_points} samples, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ContractError("series contains non-finite samples")


def constant_signal(grid: TimeGrid, level: float,
                    bounds: tuple[float, float] = DEFAULT_CONTROL_BOUNDS) -> ControlSignal:
    return ControlSignal(np.full(grid.n_points, float(level)), grid, bounds)


def box_pulse(grid: TimeGrid, amplitude: float, t_on: float, t_off: float,
              bounds: tuple[float, float] = DEFAULT_CONTROL_BOUNDS) -> ControlSignal:
    """Single rectangular pulse: ``amplitude`` on ``t_on <= t < t_off``, zero elsewhere."""
    if not t_on < t_off:
        raise ContractError(f"pulse needs t_on < t_off, got ({t_on}, {t_off})")
    t = grid.times()
    values = np.where((t >= t_on) & (t < t_off), float(amplitude), 0.0)
    return ControlSignal(values, grid, bounds)


def piecewise_constant(grid: TimeGrid, levels,
                       bounds: tuple[float, float] = DEFAULT_CONTROL_BOUNDS) -> ControlSignal:
    """Equal-width segments holding the given levels across the horizon."""
    lv = np.asarray(levels, dtype=np.float64)
    if lv.ndim != 1 or lv.size < 1:
        raise ContractError("levels must be a non-empty 1-d sequence")
    seg = np.minimum((np.arange(grid.n_points) * lv.size) // grid.n_points, lv.size - 1)
    return ControlSignal(lv[seg], grid, bounds)


def random_piecewise_constant(grid: TimeGrid, rng: np.random.Generator, n_segments: int = 8,
                              low: float = 0.0, high: float = 10.0,
                              bounds: tuple[float, float] | None = None) -> ControlSignal:
    """Piecewise-constant signal with i.i.d. uniform segment levels."""
    if bounds is None:
        bounds = (low, high)
    levels = rng.uniform(low, high, size=int(n_segments))
    return piecewise_constant(grid, levels, bounds)
