"""Fitting candidate models to measured photocurrents.

The loss for one dataset is the trapezoidal integral of the squared residual
between the model output and the measurement.  Gradients come from a discrete
adjoint pass that is exact for the forward-Euler trajectory (not a
discretization of the continuous adjoint), so finite differences of the loss
reproduce them to solver precision.

Fits run Adam from the supplied starting point and return the best iterate
seen, which makes warm-started refits monotone in practice: a refit can only
keep or improve the incumbent loss on the data it saw.

Not every parameter vector is simulable: a proposed step can push a rate
negative enough that the trajectory leaves the admissible region, where the
loss is only a sentinel with no gradient.  Accepting such a step would strand
the optimizer on a flat plateau (zero gradient freezes Adam's moments).  A
step whose proposal evaluates to the sentinel is therefore first shortened
and then, if the iterate is hugging the admissibility boundary, retried with
the offending coordinates pinned so the remaining ones can keep descending;
the moment recursions themselves are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ContractError
from .grid import ControlSignal, ObservationSeries
from .kinetics import ModelKind, observation_gains, rest_state, validate_theta
from .simulate import _simulate_raw

# Loss reported when the candidate's trajectory leaves the simplex: large
# enough that any admissible parameter set is preferred.
DIVERGED_LOSS = 1e12

_FIT_PASS = {
    ModelKind.THREE_STATE: _kernels.fit_pass3,
    ModelKind.FOUR_STATE: _kernels.fit_pass4,
    ModelKind.SIX_STATE: _kernels.fit_pass6,
}


@dataclass(frozen=True)
class Dataset:
    """One applied stimulus and the measurement it produced."""

    control: ControlSignal
    measured: ObservationSeries

    def __post_init__(self):
        if self.control.grid != self.measured.grid:
            raise ContractError("stimulus and measurement live on different grids")

    @property
    def grid(self):
        return self.control.grid


@dataclass(frozen=True)
class FitConfig:
    n_grad: int = 300
    step_size: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    history_mode: str = "latest_only"   # or "full_history"

    def __post_init__(self):
        if not (isinstance(self.n_grad, (int, np.integer)) and self.n_grad >= 1):
            raise ContractError(f"n_grad must be a positive integer, got {self.n_grad!r}")
        if not self.step_size > 0:
            raise ContractError(f"step_size must be positive, got {self.step_size!r}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ContractError(f"{name} must lie in [0, 1), got {b!r}")
        if not self.epsilon >= 0.0:
            raise ContractError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if self.history_mode not in ("latest_only", "full_history"):
            raise ContractError(f"unknown history_mode {self.history_mode!r}")


@dataclass(frozen=True)
class FitReport:
    """Outcome of one fit: best iterate, its loss, and how far it moved."""

    theta: np.ndarray
    loss: float
    max_param_increment: float
    aborted: bool = False

    def __post_init__(self):
        th = np.array(self.theta, dtype=np.float64)
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)


def loss(kind: ModelKind, theta, dataset: Dataset) -> float:
    """Trapezoidal squared-residual loss; the divergence sentinel if the model blows up."""
    th = validate_theta(kind, theta)
    xs, bad = _simulate_raw(kind, th, dataset.control, rest_state(kind))
    if bad >= 0:
        return DIVERGED_LOSS
    r = xs @ observation_gains(kind, th) - dataset.measured.values
    w = dataset.grid.quadrature_weights()
    return float(w @ (r * r))


def loss_and_gradient(kind: ModelKind, theta, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Loss together with its exact gradient; sentinel and zero gradient on divergence."""
    th = validate_theta(kind, theta)
    value, grad, bad = _FIT_PASS[kind](
        th, dataset.control.values, dataset.measured.values,
        dataset.grid.quadrature_weights(), dataset.grid.dt, rest_state(kind))
    if bad >= 0:
        return DIVERGED_LOSS, np.zeros(kind.param_count)
    return float(value), grad


def loss_gradient(kind: ModelKind, theta, dataset: Dataset) -> np.ndarray:
    return loss_and_gradient(kind, theta, dataset)[1]


def _total_loss_and_gradient(kind, theta, datasets):
    total = 0.0
    grad = np.zeros(kind.param_count)
    for ds in datasets:
        value, g = loss_and_gradient(kind, theta, ds)
        total += value
        grad += g
    return total, grad


class _NonFiniteLoss(Exception):
    """Loss or gradient evaluated to NaN/inf; the fit must abort."""


def _admissible(value: float) -> bool:
    return value < 0.5 * DIVERGED_LOSS


def _evaluate(kind, theta, active):
    value, grad = _total_loss_and_gradient(kind, theta, active)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise _NonFiniteLoss
    return value, grad


def _admissible_step(kind, theta, direction, active):
    """The Adam step, shortened or partially pinned to stay simulable.

    Tries the full step, then geometrically shorter ones.  When even tiny
    fractions land where the simulation diverges, the iterate is hugging the
    admissibility boundary in some coordinate; the step is retried with
    coordinates frozen — singly, then cumulatively, largest movers first —
    so the boundary-pinned parameters stop while the rest keep descending.
    Returns (theta, loss, gradient) or None when no variant is admissible.
    """
    scale = 1.0
    for _ in range(11):
        cand = theta - scale * direction
        value, grad = _evaluate(kind, cand, active)
        if _admissible(value):
            return cand, value, grad
        scale *= 0.5
    order = np.argsort(-np.abs(direction), kind="stable")
    for j in order:
        d = direction.copy()
        d[j] = 0.0
        if not d.any():
            continue
        cand = theta - d
        value, grad = _evaluate(kind, cand, active)
        if _admissible(value):
            return cand, value, grad
    d = direction.copy()
    for j in order[:-1]:
        d[j] = 0.0
        if not d.any():
            break
        cand = theta - d
        value, grad = _evaluate(kind, cand, active)
        if _admissible(value):
            return cand, value, grad
    return None


def fit(kind: ModelKind, theta0, datasets: Sequence[Dataset], config: FitConfig) -> FitReport:
    """Refine ``theta0`` on the given datasets with Adam.

    ``history_mode`` picks the active data: only the newest dataset, or all
    of them summed.  A step that would land where the simulation diverges
    (sentinel loss) is halved until it lands on an admissible iterate, so
    the search recovers instead of stalling on the sentinel plateau.  The
    fit only stops early if the loss or gradient turns non-finite, in which
    case the best finite iterate is returned with ``aborted`` set.
    """
    if len(datasets) == 0:
        raise ContractError("fit needs at least one dataset")
    theta_start = validate_theta(kind, theta0).copy()
    active = list(datasets[-1:]) if config.history_mode == "latest_only" else list(datasets)

    theta = theta_start.copy()
    m = np.zeros(kind.param_count)
    v = np.zeros(kind.param_count)
    value, grad = _total_loss_and_gradient(kind, theta, active)
    aborted = not (np.isfinite(value) and np.all(np.isfinite(grad)))
    best_theta = theta_start.copy()
    best_loss = value if not aborted else np.inf

    if not aborted:
        try:
            for step in range(1, config.n_grad + 1):
                m = config.beta1 * m + (1.0 - config.beta1) * grad
                v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
                m_hat = m / (1.0 - config.beta1 ** step)
                v_hat = v / (1.0 - config.beta2 ** step)
                direction = config.step_size * m_hat / (np.sqrt(v_hat) + config.epsilon)
                if not direction.any():
                    break   # zero gradient: every remaining epoch would be a no-op
                outcome = _admissible_step(kind, theta, direction, active)
                if outcome is None:
                    # Boxed in against the boundary this epoch; hold position.
                    continue
                theta, value, grad = outcome
                if value < best_loss:
                    best_loss = value
                    best_theta = theta.copy()
        except _NonFiniteLoss:
            aborted = True

    if not np.isfinite(best_loss):
        # Even the starting point was non-finite; report it honestly.
        best_theta = theta_start
        best_loss = float("inf")
    increment = float(np.max(np.abs(best_theta - theta_start)))
    return FitReport(best_theta, float(best_loss), increment, aborted)
