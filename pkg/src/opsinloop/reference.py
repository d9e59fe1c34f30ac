"""Reference systems: the side of the loop that produces measurements.

A reference declares its capabilities (grid, stimulus ceiling, averaging
repeats) and answers stimuli with measurements.  The orchestrator treats it
as a black box; the simulated implementation below hides which model and
parameters generate the data, which is exactly the situation the loop is
meant to resolve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ContractError, IntegrationDivergedError, ReferenceFailure
from .grid import ControlSignal, ObservationSeries, TimeGrid
from .kinetics import ModelKind, validate_theta
from .simulate import StochasticConfig, simulate, simulate_clamped, simulate_stochastic

__all__ = [
    "ReferenceCapabilities",
    "ReferenceSystem",
    "SimulatedReference",
    "ReferenceFailure",
]


@dataclass(frozen=True)
class ReferenceCapabilities:
    """What a reference accepts and how it measures.

    ``repeats`` is the number of repetitions averaged into each returned
    measurement (1 for noiseless references).
    """

    grid: TimeGrid
    u_hi: float = 10.0
    repeats: int = 1

    def __post_init__(self):
        if not self.u_hi > 0:
            raise ContractError(f"u_hi must be positive, got {self.u_hi!r}")
        if not (isinstance(self.repeats, (int, np.integer)) and self.repeats >= 1):
            raise ContractError(f"repeats must be a positive integer, got {self.repeats!r}")


@runtime_checkable
class ReferenceSystem(Protocol):
    """Anything that can be stimulated and measured on a fixed grid."""

    @property
    def capabilities(self) -> ReferenceCapabilities: ...

    def apply(self, control: ControlSignal) -> ObservationSeries: ...


class SimulatedReference:
    """A hidden model standing in for the physical preparation.

    Each stimulus starts from rest (the preparation relaxes fully between
    stimuli).  With ``alpha > 0``, ``repeats`` noisy paths are sampled and
    averaged; successive calls use distinct noise streams, reproducibly
    derived from the seed and a call counter, so a fixed call sequence always
    yields the same measurements.

    A physical preparation cannot leave the probability simplex, but some
    published parameter tables can push the strict integrator out of its
    admissible region under strong stimuli (the six-state table's negative
    recovery rate is one such case).  When that happens the deterministic
    branch falls back to the clamped simplex integrator, which saturates at
    the boundary instead of failing; ordinary stimuli never hit the fallback
    and keep their bit-identical strict-integrator measurements.
    """

    def __init__(self, kind: ModelKind, theta, grid: TimeGrid, *,
                 alpha: float = 0.0, repeats: int = 1, seed: int = 0,
                 u_hi: float = 10.0):
        self._kind = kind
        self._theta = validate_theta(kind, theta).copy()
        self._config = StochasticConfig(alpha=alpha, n_paths=repeats, seed=seed)
        self._capabilities = ReferenceCapabilities(grid, u_hi, repeats)
        self._calls = 0

    @property
    def capabilities(self) -> ReferenceCapabilities:
        return self._capabilities

    @property
    def calls(self) -> int:
        """Stimuli answered so far (drives the per-call noise stream)."""
        return self._calls

    def apply(self, control: ControlSignal) -> ObservationSeries:
        caps = self._capabilities
        if control.grid != caps.grid:
            raise ContractError("stimulus grid does not match the reference grid")
        if control.values.min() < 0.0 or control.values.max() > caps.u_hi + 1e-12:
            raise ContractError(
                f"stimulus leaves the accepted range [0, {caps.u_hi}]")
        stream = self._calls
        self._calls += 1
        if self._config.alpha == 0.0:
            try:
                return simulate(self._kind, self._theta, control).observations
            except IntegrationDivergedError:
                return simulate_clamped(self._kind, self._theta, control)
        ensemble = simulate_stochastic(self._kind, self._theta, control,
                                       self._config, stream=stream)
        return ensemble.mean


class FlakyReference:
    """Wrapper that fails permanently after a set number of stimuli.

    Models losing the preparation mid-experiment; used to exercise truncation
    handling.  The first ``fail_after`` stimuli pass through, every later
    call raises.
    """

    def __init__(self, inner: ReferenceSystem, fail_after: int):
        if not (isinstance(fail_after, (int, np.integer)) and fail_after >= 0):
            raise ContractError(f"fail_after must be a non-negative integer, got {fail_after!r}")
        self._inner = inner
        self._remaining = int(fail_after)

    @property
    def capabilities(self) -> ReferenceCapabilities:
        return self._inner.capabilities

    def apply(self, control: ControlSignal) -> ObservationSeries:
        if self._remaining <= 0:
            raise ReferenceFailure("reference lost (no further stimuli possible)")
        self._remaining -= 1
        return self._inner.apply(control)
