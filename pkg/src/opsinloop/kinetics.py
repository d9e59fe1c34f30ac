"""The competing photocurrent models.

Each candidate is a Markov rate model of light-gated channel conformations.
Conservation of probability removes the last state, so the integrated state
vector ``x`` keeps only the first ``n_states - 1`` proportions and the
remaining one is ``1 - sum(x)``.  Illumination ``u(t) >= 0`` scales the
light-driven transition rates.  The observable is a scalar photocurrent,
linear in the conducting-state proportions with negative gains.

At rest (no light, fully relaxed) all probability sits in the eliminated
state, so the free state vector is zero and the photocurrent is zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


class ModelKind(enum.Enum):
    THREE_STATE = "three"
    FOUR_STATE = "four"
    SIX_STATE = "six"

    @property
    def n_states(self) -> int:
        return _N_STATES[self]

    @property
    def state_dim(self) -> int:
        """Number of free state components (one state is eliminated)."""
        return _N_STATES[self] - 1

    @property
    def param_count(self) -> int:
        return _PARAM_COUNT[self]

    @property
    def complexity(self) -> int:
        """Parameter count; used to break ties in favour of the simpler model."""
        return _PARAM_COUNT[self]

    @property
    def label(self) -> str:
        return self.value

    @classmethod
    def from_label(cls, label: str) -> "ModelKind":
        for kind in cls:
            if kind.value == label:
                return kind
        raise ContractError(f"unknown model kind {label!r}; expected one of "
                            f"{[k.value for k in cls]}")


_N_STATES = {
    ModelKind.THREE_STATE: 3,
    ModelKind.FOUR_STATE: 4,
    ModelKind.SIX_STATE: 6,
}

_PARAM_COUNT = {
    ModelKind.THREE_STATE: 4,
    ModelKind.FOUR_STATE: 9,
    ModelKind.SIX_STATE: 11,
}

# Indices of the photocurrent gain parameters; everything else is a rate.
GAIN_INDICES = {
    ModelKind.THREE_STATE: (3,),
    ModelKind.FOUR_STATE: (7, 8),
    ModelKind.SIX_STATE: (9, 10),
}

RATE_INIT_RANGE = (0.01, 1.0)
GAIN_INIT_RANGE = (-1.0, -0.05)


def _frozen(values) -> np.ndarray:
    out = np.array(values, dtype=np.float64)
    out.setflags(write=False)
    return out


# Published fits for each model, used as ground-truth reference parameters.
_TABLE_PARAMS = {
    ModelKind.THREE_STATE: _frozen([0.24, 0.053, 0.02, -0.533]),
    ModelKind.FOUR_STATE: _frozen(
        [0.250, 0.134, 0.130, 0.116, 0.004, 0.089, 0.014, -0.235, -0.27]),
    ModelKind.SIX_STATE: _frozen(
        [1.404, 0.883, 0.077, -0.001, 0.644, 0.804, 0.065, 0.003, 0.032, -0.825, -0.186]),
}


def table_params(kind: ModelKind) -> np.ndarray:
    """A writable copy of the published parameter set for ``kind``."""
    return _TABLE_PARAMS[kind].copy()


def validate_theta(kind: ModelKind, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=np.float64)
    if th.ndim != 1 or th.size != kind.param_count:
        raise ContractError(
            f"{kind.value}-state model takes {kind.param_count} parameters, "
            f"got shape {th.shape}")
    if not np.all(np.isfinite(th)):
        raise ContractError("parameters contain non-finite values")
    return th


def random_parameters(kind: ModelKind, rng: np.random.Generator) -> np.ndarray:
    """Random initial guess: rates ~ U(0.01, 1.0), gains ~ U(-1.0, -0.05)."""
    theta = rng.uniform(*RATE_INIT_RANGE, size=kind.param_count)
    for i in GAIN_INDICES[kind]:
        theta[i] = rng.uniform(*GAIN_INIT_RANGE)
    return theta


def rest_state(kind: ModelKind) -> np.ndarray:
    """Free state at rest: all probability in the eliminated (closed) state."""
    return np.zeros(kind.state_dim)


def validate_state(kind: ModelKind, x, tol: float = 1e-9) -> np.ndarray:
    xv = np.asarray(x, dtype=np.float64)
    if xv.ndim != 1 or xv.size != kind.state_dim:
        raise ContractError(
            f"{kind.value}-state model has {kind.state_dim} free states, got shape {xv.shape}")
    rem = 1.0 - xv.sum()
    if not np.all(np.isfinite(xv)) or xv.min() < -tol or xv.max() > 1.0 + tol \
            or rem < -tol or rem > 1.0 + tol:
        raise ContractError(f"state {xv} leaves the probability simplex")
    return xv


def observation_gains(kind: ModelKind, theta) -> np.ndarray:
    """Linear map from free states to photocurrent, as a vector ``g`` with ``y = g @ x``."""
    th = validate_theta(kind, theta)
    g = np.zeros(kind.state_dim)
    if kind is ModelKind.THREE_STATE:
        g[0] = th[3]
    elif kind is ModelKind.FOUR_STATE:
        g[0] = th[8]
        g[1] = th[7]
    else:
        g[1] = th[10]
        g[2] = th[9]
    return g


def observe(kind: ModelKind, x, theta) -> float:
    """Photocurrent emitted at free state ``x``."""
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (kind.state_dim,):
        raise ContractError(
            f"{kind.value}-state model has {kind.state_dim} free states, got shape {xv.shape}")
    return float(observation_gains(kind, theta) @ xv)


def drift(kind: ModelKind, x, u: float, theta) -> np.ndarray:
    """Time derivative of the free state under illumination ``u``.

    Reference implementation in plain numpy; the compiled kernels unroll the
    same expressions.
    """
    th = validate_theta(kind, theta)
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (kind.state_dim,):
        raise ContractError(
            f"{kind.value}-state model has {kind.state_dim} free states, got shape {xv.shape}")
    u = float(u)
    if kind is ModelKind.THREE_STATE:
        x1, x2 = xv
        x3 = 1.0 - x1 - x2
        return np.array([
            th[0] * u * x3 - th[1] * x1,
            th[1] * x1 - th[2] * u * x2,
        ])
    if kind is ModelKind.FOUR_STATE:
        x1, x2, x3 = xv
        x4 = 1.0 - x1 - x2 - x3
        return np.array([
            th[0] * u * x4 + th[1] * u * x2 - (th[2] + th[3] * u) * x1,
            th[4] * u * x3 + th[3] * u * x1 - (th[5] + th[1] * u) * x2,
            th[5] * x2 - (th[6] + th[4] * u) * x3,
        ])
    x1, x2, x3, x4, x5 = xv
    x6 = 1.0 - x1 - x2 - x3 - x4 - x5
    return np.array([
        th[0] * u * x6 - th[1] * x1,
        th[1] * x1 + th[2] * u * x3 - (th[3] + th[4] * u) * x2,
        th[5] * x4 + th[4] * u * x2 - (th[6] + th[2] * u) * x3,
        th[7] * u * x5 - th[5] * x4,
        th[6] * x3 - (th[8] + th[7] * u) * x5,
    ])


def drift_full(kind: ModelKind, x_full, u: float, theta) -> np.ndarray:
    """Drift of the full simplex state; the last component balances the rest exactly."""
    xf = np.asarray(x_full, dtype=np.float64)
    if xf.shape != (kind.n_states,):
        raise ContractError(
            f"{kind.value}-state model has {kind.n_states} full states, got shape {xf.shape}")
    th = validate_theta(kind, theta)
    u = float(u)
    out = np.empty(kind.n_states)
    if kind is ModelKind.THREE_STATE:
        x1, x2, x3 = xf
        out[0] = th[0] * u * x3 - th[1] * x1
        out[1] = th[1] * x1 - th[2] * u * x2
    elif kind is ModelKind.FOUR_STATE:
        x1, x2, x3, x4 = xf
        out[0] = th[0] * u * x4 + th[1] * u * x2 - (th[2] + th[3] * u) * x1
        out[1] = th[4] * u * x3 + th[3] * u * x1 - (th[5] + th[1] * u) * x2
        out[2] = th[5] * x2 - (th[6] + th[4] * u) * x3
    else:
        x1, x2, x3, x4, x5, x6 = xf
        out[0] = th[0] * u * x6 - th[1] * x1
        out[1] = th[1] * x1 + th[2] * u * x3 - (th[3] + th[4] * u) * x2
        out[2] = th[5] * x4 + th[4] * u * x2 - (th[6] + th[2] * u) * x3
        out[3] = th[7] * u * x5 - th[5] * x4
        out[4] = th[6] * x3 - (th[8] + th[7] * u) * x5
    out[-1] = -out[:-1].sum()
    return out


@dataclass(frozen=True)
class ModelInstance:
    """A model kind together with a concrete parameter vector."""

    kind: ModelKind
    theta: np.ndarray

    def __post_init__(self):
        th = _frozen(validate_theta(self.kind, self.theta))
        object.__setattr__(self, "theta", th)

    def with_theta(self, theta) -> "ModelInstance":
        return ModelInstance(self.kind, theta)

    def observation_gains(self) -> np.ndarray:
        return observation_gains(self.kind, self.theta)


def table_instance(kind: ModelKind) -> ModelInstance:
    return ModelInstance(kind, table_params(kind))


def random_instance(kind: ModelKind, rng: np.random.Generator) -> ModelInstance:
    return ModelInstance(kind, random_parameters(kind, rng))
