"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

import opsinloop as ol


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    grad = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[i] += h
        backward[i] -= h
        grad[i] = (f(forward) - f(backward)) / (2.0 * h)
    return grad


def relative_errors(exact: np.ndarray, approx: np.ndarray,
                    floor: float = 1e-8) -> np.ndarray:
    return np.abs(exact - approx) / np.maximum(np.abs(approx), floor)


@pytest.fixture
def small_grid() -> ol.TimeGrid:
    return ol.TimeGrid(0.05, 200)


@pytest.fixture
def default_grid() -> ol.TimeGrid:
    return ol.TimeGrid(0.05, 1000)


def candidate_pair(seed: int, kind_a: ol.ModelKind, kind_b: ol.ModelKind):
    """Random starting candidates, derived the same way as the CLI does."""
    rng_a = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 100)))
    rng_b = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 101)))
    return [ol.random_instance(kind_a, rng_a), ol.random_instance(kind_b, rng_b)]
