"""Shared fixtures and finite-difference oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hpmgen.networks import NetworkParams, forward


# --- finite-difference oracles (independent of the autodiff path) -----------


def fd_first(net: NetworkParams, x: np.ndarray, index: int, h: float = 1e-4) -> float:
    xp, xm = x.copy(), x.copy()
    xp[index] += h
    xm[index] -= h
    return (forward(net, xp) - forward(net, xm)) / (2 * h)


def fd_second(net: NetworkParams, x: np.ndarray, index: int, h: float = 1e-4) -> float:
    xp, xm = x.copy(), x.copy()
    xp[index] += h
    xm[index] -= h
    return (forward(net, xp) - 2 * forward(net, x) + forward(net, xm)) / h**2


def rel_norm_err(approx: np.ndarray, oracle: np.ndarray, floor: float = 1e-12) -> float:
    approx = np.atleast_1d(np.asarray(approx, dtype=float))
    oracle = np.atleast_1d(np.asarray(oracle, dtype=float))
    return float(np.linalg.norm(approx - oracle) / max(np.linalg.norm(oracle), floor))


def linear_net(weights: np.ndarray, bias: float = 0.0) -> NetworkParams:
    """Single linear layer y = w @ x + b (no activation anywhere)."""
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    return NetworkParams((w.shape[0], 1), (w,), (np.array([float(bias)]),))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
