"""Shared fixtures: small chains and kernels with hand-checkable behavior."""

import numpy as np
import pytest

from modstab.kernels import ModulatedKernel


def birth_death_rows(n, up, down):
    """Birth-death Y-kernel on {0..n}: up/down one step, reflecting ends."""
    K = np.zeros((n + 1, n + 1))
    for y in range(n + 1):
        b = up if y < n else 0.0
        d = down if y > 0 else 0.0
        K[y, min(y + 1, n)] += b
        K[y, max(y - 1, 0)] += d
        K[y, y] += 1.0 - b - d
    return K


def two_state_kernel(n=40, rates=((0.25, 0.5), (0.35, 0.3))):
    """Fair-coin X over two states; birth-death Y with per-X (up, down) rates.

    With the default rates the interior drifts are -0.25 and +0.05, so the
    averaged drift is -0.1 exactly.
    """
    P_X = np.array([[0.5, 0.5], [0.5, 0.5]])
    K = np.stack([birth_death_rows(n, b, d) for b, d in rates])
    return ModulatedKernel(P_X=P_X, K=K, L2=np.arange(n + 1, dtype=float))


def random_stochastic(rng, n, m=None):
    A = rng.random((n, m if m is not None else n)) + 0.05
    return A / A.sum(axis=1, keepdims=True)


def random_modulated_kernel(seed=42, n_x=3, n_y=3):
    rng = np.random.default_rng(seed)
    P_X = random_stochastic(rng, n_x)
    K = np.stack([random_stochastic(rng, n_y) for _ in range(n_x)])
    return ModulatedKernel(P_X=P_X, K=K, L2=np.arange(n_y, dtype=float))


@pytest.fixture
def bd_kernel():
    return two_state_kernel()


@pytest.fixture
def rand_kernel():
    return random_modulated_kernel()


#: chains used by the hitting-time and splitting identity tests
def chain_collection():
    rng = np.random.default_rng(7)
    chains = {
        "two-state": np.array([[0.6, 0.4], [0.3, 0.7]]),
        "cycle-lazy": np.array([
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.0, 0.0, 0.5],
        ]),
        "random-5": random_stochastic(rng, 5),
        "random-8": random_stochastic(rng, 8),
        "birth-death": birth_death_rows(6, 0.3, 0.5),
    }
    return chains
