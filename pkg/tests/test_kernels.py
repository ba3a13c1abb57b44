"""Modulated kernel container, evolution helpers, serialization."""

import numpy as np
import pytest

from conftest import random_modulated_kernel, two_state_kernel
from modstab.chains import RandomStream, trajectory
from modstab.kernels import (
    KernelError,
    ModulatedKernel,
    ModulatedKernelModel,
    kernel_from_text,
    kernel_to_text,
    load_kernel,
    save_kernel,
)


def test_rejects_non_stochastic_rows():
    with pytest.raises(KernelError):
        ModulatedKernel(P_X=np.array([[0.5, 0.4], [0.5, 0.5]]),
                        K=np.ones((2, 2, 2)) / 2, L2=np.arange(2.0))


def test_rejects_negative_entries():
    P = np.array([[1.2, -0.2], [0.5, 0.5]])
    with pytest.raises(KernelError):
        ModulatedKernel(P_X=P, K=np.ones((2, 2, 2)) / 2, L2=np.arange(2.0))


def test_rejects_shape_mismatch():
    with pytest.raises(KernelError):
        ModulatedKernel(P_X=np.eye(2), K=np.ones((3, 2, 2)) / 2, L2=np.arange(2.0))
    with pytest.raises(KernelError):
        ModulatedKernel(P_X=np.eye(2), K=np.ones((2, 2, 2)) / 2, L2=np.arange(3.0))


def test_requires_l2_or_coords():
    with pytest.raises(KernelError):
        ModulatedKernel(P_X=np.eye(2), K=np.ones((2, 2, 2)) / 2)


def test_coords_default_l2_is_sum():
    coords = np.array([[0.0, 1.0], [2.0, 0.0]])
    k = ModulatedKernel(P_X=np.eye(2), K=np.ones((2, 2, 2)) / 2, coords=coords)
    assert np.array_equal(k.L2, coords.sum(axis=0))
    assert k.n_coords == 2


def test_evolve_expectation_matches_bruteforce(rand_kernel):
    k = rand_kernel
    rng = np.random.default_rng(0)
    values = rng.random((k.n_x, k.n_y))
    W = k.evolve_expectation(values)
    # brute force: E_{x,y} values(X^1, Y^1)
    ref = np.zeros_like(W)
    for x in range(k.n_x):
        for y in range(k.n_y):
            for x1 in range(k.n_x):
                for y1 in range(k.n_y):
                    ref[x, y] += k.P_X[x, x1] * k.K[x1, y, y1] * values[x1, y1]
    assert np.allclose(W, ref, atol=1e-12)


def test_expected_l2_after_zero_steps(rand_kernel):
    W = rand_kernel.expected_l2_after(0)
    assert np.array_equal(W, np.broadcast_to(rand_kernel.L2, W.shape))


def test_one_step_drift_values(bd_kernel):
    d = bd_kernel.one_step_drift()
    # interior drifts are up - down for each conditioning X-state
    assert np.allclose(d[0, 1:-1], -0.25, atol=1e-12)
    assert np.allclose(d[1, 1:-1], 0.05, atol=1e-12)


def test_text_round_trip_exact(rand_kernel):
    text = kernel_to_text(rand_kernel)
    back = kernel_from_text(text)
    assert np.array_equal(back.P_X, rand_kernel.P_X)
    assert np.array_equal(back.K, rand_kernel.K)
    assert np.array_equal(back.L2, rand_kernel.L2)


def test_file_round_trip_with_coords_and_leak(tmp_path):
    coords = np.array([[0.0, 1.0], [2.0, 0.0]])
    leak = np.array([[0.0, 1e-4], [0.0, 0.0]])
    k = ModulatedKernel(P_X=np.eye(2), K=np.ones((2, 2, 2)) / 2,
                        coords=coords, leak=leak)
    path = tmp_path / "kernel.json"
    save_kernel(k, path)
    back = load_kernel(path)
    assert np.array_equal(back.coords, coords)
    assert np.array_equal(back.leak, leak)


def test_from_text_rejects_foreign_documents():
    with pytest.raises(KernelError):
        kernel_from_text('{"format": "something-else"}')


def test_model_simulation_matches_marginal():
    k = two_state_kernel(n=10)
    model = ModulatedKernelModel(k)
    traj = trajectory(model, (0, 5), 40000, rng=RandomStream(3))
    ys = np.array([y for _, y in traj.states])
    # stable configuration: the y-trajectory should hug the origin
    assert ys.mean() < 5.0
    assert ys.min() == 0


def test_model_validates_state():
    model = ModulatedKernelModel(two_state_kernel(n=5))
    with pytest.raises(ValueError):
        model.validate((2, 0))
    with pytest.raises(ValueError):
        model.validate((0, 6))
