"""Finite Markov-modulated kernels.

A ModulatedKernel holds an autonomous X-chain transition matrix P_X together
with, for each X-state, a conditional transition matrix for the (truncated)
Y-chain.  The joint chain steps x -> x' by P_X and then y -> y' by K(x'),
i.e. the Y-draw is conditioned on the *new* X-state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chains import RandomStream

ROW_TOL = 1e-12


class KernelError(ValueError):
    pass


def _check_stochastic(mat: np.ndarray, name: str):
    if np.any(mat < -ROW_TOL):
        raise KernelError(f"{name} has negative entries")
    rowsums = mat.sum(axis=-1)
    if np.max(np.abs(rowsums - 1.0)) > 1e-12:
        raise KernelError(f"{name} rows do not sum to 1 (max dev {np.max(np.abs(rowsums-1)):.3e})")


@dataclass
class ModulatedKernel:
    """Finite two-component kernel.

    P_X : (n_x, n_x) row-stochastic.
    K   : (n_x, n_y, n_y); K[x] is the Y-kernel conditional on X^1 = x.
    L2  : (n_y,) non-negative Lyapunov values.  In multivariate mode,
          `coords` is an (M, n_y) array of per-coordinate values and L2
          defaults to coords.sum(axis=0).
    leak: optional (n_x, n_y) mass that was reflected back onto the Y
          truncation boundary when the kernel was built.
    """

    P_X: np.ndarray
    K: np.ndarray
    L2: Optional[np.ndarray] = None
    coords: Optional[np.ndarray] = None
    leak: Optional[np.ndarray] = None

    def __post_init__(self):
        self.P_X = np.asarray(self.P_X, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        if self.P_X.ndim != 2 or self.P_X.shape[0] != self.P_X.shape[1]:
            raise KernelError("P_X must be square")
        if self.K.ndim != 3 or self.K.shape[0] != self.P_X.shape[0]:
            raise KernelError("K must have shape (n_x, n_y, n_y)")
        if self.K.shape[1] != self.K.shape[2]:
            raise KernelError("each K(x) must be square")
        _check_stochastic(self.P_X, "P_X")
        _check_stochastic(self.K, "K")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
            if self.coords.ndim != 2 or self.coords.shape[1] != self.n_y:
                raise KernelError("coords must have shape (M, n_y)")
            if np.any(self.coords < 0):
                raise KernelError("coords values must be non-negative")
            if self.L2 is None:
                self.L2 = self.coords.sum(axis=0)
        if self.L2 is None:
            raise KernelError("either L2 or coords is required")
        self.L2 = np.asarray(self.L2, dtype=float)
        if self.L2.shape != (self.n_y,):
            raise KernelError("L2 must have shape (n_y,)")
        if np.any(self.L2 < 0):
            raise KernelError("L2 values must be non-negative")
        if self.leak is not None:
            self.leak = np.asarray(self.leak, dtype=float)
            if self.leak.shape != (self.n_x, self.n_y):
                raise KernelError("leak must have shape (n_x, n_y)")

    @property
    def n_x(self) -> int:
        return self.P_X.shape[0]

    @property
    def n_y(self) -> int:
        return self.K.shape[1]

    @property
    def n_coords(self) -> int:
        return 1 if self.coords is None else self.coords.shape[0]

    def coord_values(self) -> np.ndarray:
        """(M, n_y) per-coordinate L2 values; a single row in univariate mode."""
        if self.coords is None:
            return self.L2[None, :]
        return self.coords

    # -- joint evolution helpers -------------------------------------------

    def evolve_expectation(self, values: np.ndarray) -> np.ndarray:
        """One backward step of W(x, y) = E_{x,y}[values(X^1, Y^1)].

        values has shape (n_x, n_y); returns the same shape.
        """
        # T[x', y] = sum_y' K[x', y, y'] values[x', y']
        T = np.einsum("ayb,ab->ay", self.K, values)
        return self.P_X @ T

    def expected_l2_after(self, t: int, values: Optional[np.ndarray] = None) -> np.ndarray:
        """(n_x, n_y) array of E_{x,y} values(Y^t); values defaults to L2."""
        v = self.L2 if values is None else np.asarray(values, dtype=float)
        W = np.broadcast_to(v, (self.n_x, self.n_y)).copy()
        for _ in range(t):
            W = self.evolve_expectation(W)
        return W

    def one_step_drift(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """(n_x, n_y) exact drift E[v(Y^1) - v(y) | X^1 = x, Y^0 = y].

        Indexed by the conditioning (new) X-state x, matching the K(x) rows.
        """
        v = self.L2 if values is None else np.asarray(values, dtype=float)
        return self.K @ v - v[None, :]


class ModulatedKernelModel:
    """Joint (x, y) stepping model for chain-core simulation.

    Draw order per slot: (1) one uniform for the X-transition,
    (2) one uniform for the Y-transition given the new X.
    """

    def __init__(self, kernel: ModulatedKernel):
        self.kernel = kernel
        self._cum_px = np.cumsum(kernel.P_X, axis=1)
        self._cum_k = np.cumsum(kernel.K, axis=2)

    def validate(self, state):
        x, y = state
        if not (0 <= x < self.kernel.n_x and 0 <= y < self.kernel.n_y):
            raise ValueError(f"state {state} outside kernel dimensions")

    def step(self, state, rng: RandomStream):
        x, y = state
        u1 = rng.uniform()
        x1 = int(np.searchsorted(self._cum_px[x], u1, side="right").clip(0, self.kernel.n_x - 1))
        u2 = rng.uniform()
        y1 = int(np.searchsorted(self._cum_k[x1, y], u2, side="right").clip(0, self.kernel.n_y - 1))
        return (x1, y1)


# -- structured text import/export ----------------------------------------

def kernel_to_text(kernel: ModulatedKernel) -> str:
    """Serialize a kernel to a structured text document (JSON).

    Matrices are row-major nested lists.  repr-based float encoding makes
    the round trip exact for decimals with <= 15 significant digits.
    """
    doc = {
        "format": "modulated-kernel",
        "version": 1,
        "n_x": kernel.n_x,
        "n_y": kernel.n_y,
        "P_X": kernel.P_X.tolist(),
        "K": kernel.K.tolist(),
        "L2": kernel.L2.tolist(),
    }
    if kernel.coords is not None:
        doc["coords"] = kernel.coords.tolist()
    if kernel.leak is not None:
        doc["leak"] = kernel.leak.tolist()
    return json.dumps(doc, indent=1)


def kernel_from_text(text: str) -> ModulatedKernel:
    doc = json.loads(text)
    if doc.get("format") != "modulated-kernel":
        raise KernelError("not a modulated-kernel document")
    coords = np.array(doc["coords"]) if "coords" in doc else None
    leak = np.array(doc["leak"]) if "leak" in doc else None
    return ModulatedKernel(
        P_X=np.array(doc["P_X"]),
        K=np.array(doc["K"]),
        L2=np.array(doc["L2"]),
        coords=coords,
        leak=leak,
    )


def save_kernel(kernel: ModulatedKernel, path) -> None:
    with open(path, "w") as fh:
        fh.write(kernel_to_text(kernel))


def load_kernel(path) -> ModulatedKernel:
    with open(path) as fh:
        return kernel_from_text(fh.read())
