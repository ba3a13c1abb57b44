"""Shared machinery for discrete-time stochastic recursions.

A *model* is any object with a ``step(state, rng)`` method and (optionally)
a ``validate(state)`` method.  ``step`` consumes draws from the supplied
RandomStream in an order the model documents; replaying with the same
(seed, stream_id) reproduces the path bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class InvalidStateError(ValueError):
    """Raised when a state fails a model's validity check."""


@dataclass
class RandomStream:
    """Deterministic, splittable random stream.

    Distinct stream_ids are independent (numpy SeedSequence spawning), so
    replications may run concurrently without shared state.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")
        self._gen = np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        )

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def poisson(self, lam, size=None):
        return self._gen.poisson(lam, size=size)

    def choice_from_row(self, row: np.ndarray) -> int:
        """Draw an index from a probability row via inverse CDF."""
        u = self._gen.random()
        return int(np.searchsorted(np.cumsum(row), u, side="right").clip(0, len(row) - 1))


@dataclass
class Trajectory:
    states: list
    slot_index: int
    thinning: int

    def __len__(self):
        return len(self.states)


def step(model, state, rng: RandomStream):
    """One-slot transition of `model` from `state` using draws from `rng`."""
    validate = getattr(model, "validate", None)
    if validate is not None:
        validate(state)
    return model.step(state, rng)


def trajectory(model, state0, T: int, thinning: int = 1, rng: RandomStream | None = None) -> Trajectory:
    """Apply `step` T times, recording every `thinning`-th state.

    The recorded sequence has floor(T / thinning) + 1 entries and starts with
    state0.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    if rng is None:
        rng = RandomStream(0)
    states = [state0]
    s = state0
    for t in range(1, T + 1):
        s = step(model, s, rng)
        if t % thinning == 0:
            states.append(s)
    return Trajectory(states=states, slot_index=T, thinning=thinning)


class ReflectedWalk:
    """Fair +/-1 walk on {0, 1, ..., cap}, reflected at both ends.

    Draw order per slot: one uniform for the step direction.
    """

    def __init__(self, p_up: float = 0.5, cap: int | None = None):
        self.p_up = p_up
        self.cap = cap

    def validate(self, state):
        if state < 0:
            raise InvalidStateError(f"negative walk position {state}")

    def step(self, state, rng: RandomStream):
        move = 1 if rng.uniform() < self.p_up else -1
        s = state + move
        if s < 0:
            s = 0
        if self.cap is not None and s > self.cap:
            s = self.cap
        return s


class DeterministicMap:
    """Degenerate model: applies f with no randomness consumed."""

    def __init__(self, f):
        self.f = f

    def step(self, state, rng: RandomStream):
        return self.f(state)
