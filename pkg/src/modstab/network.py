"""Slot-exact model of the M-station two-protocol network.

Red (scheduled) traffic owns slot t at station i(t) = ((t-1) mod M) + 1 and
never collides with itself; green traffic follows slotted ALOHA with
per-station attempt probability p.  With a coordinator, a station that
transmits red in a slot does not attempt green; without one, a same-station
red/green pair collides.  The `dummy` flag switches to the dominating
system where stations attempt regardless of green-queue emptiness.

Draw order per slot (part of the model contract, shared with fastsim):
red batch size, red station assignments, green batch size, green
assignments, then the M attempt coins.  Arrivals of slot t become
transmittable in slot t+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import fastsim
from .chains import RandomStream
from .kernels import ModulatedKernel

COORDINATOR = "coordinator"
NO_COORDINATOR = "no_coordinator"
BERNOULLI = "bernoulli"
POISSON = "poisson"

#: Returned by theoretical_threshold when the red-rate precondition fails.
INFEASIBLE = None


class ConfigError(ValueError):
    pass


class DominationError(AssertionError):
    """The dummy chain failed to dominate the true one (invariant breach)."""


@dataclass(frozen=True)
class NetworkConfig:
    M: int
    p: float
    lambda_R: float
    lambda_G: float
    mode: str = COORDINATOR
    dummy: bool = False
    arrival_law: str = POISSON

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not (0.0 < self.p < 1.0):
            raise ConfigError("p must lie in (0, 1)")
        if self.lambda_R < 0 or self.lambda_G < 0:
            raise ConfigError("arrival rates must be non-negative")
        if self.mode not in (COORDINATOR, NO_COORDINATOR):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.arrival_law not in (BERNOULLI, POISSON):
            raise ConfigError(f"unknown arrival law {self.arrival_law!r}")
        if self.arrival_law == BERNOULLI and (self.lambda_R > 1 or self.lambda_G > 1):
            raise ConfigError("bernoulli arrival rates must be <= 1")

    @property
    def mode_code(self) -> int:
        return fastsim.MODE_COORDINATOR if self.mode == COORDINATOR else fastsim.MODE_NO_COORDINATOR

    @property
    def law_code(self) -> int:
        return fastsim.LAW_BERNOULLI if self.arrival_law == BERNOULLI else fastsim.LAW_POISSON

    def with_lambda_G(self, lam: float) -> "NetworkConfig":
        return replace(self, lambda_G=lam)

    def to_dict(self) -> dict:
        return {
            "M": self.M, "p": self.p, "lambda_R": self.lambda_R,
            "lambda_G": self.lambda_G, "mode": self.mode, "dummy": self.dummy,
            "arrival_law": self.arrival_law,
        }


@dataclass
class NetworkState:
    t: int
    R: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.int64)
        self.G = np.asarray(self.G, dtype=np.int64)
        if self.t < 1:
            raise ConfigError("slot index starts at t = 1")

    def total_green(self) -> int:
        return int(self.G.sum())


def scheduled_station(t: int, M: int) -> int:
    """1-based round-robin owner of slot t (internal arrays are 0-based)."""
    if t < 1 or M < 1:
        raise ConfigError("t >= 1 and M >= 1 required")
    return (t - 1) % M + 1


def slot_transition(config: NetworkConfig, R, G, t: int, red_add, green_add, alpha,
                    dummy: bool | None = None):
    """Deterministic slot-t transition given realized draws.

    Returns new (R, G).  `dummy` overrides config.dummy (used by the
    coupled domination step, which shares one R between both chains).
    """
    M = config.M
    dummy = config.dummy if dummy is None else dummy
    s = scheduled_station(t, M) - 1
    R = np.array(R, dtype=np.int64)
    G = np.array(G, dtype=np.int64)
    alpha = np.asarray(alpha, dtype=np.int64)
    Rs0 = int(R[s])
    if config.mode == COORDINATOR:
        if Rs0 > 0:
            R[s] -= 1
        attempters = [
            j for j in range(M)
            if (j != s or Rs0 == 0) and alpha[j] == 1 and (dummy or G[j] > 0)
        ]
        if len(attempters) == 1 and G[attempters[0]] > 0:
            G[attempters[0]] -= 1
    else:
        if dummy:
            if Rs0 > 0 and alpha[s] == 0:
                R[s] -= 1
            attempters = [j for j in range(M) if alpha[j] == 1]
            if (len(attempters) == 1 and (attempters[0] != s or Rs0 == 0)
                    and G[attempters[0]] > 0):
                G[attempters[0]] -= 1
        else:
            attempters = [j for j in range(M) if alpha[j] == 1 and G[j] > 0]
            if Rs0 > 0 and not (alpha[s] == 1 and G[s] > 0):
                R[s] -= 1
            if len(attempters) == 1 and (attempters[0] != s or Rs0 == 0):
                G[attempters[0]] -= 1
    R += np.asarray(red_add, dtype=np.int64)
    G += np.asarray(green_add, dtype=np.int64)
    return R, G


def _draw_batch(config: NetworkConfig, lam: float, rng: RandomStream) -> np.ndarray:
    add = np.zeros(config.M, dtype=np.int64)
    if config.arrival_law == BERNOULLI:
        n = 1 if rng.uniform() < lam else 0
    else:
        n = int(rng.poisson(lam))
    for _ in range(n):
        add[int(rng.uniform() * config.M)] += 1
    return add


def _draw_slot(config: NetworkConfig, rng: RandomStream):
    red_add = _draw_batch(config, config.lambda_R, rng)
    green_add = _draw_batch(config, config.lambda_G, rng)
    alpha = (rng.uniform(config.M) < config.p).astype(np.int64)
    return red_add, green_add, alpha


class NetworkModel:
    """chain-core stepping model over NetworkState."""

    def __init__(self, config: NetworkConfig):
        self.config = config

    def validate(self, state: NetworkState):
        if len(state.R) != self.config.M or len(state.G) != self.config.M:
            raise ConfigError("state dimension does not match M")
        if np.any(state.R < 0) or np.any(state.G < 0):
            raise ConfigError("negative queue length")

    def step(self, state: NetworkState, rng: RandomStream) -> NetworkState:
        red_add, green_add, alpha = _draw_slot(self.config, rng)
        R, G = slot_transition(self.config, state.R, state.G, state.t, red_add, green_add, alpha)
        return NetworkState(t=state.t + 1, R=R, G=G)


def step_network(config: NetworkConfig, state: NetworkState, rng: RandomStream) -> NetworkState:
    model = NetworkModel(config)
    model.validate(state)
    return model.step(state, rng)


def step_dominated(config: NetworkConfig, state: tuple, rng: RandomStream) -> tuple:
    """Advance (t, R, G, G_dummy) with identical draws for both green chains.

    Coordinator mode only (the red dynamics are shared there).  Raises
    DominationError if any true green queue exceeds its dummy counterpart.
    """
    if config.mode != COORDINATOR:
        raise ConfigError("the coupled dominated step is defined for coordinator mode")
    t, R, G, Gd = state
    red_add, green_add, alpha = _draw_slot(config, rng)
    R1, G1 = slot_transition(config, R, G, t, red_add, green_add, alpha, dummy=False)
    R2, G2 = slot_transition(config, R, Gd, t, red_add, green_add, alpha, dummy=True)
    assert np.array_equal(R1, R2)
    if np.any(G1 > G2):
        raise DominationError(f"domination violated at slot {t}: G={G1}, G_dummy={G2}")
    return (t + 1, R1, G1, G2)


def theoretical_threshold(config: NetworkConfig):
    """Critical green rate from the closed-form stability conditions.

    Returns INFEASIBLE (None) when the red rate precondition fails.
    """
    M, p, lr = config.M, config.p, config.lambda_R
    if config.mode == COORDINATOR:
        if lr >= 1.0:
            return INFEASIBLE
        if M == 1:
            return (1.0 - lr) * p
        return lr * (M - 1) * p * (1 - p) ** (M - 2) + (1 - lr) * M * p * (1 - p) ** (M - 1)
    if lr >= 1.0 - p:
        return INFEASIBLE
    rho = lr / (1.0 - p)
    if M == 1:
        return (1.0 - rho) * p
    return rho * (M - 1) * p * (1 - p) ** (M - 1) + (1 - rho) * M * p * (1 - p) ** (M - 1)


def cyclic_view(state: NetworkState, M: int | None = None) -> NetworkState:
    """Rotate coordinates so position 1 is the scheduled station i(t)."""
    M = len(state.R) if M is None else M
    s = scheduled_station(state.t, M) - 1
    return NetworkState(t=state.t, R=np.roll(state.R, -s), G=np.roll(state.G, -s))


# -- exact truncated kernel bridge -----------------------------------------

def _bernoulli_events(lam: float, M: int):
    """(probability, per-position arrival vector) for a Bernoulli batch
    assigned uniformly over M positions."""
    events = [(1.0 - lam, np.zeros(M, dtype=np.int64))]
    for u in range(M):
        e = np.zeros(M, dtype=np.int64)
        e[u] = 1
        events.append((lam / M, e))
    return events


def build_truncated_kernel(config: NetworkConfig, R_cap: int, G_cap: int,
                           size_budget: int = 50_000_000) -> ModulatedKernel:
    """Exact modulated kernel of the coordinator network in the cyclic view.

    The modulating state is the previous slot's red vector (so that the
    green row is a function of the *new* X-state, matching the kernel
    convention).  Mass pushed past a cap is reflected onto the cap and
    recorded in the leak table.  Requires coordinator mode, dummy dynamics
    and Bernoulli arrivals (the exact enumeration needs finite batches).
    """
    if config.mode != COORDINATOR:
        raise ConfigError("kernel export needs coordinator mode (autonomous red component)")
    if not config.dummy:
        raise ConfigError("kernel export models the dominating dummy chain; set dummy=True")
    if config.arrival_law != BERNOULLI:
        raise ConfigError("exact kernel export requires bernoulli arrivals")
    M = config.M
    n_x = (R_cap + 1) ** M
    n_y = (G_cap + 1) ** M
    need = n_x * n_x + n_x * n_y * n_y
    if need > size_budget:
        raise ConfigError(f"state space too large: needs budget {need}, have {size_budget}")
    r_shape = (R_cap + 1,) * M
    g_shape = (G_cap + 1,) * M

    red_events = _bernoulli_events(config.lambda_R, M)
    green_events = _bernoulli_events(config.lambda_G, M)
    alphas = [(np.array(a, dtype=np.int64),
               config.p ** sum(a) * (1 - config.p) ** (M - sum(a)))
              for a in product((0, 1), repeat=M)]

    # cyclic red transition: positions shift left by one; position 1 is served
    P_X = np.zeros((n_x, n_x))
    for xi in range(n_x):
        r = np.array(np.unravel_index(xi, r_shape), dtype=np.int64)
        for prob, a in red_events:
            nxt = np.empty(M, dtype=np.int64)
            nxt[: M - 1] = r[1:] + a[1:]
            nxt[M - 1] = r[0] - (1 if r[0] > 0 else 0) + a[0]
            np.clip(nxt, 0, R_cap, out=nxt)
            P_X[xi, np.ravel_multi_index(tuple(nxt), r_shape)] += prob

    K = np.zeros((n_x, n_y, n_y))
    leak = np.zeros((n_x, n_y))
    for xi in range(n_x):
        r = np.array(np.unravel_index(xi, r_shape), dtype=np.int64)
        red_busy = r[0] > 0
        for yi in range(n_y):
            g = np.array(np.unravel_index(yi, g_shape), dtype=np.int64)
            for alpha, pa in alphas:
                # unique dummy attempter among stations not blocked by red
                n_att = 0
                who = -1
                for j in range(M):
                    if j == 0 and red_busy:
                        continue
                    if alpha[j] == 1:
                        n_att += 1
                        who = j
                serve = np.zeros(M, dtype=np.int64)
                if n_att == 1 and g[who] > 0:
                    serve[who] = 1
                for prob, b in green_events:
                    upd = g - serve + b
                    nxt = np.empty(M, dtype=np.int64)
                    nxt[: M - 1] = upd[1:]
                    nxt[M - 1] = upd[0]
                    mass = pa * prob
                    if np.any(nxt > G_cap):
                        leak[xi, yi] += mass
                        np.clip(nxt, 0, G_cap, out=nxt)
                    K[xi, yi, np.ravel_multi_index(tuple(nxt), g_shape)] += mass

    coords = np.array([np.unravel_index(np.arange(n_y), g_shape)[i] for i in range(M)],
                      dtype=float)
    return ModulatedKernel(P_X=P_X, K=K, L2=coords.sum(axis=0),
                           coords=coords if M > 1 else None, leak=leak)


def empty_red_states(R_cap: int, M: int) -> list[int]:
    """Indices of X-states with every red queue empty (default V)."""
    return [0]
