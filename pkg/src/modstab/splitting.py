"""Split-chain construction, regeneration simulation and coupling tails.

The split kernel rewrites the m-step rows over the regeneration set V as
p*mu + (1-p)*Q_x; simulating the associated stochastic recursion yields
regeneration epochs (state drawn from mu whenever the coin fires on a
visit to V) and, with a second stationary copy, an estimate of the
coupling tail delta_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fastsim
from .analysis import (
    AnalysisError,
    _as_index_set,
    check_minorization,
    expected_hitting_time,
    stationary_distribution,
)
from .chains import RandomStream

RECON_TOL = 1e-12


class NoMinorizationError(AnalysisError):
    pass


@dataclass
class SplitKernel:
    P: np.ndarray          # one-step kernel
    m: int
    V: np.ndarray
    p: float
    mu: np.ndarray
    Q: Optional[np.ndarray]  # residual m-step rows for x in V; None when p = 1

    @property
    def n(self) -> int:
        return self.P.shape[0]


def build_split_kernel(P: np.ndarray, V, m: int = 1) -> SplitKernel:
    """Split the m-step rows over V by the minorization measure.

    Q_x = (P_x^m - p*mu) / (1-p); the reconstruction p*mu + (1-p)*Q_x is
    exact to 1e-12 per entry.  p = 1 degenerates to Q unused.
    """
    P = np.asarray(P, dtype=float)
    V = _as_index_set(V, P.shape[0])
    found = check_minorization(P, V, m)
    if found is None:
        raise NoMinorizationError("rows over V have disjoint supports: no minorization")
    p, mu = found
    Pm = np.linalg.matrix_power(P, m)
    if p >= 1.0 - 1e-15:
        return SplitKernel(P=P, m=m, V=V, p=1.0, mu=mu, Q=None)
    Q = (Pm[V] - p * mu[None, :]) / (1.0 - p)
    Q = np.clip(Q, 0.0, None)
    Q /= Q.sum(axis=1, keepdims=True)
    recon = p * mu[None, :] + (1.0 - p) * Q
    err = np.max(np.abs(recon - Pm[V]))
    if err > RECON_TOL:
        raise AnalysisError(f"splitting reconstruction error {err:.3e} exceeds {RECON_TOL:g}")
    return SplitKernel(P=P, m=m, V=V, p=p, mu=mu, Q=Q)


def _sample_rows(rows: np.ndarray, idx: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized draw from rows[idx[k]] using uniforms u[k]."""
    cum = np.cumsum(rows, axis=1)
    out = np.empty(len(idx), dtype=np.int64)
    for r in np.unique(idx):
        mask = idx == r
        out[mask] = np.searchsorted(cum[r], u[mask], side="right")
    return np.clip(out, 0, rows.shape[1] - 1)


def _run_split_srs(split: SplitKernel, init, T: int, rng: RandomStream):
    """Simulate independent split-chain paths for T slots.

    init is a single state (all replications start there, pass reps via an
    array instead) or an array of per-replication initial states.  Returns
    (states, regen): states has shape (reps, T+1); regen[k, t] is True when
    the regeneration coin fired at slot t (so X^{t+1} ~ mu).  The coin is
    flipped at every m-th visit to V; intermediate slots use the one-step
    kernel (stated convention for m > 1; exact for m = 1).
    """
    n = split.n
    init = np.atleast_1d(np.asarray(init, dtype=np.int64))
    reps = len(init)
    in_V = np.zeros(n, dtype=bool)
    in_V[split.V] = True
    v_pos = np.full(n, -1, dtype=np.int64)
    v_pos[split.V] = np.arange(len(split.V))
    states = np.empty((reps, T + 1), dtype=np.int64)
    regen = np.zeros((reps, T), dtype=bool)
    x = init.copy()
    states[:, 0] = x
    visits = np.zeros(reps, dtype=np.int64)
    mu_cum = np.cumsum(split.mu)
    for t in range(T):
        at_V = in_V[x]
        split_now = np.zeros(reps, dtype=bool)
        if at_V.any():
            visits[at_V] += 1
            split_now = at_V & (visits % split.m == 0)
        beta = rng.uniform(reps) < split.p
        fire = split_now & beta
        regen[:, t] = fire
        u = rng.uniform(reps)
        nxt = np.empty(reps, dtype=np.int64)
        plain = ~fire
        if split.Q is not None:
            plain_split = split_now & ~beta
            plain = plain & ~plain_split
            if plain_split.any():
                nxt[plain_split] = _sample_rows(split.Q, v_pos[x[plain_split]], u[plain_split])
        if plain.any():
            nxt[plain] = _sample_rows(split.P, x[plain], u[plain])
        if fire.any():
            nxt[fire] = np.clip(np.searchsorted(mu_cum, u[fire], side="right"), 0, n - 1)
        x = nxt
        states[:, t + 1] = x
    return states, regen


def simulate_regenerations(split: SplitKernel, x0: int, reps: int, T_max: int = 10_000,
                           seed: int = 0, stream_id: int = 0) -> np.ndarray:
    """First regeneration times kappa over independent replications.

    kappa = (slot of the first successful coin) + 1; censored replications
    are reported as T_max + 1.
    """
    if x0 not in set(split.V.tolist()):
        raise AnalysisError("x0 must lie in the regeneration set V")
    rng = RandomStream(seed, stream_id)
    _, regen = _run_split_srs(split, np.full(reps, x0), T_max, rng)
    has = regen.any(axis=1)
    kappa = np.full(reps, T_max + 1, dtype=np.int64)
    kappa[has] = regen[has].argmax(axis=1) + 1
    return kappa


@dataclass
class CouplingReport:
    t: np.ndarray
    delta: np.ndarray           # sup over x in V of the empirical P_x(nu > t)
    delta_per_start: dict       # x -> per-t curve
    kappa_mean: float
    kappa_bound: float          # C = s0 * E theta + 1
    replications: int
    censored_fraction: float
    periodic_warning: bool


def estimate_coupling_tail(split: SplitKernel, T_max: int, reps: int,
                           seed: int = 0) -> CouplingReport:
    """Monte Carlo estimate of the coupling tail delta_t.

    For each start x in V, runs the split chain together with an
    independent stationary copy; nu is the first slot >= kappa at which
    both copies sit in V and the first chain's coin fires (joint
    regeneration).  Replications not coupled by T_max count as censored
    and inflate delta_t conservatively.
    """
    pi = stationary_distribution(split.P)
    in_V = np.zeros(split.n, dtype=bool)
    in_V[split.V] = True
    s0 = expected_hitting_time(split.P, split.V)[1]
    e_theta = (1.0 - split.p) / split.p
    bound = s0 * e_theta + 1.0
    t_axis = np.arange(T_max + 1)
    per_start = {}
    kappas = []
    censored = 0
    for k, x0 in enumerate(split.V):
        rng1 = RandomStream(seed, 2 * k)
        rng2 = RandomStream(seed, 2 * k + 1)
        states1, regen = _run_split_srs(split, np.full(reps, x0), T_max, rng1)
        init2 = rng2.generator.choice(split.n, size=reps, p=pi / pi.sum())
        states2, _ = _run_split_srs(split, init2, T_max, rng2)
        has = regen.any(axis=1)
        kappa = np.full(reps, T_max + 1, dtype=np.int64)
        kappa[has] = regen[has].argmax(axis=1) + 1
        kappas.append(kappa)
        # joint regeneration: chain-1 coin fires while both copies sit in V
        joint = np.zeros((reps, T_max + 1), dtype=bool)
        joint[:, :T_max] = regen & in_V[states2[:, :T_max]]
        nu = np.full(reps, np.iinfo(np.int64).max, dtype=np.int64)
        for r in range(reps):
            ks = kappa[r]
            if ks > T_max:
                continue
            hits = np.nonzero(joint[r, ks:])[0]
            if hits.size:
                nu[r] = ks + hits[0]
        censored += int(np.sum(nu > T_max))
        per_start[int(x0)] = (nu[:, None] > t_axis[None, :]).mean(axis=0)
    delta = np.max(np.stack(list(per_start.values())), axis=0)
    kappa_all = np.concatenate(kappas)
    finite = kappa_all <= T_max
    return CouplingReport(
        t=t_axis,
        delta=delta,
        delta_per_start=per_start,
        kappa_mean=float(kappa_all[finite].mean()) if finite.any() else float("inf"),
        kappa_bound=float(bound),
        replications=reps,
        censored_fraction=censored / (reps * len(split.V)),
        periodic_warning=bool(delta[-1] >= 1.0 - 1e-12),
    )


def split_chain_marginal(split: SplitKernel, x0: int, t: int, reps: int,
                         seed: int = 0) -> np.ndarray:
    """Empirical t-step distribution of the split-chain simulation."""
    rng = RandomStream(seed, 0)
    states, _ = _run_split_srs(split, np.full(reps, x0), t, rng)
    return np.bincount(states[:, t], minlength=split.n) / reps


def idle_probability_check(pmf, T: int = 1_000_000, burn_in: int = 10_000,
                           seed: int = 0) -> dict:
    """Empirical P(Z = 0) for Z' = max(Z - 1, 0) + chi, chi ~ pmf.

    pmf[k] = P(chi = k); the mean must be < 1.  Returns the estimate next
    to the 1 - mean reference.
    """
    pmf = np.asarray(pmf, dtype=float)
    if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
        raise AnalysisError("pmf must be a probability vector")
    c = float(np.dot(np.arange(len(pmf)), pmf))
    if c >= 1.0:
        raise AnalysisError(f"increment mean {c:.4g} >= 1: recursion not stable")
    if T <= burn_in:
        raise AnalysisError("T must exceed burn_in")
    cdf = np.cumsum(pmf)
    zeros = fastsim.idle_recursion(cdf, T, burn_in, fastsim.mix_seed(seed, 0))
    return {
        "estimate": zeros / (T - burn_in),
        "reference": 1.0 - c,
        "mean_increment": c,
        "slots": T - burn_in,
    }
