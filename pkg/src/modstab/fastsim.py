"""Compiled bulk simulators for the slotted network and queue recursions.

These loops mirror the pure-Python slot dynamics in `network.py`; the
Python path is the readable reference used by unit tests, this one runs
the multi-million-slot experiments.  Draw order per slot is fixed and
shared with the reference: red batch size, red station assignments, green
batch size, green assignments, then the per-station attempt coins.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MODE_COORDINATOR = 0
MODE_NO_COORDINATOR = 1
LAW_BERNOULLI = 0
LAW_POISSON = 1


def mix_seed(seed: int, stream_id: int) -> int:
    """Deterministic 32-bit seed for a (seed, stream) pair."""
    h = (int(seed) & 0xFFFFFFFFFFFFFFFF) * 6364136223846793005 + 1442695040888963407
    h ^= int(stream_id) * 0x9E3779B97F4A7C15
    h &= 0xFFFFFFFFFFFFFFFF
    h ^= h >> 33
    return int(h & 0x7FFFFFFF)


@njit(cache=True)
def _draw_count(law, lam):
    if law == LAW_BERNOULLI:
        return 1 if np.random.random() < lam else 0
    # Knuth's product method; rates here are O(1)
    L = np.exp(-lam)
    k = 0
    prod = np.random.random()
    while prod > L:
        k += 1
        prod *= np.random.random()
    return k


@njit(cache=True)
def _slot_draws(M, lamR, lamG, rlaw, glaw, radd, gadd, att, p):
    for k in range(M):
        radd[k] = 0
        gadd[k] = 0
    nr = _draw_count(rlaw, lamR)
    for _ in range(nr):
        radd[int(np.random.random() * M)] += 1
    ng = _draw_count(glaw, lamG)
    for _ in range(ng):
        gadd[int(np.random.random() * M)] += 1
    for k in range(M):
        att[k] = 1 if np.random.random() < p else 0


@njit(cache=True)
def _transmit(mode, dummy, R, G, s, att):
    """Apply slot-s transmissions in place.  Arrivals are added separately."""
    M = R.shape[0]
    Rs0 = R[s]
    if mode == MODE_COORDINATOR:
        if Rs0 > 0:
            R[s] -= 1
        n_att = 0
        who = -1
        for j in range(M):
            if j == s and Rs0 > 0:
                continue
            if att[j] == 1 and (dummy == 1 or G[j] > 0):
                n_att += 1
                who = j
        if n_att == 1 and G[who] > 0:
            G[who] -= 1
    else:
        if dummy == 1:
            if Rs0 > 0 and att[s] == 0:
                R[s] -= 1
            n_att = 0
            who = -1
            for j in range(M):
                if att[j] == 1:
                    n_att += 1
                    who = j
            if n_att == 1 and (who != s or Rs0 == 0) and G[who] > 0:
                G[who] -= 1
        else:
            n_att = 0
            who = -1
            for j in range(M):
                if att[j] == 1 and G[j] > 0:
                    n_att += 1
                    who = j
            if Rs0 > 0 and not (att[s] == 1 and G[s] > 0):
                R[s] -= 1
            if n_att == 1 and (who != s or Rs0 == 0):
                G[who] -= 1


@njit(cache=True)
def run_sumg(mode, dummy, M, p, lamR, lamG, rlaw, glaw, slots, warmup, record_every, seed, R0, G0):
    """Simulate `slots` slots; record the total green queue every
    `record_every` slots and count post-warmup slots where the scheduled
    station's red queue is empty.

    Returns (recorded_sum_G, idle_count, final_R, final_G).
    """
    np.random.seed(seed)
    R = R0.copy()
    G = G0.copy()
    radd = np.zeros(M, np.int64)
    gadd = np.zeros(M, np.int64)
    att = np.zeros(M, np.int64)
    nrec = slots // record_every
    sumg = np.zeros(nrec, np.int64)
    idle = 0
    r = 0
    for t in range(1, slots + 1):
        s = (t - 1) % M
        if t > warmup and R[s] == 0:
            idle += 1
        _slot_draws(M, lamR, lamG, rlaw, glaw, radd, gadd, att, p)
        _transmit(mode, dummy, R, G, s, att)
        for k in range(M):
            R[k] += radd[k]
            G[k] += gadd[k]
        if t % record_every == 0:
            tot = 0
            for k in range(M):
                tot += G[k]
            sumg[r] = tot
            r += 1
    return sumg, idle, R, G


@njit(cache=True)
def run_trace(mode, dummy, M, p, lamR, lamG, rlaw, glaw, slots, thinning, seed, R0, G0):
    """Full per-station trace, recorded every `thinning` slots (plus slot 0)."""
    np.random.seed(seed)
    R = R0.copy()
    G = G0.copy()
    radd = np.zeros(M, np.int64)
    gadd = np.zeros(M, np.int64)
    att = np.zeros(M, np.int64)
    nrec = slots // thinning + 1
    Rrec = np.zeros((nrec, M), np.int64)
    Grec = np.zeros((nrec, M), np.int64)
    trec = np.zeros(nrec, np.int64)
    Rrec[0] = R
    Grec[0] = G
    r = 1
    for t in range(1, slots + 1):
        s = (t - 1) % M
        _slot_draws(M, lamR, lamG, rlaw, glaw, radd, gadd, att, p)
        _transmit(mode, dummy, R, G, s, att)
        for k in range(M):
            R[k] += radd[k]
            G[k] += gadd[k]
        if t % thinning == 0:
            trec[r] = t
            Rrec[r] = R
            Grec[r] = G
            r += 1
    return trec, Rrec, Grec


@njit(cache=True)
def run_dominated(M, p, lamR, lamG, rlaw, glaw, slots, seed):
    """Coupled true/dummy coordinator runs with shared draws.

    Returns (first_violation_slot, max_gap) where first_violation_slot is 0
    when G <= G-dummy held componentwise at every slot, and max_gap is the
    largest observed dummy excess.
    """
    np.random.seed(seed)
    R = np.zeros(M, np.int64)
    G = np.zeros(M, np.int64)
    Gd = np.zeros(M, np.int64)
    radd = np.zeros(M, np.int64)
    gadd = np.zeros(M, np.int64)
    att = np.zeros(M, np.int64)
    max_gap = 0
    for t in range(1, slots + 1):
        s = (t - 1) % M
        _slot_draws(M, lamR, lamG, rlaw, glaw, radd, gadd, att, p)
        Rd = R.copy()
        _transmit(MODE_COORDINATOR, 0, R, G, s, att)
        _transmit(MODE_COORDINATOR, 1, Rd, Gd, s, att)
        for k in range(M):
            R[k] += radd[k]
            G[k] += gadd[k]
            Gd[k] += gadd[k]
        for k in range(M):
            if G[k] > Gd[k]:
                return t, max_gap
            if Gd[k] - G[k] > max_gap:
                max_gap = Gd[k] - G[k]
    return 0, max_gap


@njit(cache=True)
def simulate_kernel_joint(cum_px, cum_k, x0, y0, slots, seed):
    """Simulate the joint (x, y) kernel chain; returns Y-visit counts."""
    np.random.seed(seed)
    n_x = cum_px.shape[0]
    n_y = cum_k.shape[1]
    counts = np.zeros(n_y, np.int64)
    x = x0
    y = y0
    for _ in range(slots):
        u = np.random.random()
        x = np.searchsorted(cum_px[x], u)
        if x >= n_x:
            x = n_x - 1
        u = np.random.random()
        y = np.searchsorted(cum_k[x, y], u)
        if y >= n_y:
            y = n_y - 1
        counts[y] += 1
    return counts


@njit(cache=True)
def idle_recursion(cdf, T, burn_in, seed):
    """Queue recursion Z' = max(Z - 1, 0) + chi from Z = 0; returns the
    count of post-burn-in slots with Z = 0."""
    np.random.seed(seed)
    z = 0
    zeros = 0
    for t in range(T):
        if t >= burn_in and z == 0:
            zeros += 1
        chi = np.searchsorted(cdf, np.random.random())
        z = max(z - 1, 0) + chi
    return zeros
