"""Slotted network dynamics, thresholds, kernel export, domination."""

import numpy as np
import pytest

from modstab import fastsim
from modstab.analysis import stationary_distribution
from modstab.chains import RandomStream, trajectory
from modstab.network import (
    BERNOULLI,
    COORDINATOR,
    INFEASIBLE,
    NO_COORDINATOR,
    ConfigError,
    NetworkConfig,
    NetworkModel,
    NetworkState,
    build_truncated_kernel,
    cyclic_view,
    empty_red_states,
    scheduled_station,
    slot_transition,
    step_dominated,
    step_network,
    theoretical_threshold,
)


def cfg(**kw):
    base = dict(M=2, p=0.3, lambda_R=0.3, lambda_G=0.1)
    base.update(kw)
    return NetworkConfig(**base)


# -- configuration ----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        cfg(M=0)
    with pytest.raises(ConfigError):
        cfg(p=0.0)
    with pytest.raises(ConfigError):
        cfg(p=1.0)
    with pytest.raises(ConfigError):
        cfg(lambda_R=-0.1)
    with pytest.raises(ConfigError):
        cfg(mode="broadcast")
    with pytest.raises(ConfigError):
        cfg(arrival_law="geometric")
    with pytest.raises(ConfigError):
        cfg(arrival_law=BERNOULLI, lambda_R=1.5)


def test_config_round_trip():
    c = cfg()
    assert NetworkConfig(**c.to_dict()) == c
    assert c.with_lambda_G(0.7).lambda_G == 0.7


def test_scheduled_station_cycles():
    assert [scheduled_station(t, 3) for t in range(1, 8)] == [1, 2, 3, 1, 2, 3, 1]
    assert scheduled_station(5, 1) == 1
    with pytest.raises(ConfigError):
        scheduled_station(0, 3)


def test_state_validation():
    with pytest.raises(ConfigError):
        NetworkState(t=0, R=[0], G=[0])
    model = NetworkModel(cfg())
    with pytest.raises(ConfigError):
        model.validate(NetworkState(t=1, R=[0], G=[0]))
    with pytest.raises(ConfigError):
        model.validate(NetworkState(t=1, R=[-1, 0], G=[0, 0]))


# -- hand-traced slot transitions ------------------------------------------

Z2 = np.zeros(2, dtype=np.int64)


def test_coordinator_scheduled_service_and_green_success():
    c = cfg(mode=COORDINATOR)
    # slot 1 serves station 1; station 2 attempts alone and succeeds
    R, G = slot_transition(c, [1, 0], [2, 3], 1, Z2, Z2, [1, 1])
    assert R.tolist() == [0, 0]
    assert G.tolist() == [2, 2]


def test_coordinator_collision_no_green_service():
    c = cfg(mode=COORDINATOR)
    # red idle: both stations attempt, collision, nothing served
    R, G = slot_transition(c, [0, 0], [2, 3], 1, Z2, Z2, [1, 1])
    assert G.tolist() == [2, 3]


def test_coordinator_scheduled_attempt_suppressed():
    c = cfg(mode=COORDINATOR)
    # station 1 holds red work, so its green attempt is suppressed
    R, G = slot_transition(c, [2, 0], [5, 0], 1, Z2, Z2, [1, 0])
    assert R.tolist() == [1, 0]
    assert G.tolist() == [5, 0]


def test_coordinator_dummy_empty_queue_interferes():
    c = cfg(mode=COORDINATOR, dummy=True)
    # station 1 sends a dummy packet (empty green queue) and jams station 2
    R, G = slot_transition(c, [0, 0], [0, 3], 1, Z2, Z2, [1, 1])
    assert G.tolist() == [0, 3]
    # the true chain sees a clean success for station 2 on the same draws
    _, G_true = slot_transition(c, [0, 0], [0, 3], 1, Z2, Z2, [1, 1], dummy=False)
    assert G_true.tolist() == [0, 2]


def test_no_coordinator_red_green_collision():
    c = cfg(mode=NO_COORDINATOR)
    # station 1 owns the slot and holds red work; its own green attempt
    # collides with the red transmission, so both fail
    R, G = slot_transition(c, [1, 0], [2, 0], 1, Z2, Z2, [1, 0])
    assert R.tolist() == [1, 0]
    assert G.tolist() == [2, 0]


def test_no_coordinator_red_succeeds_when_green_silent():
    c = cfg(mode=NO_COORDINATOR)
    R, G = slot_transition(c, [1, 0], [2, 0], 1, Z2, Z2, [0, 0])
    assert R.tolist() == [0, 0]
    assert G.tolist() == [2, 0]


def test_no_coordinator_other_station_green_success():
    c = cfg(mode=NO_COORDINATOR)
    # station 2 attempts alone; the red transmission at station 1 does not
    # block it, but the red packet still goes through
    R, G = slot_transition(c, [1, 0], [0, 4], 1, Z2, Z2, [0, 1])
    assert R.tolist() == [0, 0]
    assert G.tolist() == [0, 3]


def test_no_coordinator_dummy_blocks_red():
    c = cfg(mode=NO_COORDINATOR, dummy=True)
    # dummy attempt at the scheduled station kills the red transmission
    R, G = slot_transition(c, [1, 0], [0, 0], 1, Z2, Z2, [1, 0])
    assert R.tolist() == [1, 0]
    assert G.tolist() == [0, 0]


def test_arrivals_added_after_service():
    c = cfg(mode=COORDINATOR)
    R, G = slot_transition(c, [1, 0], [0, 0], 1, [1, 2], [0, 3], [0, 0])
    assert R.tolist() == [1, 2]
    assert G.tolist() == [0, 3]


def test_slot_transition_matches_compiled_path():
    """The readable transition and the compiled one agree on random draws."""
    rng = np.random.default_rng(0)
    for mode in (COORDINATOR, NO_COORDINATOR):
        for dummy in (False, True):
            c = cfg(M=3, mode=mode, dummy=dummy)
            for trial in range(200):
                t = int(rng.integers(1, 10))
                R = rng.integers(0, 4, 3)
                G = rng.integers(0, 4, 3)
                alpha = rng.integers(0, 2, 3)
                ra = rng.integers(0, 2, 3)
                ga = rng.integers(0, 2, 3)
                R1, G1 = slot_transition(c, R, G, t, ra, ga, alpha)
                R2 = R.astype(np.int64).copy()
                G2 = G.astype(np.int64).copy()
                fastsim._transmit(c.mode_code, 1 if dummy else 0, R2, G2,
                                  (t - 1) % 3, alpha.astype(np.int64))
                R2 += ra
                G2 += ga
                assert np.array_equal(R1, R2), (mode, dummy, trial)
                assert np.array_equal(G1, G2), (mode, dummy, trial)


# -- thresholds -------------------------------------------------------------

def test_threshold_coordinator_values():
    assert abs(theoretical_threshold(cfg(M=1, p=0.3, lambda_R=0.5)) - 0.15) < 1e-12
    assert abs(theoretical_threshold(cfg(M=2, p=0.5, lambda_R=0.5)) - 0.5) < 1e-12
    assert abs(theoretical_threshold(cfg(M=3, p=0.2, lambda_R=0.3)) - 0.3648) < 1e-12


def test_threshold_no_coordinator_values():
    nc = dict(mode=NO_COORDINATOR)
    assert abs(theoretical_threshold(cfg(M=1, p=0.5, lambda_R=0.4, **nc)) - 0.10) < 1e-12
    assert abs(theoretical_threshold(cfg(M=2, p=0.5, lambda_R=0.2, **nc)) - 0.40) < 1e-12


def test_threshold_infeasible():
    nc = dict(mode=NO_COORDINATOR)
    assert theoretical_threshold(cfg(M=1, p=0.5, lambda_R=0.5, **nc)) is INFEASIBLE
    assert theoretical_threshold(cfg(M=2, p=0.5, lambda_R=0.7, **nc)) is INFEASIBLE
    assert theoretical_threshold(cfg(M=1, p=0.5, lambda_R=1.0)) is INFEASIBLE


# -- cyclic view ------------------------------------------------------------

def test_cyclic_view_rotation():
    st = NetworkState(t=3, R=[1, 2, 3], G=[4, 5, 6])
    cv = cyclic_view(st)
    assert cv.R.tolist() == [3, 1, 2]
    assert cv.G.tolist() == [6, 4, 5]
    # slot owned by station 1: identity
    st1 = NetworkState(t=4, R=[1, 2, 3], G=[4, 5, 6])
    assert cyclic_view(st1).R.tolist() == [1, 2, 3]


def test_cyclic_chain_time_homogeneous():
    """Empirical cyclic-red frequencies agree across slot phases."""
    c = cfg(M=2, p=0.3, lambda_R=0.4, lambda_G=0.05, arrival_law=BERNOULLI)
    trec, Rrec, _ = fastsim.run_trace(
        c.mode_code, 0, c.M, c.p, c.lambda_R, c.lambda_G, c.law_code, c.law_code,
        200_000, 1, fastsim.mix_seed(4, 0), np.zeros(2, np.int64), np.zeros(2, np.int64))
    # Rrec[k] is the state after slot k; slot k+1 is owned by station (k % 2)+1
    caps = np.minimum(Rrec, 3)
    phase = trec % 2
    dists = []
    for ph in (0, 1):
        sel = caps[(phase == ph) & (trec > 1000)]
        rolled = np.roll(sel, -int(ph), axis=1)
        keys = rolled[:, 0] * 4 + rolled[:, 1]
        dists.append(np.bincount(keys, minlength=16) / len(keys))
    tv = 0.5 * np.abs(dists[0] - dists[1]).sum()
    assert tv < 0.02


# -- stepping and domination ------------------------------------------------

def test_step_network_preserves_invariants():
    c = cfg()
    state = NetworkState(t=1, R=[0, 0], G=[0, 0])
    rng = RandomStream(0)
    for _ in range(500):
        state = step_network(c, state, rng)
        assert np.all(state.R >= 0) and np.all(state.G >= 0)
    assert state.t == 501


def test_trajectory_over_network_model():
    c = cfg()
    traj = trajectory(NetworkModel(c), NetworkState(t=1, R=[0, 0], G=[0, 0]),
                      100, thinning=10, rng=RandomStream(1))
    assert len(traj) == 11
    assert traj.states[-1].t == 101


def test_step_dominated_holds_componentwise():
    c = cfg(M=3, p=0.4, lambda_R=0.3, lambda_G=0.2)
    state = (1, np.zeros(3, np.int64), np.zeros(3, np.int64), np.zeros(3, np.int64))
    rng = RandomStream(8)
    for _ in range(2000):
        state = step_dominated(c, state, rng)
        assert np.all(state[2] <= state[3])


def test_step_dominated_coordinator_only():
    c = cfg(mode=NO_COORDINATOR)
    with pytest.raises(ConfigError):
        step_dominated(c, (1, Z2, Z2, Z2), RandomStream(0))


def test_run_dominated_compiled():
    first, gap = fastsim.run_dominated(2, 0.4, 0.3, 0.2,
                                       fastsim.LAW_POISSON, fastsim.LAW_POISSON,
                                       100_000, 17)
    assert first == 0
    assert gap >= 0


# -- truncated kernel export ------------------------------------------------

def test_kernel_export_preconditions():
    with pytest.raises(ConfigError):
        build_truncated_kernel(cfg(mode=NO_COORDINATOR, dummy=True,
                                   arrival_law=BERNOULLI), 3, 3)
    with pytest.raises(ConfigError):
        build_truncated_kernel(cfg(dummy=False, arrival_law=BERNOULLI), 3, 3)
    with pytest.raises(ConfigError):
        build_truncated_kernel(cfg(dummy=True), 3, 3)  # poisson arrivals
    with pytest.raises(ConfigError):
        build_truncated_kernel(cfg(dummy=True, arrival_law=BERNOULLI), 50, 50)


def test_kernel_export_m1_red_chain_is_birth_death():
    c = cfg(M=1, p=0.3, lambda_R=0.4, lambda_G=0.1, dummy=True,
            arrival_law=BERNOULLI)
    k = build_truncated_kernel(c, R_cap=4, G_cap=4)
    P = k.P_X
    assert abs(P[0, 0] - 0.6) < 1e-12 and abs(P[0, 1] - 0.4) < 1e-12
    # interior: serve one, then maybe an arrival
    assert abs(P[2, 1] - 0.6) < 1e-12 and abs(P[2, 2] - 0.4) < 1e-12
    assert abs(P[4, 4] - 0.4) < 1e-12  # cap: departure refilled by arrival


def test_kernel_export_records_leak_only_at_cap():
    c = cfg(M=1, p=0.3, lambda_R=0.4, lambda_G=0.2, dummy=True,
            arrival_law=BERNOULLI)
    k = build_truncated_kernel(c, R_cap=3, G_cap=5)
    assert k.leak is not None
    leaky = np.where(k.leak.max(axis=0) > 0)[0]
    assert leaky.tolist() == [5]


def test_kernel_export_m2_has_coords():
    c = cfg(M=2, p=0.3, lambda_R=0.2, lambda_G=0.1, dummy=True,
            arrival_law=BERNOULLI)
    k = build_truncated_kernel(c, R_cap=2, G_cap=2)
    assert k.n_coords == 2
    assert np.array_equal(k.L2, k.coords.sum(axis=0))
    assert k.n_x == 9 and k.n_y == 9


def test_empty_red_states():
    assert empty_red_states(5, 1) == [0]
    assert empty_red_states(3, 2) == [0]


def test_kernel_stationary_matches_simulation_m1():
    """Exact kernel stationary G-law vs a long compiled dummy run."""
    c = cfg(M=1, p=0.3, lambda_R=0.4, lambda_G=0.08, dummy=True,
            arrival_law=BERNOULLI)
    k = build_truncated_kernel(c, R_cap=12, G_cap=40)
    # joint chain over (x, y)
    n = k.n_x * k.n_y
    J = np.einsum("ab,byc->aybc", k.P_X, k.K).reshape(n, n)
    psi = stationary_distribution(J)
    g_law = psi.reshape(k.n_x, k.n_y).sum(axis=0)
    _, Rrec, Grec = fastsim.run_trace(
        c.mode_code, 1, 1, c.p, c.lambda_R, c.lambda_G, c.law_code, c.law_code,
        1_000_000, 1, fastsim.mix_seed(21, 0), np.zeros(1, np.int64),
        np.zeros(1, np.int64))
    gs = Grec[5000:, 0]
    emp = np.bincount(np.minimum(gs, 40), minlength=41) / len(gs)
    tv = 0.5 * np.abs(emp - g_law).sum()
    assert tv < 0.02
