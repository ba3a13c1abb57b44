"""Exact verification machinery on finite modulated kernels.

Everything here is deterministic linear algebra: stationary distributions,
first-passage times, total-variation curves, minorization checks, drift
conditions and Foster certificates over state-dependent horizons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .kernels import ModulatedKernel

DENSE_SOLVE_LIMIT = 2000


class AnalysisError(ValueError):
    pass


class AmbiguousChainError(AnalysisError):
    """Chain has several closed communicating classes."""


class UnreachableSetError(AnalysisError):
    """Target set cannot be reached from some state (infinite hitting time)."""


class TruncationError(AnalysisError):
    """Truncated kernel leaks too much mass at its boundary."""


def _closed_classes(P: np.ndarray):
    adj = csr_matrix(P > 0)
    n_comp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.where(labels == c)[0]
        outside = np.setdiff1d(np.arange(P.shape[0]), members)
        if outside.size == 0 or P[np.ix_(members, outside)].sum() == 0:
            closed.append(members)
    return closed


def stationary_distribution(P: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Stationary probability vector of a row-stochastic matrix.

    Direct linear solve up to DENSE_SOLVE_LIMIT states, power iteration
    above.  Raises AmbiguousChainError when several closed classes exist.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if n == 1:
        return np.array([1.0])
    if len(_closed_classes(P)) > 1:
        raise AmbiguousChainError("multiple closed classes: stationary distribution not unique")
    if n <= DENSE_SOLVE_LIMIT:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    else:
        pi = np.full(n, 1.0 / n)
        for _ in range(200_000):
            nxt = pi @ P
            if np.abs(nxt - pi).sum() <= tol:
                pi = nxt
                break
            pi = nxt
        pi /= pi.sum()
    if np.abs(pi @ P - pi).sum() > max(tol, 1e-9):
        raise AnalysisError("stationary distribution did not converge to tolerance")
    return pi


def averaged_kernel(kernel: ModulatedKernel) -> np.ndarray:
    """pi_X-weighted average of the conditional Y-kernels."""
    pi = stationary_distribution(kernel.P_X)
    K_hat = np.einsum("a,ayb->yb", pi, kernel.K)
    assert np.max(np.abs(K_hat.sum(axis=1) - 1.0)) <= 1e-12
    return K_hat


def _as_index_set(V, n) -> np.ndarray:
    V = np.asarray(sorted(set(int(v) for v in V)), dtype=int)
    if V.size == 0:
        raise AnalysisError("V must be non-empty")
    if V.min() < 0 or V.max() >= n:
        raise AnalysisError("V contains out-of-range states")
    return V


def expected_hitting_time(P: np.ndarray, V) -> tuple[np.ndarray, float]:
    """First-passage values L1(x) = E_x tau(V) off V (0 on V), plus
    s0 = sup_{x in V} E_x tau.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    V = _as_index_set(V, n)
    # every state must reach V: BFS on the reversed graph from V
    adj = csr_matrix(P > 0)
    reached = np.zeros(n, dtype=bool)
    frontier = list(V)
    reached[V] = True
    PT = adj.T.tolil().rows
    while frontier:
        nxt = []
        for v in frontier:
            for u in PT[v]:
                if not reached[u]:
                    reached[u] = True
                    nxt.append(u)
        frontier = nxt
    if not reached.all():
        bad = np.where(~reached)[0]
        raise UnreachableSetError(f"V unreachable from states {bad.tolist()}: infinite hitting time")
    mask = np.ones(n, dtype=bool)
    mask[V] = False
    L1 = np.zeros(n)
    if mask.any():
        Q = P[np.ix_(mask, mask)]
        h = np.linalg.solve(np.eye(mask.sum()) - Q, np.ones(mask.sum()))
        L1[mask] = h
    s0 = float(np.max(1.0 + P[V] @ L1))
    return L1, s0


def hitting_time_growth(P: np.ndarray, V, T_max: int) -> np.ndarray:
    """Sequence (1/t) sup_{x in V} E_x L1(X^t) for t = 1..T_max."""
    P = np.asarray(P, dtype=float)
    V = _as_index_set(V, P.shape[0])
    L1, _ = expected_hitting_time(P, V)
    out = np.empty(T_max)
    v = L1.copy()
    for t in range(1, T_max + 1):
        v = P @ v
        out[t - 1] = v[V].max() / t
    return out


def tv_distance_curve(P: np.ndarray, x0, T_max: int, V=None):
    """Exact TV distance to pi of the t-step distribution from x0, t=0..T_max.

    x0 may be a state index or an initial probability row.  When V is given,
    also returns the per-t sup over starting states in V.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    pi = stationary_distribution(P)
    if np.isscalar(x0):
        d = np.zeros(n)
        d[int(x0)] = 1.0
    else:
        d = np.asarray(x0, dtype=float)
    curve = np.empty(T_max + 1)
    curve[0] = 0.5 * np.abs(d - pi).sum()
    sup_curve = None
    if V is not None:
        V = _as_index_set(V, n)
        D = np.eye(n)[V]
        sup_curve = np.empty(T_max + 1)
        sup_curve[0] = 0.5 * np.abs(D - pi).sum(axis=1).max()
    for t in range(1, T_max + 1):
        d = d @ P
        curve[t] = 0.5 * np.abs(d - pi).sum()
        if sup_curve is not None:
            D = D @ P
            sup_curve[t] = 0.5 * np.abs(D - pi).sum(axis=1).max()
    if sup_curve is None:
        return curve
    return curve, sup_curve


def check_minorization(P: np.ndarray, V, m: int = 1):
    """Elementwise-minimum minorization of the m-step rows over V.

    Returns (p, mu) with mass p > 0, or None when the rows have disjoint
    supports.
    """
    if not (1 <= m <= 64):
        raise AnalysisError("m must be in 1..64")
    P = np.asarray(P, dtype=float)
    V = _as_index_set(V, P.shape[0])
    Pm = np.linalg.matrix_power(P, m)
    mu_raw = Pm[V].min(axis=0)
    p = float(mu_raw.sum())
    if p <= 0.0:
        return None
    return p, mu_raw / p


@dataclass
class IncrementBound:
    U: float
    per_coord: np.ndarray
    flagged_rows: list  # (x, y) rows whose reflected boundary mass exceeds leak_tol


def check_bounded_increments(kernel: ModulatedKernel, leak_tol: float = 1e-9,
                             max_flagged_fraction: float = 0.1) -> IncrementBound:
    """Supremum over (x, y) of E|L2(Y^1) - L2(y)|, per coordinate and overall.

    Rows whose recorded reflected mass exceeds leak_tol are flagged; when
    more than max_flagged_fraction of the Y-rows are flagged the truncation
    is considered too small and a TruncationError is raised (a reflecting
    kernel always leaks O(arrival rate) on its cap rows, which is fine).
    """
    flagged = []
    if kernel.leak is not None:
        flagged = [tuple(int(v) for v in xy) for xy in np.argwhere(kernel.leak > leak_tol)]
        leaking_y = len({y for _, y in flagged})
        if leaking_y > max_flagged_fraction * kernel.n_y:
            raise TruncationError(
                f"truncation too small: {leaking_y}/{kernel.n_y} Y-rows leak more than "
                f"{leak_tol:g} (max leak {np.max(kernel.leak):.3e})"
            )
    coords = kernel.coord_values()
    per = np.empty(coords.shape[0])
    for i, lv in enumerate(coords):
        per[i] = np.max(np.einsum("xyb->xy", kernel.K * np.abs(lv[None, None, :] - lv[None, :, None])))
    return IncrementBound(U=float(per.max()), per_coord=per, flagged_rows=flagged)


@dataclass
class CoordDrift:
    epsilon: float
    f: np.ndarray          # per X-state
    levels: np.ndarray     # distinct coordinate levels, ascending
    h_envelope: np.ndarray  # minimal non-increasing envelope of excess drift
    U: float


@dataclass
class DriftReport:
    passed: bool
    epsilon: float          # min over coordinates
    U: float
    K_bound: float          # sup |f|
    f: np.ndarray
    h_levels: np.ndarray
    h_envelope: np.ndarray
    violations: list
    per_coord: list[CoordDrift] = field(default_factory=list)
    pi: Optional[np.ndarray] = None

    @property
    def multivariate(self) -> bool:
        return len(self.per_coord) > 1


def _coord_drift(kernel: ModulatedKernel, pi: np.ndarray, lv: np.ndarray,
                 U: float, top_fraction: float) -> CoordDrift:
    # drift conditioned on the new X-state; measurable in (x, level of y)
    d = kernel.one_step_drift(values=lv)          # (n_x, n_y)
    levels = np.unique(lv)
    # g[x, l] = sup over y at level l of the drift (makes the bound a
    # function of (x, y_i) only, as the per-coordinate condition requires)
    g = np.full((kernel.n_x, levels.size), -np.inf)
    idx = np.searchsorted(levels, lv)
    for j, l_idx in enumerate(idx):
        g[:, l_idx] = np.maximum(g[:, l_idx], d[:, j])
    # f(x): sup of g over the top fraction of levels
    n_top = max(1, int(np.ceil(top_fraction * levels.size)))
    f = g[:, levels.size - n_top:].max(axis=1)
    # running max from the right of the residual gives the minimal
    # non-increasing envelope h(N)
    resid = (g - f[:, None]).max(axis=0)
    env = np.maximum.accumulate(resid[::-1])[::-1]
    env = np.clip(env, 0.0, None)
    eps = float(-(pi @ f))
    return CoordDrift(epsilon=eps, f=f, levels=levels, h_envelope=env, U=U)


def verify_drift_condition(kernel: ModulatedKernel, V=None, top_fraction: float = 0.25,
                           leak_tol: float = 1e-9) -> DriftReport:
    """Canonical f/h decomposition of the one-step drift and the averaged
    negativity check.

    f(x) is the supremum of drifts over the top `top_fraction` of levels;
    h is the minimal non-increasing envelope of what is left below.  The
    verdict is PASS iff every coordinate has epsilon > 0.
    """
    pi = stationary_distribution(kernel.P_X)
    bound = check_bounded_increments(kernel, leak_tol=leak_tol)
    coords = kernel.coord_values()
    per = [
        _coord_drift(kernel, pi, lv, float(bound.per_coord[i]), top_fraction)
        for i, lv in enumerate(coords)
    ]
    violations = []
    for i, cd in enumerate(per):
        # Eq-(13)-style sanity: drift <= f(x) + h(level) with the reported
        # decomposition; record any level where the envelope fails to vanish
        # at the top of the truncation.
        if cd.h_envelope[-1] > 1e-9:
            violations.append((i, float(cd.levels[-1]), float(cd.h_envelope[-1])))
    eps = min(cd.epsilon for cd in per)
    passed = eps > 0 and not violations
    lead = per[0]
    return DriftReport(
        passed=passed,
        epsilon=eps,
        U=bound.U,
        K_bound=float(max(np.max(np.abs(cd.f)) for cd in per)),
        f=lead.f,
        h_levels=lead.levels,
        h_envelope=lead.h_envelope,
        violations=violations,
        per_coord=per,
        pi=pi,
    )


def multi_step_drift(kernel: ModulatedKernel, x0: int, y0: int, t: int) -> float:
    """Exact E_{x0,y0}[L2(Y^t)] - L2(y0) via t-fold kernel application."""
    if t < 1:
        raise AnalysisError("t must be >= 1")
    W = kernel.expected_l2_after(t)
    return float(W[x0, y0] - kernel.L2[y0])


def sublinearity_check(kernel: ModulatedKernel, V, t_grid: Sequence[int], tol: float = 1e-9):
    """Per-t values sup_{x in V, y} (t-step coordinate drift) / t.

    Returns (values, passes): values has shape (M, len(t_grid)); passes is
    True when the tail suprema settle at or below tol.
    """
    V = _as_index_set(V, kernel.n_x)
    t_grid = sorted(set(int(t) for t in t_grid))
    if min(t_grid) < 1:
        raise AnalysisError("t_grid entries must be >= 1")
    coords = kernel.coord_values()
    M = coords.shape[0]
    values = np.empty((M, len(t_grid)))
    for i, lv in enumerate(coords):
        W = np.broadcast_to(lv, (kernel.n_x, kernel.n_y)).copy()
        t_cur = 0
        for k, t in enumerate(t_grid):
            while t_cur < t:
                W = kernel.evolve_expectation(W)
                t_cur += 1
            values[i, k] = np.max(W[V] - lv[None, :]) / t
    tail_sup = np.maximum.accumulate(values[:, ::-1], axis=1)[:, ::-1]
    passes = bool(np.all(tail_sup[:, -1] <= tol) and np.all(np.diff(tail_sup, axis=1) <= 1e-12))
    return values, passes


@dataclass
class FosterCertificate:
    passed: bool
    H: float
    t1: Optional[int]
    N0: Optional[float]
    N1: Optional[float]
    c: Optional[float]
    Delta: float
    epsilon: float
    s0: float
    V: np.ndarray
    bound_on_D: Optional[float]
    case2_margin: Optional[float]   # -max one-step L-drift for x outside V
    case3_margin: Optional[float]   # -max t1-step L-drift/t1 above the level
    tightest_violation: Optional[str]
    drift_report: Optional[DriftReport] = None

    def t_map(self, x_in_V: bool, total_l2: float) -> int:
        """State-dependent horizon T(x, y) certified by this object."""
        if not self.passed:
            raise AnalysisError("certificate did not pass")
        if x_in_V and total_l2 > self.N1:
            return self.t1
        return 1


def _max_upward_move(kernel: ModulatedKernel) -> float:
    diff = kernel.L2[None, None, :] - kernel.L2[None, :, None]
    up = np.where(kernel.K > 0, diff, -np.inf)
    return float(max(0.0, up.max()))


def foster_certificate(kernel: ModulatedKernel, V, H: Optional[float] = None,
                       t_grid: Optional[Sequence[int]] = None,
                       level_quantiles: Sequence[float] = (0.15, 0.25, 0.35, 0.5),
                       leak_tol: float = 1e-9) -> FosterCertificate:
    """Search for a state-dependent-horizon Foster certificate.

    Uses the test function L(x, y) = H * L1(x) + sum_i L2_i(y_i) with
    horizon 1 inside D or off V, and t1 for x in V with total L2 above
    N1 = M * N0.  States within t1 * (max upward move) of the truncation
    cap are excluded from the negative-drift requirement: reflection makes
    their drift artificially negative.
    """
    report = verify_drift_condition(kernel, V, leak_tol=leak_tol)
    V = _as_index_set(V, kernel.n_x)
    M = kernel.n_coords
    if not report.passed:
        return FosterCertificate(
            passed=False, H=H or 0.0, t1=None, N0=None, N1=None, c=None,
            Delta=report.epsilon / 10.0, epsilon=report.epsilon, s0=np.nan, V=V,
            bound_on_D=None, case2_margin=None, case3_margin=None,
            tightest_violation=f"drift condition failed (epsilon = {report.epsilon:.6g})",
            drift_report=report,
        )
    L1, s0 = expected_hitting_time(kernel.P_X, V)
    if H is None:
        H = 2.0 * M * report.U + 1.0
    if H <= M * report.U:
        raise AnalysisError(f"H must exceed M*U = {M * report.U:.6g}")
    if t_grid is None:
        t_grid = [1, 2, 4, 8, 16, 32, 64]
    t_grid = sorted(set(int(t) for t in t_grid))
    Delta = report.epsilon / 10.0
    L2 = kernel.L2
    up_move = _max_upward_move(kernel)
    in_V = np.zeros(kernel.n_x, dtype=bool)
    in_V[V] = True
    x_off = ~in_V
    levels = np.unique(L2)
    n0_candidates = sorted(set(float(np.quantile(levels, q)) for q in level_quantiles))

    # one-step quantities (case 1 and case 2)
    W1 = kernel.expected_l2_after(1)
    EL1_1 = kernel.P_X @ L1
    drift1_L = H * (EL1_1 - L1)[:, None] + (W1 - L2[None, :])

    best_violation = None
    W = np.broadcast_to(L2, (kernel.n_x, kernel.n_y)).copy()
    EL1 = L1.copy()
    t_cur = 0
    for t1 in t_grid:
        while t_cur < t1:
            W = kernel.evolve_expectation(W)
            EL1 = kernel.P_X @ EL1
            t_cur += 1
        margin = t1 * up_move
        y_ok = L2 <= (L2.max() - margin)
        if not y_ok.any():
            continue
        # t1-step L-drift for x in V (L1(x) = 0 there)
        drift_t1 = H * EL1[V][:, None] + (W[V] - L2[None, :])
        for N0 in n0_candidates:
            N1 = M * N0
            high = y_ok & (L2 > N1)
            if not high.any():
                continue
            c3 = float(-(drift_t1[:, high].max()) / t1)
            if x_off.any():
                c2 = float(-(drift1_L[x_off][:, y_ok].max()))
            else:
                c2 = np.inf
            c = min(c2, c3)
            if c > 0:
                low = L2 <= N1
                bound_on_D = float((H * EL1_1[V][:, None] + W1[V][:, low]).max())
                return FosterCertificate(
                    passed=True, H=H, t1=t1, N0=N0, N1=N1,
                    c=float(c if np.isfinite(c) else c3),
                    Delta=Delta, epsilon=report.epsilon, s0=s0, V=V,
                    bound_on_D=bound_on_D,
                    case2_margin=None if not np.isfinite(c2) else c2,
                    case3_margin=c3,
                    tightest_violation=None, drift_report=report,
                )
            viol = ("case-3" if c3 <= 0 else "case-2", t1, N0, c)
            if best_violation is None or viol[3] > best_violation[3]:
                best_violation = viol
    msg = "no (t1, N0) pair certified negative drift"
    if best_violation is not None:
        msg = (f"tightest violated inequality: {best_violation[0]} at t1={best_violation[1]}, "
               f"N0={best_violation[2]:.6g} (margin {best_violation[3]:.6g})")
    return FosterCertificate(
        passed=False, H=H, t1=None, N0=None, N1=None, c=None,
        Delta=Delta, epsilon=report.epsilon, s0=s0, V=V,
        bound_on_D=None, case2_margin=None, case3_margin=None,
        tightest_violation=msg, drift_report=report,
    )
