"""Experiment orchestration: stability classification, boundary bisection,
idle-probability measurement and deterministic report emission."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import fastsim
from .network import COORDINATOR, NetworkConfig, theoretical_threshold

STABLE = "STABLE"
UNSTABLE = "UNSTABLE"
INCONCLUSIVE = "INCONCLUSIVE"

# numeric guard band separating "strictly positive slope" from noise
SLOPE_GUARD = 1e-4
RETURN_FLOOR = 0.05
CI_LEVEL = 0.99


@dataclass
class StabilityVerdict:
    label: str
    slope: float
    slope_ci: tuple[float, float]
    return_freq: float
    n1: float
    per_rep_slopes: np.ndarray
    slots: int
    replications: int
    seed: int
    note: str = ""


@dataclass
class BoundaryEstimate:
    lambda_star_empirical: float
    half_width: float
    lambda_star_theoretical: Optional[float]
    config: dict
    total_slots: int
    bracket: tuple[float, float]
    converged: bool


def default_warmup(slots: int) -> int:
    return max(10_000, slots // 10)


def _run_replication(config: NetworkConfig, slots: int, warmup: int, seed: int, stream_id: int):
    sumg, idle, _, _ = fastsim.run_sumg(
        config.mode_code, 1 if config.dummy else 0, config.M, config.p,
        config.lambda_R, config.lambda_G, config.law_code, config.law_code,
        slots, warmup, config.M, fastsim.mix_seed(seed, stream_id),
        np.zeros(config.M, np.int64), np.zeros(config.M, np.int64),
    )
    return sumg, idle


def classify_stability(config: NetworkConfig, slots: int, replications: int = 4,
                       warmup: Optional[int] = None, seed: int = 0) -> StabilityVerdict:
    """Classify the network by the growth of the total green queue.

    Per replication, the total green queue (recorded every M slots) is
    regressed on the slot index after warmup; slopes are pooled into a
    99% CI.  The stable verdict additionally requires the chain to keep
    returning below N1, the 95th warmup percentile of the total queue.
    """
    if warmup is None:
        warmup = default_warmup(slots)
    if replications < 4 or slots < 10 * warmup:
        return StabilityVerdict(
            label=INCONCLUSIVE, slope=float("nan"), slope_ci=(float("nan"), float("nan")),
            return_freq=float("nan"), n1=float("nan"), per_rep_slopes=np.array([]),
            slots=slots, replications=replications, seed=seed,
            note="insufficient data: need replications >= 4 and slots >= 10*warmup",
        )
    M = config.M
    slopes = []
    warm_samples = []
    post_below = []
    rec_t = np.arange(1, slots // M + 1, dtype=float) * M
    warm_mask = rec_t <= warmup
    post_mask = ~warm_mask
    all_sumg = []
    for r in range(replications):
        sumg, _ = _run_replication(config, slots, warmup, seed, r)
        sumg = sumg.astype(float)
        all_sumg.append(sumg)
        slopes.append(np.polyfit(rec_t[post_mask], sumg[post_mask], 1)[0])
        warm_samples.append(sumg[warm_mask])
    n1 = float(np.percentile(np.concatenate(warm_samples), 95))
    for sumg in all_sumg:
        post_below.append(np.mean(sumg[post_mask] <= n1))
    slopes = np.asarray(slopes)
    mean = float(slopes.mean())
    sd = float(slopes.std(ddof=1))
    tcrit = float(stats.t.ppf(0.5 + CI_LEVEL / 2, df=replications - 1))
    half = tcrit * sd / np.sqrt(replications)
    ci = (mean - half, mean + half)
    return_freq = float(np.mean(post_below))
    if ci[0] > SLOPE_GUARD:
        label = UNSTABLE
    elif ci[1] < SLOPE_GUARD and return_freq >= RETURN_FLOOR:
        label = STABLE
    else:
        label = INCONCLUSIVE
    return StabilityVerdict(
        label=label, slope=mean, slope_ci=ci, return_freq=return_freq, n1=n1,
        per_rep_slopes=slopes, slots=slots, replications=replications, seed=seed,
    )


def boundary_bisection(config: NetworkConfig, bracket: tuple[float, float], tol: float,
                       slots: int, replications: int = 4, seed: int = 0,
                       warmup: Optional[int] = None) -> BoundaryEstimate:
    """Bisect on lambda_G between a stable and an unstable endpoint.

    An INCONCLUSIVE midpoint is retried once with a doubled slot budget;
    two in a row end the search with the current bracket reported as-is.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (lo < hi):
        raise ValueError("bracket must satisfy lo < hi")
    total = 0
    v_lo = classify_stability(config.with_lambda_G(lo), slots, replications, warmup, seed)
    v_hi = classify_stability(config.with_lambda_G(hi), slots, replications, warmup, seed)
    total += 2 * slots * replications
    if {v_lo.label, v_hi.label} != {STABLE, UNSTABLE}:
        raise ValueError(
            f"bracket endpoints must classify to opposite verdicts, got "
            f"{v_lo.label} at {lo} and {v_hi.label} at {hi}"
        )
    if v_lo.label == UNSTABLE:
        lo, hi = hi, lo  # keep lo on the stable side
    converged = True
    while abs(hi - lo) / 2 > tol:
        mid = (lo + hi) / 2
        verdict = classify_stability(config.with_lambda_G(mid), slots, replications, warmup, seed)
        total += slots * replications
        if verdict.label == INCONCLUSIVE:
            verdict = classify_stability(config.with_lambda_G(mid), 2 * slots,
                                         replications, warmup, seed)
            total += 2 * slots * replications
        if verdict.label == INCONCLUSIVE:
            converged = False
            break
        if verdict.label == STABLE:
            lo = mid
        else:
            hi = mid
    a, b = min(lo, hi), max(lo, hi)
    return BoundaryEstimate(
        lambda_star_empirical=(a + b) / 2,
        half_width=(b - a) / 2,
        lambda_star_theoretical=theoretical_threshold(config),
        config=config.to_dict(),
        total_slots=total,
        bracket=(a, b),
        converged=converged,
    )


def idle_prob_empirical(config: NetworkConfig, slots: int, warmup: Optional[int] = None,
                        seed: int = 0) -> dict:
    """Fraction of post-warmup slots in which the scheduled station's red
    queue is empty, next to the mode-appropriate reference."""
    if warmup is None:
        warmup = default_warmup(slots)
    if config.mode == COORDINATOR:
        reference = 1.0 - config.lambda_R
        capacity = 1.0
        theorem_backed = True
    else:
        reference = 1.0 - config.lambda_R / (1.0 - config.p)
        capacity = 1.0 - config.p
        theorem_backed = False  # effective-load heuristic, simulation-confirmed
    if capacity - config.lambda_R < 0.02:
        warnings.warn("red rate within 0.02 of service capacity: slow mixing expected")
    _, idle = _run_replication(config, slots, warmup, seed, 0)
    return {
        "estimate": idle / (slots - warmup),
        "reference": reference,
        "theorem_backed": theorem_backed,
        "slots": slots - warmup,
        "mode": config.mode,
    }


def sweep(config: NetworkConfig, lambda_gs: Sequence[float], slots: int,
          replications: int = 4, seed: int = 0, warmup: Optional[int] = None) -> list[dict]:
    """Classify a grid of lambda_G points; returns report rows."""
    rows = []
    for lam in lambda_gs:
        cfg = config.with_lambda_G(float(lam))
        v = classify_stability(cfg, slots, replications, warmup, seed)
        thr = theoretical_threshold(cfg)
        rows.append({
            "mode": cfg.mode, "M": cfg.M, "p": cfg.p, "lambda_R": cfg.lambda_R,
            "lambda_G": cfg.lambda_G, "slots": slots, "seed": seed,
            "slope": v.slope, "slope_ci_lo": v.slope_ci[0], "slope_ci_hi": v.slope_ci[1],
            "return_freq": v.return_freq, "verdict": v.label,
            "threshold_theoretical": thr if thr is not None else float("nan"),
        })
    return rows


TABLE_COLUMNS = [
    "mode", "M", "p", "lambda_R", "lambda_G", "slots", "seed", "slope",
    "slope_ci_lo", "slope_ci_hi", "return_freq", "verdict", "threshold_theoretical",
]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(rows: Sequence[dict], meta: Optional[dict] = None) -> tuple[str, str]:
    """Render sweep rows as (report_json, delimited_table).

    Output is deterministic: rows sorted by the leading columns, floats
    repr-encoded, and the report carries a hash of its own configuration.
    """
    rows = sorted(rows, key=lambda r: (str(r.get("mode")), r.get("M", 0), r.get("p", 0),
                                       r.get("lambda_R", 0), r.get("lambda_G", 0)))
    lines = [",".join(TABLE_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c, "")) for c in TABLE_COLUMNS))
    table = "\n".join(lines) + "\n"
    from . import __version__
    doc = {
        "library_version": __version__,
        "meta": meta or {},
        "rows": rows,
    }
    doc["config_hash"] = hashlib.sha256(
        json.dumps(doc, sort_keys=True, default=str).encode()
    ).hexdigest()
    return json.dumps(doc, indent=1, sort_keys=True, default=str), table
