"""HTTP service exposing the analysis and simulation toolkit.

Thin layer: endpoints validate with the pydantic models, build the core
objects and serialize dataclass results.  Error contract: 400 with code
"config" for bad inputs, 409 with code "infeasible" when a precondition
on the rates fails, 500 with code "invariant" for internal invariant
breaches (failed domination, truncation too small).
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, experiments, fastsim, network, splitting
from ..analysis import AnalysisError, TruncationError, foster_certificate, verify_drift_condition
from ..kernels import KernelError, kernel_from_text
from ..network import ConfigError, DominationError, NetworkConfig
from . import schemas as S


def _config(body: S.NetworkConfigIn) -> NetworkConfig:
    try:
        return NetworkConfig(**body.model_dump())
    except ConfigError as e:
        raise HTTPException(400, {"code": "config", "message": str(e)})


def _guard(fn, *args, **kwargs):
    """Run a core call, translating domain errors to the HTTP contract."""
    try:
        return fn(*args, **kwargs)
    except (DominationError, TruncationError) as e:
        raise HTTPException(500, {"code": "invariant", "message": str(e)})
    except (ConfigError, KernelError, AnalysisError, ValueError) as e:
        raise HTTPException(400, {"code": "config", "message": str(e)})


def _red_feasible(cfg: NetworkConfig) -> bool:
    if cfg.mode == network.NO_COORDINATOR:
        return cfg.lambda_R < 1.0 - cfg.p
    return cfg.lambda_R < 1.0


def _require_feasible(cfg: NetworkConfig):
    if not _red_feasible(cfg):
        raise HTTPException(409, {
            "code": "infeasible",
            "message": "red arrival rate at or above the scheduled service capacity",
        })


def create_app() -> FastAPI:
    app = FastAPI(title="modstab", version=__version__)

    @app.get("/health", response_model=S.HealthOut)
    def health():
        return S.HealthOut(status="ok", version=__version__)

    @app.post("/threshold", response_model=S.ThresholdOut)
    def threshold(req: S.ThresholdRequest):
        cfg = _config(req.config)
        thr = network.theoretical_threshold(cfg)
        return S.ThresholdOut(feasible=thr is not None, threshold=thr)

    @app.post("/simulate", response_model=S.SimulateOut)
    def simulate(req: S.SimulateRequest):
        cfg = _config(req.config)
        R0 = np.asarray(req.R0 if req.R0 is not None else np.zeros(cfg.M), np.int64)
        G0 = np.asarray(req.G0 if req.G0 is not None else np.zeros(cfg.M), np.int64)
        if R0.shape != (cfg.M,) or G0.shape != (cfg.M,):
            raise HTTPException(400, {"code": "config", "message": "R0/G0 must have length M"})
        trec, Rrec, Grec = _guard(
            fastsim.run_trace, cfg.mode_code, 1 if cfg.dummy else 0, cfg.M, cfg.p,
            cfg.lambda_R, cfg.lambda_G, cfg.law_code, cfg.law_code,
            req.slots, req.thinning, fastsim.mix_seed(req.seed, 0), R0, G0,
        )
        return S.SimulateOut(
            slot_index=trec.tolist(), R=Rrec.tolist(), G=Grec.tolist(),
            config=cfg.to_dict(), seed=req.seed,
        )

    @app.post("/verify", response_model=S.VerifyOut)
    def verify(req: S.VerifyRequest):
        if req.kernel_text is not None:
            kernel = _guard(kernel_from_text, req.kernel_text)
            V = req.V
            if V is None:
                raise HTTPException(400, {"code": "config",
                                          "message": "V is required with kernel_text"})
        elif req.config is not None and req.R_cap is not None and req.G_cap is not None:
            cfg = _config(req.config)
            kernel = _guard(network.build_truncated_kernel, cfg, req.R_cap, req.G_cap)
            V = req.V if req.V is not None else network.empty_red_states(req.R_cap, cfg.M)
        else:
            raise HTTPException(400, {"code": "config",
                                      "message": "provide kernel_text or config with R_cap and G_cap"})
        drift = _guard(verify_drift_condition, kernel, V)
        cert = _guard(foster_certificate, kernel, V, H=req.H,
                      t_grid=req.t_grid)
        return S.VerifyOut(
            drift=S.DriftReportOut(
                passed=drift.passed, epsilon=drift.epsilon, U=drift.U,
                K_bound=drift.K_bound, f=drift.f.tolist(),
                h_levels=drift.h_levels.tolist(), h_envelope=drift.h_envelope.tolist(),
                violations=drift.violations, n_coords=len(drift.per_coord),
            ),
            certificate=S.CertificateOut(
                passed=cert.passed, H=cert.H, t1=cert.t1, N0=cert.N0, N1=cert.N1,
                c=cert.c, Delta=cert.Delta, epsilon=cert.epsilon, s0=cert.s0,
                bound_on_D=cert.bound_on_D, case2_margin=cert.case2_margin,
                case3_margin=cert.case3_margin,
                tightest_violation=cert.tightest_violation,
            ),
        )

    @app.post("/coupling", response_model=S.CouplingOut)
    def coupling(req: S.CouplingRequest):
        P = np.asarray(req.P, dtype=float)
        split = _guard(splitting.build_split_kernel, P, req.V, req.m)
        report = _guard(splitting.estimate_coupling_tail, split, req.T_max,
                        req.reps, seed=req.seed)
        return S.CouplingOut(
            t=report.t.tolist(), delta=report.delta.tolist(),
            kappa_mean=report.kappa_mean, kappa_bound=report.kappa_bound,
            split_p=split.p, replications=report.replications,
            censored_fraction=report.censored_fraction,
            periodic_warning=report.periodic_warning,
        )

    @app.post("/idle", response_model=S.IdleOut)
    def idle(req: S.IdleRequest):
        if (req.config is None) == (req.pmf is None):
            raise HTTPException(400, {"code": "config",
                                      "message": "provide exactly one of config or pmf"})
        if req.pmf is not None:
            out = _guard(splitting.idle_probability_check, req.pmf,
                         T=req.slots, burn_in=req.burn_in, seed=req.seed)
            return S.IdleOut(estimate=out["estimate"], reference=out["reference"],
                             slots=out["slots"], kind="synthetic",
                             mean_increment=out["mean_increment"])
        cfg = _config(req.config)
        _require_feasible(cfg)
        out = _guard(experiments.idle_prob_empirical, cfg, req.slots,
                     warmup=req.burn_in or None, seed=req.seed)
        return S.IdleOut(estimate=out["estimate"], reference=out["reference"],
                         slots=out["slots"], kind="network",
                         theorem_backed=out["theorem_backed"])

    @app.post("/sweep", response_model=S.SweepOut)
    def run_sweep(req: S.SweepRequest):
        cfg = _config(req.config)
        _require_feasible(cfg)
        rows = _guard(experiments.sweep, cfg, req.lambda_gs, req.slots,
                      replications=req.replications, seed=req.seed, warmup=req.warmup)
        return S.SweepOut(rows=rows)

    @app.post("/boundary", response_model=S.BoundaryOut)
    def boundary(req: S.BoundaryRequest):
        cfg = _config(req.config)
        _require_feasible(cfg)
        est = _guard(experiments.boundary_bisection, cfg, req.bracket, req.tol,
                     req.slots, replications=req.replications, seed=req.seed,
                     warmup=req.warmup)
        return S.BoundaryOut(**est.__dict__)

    @app.post("/report", response_model=S.ReportOut)
    def report(req: S.ReportRequest):
        doc, table = _guard(experiments.emit_report, req.rows, req.meta)
        return S.ReportOut(report=doc, table=table)

    return app


app = create_app()
