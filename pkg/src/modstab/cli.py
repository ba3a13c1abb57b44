"""Command-line client for the HTTP service.

Runs against an in-process app by default; pass --server to talk to a
running instance instead.  Every subcommand echoes its effective config
(file values overridden by flags) and is reproducible from that echo plus
the seed.

Exit codes: 0 success, 2 config error, 3 infeasible rate precondition,
4 invariant breach inside the core.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

OUT_ENV = "MODSTAB_OUT"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process default: a sync httpx client speaking directly to the app
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service.app import create_app
    return TestClient(create_app(), raise_server_exceptions=False)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail", {})
    except ValueError:
        detail = {}
    code = detail.get("code") if isinstance(detail, dict) else None
    message = detail.get("message", resp.text) if isinstance(detail, dict) else str(detail)
    if resp.status_code == 409 or code == "infeasible":
        raise CliError(message, EXIT_INFEASIBLE)
    if resp.status_code == 500 or code == "invariant":
        raise CliError(message, EXIT_INVARIANT)
    raise CliError(message or f"request failed with status {resp.status_code}", EXIT_CONFIG)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise CliError(f"cannot read config file {path}: {e}")


def _network_config(args, file_cfg: dict, need_lambda_G: bool = True) -> dict:
    cfg = dict(file_cfg.get("network", file_cfg))
    overrides = {
        "M": args.M, "p": args.p, "lambda_R": args.lambda_r,
        "lambda_G": args.lambda_g, "mode": args.mode,
        "arrival_law": args.arrival_law,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    cfg.setdefault("dummy", False)
    cfg.setdefault("arrival_law", "poisson")
    if not need_lambda_G:
        cfg.setdefault("lambda_G", 0.0)  # the grid/bracket supplies it
    missing = [k for k in ("M", "p", "lambda_R", "lambda_G") if k not in cfg]
    if missing:
        raise CliError(f"missing network parameters: {', '.join(missing)}")
    return cfg


def _pick(args, file_cfg: dict, key: str, flag_value, default=None):
    if flag_value is not None:
        return flag_value
    return file_cfg.get(key, default)


def _out_dir(args) -> Path | None:
    out = args.out or os.environ.get(OUT_ENV)
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, name: str, effective: dict, result: dict):
    out = _out_dir(args)
    if out is not None:
        (out / f"{name}_config.json").write_text(json.dumps(effective, indent=1, sort_keys=True))
        (out / f"{name}_result.json").write_text(json.dumps(result, indent=1, sort_keys=True))
    print(json.dumps(result, indent=1, sort_keys=True))


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"expected a comma-separated list of numbers, got {text!r}")


def cmd_simulate(client, args, file_cfg):
    cfg = _network_config(args, file_cfg)
    payload = {
        "config": cfg,
        "slots": _pick(args, file_cfg, "slots", args.slots, 10_000),
        "thinning": _pick(args, file_cfg, "thinning", args.thinning, 1),
        "seed": args.seed,
    }
    result = _post(client, "/simulate", payload)
    _emit(args, "simulate", payload, result)
    return EXIT_OK


def cmd_verify(client, args, file_cfg):
    payload: dict = {"V": _pick(args, file_cfg, "V", None)}
    if args.kernel:
        try:
            payload["kernel_text"] = Path(args.kernel).read_text()
        except OSError as e:
            raise CliError(f"cannot read kernel file: {e}")
    else:
        cfg = _network_config(args, file_cfg)
        cfg["dummy"] = True  # the exported kernel models the dominating chain
        raw = file_cfg.get("network", file_cfg)
        if args.arrival_law is None and "arrival_law" not in raw:
            cfg["arrival_law"] = "bernoulli"  # exact export needs 0/1 arrivals
        payload["config"] = cfg
        payload["R_cap"] = _pick(args, file_cfg, "R_cap", args.r_cap)
        payload["G_cap"] = _pick(args, file_cfg, "G_cap", args.g_cap)
        if payload["R_cap"] is None or payload["G_cap"] is None:
            raise CliError("verify needs --kernel or --r-cap and --g-cap")
    result = _post(client, "/verify", payload)
    _emit(args, "verify", payload, result)
    verdict = "PASS" if result["certificate"]["passed"] else "FAIL"
    print(f"certificate: {verdict}")
    return EXIT_OK


def cmd_coupling(client, args, file_cfg):
    chain = file_cfg.get("chain", file_cfg)
    if "P" not in chain or "V" not in chain:
        raise CliError("coupling needs a config file with 'P' (matrix) and 'V' (indices)")
    payload = {
        "P": chain["P"], "V": chain["V"],
        "m": _pick(args, file_cfg, "m", None, 1),
        "reps": _pick(args, file_cfg, "reps", args.reps, 1000),
        "T_max": _pick(args, file_cfg, "T_max", None, 1000),
        "seed": args.seed,
    }
    result = _post(client, "/coupling", payload)
    _emit(args, "coupling", payload, result)
    return EXIT_OK


def cmd_idle(client, args, file_cfg):
    payload: dict = {
        "slots": _pick(args, file_cfg, "slots", args.slots, 1_000_000),
        "burn_in": _pick(args, file_cfg, "burn_in", None, 10_000),
        "seed": args.seed,
    }
    if args.pmf:
        payload["pmf"] = _parse_floats(args.pmf)
    else:
        payload["config"] = _network_config(args, file_cfg)
    result = _post(client, "/idle", payload)
    _emit(args, "idle", payload, result)
    return EXIT_OK


def cmd_sweep(client, args, file_cfg):
    grid = args.grid or file_cfg.get("lambda_gs")
    if grid is None:
        raise CliError("sweep needs --grid or 'lambda_gs' in the config file")
    payload = {
        "config": _network_config(args, file_cfg, need_lambda_G=False),
        "lambda_gs": _parse_floats(grid) if isinstance(grid, str) else list(grid),
        "slots": _pick(args, file_cfg, "slots", args.slots, 1_000_000),
        "replications": _pick(args, file_cfg, "replications", args.reps, 4),
        "seed": args.seed,
    }
    result = _post(client, "/sweep", payload)
    _emit(args, "sweep", payload, result)
    return EXIT_OK


def cmd_boundary(client, args, file_cfg):
    bracket = args.bracket or file_cfg.get("bracket")
    if bracket is None:
        raise CliError("boundary needs --bracket LO,HI or 'bracket' in the config file")
    bracket = _parse_floats(bracket) if isinstance(bracket, str) else list(bracket)
    if len(bracket) != 2:
        raise CliError("bracket must have exactly two values")
    payload = {
        "config": _network_config(args, file_cfg, need_lambda_G=False),
        "bracket": bracket,
        "tol": _pick(args, file_cfg, "tol", args.tol, 0.01),
        "slots": _pick(args, file_cfg, "slots", args.slots, 1_000_000),
        "replications": _pick(args, file_cfg, "replications", args.reps, 4),
        "seed": args.seed,
    }
    result = _post(client, "/boundary", payload)
    _emit(args, "boundary", payload, result)
    return EXIT_OK


def cmd_report(client, args, file_cfg):
    rows = []
    for path in args.rows:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as e:
            raise CliError(f"cannot read rows file {path}: {e}")
        rows.extend(doc["rows"] if isinstance(doc, dict) else doc)
    result = _post(client, "/report", {"rows": rows, "meta": {"sources": args.rows}})
    out = _out_dir(args)
    if out is not None:
        (out / "report.json").write_text(result["report"])
        (out / "report.csv").write_text(result["table"])
    print(result["table"], end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modstab",
        description="stability experiments for slotted random-access networks",
    )
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help=f"output directory (default from ${OUT_ENV})")
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker budget hint (runs are sequential for determinism)")
        sp.add_argument("--mode", choices=["coordinator", "no_coordinator"])
        sp.add_argument("--arrival-law", choices=["bernoulli", "poisson"])
        sp.add_argument("--M", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--lambda-r", type=float)
        sp.add_argument("--lambda-g", type=float)
        sp.add_argument("--slots", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--tol", type=float)

    sp = sub.add_parser("simulate", help="one trajectory to a trace file")
    common(sp)
    sp.add_argument("--thinning", type=int)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("verify", help="drift report and recurrence certificate")
    common(sp)
    sp.add_argument("--kernel", help="kernel file; otherwise built from the network config")
    sp.add_argument("--r-cap", type=int)
    sp.add_argument("--g-cap", type=int)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("coupling", help="split-chain regeneration and coupling tail")
    common(sp)
    sp.set_defaults(fn=cmd_coupling)

    sp = sub.add_parser("idle", help="idle-probability measurement")
    common(sp)
    sp.add_argument("--pmf", help="comma-separated increment pmf for the synthetic recursion")
    sp.set_defaults(fn=cmd_idle)

    sp = sub.add_parser("sweep", help="classify a grid of green arrival rates")
    common(sp)
    sp.add_argument("--grid", help="comma-separated lambda_G values")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("boundary", help="bisect the stability boundary in lambda_G")
    common(sp)
    sp.add_argument("--bracket", help="LO,HI bracket for the bisection")
    sp.set_defaults(fn=cmd_boundary)

    sp = sub.add_parser("report", help="merge sweep outputs into one table")
    common(sp)
    sp.add_argument("rows", nargs="+", help="JSON files with sweep rows")
    sp.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        file_cfg = _load_config_file(args.config)
        with _client(args.server) as client:
            return args.fn(client, args, file_cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
