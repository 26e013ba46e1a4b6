"""Command-line entry point: ``rieszstop {perpetual,invest2d,amput,verify}``.

Each run reads a JSON or TOML config, writes ``<name>.json`` (summary plus
the fully resolved config and seed) and, where there is curve data,
``<name>.csv`` into ``--out``.  Failures print a JSON error object on
stderr.  Exit codes: 0 success, 2 configuration or usage error, 3 solver
failure, 4 verification gate failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .amput import AmericanPut, BoundarySolveError, binomial_oracle, eep_value, solve_boundary
from .invest2d import FamilyConfig, OptimizerConfig, boundary_gamma, fit_boundary, uniqueness_gate
from .model import GbmParams, ParameterError, load_config
from .perpetual import ConsistencyError, perpetual_value, solve_perpetual
from .quadrature import QuadConfig, QuadratureError
from .riesz import CandidateError, CandidateSet, candidate_value_1d
from .verify import McConfig, check_duality, check_dynkin, policy_value_mc

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_GATE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class GateFailure(RuntimeError):
    pass


def _params(cfg: dict) -> GbmParams:
    if "params" not in cfg:
        raise ConfigError("config needs a 'params' table")
    return GbmParams.from_dict(cfg["params"])


def _write(out: Path, name: str, summary: dict, rows: list[list] | None, header: list[str] | None, force: bool) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{name}.json"] + ([out / f"{name}.csv"] if rows is not None else [])
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise ConfigError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    paths[0].write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    if rows is not None:
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
    return [str(p) for p in paths]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_perpetual(cfg: dict, args) -> tuple[dict, list, list]:
    params = _params(cfg)
    sol = solve_perpetual(params, tol=args.tol or 1e-10)
    K = params.K
    grid = cfg.get("grid", {})
    xs = np.linspace(grid.get("x_min", 0.01 * K), grid.get("x_max", 2.0 * K), int(grid.get("n", args.steps or 200)))
    thresholds = [float(v) for v in cfg.get("thresholds", [])]
    header = ["x", "reward", "value"] + [f"candidate_{v:g}" for v in thresholds]
    cols = [xs, np.maximum(K - xs, 0.0), perpetual_value(xs, sol)]
    cols += [candidate_value_1d(v, xs, params) for v in thresholds]
    rows = np.column_stack(cols).tolist()
    value_at = [{"x": float(x), "value": perpetual_value(float(x), sol)} for x in cfg.get("value_at", [])]
    summary = {"x_star": sol.x_star, "gamma": sol.gamma, "root_x_star": sol.root_x_star, "value_at": value_at}
    return summary, rows, header


def _cmd_invest2d(cfg: dict, args) -> tuple[dict, list, list]:
    params = _params(cfg)
    fit_cfg = cfg.get("fit", {})
    quad = QuadConfig(**cfg.get("quad", {}))
    if args.tol:
        quad = QuadConfig(**{**quad.__dict__, "rel_tol": args.tol})
    family = FamilyConfig(**fit_cfg.get("family", {}))
    opt = OptimizerConfig(**fit_cfg.get("optimizer", {}))
    n = int(fit_cfg.get("n", args.steps or 16))
    fit = fit_boundary(params, n=n, family=family, optimizer=opt, quad=quad)
    b = fit.boundary
    factors = [float(c) for c in cfg.get("gate", {}).get("factors", [0.9, 1.1])]
    gate = uniqueness_gate(b, factors, params, quad, n, family.outer_limit, fitted_l2=fit.report.l2)
    x1 = np.linspace(0.0, b.p1, int(cfg.get("curve_points", 101)))
    rows = np.column_stack([x1, boundary_gamma(x1, b)]).tolist()
    summary = {
        **b.to_dict(),
        "residual_sup": fit.report.sup,
        "residual_l2": fit.report.l2,
        "converged": fit.converged,
        "n_evals": fit.n_evals,
        "report": fit.report.to_dict(),
        "gate": gate.to_dict(),
    }
    if not gate.passed:
        summary["_gate_failed"] = True
    return summary, rows, ["x1", "gamma"]


def _cmd_amput(cfg: dict, args) -> tuple[dict, list, list]:
    put = AmericanPut(**cfg.get("put", {}))
    grid = cfg.get("grid", {})
    steps = int(args.steps or grid.get("steps", 200))
    bnd = solve_boundary(put, steps, grid.get("clustering", "uniform"), tol=args.tol or 1e-10)
    points = cfg.get("value_at", [[0.0, put.K]])
    value_at = []
    for s, x in points:
        e = eep_value(float(s), float(x), bnd, put)
        value_at.append({"s": float(s), "x": float(x), "total": e.total, "premium": e.premium, "european": e.european})
    summary = {"b0": float(bnd.b[0]), "value_at": value_at}
    oracle_steps = int(cfg.get("oracle_steps", 0))
    if oracle_steps:
        s0, x0 = points[0]
        if float(s0) != 0.0:
            raise ConfigError("the binomial oracle prices at s = 0 only")
        orc = binomial_oracle(put, oracle_steps, spot=float(x0))
        summary["oracle_value"] = orc.value
        summary["rel_err"] = abs(value_at[0]["total"] - orc.value) / orc.value
    rows = np.column_stack([bnd.t, bnd.b]).tolist()
    return summary, rows, ["t", "b"]


def _mc(cfg: dict, args) -> McConfig:
    mc = dict(cfg.get("mc", {}))
    if args.paths:
        mc["n_paths"] = args.paths
    if args.seed is not None:
        mc["seed"] = args.seed
    return McConfig(**mc)


def _cmd_verify(cfg: dict, args) -> tuple[dict, None, None]:
    identity = cfg.get("identity")
    mc = _mc(cfg, args)
    params = _params(cfg)
    if identity == "duality":
        rep = check_duality(params, cfg["box_a"], cfg["box_b"], mc)
    elif identity == "dynkin":
        cset = CandidateSet.from_dict(cfg["candidate"])
        rep = check_dynkin(cset, cfg["start"], cfg["box"], params, mc, QuadConfig(**cfg.get("quad", {})))
    elif identity == "policy":
        cset = CandidateSet.from_dict(cfg["candidate"])
        rep = policy_value_mc(cset, cfg["start"], params, mc)
    else:
        raise ConfigError("identity must be one of duality, dynkin, policy")
    summary = rep.to_dict()
    summary["mc"] = mc.__dict__
    if not rep.passed:
        summary["_gate_failed"] = True
    return summary, None, None


COMMANDS = {
    "perpetual": _cmd_perpetual,
    "invest2d": _cmd_invest2d,
    "amput": _cmd_amput,
    "verify": _cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rieszstop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON or TOML config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None, help="time steps / grid size / collocation count")
        p.add_argument("--paths", type=int, default=None, help="Monte Carlo path count")
        p.add_argument("--tol", type=float, default=None, help="solver tolerance override")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    return parser


def _error(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        return _error(EXIT_CONFIG, "config", exc)
    except ValueError as exc:
        return _error(EXIT_CONFIG, "config", exc)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", cfg.get("mc", {}).get("seed", 0)))
    args.seed = seed
    try:
        summary, rows, header = COMMANDS[args.command](cfg, args)
        failed = summary.pop("_gate_failed", False)
        summary["config"] = cfg
        summary["seed"] = seed
        summary["command"] = args.command
        summary["overrides"] = {k: getattr(args, k) for k in ("steps", "paths", "tol")}
        _write(Path(args.out), args.command, summary, rows, header, args.force)
    except (ConfigError, ParameterError, CandidateError, KeyError, TypeError) as exc:
        return _error(EXIT_CONFIG, "config", exc)
    except (BoundarySolveError, ConsistencyError, QuadratureError) as exc:
        return _error(EXIT_SOLVER, "solver", exc)
    except ValueError as exc:
        return _error(EXIT_CONFIG, "config", exc)
    except (RuntimeError, ArithmeticError) as exc:
        return _error(EXIT_SOLVER, "solver", exc)
    if failed:
        print(json.dumps({"error": "gate", "message": f"{args.command} verification gate failed", "exit_code": EXIT_GATE}), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
