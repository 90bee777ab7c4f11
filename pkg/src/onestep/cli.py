"""Command-line entry point.

Exit codes: 0 success, 1 a reported check failed, 2 usage or validation
error, 3 dataset error, 4 numerical failure, 5 I/O error.  On failure a one-line JSON object
``{"error": <category>, "message": ...}`` is written to stderr.

Settings are resolved as command-line flag, then ``--config`` file
(``key = value`` lines, keys are flag names with ``_`` for ``-``), then the
built-in default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import ContractViolation
from .datasets import DatasetError, build_frequency_matrix, parse_edge_list
from .experiments import (
    counterexample_monte_carlo,
    lambda_sweep,
    mc_equivalence_cauchy,
    prox_check,
    stop_cond_audit,
    synthetic_lowrank_model,
)
from .models import CauchyModel
from .proxops import InnerSolveError
from .reporting import ReportIOError, dumps_report, emit_report
from .solvers import DivergenceError

COMMANDS = ("prox-check", "mc-equivalence", "counterexample", "lowrank", "stop-cond-audit")

DEFAULTS = {
    "seed": 0,
    "out": "-",
    "format": "json",
    "replicates": None,  # per-command default below
    "sample_sizes": "200,800,3200,12800",
    "mode": None,
    "sigma0": 20.0,
    "gamma": 1000.0,
    "location": 0.0,
    "sigma1": 10.0,
    "sigma2": 1.0,
    "n": 10000,
    "lambda": "4,2,1",
    "stopping_c": 1.0,
    "max_iter": 200,
    "segments": 49,
    "dataset": None,
    "synthetic_n": 50,
    "rank": 3,
}

COMMAND_DEFAULTS = {
    "prox-check": {"replicates": 1000},
    "mc-equivalence": {"replicates": 500, "mode": "prox_gradient_map"},
    "counterexample": {"replicates": 10000, "mode": "fixed_step"},
    "lowrank": {},
    "stop-cond-audit": {"replicates": 100},
}


class UsageError(ValueError):
    pass


def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onestep", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--seed", type=int, help="base random seed (default 0)")
    p.add_argument("--out", help="output path, '-' for stdout (default -)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default json)")
    p.add_argument("--replicates", type=int,
                   help="replicates / instances (defaults: prox-check 1000, mc-equivalence "
                        "500, counterexample 10000, stop-cond-audit 100)")
    p.add_argument("--sample-sizes", help="comma-separated increasing n grid "
                                          "(default 200,800,3200,12800)")
    p.add_argument("--mode", help="mc-equivalence: prox_gradient_map | prox_descent "
                                  "(default prox_gradient_map); counterexample: fixed_step | "
                                  "exact_step | scaled_newton (default fixed_step)")
    p.add_argument("--sigma0", type=float, help="Cauchy scale (default 20)")
    p.add_argument("--gamma", type=float, help="Laplace prior scale, 0 for plain MLE (default 1000)")
    p.add_argument("--location", type=float, help="Cauchy location (default 0)")
    p.add_argument("--sigma1", type=float, help="counterexample sigma1 (default 10)")
    p.add_argument("--sigma2", type=float, help="counterexample sigma2 (default 1)")
    p.add_argument("--n", type=int, help="counterexample sample size (default 10000)")
    p.add_argument("--lambda", dest="lambda_", action="append", type=float,
                   help="nuclear-norm penalty, repeatable (default 4, 2, 1)")
    p.add_argument("--stopping-c", type=float, help="constant c in the c/sqrt(n) rule (default 1)")
    p.add_argument("--max-iter", type=int, help="proximal Newton iteration cap (default 200)")
    p.add_argument("--segments", type=int, help="time segments for edge-list binning (default 49)")
    p.add_argument("--dataset", help="edge-list file 'src dst timestamp'; synthetic data if absent")
    p.add_argument("--synthetic-n", type=int, help="synthetic matrix size N (default 50)")
    p.add_argument("--rank", type=int, help="synthetic true rank (default 3)")
    return p


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in COMMAND_DEFAULTS[args.command].items()})
    if args.config:
        try:
            cfg.update(read_config(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    given = vars(args)
    for key in DEFAULTS:
        attr = "lambda_" if key == "lambda" else key
        if given.get(attr) is not None:
            cfg[key] = given[attr]
    try:
        for key in ("seed", "replicates", "n", "max_iter", "segments", "synthetic_n", "rank"):
            if cfg[key] is not None:
                cfg[key] = int(cfg[key])
        for key in ("sigma0", "gamma", "location", "sigma1", "sigma2", "stopping_c"):
            cfg[key] = float(cfg[key])
        if isinstance(cfg["sample_sizes"], str):
            cfg["sample_sizes"] = [int(s) for s in cfg["sample_sizes"].split(",") if s.strip()]
        if isinstance(cfg["lambda"], str):
            cfg["lambda"] = [float(s) for s in cfg["lambda"].split(",") if s.strip()]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad setting: {exc}") from exc
    if cfg["format"] not in ("csv", "json"):
        raise UsageError("format must be csv or json")
    _validate(args.command, cfg)
    return cfg


def _validate(command, cfg):
    if cfg["replicates"] is not None and cfg["replicates"] < 1:
        raise UsageError("replicates must be positive")
    if command == "mc-equivalence":
        sizes = cfg["sample_sizes"]
        if not sizes or any(n < 1 for n in sizes) or sorted(set(sizes)) != sizes:
            raise UsageError("sample sizes must be positive and increasing")
        if cfg["mode"] not in ("prox_gradient_map", "prox_descent"):
            raise UsageError(f"unknown mc-equivalence mode {cfg['mode']!r}")
        if cfg["sigma0"] <= 0 or cfg["gamma"] < 0:
            raise UsageError("need sigma0 > 0 and gamma >= 0")
    if command == "counterexample":
        if cfg["mode"] not in ("fixed_step", "exact_step", "scaled_newton"):
            raise UsageError(f"unknown counterexample mode {cfg['mode']!r}")
        if not cfg["sigma1"] > cfg["sigma2"] > 0:
            raise UsageError("need sigma1 > sigma2 > 0")
        if cfg["n"] < 1:
            raise UsageError("n must be positive")
    if command == "lowrank":
        if not cfg["lambda"] or any(lam < 0 for lam in cfg["lambda"]):
            raise UsageError("penalties must be nonnegative")
        if cfg["stopping_c"] <= 0 or cfg["max_iter"] < 1 or cfg["segments"] < 1:
            raise UsageError("need stopping-c > 0, max-iter >= 1, segments >= 1")


def run(command: str, cfg: dict):
    seed = cfg["seed"]
    if command == "prox-check":
        return prox_check(cfg["replicates"], seed)
    if command == "stop-cond-audit":
        return stop_cond_audit(cfg["replicates"], seed)
    if command == "mc-equivalence":
        gamma = cfg["gamma"] or None
        model = CauchyModel(cfg["location"], cfg["sigma0"], gamma)
        return mc_equivalence_cauchy(model, cfg["sample_sizes"], cfg["replicates"],
                                     cfg["mode"], seed)
    if command == "counterexample":
        return counterexample_monte_carlo(cfg["sigma1"], cfg["sigma2"], cfg["n"],
                                          cfg["replicates"], cfg["mode"], seed)
    if command == "lowrank":
        if cfg["dataset"]:
            model = build_frequency_matrix(parse_edge_list(cfg["dataset"], cfg["segments"]))
        else:
            model, _ = synthetic_lowrank_model(cfg["synthetic_n"], cfg["rank"],
                                               cfg["segments"], seed)
        return lambda_sweep(model, cfg["lambda"], cfg["stopping_c"], cfg["max_iter"])
    raise UsageError(f"unknown command {command!r}")


def _check(command, report):
    if command in ("prox-check", "stop-cond-audit"):
        bad = [r["instance"] for r in report if not r["holds"]]
        if bad:
            return f"inequality violated on instances {bad[:10]}"
    if command == "lowrank":
        errors = [f"lambda={r.lambda_}: {r.error}" for r in report if r.error]
        if errors:
            return "; ".join(errors)
    return None


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        report = run(args.command, cfg)
        if cfg["out"] == "-":
            sys.stdout.write(dumps_report(report, cfg["format"]))
        else:
            emit_report(report, cfg["out"], cfg["format"])
        problem = _check(args.command, report)
        if problem:
            return _fail("check_failed", problem, 1)
    except (UsageError, ContractViolation) as exc:
        return _fail("validation", str(exc), 2)
    except DatasetError as exc:
        return _fail("dataset", str(exc), 3)
    except (InnerSolveError, DivergenceError, ArithmeticError) as exc:
        return _fail("numerical", str(exc), 4)
    except (ReportIOError, OSError) as exc:
        return _fail("io", str(exc), 5)
    return 0


if __name__ == "__main__":
    sys.exit(main())
