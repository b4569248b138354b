"""Command-line front end.

    python -m lipreach run --model gravity-1d --mode brtdp --epsilon 0.05 --seed 7 --out runs/g
    python -m lipreach validate --model path/to/model.txt

`run` writes into the output directory:

* trace.tsv    one row per recorded probe (IterationTrace columns)
* curve.tsv    lower/upper bounds on a state grid from the final store
* actions.tsv  greedy action sets on the same grid
* summary.tsv  outcome, bounds, steps, config and seed
* store.tsv    the final record table (a store snapshot)
* timing.tsv   wall-clock time; kept apart so the other files are reproducible

Exit codes: 0 success, 2 usage error, 3 parse error, 4 budget exhausted,
5 bound crossing, 6 stagnation.  Failures also print one JSON error record
on stdout and write summary.tsv with the error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as fmt
from .mdp import FiniteActionSet, StatePoint, UsageError, validate_model
from .models import CATALOG, finite_model
from .oracle import absorption_holds, finite_from_model
from .samplers import SAMPLER_KINDS
from .solvers import (
    MODES,
    SolverConfig,
    StagnationError,
    _TargetOnly,
    probe_bounds,
    solve_brtdp,
    solve_reach_avoid,
    solve_step_bounded,
    solve_vi_lower,
    with_avoid,
)
from .store import BoundCrossingError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_BUDGET = 4
EXIT_CROSSING = 5
EXIT_STAGNATION = 6

FILE_PREFIX = "finite-from-file:"


def _param_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_model(ref: str, params: dict | None = None):
    """Catalog name, `finite-from-file:PATH`, or a path to a model file."""
    params = dict(params or {})
    if ref.startswith(FILE_PREFIX):
        path = ref[len(FILE_PREFIX) :]
        with open(path, encoding="utf-8") as fh:
            return finite_model(fmt.parse_finite_text(fh.read()), name=os.path.basename(path))
    if ref in CATALOG:
        try:
            return CATALOG[ref](**params)
        except TypeError as exc:
            raise UsageError(f"bad parameters for {ref}: {exc}") from None
    if os.path.exists(ref):
        if params:
            raise UsageError("model parameters only apply to catalog models")
        return fmt.load_model_file(ref)
    raise UsageError(f"unknown model {ref!r}; catalog: {', '.join(sorted(CATALOG))}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipreach", description="Certified reachability bounds for Lipschitz MDPs")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(q):
        q.add_argument("--model", required=True, help="catalog name, finite-from-file:PATH, or model file path")
        q.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="catalog model parameter")
        q.add_argument("--k", type=int, help="frequency-chain: frequency parameter")
        q.add_argument("--bad-constant", type=float, help="frequency-chain: declared (possibly wrong) constant")

    run = sub.add_parser("run", help="solve and write traces, curves, action maps and a summary")
    model_args(run)
    run.add_argument("--mode", choices=MODES, default="brtdp")
    run.add_argument("--epsilon", type=float, default=0.01)
    run.add_argument("--xi", type=float, default=0.5)
    run.add_argument("--horizon", type=int, default=0)
    run.add_argument("--avoid", help="reach-avoid: shape expression such as 'box([0.4],[0.5])'")
    run.add_argument("--sampler", choices=SAMPLER_KINDS, default="mixture")
    run.add_argument("--nu", type=float, default=0.5)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-steps", type=int, default=10_000_000)
    run.add_argument("--out", default="lipreach-out")
    run.add_argument("--curve-res", type=int, default=65, help="grid points per axis for curve and action map")
    run.add_argument("--trace-every", type=int, default=1, help="keep every n-th probe in the trace")
    run.add_argument("--config", help="JSON file with SolverConfig fields; flags given explicitly win")

    val = sub.add_parser("validate", help="check a model without solving")
    model_args(val)
    return p


def _model_params(args) -> dict:
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = _param_value(value)
    if args.k is not None:
        params["k"] = args.k
    if args.bad_constant is not None:
        params["bad_constant"] = args.bad_constant
    return params


def _config(args, argv) -> SolverConfig:
    base = {}
    if args.config:
        base = fmt.load_config(args.config).as_dict()
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    flags = {
        "mode": args.mode,
        "epsilon": args.epsilon,
        "xi": args.xi,
        "horizon": args.horizon,
        "sampler": args.sampler,
        "nu": args.nu,
        "seed": args.seed,
        "max_steps": args.max_steps,
        "trace_every": args.trace_every,
    }
    for key, value in flags.items():
        if not base or "--" + key.replace("_", "-") in given or key not in base:
            base[key] = value
    base["max_seconds"] = None  # wall-clock limits would make outputs irreproducible
    return fmt.config_from_dict(base)


def grid_states(model, res: int) -> list[StatePoint]:
    pts = []
    if model.continuous:
        axes = [np.linspace(model.state_lower[k], model.state_upper[k], res) for k in range(model.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
        pts += [StatePoint(tuple(float(v) for v in row)) for row in flat]
    pts += [StatePoint(tuple(float(v) for v in model.state_lower), t) for t in model.discrete_states]
    return pts


def _exports(model, result, config, res: int, meta: dict) -> dict[str, str]:
    store = result.store
    points = grid_states(model, res)
    p = config.floor
    if config.mode == "step-bounded":
        values = _TargetOnly(model, store) if store is not None else None
    lowers, uppers, greedy = [], [], []
    for s in points:
        acts = model.actions_at(s)
        if store is None:
            lo = hi = 1.0 if model.is_target(s) else 0.0
        elif config.mode == "step-bounded":
            lo, hi = values.point(s, p)
        else:
            lo, hi, _ = probe_bounds(store, model, s, p)
            if config.mode == "vi-lower" and lo != hi:
                hi = 1.0
        lowers.append(lo)
        uppers.append(hi)
        if store is None or not isinstance(acts, FiniteActionSet):
            names = []
        else:
            chosen = store.greedy_actions(s, p, acts)
            names = [acts.name_of(a) for a in chosen]
        greedy.append(names)
    return {
        "curve.tsv": fmt.format_curve(points, lowers, uppers, meta),
        "actions.tsv": fmt.format_action_map(points, greedy, meta),
    }


def _solve(model, config, avoid_text):
    if config.mode == "vi-lower":
        return model, solve_vi_lower(model, config)
    if config.mode == "step-bounded":
        return model, solve_step_bounded(model, config.horizon, config)
    if config.mode == "reach-avoid":
        if not avoid_text:
            raise UsageError("reach-avoid needs --avoid")
        avoid = fmt._ShapeExpr(avoid_text, 1, 1, model.dim).build()
        return with_avoid(model, avoid), solve_reach_avoid(model, avoid, config)
    return model, solve_brtdp(model, config)


def _error_record(kind: str, message: str, **extra) -> dict:
    return {"error": kind, "message": message, **extra}


def _write_outputs(out: str, files: dict[str, str]):
    os.makedirs(out, exist_ok=True)
    for name, text in files.items():
        fmt.atomic_write(os.path.join(out, name), text)


def cmd_run(args, argv) -> int:
    config = _config(args, argv)
    model = load_model(args.model, _model_params(args))
    meta = {"model": model.name, "fingerprint": model.fingerprint(), "seed": config.seed, "config": config.as_dict()}
    if args.curve_res < 2:
        raise UsageError("--curve-res must be at least 2")
    try:
        solved_model, result = _solve(model, config, args.avoid)
    except (BoundCrossingError, StagnationError) as err:
        crossing = isinstance(err, BoundCrossingError)
        record = _error_record("bound-crossing" if crossing else "stagnation", str(err))
        files = {
            "trace.tsv": fmt.format_trace(getattr(err, "trace", []), meta),
            "summary.tsv": fmt.format_summary({"outcome": record["error"], **record}, meta),
        }
        _write_outputs(args.out, files)
        print(json.dumps(record, sort_keys=True))
        return EXIT_CROSSING if crossing else EXIT_STAGNATION

    summary = {
        "outcome": result.outcome,
        "lower": result.lower,
        "upper": result.upper,
        "gap": result.gap,
        "steps": result.steps,
        "records": 0 if result.store is None else len(result.store),
        "backend": result.backend,
    }
    files = {"trace.tsv": fmt.format_trace(result.trace, meta), "summary.tsv": fmt.format_summary(summary, meta)}
    files.update(_exports(solved_model, result, config, args.curve_res, meta))
    if result.store is not None and config.mode != "step-bounded":
        files["store.tsv"] = fmt.format_snapshot(result.store, solved_model)
    files["timing.tsv"] = fmt.format_summary({"wall_time": result.wall_time}, meta, "lipreach-timing")
    _write_outputs(args.out, files)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_BUDGET if result.outcome == "budget-exhausted" else EXIT_OK


def cmd_validate(args) -> int:
    model = load_model(args.model, _model_params(args))
    report = validate_model(model)
    if not model.continuous:
        try:
            fm, _ = finite_from_model(model)
            if not absorption_holds(fm):
                report.warnings.append(
                    "absorption: an end component lies outside target and sink; upper bounds may not converge"
                )
        except UsageError as exc:
            report.warnings.append(f"finite checks skipped: {exc}")
    record = {
        "model": model.name,
        "fingerprint": model.fingerprint(),
        "ok": report.ok,
        "errors": report.errors,
        "warnings": report.warnings,
        "notes": model.notes,
    }
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK if report.ok else EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args, argv)
        return cmd_validate(args)
    except fmt.ParseError as exc:
        print(json.dumps(_error_record("parse", str(exc), line=exc.line, column=exc.col), sort_keys=True))
        return EXIT_PARSE
    except (fmt.FormatError, fmt.IntegrityError) as exc:
        print(json.dumps(_error_record("parse", str(exc)), sort_keys=True))
        return EXIT_PARSE
    except (UsageError, OSError) as exc:
        print(json.dumps(_error_record("usage", str(exc)), sort_keys=True))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
