"""Command-line front end.

``run`` executes a preset or a config-file scenario and writes CSV or JSON;
``validate`` checks a config file; ``presets`` lists what ships built in.
Exit codes: 0 success, 2 validation problem, 3 unconverged rows under
``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys

from .emit import EmitError, emit
from .presets import SweepSpec, describe_presets, get_preset
from .scenario import Scenario, ScenarioError
from .sweep import run_sweep

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNCONVERGED = 3


def _load_config(path: str) -> tuple[Scenario, SweepSpec]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"config {path!r} is not valid JSON: "
                            f"{exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("config root must be an object")
    sweep_part = data.pop("sweep", None)
    variant_part = data.pop("variants", None)
    scen = Scenario.from_dict(data)
    if sweep_part is None:
        # single-point run at the scenario's own operating parameters
        sweep = SweepSpec("c_fronthaul", (scen.c_fronthaul,),
                          _default_variants(scen))
    else:
        if not isinstance(sweep_part, dict) \
                or set(sweep_part) - {"parameter", "values"}:
            raise ScenarioError("sweep must be an object with 'parameter' "
                                "and 'values'")
        try:
            sweep = SweepSpec(str(sweep_part["parameter"]),
                              tuple(sweep_part["values"]),
                              variant_part or _default_variants(scen))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed sweep block: {exc}") from exc
    if variant_part is not None:
        if not isinstance(variant_part, list) or \
                not all(isinstance(v, str) for v in variant_part):
            raise ScenarioError("variants must be a list of strings")
        sweep = SweepSpec(sweep.parameter, sweep.values,
                          tuple(variant_part))
    return scen, sweep


def _default_variants(scen: Scenario) -> tuple:
    if scen.direction == "uplink":
        return ("conventional", "estimate-at-rrh")
    return ("conventional/inst", "conventional/stoch",
            "alt/inst/ncall", "alt/stoch/nc1")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cran-split",
        description="Fronthaul-aware functional-split sweep runner")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a sweep and write results")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="built-in experiment name")
    src.add_argument("--config", help="scenario JSON file")
    run.add_argument("--out", required=True, help="output file path")
    run.add_argument("--format", choices=("csv", "json"), default=None,
                     help="output format (default: by file extension, "
                          "else csv)")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    run.add_argument("--samples", type=int, default=None,
                     help="override the Monte Carlo sample count")
    run.add_argument("--variants", default=None,
                     help="comma-separated variant list")
    run.add_argument("--timing", action="store_true",
                     help="fill the wall_ms column (breaks byte-level "
                          "reproducibility)")
    run.add_argument("--strict", action="store_true",
                     help="exit 3 if any row's solver did not converge")

    val = sub.add_parser("validate", help="check a scenario config file")
    val.add_argument("--config", required=True)

    sub.add_parser("presets", help="list built-in experiments")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "presets":
        for name, desc in describe_presets().items():
            print(f"{name:16s} {desc}")
        return EXIT_OK

    if args.command == "validate":
        try:
            _load_config(args.config)
        except ScenarioError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_INVALID
        print("ok")
        return EXIT_OK

    try:
        if args.preset:
            scenario, sweep = get_preset(args.preset)
        else:
            scenario, sweep = _load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ScenarioError("seed must be nonnegative")
            from dataclasses import replace
            scenario = replace(scenario, seed=args.seed)
        variants = None
        if args.variants is not None:
            variants = tuple(v.strip() for v in args.variants.split(",")
                             if v.strip())
            if not variants:
                raise ScenarioError("empty --variants list")
        fmt = args.format
        if fmt is None:
            fmt = "json" if args.out.lower().endswith(".json") else "csv"
        result = run_sweep(scenario, sweep, variants=variants,
                           samples=args.samples, timing=args.timing)
        emit(result, fmt, args.out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EmitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.strict and not result.all_converged():
        print("warning: at least one row did not meet the solver's "
              "convergence contract", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
