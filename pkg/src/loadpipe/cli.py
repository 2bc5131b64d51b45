"""Command-line entry point: ``loadpipe <subcommand> ...``.

Exit codes: 0 ok, 2 parse, 3 validate, 4 analysis, 5 equivalence failure,
6 config. Data goes to stdout (or ``-o``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import OracleGrid, model_top_k, oracle_csv, oracle_grid, top_k_csv
from .config import ConfigError, HardwareSpec, ScheduleParams, WorkloadDesc, load_json
from .interp import ExecMode, InterpError, compare_outputs, random_inputs, run
from .ir import ParseError, Program, ValidationError, check, parse_program, print_program
from .perf_model import DesignPointError, format_breakdown, predict
from .pipe_sim import GroundTruthConfig, SimConfig, simulate_pipeline
from .pipeline import PipelineError, transform_with_plan
from .scheduler import IneligibleBufferError, OrderingError, ScheduleError, lower, parse_script
from .tuner import DesignSpace, GroundTruth, Method, default_space, reports_csv, tune

EXIT_OK, EXIT_PARSE, EXIT_VALIDATE, EXIT_ANALYSIS, EXIT_EQUIV, EXIT_CONFIG = 0, 2, 3, 4, 5, 6

log = logging.getLogger("loadpipe")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}", EXIT_CONFIG) from None


def _emit(text: str, out: Optional[str]) -> None:
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_program(path: str) -> Program:
    text = _read(path)
    try:
        p = parse_program(text)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    try:
        return check(p)
    except ValidationError as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATE) from None


def _transform(p: Program):
    try:
        return transform_with_plan(p)
    except PipelineError as exc:
        rule = f" [rule {exc.rule}]" if exc.rule else ""
        raise CliError(f"analysis failed{rule}: {exc}", EXIT_ANALYSIS) from None


def _hw(path: Optional[str]) -> HardwareSpec:
    return HardwareSpec.from_dict(load_json(path)) if path else HardwareSpec()


def _inputs(p: Program, spec: str) -> dict:
    if spec.startswith("random:"):
        try:
            return random_inputs(p, int(spec.split(":", 1)[1]))
        except ValueError:
            raise CliError(f"bad random seed in {spec!r}", EXIT_CONFIG) from None
    data = load_json(spec)
    if not isinstance(data, dict):
        raise ConfigError("inputs must be a JSON object of name -> array")
    return data


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------- subcommands


def cmd_parse(a) -> int:
    _emit(print_program(_load_program(a.ir)), a.output)
    return EXIT_OK


def cmd_schedule(a) -> int:
    try:
        state = parse_script(_read(a.script))
        p = lower(state)
    except IneligibleBufferError as exc:
        raise CliError(f"{a.script}: [rule {exc.report.failed_rule.value}] {exc}", EXIT_ANALYSIS) from None
    except OrderingError as exc:
        raise CliError(f"{a.script}: {exc}", EXIT_ANALYSIS) from None
    except ScheduleError as exc:
        raise CliError(f"{a.script}: {exc}", EXIT_PARSE) from None
    _emit(print_program(p), a.output)
    return EXIT_OK


def cmd_transform(a) -> int:
    q, plan = _transform(_load_program(a.ir))
    _emit(print_program(q), a.output)
    if a.emit_plan:
        Path(a.emit_plan).write_text(plan.to_json() + "\n")
    return EXIT_OK


def cmd_run(a) -> int:
    p = _load_program(a.ir)
    if a.transform:
        p, _ = _transform(p)
    mode = ExecMode.STALE_READ if a.mode == "stale-read" else ExecMode.STRICT
    try:
        res = run(p, _inputs(p, a.inputs), mode)
    except InterpError as exc:
        raise CliError(f"execution failed: {exc}", EXIT_EQUIV) from None
    out = {"outputs": {k: v.tolist() for k, v in sorted(res.outputs.items())},
           "faults": res.faults}
    _emit(_json(out), a.output)
    if a.trace:
        Path(a.trace).write_text("".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in res.trace))
    return EXIT_OK


def cmd_verify(a) -> int:
    p = _load_program(a.ir)
    q = _load_program(a.against) if a.against else _transform(p)[0]
    if a.trials <= 0:
        log.warning("no trials requested; nothing to compare")
        return EXIT_OK
    for t in range(a.trials):
        inputs = random_inputs(p, a.seed + t)
        try:
            expected = run(p, inputs)
            # stale reads are recorded, not raised, so a divergence can be located
            got = run(q, inputs, ExecMode.STALE_READ)
        except InterpError as exc:
            print(f"trial {t}: execution failed: {exc}", file=sys.stderr)
            return EXIT_EQUIV
        eq = compare_outputs(expected.outputs, got.outputs)
        if not eq or got.faults:
            print(f"trial {t}: {eq}; {got.faults} synchronization faults", file=sys.stderr)
            return EXIT_EQUIV
    print(f"equivalent on {a.trials} trials")
    return EXIT_OK


def cmd_predict(a) -> int:
    cfg = load_json(a.config)
    try:
        w = WorkloadDesc.from_dict(cfg["workload"])
        p = ScheduleParams.from_dict(cfg["params"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"predict config needs 'workload' and 'params' objects ({exc})") from None
    try:
        b = predict(w, p, _hw(a.hw))
    except DesignPointError as exc:
        raise CliError(f"invalid design point: {exc}", EXIT_CONFIG) from None
    _emit(_json(b.to_dict()) if a.format == "json" else format_breakdown(b) + "\n", a.output)
    return EXIT_OK


def cmd_simulate(a) -> int:
    cfg = SimConfig.from_dict(load_json(a.config))
    makespan, tr = simulate_pipeline(cfg, trace=bool(a.trace))
    _emit(_json({"makespan": makespan}), a.output)
    if a.trace:
        Path(a.trace).write_text(tr.to_csv())
    return EXIT_OK


def _space(path: Optional[str], hw: HardwareSpec) -> DesignSpace:
    return DesignSpace.from_dict(load_json(path), hw) if path else default_space(hw)


def cmd_tune(a) -> int:
    hw = _hw(a.hw)
    space = _space(a.space, hw)
    gt = GroundTruthConfig(a.contention, a.noise, a.gt_seed)
    truth = GroundTruth(space, gt.contention_factor)
    methods = list(Method) if a.method == "all" else [Method(a.method)]
    reports = [tune(m, a.budget, space, gt, s, truth) for m in methods for s in a.seed]
    _emit(_json([r.to_dict() for r in reports]), a.output)
    if a.csv:
        Path(a.csv).write_text(reports_csv(reports))
    return EXIT_OK


def cmd_bench_model(a) -> int:
    grid = OracleGrid.from_dict(load_json(a.grid)) if a.grid else OracleGrid()
    rows = oracle_grid(grid)
    _emit(oracle_csv(rows), a.output)
    if a.top_k:
        hw = _hw(a.hw)
        space = _space(a.space, hw)
        Path(a.top_k).write_text(top_k_csv(model_top_k(space, GroundTruth(space))))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loadpipe", description="Automatic load pipelining toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("-o", "--output", help="output path (default stdout)")
        return sp

    sp = add("parse", cmd_parse, "parse, validate and canonically print an IR file")
    sp.add_argument("ir")

    sp = add("schedule", cmd_schedule, "apply a schedule script and print the lowered IR")
    sp.add_argument("script")

    sp = add("transform", cmd_transform, "run the pipelining pass")
    sp.add_argument("ir")
    sp.add_argument("--emit-plan", metavar="PATH", help="write the analysis plan as JSON")

    sp = add("run", cmd_run, "interpret a program")
    sp.add_argument("ir")
    sp.add_argument("--inputs", default="random:0", help="JSON file of arrays, or random:<seed>")
    sp.add_argument("--mode", choices=["strict", "stale-read"], default="strict")
    sp.add_argument("--transform", action="store_true", help="transform before running")
    sp.add_argument("--trace", metavar="PATH", help="write pipeline events as JSON lines")

    sp = add("verify", cmd_verify, "check transform(p) against p on random inputs")
    sp.add_argument("ir")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--against", metavar="IR", help="compare with this transformed program instead of transforming")

    sp = add("predict", cmd_predict, "analytical latency of one design point")
    sp.add_argument("config", help='JSON with "workload" and "params"')
    sp.add_argument("--hw", help="hardware JSON")
    sp.add_argument("--format", choices=["json", "table"], default="json")

    sp = add("simulate", cmd_simulate, "simulate one pipeline")
    sp.add_argument("config", help="SimConfig JSON")
    sp.add_argument("--trace", metavar="PATH", help="write the event trace as CSV")

    sp = add("tune", cmd_tune, "search a design space against simulated ground truth")
    sp.add_argument("--method", choices=[m.value for m in Method] + ["all"], default="assisted")
    sp.add_argument("--budget", type=int, default=50)
    sp.add_argument("--seed", type=int, nargs="+", default=[0])
    sp.add_argument("--space", help="design space JSON (default: 1024^3 GEMM)")
    sp.add_argument("--hw", help="hardware JSON")
    sp.add_argument("--noise", type=float, default=0.05, help="log-normal measurement sigma")
    sp.add_argument("--contention", type=float, default=0.1)
    sp.add_argument("--gt-seed", type=int, default=0, help="ground-truth noise seed")
    sp.add_argument("--csv", metavar="PATH", help="write best-in-k curves as CSV")

    sp = add("bench-model", cmd_bench_model, "compare the analytical model with the simulator")
    sp.add_argument("--grid", help="oracle grid JSON")
    sp.add_argument("--top-k", metavar="PATH", help="also write model-ranked top-k results as CSV")
    sp.add_argument("--space", help="design space JSON for --top-k")
    sp.add_argument("--hw", help="hardware JSON")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
