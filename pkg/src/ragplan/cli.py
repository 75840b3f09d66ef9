"""``ragplan`` command line: compile, estimate, explore, report.

Exit codes: 0 success, 2 input error, 3 infeasible.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import _doc, hardware, ir as irm, space as spm
from .calibration import load_calibration, load_recall_table
from .costmodel import CostContext, RunConfig, estimate, load_run_config, map_resources
from .errors import InfeasibleError, PlacementError, RagPlanError, SchemaError
from .explore import STRATEGIES, EvolutionParams, Evaluation, NoFeasibleConfig, dump_result, explore
from .pareto import ObjectiveSpec
from .quality import SyntheticQuality, TableQuality, load_quality_table
from .report import frontier_csv, frontier_svg, load_pareto

log = logging.getLogger("ragplan")

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


class InputError(Exception):
    pass


def _read(path, what):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{what}: cannot read {path}: {exc.strerror}") from None


def _parse(fn, text, where):
    try:
        return fn(text)
    except SchemaError as exc:
        raise InputError(f"{where}: {exc}") from None


def _write(out, text):
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _run_config(path):
    if path is None:
        return RunConfig(), CostContext()
    rc = _parse(load_run_config, _read(path, "run-config"), path)
    base = Path(path).parent
    calibration = recall = None
    if rc.calibration:
        p = base / rc.calibration
        calibration = _parse(lambda t: load_calibration(t, rc.calibration_mode), _read(p, "calibration"), str(p))
    if rc.recall_table:
        p = base / rc.recall_table
        recall = _parse(load_recall_table, _read(p, "recall table"), str(p))
    return rc, CostContext(rc.constants, calibration, recall)


def cmd_compile(args):
    config = _parse(spm.load_config, _read(args.config, "config"), args.config)
    profile = _parse(spm.load_profile, _read(args.profile, "profile"), args.profile)
    try:
        ir = spm.lower(config, profile)
    except RagPlanError as exc:
        raise InputError(f"{args.config}: {exc}") from None
    _write(args.out, irm.serialize(ir))
    return 0


def _stage_table(perf):
    lines = [f"{'graph':<10} {'node':<10} {'device':<8} {'batch':>5} {'latency_s':>12} {'busy_s':>12}"]
    for g, nodes in sorted(perf.per_stage.items()):
        for n, s in nodes.items():
            lines.append(f"{g:<10} {n:<10} {s.device:<8} {s.batch:>5} {s.latency_s:>12.4g} {s.busy_s:>12.4g}")
    lines.append(f"TTFT {perf.ttft_s:.4g} s  TPOT {perf.tpot_s:.4g} s  RPS {perf.rps:.4g}  "
                 f"req/$ {perf.req_per_dollar:.4g}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args):
    ir = _parse(irm.deserialize, _read(args.ir, "ir"), args.ir)
    report = irm.validate(ir)
    if not report.ok:
        raise InputError(f"{args.ir}: " + "; ".join(report.messages()))
    pool = _parse(hardware.load_pool, _read(args.hw, "hardware"), args.hw)
    rc, ctx = _run_config(args.run_config)
    status = 0
    try:
        placement = map_resources(ir, pool, ctx, rc.slo_ttft, rc.slo_tpot, rc.batch_cap, rc.placement_objective)
    except InfeasibleError as exc:
        if exc.best_effort is None:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"infeasible: {exc}; reporting best effort", file=sys.stderr)
        placement, status = exc.best_effort, EXIT_INFEASIBLE
    try:
        perf = estimate(ir, pool, placement, ctx)
    except PlacementError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    doc = {"schema": "rag-estimate/1", "ir": ir.name, "slo_met": status == 0, "estimate": perf.to_doc()}
    _write(args.out, _doc.dumps(doc))
    sys.stderr.write(_stage_table(perf))
    return status


def _quality_source(spec, seed):
    if spec == "synthetic" or spec.startswith("synthetic:"):
        _, _, s = spec.partition(":")
        try:
            return SyntheticQuality(int(s) if s else seed)
        except ValueError:
            raise InputError(f"quality source: bad seed in {spec!r}") from None
    table = _parse(load_quality_table, _read(spec, "quality table"), spec)
    return TableQuality(table)


def cmd_explore(args):
    if args.strategy not in STRATEGIES:
        raise InputError(f"unsupported strategy {args.strategy!r} (choose from {', '.join(STRATEGIES)})")
    if args.iters < 1:
        raise InputError("--iters must be >= 1")
    space = _parse(spm.load_space, _read(args.space, "space"), args.space)
    pool = _parse(hardware.load_pool, _read(args.hw, "hardware"), args.hw)
    profile = _parse(spm.load_profile, _read(args.profile, "profile"), args.profile)
    rc, ctx = _run_config(args.run_config)
    seed = args.seed if args.seed is not None else rc.seed
    names = args.objectives.split(",") if args.objectives else list(rc.objectives)
    try:
        spec = ObjectiveSpec.from_names(names)
        params = EvolutionParams(**{k: tuple(v) if k == "lambdas" else v for k, v in rc.strategy.items()})
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from None
    evaluation = Evaluation(
        quality=_quality_source(args.quality, seed), pool=pool, profile=profile, ctx=ctx,
        slo_ttft=rc.slo_ttft, slo_tpot=rc.slo_tpot, batch_cap=rc.batch_cap,
        placement_objective=rc.placement_objective,
    )
    try:
        result = explore(space, args.iters, args.strategy, evaluation, spec, seed, params)
    except NoFeasibleConfig as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out, dump_result(result))
    ok = sum(e.status == "ok" for e in result.trace)
    print(f"{len(result.trace)} evaluated, {ok} feasible, {len(result.frontier)} on frontier", file=sys.stderr)
    return 0


def cmd_report(args):
    doc = _parse(load_pareto, _read(args.pareto, "pareto"), args.pareto)
    if args.format == "csv":
        text = frontier_csv(doc)
    else:
        text = frontier_svg(doc)
    _write(args.out, text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ragplan", description="Plan RAG serving configurations.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="-"):
        sp.add_argument("--out", default=out_default, help="output file, '-' for stdout")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--run-config", default=None, help="rag-cm/1 run configuration")

    c = sub.add_parser("compile", help="lower an algorithm config into RAG-IR")
    c.add_argument("config")
    c.add_argument("profile")
    common(c)
    c.set_defaults(func=cmd_compile)

    e = sub.add_parser("estimate", help="place and estimate a RAG-IR on a hardware pool")
    e.add_argument("ir")
    e.add_argument("hw")
    common(e)
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("explore", help="search the quality-performance Pareto frontier")
    x.add_argument("space")
    x.add_argument("hw")
    x.add_argument("profile")
    x.add_argument("quality", help="'synthetic[:SEED]' or a config_key,quality CSV")
    x.add_argument("--iters", type=int, default=50)
    x.add_argument("--strategy", default="grid")
    x.add_argument("--objectives", default=None, help="comma-separated, e.g. quality,req_per_dollar")
    common(x, "pareto.json")
    x.set_defaults(func=cmd_explore)

    r = sub.add_parser("report", help="render a pareto.json as CSV or SVG")
    r.add_argument("pareto")
    r.add_argument("--format", choices=("csv", "svg"), default="csv")
    common(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("RAGPLAN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
