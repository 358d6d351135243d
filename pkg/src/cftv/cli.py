"""Command line entry point.

Exit codes: 0 success, 1 findings present, 2 usage or input error,
3 internal error.  Diagnostics go to stderr, one JSON object per line.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from .analysis import Scope, minimal_cut_sets, model_rates, reduce_scope, top_probability
from .errors import CftvError, InputError
from .jsonio import dumps_pretty, read_json, write_atomic, write_json_atomic
from .model import load_system, validate

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


def diag(level, message, **extra):
    rec = {"level": level, "message": message}
    rec.update(extra)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _scope_arg(model, text):
    if text is None:
        return Scope.whole(model)
    return Scope.of(model, [s.strip() for s in text.split(",") if s.strip()])


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    model = load_system(read_json(args.model))
    diags = validate(model)
    for d in diags:
        diag(d.severity, d.message, code=d.code, location=d.location)
    return EXIT_FINDINGS if diags else EXIT_OK


def cmd_mincut(args):
    model = load_system(read_json(args.model))
    element = reduce_scope(model, _scope_arg(model, args.scope))
    mca = minimal_cut_sets(element, args.top)
    out = mca.to_dict()
    if args.prob:
        out["mission_hours"] = args.mission_hours
        out["probability"] = top_probability(mca, model_rates(model), args.mission_hours)
    sys.stdout.write(dumps_pretty(out))
    return EXIT_OK


def cmd_gentests(args):
    from .testgen import generate_test_cases, load_library

    model_doc = read_json(args.model)
    model = load_system(model_doc)
    bindings = read_json(args.bind)
    library = load_library(args.btm_dir)
    suite = None
    for text in args.scope or [None]:
        part = generate_test_cases(model_doc, _scope_arg(model, text), bindings, library, cross=args.cross)
        suite = part if suite is None else suite.merged(part)
    write_json_atomic(args.output, suite.to_dict())
    diag("info", "suite written", path=str(args.output), cases=len(suite.cases), suite_id=suite.suite_id)
    return EXIT_OK


def _params(pairs):
    out = {}
    for p in pairs or ():
        key, sep, value = p.partition("=")
        if not sep or not key:
            raise UsageError(f"--param expects key=value, got {p!r}")
        out[key] = value
    return out


def cmd_simulate(args):
    from .btm import load_btm
    from .sim import SimulationConfig, build_simulation
    from .testgen import default_t_start

    config = SimulationConfig.from_dict(read_json(args.config))
    sim = build_simulation(config)
    params = {"t_start": str(default_t_start(config.stop_time))}
    params.update(_params(args.param))
    for i, path in enumerate(args.btm or ()):
        sim.add_btm(load_btm(read_json(path), params, name=f"{Path(path).name.split('.')[0]}#{i}"))
    trace = sim.run_until(config.stop_time)
    if args.trace:
        write_atomic(args.trace, trace.to_jsonl())
        diag("info", "trace written", path=str(args.trace), records=len(trace), digest=trace.digest())
    else:
        sys.stdout.write(trace.to_jsonl())
    return EXIT_OK


def cmd_verify(args):
    from .sim import SimulationConfig
    from .verifier import ReferenceCache, has_findings, load_suite, verify

    config = SimulationConfig.from_dict(read_json(args.config))
    suite = load_suite(read_json(args.suite))
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cache = ReferenceCache.from_env()
    report = verify(suite, config, jobs=args.jobs, cache=cache)
    if args.timestamp:
        report["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    write_json_atomic(args.output, report)
    s = report["summary"]
    diag("info", "report written", path=str(args.output), **s)
    return EXIT_FINDINGS if has_findings(report) else EXIT_OK


def cmd_report(args):
    from .verifier import render_text

    report = read_json(args.report)
    if not isinstance(report, dict) or "verdicts" not in report or "summary" not in report:
        raise InputError(f"{args.report}: not a verification report")
    if args.format == "json":
        sys.stdout.write(dumps_pretty(report))
    else:
        sys.stdout.write(render_text(report))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="cftv", description="Verify component fault trees by error effect simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check a model's structural invariants")
    s.add_argument("model")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("mincut", help="minimal cut sets of an output failure mode")
    s.add_argument("model")
    s.add_argument("--top", required=True, help="qualified OFM, e.g. HMI.sl_late")
    s.add_argument("--scope", help="comma-separated component ids (default: whole system)")
    s.add_argument("--prob", action="store_true", help="also compute the top-event probability")
    s.add_argument("--mission-hours", type=float, default=1.0)
    s.set_defaults(func=cmd_mincut)

    s = sub.add_parser("gentests", help="generate a test suite from the minimal cut sets")
    s.add_argument("model")
    s.add_argument("--scope", action="append", help="comma-separated component ids; repeat for several scopes")
    s.add_argument("--bind", required=True, help="binding map (.bind.json)")
    s.add_argument("--btm-dir", required=True, help="directory of .btm.json templates")
    s.add_argument("--cross", action="store_true", help="monitor every scope OFM for unmodeled paths")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_gentests)

    s = sub.add_parser("simulate", help="run one simulation and write its trace")
    s.add_argument("config")
    s.add_argument("--btm", action="append", help="BTM document to attach; repeatable")
    s.add_argument("--param", action="append", metavar="KEY=VALUE", help="template placeholder value")
    s.add_argument("--trace", help="output .trace.jsonl (default: stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", help="run a suite against the simulation")
    s.add_argument("config")
    s.add_argument("suite")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--timestamp", action="store_true", help="add a generated_at field to the report")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="render a verification report")
    s.add_argument("report")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        diag("error", str(exc), kind="usage")
        return EXIT_INPUT
    except (CftvError, OSError) as exc:
        # runtime simulation faults still point at bad inputs (models, BTMs, configs)
        diag("error", str(exc), kind=type(exc).__name__)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except Exception as exc:  # noqa: BLE001
        diag("error", f"internal error: {exc}", kind=type(exc).__name__)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
