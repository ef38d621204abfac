"""Command-line harness: ``pmean {run,oracle,adversary,bench,validate}``.

Exit codes: 0 success, 1 invariant failure, 2 I/O or parse error, 3 scaling
violation. Set ``PMEAN_LOG=error|info|debug`` for log output on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import Optional, Sequence

from pmean import pipeline, suites
from pmean.errors import (
    ConfigurationError,
    DomainError,
    GridTooLarge,
    InvariantViolation,
    PMeanError,
    ScalingError,
    StructuralError,
)
from pmean.model import load_instance, save_instance
from pmean.oracle import solve_concave, solve_grid
from pmean.pipeline import ADAPTIVE_KINDS, RANDOM_KINDS, ExperimentConfig
from pmean.welfare import as_exponent

log = logging.getLogger("pmean")

EXIT_OK, EXIT_INVARIANT, EXIT_IO, EXIT_SCALING = 0, 1, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("PMEAN_LOG", "error").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _add_common(sp: argparse.ArgumentParser, *, p_help: str = "welfare exponent (number, a/b, nsw, egal, -inf, util)") -> None:
    sp.add_argument("--instance", metavar="PATH", help="instance file (.json or .csv)")
    sp.add_argument("--generator", metavar="KIND", help=f"instance generator: {', '.join(RANDOM_KINDS + ADAPTIVE_KINDS)}")
    sp.add_argument("--n", type=int, default=8, help="number of agents for generators (default 8)")
    sp.add_argument("--t", type=int, default=64, help="number of goods for random generators (default 64)")
    sp.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    sp.add_argument("--p", default="0", help=p_help)
    sp.add_argument("--threshold", choices=("table", "universal", "manual"), default="table")
    sp.add_argument("--phi", type=float, help="threshold for --threshold manual")
    sp.add_argument("--split", choices=("minimal", "paper"), default="minimal", help="value-cap splitting mode")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    sp.add_argument("--algorithm", choices=("alg", "greedy", "uniform"), default="alg")
    sp.add_argument("--budget", type=int, default=2000, help="oracle iteration budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmean", description="Online p-mean welfare experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the online allocator on one instance")
    _add_common(run)
    run.add_argument("--diagnostics", choices=("off", "lemmas", "full"), default="off")
    run.add_argument("--no-oracle", action="store_true", help="skip the offline benchmark")

    oracle = sub.add_parser("oracle", help="solve the offline problem")
    _add_common(oracle)
    oracle.add_argument("--method", choices=("concave", "grid"), default="concave")
    oracle.add_argument("--step", type=float, default=0.125, help="grid step for --method grid")

    adv = sub.add_parser("adversary", help="play an adaptive adversary against an online allocator")
    _add_common(adv)
    adv.add_argument("--export", metavar="PATH", help="write the emitted instance to this file")
    adv.add_argument("--no-oracle", action="store_true", help="compare against the explicit construction only")

    bench = sub.add_parser("bench", help="competitive ratios over a grid of exponents")
    _add_common(bench, p_help="comma-separated exponents, e.g. '-inf,-1,0,1' (empty for none)")
    bench.set_defaults(p="-inf,-2,-1,-0.5,-0.2,0,0.5,1")

    val = sub.add_parser("validate", help="run the property suites")
    val.add_argument("--instance", metavar="PATH", help="run the online suite on this instance only")
    val.add_argument("--n", type=int, help="restrict generated instances to this agent count")
    val.add_argument("--seed", type=int, help="use this single seed instead of 0..9")
    val.add_argument("--phi", type=float, help="threshold for the counting bounds (default n/4)")
    val.add_argument("--format", choices=("json", "csv"), default="json")
    val.add_argument("--out", metavar="PATH")
    return parser


def _config(args, **extra) -> ExperimentConfig:
    if getattr(args, "instance", None) and getattr(args, "generator", None):
        raise ConfigurationError("give either --instance or --generator, not both")
    if args.threshold == "manual" and args.phi is None:
        raise ConfigurationError("--threshold manual needs --phi")
    if args.phi is not None and args.threshold != "manual":
        raise ConfigurationError("--phi is only used with --threshold manual")
    source = {"instance": args.instance} if args.instance else {
        "generator": args.generator or "random_dirichlet", "n": args.n, "t": args.t,
    }
    return ExperimentConfig(
        p=args.p, threshold=args.threshold, phi=args.phi, split=args.split,
        algorithm=args.algorithm, budget=args.budget,
        seed=None if args.instance else args.seed, source=source, **extra,
    )


def _instance(args):
    if args.instance:
        return load_instance(args.instance)
    kind = args.generator or "random_dirichlet"
    if kind in ADAPTIVE_KINDS:
        raise ConfigurationError(f"{kind} is adaptive; use the 'adversary' subcommand")
    return pipeline.generate(kind, args.n, args.t, args.seed)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=pipeline._jsonable) + "\n"


def cmd_run(args) -> int:
    config = _config(args, diagnostics=args.diagnostics, oracle=not args.no_oracle)
    report = pipeline.run_pipeline(_instance(args), config)
    if args.format == "csv":
        row = {k: report.config[k] for k in ("algorithm", "n", "T", "T_capped", "p", "phi", "threshold", "split", "seed")}
        row.update(online_welfare=report.online_welfare, oracle_welfare=report.oracle_welfare, ratio=report.ratio)
        _emit(_csv([row]), args.out)
    else:
        _emit(pipeline.report_json(report, full=args.diagnostics == "full") + "\n", args.out)
    bad = pipeline.has_violation(report)
    if bad:
        log.error("invariant violated: %s", bad)
        print(f"invariant violated: {bad}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = _config(args)
    inst = _instance(args)
    pipeline.require_scaled(inst)
    p = as_exponent(args.p)
    res = solve_grid(inst, p, args.step) if args.method == "grid" else solve_concave(inst, p, args.budget)
    out = {"config": {"p": str(p), "method": res.method, "budget": args.budget, "step": args.step if args.method == "grid" else None,
                      "n": inst.n, "T": inst.T, "seed": config.seed, "source": config.source},
           **res.to_dict()}
    if args.format == "csv":
        _emit(_csv([{"p": str(p), **res.to_dict()}]), args.out)
    else:
        out["allocation"] = res.allocation.fractions.tolist()
        _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_adversary(args) -> int:
    kind = args.generator or "suboptimality_4agent"
    config = _config(args, oracle=not args.no_oracle)
    report, transcript = pipeline.adversary_report(kind, args.n, config, T=args.t)
    if args.export:
        save_instance(transcript.instance(), args.export)
    if args.format == "csv":
        row = {k: report["config"][k] for k in ("kind", "n", "p", "algorithm", "phi")}
        row.update({k: report[k] for k in ("rounds", "sub_goods", "online_welfare", "oracle_welfare", "ratio")})
        _emit(_csv([row]), args.out)
    else:
        _emit(_dumps(report), args.out)
    if not report["scaling_ok"]:
        print("invariant violated: transcript_scaling", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_bench(args) -> int:
    grid = pipeline.parse_p_grid(args.p)
    config = _config(args)
    kind = args.generator or ("random_dirichlet" if not args.instance else None)
    if kind in ADAPTIVE_KINDS:
        rows = pipeline.bench_adversary(kind, args.n, grid, config)
    else:
        rows = pipeline.bench_instance(_instance(args), grid, config)
    table = [r.to_dict() for r in rows]
    if args.format == "csv":
        _emit(_csv(table), args.out)
    else:
        resolved = {k: v for k, v in asdict(config).items() if k not in ("p", "diagnostics", "oracle")}
        _emit(_dumps({"config": {**resolved, "p_grid": [r.p for r in rows]}, "rows": table}), args.out)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_INVARIANT


def cmd_validate(args) -> int:
    seeds = [args.seed] if args.seed is not None else list(range(10))
    sizes = [args.n] if args.n else [4, 8, 16]
    instances = None
    if args.instance:
        inst = load_instance(args.instance)
        pipeline.require_scaled(inst)
        instances = [inst]
    results = suites.run_all(seeds, sizes, instances, args.phi)
    rows = [r.to_dict() for r in results]
    if args.format == "csv":
        _emit(_csv(rows), args.out)
    else:
        cfg = {"seeds": seeds, "sizes": sizes, "instance": args.instance, "phi": args.phi}
        _emit(_dumps({"config": cfg, "results": rows}), args.out)
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"invariant violated: {r.suite}.{r.invariant}: {r.detail}", file=sys.stderr)
    return EXIT_INVARIANT if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "adversary": cmd_adversary, "bench": cmd_bench, "validate": cmd_validate}


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    # "--p -1" or "--p -inf,0" would otherwise be read as an unknown option
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--p", "--phi"):
            val = next(it, None)
            out.append(tok if val is None else f"{tok}={val}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(_join_negative_values(argv))
    try:
        return COMMANDS[args.command](args)
    except ScalingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALING
    except (InvariantViolation, AssertionError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, StructuralError, DomainError, ConfigurationError, GridTooLarge, PMeanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
