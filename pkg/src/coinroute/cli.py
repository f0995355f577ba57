"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

from . import analysis
from .engine import SimConfig, TraceWriter
from .harness import (DEFAULT_STEERING, ExperimentReport, braess_check, default_metric_mode, load_configs,
                      parse_regime, run_experiment, steering_sweep, write_report)
from .routing import POLICIES, PolicyConfig, Simulation, write_decision_log
from .topology import FAMILIES, VARIANTS, BenchmarkId, ConfigurationError, build_benchmark, linear, loads_text


def _emit(report: ExperimentReport, output: str | None, out) -> None:
    text = write_report(report, output)
    if not output:
        out.write(text)
    for label, msg in report.failures:
        print(f"FAILED {label}: {msg}", file=sys.stderr)


def cmd_simulate(args, out) -> int:
    code = 0
    for cfg in load_configs(args.config):
        report = run_experiment(cfg)
        _emit(report, args.output or cfg.output, out)
        code |= bool(report.failures)
    return code


def cmd_braess(args, out) -> int:
    code = 0
    for cfg in load_configs(args.config):
        report = run_experiment(cfg)
        if args.output or cfg.output:
            write_report(report, args.output or cfg.output)
        out.write(braess_check(report).to_text() + "\n")
        code |= bool(report.failures)
    return code


def cmd_sweep(args, out) -> int:
    values = [float(v) for v in args.steering.split(",") if v.strip()]
    code = 0
    for cfg in load_configs(args.config):
        report = steering_sweep(cfg, values)
        _emit(report, args.output or cfg.output, out)
        code |= bool(report.failures)
    return code


def cmd_run(args, out) -> int:
    """One seeded run with optional per-wave trace and decision log."""
    if args.network:
        with open(args.network) as fh:
            spec = loads_text(fh.read())
        family = None
    else:
        spec = build_benchmark(BenchmarkId(args.family, args.variant), parse_regime(args.loads))
        family = args.family
    mode = args.metric_mode or default_metric_mode(family or "")
    sim = SimConfig(args.window, args.warmup, args.measure, args.seed, mode)
    pol = PolicyConfig(args.policy, args.steering, args.bootstrap, args.seed)
    trace_fh = open(args.trace, "w", newline="") if args.trace else None
    try:
        result = Simulation(spec, sim, pol, trace=TraceWriter(trace_fh) if trace_fh else None).run()
    finally:
        if trace_fh:
            trace_fh.close()
    if args.decision_log:
        with open(args.decision_log, "w", newline="") as fh:
            write_decision_log(result.log, fh)
    out.write(f"{spec.name} {args.policy} seed={args.seed} mode={mode} "
              f"mean={result.cell.mean:.4f} spread={result.cell.spread:.4f}\n")
    return 0


def cmd_analyze(args, out) -> int:
    if args.what == "lb":
        p = analysis.footnote_problem(args.window)
        k_lb = analysis.lb_threshold_solve(p)
        b = analysis.lb_bounds(p, k_lb)
        opt = analysis.lb_optimal_k(p)
        up = analysis.lb_bounds(p, opt.k).upper2
        out.write(f"C_A(x) = x^2, C_B(x) = x, W = {p.W}\n")
        out.write(f"k_LB/W         = {k_lb / p.W:.6f}\n")
        out.write(f"lb_lower(k_LB) = {b.lb_lower:.6f}\n")
        out.write(f"k'/W           = {opt.k / p.W:.6f} (closed form {opt.closed_form:.6f})\n")
        out.write(f"upper2(k')     = {up:.6f}\n")
        verdict = "holds" if b.lb_lower > up else "FAILS"
        out.write(f"certificate lb_lower(k_LB) > upper2(k'): {b.lb_lower:.6f} > {up:.6f} {verdict}\n")
        return 0 if b.lb_lower > up else 1
    if args.what == "hex-static":
        for a in ((1, 0), (3, 3), (0, 0, 1), (2, 2, 2)):
            costs = analysis.hex_static_cost(a)
            out.write(f"{'NetA' if len(a) == 2 else 'NetB'} {a}: " + " ".join(f"{c:g}" for c in costs) + "\n")
        return 0
    if args.what == "two-router":
        from .topology import CostFunction
        o = analysis.two_router_game(CostFunction(c3=1.0), linear(2))
        out.write("shared = x^3, alternative = 2x\n")
        out.write(f"alone on shared link: {o.alone:g}\n")
        out.write(f"both on shared link: {o.both_shared_each:g} each ({o.both_shared_total:g} total)\n")
        out.write(f"both on alternatives: {o.both_alt_each:g} each ({o.both_alt_total:g} total)\n")
        return 0
    raise ConfigurationError(f"unknown analysis {args.what!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coinroute", description="Wave-based routing simulator and analyses.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("simulate", cmd_simulate, "run every experiment in a config file"),
                               ("braess", cmd_braess, "run experiments and summarise the paradox")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("-o", "--output", help="CSV path (default: config 'output' key, else stdout)")
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", help="MB runs over a range of steering values")
    p.add_argument("config")
    p.add_argument("--steering", default=",".join(str(v) for v in DEFAULT_STEERING))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="a single seeded run with optional trace and decision log")
    p.add_argument("--family", choices=FAMILIES, default="Hex")
    p.add_argument("--variant", choices=VARIANTS, default="NetA")
    p.add_argument("--loads", default="1", help="per-source packets, e.g. 2,2")
    p.add_argument("--network", help="network text file (overrides family/variant/loads)")
    p.add_argument("--policy", choices=POLICIES, default="ISPA")
    p.add_argument("--steering", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--warmup", type=int, default=300)
    p.add_argument("--measure", type=int, default=800)
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--metric-mode")
    p.add_argument("--trace", help="per-wave trace CSV path")
    p.add_argument("--decision-log", help="decision log CSV path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="closed-form analyses")
    p.add_argument("what", choices=("lb", "hex-static", "two-router"))
    p.add_argument("--window", type=int, default=1000, help="window for 'lb'")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None, out=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
