"""Command-line interface.

Exit codes: 0 success, 1 allocation failed verification, 2 usage or
configuration error, 3 solver non-convergence, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import harness, market
from .learning import VarianceMode
from .problem import (
    SYNTHETIC_B,
    SYNTHETIC_K,
    ProblemInstance,
    Scenario,
    ScenarioSpec,
    derive_truth,
    generate_synthetic,
    load_instance,
    save_instance,
)
from .rates import WeightVariant
from .samplers import ALL_KINDS, RunConfig, SamplerKind
from .static_oracle import NonConvergence, check_optimality, solve_balance

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _out_path(out: str | None, default_name: str) -> str | None:
    if out is None:
        return None
    if out.endswith(os.sep) or os.path.isdir(out):
        os.makedirs(out, exist_ok=True)
        return os.path.join(out, default_name)
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return out


def _echo_config(args) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)


def _parse_kinds(text: str) -> list[SamplerKind]:
    if text.strip().lower() == "all":
        return list(ALL_KINDS)
    try:
        return [SamplerKind.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run_config(args, k: int, B: int) -> RunConfig:
    try:
        mode = VarianceMode.parse(args.variance_mode)
        grid = None
        if args.checkpoints:
            grid = tuple(int(x) for x in args.checkpoints.split(","))
        cfg = RunConfig(n0=args.n0, N=args.budget, batch_size=args.batch, variance_mode=mode,
                        checkpoint_grid=grid, seed=args.seed)
        cfg.checkpoints(k, B)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _write_alloc(alpha: np.ndarray, dest) -> None:
    if hasattr(dest, "write"):
        w = csv.writer(dest)
        for row in alpha:
            w.writerow([repr(float(x)) for x in row])
        return
    with open(dest, "w", newline="") as fh:
        _write_alloc(alpha, fh)


def _read_alloc(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    return np.array([[float(x) for x in r] for r in rows])


def _print_report(report) -> None:
    print(f"global_balance={report.global_balance!r}")
    print(f"pairwise_balance={report.pairwise_balance!r}")
    print(f"adversarial_mass={report.adversarial_mass!r}")
    print(f"objective={report.objective!r}")


# --- commands -------------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        spec = ScenarioSpec(Scenario.parse(args.scenario), args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inst = generate_synthetic(spec)
    path = _out_path(args.out, f"{spec.name.value}_{args.seed}.json")
    if path is None:
        raise UsageError("--out is required")
    save_instance(inst, path)
    truth = derive_truth(inst)
    print(f"wrote {path} (k={inst.k}, B={inst.B}, mpb={truth.mpb + 1})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        scenario = Scenario.parse(args.scenario)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    kinds = _parse_kinds(args.samplers)
    if args.macros < 1:
        raise UsageError("--macros must be at least 1")
    cfg = _run_config(args, SYNTHETIC_K, SYNTHETIC_B)
    table = harness.macro_experiment(ScenarioSpec(scenario, args.seed), kinds, args.macros, cfg,
                                     workers=args.workers, master_seed=args.seed)
    path = _out_path(args.out, f"metrics_{scenario.value}.csv")
    if path is None:
        _write_table(table, sys.stdout)
    else:
        harness.emit_csv(table, path)
        print(f"wrote {path} ({len(table.rows)} rows)")
    return EXIT_OK


def _write_table(table, fh) -> None:
    w = csv.writer(fh)
    w.writerow(harness.CSV_COLUMNS)
    for row in table.rows:
        w.writerow([harness._fmt(v) for v in row.fields()])


def _load_instance(path) -> ProblemInstance:
    try:
        return load_instance(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise OSError(f"cannot read instance {path!r}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"invalid instance {path!r}: {exc}") from None


def cmd_solve_alloc(args) -> int:
    inst = _load_instance(args.instance)
    variant = WeightVariant.parse(args.variant)
    path = _out_path(args.out, f"alloc_{variant.name.lower()}.csv")
    try:
        alpha, report = solve_balance(inst, variant, method=args.method, tol=args.tol)
    except NonConvergence as exc:
        if path is not None:
            _write_alloc(exc.alloc, path)
        _print_report(exc.report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if path is None:
        _write_alloc(alpha, sys.stdout)
    else:
        _write_alloc(alpha, path)
        print(f"wrote {path}")
    _print_report(report)
    return EXIT_OK


def cmd_verify_alloc(args) -> int:
    inst = _load_instance(args.instance)
    try:
        alpha = _read_alloc(args.alloc)
    except OSError as exc:
        raise OSError(f"cannot read allocation {args.alloc!r}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"invalid allocation {args.alloc!r}: {exc}") from None
    try:
        report = check_optimality(alpha, inst, WeightVariant.parse(args.variant))
    except ValueError as exc:
        raise UsageError(f"invalid allocation {args.alloc!r}: {exc}") from None
    _print_report(report)
    ok = report.ok(args.tol)
    print("verdict=" + ("pass" if ok else "fail"))
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_market(args) -> int:
    if args.table:
        means = market.load_table_means()
        _print_market(means, args)
        return EXIT_OK
    if args.seed is None:
        raise UsageError("--seed is required unless --table is given")
    try:
        scenarios = market.scenario_file_or_seed(args.scenarios, args.seed, args.B, args.consumers)
    except OSError as exc:
        raise OSError(f"cannot read utility scenarios {args.scenarios!r}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.save_scenarios:
        market.save_scenarios(scenarios, args.save_scenarios)
    sim = market.MarketSimulator(market.benchmark_portfolios(), scenarios)
    pilot_rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1 << 20,)))
    means = sim.mean_sales(args.reps, pilot_rng)
    _print_market(means, args)
    if args.macros:
        kinds = _parse_kinds(args.samplers)
        cfg = _run_config(args, sim.k, sim.B)
        problem = market.MarketProblem(sim)
        inst = ProblemInstance(problem.probs, -means.T, np.ones((sim.k, sim.B)))
        table = harness.simulator_experiment(problem, derive_truth(inst), kinds, args.macros, cfg, "market",
                                             workers=args.workers, master_seed=args.seed)
        path = _out_path(args.out, "metrics_market.csv")
        if path is None:
            _write_table(table, sys.stdout)
        else:
            harness.emit_csv(table, path)
            print(f"wrote {path} ({len(table.rows)} rows)")
    return EXIT_OK


def _print_market(means, args) -> None:
    pref = market.preference_from_means(means)
    print("portfolio,preference,mean_sales")
    avg = means.mean(axis=0)
    for i in range(means.shape[1]):
        print(f"{i + 1},{float(pref.pref[i])!r},{float(avg[i])!r}")
    print(f"mpb={pref.mpb + 1} average_best={market.average_best(means) + 1} "
          f"robust_best={market.robust_best(means) + 1}")
    if pref.tied_rows:
        print(f"warning: tied rows {[b + 1 for b in pref.tied_rows]}", file=sys.stderr)
    if getattr(args, "means_out", None):
        with open(args.means_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter"] + [f"portfolio_{i + 1}" for i in range(means.shape[1])])
            for b, row in enumerate(means):
                w.writerow([b + 1] + [repr(float(x)) for x in row])


def cmd_report(args) -> int:
    try:
        rows = harness.read_csv(args.metrics)
    except OSError as exc:
        raise OSError(f"cannot read metrics {args.metrics!r}: {exc}") from exc
    col = {"pfs": "log10_pfs", "fnr": "log10_fnr", "acc": "log10_one_minus_acc"}[args.metric]
    samplers = list(dict.fromkeys(r["sampler"] for r in rows))
    budgets = sorted({int(r["budget"]) for r in rows})
    lookup = {(r["sampler"], int(r["budget"])): r[col] for r in rows}
    out = sys.stdout if args.out is None else open(_out_path(args.out, f"report_{args.metric}.dat"), "w")
    try:
        out.write("# budget " + " ".join(samplers) + "\n")
        for n in budgets:
            vals = [lookup.get((s, n), "nan") for s in samplers]
            out.write(f"{n} " + " ".join(vals) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_run_flags(p, n0, batch, mode, budget):
    p.add_argument("--samplers", default="all", help="comma list of ea,cocba,alg1,alg2,alg3,alg4 or 'all'")
    p.add_argument("--macros", type=int, default=10)
    p.add_argument("--budget", type=int, default=budget)
    p.add_argument("--n0", type=int, default=n0)
    p.add_argument("--batch", type=int, default=batch)
    p.add_argument("--variance-mode", choices=("known", "ng"), default=mode)
    p.add_argument("--checkpoints", default=None, help="comma list of budgets (default: 20 log-spaced)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpb", description="Most probable best selection toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_required):
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("generate", help="write a synthetic scenario instance")
    p.add_argument("--scenario", required=True)
    common(p, True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="macro-replication experiment on a synthetic scenario")
    p.add_argument("--scenario", required=True)
    _add_run_flags(p, 5, 1, "known", 10_000)
    common(p, True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve-alloc", help="optimal static allocation for an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--variant", choices=("standard", "acc", "fn"), default="standard")
    p.add_argument("--method", choices=("kkt", "subgradient"), default="kkt")
    p.add_argument("--tol", type=float, default=1e-4)
    common(p, True)
    p.set_defaults(func=cmd_solve_alloc)

    p = sub.add_parser("verify-alloc", help="check balance conditions of an allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--alloc", required=True)
    p.add_argument("--variant", choices=("standard", "acc", "fn"), default="standard")
    p.add_argument("--tol", type=float, default=1e-3)
    common(p, False)
    p.set_defaults(func=cmd_verify_alloc)

    p = sub.add_parser("market", help="portfolio market benchmark")
    p.add_argument("--scenarios", default=None, help="utility scenario file")
    p.add_argument("--table", action="store_true", help="use the shipped mean-sales table")
    p.add_argument("--B", type=int, default=50)
    p.add_argument("--consumers", type=int, default=market.CONSUMERS)
    p.add_argument("--reps", type=int, default=200, help="replications per pair for mean sales")
    p.add_argument("--save-scenarios", default=None)
    p.add_argument("--means-out", default=None)
    _add_run_flags(p, 10, 10, "ng", 5_000)
    p.set_defaults(macros=0)
    common(p, False)
    p.set_defaults(func=cmd_market)

    p = sub.add_parser("report", help="gnuplot-ready columns from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--metric", choices=("pfs", "fnr", "acc"), default="pfs")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    _echo_config(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
