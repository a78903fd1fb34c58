"""Command-line entry points: gen, train, solve, bench, sweep, report.

Exit codes: 0 success, 2 specification/usage error, 3 missing artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .bench import BenchSpec, MissingArtifactError, SpecError, report_table, run_bench, sweep
from .core import check_feasible
from .expert import HgsConfig
from .io import ParseError, derive_seed, generate_uniform, write_vrplib
from .neural import Dims
from .training import TrainConfig, train

EXIT_SPEC = 2
EXIT_MISSING = 3


def _cmd_gen(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    for i in range(args.count):
        instance = generate_uniform(args.n, derive_seed(args.seed, i))
        path = os.path.join(args.out_dir, f"{instance.name}.vrp")
        with open(path, "w") as fh:
            fh.write(write_vrplib(instance))
    print(f"wrote {args.count} instances to {args.out_dir}")
    return 0


def _cmd_train(args) -> int:
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            print(f"config not found: {args.config}", file=sys.stderr)
            return EXIT_MISSING
        if "dims" in raw:
            raw["dims"] = Dims(**raw["dims"])
        if "expert_hgs" in raw:
            raw["expert_hgs"] = HgsConfig(**raw["expert_hgs"])
        cfg = TrainConfig(**raw)
    else:
        cfg = TrainConfig()
    overrides = {}
    for name in ("n", "epochs", "instances_per_epoch", "seed", "out_dir"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = replace(cfg, **overrides)
    state = train(cfg, resume_from=args.resume)
    print(f"trained {state.epoch} epochs; checkpoints in {cfg.out_dir}")
    return 0


def _cmd_solve(args) -> int:
    from .io import load_instance

    if args.instance:
        try:
            instance = load_instance(args.instance)
        except FileNotFoundError:
            print(f"instance not found: {args.instance}", file=sys.stderr)
            return EXIT_MISSING
    else:
        instance = generate_uniform(args.n, args.seed)
    spec = BenchSpec(
        methods=(args.method,),
        synthetic=None,
        files=(),
        checkpoint=args.checkpoint,
        k_nn=args.k_nn,
        hgs=HgsConfig(
            max_iterations=args.iterations,
            time_budget_s=args.time_budget,
            seed=args.seed,
        ),
        seed=args.seed,
    )
    from .bench import _solve

    policy = None
    if args.method.startswith("neural"):
        from .neural import load_policy

        if not args.checkpoint:
            print("neural methods need --checkpoint", file=sys.stderr)
            return EXIT_MISSING
        try:
            policy = load_policy(args.checkpoint)
        except FileNotFoundError:
            print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
            return EXIT_MISSING
    solution = _solve(args.method, spec, instance, args.seed, policy)
    report = check_feasible(instance, solution)
    print(f"instance: {instance.name or '(unnamed)'}")
    print(f"objective: {solution.total_cost:.6f}")
    print(f"feasible: {report.feasible}")
    for i, route in enumerate(solution.routes):
        print(f"route {i}: {' '.join(str(c) for c in route.nodes)} (load {route.load})")
    return 0


def _cmd_bench(args) -> int:
    spec = BenchSpec.from_json(args.spec)
    if args.out:
        spec = replace(spec, out_csv=args.out)
    run_bench(spec)
    print(f"wrote {spec.out_csv}")
    return 0


def _cmd_sweep(args) -> int:
    spec = BenchSpec.from_json(args.spec)
    values = [float(v) if "." in v else int(v) for v in args.values.split(",")]
    sweep(spec, args.param, values, out_csv=args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    for path in args.csvs:
        if not os.path.exists(path):
            print(f"csv not found: {path}", file=sys.stderr)
            return EXIT_MISSING
    print(report_table(args.csvs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="routeflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic instances")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="instances")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="run adversarial training")
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--n", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--instances-per-epoch", type=int, dest="instances_per_epoch")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--resume", help="training checkpoint to continue from")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("solve", help="solve one instance with one method")
    p.add_argument("--instance", help="path to a .vrp/.tsp file")
    p.add_argument("--n", type=int, default=20, help="synthetic size when no file given")
    p.add_argument("--method", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-nn", type=int, dest="k_nn")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--time-budget", type=float, dest="time_budget")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark specification")
    p.add_argument("--spec", required=True, help="JSON file with BenchSpec fields")
    p.add_argument("--out", help="override the output CSV path")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("sweep", help="sweep one parameter over a benchmark")
    p.add_argument("--spec", required=True)
    p.add_argument("--param", required=True, choices=("nhat", "k_nn", "m"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("report", help="merge result CSVs into a text table")
    p.add_argument("csvs", nargs="+")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (SpecError, ParseError, ValueError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
