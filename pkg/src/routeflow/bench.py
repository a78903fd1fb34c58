"""Benchmark harness: objective/gap/latency measurement over instance sets,
parameter sweeps, and text report tables."""

from __future__ import annotations

import csv
import glob as globlib
import json
import re
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Instance, Solution, build_distance_matrix, exact_solve_small, knn_sparsify
from .expert import HgsConfig, expert_refine, hgs_solve, initial_solution
from .io import CSV_HEADER, RunRecord, derive_seed, generate_batch, load_instance
from .neural import GREEDY, SAMPLE, batch_rollouts, best_of, default_knn, encode, load_policy, rollout


class SpecError(ValueError):
    """The benchmark specification is inconsistent or incomplete."""


class MissingArtifactError(FileNotFoundError):
    """A required file (checkpoint, instance) does not exist."""


@dataclass(frozen=True)
class BenchSpec:
    methods: tuple[str, ...]
    synthetic: dict | None = None  # {"n":, "count":, "seed":}
    files: tuple[str, ...] = ()
    reference: str | None = None  # method name whose objective anchors gaps
    ref_table: dict | None = None  # instance name -> fixed reference objective
    checkpoint: str | None = None
    k_nn: int | None = None
    n_rollouts: int = 100  # best-of count when the method omits one
    hgs: HgsConfig = field(default_factory=lambda: HgsConfig(max_iterations=200))
    m: int = 200
    seed: int = 0
    out_csv: str = "results.csv"

    def __post_init__(self):
        if not self.methods:
            raise SpecError("at least one method is required")
        if self.synthetic is None and not self.files:
            raise SpecError("an instance source (synthetic or files) is required")
        if self.reference is not None and self.reference not in self.methods:
            raise SpecError(f"reference method {self.reference!r} is not in methods")
        for m in self.methods:
            _parse_method(m)

    @classmethod
    def from_json(cls, path: str) -> "BenchSpec":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise MissingArtifactError(path) from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed spec file {path}: {exc}") from None
        kwargs = dict(raw)
        if "methods" in kwargs:
            kwargs["methods"] = tuple(kwargs["methods"])
        if "files" in kwargs:
            kwargs["files"] = tuple(kwargs["files"])
        if "hgs" in kwargs:
            kwargs["hgs"] = HgsConfig(**kwargs["hgs"])
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SpecError(str(exc)) from None


_METHOD_RE = re.compile(
    r"^(neural-greedy|hgs|exact|neural-best-of[-(](\d+)\)?|expert-refine[-(](\d+)\)?)$"
)


def _parse_method(name: str) -> tuple[str, int | None]:
    m = _METHOD_RE.match(name)
    if not m:
        raise SpecError(f"unknown method {name!r}")
    if name.startswith("neural-best-of"):
        return "neural-best-of", int(m.group(2))
    if name.startswith("expert-refine"):
        return "expert-refine", int(m.group(3))
    return name, None


def gap_percent(obj: float, ref: float) -> float:
    """Signed percentage excess over a reference objective."""
    if ref <= 0:
        raise ValueError(f"reference objective must be positive, got {ref}")
    return 100.0 * (obj - ref) / ref


def _load_instances(spec: BenchSpec) -> list[Instance]:
    instances: list[Instance] = []
    if spec.synthetic is not None:
        src = spec.synthetic
        instances.extend(generate_batch(src["n"], src["count"], src.get("seed", spec.seed)))
    for pattern in spec.files:
        paths = sorted(globlib.glob(pattern))
        if not paths:
            raise MissingArtifactError(f"no instance files match {pattern!r}")
        for p in paths:
            instances.append(load_instance(p))
    return instances


def _solve(method: str, spec: BenchSpec, instance: Instance, seed: int, policy) -> Solution:
    """Run one method inside the timed section (matrix + sparsification
    included; file parsing already happened)."""
    kind, arg = _parse_method(method)
    if kind == "exact":
        return exact_solve_small(instance)
    if kind == "hgs":
        return hgs_solve(instance, cfg=replace(spec.hgs, seed=seed))
    if kind == "expert-refine":
        dm = build_distance_matrix(instance)
        start = initial_solution(instance, seed, dm)
        return expert_refine(instance, start, arg, replace(spec.hgs, seed=seed), dm)
    if policy is None:
        raise MissingArtifactError("neural method requires --checkpoint")
    dm = build_distance_matrix(instance)
    k = spec.k_nn if spec.k_nn is not None else default_knn(instance.n_nodes)
    graph = knn_sparsify(dm, k)
    ctx = encode(policy, instance, graph, dm, training=False)
    if kind == "neural-greedy":
        return rollout(policy, instance, ctx, GREEDY, seed).solution
    count = arg if arg is not None else spec.n_rollouts
    trajs = batch_rollouts(policy, instance, ctx, count, SAMPLE, seed)
    return best_of(trajs).solution


def run_bench(spec: BenchSpec, write_csv: bool = True) -> list[RunRecord]:
    """Objective, wall time, and gap per (instance, method), plus per-method
    aggregate rows under the pseudo-instance name ``(mean)``."""
    instances = _load_instances(spec)
    policy = None
    if any(m.startswith("neural") for m in spec.methods):
        if spec.checkpoint is None:
            raise MissingArtifactError("neural methods need a checkpoint path")
        try:
            policy = load_policy(spec.checkpoint)
        except FileNotFoundError:
            raise MissingArtifactError(spec.checkpoint) from None
    objectives: dict[tuple[str, str], float] = {}
    times: dict[tuple[str, str], float] = {}
    for idx, instance in enumerate(instances):
        seed = derive_seed(spec.seed, idx)
        for method in spec.methods:
            t0 = time.monotonic()
            solution = _solve(method, spec, instance, seed, policy)
            elapsed = time.monotonic() - t0
            objectives[(instance.name, method)] = solution.total_cost
            times[(instance.name, method)] = elapsed
    records = []
    for idx, instance in enumerate(instances):
        ref = _reference_for(spec, instance.name, objectives)
        for method in spec.methods:
            obj = objectives[(instance.name, method)]
            records.append(
                RunRecord(
                    instance=instance.name,
                    method=method,
                    obj=obj,
                    gap_pct=None if ref is None else gap_percent(obj, ref),
                    time_s=times[(instance.name, method)],
                    seed=derive_seed(spec.seed, idx),
                )
            )
    aggregates = _aggregate(records, spec.methods)
    if write_csv:
        _write_with_aggregates(records, aggregates, spec.out_csv)
    return records + aggregates


def _reference_for(spec: BenchSpec, name: str, objectives) -> float | None:
    if spec.ref_table is not None:
        value = spec.ref_table.get(name)
        return float(value) if value is not None else None
    if spec.reference is not None:
        return objectives[(name, spec.reference)]
    return None


def _aggregate(records: list[RunRecord], methods) -> list[RunRecord]:
    out = []
    for method in methods:
        rows = [r for r in records if r.method == method]
        gaps = [r.gap_pct for r in rows if r.gap_pct is not None]
        out.append(
            RunRecord(
                instance="(mean)",
                method=method,
                obj=float(np.mean([r.obj for r in rows])),
                gap_pct=float(np.mean(gaps)) if gaps else None,
                time_s=float(np.mean([r.time_s for r in rows])),
                seed=rows[0].seed if rows else 0,
            )
        )
    return out


def _write_with_aggregates(records, aggregates, path: str) -> None:
    rows = sorted(records, key=lambda r: (r.instance, r.method))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows + aggregates:
            gap = "" if r.gap_pct is None else repr(r.gap_pct)
            writer.writerow([r.instance, r.method, repr(r.obj), gap, repr(r.time_s), r.seed])


SWEEPABLE = ("nhat", "k_nn", "m")


def sweep(spec: BenchSpec, parameter: str, values, out_csv: str | None = None) -> list[dict]:
    """Repeat run_bench varying one parameter; emits long-format rows."""
    if parameter not in SWEEPABLE:
        raise SpecError(f"parameter must be one of {SWEEPABLE}, got {parameter!r}")
    rows = []
    for value in values:
        if parameter == "nhat":
            varied = replace(
                spec,
                n_rollouts=int(value),
                methods=tuple(
                    f"neural-best-of-{int(value)}" if m.startswith("neural-best-of") else m
                    for m in spec.methods
                ),
            )
        elif parameter == "k_nn":
            varied = replace(spec, k_nn=int(value))
        else:
            varied = replace(
                spec,
                m=int(value),
                methods=tuple(
                    f"expert-refine-{int(value)}" if m.startswith("expert-refine") else m
                    for m in spec.methods
                ),
            )
        for r in run_bench(varied, write_csv=False):
            rows.append(
                {
                    "param": parameter,
                    "value": value,
                    "instance": r.instance,
                    "method": r.method,
                    "obj": r.obj,
                    "gap_pct": r.gap_pct,
                    "time_s": r.time_s,
                    "seed": r.seed,
                }
            )
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["param", "value", "instance", "method", "obj", "gap_pct", "time_s", "seed"]
            )
            writer.writeheader()
            for row in rows:
                writer.writerow({**row, "gap_pct": "" if row["gap_pct"] is None else row["gap_pct"]})
    return rows


def report_table(csv_paths: list[str]) -> str:
    """Text grid of per-method aggregate Obj/Gap/Time, one column group per
    CSV (columns follow the given order); missing cells render as a dash."""
    columns = []
    cells: dict[tuple[str, str], tuple] = {}
    methods_order: list[str] = []
    for path in csv_paths:
        label = path.rsplit("/", 1)[-1].removesuffix(".csv")
        columns.append(label)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise SpecError(f"{path}: unexpected header {reader.fieldnames}")
            for row in reader:
                if row["instance"] != "(mean)":
                    continue
                method = row["method"]
                if method not in methods_order:
                    methods_order.append(method)
                gap = float(row["gap_pct"]) if row["gap_pct"] else None
                cells[(method, label)] = (float(row["obj"]), gap, float(row["time_s"]))
    header = ["method"] + [f"{c} Obj | Gap% | Time(s)" for c in columns]
    lines = []
    body = []
    for method in methods_order:
        row = [method]
        for label in columns:
            if (method, label) in cells:
                obj, gap, t = cells[(method, label)]
                gtxt = "-" if gap is None else f"{gap:.2f}"
                row.append(f"{obj:.6f} | {gtxt} | {t:.2f}")
            else:
                row.append("-")
        body.append(row)
    col_widths = [
        max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(w) for cell, w in zip(row, col_widths))
    lines.append(fmt(header))
    lines.append("  ".join("-" * w for w in col_widths))
    for row in body:
        lines.append(fmt(row))
    return "\n".join(lines)
