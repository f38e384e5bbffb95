"""Macro-replication experiments: PFS, FNR and 1-ACC across checkpoints."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .problem import SYNTHETIC_B, SYNTHETIC_K, ScenarioSpec, TruthSummary, derive_truth, generate_synthetic
from .samplers import RunConfig, RunTrace, SamplerKind, run, run_simulator

CSV_COLUMNS = (
    "scenario", "sampler", "budget", "macro_runs",
    "pfs", "pfs_se", "fnr_mean", "fnr_se", "one_minus_acc_mean", "one_minus_acc_se",
    "log10_pfs", "log10_fnr", "log10_one_minus_acc",
)

INSTANCE_STREAM = 0


def stream(master_seed: int, run_index: int, slot: int) -> np.random.Generator:
    """Independent generator for (macro run, slot); slot 0 builds the instance."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(run_index, slot)))


def sampler_slot(kind: SamplerKind) -> int:
    return 1 + int(kind)


@dataclass(frozen=True)
class RunClassification:
    fs: bool
    fnr: float
    acc: float
    acc_event: bool
    fn_event: bool


def classify(mpb_hat: int, tie: bool, fav_hat, truth: TruthSummary, probs) -> RunClassification:
    """Score one checkpoint against the truth.

    ``fav_hat`` is the boolean mask of parameters where the estimated MPB
    is conditionally optimal. A tie in the estimated MPB is a false selection.
    """
    fav_hat = np.asarray(fav_hat, dtype=bool)
    probs = np.asarray(probs, dtype=float)
    fav = truth.mpb_favorable
    p_fav = probs[fav].sum()
    fnr = float(probs[fav & ~fav_hat].sum() / p_fav)
    acc = float(probs[fav & fav_hat].sum() + probs[~fav & ~fav_hat].sum())
    fs = bool(tie) or int(mpb_hat) != truth.mpb
    return RunClassification(
        fs=fs,
        fnr=fnr,
        acc=acc,
        acc_event=not fs and bool(np.array_equal(fav, fav_hat)),
        fn_event=not fs and bool(np.all(fav_hat[fav])),
    )


def classify_trace(trace: RunTrace, truth: TruthSummary, probs) -> np.ndarray:
    """(C, 3) array of [fs, fnr, 1-acc] per checkpoint."""
    out = np.empty((len(trace.checkpoints), 3))
    for c in range(len(trace.checkpoints)):
        cl = classify(trace.mpb_hat[c], trace.tie[c], trace.fav_set_hat[c], truth, probs)
        out[c] = (float(cl.fs), cl.fnr, 1.0 - cl.acc)
    return out


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    sampler: str
    budget: int
    macro_runs: int
    pfs: float
    pfs_se: float
    fnr_mean: float
    fnr_se: float
    one_minus_acc_mean: float
    one_minus_acc_se: float

    @property
    def log10_pfs(self) -> float:
        return _log10(self.pfs)

    @property
    def log10_fnr(self) -> float:
        return _log10(self.fnr_mean)

    @property
    def log10_one_minus_acc(self) -> float:
        return _log10(self.one_minus_acc_mean)

    def fields(self) -> list:
        return [getattr(self, name) for name in CSV_COLUMNS]


def _log10(x: float) -> float:
    return -math.inf if x <= 0 else math.log10(x)


@dataclass
class MetricsTable:
    rows: list = field(default_factory=list)

    def select(self, sampler=None, budget=None) -> list:
        out = self.rows
        if sampler is not None:
            label = SamplerKind.parse(sampler).label
            out = [r for r in out if r.sampler == label]
        if budget is not None:
            out = [r for r in out if r.budget == budget]
        return out

    def final(self, sampler) -> MetricsRow:
        rows = self.select(sampler)
        return max(rows, key=lambda r: r.budget)


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return repr(x)
    return str(x)


def emit_csv(table: MetricsTable, path) -> None:
    """Write the table; overwrites any existing file."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in table.rows:
                w.writerow([_fmt(v) for v in row.fields()])
    except OSError as exc:
        raise OSError(f"cannot write metrics to {os.fspath(path)!r}: {exc}") from exc


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- experiment engine ----------------------------------------------------------


class MacroRunError(RuntimeError):
    def __init__(self, run_index, kind, cause):
        super().__init__(f"macro run {run_index}, sampler {kind}: {cause!r}")
        self.run_index = run_index
        self.kind = kind


def _macro_chunk(args):
    spec, kinds, config, master_seed, run_indices = args
    out = []
    for r in run_indices:
        instance = generate_synthetic(spec, stream(master_seed, r, INSTANCE_STREAM))
        truth = derive_truth(instance)
        per_kind = []
        for kind in kinds:
            try:
                trace = run(kind, instance, config, stream(master_seed, r, sampler_slot(kind)))
                per_kind.append(classify_trace(trace, truth, instance.probs))
            except Exception as exc:
                raise MacroRunError(r, SamplerKind(kind).label, exc) from exc
        out.append(np.stack(per_kind))
    return out


def macro_experiment(spec, kinds, R: int, config: RunConfig, workers: int = 1,
                     master_seed: int | None = None) -> MetricsTable:
    """Regenerate the scenario for every macro run and score every sampler on it.

    Runs are seeded by their index, so the table does not depend on
    ``workers``. ``master_seed`` defaults to ``config.seed``.
    """
    if R < 1:
        raise ValueError("need at least one macro run")
    if not isinstance(spec, ScenarioSpec):
        spec = ScenarioSpec(spec)
    kinds = [SamplerKind.parse(k) for k in kinds]
    seed = config.seed if master_seed is None else master_seed
    ckpts = config.checkpoints(SYNTHETIC_K, SYNTHETIC_B)

    chunks = [list(range(R))[w::max(workers, 1)] for w in range(max(workers, 1))]
    chunks = [c for c in chunks if c]
    jobs = [(spec, [int(k) for k in kinds], config, seed, c) for c in chunks]
    results = np.empty((R, len(kinds), len(ckpts), 3))
    if workers <= 1:
        parts = [_macro_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_macro_chunk, jobs))
    for job, part in zip(jobs, parts):
        for r, arr in zip(job[4], part):
            results[r] = arr
    return aggregate(spec.name.value, kinds, ckpts, results)


def aggregate(scenario: str, kinds, ckpts, results: np.ndarray) -> MetricsTable:
    """Rows from an (R, kinds, checkpoints, 3) array of per-run scores."""
    R = results.shape[0]
    table = MetricsTable()
    for ki, kind in enumerate(kinds):
        for ci, budget in enumerate(ckpts):
            col = results[:, ki, ci, :]
            # sum in run order so the result is independent of scheduling
            means = [math.fsum(col[:, m]) / R for m in range(3)]
            ses = [math.sqrt(math.fsum((col[:, m] - means[m]) ** 2) / R / R) for m in range(3)]
            ses[0] = math.sqrt(means[0] * (1.0 - means[0]) / R)
            table.rows.append(MetricsRow(
                scenario=scenario,
                sampler=SamplerKind(kind).label,
                budget=int(budget),
                macro_runs=R,
                pfs=means[0], pfs_se=ses[0],
                fnr_mean=means[1], fnr_se=ses[1],
                one_minus_acc_mean=means[2], one_minus_acc_se=ses[2],
            ))
    return table


def _simulator_chunk(args):
    problem, truth, kinds, config, master_seed, run_indices = args
    out = []
    for r in run_indices:
        per_kind = []
        for kind in kinds:
            try:
                trace = run_simulator(kind, problem.simulate, problem.k, problem.B, problem.probs, config,
                                      stream(master_seed, r, sampler_slot(kind)), getattr(problem, "lam", None))
                per_kind.append(classify_trace(trace, truth, problem.probs))
            except Exception as exc:
                raise MacroRunError(r, SamplerKind(kind).label, exc) from exc
        out.append(np.stack(per_kind))
    return out


def simulator_experiment(problem, truth: TruthSummary, kinds, R: int, config: RunConfig, label: str,
                         workers: int = 1, master_seed: int | None = None) -> MetricsTable:
    """Macro runs on a fixed problem exposing ``k, B, probs`` and ``simulate(i, b, rng)``.

    ``truth`` is scored against in minimization convention.
    """
    if R < 1:
        raise ValueError("need at least one macro run")
    kinds = [SamplerKind.parse(k) for k in kinds]
    seed = config.seed if master_seed is None else master_seed
    ckpts = config.checkpoints(problem.k, problem.B)
    n = max(workers, 1)
    chunks = [c for c in (list(range(R))[w::n] for w in range(n)) if c]
    jobs = [(problem, truth, [int(k) for k in kinds], config, seed, c) for c in chunks]
    if workers <= 1:
        parts = [_simulator_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulator_chunk, jobs))
    results = np.empty((R, len(kinds), len(ckpts), 3))
    for job, part in zip(jobs, parts):
        for r, arr in zip(job[5], part):
            results[r] = arr
    return aggregate(label, kinds, ckpts, results)
