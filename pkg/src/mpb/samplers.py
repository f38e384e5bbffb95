"""Sequential sampling policies for selecting the most probable best.

Every policy shares one skeleton: ``n0`` replications at every pair, then
one decision and one recorded replication per step until the budget ``N``
is used. Two execution paths exist:

* :func:`run` drives the compiled kernel and is used for experiments;
* :func:`run_simulator` is a plain Python loop that accepts any simulator
  callable (the market benchmark uses it).

Given the same generator state both paths produce identical traces.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .learning import LearningState, VarianceMode
from .problem import ProblemInstance, simulate_output
from .rates import (
    WeightVariant,
    balance_weights,
    argmin_weighted_rate,
    estimate_from_arrays,
    global_balance_gap,
)


class SamplerKind(enum.IntEnum):
    EQUAL_ALLOCATION = K.EA
    COCBA = K.COCBA
    ALG1_PLUGIN = K.ALG1
    ALG2_POSTERIOR_HYBRID = K.ALG2
    ALG3_ACC = K.ALG3
    ALG4_FN = K.ALG4

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]

    @classmethod
    def parse(cls, value) -> "SamplerKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for kind, label in _KIND_LABELS.items():
            if key == label.replace("-", ""):
                return kind
        aliases = {"equalallocation": cls.EQUAL_ALLOCATION, "ocba": cls.COCBA}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown sampler {value!r}")


_KIND_LABELS = {
    SamplerKind.EQUAL_ALLOCATION: "ea",
    SamplerKind.COCBA: "cocba",
    SamplerKind.ALG1_PLUGIN: "alg1",
    SamplerKind.ALG2_POSTERIOR_HYBRID: "alg2",
    SamplerKind.ALG3_ACC: "alg3",
    SamplerKind.ALG4_FN: "alg4",
}

ALL_KINDS = tuple(SamplerKind)


def default_checkpoints(start: int, N: int, count: int = 20) -> np.ndarray:
    """Up to ``count`` log-spaced integer budgets in ``(start, N]`` ending at ``N``."""
    if N <= start:
        return np.array([N], dtype=np.int64)
    grid = np.geomspace(max(start, 1), N, count + 1)[1:]
    pts = np.unique(np.clip(np.rint(grid).astype(np.int64), start + 1, N))
    pts[-1] = N
    return np.unique(pts)


@dataclass(frozen=True)
class RunConfig:
    n0: int = 5
    N: int = 10_000
    batch_size: int = 1
    variance_mode: VarianceMode = VarianceMode.KNOWN
    checkpoint_grid: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variance_mode", VarianceMode.parse(self.variance_mode))
        if self.n0 < 1:
            raise ValueError("n0 must be at least 1")
        if self.variance_mode is VarianceMode.NORMAL_GAMMA and self.n0 < 2:
            raise ValueError("normal-gamma mode needs n0 >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.checkpoint_grid is not None:
            grid = tuple(int(x) for x in self.checkpoint_grid)
            if list(grid) != sorted(set(grid)):
                raise ValueError("checkpoint grid must be strictly increasing")
            object.__setattr__(self, "checkpoint_grid", grid)

    def checkpoints(self, k: int, B: int) -> np.ndarray:
        start = self.n0 * k * B
        if start > self.N:
            raise ValueError(f"budget {self.N} is below the initial n0*k*B = {start}")
        if self.checkpoint_grid is None:
            return default_checkpoints(start, self.N)
        grid = np.asarray(self.checkpoint_grid, dtype=np.int64)
        if grid.size == 0 or grid[0] <= start or grid[-1] > self.N:
            raise ValueError(f"checkpoints must lie in ({start}, {self.N}]")
        return grid


@dataclass(eq=False)
class RunTrace:
    checkpoints: np.ndarray
    mpb_hat: np.ndarray
    tie: np.ndarray
    fav_set_hat: np.ndarray  # (C, B) boolean
    counts: np.ndarray  # (C, k, B)
    final_state: LearningState = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, RunTrace):
            return NotImplemented
        fs, fo = self.final_state, other.final_state
        return (
            np.array_equal(self.checkpoints, other.checkpoints)
            and np.array_equal(self.mpb_hat, other.mpb_hat)
            and np.array_equal(self.tie, other.tie)
            and np.array_equal(self.fav_set_hat, other.fav_set_hat)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(fs.counts, fo.counts)
            and np.array_equal(fs.means, fo.means)
            and np.array_equal(fs.m2, fo.m2)
        )

    __hash__ = None


# --- reference deciders ---------------------------------------------------------


def _plugin(state: LearningState, probs, mpb=None, means=None):
    # rates from raw counts; decisions depend on ratios only
    means = state.means if means is None else means
    return estimate_from_arrays(means, state.variance_matrix(), state.counts, probs, mpb)


def _pick(variant, exclude_mpb, est, state, probs):
    W = balance_weights(est.cond_opt_hat, est.mpb_hat, est.gaps_hat, probs, variant)
    if W.excluded.all():
        return None
    i, b = argmin_weighted_rate(W, est.G)
    ref = int(est.cond_opt_hat[b])
    gap = global_balance_gap(state.counts, state.variance_matrix(), b, ref, est.mpb_hat, exclude_mpb)
    return (ref, b) if gap < 0 else (i, b)


def _standard_rule(est, state, probs):
    choice = _pick(WeightVariant.STANDARD, True, est, state, probs)
    if choice is None:
        # no competitor outside the MPB row; borrow the FN weights this step
        choice = _pick(WeightVariant.FN, True, est, state, probs)
    return choice


def decide_ea(state: LearningState) -> tuple[int, int]:
    """Least-sampled pair, scanning parameters first then solutions."""
    flat = state.counts.T.ravel()
    b, i = divmod(int(np.argmin(flat)), state.counts.shape[0])
    return i, b


def decide_alg1(state: LearningState, probs) -> tuple[int, int]:
    return _standard_rule(_plugin(state, probs), state, probs)


def posterior_hybrid_estimate(state: LearningState, probs, rng: np.random.Generator):
    """Plug-in truth after replacing the MPB's means at its adversarial parameters by posterior draws.

    The estimated MPB stays fixed; optima, gaps and rates are recomputed.
    Draws are taken in ascending parameter order.
    """
    est = _plugin(state, probs)
    mpb = est.mpb_hat
    means = state.means.copy()
    var = state.variance_matrix()
    for b in range(state.counts.shape[1]):
        if est.cond_opt_hat[b] != mpb:
            sd = np.sqrt(var[mpb, b] / state.counts[mpb, b])
            means[mpb, b] = rng.normal(state.means[mpb, b], sd)
    return _plugin(state, probs, mpb=mpb, means=means)


def decide_alg2(state: LearningState, probs, rng: np.random.Generator) -> tuple[int, int]:
    """Plug-in rule on the posterior-hybrid estimate; the draws are used for this step only."""
    return _standard_rule(posterior_hybrid_estimate(state, probs, rng), state, probs)


def decide_alg3(state: LearningState, probs) -> tuple[int, int]:
    return _pick(WeightVariant.ACC, False, _plugin(state, probs), state, probs)


def decide_alg4(state: LearningState, probs) -> tuple[int, int]:
    return _pick(WeightVariant.FN, False, _plugin(state, probs), state, probs)


def decide_cocba(state: LearningState, probs) -> tuple[int, int]:
    return _pick(WeightVariant.UNIT, False, _plugin(state, probs), state, probs)


def decide(kind, state: LearningState, probs, rng: np.random.Generator | None = None) -> tuple[int, int]:
    kind = SamplerKind.parse(kind)
    if kind is SamplerKind.EQUAL_ALLOCATION:
        return decide_ea(state)
    if kind is SamplerKind.ALG2_POSTERIOR_HYBRID:
        if rng is None:
            raise ValueError("the posterior-hybrid rule needs a random stream")
        return decide_alg2(state, probs, rng)
    rule = {
        SamplerKind.COCBA: decide_cocba,
        SamplerKind.ALG1_PLUGIN: decide_alg1,
        SamplerKind.ALG3_ACC: decide_alg3,
        SamplerKind.ALG4_FN: decide_alg4,
    }[kind]
    return rule(state, probs)


def decide_compiled(kind, state: LearningState, probs, rng: np.random.Generator) -> tuple[int, int]:
    """Same decision through the compiled kernel (used for cross-checking)."""
    kind = SamplerKind.parse(kind)
    k, B = state.shape
    i, b = K.decide(
        int(kind), state.means, state.variance_matrix(), state.counts, np.asarray(probs, dtype=float), rng,
        np.empty(B, dtype=np.int64), np.empty(k), np.empty((k, B)), np.empty(k), np.empty((k, B)),
    )
    return int(i), int(b)


# --- drivers --------------------------------------------------------------------


def _snapshot(state, probs):
    est = _plugin(state, probs)
    return est.mpb_hat, est.tied, est.fav_mask, state.counts.copy()


def run_simulator(kind, simulate, k: int, B: int, probs, config: RunConfig, rng: np.random.Generator,
                  lam=None) -> RunTrace:
    """Python-loop driver over an arbitrary simulator.

    Args:
        simulate: ``simulate(i, b, rng) -> float`` returning one raw output.
        lam: known output standard deviations; required in known-variance mode.
    """
    kind = SamplerKind.parse(kind)
    probs = np.asarray(probs, dtype=float)
    ckpts = config.checkpoints(k, B)
    state = LearningState(k, B, config.variance_mode, lam, config.batch_size)
    c = config.batch_size

    def replicate(i, b):
        for _ in range(c):
            state.record(i, b, simulate(i, b, rng))

    for b in range(B):
        for i in range(k):
            for _ in range(config.n0):
                replicate(i, b)
    snaps = {}
    n = config.n0 * k * B
    wanted = set(ckpts.tolist())
    if n in wanted:
        snaps[n] = _snapshot(state, probs)
    while n < config.N:
        i, b = decide(kind, state, probs, rng)
        replicate(i, b)
        n += 1
        if n in wanted:
            snaps[n] = _snapshot(state, probs)
    return _assemble(ckpts, [snaps[c] for c in ckpts.tolist()], state)


def _assemble(ckpts, snaps, state) -> RunTrace:
    return RunTrace(
        checkpoints=ckpts,
        mpb_hat=np.array([s[0] for s in snaps], dtype=np.int64),
        tie=np.array([s[1] for s in snaps], dtype=bool),
        fav_set_hat=np.array([s[2] for s in snaps], dtype=bool),
        counts=np.array([s[3] for s in snaps], dtype=np.int64),
        final_state=state,
    )


def run(kind, instance: ProblemInstance, config: RunConfig, rng: np.random.Generator | None = None) -> RunTrace:
    """Run one sampler on an instance with the compiled kernel.

    ``rng`` defaults to ``default_rng(config.seed)``.
    """
    kind = SamplerKind.parse(kind)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    k, B = instance.k, instance.B
    ckpts = config.checkpoints(k, B)
    state = LearningState.for_instance(instance, config.variance_mode, config.batch_size)
    if config.variance_mode is VarianceMode.KNOWN:
        var = state.variance_matrix()
    else:
        var = np.full((k, B), K.VARIANCE_FLOOR)
    C = len(ckpts)
    ck_mpb = np.empty(C, dtype=np.int64)
    ck_tie = np.empty(C, dtype=np.bool_)
    ck_fav = np.empty((C, B), dtype=np.bool_)
    ck_counts = np.empty((C, k, B), dtype=np.int64)
    K.run(
        int(kind), np.ascontiguousarray(instance.probs), np.ascontiguousarray(instance.means),
        np.ascontiguousarray(instance.lam), np.ascontiguousarray(instance.noise_kind, dtype=np.int64),
        int(config.variance_mode), config.batch_size, config.n0, config.N, ckpts, rng,
        state.counts, state.means, state.m2, var, ck_mpb, ck_tie, ck_fav, ck_counts,
    )
    return RunTrace(ckpts, ck_mpb, ck_tie, ck_fav, ck_counts, state)


def run_reference(kind, instance: ProblemInstance, config: RunConfig,
                  rng: np.random.Generator | None = None) -> RunTrace:
    """:func:`run` through the Python driver; slow, for verification."""
    if rng is None:
        rng = np.random.default_rng(config.seed)

    def simulate(i, b, g):
        return simulate_output(instance, i, b, g)

    return run_simulator(kind, simulate, instance.k, instance.B, instance.probs, config, rng, instance.lam)
