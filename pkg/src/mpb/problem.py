"""Problem instances, ground truth, and the synthetic benchmark scenarios.

Conventions used throughout the package:

* solutions are indexed ``0..k-1`` and input parameters ``0..B-1``;
* means are *minimized*: the conditional optimum at a parameter is the
  solution with the smallest mean;
* all matrices are laid out ``k x B`` (row = solution, column = parameter).
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12


class NoiseKind(enum.IntEnum):
    GAUSSIAN_KNOWN_VAR = 0
    GAUSSIAN_UNKNOWN_VAR = 1
    SHIFTED_EXPONENTIAL = 2

    @property
    def label(self) -> str:
        return _NOISE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "NoiseKind":
        for kind, name in _NOISE_LABELS.items():
            if name == label:
                return kind
        raise ValueError(f"unknown noise kind {label!r}")


_NOISE_LABELS = {
    NoiseKind.GAUSSIAN_KNOWN_VAR: "gaussian_known_var",
    NoiseKind.GAUSSIAN_UNKNOWN_VAR: "gaussian_unknown_var",
    NoiseKind.SHIFTED_EXPONENTIAL: "shifted_exponential",
}


@dataclass(frozen=True)
class NoiseModel:
    """Output distribution of one solution-parameter pair.

    ``lam`` is the standard deviation of the output. The shifted exponential
    kind draws ``mean - lam + Exp(scale=lam)``, so it has the same mean and
    standard deviation as the Gaussian kinds.
    """

    kind: NoiseKind
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"noise lambda must be positive, got {self.lam}")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A k x B nested ranking-and-selection problem.

    Attributes:
        probs: simplex weights of the B input parameters.
        means: true conditional means, shape (k, B).
        lam: output standard deviations, shape (k, B).
        noise_kind: ``NoiseKind`` codes, shape (k, B).
    """

    probs: np.ndarray
    means: np.ndarray
    lam: np.ndarray
    noise_kind: np.ndarray = field(default=None)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).copy()
        means = np.atleast_2d(np.asarray(self.means, dtype=float)).copy()
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), means.shape).copy()
        if self.noise_kind is None:
            kind = np.zeros(means.shape, dtype=np.int64)
        else:
            kind = np.broadcast_to(np.asarray(self.noise_kind, dtype=np.int64), means.shape).copy()
        k, B = means.shape
        if k < 2:
            raise ValueError("need at least two solutions")
        if probs.shape != (B,):
            raise ValueError(f"probs has shape {probs.shape}, expected ({B},)")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("probs must be nonnegative and sum to 1")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            raise ValueError("noise lambdas must be positive and finite")
        if not np.all(np.isin(kind, [int(v) for v in NoiseKind])):
            raise ValueError("invalid noise kind code")
        for name, arr in (("probs", probs), ("means", means), ("lam", lam), ("noise_kind", kind)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def B(self) -> int:
        return self.means.shape[1]

    @property
    def variances(self) -> np.ndarray:
        return self.lam**2

    def noise(self, i: int, b: int) -> NoiseModel:
        return NoiseModel(NoiseKind(int(self.noise_kind[i, b])), float(self.lam[i, b]))


@dataclass(frozen=True, eq=False)
class TruthSummary:
    """Ground-truth quantities derived from the true means.

    ``favorable_sets[i]`` holds the parameter indices at which ``i`` is the
    conditional optimum; ``gaps[j]`` is the preference-probability shortfall
    of ``j`` against the most probable best ``mpb``.
    """

    cond_opt: np.ndarray
    favorable_sets: tuple
    pref_probs: np.ndarray
    gaps: np.ndarray
    mpb: int
    unique_inner: np.ndarray
    unique_outer: bool

    @property
    def unique(self) -> bool:
        return bool(self.unique_inner.all()) and self.unique_outer

    @property
    def mpb_favorable(self) -> np.ndarray:
        """Boolean mask over parameters: True where the MPB is conditionally optimal."""
        return self.cond_opt == self.mpb


def truth_from_cond_opt(cond_opt, probs, k: int, unique_inner=None) -> TruthSummary:
    """Build a ``TruthSummary`` from a conditional-optimum layout."""
    cond_opt = np.asarray(cond_opt, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    pref = np.zeros(k)
    for b, i in enumerate(cond_opt):
        pref[i] += probs[b]
    top = pref.max()
    tied = np.flatnonzero(pref >= top - PROB_TOL)
    mpb = int(tied[0])
    gaps = np.maximum(pref[mpb] - pref, 0.0)
    gaps[mpb] = 0.0
    fav = tuple(frozenset(np.flatnonzero(cond_opt == i).tolist()) for i in range(k))
    if unique_inner is None:
        unique_inner = np.ones(len(cond_opt), dtype=bool)
    return TruthSummary(
        cond_opt=cond_opt,
        favorable_sets=fav,
        pref_probs=pref,
        gaps=gaps,
        mpb=mpb,
        unique_inner=np.asarray(unique_inner, dtype=bool),
        unique_outer=len(tied) == 1,
    )


def derive_truth(instance: ProblemInstance) -> TruthSummary:
    """Conditional optima, favorable sets, preference probabilities and the MPB.

    Ties in the true means are resolved toward the lowest index and reported
    through ``unique_inner`` / ``unique_outer`` rather than raised.
    """
    means = instance.means
    cond_opt = np.argmin(means, axis=0)
    col_min = means.min(axis=0)
    unique_inner = (means == col_min).sum(axis=0) == 1
    return truth_from_cond_opt(cond_opt, instance.probs, instance.k, unique_inner)


# --- synthetic scenarios ----------------------------------------------------


class Scenario(str, enum.Enum):
    BASELINE = "baseline"
    S1_DOMINANT_MPB = "s1"
    S2_HIGH_VARIANCE = "s2"
    S3_NON_NORMAL = "s3"
    S4_UNEQUAL_PROBS = "s4"
    S5_UNEQUAL_PROBS_HARD = "s5"

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        key = name.strip().lower()
        aliases = {
            "base": cls.BASELINE,
            "s1_dominantmpb": cls.S1_DOMINANT_MPB,
            "s2_highvariance": cls.S2_HIGH_VARIANCE,
            "s3_nonnormal": cls.S3_NON_NORMAL,
            "s4_unequalprobs": cls.S4_UNEQUAL_PROBS,
            "s5_unequalprobshard": cls.S5_UNEQUAL_PROBS_HARD,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown scenario {name!r}") from None


@dataclass(frozen=True)
class ScenarioSpec:
    name: Scenario
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "name", Scenario.parse(self.name) if isinstance(self.name, str) else self.name)


SYNTHETIC_K = 10
SYNTHETIC_B = 50


def scenario_layout(name) -> tuple[np.ndarray, np.ndarray]:
    """Conditional-optimum layout and simplex weights of a catalogued scenario.

    Returns 0-based solution indices of length 50 and the weights. Solution
    ``10`` in 1-based numbering is index 9 here.
    """
    name = Scenario.parse(name) if isinstance(name, str) else name
    opt = np.empty(SYNTHETIC_B, dtype=np.int64)  # 1-based while building
    probs = np.full(SYNTHETIC_B, 1.0 / SYNTHETIC_B)
    b = np.arange(1, SYNTHETIC_B + 1)
    if name in (Scenario.S4_UNEQUAL_PROBS, Scenario.S5_UNEQUAL_PROBS_HARD):
        # blocks of five parameters laid out consecutively: solutions 2..7
        # at weight 0.016, 8..9 at 0.032, then solution 10 at 0.02
        for ell in range(2, 10):
            block = (b >= 5 * ell - 9) & (b <= 5 * ell - 5)
            opt[block] = ell
            probs[block] = 0.016 if ell <= 7 else 0.032
        opt[b >= 41] = 10
        probs[b >= 41] = 0.02
        if name is Scenario.S5_UNEQUAL_PROBS_HARD:
            mid = (b >= 36) & (b <= 45)
            opt[mid] = 9
            probs[mid] = 0.016
            opt[b >= 46] = 10
            probs[b >= 46] = 0.04
    else:
        for ell in range(1, 8):
            opt[(b >= 5 * ell - 4) & (b <= 5 * ell)] = ell
        opt[(b >= 36) & (b <= 41)] = 8
        opt[b >= 42] = 10
        if name is Scenario.S1_DOMINANT_MPB:
            opt[b >= 36] = 10
    probs = probs / probs.sum()
    return opt - 1, probs


def _scenario_noise(name: Scenario) -> tuple[tuple[float, float], NoiseKind]:
    if name is Scenario.S2_HIGH_VARIANCE:
        return (8.0, 12.0), NoiseKind.GAUSSIAN_KNOWN_VAR
    if name is Scenario.S3_NON_NORMAL:
        return (4.0, 6.0), NoiseKind.SHIFTED_EXPONENTIAL
    return (4.0, 6.0), NoiseKind.GAUSSIAN_KNOWN_VAR


def generate_synthetic(spec, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Draw one instance of a catalogued synthetic scenario.

    The conditional optimum of every column gets mean 1 and the remaining
    solutions receive a random permutation of ``2..k``; standard deviations
    are i.i.d. uniform on the scenario's range. Draw order: one permutation
    per column in ascending column order, then the full lambda matrix.

    Args:
        spec: a ``ScenarioSpec`` or scenario name.
        rng: random stream; defaults to ``default_rng(spec.seed)``.
    """
    if not isinstance(spec, ScenarioSpec):
        spec = ScenarioSpec(spec)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    cond_opt, probs = scenario_layout(spec.name)
    k, B = SYNTHETIC_K, SYNTHETIC_B
    means = np.empty((k, B))
    for b in range(B):
        others = [i for i in range(k) if i != cond_opt[b]]
        means[cond_opt[b], b] = 1.0
        means[others, b] = rng.permutation(np.arange(2, k + 1))
    (lo, hi), kind = _scenario_noise(spec.name)
    lam = rng.uniform(lo, hi, size=(k, B))
    return ProblemInstance(probs=probs, means=means, lam=lam, noise_kind=np.full((k, B), int(kind)))


def simulate_output(instance: ProblemInstance, i: int, b: int, rng: np.random.Generator, size=None):
    """One simulation output at solution ``i`` and parameter ``b`` (an array if ``size`` is given).

    Drawing ``size`` outputs consumes the stream exactly like ``size`` single calls.
    """
    mean = instance.means[i, b]
    lam = instance.lam[i, b]
    if instance.noise_kind[i, b] == NoiseKind.SHIFTED_EXPONENTIAL:
        y = mean - lam + rng.exponential(lam, size)
    else:
        y = rng.normal(mean, lam, size)
    return float(y) if size is None else y


# --- instance files ---------------------------------------------------------


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "k": instance.k,
        "B": instance.B,
        "probs": instance.probs.tolist(),
        "means": instance.means.tolist(),
        "noise": [
            [{"kind": NoiseKind(int(instance.noise_kind[i, b])).label, "lambda": float(instance.lam[i, b])}
             for b in range(instance.B)]
            for i in range(instance.k)
        ],
    }


def instance_from_dict(data: dict) -> ProblemInstance:
    try:
        k, B = int(data["k"]), int(data["B"])
        means = np.asarray(data["means"], dtype=float)
        noise = data["noise"]
        lam = np.array([[cell["lambda"] for cell in row] for row in noise], dtype=float)
        kind = np.array([[int(NoiseKind.from_label(cell["kind"])) for cell in row] for row in noise])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance: {exc}") from exc
    if means.shape != (k, B) or lam.shape != (k, B):
        raise ValueError(f"instance arrays do not match k={k}, B={B}")
    return ProblemInstance(probs=data["probs"], means=means, lam=lam, noise_kind=kind)


def save_instance(instance: ProblemInstance, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path: str | os.PathLike) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
