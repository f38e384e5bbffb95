"""Posterior statistics for every solution-parameter pair.

Both supported models use noninformative priors, so the posterior mean is the
running sample mean. In known-variance mode the posterior variance of the
mean is ``lam**2 / N``; in normal-gamma mode the variance estimate is the
biased sample variance (sum of squared deviations over ``N``).
"""
from __future__ import annotations

import enum

import numpy as np

VARIANCE_FLOOR = 1e-12


class VarianceMode(enum.IntEnum):
    KNOWN = 0
    NORMAL_GAMMA = 1

    @classmethod
    def parse(cls, value) -> "VarianceMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        if key in ("known", "known_var", "knownvariance"):
            return cls.KNOWN
        if key in ("ng", "normal_gamma", "normalgamma", "unknown"):
            return cls.NORMAL_GAMMA
        raise ValueError(f"unknown variance mode {value!r}")


class UninitializedPair(LookupError):
    """Queried a pair with no recorded observations."""


class InsufficientData(ValueError):
    """Normal-gamma variance requested with fewer than two observations."""


class LearningState:
    """Running counts, means and squared-deviation sums over a k x B grid.

    Args:
        k, B: grid shape.
        mode: ``VarianceMode`` or its name.
        lam: known standard deviations of a single raw output, shape (k, B).
            Required in known-variance mode, ignored otherwise.
        batch_size: raw outputs averaged into one recorded observation.

    The arrays ``counts``, ``means`` and ``m2`` are public so that compiled
    samplers can update them in place.
    """

    def __init__(self, k: int, B: int, mode=VarianceMode.KNOWN, lam=None, batch_size: int = 1):
        self.mode = VarianceMode.parse(mode)
        if batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        self.batch_size = int(batch_size)
        self.counts = np.zeros((k, B), dtype=np.int64)
        self.means = np.zeros((k, B))
        self.m2 = np.zeros((k, B))
        if self.mode is VarianceMode.KNOWN:
            if lam is None:
                raise ValueError("known-variance mode needs lam")
            self.lam = np.broadcast_to(np.asarray(lam, dtype=float), (k, B)).copy()
            if np.any(self.lam < 0):
                raise ValueError("lam must be nonnegative")
        else:
            self.lam = None
        self._pending: dict[tuple[int, int], list[float]] = {}

    @classmethod
    def for_instance(cls, instance, mode=VarianceMode.KNOWN, batch_size: int = 1) -> "LearningState":
        return cls(instance.k, instance.B, mode, instance.lam, batch_size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def record(self, i: int, b: int, y: float) -> None:
        """Add one raw output; a recorded observation is made every ``batch_size`` calls."""
        if self.batch_size == 1:
            self._update(i, b, float(y))
            return
        buf = self._pending.setdefault((i, b), [])
        buf.append(float(y))
        if len(buf) == self.batch_size:
            s = 0.0
            for v in buf:
                s += v
            del self._pending[(i, b)]
            self._update(i, b, s / self.batch_size)

    def record_many(self, i: int, b: int, ys) -> None:
        for y in np.ravel(ys):
            self.record(i, b, y)

    def _update(self, i, b, y):
        n = self.counts[i, b] + 1
        mean = self.means[i, b]
        d = y - mean
        mean = mean + d / n
        self.m2[i, b] += d * (y - mean)
        self.means[i, b] = mean
        self.counts[i, b] = n

    def posterior_mean(self, i: int, b: int) -> float:
        if self.counts[i, b] < 1:
            raise UninitializedPair(f"pair ({i}, {b}) has no observations")
        return float(self.means[i, b])

    def variance_estimate(self, i: int, b: int) -> float:
        """Variance of one recorded observation (already divided by the batch size)."""
        if self.mode is VarianceMode.KNOWN:
            return max(float(self.lam[i, b]) ** 2 / self.batch_size, VARIANCE_FLOOR)
        n = self.counts[i, b]
        if n < 2:
            raise InsufficientData(f"pair ({i}, {b}) has {n} observation(s); need 2")
        return max(float(self.m2[i, b]) / n, VARIANCE_FLOOR)

    def variance_matrix(self) -> np.ndarray:
        """Per-pair variance estimates as used by the rate functions."""
        if self.mode is VarianceMode.KNOWN:
            return np.maximum(self.lam**2 / self.batch_size, VARIANCE_FLOOR)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self.m2 / self.counts
        return np.maximum(np.nan_to_num(v, nan=VARIANCE_FLOOR), VARIANCE_FLOOR)

    def posterior_variance(self, i: int, b: int) -> float:
        n = self.counts[i, b]
        if n < 1:
            raise UninitializedPair(f"pair ({i}, {b}) has no observations")
        return self.variance_estimate(i, b) / n

    def sample_posterior_mean(self, i: int, b: int, rng: np.random.Generator, size=None):
        """Draw(s) from N(mean, variance_estimate / N)."""
        mu = self.posterior_mean(i, b)
        sd = np.sqrt(self.posterior_variance(i, b))
        draw = rng.normal(mu, sd, size)
        return float(draw) if size is None else draw

    def ready(self) -> bool:
        """True when every pair can enter rate computations."""
        need = 1 if self.mode is VarianceMode.KNOWN else 2
        return bool((self.counts >= need).all())

    def copy(self) -> "LearningState":
        out = LearningState.__new__(LearningState)
        out.mode = self.mode
        out.batch_size = self.batch_size
        out.counts = self.counts.copy()
        out.means = self.means.copy()
        out.m2 = self.m2.copy()
        out.lam = None if self.lam is None else self.lam.copy()
        out._pending = {key: list(v) for key, v in self._pending.items()}
        return out
