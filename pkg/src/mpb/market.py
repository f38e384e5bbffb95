"""Product-portfolio market simulator.

A product has five features at levels 1-3. Consumers follow a logit choice
model with a no-purchase option, see a Poisson-sized random subset of the
store's 40 slots, and the sales of one replication are the summed purchase
probabilities of ``N`` consumers. Sales are maximized; the adapter in
:class:`MarketProblem` negates them for the minimizing samplers.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from .problem import PROB_TOL

N_FEATURES = 5
N_LEVELS = 3
DIM = N_FEATURES * N_LEVELS + 1
SLOTS = 40
MEAN_CHOICE_SIZE = 4.0
CONSUMERS = 20
FEATURE_SCALE = 0.1
PRICE_SCALE = 1e-3
PRIOR_SD = 0.1

B0 = np.array([-1, 0, 1, -2, 0, 2, -3, 0, 3, -4, 0, 4, -5, 0, 5, 0], dtype=float)

# (top count, copies, extra rank range) per benchmark portfolio, ranks 1-based inclusive
PORTFOLIO_RECIPES = (
    (40, 1, None),
    (20, 2, None),
    (10, 4, None),
    (5, 8, None),
    (4, 10, None),
    (5, 3, (6, 30)),
    (10, 2, (11, 30)),
    (10, 3, (11, 20)),
    (4, 6, (5, 20)),
)


@dataclass(frozen=True, order=True)
class Product:
    levels: tuple

    def __post_init__(self):
        lv = tuple(int(x) for x in self.levels)
        if len(lv) != N_FEATURES or any(x not in (1, 2, 3) for x in lv):
            raise ValueError(f"a product needs {N_FEATURES} levels in 1..3, got {self.levels}")
        object.__setattr__(self, "levels", lv)


def product_price(p: Product) -> float:
    """Sum over features m of 50*level*m + 10*level**2."""
    return float(sum(50 * lv * m + 10 * lv * lv for m, lv in enumerate(p.levels, start=1)))


def attributes(p: Product) -> np.ndarray:
    """Scaled level indicators followed by the scaled negative price."""
    x = np.zeros(DIM)
    for m, lv in enumerate(p.levels):
        x[N_LEVELS * m + lv - 1] = FEATURE_SCALE
    x[-1] = -product_price(p) * PRICE_SCALE
    return x


def all_products() -> list[Product]:
    return [Product(lv) for lv in itertools.product(range(1, N_LEVELS + 1), repeat=N_FEATURES)]


def beta_from_transformed(t) -> np.ndarray:
    """Undo the log transform on the price coefficient."""
    beta = np.array(t, dtype=float, copy=True)
    beta[..., -1] = np.exp(beta[..., -1])
    return beta


def rank_products(beta=None) -> list[tuple[Product, float]]:
    """All products by descending utility; ties go to the lexicographically larger levels."""
    beta = beta_from_transformed(B0) if beta is None else np.asarray(beta, dtype=float)
    scored = [(p, float(attributes(p) @ beta)) for p in all_products()]
    scored.sort(key=lambda pu: (-round(pu[1], 9), tuple(-x for x in pu[0].levels)))
    return scored


def benchmark_portfolios(beta=None) -> list[tuple[Product, ...]]:
    """The nine catalogued portfolios built from the utility ranking."""
    ranked = [p for p, _ in rank_products(beta)]
    out = []
    for top, copies, extra in PORTFOLIO_RECIPES:
        slots = [p for p in ranked[:top] for _ in range(copies)]
        if extra is not None:
            slots += ranked[extra[0] - 1:extra[1]]
        if len(slots) != SLOTS:
            raise AssertionError(f"portfolio recipe {top}x{copies}+{extra} fills {len(slots)} slots")
        out.append(tuple(slots))
    return out


@dataclass(frozen=True, eq=False)
class UtilityScenario:
    """Utility vectors of the consumers simulated in one replication."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.betas, dtype=float)).copy()
        if b.shape[1] != DIM:
            raise ValueError(f"utility vectors need {DIM} entries")
        if np.any(b[:, -1] <= 0):
            raise ValueError("price coefficients must be positive")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @property
    def N(self) -> int:
        return self.betas.shape[0]


def generate_utility_scenarios(B: int, N: int = CONSUMERS, rng: np.random.Generator | None = None,
                               sd: float = PRIOR_SD) -> list[UtilityScenario]:
    """Draw ``B`` scenarios of ``N`` consumers from the Gaussian prior around ``B0``."""
    if B < 1 or N < 1:
        raise ValueError("B and N must be positive")
    rng = np.random.default_rng() if rng is None else rng
    t = rng.normal(B0, sd, size=(B, N, DIM))
    return [UtilityScenario(beta_from_transformed(t[b])) for b in range(B)]


def save_scenarios(scenarios, path) -> None:
    data = {
        "B": len(scenarios),
        "N": scenarios[0].N if scenarios else 0,
        "betas": [s.betas.tolist() for s in scenarios],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_scenarios(path) -> list[UtilityScenario]:
    with open(path) as fh:
        data = json.load(fh)
    try:
        out = [UtilityScenario(b) for b in data["betas"]]
        if len(out) != int(data["B"]) or any(s.N != int(data["N"]) for s in out):
            raise ValueError("B or N does not match the betas array")
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed utility scenario file: {exc}") from exc
    return out


# --- consumer model -------------------------------------------------------------


def portfolio_matrix(portfolio) -> np.ndarray:
    if len(portfolio) != SLOTS:
        raise ValueError(f"a portfolio has exactly {SLOTS} slots")
    return np.array([attributes(p) for p in portfolio])


def choice_set(portfolio, rng: np.random.Generator) -> np.ndarray:
    """Attribute rows of the offered slots plus the all-zero no-purchase row.

    The number of offered slots is Poisson with mean 4, capped at 40, and the
    slots are drawn without replacement. ``portfolio`` may also be the
    (40, 16) attribute matrix from :func:`portfolio_matrix`.
    """
    X = np.asarray(portfolio, dtype=float) if isinstance(portfolio, np.ndarray) else portfolio_matrix(portfolio)
    m = min(int(rng.poisson(MEAN_CHOICE_SIZE)), SLOTS)
    idx = np.argsort(rng.random(SLOTS), kind="stable")[:m]
    return np.vstack([X[idx], np.zeros((1, DIM))])


def purchase_probability(options, beta) -> float:
    """One minus the no-purchase probability; ``options`` includes the zero row."""
    u = np.asarray(options, dtype=float) @ np.asarray(beta, dtype=float)
    return float(-np.expm1(-logsumexp(u)))


class MarketSimulator:
    """Fast sales sampler with utilities precomputed per (portfolio, scenario)."""

    def __init__(self, portfolios, scenarios):
        self.portfolios = [tuple(p) for p in portfolios]
        self.scenarios = list(scenarios)
        X = np.stack([portfolio_matrix(p) for p in self.portfolios])  # (k, 40, DIM)
        self._expu = [np.exp(np.einsum("ksd,nd->kns", X, s.betas)) for s in self.scenarios]

    @property
    def k(self) -> int:
        return len(self.portfolios)

    @property
    def B(self) -> int:
        return len(self.scenarios)

    def sales(self, i: int, b: int, rng: np.random.Generator) -> float:
        """One replication: summed purchase probabilities over the scenario's consumers."""
        expu = self._expu[b][i]  # (N, 40)
        n = expu.shape[0]
        m = np.minimum(rng.poisson(MEAN_CHOICE_SIZE, size=n), SLOTS)
        order = np.argsort(rng.random((n, SLOTS)), axis=1, kind="stable")
        seen = np.zeros((n, SLOTS), dtype=bool)
        np.put_along_axis(seen, order, np.arange(SLOTS)[None, :] < m[:, None], axis=1)
        total = 1.0 + np.where(seen, expu, 0.0).sum(axis=1)
        return float(np.sum(1.0 - 1.0 / total))

    def neg_sales(self, i: int, b: int, rng: np.random.Generator) -> float:
        return -self.sales(i, b, rng)

    def mean_sales(self, reps: int, rng: np.random.Generator) -> np.ndarray:
        """Monte Carlo mean sales, shape (B, k)."""
        out = np.empty((self.B, self.k))
        for b in range(self.B):
            for i in range(self.k):
                out[b, i] = np.mean([self.sales(i, b, rng) for _ in range(reps)])
        return out


def simulate_sales(portfolio, scenario: UtilityScenario, rng: np.random.Generator) -> float:
    return MarketSimulator([portfolio], [scenario]).sales(0, 0, rng)


# --- preference analytics -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MarketPreference:
    pref: np.ndarray
    mpb: int
    best_per_row: np.ndarray
    tied_rows: tuple

    @property
    def unique(self) -> bool:
        return not self.tied_rows and int((self.pref >= self.pref.max() - PROB_TOL).sum()) == 1


def preference_from_means(sales_means, probs=None) -> MarketPreference:
    """Preference probabilities from a (B, k) matrix of mean sales (larger is better)."""
    S = np.asarray(sales_means, dtype=float)
    B, k = S.shape
    probs = np.full(B, 1.0 / B) if probs is None else np.asarray(probs, dtype=float)
    best = np.argmax(S, axis=1)
    tied = tuple(int(b) for b in range(B) if (S[b] == S[b].max()).sum() > 1)
    pref = np.bincount(best, weights=probs, minlength=k)
    return MarketPreference(pref, int(np.argmax(pref)), best, tied)


def average_best(sales_means) -> int:
    return int(np.argmax(np.asarray(sales_means, dtype=float).mean(axis=0)))


def robust_best(sales_means) -> int:
    """Portfolio with the best worst-case mean sales."""
    return int(np.argmax(np.asarray(sales_means, dtype=float).min(axis=0)))


def load_table_means() -> np.ndarray:
    """Shipped 50 x 9 table of estimated mean sales (rows are utility scenarios)."""
    ref = resources.files("mpb").joinpath("data/market_mean_sales.csv")
    with ref.open("r", newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in row[1:]] for row in rows[1:]])


class MarketProblem:
    """Adapter presenting the market as a minimization problem over (portfolio, scenario) pairs."""

    def __init__(self, simulator: MarketSimulator, probs=None):
        self.sim = simulator
        B = simulator.B
        self.probs = np.full(B, 1.0 / B) if probs is None else np.asarray(probs, dtype=float)

    @property
    def k(self) -> int:
        return self.sim.k

    @property
    def B(self) -> int:
        return self.sim.B

    def simulate(self, i: int, b: int, rng: np.random.Generator) -> float:
        return self.sim.neg_sales(i, b, rng)


def scenario_file_or_seed(path: str | os.PathLike | None, seed: int | None, B: int, N: int):
    if path is not None:
        return load_scenarios(path)
    if seed is None:
        raise ValueError("need a utility scenario file or a seed")
    return generate_utility_scenarios(B, N, np.random.default_rng(seed))
