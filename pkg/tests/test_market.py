import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from mpb.market import (
    B0,
    DIM,
    SLOTS,
    MarketProblem,
    MarketSimulator,
    Product,
    UtilityScenario,
    attributes,
    average_best,
    benchmark_portfolios,
    beta_from_transformed,
    choice_set,
    generate_utility_scenarios,
    load_scenarios,
    load_table_means,
    portfolio_matrix,
    preference_from_means,
    product_price,
    purchase_probability,
    rank_products,
    robust_best,
    save_scenarios,
    simulate_sales,
)

# reference price and expected-utility columns for the 15 highest-utility products
TOP15_PRICE = [2.7, 2.6, 2.52, 2.55, 2.45, 2.37, 2.5, 2.4, 2.42, 2.32, 2.32, 2.24, 2.45, 2.35, 2.35]
TOP15_UTILITY = [-1.2, -1.2, -1.22, -1.25, -1.25, -1.27, -1.3, -1.3, -1.32, -1.32, -1.32, -1.34, -1.35, -1.35, -1.35]


def test_price_examples():
    low, high = Product((1,) * 5), Product((3,) * 5)
    assert product_price(low) == 800.0
    assert product_price(high) == 2700.0
    assert attributes(low)[-1] == pytest.approx(-0.8)
    assert attributes(high)[-1] == pytest.approx(-2.7)


@settings(max_examples=100)
@given(st.tuples(*[st.integers(1, 3)] * 5), st.integers(0, 4))
def test_price_monotone(levels, m):
    if levels[m] == 3:
        return
    up = list(levels)
    up[m] += 1
    assert product_price(Product(tuple(up))) > product_price(Product(levels))


def test_attribute_encoding():
    x = attributes(Product((1, 2, 3, 1, 2)))
    assert x.shape == (DIM,)
    assert np.count_nonzero(x[:-1]) == 5
    assert x[0] == x[4] == x[8] == x[9] == x[13] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        Product((1, 2, 4, 1, 1))


def test_top15_ranking_price_and_utility():
    top = rank_products()[:15]
    assert top[0][0].levels == (3, 3, 3, 3, 3)
    np.testing.assert_allclose([product_price(p) / 1000 for p, _ in top], TOP15_PRICE, atol=1e-12)
    np.testing.assert_allclose([u for _, u in top], TOP15_UTILITY, atol=1e-9)


def test_benchmark_portfolios():
    ports = benchmark_portfolios()
    ranked = [p for p, _ in rank_products()]
    assert len(ports) == 9
    assert all(len(p) == SLOTS for p in ports)
    assert set(ports[0]) == set(ranked[:40])
    assert ports[3] == tuple(p for p in ranked[:5] for _ in range(8))
    assert ports[5][:15] == tuple(p for p in ranked[:5] for _ in range(3))
    assert ports[5][15:] == tuple(ranked[5:30])


def test_choice_set_sizes():
    X = portfolio_matrix(benchmark_portfolios()[0])
    rng = np.random.default_rng(1)
    sizes = np.array([choice_set(X, rng).shape[0] for _ in range(1_000_000)]) - 1
    assert abs(sizes.mean() - 4.0) <= 0.01


def test_choice_set_contents():
    port = benchmark_portfolios()[2]
    X = portfolio_matrix(port)
    rng = np.random.default_rng(2)
    for _ in range(200):
        cs = choice_set(port, rng)
        assert (cs[-1] == 0).all()
        rows = {tuple(r) for r in X}
        assert all(tuple(r) in rows for r in cs[:-1])
    np.testing.assert_array_equal(choice_set(port, np.random.default_rng(5)), choice_set(X, np.random.default_rng(5)))
    with pytest.raises(ValueError):
        portfolio_matrix(port[:39])


class _NoShow:
    def poisson(self, lam):
        return 0

    def random(self, n):
        return np.arange(n, dtype=float)


def test_empty_choice_set_never_buys():
    cs = choice_set(benchmark_portfolios()[0], _NoShow())
    assert cs.shape == (1, DIM)
    assert purchase_probability(cs, beta_from_transformed(B0)) == 0.0


def test_purchase_probability_examples():
    beta = np.zeros(DIM)
    beta[0] = 1.0
    zero = np.zeros((1, DIM))
    assert purchase_probability(zero, beta) == 0.0
    x = np.zeros((1, DIM))
    assert purchase_probability(np.vstack([x, zero]), beta) == pytest.approx(0.5)
    x[0, 0] = np.log(3.0)
    assert purchase_probability(np.vstack([x, zero]), beta) == pytest.approx(0.75)


option_rows = st.lists(st.lists(st.floats(-3, 3), min_size=3, max_size=3), min_size=0, max_size=6)


@settings(max_examples=200)
@given(option_rows, st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_purchase_probability_bounds_and_inclusion(rows, beta, extra):
    opts = np.array(rows + [[0.0, 0.0, 0.0]])
    p = purchase_probability(opts, beta)
    assert 0.0 <= p < 1.0
    assert purchase_probability(np.vstack([[extra], opts]), beta) >= p - 1e-15


def _independent_sales(port, scenario, rng):
    # one consumer at a time, straight from the logit formula
    total = 0.0
    X = np.array([attributes(p) for p in port])
    for beta in scenario.betas:
        m = min(rng.poisson(4.0), SLOTS)
        idx = rng.choice(SLOTS, size=m, replace=False)
        u = X[idx] @ beta
        total += 1.0 - 1.0 / (1.0 + np.exp(u).sum())
    return total


def test_sales_match_independent_simulation():
    scen = generate_utility_scenarios(1, 5, np.random.default_rng(9))[0]
    port = benchmark_portfolios()[4]
    sim = MarketSimulator([port], [scen])
    rng = np.random.default_rng(10)
    reps = 4000
    a = np.array([sim.sales(0, 0, rng) for _ in range(reps)])
    b = np.array([_independent_sales(port, scen, rng) for _ in range(reps)])
    se = np.sqrt(a.var() / reps + b.var() / reps)
    assert abs(a.mean() - b.mean()) <= 3 * se


def test_sales_single_consumer_with_logit_oracle():
    beta = beta_from_transformed(B0)
    scen = UtilityScenario(beta[None, :])
    port = (Product((3,) * 5),) * SLOTS
    # every offered slot is the same product, so P(buy | m) = 1 - 1/(1 + m e^u)
    u = attributes(port[0]) @ beta
    m = np.arange(SLOTS + 1)
    pm = poisson.pmf(m, 4.0)
    pm[-1] += poisson.sf(SLOTS, 4.0)
    exact = float(np.sum(pm * (1.0 - 1.0 / (1.0 + m * np.exp(u)))))
    rng = np.random.default_rng(4)
    draws = np.array([simulate_sales(port, scen, rng) for _ in range(40_000)])
    assert abs(draws.mean() - exact) <= 4 * draws.std() / np.sqrt(len(draws))


def test_sales_determinism():
    scen = generate_utility_scenarios(2, 3, np.random.default_rng(0))
    sim = MarketSimulator(benchmark_portfolios()[:2], scen)
    assert sim.sales(1, 1, np.random.default_rng(3)) == sim.sales(1, 1, np.random.default_rng(3))
    assert sim.neg_sales(1, 1, np.random.default_rng(3)) == -sim.sales(1, 1, np.random.default_rng(3))
    problem = MarketProblem(sim)
    assert (problem.k, problem.B) == (2, 2)
    np.testing.assert_allclose(problem.probs, [0.5, 0.5])


def test_table_preference_analytics():
    S = load_table_means()
    assert robust_best(S) == 2
    assert average_best(S) == 2
    assert S.mean(axis=0)[2] == pytest.approx(11.16, abs=0.005)
    mp = preference_from_means(S)
    assert mp.unique and mp.mpb == 3


def test_preference_ties_flagged():
    mp = preference_from_means([[1.0, 1.0], [0.0, 2.0]])
    assert mp.tied_rows == (0,)
    assert not mp.unique


def test_prior_draws():
    scen = generate_utility_scenarios(1, 100_000, np.random.default_rng(6))[0]
    t = scen.betas.copy()
    assert (t[:, -1] > 0).all()
    t[:, -1] = np.log(t[:, -1])
    assert np.abs(t.mean(axis=0) - B0).max() <= 0.01
    a = generate_utility_scenarios(3, 4, np.random.default_rng(1))
    b = generate_utility_scenarios(3, 4, np.random.default_rng(1))
    assert all(np.array_equal(x.betas, y.betas) for x, y in zip(a, b))
    with pytest.raises(ValueError):
        generate_utility_scenarios(0, 4)


def test_scenario_file_round_trip(tmp_path):
    scen = generate_utility_scenarios(3, 4, np.random.default_rng(1))
    path = tmp_path / "u.json"
    save_scenarios(scen, path)
    back = load_scenarios(path)
    assert len(back) == 3 and all(np.array_equal(x.betas, y.betas) for x, y in zip(scen, back))
    path.write_text('{"B": 2, "N": 4, "betas": []}')
    with pytest.raises(ValueError):
        load_scenarios(path)


def test_scenario_rejects_nonpositive_price_coefficient():
    beta = beta_from_transformed(B0)
    beta[-1] = 0.0
    with pytest.raises(ValueError):
        UtilityScenario(beta)
