"""Preference analytics on the shipped market mean-sales table, plus a short live simulation."""
import numpy as np

from mpb import market

S = market.load_table_means()
pref = market.preference_from_means(S)
print("preference probabilities:", np.round(pref.pref, 2))
print(f"MPB = portfolio {pref.mpb + 1}")
print(f"average-best = portfolio {market.average_best(S) + 1}, robust-best = portfolio {market.robust_best(S) + 1}")

scenarios = market.generate_utility_scenarios(B=3, N=20, rng=np.random.default_rng(0))
sim = market.MarketSimulator(market.benchmark_portfolios(), scenarios)
means = sim.mean_sales(reps=50, rng=np.random.default_rng(1))
print("\nsimulated mean sales (3 scenarios x 9 portfolios):")
print(np.round(means, 2))
