"""Solve the static balance problem on a small instance and check its optimality conditions."""
import numpy as np

from mpb.problem import ProblemInstance, derive_truth
from mpb.static_oracle import check_optimality, solve_balance

inst = ProblemInstance(
    probs=[0.6, 0.4],
    means=[[1.0, 2.0], [2.0, 1.0], [1.5, 2.5]],
    lam=[[1.0, 1.5], [0.7, 1.0], [1.2, 0.9]],
)
print("MPB index:", derive_truth(inst).mpb)
np.set_printoptions(precision=4, suppress=True)
for variant in ("standard", "acc", "fn"):
    alpha, report = solve_balance(inst, variant)
    print(f"\n{variant}:\n{alpha}")
    print(f"  objective={report.objective:.6f} global={report.global_balance:.1e} pairwise={report.pairwise_balance:.1e}")

uniform = np.full((3, 2), 1 / 6)
rep = check_optimality(uniform, inst, "standard")
print(f"\nuniform allocation passes: {rep.ok(1e-3)} (pairwise residual {rep.pairwise_balance:.3f})")
