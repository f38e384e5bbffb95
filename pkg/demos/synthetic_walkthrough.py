"""Generate the baseline scenario, inspect its truth, and follow one sampler run."""
import numpy as np

from mpb.harness import classify_trace
from mpb.problem import ScenarioSpec, derive_truth, generate_synthetic
from mpb.samplers import RunConfig, run

inst = generate_synthetic(ScenarioSpec("baseline", seed=1))
truth = derive_truth(inst)
order = np.argsort(-truth.pref_probs)
print("preference probabilities (top 3):")
for i in order[:3]:
    print(f"  solution {i + 1}: {truth.pref_probs[i]:.2f}")
print(f"MPB = solution {truth.mpb + 1}, favorable parameters = {sorted(b + 1 for b in truth.favorable_sets[truth.mpb])}")

cfg = RunConfig(n0=5, N=10_000, checkpoint_grid=(5_000, 7_500, 10_000), seed=7)
trace = run("alg2", inst, cfg)
flags = classify_trace(trace, truth, inst.probs)
for n, mpb_hat, (fs, fnr, one_minus_acc) in zip(trace.checkpoints, trace.mpb_hat, flags):
    print(f"budget {n:>6}: selected {mpb_hat + 1:>2}  false_selection={bool(fs)}  fnr={fnr:.3f}  1-acc={one_minus_acc:.3f}")
