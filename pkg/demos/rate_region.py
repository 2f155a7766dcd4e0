"""
Strong/weak sum-rate trade-off as eta varies, averaged over a few draws.

Raising eta reserves more of each strong user's nominal SNR, which moves
power away from the weak users.
"""

from thp_noma.harness import ExperimentConfig, run_eta_sweep, summarize

cfg = ExperimentConfig(
    system={"n_tx": 4, "n_clusters": 3, "pop_per_set": 10},
    eta_values=[0.1, 0.3, 0.5, 0.7, 0.9],
    trials=3,
)
means = summarize(run_eta_sweep(cfg))

print("eta   method        sum strong  sum weak")
for (method, eta), (strong, weak, _) in sorted(means.items(), key=lambda kv: (kv[0][1], kv[0][0])):
    print(f"{eta:.1f}   {method:12s}  {strong:9.3f}  {weak:8.3f}")
