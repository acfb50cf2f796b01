"""
Tuning the softmax temperature
==============================

Cold sampling mimics the revenue optimum; hot sampling approaches uniform
inclusion.  The sweep shows the cost-of-fairness climbing with temperature,
and the tuner finds the smallest temperature whose optimal-set odds are
acceptably small relative to the zero-fee target.
"""

import math

import tfmlab as T
from tfmlab.experiments import ExperimentConfig, run_stfm_sweep

cfg = ExperimentConfig(
    mechanism=T.MechanismSpec.stfm(1.0),
    n=500,
    bid_dist=T.BidDistribution.zero_inflated(0.2, T.BidDistribution.uniform(0, 5)),
    size_dist=T.BidDistribution.exponential(1),
    sweep_param="gamma",
    sweep_values=(0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0),
    runs=60,
    seed=9,
    size_ratio=4.0,
)
rows = run_stfm_sweep(cfg)
print("gamma   cost_of_fairness   zero_fee_block_share")
for row in rows:
    print(f"{row.sweep_value:5.1f}   {row.empirical_cof:14.3f}   {row.zfi:17.4f}")

# closed-form worst case for comparison: concentrated bids, equal sizes
print("\nworst-case bound n=100, c=10, b=5:",
      {g: round(T.stfm_cof_bound(100, 10, 5.0, g), 3) for g in (0.5, 1.0, 5.0)})

# smallest temperature with optimal-set odds at most twice the odds of a
# block that is at least 20% zero-fee by size
pool = T.Mempool([T.Transaction(i, 1.0, 5.0 if i < 10 else 0.0, 5.0 if i < 10 else 0.0)
                  for i in range(20)])
gamma_star = T.tune_gamma(pool, 10.0, alpha_target=0.2, phi_ratio=2.0,
                          gamma_lo=0.1, gamma_hi=50.0, trials=400, seed=3)
print(f"\ntuned temperature on the 10-paying/10-free pool: gamma* = {gamma_star:.3f}")
