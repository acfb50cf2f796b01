"""
Auditing fairness and incentives
================================

Every mechanism is put in front of the four auditors: zero-fee inclusion,
monotonicity, user incentive compatibility (bid-grid search) and miner
incentive compatibility (bounded fake-transaction search).
"""

import tfmlab as T

pool = T.Mempool([T.Transaction(i, 1.0, float(b), float(b))
                  for i, b in enumerate([0, 0, 1, 2])])
CAP = 2.0

print("fairness verdicts (zero-fee inclusion / monotonicity):")
for name, spec in [
    ("softmax gamma=1", T.MechanismSpec.stfm(1.0)),
    ("two-set phi=0.3", T.MechanismSpec.rtfm(0.3)),
    ("posted price lam=1", T.MechanismSpec.eip1559(1.0)),
    ("uniform sampling", T.MechanismSpec.uniform()),
]:
    zti = T.estimate_zti(spec, pool, CAP, trials=2000, seed=1)
    mono = T.estimate_monotonicity(spec, pool, target_tx=3, epsilons=[1.0],
                                   trials=200, seed=1, capacity=CAP)
    print(f"  {name:20s} zti={zti.verdict.value:12s} monotonicity={mono.verdict.value}")

# A user thinking about shading its bid under first-price payments: the rival
# bids 2, the user values inclusion at 5 per unit.
duel = T.Mempool([T.Transaction(0, 1.0, 2.0, 2.0), T.Transaction(1, 1.0, 5.0, 5.0)])
report = T.check_uic(T.MechanismSpec.first_price(), duel, 1.0, user=1,
                     bid_grid=[3.0, 4.0, 5.0], trials=1, seed=0)
print(f"\nfirst-price user audit: {report.verdict.value}, witness {report.witness}")

# A miner thinking about stuffing the split block's reserved section with its
# own posted-fee entries to free paid slots for real customers.
m5 = T.Mempool([T.Transaction(i, 1.0, float(b), float(b))
                for i, b in enumerate([2, 3, 4, 5, 6])])
report = T.search_mic_deviation(T.MechanismSpec.split_block(0.75, delta=1.0), m5, 8.0,
                                fake_budget=2, fake_bid_grid=[0.0, 1.0], seed=2)
print(f"split-block miner audit: {report.verdict.value}, witness {report.witness}")

# The two-set randomized rule removes that lever: the chain, not the miner,
# picks the confirmed set.
report = T.search_mic_deviation(T.MechanismSpec.rtfm(0.4), m5, 4.0,
                                fake_budget=2, fake_bid_grid=[0.0, 1.0], seed=2)
print(f"two-set miner audit:     {report.verdict.value} ({report.confidence_note})")
