"""
A tour of the fee mechanisms
============================

Build one small mempool and push it through each mechanism the lab knows:
first price, second price, dynamic posted price, the split block, the
temperature-softmax sampler, and the randomized two-set rule.
"""

import tfmlab as T

# A ten-transaction pool: a couple of zero-fee entries, the rest paying.
pool = T.Mempool(
    [T.Transaction(i, 1.0, float(b), float(b))
     for i, b in enumerate([6, 5, 4, 3, 2, 1, 0, 0, 7, 2])]
)
CAPACITY = 4.0

mechanisms = {
    "first price": T.MechanismSpec.first_price(),
    "second price": T.MechanismSpec.second_price(),
    "posted price (base fee 2)": T.MechanismSpec.eip1559(2.0),
    "split block (alpha 1/2, zero-fee section)": T.MechanismSpec.split_block(0.5),
    "softmax (temperature 1)": T.MechanismSpec.stfm(1.0),
    "two-set randomized (bias 0.3)": T.MechanismSpec.rtfm(0.3),
}

for name, spec in mechanisms.items():
    out = T.run_mechanism(spec, pool, CAPACITY, seed=7)
    picked = ",".join(str(t) for t in sorted(out.allocation.selected))
    print(f"{name:44s} block=[{picked:12s}] miner_utility={out.miner_utility:6.2f}"
          + (f" toss={out.coin_toss}" if out.coin_toss is not None else ""))

# Per-transaction view for the posted-price mechanism: payment plus burn
# always reconstructs the bid.
out = T.run_mechanism(T.MechanismSpec.eip1559(2.0), pool, CAPACITY)
print("\nposted price detail:")
for t in out.allocation.selected:
    tx = pool.get(t)
    print(f"  tx {t}: bid {tx.bid:.0f} -> miner {out.payment_per_unit[t]:.0f}"
          f" + burned {out.burn_per_unit[t]:.0f}, user utility {out.user_utilities[t]:.0f}")
