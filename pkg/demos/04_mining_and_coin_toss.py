"""
Desk-scale mining and the verifiable coin toss
==============================================

Mine a short chain at an easy target, show that anyone can recompute the
block hash and toss from the header alone, and check the toss frequency
against its bias.
"""

import math

import tfmlab as T

# target 2^245 keeps expected work around 2^11 hashes per block
difficulty = T.Difficulty(target=1 << 245, phi_num=1, phi_den=4)

blocks = T.mine_chain(8, difficulty, seed=2)
print("height  nonce                 toss  confirmed")
for blk in blocks:
    which = "uniform-set" if blk.toss == 0 else "optimal-set"
    print(f"{blk.header.height:>6}  {blk.header.nonce:<20}  {blk.toss}     {which}")

# third-party verification: hash the serialized header, re-derive the toss
blk = blocks[0]
assert T.hash_bytes(blk.header.serialize()) == blk.block_hash
assert T.coin_toss(blk.block_hash, difficulty) == blk.toss
print("\nheader re-hash and toss re-derivation verified for block 0")

# frequency check over a batch of independent blocks
batch = T.mine_many(2000, difficulty, seed=77, workers=2)
freq = sum(b.toss == 0 for b in batch) / len(batch)
se = math.sqrt(0.25 * 0.75 / len(batch))
print(f"uniform-set frequency over {len(batch)} blocks: {freq:.4f}"
      f" (bias 0.25, three standard errors = {3 * se:.4f})")

print("\nchain log:")
print(T.chain_log(blocks[:3]), end="")
