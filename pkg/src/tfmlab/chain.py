"""Desk-scale chain layer: SHA-256, Merkle trees, mining, and the coin toss.

Block headers serialize canonically as

    parent_hash(32) || root_rand(32) || root_opt(32) || height(8 BE) || nonce(8 BE)

so any party can recompute the block hash and the toss outcome.  The toss
threshold ``floor(phi_num * target / phi_den)`` is computed in exact integer
arithmetic; a mined hash below it confirms the uniformly sampled set (toss 0),
anything else confirms the optimal set (toss 1).

Nonce scanning prefers the small C helper (OpenSSL, releases the GIL) and
falls back to pure hashlib with identical semantics.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import DomainError, MiningTimeoutError, ParameterError

try:  # compiled fast path; optional
    from . import _noncesearch
except ImportError:  # pragma: no cover - depends on build environment
    _noncesearch = None

HASH_BYTES = 32
DEFAULT_TARGET = 1 << 240  # about 2**16 expected trials per block
DEFAULT_MAX_TRIALS = 1 << 24


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest."""
    return hashlib.sha256(data).digest()


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Root of the binary hash tree over `leaves` (in order).

    Leaf nodes are the hashes of the leaf byte strings, each parent hashes the
    concatenation of its children, and a lone node at the end of a level is
    paired with itself.
    """
    if not leaves:
        raise DomainError("merkle root of an empty leaf list is undefined")
    level: List[bytes] = [hash_bytes(leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class Difficulty:
    """Mining target plus the toss bias as an exact rational phi_num/phi_den."""

    target: int = DEFAULT_TARGET
    phi_num: int = 1
    phi_den: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.target <= 1 << 256:
            raise ParameterError("target must be a positive 256-bit bound")
        if self.phi_den <= 0 or not 0 <= self.phi_num <= self.phi_den:
            raise ParameterError(
                f"toss bias must satisfy 0 <= num <= den, got {self.phi_num}/{self.phi_den}"
            )

    @classmethod
    def from_phi(cls, phi_num: int, phi_den: int, target: int = DEFAULT_TARGET) -> "Difficulty":
        return cls(target, phi_num, phi_den)

    @property
    def phi(self) -> float:
        return self.phi_num / self.phi_den

    @property
    def toss_threshold(self) -> int:
        return self.phi_num * self.target // self.phi_den


@dataclass(frozen=True)
class BlockHeader:
    parent_hash: bytes
    root_rand: bytes
    root_opt: bytes
    height: int
    nonce: int

    def __post_init__(self) -> None:
        for name in ("parent_hash", "root_rand", "root_opt"):
            if len(getattr(self, name)) != HASH_BYTES:
                raise ParameterError(f"{name} must be {HASH_BYTES} bytes")
        if not 0 <= self.height < 1 << 64:
            raise ParameterError("height must fit in 64 bits")
        if not 0 <= self.nonce < 1 << 64:
            raise ParameterError("nonce must fit in 64 bits")

    def prefix_bytes(self) -> bytes:
        """Serialization of everything before the nonce."""
        return (
            self.parent_hash
            + self.root_rand
            + self.root_opt
            + self.height.to_bytes(8, "big")
        )

    def serialize(self) -> bytes:
        return self.prefix_bytes() + self.nonce.to_bytes(8, "big")


@dataclass(frozen=True)
class MinedBlock:
    header: BlockHeader
    block_hash: bytes
    toss: int
    confirmed_root: bytes

    def log_line(self) -> str:
        h = self.header
        return ",".join(
            [
                str(h.height),
                h.parent_hash.hex(),
                h.root_rand.hex(),
                h.root_opt.hex(),
                str(h.nonce),
                self.block_hash.hex(),
                str(self.toss),
            ]
        )


def coin_toss(block_hash: bytes, difficulty: Difficulty) -> int:
    """Toss outcome for a mined hash: 0 below the phi threshold, else 1.

    Only hashes below the mining target are admissible; over those the hash
    value is uniform, so outcome 0 occurs with probability phi exactly.
    """
    value = int.from_bytes(block_hash, "big")
    if value >= difficulty.target:
        raise DomainError("coin toss is only defined for a mined (below-target) hash")
    return 0 if value < difficulty.toss_threshold else 1


def _search_python(prefix: bytes, start: int, max_trials: int, target32: bytes):
    nonce = start
    for _ in range(max_trials):
        nb = nonce.to_bytes(8, "big")
        digest = hashlib.sha256(prefix + nb).digest()
        if digest < target32:
            return nonce, digest
        nonce = (nonce + 1) & 0xFFFFFFFFFFFFFFFF
    return None


def _search(prefix: bytes, start: int, max_trials: int, target: int):
    if target >= 1 << 256:
        # every digest clears the target; the first nonce mines
        digest = hashlib.sha256(prefix + start.to_bytes(8, "big")).digest()
        return start, digest
    target32 = target.to_bytes(32, "big")
    if _noncesearch is not None:
        return _noncesearch.search(prefix, start, max_trials, target32)
    return _search_python(prefix, start, max_trials, target32)


def mine_block(
    parent_hash: bytes,
    root_rand: bytes,
    root_opt: bytes,
    difficulty: Difficulty,
    seed: int,
    height: int = 0,
    max_trials: int = DEFAULT_MAX_TRIALS,
) -> MinedBlock:
    """Scan nonces from a seeded start until the header hash beats the target."""
    start = random.Random(seed).getrandbits(64)
    template = BlockHeader(parent_hash, root_rand, root_opt, height, 0)
    found = _search(template.prefix_bytes(), start, max_trials, difficulty.target)
    if found is None:
        raise MiningTimeoutError(
            f"no nonce below target within {max_trials} trials (height {height})"
        )
    nonce, digest = found
    header = BlockHeader(parent_hash, root_rand, root_opt, height, nonce)
    toss = coin_toss(digest, difficulty)
    confirmed = root_rand if toss == 0 else root_opt
    return MinedBlock(header, digest, toss, confirmed)


def mine_chain(
    k: int,
    difficulty: Difficulty,
    seed: int,
    genesis_hash: bytes = b"\x00" * 32,
    roots: Optional[Iterable[Tuple[bytes, bytes]]] = None,
    max_trials: int = DEFAULT_MAX_TRIALS,
) -> List[MinedBlock]:
    """Mine `k` blocks in sequence, each linking to its predecessor.

    Per-height Merkle roots may be supplied; by default each height gets
    distinct placeholder roots derived from the height.
    """
    blocks: List[MinedBlock] = []
    parent = genesis_hash
    root_iter = iter(roots) if roots is not None else None
    for h in range(k):
        if root_iter is None:
            root_rand = hash_bytes(b"rand" + h.to_bytes(8, "big"))
            root_opt = hash_bytes(b"opt" + h.to_bytes(8, "big"))
        else:
            root_rand, root_opt = next(root_iter)
        block = mine_block(parent, root_rand, root_opt, difficulty, seed=seed + h, height=h,
                           max_trials=max_trials)
        blocks.append(block)
        parent = block.block_hash
    return blocks


def mine_many(
    count: int,
    difficulty: Difficulty,
    seed: int,
    parent_hash: bytes = b"\x00" * 32,
    max_trials: int = DEFAULT_MAX_TRIALS,
    workers: int = 1,
) -> List[MinedBlock]:
    """Mine `count` independent blocks (distinct roots, shared parent).

    Results are ordered by block index regardless of scheduling, so the output
    is deterministic for any worker count.  The C search loop releases the
    GIL, letting a thread pool use several cores.
    """

    def job(i: int) -> MinedBlock:
        root_rand = hash_bytes(b"rand" + i.to_bytes(8, "big"))
        root_opt = hash_bytes(b"opt" + i.to_bytes(8, "big"))
        return mine_block(
            parent_hash, root_rand, root_opt, difficulty,
            seed=seed + i, height=i, max_trials=max_trials,
        )

    if workers <= 1:
        return [job(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(count)))


def chain_log(blocks: Iterable[MinedBlock]) -> str:
    """Line-delimited log: height,parent_hash,root_rand,root_opt,nonce,block_hash,toss."""
    return "".join(b.log_line() + "\n" for b in blocks)
