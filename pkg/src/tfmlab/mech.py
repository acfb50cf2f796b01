"""Mechanism layer: allocation + payment + burning rules and the utilities.

A mechanism is specified by :class:`MechanismSpec` and executed through
:func:`run_mechanism`, which returns per-transaction payments/burns, the
miner's utility (fee income from real transactions minus burn on the miner's
own fakes), and each user's quasi-linear utility
``(valuation - payment - burn) * size`` when included, zero otherwise.

Payment rules:

* first price: every included transaction pays its own per-unit bid;
* second price: every included transaction pays the lowest winning bid;
* posted price: pays ``bid - base_fee`` to the miner and burns ``base_fee``
  per unit.  Transactions bidding below the base fee are filtered out of the
  candidate set up front: including them would force a negative payment.

The split-block rule prices its reserved section at the posted constant
``delta`` and the randomized two-set rule pays nothing on the uniformly
sampled branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence

from .alloc import (
    EXHAUSTIVE_LIMIT,
    AllocationResult,
    SECTION_ONE_MINUS_ALPHA,
    SECTION_OPT,
    SECTION_RAND,
    SplitBlockConfig,
    optimal_allocate,
    splitblock_allocate,
    stfm_allocate,
    uniform_allocate,
)
from .errors import ConfigError, InfeasibleInclusionError, ParameterError
from .txpool import Mempool, SeedLike, Transaction, resolve_rng


class AllocationKind(Enum):
    OPTIMAL = "optimal"
    UNIFORM = "uniform"
    SPLIT_BLOCK = "splitblock"
    SOFTMAX = "softmax"
    RTFM = "rtfm"


class PaymentKind(Enum):
    FIRST_PRICE = "fpa"
    SECOND_PRICE = "spa"
    POSTED_PRICE = "posted"


class BurnKind(Enum):
    NONE = "none"
    POSTED_PRICE = "posted"


class MechType(Enum):
    DETERMINISTIC = "deterministic"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class MechanismSpec:
    """Complete description of a fee mechanism."""

    allocation: AllocationKind
    payment: PaymentKind = PaymentKind.FIRST_PRICE
    burning: BurnKind = BurnKind.NONE
    gamma: Optional[float] = None
    phi: Optional[float] = None
    split: Optional[SplitBlockConfig] = None
    base_fee: Optional[float] = None

    def __post_init__(self) -> None:
        if self.allocation is AllocationKind.SOFTMAX:
            if self.gamma is None or not self.gamma > 0:
                raise ParameterError("softmax allocation needs gamma > 0")
        if self.allocation is AllocationKind.RTFM:
            if self.phi is None or not 0 <= self.phi <= 1:
                raise ParameterError("randomized two-set allocation needs phi in [0, 1]")
        if self.allocation is AllocationKind.SPLIT_BLOCK and self.split is None:
            raise ParameterError("split-block allocation needs a SplitBlockConfig")
        if self.burning is BurnKind.POSTED_PRICE and self.payment is not PaymentKind.POSTED_PRICE:
            raise ParameterError("posted-price burning requires posted-price payment")
        if self.payment is PaymentKind.POSTED_PRICE:
            if self.base_fee is None or self.base_fee < 0:
                raise ParameterError("posted-price payment needs base_fee >= 0")

    @property
    def mech_type(self) -> MechType:
        if self.allocation in (AllocationKind.SOFTMAX, AllocationKind.RTFM, AllocationKind.UNIFORM):
            return MechType.RANDOMIZED
        return MechType.DETERMINISTIC

    # Common mechanisms, by their usual names.
    @classmethod
    def first_price(cls) -> "MechanismSpec":
        return cls(AllocationKind.OPTIMAL, PaymentKind.FIRST_PRICE)

    @classmethod
    def second_price(cls) -> "MechanismSpec":
        return cls(AllocationKind.OPTIMAL, PaymentKind.SECOND_PRICE)

    @classmethod
    def eip1559(cls, base_fee: float) -> "MechanismSpec":
        return cls(
            AllocationKind.OPTIMAL,
            PaymentKind.POSTED_PRICE,
            BurnKind.POSTED_PRICE,
            base_fee=base_fee,
        )

    @classmethod
    def split_block(cls, alpha: float, delta: float = 0.0, base_fee: Optional[float] = None) -> "MechanismSpec":
        """BitcoinF-style split block; delta=0 is the zero-fee variant."""
        if base_fee:
            return cls(
                AllocationKind.SPLIT_BLOCK,
                PaymentKind.POSTED_PRICE,
                BurnKind.POSTED_PRICE,
                split=SplitBlockConfig(alpha, delta),
                base_fee=base_fee,
            )
        return cls(AllocationKind.SPLIT_BLOCK, split=SplitBlockConfig(alpha, delta))

    @classmethod
    def uniform(cls) -> "MechanismSpec":
        return cls(AllocationKind.UNIFORM, PaymentKind.FIRST_PRICE)

    @classmethod
    def stfm(cls, gamma: float, payment: PaymentKind = PaymentKind.FIRST_PRICE,
             base_fee: Optional[float] = None) -> "MechanismSpec":
        burn = BurnKind.POSTED_PRICE if payment is PaymentKind.POSTED_PRICE else BurnKind.NONE
        return cls(AllocationKind.SOFTMAX, payment, burn, gamma=gamma, base_fee=base_fee)

    @classmethod
    def rtfm(cls, phi: float, payment: PaymentKind = PaymentKind.FIRST_PRICE,
             base_fee: Optional[float] = None) -> "MechanismSpec":
        burn = BurnKind.POSTED_PRICE if payment is PaymentKind.POSTED_PRICE else BurnKind.NONE
        return cls(AllocationKind.RTFM, payment, burn, phi=phi, base_fee=base_fee)


@dataclass(frozen=True)
class MechanismOutcome:
    allocation: AllocationResult
    payment_per_unit: Dict[int, float]
    burn_per_unit: Dict[int, float]
    miner_utility: float
    user_utilities: Dict[int, float]
    coin_toss: Optional[int] = None


@dataclass(frozen=True)
class BaseFeeState:
    """Dynamic posted price; nudged up or down by block fullness."""

    lam: float
    step: float = 0.125

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ParameterError("base fee must be non-negative")
        if not 0 < self.step < 1:
            raise ParameterError("step must lie in (0, 1)")


def update_base_fee(state: BaseFeeState, block_total_size, capacity_target) -> BaseFeeState:
    """Raise the base fee by `step` on an over-target block, lower it otherwise."""
    factor = 1 + state.step if block_total_size > capacity_target else 1 - state.step
    return BaseFeeState(state.lam * factor, state.step)


def is_excessively_low(lam: float, m: Mempool, capacity) -> bool:
    """True when all demand valued above the base fee already fits the block."""
    demand = sum(tx.size for tx in m if tx.valuation > lam)
    return demand <= capacity


def miner_utility(block_txs: Iterable[Transaction], fakes: frozenset, p: Dict[int, float],
                  q: Dict[int, float]) -> float:
    """Fee income from included real transactions minus burn on included fakes."""
    revenue = 0.0
    burn_cost = 0.0
    for tx in block_txs:
        if tx.id in fakes or tx.fake:
            burn_cost += tx.size * q.get(tx.id, 0.0)
        else:
            revenue += tx.size * p[tx.id]
    return revenue - burn_cost


def _posted_eligible(pool: Mempool, lam: float) -> Mempool:
    return Mempool([tx for tx in pool if tx.bid >= lam])


def _auto_exact(pool: Mempool) -> bool:
    return len(pool) <= EXHAUSTIVE_LIMIT


def _objective_payment(spec: MechanismSpec, pool: Mempool) -> Optional[Dict[int, float]]:
    if spec.payment is PaymentKind.POSTED_PRICE:
        return {tx.id: tx.bid - spec.base_fee for tx in pool}
    return None  # rank by bid


def _price_included(spec: MechanismSpec, pool_by_id, included_ids, sections=None):
    """Payment and burn per unit for every included transaction."""
    p: Dict[int, float] = {}
    q: Dict[int, float] = {}
    main_ids = list(included_ids)
    posted_ids = []
    if sections:
        main_ids = [t for t in included_ids if sections.get(t) != SECTION_ONE_MINUS_ALPHA]
        posted_ids = [t for t in included_ids if sections.get(t) == SECTION_ONE_MINUS_ALPHA]
    if spec.payment is PaymentKind.SECOND_PRICE and main_ids:
        lowest_winning = min(pool_by_id[t].bid for t in main_ids)
    for t in main_ids:
        tx = pool_by_id[t]
        if spec.payment is PaymentKind.FIRST_PRICE:
            p[t], q[t] = tx.bid, 0.0
        elif spec.payment is PaymentKind.SECOND_PRICE:
            p[t], q[t] = lowest_winning, 0.0
        else:
            if tx.bid < spec.base_fee:
                raise InfeasibleInclusionError(
                    f"transaction {t} bids {tx.bid} below the base fee {spec.base_fee}"
                )
            p[t], q[t] = tx.bid - spec.base_fee, spec.base_fee
    delta = spec.split.delta if spec.split else 0.0
    for t in posted_ids:
        p[t], q[t] = delta, 0.0
    return p, q


def run_mechanism(
    spec: MechanismSpec,
    m: Mempool,
    capacity,
    fakes: Sequence[Transaction] = (),
    seed: SeedLike = 0,
    rtfm_toss: Optional[int] = None,
    exact: Optional[bool] = None,
    splitblock_demote: Optional[bool] = None,
) -> MechanismOutcome:
    """Execute one block of the mechanism over the pool plus miner fakes.

    `fakes` must carry ``fake=True`` and ids disjoint from the real pool; they
    participate in allocation like anyone else, their payments route back to
    the miner, and only their burn is a real cost.  For the randomized
    two-set rule, `rtfm_toss` can pin the branch (0 = zero-pay uniform set,
    1 = optimal set) instead of drawing it from the seed.
    """
    for tx in fakes:
        if not tx.fake:
            raise ParameterError(f"fake transaction {tx.id} must carry fake=True")
        if tx.id in m:
            raise ParameterError(f"fake transaction id {tx.id} collides with the mempool")
    rng = resolve_rng(seed)
    pool = m.extend(fakes) if fakes else m
    pool_by_id = {tx.id: tx for tx in pool}
    fake_ids = frozenset(tx.id for tx in fakes)
    lam = spec.base_fee if spec.payment is PaymentKind.POSTED_PRICE else None

    toss: Optional[int] = None
    sections = None

    if spec.allocation is AllocationKind.OPTIMAL:
        cand = _posted_eligible(pool, lam) if lam is not None else pool
        use_exact = _auto_exact(cand) if exact is None else exact
        allocation = optimal_allocate(
            cand, capacity, payment_per_unit=_objective_payment(spec, cand), exact=use_exact
        )
    elif spec.allocation is AllocationKind.UNIFORM:
        cand = _posted_eligible(pool, lam) if lam is not None else pool
        allocation = uniform_allocate(cand, capacity, rng)
    elif spec.allocation is AllocationKind.SOFTMAX:
        cand = _posted_eligible(pool, lam) if lam is not None else pool
        allocation = stfm_allocate(cand, capacity, spec.gamma, rng)
    elif spec.allocation is AllocationKind.SPLIT_BLOCK:
        alpha_pay = None
        if lam is not None:
            alpha_pay = {tx.id: tx.bid - lam for tx in m if tx.bid >= lam}
            real_pool = Mempool([tx for tx in m if tx.bid >= lam or tx.bid == spec.split.delta])
        else:
            real_pool = m
        allocation = splitblock_allocate(
            real_pool, capacity, spec.split, fake_fill=fakes, seed=rng,
            demote_to_posted=splitblock_demote, alpha_payment=alpha_pay, exact=exact,
        )
        sections = allocation.sections
    elif spec.allocation is AllocationKind.RTFM:
        toss = rtfm_toss
        if toss is None:
            toss = 0 if rng.random() < spec.phi else 1
        if toss == 0:
            raw = uniform_allocate(pool, capacity, rng)
            allocation = AllocationResult(
                raw.selected, raw.total_size, capacity, "rtfm",
                {t: SECTION_RAND for t in raw.selected},
            )
        else:
            rng.permutation(len(pool))  # keep the seed stream aligned across branches
            cand = _posted_eligible(pool, lam) if lam is not None else pool
            use_exact = _auto_exact(cand) if exact is None else exact
            raw = optimal_allocate(
                cand, capacity, payment_per_unit=_objective_payment(spec, cand), exact=use_exact
            )
            allocation = AllocationResult(
                raw.selected, raw.total_size, capacity, "rtfm",
                {t: SECTION_OPT for t in raw.selected},
            )
    else:  # pragma: no cover
        raise ParameterError(f"unknown allocation kind {spec.allocation}")

    if toss == 0:
        p = {t: 0.0 for t in allocation.selected}
        q = {t: 0.0 for t in allocation.selected}
    else:
        p, q = _price_included(spec, pool_by_id, allocation.selected, sections)

    block_txs = [pool_by_id[t] for t in allocation.selected]
    u_miner = miner_utility(block_txs, fake_ids, p, q)
    users: Dict[int, float] = {}
    included = allocation.selected_set
    for tx in m:
        if tx.id in included:
            users[tx.id] = (tx.valuation - p[tx.id] - q[tx.id]) * tx.size
        else:
            users[tx.id] = 0.0
    return MechanismOutcome(allocation, p, q, u_miner, users, toss)


_ALLOC_NAMES = {k.value: k for k in AllocationKind}
_PAY_NAMES = {k.value: k for k in PaymentKind}
_BURN_NAMES = {k.value: k for k in BurnKind}


def spec_to_config(spec: MechanismSpec) -> str:
    """Flat ``key=value`` text for a mechanism spec."""
    lines = [f"allocation={spec.allocation.value}", f"payment={spec.payment.value}",
             f"burning={spec.burning.value}"]
    if spec.gamma is not None:
        lines.append(f"gamma={spec.gamma:g}")
    if spec.phi is not None:
        lines.append(f"phi={spec.phi:g}")
    if spec.base_fee is not None:
        lines.append(f"lambda={spec.base_fee:g}")
    if spec.split is not None:
        lines.append(f"alpha={spec.split.alpha:g}")
        lines.append(f"delta={spec.split.delta:g}")
    return "\n".join(lines) + "\n"


def spec_from_config(text: str) -> MechanismSpec:
    """Parse the flat key=value mechanism format; unknown keys are rejected."""
    fields: Dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise ConfigError(f"duplicate config key {key!r}")
        fields[key] = value
    known = {"allocation", "payment", "burning", "gamma", "phi", "lambda", "alpha", "delta"}
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown mechanism config keys: {sorted(unknown)}")
    if "allocation" not in fields:
        raise ConfigError("config is missing the allocation key")
    alloc = _ALLOC_NAMES.get(fields["allocation"])
    if alloc is None:
        raise ConfigError(f"unknown allocation {fields['allocation']!r}")
    payment = _PAY_NAMES.get(fields.get("payment", "fpa"))
    if payment is None:
        raise ConfigError(f"unknown payment {fields.get('payment')!r}")
    default_burn = "posted" if payment is PaymentKind.POSTED_PRICE else "none"
    burning = _BURN_NAMES.get(fields.get("burning", default_burn))
    if burning is None:
        raise ConfigError(f"unknown burning {fields.get('burning')!r}")

    def fval(key):
        return float(fields[key]) if key in fields else None

    split = None
    if alloc is AllocationKind.SPLIT_BLOCK:
        if "alpha" not in fields:
            raise ConfigError("splitblock config needs alpha")
        split = SplitBlockConfig(float(fields["alpha"]), float(fields.get("delta", 0.0)))
    try:
        return MechanismSpec(alloc, payment, burning, gamma=fval("gamma"), phi=fval("phi"),
                             split=split, base_fee=fval("lambda"))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
