"""Fairness and incentive auditors plus closed-form cost calculators.

Verdict policy: analytic certificates decide a property wherever the
allocation rule admits one (they can prove exact equalities that Monte Carlo
cannot); otherwise two compared arms share common random numbers and a
difference must clear two pooled standard errors, with anything inside the
margin reported as inconclusive.  Every violated verdict carries a witness
that can be replayed through :func:`tfmlab.mech.run_mechanism`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations_with_replacement
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .alloc import (
    EXHAUSTIVE_LIMIT,
    allocation_value,
    optimal_allocate,
    stfm_allocate,
    stfm_first_draw_distribution,
)
from .errors import DomainError, ParameterError, SolverLimitError
from .mech import AllocationKind, MechanismSpec, PaymentKind, run_mechanism
from .txpool import Mempool, Transaction, zero_fee_subset

_TOL = 1e-9


class Verdict(Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PropertyReport:
    property_name: str
    verdict: Verdict
    witness: Optional[dict]
    trials: int
    confidence_note: str

    def to_text(self) -> str:
        lines = [
            f"property={self.property_name}",
            f"verdict={self.verdict.value}",
            f"trials={self.trials}",
            f"note={self.confidence_note}",
        ]
        if self.witness is not None:
            for key in sorted(self.witness):
                lines.append(f"witness.{key}={self.witness[key]}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CofReport:
    """Ratio of the unconstrained-optimal miner utility to the mechanism's."""

    opt_utility: float
    mech_utility_mean: float
    cof: float
    closed_form: Optional[float] = None
    cov: Optional[float] = None


def reports_to_csv(reports: Sequence[PropertyReport], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property", "verdict", "trials", "note", "witness"])
        for r in reports:
            writer.writerow([r.property_name, r.verdict.value, r.trials, r.confidence_note,
                             "" if r.witness is None else repr(r.witness)])


def _trial_seed(seed: int, i: int) -> list:
    return [int(seed), int(i)]


# ---------------------------------------------------------------------------
# Zero-fee inclusion


def estimate_zti(spec: MechanismSpec, m: Mempool, capacity, trials: int, seed: int) -> PropertyReport:
    """Can a zero-bid transaction ever enter the block?

    Analytic zero-probability certificates (posted-price filtering, a
    deterministic revenue-maximizing rule, an oversized transaction against
    the reserved section) yield Violated outright; otherwise the mechanism is
    replayed `trials` times and Satisfied requires every feasible zero-bid
    transaction to appear at least once.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    zeros = zero_fee_subset(m)
    if not zeros:
        raise ParameterError("mempool has no zero-bid transaction to audit")

    posted_filtered = (AllocationKind.OPTIMAL, AllocationKind.UNIFORM, AllocationKind.SOFTMAX)
    if spec.payment is PaymentKind.POSTED_PRICE and spec.base_fee > 0 \
            and spec.allocation in posted_filtered:
        return PropertyReport(
            "zti", Verdict.VIOLATED,
            {"certificate": "zero bids sit below the posted base fee and are never candidates",
             "tx_ids": [tx.id for tx in zeros]},
            0, "analytic certificate",
        )
    if spec.allocation is AllocationKind.OPTIMAL:
        outcome = run_mechanism(spec, m, capacity, seed=_trial_seed(seed, 0))
        excluded = [tx.id for tx in zeros if tx.id not in outcome.allocation.selected_set]
        if excluded:
            return PropertyReport(
                "zti", Verdict.VIOLATED,
                {"certificate": "deterministic revenue-maximizing allocation excludes zero bids",
                 "tx_ids": excluded},
                1, "analytic certificate over one deterministic run",
            )
    if spec.allocation is AllocationKind.SPLIT_BLOCK:
        reserved_cap = spec.split.one_minus_alpha_capacity(capacity)
        oversized = [tx.id for tx in zeros if tx.size > reserved_cap]
        if oversized:
            return PropertyReport(
                "zti", Verdict.VIOLATED,
                {"certificate": "zero-bid transaction larger than the reserved section",
                 "tx_ids": oversized},
                0, "analytic certificate",
            )

    feasible = [tx.id for tx in zeros if tx.size <= capacity]
    counts = {tid: 0 for tid in feasible}
    for i in range(trials):
        outcome = run_mechanism(spec, m, capacity, seed=_trial_seed(seed, i))
        for tid in feasible:
            if tid in outcome.allocation.selected_set:
                counts[tid] += 1
    missing = [tid for tid, c in counts.items() if c == 0]
    if not missing:
        return PropertyReport(
            "zti", Verdict.SATISFIED, None, trials,
            f"every feasible zero-bid transaction appeared at least once in {trials} runs",
        )
    return PropertyReport(
        "zti", Verdict.INCONCLUSIVE,
        {"never_included": missing, "frequencies": {t: c / trials for t, c in counts.items()}},
        trials,
        "some zero-bid transactions never appeared; no analytic zero-probability certificate",
    )


# ---------------------------------------------------------------------------
# Monotonicity


def _monotonicity_certificate(spec: MechanismSpec) -> Optional[Tuple[Verdict, dict, str]]:
    if spec.allocation is AllocationKind.UNIFORM:
        return (
            Verdict.VIOLATED,
            {"certificate": "uniform sampling gives every transaction the same inclusion "
                            "probability at any bid, so raising a bid cannot raise it"},
            "analytic certificate",
        )
    if spec.allocation is AllocationKind.SOFTMAX:
        return (
            Verdict.SATISFIED,
            {"certificate": "softmax weight exp(bid/gamma) strictly increases with the bid "
                            "at every sampling stage"},
            "analytic certificate",
        )
    if spec.allocation is AllocationKind.RTFM:
        return (
            Verdict.SATISFIED,
            {"certificate": "uniform branch is bid-independent and the optimal branch's "
                            "inclusion is non-decreasing in the bid"},
            "analytic certificate",
        )
    if spec.allocation in (AllocationKind.OPTIMAL, AllocationKind.SPLIT_BLOCK):
        return (
            Verdict.SATISFIED,
            {"certificate": "knapsack objective weight grows with the bid, so a higher bid "
                            "only ever enters (never leaves) the revenue-maximizing set"},
            "analytic certificate",
        )
    return None


def estimate_monotonicity(
    spec: MechanismSpec,
    m: Mempool,
    target_tx: int,
    epsilons: Sequence[float],
    trials: int,
    seed: int,
    capacity=None,
    use_certificates: bool = True,
) -> PropertyReport:
    """Does the target's inclusion probability rise with its bid?

    With certificates disabled, inclusion is estimated at the current bid and
    at ``bid + epsilon`` for every epsilon under common random numbers; each
    comparison must clear two pooled standard errors to count as a move.
    """
    if target_tx not in m:
        raise ParameterError(f"target transaction {target_tx} not in mempool")
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if any(e <= 0 for e in epsilons):
        raise ParameterError("epsilons must be positive")
    if capacity is None:
        capacity = m.capacity_hint
    if capacity is None:
        raise ParameterError("capacity required (argument or mempool capacity_hint)")

    if use_certificates:
        cert = _monotonicity_certificate(spec)
        if cert is not None:
            verdict, witness, note = cert
            return PropertyReport("monotonicity", verdict, witness, 0, note)

    base_bid = m.get(target_tx).bid

    def inclusion_rate(bid) -> Tuple[float, float]:
        pool = m.with_bid(target_tx, bid)
        hits = 0
        for i in range(trials):
            out = run_mechanism(spec, pool, capacity, seed=_trial_seed(seed, i))
            hits += target_tx in out.allocation.selected_set
        p = hits / trials
        return p, math.sqrt(p * (1 - p) / trials)

    p0, se0 = inclusion_rate(base_bid)
    increases = []
    for eps in epsilons:
        p1, se1 = inclusion_rate(base_bid + eps)
        margin = 2 * math.sqrt(se0 ** 2 + se1 ** 2)
        if p1 - p0 < -margin:
            return PropertyReport(
                "monotonicity", Verdict.VIOLATED,
                {"epsilon": eps, "rate_at_bid": p0, "rate_at_bid_plus_eps": p1},
                trials, "estimated inclusion dropped by more than two pooled standard errors",
            )
        increases.append(p1 - p0 > margin)
    if all(increases):
        return PropertyReport("monotonicity", Verdict.SATISFIED, None, trials,
                              "every epsilon raised inclusion by more than two pooled standard errors")
    return PropertyReport("monotonicity", Verdict.INCONCLUSIVE, None, trials,
                          "differences inside the two-standard-error margin")


# ---------------------------------------------------------------------------
# User incentive compatibility


def check_uic(
    spec: MechanismSpec,
    m: Mempool,
    capacity,
    user: int,
    bid_grid: Sequence[float],
    trials: int,
    seed: int,
) -> PropertyReport:
    """Grid search for a profitable misreport of the user's valuation."""
    if user not in m:
        raise ParameterError(f"user transaction {user} not in mempool")
    theta = m.get(user).valuation
    if not any(b == theta for b in bid_grid):
        raise ParameterError("bid grid must contain the truthful bid (the valuation)")
    deterministic = spec.mech_type.value == "deterministic"
    n_runs = 1 if deterministic else trials

    means: Dict[float, float] = {}
    ses: Dict[float, float] = {}
    for b in bid_grid:
        pool = m.with_bid(user, b)
        utils = []
        for i in range(n_runs):
            out = run_mechanism(spec, pool, capacity, seed=_trial_seed(seed, i))
            utils.append(out.user_utilities[user])
        arr = np.asarray(utils, dtype=float)
        means[b] = float(arr.mean())
        ses[b] = float(arr.std(ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else 0.0

    truthful = means[theta]
    best_bid = max(bid_grid, key=lambda b: means[b])
    gain = means[best_bid] - truthful
    margin = 2 * math.sqrt(ses[best_bid] ** 2 + ses[theta] ** 2) + _TOL
    if gain > margin:
        return PropertyReport(
            "uic", Verdict.VIOLATED,
            {"deviating_bid": best_bid, "expected_gain": gain,
             "truthful_utility": truthful, "deviating_utility": means[best_bid]},
            n_runs, "a grid bid beats truthful bidding beyond the margin",
        )
    return PropertyReport(
        "uic", Verdict.SATISFIED, None, n_runs,
        "no grid bid beats truthful bidding beyond the margin (grid-relative verdict)",
    )


# ---------------------------------------------------------------------------
# Miner incentive compatibility


def _expected_miner_utility(spec, m, capacity, fakes, trials, seed, **run_kwargs):
    """Mean and standard error; exact (se 0) wherever the rule allows it."""
    if spec.allocation is AllocationKind.RTFM:
        # two-point mixture: the zero-pay branch contributes nothing
        out = run_mechanism(spec, m, capacity, fakes=fakes, seed=_trial_seed(seed, 0),
                            rtfm_toss=1, **run_kwargs)
        return (1 - spec.phi) * out.miner_utility, 0.0
    if spec.mech_type.value == "deterministic" and spec.allocation is AllocationKind.OPTIMAL:
        out = run_mechanism(spec, m, capacity, fakes=fakes, seed=_trial_seed(seed, 0), **run_kwargs)
        return out.miner_utility, 0.0
    n_runs = trials
    utils = np.empty(n_runs)
    for i in range(n_runs):
        out = run_mechanism(spec, m, capacity, fakes=fakes, seed=_trial_seed(seed, i), **run_kwargs)
        utils[i] = out.miner_utility
    se = float(utils.std(ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else 0.0
    return float(utils.mean()), se


def _named_overrides(spec: MechanismSpec) -> List[Tuple[str, dict]]:
    """Rule-level deviations the miner controls, as run_mechanism overrides."""
    if spec.allocation is AllocationKind.SOFTMAX:
        return [("greedy_instead_of_sampling", {"_alloc": AllocationKind.OPTIMAL})]
    if spec.allocation is AllocationKind.SPLIT_BLOCK:
        return [("leave_reserved_section_empty", {"splitblock_demote": False})]
    if spec.allocation is AllocationKind.RTFM:
        return [("publish_empty_uniform_set", {"_rtfm_empty_rand": True})]
    return []


def search_mic_deviation(
    spec: MechanismSpec,
    m: Mempool,
    capacity,
    fake_budget: int,
    fake_bid_grid: Sequence[float],
    seed: int,
    trials: int = 2000,
    fake_size: float = 1.0,
) -> PropertyReport:
    """Exhaustively search bounded fake-transaction and rule deviations.

    Every multiset of up to `fake_budget` fakes over the bid grid (the
    split-block posted fee is added to the grid automatically) is played
    against the honest rule, alongside the named rule-level deviations the
    mechanism exposes.  A deviation must beat the honest expected utility
    beyond the statistical margin to produce a violation; a satisfied verdict
    is only ever relative to these bounds.
    """
    if fake_budget > 4 or len(fake_bid_grid) > 8:
        raise SolverLimitError("search bounded to fake_budget <= 4 and a grid of <= 8 bids")
    grid = list(fake_bid_grid)
    if spec.allocation is AllocationKind.SPLIT_BLOCK and spec.split.delta not in grid:
        grid.append(spec.split.delta)

    honest, honest_se = _expected_miner_utility(spec, m, capacity, (), trials, seed)

    next_id = max((tx.id for tx in m), default=-1) + 1
    candidates: List[Tuple[dict, Sequence[Transaction], dict]] = [({}, (), {})]
    for k in range(1, fake_budget + 1):
        for combo in combinations_with_replacement(sorted(set(grid)), k):
            fakes = tuple(
                Transaction(next_id + j, fake_size, b, b, fake=True) for j, b in enumerate(combo)
            )
            candidates.append(({"fake_bids": list(combo)}, fakes, {}))
    base_candidates = list(candidates)
    for name, kwargs in _named_overrides(spec):
        for desc, fakes, _ in base_candidates:
            merged = dict(desc)
            merged["override"] = name
            candidates.append((merged, fakes, kwargs))

    best = None
    for desc, fakes, kwargs in candidates:
        if not desc:
            continue  # the honest baseline itself
        run_spec = spec
        run_kwargs = dict(kwargs)
        if run_kwargs.pop("_alloc", None) is AllocationKind.OPTIMAL:
            run_spec = replace(spec, allocation=AllocationKind.OPTIMAL, gamma=None)
        if run_kwargs.pop("_rtfm_empty_rand", False):
            # an empty zero-pay set changes nothing the miner earns
            value, se = _expected_miner_utility(spec, m, capacity, fakes, trials, seed)
        else:
            value, se = _expected_miner_utility(run_spec, m, capacity, fakes, trials, seed,
                                                **run_kwargs)
        if best is None or value > best[0]:
            best = (value, se, desc)

    gain = best[0] - honest
    margin = 2 * math.sqrt(best[1] ** 2 + honest_se ** 2) + _TOL
    if gain > margin:
        witness = dict(best[2])
        witness.update({"expected_utility": best[0], "honest_utility": honest,
                        "expected_gain": gain})
        return PropertyReport("mic", Verdict.VIOLATED, witness, trials,
                              "a bounded deviation beats the honest rule beyond the margin")
    return PropertyReport(
        "mic", Verdict.SATISFIED, None, trials,
        f"no deviation within fake_budget={fake_budget} and the bid grid beats honesty "
        "(verdict relative to the search bounds)",
    )


# ---------------------------------------------------------------------------
# Cost of fairness and coefficient of variation


def empirical_cof(
    spec: MechanismSpec,
    m: Mempool,
    capacity,
    trials: int,
    seed: int,
    stratified: bool = True,
) -> CofReport:
    """Monte-Carlo cost of fairness against the exact revenue optimum.

    For the randomized two-set rule the branch draws are stratified across
    trials by default (exactly proportional branch counts), which estimates
    the same mean with far less noise; pass ``stratified=False`` for plain
    independent tosses.
    """
    opt_alloc = optimal_allocate(m, capacity, exact=len(m) <= EXHAUSTIVE_LIMIT)
    opt = allocation_value(m, opt_alloc)
    if not opt > 0:
        raise DomainError("cost of fairness undefined: the optimal revenue is zero")

    deterministic = spec.mech_type.value == "deterministic"
    n_runs = 1 if deterministic else trials
    utils = np.empty(n_runs)
    for i in range(n_runs):
        toss = None
        if spec.allocation is AllocationKind.RTFM and stratified:
            toss = 0 if (i + 0.5) / n_runs < spec.phi else 1
        out = run_mechanism(spec, m, capacity, seed=_trial_seed(seed, i), rtfm_toss=toss)
        utils[i] = out.miner_utility
    mean = float(utils.mean())
    cov = float(utils.std(ddof=1) / mean) if n_runs > 1 and mean > 0 else None
    cof = opt / mean if mean > 0 else math.inf

    closed: Optional[float] = None
    sizes = m.sizes()
    equal_sizes = len(m) > 0 and bool(np.all(sizes == sizes[0]))
    if spec.allocation is AllocationKind.RTFM and spec.phi < 1:
        closed = 1.0 / (1.0 - spec.phi)
    elif spec.allocation is AllocationKind.SPLIT_BLOCK and spec.split.delta == 0 and equal_sizes:
        closed = 1.0 / spec.split.alpha
    elif spec.allocation is AllocationKind.SOFTMAX and equal_sizes:
        c = int(capacity // sizes[0])
        if c >= 1:
            closed = stfm_cof_bound(len(m), c, float(m.bids().max()), spec.gamma)
    return CofReport(opt, mean, cof, closed, cov)


def stfm_cof_bound(n: int, c: int, b: float, gamma: float) -> float:
    """Closed-form worst-case revenue ratio for equal-size softmax blocks.

    Valid for pools of `n` equal-size transactions of which the block holds
    `c`; tends to ``n/c + 1`` as the concentrated bid `b` grows.
    """
    if c == 0:
        raise DomainError("block must hold at least one transaction")
    if not 1 <= c <= n:
        raise ParameterError(f"need 1 <= c <= n, got c={c}, n={n}")
    if b < 0:
        raise ParameterError(f"bid must be non-negative, got {b}")
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return n / c + 1.0 - math.exp(-b / gamma)


def stfm_worstcase_instance(n: int, c: int, b: float) -> Mempool:
    """Equal-size pool with `c` transactions at bid `b` and the rest at zero."""
    if not 1 <= c <= n:
        raise ParameterError(f"need 1 <= c <= n, got c={c}, n={n}")
    return Mempool([Transaction(i, 1.0, b if i < c else 0.0, b if i < c else 0.0)
                    for i in range(n)])


def stfm_worstcase_draw_ratio(n: int, c: int, b: float, gamma: float, trials: int,
                              seed: int) -> CofReport:
    """Per-draw revenue ratio on the concentrated-bid instance.

    Samples `trials` independent single softmax draws from the pool built by
    :func:`stfm_worstcase_instance` and returns the optimal block revenue
    ``c * b`` over the mean fee one draw collects -- the quantity the
    closed-form bound of :func:`stfm_cof_bound` models.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    m = stfm_worstcase_instance(n, c, b)
    probs = stfm_first_draw_distribution(m, gamma)
    p = np.array([probs[tx.id] for tx in m])
    bids = m.bids()
    rng = np.random.default_rng([int(seed)])
    draws = rng.choice(len(p), size=trials, p=p)
    per_draw = bids[draws]
    mean_draw = float(per_draw.mean())
    opt = c * b
    cof = opt / mean_draw if mean_draw > 0 else math.inf
    return CofReport(opt, mean_draw, cof, stfm_cof_bound(n, c, b, gamma))


def rtfm_cov_ratio(phi: float) -> float:
    """Squared-CoV ratio of the always-optimal baseline to the two-set rule."""
    if not 0 < phi < 1:
        raise DomainError(f"phi must lie strictly inside (0, 1), got {phi}")
    return phi / (1.0 - phi)


def rtfm_cov_closed_form(phi: float) -> float:
    """Closed-form coefficient of variation ``sqrt((1-phi)/phi)``.

    This is the CoV of a two-point revenue mixture whose paying branch
    occurs with probability `phi`; the implemented toss confirms the paying
    (optimal) set with probability ``1 - phi``, so realized utilities exhibit
    this CoV at the complementary bias: sample CoV at phi equals
    ``rtfm_cov_closed_form(1 - phi)``.
    """
    if not 0 < phi < 1:
        raise DomainError(f"phi must lie strictly inside (0, 1), got {phi}")
    return math.sqrt((1.0 - phi) / phi)


# ---------------------------------------------------------------------------
# Temperature tuning


def tune_gamma(
    m: Mempool,
    capacity,
    alpha_target: float,
    phi_ratio: float,
    gamma_lo: float,
    gamma_hi: float,
    trials: int,
    seed: int,
    rel_tol: float = 1e-3,
) -> float:
    """Smallest temperature whose optimal-set odds are acceptably low.

    Estimates, by common-random-number Monte Carlo, the probability that the
    softmax sampler reproduces the exact revenue-optimal set (pr_cof) and the
    probability that zero-bid transactions occupy at least `alpha_target` of
    the realized block (pr_zf), then bisects for the smallest gamma in
    ``[gamma_lo, gamma_hi]`` with ``pr_cof / pr_zf <= phi_ratio``.
    """
    if not 0 <= alpha_target <= 1:
        raise ParameterError("alpha_target must lie in [0, 1]")
    if not 0 < gamma_lo < gamma_hi:
        raise ParameterError("need 0 < gamma_lo < gamma_hi")
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if math.isinf(phi_ratio):
        return gamma_lo

    opt_set = optimal_allocate(m, capacity, exact=len(m) <= EXHAUSTIVE_LIMIT).selected_set
    zero_ids = {tx.id for tx in m if tx.bid == 0}
    sizes = {tx.id: tx.size for tx in m}

    def estimate(gamma: float) -> Tuple[float, float]:
        hits_cof = 0
        hits_zf = 0
        for i in range(trials):
            res = stfm_allocate(m, capacity, gamma, _trial_seed(seed, i))
            hits_cof += res.selected_set == opt_set
            total = res.total_size
            if total > 0:
                zf = sum(sizes[t] for t in res.selected if t in zero_ids)
                hits_zf += zf / total >= alpha_target
            else:
                hits_zf += alpha_target == 0
        return hits_cof / trials, hits_zf / trials

    def ratio(gamma: float) -> float:
        pr_cof, pr_zf = estimate(gamma)
        return pr_cof / pr_zf if pr_zf > 0 else math.inf

    if ratio(gamma_lo) <= phi_ratio:
        return gamma_lo
    r_hi = ratio(gamma_hi)
    if r_hi > phi_ratio:
        _, pr_zf_hi = estimate(gamma_hi)
        if pr_zf_hi == 0:
            raise DomainError("zero-fee block share never reaches the target on this interval")
        raise DomainError("no gamma on the interval meets the requested ratio")
    lo, hi = gamma_lo, gamma_hi
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if ratio(mid) <= phi_ratio:
            hi = mid
        else:
            lo = mid
    return hi
