import math

import numpy as np
import pytest
from scipy import integrate

from tfmlab import (
    BidDistribution,
    Mempool,
    ParameterError,
    Transaction,
    mempool_from_csv,
    mempool_to_csv,
    parse_distribution,
    sample_mempool,
    zero_fee_subset,
)


def test_sample_mempool_empty():
    m = sample_mempool(0, BidDistribution.uniform(0, 5), BidDistribution.constant(1), seed=7)
    assert len(m) == 0


def test_sample_mempool_deterministic():
    args = (50, BidDistribution.censored_gaussian(4, 3), BidDistribution.exponential(1))
    a = sample_mempool(*args, seed=123)
    b = sample_mempool(*args, seed=123)
    assert [tx.bid for tx in a] == [tx.bid for tx in b]
    assert [tx.size for tx in a] == [tx.size for tx in b]
    c = sample_mempool(*args, seed=124)
    assert [tx.bid for tx in a] != [tx.bid for tx in c]


def test_sample_mempool_censored_pool():
    m = sample_mempool(1000, BidDistribution.censored_gaussian(4, 3),
                       BidDistribution.constant(1), seed=1)
    assert len(m) == 1000
    assert m.ids() == tuple(range(1000))
    assert all(tx.size == 1.0 for tx in m)
    assert all(tx.bid >= 0 for tx in m)
    assert len(zero_fee_subset(m)) > 0


def test_sample_mempool_constant():
    m = sample_mempool(100, BidDistribution.constant(5), BidDistribution.constant(1), seed=3)
    assert all(tx.bid == 5.0 and tx.size == 1.0 for tx in m)
    # valuations default to bids
    assert all(tx.valuation == 5.0 for tx in m)


def test_separate_valuation_distribution():
    m = sample_mempool(40, BidDistribution.constant(1), BidDistribution.constant(1), seed=0,
                       valuations=BidDistribution.constant(9))
    assert all(tx.valuation == 9.0 for tx in m)


def test_censored_zero_atom_matches_quadrature_oracle():
    """Probability mass at zero equals the normal left tail below zero.

    The reference value is computed by numerical quadrature of the normal
    density, independent of the sampling path.
    """
    pdf = lambda x: math.exp(-0.5 * ((x - 4) / 3) ** 2) / (3 * math.sqrt(2 * math.pi))
    expected, _ = integrate.quad(pdf, -60, 0)
    draws = BidDistribution.censored_gaussian(4, 3).sample(np.random.default_rng(10), 1_000_000)
    atom = float(np.mean(draws == 0.0))
    assert abs(atom - expected) < 0.002
    assert abs(expected - 0.0912) < 5e-4


def test_truncated_gaussian_has_no_zero_atom():
    draws = BidDistribution.truncated_gaussian(4, 3).sample(np.random.default_rng(2), 200_000)
    assert draws.min() >= 0
    assert not np.any(draws == 0.0)


def test_zero_inflated_atom():
    dist = BidDistribution.zero_inflated(0.3, BidDistribution.uniform(0, 5))
    draws = dist.sample(np.random.default_rng(3), 200_000)
    assert abs(float(np.mean(draws == 0.0)) - 0.3) < 0.005
    assert dist.zero_probability() == pytest.approx(0.3)


@pytest.mark.parametrize("bad", [
    lambda: BidDistribution.uniform(3, 1),
    lambda: BidDistribution.uniform(-1, 1),
    lambda: BidDistribution.truncated_gaussian(0, 0),
    lambda: BidDistribution.exponential(0),
    lambda: BidDistribution.constant(-2),
    lambda: BidDistribution.zero_inflated(1.5, BidDistribution.constant(1)),
])
def test_invalid_distribution_parameters(bad):
    with pytest.raises(ParameterError):
        bad()


def test_parse_distribution_round_trip():
    for text in ["uniform(0,5)", "censored_gaussian(4,3)", "exponential(1.5)",
                 "constant(1)", "zero_inflated(0.3,exponential(1))"]:
        dist = parse_distribution(text)
        assert parse_distribution(dist.spec_string()) == dist
    with pytest.raises(ParameterError):
        parse_distribution("gaussian(1,2)")
    with pytest.raises(ParameterError):
        parse_distribution("uniform(0,5")


def test_transaction_invariants():
    with pytest.raises(ParameterError):
        Transaction(0, 0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        Transaction(0, 1.0, -1.0, 1.0)
    with pytest.raises(ParameterError):
        Transaction(0, 1.0, 1.0, -1.0)
    tx = Transaction(0, 2.0, 3.0, 3.0)
    assert tx.total_fee == 6.0


def test_mempool_rejects_duplicate_ids():
    with pytest.raises(ParameterError):
        Mempool([Transaction(1, 1.0, 0.0, 0.0), Transaction(1, 1.0, 1.0, 1.0)])


def test_zero_fee_subset_cases():
    txs = [Transaction(0, 1.0, 0.0, 0.0), Transaction(1, 1.0, 1.0, 1.0),
           Transaction(2, 1.0, 0.0, 0.0)]
    m = Mempool(txs)
    assert [t.id for t in zero_fee_subset(m)] == [0, 2]
    assert zero_fee_subset(Mempool(txs[1:2])) == []
    assert len(zero_fee_subset(Mempool([txs[0], txs[2]]))) == 2


def test_mempool_csv_round_trip(tmp_path):
    m = sample_mempool(30, BidDistribution.censored_gaussian(4, 3),
                       BidDistribution.exponential(1), seed=9)
    path = tmp_path / "pool.csv"
    mempool_to_csv(m, str(path))
    header = path.read_text().splitlines()[0]
    assert header == "id,size,bid,valuation"
    back = mempool_from_csv(str(path))
    assert back.ids() == m.ids()
    assert all(a.bid == b.bid and a.size == b.size and a.valuation == b.valuation
               for a, b in zip(m, back))
