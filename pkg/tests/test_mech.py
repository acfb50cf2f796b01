import numpy as np
import pytest

from tfmlab import (
    AllocationKind,
    BaseFeeState,
    BidDistribution,
    ConfigError,
    MechanismSpec,
    MechType,
    Mempool,
    ParameterError,
    PaymentKind,
    Transaction,
    is_excessively_low,
    miner_utility,
    run_mechanism,
    sample_mempool,
    spec_from_config,
    spec_to_config,
    update_base_fee,
)


def unit_pool(bids):
    return Mempool([Transaction(i, 1.0, float(b), float(b)) for i, b in enumerate(bids)])


def test_first_price_certificate_instance():
    m = Mempool([Transaction(i, 10.0, float(b), float(b))
                 for i, b in enumerate([10, 10, 5, 0, 0])])
    out = run_mechanism(MechanismSpec.first_price(), m, 30.0)
    assert out.miner_utility == 250.0
    assert out.allocation.selected == (0, 1, 2)
    for t in out.allocation.selected:
        assert out.payment_per_unit[t] == m.get(t).bid
        assert out.burn_per_unit[t] == 0.0


def test_second_price_lowest_winning_bid():
    out = run_mechanism(MechanismSpec.second_price(), unit_pool([5, 4, 3]), 2.0)
    assert out.allocation.selected == (0, 1)
    assert out.payment_per_unit == {0: 4.0, 1: 4.0}


def test_second_price_single_winner_pays_own_bid():
    out = run_mechanism(MechanismSpec.second_price(), unit_pool([5]), 1.0)
    assert out.payment_per_unit == {0: 5.0}


def test_posted_price_payment_and_burn():
    m = Mempool([Transaction(0, 2.0, 5.0, 5.0)])
    out = run_mechanism(MechanismSpec.eip1559(2.0), m, 10.0)
    assert out.payment_per_unit[0] == 3.0
    assert out.burn_per_unit[0] == 2.0
    assert out.user_utilities[0] == 0.0
    assert out.miner_utility == 6.0


def test_posted_price_filters_low_bids():
    m = unit_pool([5, 1, 0])
    out = run_mechanism(MechanismSpec.eip1559(2.0), m, 3.0)
    assert out.allocation.selected == (0,)
    # payment plus burn exhausts the bid for everything included
    for t in out.allocation.selected:
        assert out.payment_per_unit[t] + out.burn_per_unit[t] == m.get(t).bid


def test_budget_decomposition_without_fakes():
    rng = np.random.default_rng(3)
    for spec in (MechanismSpec.first_price(), MechanismSpec.second_price(),
                 MechanismSpec.eip1559(1.0), MechanismSpec.stfm(1.0),
                 MechanismSpec.uniform()):
        m = sample_mempool(12, BidDistribution.uniform(0, 5),
                           BidDistribution.exponential(1), seed=int(rng.integers(1 << 30)))
        out = run_mechanism(spec, m, 4.0, seed=5)
        spend = sum(m.get(t).size * (out.payment_per_unit[t] + out.burn_per_unit[t])
                    for t in out.allocation.selected)
        burn = sum(m.get(t).size * out.burn_per_unit[t] for t in out.allocation.selected)
        assert out.miner_utility + burn == pytest.approx(spend, abs=1e-9)


def test_rtfm_rand_branch_pays_nothing():
    m = unit_pool([5, 4, 3, 0])
    out = run_mechanism(MechanismSpec.rtfm(0.5), m, 2.0, seed=1, rtfm_toss=0)
    assert out.coin_toss == 0
    assert out.miner_utility == 0.0
    assert all(v == 0.0 for v in out.payment_per_unit.values())
    out = run_mechanism(MechanismSpec.rtfm(0.5), m, 2.0, seed=1, rtfm_toss=1)
    assert out.coin_toss == 1
    assert out.miner_utility == 9.0


def test_deterministic_specs_repeat_exactly():
    m = unit_pool([5, 4, 3, 2])
    for spec in (MechanismSpec.first_price(), MechanismSpec.eip1559(1.0)):
        a = run_mechanism(spec, m, 2.0, seed=1)
        b = run_mechanism(spec, m, 2.0, seed=999)
        assert a.allocation.selected == b.allocation.selected
        assert a.payment_per_unit == b.payment_per_unit
        assert a.miner_utility == b.miner_utility


def test_miner_utility_examples():
    real = Transaction(0, 1.0, 5.0, 5.0)
    fake = Transaction(1, 1.0, 0.0, 0.0, fake=True)
    assert miner_utility([real, fake], frozenset({1}), {0: 5.0}, {1: 2.0}) == 3.0
    assert miner_utility([], frozenset(), {}, {}) == 0.0
    assert miner_utility([fake], frozenset({1}), {}, {1: 0.0}) == 0.0


def test_fakes_route_payment_back_to_miner():
    m = unit_pool([5, 4])
    fakes = [Transaction(10, 1.0, 6.0, 6.0, fake=True)]
    out = run_mechanism(MechanismSpec.uniform(), m, 3.0, fakes=fakes, seed=2)
    assert 10 in out.allocation.selected_set
    # the fake's first-price payment does not count as revenue
    assert out.miner_utility == sum(m.get(t).bid for t in out.allocation.selected_set & {0, 1})


def test_fake_validation():
    m = unit_pool([5])
    with pytest.raises(ParameterError):
        run_mechanism(MechanismSpec.first_price(), m, 1.0,
                      fakes=[Transaction(3, 1.0, 1.0, 1.0)])
    with pytest.raises(ParameterError):
        run_mechanism(MechanismSpec.first_price(), m, 1.0,
                      fakes=[Transaction(0, 1.0, 1.0, 1.0, fake=True)])


def test_update_base_fee():
    assert update_base_fee(BaseFeeState(8.0), 11, 10).lam == pytest.approx(9.0)
    assert update_base_fee(BaseFeeState(8.0), 10, 10).lam == pytest.approx(7.0)
    assert update_base_fee(BaseFeeState(0.0), 99, 10).lam == 0.0
    assert update_base_fee(BaseFeeState(8.0, step=0.25), 11, 10).lam == pytest.approx(10.0)
    with pytest.raises(ParameterError):
        BaseFeeState(8.0, step=1.5)


def test_is_excessively_low():
    m = unit_pool([5, 5, 5])
    assert is_excessively_low(6.0, m, 3.0)          # nothing valued above the fee
    assert is_excessively_low(4.0, m, 3.0)          # demand 3 fits capacity 3
    assert not is_excessively_low(0.0, m, 2.0)      # demand 3 exceeds capacity 2


def test_mech_type_classification():
    assert MechanismSpec.first_price().mech_type is MechType.DETERMINISTIC
    assert MechanismSpec.split_block(0.5).mech_type is MechType.DETERMINISTIC
    assert MechanismSpec.stfm(1.0).mech_type is MechType.RANDOMIZED
    assert MechanismSpec.rtfm(0.5).mech_type is MechType.RANDOMIZED
    assert MechanismSpec.uniform().mech_type is MechType.RANDOMIZED


def test_spec_validation():
    with pytest.raises(ParameterError):
        MechanismSpec(AllocationKind.SOFTMAX)  # missing gamma
    with pytest.raises(ParameterError):
        MechanismSpec(AllocationKind.RTFM, phi=1.5)
    with pytest.raises(ParameterError):
        MechanismSpec(AllocationKind.OPTIMAL, PaymentKind.FIRST_PRICE,
                      burning=__import__("tfmlab").BurnKind.POSTED_PRICE)
    with pytest.raises(ParameterError):
        MechanismSpec(AllocationKind.OPTIMAL, PaymentKind.POSTED_PRICE)  # missing lambda


def test_spec_config_round_trip():
    specs = [
        MechanismSpec.first_price(),
        MechanismSpec.eip1559(1.5),
        MechanismSpec.stfm(2.0),
        MechanismSpec.rtfm(0.3),
        MechanismSpec.split_block(0.75, delta=1.0),
    ]
    for spec in specs:
        assert spec_from_config(spec_to_config(spec)) == spec
    text = spec_to_config(MechanismSpec.stfm(2.0))
    assert "allocation=softmax" in text and "gamma=2" in text


def test_spec_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        spec_from_config("allocation=softmax\ngamma=2\nbogus=1\n")
    with pytest.raises(ConfigError):
        spec_from_config("allocation=warp\n")
    with pytest.raises(ConfigError):
        spec_from_config("payment=fpa\n")
