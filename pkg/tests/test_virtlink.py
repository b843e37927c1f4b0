from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvnetsim.errors import (
    EmptySubconnSetError,
    InvalidQuotaError,
    UnknownSubConnectionError,
)
from qvnetsim.virtlink import (
    TrunkKind,
    TrunkLink,
    resolve_contention,
    split_trunk,
)


def _trunk(rate, quotas):
    return TrunkLink(
        pair=("A", "B"),
        kind=TrunkKind.PHYSICAL,
        rate=Fraction(rate),
        quotas={k: Fraction(v) for k, v in quotas.items()},
    )


FOUR_WAY = _trunk(8, {"red": "1/2", "blue": "1/4", "violet": "1/8", "black": "1/8"})


def test_split_rates_are_exact():
    result = split_trunk(FOUR_WAY)
    rates = {qv.subconn: qv.rate for qv in result.qvlinks}
    assert rates == {
        "red": Fraction(4),
        "blue": Fraction(2),
        "violet": Fraction(1),
        "black": Fraction(1),
    }
    assert not result.oversubscribed
    assert all(qv.kind is TrunkKind.PHYSICAL for qv in result.qvlinks)
    assert [qv.subconn for qv in result.qvlinks] == ["black", "blue", "red", "violet"]


def test_split_quota_sum_below_one_leaves_slack():
    result = split_trunk(_trunk(10, {"a": "1/5", "b": "1/5"}))
    assert {qv.subconn: qv.rate for qv in result.qvlinks} == {
        "a": Fraction(2),
        "b": Fraction(2),
    }
    assert not result.oversubscribed


def test_split_flags_oversubscription():
    result = split_trunk(_trunk(4, {"a": "3/4", "b": "1/2"}))
    assert result.oversubscribed
    assert {qv.subconn: qv.rate for qv in result.qvlinks} == {
        "a": Fraction(3),
        "b": Fraction(2),
    }


def test_split_rejects_empty_and_bad_quotas():
    with pytest.raises(EmptySubconnSetError):
        split_trunk(_trunk(4, {}))
    with pytest.raises(InvalidQuotaError):
        _trunk(4, {"a": "3/2"})
    with pytest.raises(InvalidQuotaError):
        _trunk(4, {"a": -1})


def test_split_with_override_quotas():
    result = split_trunk(_trunk(8, {"a": 1}), {"a": "1/4", "b": "1/4"})
    assert {qv.subconn: qv.rate for qv in result.qvlinks} == {
        "a": Fraction(2),
        "b": Fraction(2),
    }


def test_contention_small_demand_releases_share():
    grants = resolve_contention(
        FOUR_WAY, {"red": 1, "blue": 10, "violet": 10, "black": 10}, 8
    )
    assert grants == {"red": 1, "blue": 3, "violet": 2, "black": 2}


def test_contention_all_saturated_follows_quotas():
    grants = resolve_contention(
        FOUR_WAY, {"red": 99, "blue": 99, "violet": 99, "black": 99}, 8
    )
    assert grants == {"red": 4, "blue": 2, "violet": 1, "black": 1}


def test_contention_zero_available_and_zero_demand():
    assert resolve_contention(FOUR_WAY, {"red": 5}, 0) == {"red": 0}
    assert resolve_contention(FOUR_WAY, {"red": 0, "blue": 0}, 8) == {
        "red": 0,
        "blue": 0,
    }
    assert resolve_contention(FOUR_WAY, {}, 8) == {}


def test_contention_unknown_subconn():
    with pytest.raises(UnknownSubConnectionError):
        resolve_contention(FOUR_WAY, {"green": 1}, 8)


def test_contention_rejects_bad_counts():
    with pytest.raises(ValueError):
        resolve_contention(FOUR_WAY, {"red": -1}, 8)
    with pytest.raises(ValueError):
        resolve_contention(FOUR_WAY, {"red": 1}, -8)


def test_contention_zero_weight_gets_leftovers_only():
    trunk = _trunk(4, {"a": 1, "b": 0})
    # a saturates below capacity; the zero-weight b picks up the rest
    assert resolve_contention(trunk, {"a": 2, "b": 9}, 6) == {"a": 2, "b": 4}
    # while a is unsatisfied, b gets nothing
    assert resolve_contention(trunk, {"a": 9, "b": 9}, 6) == {"a": 6, "b": 0}


def test_contention_all_zero_weights_split_equally():
    trunk = _trunk(4, {"a": 0, "b": 0})
    assert resolve_contention(trunk, {"a": 9, "b": 9}, 6) == {"a": 3, "b": 3}


def test_contention_rounding_prefers_larger_remainder():
    trunk = _trunk(3, {"a": "2/3", "b": "1/3"})
    # continuous shares are 2 and 1: exact, no remainder to hand out
    assert resolve_contention(trunk, {"a": 9, "b": 9}, 3) == {"a": 2, "b": 1}
    # continuous shares 8/3 and 4/3: floors 2+1, leftover goes to a (.67 > .33)
    assert resolve_contention(trunk, {"a": 9, "b": 9}, 4) == {"a": 3, "b": 1}


@st.composite
def contention_cases(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    names = [f"s{i}" for i in range(n)]
    weights = {
        name: Fraction(draw(st.integers(min_value=0, max_value=8)), 8)
        for name in names
    }
    demands = {
        name: draw(st.integers(min_value=0, max_value=30)) for name in names
    }
    available = draw(st.integers(min_value=0, max_value=40))
    return weights, demands, available


@given(contention_cases())
@settings(max_examples=200, deadline=None)
def test_contention_properties(case):
    weights, demands, available = case
    trunk = TrunkLink(
        pair=("A", "B"), kind=TrunkKind.PHYSICAL, rate=Fraction(8), quotas=weights
    )
    grants = resolve_contention(trunk, demands, available)
    assert set(grants) == set(demands)
    for name in demands:
        assert 0 <= grants[name] <= demands[name]
    # work conserving: everything grantable is granted
    assert sum(grants.values()) == min(available, sum(demands.values()))


@given(contention_cases(), st.data())
@settings(max_examples=120, deadline=None)
def test_contention_weight_monotonicity(case, data):
    weights, demands, available = case
    # saturate demands so shares are purely weight-driven
    demands = {name: 50 for name in demands}
    chosen = data.draw(st.sampled_from(sorted(weights)))
    bumped = dict(weights)
    bumped[chosen] = min(Fraction(1), weights[chosen] + Fraction(1, 4))

    base = resolve_contention(
        TrunkLink(("A", "B"), TrunkKind.PHYSICAL, Fraction(8), weights),
        demands,
        available,
    )
    more = resolve_contention(
        TrunkLink(("A", "B"), TrunkKind.PHYSICAL, Fraction(8), bumped),
        demands,
        available,
    )
    assert more[chosen] >= base[chosen]
