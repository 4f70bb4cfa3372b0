import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vnfmig.econ import (
    EconomicParams,
    InvalidArgument,
    MigrationDecision,
    OutageExposure,
    cost_loss_sum,
    expected_outage_exposure,
    exposures_from,
    migration_bound,
    no_migration_bound,
)


def P(l=1.0, nf=10.0, sp=1.0, T=30):
    return EconomicParams(l, nf, sp, T)


def test_exposure_examples():
    assert expected_outage_exposure([0, 0, 0], [1, 1, 1]) == 0
    assert expected_outage_exposure([1, 1], [1, 1]) == 2
    assert expected_outage_exposure([0.5, 0.2], [0.4, 0.5]) == pytest.approx(0.3, abs=1e-15)


@pytest.mark.parametrize("p_o,p_v", [([0.5], [0.5, 0.5]), ([1.2], [0.5]), ([0.5], [-0.1]),
                                     ([], []), ([np.nan], [0.5])])
def test_exposure_rejects_bad_vectors(p_o, p_v):
    with pytest.raises(InvalidArgument):
        expected_outage_exposure(p_o, p_v)


def test_params_validation():
    with pytest.raises(InvalidArgument):
        EconomicParams(cost_nf=-1)
    with pytest.raises(InvalidArgument):
        EconomicParams(interval_T=0)
    with pytest.raises(InvalidArgument):
        EconomicParams(loss_rate_l=float("inf"))


def test_cost_loss_sum_examples():
    ex = exposures_from("ab", [2, 3])
    assert cost_loss_sum(MigrationDecision(0), ex, P()) == 5
    four = exposures_from("abcd", [0.1, 4, 7, 0])
    assert cost_loss_sum(MigrationDecision(1, set("abcd")), four, P(nf=10, sp=1)) == 14
    ab = exposures_from("AB", [3, 0.5])
    assert cost_loss_sum(MigrationDecision(1, {"A"}), ab, P(nf=5, sp=1)) == pytest.approx(6.5)


def test_loss_rate_applies_without_migration():
    # the no-migration branch still weighs exposure by the loss rate
    ex = exposures_from("ab", [2, 3])
    assert cost_loss_sum(MigrationDecision(0), ex, P(l=2)) == 10


def test_decision_invariants():
    with pytest.raises(InvalidArgument):
        MigrationDecision(0, {"a"})
    with pytest.raises(InvalidArgument):
        MigrationDecision(2)
    with pytest.raises(InvalidArgument):
        cost_loss_sum(MigrationDecision(1, {"zz"}), exposures_from("a", [1]), P())


def test_exposure_range_and_duplicates():
    with pytest.raises(InvalidArgument):
        cost_loss_sum(MigrationDecision(0), [OutageExposure("a", 31)], P(T=30))
    with pytest.raises(InvalidArgument):
        no_migration_bound([OutageExposure("a", -0.1)], P())
    with pytest.raises(InvalidArgument):
        no_migration_bound(exposures_from("aa", [1, 2]), P())


def test_migration_bound_examples():
    assert migration_bound([], P(nf=7)) == (7.0, frozenset())
    bound, sync = migration_bound([OutageExposure("x", 1.0)], P(sp=1))
    assert sync == {"x"} and bound == 11
    bound, sync = migration_bound(exposures_from("AB", [3, 0.5]), P(nf=5, sp=1))
    assert bound == pytest.approx(6.5) and sync == {"A"}


def test_no_migration_bound_examples():
    assert no_migration_bound([], P()) == 0
    assert no_migration_bound(exposures_from("abc", [1, 1, 1]), P(l=2)) == 6
    assert no_migration_bound(exposures_from("ab", [3, 0.5]), P()) == 3.5


money = st.floats(0, 50, allow_nan=False)
exposure_lists = st.lists(st.floats(0, 30, allow_nan=False), max_size=12)


@settings(max_examples=200, deadline=None)
@given(exposure_lists, money, money, money)
def test_bounds_are_achieved_by_their_sync_rules(tus, l, nf, sp):
    params = P(l, nf, sp)
    ex = exposures_from(range(len(tus)), tus)
    s1, sync = migration_bound(ex, params)
    assert math.isclose(cost_loss_sum(MigrationDecision(1, sync), ex, params), s1,
                        rel_tol=1e-12, abs_tol=1e-12)
    s2 = no_migration_bound(ex, params)
    assert math.isclose(cost_loss_sum(MigrationDecision(0), ex, params), s2,
                        rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=100, deadline=None)
@given(exposure_lists, money, money, money, st.floats(0.01, 100))
def test_common_scaling(tus, l, nf, sp, f):
    params = P(l, nf, sp)
    ex = exposures_from(range(len(tus)), tus)
    s1, sync = migration_bound(ex, params)
    s1f, syncf = migration_bound(ex, params.scaled(f))
    assert math.isclose(s1f, f * s1, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(no_migration_bound(ex, params.scaled(f)), f * no_migration_bound(ex, params),
                        rel_tol=1e-9, abs_tol=1e-9)
    # exact ties can flip under rounding, so compare away from them
    if all(abs(l * t - sp) > 1e-9 * max(1, sp) for t in tus):
        assert sync == syncf
