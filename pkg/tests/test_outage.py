import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vnfmig.econ import InvalidArgument
from vnfmig.outage import (
    ReliabilityChain,
    default_chain,
    default_transition_matrix,
    outage_horizon,
    outage_probability,
    stationary_distribution,
    step,
)

TWO = [[0.9, 0.1], [0.5, 0.5]]


def chain(P, outage=(1,), state=0, seed=0):
    return ReliabilityChain(tuple(f"s{i}" for i in range(len(P))), np.array(P), frozenset(outage),
                            state, np.random.default_rng(seed))


def test_identity_never_moves():
    c = chain(np.eye(3), state=2)
    assert all(step(c) == 2 for _ in range(100))


def test_deterministic_row():
    c = chain([[0, 1], [1, 0]])
    assert step(c) == 1


def test_step_frequency():
    c = chain(TWO, seed=3)
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(100_000):
        c.current_state = 0
        hits += step(c, rng) == 1
    assert abs(hits / 1e5 - 0.1) < 0.005


def test_two_state_examples():
    c = chain(TWO)
    assert outage_probability(c, 0, 1) == pytest.approx(0.1, abs=1e-15)
    assert outage_probability(c, 0, 2) == pytest.approx(0.14, abs=1e-15)
    np.testing.assert_allclose(outage_horizon(c, 2), [0.1, 0.14], atol=1e-15)
    assert outage_horizon(c, 1)[0] == outage_probability(c, 0, 1)


def test_absorbing_outage():
    c = chain([[0.5, 0.5], [0, 1]])
    assert all(outage_probability(c, 1, k) == 1 for k in (1, 7, 50))


def test_stationary_start_gives_flat_horizon():
    P = default_transition_matrix()
    pi = stationary_distribution(P)
    np.testing.assert_allclose(pi @ P, pi, atol=1e-13)
    c = default_chain()
    flat = [sum(pi[s] * outage_probability(c, s, k) for s in range(4)) for k in range(1, 31)]
    np.testing.assert_allclose(flat, pi[2], atol=1e-12)


def test_validation():
    with pytest.raises(InvalidArgument):
        chain([[0.5, 0.4], [0.5, 0.5]])
    with pytest.raises(InvalidArgument):
        chain(TWO, outage=())
    with pytest.raises(InvalidArgument):
        chain(TWO, outage=(0, 1))
    with pytest.raises(InvalidArgument):
        chain([[1.1, -0.1], [0.5, 0.5]])
    c = chain(TWO)
    with pytest.raises(InvalidArgument):
        outage_probability(c, 0, 0)
    with pytest.raises(InvalidArgument):
        outage_probability(c, 5, 1)


def test_from_spec_by_name():
    c = ReliabilityChain.from_spec(("up", "down"), TWO, ("down",), "down", seed=0)
    assert c.current_state == 1 and c.in_outage
    with pytest.raises(InvalidArgument):
        ReliabilityChain.from_spec(("up", "down"), TWO, ("broken",), "up")


@st.composite
def stochastic(draw):
    n = draw(st.integers(2, 5))
    rows = np.array([[draw(st.floats(0, 1)) for _ in range(n)] for _ in range(n)]) + 1e-3
    return rows / rows.sum(axis=1, keepdims=True)


@settings(max_examples=60, deadline=None)
@given(stochastic(), st.integers(1, 40), st.data())
def test_matches_matrix_power(P, k, data):
    n = len(P)
    outage = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1))
    s = data.draw(st.integers(0, n - 1))
    c = chain(P, outage=outage)
    oracle = np.linalg.matrix_power(P, k)[s, sorted(outage)].sum()
    assert abs(outage_probability(c, s, k) - oracle) < 1e-10
