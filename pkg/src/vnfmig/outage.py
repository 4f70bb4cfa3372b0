"""Discrete-time Markov model of VNF reliability.

The reliability process is represented by a partition of the chain's states
into outage states (reliability below the acceptable minimum) and the rest.
Forecasts are exact forward evolutions of the state distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .econ import InvalidArgument

_ROW_TOL = 1e-9

DEFAULT_STATES = ("normal", "degraded", "outage", "repairing")


def default_transition_matrix() -> np.ndarray:
    # normal -> degraded 0.015, direct disaster normal -> outage 0.005,
    # degraded -> outage 0.2 / -> normal 0.2, outages last ~10 steps,
    # repairing relapses to outage 0.1; about 12% of time is spent in outage
    return np.array([
        [0.980, 0.015, 0.005, 0.000],
        [0.200, 0.600, 0.200, 0.000],
        [0.000, 0.000, 0.900, 0.100],
        [0.500, 0.000, 0.100, 0.400],
    ])


@dataclass
class ReliabilityChain:
    states: tuple
    transition_matrix: np.ndarray
    outage_states: frozenset
    current_state: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    def __post_init__(self):
        self.states = tuple(self.states)
        P = np.array(self.transition_matrix, dtype=float)
        n = len(self.states)
        if P.shape != (n, n):
            raise InvalidArgument(f"transition matrix must be {n}x{n}, got {P.shape}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise InvalidArgument("transition probabilities must be finite and nonnegative")
        if np.any(np.abs(P.sum(axis=1) - 1) > _ROW_TOL):
            raise InvalidArgument("transition matrix rows must sum to 1")
        self.transition_matrix = P
        self.outage_states = frozenset(int(i) for i in self.outage_states)
        if not self.outage_states or len(self.outage_states) >= n:
            raise InvalidArgument("outage states must be a nonempty strict subset of the states")
        if not all(0 <= i < n for i in self.outage_states):
            raise InvalidArgument("outage state index out of range")
        self._check_state(self.current_state)
        self._cum = np.cumsum(P, axis=1)
        self._mask = np.zeros(n)
        self._mask[sorted(self.outage_states)] = 1.0

    def _check_state(self, s):
        if int(s) != s or not 0 <= s < len(self.states):
            raise InvalidArgument(f"invalid state index {s!r}")

    @property
    def outage_mask(self) -> np.ndarray:
        return self._mask.copy()

    @property
    def in_outage(self) -> bool:
        return self.current_state in self.outage_states

    def step(self, rng: np.random.Generator | None = None) -> int:
        rng = self.rng if rng is None else rng
        cum = self._cum[self.current_state]
        nxt = int(np.searchsorted(cum, rng.random(), side="right"))
        # guards against cumsum ending a hair below 1
        self.current_state = min(nxt, len(self.states) - 1)
        return self.current_state

    @classmethod
    def from_spec(cls, states: Sequence[str], rows, outage: Sequence, initial=0, seed=None):
        """Build a chain from config-style values; states may be given by name."""
        states = tuple(states)

        def index(s):
            if isinstance(s, str) and not s.lstrip("-").isdigit():
                if s not in states:
                    raise InvalidArgument(f"unknown state name {s!r}")
                return states.index(s)
            return int(s)

        return cls(states, np.asarray(rows, dtype=float), frozenset(index(s) for s in outage),
                   index(initial), np.random.default_rng(seed))


def default_chain(seed=None) -> ReliabilityChain:
    return ReliabilityChain(DEFAULT_STATES, default_transition_matrix(), frozenset({2}), 0,
                            np.random.default_rng(seed))


def step(chain: ReliabilityChain, rng_stream: np.random.Generator | None = None) -> int:
    """Advance ``chain`` one step; returns the new state index."""
    return chain.step(rng_stream)


def outage_probability(chain: ReliabilityChain, from_state: int, k: int) -> float:
    """Probability of being in an outage state exactly ``k`` steps after ``from_state``."""
    if int(k) != k or k < 1:
        raise InvalidArgument(f"k must be a positive integer, got {k!r}")
    return float(_forecast(chain, from_state, int(k))[-1])


def outage_horizon(chain: ReliabilityChain, T: int) -> np.ndarray:
    """Outage probabilities for the next ``T`` steps from the chain's current state."""
    if int(T) != T or T < 1:
        raise InvalidArgument(f"T must be a positive integer, got {T!r}")
    return _forecast(chain, chain.current_state, int(T))


def _forecast(chain, from_state, k):
    chain._check_state(from_state)
    P = chain.transition_matrix
    dist = np.zeros(len(chain.states))
    dist[from_state] = 1.0
    out = np.empty(k)
    for j in range(k):
        dist = dist @ P
        out[j] = dist @ chain._mask
    return np.clip(out, 0.0, 1.0)


def stationary_distribution(P, tol=1e-14, max_iter=1_000_000) -> np.ndarray:
    """Fixed point of ``pi = pi @ P`` by power iteration from the uniform distribution."""
    P = np.asarray(P, dtype=float)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi
