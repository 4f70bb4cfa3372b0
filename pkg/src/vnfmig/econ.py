"""Cost/loss arithmetic for one synchronization interval.

All quantities are expectations over the coming interval ``[t+1, t+T]``.
A user's *exposure* ``T_u`` is the expected number of steps in which the
VNF is in outage while the user sits inside the edge coverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's preconditions."""


# slack for exposures that are sums of T probabilities
_EXPOSURE_SLACK = 1e-9


@dataclass(frozen=True)
class EconomicParams:
    loss_rate_l: float = 1.0
    cost_nf: float = 10.0
    cost_sp: float = 0.5
    interval_T: int = 30

    def __post_init__(self):
        for name in ("loss_rate_l", "cost_nf", "cost_sp"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgument(f"{name} must be a finite nonnegative number, got {v!r}")
        if int(self.interval_T) != self.interval_T or self.interval_T < 1:
            raise InvalidArgument(f"interval_T must be a positive integer, got {self.interval_T!r}")

    def scaled(self, factor: float) -> "EconomicParams":
        """Same interval, all monetary fields multiplied by ``factor``."""
        return EconomicParams(self.loss_rate_l * factor, self.cost_nf * factor,
                              self.cost_sp * factor, self.interval_T)


@dataclass(frozen=True)
class OutageExposure:
    user_id: Hashable
    exposure_Tu: float


@dataclass(frozen=True)
class MigrationDecision:
    migrate_m: int
    sync_set: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.migrate_m not in (0, 1):
            raise InvalidArgument(f"migrate_m must be 0 or 1, got {self.migrate_m!r}")
        object.__setattr__(self, "sync_set", frozenset(self.sync_set))
        if self.migrate_m == 0 and self.sync_set:
            raise InvalidArgument("a decision without migration cannot synchronize profiles")


def _check_prob_vector(name, p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgument(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidArgument(f"{name} entries must lie in [0, 1]")
    return p


def expected_outage_exposure(p_o, p_v) -> float:
    """Sum over the horizon of ``p_o[k] * p_v[k]``."""
    p_o = _check_prob_vector("p_o", p_o)
    p_v = _check_prob_vector("p_v", p_v)
    if p_o.shape != p_v.shape:
        raise InvalidArgument(f"horizon length mismatch: {p_o.size} vs {p_v.size}")
    return float(np.dot(p_o, p_v))


def _validate_exposures(exposures: Sequence[OutageExposure], params: EconomicParams) -> dict:
    table = {}
    for e in exposures:
        tu = e.exposure_Tu
        if not np.isfinite(tu) or tu < 0 or tu > params.interval_T + _EXPOSURE_SLACK:
            raise InvalidArgument(f"exposure of user {e.user_id!r} outside [0, T]: {tu!r}")
        if e.user_id in table:
            raise InvalidArgument(f"duplicate user {e.user_id!r} in exposures")
        table[e.user_id] = float(tu)
    return table


def cost_loss_sum(decision: MigrationDecision, exposures: Sequence[OutageExposure],
                  params: EconomicParams) -> float:
    """Expected loss plus cost of ``decision`` over the coming interval.

    ``c_NF*m + sum_u [l*T_u*(1 - m*s_u) + c_SP*s_u]``
    """
    table = _validate_exposures(exposures, params)
    unknown = decision.sync_set - table.keys()
    if unknown:
        raise InvalidArgument(f"sync set references unknown users: {sorted(map(repr, unknown))}")
    m = decision.migrate_m
    l, c_sp = params.loss_rate_l, params.cost_sp
    total = params.cost_nf * m
    for uid, tu in table.items():
        s = 1 if uid in decision.sync_set else 0
        total += l * tu * (1 - m * s) + c_sp * s
    return float(total)


def migration_bound(exposures: Sequence[OutageExposure], params: EconomicParams):
    """Lowest achievable sum given that the VNF is migrated.

    Returns ``(bound, sync_set)``; a user is synchronized iff ``l*T_u >= c_SP``.
    """
    table = _validate_exposures(exposures, params)
    l, c_sp = params.loss_rate_l, params.cost_sp
    bound = params.cost_nf
    sync = set()
    for uid, tu in table.items():
        if l * tu >= c_sp:
            sync.add(uid)
            bound += c_sp
        else:
            bound += l * tu
    return float(bound), frozenset(sync)


def no_migration_bound(exposures: Sequence[OutageExposure], params: EconomicParams) -> float:
    table = _validate_exposures(exposures, params)
    return float(sum(params.loss_rate_l * tu for tu in table.values()))


def exposures_from(user_ids: Iterable[Hashable], values: Iterable[float]) -> list[OutageExposure]:
    return [OutageExposure(u, float(v)) for u, v in zip(user_ids, values)]
