"""Cost-loss-optimal migration decision and an exhaustive-search oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .econ import (
    EconomicParams,
    InvalidArgument,
    MigrationDecision,
    OutageExposure,
    cost_loss_sum,
    expected_outage_exposure,
    migration_bound,
    no_migration_bound,
)

MAX_BRUTE_FORCE_USERS = 20


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionOutcome:
    decision: MigrationDecision
    bound_migrate_S1: float
    bound_stay_S2: float
    exposures: tuple
    achieved: float


def _exposures(user_ids, p_o_horizon, p_v_horizons, params):
    p_o = np.asarray(p_o_horizon, dtype=float)
    if p_o.ndim != 1 or p_o.size != params.interval_T:
        raise InvalidArgument(f"p_o horizon must have length T={params.interval_T}")
    if len(p_v_horizons) != len(user_ids):
        raise InvalidArgument("need one visit-probability horizon per user")
    out = []
    for uid, p_v in zip(user_ids, p_v_horizons):
        if np.shape(p_v) != (params.interval_T,):
            raise InvalidArgument(f"p_v horizon of user {uid!r} must have length T={params.interval_T}")
        out.append(OutageExposure(uid, expected_outage_exposure(p_o, p_v)))
    return out


def decide(user_ids: Sequence[Hashable] = (), p_o_horizon=None, p_v_horizons=None,
           params: EconomicParams | None = None, *,
           exposures: Sequence[OutageExposure] | None = None) -> DecisionOutcome:
    """Pick the migration label and sync set minimizing the expected cost-loss sum.

    Either pass the raw horizons (``p_o_horizon`` of length T and one ``p_v``
    horizon per user) or precomputed ``exposures``. Migrates iff the migration
    bound is strictly below the no-migration bound.
    """
    if params is None:
        raise InvalidArgument("params is required")
    if exposures is None:
        if p_o_horizon is None or p_v_horizons is None:
            raise InvalidArgument("pass either horizons or exposures")
        exposures = _exposures(list(user_ids), p_o_horizon, p_v_horizons, params)
    exposures = tuple(exposures)
    s1, sync = migration_bound(exposures, params)
    s2 = no_migration_bound(exposures, params)
    if s1 < s2:
        decision = MigrationDecision(1, sync)
    else:
        decision = MigrationDecision(0, frozenset())
    return DecisionOutcome(decision, s1, s2, exposures, min(s1, s2))


def decide_as_printed(exposures: Sequence[OutageExposure], params: EconomicParams) -> DecisionOutcome:
    """Literal transcription of the published pseudocode, kept only as a negative control.

    The final comparison migrates when ``S1 >= S2``, i.e. it picks the *larger*
    bound. Do not use it for control.
    """
    s1, s2 = params.cost_nf, 0.0
    sync = set()
    for e in exposures:
        lt = params.loss_rate_l * e.exposure_Tu
        s2 += lt
        if lt >= params.cost_sp:
            sync.add(e.user_id)
            s1 += params.cost_sp
        else:
            s1 += lt
    if s1 >= s2:
        decision = MigrationDecision(1, sync)
    else:
        decision = MigrationDecision(0, frozenset())
    return DecisionOutcome(decision, s1, s2, tuple(exposures), s1 if decision.migrate_m else s2)


def brute_force_decide(user_ids: Sequence[Hashable], exposures: Sequence[OutageExposure],
                       params: EconomicParams) -> DecisionOutcome:
    """Enumerate every (m, sync set) pair and return a global minimizer.

    Ties go to m=0, then to the smaller sync set, then to the earliest users
    in ``user_ids`` order.
    """
    user_ids = list(user_ids)
    n = len(user_ids)
    if n > MAX_BRUTE_FORCE_USERS:
        raise CapacityError(f"brute force limited to {MAX_BRUTE_FORCE_USERS} users, got {n}")
    by_id = {e.user_id: e.exposure_Tu for e in exposures}
    if set(by_id) != set(user_ids) or len(exposures) != n:
        raise InvalidArgument("exposures must cover exactly the given users")
    exposures = [OutageExposure(u, by_id[u]) for u in user_ids]

    l, c_nf, c_sp = params.loss_rate_l, params.cost_nf, params.cost_sp
    tu = np.array([by_id[u] for u in user_ids], dtype=float)
    codes = np.arange(2 ** n)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
    loss = l * tu
    candidates = []
    for m in (0, 1):
        totals = c_nf * m + (loss * (1 - m * masks) + c_sp * masks).sum(axis=1)
        candidates.append(totals)
    totals = np.concatenate(candidates)
    lo = totals.min()
    tied = np.flatnonzero(totals <= lo + 1e-12 * abs(lo))

    def tie_key(k):
        m, code = divmod(int(k), 2 ** n)
        members = tuple(i for i in range(n) if code >> i & 1)
        return (m, len(members), members)

    m, _, members = min(tie_key(k) for k in tied)
    decision = MigrationDecision(m, frozenset(user_ids[i] for i in members) if m else frozenset())
    s1, _ = migration_bound(exposures, params)
    s2 = no_migration_bound(exposures, params)
    return DecisionOutcome(decision, s1, s2, tuple(exposures), float(lo))


def achieved_sum(outcome: DecisionOutcome, params: EconomicParams) -> float:
    """Re-evaluate the expected sum of the chosen decision from scratch."""
    return cost_loss_sum(outcome.decision, outcome.exposures, params)
