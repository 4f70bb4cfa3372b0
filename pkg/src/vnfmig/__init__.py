"""Cost-loss-optimal migration of stateful VNFs to an edge cloud.

Modules: :mod:`econ` (cost/loss arithmetic), :mod:`controller` (the decision
rule and its brute-force oracle), :mod:`outage` (Markov reliability model),
:mod:`mdn` (mixture density network), :mod:`mobility` (visit probabilities),
:mod:`trajdata` (GPS pre-processing), :mod:`simlab` (simulation and
benchmark) and :mod:`cli`.
"""

from .controller import DecisionOutcome, brute_force_decide, decide
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

__version__ = "0.1.0"
