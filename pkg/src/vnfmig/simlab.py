"""Region/population simulation and policy benchmarking.

A run has three phases: pre-convergence (users settle), training (the
controller's MDN learns from observed motion) and evaluation (decisions are
taken every ``interval_T`` steps and realized loss/cost are booked).

Decisions never feed back into user motion, outage events or the MDN's
online updates. One simulated *trace* per seed therefore serves every
policy, which is exactly the common-random-numbers comparison.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import mdn as mdn_mod
from .controller import decide
from .econ import EconomicParams, InvalidArgument, MigrationDecision, cost_loss_sum, exposures_from
from .mdn import MdnModel, MixtureParams, OptimizerState, sample
from .mobility import EcGeometry, UserContext, membership, predict_visit_batch
from .outage import DEFAULT_STATES, ReliabilityChain, default_transition_matrix, outage_horizon
from .trajdata import kernel_bank

log = logging.getLogger(__name__)

# stream tags for seed derivation
_S_INIT, _S_MOTION, _S_ARRIVAL, _S_CHAIN, _S_MDN, _S_ROLLOUT = range(1, 7)

VISIT_REDUCERS = ("complement_product", "sum", "max")


class ConfigurationError(ValueError):
    pass


@dataclass
class ChainSpec:
    states: tuple = DEFAULT_STATES
    rows: tuple = tuple(map(tuple, default_transition_matrix().tolist()))
    outage: tuple = ("outage",)
    initial: str = "normal"

    def build(self, seed) -> ReliabilityChain:
        return ReliabilityChain.from_spec(self.states, self.rows, self.outage, self.initial, seed)


@dataclass
class SimConfig:
    region_side: float = 8000.0
    ec_radius: float = 2000.0
    ec_center: tuple | None = None          # default: middle of the region
    population: int = 1000
    step_interval_s: float = 60.0
    preconvergence_steps: int = 250
    training_steps: int = 500
    evaluation_steps: int = 4000
    econ: EconomicParams = field(default_factory=EconomicParams)
    chain: ChainSpec = field(default_factory=ChainSpec)
    n_rollouts: int = 100
    candidate_quantile: float = 0.99
    candidate_radius_factor: float = 1.0
    n_kernels: int = 50
    kernel_seed: int = 0
    kernel_file: str | None = None
    # controller MDN
    mdn_hidden: tuple = (512, 128)
    mdn_components: int = 2
    learning_rate: float = 1e-4
    epochs: int = 15
    batch_size: int = 512
    train_max_windows: int = 0              # 0 keeps every window observed in training
    finetune_in_run: bool = True
    online_updates: bool = True
    rollout_dtype: str = "float32"
    visit_reducer: str = "complement_product"
    seed: int = 0

    def __post_init__(self):
        if self.ec_center is None:
            self.ec_center = (self.region_side / 2, self.region_side / 2)
        self.ec_center = tuple(float(v) for v in self.ec_center)
        self.mdn_hidden = tuple(int(v) for v in self.mdn_hidden)
        for name in ("population", "preconvergence_steps", "training_steps",
                     "evaluation_steps", "n_rollouts", "n_kernels"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.region_side <= 0 or self.ec_radius <= 0:
            raise ConfigurationError("region side and EC radius must be positive")
        cx, cy = self.ec_center
        if not (self.ec_radius <= cx <= self.region_side - self.ec_radius
                and self.ec_radius <= cy <= self.region_side - self.ec_radius):
            raise ConfigurationError("EC disc must lie inside the region")
        if self.visit_reducer not in VISIT_REDUCERS:
            raise ConfigurationError(f"visit_reducer must be one of {VISIT_REDUCERS}")
        if self.evaluation_steps < self.econ.interval_T:
            raise ConfigurationError("evaluation must span at least one interval")

    @property
    def ec(self) -> EcGeometry:
        return EcGeometry(self.ec_center, self.ec_radius)

    @property
    def n_intervals(self) -> int:
        return self.evaluation_steps // self.econ.interval_T


def desk_scale(**overrides) -> SimConfig:
    """200 users, 1000 evaluation steps; everything else at the full-scale defaults."""
    kw = dict(population=200, evaluation_steps=1000)
    kw.update(overrides)
    return SimConfig(**kw)


# ---------------------------------------------------------------- policies

@dataclass(frozen=True)
class ThresholdPolicy:
    P_o: float
    P_v: float
    reducer: str = "complement_product"

    @property
    def name(self) -> str:
        return f"baseline(P_o={self.P_o:g},P_v={self.P_v:g})"


@dataclass(frozen=True)
class OptimalPolicy:
    name: str = "optimal"


def cumulative_visit(p_v, reducer="complement_product"):
    p_v = np.asarray(p_v, dtype=float)
    if reducer == "complement_product":
        return 1.0 - np.prod(1.0 - p_v, axis=-1)
    if reducer == "sum":
        return p_v.sum(axis=-1)
    if reducer == "max":
        return p_v.max(axis=-1, initial=0.0)
    raise InvalidArgument(f"unknown visit reducer {reducer!r}")


def double_threshold_decide(p_o_horizon, user_ids, p_v_horizons, thresholds,
                            reducer="complement_product") -> MigrationDecision:
    """Migrate iff mean outage risk exceeds ``P_o``; sync users whose cumulative
    visit probability exceeds ``P_v``."""
    P_o, P_v = thresholds
    if not (0 <= P_o <= 1 and 0 <= P_v <= 1):
        raise InvalidArgument("thresholds must lie in [0, 1]")
    p_o = np.asarray(p_o_horizon, dtype=float)
    if p_o.ndim != 1 or p_o.size == 0 or np.any((p_o < 0) | (p_o > 1)):
        raise InvalidArgument("p_o horizon must be a nonempty vector of probabilities")
    if p_o.mean() <= P_o:
        return MigrationDecision(0, frozenset())
    user_ids = list(user_ids)
    if not user_ids:
        return MigrationDecision(1, frozenset())
    pv = np.asarray(p_v_horizons, dtype=float).reshape(len(user_ids), -1)
    score = cumulative_visit(pv, reducer)
    return MigrationDecision(1, frozenset(u for u, s in zip(user_ids, score) if s > P_v))


# ---------------------------------------------------------------- trace

@dataclass
class IntervalTrace:
    index: int
    p_o: np.ndarray
    user_ids: list                 # candidate set
    p_v: np.ndarray                # (n_candidates, T)
    cold_start: np.ndarray
    exposed_steps: dict            # user_id -> steps in EC during outage
    outage_steps: int
    outage_mask: np.ndarray | None = None   # (T,) chain in an outage state after each step
    presence: dict | None = None            # user_id -> (T,) bool, inside the EC after each step


@dataclass
class SimulationTrace:
    config: SimConfig
    seed: int
    intervals: list
    population_ok: bool
    v_cap: float
    training_history: object = None


@dataclass
class IntervalLedger:
    interval: int
    m: int
    n_synced: int
    realized_loss: float
    cost: float
    S1: float
    S2: float
    expected_sum: float
    no_action_loss: float
    avoided_loss: float


LEDGER_COLUMNS = ("interval", "m", "n_synced", "realized_loss", "cost", "S1", "S2")


@dataclass
class SimulationResult:
    policy: str
    ledgers: list
    population_ok: bool = True

    @property
    def total_loss(self) -> float:
        return float(sum(r.realized_loss for r in self.ledgers))

    @property
    def total_cost(self) -> float:
        return float(sum(r.cost for r in self.ledgers))

    @property
    def total_sum(self) -> float:
        return self.total_loss + self.total_cost


def _kernels(cfg: SimConfig) -> list[MixtureParams]:
    if cfg.kernel_file:
        with open(cfg.kernel_file) as f:
            return [MixtureParams.from_dict(d) for d in json.load(f)]
    return kernel_bank(cfg.n_kernels, cfg.kernel_seed, cfg.step_interval_s)


def _stack(kernels):
    I = max(k.component_count_I for k in kernels)

    def pad(k):
        extra = I - k.component_count_I
        return (np.r_[k.alpha, np.zeros(extra)],
                np.vstack([k.mu, np.zeros((extra, 2))]),
                np.vstack([k.sigma, np.ones((extra, 2))]),
                np.r_[k.rho, np.zeros(extra)])

    parts = [pad(k) for k in kernels]
    return MixtureParams(*(np.stack([p[j] for p in parts]) for j in range(4)))


def step_length_quantile(kernels, q=0.99, n=4000, seed=0) -> float:
    rng = np.random.default_rng(seed)
    bank = _stack(kernels)
    idx = rng.integers(len(kernels), size=n)
    d = sample(bank[idx], rng)
    return float(np.quantile(np.linalg.norm(d, axis=1), q))


class _World:
    """Users, their ground-truth kernels and bounded position histories."""

    def __init__(self, cfg: SimConfig, kernels, seed: int, window: int):
        self.cfg = cfg
        self.bank = _stack(kernels)
        self.K = len(kernels)
        self.H = window + 2   # one window of deltas plus the next-step target
        self.motion = np.random.default_rng([seed, _S_MOTION])
        self.arrival = np.random.default_rng([seed, _S_ARRIVAL])
        init = np.random.default_rng([seed, _S_INIT])
        n = cfg.population
        self.ids = np.arange(n)
        self.next_id = n
        self.kernel = init.integers(self.K, size=n)
        self.hist = np.zeros((n, self.H, 2))
        self.hist[:, -1] = init.uniform(0, cfg.region_side, size=(n, 2))
        self.hist_len = np.ones(n, dtype=int)

    @property
    def pos(self):
        return self.hist[:, -1]

    def step(self):
        d = sample(self.bank[self.kernel], self.motion)
        new = self.pos + d
        self.hist[:, :-1] = self.hist[:, 1:]
        self.hist[:, -1] = new
        self.hist_len = np.minimum(self.hist_len + 1, self.H)
        side = self.cfg.region_side
        out = np.flatnonzero(np.any((new < 0) | (new > side), axis=1))
        for j in out:
            self._replace(j)
        inside = np.all((self.pos >= 0) & (self.pos <= side))
        return bool(inside) and len(np.unique(self.ids)) == self.cfg.population

    def _replace(self, j):
        side = self.cfg.region_side
        r = self.arrival
        edge, s = r.integers(4), r.uniform(0, side)
        p = [(s, 0.0), (s, side), (0.0, s), (side, s)][edge]
        self.ids[j] = self.next_id
        self.next_id += 1
        self.kernel[j] = r.integers(self.K)
        self.hist[j] = 0.0
        self.hist[j, -1] = p
        self.hist_len[j] = 1

    def fresh_pairs(self):
        """(window, target) pairs completed by the latest step."""
        ok = np.flatnonzero(self.hist_len >= self.H)
        d = np.diff(self.hist[ok], axis=1)
        return d[:, :-1].reshape(len(ok), 2 * (self.H - 2)), d[:, -1]

    def context(self, j) -> UserContext:
        k = min(self.hist_len[j], self.H - 1)
        return UserContext(int(self.ids[j]), self.hist[j, self.H - k:])


def train_in_run(world: _World, cfg: SimConfig, seed: int, model: MdnModel | None = None):
    """Fit the controller MDN on motion observed during the training phase.

    A fresh model is created (and its scaler fitted) when ``model`` is None;
    otherwise a copy of ``model`` is fine-tuned with its scaler kept.
    """
    fresh = model is None
    if fresh:
        model = mdn_mod.init_model(cfg.mdn_hidden, cfg.mdn_components, mdn_mod.WINDOW,
                                   seed=int(np.random.default_rng([seed, _S_MDN]).integers(2**31)))
    else:
        model = model.copy()
    ws, ts = [], []
    ok = True
    for _ in range(cfg.training_steps):
        ok &= world.step()
        w, t = world.fresh_pairs()
        ws.append(w)
        ts.append(t)
    W, Tg = np.concatenate(ws), np.concatenate(ts)
    if len(Tg) == 0:
        raise ConfigurationError("training phase too short to form a single window")
    rng = np.random.default_rng([seed, _S_MDN, 1])
    if cfg.train_max_windows and len(Tg) > cfg.train_max_windows:
        keep = np.sort(rng.choice(len(Tg), cfg.train_max_windows, replace=False))
        W, Tg = W[keep], Tg[keep]
    train_set, val_set = mdn_mod.split_dataset(W, Tg, 0.9, seed=int(rng.integers(2**31)))
    opt = OptimizerState(cfg.learning_rate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, hist = mdn_mod.train(model, train_set, val_set, cfg.epochs, cfg.batch_size,
                                    opt, seed=int(rng.integers(2**31)), rescale=fresh)
    return model, opt, hist, ok


def simulate_trace(cfg: SimConfig, seed: int | None = None, model: MdnModel | None = None,
                   kernels: Sequence[MixtureParams] | None = None) -> SimulationTrace:
    """Simulate one seed and record everything any policy needs.

    With ``model=None`` the controller MDN is created at the end of
    pre-convergence and trained on the training phase; a given ``model``
    (e.g. a loaded checkpoint) is fine-tuned there instead, or used as is
    when ``finetune_in_run`` is off. Either way the model keeps one RMSprop step per interval
    on newly observed windows when ``online_updates`` is set.
    """
    seed = cfg.seed if seed is None else seed
    kernels = list(kernels) if kernels is not None else _kernels(cfg)
    window = model.window if model is not None else mdn_mod.WINDOW
    world = _World(cfg, kernels, seed, window)
    chain = cfg.chain.build(np.random.default_rng([seed, _S_CHAIN]))
    ec = cfg.ec
    T = cfg.econ.interval_T
    v_cap = step_length_quantile(kernels, cfg.candidate_quantile, seed=cfg.kernel_seed)
    reach = ec.radius + cfg.candidate_radius_factor * T * v_cap
    dtype = np.dtype(cfg.rollout_dtype)

    ok = True
    for _ in range(cfg.preconvergence_steps):
        ok &= world.step()
        chain.step()
    history = None
    if model is None or cfg.finetune_in_run:
        model, opt, history, trained_ok = train_in_run(world, cfg, seed, model)
        ok &= trained_ok
    else:
        model = model.copy()
        opt = OptimizerState(cfg.learning_rate)
        for _ in range(cfg.training_steps):
            ok &= world.step()
    # independent stream, so advancing it after the motion loop is equivalent
    for _ in range(cfg.training_steps):
        chain.step()

    intervals = []
    for n in range(cfg.n_intervals):
        p_o = outage_horizon(chain, T)
        dist = np.hypot(world.pos[:, 0] - ec.center[0], world.pos[:, 1] - ec.center[1])
        cand = np.flatnonzero(dist <= reach)
        ctxs = [world.context(j) for j in cand]
        rngs = [np.random.default_rng([seed, _S_ROLLOUT, n, c.user_id]) for c in ctxs]
        fc = predict_visit_batch(model, ctxs, ec, T, cfg.n_rollouts, rngs, dtype=dtype)

        exposed: dict = {}
        presence: dict = {}
        mask = np.zeros(T, dtype=bool)
        new_w, new_t = [], []
        for k in range(T):
            chain.step()
            ok &= world.step()
            if cfg.online_updates:
                w, t = world.fresh_pairs()
                new_w.append(w)
                new_t.append(t)
            mask[k] = chain.in_outage
            for j in np.flatnonzero(membership(world.pos, ec)):
                uid = int(world.ids[j])
                presence.setdefault(uid, np.zeros(T, dtype=bool))[k] = True
                if mask[k]:
                    exposed[uid] = exposed.get(uid, 0) + 1
        if cfg.online_updates:
            w, t = np.concatenate(new_w), np.concatenate(new_t)
            if len(t):
                _, dws, dbs = mdn_mod.backward(model, w, t)
                opt.apply(model, dws, dbs)
        intervals.append(IntervalTrace(n, p_o, fc.user_ids, fc.p_v, fc.cold_start,
                                       exposed, int(mask.sum()), mask, presence))
    return SimulationTrace(cfg, seed, intervals, bool(ok), v_cap, history)


# ---------------------------------------------------------------- evaluation

def _decide(policy, it: IntervalTrace, params: EconomicParams):
    exposures = exposures_from(it.user_ids, it.p_v @ it.p_o)
    out = decide(exposures=exposures, params=params)
    if isinstance(policy, OptimalPolicy):
        decision = out.decision
    else:
        decision = double_threshold_decide(it.p_o, it.user_ids, it.p_v,
                                           (policy.P_o, policy.P_v), policy.reducer)
    expected = cost_loss_sum(decision, exposures, params)
    return decision, out.bound_migrate_S1, out.bound_stay_S2, expected


def evaluate_policy(trace: SimulationTrace, policy) -> SimulationResult:
    params = trace.config.econ
    ledgers = []
    for it in trace.intervals:
        decision, s1, s2, expected = _decide(policy, it, params)
        covered = decision.sync_set if decision.migrate_m else frozenset()
        l = params.loss_rate_l
        no_action = l * sum(it.exposed_steps.values())
        avoided = l * sum(v for u, v in it.exposed_steps.items() if u in covered)
        realized = l * sum(v for u, v in it.exposed_steps.items() if u not in covered)
        cost = params.cost_nf * decision.migrate_m + params.cost_sp * len(decision.sync_set)
        ledgers.append(IntervalLedger(it.index, decision.migrate_m, len(decision.sync_set),
                                      float(realized), float(cost), s1, s2, expected,
                                      float(no_action), float(avoided)))
    return SimulationResult(policy.name, ledgers, trace.population_ok)


def make_policy(controller_kind: str, thresholds=None, reducer="complement_product"):
    if controller_kind == "optimal":
        return OptimalPolicy()
    if controller_kind == "baseline":
        if thresholds is None:
            raise ConfigurationError("baseline controller needs thresholds (P_o, P_v)")
        return ThresholdPolicy(float(thresholds[0]), float(thresholds[1]), reducer)
    raise ConfigurationError(f"unknown controller kind {controller_kind!r}")


def run_simulation(config: SimConfig, controller_kind: str = "optimal", seed: int | None = None,
                   thresholds=None, model: MdnModel | None = None,
                   kernels=None) -> SimulationResult:
    """One full run for one controller; reproducible from ``seed``."""
    policy = make_policy(controller_kind, thresholds, config.visit_reducer)
    trace = simulate_trace(config, seed, model, kernels)
    return evaluate_policy(trace, policy)


DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass
class BenchmarkRow:
    label: str
    P_o: float | None
    P_v: float | None
    totals: list

    @property
    def mean_total(self) -> float:
        return float(np.mean(self.totals))

    @property
    def std_total(self) -> float:
        return float(np.std(self.totals, ddof=1)) if len(self.totals) > 1 else 0.0


@dataclass
class BenchmarkTable:
    rows: list
    optimal: BenchmarkRow
    seeds: list

    @property
    def best_baseline(self) -> BenchmarkRow:
        return min(self.rows, key=lambda r: r.mean_total)

    def all_rows(self):
        return list(self.rows) + [self.optimal]


def benchmark_grid(config: SimConfig, P_o_grid=DEFAULT_GRID, P_v_grid=DEFAULT_GRID,
                   seeds=range(10), model: MdnModel | None = None, kernels=None,
                   progress=None) -> BenchmarkTable:
    """Mean realized loss+cost per threshold pair and for the optimal controller.

    Every (grid point, seed) uses the same simulated trace for that seed.
    ``progress(seed, trace)`` is called once per finished seed.
    """
    P_o_grid, P_v_grid, seeds = list(P_o_grid), list(P_v_grid), list(seeds)
    if not P_o_grid or not P_v_grid or not seeds:
        raise InvalidArgument("grids and seed list must be nonempty")
    policies = [ThresholdPolicy(po, pv, config.visit_reducer) for po in P_o_grid for pv in P_v_grid]
    totals = [[] for _ in policies]
    opt_totals = []
    for s in seeds:
        trace = simulate_trace(config, s, model, kernels)
        opt_totals.append(evaluate_policy(trace, OptimalPolicy()).total_sum)
        for p, acc in zip(policies, totals):
            acc.append(evaluate_policy(trace, p).total_sum)
        if progress:
            progress(s, trace)
    rows = [BenchmarkRow(p.name, p.P_o, p.P_v, acc) for p, acc in zip(policies, totals)]
    return BenchmarkTable(rows, BenchmarkRow("optimal", None, None, opt_totals), seeds)


# ---------------------------------------------------------------- output

def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_ledger_csv(result: SimulationResult, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for r in result.ledgers:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in LEDGER_COLUMNS])


def write_benchmark_csv(table: BenchmarkTable, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("label", "P_o", "P_v", "mean_total", "std_total"))
        for r in table.all_rows():
            w.writerow((r.label, "" if r.P_o is None else _fmt(r.P_o),
                        "" if r.P_v is None else _fmt(r.P_v),
                        _fmt(r.mean_total), _fmt(r.std_total)))


def summary_line(result: SimulationResult) -> str:
    return (f"total_loss={result.total_loss!r} total_cost={result.total_cost!r} "
            f"total_sum={result.total_sum!r}")


def save_kernels(kernels, path):
    with open(path, "w") as f:
        json.dump([k.to_dict() for k in kernels], f)
