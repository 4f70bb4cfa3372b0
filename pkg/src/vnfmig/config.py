"""Experiment configuration: one INI-style file with dotted section names.

Every key is addressed as ``section.key`` (``[sim.ec]`` / ``radius`` is
``sim.ec.radius``). Unknown keys are rejected. Precedence, lowest first:
built-in defaults, the ``--desk-scale`` preset, the config file, explicit
command-line overrides.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from .econ import EconomicParams, InvalidArgument
from .mdn import OptimizerState
from .outage import DEFAULT_STATES, default_transition_matrix
from .simlab import DEFAULT_GRID, ChainSpec, ConfigurationError, SimConfig
from .trajdata import PipelineConfig


def _floats(s):
    if isinstance(s, (list, tuple)):
        return tuple(float(v) for v in s)
    return tuple(float(v) for v in str(s).replace(";", ",").split(",") if v.strip())


def _names(s):
    if isinstance(s, (list, tuple)):
        return tuple(s)
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


def _matrix(s):
    if isinstance(s, (list, tuple)):
        return tuple(tuple(float(v) for v in row) for row in s)
    return tuple(tuple(float(v) for v in row.split(",")) for row in str(s).split(";") if row.strip())


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _fmt_matrix(m):
    return "; ".join(", ".join(f"{v:g}" for v in row) for row in m)


@dataclass(frozen=True)
class Key:
    name: str
    default: object
    parse: object
    doc: str


KEYS = [
    # pipeline
    Key("pipeline.resample_interval_s", 60.0, float, "uniform resampling interval (s)"),
    Key("pipeline.gap_factor", 5.0, float, "gaps longer than this many intervals split a trajectory"),
    Key("pipeline.vmax_mps", 2.5, float, "pedestrian speed cut (m/s)"),
    Key("pipeline.speed_percentile", 95.0, float, "step-speed percentile compared with vmax"),
    Key("pipeline.stationarity_target", 0.92, float, "target fraction of stationary segments"),
    Key("pipeline.stationarity_min_len", 64, int, "failing segments shorter than this are dropped"),
    Key("pipeline.mean_gap_max", 0.5, float, "split-half mean gap limit, in pooled std"),
    Key("pipeline.var_ratio_lo", 0.5, float, "split-half variance ratio lower bound"),
    Key("pipeline.var_ratio_hi", 2.0, float, "split-half variance ratio upper bound"),
    Key("pipeline.split_ratio", 0.9, float, "training fraction of segments"),
    # mdn (layer sizes are fixed at 64-512-128-12)
    Key("mdn.components", 2, int, "mixture components I (head width 6*I)"),
    Key("mdn.learning_rate", 1e-4, float, "RMSprop learning rate"),
    Key("mdn.decay", 0.9, float, "RMSprop squared-gradient decay"),
    Key("mdn.epsilon", 1e-7, float, "RMSprop epsilon"),
    Key("mdn.epochs", 15, int, "training epochs"),
    Key("mdn.batch_size", 512, int, "minibatch size"),
    Key("mdn.export_kernels", 50, int, "fitted kernels written next to a trained checkpoint"),
    # economics
    Key("econ.loss_rate_l", 1.0, float, "loss per uncovered user per outage step"),
    Key("econ.cost_nf", 10.0, float, "cost per VNF migration"),
    Key("econ.cost_sp", 0.5, float, "cost per subscriber-profile synchronization"),
    Key("econ.interval_T", 30, int, "synchronization interval (steps)"),
    # outage chain
    Key("outage.states", DEFAULT_STATES, _names, "state names"),
    Key("outage.matrix", tuple(map(tuple, default_transition_matrix().tolist())), _matrix,
        "row-stochastic transition matrix, rows separated by ';'"),
    Key("outage.outage_states", ("outage",), _names, "names (or indices) of outage states"),
    Key("outage.initial", "normal", str, "initial state"),
    # simulation
    Key("sim.region_side", 8000.0, float, "side of the square region (m)"),
    Key("sim.ec.radius", 2000.0, float, "EC radius (m)"),
    Key("sim.ec.center_x", None, float, "EC center x (m); default: middle of the region"),
    Key("sim.ec.center_y", None, float, "EC center y (m); default: middle of the region"),
    Key("sim.population", 1000, int, "number of users"),
    Key("sim.step_interval_s", 60.0, float, "duration of one motion step (s)"),
    Key("sim.preconvergence_steps", 250, int, "steps before the MDN is created"),
    Key("sim.training_steps", 500, int, "steps of observed motion used to train the MDN"),
    Key("sim.evaluation_steps", 4000, int, "evaluated steps (whole intervals are used)"),
    Key("sim.n_rollouts", 100, int, "Monte-Carlo rollouts per user and interval"),
    Key("sim.candidate_quantile", 0.99, float, "kernel step-length quantile for the reach radius"),
    Key("sim.candidate_radius_factor", 1.0, float, "multiplier on T * step-length quantile"),
    Key("sim.n_kernels", 50, int, "size of the synthetic ground-truth kernel bank"),
    Key("sim.kernel_seed", 0, int, "seed of the synthetic kernel bank"),
    Key("sim.kernel_file", "", str, "JSON kernel bank (e.g. written by train); overrides the synthetic bank"),
    Key("sim.train_max_windows", 0, int, "subsample of training-phase windows (0 = all)"),
    Key("sim.finetune_in_run", True, _bool, "fine-tune a loaded checkpoint on the training phase"),
    Key("sim.online_updates", True, _bool, "one RMSprop step per interval on new windows"),
    Key("sim.rollout_dtype", "float32", str, "float dtype of rollout forward passes"),
    Key("sim.visit_reducer", "complement_product", str,
        "baseline cumulative visit probability: complement_product | sum | max"),
    # baseline and benchmark
    Key("baseline.P_o", 0.5, float, "outage-risk threshold of the baseline"),
    Key("baseline.P_v", 0.5, float, "visit-probability threshold of the baseline"),
    Key("benchmark.P_o_grid", DEFAULT_GRID, _floats, "baseline P_o grid"),
    Key("benchmark.P_v_grid", DEFAULT_GRID, _floats, "baseline P_v grid"),
    Key("benchmark.seeds", 10, int, "number of seeds (seed, seed+1, ...)"),
    # seeds
    Key("seeds.master", 0, int, "master seed"),
]

KEYMAP = {k.name: k for k in KEYS}

DESK_SCALE = {
    "sim.population": 200,
    "sim.evaluation_steps": 1000,
    "sim.train_max_windows": 20000,
}


def defaults() -> dict:
    return {k.name: k.default for k in KEYS}


def _set(values: dict, name: str, raw):
    if name not in KEYMAP:
        raise ConfigurationError(f"unknown configuration key {name!r}")
    try:
        values[name] = KEYMAP[name].parse(raw)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"bad value for {name}: {raw!r} ({e})") from e


def load(path=None, desk_scale=False, overrides=()) -> dict:
    """Resolve the flat ``{dotted key: value}`` configuration."""
    values = defaults()
    if desk_scale:
        values.update(DESK_SCALE)
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as f:
                cp.read_file(f)
        except (OSError, configparser.Error) as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        for section in cp.sections():
            for key, raw in cp.items(section):
                _set(values, f"{section}.{key}", raw)
    for item in overrides:
        name, sep, raw = item.partition("=")
        if not sep:
            raise ConfigurationError(f"override must be key=value, got {item!r}")
        _set(values, name.strip(), raw.strip())
    return values


def help_text() -> str:
    lines = ["configuration keys (section.key = default):"]
    for k in KEYS:
        d = k.default
        if k.name == "outage.matrix":
            d = _fmt_matrix(d)
        elif isinstance(d, tuple):
            d = ", ".join(str(v) for v in d)
        lines.append(f"  {k.name} = {d}\n      {k.doc}")
    return "\n".join(lines)


def dump(values: dict) -> str:
    """Render values as a config file that :func:`load` reads back."""
    sections: dict = {}
    for k in KEYS:
        v = values[k.name]
        if v is None:
            continue
        section, _, key = k.name.rpartition(".")
        if k.name == "outage.matrix":
            v = _fmt_matrix(v)
        elif isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        sections.setdefault(section, []).append(f"{key} = {v}")
    return "\n".join(f"[{s}]\n" + "\n".join(items) + "\n" for s, items in sections.items())


# ---------------------------------------------------------------- builders

def economic_params(v) -> EconomicParams:
    try:
        return EconomicParams(v["econ.loss_rate_l"], v["econ.cost_nf"], v["econ.cost_sp"],
                              v["econ.interval_T"])
    except InvalidArgument as e:
        raise ConfigurationError(str(e)) from e


def pipeline_config(v) -> PipelineConfig:
    return PipelineConfig(**{f: v[f"pipeline.{f}"] for f in PipelineConfig.__dataclass_fields__})


def optimizer(v) -> OptimizerState:
    return OptimizerState(v["mdn.learning_rate"], v["mdn.decay"], v["mdn.epsilon"])


def sim_config(v) -> SimConfig:
    center = None
    if v["sim.ec.center_x"] is not None or v["sim.ec.center_y"] is not None:
        half = v["sim.region_side"] / 2
        center = (half if v["sim.ec.center_x"] is None else v["sim.ec.center_x"],
                  half if v["sim.ec.center_y"] is None else v["sim.ec.center_y"])
    chain = ChainSpec(v["outage.states"], v["outage.matrix"], v["outage.outage_states"],
                      v["outage.initial"])
    try:
        chain.build(0)
    except ValueError as e:   # includes InvalidArgument and ragged matrices
        raise ConfigurationError(f"outage chain: {e}") from e
    try:
        np.dtype(v["sim.rollout_dtype"])
    except TypeError as e:
        raise ConfigurationError(f"bad rollout dtype {v['sim.rollout_dtype']!r}") from e
    return SimConfig(
        region_side=v["sim.region_side"], ec_radius=v["sim.ec.radius"], ec_center=center,
        population=v["sim.population"], step_interval_s=v["sim.step_interval_s"],
        preconvergence_steps=v["sim.preconvergence_steps"], training_steps=v["sim.training_steps"],
        evaluation_steps=v["sim.evaluation_steps"], econ=economic_params(v), chain=chain,
        n_rollouts=v["sim.n_rollouts"], candidate_quantile=v["sim.candidate_quantile"],
        candidate_radius_factor=v["sim.candidate_radius_factor"], n_kernels=v["sim.n_kernels"],
        kernel_seed=v["sim.kernel_seed"], kernel_file=v["sim.kernel_file"] or None,
        mdn_components=v["mdn.components"], learning_rate=v["mdn.learning_rate"],
        epochs=v["mdn.epochs"], batch_size=v["mdn.batch_size"],
        train_max_windows=v["sim.train_max_windows"], finetune_in_run=v["sim.finetune_in_run"],
        online_updates=v["sim.online_updates"], rollout_dtype=v["sim.rollout_dtype"],
        visit_reducer=v["sim.visit_reducer"], seed=v["seeds.master"])
