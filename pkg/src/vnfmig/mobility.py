"""Edge-coverage visit probabilities from autoregressive MDN rollouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .econ import InvalidArgument
from .mdn import MdnModel, forward_normalized

DEFAULT_ROLLOUTS = 100


@dataclass(frozen=True)
class EcGeometry:
    center: tuple = (0.0, 0.0)
    radius: float = 2000.0

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("EC radius must be positive")


@dataclass
class UserContext:
    user_id: Hashable
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(self.positions) < 1 or not np.all(np.isfinite(self.positions)):
            raise InvalidArgument("context needs at least the current (finite) position")

    @property
    def current(self) -> np.ndarray:
        return self.positions[-1]

    def cold_start(self, window: int) -> bool:
        return len(self.positions) < window + 1

    def window_deltas(self, window: int) -> np.ndarray:
        """Last ``window`` displacements, zero-padded at the front for short histories."""
        d = np.diff(self.positions[-(window + 1):], axis=0)
        if len(d) < window:
            d = np.vstack([np.zeros((window - len(d), 2)), d])
        return d


def membership(position, ec: EcGeometry):
    """Inside the disc, boundary inclusive. Works on ``(..., 2)`` arrays."""
    p = np.asarray(position, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidArgument("position must be finite")
    dist = np.hypot(p[..., 0] - ec.center[0], p[..., 1] - ec.center[1])
    inside = dist <= ec.radius
    return bool(inside) if np.ndim(inside) == 0 else inside


@dataclass
class VisitForecast:
    user_ids: list
    p_v: np.ndarray          # (n_users, T)
    cold_start: np.ndarray   # (n_users,) bool


def _draws(rng, T, n):
    return rng.random((T, n)), rng.standard_normal((T, n, 2))


def _rollout(model, windows_n, starts, draws, ec, T, dtype):
    """Advance all rollouts jointly; ``windows_n`` is (N, 2W) in normalized space."""
    W = model.window
    net = model.astype(dtype)
    mean, std = model.scaler_mean, model.scaler_std
    u_all, z_all = draws
    pos = starts.astype(float).copy()
    win = windows_n.astype(dtype).copy()
    N = len(pos)
    rows = np.arange(N)
    inside = np.empty((T, N), dtype=bool)
    for k in range(T):
        p = forward_normalized(net, win)
        cum = np.cumsum(p.alpha, axis=1)
        comp = np.minimum((u_all[k][:, None] >= cum).sum(axis=1), p.alpha.shape[1] - 1)
        mu, sg, rho = p.mu[rows, comp], p.sigma[rows, comp], p.rho[rows, comp]
        z = z_all[k]
        dn = np.stack([mu[:, 0] + sg[:, 0] * z[:, 0],
                       mu[:, 1] + sg[:, 1] * (rho * z[:, 0] + np.sqrt(1 - rho ** 2) * z[:, 1])], axis=1)
        pos += dn * std + mean
        win[:, :2 * W - 2] = win[:, 2:]
        win[:, 2 * W - 2:] = dn
        inside[k] = membership(pos, ec)
    return inside


def predict_visit_batch(model: MdnModel, contexts: Sequence[UserContext], ec: EcGeometry,
                        horizon_T: int, n_rollouts: int = DEFAULT_ROLLOUTS,
                        rngs: Sequence[np.random.Generator] = (), dtype=np.float64,
                        chunk_users: int = 64) -> VisitForecast:
    """Visit probabilities for many users; user ``j`` consumes only ``rngs[j]``.

    Results do not depend on how users are grouped into chunks.
    """
    if horizon_T < 1 or n_rollouts < 1:
        raise InvalidArgument("horizon and rollout count must be positive")
    if len(rngs) != len(contexts):
        raise InvalidArgument("need one rng stream per user")
    W = model.window
    n_users = len(contexts)
    out = np.zeros((n_users, horizon_T))
    cold = np.array([c.cold_start(W) for c in contexts], dtype=bool)
    for a in range(0, n_users, chunk_users):
        ctxs = contexts[a:a + chunk_users]
        draws = [_draws(rngs[a + j], horizon_T, n_rollouts) for j in range(len(ctxs))]
        u = np.concatenate([d[0] for d in draws], axis=1)
        z = np.concatenate([d[1] for d in draws], axis=1)
        wins = np.stack([((c.window_deltas(W) - model.scaler_mean) / model.scaler_std).ravel()
                         for c in ctxs])
        wins = np.repeat(wins, n_rollouts, axis=0)
        starts = np.repeat(np.stack([c.current for c in ctxs]), n_rollouts, axis=0)
        inside = _rollout(model, wins, starts, (u, z), ec, horizon_T, dtype)
        out[a:a + len(ctxs)] = inside.reshape(horizon_T, len(ctxs), n_rollouts).mean(axis=2).T
    return VisitForecast([c.user_id for c in contexts], out, cold)


def predict_visit_probabilities(model: MdnModel, ctx: UserContext, ec: EcGeometry,
                                horizon_T: int, n_rollouts: int = DEFAULT_ROLLOUTS,
                                rng_stream: np.random.Generator | None = None,
                                require_history: bool = True, dtype=np.float64) -> np.ndarray:
    """Fraction of rollouts inside the EC at each of the next ``horizon_T`` steps."""
    if require_history and ctx.cold_start(model.window):
        raise InvalidArgument(
            f"user {ctx.user_id!r} has {len(ctx.positions)} positions; "
            f"need {model.window + 1}")
    rng = np.random.default_rng() if rng_stream is None else rng_stream
    return predict_visit_batch(model, [ctx], ec, horizon_T, n_rollouts, [rng], dtype).p_v[0]
