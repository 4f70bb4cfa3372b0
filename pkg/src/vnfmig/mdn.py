"""Mixture density network over 2D displacement steps, written on plain numpy.

A feed-forward net with ReLU hidden layers maps a window of 32 past
displacements (64 reals) to ``6*I`` head pre-activations that parametrize a
mixture of ``I`` bivariate Gaussians over the next displacement.

Head layout (``I`` components, blocks of length ``I``)::

    [ alpha logits | mu_x | mu_y | log sigma_x | log sigma_y | rho pre-act ]

mapped through softmax, identity, identity, exp, exp and tanh respectively.
Inputs and targets are standardized per coordinate by a scaler stored with
the model; :func:`forward` returns mixtures in physical units.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .econ import InvalidArgument

WINDOW = 32
LOG_FLOOR = np.log(1e-300)
# keep exp/tanh heads inside the open parameter domain for any finite weights
_LOG_SIGMA_CLIP = 40.0
_RHO_SCALE = 1.0 - 1e-7
_LOG_2PI = np.log(2 * np.pi)


@dataclass
class MixtureParams:
    """Bivariate Gaussian mixture; arrays may carry leading batch dimensions.

    Shapes: ``alpha (..., I)``, ``mu (..., I, 2)``, ``sigma (..., I, 2)``,
    ``rho (..., I)``.
    """

    alpha: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)

    @property
    def component_count_I(self) -> int:
        return self.alpha.shape[-1]

    def validate(self, tol=1e-9):
        I = self.component_count_I
        batch = self.alpha.shape[:-1]
        if self.mu.shape != batch + (I, 2) or self.sigma.shape != batch + (I, 2) \
                or self.rho.shape != batch + (I,):
            raise InvalidArgument("inconsistent mixture parameter shapes")
        if np.any(self.alpha < 0) or np.any(np.abs(self.alpha.sum(-1) - 1) > tol):
            raise InvalidArgument("mixture weights must be nonnegative and sum to 1")
        if not np.all(np.isfinite(self.mu)):
            raise InvalidArgument("means must be finite")
        if not np.all(self.sigma > 0) or not np.all(np.isfinite(self.sigma)):
            raise InvalidArgument("standard deviations must be positive and finite")
        if not np.all(np.abs(self.rho) < 1):
            raise InvalidArgument("correlations must lie in (-1, 1)")
        return self

    def __getitem__(self, idx) -> "MixtureParams":
        return MixtureParams(self.alpha[idx], self.mu[idx], self.sigma[idx], self.rho[idx])

    def mean(self) -> np.ndarray:
        return np.einsum("...i,...ij->...j", self.alpha, self.mu)

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "mu": self.mu.tolist(),
                "sigma": self.sigma.tolist(), "rho": self.rho.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["alpha"], d["mu"], d["sigma"], d["rho"]).validate()

    @classmethod
    def single(cls, mu=(0.0, 0.0), sigma=(1.0, 1.0), rho=0.0):
        return cls([1.0], [list(mu)], [list(sigma)], [rho])


def log_component_density(t, mu, sigma, rho):
    """Elementwise log N2(t; mu_i, sigma_i, rho_i) broadcast over components."""
    t = np.asarray(t, dtype=float)[..., None, :]
    z = (t - mu) / sigma
    one_m = 1.0 - rho ** 2
    q = (z[..., 0] ** 2 - 2 * rho * z[..., 0] * z[..., 1] + z[..., 1] ** 2) / one_m
    return (-_LOG_2PI - np.log(sigma[..., 0]) - np.log(sigma[..., 1])
            - 0.5 * np.log(one_m) - 0.5 * q)


def log_density(params: MixtureParams, target) -> np.ndarray:
    lc = log_component_density(target, params.mu, params.sigma, params.rho)
    with np.errstate(divide="ignore"):
        la = np.log(params.alpha)
    return _logsumexp(la + lc, axis=-1)


def density(params: MixtureParams, target) -> np.ndarray | float:
    """Mixture density at ``target`` (shape ``(..., 2)``)."""
    out = np.exp(log_density(params, target))
    return float(out) if np.ndim(out) == 0 else out


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


def sample(params: MixtureParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one displacement per mixture in ``params`` (batch shape preserved)."""
    alpha = params.alpha
    batch = alpha.shape[:-1]
    flat_alpha = alpha.reshape(-1, alpha.shape[-1])
    cum = np.cumsum(flat_alpha, axis=-1)
    u = rng.random(flat_alpha.shape[0])
    comp = np.minimum((u[:, None] >= cum).sum(axis=-1), flat_alpha.shape[-1] - 1)
    z = rng.standard_normal((flat_alpha.shape[0], 2))
    rows = np.arange(flat_alpha.shape[0])
    mu = params.mu.reshape(-1, *params.mu.shape[-2:])[rows, comp]
    sg = params.sigma.reshape(-1, *params.sigma.shape[-2:])[rows, comp]
    rho = params.rho.reshape(-1, params.rho.shape[-1])[rows, comp]
    x = mu[:, 0] + sg[:, 0] * z[:, 0]
    y = mu[:, 1] + sg[:, 1] * (rho * z[:, 0] + np.sqrt(1 - rho ** 2) * z[:, 1])
    return np.stack([x, y], axis=-1).reshape(batch + (2,))


# ---------------------------------------------------------------- model

@dataclass
class MdnModel:
    weights: list
    biases: list
    components: int = 2
    window: int = WINDOW
    scaler_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scaler_std: np.ndarray = field(default_factory=lambda: np.ones(2))
    seed: int = 0

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MdnModel":
        return MdnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.components, self.window, self.scaler_mean.copy(),
                        self.scaler_std.copy(), self.seed)

    def astype(self, dtype) -> "MdnModel":
        m = self.copy()
        m.weights = [w.astype(dtype) for w in m.weights]
        m.biases = [b.astype(dtype) for b in m.biases]
        return m

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


HEAD_INIT_SCALE = 0.01


def init_model(hidden=(512, 128), components=2, window=WINDOW, seed=0,
               head_scale=HEAD_INIT_SCALE) -> MdnModel:
    """He-style uniform fan-in initialization, zero biases.

    The last layer has ``6 * components`` units and acts as the mixture head,
    so the default gives the 64-512-128-12 stack. Its weights are further
    multiplied by ``head_scale``, which starts every window near the same
    standard-normal mixture and keeps early updates from fitting input noise.
    """
    if components < 1:
        raise InvalidArgument("need at least one mixture component")
    sizes = (2 * window,) + tuple(hidden) + (6 * components,)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights[-1] *= head_scale
    return MdnModel(weights, biases, components, window, seed=seed)


def zero_model(hidden=(512, 128), components=2, window=WINDOW) -> MdnModel:
    m = init_model(hidden, components, window)
    m.weights = [np.zeros_like(w) for w in m.weights]
    return m


def normalize_windows(model: MdnModel, windows) -> np.ndarray:
    x = np.asarray(windows, dtype=float).reshape(-1, model.window, 2)
    return ((x - model.scaler_mean) / model.scaler_std).reshape(-1, 2 * model.window)


def _forward_raw(model, xn):
    """Returns head pre-activations and the per-layer activations needed for backprop."""
    acts = [xn]
    h = xn
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0)
        acts.append(h)
    return h, acts


def _head(model, z):
    I = model.components
    logits = z[:, :I]
    logits = logits - logits.max(axis=1, keepdims=True)
    ea = np.exp(logits)
    alpha = ea / ea.sum(axis=1, keepdims=True)
    mu = np.stack([z[:, I:2 * I], z[:, 2 * I:3 * I]], axis=-1)
    log_s = np.clip(np.stack([z[:, 3 * I:4 * I], z[:, 4 * I:5 * I]], axis=-1),
                    -_LOG_SIGMA_CLIP, _LOG_SIGMA_CLIP)
    sigma = np.exp(log_s)
    rho = _RHO_SCALE * np.tanh(z[:, 5 * I:6 * I])
    return alpha, mu, sigma, rho


def forward_normalized(model: MdnModel, xn) -> MixtureParams:
    """Mixtures in the model's standardized displacement space."""
    z, _ = _forward_raw(model, np.atleast_2d(xn))
    return MixtureParams(*_head(model, z))


def _to_physical(model, p: MixtureParams) -> MixtureParams:
    return MixtureParams(p.alpha, p.mu * model.scaler_std + model.scaler_mean,
                         p.sigma * model.scaler_std, p.rho)


def forward_batch(model: MdnModel, windows) -> MixtureParams:
    w = np.asarray(windows, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InvalidArgument("feature windows must be finite")
    return _to_physical(model, forward_normalized(model, normalize_windows(model, w)))


def forward(model: MdnModel, window) -> MixtureParams:
    """Mixture over the next displacement given one window of past displacements."""
    w = np.asarray(window, dtype=float).ravel()
    if w.size != 2 * model.window:
        raise InvalidArgument(f"window must hold {2 * model.window} values, got {w.size}")
    return forward_batch(model, w[None, :])[0]


# ---------------------------------------------------------------- objective

def _check_batch(windows, targets):
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if windows.ndim == 1:
        windows = windows[None, :]
    if len(targets) == 0 or len(windows) != len(targets):
        raise InvalidArgument("batch must be nonempty with one target per window")
    return windows, targets


def _per_sample_nll(model, windows, targets):
    xn = normalize_windows(model, windows)
    tn = (targets - model.scaler_mean) / model.scaler_std
    z, acts = _forward_raw(model, xn)
    alpha, mu, sigma, rho = _head(model, z)
    lc = log_component_density(tn, mu, sigma, rho)
    la = np.log(np.maximum(alpha, 1e-300))
    ll = _logsumexp(la + lc, axis=-1)
    jac = np.log(model.scaler_std).sum()
    nll = -np.maximum(ll - jac, LOG_FLOOR)
    return nll, (tn, z, acts, alpha, mu, sigma, rho, la + lc, ll - jac)


def nll_loss(model: MdnModel, windows, targets) -> float:
    """Mean negative log-likelihood (nats) of physical-unit targets."""
    windows, targets = _check_batch(windows, targets)
    nll, _ = _per_sample_nll(model, windows, targets)
    return float(nll.mean())


def backward(model: MdnModel, windows, targets):
    """Exact gradient of :func:`nll_loss`; returns ``(loss, dweights, dbiases)``."""
    windows, targets = _check_batch(windows, targets)
    nll, (tn, z, acts, alpha, mu, sigma, rho, joint, ll) = _per_sample_nll(model, windows, targets)
    n = len(targets)
    I = model.components
    live = (ll > LOG_FLOOR).astype(float)[:, None] / n

    gamma = np.exp(joint - _logsumexp(joint, axis=-1)[:, None])
    d = (tn[:, None, :] - mu) / sigma
    z1, z2 = d[..., 0], d[..., 1]
    one_m = 1.0 - rho ** 2
    q = (z1 ** 2 - 2 * rho * z1 * z2 + z2 ** 2) / one_m

    g_logit = alpha - gamma
    dmu1 = (z1 - rho * z2) / (sigma[..., 0] * one_m)
    dmu2 = (z2 - rho * z1) / (sigma[..., 1] * one_m)
    dls1 = -1 + z1 * (z1 - rho * z2) / one_m
    dls2 = -1 + z2 * (z2 - rho * z1) / one_m
    raw_ls = np.stack([z[:, 3 * I:4 * I], z[:, 4 * I:5 * I]], axis=-1)
    inside = (np.abs(raw_ls) < _LOG_SIGMA_CLIP).astype(float)
    # d log N / d rho, then chain through rho = c * tanh(r)
    drho = rho / one_m + z1 * z2 / one_m - rho * q / one_m
    th = rho / _RHO_SCALE
    dr = drho * _RHO_SCALE * (1 - th ** 2)

    gz = np.concatenate([
        g_logit,
        -gamma * dmu1,
        -gamma * dmu2,
        -gamma * dls1 * inside[..., 0],
        -gamma * dls2 * inside[..., 1],
        -gamma * dr,
    ], axis=1) * live

    dws, dbs = [None] * len(model.weights), [None] * len(model.weights)
    g = gz
    for k in range(len(model.weights) - 1, -1, -1):
        dws[k] = acts[k].T @ g
        dbs[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ model.weights[k].T) * (acts[k] > 0)
    return float(nll.mean()), dws, dbs


# ---------------------------------------------------------------- training

@dataclass
class OptimizerState:
    """RMSprop state: ``cache = decay*cache + (1-decay)*g**2``, ``w -= lr*g/(sqrt(cache)+eps)``."""

    learning_rate: float = 1e-4
    decay: float = 0.9
    epsilon: float = 1e-7
    cache_w: list | None = None
    cache_b: list | None = None

    def apply(self, model: MdnModel, dws, dbs):
        if self.cache_w is None:
            self.cache_w = [np.zeros_like(w) for w in model.weights]
            self.cache_b = [np.zeros_like(b) for b in model.biases]
        r, lr, eps = self.decay, self.learning_rate, self.epsilon
        for params, grads, caches in ((model.weights, dws, self.cache_w),
                                      (model.biases, dbs, self.cache_b)):
            for p, g, c in zip(params, grads, caches):
                c *= r
                c += (1 - r) * g * g
                p -= lr * g / (np.sqrt(c) + eps)


@dataclass
class TrainingHistory:
    train_nll: list
    val_nll: list

    def rows(self):
        return [(e, tr, va) for e, (tr, va) in enumerate(zip(self.train_nll, self.val_nll))]


def fit_scaler(model: MdnModel, targets):
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    model.scaler_mean = t.mean(axis=0)
    std = t.std(axis=0)
    model.scaler_std = np.where(std > 0, std, 1.0)


def split_dataset(windows, targets, ratio=0.9, seed=0):
    """Shuffle and split into ``(train_w, train_t), (val_w, val_t)``."""
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = len(targets)
    idx = np.random.default_rng(seed).permutation(n)
    k = int(round(ratio * n))
    tr, va = idx[:k], idx[k:]
    return (windows[tr], targets[tr]), (windows[va], targets[va])


def _eval(model, w, t, chunk=8192):
    if len(t) == 0:
        return float("nan")
    total = 0.0
    for i in range(0, len(t), chunk):
        nll, _ = _per_sample_nll(model, w[i:i + chunk], t[i:i + chunk])
        total += nll.sum()
    return float(total / len(t))


def train(model: MdnModel, train_set, val_set, epochs=15, batch_size=512,
          optimizer: OptimizerState | None = None, seed=0, rescale=True):
    """Minibatch RMSprop on the mixture NLL.

    Losses are evaluated on the full training and validation sets before the
    first epoch (entry 0) and after every epoch. Fixed shuffle order per seed.
    """
    tw, tt = (np.asarray(a, dtype=float) for a in train_set)
    vw, vt = (np.asarray(a, dtype=float) for a in val_set)
    if len(tt) == 0:
        raise InvalidArgument("empty training set")
    if optimizer is None:
        optimizer = OptimizerState()
    if batch_size > len(tt):
        warnings.warn(f"batch size {batch_size} exceeds training set size {len(tt)}; clamping",
                      stacklevel=2)
        batch_size = len(tt)
    if rescale:
        fit_scaler(model, tt)
    rng = np.random.default_rng(seed)
    hist = TrainingHistory([_eval(model, tw, tt)], [_eval(model, vw, vt)])
    for _ in range(epochs):
        order = rng.permutation(len(tt))
        for i in range(0, len(order), batch_size):
            b = order[i:i + batch_size]
            _, dws, dbs = backward(model, tw[b], tt[b])
            optimizer.apply(model, dws, dbs)
        hist.train_nll.append(_eval(model, tw, tt))
        hist.val_nll.append(_eval(model, vw, vt))
    return model, hist


# ---------------------------------------------------------------- checkpoint
#
# Layout (all integers little-endian):
#   8 bytes  magic b"VNFMDN\x00\x01"  (last two bytes: format version 1)
#   4 bytes  uint32 length H of the header
#   H bytes  UTF-8 JSON header: layer_sizes, components, window, seed,
#            scaler_mean, scaler_std
#   rest     float64 little-endian weights then bias of each layer, in order,
#            weights row-major with shape (fan_in, fan_out)

MAGIC = b"VNFMDN\x00\x01"


def save_checkpoint(model: MdnModel, path):
    header = json.dumps({
        "layer_sizes": list(model.layer_sizes),
        "components": model.components,
        "window": model.window,
        "seed": model.seed,
        "scaler_mean": [float(v) for v in model.scaler_mean],
        "scaler_std": [float(v) for v in model.scaler_std],
    }, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> MdnModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an MDN checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hlen])
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt header") from e
    sizes = header["layer_sizes"]
    data = np.frombuffer(blob, dtype="<f8", offset=12 + hlen)
    weights, biases, pos = [], [], 0
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        weights.append(data[pos:pos + fi * fo].reshape(fi, fo).astype(float))
        pos += fi * fo
        biases.append(data[pos:pos + fo].astype(float))
        pos += fo
    if pos != data.size:
        raise CheckpointError(f"{path}: payload size does not match header")
    return MdnModel(weights, biases, header["components"], header["window"],
                    np.array(header["scaler_mean"]), np.array(header["scaler_std"]),
                    header["seed"])
