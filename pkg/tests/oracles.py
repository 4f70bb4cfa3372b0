"""Independent reference computations used by the tests."""

import numpy as np
from scipy import integrate, stats

from vnfmig import mdn


def mixture_pdf(params, points):
    """Mixture density via scipy's multivariate normal."""
    out = np.zeros(len(points))
    for a, mu, sg, r in zip(params.alpha, params.mu, params.sigma, params.rho):
        cov = [[sg[0] ** 2, r * sg[0] * sg[1]], [r * sg[0] * sg[1], sg[1] ** 2]]
        out += a * stats.multivariate_normal(mu, cov).pdf(points)
    return out


def random_mixture(rng, components=None, spread=5.0):
    I = components or int(rng.integers(1, 5))
    alpha = rng.dirichlet(np.ones(I))
    mu = rng.uniform(-spread, spread, (I, 2))
    sigma = np.exp(rng.uniform(np.log(0.3), np.log(3.0), (I, 2)))
    rho = rng.uniform(-0.9, 0.9, I)
    return mdn.MixtureParams(alpha, mu, sigma, rho)


def grid_mass(params, n=801):
    """Trapezoid integral of the mixture density over a box covering every component."""
    lo = (params.mu - 8 * params.sigma).min(axis=0)
    hi = (params.mu + 8 * params.sigma).max(axis=0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    d = mdn.density(params, np.stack([X, Y], axis=-1))
    return integrate.trapezoid(integrate.trapezoid(d, ys, axis=1), xs)


def finite_difference_grads(model, windows, targets, h=1e-5):
    """Fourth-order central differences of the mean NLL for every weight and bias."""
    dws, dbs = [], []

    def loss_at(flat, i, v):
        flat[i] = v
        return mdn.nll_loss(model, windows, targets)

    for group, out in ((model.weights, dws), (model.biases, dbs)):
        for p in group:
            g = np.zeros_like(p)
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                f2p, f1p = loss_at(flat, i, keep + 2 * h), loss_at(flat, i, keep + h)
                f1m, f2m = loss_at(flat, i, keep - h), loss_at(flat, i, keep - 2 * h)
                flat[i] = keep
                gflat[i] = (-f2p + 8 * f1p - 8 * f1m + f2m) / (12 * h)
            out.append(g)
    return dws, dbs


def max_relative_error(analytic, numeric, floor=1e-6):
    a = np.concatenate([x.ravel() for x in analytic])
    b = np.concatenate([x.ravel() for x in numeric])
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def gaussian_disc_mass(mu, sigma, rho, center, radius):
    """Probability that a correlated bivariate normal falls inside a disc (adaptive quadrature)."""
    cov = [[sigma[0] ** 2, rho * sigma[0] * sigma[1]], [rho * sigma[0] * sigma[1], sigma[1] ** 2]]
    inv = np.linalg.inv(cov)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))

    def pdf(y, x):
        d = np.array([x - mu[0], y - mu[1]])
        return norm * np.exp(-0.5 * d @ inv @ d)

    cx, cy = center
    val, _ = integrate.dblquad(
        pdf, cx - radius, cx + radius,
        lambda x: cy - np.sqrt(max(radius ** 2 - (x - cx) ** 2, 0.0)),
        lambda x: cy + np.sqrt(max(radius ** 2 - (x - cx) ** 2, 0.0)),
        epsabs=1e-10, epsrel=1e-8)
    return val
