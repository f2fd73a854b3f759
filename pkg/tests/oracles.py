"""Independent reference computations shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy import integrate, optimize

from fqstrat.processes import GaussianProcessSpec, ou_residual

BM = GaussianProcessSpec.brownian_motion
BRIDGE = GaussianProcessSpec.brownian_bridge
OU = GaussianProcessSpec.ornstein_uhlenbeck

# one representative per kind and OU regime
REGIMES = {
    "bm": BM(1.0),
    "bm-T3": BM(3.0),
    "bridge": BRIDGE(2.0),
    "ou-deterministic-start": OU(1.0, 1.0, 3.0),
    "ou-stationary": GaussianProcessSpec.stationary_ou(1.0, 1.0, 3.0),
    "ou-c-negative": OU(0.5, 1.0, 2.0, sigma0=0.7),
    "ou-c-positive-no-hyperbolic": OU(3.0, 1.0, 0.5, sigma0=math.sqrt(0.4)),
    "ou-hyperbolic": OU(3.0, 1.0, 3.0, sigma0=math.sqrt(0.4)),
}


def gauss_legendre(T, n_nodes=512, pieces=8):
    """Composite Gauss-Legendre nodes and weights on [0, T]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes // pieces)
    edges = np.linspace(0, T, pieces + 1)
    nodes = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges, edges[1:])])
    weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges, edges[1:])])
    return nodes, weights


def orthonormality_gap(spec, d=12):
    nodes, w = gauss_legendre(spec.horizon)
    E = spec.basis(nodes, d)
    return float(np.max(np.abs((E * w[:, None]).T @ E - np.eye(d))))


def scan_roots(theta, sigma, sigma0, T, top, per_period=400):
    """Positive roots of the OU frequency equation below ``top`` by a dense
    sign scan refined with Brent's method."""
    f = lambda w: ou_residual(w, theta, sigma, sigma0, T)  # noqa: E731
    w = np.linspace(1e-9, top, int(per_period * top * T / math.pi) + 2)
    v = f(w)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    return [optimize.brentq(f, w[i], w[i + 1], xtol=1e-15) for i in idx]


def random_ou_parameters(rng):
    theta = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
    sigma = float(np.exp(rng.uniform(np.log(0.1), np.log(3.0))))
    sigma0 = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.0, 3.0))
    T = float(rng.uniform(0.2, 5.0))
    return theta, sigma, sigma0, T


def quadrature_r_yv(grid, d, T):
    """E[int W e_i | W on grid] by integrating the piecewise-linear
    conditional mean against each eigenfunction."""
    spec = GaussianProcessSpec.brownian_motion(T)
    out = np.zeros((d, len(grid)))
    for i in range(d):
        e = lambda s, i=i: spec.basis([s], d)[0, i]  # noqa: E731
        q = lambda f, a, b: integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]  # noqa: E731
        if grid[0] > 0:
            out[i, 0] += q(lambda s: s / grid[0] * e(s), 0.0, grid[0])
        for j in range(len(grid) - 1):
            a, b = grid[j], grid[j + 1]
            if b > a:
                out[i, j] += q(lambda s: (b - s) / (b - a) * e(s), a, b)
                out[i, j + 1] += q(lambda s: (s - a) / (b - a) * e(s), a, b)
        if grid[-1] < T:
            out[i, -1] += q(e, grid[-1], T)
    return out
