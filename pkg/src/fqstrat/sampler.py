"""Conditional simulation of Gaussian paths given their first K-L coordinates.

Let ``V`` be the process on a time grid and ``Y`` its first ``d`` K-L
coordinates. Given ``Y = y``,

    V | Y = y  ~  R_VY y + Z,        Z = V' - R_VY G,
    G ~ N(R_YV V', cov_Y - R_YV cov_V R_YV^T),

where ``V'`` is an unconditional path. Only ``V'`` costs O(n); the rest is
O(n d) per path with matrices prepared once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .decomposition import Stratification
from .gaussian import truncated_normal_sample_bounds
from .processes import GaussianProcessSpec, ProcessKind

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


def time_grid(times, horizon) -> np.ndarray:
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("empty time grid")
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be sorted")
    if t[0] < 0 or t[-1] > horizon * (1 + 1e-12):
        raise ValueError("time grid must lie in [0, T]")
    return t


def uniform_grid(horizon: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, horizon, n_steps + 1)


# --------------------------------------------------------------------------
# unconditional paths

def centered_paths(spec: GaussianProcessSpec, grid, n_paths: int, rng) -> np.ndarray:
    """Exact draws of the centred process on ``grid``, shape (n_paths, len(grid))."""
    t = np.asarray(grid, dtype=float)
    if spec.kind is ProcessKind.BROWNIAN_MOTION:
        return _brownian(t, n_paths, rng)
    if spec.kind is ProcessKind.BROWNIAN_BRIDGE:
        T = spec.horizon
        w = _brownian(np.append(t, T), n_paths, rng)
        return w[:, :-1] - np.outer(w[:, -1], t / T)
    return _ou(spec, t, n_paths, rng)


def _brownian(t, n_paths, rng):
    steps = np.diff(t, prepend=0.0)
    z = rng.standard_normal((n_paths, t.size))
    z *= np.sqrt(steps)
    return np.cumsum(z, axis=1, out=z)


def _ou(spec, t, n_paths, rng):
    th, sg = spec.theta, spec.sigma
    z = rng.standard_normal((n_paths, t.size))
    out = np.empty_like(z)
    out[:, 0] = z[:, 0] * np.sqrt(spec.variance(t[0]))
    decay = np.exp(-th * np.diff(t))
    scale = np.sqrt(sg * sg * -np.expm1(-2 * th * np.diff(t)) / (2 * th))
    for k in range(1, t.size):
        out[:, k] = out[:, k - 1] * decay[k - 1] + scale[k - 1] * z[:, k]
    return out


def sample_unconditional_path(spec: GaussianProcessSpec, grid, rng, n_paths: int = 1) -> np.ndarray:
    """Exact unconditional paths including the mean, shape (n_paths, len(grid))."""
    t = time_grid(grid, spec.horizon)
    return centered_paths(spec, t, n_paths, rng) + spec.mean_path(t)


# --------------------------------------------------------------------------
# regression of Y on V

def brownian_r_yv(grid, d: int, horizon: float = None) -> np.ndarray:
    """Closed-form ``E[Y | V] = R_YV V`` for Brownian motion, shape (d, n + 1).

    Between consecutive dates the path is a Brownian bridge, so each interval
    ``[t_j, t_j+1]`` of positive length contributes ``lam (e'(t_j) - D_j)`` to
    the weight of ``W_tj`` and ``lam (D_j - e'(t_j+1))`` to that of
    ``W_tj+1``, with ``D_j`` the divided difference of ``e`` on the interval.
    Zero-length intervals contribute nothing, which yields the equality cases
    and ``alpha = 0`` on triple knots. Pieces ``[0, t_0]`` (pinned at 0) and
    ``[t_n, T]`` (flat conditional mean) are folded into the end weights.
    """
    t = np.asarray(grid, dtype=float)
    T = t[-1] if horizon is None else float(horizon)
    spec = GaussianProcessSpec.brownian_motion(T)
    out = np.zeros((d, t.size))
    if d == 0:
        return out
    lam = spec.eigenvalues(d)
    e = spec.basis(t, d).T
    de = spec.basis_derivative(t, d).T
    h = np.diff(t)
    pos = h > 0
    j = np.nonzero(pos)[0]
    slope = (e[:, j + 1] - e[:, j]) / h[j]
    np.add.at(out.T, j, (de[:, j] - slope).T)
    np.add.at(out.T, j + 1, (slope - de[:, j + 1]).T)
    if t[0] > 0:
        out[:, 0] += e[:, 0] / t[0] - de[:, 0]
    if t[-1] < T:
        out[:, -1] += de[:, -1] - spec.basis_derivative([T], d)[0]
    return out * lam[:, None]


def exact_r_yv(spec: GaussianProcessSpec, grid, d: int) -> np.ndarray:
    """``cov(Y, V) cov(V)^+`` with ``cov(Y_k, X_t) = lam_k e_k(t)``.

    Deterministic grid points (zero variance) and repeated dates are dropped
    from the solve and get zero weight.
    """
    t = np.asarray(grid, dtype=float)
    out = np.zeros((d, t.size))
    if d == 0:
        return out
    keep = _informative_columns(spec, t)
    cov = spec.centered().covariance_matrix(t[keep])
    cross = spec.eigenvalues(d)[:, None] * spec.basis(t[keep], d).T
    out[:, keep] = linalg.solve(cov, cross.T, assume_a="pos").T
    return out


def _informative_columns(spec, t):
    var = spec.centered().variance(t)
    first = np.ones(t.size, dtype=bool)
    first[1:] = np.diff(t) > 0
    return first & (var > 1e-14 * max(var.max(), 1e-300))


def regression_r_yv(spec: GaussianProcessSpec, grid, d: int, n_fit: int = 1_000_000,
                    rng=None, n_sub: int = 1024, batch: int = 20_000) -> np.ndarray:
    """Least-squares estimate of ``R_YV`` from simulated ``(V, Y)`` pairs.

    Paths are simulated on the grid refined by ``n_sub`` uniform steps and
    ``Y_k = int X_s e_k(s) ds`` is computed by Simpson's rule on that refined
    grid. Repeated or deterministic grid columns are dropped from the design
    and restored as zeros.
    """
    t = np.asarray(grid, dtype=float)
    out = np.zeros((d, t.size))
    if d == 0:
        return out
    rng = np.random.default_rng() if rng is None else rng
    spec = spec.centered()
    T = spec.horizon
    fine = np.union1d(np.linspace(0.0, T, n_sub + 1), t)
    pos = np.searchsorted(fine, t)
    # Simpson's rule is linear in the integrand: fold its weights into the basis
    weights = integrate.simpson(np.eye(fine.size), x=fine, axis=1)
    projector = weights[:, None] * spec.basis(fine, d)
    keep = _informative_columns(spec, t)
    cols = pos[keep]
    vtv = np.zeros((cols.size, cols.size))
    vty = np.zeros((cols.size, d))
    done = 0
    while done < n_fit:
        m = min(batch, n_fit - done)
        x = centered_paths(spec, fine, m, rng)
        y = x @ projector
        v = x[:, cols]
        vtv += v.T @ v
        vty += v.T @ y
        done += m
    out[:, keep] = linalg.solve(vtv, vty, assume_a="pos").T
    return out


# --------------------------------------------------------------------------
# prepared sampler

@dataclass(frozen=True, eq=False)
class ConditionalSampler:
    spec: GaussianProcessSpec
    grid: np.ndarray
    strata: Stratification
    r_yv_method: str = "auto"
    r_vy: np.ndarray = field(init=False)
    lam: np.ndarray = field(init=False)
    cov_v: np.ndarray = field(init=False)
    r_yv: np.ndarray = field(init=False)
    s_matrix: np.ndarray = field(init=False)
    s_factor: np.ndarray = field(init=False)
    mean: np.ndarray = field(init=False)

    def __post_init__(self):
        spec, t, d = self.spec, self.grid, self.strata.d
        method = self.r_yv_method
        if method == "auto":
            method = "brownian" if spec.kind is ProcessKind.BROWNIAN_MOTION else "exact"
        r_vy = spec.basis(t, d)
        lam = spec.eigenvalues(d)
        cov_v = spec.centered().covariance_matrix(t)
        if method == "brownian":
            if spec.kind is not ProcessKind.BROWNIAN_MOTION:
                raise SamplerError("closed-form R_YV only exists for Brownian motion")
            r_yv = brownian_r_yv(t, d, spec.horizon)
        elif method == "exact":
            r_yv = exact_r_yv(spec, t, d)
        elif method == "regression":
            r_yv = regression_r_yv(spec, t, d)
        else:
            raise ValueError(f"unknown R_YV method {method!r}")
        s = np.diag(lam) - r_yv @ cov_v @ r_yv.T
        s = 0.5 * (s + s.T)
        if d:
            w, q = linalg.eigh(s)
            floor = -1e-10 * max(np.trace(s), np.sum(lam) * 1e-6)
            if w.min() < floor:
                raise SamplerError(f"conditional covariance of Y given V is not PSD "
                                   f"(min eigenvalue {w.min():.3g})")
            factor = q * np.sqrt(np.clip(w, 0.0, None))
        else:
            factor = np.zeros((0, 0))
        values = dict(r_vy=r_vy, lam=lam, cov_v=cov_v, r_yv=r_yv, s_matrix=s,
                      s_factor=factor, mean=spec.mean_path(t))
        for name, val in values.items():
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def d(self) -> int:
        return self.strata.d

    def sample(self, stratum: int, n_paths: int, rng) -> np.ndarray:
        """``n_paths`` draws of the grid path conditioned on stratum ``stratum``.

        Random numbers are consumed in a fixed order: d uniforms per path for
        the K-L coordinates, then the unconditional path, then d normals.
        """
        d = self.d
        if d == 0:
            return centered_paths(self.spec, self.grid, n_paths, rng) + self.mean
        u = rng.random((n_paths, d))
        # open interval: Generator.random can return exactly 0
        u = np.where(u == 0.0, 0.5 * np.finfo(float).tiny, u)
        xi = truncated_normal_sample_bounds(self.strata.lower[stratum], self.strata.upper[stratum], u)
        y = xi * np.sqrt(self.lam)
        v = centered_paths(self.spec, self.grid, n_paths, rng)
        g = v @ self.r_yv.T + rng.standard_normal((n_paths, d)) @ self.s_factor.T
        # R_VY y + (V - R_VY G)
        v -= (g - y) @ self.r_vy.T
        v += self.mean
        return v

    def coordinates_quadrature(self, paths) -> np.ndarray:
        """Trapezoidal K-L coordinates of grid paths (centred), shape (n, d)."""
        x = np.asarray(paths) - self.mean
        e = self.r_vy
        return integrate.trapezoid(x[:, :, None] * e[None, :, :], x=self.grid, axis=1)


def prepare(spec: GaussianProcessSpec, grid, strata: Stratification, r_yv: str = "auto") -> ConditionalSampler:
    """Build every matrix the per-path algorithm needs, once.

    ``r_yv`` selects how the regression of Y on V is obtained: ``"brownian"``
    (closed form), ``"exact"`` (covariance solve), ``"regression"`` (least
    squares on simulated pairs) or ``"auto"`` (closed form for Brownian
    motion, covariance solve otherwise).
    """
    if strata.spec != spec:
        raise ValueError("stratification was built for a different process")
    t = time_grid(grid, spec.horizon)
    t.setflags(write=False)
    return ConditionalSampler(spec, t, strata, r_yv)


def sample_conditional_path(sampler: ConditionalSampler, stratum: int, rng, n_paths: int = 1) -> np.ndarray:
    return sampler.sample(stratum, n_paths, rng)
