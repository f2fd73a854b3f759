"""L2-optimal quantizers of the standard normal distribution.

The distortion of an ordered codebook has a closed form in terms of the
normal CDF and density, and its Hessian is tridiagonal, so a Newton solve
costs O(n) per iteration. Lloyd's fixed-point iteration is kept both as a
fallback and as an independent cross-check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .gaussian import interval_prob, normal_inv_cdf, normal_pdf, truncated_moments

log = logging.getLogger(__name__)


class QuantizerError(RuntimeError):
    pass


def _thresholds(points: np.ndarray) -> np.ndarray:
    mid = 0.5 * (points[1:] + points[:-1])
    return np.concatenate(([-np.inf], mid, [np.inf]))


@dataclass(frozen=True, eq=False)
class ScalarQuantizer:
    """An ordered codebook of N(0, 1) with its Voronoi cell statistics."""

    points: np.ndarray
    thresholds: np.ndarray = field(init=False)
    probs: np.ndarray = field(init=False)
    cond_means: np.ndarray = field(init=False)
    cond_vars: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ValueError("a quantizer needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("quantizer points must be strictly increasing")
        thr = _thresholds(pts)
        mass, mean, var = truncated_moments(thr[:-1], thr[1:])
        for name, val in (("points", pts), ("thresholds", thr), ("probs", mass),
                          ("cond_means", mean), ("cond_vars", var)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_points(self) -> int:
        return self.points.size

    @property
    def distortion(self) -> float:
        return distortion(self)

    def gradient(self) -> np.ndarray:
        """Half the gradient of the distortion: p_i (x_i - m_i)."""
        return self.probs * (self.points - self.cond_means)

    def to_dict(self) -> dict:
        return {"n": self.n_points, "points": self.points.tolist(),
                "distortion": self.distortion}


def distortion(q: ScalarQuantizer) -> float:
    """E[min_i (Z - x_i)^2] in closed form.

    Per cell, the second moment about the point splits as the conditional
    variance plus the squared offset of the point from the centroid.
    """
    off = q.points - q.cond_means
    return float(np.sum(q.probs * (q.cond_vars + off * off)))


def lloyd_step(q: ScalarQuantizer) -> ScalarQuantizer:
    return ScalarQuantizer(q.cond_means.copy())


def _hessian_bands(points):
    """Tridiagonal Hessian of half the distortion."""
    thr = _thresholds(points)
    dens = normal_pdf(thr[1:-1])
    gap = np.diff(points)
    prob = interval_prob(thr[:-1], thr[1:])
    coupling = 0.25 * dens * gap
    off = -coupling
    diag = prob.copy()
    diag[:-1] -= coupling
    diag[1:] -= coupling
    return off, diag, off


def tridiagonal_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower``/``upper`` have length n - 1."""
    n = diag.size
    if n == 1:
        return rhs / diag
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return linalg.solve_banded((1, 1), ab, rhs)


def _newton(points, tol, max_iter):
    pts = points.copy()
    q = ScalarQuantizer(pts)
    obj = q.distortion
    for it in range(max_iter):
        grad = q.gradient()
        res = float(np.max(np.abs(grad)))
        if res <= tol:
            return q, res, it
        step = tridiagonal_solve(*_hessian_bands(q.points), grad)
        t = 1.0
        while t > 1e-8:
            cand = q.points - t * step
            if np.all(np.diff(cand) > 0):
                nq = ScalarQuantizer(cand)
                # allow tiny increases: near the optimum the objective is flat to rounding
                if nq.distortion <= obj + 1e-14:
                    break
            t *= 0.5
        else:
            return q, res, it
        q, obj = nq, nq.distortion
    return q, float(np.max(np.abs(q.gradient()))), max_iter


def lloyd(q: ScalarQuantizer, n_iter: int) -> ScalarQuantizer:
    for _ in range(n_iter):
        q = lloyd_step(q)
    return q


def optimize_normal_quantizer(n: int, tol: float = 1e-12, max_iter: int = 100) -> ScalarQuantizer:
    """Optimal ``n``-point quantizer of N(0, 1).

    Seeded at the mid-quantiles, solved by damped Newton. If Newton stalls,
    a burst of Lloyd iterations moves the codebook deeper into the basin and
    Newton is retried once.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 1:
        return ScalarQuantizer(np.zeros(1))
    start = normal_inv_cdf((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n))
    q, res, _ = _newton(np.asarray(start), tol, max_iter)
    if res > tol:
        log.debug("newton stalled for n=%d (residual %.3g), running lloyd", n, res)
        q, res, _ = _newton(lloyd(q, 200).points, tol, max_iter)
    if res > tol:
        raise QuantizerError(f"no convergence for n={n}: gradient residual {res:.3g} > {tol:.3g}")
    # enforce the exact symmetry of the optimum
    pts = 0.5 * (q.points - q.points[::-1])
    return ScalarQuantizer(pts)


@lru_cache(maxsize=None)
def normal_quantizer(n: int) -> ScalarQuantizer:
    """Cached optimal quantizer at the default tolerance."""
    return optimize_normal_quantizer(n)


def optimal_distortions(levels) -> np.ndarray:
    """Optimal distortions for each level in ``levels`` (cached per level)."""
    return np.array([normal_quantizer(int(n)).distortion for n in levels])
