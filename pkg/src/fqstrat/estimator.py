"""Stratified Monte-Carlo: budget allocation, sampling loops, variance, CI.

Stratum ``i`` with probability ``p_i`` receives ``M_i = q_i M`` draws. The
estimate is ``sum_i p_i mean_i`` and the reported variance is the
per-sample quantity ``sum_i p_i^2 s_i^2 / q_i``, directly comparable with the
variance of one plain Monte-Carlo draw.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decomposition import Stratification
from .gaussian import stream
from .sampler import ConditionalSampler

Z95 = 1.96
PILOT_PHASE, MAIN_PHASE = 0, 1
DEFAULT_PILOT = 50
CHUNK = 8192


class EstimatorError(RuntimeError):
    pass


class AllocationRule(str, enum.Enum):
    PROPORTIONAL = "proportional"
    LIPSCHITZ = "lipschitz"
    ESTIMATED = "estimated"


def integerize(weights, total: int, floor) -> np.ndarray:
    """Integer budgets ``~ total * w_i / sum w`` with ``M_i >= floor_i``.

    Strata whose share falls below their floor are pinned there and the rest
    is re-shared (water filling); the final rounding is by largest remainder,
    ties to the lower index.
    """
    w = np.asarray(weights, dtype=float)
    fl = np.broadcast_to(np.asarray(floor, dtype=np.int64), w.shape)
    if total < fl.sum():
        raise EstimatorError(f"budget {total} is below the {int(fl.sum())} draws the floors require")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise EstimatorError("allocation weights must be finite and non-negative")
    if w.sum() <= 0:
        w = np.ones_like(w)
    w = w / w.max()  # guards against underflow of tiny weights
    pinned = np.zeros(w.shape, dtype=bool)
    while True:
        free = ~pinned
        rest = total - fl[pinned].sum()
        share = np.where(free, rest * w / max(w[free].sum(), 1e-300), fl)
        low = free & (share < fl)
        if not low.any():
            break
        pinned |= low
    base = np.floor(share).astype(np.int64)
    base = np.where(pinned, fl, base)
    left = total - base.sum()
    frac = np.where(pinned, -1.0, share - base)
    order = np.lexsort((np.arange(w.size), -frac))
    base[order[:left]] += 1
    return base


def allocate(strata: Stratification, rule, M: int, pilot_sigma=None, floor: int = 1) -> np.ndarray:
    """Budgets ``M_i`` summing to ``M`` under the given rule."""
    rule = AllocationRule(rule)
    if M < strata.n_strata * floor:
        raise EstimatorError(f"M={M} is smaller than {floor} draw(s) per stratum over {strata.n_strata} strata")
    p = strata.probs
    if rule is AllocationRule.PROPORTIONAL:
        w = p
    elif rule is AllocationRule.LIPSCHITZ:
        w = p * np.sqrt(strata.local_inertia)
    else:
        if pilot_sigma is None:
            raise EstimatorError("the estimated rule needs pilot standard deviations")
        w = p * np.asarray(pilot_sigma, dtype=float)
    return integerize(w, M, floor)


@dataclass(frozen=True)
class StratumStats:
    prob: float
    n: int
    mean: float
    var: float


@dataclass(frozen=True)
class EstimatorReport:
    estimate: float
    variance: float
    ci95: tuple[float, float]
    total_paths: int
    strata: tuple[StratumStats, ...]
    rule: str = AllocationRule.PROPORTIONAL.value

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci95[1] - self.ci95[0])


class _Accumulator:
    """Running count/mean/M2 with the pairwise (Chan) merge."""

    def __init__(self):
        self.n, self.mean, self.m2 = 0, 0.0, 0.0

    def add(self, values: np.ndarray):
        m = values.size
        if m == 0:
            return
        mu = float(np.mean(values))
        m2 = float(np.sum((values - mu) ** 2))
        n = self.n + m
        delta = mu - self.mean
        self.mean += delta * m / n
        self.m2 += m2 + delta * delta * self.n * m / n
        self.n = n

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


def _run_stratum(payoff, sampler, stratum, n, rng, acc, offset=0):
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        vals = np.asarray(payoff(sampler.sample(stratum, m, rng)), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            rep = offset + done + int(np.argmax(bad))
            raise EstimatorError(f"payoff is not finite in stratum {stratum}, replicate {rep}")
        acc.add(vals)
        done += m
    return acc


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def pilot_sigma(payoff, sampler: ConditionalSampler, strata: Stratification, pilot_size: int,
                seed: int, workers: int = 1):
    """Per-stratum sample standard deviations from ``pilot_size`` draws each.

    Returns ``(sigma, accumulators)`` so the pilot draws can be reused.
    Strata with a zero estimate get ``1e-6 * max sigma`` to stay sampled
    optimally; if every estimate is zero the caller falls back to
    proportional weights.
    """
    if pilot_size < 2:
        raise EstimatorError("pilot size must be at least 2")

    def one(k):
        return _run_stratum(payoff, sampler, k, pilot_size, stream(seed, k, PILOT_PHASE), _Accumulator())

    accs = _map(one, range(strata.n_strata), workers)
    sig = np.sqrt([a.var for a in accs])
    top = sig.max()
    if top > 0:
        sig = np.where(sig > 0, sig, 1e-6 * top)
    return sig, accs


def estimate(payoff, sampler: ConditionalSampler, budgets, seed: int, workers: int = 1,
             initial=None, rule: str = AllocationRule.PROPORTIONAL.value) -> EstimatorReport:
    """Run the stratified estimator with fixed budgets.

    ``initial`` optionally holds per-stratum accumulators (pilot draws) that
    already count towards ``budgets``. Each stratum draws from its own stream
    ``(seed, stratum, phase)`` and the merge is in stratum order, so the
    result does not depend on ``workers``.
    """
    strata = sampler.strata
    budgets = np.asarray(budgets, dtype=np.int64)
    if budgets.shape != (strata.n_strata,):
        raise EstimatorError("one budget per stratum is required")
    if np.any(budgets[strata.probs > 0] < 1):
        raise EstimatorError("every stratum with positive probability needs at least one draw")

    def one(k):
        acc = initial[k] if initial is not None else _Accumulator()
        extra = int(budgets[k]) - acc.n
        if extra < 0:
            raise EstimatorError(f"stratum {k} already holds more draws than its budget")
        return _run_stratum(payoff, sampler, k, extra, stream(seed, k, MAIN_PHASE), acc, acc.n)

    accs = _map(one, range(strata.n_strata), workers)
    M = int(budgets.sum())
    p = strata.probs
    means = np.array([a.mean for a in accs])
    vars_ = np.array([a.var for a in accs])
    est = float(np.dot(p, means))
    q = budgets / M
    variance = float(np.sum(np.where(p > 0, p * p * vars_ / np.maximum(q, 1e-300), 0.0)))
    half = Z95 * math.sqrt(variance / M)
    stats = tuple(StratumStats(float(p[k]), int(budgets[k]), float(means[k]), float(vars_[k]))
                  for k in range(strata.n_strata))
    return EstimatorReport(est, variance, (est - half, est + half), M, stats, rule)


def run(payoff, sampler: ConditionalSampler, rule, M: int, seed: int,
        pilot_size: int = DEFAULT_PILOT, workers: int = 1) -> EstimatorReport:
    """Allocate by ``rule`` and estimate; pilot draws count inside ``M``."""
    rule = AllocationRule(rule)
    strata = sampler.strata
    if rule is not AllocationRule.ESTIMATED:
        return estimate(payoff, sampler, allocate(strata, rule, M), seed, workers, rule=rule.value)
    if M < strata.n_strata * pilot_size:
        raise EstimatorError(f"M={M} cannot hold a pilot of {pilot_size} draws in each of {strata.n_strata} strata")
    sig, accs = pilot_sigma(payoff, sampler, strata, pilot_size, seed, workers)
    if sig.max() > 0:
        budgets = allocate(strata, rule, M, sig, floor=pilot_size)
    else:
        budgets = integerize(strata.probs, M, pilot_size)
    return estimate(payoff, sampler, budgets, seed, workers, initial=accs, rule=rule.value)
