"""Pricing benchmarks driven by stratified Gaussian paths.

Models map a Gaussian driver path on a time grid to an asset path: Black-
Scholes and CEV are driven by Brownian motion, Schwartz's one-factor model
is the exponential of an OU path. Rates and dividends are zero throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .decomposition import Criterion, DecompositionDB, ProductDecomposition, build_stratification, decompose
from .estimator import AllocationRule, EstimatorReport, run
from .processes import GaussianProcessSpec
from .sampler import prepare

# discrete-monitoring continuity correction constant: -zeta(1/2)/sqrt(2 pi)
BG_BETA = 0.5826


class PricingError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# models

@dataclass(frozen=True)
class BlackScholes:
    s0: float = 100.0
    sigma: float = 0.3
    name = "bs"

    def __post_init__(self):
        _positive(s0=self.s0, sigma=self.sigma)

    def driver(self, horizon: float) -> GaussianProcessSpec:
        return GaussianProcessSpec.brownian_motion(horizon)

    def prices(self, w, t):
        """Exact log-normal map ``S_t = S0 exp(sigma W_t - sigma^2 t / 2)``."""
        t = np.asarray(t, dtype=float)
        return self.s0 * np.exp(self.sigma * np.asarray(w) - 0.5 * self.sigma ** 2 * t)

    def params(self):
        return {"S0": self.s0, "sigma": self.sigma}


@dataclass(frozen=True)
class CEV:
    """``dS = sigma S^(beta/2) dW``, Euler scheme on ``ln S``."""

    s0: float = 100.0
    sigma: float = 0.3
    beta: float = 1.5
    name = "cev"

    def __post_init__(self):
        _positive(s0=self.s0, sigma=self.sigma)
        if not 0.0 <= self.beta < 2.0:
            raise ValueError("CEV beta must lie in [0, 2)")

    def driver(self, horizon: float) -> GaussianProcessSpec:
        return GaussianProcessSpec.brownian_motion(horizon)

    def prices(self, w, t):
        w = np.atleast_2d(np.asarray(w, dtype=float))
        t = np.asarray(t, dtype=float)
        dt = np.diff(t)
        dw = np.diff(w, axis=1)
        b, s2 = self.beta, self.sigma ** 2
        x = np.empty_like(w)
        x[:, 0] = math.log(self.s0) + 0.0 * w[:, 0]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for k in range(dt.size):
                s = np.exp(x[:, k])
                x[:, k + 1] = x[:, k] - 0.5 * s2 * s ** (b - 2) * dt[k] + self.sigma * s ** (0.5 * b - 1) * dw[:, k]
                if not np.all(np.isfinite(x[:, k + 1])):
                    raise PricingError(f"CEV log-Euler scheme blew up at step {k + 1} (t={t[k + 1]:g})")
        return np.exp(x)

    def params(self):
        return {"S0": self.s0, "sigma": self.sigma, "beta": self.beta}


@dataclass(frozen=True)
class Schwartz:
    """``dS = theta (alpha - ln S) S dt + sigma S dW``; ``ln S`` is OU."""

    s0: float = 100.0
    theta: float = 0.3
    alpha: float = math.log(110.0)
    sigma: float = 0.3
    name = "schwartz"

    def __post_init__(self):
        _positive(s0=self.s0, theta=self.theta, sigma=self.sigma)

    @property
    def mu(self) -> float:
        return self.alpha - self.sigma ** 2 / (2.0 * self.theta)

    def driver(self, horizon: float) -> GaussianProcessSpec:
        return GaussianProcessSpec.ornstein_uhlenbeck(self.theta, self.sigma, horizon, 0.0,
                                                      math.log(self.s0), self.mu)

    def prices(self, x, t):
        return np.exp(np.asarray(x, dtype=float))

    def params(self):
        return {"S0": self.s0, "theta": self.theta, "alpha": self.alpha, "sigma": self.sigma}


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive")


def path_to_price(model, driver_paths, grid):
    return model.prices(driver_paths, grid)


# --------------------------------------------------------------------------
# payoffs: each evaluates asset paths (n_paths, n_grid) at observation indices

@dataclass(frozen=True)
class UpInCall:
    """Discretely monitored up-and-in call on ``n_fixings`` equispaced dates."""

    strike: float = 100.0
    barrier: float = 125.0
    n_fixings: int = 365
    name = "uic"

    def __post_init__(self):
        if not self.barrier > self.strike > 0:
            raise ValueError("up-and-in call needs H > K > 0")
        if self.n_fixings < 1:
            raise ValueError("at least one fixing is required")

    def dates(self, horizon):
        return horizon * np.arange(1, self.n_fixings + 1) / self.n_fixings

    def value(self, s, obs):
        s = np.atleast_2d(s)
        hit = np.max(s[:, obs], axis=1) >= self.barrier
        return np.where(hit, np.maximum(s[:, obs[-1]] - self.strike, 0.0), 0.0)

    def params(self):
        return {"K": self.strike, "H": self.barrier, "n": self.n_fixings}


@dataclass(frozen=True)
class AutoCall:
    """Pays ``(1 + C) P`` at the first date with ``S > K``; at maturity ``P``
    if ``B < S_T <= K`` and ``P S_T / K`` if ``S_T <= B``."""

    strike: float = 110.0
    barrier: float = 80.0
    nominal: float = 100.0
    coupon: float = 0.07
    obs_dates: tuple[float, ...] = (1.0, 2.0, 3.0)
    name = "autocall"

    def __post_init__(self):
        if not 0 < self.barrier < self.strike:
            raise ValueError("auto-call needs 0 < B < K")
        if not self.obs_dates or any(b <= a for a, b in zip(self.obs_dates, self.obs_dates[1:])):
            raise ValueError("observation dates must be increasing")

    def dates(self, horizon):
        d = np.asarray(self.obs_dates, dtype=float)
        if d[0] <= 0 or d[-1] > horizon * (1 + 1e-12):
            raise ValueError("observation dates must lie in (0, T]")
        return d

    def value(self, s, obs):
        s = np.atleast_2d(s)[:, obs]
        called = np.any(s > self.strike, axis=1)
        last = s[:, -1]
        at_t = np.where(last > self.barrier, self.nominal, self.nominal * last / self.strike)
        return np.where(called, (1.0 + self.coupon) * self.nominal, at_t)

    def params(self):
        return {"K": self.strike, "B": self.barrier, "P": self.nominal, "C": self.coupon,
                "dates": "/".join(f"{d:g}" for d in self.obs_dates)}


@dataclass(frozen=True)
class Asian:
    """``(mean_k S_tk - K)_+`` over ``t_k = k T / n``, ``k = 0..n``."""

    strike: float = 100.0
    n_dates: int = 36
    name = "asian"

    def __post_init__(self):
        _positive(strike=self.strike)
        if self.n_dates < 1:
            raise ValueError("at least one averaging step is required")

    def dates(self, horizon):
        return horizon * np.arange(self.n_dates + 1) / self.n_dates

    def value(self, s, obs):
        return np.maximum(np.mean(np.atleast_2d(s)[:, obs], axis=1) - self.strike, 0.0)

    def params(self):
        return {"K": self.strike, "n": self.n_dates}


def payoff_value(payoff, asset_path, grid, horizon=None):
    """Payoff of one or many asset paths given on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    obs = observation_indices(grid, payoff.dates(grid[-1] if horizon is None else horizon))
    out = payoff.value(asset_path, obs)
    return float(out[0]) if np.ndim(asset_path) == 1 else out


def observation_indices(grid, dates):
    idx = np.searchsorted(grid, dates - 1e-12 * max(grid[-1], 1.0))
    if np.any(idx >= grid.size) or not np.allclose(grid[np.minimum(idx, grid.size - 1)], dates, rtol=0, atol=1e-9):
        raise ValueError("observation dates are not on the simulation grid")
    return idx


# --------------------------------------------------------------------------
# closed-form proxy

def _uic_continuous(s0, k, h, sigma, T):
    # zero-rate up-and-in call with H > K, via the reflection principle
    v = sigma * math.sqrt(T)
    n = stats.norm.cdf
    x2 = math.log(s0 / h) / v + 0.5 * v
    y1 = math.log(h * h / (s0 * k)) / v + 0.5 * v
    y2 = math.log(h / s0) / v + 0.5 * v
    r = h / s0
    b = s0 * n(x2) - k * n(x2 - v)
    c = s0 * r * n(-y1) - k / r * n(-y1 + v)
    d = s0 * r * n(-y2) - k / r * n(-y2 + v)
    return b - c + d


def bs_uic_closed_form(s0, strike, barrier, sigma, horizon, n_fixings, beta_c=BG_BETA) -> float:
    """Discrete up-and-in call approximated by a continuous barrier shifted
    up to ``H exp(beta_c sigma sqrt(T / n))``."""
    if not (s0 > 0 and strike > 0 and sigma > 0 and horizon > 0 and n_fixings >= 1):
        raise ValueError("invalid up-and-in call parameters")
    if not barrier > max(s0, strike):
        raise ValueError("the proxy needs H > max(S0, K)")
    h = barrier * math.exp(beta_c * sigma * math.sqrt(horizon / n_fixings))
    return float(_uic_continuous(s0, strike, h, sigma, horizon))


def black_call(s0, strike, sigma, horizon) -> float:
    v = sigma * math.sqrt(horizon)
    d1 = math.log(s0 / strike) / v + 0.5 * v
    return float(s0 * stats.norm.cdf(d1) - strike * stats.norm.cdf(d1 - v))


def cev_call(s0, strike, sigma, beta, horizon) -> float:
    """Zero-rate CEV call (``0 <= beta < 2``) by noncentral chi-square laws."""
    if not 0 <= beta < 2:
        raise ValueError("CEV beta must lie in [0, 2)")
    b = 2.0 - beta
    k = 2.0 / (sigma * sigma * b * b * horizon)
    x = k * s0 ** b
    y = k * strike ** b
    return float(s0 * stats.ncx2.sf(2 * y, 2 + 2 / b, 2 * x) - strike * stats.ncx2.cdf(2 * x, 2 / b, 2 * y))


# --------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class Experiment:
    model: object
    payoff: object
    horizon: float
    n_steps: int = 0
    grid: np.ndarray = field(init=False, repr=False, compare=False)
    obs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dates = self.payoff.dates(self.horizon)
        base = [0.0]
        if self.n_steps:
            base = np.linspace(0.0, self.horizon, self.n_steps + 1)
        # snap dates to nearby grid knots so equal times stay exactly equal
        grid = np.union1d(base, np.round(dates, 12))
        grid = grid[np.concatenate(([True], np.diff(grid) > 1e-12))]
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "obs", observation_indices(grid, dates))

    @property
    def driver(self) -> GaussianProcessSpec:
        return self.model.driver(self.horizon)

    def payoff_fn(self, paths):
        return self.payoff.value(self.model.prices(paths, self.grid), self.obs)

    def params(self) -> dict:
        return {"model": self.model.name, "payoff": self.payoff.name, "T": self.horizon,
                **self.model.params(), **self.payoff.params()}


def experiment(model: str, payoff: str, **kw) -> Experiment:
    """Build an experiment from names and keyword overrides.

    Defaults reproduce the three benchmark set-ups: UIC on Black-Scholes
    (365 fixings), auto-call on CEV (300 Euler steps over 3 years), Asian on
    Schwartz (37 dates over 3 years).
    """
    defaults = {
        "uic": dict(T=1.5, K=100.0, H=125.0, fixings=365),
        "autocall": dict(T=3.0, K=110.0, H=80.0, P=100.0, C=0.07, dates=(1.0, 2.0, 3.0), steps=300),
        "asian": dict(T=3.0, K=100.0, fixings=36),
    }
    if payoff not in defaults:
        raise ValueError(f"unknown payoff {payoff!r}")
    cfg = {**defaults[payoff], **{k: v for k, v in kw.items() if v is not None}}
    mk = {
        "bs": lambda: BlackScholes(cfg.get("S0", 100.0), cfg.get("sigma", 0.3)),
        "cev": lambda: CEV(cfg.get("S0", 100.0), cfg.get("sigma", 0.3), cfg.get("beta", 1.5)),
        "schwartz": lambda: Schwartz(cfg.get("S0", 100.0), cfg.get("theta", 0.3),
                                     cfg.get("alpha", math.log(110.0)), cfg.get("sigma", 0.3)),
    }
    if model not in mk:
        raise ValueError(f"unknown model {model!r}")
    m = mk[model]()
    if payoff == "uic":
        p = UpInCall(cfg["K"], cfg["H"], int(cfg["fixings"]))
        steps = int(cfg.get("steps", 0))
    elif payoff == "autocall":
        p = AutoCall(cfg["K"], cfg["H"], cfg["P"], cfg["C"], tuple(float(d) for d in cfg["dates"]))
        steps = int(cfg["steps"])
    else:
        p = Asian(cfg["K"], int(cfg["fixings"]))
        steps = int(cfg.get("steps", 0))
    if isinstance(m, CEV) and steps == 0:
        steps = 300
    return Experiment(m, p, float(cfg["T"]), steps)


def stratify(exp: Experiment, n_strata: int, criterion=Criterion.LIPSCHITZ, db: DecompositionDB | None = None):
    if n_strata < 1:
        raise ValueError("the strata budget must be at least 1")
    if n_strata == 1:
        dec = ProductDecomposition(())
    else:
        dec, _ = decompose(exp.driver.centered(), n_strata, criterion, db)
    return prepare(exp.driver, exp.grid, build_stratification(exp.driver, dec))


def price(exp: Experiment, n_strata: int, rule, M: int, seed: int, pilot: int = 50,
          workers: int = 1, criterion=Criterion.LIPSCHITZ, db=None, sampler=None) -> EstimatorReport:
    sampler = sampler or stratify(exp, n_strata, criterion, db)
    return run(exp.payoff_fn, sampler, AllocationRule(rule), M, seed, pilot, workers)


def proxy(exp: Experiment) -> float | None:
    if isinstance(exp.model, BlackScholes) and isinstance(exp.payoff, UpInCall):
        m, p = exp.model, exp.payoff
        return bs_uic_closed_form(m.s0, p.strike, p.barrier, m.sigma, exp.horizon, p.n_fixings)
    return None


BENCHMARKS = {
    "uic-125": (("bs", "uic"), dict(T=1.5, H=125.0), (20, 100)),
    "uic-200": (("bs", "uic"), dict(T=1.0, H=200.0), (20, 100)),
    "autocall": (("cev", "autocall"), {}, (20, 50)),
    "asian": (("schwartz", "asian"), {}, (20, 50, 100)),
}


def benchmark_rows(names=None, M=100_000, seed=0, pilot=50, workers=1, db=None, strata=None):
    """Rows of the benchmark tables: one per (experiment, strata budget).

    Each row holds the proxy (when a closed form exists), the plain
    estimator and the three allocation rules.
    """
    rows = []
    for name in names or BENCHMARKS:
        (model, payoff), kw, budgets = BENCHMARKS[name]
        exp = experiment(model, payoff, **kw)
        plain = price(exp, 1, AllocationRule.PROPORTIONAL, M, seed, workers=workers)
        for n in strata or budgets:
            sampler = stratify(exp, n, db=db)
            row = {"benchmark": name, **exp.params(), "strata": n,
                   "decomposition": str(sampler.strata.decomposition),
                   "proxy": proxy(exp), "plain": plain}
            for rule in AllocationRule:
                row[rule.value] = price(exp, n, rule, M, seed, pilot, workers, sampler=sampler)
            rows.append(row)
    return rows
