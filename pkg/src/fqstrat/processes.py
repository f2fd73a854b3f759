"""Karhunen-Loeve systems of Brownian motion, Brownian bridge and OU processes.

Eigenfunctions are L2[0, T]-normalised. For the Ornstein-Uhlenbeck process
the eigen-frequencies solve

    w s^2 cos(wT) + (-w^2 s0^2 + theta s^2 - theta^2 s0^2) sin(wT) = 0

and are located one per bracket, the bracket depending on the sign of
``theta^2 s0^2 - theta s^2`` and on where the pole of the tangent form sits.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import optimize


class BracketError(RuntimeError):
    """The predicted bracket of an OU eigen-frequency holds no sign change."""


class ProcessKind(str, enum.Enum):
    BROWNIAN_MOTION = "bm"
    BROWNIAN_BRIDGE = "bridge"
    ORNSTEIN_UHLENBECK = "ou"


@dataclass(frozen=True)
class OUFrequency:
    """One OU eigenmode.

    For a hyperbolic mode ``omega`` holds the real rate k of the imaginary
    frequency ``i k``; the eigenfunction is then built on cosh/sinh and the
    eigenvalue is ``sigma^2 / (theta^2 - k^2)``.
    """

    index: int
    omega: float
    lam: float
    norm_const: float
    iterations: int = 0
    hyperbolic: bool = False


@dataclass(frozen=True)
class GaussianProcessSpec:
    """A scalar Gaussian process on [0, horizon].

    OU parameters follow ``dr = theta (mu - r) dt + sigma dW`` with
    ``r_0 ~ N(m0, sigma0^2)``; they are ignored for the Brownian kinds.
    """

    kind: ProcessKind
    horizon: float = 1.0
    theta: float = 0.0
    sigma: float = 1.0
    sigma0: float = 0.0
    m0: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcessKind(self.kind))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.kind is ProcessKind.ORNSTEIN_UHLENBECK:
            if not self.theta > 0:
                raise ValueError("OU mean reversion theta must be positive")
            if not self.sigma > 0:
                raise ValueError("OU volatility sigma must be positive")
            if self.sigma0 < 0:
                raise ValueError("sigma0 must be non-negative")

    @classmethod
    def brownian_motion(cls, horizon: float = 1.0) -> "GaussianProcessSpec":
        return cls(ProcessKind.BROWNIAN_MOTION, horizon)

    @classmethod
    def brownian_bridge(cls, horizon: float = 1.0) -> "GaussianProcessSpec":
        return cls(ProcessKind.BROWNIAN_BRIDGE, horizon)

    @classmethod
    def ornstein_uhlenbeck(cls, theta, sigma, horizon, sigma0=0.0, m0=0.0, mu=0.0):
        return cls(ProcessKind.ORNSTEIN_UHLENBECK, horizon, theta, sigma, sigma0, m0, mu)

    @classmethod
    def stationary_ou(cls, theta, sigma, horizon, m0=0.0, mu=0.0):
        """OU started from its invariant variance sigma^2 / (2 theta)."""
        return cls.ornstein_uhlenbeck(theta, sigma, horizon,
                                      math.sqrt(sigma * sigma / (2.0 * theta)), m0, mu)

    @property
    def is_ou(self) -> bool:
        return self.kind is ProcessKind.ORNSTEIN_UHLENBECK

    @property
    def params(self) -> dict:
        return {"theta": self.theta, "sigma": self.sigma, "sigma0": self.sigma0,
                "m0": self.m0, "mu": self.mu, "T": self.horizon}

    def centered(self) -> "GaussianProcessSpec":
        if not self.is_ou:
            return self
        return GaussianProcessSpec.ornstein_uhlenbeck(self.theta, self.sigma, self.horizon, self.sigma0)

    # spectral data

    def omegas(self, d: int) -> np.ndarray:
        """Angular frequencies of the first ``d`` eigenfunctions."""
        T = self.horizon
        n = np.arange(1, d + 1, dtype=float)
        if self.kind is ProcessKind.BROWNIAN_MOTION:
            return math.pi * (n - 0.5) / T
        if self.kind is ProcessKind.BROWNIAN_BRIDGE:
            return math.pi * n / T
        return np.array([f.omega for f in ou_frequencies(self, d)])

    def eigenvalues(self, d: int) -> np.ndarray:
        if d == 0:
            return np.zeros(0)
        if self.is_ou:
            return np.array([f.lam for f in ou_frequencies(self, d)])
        return (1.0 / self.omegas(d)) ** 2

    def eigen(self, n: int):
        """``(lambda_n, e_n)`` with ``e_n`` a vectorised callable of time."""
        if n < 1:
            raise ValueError("eigen index starts at 1")
        lam = float(self.eigenvalues(n)[-1])

        def e(t, _n=n):
            return self.basis(np.atleast_1d(t), _n)[:, -1].reshape(np.shape(t))

        return lam, e

    def _coefficients(self, d):
        # e_n(t) = ca_n C(w_n t) + cb_n S(w_n t), (C, S) = (cos, sin) or (cosh, sinh)
        w = self.omegas(d)
        if not self.is_ou:
            return w, np.zeros(d), np.full(d, math.sqrt(2.0 / self.horizon)), np.zeros(d, bool)
        freqs = ou_frequencies(self, d)
        a = w * self.sigma0 ** 2
        b = np.full(d, self.sigma ** 2 - self.theta * self.sigma0 ** 2)
        k = np.array([f.norm_const for f in freqs])
        hyp = np.array([f.hyperbolic for f in freqs])
        return w, k * a, k * b, hyp

    def basis(self, t, d: int) -> np.ndarray:
        """Matrix ``E[i, j] = e_{j+1}(t_i)``, shape ``(len(t), d)``."""
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        if d == 0:
            return np.zeros((t.shape[0], 0))
        w, ca, cb, hyp = self._coefficients(d)
        wt = t * w
        out = ca * np.cos(wt) + cb * np.sin(wt)
        if hyp.any():
            out[:, hyp] = (ca * np.cosh(wt) + cb * np.sinh(wt))[:, hyp]
        return out

    def basis_derivative(self, t, d: int) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        if d == 0:
            return np.zeros((t.shape[0], 0))
        w, ca, cb, hyp = self._coefficients(d)
        wt = t * w
        out = w * (cb * np.cos(wt) - ca * np.sin(wt))
        if hyp.any():
            out[:, hyp] = (w * (ca * np.sinh(wt) + cb * np.cosh(wt)))[:, hyp]
        return out

    # moments

    def mean_path(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self.is_ou:
            return np.zeros_like(t)
        decay = np.exp(-self.theta * t)
        return self.m0 * decay + self.mu * (1.0 - decay)

    def covariance(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        lo = np.minimum(s, t)
        if self.kind is ProcessKind.BROWNIAN_MOTION:
            return lo + 0.0 * (s + t)
        if self.kind is ProcessKind.BROWNIAN_BRIDGE:
            return lo - s * t / self.horizon
        th, sg = self.theta, self.sigma
        decay = np.exp(-th * (s + t))
        return sg * sg / (2 * th) * decay * np.expm1(2 * th * lo) + self.sigma0 ** 2 * decay

    def variance(self, t):
        return self.covariance(t, t)

    def covariance_matrix(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.covariance(t[:, None], t[None, :])

    def total_variance(self) -> float:
        """int_0^T Var(X_s) ds in closed form."""
        T = self.horizon
        if self.kind is ProcessKind.BROWNIAN_MOTION:
            return T * T / 2.0
        if self.kind is ProcessKind.BROWNIAN_BRIDGE:
            return T * T / 6.0
        th, sg, s0 = self.theta, self.sigma, self.sigma0
        long_run = sg * sg / (2 * th)
        return long_run * T + (s0 * s0 - long_run) * (-math.expm1(-2 * th * T)) / (2 * th)


# --------------------------------------------------------------------------
# OU eigen-frequencies

def ou_residual(omega, theta, sigma, sigma0, T):
    s2, v2 = sigma * sigma, sigma0 * sigma0
    return omega * s2 * np.cos(omega * T) + (-omega * omega * v2 + theta * s2 - theta * theta * v2) * np.sin(omega * T)


def ou_residual_scale(omega, theta, sigma, sigma0):
    s2, v2 = sigma * sigma, sigma0 * sigma0
    return omega * s2 + omega * omega * v2 + theta * s2 + theta * theta * v2


def ou_bracket(theta, sigma, sigma0, T, n) -> tuple[float, float]:
    """Interval holding exactly the ``n``-th positive root, by regime."""
    step = math.pi / T
    half = 0.5 * step
    if sigma0 == 0.0:
        return n * step - half, n * step
    c = theta * theta * sigma0 * sigma0 - theta * sigma * sigma
    if c >= 0.0:
        if c * T - sigma * sigma < 0.0:
            # one root below pi/(2T), then one per (k pi/T, k pi/T + pi/(2T))
            return (n - 1) * step, (n - 1) * step + half
        return n * step, n * step + half
    pole = math.sqrt(theta * sigma * sigma / (sigma0 * sigma0) - theta * theta)
    if (n - 1) * step - half > pole:
        return (n - 1) * step, (n - 1) * step + half
    if (n + 1) * step - half <= pole:
        return n * step - half, n * step
    if n * step - half < pole < (n + 1) * step - half:
        return n * step - half, pole
    return pole, n * step - half


_PSI_CUBIC = 4.0 * (8.0 - math.pi ** 2) / math.pi ** 4


def tan_approx(x):
    """Rational approximation of tan on (-pi/2, pi/2)."""
    x = np.asarray(x, dtype=float)
    return (_PSI_CUBIC * x ** 3 + x) / (1.0 - 4.0 * x * x / math.pi ** 2)


def ou_frequency_guess(theta, sigma, sigma0, T, n) -> float:
    """Starting point for the n-th frequency.

    For a deterministic start, ``theta tan(wT) = -w`` is approximated with the
    rational tangent on the shifted argument ``x = wT - n pi`` in (-pi/2, 0),
    which reduces to a cubic in ``x``. Other regimes use the bracket midpoint.
    """
    lo, hi = ou_bracket(theta, sigma, sigma0, T, n)
    if sigma0 != 0.0:
        return 0.5 * (lo + hi)
    pi = math.pi
    coeffs = [theta * T * _PSI_CUBIC - 4.0 / pi ** 2, -4.0 * n / pi, theta * T + 1.0, n * pi]
    for r in np.roots(coeffs):
        if abs(r.imag) < 1e-9 and -pi / 2 < r.real < 0.0:
            return (r.real + n * pi) / T
    return 0.5 * (lo + hi)


def _norm_const(omega, theta, sigma, sigma0, T):
    a = omega * sigma0 * sigma0
    b = sigma * sigma - theta * sigma0 * sigma0
    s2 = math.sin(2 * omega * T) / (2 * omega)
    one_minus_cos = 2.0 * math.sin(omega * T) ** 2
    inv = (0.5 * a * a * (T + s2) + 0.5 * b * b * (T - s2)
           + a * b * one_minus_cos / (2 * omega))
    return 1.0 / math.sqrt(inv)


def ou_frequency(theta, sigma, sigma0, T, n, xtol=1e-15) -> OUFrequency:
    """n-th OU eigen-frequency by Brent's method inside the predicted bracket.

    The search starts from a small interval around the guess and expands it
    geometrically until it brackets the root or reaches the full bracket.
    """
    if not (theta > 0 and sigma > 0 and sigma0 >= 0 and T > 0 and n >= 1):
        raise ValueError("need theta > 0, sigma > 0, sigma0 >= 0, T > 0, n >= 1")
    lo, hi = ou_bracket(theta, sigma, sigma0, T, n)
    eps = 1e-12 * math.pi / T
    lo, hi = lo + eps, hi - eps
    f = lambda w: ou_residual(w, theta, sigma, sigma0, T)  # noqa: E731
    if hi <= lo:
        # pole sitting on a bracket edge: the edge itself solves the equation
        w = 0.5 * (lo + hi)
        return _frequency(theta, sigma, sigma0, T, n, w, 0)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return _frequency(theta, sigma, sigma0, T, n, lo, 0)
    if fhi == 0.0:
        return _frequency(theta, sigma, sigma0, T, n, hi, 0)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change for n={n} on [{lo!r}, {hi!r}] "
                           f"(theta={theta}, sigma={sigma}, sigma0={sigma0}, T={T})")
    guess = min(max(ou_frequency_guess(theta, sigma, sigma0, T, n), lo), hi)
    width = 1e-3 * (hi - lo)
    a, b = lo, hi
    while True:
        a_try, b_try = max(lo, guess - width), min(hi, guess + width)
        fa, fb = f(a_try), f(b_try)
        if np.sign(fa) != np.sign(fb) or (a_try == lo and b_try == hi):
            a, b = a_try, b_try
            break
        width *= 4.0
    root, info = optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps,
                                 full_output=True)
    return _frequency(theta, sigma, sigma0, T, n, root, info.iterations)


def _frequency(theta, sigma, sigma0, T, n, omega, iters):
    lam = sigma * sigma / (omega * omega + theta * theta)
    return OUFrequency(n, float(omega), float(lam),
                       _norm_const(omega, theta, sigma, sigma0, T), iters)


def ou_hyperbolic_mode(theta, sigma, sigma0, T) -> OUFrequency | None:
    """Leading mode with eigenvalue above sigma^2 / theta^2, when it exists.

    With ``c = theta^2 s0^2 - theta s^2`` and ``c T > s^2`` the frequency
    equation has a root on the imaginary axis, ``w = i k`` with
    ``k s^2 cosh(kT) + (k^2 s0^2 - c) sinh(kT) = 0`` and ``0 < k < sqrt(c)/s0``.
    It is the largest eigenvalue; the real roots then start at the
    (pi/T, 3 pi/(2T)) bracket.
    """
    if sigma0 == 0.0:
        return None
    s2, v2 = sigma * sigma, sigma0 * sigma0
    c = theta * theta * v2 - theta * s2
    if c < 0.0 or c * T - s2 <= 0.0:
        return None
    g = lambda k: k * s2 / math.tanh(k * T) + k * k * v2 - c  # noqa: E731
    top = math.sqrt(c / v2)
    kappa, info = optimize.brentq(g, 1e-14 * top, top, xtol=1e-15,
                                  rtol=4 * np.finfo(float).eps, full_output=True)
    a, b = kappa * v2, s2 - theta * v2
    sh2 = math.sinh(2 * kappa * T) / (4 * kappa)
    inv = a * a * (0.5 * T + sh2) + b * b * (sh2 - 0.5 * T) + a * b * math.sinh(kappa * T) ** 2 / kappa
    lam = s2 / (theta * theta - kappa * kappa)
    return OUFrequency(1, float(kappa), float(lam), 1.0 / math.sqrt(inv), info.iterations, True)


_cache: dict[tuple, list[OUFrequency]] = {}
_cache_lock = threading.Lock()


def ou_frequencies(spec: GaussianProcessSpec, d: int) -> list[OUFrequency]:
    """First ``d`` eigenmodes in decreasing eigenvalue order.

    Real frequencies come from :func:`ou_frequency`; the hyperbolic mode, if
    any, is placed first. Cached per (theta, sigma, sigma0, T).
    """
    key = (spec.theta, spec.sigma, spec.sigma0, spec.horizon)
    with _cache_lock:
        found = _cache.get(key)
        if found is None:
            hyp = ou_hyperbolic_mode(*key)
            found = _cache[key] = [hyp] if hyp is not None else []
        shift = 1 if found and found[0].hyperbolic else 0
        while len(found) < d:
            f = ou_frequency(*key, len(found) + 1 - shift)
            found.append(OUFrequency(len(found) + 1, f.omega, f.lam, f.norm_const, f.iterations))
        return found[:d]
