"""Unit-mean service time distributions.

Every member of the catalog is normalised so that the mean service time is
one.  Each exposes the survival function, density, hazard rate, the
integrated tail ``int_x^inf Gbar(y) dy`` (used for truncation of infinite
quadratures), an inverse survival function and a vectorised sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize, special

__all__ = [
    "ServiceDistribution",
    "Exponential",
    "Gamma",
    "Weibull",
    "Lognormal",
    "Pareto",
    "Burr",
    "DistributionError",
    "solve_burr_k",
    "parse_dist",
]


class DistributionError(ValueError):
    """Invalid distribution parameters or spec string."""


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(values, x):
    # scalar in, scalar out
    return float(values) if np.ndim(x) == 0 else values


@dataclass(frozen=True)
class ServiceDistribution:
    """Base class; subclasses implement the ``_sf``/``_pdf``/``_isf`` kernels."""

    name = "abstract"
    support_end = math.inf

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points in (0, L) where the density is discontinuous."""
        return ()

    @property
    def params(self) -> dict[str, float]:
        return {}

    def survival(self, x):
        x = _arr(x)
        if np.any(x < 0):
            raise DistributionError("survival() requires x >= 0")
        return _out(self._sf(x), x)

    def density(self, x):
        x = _arr(x)
        return _out(self._pdf(x), x)

    def hazard(self, x):
        x = _arr(x)
        sf = self._sf(x)
        if np.any(sf <= 0):
            raise DistributionError("hazard undefined where the survival function vanishes")
        return _out(self._pdf(x) / sf, x)

    def integrated_tail(self, x):
        """Return ``int_x^inf Gbar(y) dy`` (equals 1 at x = 0)."""
        x = _arr(x)
        return _out(self._tail(x), x)

    def isf(self, u):
        """Inverse survival function: the x with Gbar(x) = u."""
        u = _arr(u)
        return _out(self._isf(u), u)

    def sample(self, rng: np.random.Generator, size=None):
        u = 1.0 - rng.random(size)  # in (0, 1]
        return _out(self._isf(u), u) if size is not None else float(self._isf(u))

    def spec(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v!r}" for k, v in self.params.items())

    def tail_index(self) -> float:
        """Power-law tail exponent beta with Gbar(x) ~ x^-beta (inf for light tails)."""
        return math.inf

    def __str__(self):
        return self.spec()


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    name = "exp"

    def _sf(self, x):
        return np.exp(-x)

    def _pdf(self, x):
        return np.where(x >= 0, np.exp(-x), 0.0)

    def _tail(self, x):
        return np.exp(-x)

    def _isf(self, u):
        return -np.log(u)

    def hazard(self, x):
        return _out(np.ones_like(_arr(x)), _arr(x))


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    """Gamma with shape alpha and rate alpha."""

    alpha: float = 1.0
    name = "gamma"

    def __post_init__(self):
        if not self.alpha > 0:
            raise DistributionError(f"gamma: alpha must be > 0, got {self.alpha}")

    @property
    def params(self):
        return {"alpha": self.alpha}

    def _sf(self, x):
        return special.gammaincc(self.alpha, self.alpha * x)

    def _pdf(self, x):
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = a * math.log(a) + (a - 1) * np.log(x) - a * x - special.gammaln(a)
            return np.where(x > 0, np.exp(logp), 0.0 if a > 1 else (1.0 if a == 1 else np.inf))

    def _tail(self, x):
        a = self.alpha
        return special.gammaincc(a + 1, a * x) - x * special.gammaincc(a, a * x)

    def _isf(self, u):
        return special.gammainccinv(self.alpha, u) / self.alpha

    def sample(self, rng, size=None):
        # numpy's gamma sampler is Marsaglia-Tsang rejection
        v = rng.gamma(self.alpha, 1.0 / self.alpha, size)
        return v if size is not None else float(v)


@dataclass(frozen=True)
class Weibull(ServiceDistribution):
    """Weibull with shape a and scale 1/Gamma(1 + 1/a)."""

    a: float = 1.0
    name = "weibull"

    def __post_init__(self):
        if not self.a > 0:
            raise DistributionError(f"weibull: a must be > 0, got {self.a}")

    @property
    def params(self):
        return {"a": self.a}

    @property
    def scale(self):
        return 1.0 / math.gamma(1.0 + 1.0 / self.a)

    def _sf(self, x):
        return np.exp(-((x / self.scale) ** self.a))

    def _pdf(self, x):
        a, b = self.a, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            z = x / b
            p = (a / b) * z ** (a - 1) * np.exp(-(z**a))
        return np.where(x > 0, p, 0.0 if a > 1 else (1.0 / b if a == 1 else np.inf))

    def _tail(self, x):
        z = (x / self.scale) ** self.a
        return special.gammaincc(1.0 + 1.0 / self.a, z) - x * np.exp(-z)

    def _isf(self, u):
        return self.scale * (-np.log(u)) ** (1.0 / self.a)


@dataclass(frozen=True)
class Lognormal(ServiceDistribution):
    """Lognormal with log-scale sigma and mu = -sigma^2/2."""

    sigma: float = 1.0
    name = "lognormal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise DistributionError(f"lognormal: sigma must be > 0, got {self.sigma}")

    @property
    def params(self):
        return {"sigma": self.sigma}

    @property
    def mu(self):
        return -0.5 * self.sigma**2

    def _z(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def _sf(self, x):
        return special.ndtr(-self._z(x))

    def _pdf(self, x):
        z = self._z(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2 * math.pi))
        return np.where(x > 0, p, 0.0)

    def _tail(self, x):
        z = self._z(x)
        return special.ndtr(self.sigma - z) - x * special.ndtr(-z)

    def _isf(self, u):
        return np.exp(self.mu - self.sigma * special.ndtri(u))

    def sample(self, rng, size=None):
        v = np.exp(self.mu + self.sigma * rng.standard_normal(size))
        return v if size is not None else float(v)


@dataclass(frozen=True)
class Pareto(ServiceDistribution):
    """Pareto with tail index alpha and minimum x_m = (alpha - 1)/alpha."""

    alpha: float = 2.0
    name = "pareto"

    def __post_init__(self):
        if not self.alpha > 1:
            raise DistributionError(f"pareto: alpha must be > 1 for a finite mean, got {self.alpha}")

    @property
    def params(self):
        return {"alpha": self.alpha}

    @property
    def x_m(self):
        return (self.alpha - 1.0) / self.alpha

    @property
    def breakpoints(self):
        return (self.x_m,)

    def tail_index(self):
        return self.alpha

    def _sf(self, x):
        xm = self.x_m
        with np.errstate(divide="ignore"):
            return np.where(x < xm, 1.0, (xm / np.maximum(x, xm)) ** self.alpha)

    def _pdf(self, x):
        xm, a = self.x_m, self.alpha
        return np.where(x < xm, 0.0, a * xm**a / np.maximum(x, xm) ** (a + 1))

    def _tail(self, x):
        xm, a = self.x_m, self.alpha
        upper = xm**a * np.maximum(x, xm) ** (1 - a) / (a - 1)
        return np.where(x < xm, xm - x + xm / (a - 1), upper)

    def _isf(self, u):
        return self.x_m * u ** (-1.0 / self.alpha)


def solve_burr_k(c: float) -> float:
    """Return the k making Burr(c, k) unit-mean, i.e. k B(k - 1/c, 1 + 1/c) = 1."""
    if not c > 1:
        raise DistributionError(f"burr: c must be > 1, got {c}")

    def resid(k):
        return k * special.beta(k - 1.0 / c, 1.0 + 1.0 / c) - 1.0

    lo, hi = 1.0 / c + 1e-12, 100.0
    if not (resid(lo) > 0 > resid(hi)):
        raise DistributionError(f"burr: no unit-mean k in ({1 / c}, {hi}] for c={c}")
    k = optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(resid(k)) >= 1e-10:
        raise DistributionError(f"burr: k solve did not converge for c={c}")
    return k


@dataclass(frozen=True)
class Burr(ServiceDistribution):
    """Burr XII, Gbar(x) = (1 + x^c)^-k, with k solved for unit mean."""

    c: float = 2.0
    k: float = field(default=None)
    name = "burr"

    def __post_init__(self):
        if self.k is None:
            object.__setattr__(self, "k", solve_burr_k(self.c))
        if not self.c * self.k > 1:
            raise DistributionError("burr: c*k must exceed 1")

    @property
    def params(self):
        return {"c": self.c}

    def tail_index(self):
        return self.c * self.k

    def _sf(self, x):
        return (1.0 + x**self.c) ** (-self.k)

    def _pdf(self, x):
        c, k = self.c, self.k
        with np.errstate(divide="ignore", invalid="ignore"):
            p = k * c * x ** (c - 1) * (1.0 + x**c) ** (-k - 1)
        return np.where(x > 0, p, 0.0 if c > 1 else k * c)

    def _tail(self, x):
        c, k = self.c, self.k
        p, q = k - 1.0 / c, 1.0 / c
        return special.beta(q, p) / c * special.betainc(p, q, 1.0 / (1.0 + x**c))

    def _isf(self, u):
        return (u ** (-1.0 / self.k) - 1.0) ** (1.0 / self.c)


_CATALOG = {
    "exp": (Exponential, ()),
    "exponential": (Exponential, ()),
    "gamma": (Gamma, ("alpha",)),
    "weibull": (Weibull, ("a",)),
    "lognormal": (Lognormal, ("sigma",)),
    "pareto": (Pareto, ("alpha",)),
    "burr": (Burr, ("c",)),
}


def _number(key, text):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise DistributionError(f"bad value for '{key}': {text!r}") from None


def parse_dist(spec: str) -> ServiceDistribution:
    """Parse ``name[:key=value,...]``, e.g. ``weibull:a=0.5`` or ``lognormal:sigma=1/3``."""
    name, _, rest = spec.strip().partition(":")
    name = name.lower()
    if name not in _CATALOG:
        raise DistributionError(f"unknown distribution '{name}'")
    cls, keys = _CATALOG[name]
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in keys:
            raise DistributionError(f"unknown parameter '{key}' for {name}")
        kwargs[key] = _number(key, value)
    missing = [k for k in keys if k not in kwargs]
    if missing:
        raise DistributionError(f"missing parameter '{missing[0]}' for {name}")
    return cls(**kwargs)
