"""Invariant state of the SQ(d) hydrodynamic limit.

For arrival rate ``lam`` and ``d`` choices, the invariant queue-length tails
``s_1 = lam > s_2 > ...`` are obtained level by level: ``s_l`` is the root
of ``F_l(s) - s`` on ``[0, s_{l-1}]`` and the age density factor ``r_l`` of
that level is a constant plus a sum of decaying exponentials whose rates are
``lam * P_d(s_{i-1}, s_i)``.  With ``r_{l-1}`` in that form every integral in
``F_l`` reduces to the survival-function Laplace transform, so the solver
never needs nested quadrature.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .distributions import ServiceDistribution, parse_dist
from .laplace import (KRONROD_WEIGHTS, NODES, LaplaceCache, QuadratureError,
                      _kronrod, gauss_kronrod, integrate_weighted)

logger = logging.getLogger(__name__)

__all__ = [
    "pd",
    "ExpMixture",
    "ChainDensity",
    "InvariantState",
    "LevelDiagnostics",
    "SolverError",
    "ParameterError",
    "f_ell",
    "solve_level",
    "extend_mixture",
    "solve",
    "verify",
    "VerifyReport",
    "all_ones_state",
]


class SolverError(RuntimeError):
    """Bisection bracket is invalid or a level could not be solved."""


class ParameterError(ValueError):
    """Model parameters outside the supported range."""


def pd(x: float, y: float, d: int) -> float:
    """Symmetric routing polynomial ``sum_{m<d} x^m y^(d-1-m)``."""
    if d < 1:
        raise ParameterError("d must be >= 1")
    return math.fsum(x**m * y ** (d - 1 - m) for m in range(d))


@dataclass(frozen=True)
class ExpMixture:
    """``r(x) = base + sum_i coeffs[i] * exp(-rates[i] * x)``."""

    base: float
    coeffs: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()

    @property
    def terms(self):
        return list(zip(self.coeffs, self.rates))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.base)
        for c, a in zip(self.coeffs, self.rates):
            out = out + c * np.exp(-a * x)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, a in zip(self.coeffs, self.rates):
            out = out - c * a * np.exp(-a * x)
        return float(out) if out.ndim == 0 else out

    def mass(self, cache: LaplaceCache) -> float:
        """``int r(x) Gbar(x) dx`` through the Laplace cache."""
        return math.fsum([self.base] + [c * cache.phi(a) for c, a in self.terms])

    def shifted_mass(self, cache: LaplaceCache, r: float) -> float:
        """``int r(x) Gbar(x + r) dx``."""
        return math.fsum([self.base * cache.shifted(0.0, r)]
                         + [c * cache.shifted(a, r) for c, a in self.terms])

    def to_dict(self):
        return {"base": self.base, "terms": [{"coeff": c, "rate": a} for c, a in self.terms]}

    @classmethod
    def from_dict(cls, data):
        terms = data.get("terms", [])
        return cls(float(data["base"]), tuple(float(t["coeff"]) for t in terms),
                   tuple(float(t["rate"]) for t in terms))


_T = 0.5 * (NODES + 1.0)                     # Kronrod abscissae on [0, 1]
_W = 0.5 * KRONROD_WEIGHTS
_PTS = np.concatenate([[0.0], _T, [1.0]])    # interpolation points per panel
_BARY = np.array([1.0 / np.prod(t - np.delete(_PTS, k)) for k, t in enumerate(_PTS)])


def _chain_expm(rates: Sequence[float], times: np.ndarray) -> np.ndarray:
    """``exp(G t)`` for each ``t`` in ``times``, G the chain generator.

    G has a zero first row (the constant stage) and ``-a_j``, ``a_j`` on the
    diagonal and subdiagonal of row j.  ``G + theta I`` is entrywise
    nonnegative with row sums ``theta``, so a Taylor series of it after
    scaling ``theta * t`` below one, followed by repeated squaring of the
    resulting stochastic matrices, involves no cancellation.
    """
    n = len(rates) + 1
    idx = np.arange(1, n)
    theta = max(rates)
    shifted = np.zeros((n, n))
    shifted[0, 0] = theta
    shifted[idx, idx] = theta - np.asarray(rates)
    shifted[idx, idx - 1] = rates
    times = np.asarray(times, dtype=float)
    k = max(0, math.ceil(math.log2(theta * times.max()))) if times.max() > 0 else 0
    dt = times / 2.0**k
    eye = np.eye(n)
    step = shifted[None] * dt[:, None, None]
    acc = np.broadcast_to(eye, step.shape).copy()
    for i in range(18, 0, -1):
        acc = eye + (step @ acc) / i
    acc *= np.exp(-theta * dt)[:, None, None]
    for _ in range(k):
        acc = acc @ acc
    return acc


@dataclass
class _ChainTable:
    edges: np.ndarray      # panel edges, last one is the truncation point
    nodes: np.ndarray      # (panels, 21) Kronrod nodes
    weights: np.ndarray    # (panels, 21) Kronrod weights scaled to the panel
    last: np.ndarray       # (panels, 23) r_l at edge, nodes, edge
    prev: np.ndarray       # (panels, 23) r_{l-1} likewise


@dataclass(frozen=True, eq=False)
class ChainDensity:
    """``r_l`` as the last stage of the chain ``r_j' = a_j (r_{j-1} - r_j)``.

    Stage 1 is the constant ``base``; stage ``j >= 2`` has rate ``rates[j-2]``
    and starts at ``initial[j-2]``.  This is the same function as the
    exponential mixture, but it is evaluated through the matrix exponential
    of the chain generator, which is a stochastic matrix, so nothing cancels
    when rates crowd together or coincide.

    Values are tabulated once per set of distribution breakpoints on
    Kronrod panels: uniform near the origin, then growing by ``2**(1/4)``
    out to a point where the chain has relaxed to ``base`` (deviation below
    roughly ``1e-20``).
    """

    base: float
    rates: tuple[float, ...]
    initial: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.rates) != len(self.initial) or not self.rates:
            raise ValueError("chain needs matching, non-empty rates and initial values")
        if min(self.rates) <= 0:
            raise ValueError("chain rates must be positive")
        object.__setattr__(self, "_tables", {})

    @classmethod
    def from_levels(cls, lam: float, d: int, s: Sequence[float],
                    breakpoints: Sequence[float] = ()) -> "ChainDensity":
        """Chain for ``r_l`` given ``s = [s_1, ..., s_l]``."""
        rates = tuple(lam * pd(s[j - 1], s[j], d) for j in range(1, len(s)))
        initial = tuple(lam * v**d for v in s[1:])
        return cls(lam, rates, initial, tuple(map(float, breakpoints)))

    @property
    def end(self) -> float:
        n = len(self.rates)
        return 2.0 * (n * math.log(2.0) + 46.0) / min(self.rates)

    def _edges(self, breakpoints) -> np.ndarray:
        h0 = min(1.0, 1.0 / max(self.rates))
        end = self.end
        # graded toward 0 so algebraic cusps of Gbar at the origin stay resolved
        pts = [h0 * 2.0**-k for k in range(1, 41)] + [h0 * k for k in range(9)]
        while pts[-1] < end:
            pts.append(pts[-1] * 2.0**0.25)
        pts.extend(p for p in breakpoints if 0 < p < pts[-1])
        return np.unique(pts)

    def _relaxed(self, x: float) -> int:
        """Number of leading stages already within ~1e-22 of ``base`` at age ``x``.

        Stage j deviates from ``base`` by at most ``base * P(T > x)`` with T a
        sum of exponentials of rates ``a_2..a_j``; a Chernoff bound at half
        the smallest rate gives ``2^(j-1) exp(-min(a) x / 2)``.
        """
        m, low = 0, math.inf
        for k, a in enumerate(self.rates[:-1]):
            low = min(low, a)
            if (k + 1) * math.log(2.0) - 0.5 * low * x > -50.0:
                break
            m = k + 1
        return m

    def table(self, breakpoints=()) -> _ChainTable:
        key = tuple(breakpoints)
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        edges = self._edges(key)
        widths = np.diff(edges)
        y = np.array((self.base,) + tuple(self.initial))
        last = np.empty((widths.size, _PTS.size))
        prev = np.empty_like(last)
        for p, h in enumerate(widths):
            m = self._relaxed(edges[p])
            y[1:1 + m] = self.base
            active = np.concatenate([[self.base], y[1 + m:]])
            # exact propagation from the panel's left edge to each node and the right edge
            props = _chain_expm(self.rates[m:], h * _PTS[1:])
            vals = np.vstack([active, props @ active])
            last[p] = vals[:, -1]
            prev[p] = vals[:, -2] if len(self.rates) > 1 else self.base
            y[1 + m:] = vals[-1, 1:]
        nodes = edges[:-1, None] + widths[:, None] * _T[None, :]
        tab = _ChainTable(edges, nodes, widths[:, None] * _W[None, :], last, prev)
        self._tables[key] = tab
        return tab

    def _interp(self, x, which: str):
        # always the table for the stored breakpoints, so values do not depend on cache history
        tab = self.table(self.breakpoints)
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        vals = getattr(tab, which)
        p = np.clip(np.searchsorted(tab.edges, flat, side="right") - 1, 0, vals.shape[0] - 1)
        t = (flat - tab.edges[p]) / (tab.edges[p + 1] - tab.edges[p])
        diff = t[:, None] - _PTS[None, :]
        exact = diff == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = _BARY[None, :] / diff
            out = np.sum(q * vals[p], axis=1) / np.sum(q, axis=1)
        hit = exact.any(axis=1)
        out[hit] = vals[p[hit], np.argmax(exact[hit], axis=1)]
        out[flat >= tab.edges[-1]] = self.base
        out = out.reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return self._interp(x, "last")

    def derivative(self, x):
        """``r_l' = a_l (r_{l-1} - r_l)``."""
        return self.rates[-1] * (self._interp(x, "prev") - self._interp(x, "last"))

    def mass(self, cache: LaplaceCache) -> float:
        tab = self.table(cache.dist.breakpoints)
        body = np.sum(tab.weights * tab.last[:, 1:-1] * cache.dist._sf(tab.nodes))
        return float(body + self.base * cache.dist.integrated_tail(tab.edges[-1]))

    def shifted_mass(self, cache: LaplaceCache, r):
        """``int r(x) Gbar(x + r) dx``; ``r`` may be an array of lags."""
        tab = self.table(cache.dist.breakpoints)
        lags = np.atleast_1d(np.asarray(r, dtype=float))
        w = (tab.weights * tab.last[:, 1:-1]).ravel()
        x = tab.nodes.ravel()
        out = np.empty(lags.size)
        for i in range(0, lags.size, 256):
            chunk = lags[i:i + 256]
            out[i:i + 256] = cache.dist._sf(x[None, :] + chunk[:, None]) @ w
        out += self.base * np.asarray(cache.dist.integrated_tail(tab.edges[-1] + lags))
        return float(out[0]) if np.ndim(r) == 0 else out

    def resolvent_integral(self, cache: LaplaceCache, a: float) -> float:
        """``int_0^inf r(u) * a * int_0^inf exp(-a t) Gbar(u + t) dt du``."""
        tab = self.table(cache.dist.breakpoints)
        pts = np.concatenate([tab.edges[:-1, None], tab.nodes], axis=1).ravel()
        pts = np.append(pts, tab.edges[-1])
        left, right = pts[:-1], pts[1:]
        sf = cache.dist._sf
        seg, err = _kronrod(lambda y: np.exp(-a * (y - left[:, None])) * sf(y), left, right)
        if err.sum() > 1e-13:
            raise QuadratureError(f"chain resolvent segments error {err.sum():.3e}",
                                  estimate=None, error=float(err.sum()))
        decay = np.exp(-a * (right - left))
        v = np.empty(pts.size)
        v[-1] = cache.shifted(a, float(tab.edges[-1]))
        for k in range(seg.size - 1, -1, -1):
            v[k] = seg[k] + decay[k] * v[k + 1]
        at_nodes = v[:-1].reshape(tab.nodes.shape[0], -1)[:, 1:]
        body = a * math.fsum((tab.weights * tab.last[:, 1:-1] * at_nodes).ravel())
        return body + self.base * cache.shifted_psi(a, float(tab.edges[-1]))

    def to_dict(self):
        return {"base": self.base, "chain": {"rates": list(self.rates),
                                             "initial": list(self.initial),
                                             "breakpoints": list(self.breakpoints)}}

    @classmethod
    def from_dict(cls, data):
        c = data["chain"]
        return cls(float(data["base"]), tuple(map(float, c["rates"])),
                   tuple(map(float, c["initial"])),
                   tuple(map(float, c.get("breakpoints", ()))))


Density = Union[ExpMixture, ChainDensity]


def _density_from_dict(data) -> Density:
    return ChainDensity.from_dict(data) if "chain" in data else ExpMixture.from_dict(data)


@dataclass
class LevelDiagnostics:
    ell: int
    h_lo: float
    h_hi: float
    iterations: int
    width: float
    residual: float
    brackets: int | None = None
    representation: str = "mixture"


def _confluent(cache: LaplaceCache, a: float, ai: float, collision_tol: float) -> float:
    """``(Phi(ai) - Phi(a)) / (a - ai)``, with the derivative limit at collisions."""
    if abs(a - ai) <= collision_tol * max(a, ai):
        return -cache.dphi(0.5 * (a + ai))
    return (cache.psi(a) - cache.psi(ai)) / (a - ai)


def f_ell(s: float, lam: float, d: int, s_prev: float, r_prev: Density,
          cache: LaplaceCache, collision_tol: float = 1e-10) -> float:
    """Evaluate the level map ``F_l(s)`` given ``s_{l-1}`` and ``r_{l-1}``.

    With ``a = lam * P_d(s_{l-1}, s)`` and an exponential-mixture ``r_{l-1}``
    the inner convolution integrates in closed form::

        F(s) = lam s^d Phi(a) + base (1 - Phi(a))
               + sum_i c_i a (Phi(a_i) - Phi(a)) / (a - a_i)
    """
    a = lam * pd(s_prev, s, d)
    if isinstance(r_prev, ChainDensity):
        return math.fsum([lam * s**d * cache.phi(a), r_prev.resolvent_integral(cache, a)])
    parts = [lam * s**d * cache.phi(a), r_prev.base * cache.psi(a)]
    for c, ai in r_prev.terms:
        parts.append(c * a * _confluent(cache, a, ai, collision_tol))
    return math.fsum(parts)


def _scan_brackets(h, hi, n=1024) -> int:
    grid = np.linspace(0.0, hi, n)
    vals = np.array([h(v) for v in grid])
    signs = np.sign(vals)
    return int(np.count_nonzero(signs[1:] * signs[:-1] < 0))


def solve_level(ell: int, lam: float, d: int, s_prev: float, r_prev: Density,
                cache: LaplaceCache, *, xtol: float = 1e-12, rtol: float = 1e-12,
                cutoff: float = 1e-12, bracket: tuple[float, float] | None = None,
                scan: bool = False, collision_tol: float = 1e-10,
                max_iter: int = 2000) -> tuple[float, LevelDiagnostics]:
    """Bisect ``H(s) = F_l(s) - s`` on ``[0, s_{l-1}]``.

    Stops once the bracket is narrower than ``xtol`` and either narrower than
    ``rtol`` relative to the root or entirely below ``cutoff``.
    """
    def h(v):
        return f_ell(v, lam, d, s_prev, r_prev, cache, collision_tol) - v

    lo, hi = bracket if bracket is not None else (0.0, s_prev)
    if not 0.0 <= lo < hi <= s_prev:
        raise SolverError(f"level {ell}: bracket ({lo}, {hi}) not inside [0, {s_prev}]")
    h_lo, h_hi = h(lo), h(hi)
    if not (h_lo > 0 and h_hi <= 0):
        raise SolverError(f"level {ell}: sign condition violated, H({lo})={h_lo:.6e}, "
                          f"H({hi})={h_hi:.6e}")
    brackets = None
    if scan:
        brackets = _scan_brackets(h, s_prev)
        if brackets > 1:
            logger.warning("level %d: %d sign changes of F - s found; bisection returns one root",
                           ell, brackets)
    it = 0
    while it < max_iter:
        width = hi - lo
        if width < xtol and (width <= rtol * lo or hi <= cutoff):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    resid = h(root)
    return root, LevelDiagnostics(ell, h_lo, h_hi, it, hi - lo, resid, brackets)


def extend_mixture(ell: int, s: Sequence[float], r_prev: Density, lam: float, d: int,
                   collision_tol: float = 1e-10, max_weight: float = 1e2,
                   breakpoints: Sequence[float] = ()) -> Density:
    """Build ``r_l`` from ``r_{l-1}`` and ``s = [s_1, ..., s_l]``.

    ``r_l(x) = lam + lam * sum_{i=2}^{l} c_{i,l} exp(-lam P_d(s_{i-1}, s_i) x)`` with
    ``c_{i,l} = c_{i,l-1} P_l / (P_l - P_i)`` for i < l and the diagonal fixed by
    ``r_l(0) = lam s_l^d``.

    The mixture is abandoned for a :class:`ChainDensity` once two rates
    collide (relative gap below ``collision_tol``) or the coefficients
    outgrow ``max_weight * lam``: past that point evaluating the mixture
    cancels away more digits than the solver tolerance allows.
    """
    if ell < 2 or len(s) < ell:
        raise ValueError("extend_mixture needs l >= 2 and s_1..s_l")
    if isinstance(r_prev, ChainDensity):
        return ChainDensity.from_levels(lam, d, s[:ell], breakpoints)
    s_l, s_lm1 = s[ell - 1], s[ell - 2]
    a_new = lam * pd(s_lm1, s_l, d)
    if any(abs(a_new - ai) <= collision_tol * max(a_new, ai) for ai in r_prev.rates):
        logger.info("level %d: mixture rates collide, switching to the chain form", ell)
        return ChainDensity.from_levels(lam, d, s[:ell], breakpoints)
    p_new = a_new / lam
    coeffs = []
    for c, ai in r_prev.terms:
        p_i = ai / lam
        coeffs.append(c * p_new / (p_new - p_i))
    # coeff stores lam * c_{i,l}; compensated sum keeps r_l(0) = lam s_l^d accurate
    diag = math.fsum([lam * s_l**d, -lam] + [-c for c in coeffs])
    coeffs.append(diag)
    if math.fsum(abs(c) for c in coeffs) > max_weight * lam:
        logger.info("level %d: mixture coefficients too large, switching to the chain form", ell)
        return ChainDensity.from_levels(lam, d, s[:ell], breakpoints)
    return ExpMixture(lam, tuple(coeffs), tuple(r_prev.rates) + (a_new,))


@dataclass
class InvariantState:
    lam: float
    d: int
    dist: ServiceDistribution
    s_star: list[float]
    r: list[Density]
    cutoff: float = 1e-12
    diagnostics: list[LevelDiagnostics] = field(default_factory=list)
    residuals: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return len(self.s_star)

    def s(self, ell: int) -> float:
        """Tail ``s_l`` (``s_0 = 1``; zero past the last computed level)."""
        if ell == 0:
            return 1.0
        return self.s_star[ell - 1] if ell <= len(self.s_star) else 0.0

    def density(self, ell: int) -> Density | None:
        """``r_l``, or None for levels reported as zero."""
        return self.r[ell - 1] if 1 <= ell <= len(self.r) else None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "d": self.d,
            "dist": self.dist.spec(),
            "cutoff": self.cutoff,
            "s_star": list(self.s_star),
            "r": [r.to_dict() for r in self.r],
            "residuals": dict(self.residuals),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=kw.pop("indent", 2), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "InvariantState":
        return cls(
            lam=float(data["lambda"]),
            d=int(data["d"]),
            dist=parse_dist(data["dist"]),
            s_star=[float(v) for v in data["s_star"]],
            r=[_density_from_dict(r) for r in data["r"]],
            cutoff=float(data.get("cutoff", 1e-12)),
            residuals=dict(data.get("residuals", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "InvariantState":
        return cls.from_dict(json.loads(text))


def _check_params(lam, d):
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"lambda must lie in (0, 1), got {lam}")
    if int(d) != d or d < 2:
        raise ParameterError(f"d must be an integer >= 2, got {d}")


def solve(lam: float, d: int, dist: ServiceDistribution, cutoff: float = 1e-12,
          ell_max: int = 50, tol: float = 1e-12, cache: LaplaceCache | None = None,
          collision_tol: float = 1e-10, scan: bool | None = None,
          xtol: float = 1e-12, rtol: float = 1e-12, max_weight: float = 1e2) -> InvariantState:
    """Compute the physical invariant state up to ``cutoff`` or ``ell_max`` levels.

    ``scan`` (default: on for d > 2) counts sign changes of ``F_l(s) - s`` on
    a 1024-point grid and warns when a level has several fixed points.
    """
    _check_params(lam, d)
    if ell_max < 1:
        raise ParameterError("ell_max must be >= 1")
    if cache is None:
        cache = LaplaceCache(dist, tol)
    if scan is None:
        scan = d > 2
    s = [lam]
    r: list[Density] = [ExpMixture(lam)]
    diags: list[LevelDiagnostics] = []
    for ell in range(2, ell_max + 1):
        root, diag = solve_level(ell, lam, d, s[-1], r[-1], cache, xtol=xtol, rtol=rtol,
                                 cutoff=cutoff, scan=scan, collision_tol=collision_tol)
        diags.append(diag)
        if root <= cutoff:
            s.append(0.0)
            break
        s.append(root)
        r_new = extend_mixture(ell, s, r[-1], lam, d, collision_tol, max_weight,
                               dist.breakpoints)
        diag.representation = "chain" if isinstance(r_new, ChainDensity) else "mixture"
        r.append(r_new)
    state = InvariantState(lam, d, dist, s, r, cutoff, diags)
    state.residuals["fixed_point"] = max((abs(g.residual) for g in diags), default=0.0)
    return state


@dataclass
class VerifyReport:
    consistency: float
    departure: float
    fixed_point: float
    monotone_level: float
    monotone_age: float
    positivity: float
    s_monotone: bool
    threshold: float = 1e-8
    slack: float = 1e-10
    fixed_point_threshold: float = 1e-11

    @property
    def passed(self) -> bool:
        return (self.consistency < self.threshold and self.departure < self.threshold
                and self.fixed_point < self.fixed_point_threshold
                and self.monotone_level <= self.slack and self.monotone_age <= self.slack
                and self.positivity <= self.slack and self.s_monotone)

    def as_dict(self):
        return {
            "consistency": self.consistency,
            "departure": self.departure,
            "fixed_point": self.fixed_point,
            "monotone_level": self.monotone_level,
            "monotone_age": self.monotone_age,
            "positivity": self.positivity,
            "s_monotone": self.s_monotone,
            "passed": self.passed,
        }

    def summary(self) -> str:
        return " ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in self.as_dict().items())


def _age_grid(dist: ServiceDistribution, n=200):
    hi = max(20.0, float(dist.isf(1e-6)))
    return np.concatenate([[0.0], np.geomspace(1e-3, hi, n - 1)])


def _quad_value(fn):
    # an O(1) integral can miss an absolute tolerance by roundoff alone; keep its estimate
    try:
        return fn().value
    except QuadratureError as exc:
        if exc.estimate is None:
            raise
        return exc.estimate


def _departure_integral(dist: ServiceDistribution, r: Density, lam: float, tol: float) -> float:
    """``int g(x) r(x) dx`` by adaptive quadrature (tail bounded by lam * Gbar)."""
    x = 1.0
    while lam * float(dist.survival(x)) > tol * 1e-2:
        x *= 2.0
    edges = [0.0] + [p for p in dist.breakpoints if p < 1.0] + [1.0]
    while edges[-1] < x:
        edges.append(edges[-1] * 2)
    return _quad_value(lambda: gauss_kronrod(lambda u: dist._pdf(u) * r(u), edges, tol * 1e-2,
                                             max_intervals=200_000))


def verify(state: InvariantState, threshold: float = 1e-8, slack: float = 1e-10,
           n_grid: int = 200, tol: float | None = None) -> VerifyReport:
    """Check the invariant-state identities by independent quadrature.

    * consistency: ``s_l = int r_l Gbar``
    * departure: ``lam s_{l-1}^d = int g r_l``
    * r_l nondecreasing in age, nonincreasing in level, within ``[0, lam]``
    """
    dist, lam, d = state.dist, state.lam, state.d
    tol = tol or state.cutoff
    cons = dep = 0.0
    for ell in range(1, len(state.r) + 1):
        rl = state.density(ell)
        mass = _quad_value(lambda: integrate_weighted(dist, rl, tol=tol * 1e-1))
        cons = max(cons, abs(mass - state.s(ell)))
        if ell >= 2:
            flow = _departure_integral(dist, rl, lam, tol)
            dep = max(dep, abs(flow - lam * state.s(ell - 1) ** d))
    x = _age_grid(dist, n_grid)
    vals = [np.asarray(state.density(ell)(x)) for ell in range(1, len(state.r) + 1)]
    mono_level = max((float(np.max(b - a)) for a, b in zip(vals, vals[1:])), default=0.0)
    mono_age = max((float(np.max(-np.diff(v))) for v in vals), default=0.0)
    pos = max(max(float(np.max(-v)), float(np.max(v - lam))) for v in vals)
    s_mono = all(b <= a for a, b in zip(state.s_star, state.s_star[1:]))
    fixed = max((abs(g.residual) for g in state.diagnostics),
                default=state.residuals.get("fixed_point", 0.0))
    report = VerifyReport(cons, dep, fixed, max(mono_level, 0.0), max(mono_age, 0.0),
                          max(pos, 0.0), s_mono, threshold, slack)
    state.residuals.update({"consistency": cons, "departure": dep})
    return report


def all_ones_state(lam: float, d: int, dist: ServiceDistribution, levels: int = 5) -> InvariantState:
    """Non-physical invariant state with every tail equal to one (r_l = 1)."""
    one = ExpMixture(1.0)
    return InvariantState(lam, d, dist, [1.0] * levels, [one] * levels)
