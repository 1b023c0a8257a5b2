"""Performance measures derived from a solved invariant state."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import ServiceDistribution
from .invariant import ChainDensity, InvariantState
from .laplace import LaplaceCache, gauss_kronrod

__all__ = [
    "WaitConfig",
    "UnsupportedMeasure",
    "z",
    "z_grid",
    "mean_virtual_wait",
    "h_diagnostic",
    "characteristic_root",
    "decay_exponent",
    "iterate_recursion",
    "dominant_initial",
    "recursion_growth",
    "tail_condition",
    "diagnostics_csv",
    "wait_csv",
]


class UnsupportedMeasure(ValueError):
    pass


@dataclass(frozen=True)
class WaitConfig:
    """Truncation of the waiting-time series: levels, lag range and grid step.

    ``lag`` picks how the residual-work term pairs adjacent levels.
    ``"difference"`` weighs ``Z_l - Z_{l+1}`` (the work left in a queue of
    length exactly ``l``), which reduces to ``sum_l s_l^2`` for exponential
    service.  ``"sum"`` weighs ``Z_l + Z_{l+1}`` and is kept only to
    reproduce values computed with that form.
    """

    L0: int = 6
    R0: float = 20.0
    delta: float = 0.003
    lag: str = "difference"

    def __post_init__(self):
        if self.L0 < 2 or not self.delta > 0 or not self.R0 > 0:
            raise ValueError("WaitConfig needs L0 >= 2, R0 > 0, delta > 0")
        if self.lag not in ("difference", "sum"):
            raise ValueError(f"lag must be 'difference' or 'sum', got {self.lag!r}")

    @property
    def n_steps(self) -> int:
        # floor(R0/delta), robust to representation error in the quotient
        return int(math.floor(self.R0 / self.delta * (1 + 1e-12)))

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta


def _cache(state: InvariantState, cache: LaplaceCache | None) -> LaplaceCache:
    if cache is not None and cache.dist == state.dist:
        return cache
    return LaplaceCache(state.dist)


def z(state: InvariantState, ell: int, r: float, cache: LaplaceCache | None = None) -> float:
    """Mean residual-survival weight of level ``ell`` at lag ``r``.

    ``Z_l(r) = int r_l(x) Gbar(x + r) dx``; ``Z_l(0) = s_l``.
    """
    if ell < 1 or r < 0:
        raise ValueError("need ell >= 1 and r >= 0")
    dens = state.density(ell)
    if dens is None:
        return 0.0
    cache = _cache(state, cache)
    if r == 0:
        return dens.mass(cache)
    return dens.shifted_mass(cache, r)


def _shifted_on_grid(dist: ServiceDistribution, cache: LaplaceCache, a: float,
                     grid: np.ndarray) -> np.ndarray:
    """``V(r_k) = int_{r_k}^inf exp(-a (y - r_k)) Gbar(y) dy`` for every grid point."""
    if a == 0:
        return np.asarray(dist.integrated_tail(grid), dtype=float)
    inner = [p for p in dist.breakpoints if grid[0] < p < grid[-1]]
    edges = np.unique(np.concatenate([grid, inner]))
    res = gauss_kronrod(lambda y: np.exp(-a * y) * dist._sf(y), edges, cache.tol)
    parent = np.searchsorted(grid, edges[:-1], side="right") - 1
    panels = np.zeros(grid.size - 1)
    np.add.at(panels, parent, res.panels)
    panels *= np.exp(a * grid[:-1])
    decay = np.exp(-a * np.diff(grid))
    out = np.empty(grid.size)
    out[-1] = cache.shifted(a, float(grid[-1]))
    for k in range(grid.size - 2, -1, -1):
        out[k] = panels[k] + decay[k] * out[k + 1]
    return out


def z_grid(state: InvariantState, ell: int, grid, cache: LaplaceCache | None = None) -> np.ndarray:
    """``Z_l`` on an increasing grid of lags starting at 0."""
    grid = np.asarray(grid, dtype=float)
    dens = state.density(ell)
    if dens is None:
        return np.zeros(grid.size)
    cache = _cache(state, cache)
    if isinstance(dens, ChainDensity):
        return dens.shifted_mass(cache, grid)
    total = dens.base * np.asarray(state.dist.integrated_tail(grid), dtype=float)
    for c, a in dens.terms:
        total = total + c * _shifted_on_grid(state.dist, cache, a, grid)
    return total


def mean_virtual_wait(state: InvariantState, cfg: WaitConfig = WaitConfig(),
                      cache: LaplaceCache | None = None) -> float:
    """Invariant mean virtual waiting time for d = 2.

    An arrival joins the shorter of two sampled queues.  If that queue holds
    ``l`` jobs it waits for ``l - 1`` full services plus the residual work
    of the job in service, giving

        W = sum_{l>=2} s_l^2 + sum_{l>=1} (s_l + s_{l+1}) int (Z_l - Z_{l+1})(r) dr.

    Truncated at ``cfg.L0`` levels with a left-endpoint rule of step
    ``cfg.delta`` on ``[0, cfg.R0]`` for the lag integral.
    """
    if state.d != 2:
        raise UnsupportedMeasure(f"mean virtual waiting time is only defined for d=2, got d={state.d}")
    cache = _cache(state, cache)
    grid = cfg.grid()
    zs = {ell: z_grid(state, ell, grid, cache) for ell in range(1, cfg.L0 + 1)}
    z0 = {ell: zs[ell][0] for ell in zs}
    total = math.fsum(z0[ell] ** 2 for ell in range(2, cfg.L0 + 1))
    sign = -1.0 if cfg.lag == "difference" else 1.0
    for ell in range(1, cfg.L0):
        lag = math.fsum(zs[ell] + sign * zs[ell + 1]) * cfg.delta
        total += (z0[ell] + z0[ell + 1]) * lag
    return total


def h_diagnostic(state_or_s, ell: int, d: int | None = None) -> float:
    """``log_d(log(1/s_l)) / l``; NaN when ``s_l`` is not in (0, 1)."""
    if isinstance(state_or_s, InvariantState):
        s, d = state_or_s.s(ell), state_or_s.d
    else:
        s = float(state_or_s)
        d = 2 if d is None else d
    if not 0.0 < s < 1.0:
        return math.nan
    return math.log(math.log(1.0 / s), d) / ell


def _split_beta(beta: float, d: int):
    if not beta > d / (d - 1):
        raise ValueError(f"beta must exceed d/(d-1) = {d / (d - 1):.6g}, got {beta}")
    j = math.floor(beta)
    eta = beta - j
    if eta == 0:
        raise ValueError(
            "integer beta needs an unspecified slack delta in (0, 1) "
            "(eta = 1 - delta); pass a non-integer beta")
    return j, eta


def characteristic_root(beta: float, d: int) -> tuple[float, int, float]:
    """Positive root ``x`` of ``1 - (d-1) sum_{i<j} x^i - (d-1) eta x^j``.

    Returns ``(x, j, eta)`` with ``j = floor(beta)``, ``eta = beta - j``.
    """
    j, eta = _split_beta(beta, d)

    def poly(x):
        return 1.0 - (d - 1) * math.fsum(x**i for i in range(1, j)) - (d - 1) * eta * x**j

    lo, hi = 0.0, 1.0
    if not (poly(lo) > 0 > poly(hi)):
        raise ValueError("characteristic polynomial has no sign change on (0, 1)")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if poly(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), j, eta


def decay_exponent(beta: float, d: int) -> float:
    """Asymptotic doubly-exponential decay exponent ``log_d(gamma_2)``."""
    x, _, _ = characteristic_root(beta, d)
    return math.log(1.0 / x, d)


def iterate_recursion(c1: float, c2: float, j: int, eta: float, d: int, n: int,
                      init) -> list[float]:
    """Iterate ``R_l = c1 - (l-1) c2 + (d-1)(sum_{i=l-j+1}^{l-1} R_i + eta R_{l-j})``.

    ``init`` gives ``R_{-j+1}, ..., R_0``; returns ``R_1, ..., R_n``.
    """
    init = list(init)
    if len(init) != j:
        raise ValueError(f"need {j} initial values")
    R = init[:]  # R[k] holds R_{k - j + 1}
    for ell in range(1, n + 1):
        idx = ell + j - 1
        window = math.fsum(R[idx - j + 1: idx])
        R.append(c1 - (ell - 1) * c2 + (d - 1) * (window + eta * R[idx - j]))
    return R[j:]


def dominant_initial(c1: float, c2: float, j: int, eta: float, d: int) -> list[float]:
    """Initial values ``R_{-j+1..0}`` on the linear particular solution plus the dominant mode.

    The recursion has the exact solution ``p + q l + gamma^l`` with
    ``gamma`` the dominant root, so ``log_d(R_l) / l`` approaches the decay
    exponent with no transient from the subdominant roots.
    """
    k = (d - 1) * (j - 1 + eta)
    if not k > 1:
        raise ValueError("need (d-1)(j+eta-1) > 1")
    q = c2 / (k - 1)
    p = (c1 + c2 + (d - 1) * q * (sum(range(-j + 1, 0)) - eta * j)) / (1 - k)
    x, _, _ = characteristic_root(j + eta, d)
    gamma = 1.0 / x
    return [p + q * i + gamma**i for i in range(-j + 1, 1)]


def recursion_growth(beta: float, d: int, n: int = 60, c1: float = 1.0, c2: float = 1.0) -> float:
    """``log_d(R_n) / n`` for the decay recursion started on its dominant mode."""
    j, eta = _split_beta(beta, d)
    R = iterate_recursion(c1, c2, j, eta, d, n, dominant_initial(c1, c2, j, eta, d))
    return math.log(R[-1], d) / n


def tail_condition(dist: ServiceDistribution, d: int) -> dict:
    """Whether the power-law tail index exceeds ``d/(d-1)`` (informational)."""
    beta = dist.tail_index()
    threshold = d / (d - 1)
    return {"beta": beta, "threshold": threshold, "doubly_exponential": beta > threshold}


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(float(v))


def diagnostics_csv(state: InvariantState) -> str:
    lines = ["ell,s_star,H"]
    for ell in range(1, state.levels + 1):
        lines.append(f"{ell},{_fmt(state.s(ell))},{_fmt(h_diagnostic(state, ell))}")
    return "\n".join(lines) + "\n"


def wait_csv(value: float) -> str:
    return f"W*,{_fmt(value)}\n"
