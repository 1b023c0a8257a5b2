"""Discrete-event simulation of a finite SQ(d) network.

``N`` FCFS servers receive a Poisson stream of rate ``lam * N``.  Each
arrival samples ``d`` servers uniformly (with replacement by default) and
joins the shortest sampled queue, breaking ties uniformly at random.  The
fraction of queues holding at least ``l`` jobs is recorded on a regular time
grid and averaged over independent realizations.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import Exponential, ServiceDistribution, parse_dist
from .invariant import InvariantState

__all__ = [
    "Initial",
    "SimConfig",
    "SimResult",
    "Comparison",
    "ComparisonError",
    "run_realization",
    "run",
    "compare",
]

_CHUNK = 4096


class ComparisonError(ValueError):
    """Simulation and invariant state describe different models."""


class Initial(str, enum.Enum):
    ONE_JOB = "one-job"   # every server holds one job of age 0
    EMPTY = "empty"


@dataclass(frozen=True)
class SimConfig:
    N: int = 600
    d: int = 2
    lam: float = 0.5
    dist: ServiceDistribution = field(default_factory=Exponential)
    horizon: float = 15.0
    grid_step: float = 0.05
    realizations: int = 600
    seed: int = 0
    ell_max: int = 8
    initial: Initial = Initial.ONE_JOB
    replace: bool = True

    def __post_init__(self):
        if self.N < 1 or self.d < 1 or self.realizations < 1 or self.ell_max < 1:
            raise ValueError("N, d, realizations and ell_max must be positive")
        if not (self.lam > 0 and self.horizon > 0 and self.grid_step > 0):
            raise ValueError("lambda, horizon and grid_step must be positive")
        if not self.replace and self.d > self.N:
            raise ValueError("sampling without replacement needs d <= N")
        object.__setattr__(self, "initial", Initial(self.initial))

    def times(self) -> np.ndarray:
        n = int(math.floor(self.horizon / self.grid_step * (1 + 1e-12)))
        return np.arange(n + 1) * self.grid_step

    def as_dict(self) -> dict:
        return {
            "N": self.N, "d": self.d, "lambda": self.lam, "dist": self.dist.spec(),
            "horizon": self.horizon, "grid_step": self.grid_step,
            "realizations": self.realizations, "seed": self.seed, "ell_max": self.ell_max,
            "initial": self.initial.value, "replace": self.replace,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(N=int(data["N"]), d=int(data["d"]), lam=float(data["lambda"]),
                   dist=parse_dist(data["dist"]), horizon=float(data["horizon"]),
                   grid_step=float(data["grid_step"]), realizations=int(data["realizations"]),
                   seed=int(data["seed"]), ell_max=int(data["ell_max"]),
                   initial=Initial(data["initial"]), replace=bool(data["replace"]))


class _Stream:
    """Chunked draws from one generator, consumed one value at a time."""

    def __init__(self, draw):
        self._draw = draw
        self._buf = []
        self._pos = 0

    def next(self):
        if self._pos >= len(self._buf):
            self._buf = self._draw(_CHUNK).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


@dataclass
class Realization:
    tails: np.ndarray          # (times, ell_max) fraction of queues with length >= l
    arrivals: int
    departures: int
    in_system: int
    conserved: bool            # arrivals + initial jobs == departures + in system at every sample


def _rngs(seed: int, index: int):
    root = np.random.SeedSequence(seed, spawn_key=(index,))
    return [np.random.default_rng(s) for s in root.spawn(3)]


def run_realization(cfg: SimConfig, index: int) -> Realization:
    """Simulate one realization; its random streams depend only on ``(cfg.seed, index)``."""
    g_arr, g_route, g_serv = _rngs(cfg.seed, index)
    N, d, L = cfg.N, cfg.d, cfg.ell_max
    inter = _Stream(lambda n: g_arr.exponential(1.0 / (cfg.lam * N), n))
    service = _Stream(lambda n: np.asarray(cfg.dist.sample(g_serv, n), dtype=float))
    if cfg.replace:
        picks = _Stream(lambda n: g_route.integers(0, N, n))
    else:
        picks = None
    ties = _Stream(lambda n: g_route.random(n))

    q = [0] * N
    count = [0] * (L + 2)       # count[l] = number of queues with length >= l, l <= L+1
    events = []                 # (time, seq, server)
    seq = 0
    initial_jobs = 0
    if cfg.initial is Initial.ONE_JOB:
        for k in range(N):
            q[k] = 1
            events.append((service.next(), seq, k))
            seq += 1
        heapq.heapify(events)
        count[1] = N
        initial_jobs = N

    grid = cfg.times()
    tails = np.empty((grid.size, L))
    n_arr = n_dep = 0
    conserved = True
    gi = 0
    t_arrival = inter.next()
    while gi < grid.size:
        t_dep = events[0][0] if events else math.inf
        t_next = min(t_arrival, t_dep)
        while gi < grid.size and grid[gi] < t_next:
            tails[gi] = count[1:L + 1]
            if initial_jobs + n_arr != n_dep + sum(q):
                conserved = False
            gi += 1
        if gi >= grid.size:
            break
        if t_arrival <= t_dep:
            t = t_arrival
            if picks is not None:
                chosen = [picks.next() for _ in range(d)]
            else:
                chosen = g_route.choice(N, d, replace=False).tolist()
            best = min(q[k] for k in chosen)
            cands = sorted({k for k in chosen if q[k] == best})
            k = cands[int(ties.next() * len(cands))] if len(cands) > 1 else cands[0]
            q[k] += 1
            if q[k] <= L + 1:
                count[q[k]] += 1
            if q[k] == 1:
                heapq.heappush(events, (t + service.next(), seq, k))
                seq += 1
            n_arr += 1
            t_arrival = t + inter.next()
        else:
            t, _, k = heapq.heappop(events)
            if q[k] <= L + 1:
                count[q[k]] -= 1
            q[k] -= 1
            n_dep += 1
            if q[k] > 0:
                heapq.heappush(events, (t + service.next(), seq, k))
                seq += 1
    return Realization(tails / N, n_arr, n_dep, sum(q), conserved)


def _tails_only(args):
    cfg, index = args
    r = run_realization(cfg, index)
    if not r.conserved:
        raise RuntimeError(f"realization {index}: job conservation violated")
    return r.tails


@dataclass
class SimResult:
    config: SimConfig
    times: np.ndarray
    tail_fraction: np.ndarray      # (times, ell_max)
    stderr: np.ndarray             # (times, ell_max)
    samples: np.ndarray = field(repr=False)   # (realizations, times, ell_max)

    def window_mean(self, lo: float, hi: float):
        """Per-level mean over the window and its standard error across realizations."""
        mask = (self.times >= lo - 1e-12) & (self.times <= hi + 1e-12)
        if not mask.any():
            raise ValueError(f"window [{lo}, {hi}] contains no sample times")
        per_run = self.samples[:, mask, :].mean(axis=1)
        mean = per_run.mean(axis=0)
        n = per_run.shape[0]
        se = per_run.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
        return mean, se

    def to_csv(self) -> str:
        lines = ["# " + json.dumps(self.config.as_dict(), sort_keys=True),
                 "t,ell,mean_tail,stderr"]
        for i, t in enumerate(self.times):
            for ell in range(1, self.tail_fraction.shape[1] + 1):
                lines.append(f"{float(t)!r},{ell},{float(self.tail_fraction[i, ell - 1])!r},"
                             f"{float(self.stderr[i, ell - 1])!r}")
        return "\n".join(lines) + "\n"


def run(cfg: SimConfig, jobs: int = 1) -> SimResult:
    """Run all realizations; the result does not depend on ``jobs``."""
    work = [(cfg, i) for i in range(cfg.realizations)]
    if jobs > 1 and cfg.realizations > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_tails_only, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        runs = [_tails_only(w) for w in work]
    samples = np.stack(runs)
    mean = samples.mean(axis=0)
    n = samples.shape[0]
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return SimResult(cfg, cfg.times(), mean, se, samples)


@dataclass
class Comparison:
    window: tuple[float, float]
    ell: list[int]
    simulated: list[float]
    stderr: list[float]
    s_star: list[float]

    @property
    def gap(self) -> list[float]:
        return [m - s for m, s in zip(self.simulated, self.s_star)]

    @property
    def gap_se(self) -> list[float]:
        out = []
        for g, se in zip(self.gap, self.stderr):
            out.append(g / se if se > 0 else (0.0 if g == 0 else math.copysign(math.inf, g)))
        return out

    def within(self, ell: int, n_se: float = 3.0, floor: float = 0.01) -> bool:
        i = self.ell.index(ell)
        return abs(self.gap[i]) <= max(n_se * self.stderr[i], floor)

    def to_csv(self) -> str:
        lines = [f"# window={self.window[0]!r},{self.window[1]!r}",
                 "ell,sim_mean,stderr,s_star,gap,gap_se"]
        for row in zip(self.ell, self.simulated, self.stderr, self.s_star, self.gap, self.gap_se):
            lines.append(f"{row[0]}," + ",".join(repr(float(v)) for v in row[1:]))
        return "\n".join(lines) + "\n"


def compare(result: SimResult, state: InvariantState,
            window: tuple[float, float] | None = None) -> Comparison:
    """Late-window simulated tails against ``s_l`` (default window: last third)."""
    cfg = result.config
    if (not math.isclose(cfg.lam, state.lam, rel_tol=0, abs_tol=1e-15) or cfg.d != state.d
            or cfg.dist != state.dist):
        raise ComparisonError(
            f"simulation (lambda={cfg.lam}, d={cfg.d}, dist={cfg.dist.spec()}) does not match "
            f"state (lambda={state.lam}, d={state.d}, dist={state.dist.spec()})")
    if window is None:
        window = (2.0 * cfg.horizon / 3.0, cfg.horizon)
    mean, se = result.window_mean(*window)
    ells = list(range(1, cfg.ell_max + 1))
    return Comparison(tuple(window), ells, [float(v) for v in mean], [float(v) for v in se],
                      [state.s(ell) for ell in ells])
