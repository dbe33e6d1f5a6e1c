"""Replicated simulation runs from Poisson initial states."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import Box, FiniteConfiguration
from ..dsl.ast import GeneratorSpec
from ..dsl.scaling import scale
from ..kinetic import DensityField
from .engine import Simulator
from .model import compile_model

MAX_EXPECTED_INITIAL = 1e6


@dataclass(frozen=True)
class CosineProfile:
    """rho0(x) = base + amp * cos(2 pi mode x_1 / L)."""

    base: float
    amp: float
    mode: int
    L: float

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.base + self.amp * np.cos(2.0 * math.pi * self.mode * pts[:, 0] / self.L)

    def cdf_1d(self, x):
        """Normalised CDF of the profile on [0, L) (d = 1)."""
        x = np.asarray(x, dtype=float)
        k = 2.0 * math.pi * self.mode / self.L
        prim = self.base * x + (self.amp / k) * np.sin(k * x) if self.mode else (self.base + self.amp) * x
        total = self.base * self.L if self.mode else (self.base + self.amp) * self.L
        return prim / total

    def describe(self) -> str:
        return f"cos({self.base:g},{self.amp:g},{self.mode})"


def _cell_density(rho0, box: Box):
    """Piecewise-constant cell values and the cell side for sampling."""
    if isinstance(rho0, DensityField):
        if rho0.grid.d != box.d or rho0.grid.L != box.L:
            raise ValueError("initial density grid does not match the box")
        return rho0.values.ravel(), rho0.grid.h, rho0.grid.n
    n = 4096 if box.d == 1 else 256
    h = box.L / n
    ax = (np.arange(n) + 0.5) * h
    if box.d == 1:
        pts = ax[:, None]
    else:
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return np.asarray(rho0(pts), dtype=float), h, n


def sample_poisson_initial(rho0, eps: float, box: Box, seed) -> FiniteConfiguration:
    """Poisson configuration with intensity rho0 / eps.

    ``rho0`` is a number, a ``DensityField`` or a function of an (m, d)
    array of points.  Non-constant densities are sampled by choosing a cell
    of the piecewise-constant density (inverse CDF over cells) and a uniform
    point inside it.  ``seed`` may be an integer or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return FiniteConfiguration.from_array(_sample_points(rho0, eps, box, rng))


def _sample_points(rho0, eps, box, rng) -> np.ndarray:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if np.isscalar(rho0):
        c = float(rho0)
        if c < 0:
            raise ValueError("initial density must be nonnegative")
        mean = c * box.volume / eps
        _guard(mean)
        n = rng.poisson(mean)
        return rng.random((n, box.d)) * box.L
    vals, h, n_side = _cell_density(rho0, box)
    if np.any(vals < 0):
        raise ValueError("initial density must be nonnegative")
    total = float(np.sum(vals)) * h ** box.d
    mean = total / eps
    _guard(mean)
    n = rng.poisson(mean)
    if n == 0:
        return np.zeros((0, box.d))
    cdf = np.cumsum(vals)
    cells = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    cells = np.minimum(cells, len(vals) - 1)
    if box.d == 1:
        corner = cells[:, None] * h
    else:
        corner = np.stack([cells // n_side, cells % n_side], axis=1) * h
    return box.wrap(corner + rng.random((n, box.d)) * h)


def _guard(mean: float) -> None:
    if mean > MAX_EXPECTED_INITIAL:
        raise ValueError(f"expected initial particle count {mean:.3g} exceeds {MAX_EXPECTED_INITIAL:g}")


@dataclass
class SimPlan:
    spec: GeneratorSpec
    eps: float
    box: Box
    rho0: object
    t_end: float
    snapshot_times: Sequence[float]
    replicas: int
    base_seed: int = 0
    max_particles: int = 100_000

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        times = sorted(float(t) for t in self.snapshot_times)
        if not times or times[0] < 0 or times[-1] > self.t_end:
            raise ValueError("snapshot times must lie in [0, t_end]")
        self.snapshot_times = tuple(times)
        if np.isscalar(self.rho0):
            expected = float(self.rho0) * self.box.volume / self.eps
        else:
            vals, h, _ = _cell_density(self.rho0, self.box)
            expected = float(np.sum(vals)) * h ** self.box.d / self.eps
        _guard(expected)

    def describe_rho0(self) -> str:
        if np.isscalar(self.rho0):
            return format(float(self.rho0), "g")
        if hasattr(self.rho0, "describe"):
            return self.rho0.describe()
        return "field"


@dataclass
class ReplicaResult:
    replica: int
    times: list
    configs: list                 # arrays (n, d), canonical order
    truncated_at: float | None = None
    events: int = 0
    rejected: int = 0


@dataclass
class EnsembleResult:
    plan: SimPlan
    replicas: list = field(default_factory=list)

    @property
    def truncated(self) -> list:
        return [(r.replica, r.truncated_at) for r in self.replicas if r.truncated_at is not None]

    def configs_at(self, t: float) -> list:
        """Snapshots at time t from every replica that reached it."""
        out = []
        for r in self.replicas:
            for s, c in zip(r.times, r.configs):
                if s == t:
                    out.append(c)
        return out

    def counts_at(self, t: float) -> np.ndarray:
        return np.array([len(c) for c in self.configs_at(t)], dtype=float)

    def records(self):
        for r in self.replicas:
            for s, c in zip(r.times, r.configs):
                yield r.replica, s, c


def _canonical(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points.copy()
    order = np.lexsort(points.T[::-1])
    return points[order].copy()


def run_replica(plan: SimPlan, replica: int) -> ReplicaResult:
    rng = np.random.default_rng(plan.base_seed + replica)
    scaled = scale(plan.spec, plan.eps)
    sim = Simulator(compile_model(scaled, plan.eps), plan.box)
    init = _sample_points(plan.rho0, plan.eps, plan.box, rng)
    state = sim.init_state(init, rng)
    res = ReplicaResult(replica, [], [])
    for s in plan.snapshot_times:
        while state.time < s:
            ev = sim.step(state, t_max=s)
            if ev is None:
                break
            res.events += 1
            if ev.kind == "rejected":
                res.rejected += 1
            if state.n > plan.max_particles:
                res.truncated_at = state.time
                return res
        res.times.append(s)
        res.configs.append(_canonical(state.points))
    return res


def _run_one(args):
    return run_replica(*args)


def run_ensemble(plan: SimPlan, threads: int = 1) -> EnsembleResult:
    """Simulate every replica; ``threads`` > 1 uses worker processes."""
    jobs = [(plan, r) for r in range(plan.replicas)]
    if threads > 1 and plan.replicas > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_run_one(j) for j in jobs]
    return EnsembleResult(plan, results)
