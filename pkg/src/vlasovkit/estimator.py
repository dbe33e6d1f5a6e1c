"""Renormalized observables of simulated ensembles and epsilon sweeps.

The one-point function is estimated by histogramming onto the solver grid
and multiplying by eps; the pair correlation g2 by distance-binned pair
counts over the ideal-gas expectation at the measured particle numbers.
Error bars come from resampling replicas.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import Box
from .kinetic import DensityField, Grid

BOOTSTRAP_RESAMPLES = 200
MIN_PAIRS_PER_BIN = 10


@dataclass
class K1Estimate(DensityField):
    stderr: np.ndarray | None = None
    replicas: int = 0


def _cell_counts(points: np.ndarray, grid: Grid) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, grid.d)
    idx = np.minimum((pts / grid.h).astype(int), grid.n - 1)
    if grid.d == 1:
        flat = idx[:, 0]
    else:
        flat = idx[:, 0] * grid.n + idx[:, 1]
    return np.bincount(flat, minlength=grid.n ** grid.d).astype(float)


def replica_counts(snapshots: Sequence, grid: Grid) -> np.ndarray:
    """Cell counts per snapshot, shape (replicas, cells)."""
    return np.array([_cell_counts(s, grid) for s in snapshots]).reshape(len(snapshots), -1)


def empirical_k1(snapshots: Sequence, eps: float, grid: Grid) -> K1Estimate:
    """eps * count / (cell volume * replicas), with per-cell standard errors."""
    if len(snapshots) == 0:
        raise ValueError("empty ensemble")
    counts = replica_counts(snapshots, grid)
    R = len(counts)
    scale = eps / grid.cell_volume
    mean = scale * counts.mean(axis=0)
    if R > 1:
        se = scale * counts.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        se = np.full(mean.shape, np.nan)
    return K1Estimate(mean, grid, stderr=se.reshape(grid.shape), replicas=R)


def l2_distance(a: DensityField, b: DensityField) -> float:
    """L2 distance on the torus, by the grid quadrature."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    diff = (a.values - b.values).ravel()
    return math.sqrt(math.fsum(diff * diff) * a.grid.cell_volume)


@dataclass
class CorrelationEstimate:
    k1: DensityField | None
    edges: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    flagged: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def sup_deviation(self) -> float:
        ok = ~self.flagged
        return float(np.max(np.abs(self.g2[ok] - 1.0))) if ok.any() else float("nan")


def _shell_volumes(edges: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return 2.0 * np.diff(edges)
    return math.pi * np.diff(edges ** 2)


def pair_histogram(points: np.ndarray, box: Box, edges: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, box.d)
    n = len(pts)
    if n < 2:
        return np.zeros(len(edges) - 1)
    i, j = np.triu_indices(n, k=1)
    disp = box.min_image(pts[i] - pts[j])
    r = np.sqrt(np.sum(disp * disp, axis=1))
    hist, _ = np.histogram(r, bins=edges)
    return hist.astype(float)


def _edges(bins, box: Box) -> np.ndarray:
    if np.isscalar(bins):
        return np.linspace(0.0, box.L / 2, int(bins) + 1)
    edges = np.asarray(bins, dtype=float)
    if edges[0] < 0 or edges[-1] > box.L / 2 + 1e-12 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must increase within [0, L/2]")
    return edges


def _g2_parts(snapshots, box, edges):
    hist = np.array([pair_histogram(s, box, edges) for s in snapshots])
    npairs = np.array([len(s) * (len(s) - 1) / 2.0 for s in snapshots])
    return hist, npairs


def _g2_from(hist_sum, pairs_sum, shell, volume):
    with np.errstate(invalid="ignore", divide="ignore"):
        return hist_sum / (pairs_sum * shell / volume)


def empirical_g2(snapshots: Sequence, eps: float, bins, box: Box, grid: Grid | None = None,
                 seed: int = 0, min_pairs: int = MIN_PAIRS_PER_BIN) -> CorrelationEstimate:
    """Radial pair correlation of homogeneous snapshots, bins covering (0, L/2]."""
    if len(snapshots) == 0:
        raise ValueError("empty ensemble")
    edges = _edges(bins, box)
    shell = _shell_volumes(edges, box.d)
    hist, npairs = _g2_parts(snapshots, box, edges)
    counts = hist.sum(axis=0)
    g2 = _g2_from(counts, npairs.sum(), shell, box.volume)
    boot = _bootstrap_weights(len(snapshots), seed)
    bg = _g2_from(boot @ hist, (boot @ npairs)[:, None], shell[None, :], box.volume)
    stderr = np.std(bg, axis=0, ddof=1) if len(snapshots) > 1 else np.full(len(g2), np.nan)
    flagged = counts < min_pairs
    k1 = empirical_k1(snapshots, eps, grid) if grid is not None else None
    return CorrelationEstimate(k1, edges, g2, stderr, counts, flagged)


def _bootstrap_weights(R: int, seed: int, resamples: int = BOOTSTRAP_RESAMPLES) -> np.ndarray:
    """Multiplicities of each replica in every bootstrap resample, shape (resamples, R)."""
    rng = np.random.default_rng(seed)
    return rng.multinomial(R, np.full(R, 1.0 / R), size=resamples).astype(float)


def bootstrap_l2(snapshots: Sequence, eps: float, target: DensityField, seed: int = 0) -> tuple:
    """L2 distance of the renormalized histogram to ``target`` and its bootstrap error."""
    grid = target.grid
    counts = replica_counts(snapshots, grid)
    R = len(counts)
    scale = eps / grid.cell_volume
    tv = target.values.ravel()
    dist = math.sqrt(float(np.sum((scale * counts.mean(axis=0) - tv) ** 2)) * grid.cell_volume)
    W = _bootstrap_weights(R, seed)
    means = scale * (W @ counts) / R
    boot = np.sqrt(np.sum((means - tv[None, :]) ** 2, axis=1) * grid.cell_volume)
    return dist, float(np.std(boot, ddof=1))


def bootstrap_k1(snapshots: Sequence, eps: float, grid: Grid, seed: int = 0) -> K1Estimate:
    """``empirical_k1`` with per-cell errors from resampling replicas."""
    counts = replica_counts(snapshots, grid)
    R = len(counts)
    if R == 0:
        raise ValueError("empty ensemble")
    scale = eps / grid.cell_volume
    means = scale * (_bootstrap_weights(R, seed) @ counts) / R
    se = np.std(means, axis=0, ddof=1)
    return K1Estimate(scale * counts.mean(axis=0), grid, stderr=se.reshape(grid.shape), replicas=R)


def bootstrap_sup_g2(snapshots: Sequence, box: Box, bins, seed: int = 0,
                     min_pairs: int = MIN_PAIRS_PER_BIN) -> tuple:
    """sup |g2 - 1| over well-populated bins and its bootstrap error."""
    edges = _edges(bins, box)
    shell = _shell_volumes(edges, box.d)
    hist, npairs = _g2_parts(snapshots, box, edges)
    ok = hist.sum(axis=0) >= min_pairs
    if not ok.any():
        return float("nan"), float("nan")
    g2 = _g2_from(hist.sum(axis=0), npairs.sum(), shell, box.volume)
    sup = float(np.max(np.abs(g2[ok] - 1.0)))
    W = _bootstrap_weights(len(snapshots), seed)
    bg = _g2_from(W @ hist, (W @ npairs)[:, None], shell[None, :], box.volume)
    bsup = np.max(np.abs(bg[:, ok] - 1.0), axis=1)
    return sup, float(np.std(bsup, ddof=1))


# -- epsilon sweeps ------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    eps: float
    l2_k1: float
    l2_err: float
    sup_g2m1: float
    g2_err: float
    replicas: int
    truncated: int = 0


@dataclass
class ConvergenceReport:
    model: str
    t: float
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = [r.eps for r in self.rows]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps values must be strictly decreasing")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def decreasing_beyond_1sigma(self, value: str, err: str) -> list:
        """For each consecutive pair: is the drop larger than the combined error?"""
        v, e = self.column(value), self.column(err)
        return [bool(v[i] - v[i + 1] > math.hypot(e[i], e[i + 1])) for i in range(len(v) - 1)]

    def to_csv(self) -> str:
        lines = ["eps,l2_k1,l2_err,sup_g2m1,g2_err,replicas"]
        for r in self.rows:
            vals = [r.eps, r.l2_k1, r.l2_err, r.sup_g2m1, r.g2_err]
            lines.append(",".join(format(v, ".17g") for v in vals) + f",{r.replicas}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        rows = [{k: clean(v) for k, v in r.__dict__.items()} for r in self.rows]
        return json.dumps({"model": self.model, "t": self.t, "rows": rows, "meta": self.meta},
                          sort_keys=True, indent=2) + "\n"

    def write(self, out_dir: str | Path, stem: str = "convergence") -> None:
        out = Path(out_dir)
        (out / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / f"{stem}.json").write_text(self.to_json(), encoding="utf-8")


def convergence_sweep(model: str, eps_list: Sequence[float], plan_template, solver_solution: DensityField,
                      bins=32, g2: bool | None = None, threads: int = 1) -> ConvergenceReport:
    """Run the ensemble at every eps and compare it with the kinetic solution at t_end."""
    from .sim.ensemble import run_ensemble

    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    t = plan_template.t_end
    if g2 is None:
        g2 = np.isscalar(plan_template.rho0)
    box = plan_template.box
    if solver_solution.grid.L != box.L or solver_solution.grid.d != box.d:
        raise ValueError("solver grid does not match the simulation box")
    report = ConvergenceReport(model, t, meta={"replicas": plan_template.replicas,
                                               "seed": plan_template.base_seed,
                                               "grid": solver_solution.grid.to_json(),
                                               "bins": bins if np.isscalar(bins) else list(bins),
                                               "bootstrap_resamples": BOOTSTRAP_RESAMPLES})
    rows = []
    for eps in eps_list:
        plan = replace(plan_template, eps=eps, snapshot_times=tuple(sorted(set(plan_template.snapshot_times) | {t})))
        res = run_ensemble(plan, threads=threads)
        snaps = res.configs_at(t)
        if not snaps:
            rows.append(ConvergenceRow(eps, math.nan, math.nan, math.nan, math.nan, 0, len(res.truncated)))
            continue
        seed = plan.base_seed
        l2, l2e = bootstrap_l2(snaps, eps, solver_solution, seed=seed)
        if g2:
            sg, sge = bootstrap_sup_g2(snaps, box, bins, seed=seed)
        else:
            sg, sge = math.nan, math.nan
        rows.append(ConvergenceRow(eps, l2, l2e, sg, sge, len(snaps), len(res.truncated)))
    report.rows = rows
    return report
