"""Periodic-grid integration of kinetic equations d(rho)/dt = v(rho).

Convolutions go through the FFT with kernels sampled at minimum-image grid
displacements and rescaled so that the grid quadrature reproduces the torus
mass exactly; homogeneous fixed points are then exact at grid level.
Time stepping is classical fixed-step RK4.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import Box
from .fieldexpr import FieldExpr
from .kernels import KernelDecl

NEGATIVITY_TOL = 1e-10
BLOWUP = 1e6
HALVING_TOL = 1e-6


class SolverFault(ArithmeticError):
    """Numerical failure: negativity, blow-up, instability or non-finite values."""


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if self.d == 2 and self.n > 256:
            raise ValueError("two-dimensional grids are limited to n <= 256")
        if not self.L > 0:
            raise ValueError("box side must be positive")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def box(self) -> Box:
        return Box(self.d, self.L)

    def axis(self) -> np.ndarray:
        """Cell centres along one axis."""
        return (np.arange(self.n) + 0.5) * self.h

    def points(self) -> np.ndarray:
        """Cell centres, shape (n**d, d), in C order."""
        ax = self.axis()
        if self.d == 1:
            return ax[:, None]
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def displacements(self) -> np.ndarray:
        """Minimum-image displacement of every grid offset, shape (*shape, d)."""
        off = np.arange(self.n) * self.h
        off = off - self.L * np.round(off / self.L)
        if self.d == 1:
            return off[:, None]
        X, Y = np.meshgrid(off, off, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def check_kernel(self, k: KernelDecl) -> None:
        k.check_box(self.box)
        if not self.h < k.feature_length / 2:
            raise ValueError(f"grid spacing {self.h:g} is not below half the feature length "
                             f"{k.feature_length:g} of kernel {k.name}")

    def to_json(self) -> dict:
        return {"d": self.d, "L": self.L, "n": self.n}


@dataclass
class DensityField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "DensityField":
        return cls(np.full(grid.shape, float(c)), grid)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "DensityField":
        return cls(np.asarray(f(grid.points()), dtype=float), grid)

    def integral(self) -> float:
        return math.fsum(self.values.ravel()) * self.grid.cell_volume

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy(), self.grid)


class GridContext:
    """Evaluation context for ``FieldExpr`` on a grid, caching kernel transforms."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._fft: dict = {}
        self._mass: dict = {}
        self.rho = None
        self._axes = tuple(range(grid.d))

    def kernel_samples(self, k: KernelDecl) -> np.ndarray:
        g = self.grid
        samples = k.radial(np.sqrt(np.sum(g.displacements() ** 2, axis=-1)), g.d)
        total = float(np.sum(samples)) * g.cell_volume
        target = self.mass(k)
        if total > 0:
            samples = samples * (target / total)
        return samples

    def kernel_fft(self, k: KernelDecl) -> np.ndarray:
        if k not in self._fft:
            self.grid.check_kernel(k)
            self._fft[k] = np.fft.rfftn(self.kernel_samples(k)) * self.grid.cell_volume
        return self._fft[k]

    def mass(self, k: KernelDecl) -> float:
        if k not in self._mass:
            self._mass[k] = k.torus_mass(self.grid.box)
        return self._mass[k]

    def conv(self, k: KernelDecl, values) -> np.ndarray:
        values = np.broadcast_to(np.asarray(values, dtype=float), self.grid.shape)
        return np.fft.irfftn(self.kernel_fft(k) * np.fft.rfftn(values), s=self.grid.shape, axes=self._axes)

    def evaluate(self, expr: FieldExpr, rho: np.ndarray) -> np.ndarray:
        self.rho = rho
        out = expr.evaluate(self)
        return np.broadcast_to(np.asarray(out, dtype=float), self.grid.shape).copy()


def eval_rhs(expr: FieldExpr, rho: DensityField, ctx: GridContext | None = None) -> DensityField:
    ctx = ctx or GridContext(rho.grid)
    try:
        return DensityField(ctx.evaluate(expr, rho.values), rho.grid)
    except ArithmeticError as exc:
        raise SolverFault(str(exc)) from exc


@dataclass
class SolveReport:
    times: list
    fields: list
    steps: int = 0
    max_rhs: float = 0.0
    masses: list = field(default_factory=list)
    dt: float = 0.0
    initial_mass: float = 0.0

    def at(self, t: float) -> DensityField:
        for s, f in zip(self.times, self.fields):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return f
        raise KeyError(f"no snapshot at t={t}")

    def mass_drift(self) -> float:
        m0 = self.initial_mass
        return max(abs(m - m0) for m in self.masses) / abs(m0) if m0 else 0.0


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def _check_state(y, t):
    if not np.all(np.isfinite(y)):
        raise SolverFault(f"non-finite density at t={t:g}")
    lo = float(np.min(y))
    if lo < -NEGATIVITY_TOL:
        raise SolverFault(f"negative density {lo:.3g} at t={t:g}")
    hi = float(np.max(y))
    if hi > BLOWUP:
        raise SolverFault(f"density blow-up (sup {hi:.3g} > {BLOWUP:g}) at t={t:g}")


def integrate(expr: FieldExpr, rho0: DensityField, t_end: float,
              snapshot_times: Sequence[float] | None = None, dt: float = 1e-2) -> SolveReport:
    """RK4 from t=0 to ``t_end``, landing exactly on every snapshot time."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    times = sorted(set(float(t) for t in (snapshot_times or [])) | {float(t_end)})
    if times[0] < 0:
        raise ValueError("snapshot times must be nonnegative")
    grid = rho0.grid
    ctx = GridContext(grid)
    for k in expr.kernels().values():
        grid.check_kernel(k)
    report = SolveReport([], [], dt=dt)

    def f(y):
        try:
            v = ctx.evaluate(expr, y)
        except ArithmeticError as exc:
            raise SolverFault(str(exc)) from exc
        return v

    y = rho0.values.astype(float).copy()
    _check_state(y, 0.0)
    report.initial_mass = math.fsum(y.ravel()) * grid.cell_volume
    one, _ = _rk4(f, y, dt)
    half, _ = _rk4(f, y, dt / 2)
    two, _ = _rk4(f, half, dt / 2)
    gap = float(np.max(np.abs(one - two)))
    if not gap < HALVING_TOL:
        raise SolverFault(f"time step {dt:g} fails the halving test (difference {gap:.3g})")

    t = 0.0
    for target in times:
        span = target - t
        nsteps = max(0, math.ceil(span / dt - 1e-9))
        h = span / nsteps if nsteps else 0.0
        for i in range(nsteps):
            y, k1 = _rk4(f, y, h)
            report.max_rhs = max(report.max_rhs, float(np.max(np.abs(k1))))
            report.steps += 1
            _check_state(y, t + (i + 1) * h)
        t = target
        report.times.append(target)
        report.fields.append(DensityField(y.copy(), grid))
        report.masses.append(math.fsum(y.ravel()) * grid.cell_volume)
    return report


# -- closed-form references -------------------------------------------------------

REFERENCE_MODELS = ("surgailis", "contact", "free_kawasaki", "bdlp_homogeneous", "glauber_fixed_point")


def bisect_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = f(lo)
    if flo * f(hi) > 0:
        raise ValueError("root is not bracketed")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def glauber_fixed_point(z: float, phi_mass: float) -> float:
    """Root of rho = z exp(-<phi> rho)."""
    return bisect_root(lambda r: r - z * math.exp(-phi_mass * r), 0.0, z)


def reference_solution(model: str, rho0: DensityField, t: float, spec=None) -> DensityField:
    """Solution of a linear or homogeneous model computed without time stepping.

    ``spec`` supplies the parameters; it defaults to the built-in preset.
    """
    from .catalog import load_preset

    if model not in REFERENCE_MODELS:
        raise ValueError(f"no closed-form solution for {model!r}; available: {', '.join(REFERENCE_MODELS)}")
    preset = {"bdlp_homogeneous": "bdlp", "glauber_fixed_point": "glauber_plus"}.get(model, model)
    spec = spec or load_preset(preset)
    grid = rho0.grid
    ctx = GridContext(grid)
    c = {k: v.value for k, v in spec.consts.items()}
    r0 = rho0.values
    if model == "surgailis":
        m, s = c["m"], c["sigma"]
        return DensityField(s / m + (r0 - s / m) * math.exp(-m * t), grid)
    if model in ("contact", "free_kawasaki"):
        a = spec.kernels["a"]
        ahat = ctx.kernel_fft(a)
        if model == "contact":
            rate = c["lambda"] * ahat - c["m"]
        else:
            rate = ahat - ctx.mass(a)
        out = np.fft.irfftn(np.fft.rfftn(r0) * np.exp(rate * t), s=grid.shape, axes=tuple(range(grid.d)))
        return DensityField(out, grid)
    if model == "bdlp_homogeneous":
        if np.ptp(r0) > 0:
            raise ValueError("bdlp_homogeneous needs a constant initial density")
        p = float(r0.flat[0])
        r = c["lambda"] * ctx.mass(spec.kernels["aplus"]) - c["m"]
        am = ctx.mass(spec.kernels["aminus"])
        if r == 0:
            val = p / (1 + am * p * t)
        else:
            K = r / am
            g = math.expm1(r * t)
            val = K * p * (g + 1) / (K + p * g)
        return DensityField.constant(grid, val)
    z = c["z"]
    return DensityField.constant(grid, glauber_fixed_point(z, ctx.mass(spec.kernels["phi"])))


# -- I/O --------------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_field_csv(path: str | Path, rho: DensityField) -> None:
    g = rho.grid
    pts = g.points()
    vals = rho.values.ravel()
    cols = ["x", "rho"] if g.d == 1 else ["x", "y", "rho"]
    lines = [",".join(cols)]
    for p, v in zip(pts, vals):
        lines.append(",".join([_fmt(c) for c in p] + [_fmt(v)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_field_csv(path: str | Path, grid: Grid) -> DensityField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DensityField(data[:, -1], grid)


def write_field_json(path: str | Path, rho: DensityField, model: str, params: dict, t: float) -> None:
    meta = {"model": model, "params": params, "grid": rho.grid.to_json(), "t": t}
    Path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
