"""Radial interaction kernels on the periodic box.

Every kernel is ``amplitude * profile(|r|)`` with the analytic profiles
normalised to unit mass on R^d, so ``amplitude`` is the infinite-volume
mass.  On the torus a kernel is evaluated at the minimum-image displacement;
its mass there (``torus_mass``) is what the kinetic equation and the
simulator use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, special

from .config import Box

PROFILES = ("gaussian", "tophat", "exponential", "table")
SCALINGS = ("fixed", "eps")


@dataclass(frozen=True)
class KernelDecl:
    name: str
    profile: str
    param: float = 1.0
    amplitude: float = 1.0
    scaling: str = "fixed"
    table_r: Optional[tuple] = field(default=None, repr=False)
    table_v: Optional[tuple] = field(default=None, repr=False)
    source: Optional[str] = None

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown kernel profile {self.profile!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown kernel scaling {self.scaling!r}")
        if not math.isfinite(self.amplitude):
            raise ValueError(f"kernel {self.name}: amplitude must be finite")
        if self.profile == "table":
            if self.table_r is None or self.table_v is None:
                raise ValueError(f"kernel {self.name}: table profile needs samples")
            r = np.asarray(self.table_r)
            if r[0] != 0.0 or np.any(np.diff(r) <= 0):
                raise ValueError(f"kernel {self.name}: table radii must start at 0 and increase")
        elif not self.param > 0:
            raise ValueError(f"kernel {self.name}: profile parameter must be positive")

    @classmethod
    def from_table_file(cls, name: str, path: str | Path, **kw) -> "KernelDecl":
        """Read a two-column radial profile (r, value); '#' starts a comment."""
        data = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"table {path}: expected two columns (r, value)")
        return cls(name, "table", 0.0, table_r=tuple(data[:, 0]), table_v=tuple(data[:, 1]),
                   source=str(path), **kw)

    def with_amplitude(self, amplitude: float) -> "KernelDecl":
        return replace(self, amplitude=amplitude)

    @property
    def feature_length(self) -> float:
        """Smallest length scale the kernel resolves."""
        if self.profile == "gaussian":
            return self.param
        if self.profile == "tophat":
            return self.param
        if self.profile == "exponential":
            return 1.0 / self.param
        return float(np.min(np.diff(self.table_r))) * 2.0

    def profile_values(self, r, d: int):
        r = np.asarray(r, dtype=float)
        p = self.param
        if self.profile == "gaussian":
            return np.exp(-0.5 * (r / p) ** 2) / (2.0 * math.pi * p * p) ** (d / 2)
        if self.profile == "tophat":
            vol = 2.0 * p if d == 1 else math.pi * p * p
            return np.where(r <= p, 1.0 / vol, 0.0)
        if self.profile == "exponential":
            norm = p / 2.0 if d == 1 else p * p / (2.0 * math.pi)
            return norm * np.exp(-p * r)
        tr = np.asarray(self.table_r)
        return np.interp(r, tr, np.asarray(self.table_v), right=0.0)

    def radial(self, r, d: int):
        return self.amplitude * self.profile_values(r, d)

    def evaluate(self, disp, box: Box):
        """Kernel at displacement(s) ``disp`` of shape (..., d), minimum image."""
        disp = box.min_image(disp)
        return self.radial(np.sqrt(np.sum(disp * disp, axis=-1)), box.d)

    def max_value(self, d: int) -> float:
        if self.profile == "table":
            return self.amplitude * float(np.max(self.table_v))
        return float(self.radial(0.0, d))

    def check_box(self, box: Box) -> None:
        if self.profile == "tophat" and self.param > box.L / 2:
            raise ValueError(f"kernel {self.name}: tophat radius exceeds half the box")
        if self.profile == "table" and self.table_r[-1] > box.L / 2 and box.d == 1:
            raise ValueError(f"kernel {self.name}: table extends beyond half the box")

    def unit_torus_mass(self, box: Box) -> float:
        """Mass of the minimum-image profile over one periodic cell."""
        half = box.L / 2
        d = box.d
        if self.profile == "gaussian":
            return special.erf(half / (math.sqrt(2.0) * self.param)) ** d
        if self.profile == "tophat":
            self.check_box(box)
            return 1.0
        if self.profile == "exponential" and d == 1:
            return -math.expm1(-self.param * half)
        if d == 1:
            val, _ = integrate.quad(lambda r: float(self.profile_values(r, 1)), 0.0, half,
                                    limit=200, points=list(self.table_r[1:-1])[:50] or None)
            return 2.0 * val
        val, _ = integrate.dblquad(
            lambda y, x: float(self.profile_values(math.hypot(x, y), 2)),
            0.0, half, 0.0, half, epsabs=1e-13, epsrel=1e-11)
        return 4.0 * val

    def torus_mass(self, box: Box) -> float:
        return self.amplitude * self.unit_torus_mass(box)

    def sample_displacement(self, rng: np.random.Generator, box: Box) -> np.ndarray:
        """Draw from the normalised minimum-image kernel (length-d vector).

        Proposals falling outside the periodic cell around the origin are
        redrawn, so the law matches ``evaluate`` exactly.
        """
        half = box.L / 2
        d = box.d
        while True:
            if self.profile == "gaussian":
                v = rng.normal(0.0, self.param, size=d)
            elif self.profile == "tophat":
                if d == 1:
                    v = rng.uniform(-self.param, self.param, size=1)
                else:
                    r = self.param * math.sqrt(rng.random())
                    th = 2.0 * math.pi * rng.random()
                    v = np.array([r * math.cos(th), r * math.sin(th)])
            elif self.profile == "exponential":
                if d == 1:
                    v = rng.laplace(0.0, 1.0 / self.param, size=1)
                else:
                    r = rng.gamma(2.0, 1.0 / self.param)
                    th = 2.0 * math.pi * rng.random()
                    v = np.array([r * math.cos(th), r * math.sin(th)])
            else:
                v = self._sample_table(rng, d)
            if np.all(np.abs(v) <= half):
                return v

    def _sample_table(self, rng, d):
        rr = np.linspace(0.0, self.table_r[-1], 4097)
        w = self.profile_values(rr, d) * (rr ** (d - 1) if d > 1 else 1.0)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(rr))])
        r = float(np.interp(rng.random() * cdf[-1], cdf, rr))
        if d == 1:
            return np.array([r if rng.random() < 0.5 else -r])
        th = 2.0 * math.pi * rng.random()
        return np.array([r * math.cos(th), r * math.sin(th)])

    def to_json(self) -> dict:
        out = {"name": self.name, "profile": self.profile, "amplitude": self.amplitude,
               "scaling": self.scaling}
        if self.profile == "table":
            out["source"] = self.source
        else:
            out["param"] = self.param
        return out
