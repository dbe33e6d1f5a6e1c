"""Finite configurations on a periodic box and the K-transform machinery.

A finite configuration is a set of distinct points.  Functions on finite
configurations are combined by the K-transform (sum over subconfigurations)
and its inclusion-exclusion inverse.  ``DiscreteSpace`` turns integrals
against the Lebesgue-Poisson measure into exact finite sums, which is what
the identity checks in the test-suite and ``selftest`` rely on.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

MAX_SUBSET_CARDINALITY = 25
MAX_ORACLE_SITES = 16
MAX_MINLOS_SITES = 10


class SizeLimitError(ValueError):
    """Raised when an exponential enumeration would exceed its cap."""


@dataclass(frozen=True)
class Box:
    """The torus [0, L)^d."""

    d: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"box side must be positive, got {self.L}")

    @property
    def volume(self) -> float:
        return self.L**self.d

    def wrap(self, coords):
        r = np.mod(coords, self.L)
        return np.where(r >= self.L, 0.0, r)

    def min_image(self, disp):
        """Minimum-image representative of a displacement (componentwise)."""
        disp = np.asarray(disp, dtype=float)
        return disp - self.L * np.round(disp / self.L)

    def contains(self, point: Sequence[float]) -> bool:
        return len(point) == self.d and all(0.0 <= c < self.L for c in point)


Point = tuple  # tuple of floats, length d


def as_point(coords) -> Point:
    if np.isscalar(coords):
        return (float(coords),)
    return tuple(float(c) for c in coords)


class FiniteConfiguration:
    """A finite set of distinct points, stored in lexicographic order.

    Equality and hashing use the canonical order, so two configurations built
    from the same points in a different order compare equal.
    """

    __slots__ = ("_points",)

    def __init__(self, points: Iterable = ()):
        pts = tuple(sorted(as_point(p) for p in points))
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"configuration has a repeated point {a}")
        if pts and len({len(p) for p in pts}) != 1:
            raise ValueError("all points must have the same dimension")
        self._points = pts

    @classmethod
    def from_array(cls, arr) -> "FiniteConfiguration":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return cls(map(tuple, arr))

    @property
    def points(self) -> tuple:
        return self._points

    def as_array(self, d: Optional[int] = None) -> np.ndarray:
        if not self._points:
            return np.zeros((0, d or 1))
        return np.array(self._points, dtype=float)

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self) -> Iterator[Point]:
        return iter(self._points)

    def __contains__(self, p) -> bool:
        return as_point(p) in self._points

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteConfiguration) and self._points == other._points

    def __hash__(self) -> int:
        return hash(self._points)

    def __repr__(self) -> str:
        return f"FiniteConfiguration({list(self._points)!r})"

    def union(self, other: "FiniteConfiguration") -> "FiniteConfiguration":
        return FiniteConfiguration(self._points + other._points)

    def minus(self, other) -> "FiniteConfiguration":
        drop = set(other._points) if isinstance(other, FiniteConfiguration) else {as_point(other)}
        return FiniteConfiguration(p for p in self._points if p not in drop)

    def subsets(self) -> Iterator["FiniteConfiguration"]:
        """All subconfigurations, including the empty one and self."""
        for r in range(len(self._points) + 1):
            for combo in itertools.combinations(self._points, r):
                yield FiniteConfiguration(combo)


EMPTY = FiniteConfiguration()


@dataclass(frozen=True)
class ConfigFunction:
    """A real function on finite configurations.

    ``support_bound`` optionally declares that the function vanishes on
    configurations with more points.
    """

    evaluator: Callable[[FiniteConfiguration], float]
    support_bound: Optional[int] = None

    def __call__(self, eta: FiniteConfiguration) -> float:
        if self.support_bound is not None and len(eta) > self.support_bound:
            return 0.0
        return float(self.evaluator(eta))

    @classmethod
    def tabulated(cls, table: dict, default: float = 0.0) -> "ConfigFunction":
        return cls(lambda eta: table.get(eta, default))

    @classmethod
    def indicator(cls, cardinality: int, weight: Callable[[Point], float] | None = None):
        """Indicator of ``cardinality``-point configurations, optionally
        weighted by a product of ``weight`` over the points."""

        def ev(eta):
            if len(eta) != cardinality:
                return 0.0
            return lp_exponent(weight, eta) if weight is not None else 1.0

        return cls(ev, support_bound=cardinality)


def _check_cardinality(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise SizeLimitError(f"{what}: {n} points exceeds the limit of {cap}")


def k_transform(G: Callable[[FiniteConfiguration], float], gamma: FiniteConfiguration) -> float:
    """(KG)(gamma): the sum of G over every subconfiguration of gamma."""
    _check_cardinality(len(gamma), MAX_SUBSET_CARDINALITY, "k_transform")
    return math.fsum(G(eta) for eta in gamma.subsets())


def k_inverse(F: Callable[[FiniteConfiguration], float], eta: FiniteConfiguration) -> float:
    """(K^-1 F)(eta) by inclusion-exclusion over the subsets of eta."""
    _check_cardinality(len(eta), MAX_SUBSET_CARDINALITY, "k_inverse")
    n = len(eta)
    return math.fsum((-1) ** (n - len(xi)) * F(xi) for xi in eta.subsets())


def lp_exponent(f: Callable[[Point], float], eta: Iterable) -> float:
    """Product of f over the points of eta; 1 for the empty configuration."""
    out = 1.0
    for x in eta:
        out *= f(x)
    return out


@dataclass(frozen=True)
class DiscreteSpace:
    """Grid cells standing in for R^d in Lebesgue-Poisson integrals.

    An n-point stratum is charged only on n distinct cells, each with mass
    ``cell_volume``; the 1/n! of the measure cancels the ordering of tuples,
    so the integral is a plain sum over subsets of sites.
    """

    sites: tuple
    cell_volume: float

    def __post_init__(self):
        sites = tuple(as_point(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(set(sites)) != len(sites):
            raise ValueError("sites must be distinct")
        if not self.cell_volume > 0:
            raise ValueError("cell_volume must be positive")
        _check_cardinality(len(sites), MAX_ORACLE_SITES, "DiscreteSpace")

    @classmethod
    def grid(cls, box: Box, n: int) -> "DiscreteSpace":
        """n cell centres per side of ``box``."""
        h = box.L / n
        centres = (np.arange(n) + 0.5) * h
        if box.d == 1:
            sites = [(c,) for c in centres]
        else:
            sites = [(a, b) for a in centres for b in centres]
        return cls(tuple(sites), h**box.d)

    def configurations(self) -> Iterator[FiniteConfiguration]:
        return FiniteConfiguration(self.sites).subsets()


def lp_integral(G: Callable[[FiniteConfiguration], float], space: DiscreteSpace) -> float:
    """Exact discrete Lebesgue-Poisson integral of G over ``space``."""
    vol = space.cell_volume
    return math.fsum(G(eta) * vol ** len(eta) for eta in space.configurations())


def verify_minlos(
    H: Callable[[FiniteConfiguration, FiniteConfiguration, FiniteConfiguration], float],
    space: DiscreteSpace,
) -> tuple[float, float]:
    """Both sides of the Minlos identity on a discrete space.

    lhs = int sum_{xi subset eta} H(xi, eta - xi, eta) d lambda(eta)
    rhs = int int H(xi, eta, eta + xi) d lambda(xi) d lambda(eta),
    the double integral running over disjoint pairs of site subsets.
    """
    _check_cardinality(len(space.sites), MAX_MINLOS_SITES, "verify_minlos")
    vol = space.cell_volume
    lhs_triples, rhs_triples = _minlos_terms(space)
    lhs = math.fsum(vol ** len(eta) * H(xi, rest, eta) for xi, rest, eta in lhs_triples)
    rhs = math.fsum(vol ** len(eta) * H(xi, other, eta) for xi, other, eta in rhs_triples)
    return lhs, rhs


@functools.lru_cache(maxsize=8)
def _minlos_terms(space: DiscreteSpace):
    sites = space.sites
    n = len(sites)
    by_mask = [FiniteConfiguration(sites[i] for i in range(n) if mask >> i & 1) for mask in range(1 << n)]
    lhs = []
    for eta in range(1 << n):
        xi = eta
        while True:
            lhs.append((by_mask[xi], by_mask[eta ^ xi], by_mask[eta]))
            if xi == 0:
                break
            xi = (xi - 1) & eta
    # each site goes to xi, to eta, or to neither: enumerate disjoint mask pairs
    rhs = []
    for eta in range(1 << n):
        free = ((1 << n) - 1) ^ eta
        xi = free
        while True:
            rhs.append((by_mask[xi], by_mask[eta], by_mask[eta | xi]))
            if xi == 0:
                break
            xi = (xi - 1) & free
    return tuple(lhs), tuple(rhs)
