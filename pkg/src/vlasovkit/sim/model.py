"""Compile a scaled generator into simulation channels.

Each monomial of a rate becomes one channel:

* death: ``coef * F(x_i)`` for every particle i, where F is a product of
  interaction sums and exponentials anchored at the particle;
* birth without a sum: uniform proposals on the box, thinned by
  exponentials anchored at the new point;
* birth with a sum over parents: pick parent j with weight ``F(x_j)``,
  displace by the normalised link kernel, thin by exponentials at the new
  point;
* hop: pick the departing particle with weight ``F(x_i)``, displace by the
  normalised jump kernel, thin by the arrival factors.

All anchored quantities reduce to per-particle sums S_k[i] = sum_{j != i}
k(x_i - x_j), maintained incrementally by the engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dsl.ast import GeneratorSpec, Monomial, SumFactor
from ..dsl.scaling import analyze_scaling


class UnsupportedRate(ValueError):
    """A rate the simulator cannot sample exactly."""


@dataclass(frozen=True)
class Anchored:
    """A factor at a particle: an interaction sum, or exp(weight * sum).

    ``self_term`` adds k(0) when the domain of the sum includes the anchor.
    """

    kind: str  # "sum" | "exp"
    kernel: str
    weight: float = 1.0
    self_term: bool = False


@dataclass(frozen=True)
class Channel:
    part: str
    coef: float
    factors: tuple = ()            # death: at the particle; birth/hop: at the parent / departure point
    link: str | None = None        # birth parent kernel or hop jump kernel
    located: tuple = ()            # factors evaluated at the new / arrival point (thinned)


@dataclass
class CompiledModel:
    channels: list
    kernels: dict                  # effective (scaled) kernels by name
    anchored_kernels: list         # kernels whose per-particle sums are tracked

    def by_part(self, part: str) -> list:
        return [c for c in self.channels if c.part == part]


def _prefactor(spec: GeneratorSpec, m: Monomial, eps: float) -> float:
    v = m.coef
    for c in m.consts:
        v *= spec.const_value(c, eps)
    return v


def _exp_factors(spec, m: Monomial, anchor: str, eps: float, what: str) -> list:
    out = []
    for e in m.exps:
        for t in e.terms:
            if t.anchor != anchor:
                continue
            w = t.coef
            for c in t.consts:
                w *= spec.const_value(c, eps)
            out.append(Anchored("exp", t.kernel, w, self_term=anchor not in t.excludes and what == "sum-var"))
    return out


def _sum_factor(s: SumFactor, what: str) -> Anchored:
    """A sum anchored at a point, with no further structure in its body."""
    body = s.body
    if body.sums or body.exps or len(body.kernels) != 1:
        raise UnsupportedRate("interaction sums at a particle must be plain kernel sums")
    anchor = s.anchor()
    return Anchored("sum", s.link().kernel, 1.0, self_term=anchor not in s.excludes and what == "sum-var")


def _at(spec, m: Monomial, anchor: str, eps: float, what: str) -> list:
    """Factors of ``m`` anchored at ``anchor`` (exps and plain sums)."""
    out = _exp_factors(spec, m, anchor, eps, what)
    for s in m.sums:
        if s.anchor() == anchor:
            out.append(_sum_factor(s, what))
    return out


def compile_model(spec: GeneratorSpec, eps: float) -> CompiledModel:
    analyze_scaling(spec)
    channels = []
    for m in spec.monomials("death"):
        if any(s.body.sums or s.body.exps for s in m.sums):
            raise UnsupportedRate("death rates with nested interaction sums are not simulated")
        channels.append(Channel("death", _prefactor(spec, m, eps), tuple(_at(spec, m, "x", eps, "base"))))
    for m in spec.monomials("birth"):
        c = _prefactor(spec, m, eps)
        located = tuple(_exp_factors(spec, m, "x", eps, "base"))
        if not m.sums:
            channels.append(Channel("birth", c, located=located))
            continue
        (s,) = m.sums
        if s.anchor() != "x":
            raise UnsupportedRate("birth sums must be tied to the new point")
        parent = Monomial(kernels=s.body.kernels[1:], exps=s.body.exps, sums=s.body.sums)
        pf = _at(spec, parent, s.var, eps, "sum-var")
        channels.append(Channel("birth", c, tuple(pf), link=s.link().kernel, located=located))
    for m in spec.monomials("hop"):
        c = _prefactor(spec, m, eps)
        dep = _at(spec, m, "x", eps, "base")
        arr = _at(spec, m, "y", eps, "base")
        channels.append(Channel("hop", c, tuple(dep), link=m.kernels[0].kernel, located=tuple(arr)))

    kernels = {name: spec.kernel(name, eps) for name in spec.kernels}
    for ch in channels:
        for f in ch.located:
            if f.kind == "exp" and f.weight > 0:
                raise UnsupportedRate(
                    f"exp(+sum {f.kernel}) at the new point has no finite thinning bound")
        for f in ch.located + ch.factors:
            if kernels[f.kernel].amplitude < 0:
                raise UnsupportedRate(f"kernel {f.kernel} is negative; thinning bounds need nonnegative kernels")
        if ch.link and kernels[ch.link].amplitude < 0:
            raise UnsupportedRate(f"kernel {ch.link} is negative")
        if ch.coef < 0:
            raise UnsupportedRate(f"negative {ch.part} term")
    anchored = sorted({f.kernel for ch in channels for f in ch.factors})
    return CompiledModel(channels, kernels, anchored)


def factor_values(factors, sums: dict, kernels: dict, d: int) -> np.ndarray | float:
    """Product of anchored factors for all particles, from tracked sums."""
    out = 1.0
    for f in factors:
        s = sums[f.kernel]
        if f.self_term:
            s = s + float(kernels[f.kernel].radial(0.0, d))
        if f.kind == "sum":
            out = out * s
        else:
            out = out * np.exp(f.weight * s)
    return out
