"""K^-1 coefficients of scaled rates and their epsilon -> 0 limits.

``k_coefficient`` is the numerical route: evaluate the rescaled rate on
every subconfiguration of xi and invert the K-transform.  ``vlasov_coefficient``
is the symbolic route: for a product-form monomial the limit of
eps^{-|xi|} K^-1[rate] at xi is a sum over injective assignments of the
summation variables to points of xi, each leftover point contributing the
sum of the exponent kernels it can reach.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..config import ConfigFunction, FiniteConfiguration, k_inverse
from .ast import GeneratorSpec, Monomial
from .scaling import _require_box, analyze_scaling, evaluate_rate, scale

MAX_XI = 20


def k_coefficient(spec: GeneratorSpec, part: str, x, xi: FiniteConfiguration, eps: float,
                  y=None) -> float:
    """D_x, B_x or C_{x,y} of the eps-scaled rate, evaluated at xi.

    The birth coefficient is that of eps times the effective birth rate,
    i.e. the rate with the birth part's 1/eps taken out.
    """
    if len(xi) > MAX_XI:
        raise ValueError(f"|xi| = {len(xi)} exceeds the limit of {MAX_XI}")
    scaled = scale(spec, eps)
    factor = eps if part == "birth" else 1.0

    def rate(eta):
        return factor * evaluate_rate(scaled, part, x, eta, y)

    return k_inverse(ConfigFunction(rate), xi)


@dataclass(frozen=True)
class VlasovCoefficient:
    """Limit coefficient D^V_x, B^V_x or C^V_{x,y} as a function of xi."""

    spec: GeneratorSpec
    part: str
    x: tuple
    y: tuple | None = None

    def __call__(self, xi: FiniteConfiguration) -> float:
        if len(xi) > 25:
            raise ValueError("|xi| exceeds the limit of 25")
        box = _require_box(self.spec)
        env = {"x": np.asarray(self.x, dtype=float)}
        if self.y is not None:
            env["y"] = np.asarray(self.y, dtype=float)
        pts = xi.as_array(box.d)
        return math.fsum(_limit_value(self.spec, box, m, env, pts) for m in self.spec.monomials(self.part))

    def describe(self) -> str:
        return " + ".join(describe_monomial(m) for m in self.spec.monomials(self.part)) or "0"


def _slots(m: Monomial):
    """Summation variables in nesting order with their bodies."""
    out = []
    for s in m.sums:
        out.append(s)
        out.extend(_slots(s.body))
    return out


def _kernels_and_exps(m: Monomial):
    ks = list(m.kernels)
    ts = [t for e in m.exps for t in e.terms]
    for s in m.sums:
        k2, t2 = _kernels_and_exps(s.body)
        ks.extend(k2)
        ts.extend(t2)
    return ks, ts


def _limit_value(spec, box, m: Monomial, env: dict, pts: np.ndarray) -> float:
    pref = m.coef
    for c in m.consts:
        pref *= spec.consts[c].value
    slots = _slots(m)
    kernels, exp_terms = _kernels_and_exps(m)
    n = len(pts)
    if len(slots) > n or (not exp_terms and len(slots) != n):
        return 0.0
    acc = []
    for assign in itertools.permutations(range(n), len(slots)):
        e = dict(env)
        for s, j in zip(slots, assign):
            e[s.var] = pts[j]
        val = pref
        for k in kernels:
            val *= float(spec.kernels[k.kernel].evaluate(e[k.left] - e[k.right], box))
        used = set(assign)
        for j in range(n):
            if j in used:
                continue
            contrib = 0.0
            for t in exp_terms:
                w = t.coef
                for c in t.consts:
                    w *= spec.consts[c].value
                contrib += w * float(spec.kernels[t.kernel].evaluate(e[t.anchor] - pts[j], box))
            val *= contrib
        acc.append(val)
    return math.fsum(acc)


def describe_monomial(m: Monomial) -> str:
    slots = _slots(m)
    kernels, exp_terms = _kernels_and_exps(m)
    head = [f"{m.coef:g}"] if m.coef != 1.0 else []
    head += list(m.consts)
    head += [f"{k.kernel}({k.left}-{k.right})" for k in kernels]
    if exp_terms:
        used = ",".join(s.var for s in slots)
        rest = "xi" + (f"\\{{{used}}}" if used else "")
        inner = "+".join(f"{'-' if t.coef < 0 else ''}{t.kernel}({t.anchor}-.)" for t in exp_terms)
        head.append(f"e_lambda({inner}, {rest})")
    elif slots:
        head.append("chi(xi={" + ",".join(s.var for s in slots) + "})")
    else:
        head.append("0^|xi|")
    prefix = "".join(f"sum_{{{s.var} in xi}} " for s in slots)
    return prefix + "*".join(head)


def vlasov_coefficient(spec: GeneratorSpec, part: str, x, y=None) -> VlasovCoefficient:
    analyze_scaling(spec)
    if part not in spec.parts:
        raise ValueError(f"the generator has no {part} rate")
    if part == "hop" and y is None:
        raise ValueError("hop coefficient needs an arrival point y")
    xt = tuple(np.atleast_1d(np.asarray(x, dtype=float)))
    yt = None if y is None else tuple(np.atleast_1d(np.asarray(y, dtype=float)))
    return VlasovCoefficient(spec, part, xt, yt)
