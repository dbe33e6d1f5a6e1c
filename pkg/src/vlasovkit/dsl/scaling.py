"""Epsilon-order bookkeeping, the scaling map, and direct rate evaluation.

Each declared kernel is either ``fixed`` or ``eps`` (kernel -> eps*kernel)
and each constant either ``fixed`` or ``inveps`` (c -> c/eps).  The order of
a monomial is the sum of its factor orders minus one for every point of the
configuration it sums over.  A death or hop term needs order 0; a birth term
needs order -1, the extra 1/eps being the one the birth part of a
birth-and-death generator must carry.  Kernels inside ``exp`` must be
eps-scaled, so that every point the exponential reaches brings one power of
eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..config import Box
from .ast import PARTS, UNIT_CONST, DSLError, GeneratorSpec, Monomial

TARGET_ORDER = {"death": 0, "birth": -1, "hop": 0}


class ScalingError(DSLError):
    """The declared scalings do not produce a Vlasov limit."""


def format_monomial(m: Monomial) -> str:
    parts = []
    if m.coef != 1.0:
        parts.append(f"{m.coef:g}")
    parts.extend(m.consts)
    parts.extend(f"{k.kernel}({k.left}-{k.right})" for k in m.kernels)
    for e in m.exps:
        inner = " + ".join(
            f"{t.coef:g}*{'*'.join(t.consts) + '*' if t.consts else ''}"
            f"sum[{t.var}]{t.kernel}({t.anchor}-{t.var})" for t in e.terms)
        parts.append(f"exp({inner})")
    for s in m.sums:
        parts.append(f"sum[{s.var}]({format_monomial(s.body)})")
    return "*".join(parts) or "1"


def monomial_order(spec: GeneratorSpec, m: Monomial) -> int:
    order = sum(-1 for c in m.consts if spec.consts[c].scaling == "inveps")
    order += sum(1 for k in m.all_kernels() if spec.kernels[k.kernel].scaling == "eps")
    return order - len(m.sum_vars())


@dataclass
class ScalingReport:
    orders: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    balanced: bool = True

    def __str__(self) -> str:
        lines = [", ".join(self.rules)]
        for part, orders in self.orders.items():
            lines.append(f"{part}: term orders {orders} (target {TARGET_ORDER[part]})")
        return "\n".join(lines)


def analyze_scaling(spec: GeneratorSpec) -> ScalingReport:
    """Check that every term has the epsilon order a Vlasov limit needs."""
    report = ScalingReport()
    used_k, used_c = set(), set()
    for part in PARTS:
        if part not in spec.parts:
            continue
        pos = spec.parts[part].pos
        orders = []
        for m in spec.monomials(part):
            for t in m.all_exp_terms():
                if spec.kernels[t.kernel].scaling != "eps":
                    raise ScalingError(
                        f"no Vlasov limit under declared scalings: kernel {t.kernel!r} inside exp() "
                        f"in the {part} rate must be declared 'scale eps'", *pos)
                for c in t.consts:
                    if spec.consts[c].scaling != "fixed":
                        raise ScalingError(
                            f"no Vlasov limit under declared scalings: constant {c!r} inside exp() "
                            f"must be fixed", *pos)
                used_k.add(t.kernel)
                used_c.update(t.consts)
            used_k.update(k.kernel for k in m.all_kernels())
            used_c.update(m.consts)
            o = monomial_order(spec, m)
            target = TARGET_ORDER[part]
            if o != target:
                what = "diverges" if o < target else "vanishes"
                raise ScalingError(
                    f"no Vlasov limit under declared scalings: {part} term {format_monomial(m)} "
                    f"has eps-order {o}, needs {target} (the term {what} as eps -> 0)", *pos)
            orders.append(o)
        report.orders[part] = orders
    for name in sorted(used_k):
        rule = f"{name} -> eps*{name}" if spec.kernels[name].scaling == "eps" else f"{name} -> {name}"
        report.rules.append(rule)
    for name in sorted(used_c):
        if name == UNIT_CONST:
            report.rules.append("1 -> 1/eps")
            continue
        rule = f"{name} -> {name}/eps" if spec.consts[name].scaling == "inveps" else f"{name} -> {name}"
        report.rules.append(rule)
    return report


def scale(spec: GeneratorSpec, eps: float) -> GeneratorSpec:
    """The epsilon-rescaled generator.

    Rates of the returned spec are the effective rates of the rescaled
    process: eps-kernels multiplied by eps and inveps-constants divided by
    eps.  At eps = 1 the rates are those of ``spec``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if eps > 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    analyze_scaling(spec)
    return replace(spec, eps=float(eps))


# -- direct evaluation ------------------------------------------------------------

def _require_box(spec: GeneratorSpec) -> Box:
    if spec.box is None:
        raise ValueError("the generator has no box; declare box(d, L) or pass one to parse()")
    return spec.box


def _as_points(config, d: int) -> np.ndarray:
    if hasattr(config, "as_array"):
        return config.as_array(d)
    arr = np.asarray(config, dtype=float)
    if arr.size == 0:
        return np.zeros((0, d))
    return arr.reshape(-1, d)


def _mono_value(spec, box, m: Monomial, env: dict, pts: np.ndarray, eps) -> float:
    val = m.coef
    for c in m.consts:
        val *= spec.const_value(c, eps)
    if val == 0.0:
        return 0.0
    for k in m.kernels:
        val *= float(spec.kernel(k.kernel, eps).evaluate(env[k.left][0] - env[k.right][0], box))
    n = len(pts)
    for e in m.exps:
        arg = 0.0
        for t in e.terms:
            mask = _domain(n, t.excludes, env)
            w = t.coef
            for c in t.consts:
                w *= spec.const_value(c, eps)
            if mask.any():
                kv = spec.kernel(t.kernel, eps).evaluate(env[t.anchor][0] - pts[mask], box)
                arg += w * math.fsum(kv)
        val *= math.exp(arg)
    for s in m.sums:
        mask = _domain(n, s.excludes, env)
        acc = []
        for j in np.flatnonzero(mask):
            env2 = dict(env)
            env2[s.var] = (pts[j], j)
            acc.append(_mono_value(spec, box, s.body, env2, pts, eps))
        val *= math.fsum(acc)
    return val


def _domain(n: int, excludes: tuple, env: dict) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    for v in excludes:
        j = env[v][1]
        if j is not None:
            mask[j] = False
    return mask


def evaluate_rate(spec: GeneratorSpec, part: str, x, config, y=None, eps: float | None = None) -> float:
    """Effective rate of ``part`` at the spec's epsilon (or ``eps``).

    ``config`` is the configuration the rate depends on: gamma for a birth
    at ``x``, and gamma without x for a death at ``x`` or a hop ``x -> y``.
    """
    box = _require_box(spec)
    if part not in spec.parts:
        return 0.0
    d = box.d
    env = {"x": (np.asarray(x, dtype=float).reshape(d), None)}
    if part == "hop":
        if y is None:
            raise ValueError("hop rate needs an arrival point y")
        env["y"] = (np.asarray(y, dtype=float).reshape(d), None)
    pts = _as_points(config, d)
    return math.fsum(_mono_value(spec, box, m, env, pts, eps) for m in spec.monomials(part))
