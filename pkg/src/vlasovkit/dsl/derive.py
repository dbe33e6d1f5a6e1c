"""Compile the epsilon -> 0 limit of a generator into a kinetic right-hand side.

Integrating a product-form limit coefficient against the Poisson exponent
e(rho, .) turns every sum over the configuration into a convolution with
rho and every exponential of an interaction sum into the exponential of a
convolution.  Birth and death give

    v(rho)(x) = -rho(x) * MF[d](x) + MF[b](x),

and a hop term a(x-y) F(x) G(y) gives the gain G(x) (a * rho F)(x) and the
loss rho(x) F(x) (a * G)(x).
"""

from __future__ import annotations

from ..fieldexpr import Const, Conv, Exp, FieldExpr, Mass, Neg, Rho, prod, term_sum
from .ast import UNIT_CONST, GeneratorSpec, Monomial
from .scaling import analyze_scaling


def _exp_arg(spec: GeneratorSpec, terms) -> FieldExpr:
    items = []
    for t in terms:
        factors = [Const(t.coef)] + [_const(spec, c) for c in t.consts]
        items.append(prod(*factors, Conv(spec.kernels[t.kernel], Rho())))
    return term_sum(items)


def _const(spec: GeneratorSpec, name: str) -> Const:
    if name == UNIT_CONST:
        return Const(spec.consts[name].value)
    return Const(spec.consts[name].value, name)


def _anchored(spec: GeneratorSpec, m: Monomial, var: str) -> list:
    """Mean-field factors of ``m`` that live at the point bound to ``var``."""
    out = []
    by_anchor: dict = {}
    for e in m.exps:
        for t in e.terms:
            by_anchor.setdefault(t.anchor, []).append(t)
    if var in by_anchor:
        out.append(Exp(_exp_arg(spec, by_anchor[var])))
    for s in m.sums:
        if s.anchor() != var:
            continue
        link = s.link()
        rest = Monomial(kernels=s.body.kernels[1:], exps=s.body.exps, sums=s.body.sums)
        inner = prod(Rho(), *_anchored(spec, rest, s.var))
        out.append(Conv(spec.kernels[link.kernel], inner))
    return out


def _prefactor(spec: GeneratorSpec, m: Monomial) -> list:
    return [Const(m.coef)] + [_const(spec, c) for c in m.consts]


def _sorted(terms: list) -> list:
    return sorted(terms, key=lambda t: (t.complexity(), str(t)))


def derive_vlasov(spec: GeneratorSpec) -> FieldExpr:
    """Right-hand side v(rho) of the limiting kinetic equation."""
    analyze_scaling(spec)
    death = [prod(Neg(Rho()), *_prefactor(spec, m), *_anchored(spec, m, "x"))
             for m in spec.monomials("death")]
    birth = [prod(*_prefactor(spec, m), *_anchored(spec, m, "x")) for m in spec.monomials("birth")]
    gains, losses = [], []
    for m in spec.monomials("hop"):
        jump = spec.kernels[m.kernels[0].kernel]
        pre = _prefactor(spec, m)
        dep = _anchored(spec, m, "x")
        arr = _anchored(spec, m, "y")
        gains.append(prod(*pre, *arr, Conv(jump, prod(Rho(), *dep))))
        spread = Conv(jump, prod(*arr)) if arr else Mass(jump)
        losses.append(prod(Neg(Rho()), *pre, *dep, spread))
    terms = _sorted(death) + _sorted(birth) + _sorted(gains) + _sorted(losses)
    if not terms:
        return Const(0.0)
    return term_sum(terms)


def canonical_formula(spec: GeneratorSpec) -> str:
    return str(derive_vlasov(spec))

