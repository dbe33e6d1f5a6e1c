"""Expressions over a density field rho: the right-hand side of a kinetic equation.

Nodes are immutable and evaluate against a context exposing ``rho`` (an
array), ``conv(kernel, values)`` and ``mass(kernel)``.  ``str()`` gives the
canonical ASCII formula, ``to_json()`` the AST.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelDecl


class FieldEvalError(ArithmeticError):
    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{message} at {path}")


def _num(v: float) -> str:
    return format(v, ".12g")


class FieldExpr:
    def evaluate(self, ctx, _path: str = "$"):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def complexity(self) -> int:
        """Number of convolution and exponential nodes."""
        return 0

    def kernels(self) -> dict:
        return {}

    def __add__(self, other: "FieldExpr") -> "FieldExpr":
        return Sum(_items(self) + _items(other))


def _check(v, path):
    if not np.all(np.isfinite(v)):
        raise FieldEvalError("non-finite value", path)
    return v


@dataclass(frozen=True)
class Const(FieldExpr):
    value: float
    name: str | None = None

    def evaluate(self, ctx, _path="$"):
        return self.value

    def __str__(self):
        return self.name if self.name else _num(self.value)

    def to_json(self):
        out = {"op": "const", "value": self.value}
        if self.name:
            out["name"] = self.name
        return out


@dataclass(frozen=True)
class Rho(FieldExpr):
    def evaluate(self, ctx, _path="$"):
        return ctx.rho

    def __str__(self):
        return "rho"

    def to_json(self):
        return {"op": "rho"}


@dataclass(frozen=True)
class Mass(FieldExpr):
    kernel: KernelDecl

    def evaluate(self, ctx, _path="$"):
        return ctx.mass(self.kernel)

    def __str__(self):
        return f"mass({self.kernel.name})"

    def to_json(self):
        return {"op": "mass", "kernel": self.kernel.name}

    def kernels(self):
        return {self.kernel.name: self.kernel}


@dataclass(frozen=True)
class Conv(FieldExpr):
    kernel: KernelDecl
    arg: FieldExpr

    def evaluate(self, ctx, _path="$"):
        here = f"{_path}/conv({self.kernel.name})"
        return _check(ctx.conv(self.kernel, self.arg.evaluate(ctx, here)), here)

    def __str__(self):
        return f"conv({self.kernel.name},{self.arg})"

    def to_json(self):
        return {"op": "conv", "kernel": self.kernel.name, "arg": self.arg.to_json()}

    def complexity(self):
        return 1 + self.arg.complexity()

    def kernels(self):
        return {self.kernel.name: self.kernel, **self.arg.kernels()}


@dataclass(frozen=True)
class Exp(FieldExpr):
    arg: FieldExpr

    def evaluate(self, ctx, _path="$"):
        here = f"{_path}/exp"
        with np.errstate(over="ignore"):
            return _check(np.exp(self.arg.evaluate(ctx, here)), here)

    def __str__(self):
        return f"exp({self.arg})"

    def to_json(self):
        return {"op": "exp", "arg": self.arg.to_json()}

    def complexity(self):
        return 1 + self.arg.complexity()

    def kernels(self):
        return self.arg.kernels()


@dataclass(frozen=True)
class Neg(FieldExpr):
    arg: FieldExpr

    def evaluate(self, ctx, _path="$"):
        return -self.arg.evaluate(ctx, _path)

    def __str__(self):
        return f"-{self.arg}"

    def to_json(self):
        return {"op": "neg", "arg": self.arg.to_json()}

    def complexity(self):
        return self.arg.complexity()

    def kernels(self):
        return self.arg.kernels()


_RANK = {Const: 0, Mass: 2, Rho: 3, Conv: 4, Exp: 5}


def _factor_key(f: FieldExpr):
    rank = _RANK.get(type(f), 6)
    if isinstance(f, Const) and f.name:
        rank = 1
    return rank, str(f)


@dataclass(frozen=True)
class Prod(FieldExpr):
    factors: tuple

    def evaluate(self, ctx, _path="$"):
        out = 1.0
        for i, f in enumerate(self.factors):
            out = out * f.evaluate(ctx, f"{_path}/prod[{i}]")
        return out

    def __str__(self):
        return "*".join(str(f) for f in self.factors)

    def to_json(self):
        return {"op": "prod", "args": [f.to_json() for f in self.factors]}

    def complexity(self):
        return sum(f.complexity() for f in self.factors)

    def kernels(self):
        out = {}
        for f in self.factors:
            out.update(f.kernels())
        return out


@dataclass(frozen=True)
class Sum(FieldExpr):
    items: tuple

    def evaluate(self, ctx, _path="$"):
        out = 0.0
        for i, t in enumerate(self.items):
            out = out + t.evaluate(ctx, f"{_path}/sum[{i}]")
        return out

    def __str__(self):
        if not self.items:
            return "0"
        parts = [str(self.items[0])]
        for t in self.items[1:]:
            parts.append(f" - {t.arg}" if isinstance(t, Neg) else f" + {t}")
        return "".join(parts)

    def to_json(self):
        return {"op": "sum", "args": [t.to_json() for t in self.items]}

    def complexity(self):
        return sum(t.complexity() for t in self.items)

    def kernels(self):
        out = {}
        for t in self.items:
            out.update(t.kernels())
        return out


def _items(e: FieldExpr) -> tuple:
    return e.items if isinstance(e, Sum) else (e,)


def prod(*factors: FieldExpr) -> FieldExpr:
    """Canonical product: flattened, numeric parts merged, factors ordered."""
    coef = 1.0
    flat = []
    stack = list(factors)
    while stack:
        f = stack.pop(0)
        if isinstance(f, Prod):
            stack[:0] = list(f.factors)
        elif isinstance(f, Neg):
            coef = -coef
            stack.insert(0, f.arg)
        elif isinstance(f, Const) and f.name is None:
            coef *= f.value
        else:
            flat.append(f)
    flat.sort(key=_factor_key)
    if abs(coef) != 1.0 or not flat:
        flat.insert(0, Const(abs(coef)))
    body = flat[0] if len(flat) == 1 else Prod(tuple(flat))
    return Neg(body) if coef < 0 else body


def term_sum(terms) -> FieldExpr:
    terms = tuple(terms)
    if len(terms) == 1:
        return terms[0]
    return Sum(terms)
