"""Syntax tree of generator descriptions and its expansion into monomials.

The parser produces a small expression tree (``Num``, ``Name``,
``KernelCall``, ``ExpNode``, ``SumNode``, ``Add``, ``Mul``).  Everything
downstream works on the expanded form: each rate becomes a list of
``Monomial`` objects, i.e. a constant times a product of pair kernels,
exponentials of interaction sums, and (possibly nested) sums over the
configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from ..config import Box
from ..kernels import KernelDecl

PARTS = ("death", "birth", "hop")
BASE_VARS = {"death": ("x",), "birth": ("x",), "hop": ("x", "y")}
CONST_SCALINGS = ("fixed", "inveps")
# the bare ``inveps`` factor: the number 1 scaled as 1 -> 1/eps
UNIT_CONST = "inveps"


class DSLError(ValueError):
    """Syntax or semantic error in a generator description."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


class RateFormError(DSLError):
    """A rate outside the supported family of canonical forms."""


@dataclass(frozen=True)
class ConstDecl:
    name: str
    value: float
    scaling: str = "fixed"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"constant {self.name} must be positive, got {self.value}")
        if self.scaling not in CONST_SCALINGS:
            raise ValueError(f"unknown constant scaling {self.scaling!r}")


# -- parse tree --------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    pos: tuple = field(default=(None, None), compare=False, kw_only=True)


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Name(Node):
    name: str


@dataclass(frozen=True)
class KernelCall(Node):
    name: str
    left: str
    right: str


@dataclass(frozen=True)
class ExpNode(Node):
    negated: bool
    arg: Node


@dataclass(frozen=True)
class SumNode(Node):
    var: str
    excludes: tuple
    body: Node


@dataclass(frozen=True)
class Add(Node):
    items: tuple  # of (sign, Node)


@dataclass(frozen=True)
class Mul(Node):
    factors: tuple


# -- expanded form -------------------------------------------------------------

@dataclass(frozen=True)
class KernelFactor:
    """kernel(left - right)."""

    kernel: str
    left: str
    right: str

    def other(self, var: str) -> Optional[str]:
        if self.left == var:
            return self.right
        if self.right == var:
            return self.left
        return None


@dataclass(frozen=True)
class ExpTerm:
    """coef * prod(consts) * sum_{var in domain} kernel(anchor - var)."""

    coef: float
    consts: tuple
    kernel: str
    anchor: str
    var: str
    excludes: tuple


@dataclass(frozen=True)
class ExpFactor:
    terms: tuple  # exp(sum of ExpTerm)

    @property
    def anchors(self) -> set:
        return {t.anchor for t in self.terms}


@dataclass(frozen=True)
class SumFactor:
    var: str
    excludes: tuple
    body: "Monomial"

    def link(self) -> KernelFactor:
        """The single kernel tying the summation variable to the outside."""
        return self.body.kernels[0]

    def anchor(self) -> str:
        return self.link().other(self.var)


@dataclass(frozen=True)
class Monomial:
    coef: float = 1.0
    consts: tuple = ()
    kernels: tuple = ()
    exps: tuple = ()
    sums: tuple = ()

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(
            self.coef * other.coef,
            tuple(sorted(self.consts + other.consts)),
            self.kernels + other.kernels,
            self.exps + other.exps,
            self.sums + other.sums,
        )

    def scaled(self, c: float) -> "Monomial":
        return replace(self, coef=self.coef * c)

    def stripped(self) -> "Monomial":
        """Same structure with the scalar prefactor removed."""
        return replace(self, coef=1.0, consts=())

    def depth(self) -> int:
        return 1 + max((s.body.depth() for s in self.sums), default=0) if self.sums else 0

    def sum_vars(self) -> list:
        out = []
        for s in self.sums:
            out.append(s.var)
            out.extend(s.body.sum_vars())
        return out

    def all_kernels(self) -> list:
        """Kernel factors outside exponentials, nested sums included."""
        out = list(self.kernels)
        for s in self.sums:
            out.extend(s.body.all_kernels())
        return out

    def all_exp_terms(self) -> list:
        out = [t for e in self.exps for t in e.terms]
        for s in self.sums:
            out.extend(s.body.all_exp_terms())
        return out

    def all_consts(self) -> list:
        out = list(self.consts)
        for t in self.all_exp_terms():
            out.extend(t.consts)
        return out


def classify(mono: Monomial, part: str) -> int:
    """Canonical form number (1-6) of a monomial, ignoring a hop kernel.

    1 constant, 2 linear sum, 3 exponential of a sum, 4 pair sum,
    5 sum carrying its own exponential, 6 sum times exponential.
    """
    if not mono.sums:
        return 3 if mono.exps else 1
    (s,) = mono.sums
    if s.body.sums:
        return 4
    if s.body.exps:
        return 5
    return 6 if mono.exps else 2


@dataclass
class ParsedPart:
    part: str
    node: Node
    monomials: list
    forms: list
    pos: tuple = (None, None)


@dataclass
class GeneratorSpec:
    """A parsed generator: rates, declarations, and the current epsilon.

    ``eps`` is 1 for the model as written.  ``scale`` returns a copy with a
    different ``eps``; the effective constants and kernel amplitudes are
    derived from it on demand, so the declared (base) values stay intact.
    """

    parts: dict
    kernels: dict
    consts: dict
    box: Optional[Box] = None
    eps: float = 1.0
    text: str = ""

    @property
    def death(self) -> Optional[Node]:
        p = self.parts.get("death")
        return p.node if p else None

    @property
    def birth(self) -> Optional[Node]:
        p = self.parts.get("birth")
        return p.node if p else None

    @property
    def hop(self) -> Optional[Node]:
        p = self.parts.get("hop")
        return p.node if p else None

    def monomials(self, part: str) -> list:
        p = self.parts.get(part)
        return p.monomials if p else []

    @property
    def is_birth_death(self) -> bool:
        return "death" in self.parts or "birth" in self.parts

    def const_value(self, name: str, eps: float | None = None) -> float:
        c = self.consts[name]
        e = self.eps if eps is None else eps
        return c.value / e if c.scaling == "inveps" else c.value

    def kernel_factor(self, name: str, eps: float | None = None) -> float:
        e = self.eps if eps is None else eps
        return e if self.kernels[name].scaling == "eps" else 1.0

    def kernel(self, name: str, eps: float | None = None) -> KernelDecl:
        """Kernel with its effective (scaled) amplitude."""
        k = self.kernels[name]
        f = self.kernel_factor(name, eps)
        return k if f == 1.0 else k.with_amplitude(k.amplitude * f)

    def with_values(self, consts: dict | None = None, amplitudes: dict | None = None) -> "GeneratorSpec":
        """Copy with overridden constant values / kernel amplitudes."""
        new_consts = dict(self.consts)
        for name, v in (consts or {}).items():
            if name not in new_consts:
                raise KeyError(f"no constant named {name!r}")
            new_consts[name] = replace(new_consts[name], value=float(v))
        new_kernels = dict(self.kernels)
        for name, v in (amplitudes or {}).items():
            if name not in new_kernels:
                raise KeyError(f"no kernel named {name!r}")
            new_kernels[name] = new_kernels[name].with_amplitude(float(v))
        return replace(self, consts=new_consts, kernels=new_kernels)
