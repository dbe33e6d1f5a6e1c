"""Recursive-descent parser for generator descriptions.

Concrete syntax::

    spec    := (stmt ";")*  stmt [";"]
    stmt    := decl | part | "box" "(" NUMBER "," NUMBER ")"
    decl    := "kernel" IDENT profile ["amplitude" NUMBER] ["scale" "eps"]
             | "const" IDENT "=" NUMBER ["scale" "inveps"]
    profile := ("gaussian" | "tophat" | "exponential") "(" NUMBER ")" | "table(" PATH ")"
    part    := ("death" | "birth" | "hop") "=" expr
    expr    := term (("+" | "-") term)*
    term    := factor ("*" factor)*
    factor  := NUMBER | IDENT | IDENT "(" IDENT "-" IDENT ")"
             | "exp" "(" ["-"] expr ")" | "sum" "[" IDENT "in" domain "]" factor
             | "(" expr ")" | "inveps"
    domain  := "gamma" | "gamma" "\\" IDENT

``#`` starts a comment running to the end of the line.  The bare factor
``inveps`` is the number 1 carrying a 1/eps under scaling, for rates whose
whole birth term is rescaled rather than a single named constant.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Optional

from ..config import Box
from ..kernels import KernelDecl
from .ast import (
    BASE_VARS,
    PARTS,
    Add,
    ConstDecl,
    DSLError,
    ExpFactor,
    ExpNode,
    ExpTerm,
    GeneratorSpec,
    KernelCall,
    KernelFactor,
    Monomial,
    Mul,
    Name,
    Num,
    ParsedPart,
    RateFormError,
    SumFactor,
    SumNode,
    UNIT_CONST,
    classify,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[;=+\-*()\[\]\\,])
    """,
    re.VERBOSE,
)

_TABLE_ARG_RE = re.compile(r"[ \t]*(\()([^)\n]*)\)")

KEYWORDS = {"kernel", "const", "scale", "eps", "inveps", "death", "birth", "hop",
            "exp", "sum", "in", "gamma", "amplitude", "box"}


class Token:
    __slots__ = ("kind", "text", "line", "col", "offset")

    def __init__(self, kind, text, line, col, offset):
        self.kind, self.text, self.line, self.col, self.offset = kind, text, line, col, offset

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DSLError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and chunk in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, chunk, line, pos - line_start + 1, pos))
            if chunk == "table":
                raw = _TABLE_ARG_RE.match(text, m.end())
                if raw:
                    lp = raw.start(1)
                    tokens.append(Token("punct", "(", line, lp - line_start + 1, lp))
                    tokens.append(Token("path", raw.group(2).strip(), line, lp - line_start + 2, lp + 1))
                    tokens.append(Token("punct", ")", line, raw.end() - line_start, raw.end() - 1))
                    m = raw
                    chunk = text[pos:raw.end()]
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1, pos))
    return tokens


class _Parser:
    def __init__(self, text: str, base_dir: Optional[Path]):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.base_dir = base_dir
        self.kernels: dict = {}
        self.consts: dict = {}
        self.parts: dict = {}
        self.box: Optional[Box] = None

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> DSLError:
        t = tok or self.tok
        return DSLError(msg, t.line, t.col)

    def accept(self, text: str) -> Optional[Token]:
        if self.tok.text == text and self.tok.kind in ("kw", "punct"):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return t

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {shown!r}")
        t = self.tok
        self.i += 1
        return t

    def number(self) -> float:
        neg = self.accept("-") is not None
        v = float(self.expect_kind("number", "a number").text)
        return -v if neg else v

    # grammar
    def spec(self):
        while self.tok.kind != "eof":
            if self.accept(";"):
                continue
            self.statement()
            if self.tok.kind != "eof":
                self.expect(";")

    def statement(self):
        t = self.tok
        if self.accept("kernel"):
            self.kernel_decl(t)
        elif self.accept("const"):
            self.const_decl(t)
        elif self.accept("box"):
            self.expect("(")
            d = self.number()
            self.expect(",")
            L = self.number()
            self.expect(")")
            try:
                self.box = Box(int(d), L)
            except ValueError as exc:
                raise DSLError(str(exc), t.line, t.col) from None
        elif t.text in PARTS and t.kind == "kw":
            self.i += 1
            if t.text in self.parts:
                raise self.error(f"{t.text} rate given twice", t)
            self.expect("=")
            self.parts[t.text] = (self.expr(), (t.line, t.col))
        else:
            raise self.error(f"expected a declaration or a rate, found {t.text or 'end of input'!r}")

    def _declare(self, name_tok: Token):
        name = name_tok.text
        if name in self.kernels or name in self.consts:
            raise self.error(f"identifier {name!r} declared twice", name_tok)
        if name in ("x", "y"):
            raise self.error(f"{name!r} is reserved for rate arguments", name_tok)

    def kernel_decl(self, start: Token):
        name_tok = self.expect_kind("ident", "a kernel name")
        self._declare(name_tok)
        prof_tok = self.expect_kind("ident", "a kernel profile")
        profile = prof_tok.text
        amplitude, scaling = 1.0, "fixed"
        if profile == "table":
            self.expect("(")
            path = self.expect_kind("path", "a table path").text
            self.expect(")")
            full = Path(path) if self.base_dir is None else self.base_dir / path
        elif profile in ("gaussian", "tophat", "exponential"):
            self.expect("(")
            param = self.number()
            self.expect(")")
        else:
            raise self.error(f"unknown kernel profile {profile!r}", prof_tok)
        if self.accept("amplitude"):
            amplitude = self.number()
            if amplitude < 0:
                raise self.error("kernel amplitude must be nonnegative")
        if self.accept("scale"):
            self.expect("eps")
            scaling = "eps"
        try:
            if profile == "table":
                k = KernelDecl.from_table_file(name_tok.text, full, amplitude=amplitude, scaling=scaling)
            else:
                k = KernelDecl(name_tok.text, profile, param, amplitude, scaling)
        except (OSError, ValueError) as exc:
            raise DSLError(str(exc), start.line, start.col) from None
        self.kernels[k.name] = k

    def const_decl(self, start: Token):
        name_tok = self.expect_kind("ident", "a constant name")
        self._declare(name_tok)
        self.expect("=")
        value = self.number()
        scaling = "fixed"
        if self.accept("scale"):
            self.expect("inveps")
            scaling = "inveps"
        try:
            self.consts[name_tok.text] = ConstDecl(name_tok.text, value, scaling)
        except ValueError as exc:
            raise DSLError(str(exc), start.line, start.col) from None

    def expr(self):
        start = self.tok
        items = [(1, self.term())]
        while self.tok.text in ("+", "-") and self.tok.kind == "punct":
            sign = 1 if self.tok.text == "+" else -1
            self.i += 1
            items.append((sign, self.term()))
        if len(items) == 1:
            return items[0][1]
        return Add(tuple(items), pos=(start.line, start.col))

    def term(self):
        start = self.tok
        factors = [self.factor()]
        while self.accept("*"):
            factors.append(self.factor())
        if len(factors) == 1:
            return factors[0]
        return Mul(tuple(factors), pos=(start.line, start.col))

    def factor(self):
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "number":
            self.i += 1
            return Num(float(t.text), pos=pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("inveps"):
            return Name(UNIT_CONST, pos=pos)
        if self.accept("exp"):
            self.expect("(")
            neg = self.accept("-") is not None
            arg = self.expr()
            self.expect(")")
            return ExpNode(neg, arg, pos=pos)
        if self.accept("sum"):
            self.expect("[")
            var = self.expect_kind("ident", "a summation variable").text
            self.expect("in")
            self.expect("gamma")
            excludes = ()
            if self.accept("\\"):
                excludes = (self.expect_kind("ident", "a variable after '\\'").text,)
            self.expect("]")
            return SumNode(var, excludes, self.factor(), pos=pos)
        if t.kind == "ident":
            self.i += 1
            if self.accept("("):
                a = self.expect_kind("ident", "a variable").text
                self.expect("-")
                b = self.expect_kind("ident", "a variable").text
                self.expect(")")
                return KernelCall(t.text, a, b, pos=pos)
            return Name(t.text, pos=pos)
        raise self.error(f"unexpected {t.text or 'end of input'!r}")


# -- expansion -------------------------------------------------------------------

def expand(node, spec_kernels: dict, spec_consts: dict, scope: tuple) -> list:
    """Expand a parse tree into a list of monomials, resolving identifiers."""

    def err(msg, n):
        return DSLError(msg, *n.pos)

    def go(n, scope):
        if isinstance(n, Num):
            return [Monomial(coef=n.value)]
        if isinstance(n, Name):
            if n.name in spec_consts:
                return [Monomial(consts=(n.name,))]
            if n.name in spec_kernels:
                raise err(f"kernel {n.name!r} used without a displacement", n)
            raise err(f"undeclared identifier {n.name!r}", n)
        if isinstance(n, KernelCall):
            if n.name not in spec_kernels:
                if n.name in spec_consts:
                    raise err(f"constant {n.name!r} used as a kernel", n)
                raise err(f"undeclared identifier {n.name!r}", n)
            for v in (n.left, n.right):
                if v not in scope:
                    raise err(f"variable {v!r} is not bound here", n)
            if n.left == n.right:
                raise err("kernel displacement between a variable and itself", n)
            return [Monomial(kernels=(KernelFactor(n.name, n.left, n.right),))]
        if isinstance(n, Add):
            out = []
            for sign, item in n.items:
                out.extend(m.scaled(sign) for m in go(item, scope))
            return out
        if isinstance(n, Mul):
            acc = [Monomial()]
            for f in n.factors:
                acc = [a * b for a in acc for b in go(f, scope)]
            return acc
        if isinstance(n, SumNode):
            if n.var in scope:
                raise err(f"summation variable {n.var!r} shadows a bound variable", n)
            for v in n.excludes:
                if v not in scope:
                    raise err(f"variable {v!r} is not bound here", n)
            out = []
            for body in go(n.body, scope + (n.var,)):
                outer = Monomial(coef=body.coef, consts=body.consts)
                out.append(outer * Monomial(sums=(SumFactor(n.var, n.excludes, body.stripped()),)))
            return out
        if isinstance(n, ExpNode):
            terms = []
            for m in go(n.arg, scope):
                if m.kernels or m.exps or len(m.sums) != 1:
                    raise RateFormError("exp() must wrap sums of single pair kernels", *n.pos)
                (s,) = m.sums
                b = s.body
                if b.sums or b.exps or len(b.kernels) != 1 or b.kernels[0].other(s.var) is None:
                    raise RateFormError("exp() must wrap sums of single pair kernels", *n.pos)
                k = b.kernels[0]
                sign = -1.0 if n.negated else 1.0
                terms.append(ExpTerm(sign * m.coef, m.consts, k.kernel, k.other(s.var), s.var, s.excludes))
            return [Monomial(exps=(ExpFactor(tuple(terms)),))]
        raise TypeError(f"unknown node {n!r}")

    return go(node, scope)


def validate_monomial(mono: Monomial, part: str, pos: tuple) -> None:
    """Reject monomials outside the supported canonical family."""

    def bad(msg):
        return RateFormError(f"{part} rate: {msg}", *pos)

    base = BASE_VARS[part]
    if len(mono.sums) > 1:
        raise bad("products of independent sums over the configuration are not supported")
    if mono.depth() > 2:
        raise bad("interaction sums nested deeper than pairs are not supported")
    if part == "hop":
        if len(mono.kernels) != 1 or set((mono.kernels[0].left, mono.kernels[0].right)) != {"x", "y"}:
            raise bad("every hop term needs exactly one jump kernel k(x-y)")
    elif mono.kernels:
        raise bad("pair kernels must sit inside a sum over the configuration")
    for e in mono.exps:
        if not e.anchors <= set(base):
            raise bad("exponentials must be anchored at a rate argument")
    for s in mono.sums:
        _validate_sum(s, base, bad)


def _validate_sum(s: SumFactor, outer: tuple, bad) -> None:
    body = s.body
    linking = [k for k in body.kernels if k.other(s.var) is not None]
    if len(body.kernels) != 1 or len(linking) != 1:
        raise bad(f"sum over {s.var!r} needs exactly one kernel tying it to a bound variable")
    if linking[0].other(s.var) not in outer:
        raise bad(f"kernel in sum over {s.var!r} must link it to an enclosing variable")
    for e in body.exps:
        if e.anchors != {s.var}:
            raise bad(f"exponential inside the sum over {s.var!r} must be anchored at {s.var!r}")
    for inner in body.sums:
        if inner.anchor() != s.var:
            raise bad(f"nested sum must be tied to {s.var!r}")
        _validate_sum(inner, (s.var,), bad)


def parse(text: str, declarations: Iterable = (), base_dir: str | Path | None = None,
          box: Optional[Box] = None) -> GeneratorSpec:
    """Parse a generator description into a ``GeneratorSpec``.

    ``declarations`` supplies ``KernelDecl``/``ConstDecl`` objects for
    identifiers the text does not declare itself.
    """
    p = _Parser(text, Path(base_dir) if base_dir is not None else None)
    p.spec()
    kernels, consts = {}, {UNIT_CONST: ConstDecl(UNIT_CONST, 1.0, "inveps")}
    for dcl in declarations:
        target = kernels if isinstance(dcl, KernelDecl) else consts
        target[dcl.name] = dcl
    for name, k in p.kernels.items():
        consts.pop(name, None)
        kernels[name] = k
    for name, c in p.consts.items():
        kernels.pop(name, None)
        consts[name] = c
    if not p.parts:
        raise DSLError("no death, birth or hop rate given", 1, 1)
    parts = {}
    for name, (node, pos) in p.parts.items():
        monos = expand(node, kernels, consts, BASE_VARS[name])
        for m in monos:
            validate_monomial(m, name, pos)
        parts[name] = ParsedPart(name, node, monos, [classify(m, name) for m in monos], pos)
    return GeneratorSpec(parts=parts, kernels=kernels, consts=consts, box=p.box or box, text=text)


def parse_file(path: str | Path, **kw) -> GeneratorSpec:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), base_dir=path.parent, **kw)
