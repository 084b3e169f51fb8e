"""Parser and pretty-printer for the specification DSL.

The format::

    -- Motzkin trees
    Motzkin = Leaf (3)
            | Unary Motzkin
            | Binary Motzkin Motzkin (2) [0.3].

An alternative is a whitespace separated factor list. Its leading identifier,
when it names neither a class nor a marker, is the constructor: a tag carrying
``(weight)`` size units (default 1). ``[f]`` asks for the alternative to make
up a fraction ``f`` of the total size. ``Seq``, ``MSet``, ``MSet1`` and
``Cycle`` take a class name or an anonymous sub-expression. Two directives
exist: ``@marker U V [0.2].`` declares weight-0 marker atoms usable as
factors, ``@root Name.`` selects the root class (default: the first one).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .spec import (
    OPERATORS,
    Alternative,
    ClassDef,
    ClassRef,
    Marker,
    MarkerRef,
    Op,
    SpecAst,
    SpecError,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>--[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct>[=|.()\[\]@])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class _RawAlt:
    items: list = field(default_factory=list)  # ("id", name, tok) | ("op", kind, [_RawAlt], tok)
    weight: Optional[int] = None
    freq: Optional[float] = None
    tok: Optional[Token] = None


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        where = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise SpecError(f"{message} (found {where})", tok.line, tok.col)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind == "eof":
            self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def statements(self):
        while self.tok.kind != "eof":
            if self.tok.text == "@":
                yield self.directive()
            elif self.tok.kind == "ident":
                name = self.tok
                self.i += 1
                self.expect("=")
                alts = self.alternatives()
                self.expect(".")
                yield ("class", name, alts)
            else:
                self.error("expected a class definition or directive")

    def directive(self):
        self.expect("@")
        if self.tok.kind != "ident":
            self.error("expected a directive name")
        head = self.tok
        self.i += 1
        args = []
        while self.tok.kind == "ident":
            name = self.tok
            self.i += 1
            freq = self.frequency() if self.tok.text == "[" else None
            args.append((name, freq))
        self.expect(".")
        return (head.text, head, args)

    def frequency(self) -> float:
        open_tok = self.expect("[")
        if self.tok.kind != "num":
            self.error("expected a frequency")
        value = float(self.tok.text)
        self.i += 1
        self.expect("]")
        if not 0.0 <= value < 1.0:
            raise SpecError(f"frequency {value} outside [0, 1)", open_tok.line, open_tok.col)
        return value

    def alternatives(self) -> list[_RawAlt]:
        alts = [self.alternative()]
        while self.tok.text == "|":
            self.i += 1
            alts.append(self.alternative())
        return alts

    def alternative(self) -> _RawAlt:
        alt = _RawAlt(tok=self.tok)
        while True:
            t = self.tok
            if t.kind == "ident":
                self.i += 1
                if t.text in OPERATORS:
                    self.expect("(")
                    inner = self.alternatives()
                    self.expect(")")
                    if all(not a.items and a.weight is None for a in inner):
                        raise SpecError(f"empty argument to {t.text}", t.line, t.col)
                    alt.items.append(("op", t.text, inner, t))
                else:
                    alt.items.append(("id", t.text, t))
            elif t.text == "(":
                if alt.weight is not None:
                    self.error("duplicate weight annotation")
                self.i += 1
                if self.tok.kind != "num" or not self.tok.text.isdigit():
                    self.error("expected a non-negative integer weight")
                alt.weight = int(self.tok.text)
                self.i += 1
                self.expect(")")
            elif t.text == "[":
                if alt.freq is not None:
                    self.error("duplicate frequency annotation")
                alt.freq = self.frequency()
            else:
                return alt


class _Resolver:
    def __init__(self):
        self.ast = SpecAst()
        self.used_markers: set[str] = set()

    def fresh(self, stem: str) -> str:
        n = 1
        while f"{stem}{n}" in self.ast.classes or f"{stem}{n}" in self.ast.markers:
            n += 1
        return f"{stem}{n}"

    def marker_name(self, owner: str, index: int, constructor: Optional[str]) -> str:
        base = constructor if constructor else f"{owner}_{index}"
        name, n = base, 1
        while name in self.ast.classes or name in self.ast.markers:
            n += 1
            name = f"{base}_{n}"
        return name

    def resolve_class(self, name: str, raw_alts: list[_RawAlt]) -> ClassDef:
        alts = tuple(self.resolve_alt(name, i, raw) for i, raw in enumerate(raw_alts))
        return ClassDef(alts)

    def resolve_alt(self, owner: str, index: int, raw: _RawAlt) -> Alternative:
        classes, markers = self.ast.classes, self.ast.markers
        constructor = None
        items = list(raw.items)
        explicit = {m.name for m in markers.values() if not m.implicit}
        if items and items[0][0] == "id" and items[0][1] not in classes and items[0][1] not in explicit:
            constructor = items.pop(0)[1]
        factors = []
        for item in items:
            if item[0] == "id":
                _, ident, tok = item
                if ident in classes:
                    factors.append(ClassRef(ident))
                elif ident in explicit:
                    factors.append(MarkerRef(ident))
                else:
                    raise SpecError(f"undeclared reference {ident!r}", tok.line, tok.col)
            else:
                _, kind, inner, tok = item
                factors.append(Op(kind, self.resolve_argument(kind, inner)))
        weight = raw.weight if raw.weight is not None else (1 if constructor else 0)
        marker = None
        if raw.freq is not None:
            marker = self.marker_name(owner, index, constructor)
            markers[marker] = Marker(marker, raw.freq, implicit=True)
        return Alternative(tuple(factors), weight, constructor, raw.freq, marker)

    def resolve_argument(self, kind: str, inner: list[_RawAlt]) -> str:
        if len(inner) == 1:
            raw = inner[0]
            if (len(raw.items) == 1 and raw.items[0][0] == "id" and raw.weight is None
                    and raw.freq is None and raw.items[0][1] in self.ast.classes):
                return raw.items[0][1]
        name = self.fresh(f"_{kind}")
        self.ast.classes[name] = None  # reserve before resolving nested lifts
        self.ast.classes[name] = self.resolve_class(name, inner)
        return name


def parse(text: str) -> SpecAst:
    """Parse DSL source into a :class:`SpecAst`."""
    statements = list(_Parser(tokenize(text)).statements())
    res = _Resolver()
    ast = res.ast
    root = None
    class_stmts = []
    for stmt in statements:
        kind, head, body = stmt
        if kind == "class":
            if head.text in ast.classes:
                raise SpecError(f"duplicate class {head.text!r}", head.line, head.col)
            ast.classes[head.text] = None
            class_stmts.append((head.text, body))
        elif kind == "marker":
            for name, freq in body:
                if name.text in ast.markers:
                    raise SpecError(f"duplicate marker {name.text!r}", name.line, name.col)
                ast.markers[name.text] = Marker(name.text, freq)
        elif kind == "root":
            if len(body) != 1:
                raise SpecError("@root takes exactly one class name", head.line, head.col)
            root = body[0][0]
        else:
            raise SpecError(f"unknown directive @{kind}", head.line, head.col)
    if not class_stmts:
        raise SpecError("specification defines no classes")
    for name in ast.markers:
        if name in ast.classes:
            raise SpecError(f"{name!r} is declared both as class and marker")
    for name, body in class_stmts:
        ast.classes[name] = res.resolve_class(name, body)
    if root is None:
        ast.root = class_stmts[0][0]
    else:
        if root.text not in ast.classes:
            raise SpecError(f"undeclared root {root.text!r}", root.line, root.col)
        ast.root = root.text
    return ast


def _format_alt(alt: Alternative) -> str:
    parts = []
    if alt.constructor:
        parts.append(alt.constructor)
    for f in alt.factors:
        if isinstance(f, Op):
            parts.append(f"{f.kind}({f.arg})")
        else:
            parts.append(f.name)
    default = 1 if alt.constructor else 0
    if alt.weight != default:
        parts.append(f"({alt.weight})")
    if alt.frequency is not None:
        parts.append(f"[{alt.frequency!r}]")
    return " ".join(parts)


def format_spec(ast: SpecAst) -> str:
    """Render an AST back to DSL text; ``parse(format_spec(a)) == a``."""
    lines = []
    explicit = [m for m in ast.markers.values() if not m.implicit]
    if explicit:
        decl = " ".join(m.name + (f" [{m.frequency!r}]" if m.frequency is not None else "")
                        for m in explicit)
        lines.append(f"@marker {decl}.")
    lines.append(f"@root {ast.root}.")
    for name, cdef in ast.classes.items():
        alts = [_format_alt(a) for a in cdef.alternatives]
        pad = " " * (len(name) + 1)
        lines.append(f"{name} = " + f"\n{pad}| ".join(alts) + ".")
    return "\n".join(lines) + "\n"
