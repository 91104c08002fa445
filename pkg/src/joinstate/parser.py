"""Lexer and recursive-descent parser for the surface language.

A source file is an optional block of `type` declarations followed by a
process.  Classes, synchronous calls (`o.M(...)`), `let`, `if` and anonymous
reaction blocks are surface conveniences that the desugarer lowers away.

`&` means three different things depending on position: between processes it
is parallel composition, inside a send after `!(` it joins messages into one
molecule, and inside a join pattern it joins the pattern's messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import types as ty
from .types import TypeExpr

Pos = tuple[int, int]


class ParseError(Exception):
    def __init__(self, message: str, pos: Pos):
        super().__init__(f"{pos[0]}:{pos[1]}: {message}")
        self.pos = pos
        self.plain_message = message


# --- surface AST ----------------------------------------------------------


@dataclass
class SExpr:
    pass


@dataclass
class SVar(SExpr):
    name: str
    pos: Pos


@dataclass
class SNum(SExpr):
    value: float


@dataclass
class SBool(SExpr):
    value: bool


@dataclass
class SBinOp(SExpr):
    op: str
    left: SExpr
    right: SExpr
    pos: Pos


@dataclass
class SCall(SExpr):
    """Synchronous call o.M(args): send plus implicit reply continuation."""

    target: str
    tag: str
    args: list[SExpr]
    pos: Pos


@dataclass
class SBlock(SExpr):
    """Anonymous reaction block in argument position."""

    rules: list["SRule"]
    pos: Pos


@dataclass
class SPatMsg:
    tag: str
    params: list[tuple[str, Optional[TypeExpr]]]
    pos: Pos


@dataclass
class SRule:
    pattern: list[SPatMsg]
    body: "SProc"


@dataclass
class SProc:
    pass


@dataclass
class SDone(SProc):
    pass


@dataclass
class SMsg:
    tag: str
    args: list[SExpr]
    pos: Pos


@dataclass
class SSend(SProc):
    target: str
    msgs: list[SMsg]
    pos: Pos


@dataclass
class SPar(SProc):
    parts: list[SProc]


@dataclass
class SNew(SProc):
    name: str
    type: TypeExpr
    rules: list[SRule]
    body: SProc
    pos: Pos


@dataclass
class SClass(SProc):
    name: str
    rules: list[SRule]
    body: SProc
    pos: Pos


@dataclass
class SLet(SProc):
    names: list[str]
    rhs: SExpr
    body: SProc
    pos: Pos


@dataclass
class SIf(SProc):
    cond: SExpr
    then: SProc
    els: SProc
    pos: Pos


@dataclass
class SurfaceAST:
    type_decls: list[tuple[str, TypeExpr]]
    process: SProc


# --- lexer ----------------------------------------------------------------

KEYWORDS = {
    "type",
    "and",
    "new",
    "class",
    "let",
    "in",
    "if",
    "then",
    "else",
    "done",
    "true",
    "false",
}

_TWO_CHAR = ("|>", "!=", "<=", ">=")
_ONE_CHAR = "!.,:()[]|&+-*/%=<>"


@dataclass
class Token:
    kind: str  # keyword text, "ident", "uident", "tyname", "number", symbol, "eof"
    text: str
    pos: Pos


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        pos = (line, col)
        if source.startswith("▶", i):
            tokens.append(Token("|>", "▶", pos))
            i += 1
            col += 1
            continue
        if source.startswith("·", i):
            tokens.append(Token(".", "·", pos))
            i += 1
            col += 1
            continue
        two = source[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token(two, two, pos))
            i += 2
            col += 2
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and not source[j + 1 : j + 2].isalpha():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            tokens.append(Token("number", source[i:j], pos))
            col += j - i
            i = j
            continue
        if c == "#":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            if j == i + 1:
                raise ParseError("bad type name", pos)
            tokens.append(Token("tyname", source[i:j], pos))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            if word in KEYWORDS:
                kind = word
            elif word[0].isupper():
                kind = "uident"
            else:
                kind = "ident"
            tokens.append(Token(kind, word, pos))
            col += j - i
            i = j
            continue
        if c in _ONE_CHAR:
            tokens.append(Token(c, c, pos))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", pos)
    tokens.append(Token("eof", "", (line, col)))
    return tokens


# --- parser ---------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def at(self, *kinds: str) -> bool:
        return self.tok.kind in kinds

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.tok.kind != kind:
            want = what or kind
            raise ParseError(f"expected {want}, found {self.tok.text!r}", self.tok.pos)
        return self.advance()

    # types

    def type_expr(self) -> TypeExpr:
        parts = [self.type_prod()]
        while self.at("+"):
            self.advance()
            parts.append(self.type_prod())
        return parts[0] if len(parts) == 1 else ty.Sum(tuple(parts))

    def type_prod(self) -> TypeExpr:
        parts = [self.type_star()]
        while self.at("."):
            self.advance()
            parts.append(self.type_star())
        return parts[0] if len(parts) == 1 else ty.Prod(tuple(parts))

    def type_star(self) -> TypeExpr:
        if self.at("*"):
            self.advance()
            return ty.Star(self.type_star())
        return self.type_atom()

    def type_atom(self) -> TypeExpr:
        t = self.tok
        if t.kind == "number" and t.text in ("0", "1"):
            self.advance()
            return ty.ZERO if t.text == "0" else ty.ONE
        if t.kind == "tyname":
            self.advance()
            if t.text in ty.BUILTIN_TYPES:
                return ty.BUILTIN_TYPES[t.text]
            return ty.Ref(t.text)
        if t.kind == "uident":
            self.advance()
            args: tuple[TypeExpr, ...] = ()
            if self.at("("):
                self.advance()
                lst = [self.type_expr()]
                while self.at(","):
                    self.advance()
                    lst.append(self.type_expr())
                self.expect(")")
                args = tuple(lst)
            return ty.Msg(t.text, args)
        if t.kind == "(":
            self.advance()
            inner = self.type_expr()
            self.expect(")")
            return inner
        raise ParseError(f"expected a type, found {t.text!r}", t.pos)

    # processes

    def program(self) -> SurfaceAST:
        decls: list[tuple[str, TypeExpr]] = []
        while self.at("type"):
            self.advance()
            while True:
                name = self.expect("tyname", "a type name").text
                self.expect("=")
                decls.append((name, self.type_expr()))
                if self.at("and"):
                    self.advance()
                    continue
                break
        proc = self.process()
        self.expect("eof", "end of input")
        return SurfaceAST(decls, proc)

    def process(self) -> SProc:
        parts = [self.proc_term()]
        while self.at("&"):
            self.advance()
            parts.append(self.proc_term())
        return parts[0] if len(parts) == 1 else SPar(parts)

    def proc_term(self) -> SProc:
        t = self.tok
        if t.kind == "done":
            self.advance()
            return SDone()
        if t.kind == "new":
            self.advance()
            name = self.name_token().text
            self.expect(":")
            decl = self.type_expr()
            if self.at("="):
                self.advance()
            self.expect("[")
            rules = self.rules()
            self.expect("]")
            self.expect("in")
            return SNew(name, decl, rules, self.process(), t.pos)
        if t.kind == "class":
            self.advance()
            name = self.expect("uident", "a class name").text
            self.expect("[")
            rules = self.rules()
            self.expect("]")
            # A class scopes over everything that follows it.
            return SClass(name, rules, self.process(), t.pos)
        if t.kind == "let":
            self.advance()
            names = [self.expect("ident", "a variable").text]
            while self.at(","):
                self.advance()
                names.append(self.expect("ident", "a variable").text)
            self.expect("=")
            rhs = self.expr()
            self.expect("in")
            return SLet(names, rhs, self.process(), t.pos)
        if t.kind == "if":
            self.advance()
            cond = self.expr()
            self.expect("then")
            then = self.process()
            self.expect("else")
            els = self.process()
            return SIf(cond, then, els, t.pos)
        if t.kind == "(":
            self.advance()
            inner = self.process()
            self.expect(")")
            return inner
        if t.kind in ("ident", "uident"):
            return self.send()
        raise ParseError(f"expected a process, found {t.text!r}", t.pos)

    def name_token(self) -> Token:
        if self.at("ident", "uident"):
            return self.advance()
        raise ParseError(f"expected a name, found {self.tok.text!r}", self.tok.pos)

    def send(self) -> SSend:
        target = self.name_token()
        self.expect("!")
        if self.at("("):
            self.advance()
            msgs = [self.message()]
            while self.at("&"):
                self.advance()
                msgs.append(self.message())
            self.expect(")")
        else:
            msgs = [self.message()]
        return SSend(target.text, msgs, target.pos)

    def message(self) -> SMsg:
        tag = self.expect("uident", "a message tag")
        args: list[SExpr] = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
            self.expect(")")
        return SMsg(tag.text, args, tag.pos)

    def rules(self) -> list[SRule]:
        out = [self.rule()]
        while self.at("|"):
            self.advance()
            out.append(self.rule())
        return out

    def rule(self) -> SRule:
        pattern = [self.pat_msg()]
        while self.at("&"):
            self.advance()
            pattern.append(self.pat_msg())
        self.expect("|>", "'|>' or '▶'")
        return SRule(pattern, self.process())

    def pat_msg(self) -> SPatMsg:
        tag = self.expect("uident", "a message tag")
        params: list[tuple[str, Optional[TypeExpr]]] = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                params.append(self.pat_param())
                while self.at(","):
                    self.advance()
                    params.append(self.pat_param())
            self.expect(")")
        return SPatMsg(tag.text, params, tag.pos)

    def pat_param(self) -> tuple[str, Optional[TypeExpr]]:
        name = self.expect("ident", "a pattern variable").text
        if self.at(":"):
            self.advance()
            return (name, self.type_expr())
        return (name, None)

    # expressions

    def expr(self) -> SExpr:
        left = self.additive()
        if self.at("=", "!=", "<", "<=", ">", ">="):
            op = self.advance()
            right = self.additive()
            text = "==" if op.kind == "=" else op.kind
            return SBinOp(text, left, right, op.pos)
        return left

    def additive(self) -> SExpr:
        left = self.multiplicative()
        while self.at("+", "-"):
            op = self.advance()
            left = SBinOp(op.kind, left, self.multiplicative(), op.pos)
        return left

    def multiplicative(self) -> SExpr:
        left = self.unary()
        while self.at("*", "/", "%"):
            op = self.advance()
            left = SBinOp(op.kind, left, self.unary(), op.pos)
        return left

    def unary(self) -> SExpr:
        if self.at("-"):
            op = self.advance()
            return SBinOp("-", SNum(0.0), self.unary(), op.pos)
        return self.primary()

    def primary(self) -> SExpr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return SNum(float(t.text))
        if t.kind in ("true", "false"):
            self.advance()
            return SBool(t.kind == "true")
        if t.kind == "(":
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "[":
            self.advance()
            rules = self.rules()
            self.expect("]")
            return SBlock(rules, t.pos)
        if t.kind in ("ident", "uident"):
            self.advance()
            if self.at("."):
                self.advance()
                tag = self.expect("uident", "a message tag")
                args: list[SExpr] = []
                if self.at("("):
                    self.advance()
                    if not self.at(")"):
                        args.append(self.expr())
                        while self.at(","):
                            self.advance()
                            args.append(self.expr())
                    self.expect(")")
                return SCall(t.text, tag.text, args, t.pos)
            return SVar(t.text, t.pos)
        raise ParseError(f"expected an expression, found {t.text!r}", t.pos)


def parse_program(source: str) -> SurfaceAST:
    return _Parser(tokenize(source)).program()


def parse_type(source: str) -> TypeExpr:
    """Parse a standalone type expression (used by the explain command)."""
    p = _Parser(tokenize(source))
    t = p.type_expr()
    p.expect("eof", "end of type")
    return t
