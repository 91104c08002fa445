"""Core process representation: what programs look like after desugaring.

A core program is built from four process forms — inert `done`, message
sends, parallel composition, and object definitions with join-pattern
reaction rules — plus a conditional and arithmetic over literals.  All
binders carry globally unique identities so later passes never worry about
shadowing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .types import TypeExpr

Pos = tuple[int, int]  # (line, column), 1-based


@dataclass(frozen=True)
class Name:
    """A resolved identifier: spelling plus unique binder id."""

    text: str
    uid: int

    def __repr__(self):
        return f"{self.text}#{self.uid}"


# Builtin objects have fixed negative ids.
SYSTEM = Name("System", -1)
NUMBER_OBJ = Name("Number", -2)
BUILTIN_OBJECTS = (SYSTEM, NUMBER_OBJ)


# --- expressions ----------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Expr):
    name: Name


@dataclass(frozen=True)
class NumLit(Expr):
    value: float


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * / % == != < <= > >=
    left: Expr
    right: Expr


# --- processes ------------------------------------------------------------


@dataclass
class Process:
    pass


@dataclass
class Done(Process):
    pass


@dataclass(frozen=True)
class SendMsg:
    tag: str
    args: tuple[Expr, ...] = ()


@dataclass
class Send(Process):
    target: Name
    molecule: tuple[SendMsg, ...]
    pos: Optional[Pos] = None


@dataclass
class Par(Process):
    parts: tuple[Process, ...]


@dataclass
class If(Process):
    cond: Expr
    then: Process
    els: Process
    pos: Optional[Pos] = None


@dataclass(frozen=True)
class PatMsg:
    tag: str
    params: tuple[Name, ...] = ()


@dataclass
class Rule:
    pattern: tuple[PatMsg, ...]
    body: Process


@dataclass(frozen=True)
class ClosureSpec:
    """How a desugared continuation object relates to its environment.

    `captured` are the outer names threaded through an initial CLOSURE
    message, positionally aligned with the CLOSURE pattern variables of the
    object's single rule.  `origin` records where the object's base protocol
    comes from: ("sync", target, tag) takes the trailing argument of that
    message slot, ("anon", receiver, tag, index) takes the indexed argument.
    The checker materializes the declared type from this."""

    captured: tuple[Name, ...]
    origin: tuple


@dataclass
class NewObj(Process):
    name: Name
    decl: Optional[TypeExpr]  # None when the type comes from a ClosureSpec
    rules: list[Rule]
    body: Process
    node_id: int = 0
    stateless: bool = False
    closure: Optional[ClosureSpec] = None
    pos: Optional[Pos] = None


@dataclass
class CoreProgram:
    table: dict[str, TypeExpr]
    process: Process
    source_name: str = "<input>"


def free_names(p: Process) -> set[Name]:
    """Free names of a process.  Binders are globally unique, so occurrences
    can be collected first and the bound names subtracted at the end."""
    used: set[Name] = set()
    bound: set[Name] = set()

    def expr(e: Expr):
        if isinstance(e, Var):
            used.add(e.name)
        elif isinstance(e, BinOp):
            expr(e.left)
            expr(e.right)

    def go(p: Process):
        if isinstance(p, Done):
            return
        if isinstance(p, Send):
            used.add(p.target)
            for m in p.molecule:
                for a in m.args:
                    expr(a)
        elif isinstance(p, Par):
            for q in p.parts:
                go(q)
        elif isinstance(p, If):
            expr(p.cond)
            go(p.then)
            go(p.els)
        elif isinstance(p, NewObj):
            bound.add(p.name)
            for rule in p.rules:
                bound.update(x for m in rule.pattern for x in m.params)
                go(rule.body)
            go(p.body)
        else:
            raise TypeError(f"not a process: {p!r}")

    go(p)
    return used - bound
