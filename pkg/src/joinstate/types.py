"""Behavioral type expressions over a table of named, possibly recursive definitions.

A type describes the multisets of messages ("configurations") that may be
concurrently targeted at an object:

    0           absurd, no valid configuration
    1           only the empty configuration
    m(t1..tn)   exactly one m-tagged message, arguments used at t1..tn
    t + s       either t or s
    t . s       both t and s, by possibly concurrent senders
    *t          any number of interleaved copies of t

Recursion goes through a table of named definitions; reference cycles are
only allowed through message-argument positions (contractiveness), so every
type has a finite head unfolding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


class TypeDeclError(Exception):
    """Raised for ill-formed type declarations (unknown name, head cycle, ...)."""


@dataclass(frozen=True)
class TypeExpr:
    __slots__ = ()


@dataclass(frozen=True)
class Zero(TypeExpr):
    __slots__ = ()


@dataclass(frozen=True)
class One(TypeExpr):
    __slots__ = ()


@dataclass(frozen=True)
class Base(TypeExpr):
    """A builtin value type (numbers, booleans): usable, nullable, no messages."""

    name: str


@dataclass(frozen=True)
class Msg(TypeExpr):
    tag: str
    args: tuple[TypeExpr, ...] = ()


@dataclass(frozen=True)
class Sum(TypeExpr):
    parts: tuple[TypeExpr, ...]


@dataclass(frozen=True)
class Prod(TypeExpr):
    parts: tuple[TypeExpr, ...]


@dataclass(frozen=True)
class Star(TypeExpr):
    body: TypeExpr


@dataclass(frozen=True)
class Ref(TypeExpr):
    name: str


ZERO = Zero()
ONE = One()
NUMBER = Base("#Number")
BOOL = Base("#Bool")

BUILTIN_TYPES: dict[str, TypeExpr] = {"#Number": NUMBER, "#Bool": BOOL}

_RANK = {Zero: 0, One: 1, Base: 2, Msg: 3, Ref: 4, Star: 5, Prod: 6, Sum: 7}


def sort_key(t: TypeExpr):
    r = _RANK[type(t)]
    if isinstance(t, (Zero, One)):
        return (r,)
    if isinstance(t, Base):
        return (r, t.name)
    if isinstance(t, Msg):
        return (r, t.tag, tuple(sort_key(a) for a in t.args))
    if isinstance(t, Ref):
        return (r, t.name)
    if isinstance(t, Star):
        return (r, sort_key(t.body))
    return (r, tuple(sort_key(p) for p in t.parts))


def sum_of(parts: Iterable[TypeExpr]) -> TypeExpr:
    return normalize(Sum(tuple(parts)))


def prod_of(parts: Iterable[TypeExpr]) -> TypeExpr:
    return normalize(Prod(tuple(parts)))


def normalize(t: TypeExpr) -> TypeExpr:
    """Canonical form: flattened, sorted, with the unit/absorbing laws applied.

    Normalization preserves the configuration semantics; it is idempotent and
    gives deterministic keys for memoization.
    """
    if isinstance(t, (Zero, One, Base, Ref)):
        return t
    if isinstance(t, Msg):
        return Msg(t.tag, tuple(normalize(a) for a in t.args))
    if isinstance(t, Star):
        body = normalize(t.body)
        if isinstance(body, (Zero, One, Base)):
            return ONE
        if isinstance(body, Star):
            return body
        return Star(body)
    if isinstance(t, Prod):
        flat: list[TypeExpr] = []
        for p in t.parts:
            p = normalize(p)
            if isinstance(p, Zero):
                return ZERO
            if isinstance(p, One):
                continue
            if isinstance(p, Prod):
                flat.extend(p.parts)
            else:
                flat.append(p)
        if len(flat) > 1:
            flat = [p for p in flat if not isinstance(p, Base)]
        if not flat:
            return ONE
        if len(flat) == 1:
            return flat[0]
        flat.sort(key=sort_key)
        return Prod(tuple(flat))
    if isinstance(t, Sum):
        flat = []
        for p in t.parts:
            p = normalize(p)
            if isinstance(p, Zero):
                continue
            if isinstance(p, Sum):
                flat.extend(p.parts)
            else:
                flat.append(p)
        uniq = sorted(set(flat), key=sort_key)
        if not uniq:
            return ZERO
        if len(uniq) == 1:
            return uniq[0]
        return Sum(tuple(uniq))
    raise TypeError(f"not a type expression: {t!r}")


def render(t: TypeExpr, *, parens: bool = False) -> str:
    """Print a type in the surface syntax."""
    if isinstance(t, Zero):
        return "0"
    if isinstance(t, One):
        return "1"
    if isinstance(t, (Base, Ref)):
        return t.name
    if isinstance(t, Msg):
        if not t.args:
            return t.tag
        return f"{t.tag}({', '.join(render(a) for a in t.args)})"
    if isinstance(t, Star):
        return f"*{render(t.body, parens=True)}"
    if isinstance(t, Prod):
        s = " . ".join(render(p, parens=True) for p in t.parts)
        return f"({s})" if parens else s
    if isinstance(t, Sum):
        s = " + ".join(render(p, parens=isinstance(p, Sum)) for p in t.parts)
        return f"({s})" if parens else s
    raise TypeError(f"not a type expression: {t!r}")


def _refs(t: TypeExpr, head_only: bool) -> Iterator[str]:
    if isinstance(t, Ref):
        yield t.name
    elif isinstance(t, Msg):
        if not head_only:
            for a in t.args:
                yield from _refs(a, head_only)
    elif isinstance(t, Star):
        yield from _refs(t.body, head_only)
    elif isinstance(t, (Sum, Prod)):
        for p in t.parts:
            yield from _refs(p, head_only)


def _check_arities(name: str, t: TypeExpr, seen: dict[str, int]) -> None:
    if isinstance(t, Msg):
        if seen.setdefault(t.tag, len(t.args)) != len(t.args):
            raise TypeDeclError(
                f"tag {t.tag} used with arities {seen[t.tag]} and {len(t.args)} in {name}"
            )
        for a in t.args:
            _check_arities(name, a, seen)
    elif isinstance(t, Star):
        _check_arities(name, t.body, seen)
    elif isinstance(t, (Sum, Prod)):
        for p in t.parts:
            _check_arities(name, p, seen)


def resolve_types(decls: Iterable[tuple[str, TypeExpr]]) -> dict[str, TypeExpr]:
    """Build a type table from declarations, rejecting unknown names,
    duplicates, inconsistent tag arities and head-position reference cycles."""
    table: dict[str, TypeExpr] = dict(BUILTIN_TYPES)
    for name, expr in decls:
        if name in table:
            raise TypeDeclError(f"duplicate type declaration {name}")
        table[name] = normalize(expr)

    for name, expr in table.items():
        for ref in _refs(expr, head_only=False):
            if ref not in table:
                raise TypeDeclError(f"unknown type name {ref} in {name}")
        _check_arities(name, expr, {})

    # Head-position references must form an acyclic graph so that every
    # type has a finite head unfolding.
    color: dict[str, int] = {}

    def visit(name: str, trail: tuple[str, ...]) -> None:
        state = color.get(name)
        if state == 2:
            return
        if state == 1:
            cycle = " -> ".join(trail + (name,))
            raise TypeDeclError(f"head-position reference cycle: {cycle}")
        color[name] = 1
        for ref in _refs(table[name], head_only=True):
            visit(ref, trail + (name,))
        color[name] = 2

    for name in table:
        visit(name, ())
    return table


# A configuration is a multiset of message types, kept as a sorted tuple of
# normalized Msg nodes.
Config = tuple[Msg, ...]

EMPTY_CONFIG: Config = ()


def config_of(msgs: Iterable[Msg]) -> Config:
    return tuple(sorted((normalize(m) for m in msgs), key=sort_key))  # type: ignore[arg-type]


def config_tags(config: Config) -> tuple[str, ...]:
    return tuple(sorted(m.tag for m in config))


class TypeAlgebra:
    """Structural operations over a fixed type table.

    All results are memoized; instances are cheap to share between callers
    that only read them.
    """

    def __init__(self, table: dict[str, TypeExpr] | None = None):
        self.table: dict[str, TypeExpr] = dict(BUILTIN_TYPES)
        if table:
            self.table.update({k: normalize(v) for k, v in table.items()})
        self._nullable: dict[TypeExpr, bool] = {}
        self._heads: dict[TypeExpr, frozenset[Msg]] = {}
        self._deriv: dict[tuple[TypeExpr, str], TypeExpr] = {}
        self._ederiv: dict[tuple[TypeExpr, Msg], TypeExpr] = {}
        self._enum: dict[tuple[TypeExpr, int], frozenset[Config]] = {}

    def unfold(self, t: TypeExpr) -> TypeExpr:
        while isinstance(t, Ref):
            try:
                t = self.table[t.name]
            except KeyError:
                raise TypeDeclError(f"unknown type name {t.name}") from None
        return t

    def nullable(self, t: TypeExpr) -> bool:
        """Whether the empty configuration is valid, i.e. t <= 1."""
        cached = self._nullable.get(t)
        if cached is not None:
            return cached
        if isinstance(t, Ref):
            r = self.nullable(self.unfold(t))
        elif isinstance(t, (One, Base, Star)):
            r = True
        elif isinstance(t, (Zero, Msg)):
            r = False
        elif isinstance(t, Sum):
            r = any(self.nullable(p) for p in t.parts)
        elif isinstance(t, Prod):
            r = all(self.nullable(p) for p in t.parts)
        else:
            raise TypeError(f"not a type expression: {t!r}")
        self._nullable[t] = r
        return r

    def relevant(self, t: TypeExpr) -> bool:
        return not self.nullable(t)

    def usable(self, t: TypeExpr) -> bool:
        """Whether at least one valid configuration exists."""
        if isinstance(t, Ref):
            return self.usable(self.unfold(t))
        if isinstance(t, Zero):
            return False
        if isinstance(t, (One, Base, Msg, Star)):
            return True
        if isinstance(t, Sum):
            return any(self.usable(p) for p in t.parts)
        if isinstance(t, Prod):
            return all(self.usable(p) for p in t.parts)
        raise TypeError(f"not a type expression: {t!r}")

    def heads(self, t: TypeExpr) -> frozenset[Msg]:
        """All message types in the head unfolding (argument positions excluded)."""
        cached = self._heads.get(t)
        if cached is not None:
            return cached
        if isinstance(t, (Zero, One, Base)):
            r: frozenset[Msg] = frozenset()
        elif isinstance(t, Msg):
            r = frozenset({normalize(t)})  # type: ignore[arg-type]
        elif isinstance(t, Star):
            r = self.heads(t.body)
        elif isinstance(t, (Sum, Prod)):
            r = frozenset().union(*(self.heads(p) for p in t.parts))
        elif isinstance(t, Ref):
            r = self.heads(self.unfold(t))
        else:
            raise TypeError(f"not a type expression: {t!r}")
        self._heads[t] = r
        return r

    def derivative(self, t: TypeExpr, tag: str) -> TypeExpr:
        """Residual protocol after one message with the given tag (tag-only match)."""
        t = normalize(t)
        key = (t, tag)
        cached = self._deriv.get(key)
        if cached is not None:
            return cached
        r = normalize(self._derivative(t, tag))
        self._deriv[key] = r
        return r

    def _derivative(self, t: TypeExpr, tag: str) -> TypeExpr:
        if isinstance(t, (Zero, One, Base)):
            return ZERO
        if isinstance(t, Msg):
            return ONE if t.tag == tag else ZERO
        if isinstance(t, Sum):
            return Sum(tuple(self._derivative(p, tag) for p in t.parts))
        if isinstance(t, Prod):
            terms = []
            for i, p in enumerate(t.parts):
                rest = t.parts[:i] + (self._derivative(p, tag),) + t.parts[i + 1 :]
                terms.append(Prod(rest))
            return Sum(tuple(terms))
        if isinstance(t, Star):
            return Prod((self._derivative(t.body, tag), t))
        if isinstance(t, Ref):
            return self._derivative(self.unfold(t), tag)
        raise TypeError(f"not a type expression: {t!r}")

    def derivative_config(self, t: TypeExpr, tags: Iterable[str]) -> TypeExpr:
        r = normalize(t)
        for tag in tags:
            r = self.derivative(r, tag)
        return r

    def exact_derivative(self, t: TypeExpr, msg: Msg) -> TypeExpr:
        """Like derivative, but consuming one specific message type (tag and
        argument types must match).  Ground truth for enumeration."""
        t = normalize(t)
        msg = normalize(msg)  # type: ignore[assignment]
        key = (t, msg)
        cached = self._ederiv.get(key)
        if cached is not None:
            return cached
        r = normalize(self._exact_derivative(t, msg))
        self._ederiv[key] = r
        return r

    def _exact_derivative(self, t: TypeExpr, msg: Msg) -> TypeExpr:
        if isinstance(t, (Zero, One, Base)):
            return ZERO
        if isinstance(t, Msg):
            return ONE if normalize(t) == msg else ZERO
        if isinstance(t, Sum):
            return Sum(tuple(self._exact_derivative(p, msg) for p in t.parts))
        if isinstance(t, Prod):
            terms = []
            for i, p in enumerate(t.parts):
                rest = t.parts[:i] + (self._exact_derivative(p, msg),) + t.parts[i + 1 :]
                terms.append(Prod(rest))
            return Sum(tuple(terms))
        if isinstance(t, Star):
            return Prod((self._exact_derivative(t.body, msg), t))
        if isinstance(t, Ref):
            return self._exact_derivative(self.unfold(t), msg)
        raise TypeError(f"not a type expression: {t!r}")

    def enumerate_configs(self, t: TypeExpr, max_size: int) -> frozenset[Config]:
        """All valid configurations with at most max_size messages, computed by
        breadth-first search over exact derivatives."""
        t = normalize(t)
        key = (t, max_size)
        cached = self._enum.get(key)
        if cached is not None:
            return cached
        out: set[Config] = set()
        if self.nullable(t):
            out.add(EMPTY_CONFIG)
        if max_size > 0:
            for msg in sorted(self.heads(t), key=sort_key):
                rest = self.exact_derivative(t, msg)
                if isinstance(rest, Zero):
                    continue
                for cfg in self.enumerate_configs(rest, max_size - 1):
                    out.add(config_of((msg,) + cfg))
        r = frozenset(out)
        self._enum[key] = r
        return r
