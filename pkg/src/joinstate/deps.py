"""Dependency relations between object names, kept as clique partitions.

A relation records which objects' pending obligations may wait on each
other.  Every relation the checker builds is a union of cliques, so the
partition-into-blocks form represents it exactly: two names are related iff
they share a block.  Merging two relations fails precisely when it would
relate a pair twice or close a cycle — both show up as a union of two
already-connected names.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable

Name = Hashable


class SelfDependencyError(Exception):
    def __init__(self, name):
        super().__init__(f"name depends on itself: {name}")
        self.name = name


@dataclass(frozen=True)
class Incompatible:
    """Witness that two relations cannot be merged: the offending pair."""

    u: Name
    v: Name


@dataclass(frozen=True)
class DependencyRelation:
    blocks: frozenset[frozenset[Name]]

    def __post_init__(self):
        assert all(len(b) >= 2 for b in self.blocks)

    def related(self, u: Name, v: Name) -> bool:
        return u != v and any(u in b and v in b for b in self.blocks)

    def names(self) -> frozenset[Name]:
        out: set[Name] = set()
        for b in self.blocks:
            out |= b
        return frozenset(out)

    def restrict(self, name: Name) -> "DependencyRelation":
        out = []
        for b in self.blocks:
            if name in b:
                b = b - {name}
            if len(b) >= 2:
                out.append(b)
        return DependencyRelation(frozenset(out))

    def __bool__(self) -> bool:
        return bool(self.blocks)


EMPTY_DEPS = DependencyRelation(frozenset())


def clique(names: Iterable[Name]) -> DependencyRelation:
    group = list(names)
    if len(set(group)) != len(group):
        dupes = [n for n in group if group.count(n) > 1]
        raise SelfDependencyError(dupes[0])
    if len(group) < 2:
        return EMPTY_DEPS
    return DependencyRelation(frozenset({frozenset(group)}))


def pair_rel(u: Name, v: Name) -> DependencyRelation:
    if u == v:
        raise SelfDependencyError(u)
    return clique([u, v])


def join(
    d1: DependencyRelation, d2: DependencyRelation
) -> DependencyRelation | Incompatible:
    """Merge two relations; Incompatible when they share a pair or their
    union closes a cycle (both surface as a union of connected names)."""
    parent: dict[Name, Name] = {}

    def find(x: Name) -> Name:
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        while parent.get(x, x) != x:
            parent[x], x = root, parent[x]
        return root

    for block in d1.blocks:
        it = iter(block)
        first = find(next(it))
        for other in it:
            parent[find(other)] = first
    for block in d2.blocks:
        members = list(block)
        first = members[0]
        for other in members[1:]:
            ru, rv = find(first), find(other)
            if ru == rv:
                return Incompatible(first, other)
            parent[rv] = ru

    groups: dict[Name, set[Name]] = {}
    for block in d1.blocks | d2.blocks:
        for name in block:
            groups.setdefault(find(name), set()).add(name)
    return DependencyRelation(
        frozenset(frozenset(g) for g in groups.values() if len(g) >= 2)
    )


def merge(d1: DependencyRelation, d2: DependencyRelation) -> DependencyRelation:
    """Coarsest common refinement-free union: connect everything either
    relation connects, without the incompatibility check.  Used where the two
    relations describe mutually exclusive branches."""
    result = join(d1, d2)
    if isinstance(result, Incompatible):
        # Redo the union ignoring the clash: union-find over all blocks.
        parent: dict[Name, Name] = {}

        def find(x: Name) -> Name:
            while parent.get(x, x) != x:
                x = parent[x]
            return x

        for block in d1.blocks | d2.blocks:
            it = iter(block)
            first = find(next(it))
            for other in it:
                parent[find(other)] = first
        groups: dict[Name, set[Name]] = {}
        for block in d1.blocks | d2.blocks:
            for name in block:
                groups.setdefault(find(name), set()).add(name)
        return DependencyRelation(
            frozenset(frozenset(g) for g in groups.values() if len(g) >= 2)
        )
    return result


def compatible(d1: DependencyRelation, d2: DependencyRelation) -> bool:
    return not isinstance(join(d1, d2), Incompatible)
