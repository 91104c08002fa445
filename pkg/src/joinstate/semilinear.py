"""Semantic predicates over configuration sets, via Parikh images.

A type's configurations, projected to counts per message slot, form a
semilinear set: a finite union of linear sets (base vector plus any natural
combination of period vectors).  On that representation subtyping, liveness
and argument determinacy become vector problems.

Subtyping is exact whenever it answers No or proves inclusion through the
syntactic fast path; otherwise it enumerates period combinations up to a
bound and answers YesBounded, which callers may treat as success with a
recorded caveat.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .types import (
    Config,
    Msg,
    TypeAlgebra,
    TypeExpr,
    Zero,
    normalize,
    sort_key,
)

Vector = tuple[int, ...]


@dataclass(frozen=True)
class LinearSet:
    base: Vector
    periods: frozenset[Vector]


# A slot is a normalized message type; the alphabet fixes coordinate order.
Alphabet = tuple[Msg, ...]


def _zero(n: int) -> Vector:
    return (0,) * n


def _add(u: Vector, v: Vector) -> Vector:
    return tuple(a + b for a, b in zip(u, v))


def _scale_add(u: Vector, v: Vector, k: int) -> Vector:
    return tuple(a + k * b for a, b in zip(u, v))


def joint_alphabet(alg: TypeAlgebra, *types: TypeExpr) -> Alphabet:
    slots: set[Msg] = set()
    for t in types:
        slots |= alg.heads(t)
    alphabet = tuple(sorted(slots, key=sort_key))
    arities: dict[str, int] = {}
    for m in alphabet:
        if arities.setdefault(m.tag, len(m.args)) != len(m.args):
            raise ValueError(f"tag {m.tag} used with inconsistent arities")
    return alphabet


def _linear_member(v: Vector, base: Vector, periods: Sequence[Vector]) -> bool:
    deficit = tuple(a - b for a, b in zip(v, base))
    if any(d < 0 for d in deficit):
        return False
    if not any(deficit):
        return True

    def search(d: Vector, ps: Sequence[Vector]) -> bool:
        if not any(d):
            return True
        if not ps:
            return False
        p, rest = ps[0], ps[1:]
        k = 0
        cur = d
        while all(c >= 0 for c in cur):
            if search(cur, rest):
                return True
            k += 1
            cur = tuple(c - e for c, e in zip(d, tuple(k * x for x in p)))
        return False

    return search(deficit, [p for p in periods if any(p)])


def member(v: Vector, components: Iterable[LinearSet]) -> bool:
    return any(_linear_member(v, c.base, sorted(c.periods)) for c in components)


def _subsumed(a: LinearSet, b: LinearSet) -> bool:
    return a.periods <= b.periods and _linear_member(a.base, b.base, sorted(b.periods))


def _prune(components: list[LinearSet]) -> list[LinearSet]:
    out: list[LinearSet] = []
    for c in components:
        if any(_subsumed(c, d) for d in out):
            continue
        out = [d for d in out if not _subsumed(d, c)]
        out.append(c)
    return out


def parikh(alg: TypeAlgebra, t: TypeExpr, alphabet: Alphabet) -> list[LinearSet]:
    """Components of the Parikh image of t over the given slot alphabet."""
    n = len(alphabet)
    index = {m: i for i, m in enumerate(alphabet)}

    def go(t: TypeExpr) -> list[LinearSet]:
        t = normalize(t)
        heads = alg.heads(t)
        if not heads:
            # Zero has no configurations; everything else message-free is just 1.
            if isinstance(t, Zero) or not alg.usable(t):
                return []
            return [LinearSet(_zero(n), frozenset())]
        if isinstance(t, Msg):
            unit = tuple(1 if i == index[normalize(t)] else 0 for i in range(n))
            return [LinearSet(unit, frozenset())]
        kind = type(t).__name__
        if kind == "Sum":
            out: list[LinearSet] = []
            for p in t.parts:  # type: ignore[attr-defined]
                out.extend(go(p))
            return _prune(out)
        if kind == "Prod":
            acc = [LinearSet(_zero(n), frozenset())]
            for p in t.parts:  # type: ignore[attr-defined]
                parts = go(p)
                acc = _prune(
                    [
                        LinearSet(_add(a.base, b.base), a.periods | b.periods)
                        for a in acc
                        for b in parts
                    ]
                )
                if not acc:
                    return []
            return acc
        if kind == "Star":
            body = _prune(go(t.body))  # type: ignore[attr-defined]
            out = [LinearSet(_zero(n), frozenset())]
            for subset in itertools.chain.from_iterable(
                itertools.combinations(body, r) for r in range(1, len(body) + 1)
            ):
                if all(not comp.periods for comp in subset):
                    # Pure bases: any number of copies of each, including zero,
                    # so the whole subset collapses to periods over origin.
                    periods = {comp.base for comp in subset if any(comp.base)}
                    out.append(LinearSet(_zero(n), frozenset(periods)))
                    continue
                base = _zero(n)
                periods = set()
                for comp in subset:
                    base = _add(base, comp.base)
                    periods |= comp.periods
                    if any(comp.base):
                        periods.add(comp.base)
                out.append(LinearSet(base, frozenset(periods)))
            return _prune(out)
        if kind == "Ref":
            return go(alg.unfold(t))
        raise TypeError(f"not a type expression: {t!r}")

    return go(t)


# --- subtyping -------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    kind: str  # "yes" | "no" | "yes-bounded"
    counterexample: Config | None = None
    bound: int | None = None

    @property
    def holds(self) -> bool:
        return self.kind != "no"


YES = Verdict("yes")


def _config_of_vector(v: Vector, alphabet: Alphabet) -> Config:
    out: list[Msg] = []
    for count, slot in zip(v, alphabet):
        out.extend([slot] * count)
    return tuple(out)


def _tag_counts(v: Vector, alphabet: Alphabet) -> tuple[tuple[str, int], ...]:
    counts: dict[str, int] = {}
    for count, slot in zip(v, alphabet):
        if count:
            counts[slot.tag] = counts.get(slot.tag, 0) + count
    return tuple(sorted(counts.items()))


def _transport_exists(
    supply: list[int], demand: list[int], allowed: list[list[bool]]
) -> bool:
    """Whether all supply units can be distributed into demand along allowed
    edges.  Instances are tiny (a handful of units), so backtracking suffices."""
    if sum(supply) != sum(demand):
        return False

    def place(i: int, demand: list[int]) -> bool:
        if i == len(supply):
            return True
        cols = [j for j in range(len(demand)) if allowed[i][j]]

        def split(k: int, need: int) -> bool:
            if need == 0:
                return place(i + 1, demand)
            if k == len(cols):
                return False
            j = cols[k]
            for take in range(min(need, demand[j]), -1, -1):
                demand[j] -= take
                if split(k + 1, need - take):
                    return True
                demand[j] += take
            return False

        return split(0, supply[i])

    return place(0, list(demand))


class SubtypeEngine:
    """Decides `t <= s` with coinductive memoization and a bounded fallback.

    One engine instance owns its caches; share an instance to amortize them.
    """

    def __init__(self, alg: TypeAlgebra, bound: int = 4):
        self.alg = alg
        self.bound = bound
        self._cache: dict[tuple[TypeExpr, TypeExpr], Verdict] = {}
        self._in_progress: set[tuple[TypeExpr, TypeExpr]] = set()
        self._parikh: dict[tuple[TypeExpr, Alphabet], list[LinearSet]] = {}

    def subtype(self, t: TypeExpr, s: TypeExpr) -> Verdict:
        t, s = normalize(t), normalize(s)
        key = (t, s)
        if key in self._cache:
            return self._cache[key]
        if key in self._in_progress:
            return YES  # coinductive assumption
        outermost = not self._in_progress
        self._in_progress.add(key)
        try:
            verdict = self._subtype(t, s)
        finally:
            self._in_progress.discard(key)
        # Positive verdicts reached under pending assumptions are provisional;
        # only negative ones are stable enough to keep in that case.
        if outermost or not verdict.holds:
            self._cache[key] = verdict
        return verdict

    def _parikh_of(self, t: TypeExpr, alphabet: Alphabet) -> list[LinearSet]:
        key = (t, alphabet)
        cached = self._parikh.get(key)
        if cached is None:
            cached = self._parikh[key] = parikh(self.alg, t, alphabet)
        return cached

    def equivalent(self, t: TypeExpr, s: TypeExpr) -> Verdict:
        forward = self.subtype(t, s)
        if not forward.holds:
            return forward
        backward = self.subtype(s, t)
        if not backward.holds:
            return backward
        for v in (forward, backward):
            if v.kind == "yes-bounded":
                return v
        return YES

    def _args_ok(self, sup: Msg, sub: Msg) -> bool:
        # Matching a supertype-side message against a subtype-side one:
        # arguments are contravariant.
        if sup.tag != sub.tag or len(sup.args) != len(sub.args):
            return False
        return all(self.subtype(a, b).holds for a, b in zip(sup.args, sub.args))

    def _subtype(self, t: TypeExpr, s: TypeExpr) -> Verdict:
        alg = self.alg
        if t == s:
            return YES
        if alg.nullable(s) and not alg.nullable(t):
            return Verdict("no", counterexample=())
        alphabet = joint_alphabet(alg, t, s)
        t_comps = self._parikh_of(t, alphabet)
        s_comps = self._parikh_of(s, alphabet)
        all_fast = True
        for comp in s_comps:
            if self._fast_include(comp, t_comps, alphabet):
                continue
            all_fast = False
            missing = self._bounded_include(comp, t_comps, alphabet)
            if missing is not None:
                return Verdict("no", counterexample=missing)
        if all_fast:
            return YES
        return Verdict("yes-bounded", bound=self.bound)

    def _fast_include(
        self, comp: LinearSet, t_comps: list[LinearSet], alphabet: Alphabet
    ) -> bool:
        """Try to embed a whole supertype component into one subtype component
        through a single slot-to-slot map."""
        n = len(alphabet)
        used = [
            i
            for i in range(n)
            if comp.base[i] or any(p[i] for p in comp.periods)
        ]
        candidates: list[list[int]] = []
        for i in used:
            cands = [j for j in range(n) if self._args_ok(alphabet[i], alphabet[j])]
            if not cands:
                return False
            candidates.append(cands)
        if not used:
            # Only the zero vector; nullability was already checked.
            return True

        def remap(v: Vector, sigma: tuple[int, ...]) -> Vector:
            out = [0] * n
            for i, j in zip(used, sigma):
                out[j] += v[i]
            return tuple(out)

        total = 1
        for c in candidates:
            total *= len(c)
            if total > 256:
                return False
        for sigma in itertools.product(*candidates):
            for target in t_comps:
                if not all(
                    remap(p, sigma) in target.periods for p in comp.periods if any(p)
                ):
                    continue
                if _linear_member(
                    remap(comp.base, sigma), target.base, sorted(target.periods)
                ):
                    return True
        return False

    def _bounded_include(
        self, comp: LinearSet, t_comps: list[LinearSet], alphabet: Alphabet
    ) -> Config | None:
        """Check vectors of comp with period-coefficient sum <= bound; return a
        counterexample configuration if one has no match."""
        periods = sorted(p for p in comp.periods if any(p))
        for coeffs in _bounded_coeffs(len(periods), self.bound):
            v = comp.base
            for p, k in zip(periods, coeffs):
                v = _scale_add(v, p, k)
            if not self._vector_matches(v, t_comps, alphabet):
                return _config_of_vector(v, alphabet)
        return None

    def _vector_matches(
        self, v: Vector, t_comps: list[LinearSet], alphabet: Alphabet
    ) -> bool:
        want_tags = _tag_counts(v, alphabet)
        weight = sum(v)
        for target in t_comps:
            for w in _vectors_of_weight(target, weight):
                if _tag_counts(w, alphabet) != want_tags:
                    continue
                if self._transport_ok(v, w, alphabet):
                    return True
        return False

    def _transport_ok(self, v: Vector, w: Vector, alphabet: Alphabet) -> bool:
        tags = {alphabet[i].tag for i in range(len(v)) if v[i]}
        for tag in tags:
            sup = [i for i in range(len(v)) if v[i] and alphabet[i].tag == tag]
            sub = [j for j in range(len(w)) if w[j] and alphabet[j].tag == tag]
            supply = [v[i] for i in sup]
            demand = [w[j] for j in sub]
            allowed = [
                [self._args_ok(alphabet[i], alphabet[j]) for j in sub] for i in sup
            ]
            if not _transport_exists(supply, demand, allowed):
                return False
        return True


def _bounded_coeffs(n: int, total: int) -> Iterable[tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    for head in range(total + 1):
        for rest in _bounded_coeffs(n - 1, total - head):
            yield (head,) + rest


def _vectors_of_weight(comp: LinearSet, weight: int) -> Iterable[Vector]:
    """All vectors of the linear set with the given total weight (periods have
    positive weight, so the search is finite)."""
    base_weight = sum(comp.base)
    if base_weight > weight:
        return
    periods = sorted(p for p in comp.periods if any(p))

    def go(v: Vector, remaining: int, ps: Sequence[Vector]) -> Iterable[Vector]:
        if remaining == 0:
            yield v
            return
        if not ps:
            return
        p, rest = ps[0], ps[1:]
        pw = sum(p)
        k = 0
        while k * pw <= remaining:
            yield from go(_scale_add(v, p, k), remaining - k * pw, rest)
            k += 1

    yield from go(comp.base, weight - base_weight, periods)


# --- liveness and argument determinacy ------------------------------------

TagMultiset = Mapping[str, int]


def live(alg: TypeAlgebra, t: TypeExpr, patterns: Iterable[TagMultiset]) -> bool:
    """Whether every configuration of t that triggers none of the given
    pattern tag multisets carries only irrelevant-argument messages."""
    t = normalize(t)
    alphabet = joint_alphabet(alg, t)
    relevant_slots = [
        i
        for i, slot in enumerate(alphabet)
        if any(alg.relevant(a) for a in slot.args)
    ]
    if not relevant_slots:
        return True
    pats = [dict(p) for p in patterns]
    tag_slots: dict[str, list[int]] = {}
    for i, slot in enumerate(alphabet):
        tag_slots.setdefault(slot.tag, []).append(i)

    # For each pattern B we pick one tag on which the configuration falls
    # short (count <= B(tag) - 1); a pattern tag absent from the alphabet
    # always falls short, imposing no constraint.
    choice_sets: list[list[tuple[str, int] | None]] = []
    for pat in pats:
        options: list[tuple[str, int] | None] = []
        for tag, k in pat.items():
            if tag not in tag_slots:
                options = [None]
                break
            options.append((tag, k - 1))
        choice_sets.append(options)

    for comp in parikh(alg, t, alphabet):
        for choice in itertools.product(*choice_sets):
            bounds: dict[str, int] = {}
            for c in choice:
                if c is None:
                    continue
                tag, cap = c
                bounds[tag] = min(bounds.get(tag, cap), cap)

            def within(v: Vector) -> bool:
                return all(
                    sum(v[i] for i in tag_slots[tag]) <= cap
                    for tag, cap in bounds.items()
                )

            if not within(comp.base):
                continue
            # Is there a configuration under these bounds that carries a
            # relevant-argument message?  Upper bounds shrink monotonically as
            # periods are added, and the single lower bound (one message at a
            # relevant slot) needs at most one period, so checking the base
            # plus at most one period is complete.
            for c in relevant_slots:
                if comp.base[c] >= 1 or any(
                    p[c] >= 1 and within(_add(comp.base, p)) for p in comp.periods
                ):
                    return False
    return True


@dataclass(frozen=True)
class ArgVerdict:
    kind: str  # "determinate" | "ambiguous" | "dead"
    assignment: dict[str, Msg] | None = None


AMBIGUOUS = ArgVerdict("ambiguous")
DEAD = ArgVerdict("dead")


def arg_determinate(alg: TypeAlgebra, t: TypeExpr, tags: TagMultiset) -> ArgVerdict:
    """Resolve a tag multiset against t: which message types must those tags
    denote in any configuration extending the multiset?"""
    t = normalize(t)
    alphabet = joint_alphabet(alg, t)
    n = len(alphabet)
    tag_slots: dict[str, list[int]] = {}
    for i, slot in enumerate(alphabet):
        tag_slots.setdefault(slot.tag, []).append(i)
    if any(tag not in tag_slots for tag in tags):
        return DEAD

    # All ways of attributing each tag occurrence to a slot class.
    per_tag: list[list[tuple[int, ...]]] = []
    tag_order = sorted(tags)
    for tag in tag_order:
        k = tags[tag]
        per_tag.append(
            list(itertools.combinations_with_replacement(tag_slots[tag], k))
        )
    components = parikh(alg, t, alphabet)

    feasible: set[tuple[int, ...]] = set()
    for combo in itertools.product(*per_tag):
        demand = [0] * n
        for group in combo:
            for i in group:
                demand[i] += 1
        for comp in components:
            if all(
                demand[i] <= comp.base[i]
                or any(p[i] > 0 for p in comp.periods)
                for i in range(n)
            ):
                feasible.add(tuple(demand))
                break
    if not feasible:
        return DEAD
    if len(feasible) > 1:
        return AMBIGUOUS
    (demand,) = feasible
    assignment: dict[str, Msg] = {}
    for i, count in enumerate(demand):
        if not count:
            continue
        slot = alphabet[i]
        if slot.tag in assignment and assignment[slot.tag] != slot:
            return AMBIGUOUS
        assignment[slot.tag] = slot
    return ArgVerdict("determinate", assignment=assignment)
