"""Static checking of core programs.

Two properties are established together:

* **protocol conformance** — every object's aggregate usage (the product of
  all message sends it receives, across parallel branches and reaction
  firings) refines its declared type, and every reaction leaves the object
  in a state its type permits;
* **deadlock freedom** — each send makes the receiving object depend on the
  objects passed as arguments; those dependencies must never relate the
  same pair twice or close a cycle, and every declared type must be live
  for the object's rule patterns (some rule fires in every reachable
  configuration that still owes messages).

The checker threads a usage environment (name -> type) bottom-up and a
dependency relation alongside it, reporting problems as diagnostics rather
than exceptions so one run surfaces as many issues as possible.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from . import types as ty
from .core import (
    BUILTIN_OBJECTS,
    NUMBER_OBJ,
    SYSTEM,
    BinOp,
    BoolLit,
    CoreProgram,
    Done,
    Expr,
    If,
    Name,
    NewObj,
    NumLit,
    Par,
    Process,
    Rule,
    Send,
    Var,
)
from .deps import (
    EMPTY_DEPS,
    DependencyRelation,
    Incompatible,
    SelfDependencyError,
    clique,
    join,
    merge,
)
from .semilinear import SubtypeEngine, arg_determinate, live
from .types import Msg, TypeAlgebra, TypeExpr, normalize, render

Pos = Optional[tuple[int, int]]

SYSTEM_TYPE = ty.Star(ty.Msg("Print", (ty.NUMBER,)))
NUMBER_TYPE = ty.Star(
    ty.Msg("Pow", (ty.NUMBER, ty.NUMBER, ty.Msg("Reply", (ty.NUMBER,))))
)
BUILTIN_DECLS: dict[Name, TypeExpr] = {SYSTEM: SYSTEM_TYPE, NUMBER_OBJ: NUMBER_TYPE}

CLOSURE_TAG = "CLOSURE"

DIAGNOSTIC_CODES = (
    "ProtocolViolation",
    "SelfDependency",
    "DuplicateArgument",
    "IncompatibleDeps",
    "NotLive",
    "AmbiguousArgs",
    "DeadReaction",
    "UnusableArg",
    "ObligationUnmet",
    "AritySumError",
)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    pos: Pos = None

    def __str__(self):
        where = f"{self.pos[0]}:{self.pos[1]}: " if self.pos else ""
        return f"{where}{self.code}: {self.message}"

    def to_json(self):
        out = {"code": self.code, "message": self.message}
        if self.pos:
            out["line"], out["column"] = self.pos
        return out


@dataclass
class ObjectInfo:
    name: Name
    decl: TypeExpr
    patterns: list[dict[str, int]]
    live: bool
    stateless: bool
    node_id: int

    def to_json(self):
        return {
            "name": str(self.name),
            "type": render(self.decl),
            "patterns": self.patterns,
            "live": self.live,
        }


@dataclass
class Report:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    objects: list[ObjectInfo] = field(default_factory=list)
    bounded_subtype_uses: list[dict] = field(default_factory=list)
    resolved: dict[int, TypeExpr] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "rejected" if self.diagnostics else "accepted"

    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]

    def to_json(self):
        return {
            "verdict": self.verdict,
            "diagnostics": [d.to_json() for d in self.diagnostics],
            "objects": [o.to_json() for o in self.objects],
            "boundedSubtypeUses": self.bounded_subtype_uses,
        }


Env = dict[Name, TypeExpr]


def _is_value_type(t: TypeExpr) -> bool:
    return isinstance(t, ty.Base)


class Checker:
    def __init__(self, program: CoreProgram, bound: int = 4):
        self.program = program
        self.alg = TypeAlgebra(program.table)
        self.engine = SubtypeEngine(self.alg, bound)
        self.report = Report()
        self.decls: dict[Name, TypeExpr] = dict(BUILTIN_DECLS)
        self.stateless: set[Name] = set(BUILTIN_OBJECTS)
        self.top_deps = EMPTY_DEPS

    # --- reporting helpers -------------------------------------------------

    def diag(self, code: str, message: str, pos: Pos = None):
        assert code in DIAGNOSTIC_CODES
        self.report.diagnostics.append(Diagnostic(code, message, pos))

    def require_subtype(
        self, t: TypeExpr, s: TypeExpr, context: str, pos: Pos, code: str
    ) -> bool:
        verdict = self.engine.subtype(t, s)
        if not verdict.holds:
            extra = ""
            if verdict.counterexample is not None:
                tags = ", ".join(m.tag for m in verdict.counterexample) or "empty"
                extra = f" (configuration not covered: {tags})"
            self.diag(
                code,
                f"{context}: {render(s)} does not refine {render(t)}{extra}",
                pos,
            )
            return False
        if verdict.kind == "yes-bounded":
            self.report.bounded_subtype_uses.append(
                {
                    "context": context,
                    "declared": render(t),
                    "usage": render(s),
                    "bound": verdict.bound,
                }
            )
        return True

    # --- environments ------------------------------------------------------

    @staticmethod
    def combine(env1: Env, env2: Env) -> Env:
        out = dict(env1)
        for name, t in env2.items():
            if name in out:
                out[name] = normalize(ty.Prod((out[name], t)))
            else:
                out[name] = t
        return out

    @staticmethod
    def branch_combine(env1: Env, env2: Env) -> Env:
        out: Env = {}
        for name in set(env1) | set(env2):
            a = env1.get(name, ty.ONE)
            b = env2.get(name, ty.ONE)
            out[name] = a if a == b else normalize(ty.Sum((a, b)))
        return out

    def join_deps(
        self, d1: DependencyRelation, d2: DependencyRelation, pos: Pos
    ) -> DependencyRelation:
        d = join(d1, d2)
        if isinstance(d, Incompatible):
            self.diag(
                "IncompatibleDeps",
                f"objects {d.u} and {d.v} may wait on each other",
                pos,
            )
            return merge(d1, d2)
        return d

    # --- expressions --------------------------------------------------------

    def expr_kind(self, e: Expr, pos: Pos) -> str:
        """Classify an expression as 'num', 'bool' or 'obj'."""
        if isinstance(e, NumLit):
            return "num"
        if isinstance(e, BoolLit):
            return "bool"
        if isinstance(e, Var):
            t = self.decls.get(e.name)
            if t == ty.NUMBER:
                return "num"
            if t == ty.BOOL:
                return "bool"
            return "obj"
        if isinstance(e, BinOp):
            lk = self.expr_kind(e.left, pos)
            rk = self.expr_kind(e.right, pos)
            arithmetic = e.op in ("+", "-", "*", "/", "%")
            for k in (lk, rk):
                if k != "num":
                    self.diag(
                        "ProtocolViolation",
                        f"operator {e.op!r} needs numeric operands",
                        pos,
                    )
                    break
            return "num" if arithmetic else "bool"
        raise TypeError(f"not an expression: {e!r}")

    # --- sends --------------------------------------------------------------

    def resolve_slots(
        self, decl: TypeExpr, tags: Counter, what: str, pos: Pos
    ) -> Optional[dict[str, Msg]]:
        """Determine which message slot each tag of a molecule or join pattern
        refers to; None (with a diagnostic) when that fails."""
        if _is_value_type(decl) or not self.alg.usable(decl):
            self.diag(
                "ProtocolViolation",
                f"{what}: {render(decl)} accepts no messages",
                pos,
            )
            return None
        verdict = arg_determinate(self.alg, decl, tags)
        pretty = " & ".join(
            tag if k == 1 else f"{tag} x{k}" for tag, k in sorted(tags.items())
        )
        if verdict.kind == "dead":
            self.diag(
                "ProtocolViolation"
                if what.startswith("send")
                else "DeadReaction",
                f"{what}: {pretty} fits no configuration of {render(decl)}",
                pos,
            )
            return None
        if verdict.kind == "ambiguous":
            self.diag(
                "AmbiguousArgs",
                f"{what}: {pretty} does not pin down argument types in "
                f"{render(decl)}",
                pos,
            )
            return None
        return verdict.assignment

    def check_send(self, p: Send) -> tuple[Env, DependencyRelation]:
        target = p.target
        decl = self.decls.get(target)
        if decl is None:
            self.diag("ProtocolViolation", f"unknown object {target}", p.pos)
            return {}, EMPTY_DEPS
        tags = Counter(m.tag for m in p.molecule)
        slots = self.resolve_slots(decl, tags, f"send to {target}", p.pos)
        if slots is None:
            return {}, EMPTY_DEPS

        env: Env = {}
        obj_args: list[Name] = []
        usage_parts: list[TypeExpr] = []
        ok = True
        for m in p.molecule:
            slot = slots[m.tag]
            usage_parts.append(slot)
            if len(m.args) != len(slot.args):
                self.diag(
                    "AritySumError",
                    f"send to {target}: {m.tag} takes {len(slot.args)} "
                    f"argument(s), got {len(m.args)}",
                    p.pos,
                )
                ok = False
                continue
            for arg, expected in zip(m.args, slot.args):
                if not self.alg.usable(expected):
                    self.diag(
                        "UnusableArg",
                        f"send to {target}: argument type {render(expected)} of "
                        f"{m.tag} has no valid configuration",
                        p.pos,
                    )
                    ok = False
                    continue
                if _is_value_type(expected):
                    kind = self.expr_kind(arg, p.pos)
                    want = "num" if expected == ty.NUMBER else "bool"
                    if kind != want:
                        self.diag(
                            "ProtocolViolation",
                            f"send to {target}: {m.tag} expects a "
                            f"{render(expected)} argument",
                            p.pos,
                        )
                        ok = False
                    continue
                if not isinstance(arg, Var) or self.expr_kind(arg, p.pos) != "obj":
                    self.diag(
                        "ProtocolViolation",
                        f"send to {target}: {m.tag} expects an object with "
                        f"protocol {render(expected)}",
                        p.pos,
                    )
                    ok = False
                    continue
                env = self.combine(env, {arg.name: normalize(expected)})
                obj_args.append(arg.name)
        if not ok:
            return env, EMPTY_DEPS

        if target not in self.stateless:
            env = self.combine(env, {target: ty.prod_of(usage_parts)})

        # Dependency bookkeeping: sending makes the target wait on the
        # argument objects, and ties the arguments to one another.
        if target in obj_args:
            self.diag(
                "SelfDependency",
                f"object {target} is sent to itself",
                p.pos,
            )
            return env, EMPTY_DEPS
        dep_names = [n for n in obj_args if n not in self.stateless]
        if len(set(dep_names)) != len(dep_names):
            dupe = next(n for n in dep_names if dep_names.count(n) > 1)
            self.diag(
                "DuplicateArgument",
                f"object {dupe} appears twice in one send to {target}",
                p.pos,
            )
            return env, EMPTY_DEPS
        if target not in self.stateless:
            dep_names.append(target)
        try:
            deps = clique(dep_names)
        except SelfDependencyError as err:  # pragma: no cover - guarded above
            self.diag("SelfDependency", str(err), p.pos)
            deps = EMPTY_DEPS
        return env, deps

    # --- processes ----------------------------------------------------------

    def check_process(self, p: Process) -> tuple[Env, DependencyRelation]:
        if isinstance(p, Done):
            return {}, EMPTY_DEPS
        if isinstance(p, Send):
            return self.check_send(p)
        if isinstance(p, Par):
            env: Env = {}
            deps = EMPTY_DEPS
            for q in p.parts:
                e, d = self.check_process(q)
                env = self.combine(env, e)
                deps = self.join_deps(deps, d, None)
            return env, deps
        if isinstance(p, If):
            if self.expr_kind(p.cond, p.pos) != "bool":
                self.diag(
                    "ProtocolViolation", "condition must be a boolean", p.pos
                )
            env1, d1 = self.check_process(p.then)
            env2, d2 = self.check_process(p.els)
            # The branches are mutually exclusive, so their dependency
            # relations are overlaid rather than conjoined.
            return self.branch_combine(env1, env2), merge(d1, d2)
        if isinstance(p, NewObj):
            return self.check_new(p)
        raise TypeError(f"not a process: {p!r}")

    # --- objects ------------------------------------------------------------

    def check_new(self, p: NewObj) -> tuple[Env, DependencyRelation]:
        if p.closure is not None:
            decl = self.check_closure_object(p)
        else:
            decl = normalize(p.decl)
            self.decls[p.name] = decl
            if p.stateless:
                self.stateless.add(p.name)
            for rule in p.rules:
                self.check_rule(p.name, decl, rule, p.pos)
        p.decl = decl
        self.report.resolved[p.node_id] = decl

        patterns = [
            dict(Counter(m.tag for m in rule.pattern)) for rule in p.rules
        ]
        is_live = live(self.alg, decl, patterns)
        if not is_live:
            self.diag(
                "NotLive",
                f"{p.name}: some configuration of {render(decl)} still owes "
                "messages but triggers no rule",
                p.pos,
            )
        self.report.objects.append(
            ObjectInfo(p.name, decl, patterns, is_live, p.stateless, p.node_id)
        )

        env, deps = self.check_process(p.body)
        self.check_obligation(p.name, decl, env, p.pos)
        env.pop(p.name, None)
        return env, deps.restrict(p.name)

    def check_obligation(self, name: Name, decl: TypeExpr, env: Env, pos: Pos):
        usage = env.get(name, ty.ONE)
        if name in self.stateless:
            return
        if usage == ty.ONE and not self.alg.nullable(decl):
            self.diag(
                "ObligationUnmet",
                f"{name} is never sent the messages {render(decl)} requires",
                pos,
            )
            return
        self.require_subtype(
            decl, usage, f"usage of {name}", pos, "ProtocolViolation"
        )

    def check_rule(
        self,
        obj: Name,
        t0: TypeExpr,
        rule: Rule,
        pos: Pos,
        param_decls: Optional[dict[Name, TypeExpr]] = None,
    ):
        tags = Counter(m.tag for m in rule.pattern)
        pretty = " & ".join(m.tag for m in rule.pattern)
        slots = self.resolve_slots(t0, tags, f"rule {pretty} of {obj}", pos)
        if slots is None:
            return
        params: list[Name] = []
        for m in rule.pattern:
            slot = slots[m.tag]
            if len(m.params) != len(slot.args):
                self.diag(
                    "AritySumError",
                    f"rule {pretty} of {obj}: {m.tag} carries "
                    f"{len(slot.args)} argument(s), pattern binds "
                    f"{len(m.params)}",
                    pos,
                )
                return
            for param, t in zip(m.params, slot.args):
                if not self.alg.usable(t):
                    self.diag(
                        "UnusableArg",
                        f"rule {pretty} of {obj}: argument type {render(t)} "
                        f"of {m.tag} has no valid configuration",
                        pos,
                    )
                if param_decls and param in param_decls:
                    self.decls[param] = normalize(param_decls[param])
                else:
                    self.decls[param] = normalize(t)
                params.append(param)

        env, _deps = self.check_process(rule.body)
        for param in params:
            self.check_obligation(param, self.decls[param], env, pos)
            env.pop(param, None)
        s0 = env.pop(obj, ty.ONE)
        for name in env:
            if name not in self.stateless:
                self.diag(
                    "ProtocolViolation",
                    f"rule {pretty} of {obj} uses {name} from the enclosing "
                    "scope; thread it through a message instead",
                    pos,
                )
        residual = normalize(
            ty.Prod((self.alg.derivative_config(t0, tags.elements()), s0))
        )
        self.require_subtype(
            t0,
            residual,
            f"state of {obj} after rule {pretty}",
            pos,
            "ProtocolViolation",
        )

    # --- continuation objects ----------------------------------------------

    def closure_base(self, spec, pos: Pos) -> Optional[TypeExpr]:
        """The protocol the continuation must offer, read off the message slot
        it is (or its value is) passed to."""
        kind = spec.origin[0]
        if kind == "sync":
            _, target, tag = spec.origin
            index = -1
        else:
            _, target, tag, index = spec.origin
        decl = self.decls.get(target)
        if decl is None:
            self.diag("ProtocolViolation", f"unknown object {target}", pos)
            return None
        slots = self.resolve_slots(
            decl, Counter({tag: 1}), f"send to {target}", pos
        )
        if slots is None:
            return None
        slot = slots[tag]
        if not slot.args:
            self.diag(
                "AritySumError",
                f"{tag} of {render(decl)} has no continuation argument",
                pos,
            )
            return None
        if kind == "sync":
            base = slot.args[-1]
        else:
            if index >= len(slot.args):
                self.diag(
                    "AritySumError",
                    f"{tag} of {render(decl)} has no argument {index}",
                    pos,
                )
                return None
            base = slot.args[index]
        if _is_value_type(base) or not self.alg.usable(base):
            self.diag(
                "UnusableArg",
                f"{tag} of {render(decl)} does not accept a continuation "
                f"there (argument type {render(base)})",
                pos,
            )
            return None
        return normalize(base)

    def check_closure_object(self, p: NewObj) -> TypeExpr:
        spec = p.closure
        base = self.closure_base(spec, p.pos)
        if base is None:
            return ty.ONE
        [rule] = p.rules
        closure_params: list[Name] = []
        reply_pattern = rule.pattern
        if spec.captured:
            closure_params = list(rule.pattern[0].params)
            reply_pattern = rule.pattern[1:]
        # Captured names keep their declared protocols inside the body; the
        # reply parameters take theirs from the base slot.
        param_decls: dict[Name, TypeExpr] = {}
        for param, source in zip(closure_params, spec.captured):
            source_decl = self.decls.get(source)
            if source_decl is None:
                self.diag(
                    "ProtocolViolation", f"unknown object {source}", p.pos
                )
                source_decl = ty.ONE
            param_decls[param] = source_decl

        tags = Counter(m.tag for m in reply_pattern)
        slots = self.resolve_slots(base, tags, f"reply to {p.name}", p.pos)
        if slots is None:
            return ty.ONE
        reply_params: list[Name] = []
        for m in reply_pattern:
            slot = slots[m.tag]
            if len(m.params) != len(slot.args):
                self.diag(
                    "AritySumError",
                    f"reply to {p.name}: {m.tag} carries {len(slot.args)} "
                    f"argument(s), pattern binds {len(m.params)}",
                    p.pos,
                )
                return ty.ONE
            for param, t in zip(m.params, slot.args):
                if not self.alg.usable(t):
                    self.diag(
                        "UnusableArg",
                        f"reply to {p.name}: argument type {render(t)} of "
                        f"{m.tag} has no valid configuration",
                        p.pos,
                    )
                self.decls[param] = normalize(t)
                reply_params.append(param)
        for param in closure_params:
            self.decls[param] = param_decls[param]

        # Check the body once; how it uses each captured name is exactly the
        # CLOSURE argument type the object demands.
        env, _deps = self.check_process(rule.body)
        # Captured names' CLOSURE argument types are their synthesized usages;
        # value-typed captures keep their base type (values have no usage).
        captured_usage = []
        for param in closure_params:
            if _is_value_type(param_decls[param]):
                captured_usage.append(param_decls[param])
                env.pop(param, None)
            else:
                captured_usage.append(normalize(env.pop(param, ty.ONE)))
        for param in reply_params:
            self.check_obligation(param, self.decls[param], env, p.pos)
            env.pop(param, None)
        if spec.captured:
            decl = normalize(
                ty.Sum(
                    (
                        ty.ONE,
                        ty.Prod(
                            (ty.Msg(CLOSURE_TAG, tuple(captured_usage)), base)
                        ),
                    )
                )
            )
        else:
            decl = normalize(ty.Sum((ty.ONE, base)))
        self.decls[p.name] = decl
        s0 = env.pop(p.name, ty.ONE)
        for name in env:
            if name not in self.stateless:
                self.diag(
                    "ProtocolViolation",
                    f"continuation {p.name} uses {name} from the enclosing "
                    "scope; thread it through a message instead",
                    p.pos,
                )
        all_tags = Counter(m.tag for m in rule.pattern)
        residual = normalize(
            ty.Prod((self.alg.derivative_config(decl, all_tags.elements()), s0))
        )
        self.require_subtype(
            decl,
            residual,
            f"state of {p.name} after its reply",
            p.pos,
            "ProtocolViolation",
        )
        return decl

    # --- entry ---------------------------------------------------------------

    def run(self) -> Report:
        env, self.top_deps = self.check_process(self.program.process)
        for name in env:
            if name not in BUILTIN_DECLS:
                self.diag(
                    "ProtocolViolation", f"unbound name {name}", None
                )
        return self.report


def check_program(program: CoreProgram, bound: int = 4) -> Report:
    return Checker(program, bound).run()


def resolve_closure_types(program: CoreProgram) -> None:
    """Fill in the declared types of desugared continuation objects without
    full checking, so the runtime can execute unchecked programs.  CLOSURE
    argument types are approximated by the captured names' declared types;
    execution and monitoring only ever look at message tags, so the
    approximation is harmless there."""
    alg = TypeAlgebra(program.table)
    decls: dict[Name, TypeExpr] = dict(BUILTIN_DECLS)

    def slot_of(decl: TypeExpr, tag: str) -> Optional[Msg]:
        verdict = arg_determinate(alg, decl, {tag: 1})
        if verdict.kind != "determinate":
            return None
        return verdict.assignment[tag]

    def resolve(p: Process):
        if isinstance(p, Par):
            for q in p.parts:
                resolve(q)
        elif isinstance(p, If):
            resolve(p.then)
            resolve(p.els)
        elif isinstance(p, NewObj):
            if p.closure is not None and p.decl is None:
                spec = p.closure
                kind = spec.origin[0]
                target = spec.origin[1]
                tag = spec.origin[2]
                slot = slot_of(decls.get(target, ty.ONE), tag)
                base: TypeExpr = ty.ONE
                if slot is not None and slot.args:
                    base = slot.args[-1 if kind == "sync" else spec.origin[3]]
                closure_args = tuple(
                    decls.get(n, ty.ONE) for n in spec.captured
                )
                if spec.captured:
                    p.decl = normalize(
                        ty.Sum(
                            (
                                ty.ONE,
                                ty.Prod((ty.Msg(CLOSURE_TAG, closure_args), base)),
                            )
                        )
                    )
                else:
                    p.decl = normalize(ty.Sum((ty.ONE, base)))
            decls[p.name] = p.decl if p.decl is not None else ty.ONE
            for rule in p.rules:
                for m in rule.pattern:
                    slot = slot_of(decls[p.name], m.tag)
                    for i, param in enumerate(m.params):
                        if slot is not None and i < len(slot.args):
                            decls[param] = normalize(slot.args[i])
                        else:
                            decls[param] = ty.ONE
                resolve(rule.body)
            resolve(p.body)

    resolve(program.process)
