"""Execution of core programs as a chemical soup.

Objects are molecules-with-rules: each carries a mailbox (a multiset of
messages) and fires a rule whenever the mailbox covers the rule's pattern.
The scheduler repeatedly picks one enabled reaction uniformly at random,
so runs are reproducible from the seed alone.

Optional monitors re-derive every touched object's declared type by the
tags sitting in its mailbox; if that residual becomes unusable the program
has broken its protocol and the run stops.  When no reaction is enabled
the run has quiesced: it terminated cleanly unless some leftover message
still carries an argument the type marks as relevant, which means somebody
is waiting forever — a deadlock.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from . import types as ty
from .checker import BUILTIN_DECLS, resolve_closure_types
from .core import (
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
    Send,
    Var,
)
from .types import TypeAlgebra, TypeExpr

Value = object  # float | bool | ObjId


@dataclass(frozen=True, order=True)
class ObjId:
    serial: int
    text: str = field(compare=False)

    def __repr__(self):
        return f"{self.text}@{self.serial}"


SYSTEM_ID = ObjId(-1, "System")
NUMBER_ID = ObjId(-2, "Number")

# A message is (tag, argument values); mailboxes collapse equal payloads.
Message = tuple[str, tuple[Value, ...]]


@dataclass
class Instance:
    oid: ObjId
    node: NewObj
    env: dict[Name, Value]
    mailbox: Counter = field(default_factory=Counter)

    @property
    def decl(self) -> TypeExpr:
        return self.node.decl if self.node.decl is not None else ty.ONE


@dataclass(frozen=True)
class TraceEvent:
    step: int
    kind: str  # "new" | "react" | "print" | "deadlock"
    obj: str
    tags: str
    detail: str

    def line(self) -> str:
        return "\t".join(
            (str(self.step), self.kind, self.obj, self.tags, self.detail)
        )


@dataclass
class RunResult:
    verdict: str  # Terminated | Deadlocked | StepBudgetExhausted | MonitorViolation
    steps: int
    outputs: list[float]
    trace: list[TraceEvent]
    deadlocked: list[str] = field(default_factory=list)
    violation: Optional[str] = None
    created: dict[str, int] = field(default_factory=dict)


def _fmt(v: Value) -> str:
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


class RuntimeError_(Exception):
    pass


class Soup:
    def __init__(
        self,
        program: CoreProgram,
        seed: int = 0,
        monitors: bool = True,
        trace: bool = False,
    ):
        resolve_closure_types(program)
        self.alg = TypeAlgebra(program.table)
        self.rng = random.Random(seed)
        self.monitors = monitors
        self.tracing = trace
        self.trace: list[TraceEvent] = []
        self.outputs: list[float] = []
        self.instances: dict[ObjId, Instance] = {}
        self.created: dict[str, int] = {}
        self.steps = 0
        self.violation: Optional[str] = None
        self._serial = 0
        # The reaction pool holds (oid, version, rule index, selection);
        # entries whose object's version moved on are dropped lazily.
        self._pool: list[tuple[ObjId, int, int, tuple]] = []
        self._live = 0
        self._version: dict[ObjId, int] = {}
        self._touched: set[ObjId] = set()
        self._residuals: dict[tuple[TypeExpr, tuple[str, ...]], TypeExpr] = {}
        self._needs: dict[tuple[int, int], list[tuple[str, int]]] = {}
        self._count: dict[ObjId, int] = {}
        self.heat(program.process, {SYSTEM: SYSTEM_ID, NUMBER_OBJ: NUMBER_ID})
        self.settle()

    # --- tracing ------------------------------------------------------------

    def emit(self, kind: str, obj: str, tags: str, detail: str):
        if self.tracing:
            self.trace.append(TraceEvent(self.steps, kind, obj, tags, detail))

    # --- heating ------------------------------------------------------------

    def heat(self, proc: Process, env: dict[Name, Value]):
        stack: list[tuple[Process, dict[Name, Value]]] = [(proc, env)]
        while stack:
            p, env = stack.pop()
            if isinstance(p, Done):
                continue
            if isinstance(p, Par):
                stack.extend((q, env) for q in reversed(p.parts))
            elif isinstance(p, If):
                branch = p.then if self.eval(p.cond, env) else p.els
                stack.append((branch, env))
            elif isinstance(p, NewObj):
                oid = self.spawn(p, env)
                env2 = dict(env)
                env2[p.name] = oid
                stack.append((p.body, env2))
            elif isinstance(p, Send):
                self.send(p, env)
            else:
                raise TypeError(f"not a process: {p!r}")

    def spawn(self, node: NewObj, env: dict[Name, Value]) -> ObjId:
        self._serial += 1
        oid = ObjId(self._serial, node.name.text)
        env2 = dict(env)
        env2[node.name] = oid
        self.instances[oid] = Instance(oid, node, env2)
        self.created[node.name.text] = self.created.get(node.name.text, 0) + 1
        self.emit("new", repr(oid), "", ty.render(self.instances[oid].decl))
        return oid

    def send(self, p: Send, env: dict[Name, Value]):
        target = env[p.target]
        for m in p.molecule:
            args = tuple(self.eval(a, env) for a in m.args)
            if target is SYSTEM_ID:
                if m.tag == "Print" and len(args) == 1:
                    self.outputs.append(args[0])
                    self.emit("print", "System", m.tag, _fmt(args[0]))
                    continue
                raise RuntimeError_(f"System has no method {m.tag}/{len(args)}")
            if target is NUMBER_ID:
                if m.tag == "Pow" and len(args) == 3:
                    base, exp, reply = args
                    self.deliver(reply, ("Reply", (float(base) ** float(exp),)))
                    continue
                raise RuntimeError_(f"Number has no method {m.tag}/{len(args)}")
            self.deliver(target, (m.tag, args))

    def deliver(self, target: Value, msg: Message):
        if not isinstance(target, ObjId):
            raise RuntimeError_(f"message {msg[0]} sent to non-object {target!r}")
        self.instances[target].mailbox[msg] += 1
        self._touched.add(target)

    def eval(self, e: Expr, env: dict[Name, Value]) -> Value:
        if isinstance(e, NumLit):
            return e.value
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, BinOp):
            a = self.eval(e.left, env)
            b = self.eval(e.right, env)
            op = e.op
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return a / b
            if op == "%":
                return math.fmod(a, b)
            if op == "==":
                return a == b
            if op == "!=":
                return a != b
            if op == "<":
                return a < b
            if op == "<=":
                return a <= b
            if op == ">":
                return a > b
            if op == ">=":
                return a >= b
        raise TypeError(f"not an expression: {e!r}")

    # --- reactions ----------------------------------------------------------

    def _selections(self, inst: Instance, rule_idx: int):
        """Distinct ways the mailbox can satisfy the rule's pattern, counting
        equal payloads once."""
        key = (id(inst.node), rule_idx)
        need = self._needs.get(key)
        if need is None:
            pattern = inst.node.rules[rule_idx].pattern
            need = self._needs[key] = sorted(
                Counter(m.tag for m in pattern).items()
            )
        per_tag: list[list[tuple[tuple[Message, int], ...]]] = []
        for tag, k in need:
            groups = [
                (msg, cnt)
                for msg, cnt in inst.mailbox.items()
                if msg[0] == tag and cnt > 0
            ]
            if k == 1:
                # By far the common case; skip the general enumeration.
                picks = [((msg, 1),) for msg, _ in groups]
            else:
                picks = list(_multiset_picks(groups, k))
            if not picks:
                return
            per_tag.append(picks)
        for combo in _product(per_tag):
            flat: list[tuple[Message, int]] = []
            for part in combo:
                flat.extend(part)
            yield tuple(flat)

    def refresh(self, oid: ObjId):
        self._version[oid] = self._version.get(oid, 0) + 1
        version = self._version[oid]
        inst = self.instances[oid]
        count = 0
        for rule_idx in range(len(inst.node.rules)):
            for selection in self._selections(inst, rule_idx):
                self._pool.append((oid, version, rule_idx, selection))
                count += 1
        self._live += count - self._count.get(oid, 0)
        self._count[oid] = count

    def settle(self):
        """Fold mailbox changes into the reaction pool and run monitors."""
        for oid in self._touched:
            self.refresh(oid)
            if self.monitors and self.violation is None:
                self.monitor(oid)
        self._touched.clear()

    def monitor(self, oid: ObjId):
        inst = self.instances[oid]
        residual = self.residual(inst)
        if not self.alg.usable(residual):
            tags = ",".join(sorted(m[0] for m in inst.mailbox.elements()))
            self.violation = (
                f"{oid!r} holds messages [{tags}] outside its protocol "
                f"{ty.render(inst.decl)}"
            )

    def residual(self, inst: Instance) -> TypeExpr:
        tags = tuple(sorted(m[0] for m in inst.mailbox.elements()))
        key = (inst.decl, tags)
        out = self._residuals.get(key)
        if out is None:
            out = self._residuals[key] = self.alg.derivative_config(
                inst.decl, tags
            )
        return out

    def _pick(self) -> Optional[tuple[ObjId, int, tuple]]:
        pool = self._pool
        if len(pool) > 4 * max(self._live, 16):
            # Most entries are stale; filtering keeps sampling O(1) amortized
            # without changing the distribution over live entries.
            version = self._version
            self._pool = pool = [
                e for e in pool if version.get(e[0], 0) == e[1]
            ]
        while pool:
            i = self.rng.randrange(len(pool))
            oid, version, rule_idx, selection = pool[i]
            pool[i] = pool[-1]
            pool.pop()
            if self._version.get(oid, 0) != version:
                continue
            # Everything of this object is recomputed after firing, so the
            # sibling entries can be dropped on sight later.
            return oid, rule_idx, selection
        self._live = 0
        self._count.clear()
        return None

    def step(self) -> bool:
        """Fire one enabled reaction; False when the soup has quiesced."""
        picked = self._pick()
        if picked is None:
            return False
        oid, rule_idx, selection = picked
        inst = self.instances[oid]
        rule = inst.node.rules[rule_idx]
        self.steps += 1

        consumed: list[Message] = []
        for msg, count in selection:
            inst.mailbox[msg] -= count
            if inst.mailbox[msg] <= 0:
                del inst.mailbox[msg]
            consumed.extend([msg] * count)
        self._touched.add(oid)

        env = dict(inst.env)
        by_tag: dict[str, list[Message]] = {}
        for msg in consumed:
            by_tag.setdefault(msg[0], []).append(msg)
        for pat in rule.pattern:
            msg = by_tag[pat.tag].pop()
            for param, value in zip(pat.params, msg[1]):
                env[param] = value
        self.emit(
            "react",
            repr(oid),
            ",".join(m.tag for m in rule.pattern),
            " ".join(
                f"{t}({', '.join(_fmt(v) for v in vs)})" for t, vs in consumed
            ),
        )
        self.heat(rule.body, env)
        self.settle()
        return True

    # --- end states ---------------------------------------------------------

    def stuck_objects(self) -> list[ObjId]:
        """Objects whose leftover messages carry arguments somebody still
        relies on; nonempty at quiescence means deadlock."""
        out = []
        for oid, inst in self.instances.items():
            if not inst.mailbox:
                continue
            decl = inst.decl
            waiting = False
            for msg in inst.mailbox:
                for slot in self.alg.heads(decl):
                    if slot.tag == msg[0] and any(
                        self.alg.relevant(a) for a in slot.args
                    ):
                        waiting = True
            if waiting:
                out.append(oid)
        return sorted(out)

    def check_solution(self) -> bool:
        """Whether every object's mailbox still fits its protocol: the
        re-typing invariant the scheduler is expected to preserve."""
        return all(
            self.alg.usable(self.residual(inst))
            for inst in self.instances.values()
        )


def run(
    program: CoreProgram,
    seed: int = 0,
    max_steps: int = 100_000,
    monitors: bool = True,
    trace: bool = False,
) -> RunResult:
    soup = Soup(program, seed=seed, monitors=monitors, trace=trace)
    while soup.steps < max_steps:
        if soup.violation is not None:
            return RunResult(
                "MonitorViolation",
                soup.steps,
                soup.outputs,
                soup.trace,
                violation=soup.violation,
                created=soup.created,
            )
        if not soup.step():
            stuck = soup.stuck_objects()
            if stuck:
                for oid in stuck:
                    inst = soup.instances[oid]
                    soup.emit(
                        "deadlock",
                        repr(oid),
                        ",".join(sorted(m[0] for m in inst.mailbox)),
                        "",
                    )
                return RunResult(
                    "Deadlocked",
                    soup.steps,
                    soup.outputs,
                    soup.trace,
                    deadlocked=[repr(o) for o in stuck],
                    created=soup.created,
                )
            return RunResult(
                "Terminated", soup.steps, soup.outputs, soup.trace,
                created=soup.created,
            )
    if soup.violation is not None:
        return RunResult(
            "MonitorViolation",
            soup.steps,
            soup.outputs,
            soup.trace,
            violation=soup.violation,
            created=soup.created,
        )
    return RunResult(
        "StepBudgetExhausted", soup.steps, soup.outputs, soup.trace,
        created=soup.created,
    )


def _multiset_picks(groups, k):
    """Ways to take k items from payload groups with the given capacities."""
    if k == 0:
        yield ()
        return
    if not groups:
        return
    (msg, cap), rest = groups[0], groups[1:]
    for take in range(min(k, cap), -1, -1):
        for tail in _multiset_picks(rest, k - take):
            yield ((msg, take),) + tail if take else tail


def _product(parts):
    if not parts:
        yield ()
        return
    for head in parts[0]:
        for tail in _product(parts[1:]):
            yield (head,) + tail
