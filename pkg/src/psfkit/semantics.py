"""Structural operational semantics: one-step derivatives and LTS construction.

Sums expand over their sort when it is finite; over an infinitely inhabited
sort the bound variable stays symbolic and is resolved either by unification
against a communication partner or, at the top level, by bounded numeral
enumeration.  A step whose label or target still carries a free variable at
the top level is an error naming the offending sort.

Encapsulation treats a symbolic label as blocked when it unifies with any
member pattern; this is exact whenever member arguments are plain bound
variables (true of every atom set in the shipped libraries).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .linker import FlatSpec, ProcDefn
from .terms import (
    Act, ActionLabel, App, AtomPattern, AtomSetDef, PAlt, PAtom, PDelta,
    PDisrupt, PEncaps, PEnd, PHide, PInst, PPar, PSeq, PSkip, PStar, PSum,
    ProcExpr, PsfError, Sort, Tau, Term, Var, _sort_is_recursive,
    enumerate_sort, InfiniteSortError, label_vars, proc_vars,
    resolve_binding, substitute_label, substitute_proc, unify_action,
    unify_terms,
)

UNFOLD_BUDGET = 1000

# the unfolding budget is spent a few interpreter frames at a time
import sys as _sys

if _sys.getrecursionlimit() < 40 * UNFOLD_BUDGET:
    _sys.setrecursionlimit(40 * UNFOLD_BUDGET)


class SemanticsError(PsfError):
    pass


class UnguardedRecursion(SemanticsError):
    def __init__(self, name: str):
        super().__init__(f"unguarded recursion: {name} unfolded {UNFOLD_BUDGET} times without an action")
        self.process = name


class UnboundedSum(SemanticsError):
    def __init__(self, sort: Sort, label: ActionLabel):
        super().__init__(
            f"sum over infinite sort {sort.name} has no communication partner for {label}; "
            "supply a depth bound or a handler"
        )
        self.sort = sort


# ---------------------------------------------------------------------------
# configurations


_normalize_cache: dict[int, ProcExpr] = {}
_normalize_keepalive: list[ProcExpr] = []
_intern_table: dict[str, ProcExpr] = {}


def _intern(e: ProcExpr) -> ProcExpr:
    return _intern_table.setdefault(str(e), e)


def normalize(e: ProcExpr) -> ProcExpr:
    """Collapse finished subterms and canonically order alternatives.

    Normalized nodes are interned by printed form, so equal configurations
    are the same object and subtree caches hit across states.
    """
    hit = _normalize_cache.get(id(e))
    if hit is not None:
        return hit
    out = _intern(_normalize_raw(e))
    _normalize_cache[id(e)] = out
    _normalize_keepalive.append(e)
    return out


def _normalize_raw(e: ProcExpr) -> ProcExpr:
    if isinstance(e, PAlt):
        alts = sorted({str(x): x for x in _alt_leaves(e)}.items())
        out: Optional[ProcExpr] = None
        for _, x in alts:
            out = x if out is None else _intern(PAlt(out, x))
        return out if out is not None else PDelta()
    if isinstance(e, PSeq):
        left = normalize(e.left)
        right = normalize(e.right)
        if isinstance(left, PEnd):
            return right
        if isinstance(right, PEnd):
            return left
        if isinstance(left, PSeq):
            # reassociate to the right so equal chains print equally
            return normalize(PSeq(left.left, _intern(PSeq(left.right, right))))
        if left is e.left and right is e.right:
            return e
        return PSeq(left, right)
    if isinstance(e, PPar):
        left, right = normalize(e.left), normalize(e.right)
        if isinstance(left, PEnd) and isinstance(right, PEnd):
            return PEnd()
        if left is e.left and right is e.right:
            return e
        return PPar(left, right)
    if isinstance(e, (PEncaps, PHide)):
        body = normalize(e.body)
        if isinstance(body, PEnd):
            return PEnd()
        if body is e.body:
            return e
        return type(e)(e.atom_set, body)
    if isinstance(e, PDisrupt):
        body = normalize(e.body)
        if isinstance(body, PEnd):
            return PEnd()
        disruptor = normalize(e.disruptor)
        if body is e.body and disruptor is e.disruptor:
            return e
        return PDisrupt(body, disruptor)
    if isinstance(e, PStar):
        body, exit_ = normalize(e.body), normalize(e.exit)
        if body is e.body and exit_ is e.exit:
            return e
        return PStar(body, exit_)
    if isinstance(e, PSum):
        body = normalize(e.body)
        if body is e.body:
            return e
        return PSum(e.var, body)
    return e


def _alt_leaves(e: ProcExpr) -> Iterable[ProcExpr]:
    if isinstance(e, PAlt):
        yield from _alt_leaves(e.left)
        yield from _alt_leaves(e.right)
    else:
        yield normalize(e)


def is_terminated(e: ProcExpr) -> bool:
    return isinstance(e, PEnd)


@dataclass(frozen=True)
class Config:
    expr: ProcExpr

    @property
    def terminated(self) -> bool:
        return is_terminated(self.expr)

    def key(self) -> str:
        return str(self.expr)

    def __str__(self) -> str:
        return str(self.expr)


# ---------------------------------------------------------------------------
# steps

Path = tuple  # structural directions ("par",0|1), ("enc",), ("dis",0|1)


@dataclass(frozen=True)
class Step:
    label: ActionLabel
    target: ProcExpr
    leaves: tuple[Path, ...] = ((),)
    free: tuple[Var, ...] = ()  # unresolved sum variables, appearance order

    def free_vars(self) -> tuple[Var, ...]:
        return self.free

    def is_ground(self) -> bool:
        return not self.free


class Stepper:
    """Derivative computation with structural caches.

    Subtree step sets are memoized by object identity (subtrees are shared
    across states as parallel contexts evolve around them), and unfolded
    process bodies are shared per (definition, arguments).  Cached steps may
    reuse symbolic variable names, so communication alpha-renames one side
    when the two operand steps share names.
    """

    def __init__(self, spec: FlatSpec):
        self.spec = spec
        self._fresh = 0
        self._step_cache: dict[int, list[Step]] = {}
        self._keepalive: list[ProcExpr] = []  # pin cached subtrees against id reuse
        self._body_cache: dict[tuple[str, str], ProcExpr] = {}
        # communication rules indexed by operand label names, both orientations
        self._rules_by_names: dict[tuple[str, str], list] = {}
        for rule in spec.comm_rules:
            self._rules_by_names.setdefault((rule.lhs_a.name, rule.lhs_b.name), []).append(rule)
            if rule.lhs_a.name != rule.lhs_b.name:
                self._rules_by_names.setdefault((rule.lhs_b.name, rule.lhs_a.name), []).append(rule)

    # -- public -------------------------------------------------------------

    def symbolic_steps(self, e: ProcExpr) -> list[Step]:
        out: list[Step] = []
        seen: set[tuple[str, str]] = set()
        for s in self._steps(e, UNFOLD_BUDGET):
            key = (str(s.label), str(s.target))
            if key not in seen:
                seen.add(key)
                out.append(s)
        return out

    def ground_steps(self, e: ProcExpr, depth_bound: Optional[int] = None) -> list[tuple[ActionLabel, Config]]:
        out: list[tuple[ActionLabel, Config]] = []
        seen: set[tuple[str, str]] = set()
        for s in self.symbolic_steps(e):
            for label, target in self.ground_out(s, depth_bound):
                key = (str(label), str(target))
                if key not in seen:
                    seen.add(key)
                    out.append((label, Config(target)))
        return out

    def ground_out(self, s: Step, depth_bound: Optional[int]) -> list[tuple[ActionLabel, ProcExpr]]:
        """Instantiate residual free variables by enumerating their sorts."""
        free = s.free
        if not free:
            return [(s.label, normalize(s.target))]
        pools: list[list[Term]] = []
        for v in free:
            try:
                pools.append(enumerate_sort(self.spec, v.sort, depth_bound))
            except InfiniteSortError:
                raise UnboundedSum(v.sort, s.label) from None
        out = []
        for combo in _combos(pools):
            binding = {v.name: t for v, t in zip(free, combo)}
            out.append((substitute_label(s.label, binding), normalize(substitute_proc(s.target, binding))))
        return out

    # -- SOS rules ------------------------------------------------------------

    def _steps(self, e: ProcExpr, budget: int) -> list[Step]:
        cached = self._step_cache.get(id(e))
        if cached is not None:
            return cached
        result = self._steps_raw(e, budget)
        if budget == UNFOLD_BUDGET or not isinstance(e, PInst):
            self._step_cache[id(e)] = result
            self._keepalive.append(e)
        return result

    def _steps_raw(self, e: ProcExpr, budget: int) -> list[Step]:
        if isinstance(e, PAtom):
            label = Act(e.name, e.args)
            return [Step(label, PEnd(), free=_dedup_vars(label_vars(label)))]
        if isinstance(e, PSkip):
            return [Step(Tau, PEnd())]
        if isinstance(e, (PDelta, PEnd)):
            return []
        if isinstance(e, PInst):
            return self._step_inst(e, budget)
        if isinstance(e, PAlt):
            return self._steps(e.left, budget) + self._steps(e.right, budget)
        if isinstance(e, PSeq):
            out = []
            for s in self._steps(e.left, budget):
                target = e.right if is_terminated(s.target) else PSeq(s.target, e.right)
                out.append(Step(s.label, target, s.leaves, s.free))
            return out
        if isinstance(e, PPar):
            return self._step_par(e, budget)
        if isinstance(e, PSum):
            return self._step_sum(e, budget)
        if isinstance(e, PEncaps):
            atoms = self._atom_set(e.atom_set)
            out = []
            for s in self._steps(e.body, budget):
                if atoms.contains(s.label):
                    continue
                target = s.target if is_terminated(s.target) else PEncaps(e.atom_set, s.target)
                out.append(Step(s.label, target, _push(s.leaves, ("enc",)), s.free))
            return out
        if isinstance(e, PHide):
            atoms = self._atom_set(e.atom_set)
            out = []
            for s in self._steps(e.body, budget):
                hidden = atoms.contains(s.label)
                label = Tau if hidden else s.label
                target = s.target if is_terminated(s.target) else PHide(e.atom_set, s.target)
                free = s.free
                if hidden and free:
                    free = _occurring_vars(free, label, target)
                out.append(Step(label, target, _push(s.leaves, ("enc",)), free))
            return out
        if isinstance(e, PDisrupt):
            out = []
            for s in self._steps(e.body, budget):
                if is_terminated(s.target):
                    target: ProcExpr = PEnd()
                else:
                    target = PDisrupt(s.target, e.disruptor)
                out.append(Step(s.label, target, _push(s.leaves, ("dis", 0)), s.free))
            for s in self._steps(e.disruptor, budget):
                out.append(Step(s.label, s.target, _push(s.leaves, ("dis", 1)), s.free))
            return out
        if isinstance(e, PStar):
            out = []
            for s in self._steps(e.body, budget):
                target = e if is_terminated(s.target) else PSeq(s.target, e)
                out.append(Step(s.label, target, s.leaves, s.free))
            for s in self._steps(e.exit, budget):
                out.append(s)
            return out
        raise TypeError(type(e))

    def _step_inst(self, e: PInst, budget: int) -> list[Step]:
        if budget <= 0:
            raise UnguardedRecursion(e.display or e.name)
        body = self.unfold(e)
        return self._steps(body, budget - 1)

    def unfold(self, e: PInst) -> ProcExpr:
        """Definition body with the instantiation's arguments substituted in."""
        cache_key = (e.name, ", ".join(map(str, e.args)))
        hit = self._body_cache.get(cache_key)
        if hit is not None:
            return hit
        defn = self._definition(e)
        binding: Optional[dict[str, Term]] = {}
        for p, a in zip(defn.params, e.args):
            binding = unify_terms(p, a, binding)
            if binding is None:
                raise SemanticsError(
                    f"arguments ({', '.join(map(str, e.args))}) do not match the definition of {defn.display}"
                )
        body = substitute_proc(defn.body, resolve_binding(binding))
        self._body_cache[cache_key] = body
        return body

    def _definition(self, e: PInst) -> ProcDefn:
        spec = self.spec
        if e.name in spec.processes:
            return spec.processes[e.name]
        display = e.display or e.name
        if display in spec.formal_processes and display not in spec.by_display:
            raise SemanticsError(f"process {display} is a parameter and was never bound")
        return spec.lookup_process(display, e.args)

    def _step_sum(self, e: PSum, budget: int) -> list[Step]:
        spec = self.spec
        sort = e.var.sort
        finite = not spec.is_numeric(sort.name) and not _sort_is_recursive(spec, sort.name)
        if finite:
            out = []
            for t in enumerate_sort(spec, sort):
                body = substitute_proc(e.body, {e.var.name: t})
                out.extend(self._steps(body, budget))
            return out
        # infinitely inhabited: step the open body with a fresh symbolic binder
        self._fresh += 1
        fresh = Var(f"{e.var.name}'{self._fresh}", sort)
        body = substitute_proc(e.body, {e.var.name: fresh})
        out = []
        for s in self._steps(body, budget):
            free = s.free
            if all(v.name != fresh.name for v in free) and _mentions(s, fresh):
                free = free + (fresh,)
            out.append(Step(s.label, s.target, s.leaves, free))
        return out

    def _step_par(self, e: PPar, budget: int) -> list[Step]:
        ls = self._steps(e.left, budget)
        rs = self._steps(e.right, budget)
        out: list[Step] = []
        for s in ls:
            out.append(Step(s.label, _par(s.target, e.right), _push(s.leaves, ("par", 0)), s.free))
        for s in rs:
            out.append(Step(s.label, _par(e.left, s.target), _push(s.leaves, ("par", 1)), s.free))
        for a in ls:
            if not isinstance(a.label, Act):
                continue
            for b in rs:
                if not isinstance(b.label, Act):
                    continue
                rules = self._rules_by_names.get((a.label.name, b.label.name))
                if not rules:
                    continue
                for rule in rules:
                    merged = self._communicate(rule, a, b)
                    if merged is not None:
                        out.append(merged)
        return out

    def _communicate(self, rule, a: Step, b: Step) -> Optional[Step]:
        """Synchronize two steps when a communication rule matches their labels."""
        if a.free and b.free:
            a_names = {v.name for v in a.free}
            if a_names & {v.name for v in b.free}:
                b = _alpha_rename(b, a_names)
        for x, y in ((a, b), (b, a)):
            if rule.lhs_a.name != x.label.name or rule.lhs_b.name != y.label.name:
                continue
            self._fresh += 1
            ren: dict[str, Var] = {}
            la = _freshen_pattern(rule.lhs_a, self._fresh, ren)
            lb = _freshen_pattern(rule.lhs_b, self._fresh, ren)
            res = _freshen_pattern(rule.result, self._fresh, ren)
            binding = unify_action(la, x.label)
            if binding is None:
                continue
            binding = unify_action(lb, y.label, binding)
            if binding is None:
                continue
            full = resolve_binding(binding)
            label = substitute_label(Act(res.name, res.args), full)
            if a.free or b.free:
                target = _par(substitute_proc(a.target, full), substitute_proc(b.target, full))
                free = _surviving_vars(a.free + b.free, full)
            else:
                target = _par(a.target, b.target)
                free = ()
            leaves = _push(a.leaves, ("par", 0)) + _push(b.leaves, ("par", 1))
            return Step(label, target, leaves, free)
        return None

    def _atom_set(self, name: str) -> AtomSetDef:
        s = self.spec.atom_sets.get(name)
        if s is None:
            raise SemanticsError(f"unknown atom set {name}")
        return s


def _par(left: ProcExpr, right: ProcExpr) -> ProcExpr:
    if is_terminated(left) and is_terminated(right):
        return PEnd()
    return PPar(left, right)


def _alpha_rename(s: Step, taken: set[str]) -> Step:
    ren = {v.name: Var(v.name + "_r", v.sort) for v in s.free if v.name in taken}
    if not ren:
        return s
    free = tuple(ren.get(v.name, v) for v in s.free)
    return Step(substitute_label(s.label, ren), substitute_proc(s.target, ren), s.leaves, free)


def _dedup_vars(vs) -> tuple[Var, ...]:
    seen: dict[str, Var] = {}
    for v in vs:
        seen.setdefault(v.name, v)
    return tuple(seen.values())


def _occurring_vars(free: tuple[Var, ...], label: ActionLabel, target: ProcExpr) -> tuple[Var, ...]:
    present = {v.name for v in label_vars(label)} | {v.name for v in proc_vars(target)}
    return tuple(v for v in free if v.name in present)


def _surviving_vars(free: tuple[Var, ...], binding: dict[str, Term]) -> tuple[Var, ...]:
    out: dict[str, Var] = {}
    for v in free:
        resolved = binding.get(v.name)
        if resolved is None:
            out.setdefault(v.name, v)
        elif isinstance(resolved, Var):
            out.setdefault(resolved.name, resolved)
    return tuple(out.values())


def _push(leaves: tuple[Path, ...], head) -> tuple[Path, ...]:
    return tuple((head,) + p for p in leaves)


def _combos(pools: list[list[Term]]):
    if not pools:
        yield ()
        return
    for head in pools[0]:
        for rest in _combos(pools[1:]):
            yield (head,) + rest


def _freshen_pattern(p: AtomPattern, n: int, ren: dict[str, Var]) -> AtomPattern:
    def f(t: Term) -> Term:
        if isinstance(t, Var):
            if t.name not in ren:
                ren[t.name] = Var(f"{t.name}~{n}", t.sort)
            return ren[t.name]
        if isinstance(t, App) and t.args:
            return App(t.fn, tuple(f(a) for a in t.args))
        return t

    return AtomPattern(p.name, tuple(f(a) for a in p.args))


# ---------------------------------------------------------------------------
# LTS


@dataclass
class Lts:
    states: list[Config]
    transitions: list[tuple[int, ActionLabel, int]]
    initial: int = 0
    terminating: set[int] = field(default_factory=set)
    truncated: bool = False

    @property
    def num_states(self) -> int:
        return len(self.states)

    def successors(self, state: int) -> list[tuple[ActionLabel, int]]:
        return [(l, t) for f, l, t in self.transitions if f == state]

    def export_aut(self) -> str:
        """Aldebaran-style text export: one header line, one line per transition."""
        lines = [f"des ({self.initial}, {len(self.transitions)}, {len(self.states)})"]
        for f, l, t in self.transitions:
            lines.append(f'({f},"{l}",{t})')
        return "\n".join(lines) + "\n"


def initial_config(
    spec: FlatSpec, entry: str, args: tuple[Term, ...] = (), stepper: Optional[Stepper] = None
) -> Config:
    """Entry configuration, unfolded through instantiation aliases."""
    defn = spec.lookup_process(entry, args)
    stepper = stepper or Stepper(spec)
    expr: ProcExpr = PInst(defn.key, args, display=defn.display)
    for _ in range(64):
        if not isinstance(expr, PInst):
            break
        try:
            expr = stepper.unfold(expr)
        except PsfError:
            break
    return Config(normalize(expr))


def build_lts(
    spec: FlatSpec,
    entry: str,
    args: tuple[Term, ...] = (),
    max_states: int = 100_000,
    depth_bound: Optional[int] = None,
) -> Lts:
    """Breadth-first closure of the step relation from an entry process."""
    stepper = Stepper(spec)
    init = initial_config(spec, entry, args, stepper)
    return close_lts(spec, init, max_states=max_states, depth_bound=depth_bound, stepper=stepper)


def close_lts(
    spec: FlatSpec,
    init: Config,
    max_states: int = 100_000,
    depth_bound: Optional[int] = None,
    stepper: Optional[Stepper] = None,
) -> Lts:
    stepper = stepper or Stepper(spec)
    states: list[Config] = [init]
    index: dict[str, int] = {init.key(): 0}
    transitions: list[tuple[int, ActionLabel, int]] = []
    terminating: set[int] = set()
    truncated = False
    if init.terminated:
        terminating.add(0)
    frontier = [0]
    while frontier:
        next_frontier: list[int] = []
        for sid in frontier:
            cfg = states[sid]
            if cfg.terminated:
                continue
            for label, target in stepper.ground_steps(cfg.expr, depth_bound):
                key = target.key()
                tid = index.get(key)
                if tid is None:
                    if len(states) >= max_states:
                        truncated = True
                        continue
                    tid = len(states)
                    index[key] = tid
                    states.append(target)
                    if target.terminated:
                        terminating.add(tid)
                    next_frontier.append(tid)
                transitions.append((sid, label, tid))
        frontier = next_frontier
    return Lts(states, transitions, 0, terminating, truncated)
