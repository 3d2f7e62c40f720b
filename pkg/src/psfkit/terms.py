"""Data terms, action labels and process expressions.

Everything here is an immutable value: terms and process expressions are
frozen dataclasses, safe to share, hash and use as dictionary keys.  The
printed form of an expression doubles as its canonical identity (state
deduplication keys are printed forms), so printing must stay deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union


class PsfError(Exception):
    """Base error for all workbench diagnostics raised as exceptions."""


class SortError(PsfError):
    pass


# ---------------------------------------------------------------------------
# sorts and signatures


@dataclass(frozen=True)
class Sort:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class FuncSig:
    """Constructor signature; zero arity denotes a constant."""

    name: str
    arg_sorts: tuple[Sort, ...]
    result: Sort

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)

    def __str__(self) -> str:
        args = " # ".join(s.name for s in self.arg_sorts)
        return f"{self.name} : {args + ' ' if args else ''}-> {self.result.name}"


# ---------------------------------------------------------------------------
# terms

PAIR_CTOR = ">>"  # infix channel-pair constructor, e.g. "c1 >> c2"


@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class App:
    fn: FuncSig
    args: tuple["Term", ...] = ()

    def __post_init__(self) -> None:
        if len(self.args) != self.fn.arity:
            raise SortError(f"{self.fn.name}: expected {self.fn.arity} args, got {len(self.args)}")

    @property
    def sort(self) -> Sort:
        return self.fn.result

    def __str__(self) -> str:
        if self.fn.name == PAIR_CTOR and len(self.args) == 2:
            return f"{self.args[0]} >> {self.args[1]}"
        if not self.args:
            return self.fn.name
        return f"{self.fn.name}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class Lit:
    """Numeral of a numeric sort (the built-in naturals, or a sort bound to them)."""

    value: int
    sort: Sort

    def __str__(self) -> str:
        return str(self.value)


Term = Union[Var, App, Lit]


def term_sort(t: Term) -> Sort:
    if isinstance(t, App):
        return t.fn.result
    return t.sort


def is_ground(t: Term) -> bool:
    if isinstance(t, Var):
        return False
    if isinstance(t, App):
        return all(is_ground(a) for a in t.args)
    return True


def term_vars(t: Term) -> Iterator[Var]:
    if isinstance(t, Var):
        yield t
    elif isinstance(t, App):
        for a in t.args:
            yield from term_vars(a)


Binding = Mapping[str, Term]


def substitute_term(t: Term, binding: Binding) -> Term:
    if isinstance(t, Var):
        repl = binding.get(t.name)
        if repl is None:
            return t
        if term_sort(repl) != t.sort:
            raise SortError(f"cannot bind {t.name}:{t.sort} to term of sort {term_sort(repl)}")
        return repl
    if isinstance(t, App) and t.args:
        return App(t.fn, tuple(substitute_term(a, binding) for a in t.args))
    return t


def match_term(pattern: Term, value: Term, binding: Optional[dict[str, Term]] = None) -> Optional[dict[str, Term]]:
    """First-order matching: variables occur in the pattern only."""
    b = dict(binding) if binding else {}
    if _match_into(pattern, value, b):
        return b
    return None


def _match_into(pattern: Term, value: Term, b: dict[str, Term]) -> bool:
    if isinstance(pattern, Var):
        seen = b.get(pattern.name)
        if seen is not None:
            return seen == value
        if term_sort(value) != pattern.sort:
            return False
        b[pattern.name] = value
        return True
    if isinstance(pattern, App) and isinstance(value, App):
        if pattern.fn != value.fn:
            return False
        return all(_match_into(p, v, b) for p, v in zip(pattern.args, value.args))
    return pattern == value


def unify_terms(a: Term, b: Term, binding: Optional[dict[str, Term]] = None) -> Optional[dict[str, Term]]:
    """Two-sided unification; variables may occur on either side."""
    out = dict(binding) if binding else {}
    if _unify_into(a, b, out):
        return out
    return None


def _walk(t: Term, b: dict[str, Term]) -> Term:
    while isinstance(t, Var) and t.name in b:
        t = b[t.name]
    return t


def _occurs(name: str, t: Term, b: dict[str, Term]) -> bool:
    t = _walk(t, b)
    if isinstance(t, Var):
        return t.name == name
    if isinstance(t, App):
        return any(_occurs(name, a, b) for a in t.args)
    return False


def _unify_into(a: Term, b_: Term, b: dict[str, Term]) -> bool:
    a, b_ = _walk(a, b), _walk(b_, b)
    if isinstance(a, Var):
        if isinstance(b_, Var) and b_.name == a.name:
            return True
        if term_sort(b_) != a.sort or _occurs(a.name, b_, b):
            return False
        b[a.name] = b_
        return True
    if isinstance(b_, Var):
        return _unify_into(b_, a, b)
    if isinstance(a, App) and isinstance(b_, App):
        if a.fn != b_.fn:
            return False
        return all(_unify_into(x, y, b) for x, y in zip(a.args, b_.args))
    return a == b_


def resolve_binding(b: Mapping[str, Term]) -> dict[str, Term]:
    """Chase variable-to-variable links so every entry maps to its final term."""
    out: dict[str, Term] = {}
    for name in b:
        t = _walk(Var(name, term_sort(b[name])), dict(b))
        out[name] = _deep_walk(t, dict(b))
    return out


def _deep_walk(t: Term, b: dict[str, Term]) -> Term:
    t = _walk(t, b)
    if isinstance(t, App) and t.args:
        return App(t.fn, tuple(_deep_walk(a, b) for a in t.args))
    return t


# ---------------------------------------------------------------------------
# action labels


@dataclass(frozen=True)
class Act:
    name: str
    args: tuple[Term, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(map(str, self.args))})"


class _Tau:
    _instance: Optional["_Tau"] = None

    def __new__(cls) -> "_Tau":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __str__(self) -> str:
        return "tau"

    def __repr__(self) -> str:
        return "Tau"

    def __hash__(self) -> int:
        return hash("__tau__")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _Tau)


Tau = _Tau()
ActionLabel = Union[Act, _Tau]


def label_is_ground(label: ActionLabel) -> bool:
    if label is Tau or isinstance(label, _Tau):
        return True
    return all(is_ground(a) for a in label.args)


def label_vars(label: ActionLabel) -> list[Var]:
    if isinstance(label, _Tau):
        return []
    out = []
    for a in label.args:
        out.extend(term_vars(a))
    return out


def substitute_label(label: ActionLabel, binding: Binding) -> ActionLabel:
    if isinstance(label, _Tau):
        return label
    return Act(label.name, tuple(substitute_term(a, binding) for a in label.args))


# ---------------------------------------------------------------------------
# process expressions



class _CachedStr:
    """Printed form memoized per instance; trees are immutable and shared."""

    def __str__(self) -> str:
        cached = self.__dict__.get("_str")
        if cached is None:
            cached = self._render()
            object.__setattr__(self, "_str", cached)
        return cached


@dataclass(frozen=True)
class PAtom(_CachedStr):
    name: str
    args: tuple[Term, ...] = ()

    def _render(self) -> str:
        return str(Act(self.name, self.args))


@dataclass(frozen=True)
class PDelta:
    def __str__(self) -> str:
        return "delta"


@dataclass(frozen=True)
class PSkip:
    def __str__(self) -> str:
        return "skip"


@dataclass(frozen=True)
class PEnd:
    """Successful-termination marker; produced by stepping, never parsed."""

    def __str__(self) -> str:
        return "<done>"


@dataclass(frozen=True)
class PInst(_CachedStr):
    """Process instantiation.  `name` is the resolved (instance-unique) key;
    `display` is what the source called it, used for printing and views."""

    name: str
    args: tuple[Term, ...] = ()
    display: Optional[str] = None

    def _render(self) -> str:
        shown = self.display or self.name
        if not self.args:
            return shown
        return f"{shown}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class PAlt(_CachedStr):
    left: "ProcExpr"
    right: "ProcExpr"

    def _render(self) -> str:
        return f"{_show(self.left, 1, tail=isinstance(self.left, PAlt))} + {_show(self.right, 1)}"


@dataclass(frozen=True)
class PSeq(_CachedStr):
    left: "ProcExpr"
    right: "ProcExpr"

    def _render(self) -> str:
        # canonical chains are right-nested; print them flat
        return f"{_show(self.left, 3)} . {_show(self.right, 3, tail=isinstance(self.right, PSeq))}"


@dataclass(frozen=True)
class PPar(_CachedStr):
    left: "ProcExpr"
    right: "ProcExpr"

    def _render(self) -> str:
        return f"{_show(self.left, 1, tail=isinstance(self.left, PPar))} || {_show(self.right, 1)}"


@dataclass(frozen=True)
class PSum(_CachedStr):
    var: Var
    body: "ProcExpr"

    def _render(self) -> str:
        return f"sum({self.var.name} in {self.var.sort.name}, {self.body})"


@dataclass(frozen=True)
class PEncaps(_CachedStr):
    atom_set: str
    body: "ProcExpr"

    def _render(self) -> str:
        return f"encaps({self.atom_set}, {self.body})"


@dataclass(frozen=True)
class PHide(_CachedStr):
    atom_set: str
    body: "ProcExpr"

    def _render(self) -> str:
        return f"hide({self.atom_set}, {self.body})"


@dataclass(frozen=True)
class PDisrupt(_CachedStr):
    body: "ProcExpr"
    disruptor: "ProcExpr"

    def _render(self) -> str:
        return f"disrupt({self.body}, {self.disruptor})"


@dataclass(frozen=True)
class PStar(_CachedStr):
    """Binary iteration x * y: repeat x, or exit via y; y = delta loops forever."""

    body: "ProcExpr"
    exit: "ProcExpr"

    def _render(self) -> str:
        return f"{_show(self.body, 2)} * {_show(self.exit, 2)}"


ProcExpr = Union[
    PAtom, PDelta, PSkip, PEnd, PInst, PAlt, PSeq, PPar, PSum, PEncaps, PHide, PDisrupt, PStar
]

# printing precedence: "." (3) > "*" (2) > "+"/"||" (1); everything else atomic.
# "+"/"||" and "." print left-associated chains; "*" is non-associative.
_PRECEDENCE = {PAlt: 1, PPar: 1, PStar: 2, PSeq: 3}


def _show(e: ProcExpr, parent_prec: int, tail: bool = False) -> str:
    """Render child `e` under a parent of precedence `parent_prec`.

    `tail` marks the left slot of an associative chain of the same operator,
    where equal precedence needs no parentheses.
    """
    prec = _PRECEDENCE.get(type(e), 9)
    if prec > parent_prec or (prec == parent_prec and tail):
        return str(e)
    return f"({e})"


def proc_vars(e: ProcExpr) -> Iterator[Var]:
    """Free variables of a process expression (sum binders excluded)."""
    if isinstance(e, (PAtom, PInst)):
        for a in e.args:
            yield from term_vars(a)
    elif isinstance(e, (PAlt, PSeq, PPar)):
        yield from proc_vars(e.left)
        yield from proc_vars(e.right)
    elif isinstance(e, PSum):
        for v in proc_vars(e.body):
            if v.name != e.var.name:
                yield v
    elif isinstance(e, (PEncaps, PHide)):
        yield from proc_vars(e.body)
    elif isinstance(e, PDisrupt):
        yield from proc_vars(e.body)
        yield from proc_vars(e.disruptor)
    elif isinstance(e, PStar):
        yield from proc_vars(e.body)
        yield from proc_vars(e.exit)


def substitute_proc(e: ProcExpr, binding: Binding) -> ProcExpr:
    """Capture-avoiding substitution of data variables in a process expression."""
    if not binding:
        return e
    if isinstance(e, PAtom):
        return PAtom(e.name, tuple(substitute_term(a, binding) for a in e.args))
    if isinstance(e, PInst):
        return PInst(e.name, tuple(substitute_term(a, binding) for a in e.args), e.display)
    if isinstance(e, PAlt):
        return PAlt(substitute_proc(e.left, binding), substitute_proc(e.right, binding))
    if isinstance(e, PSeq):
        return PSeq(substitute_proc(e.left, binding), substitute_proc(e.right, binding))
    if isinstance(e, PPar):
        return PPar(substitute_proc(e.left, binding), substitute_proc(e.right, binding))
    if isinstance(e, PSum):
        inner = {k: v for k, v in binding.items() if k != e.var.name}
        return PSum(e.var, substitute_proc(e.body, inner))
    if isinstance(e, PEncaps):
        return PEncaps(e.atom_set, substitute_proc(e.body, binding))
    if isinstance(e, PHide):
        return PHide(e.atom_set, substitute_proc(e.body, binding))
    if isinstance(e, PDisrupt):
        return PDisrupt(substitute_proc(e.body, binding), substitute_proc(e.disruptor, binding))
    if isinstance(e, PStar):
        return PStar(substitute_proc(e.body, binding), substitute_proc(e.exit, binding))
    return e


def substitute(x, binding: Binding):
    """Uniform substitution over terms and process expressions."""
    if isinstance(x, (Var, App, Lit)):
        return substitute_term(x, binding)
    return substitute_proc(x, binding)


# ---------------------------------------------------------------------------
# atom patterns: communications and atom sets


@dataclass(frozen=True)
class AtomPattern:
    name: str
    args: tuple[Term, ...] = ()

    def __str__(self) -> str:
        return str(Act(self.name, self.args))


def match_action(pattern: AtomPattern, label: ActionLabel) -> Optional[dict[str, Term]]:
    """Match a quantified atom pattern against a ground action; Tau never matches."""
    if isinstance(label, _Tau):
        return None
    if pattern.name != label.name or len(pattern.args) != len(label.args):
        return None
    b: dict[str, Term] = {}
    for p, v in zip(pattern.args, label.args):
        if not _match_into(p, v, b):
            return None
    return b


def unify_action(pattern: AtomPattern, label: ActionLabel, binding: Optional[dict[str, Term]] = None):
    """Like match_action but the label may itself contain variables."""
    if isinstance(label, _Tau):
        return None
    if pattern.name != label.name or len(pattern.args) != len(label.args):
        return None
    b = dict(binding) if binding else {}
    for p, v in zip(pattern.args, label.args):
        if not _unify_into(p, v, b):
            return None
    return b


@dataclass(frozen=True)
class CommRule:
    """Binary communication: lhs_a | lhs_b = result, quantified by the pattern vars."""

    lhs_a: AtomPattern
    lhs_b: AtomPattern
    result: AtomPattern

    def __str__(self) -> str:
        return f"{self.lhs_a} | {self.lhs_b} = {self.result}"


@dataclass(frozen=True)
class AtomSetDef:
    name: str
    members: tuple[AtomPattern, ...]

    def contains(self, label: ActionLabel) -> bool:
        """Ground membership; a label with variables matches if any instance would."""
        if isinstance(label, _Tau):
            return False
        return any(unify_action(m, _freshened(label)) is not None for m in self.members)


def _freshened(label: Act) -> Act:
    # keep label vars distinct from member-pattern vars during unification
    def f(t: Term) -> Term:
        if isinstance(t, Var):
            return Var(t.name + "'", t.sort)
        if isinstance(t, App) and t.args:
            return App(t.fn, tuple(f(a) for a in t.args))
        return t

    return Act(label.name, tuple(f(a) for a in label.args))


# ---------------------------------------------------------------------------
# sort enumeration

NAT_SORT_NAME = "NAT"


class InfiniteSortError(PsfError):
    def __init__(self, sort: Sort):
        super().__init__(f"sort {sort.name} is infinite; a depth bound is required to enumerate it")
        self.sort = sort


def enumerate_sort(spec, sort: Sort, depth_bound: Optional[int] = None) -> list[Term]:
    """All ground terms of `sort` within `depth_bound` constructor nestings.

    Deterministic order: declaration order, breadth-first over nesting depth.
    Numeric sorts enumerate the numerals 0..depth_bound and always require
    the bound; so do sorts with recursive constructors.
    """
    if spec.is_numeric(sort.name):
        if depth_bound is None:
            raise InfiniteSortError(sort)
        return [Lit(i, sort) for i in range(depth_bound + 1)]
    if depth_bound is None:
        if _sort_is_recursive(spec, sort.name):
            raise InfiniteSortError(sort)
        depth_bound = _max_sort_depth(spec)

    def terms_at(s: Sort, depth: int, memo: dict) -> list[Term]:
        """Ground terms of s with nesting depth <= depth."""
        key = (s.name, depth)
        if key in memo:
            return memo[key]
        memo[key] = []
        out: list[Term] = []
        if spec.is_numeric(s.name):
            out = [Lit(i, s) for i in range(depth_bound + 1)]
        else:
            for fn in spec.constructors_of(s.name):
                if fn.arity == 0:
                    out.append(App(fn))
                elif depth > 0:
                    pools = [terms_at(a, depth - 1, memo) for a in fn.arg_sorts]
                    out.extend(App(fn, combo) for combo in _products(pools))
        memo[key] = out
        return out

    memo: dict = {}
    seen: set[Term] = set()
    result: list[Term] = []
    for d in range(depth_bound + 1):
        for t in terms_at(sort, d, memo):
            if t not in seen:
                seen.add(t)
                result.append(t)
    return result


def _max_sort_depth(spec) -> int:
    # non-recursive constructor graphs nest at most |sorts| deep
    return max(1, len(list(spec.sort_names())))


def _products(pools: list[list[Term]]) -> Iterator[tuple[Term, ...]]:
    if not pools:
        yield ()
        return
    for head in pools[0]:
        for rest in _products(pools[1:]):
            yield (head,) + rest


def _sort_is_recursive(spec, name: str, seen: Optional[set[str]] = None) -> bool:
    seen = seen or set()
    if name in seen:
        return True
    seen = seen | {name}
    for fn in spec.constructors_of(name):
        for arg in fn.arg_sorts:
            if spec.is_numeric(arg.name):
                return True
            if arg.name == name or _sort_is_recursive(spec, arg.name, seen):
                return True
    return False
