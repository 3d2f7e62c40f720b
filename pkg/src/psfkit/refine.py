"""Vertical implementation: action refinement mappings and their verification.

A mapping file has a `refinements` section (each action pattern rewritten to
a sequence of actions), a `renamings` section for local actions, and an
optional `process renamings` section.  Placeholders $1..$n in a left-hand
side bind argument positions for use on the right.

Verification abstracts both sides and compares them: on the source, local
renamings are applied and every occurrence of a refined action becomes the
silent step; on the target, every occurrence of a complete refinement
right-hand-side chain becomes silent steps.  Matching whole chains rather
than isolated actions is what lets a mutilated target (a chain with a step
missing) stay observable and fail the equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .linker import FlatSpec, ProcDefn
from .semantics import Lts, build_lts
from .bisim import BisimResult, rooted_weak_bisim
from .syntax import ParseError, RTerm, Token, tokenize
from .terms import (
    App, FuncSig, Lit, PAlt, PAtom, PDisrupt, PEncaps, PHide, PInst, PPar,
    PSeq, PSkip, PStar, PSum, ProcExpr, PsfError, Sort, Term,
)


class MappingError(PsfError):
    pass


OPAQUE_SORT = Sort("<opaque>")


@dataclass(frozen=True)
class RefineRule:
    lhs: RTerm  # action pattern; args may contain placeholders $1..$n
    rhs: tuple[RTerm, ...]  # nonempty action sequence over the same placeholders

    def __str__(self) -> str:
        return f"{self.lhs} -> {' . '.join(map(str, self.rhs))}"


@dataclass
class RefinementMap:
    refinements: list[RefineRule] = field(default_factory=list)
    renamings: list[tuple[RTerm, RTerm]] = field(default_factory=list)
    process_renamings: dict[str, str] = field(default_factory=dict)


def _placeholders(t: RTerm) -> set[str]:
    if t.name.startswith("$"):
        return {t.name}
    out: set[str] = set()
    for a in t.args:
        out |= _placeholders(a)
    return out


def parse_mapping(text: str, filename: str = "<map>") -> RefinementMap:
    toks = tokenize(text, filename)
    pos = 0

    def cur() -> Token:
        return toks[pos]

    def err(msg: str):
        raise ParseError(filename, cur().line, cur().col, msg)

    def take() -> Token:
        nonlocal pos
        t = toks[pos]
        pos += 1
        return t

    def at_word(w: str) -> bool:
        return cur().text == w

    SECTION_WORDS = ("refinements", "renamings", "process")

    def parse_term() -> RTerm:
        if cur().kind == "number":
            return RTerm(num=int(take().text))
        if cur().kind == "placeholder":
            return RTerm(take().text)
        if cur().text in SECTION_WORDS or cur().kind == "eof":
            err("a rule is missing its action")
        if cur().kind not in ("ident", "keyword"):
            err(f"expected a term, found {cur().text!r}")
        name = take().text
        args: list[RTerm] = []
        if cur().text == "(":
            take()
            left = parse_term_full()
            args.append(left)
            while cur().text == ",":
                take()
                args.append(parse_term_full())
            if cur().text != ")":
                err("expected ')'")
            take()
        return RTerm(name, tuple(args))

    def parse_term_full() -> RTerm:
        left = parse_term()
        if cur().text == ">>":
            take()
            right = parse_term()
            return RTerm(">>", (left, right))
        return left

    m = RefinementMap()
    section = None
    while cur().kind != "eof":
        if at_word("refinements"):
            take()
            section = "refinements"
            continue
        if at_word("renamings"):
            take()
            section = "renamings"
            continue
        if at_word("process") and toks[pos + 1].text == "renamings":
            take()
            take()
            section = "process"
            continue
        if section is None:
            err("expected a section header: refinements, renamings, or process renamings")
        if section == "process":
            old = take().text
            if cur().text != "->":
                err("expected '->'")
            take()
            new = take().text
            m.process_renamings[old] = new
            continue
        lhs = parse_term_full()
        if cur().text != "->":
            err("expected '->'")
        take()
        parts = [parse_term_full()]
        while cur().text == ".":
            take()
            parts.append(parse_term_full())
        if section == "refinements":
            lhs_ph = _placeholders(lhs)
            for p in parts:
                missing = _placeholders(p) - lhs_ph
                if missing:
                    raise MappingError(f"placeholder {sorted(missing)[0]} used in rhs of [{lhs} -> ...] but absent from lhs")
            m.refinements.append(RefineRule(lhs, tuple(parts)))
        else:
            if len(parts) != 1:
                raise MappingError(f"renaming of {lhs} must map to a single action")
            missing = _placeholders(parts[0]) - _placeholders(lhs)
            if missing:
                raise MappingError(f"placeholder {sorted(missing)[0]} used in renaming rhs but absent from lhs")
            m.renamings.append((lhs, parts[0]))
    _check_disjoint(m)
    return m


def _check_disjoint(m: RefinementMap) -> None:
    for rule in m.refinements:
        for ren_lhs, _ in m.renamings:
            if _patterns_overlap(rule.lhs, ren_lhs):
                raise MappingError(f"action pattern {rule.lhs} matches both a refinement and a renaming")


def _patterns_overlap(a: RTerm, b: RTerm) -> bool:
    if a.name.startswith("$") or b.name.startswith("$"):
        return True
    if a.num is not None or b.num is not None:
        return a.num == b.num
    if a.name != b.name or len(a.args) != len(b.args):
        return False
    return all(_patterns_overlap(x, y) for x, y in zip(a.args, b.args))


# ---------------------------------------------------------------------------
# matching raw patterns against linked terms


def _match_pattern(p: RTerm, t: Term, binding: dict[str, Term]) -> bool:
    if p.name.startswith("$"):
        seen = binding.get(p.name)
        if seen is not None:
            return str(seen) == str(t)
        binding[p.name] = t
        return True
    if p.num is not None:
        return isinstance(t, Lit) and t.value == p.num
    if isinstance(t, App):
        if t.fn.name != p.name or len(t.args) != len(p.args):
            return False
        return all(_match_pattern(pa, ta, binding) for pa, ta in zip(p.args, t.args))
    if not p.args and str(t) == p.name:
        # a bare pattern name may also match a like-named variable
        return True
    return False


def _match_atom(p: RTerm, atom: PAtom) -> Optional[dict[str, Term]]:
    if p.name != atom.name or len(p.args) != len(atom.args):
        return None
    binding: dict[str, Term] = {}
    for pa, ta in zip(p.args, atom.args):
        if not _match_pattern(pa, ta, binding):
            return None
    return binding


class _Vocabulary:
    """Resolves mapping right-hand sides to linked terms, inventing opaque
    constructors for names the source specification does not know."""

    def __init__(self, spec: FlatSpec):
        self.spec = spec
        self.invented: dict[tuple[str, int], FuncSig] = {}

    def build_term(self, t: RTerm, binding: dict[str, Term]) -> Term:
        if t.name.startswith("$"):
            try:
                return binding[t.name]
            except KeyError:
                raise MappingError(f"unbound placeholder {t.name}") from None
        if t.num is not None:
            numeric = [s for s in self.spec.numeric_sorts]
            sort = self.spec.sorts[numeric[0]] if numeric else OPAQUE_SORT
            return Lit(t.num, sort)
        args = tuple(self.build_term(a, binding) for a in t.args)
        candidates = self.spec.func_index.get((t.name, len(args)), [])
        for fn in candidates:
            if all(_sort_of(a) == s or s == OPAQUE_SORT for a, s in zip(args, fn.arg_sorts)):
                return App(fn, args)
        key = (t.name, len(args))
        fn = self.invented.get(key)
        if fn is None:
            fn = FuncSig(t.name, tuple(_sort_of(a) for a in args), OPAQUE_SORT)
            self.invented[key] = fn
        return App(fn, args)

    def build_atom(self, t: RTerm, binding: dict[str, Term]) -> PAtom:
        return PAtom(t.name, tuple(self.build_term(a, binding) for a in t.args))


def _sort_of(t: Term) -> Sort:
    from .terms import term_sort
    return term_sort(t)


# ---------------------------------------------------------------------------
# rewriting process definitions


def _rewrite_atom(atom: PAtom, m: RefinementMap, vocab: _Vocabulary) -> ProcExpr:
    matches = []
    for rule in m.refinements:
        b = _match_atom(rule.lhs, atom)
        if b is not None:
            matches.append((rule, b))
    if len(matches) > 1:
        raise MappingError(f"ambiguous refinement: {atom} matches {matches[0][0]} and {matches[1][0]}")
    if matches:
        rule, b = matches[0]
        chain: Optional[ProcExpr] = None
        for part in rule.rhs:
            step = vocab.build_atom(part, b)
            chain = step if chain is None else PSeq(chain, step)
        return chain
    for ren_lhs, ren_rhs in m.renamings:
        b = _match_atom(ren_lhs, atom)
        if b is not None:
            return vocab.build_atom(ren_rhs, b)
    return atom


def _map_body(e: ProcExpr, f) -> ProcExpr:
    """Apply f to every atom occurrence, leaving structure intact."""
    if isinstance(e, PAtom):
        return f(e)
    if isinstance(e, PAlt):
        return PAlt(_map_body(e.left, f), _map_body(e.right, f))
    if isinstance(e, PSeq):
        return PSeq(_map_body(e.left, f), _map_body(e.right, f))
    if isinstance(e, PPar):
        return PPar(_map_body(e.left, f), _map_body(e.right, f))
    if isinstance(e, PSum):
        return PSum(e.var, _map_body(e.body, f))
    if isinstance(e, PEncaps):
        return PEncaps(e.atom_set, _map_body(e.body, f))
    if isinstance(e, PHide):
        return PHide(e.atom_set, _map_body(e.body, f))
    if isinstance(e, PDisrupt):
        return PDisrupt(_map_body(e.body, f), _map_body(e.disruptor, f))
    if isinstance(e, PStar):
        return PStar(_map_body(e.body, f), _map_body(e.exit, f))
    return e


def _rename_insts(e: ProcExpr, renames: dict[str, str]) -> ProcExpr:
    if isinstance(e, PInst):
        display = e.display or e.name
        if display in renames:
            new = renames[display]
            return PInst(new, e.args, display=new)
        return e
    if isinstance(e, PAlt):
        return PAlt(_rename_insts(e.left, renames), _rename_insts(e.right, renames))
    if isinstance(e, PSeq):
        return PSeq(_rename_insts(e.left, renames), _rename_insts(e.right, renames))
    if isinstance(e, PPar):
        return PPar(_rename_insts(e.left, renames), _rename_insts(e.right, renames))
    if isinstance(e, PSum):
        return PSum(e.var, _rename_insts(e.body, renames))
    if isinstance(e, PEncaps):
        return PEncaps(e.atom_set, _rename_insts(e.body, renames))
    if isinstance(e, PHide):
        return PHide(e.atom_set, _rename_insts(e.body, renames))
    if isinstance(e, PDisrupt):
        return PDisrupt(_rename_insts(e.body, renames), _rename_insts(e.disruptor, renames))
    if isinstance(e, PStar):
        return PStar(_rename_insts(e.body, renames), _rename_insts(e.exit, renames))
    return e


def _clone_spec(spec: FlatSpec) -> FlatSpec:
    out = FlatSpec()
    out.sorts = dict(spec.sorts)
    out.numeric_sorts = set(spec.numeric_sorts)
    out.constructors = {k: list(v) for k, v in spec.constructors.items()}
    out.func_index = {k: list(v) for k, v in spec.func_index.items()}
    out.atoms = dict(spec.atoms)
    out.atom_names = set(spec.atom_names)
    out.atom_sets = dict(spec.atom_sets)
    out.comm_rules = list(spec.comm_rules)
    out.processes = dict(spec.processes)
    out.by_display = {k: list(v) for k, v in spec.by_display.items()}
    out.formal_processes = set(spec.formal_processes)
    out.root = spec.root
    out.diagnostics = list(spec.diagnostics)
    return out


def _apply_to_defs(spec: FlatSpec, transform, process_renames: dict[str, str]) -> FlatSpec:
    out = _clone_spec(spec)
    new_procs: dict[str, ProcDefn] = {}
    by_display: dict[str, list[str]] = {}
    for key, d in spec.processes.items():
        new_display = process_renames.get(d.display, d.display)
        new_key = process_renames.get(key, key)
        body = transform(d.body)
        body = _rename_insts(body, process_renames)
        nd = ProcDefn(new_key, new_display, d.params, d.arg_sorts, body, d.module, d.line)
        new_procs[new_key] = nd
        by_display.setdefault(new_display, []).append(new_key)
    out.processes = new_procs
    out.by_display = by_display
    return out


def apply_mapping(spec: FlatSpec, m: RefinementMap) -> FlatSpec:
    """Refine every matching action to its sequence; rename local actions."""
    vocab = _Vocabulary(spec)
    return _apply_to_defs(spec, lambda body: _map_body(body, lambda a: _rewrite_atom(a, m, vocab)), m.process_renamings)


def abstract_source(spec: FlatSpec, m: RefinementMap) -> FlatSpec:
    """Renamings applied; every refined action occurrence becomes silent."""
    vocab = _Vocabulary(spec)

    def f(atom: PAtom) -> ProcExpr:
        for rule in m.refinements:
            if _match_atom(rule.lhs, atom) is not None:
                return PSkip()
        for ren_lhs, ren_rhs in m.renamings:
            b = _match_atom(ren_lhs, atom)
            if b is not None:
                return vocab.build_atom(ren_rhs, b)
        return atom

    return _apply_to_defs(spec, lambda body: _map_body(body, f), m.process_renamings)


def abstract_target(spec: FlatSpec, m: RefinementMap) -> FlatSpec:
    """Every occurrence of a complete refinement rhs chain becomes silent.

    Chains are matched against maximal runs of consecutive actions in each
    sequential composition, with placeholder bindings shared across one
    chain instance.  An action that matches an rhs element outside a
    complete chain stays observable.
    """

    def rewrite(e: ProcExpr) -> ProcExpr:
        if isinstance(e, PSeq):
            chain = _seq_chain(e)
            chain = [rewrite(x) for x in chain]
            chain = _hide_chains(chain, m)
            out = chain[0]
            for x in chain[1:]:
                out = PSeq(out, x)
            return out
        if isinstance(e, PAtom):
            replaced = _hide_chains([e], m)
            return replaced[0]
        if isinstance(e, PAlt):
            return PAlt(rewrite(e.left), rewrite(e.right))
        if isinstance(e, PPar):
            return PPar(rewrite(e.left), rewrite(e.right))
        if isinstance(e, PSum):
            return PSum(e.var, rewrite(e.body))
        if isinstance(e, PEncaps):
            return PEncaps(e.atom_set, rewrite(e.body))
        if isinstance(e, PHide):
            return PHide(e.atom_set, rewrite(e.body))
        if isinstance(e, PDisrupt):
            return PDisrupt(rewrite(e.body), rewrite(e.disruptor))
        if isinstance(e, PStar):
            return PStar(rewrite(e.body), rewrite(e.exit))
        return e

    return _apply_to_defs(spec, rewrite, {})


def _seq_chain(e: ProcExpr) -> list[ProcExpr]:
    if isinstance(e, PSeq):
        return _seq_chain(e.left) + _seq_chain(e.right)
    return [e]


def _hide_chains(chain: list[ProcExpr], m: RefinementMap) -> list[ProcExpr]:
    out = list(chain)
    i = 0
    while i < len(out):
        matched = 0
        for rule in m.refinements:
            k = len(rule.rhs)
            if i + k > len(out):
                continue
            binding: dict[str, Term] = {}
            ok = True
            for j, part in enumerate(rule.rhs):
                elem = out[i + j]
                if not isinstance(elem, PAtom):
                    ok = False
                    break
                b = _match_atom(part, elem)
                if b is None:
                    ok = False
                    break
                for name, t in b.items():
                    if name in binding and str(binding[name]) != str(t):
                        ok = False
                        break
                    binding[name] = t
                if not ok:
                    break
            if ok:
                matched = k
                break
        if matched:
            for j in range(matched):
                out[i + j] = PSkip()
            i += matched
        else:
            i += 1
    return out


def verify_refinement(
    source: FlatSpec,
    m: RefinementMap,
    target: FlatSpec,
    entry_source: str,
    entry_target: str,
    max_states: int = 100_000,
    depth_bound: Optional[int] = None,
) -> BisimResult:
    """The worked recipe: abstract both sides, compare rooted-weakly."""
    abs_src = abstract_source(source, m)
    abs_tgt = abstract_target(target, m)
    entry_src = m.process_renamings.get(entry_source, entry_source)
    lts_a = build_lts(abs_src, entry_src, max_states=max_states, depth_bound=depth_bound)
    lts_b = build_lts(abs_tgt, entry_target, max_states=max_states, depth_bound=depth_bound)
    return rooted_weak_bisim(lts_a, lts_b)


def lts_of(spec: FlatSpec, entry: str, max_states: int = 100_000, depth_bound: Optional[int] = None) -> Lts:
    return build_lts(spec, entry, max_states=max_states, depth_bound=depth_bound)
