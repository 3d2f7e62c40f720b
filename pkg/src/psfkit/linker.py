"""Flattening a set of modules into a single linked specification.

Imports are resolved recursively; a parameterized import instantiates a
fresh copy of the imported module with its formal names substituted by the
bound actuals and its exported names renamed.  Two imports of the same
module with identical bindings share one instance; different bindings make
distinct copies whose process equations get distinct internal keys (the
source-level name is kept for display, and references are resolved against
the equation's argument pattern).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import syntax
from .syntax import (
    AtomDecl, BindingClause, CommDecl, Declarations, FuncDecl, ImportClause,
    ModuleDef, ProcDecl, ProcEq, RAction, RCall, RDelta, RDisrupt, REncaps,
    RHide, RPar, RProc, RSeq, RSkip, RStar, RSum, RAlt, RTerm, SetDecl,
    VarDecl,
)
from .terms import (
    App, AtomPattern, AtomSetDef, CommRule, FuncSig, Lit, PAlt, PAtom,
    PDelta, PDisrupt, PEncaps, PHide, PInst, PPar, PSeq, PSkip, PStar, PSum,
    ProcExpr, PsfError, Sort, Term, Var, NAT_SORT_NAME,
)

BUILTIN_NATURALS = "Naturals"


class LinkError(PsfError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass
class ProcDefn:
    key: str
    display: str
    params: tuple[Term, ...]
    arg_sorts: tuple[Sort, ...]
    body: ProcExpr
    module: str
    line: int = 0


class FlatSpec:
    """A fully linked specification."""

    def __init__(self) -> None:
        self.sorts: dict[str, Sort] = {}
        self.numeric_sorts: set[str] = set()
        self.constructors: dict[str, list[FuncSig]] = {}  # by result sort name
        self.func_index: dict[tuple[str, int], list[FuncSig]] = {}
        self.atoms: dict[tuple[str, int], tuple[Sort, ...]] = {}
        self.atom_names: set[str] = set()
        self.atom_sets: dict[str, AtomSetDef] = {}
        self.comm_rules: list[CommRule] = []
        self.processes: dict[str, ProcDefn] = {}
        self.by_display: dict[str, list[str]] = {}
        self.formal_processes: set[str] = set()  # parameter-declared, possibly unbound
        self.root: str = ""
        self.diagnostics: list[Diagnostic] = []

    # -- queries used across the workbench ---------------------------------

    def is_numeric(self, sort_name: str) -> bool:
        return sort_name in self.numeric_sorts

    def constructors_of(self, sort_name: str) -> list[FuncSig]:
        return self.constructors.get(sort_name, [])

    def sort_names(self):
        return self.sorts.keys()

    def sort(self, name: str) -> Sort:
        try:
            return self.sorts[name]
        except KeyError:
            raise LinkError(f"unknown sort {name}") from None

    def atom_signature(self, name: str, arity: int) -> Optional[tuple[Sort, ...]]:
        return self.atoms.get((name, arity))

    def lookup_process(self, display: str, args: tuple[Term, ...]) -> ProcDefn:
        """Resolve a process reference by display name and argument pattern."""
        keys = self.by_display.get(display, [])
        if not keys:
            raise LinkError(f"undefined process {display}")
        matches = []
        for k in keys:
            d = self.processes[k]
            if len(d.params) != len(args):
                continue
            from .terms import unify_terms
            b: Optional[dict] = {}
            for p, a in zip(d.params, args):
                b = unify_terms(_freshen_pattern(p), a, b)
                if b is None:
                    break
            if b is not None:
                matches.append(d)
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise LinkError(f"no defining equation of {display} matches arguments ({', '.join(map(str, args))})")
        raise LinkError(f"ambiguous reference {display}({', '.join(map(str, args))}): {len(matches)} equations match")

    def definition(self, key: str) -> ProcDefn:
        return self.processes[key]

    def communications_for(self) -> list[CommRule]:
        return self.comm_rules


def _freshen_pattern(t: Term) -> Term:
    if isinstance(t, Var):
        return Var(t.name + "~p", t.sort)
    if isinstance(t, App) and t.args:
        return App(t.fn, tuple(_freshen_pattern(a) for a in t.args))
    return t


# ---------------------------------------------------------------------------
# identifier substitution over raw modules


@dataclass
class _Subst:
    sorts: dict[str, str] = field(default_factory=dict)
    funcs: dict[str, str] = field(default_factory=dict)
    atoms: dict[str, str] = field(default_factory=dict)
    procs: dict[str, str] = field(default_factory=dict)
    sets: dict[str, str] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.sorts or self.funcs or self.atoms or self.procs or self.sets)


def _sub_sort(s: _Subst, name: str) -> str:
    return s.sorts.get(name, name)


def _sub_term(s: _Subst, t: RTerm) -> RTerm:
    if t.num is not None:
        return t
    name = s.funcs.get(t.name, t.name)
    return RTerm(name, tuple(_sub_term(s, a) for a in t.args))


def _sub_action(s: _Subst, a: RAction) -> RAction:
    return RAction(s.atoms.get(a.name, a.name), tuple(_sub_term(s, t) for t in a.args))


def _sub_proc(s: _Subst, e: RProc) -> RProc:
    if isinstance(e, RCall):
        name = e.name
        if name in s.atoms:
            name = s.atoms[name]
        elif name in s.procs:
            name = s.procs[name]
        elif name in s.funcs:
            # a formal constant used as a bare call never happens; keep the name
            name = e.name
        return RCall(name, tuple(_sub_term(s, t) for t in e.args))
    if isinstance(e, (RDelta, RSkip)):
        return e
    if isinstance(e, RAlt):
        return RAlt(_sub_proc(s, e.left), _sub_proc(s, e.right))
    if isinstance(e, RSeq):
        return RSeq(_sub_proc(s, e.left), _sub_proc(s, e.right))
    if isinstance(e, RPar):
        return RPar(_sub_proc(s, e.left), _sub_proc(s, e.right))
    if isinstance(e, RSum):
        return RSum(e.var, _sub_sort(s, e.sort), _sub_proc(s, e.body))
    if isinstance(e, REncaps):
        return REncaps(s.sets.get(e.atom_set, e.atom_set), _sub_proc(s, e.body))
    if isinstance(e, RHide):
        return RHide(s.sets.get(e.atom_set, e.atom_set), _sub_proc(s, e.body))
    if isinstance(e, RDisrupt):
        return RDisrupt(_sub_proc(s, e.body), _sub_proc(s, e.disruptor))
    if isinstance(e, RStar):
        return RStar(_sub_proc(s, e.body), _sub_proc(s, e.exit))
    raise TypeError(type(e))


def _sub_decls(s: _Subst, d: Declarations) -> Declarations:
    return Declarations(
        tuple(_sub_sort(s, x) for x in d.sorts),
        tuple(
            FuncDecl(s.funcs.get(f.name, f.name), tuple(_sub_sort(s, a) for a in f.arg_sorts), _sub_sort(s, f.result))
            for f in d.functions
        ),
        tuple(
            AtomDecl(s.atoms.get(a.name, a.name), tuple(_sub_sort(s, x) for x in a.arg_sorts))
            for a in d.atoms
        ),
        tuple(
            ProcDecl(s.procs.get(p.name, p.name), tuple(_sub_sort(s, x) for x in p.arg_sorts))
            for p in d.processes
        ),
    )


def _sub_module(s: _Subst, m: ModuleDef) -> ModuleDef:
    if s.is_empty():
        return m
    return ModuleDef(
        kind=m.kind,
        name=m.name,
        parameters=tuple(syntax.ParamSection(p.name, _sub_decls(s, p.decls)) for p in m.parameters),
        exports=_sub_decls(s, m.exports),
        imports=tuple(
            ImportClause(
                imp.module,
                tuple(
                    BindingClause(b.section, tuple((f, _any_sub(s, a)) for f, a in b.pairs), b.source)
                    for b in imp.bindings
                ),
                tuple((old, _any_sub(s, new)) for old, new in imp.renamings),
            )
            for imp in m.imports
        ),
        locals=_sub_decls(s, m.locals),
        sets=tuple(
            SetDecl(
                s.sets.get(x.name, x.name),
                tuple(_sub_action(s, mm) for mm in x.members),
                tuple((v, _sub_sort(s, so)) for v, so in x.quantifiers),
            )
            for x in m.sets
        ),
        communications=tuple(
            CommDecl(
                _sub_action(s, c.left),
                _sub_action(s, c.right),
                _sub_action(s, c.result),
                tuple((v, _sub_sort(s, so)) for v, so in c.quantifiers),
            )
            for c in m.communications
        ),
        variables=tuple(VarDecl(v.name, _sub_sort(s, v.sort)) for v in m.variables),
        definitions=tuple(
            ProcEq(
                s.procs.get(eq.name, eq.name),
                tuple(_sub_term(s, t) for t in eq.params),
                _sub_proc(s, eq.body),
                eq.line,
            )
            for eq in m.definitions
        ),
        line=m.line,
    )


def _any_sub(s: _Subst, name: str) -> str:
    for table in (s.procs, s.funcs, s.atoms, s.sorts, s.sets):
        if name in table:
            return table[name]
    return name


# ---------------------------------------------------------------------------
# instances


@dataclass
class _Instance:
    key: str
    module: ModuleDef  # copy with substitutions/renamings applied
    ordinal: int
    imports: list[str] = field(default_factory=list)  # instance keys (direct)
    proc_keys: dict[str, str] = field(default_factory=dict)  # display -> unique key
    numeric_sorts: set[str] = field(default_factory=set)

    @property
    def name(self) -> str:
        return self.module.name


def _builtin_naturals() -> ModuleDef:
    # built-in: exports the numeric sort NAT; the parameter section lets a
    # client bind NAT onto one of its own sorts, making that sort numeric
    return ModuleDef(
        kind="data",
        name=BUILTIN_NATURALS,
        parameters=(syntax.ParamSection("Nat", Declarations(sorts=(NAT_SORT_NAME,))),),
    )


class _Linker:
    def __init__(self, mods: list[ModuleDef]):
        self.modules: dict[str, ModuleDef] = {}
        for m in mods:
            if m.name in self.modules:
                raise LinkError(f"duplicate module {m.name}")
            self.modules[m.name] = m
        self.modules.setdefault(BUILTIN_NATURALS, _builtin_naturals())
        self.instances: dict[str, _Instance] = {}
        self.in_progress: list[str] = []
        self.counter = 0

    # instance key is the module name plus a fingerprint of bindings/renamings
    def _key(self, name: str, bindings: tuple, renamings: tuple) -> str:
        if not bindings and not renamings:
            return name
        fp = ";".join(f"{b.section}:{','.join(f'{x}>{y}' for x, y in b.pairs)}" for b in bindings)
        fp += "|" + ",".join(f"{o}>{n}" for o, n in renamings)
        return f"{name}[{fp}]"

    def instantiate(self, name: str, bindings: tuple = (), renamings: tuple = ()) -> _Instance:
        key = self._key(name, bindings, renamings)
        if key in self.instances:
            return self.instances[key]
        if key in self.in_progress:
            raise LinkError(f"cyclic import through {name}")
        mod = self.modules.get(name)
        if mod is None:
            raise LinkError(f"unknown module {name}")
        self.in_progress.append(key)
        try:
            inst = self._build_instance(key, mod, bindings, renamings)
        finally:
            self.in_progress.pop()
        self.instances[key] = inst
        return inst

    def _build_instance(self, key: str, mod: ModuleDef, bindings: tuple, renamings: tuple) -> _Instance:
        subst = _Subst()
        numeric: set[str] = set()
        bound_formals: set[tuple[str, str]] = set()  # (section, formal)

        for b in bindings:
            section = next((p for p in mod.parameters if p.name == b.section), None)
            if section is None:
                raise LinkError(f"{mod.name}: no parameter section {b.section}")
            for formal, actual in b.pairs:
                kind = _formal_kind(section.decls, formal)
                if kind is None:
                    raise LinkError(f"{mod.name}: {formal} is not declared in parameter section {b.section}")
                if kind == "sort":
                    subst.sorts[formal] = actual
                    if mod.name == BUILTIN_NATURALS and formal == NAT_SORT_NAME:
                        numeric.add(actual)
                elif kind == "func":
                    subst.funcs[formal] = actual
                elif kind == "proc":
                    subst.procs[formal] = actual
                else:
                    subst.atoms[formal] = actual
                bound_formals.add((b.section, formal))
            source = self.modules.get(b.source)
            if source is None:
                raise LinkError(f"{mod.name}: binding source module {b.source} not found")
            declared = _declared_names(source)
            for p in source.parameters:
                for kind, names in (
                    ("sort", p.decls.sorts),
                    ("func", [f.name for f in p.decls.functions]),
                    ("atom", [a.name for a in p.decls.atoms]),
                    ("proc", [q.name for q in p.decls.processes]),
                ):
                    for n in names:
                        declared.setdefault(n, kind)
            for _formal, actual in b.pairs:
                if actual not in declared:
                    raise LinkError(f"{mod.name}: binding to {actual}, which {b.source} does not declare")

        # renamings apply to names this module itself declares
        own = _declared_names(mod)
        for old, new in renamings:
            kind = own.get(old)
            if kind is None:
                raise LinkError(f"{mod.name}: renaming of {old} which it does not declare")
            getattr(subst, kind + "s")[old] = new

        if mod.name == BUILTIN_NATURALS and not any(
            f == NAT_SORT_NAME for (sec, f) in bound_formals
        ):
            numeric.add(NAT_SORT_NAME)

        copy = _sub_module(subst, mod)
        # bound formal declarations disappear: the actual's declaration rules
        copy = _drop_bound_formals(copy, bound_formals, subst)

        self.counter += 1
        inst = _Instance(key=key, module=copy, ordinal=self.counter, numeric_sorts=numeric)

        for imp in copy.imports:
            nested = self.instantiate(imp.module, imp.bindings, imp.renamings)
            inst.imports.append(nested.key)
            for b in imp.bindings:
                src = self.instantiate(b.source)
                inst.imports.append(src.key)

        # unique keys for this instance's process equations
        suffix = "" if inst.key == mod.name else f"#{inst.ordinal}"
        for eq in copy.definitions:
            inst.proc_keys.setdefault(eq.name, eq.name + suffix)
        return inst


def _formal_kind(d: Declarations, name: str) -> Optional[str]:
    if name in d.sorts:
        return "sort"
    if any(f.name == name for f in d.functions):
        return "func"
    if any(p.name == name for p in d.processes):
        return "proc"
    if any(a.name == name for a in d.atoms):
        return "atom"
    return None


def _declared_names(m: ModuleDef) -> dict[str, str]:
    names: dict[str, str] = {}
    for d in (m.exports, m.locals):
        for s in d.sorts:
            names[s] = "sort"
        for f in d.functions:
            names[f.name] = "func"
        for a in d.atoms:
            names[a.name] = "atom"
        for p in d.processes:
            names[p.name] = "proc"
    for s in m.sets:
        names[s.name] = "set"
    return names


def _drop_bound_formals(m: ModuleDef, bound: set[tuple[str, str]], subst: _Subst) -> ModuleDef:
    if not bound:
        return m
    new_params = []
    for p in m.parameters:
        keep_sorts = tuple(s for s in p.decls.sorts if (p.name, _inverse(subst.sorts, s)) not in bound)
        keep_funcs = tuple(f for f in p.decls.functions if (p.name, _inverse(subst.funcs, f.name)) not in bound)
        keep_atoms = tuple(a for a in p.decls.atoms if (p.name, _inverse(subst.atoms, a.name)) not in bound)
        keep_procs = tuple(q for q in p.decls.processes if (p.name, _inverse(subst.procs, q.name)) not in bound)
        decls = Declarations(keep_sorts, keep_funcs, keep_atoms, keep_procs)
        if not decls.is_empty():
            new_params.append(syntax.ParamSection(p.name, decls))
    return ModuleDef(
        kind=m.kind, name=m.name, parameters=tuple(new_params), exports=m.exports,
        imports=m.imports, locals=m.locals, sets=m.sets, communications=m.communications,
        variables=m.variables, definitions=m.definitions, line=m.line,
    )


def _inverse(table: dict[str, str], name: str) -> str:
    for k, v in table.items():
        if v == name:
            return k
    return name


# ---------------------------------------------------------------------------
# flattening


def flatten(mods: list[ModuleDef], root: str) -> FlatSpec:
    """Link the module list starting from `root` into a FlatSpec.

    Raises LinkError on structural problems; milder issues are collected in
    the result's diagnostics list.
    """
    linker = _Linker(mods)
    if root not in linker.modules:
        raise LinkError(f"root module {root} not found")
    root_inst = linker.instantiate(root)

    # reachable instance closure, deterministic order
    order: list[_Instance] = []
    seen: set[str] = set()

    def visit(key: str) -> None:
        if key in seen:
            return
        seen.add(key)
        inst = linker.instances[key]
        for dep in inst.imports:
            visit(dep)
        order.append(inst)

    visit(root_inst.key)

    spec = FlatSpec()
    spec.root = root

    # pass 1: sorts
    for inst in order:
        for name in _all_sorts(inst.module):
            spec.sorts.setdefault(name, Sort(name))
        spec.numeric_sorts.update(inst.numeric_sorts)

    def sort_of(name: str, where: str) -> Sort:
        s = spec.sorts.get(name)
        if s is None:
            raise LinkError(f"{where}: unknown sort {name}")
        return s

    # pass 2: functions and atoms
    for inst in order:
        where = inst.name
        for p in inst.module.parameters:
            for q in p.decls.processes:
                spec.formal_processes.add(q.name)
        for d in _decl_groups(inst.module):
            for f in d.functions:
                sig = FuncSig(f.name, tuple(sort_of(a, where) for a in f.arg_sorts), sort_of(f.result, where))
                existing = spec.func_index.setdefault((f.name, sig.arity), [])
                if sig not in existing:
                    existing.append(sig)
                    spec.constructors.setdefault(sig.result.name, []).append(sig)
            for a in d.atoms:
                key = (a.name, len(a.arg_sorts))
                sig_a = tuple(sort_of(x, where) for x in a.arg_sorts)
                if key in spec.atoms and spec.atoms[key] != sig_a:
                    spec.diagnostics.append(Diagnostic(where, f"conflicting signatures for atom {a.name}"))
                spec.atoms[key] = sig_a
                spec.atom_names.add(a.name)

    resolver = _Resolver(spec, linker, order)
    resolver.run()
    return spec


def _all_sorts(m: ModuleDef):
    for d in _decl_groups(m):
        yield from d.sorts


def _decl_groups(m: ModuleDef):
    yield m.exports
    yield m.locals
    for p in m.parameters:
        yield p.decls


class _Resolver:
    """Second linking stage: terms, atom sets, communications, process bodies."""

    def __init__(self, spec: FlatSpec, linker: _Linker, order: list[_Instance]):
        self.spec = spec
        self.linker = linker
        self.order = order
        # map display name -> candidate instance keys (for process resolution)
        self.proc_decl_sorts: dict[str, tuple[Sort, ...]] = {}

    def run(self) -> None:
        spec = self.spec
        for inst in self.order:
            for d in _decl_groups(inst.module):
                for p in d.processes:
                    sig = tuple(spec.sorts[a] for a in p.arg_sorts)
                    prev = self.proc_decl_sorts.get(p.name)
                    if prev is not None and prev != sig and p.arg_sorts:
                        spec.diagnostics.append(Diagnostic(inst.name, f"conflicting signatures for process {p.name}"))
                    if p.arg_sorts or prev is None:
                        self.proc_decl_sorts[p.name] = sig

        for inst in self.order:
            self._link_sets(inst)
        for inst in self.order:
            self._link_comms(inst)
        self._check_comm_overlap()
        for inst in self.order:
            self._link_definitions(inst)
        self._check_display_collisions()

    # -- terms --------------------------------------------------------------

    def resolve_term(self, t: RTerm, expected: Optional[Sort], env: dict[str, Sort], where: str) -> Term:
        spec = self.spec
        if t.num is not None:
            if expected is None:
                raise LinkError(f"{where}: numeral {t.num} needs a sort from context")
            if not spec.is_numeric(expected.name):
                raise LinkError(f"{where}: numeral {t.num} used at non-numeric sort {expected.name}")
            return Lit(t.num, expected)
        if not t.args and t.name in env:
            v = Var(t.name, env[t.name])
            if expected is not None and v.sort != expected:
                raise LinkError(f"{where}: variable {t.name} has sort {v.sort.name}, expected {expected.name}")
            return v
        candidates = spec.func_index.get((t.name, len(t.args)), [])
        if expected is not None and candidates:
            narrowed = [c for c in candidates if c.result == expected]
            if not narrowed:
                have = ", ".join(c.result.name for c in candidates)
                raise LinkError(f"{where}: {t.name} has sort {have}, expected {expected.name}")
            candidates = narrowed
        if not candidates:
            raise LinkError(f"{where}: unknown {'constant' if not t.args else 'constructor'} {t.name}/{len(t.args)}")
        if len(candidates) > 1:
            raise LinkError(f"{where}: ambiguous constructor {t.name}/{len(t.args)}")
        fn = candidates[0]
        args = tuple(
            self.resolve_term(a, fn.arg_sorts[i], env, where) for i, a in enumerate(t.args)
        )
        return App(fn, args)

    def resolve_action(self, a: RAction, env: dict[str, Sort], where: str) -> AtomPattern:
        sig = self.spec.atom_signature(a.name, len(a.args))
        if sig is None:
            raise LinkError(f"{where}: unknown atom {a.name}/{len(a.args)}")
        args = tuple(self.resolve_term(t, sig[i], env, where) for i, t in enumerate(a.args))
        return AtomPattern(a.name, args)

    # -- sections -----------------------------------------------------------

    def _quant_env(self, quants, where: str) -> dict[str, Sort]:
        env: dict[str, Sort] = {}
        for v, s in quants:
            if s not in self.spec.sorts:
                raise LinkError(f"{where}: unknown sort {s} in quantifier")
            env[v] = self.spec.sorts[s]
        return env

    def _link_sets(self, inst: _Instance) -> None:
        for s in inst.module.sets:
            env = self._quant_env(s.quantifiers, inst.name)
            members = tuple(self.resolve_action(m, env, f"{inst.name}.{s.name}") for m in s.members)
            new = AtomSetDef(s.name, members)
            old = self.spec.atom_sets.get(s.name)
            if old is not None and old != new:
                self.spec.diagnostics.append(Diagnostic(inst.name, f"conflicting definitions of atom set {s.name}"))
            self.spec.atom_sets[s.name] = new

    def _link_comms(self, inst: _Instance) -> None:
        for c in inst.module.communications:
            env = self._quant_env(c.quantifiers, inst.name)
            where = f"{inst.name} communications"
            rule = CommRule(
                self.resolve_action(c.left, env, where),
                self.resolve_action(c.right, env, where),
                self.resolve_action(c.result, env, where),
            )
            lhs_vars = {v.name for p in (rule.lhs_a, rule.lhs_b) for a in p.args for v in _term_vars(a)}
            res_vars = {v.name for a in rule.result.args for v in _term_vars(a)}
            if not res_vars <= lhs_vars:
                raise LinkError(f"{where}: result uses variables {res_vars - lhs_vars} not bound on the left")
            if rule not in self.spec.comm_rules:
                self.spec.comm_rules.append(rule)

    def _check_comm_overlap(self) -> None:
        from .terms import unify_terms
        rules = self.spec.comm_rules
        for i in range(len(rules)):
            for j in range(i + 1, len(rules)):
                a, b = rules[i], rules[j]
                for x, y in ((a.lhs_a, a.lhs_b), (a.lhs_b, a.lhs_a)):
                    if x.name != b.lhs_a.name or y.name != b.lhs_b.name:
                        continue
                    if len(x.args) != len(b.lhs_a.args) or len(y.args) != len(b.lhs_b.args):
                        continue
                    bind: Optional[dict] = {}
                    for p, q in zip(x.args + y.args, b.lhs_a.args + b.lhs_b.args):
                        bind = unify_terms(_freshen_pattern(p), q, bind)
                        if bind is None:
                            break
                    if bind is not None:
                        self.spec.diagnostics.append(
                            Diagnostic("communications", f"overlapping communication rules: [{a}] and [{b}]")
                        )

    # -- process bodies -------------------------------------------------------

    def _link_definitions(self, inst: _Instance) -> None:
        mod = inst.module
        declared_vars = {v.name: self.spec.sorts[v.sort] for v in mod.variables if v.sort in self.spec.sorts}
        for eq in mod.definitions:
            key = inst.proc_keys[eq.name]
            where = f"{mod.name}.{eq.name}"
            sig = self.proc_decl_sorts.get(eq.name)
            if sig is None:
                raise LinkError(f"{where}: process {eq.name} is not declared")
            if len(sig) != len(eq.params):
                raise LinkError(f"{where}: equation has {len(eq.params)} parameters, declared {len(sig)}")
            params = tuple(
                self.resolve_term(p, sig[i], declared_vars, where) for i, p in enumerate(eq.params)
            )
            env = dict(declared_vars)
            body = self._link_proc(eq.body, env, inst, where)
            defn = ProcDefn(key, eq.name, params, sig, body, mod.name, eq.line)
            if key in self.spec.processes:
                self.spec.diagnostics.append(Diagnostic(where, f"duplicate defining equation for {eq.name}"))
            self.spec.processes[key] = defn
            self.spec.by_display.setdefault(eq.name, [])
            if key not in self.spec.by_display[eq.name]:
                self.spec.by_display[eq.name].append(key)

    def _link_proc(self, e: RProc, env: dict[str, Sort], inst: _Instance, where: str) -> ProcExpr:
        spec = self.spec
        if isinstance(e, RCall):
            arity = len(e.args)
            if (e.name, arity) in spec.atoms:
                sig = spec.atoms[(e.name, arity)]
                args = tuple(self.resolve_term(t, sig[i], env, where) for i, t in enumerate(e.args))
                return PAtom(e.name, args)
            key = self._resolve_proc_ref(e.name, inst)
            sig = self.proc_decl_sorts.get(e.name)
            if sig is None:
                if e.name in spec.atom_names:
                    raise LinkError(f"{where}: atom {e.name} used with wrong argument count")
                raise LinkError(f"{where}: unknown atom or process {e.name}")
            if len(sig) != arity:
                raise LinkError(f"{where}: {e.name} expects {len(sig)} arguments, got {arity}")
            args = tuple(self.resolve_term(t, sig[i], env, where) for i, t in enumerate(e.args))
            return PInst(key if key else e.name, args, display=e.name)
        if isinstance(e, RDelta):
            return PDelta()
        if isinstance(e, RSkip):
            return PSkip()
        if isinstance(e, RAlt):
            return PAlt(self._link_proc(e.left, env, inst, where), self._link_proc(e.right, env, inst, where))
        if isinstance(e, RSeq):
            return PSeq(self._link_proc(e.left, env, inst, where), self._link_proc(e.right, env, inst, where))
        if isinstance(e, RPar):
            return PPar(self._link_proc(e.left, env, inst, where), self._link_proc(e.right, env, inst, where))
        if isinstance(e, RSum):
            if e.sort not in spec.sorts:
                raise LinkError(f"{where}: unknown sort {e.sort} in sum")
            inner = dict(env)
            inner[e.var] = spec.sorts[e.sort]
            return PSum(Var(e.var, spec.sorts[e.sort]), self._link_proc(e.body, inner, inst, where))
        if isinstance(e, REncaps):
            if e.atom_set not in spec.atom_sets:
                raise LinkError(f"{where}: unknown atom set {e.atom_set}")
            return PEncaps(e.atom_set, self._link_proc(e.body, env, inst, where))
        if isinstance(e, RHide):
            if e.atom_set not in spec.atom_sets:
                raise LinkError(f"{where}: unknown atom set {e.atom_set}")
            return PHide(e.atom_set, self._link_proc(e.body, env, inst, where))
        if isinstance(e, RDisrupt):
            return PDisrupt(self._link_proc(e.body, env, inst, where), self._link_proc(e.disruptor, env, inst, where))
        if isinstance(e, RStar):
            return PStar(self._link_proc(e.body, env, inst, where), self._link_proc(e.exit, env, inst, where))
        raise TypeError(type(e))

    def _resolve_proc_ref(self, name: str, inst: _Instance) -> Optional[str]:
        """Key of the equation defining `name` as seen from `inst` (None = unresolved here)."""
        visible = self._visible_closure(inst)
        keys = []
        for k in visible:
            other = self.linker.instances[k]
            if name in other.proc_keys and other.proc_keys[name] not in keys:
                keys.append(other.proc_keys[name])
        if not keys:
            return None
        if len(keys) == 1:
            return keys[0]
        # several instances define it: leave the display name; the semantics
        # layer resolves per-reference via FlatSpec.lookup_process patterns
        return None

    def _visible_closure(self, inst: _Instance) -> list[str]:
        out: list[str] = []
        stack = [inst.key]
        seen: set[str] = set()
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            out.append(k)
            stack.extend(self.linker.instances[k].imports)
        return out

    def _check_display_collisions(self) -> None:
        """Instance copies must stay tellable-apart by their argument patterns;
        a rename that lands two equations on one indistinguishable name is a
        collision."""
        from .terms import unify_terms
        for display, keys in self.spec.by_display.items():
            for i in range(len(keys)):
                for j in range(i + 1, len(keys)):
                    a = self.spec.processes[keys[i]]
                    b = self.spec.processes[keys[j]]
                    if len(a.params) != len(b.params):
                        continue
                    bind: Optional[dict] = {}
                    for p, q in zip(a.params, b.params):
                        bind = unify_terms(_freshen_pattern(p), q, bind)
                        if bind is None:
                            break
                    if bind is not None:
                        self.spec.diagnostics.append(Diagnostic(
                            a.module,
                            f"name collision: {display} is defined by both {a.module} and {b.module} "
                            "with indistinguishable parameters (rename one import)",
                        ))


def _term_vars(t: Term):
    from .terms import term_vars
    return term_vars(t)


def check(spec: FlatSpec) -> list[Diagnostic]:
    """Re-validate FlatSpec invariants; empty result means all hold.

    References to parameter-declared processes that were never bound are
    legal (the module is a template); stepping them is what fails.
    """
    diags = list(spec.diagnostics)
    for key, d in spec.processes.items():
        undefined = []
        _collect_undefined(spec, d.body, undefined)
        for name in undefined:
            diags.append(Diagnostic(f"{d.module}.{d.display}", f"unresolved process reference {name}"))
    return diags


def _collect_undefined(spec: FlatSpec, e: ProcExpr, out: list[str]) -> None:
    if isinstance(e, PInst):
        display = e.display or e.name
        if (
            e.name not in spec.processes
            and display not in spec.by_display
            and display not in spec.formal_processes
        ):
            out.append(display)
    elif isinstance(e, (PAlt, PSeq, PPar)):
        _collect_undefined(spec, e.left, out)
        _collect_undefined(spec, e.right, out)
    elif isinstance(e, PSum):
        _collect_undefined(spec, e.body, out)
    elif isinstance(e, (PEncaps, PHide)):
        _collect_undefined(spec, e.body, out)
    elif isinstance(e, PDisrupt):
        _collect_undefined(spec, e.body, out)
        _collect_undefined(spec, e.disruptor, out)
    elif isinstance(e, PStar):
        _collect_undefined(spec, e.body, out)
        _collect_undefined(spec, e.exit, out)
