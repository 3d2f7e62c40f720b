"""The client/server library and the interface generator.

Role detection reads a component's process body: the servers it calls are
the first arguments of its client-call actions, and it is itself a server
when it receives server calls.  Generation then wraps each component with
one client interface per called server and a server interface when needed,
reproducing by construction the shape of the hand-written assemblies.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

from . import library_path
from .linker import FlatSpec, flatten
from .semantics import Lts
from .syntax import (
    BindingClause, Declarations, ImportClause, ModuleDef, ProcDecl, ProcEq,
    RCall, RPar, RProc, parse_spec,
)
from .terms import (
    App, PAtom, PAlt, PDisrupt, PEncaps, PHide, PInst, PPar, PSeq, PStar,
    PSum, ProcExpr, PsfError, Term,
)

CS_SEND_ATOMS = ("cs-snd-request", "cs-rec-request", "cs-snd-result", "cs-rec-result")


class GenerationError(PsfError):
    pass


def library_modules() -> list[ModuleDef]:
    """Parses of the shipped client/server library, in file order."""
    path = os.path.join(library_path(), "clientserver.psf")
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), "clientserver.psf")


def architecture_modules() -> list[ModuleDef]:
    """Parses of the reconstructed architecture environment library."""
    path = os.path.join(library_path(), "architecture.psf")
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), "architecture.psf")


# ---------------------------------------------------------------------------
# roles


@dataclass
class Roles:
    client_of: list[str] = field(default_factory=list)
    is_server: bool = False

    @property
    def empty(self) -> bool:
        return not self.client_of and not self.is_server


@dataclass
class ComponentDecl:
    name: str  # an ID constant
    process: str
    roles: Optional[Roles] = None
    module: str = ""  # defining module, resolved during generation


def detect_roles(spec: FlatSpec, proc: str) -> Roles:
    """Scan a process (and everything it calls) for its client/server roles."""
    roles = Roles()
    seen: set[str] = set()
    order: dict[str, int] = {}

    def visit_expr(e: ProcExpr) -> None:
        if isinstance(e, PAtom):
            if e.name == "c-snd-call":
                server = e.args[0]
                if not isinstance(server, App) or server.args:
                    raise GenerationError(
                        f"{proc}: c-snd-call with non-constant server argument {server}; cannot generate statically"
                    )
                if server.fn.name not in order:
                    order[server.fn.name] = len(order)
            elif e.name == "s-rec-call":
                roles.is_server = True
            if e.name in CS_SEND_ATOMS:
                raise GenerationError(f"{proc}: already wrapped (uses {e.name}); refusing to generate again")
        elif isinstance(e, (PAlt, PSeq, PPar)):
            visit_expr(e.left)
            visit_expr(e.right)
        elif isinstance(e, PSum):
            visit_expr(e.body)
        elif isinstance(e, (PEncaps, PHide)):
            if e.atom_set in ("ClientH", "ServerH"):
                raise GenerationError(f"{proc}: already wrapped (encapsulates {e.atom_set})")
            visit_expr(e.body)
        elif isinstance(e, PDisrupt):
            visit_expr(e.body)
            visit_expr(e.disruptor)
        elif isinstance(e, PStar):
            visit_expr(e.body)
            visit_expr(e.exit)
        elif isinstance(e, PInst):
            visit_proc(e.display or e.name)

    def visit_proc(name: str) -> None:
        if name in seen:
            return
        seen.add(name)
        for key in spec.by_display.get(name, []):
            visit_expr(spec.processes[key].body)

    visit_proc(proc)
    # deterministic order: ID constant declaration order, then first use
    decl_order = {fn.name: i for i, fn in enumerate(spec.constructors_of("ID"))}
    roles.client_of = sorted(order, key=lambda n: (decl_order.get(n, 99), order[n]))
    return roles


def parse_manifest(text: str) -> list[ComponentDecl]:
    """One component per line: "name : process"; "--" comments."""
    out = []
    for raw in text.splitlines():
        line = raw.split("--")[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise GenerationError(f"manifest line {raw!r}: expected 'name : process'")
        name, proc = (part.strip() for part in line.split(":", 1))
        if not name or not proc:
            raise GenerationError(f"manifest line {raw!r}: expected 'name : process'")
        out.append(ComponentDecl(name, proc))
    return out


# ---------------------------------------------------------------------------
# generation


@dataclass
class GeneratedComposition:
    modules: list[ModuleDef]
    root_module: str
    root_process: str
    warnings: list[str] = field(default_factory=list)


def _import(module: str, bindings: tuple = (), renamings: tuple = ()) -> ImportClause:
    return ImportClause(module, bindings, renamings)


def _bound(module: str, section: str, pairs: list[tuple[str, str]], source: str,
           renamings: tuple = ()) -> ImportClause:
    return ImportClause(module, (BindingClause(section, tuple(pairs), source),), renamings)


def generate_interfaces(spec: FlatSpec, components: list[ComponentDecl],
                        data_module: str = "ApplicationData") -> GeneratedComposition:
    """Emit interface constraints and the wired application for the components."""
    by_name: dict[str, ComponentDecl] = {}
    for c in components:
        if c.name in by_name:
            raise GenerationError(f"two components claim the server ID {c.name}")
        by_name[c.name] = c
        keys = spec.by_display.get(c.process)
        if not keys:
            raise GenerationError(f"component {c.name}: process {c.process} is not defined")
        c.module = spec.processes[keys[0]].module
        c.roles = detect_roles(spec, c.process)
        if c.roles.empty:
            raise GenerationError(f"component {c.name} has neither client nor server roles")

    warnings = []
    for c in components:
        for server in c.roles.client_of:
            if server not in by_name:
                raise GenerationError(f"component {c.name} calls server {server} which is not in the manifest")
            if not _serves(by_name[server]):
                raise GenerationError(f"component {c.name} calls {server}, which is not a server")
    if _has_cycle(components):
        warnings.append("client-of relation has a cycle; the hierarchy is not a DAG")

    mods: list[ModuleDef] = []
    wrapped: list[str] = []  # CS-* process names in manifest order
    for c in components:
        wrapped.append(_generate_component(mods, c, data_module))

    sys_imports = []
    for c, cs_name in zip(components, wrapped):
        if c.roles.is_server:
            sys_imports.append(
                _bound("NewServer", "Server", [("Server", f"S-{c.process}")], f"S-{c.process}",
                       ((f"CS-Server", cs_name),))
            )
        else:
            sys_imports.append(
                _bound("NewClient", "Client", [("Client", f"C-{c.process}")], f"C-{c.process}",
                       ((f"CS-Client", cs_name),))
            )
    body: RProc = RCall(wrapped[0])
    for name in wrapped[1:]:
        body = RPar(body, RCall(name))
    mods.append(ModuleDef(
        kind="process",
        name="ApplicationSystem",
        exports=Declarations(processes=(ProcDecl("ApplicationSystem"),)),
        imports=tuple(sys_imports),
        definitions=(ProcEq("ApplicationSystem", (), body),),
    ))
    mods.append(ModuleDef(
        kind="process",
        name="Application",
        imports=(
            _bound("ClientServer", "System", [("System", "ApplicationSystem")], "ApplicationSystem",
                   (("ClientServer", "Application"),)),
        ),
    ))
    return GeneratedComposition(mods, "Application", "Application", warnings)


def _serves(c: ComponentDecl) -> bool:
    return bool(c.roles and c.roles.is_server)


def _has_cycle(components: list[ComponentDecl]) -> bool:
    edges = {c.name: list(c.roles.client_of) for c in components}
    state: dict[str, int] = {}

    def dfs(n: str) -> bool:
        state[n] = 1
        for m in edges.get(n, []):
            if state.get(m) == 1:
                return True
            if state.get(m, 0) == 0 and dfs(m):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and dfs(n) for n in edges)


def _generate_component(mods: list[ModuleDef], c: ComponentDecl, data_module: str) -> str:
    proc = c.process
    roles = c.roles
    client_side: Optional[str] = None

    if roles.client_of:
        imports = [_import(data_module)]
        pieces: list[RProc] = []
        for server in roles.client_of:
            imports.append(_bound("NewC-I", "Name", [("client", c.name), ("server", server)], data_module))
            pieces.append(RCall("C-I", (_rt(c.name), _rt(server))))
        imports.append(_import(c.module))
        body: RProc = pieces[0]
        for p in pieces[1:]:
            body = RPar(body, p)
        body = RPar(body, RCall(proc))
        client_side = f"C-{proc}"
        mods.append(ModuleDef(
            kind="process",
            name=client_side,
            exports=Declarations(processes=(ProcDecl(client_side),)),
            imports=tuple(imports),
            definitions=(ProcEq(client_side, (), body),),
        ))

    if not roles.is_server:
        return f"CS-{proc}"

    # server side; a component with both roles wraps its client side first
    inner: str
    imports = [_import(data_module),
               _bound("S-I", "Name", [("server", c.name)], data_module)]
    if client_side is not None:
        sc_name = f"SC-{proc}"
        imports.append(_bound("NewClient", "Client", [("Client", client_side)], client_side,
                              (("CS-Client", sc_name),)))
        inner = sc_name
    else:
        imports.append(_import(c.module))
        inner = proc
    s_name = f"S-{proc}"
    mods.append(ModuleDef(
        kind="process",
        name=s_name,
        exports=Declarations(processes=(ProcDecl(s_name),)),
        imports=tuple(imports),
        definitions=(ProcEq(s_name, (), RPar(RCall("S-I", (_rt(c.name),)), RCall(inner))),),
    ))
    return f"CS-{proc}"


def _rt(name: str):
    from .syntax import RTerm
    return RTerm(name)


def compose(mods: list[ModuleDef], generated: GeneratedComposition) -> FlatSpec:
    """Link the generated composition against the component modules.

    Input modules whose names collide with generated ones are replaced;
    generation supersedes a hand-written assembly of the same name.
    """
    gen_names = {m.name for m in generated.modules}
    kept = [m for m in mods if m.name not in gen_names]
    return flatten(kept + generated.modules, generated.root_module)


# ---------------------------------------------------------------------------
# quit/shutdown closure


@dataclass
class ClosureReport:
    quit_states: int
    quit_ok: bool
    bound: int
    deadlocks_outside: list[int]
    deadlocks_in_shutdown: list[int]
    vacuous: bool = False

    @property
    def clean(self) -> bool:
        return self.quit_ok and not self.deadlocks_outside and not self.deadlocks_in_shutdown


def quit_shutdown_closure(lts: Lts, component_count: int) -> ClosureReport:
    """Check that quit always resolves to termination and nothing else jams.

    From every state offering quit, firing it must reach global termination
    within component_count + 2 steps using only silent or shutdown-suite
    labels; deadlocks are reported, split by whether they sit in the
    post-quit region.
    """
    bound = component_count + 2
    succ: dict[int, list[tuple[str, int]]] = {}
    for f, l, t in lts.transitions:
        succ.setdefault(f, []).append((str(l), t))

    quit_targets = [t for f, l, t in lts.transitions if str(l) == "quit"]
    quiet = {"tau", "quit", "shutdown"}

    def resolves(start: int) -> bool:
        frontier = {start}
        for _ in range(bound):
            if frontier & lts.terminating:
                return True
            nxt = set()
            for s in frontier:
                for lab, t in succ.get(s, []):
                    if lab in quiet:
                        nxt.add(t)
            if not nxt:
                break
            frontier = nxt
        return bool(frontier & lts.terminating)

    quit_ok = all(resolves(t) for t in quit_targets)

    region: set[int] = set()
    stack = list(quit_targets)
    while stack:
        s = stack.pop()
        if s in region:
            continue
        region.add(s)
        for _, t in succ.get(s, []):
            if t not in region:
                stack.append(t)

    deadlocks = [s for s in range(lts.num_states) if s not in lts.terminating and not succ.get(s)]
    inside = [s for s in deadlocks if s in region]
    outside = [s for s in deadlocks if s not in region]
    return ClosureReport(
        quit_states=len(quit_targets),
        quit_ok=quit_ok,
        bound=bound,
        deadlocks_outside=outside,
        deadlocks_in_shutdown=inside,
        vacuous=not quit_targets,
    )


def drop_comm_rule(spec: FlatSpec, result_name: str) -> FlatSpec:
    """Copy of the spec without the communication producing `result_name`."""
    from .refine import _clone_spec
    out = _clone_spec(spec)
    out.comm_rules = [r for r in spec.comm_rules if r.result.name != result_name]
    return out
