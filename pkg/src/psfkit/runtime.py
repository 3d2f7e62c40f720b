"""Interactive simulation sessions with native handler bindings.

A session steps one configuration at a time.  Handlers make server
components compute for real: when a server-call action fires and a handler
is bound for (server, service), the handler runs synchronously; nested
calls it makes through its stub are driven through the algebra one
transition at a time, so they appear in the trace like any other traffic.
The handler's result pins the otherwise-unconstrained result sum of the
server's return action.

Symbolic alternatives that belong to a handler-backed component (its
outgoing calls, its returns) are only offered when a pin determines them;
everything else falls back to bounded enumeration.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from typing import Callable, Optional

from . import corpus_path
from .cslib import ComponentDecl, compose, generate_interfaces, library_modules, parse_manifest
from .linker import FlatSpec, flatten
from .semantics import Config, Path, Step, Stepper, initial_config, normalize
from .syntax import ImportClause, ModuleDef, RTerm, parse_spec, tokenize
from .terms import (
    Act, ActionLabel, App, Lit, PsfError, Sort, Term, Var, substitute_label,
    substitute_proc, unify_action, AtomPattern,
)


class SessionError(PsfError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    index: int
    label: str
    component_paths: tuple[Path, ...] = ()


@dataclass(frozen=True)
class Descriptor:
    index: int
    label: ActionLabel
    target: Config
    leaves: tuple[Path, ...]

    @property
    def label_text(self) -> str:
        return str(self.label)


Handler = Callable[..., int]
HandlerTable = dict[tuple[str, str], Handler]


@dataclass
class _Snapshot:
    config: Config
    trace_len: int
    pins: dict[str, Term]
    rng_state: object
    error: Optional[str]


class Stub:
    """Nested-call capability handed to handlers; calls run through the algebra."""

    def __init__(self, session: "Session", owner: str):
        self.session = session
        self.owner = owner

    def call(self, server: str, service: str, *args: int) -> int:
        return self.session._drive_call(self.owner, server, service, args)


class Session:
    def __init__(
        self,
        spec: FlatSpec,
        root: str,
        seed: int = 0,
        handlers: Optional[HandlerTable] = None,
        depth_bound: int = 9,
    ):
        self.spec = spec
        self.root = root
        self.seed = seed
        self.handlers: HandlerTable = dict(handlers or {})
        self.depth_bound = depth_bound
        self.stepper = Stepper(spec)
        self.config = initial_config(spec, root, stepper=self.stepper)
        self.trace: list[TraceEvent] = []
        self.pins: dict[str, Term] = {}  # server id -> pending return value
        self.rng = random.Random(seed)
        self.undo_stack: list[_Snapshot] = []
        self.error: Optional[str] = None
        self.revision = 0
        self._driving = 0
        self._call_pins: dict[tuple[str, str], Term] = {}
        self._enabled_cache: Optional[list[Descriptor]] = None
        self._handler_servers = {server for server, _ in self.handlers}
        self._result_sort = self._find_result_sort()

    def _find_result_sort(self) -> Optional[Sort]:
        for name in ("RESULT",):
            if name in self.spec.sorts:
                return self.spec.sorts[name]
        return None

    # -- enabled ------------------------------------------------------------

    @property
    def terminated(self) -> bool:
        return self.config.terminated

    def enabled(self) -> list[Descriptor]:
        if self._enabled_cache is None:
            self._enabled_cache = self._compute_enabled()
        return self._enabled_cache

    def _compute_enabled(self) -> list[Descriptor]:
        out: list[Descriptor] = []
        seen: set[tuple[str, str]] = set()
        for s in self.stepper.symbolic_steps(self.config.expr):
            for label, target in self._resolve(s):
                key = (str(label), target.key())
                if key in seen:
                    continue
                seen.add(key)
                out.append(Descriptor(len(out), label, target, s.leaves))
        return out

    def _resolve(self, s: Step) -> list[tuple[ActionLabel, Config]]:
        if not s.free:
            return [(s.label, Config(normalize(s.target)))]
        pinned = self._resolve_pinned(s)
        if pinned is not None:
            return pinned
        if self._suppressed(s):
            return []
        return [(label, Config(target)) for label, target in self.stepper.ground_out(s, self.depth_bound)]

    def _resolve_pinned(self, s: Step) -> Optional[list[tuple[ActionLabel, Config]]]:
        label = s.label
        if not isinstance(label, Act) or len(s.free) != 1:
            return None
        var = s.free[0]
        if label.name == "s-return" and len(label.args) == 2:
            server = str(label.args[0])
            pin = self.pins.get(server)
            if pin is not None and isinstance(label.args[1], Var):
                binding = {var.name: pin}
                return [(substitute_label(label, binding), Config(normalize(substitute_proc(s.target, binding))))]
        if label.name == "c-call" and len(label.args) == 3:
            caller, callee = str(label.args[0]), str(label.args[1])
            pin = self._call_pins.get((caller, callee))
            if pin is not None and isinstance(label.args[2], Var):
                binding = {var.name: pin}
                return [(substitute_label(label, binding), Config(normalize(substitute_proc(s.target, binding))))]
        return None

    def _suppressed(self, s: Step) -> bool:
        """Unpinned symbolic alternatives owned by handler-backed components."""
        label = s.label
        if not isinstance(label, Act):
            return False
        if label.name == "s-return" and label.args:
            return str(label.args[0]) in self._handler_servers
        if label.name in ("c-call", "cs-request") and len(label.args) >= 2:
            return str(label.args[0]) in self._handler_servers
        return False

    # -- firing -------------------------------------------------------------

    def fire(self, index: int) -> "Session":
        enabled = self.enabled()
        if index < 0 or index >= len(enabled):
            raise SessionError(f"transition index {index} out of range (0..{len(enabled) - 1})")
        if self._driving == 0:
            self.undo_stack.append(self._snapshot())
        d = enabled[index]
        self._apply(d)
        self._run_handler_hook(d.label)
        return self

    def fire_label(self, label_text: str) -> "Session":
        for d in self.enabled():
            if d.label_text == label_text:
                return self.fire(d.index)
        forced = self._instantiate_symbolic(label_text)
        if forced is not None:
            if self._driving == 0:
                self.undo_stack.append(self._snapshot())
            self._apply(forced)
            self._run_handler_hook(forced.label)
            return self
        options = ", ".join(d.label_text for d in self.enabled()) or "<none>"
        raise SessionError(f"label {label_text!r} not enabled; enabled: {options}")

    def _instantiate_symbolic(self, label_text: str) -> Optional[Descriptor]:
        """Ground a symbolic step by unifying it with the requested label.

        Lets a script or a user supply any operand value, not only the ones
        the bounded browse enumeration lists.
        """
        wanted = self._parse_ground_label(label_text)
        if wanted is None:
            return None
        for s in self.stepper.symbolic_steps(self.config.expr):
            if not s.free or not isinstance(s.label, Act) or s.label.name != wanted.name:
                continue
            binding = unify_action(AtomPattern(s.label.name, s.label.args), wanted)
            if binding is None:
                continue
            label = substitute_label(s.label, binding)
            target = normalize(substitute_proc(s.target, binding))
            from .terms import label_is_ground
            if not label_is_ground(label):
                continue
            return Descriptor(-1, label, Config(target), s.leaves)
        return None

    def _parse_ground_label(self, text: str) -> Optional[Act]:
        try:
            raw = _parse_pattern(text)
        except Exception:
            return None
        sig = self.spec.atom_signature(raw.name, len(raw.args))
        if sig is None:
            return None
        try:
            args = tuple(self._raw_to_term(a, sig[i]) for i, a in enumerate(raw.args))
        except SessionError:
            return None
        return Act(raw.name, args)

    def _raw_to_term(self, raw: RTerm, expected: Sort) -> Term:
        if raw.num is not None:
            if not self.spec.is_numeric(expected.name):
                raise SessionError(f"numeral at non-numeric sort {expected.name}")
            return Lit(raw.num, expected)
        candidates = self.spec.func_index.get((raw.name, len(raw.args)), [])
        chosen = [fn for fn in candidates if fn.result == expected] or candidates
        if not chosen:
            raise SessionError(f"unknown constructor {raw.name}/{len(raw.args)}")
        fn = chosen[0]
        return App(fn, tuple(self._raw_to_term(a, fn.arg_sorts[i]) for i, a in enumerate(raw.args)))

    def _apply(self, d: Descriptor) -> None:
        self.config = d.target
        self.trace.append(TraceEvent(len(self.trace), d.label_text, d.leaves))
        if isinstance(d.label, Act) and d.label.name == "s-return" and d.label.args:
            self.pins.pop(str(d.label.args[0]), None)
        self._enabled_cache = None
        self.revision += 1

    def _run_handler_hook(self, label: ActionLabel) -> None:
        if not isinstance(label, Act) or label.name != "s-call" or len(label.args) != 2:
            return
        server = str(label.args[0])
        service = label.args[1]
        head = service.fn.name if isinstance(service, App) else str(service)
        fn = self.handlers.get((server, head))
        if fn is None:
            return
        args = _term_ints(service)
        stub = Stub(self, server)
        try:
            result = fn(stub, *args)
        except SessionError:
            raise
        except Exception as exc:  # handler fault: error state, still undo-able
            self.error = f"handler {server}.{head} failed: {exc}"
            return
        self.pins[server] = self._result_term(result)

    def _result_term(self, value: int) -> Term:
        if self._result_sort is None:
            raise SessionError("no RESULT sort in this specification")
        return Lit(int(value), self._result_sort)

    # -- nested calls ---------------------------------------------------------

    def _drive_call(self, owner: str, server: str, service: str, args: tuple[int, ...]) -> int:
        svc_term = self._service_term(service, args)
        self._driving += 1
        self._call_pins[(owner, server)] = svc_term
        try:
            self._fire_exact(f"c-call({owner}, {server}, {svc_term})")
            self._call_pins.pop((owner, server), None)
            self._fire_exact(f"cs-request({owner}, {server}, {svc_term})")
            self._fire_exact(f"s-call({server}, {svc_term})")
            if self.error:
                raise SessionError(self.error)
            pin = self.pins.get(server)
            if pin is None:
                raise SessionError(f"no handler result for {server} after s-call({server}, {svc_term})")
            self._fire_exact(f"s-return({server}, {pin})")
            self._fire_exact(f"cs-result({server}, {owner}, {pin})")
            self._fire_exact(f"c-return({server}, {owner}, {pin})")
            return _int_of(pin)
        finally:
            self._call_pins.pop((owner, server), None)
            self._driving -= 1

    def _fire_exact(self, label_text: str) -> None:
        self.fire_label(label_text)

    def _service_term(self, service: str, args: tuple[int, ...]) -> Term:
        candidates = self.spec.func_index.get((service, len(args)), [])
        if not candidates:
            raise SessionError(f"unknown service constructor {service}/{len(args)}")
        fn = candidates[0]
        terms = tuple(Lit(int(a), fn.arg_sorts[i]) for i, a in enumerate(args))
        return App(fn, terms)

    # -- undo / reset -----------------------------------------------------------

    def _snapshot(self) -> _Snapshot:
        return _Snapshot(self.config, len(self.trace), dict(self.pins), self.rng.getstate(), self.error)

    def undo(self) -> "Session":
        if not self.undo_stack:
            raise SessionError("nothing to undo")
        snap = self.undo_stack.pop()
        self.config = snap.config
        del self.trace[snap.trace_len:]
        self.pins = dict(snap.pins)
        self.rng.setstate(snap.rng_state)
        self.error = snap.error
        self._enabled_cache = None
        self.revision += 1
        return self

    def reset(self) -> "Session":
        self.config = initial_config(self.spec, self.root, stepper=self.stepper)
        self.trace.clear()
        self.pins.clear()
        self.rng = random.Random(self.seed)
        self.undo_stack.clear()
        self.error = None
        self._enabled_cache = None
        self.revision += 1
        return self


def new_session(spec: FlatSpec, root: str, seed: int = 0,
                handlers: Optional[HandlerTable] = None, depth_bound: int = 9) -> Session:
    return Session(spec, root, seed=seed, handlers=handlers, depth_bound=depth_bound)


# ---------------------------------------------------------------------------
# drivers


def run_auto(s: Session, policy: str = "random", script: Optional[list[str]] = None,
             max_steps: int = 1000) -> Session:
    """Fire transitions per policy: seeded-random choice, or a label script."""
    if policy == "random":
        for _ in range(max_steps):
            enabled = s.enabled()
            if not enabled:
                break
            s.fire(s.rng.randrange(len(enabled)))
        return s
    if policy == "script":
        for i, line in enumerate(script or []):
            label = line.split("--")[0].strip()
            if not label:
                continue
            try:
                s.fire_label(label)
            except SessionError as exc:
                raise SessionError(f"script step {i}: {exc}") from None
        return s
    raise ValueError(f"unknown policy {policy!r}")


def load_script(text: str) -> list[str]:
    return [line for line in text.splitlines()]


# ---------------------------------------------------------------------------
# trace queries


def _parse_pattern(text: str):
    toks = tokenize(text, "<pattern>")
    pos = 0

    def term():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t.kind == "number":
            return RTerm(num=int(t.text))
        name = t.text
        args = []
        if toks[pos].text == "(":
            pos += 1
            args.append(term_full())
            while toks[pos].text == ",":
                pos += 1
                args.append(term_full())
            assert toks[pos].text == ")"
            pos += 1
        return RTerm(name, tuple(args))

    def term_full():
        nonlocal pos
        left = term()
        if toks[pos].text == ">>":
            pos += 1
            return RTerm(">>", (left, term()))
        return left

    return term_full()


def _pattern_matches(p: RTerm, text: str) -> bool:
    try:
        value = _parse_pattern(text)
    except Exception:
        return False
    return _match_rterm(p, value)


def _match_rterm(p: RTerm, v: RTerm) -> bool:
    if p.name == "_" and not p.args:
        return True
    if p.num is not None or v.num is not None:
        return p.num == v.num
    if p.name != v.name or len(p.args) != len(v.args):
        return False
    return all(_match_rterm(a, b) for a, b in zip(p.args, v.args))


def trace_stats(s: Session, pattern: str) -> int:
    """Number of trace events whose label matches the pattern ("_" wildcard)."""
    p = _parse_pattern(pattern)
    return sum(1 for ev in s.trace if _pattern_matches(p, ev.label))


# ---------------------------------------------------------------------------
# the calculator demo


def calculator_handlers() -> HandlerTable:
    """Native services: succ/pred/iszero; add/sub looping them; mul/div on top."""

    def succ(stub: Stub, a: int) -> int:
        return a + 1

    def pred(stub: Stub, a: int) -> int:
        if iszero_local(a):
            return 0
        return a - 1

    def iszero_local(a: int) -> int:
        return 1 if a == 0 else 0

    def iszero(stub: Stub, a: int) -> int:
        return iszero_local(a)

    def add(stub: Stub, a: int, b: int) -> int:
        while not stub.call("primitive", "iszero", b):
            a = stub.call("primitive", "succ", a)
            b = stub.call("primitive", "pred", b)
        return a

    def subtract(stub: Stub, a: int, b: int) -> int:
        while (not stub.call("primitive", "iszero", b)) and (not stub.call("primitive", "iszero", a)):
            a = stub.call("primitive", "pred", a)
            b = stub.call("primitive", "pred", b)
        return a

    def multiply(stub: Stub, a: int, b: int) -> int:
        r = 0
        while not stub.call("primitive", "iszero", b):
            r = stub.call("basic", "add", r, a)
            b = stub.call("primitive", "pred", b)
        return r

    def lessthan(stub: Stub, a: int, b: int) -> int:
        r = stub.call("basic", "sub", b, a)
        r = stub.call("primitive", "iszero", r)
        return 1 if r == 0 else 0

    def divide(stub: Stub, a: int, b: int) -> int:
        r = 0
        if not stub.call("primitive", "iszero", b):
            while not lessthan(stub, a, b):
                a = stub.call("basic", "sub", a, b)
                r = stub.call("primitive", "succ", r)
        return r

    return {
        ("primitive", "succ"): succ,
        ("primitive", "pred"): pred,
        ("primitive", "iszero"): iszero,
        ("basic", "add"): add,
        ("basic", "sub"): subtract,
        ("complex", "mul"): multiply,
        ("complex", "div"): divide,
    }


def calculator_modules() -> list[ModuleDef]:
    path = os.path.join(corpus_path(), "calculator.psf")
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), "calculator.psf")


def calculator_demo() -> tuple[FlatSpec, list[ComponentDecl], HandlerTable]:
    """The shipped demo: generated interfaces around handler-backed servers."""
    mods = library_modules() + calculator_modules()
    with open(os.path.join(corpus_path(), "calculator.manifest"), encoding="utf-8") as fh:
        components = parse_manifest(fh.read())
    probe = ModuleDef(kind="process", name="CalculatorAll", imports=tuple(
        ImportClause(m) for m in ("CalculatorOperator", "CalculatorPrimitive", "CalculatorBasic", "CalculatorComplex")
    ))
    base = flatten(mods + [probe], "CalculatorAll")
    gen = generate_interfaces(base, components, data_module="CalculatorData")
    spec = compose(mods, gen)
    return spec, components, calculator_handlers()


def calculator_session(seed: int = 0, depth_bound: int = 9) -> Session:
    spec, _, handlers = calculator_demo()
    return new_session(spec, "Application", seed=seed, handlers=handlers, depth_bound=depth_bound)


def scripted_binary_op(session: Session, op: str, server: str, x: int, y: int) -> int:
    """Drive one operator interaction: push operands, fire the op, collect."""
    svc = f"{op}({x}, {y})"
    session.fire_label(f"push({x})")
    session.fire_label(f"push({y})")
    session.fire_label(f"{op}-op")
    session.fire_label(f"c-call(operator, {server}, {svc})")
    session.fire_label(f"cs-request(operator, {server}, {svc})")
    session.fire_label(f"s-call({server}, {svc})")
    if session.error:
        raise SessionError(session.error)
    pin = session.pins.get(server)
    if pin is None:
        raise SessionError(f"no result pinned for {server}")
    result = _int_of(pin)
    session.fire_label(f"s-return({server}, {result})")
    session.fire_label(f"cs-result({server}, operator, {result})")
    session.fire_label(f"c-return({server}, operator, {result})")
    return result


def _term_ints(t: Term) -> tuple[int, ...]:
    if isinstance(t, App):
        return tuple(_int_of(a) for a in t.args)
    return (_int_of(t),)


def _int_of(t: Term) -> int:
    if isinstance(t, Lit):
        return t.value
    raise SessionError(f"expected a numeral, got {t}")
