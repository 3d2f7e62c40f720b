"""Concrete syntax for the PSF subset: lexer, module parser, pretty-printer.

ASCII rendering of the typography: "->" for the arrow, "skip" for the silent
step, "delta" for the deadlock constant, "#" between argument sorts, and
"{ members | binders }" set comprehensions.  Comments run from "--" to end
of line.  "end <Name>" must repeat the module (or parameter section) name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import PsfError

KEYWORDS = {
    "data", "process", "module", "begin", "end", "exports", "imports",
    "parameters", "sorts", "functions", "atoms", "processes", "sets", "of",
    "communications", "variables", "definitions", "bound", "by", "to",
    "renamed", "sum", "encaps", "hide", "disrupt", "in", "for", "delta",
    "skip",
}

SYMBOLS = ["||", "->", ">>", "--", "(", ")", "{", "}", "[", "]", ",", ":", "#", "|", "=", ".", "+", "*"]


class ParseError(PsfError):
    def __init__(self, filename: str, line: int, col: int, message: str):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.filename = filename
        self.line = line
        self.col = col
        self.reason = message


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "keyword", "number", "symbol", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def err(msg: str):
        raise ParseError(filename, line, col, msg)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "-" and i + 1 < n and text[i + 1] == "-":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isalpha():
            start = i
            while i < n and (text[i].isalnum() or (text[i] == "-" and i + 1 < n and text[i + 1].isalnum())):
                i += 1
            word = text[start:i]
            kind = "keyword" if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, line, col))
            col += i - start
            continue
        if c.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            toks.append(Token("number", text[start:i], line, col))
            col += i - start
            continue
        if c == "$" and i + 1 < n and text[i + 1].isdigit():
            start = i
            i += 1
            while i < n and text[i].isdigit():
                i += 1
            toks.append(Token("placeholder", text[start:i], line, col))
            col += i - start
            continue
        if c == "_":
            toks.append(Token("ident", "_", line, col))
            i += 1
            col += 1
            continue
        two = text[i:i + 2]
        if two in ("||", "->", ">>"):
            toks.append(Token("symbol", two, line, col))
            i += 2
            col += 2
            continue
        if c in "(){}[],:#|=.+*":
            toks.append(Token("symbol", c, line, col))
            i += 1
            col += 1
            continue
        err(f"unsupported character {c!r}")
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# raw (unresolved) terms and process expressions


@dataclass(frozen=True)
class RTerm:
    """name with optional args; numerals carry value in `num`."""

    name: str = ""
    args: tuple["RTerm", ...] = ()
    num: Optional[int] = None

    def __str__(self) -> str:
        if self.num is not None:
            return str(self.num)
        if self.name == ">>":
            return f"{self.args[0]} >> {self.args[1]}"
        if self.args:
            return f"{self.name}({', '.join(map(str, self.args))})"
        return self.name


@dataclass(frozen=True)
class RAction:
    name: str
    args: tuple[RTerm, ...] = ()

    def __str__(self) -> str:
        if self.args:
            return f"{self.name}({', '.join(map(str, self.args))})"
        return self.name


# process expression nodes (raw)
@dataclass(frozen=True)
class RCall:  # atom or process instantiation, resolved by the linker
    name: str
    args: tuple[RTerm, ...] = ()


@dataclass(frozen=True)
class RDelta:
    pass


@dataclass(frozen=True)
class RSkip:
    pass


@dataclass(frozen=True)
class RAlt:
    left: "RProc"
    right: "RProc"


@dataclass(frozen=True)
class RSeq:
    left: "RProc"
    right: "RProc"


@dataclass(frozen=True)
class RPar:
    left: "RProc"
    right: "RProc"


@dataclass(frozen=True)
class RSum:
    var: str
    sort: str
    body: "RProc"


@dataclass(frozen=True)
class REncaps:
    atom_set: str
    body: "RProc"


@dataclass(frozen=True)
class RHide:
    atom_set: str
    body: "RProc"


@dataclass(frozen=True)
class RDisrupt:
    body: "RProc"
    disruptor: "RProc"


@dataclass(frozen=True)
class RStar:
    body: "RProc"
    exit: "RProc"


RProc = Union[RCall, RDelta, RSkip, RAlt, RSeq, RPar, RSum, REncaps, RHide, RDisrupt, RStar]


# ---------------------------------------------------------------------------
# module-level declarations


@dataclass(frozen=True)
class FuncDecl:
    name: str
    arg_sorts: tuple[str, ...]
    result: str


@dataclass(frozen=True)
class AtomDecl:
    name: str
    arg_sorts: tuple[str, ...] = ()


@dataclass(frozen=True)
class ProcDecl:
    name: str
    arg_sorts: tuple[str, ...] = ()


@dataclass(frozen=True)
class VarDecl:
    name: str
    sort: str


@dataclass(frozen=True)
class SetDecl:
    name: str
    members: tuple[RAction, ...]
    quantifiers: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class CommDecl:
    left: RAction
    right: RAction
    result: RAction
    quantifiers: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ProcEq:
    name: str
    params: tuple[RTerm, ...]
    body: RProc
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Declarations:
    sorts: tuple[str, ...] = ()
    functions: tuple[FuncDecl, ...] = ()
    atoms: tuple[AtomDecl, ...] = ()
    processes: tuple[ProcDecl, ...] = ()

    def is_empty(self) -> bool:
        return not (self.sorts or self.functions or self.atoms or self.processes)


@dataclass(frozen=True)
class ParamSection:
    name: str
    decls: Declarations


@dataclass(frozen=True)
class BindingClause:
    section: str
    pairs: tuple[tuple[str, str], ...]  # formal -> actual
    source: str  # module supplying the actuals


@dataclass(frozen=True)
class ImportClause:
    module: str
    bindings: tuple[BindingClause, ...] = ()
    renamings: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ModuleDef:
    kind: str  # "data" | "process"
    name: str
    parameters: tuple[ParamSection, ...] = ()
    exports: Declarations = field(default_factory=Declarations)
    imports: tuple[ImportClause, ...] = ()
    locals: Declarations = field(default_factory=Declarations)
    sets: tuple[SetDecl, ...] = ()
    communications: tuple[CommDecl, ...] = ()
    variables: tuple[VarDecl, ...] = ()
    definitions: tuple[ProcEq, ...] = ()
    line: int = field(default=0, compare=False)


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.toks = tokens
        self.pos = 0
        self.filename = filename

    # -- token plumbing ----------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.toks[self.pos]

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.cur
        raise ParseError(self.filename, tok.line, tok.col, message)

    def at(self, text: str) -> bool:
        return self.cur.text == text and self.cur.kind in ("keyword", "symbol")

    def at_ident(self) -> bool:
        return self.cur.kind == "ident"

    def take(self) -> Token:
        t = self.cur
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.cur.text!r}")
        return self.take()

    def expect_ident(self, what: str = "identifier") -> Token:
        if not self.at_ident():
            self.error(f"expected {what}, found {self.cur.text!r}")
        return self.take()

    # -- modules -----------------------------------------------------------

    def parse_spec(self) -> list[ModuleDef]:
        mods: list[ModuleDef] = []
        names: set[str] = set()
        while self.cur.kind != "eof":
            m = self.parse_module()
            if m.name in names:
                self.error(f"duplicate module name {m.name}")
            names.add(m.name)
            mods.append(m)
        return mods

    def parse_module(self) -> ModuleDef:
        start = self.cur
        if self.at("data"):
            kind = "data"
            self.take()
        elif self.at("process"):
            kind = "process"
            self.take()
        else:
            self.error("expected 'data module' or 'process module'")
        self.expect("module")
        name = self.expect_ident("module name").text
        self.expect("begin")

        parameters: list[ParamSection] = []
        exports = Declarations()
        imports: list[ImportClause] = []
        local = Declarations()
        sets: list[SetDecl] = []
        comms: list[CommDecl] = []
        variables: list[VarDecl] = []
        definitions: list[ProcEq] = []

        while not self.at("end"):
            if self.at("parameters"):
                self.take()
                while self.at_ident():
                    parameters.append(self.parse_param_section())
            elif self.at("exports"):
                self.take()
                self.expect("begin")
                exports = self.parse_declarations(stop={"end"})
                self.expect("end")
            elif self.at("imports"):
                self.take()
                imports.append(self.parse_import())
                while self.at(","):
                    self.take()
                    imports.append(self.parse_import())
            elif self.at("atoms"):
                self.take()
                local = _merge_decls(local, Declarations(atoms=tuple(self.parse_atom_decls())))
            elif self.at("processes"):
                self.take()
                local = _merge_decls(local, Declarations(processes=tuple(self.parse_proc_decls())))
            elif self.at("functions"):
                self.take()
                local = _merge_decls(local, Declarations(functions=tuple(self.parse_func_decls())))
            elif self.at("sorts"):
                self.take()
                local = _merge_decls(local, Declarations(sorts=tuple(self.parse_sort_names())))
            elif self.at("sets"):
                self.take()
                self.expect("of")
                self.expect("atoms")
                while self.at_ident():
                    sets.append(self.parse_set_decl())
            elif self.at("communications"):
                self.take()
                while self.at_ident():
                    comms.append(self.parse_comm_decl())
            elif self.at("variables"):
                self.take()
                while self.at_ident():
                    variables.extend(self.parse_var_decl())
            elif self.at("definitions"):
                self.take()
                while self.at_ident():
                    definitions.append(self.parse_proc_eq())
            else:
                self.error(
                    "expected a section (parameters, exports, imports, atoms, processes, "
                    f"sets, communications, variables, definitions) or 'end', found {self.cur.text!r}"
                )
        self.expect("end")
        endname = self.expect_ident("module name after 'end'")
        if endname.text != name:
            self.error(f"module terminator name mismatch: 'end {endname.text}' closes module {name}", endname)
        return ModuleDef(
            kind=kind,
            name=name,
            parameters=tuple(parameters),
            exports=exports,
            imports=tuple(imports),
            locals=local,
            sets=tuple(sets),
            communications=tuple(comms),
            variables=tuple(variables),
            definitions=tuple(definitions),
            line=start.line,
        )

    def parse_param_section(self) -> ParamSection:
        name = self.expect_ident("parameter section name").text
        self.expect("begin")
        decls = self.parse_declarations(stop={"end"})
        self.expect("end")
        endname = self.expect_ident("parameter section name after 'end'")
        if endname.text != name:
            self.error(f"parameter section terminator mismatch: 'end {endname.text}' closes {name}", endname)
        return ParamSection(name, decls)

    def parse_declarations(self, stop: set[str]) -> Declarations:
        sorts: list[str] = []
        functions: list[FuncDecl] = []
        atoms: list[AtomDecl] = []
        processes: list[ProcDecl] = []
        while not any(self.at(s) for s in stop):
            if self.at("sorts"):
                self.take()
                sorts.extend(self.parse_sort_names())
            elif self.at("functions"):
                self.take()
                functions.extend(self.parse_func_decls())
            elif self.at("atoms"):
                self.take()
                atoms.extend(self.parse_atom_decls())
            elif self.at("processes"):
                self.take()
                processes.extend(self.parse_proc_decls())
            else:
                self.error(f"expected sorts/functions/atoms/processes or 'end', found {self.cur.text!r}")
        return Declarations(tuple(sorts), tuple(functions), tuple(atoms), tuple(processes))

    def parse_sort_names(self) -> list[str]:
        names = [self.expect_ident("sort name").text]
        while self.at(","):
            self.take()
            names.append(self.expect_ident("sort name").text)
        return names

    def parse_func_decls(self) -> list[FuncDecl]:
        decls = []
        while self.at_ident() or self.at(">>"):
            name = self.take().text
            self.expect(":")
            args: list[str] = []
            if not self.at("->"):
                args.append(self.expect_ident("argument sort").text)
                while self.at("#"):
                    self.take()
                    args.append(self.expect_ident("argument sort").text)
            self.expect("->")
            result = self.expect_ident("result sort").text
            decls.append(FuncDecl(name, tuple(args), result))
        return decls

    def parse_atom_decls(self) -> list[AtomDecl]:
        decls = []
        while self.at_ident():
            name = self.take().text
            args: list[str] = []
            if self.at(":"):
                self.take()
                args.append(self.expect_ident("argument sort").text)
                while self.at("#"):
                    self.take()
                    args.append(self.expect_ident("argument sort").text)
            decls.append(AtomDecl(name, tuple(args)))
        return decls

    def parse_proc_decls(self) -> list[ProcDecl]:
        decls = []
        while self.at_ident():
            name = self.take().text
            args: list[str] = []
            if self.at(":"):
                self.take()
                args.append(self.expect_ident("argument sort").text)
                while self.at("#"):
                    self.take()
                    args.append(self.expect_ident("argument sort").text)
            decls.append(ProcDecl(name, tuple(args)))
        return decls

    def parse_var_decl(self) -> list[VarDecl]:
        names = [self.expect_ident("variable name").text]
        while self.at(","):
            self.take()
            names.append(self.expect_ident("variable name").text)
        self.expect(":")
        self.expect("->")
        sort = self.expect_ident("sort name").text
        return [VarDecl(n, sort) for n in names]

    def parse_import(self) -> ImportClause:
        module = self.expect_ident("module name").text
        bindings: list[BindingClause] = []
        renamings: list[tuple[str, str]] = []
        if self.at("{"):
            self.take()
            while not self.at("}"):
                if self.at("renamed"):
                    self.take()
                    self.expect("by")
                    self.expect("[")
                    while not self.at("]"):
                        old = self.expect_ident("name").text
                        self.expect("->")
                        new = self.expect_ident("name").text
                        renamings.append((old, new))
                        if self.at(","):
                            self.take()
                    self.expect("]")
                elif self.at_ident():
                    section = self.take().text
                    self.expect("bound")
                    self.expect("by")
                    self.expect("[")
                    pairs: list[tuple[str, str]] = []
                    while not self.at("]"):
                        formal = self.expect_ident("formal parameter").text
                        self.expect("->")
                        actual = self.expect_ident("actual").text
                        pairs.append((formal, actual))
                        if self.at(","):
                            self.take()
                    self.expect("]")
                    self.expect("to")
                    source = self.expect_ident("module name").text
                    bindings.append(BindingClause(section, tuple(pairs), source))
                else:
                    self.error(f"expected binding, 'renamed by' or '}}', found {self.cur.text!r}")
            self.expect("}")
        return ImportClause(module, tuple(bindings), tuple(renamings))

    def parse_set_decl(self) -> SetDecl:
        name = self.expect_ident("set name").text
        self.expect("=")
        self.expect("{")
        members = [self.parse_action_pattern()]
        while self.at(","):
            self.take()
            members.append(self.parse_action_pattern())
        quants: list[tuple[str, str]] = []
        if self.at("|"):
            self.take()
            quants = self.parse_quantifiers()
        self.expect("}")
        return SetDecl(name, tuple(members), tuple(quants))

    def parse_comm_decl(self) -> CommDecl:
        left = self.parse_action_pattern()
        self.expect("|")
        right = self.parse_action_pattern()
        self.expect("=")
        result = self.parse_action_pattern()
        quants: list[tuple[str, str]] = []
        if self.at("for"):
            self.take()
            quants = self.parse_quantifiers()
        return CommDecl(left, right, result, tuple(quants))

    def parse_quantifiers(self) -> list[tuple[str, str]]:
        out = []
        while True:
            var = self.expect_ident("variable").text
            self.expect("in")
            sort = self.expect_ident("sort").text
            out.append((var, sort))
            if self.at(","):
                self.take()
                continue
            break
        return out

    def parse_action_pattern(self) -> RAction:
        name = self.expect_ident("atom name").text
        args: tuple[RTerm, ...] = ()
        if self.at("("):
            self.take()
            parts = [self.parse_term()]
            while self.at(","):
                self.take()
                parts.append(self.parse_term())
            self.expect(")")
            args = tuple(parts)
        return RAction(name, args)

    # -- terms ---------------------------------------------------------------

    def parse_term(self) -> RTerm:
        left = self.parse_simple_term()
        if self.at(">>"):
            self.take()
            right = self.parse_simple_term()
            return RTerm(">>", (left, right))
        return left

    def parse_simple_term(self) -> RTerm:
        if self.cur.kind == "number":
            return RTerm(num=int(self.take().text))
        name = self.expect_ident("term").text
        if self.at("("):
            self.take()
            args = [self.parse_term()]
            while self.at(","):
                self.take()
                args.append(self.parse_term())
            self.expect(")")
            return RTerm(name, tuple(args))
        return RTerm(name)

    # -- process expressions ---------------------------------------------------

    def parse_proc_eq(self) -> ProcEq:
        tok = self.cur
        name = self.expect_ident("process name").text
        params: tuple[RTerm, ...] = ()
        if self.at("("):
            self.take()
            parts = [self.parse_term()]
            while self.at(","):
                self.take()
                parts.append(self.parse_term())
            self.expect(")")
            params = tuple(parts)
        self.expect("=")
        body = self.parse_proc_expr()
        return ProcEq(name, params, body, line=tok.line)

    def parse_proc_expr(self) -> RProc:
        """Alternative/parallel level; '+' and '||' may not be mixed unparenthesized."""
        left = self.parse_star()
        op: Optional[str] = None
        while self.at("+") or self.at("||"):
            sym = self.take().text
            if op is not None and sym != op:
                self.error("'+' and '||' at the same level require parentheses")
            op = sym
            right = self.parse_star()
            left = RAlt(left, right) if sym == "+" else RPar(left, right)
        return left

    def parse_star(self) -> RProc:
        left = self.parse_seq()
        if self.at("*"):
            self.take()
            right = self.parse_seq()
            return RStar(left, right)
        return left

    def parse_seq(self) -> RProc:
        left = self.parse_primary()
        while self.at("."):
            self.take()
            right = self.parse_primary()
            left = RSeq(left, right)
        return left

    def parse_primary(self) -> RProc:
        if self.at("delta"):
            self.take()
            return RDelta()
        if self.at("skip"):
            self.take()
            return RSkip()
        if self.at("("):
            self.take()
            inner = self.parse_proc_expr()
            self.expect(")")
            return inner
        if self.at("sum"):
            self.take()
            self.expect("(")
            var = self.expect_ident("sum variable").text
            self.expect("in")
            sort = self.expect_ident("sort").text
            self.expect(",")
            body = self.parse_proc_expr()
            self.expect(")")
            return RSum(var, sort, body)
        if self.at("encaps") or self.at("hide"):
            which = self.take().text
            self.expect("(")
            setname = self.expect_ident("atom set name").text
            self.expect(",")
            body = self.parse_proc_expr()
            self.expect(")")
            return REncaps(setname, body) if which == "encaps" else RHide(setname, body)
        if self.at("disrupt"):
            self.take()
            self.expect("(")
            body = self.parse_proc_expr()
            self.expect(",")
            disruptor = self.parse_proc_expr()
            self.expect(")")
            return RDisrupt(body, disruptor)
        if self.at_ident():
            name = self.take().text
            args: tuple[RTerm, ...] = ()
            if self.at("("):
                self.take()
                parts = [self.parse_term()]
                while self.at(","):
                    self.take()
                    parts.append(self.parse_term())
                self.expect(")")
                args = tuple(parts)
            return RCall(name, args)
        self.error(f"expected a process expression, found {self.cur.text!r}")


def _merge_decls(a: Declarations, b: Declarations) -> Declarations:
    return Declarations(
        a.sorts + b.sorts,
        a.functions + b.functions,
        a.atoms + b.atoms,
        a.processes + b.processes,
    )


def parse_spec(text: str, filename: str = "<input>") -> list[ModuleDef]:
    """Parse a sequence of complete modules, in declaration order."""
    return _Parser(tokenize(text, filename), filename).parse_spec()


# ---------------------------------------------------------------------------
# pretty-printer


def _fmt_sig(args: tuple[str, ...]) -> str:
    return " # ".join(args)


def _fmt_term(t: RTerm) -> str:
    return str(t)


def _fmt_action(a: RAction) -> str:
    return str(a)


_RPREC = {RAlt: 1, RPar: 1, RStar: 2, RSeq: 3}


def _fmt_proc(e: RProc, parent: int = 0, tail: bool = False) -> str:
    prec = _RPREC.get(type(e), 9)

    def wrap(s: str) -> str:
        if prec > parent or (prec == parent and tail):
            return s
        return f"({s})"

    if isinstance(e, RCall):
        if e.args:
            return f"{e.name}({', '.join(map(_fmt_term, e.args))})"
        return e.name
    if isinstance(e, RDelta):
        return "delta"
    if isinstance(e, RSkip):
        return "skip"
    if isinstance(e, RAlt):
        return wrap(f"{_fmt_proc(e.left, 1, isinstance(e.left, RAlt))} + {_fmt_proc(e.right, 1)}")
    if isinstance(e, RPar):
        return wrap(f"{_fmt_proc(e.left, 1, isinstance(e.left, RPar))} || {_fmt_proc(e.right, 1)}")
    if isinstance(e, RSeq):
        return wrap(f"{_fmt_proc(e.left, 3, isinstance(e.left, RSeq))} . {_fmt_proc(e.right, 3)}")
    if isinstance(e, RStar):
        return wrap(f"{_fmt_proc(e.body, 2)} * {_fmt_proc(e.exit, 2)}")
    if isinstance(e, RSum):
        return f"sum({e.var} in {e.sort}, {_fmt_proc(e.body)})"
    if isinstance(e, REncaps):
        return f"encaps({e.atom_set}, {_fmt_proc(e.body)})"
    if isinstance(e, RHide):
        return f"hide({e.atom_set}, {_fmt_proc(e.body)})"
    if isinstance(e, RDisrupt):
        return f"disrupt({_fmt_proc(e.body)}, {_fmt_proc(e.disruptor)})"
    raise TypeError(type(e))


def _emit_decls(out: list[str], d: Declarations, indent: str) -> None:
    if d.sorts:
        out.append(f"{indent}sorts")
        for i, s in enumerate(d.sorts):
            sep = "," if i < len(d.sorts) - 1 else ""
            out.append(f"{indent}  {s}{sep}")
    if d.functions:
        out.append(f"{indent}functions")
        for f in d.functions:
            args = _fmt_sig(f.arg_sorts)
            out.append(f"{indent}  {f.name} : {args + ' ' if args else ''}-> {f.result}")
    if d.atoms:
        out.append(f"{indent}atoms")
        for a in d.atoms:
            if a.arg_sorts:
                out.append(f"{indent}  {a.name} : {_fmt_sig(a.arg_sorts)}")
            else:
                out.append(f"{indent}  {a.name}")
    if d.processes:
        out.append(f"{indent}processes")
        for p in d.processes:
            if p.arg_sorts:
                out.append(f"{indent}  {p.name} : {_fmt_sig(p.arg_sorts)}")
            else:
                out.append(f"{indent}  {p.name}")


def pretty_print(m: ModuleDef) -> str:
    """Render a module; output re-parses to an equal ModuleDef."""
    out: list[str] = [f"{m.kind} module {m.name}", "begin"]
    if m.parameters:
        out.append("  parameters")
        for p in m.parameters:
            out.append(f"    {p.name}")
            out.append("    begin")
            _emit_decls(out, p.decls, "      ")
            out.append(f"    end {p.name}")
    if not m.exports.is_empty():
        out.append("  exports")
        out.append("  begin")
        _emit_decls(out, m.exports, "    ")
        out.append("  end")
    if m.imports:
        out.append("  imports")
        chunks = []
        for imp in m.imports:
            chunks.append(_fmt_import(imp))
        out.append(",\n".join(f"    {c}" for c in chunks))
    _emit_decls(out, m.locals, "  ")
    if m.sets:
        out.append("  sets")
        out.append("  of atoms")
        for s in m.sets:
            out.append(f"    {s.name} = {{")
            out.append("      " + ",\n      ".join(_fmt_action(mm) for mm in s.members))
            if s.quantifiers:
                out.append("      | " + ", ".join(f"{v} in {so}" for v, so in s.quantifiers))
            out.append("    }")
    if m.communications:
        out.append("  communications")
        for c in m.communications:
            line = f"    {_fmt_action(c.left)} | {_fmt_action(c.right)} = {_fmt_action(c.result)}"
            if c.quantifiers:
                line += " for " + ", ".join(f"{v} in {s}" for v, s in c.quantifiers)
            out.append(line)
    if m.variables:
        out.append("  variables")
        for v in m.variables:
            out.append(f"    {v.name} : -> {v.sort}")
    if m.definitions:
        out.append("  definitions")
        for eq in m.definitions:
            lhs = eq.name
            if eq.params:
                lhs += f"({', '.join(map(_fmt_term, eq.params))})"
            out.append(f"    {lhs} =")
            out.append(f"      {_fmt_proc(eq.body)}")
    out.append(f"end {m.name}")
    return "\n".join(out) + "\n"


def _fmt_import(imp: ImportClause) -> str:
    if not imp.bindings and not imp.renamings:
        return imp.module
    parts = [f"{imp.module} {{"]
    inner: list[str] = []
    for b in imp.bindings:
        pairs = ", ".join(f"{f} -> {a}" for f, a in b.pairs)
        inner.append(f"{b.section} bound by [ {pairs} ] to {b.source}")
    if imp.renamings:
        pairs = ", ".join(f"{o} -> {n}" for o, n in imp.renamings)
        inner.append(f"renamed by [ {pairs} ]")
    parts.append("\n".join(f"      {x}" for x in inner))
    parts.append("    }")
    return "\n".join(parts)


def print_spec(mods: list[ModuleDef]) -> str:
    return "\n".join(pretty_print(m) for m in mods)
