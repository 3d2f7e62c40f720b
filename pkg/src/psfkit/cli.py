"""Command-line entry point.

Exit codes: 0 success, 1 verification failure (a check that ran and said
no), 2 usage errors and diagnostics.  Diagnostics go to stderr, artifacts
to stdout.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

from .bisim import minimize, rooted_weak_bisim, strong_bisim
from .cslib import (architecture_modules, compose, generate_interfaces,
                    library_modules, parse_manifest, quit_shutdown_closure)
from .linker import FlatSpec, LinkError, flatten, check
from .refine import apply_mapping, parse_mapping, verify_refinement
from .runtime import calculator_session, load_script, new_session, run_auto
from .semantics import build_lts
from .service import default_catalog, serve
from .syntax import ModuleDef, ParseError, parse_spec, pretty_print
from .terms import PsfError


def _load_files(paths: list[str], with_libs: bool = True) -> list[ModuleDef]:
    mods: list[ModuleDef] = []
    if with_libs:
        mods.extend(library_modules())
        mods.extend(architecture_modules())
    lib_names = {m.name for m in mods}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            parsed = parse_spec(fh.read(), os.path.basename(path))
        mods.extend(m for m in parsed if m.name not in lib_names)
    return mods


def _flatten(paths: list[str], root: str) -> FlatSpec:
    return flatten(_load_files(paths), root)


def cmd_check(args) -> int:
    try:
        mods = _load_files(args.files)
        roots = [args.root] if args.root else [m.name for m in mods]
        failures = 0
        for root in roots:
            spec = flatten(mods, root)
            diags = check(spec)
            for d in diags:
                print(f"{root}: {d}", file=sys.stderr)
            failures += len(diags)
        if failures:
            return 2
        print(f"ok: {len(roots)} root(s) link cleanly")
        return 0
    except (ParseError, LinkError) as exc:
        print(exc, file=sys.stderr)
        return 2


def cmd_lts(args) -> int:
    spec = _flatten(args.files, args.root)
    lts = build_lts(spec, args.entry or args.root, max_states=args.max_states,
                    depth_bound=args.depth_bound)
    if lts.truncated:
        print("warning: state space truncated at --max-states", file=sys.stderr)
    if args.minimize:
        lts = minimize(lts, args.minimize)
    sys.stdout.write(lts.export_aut())
    return 0


def cmd_bisim(args) -> int:
    spec_a = _flatten([args.files[0]], args.root)
    spec_b = _flatten([args.files[1]], args.root2 or args.root)
    lts_a = build_lts(spec_a, args.entry or args.root, max_states=args.max_states, depth_bound=args.depth_bound)
    lts_b = build_lts(spec_b, args.entry2 or args.entry or args.root2 or args.root,
                      max_states=args.max_states, depth_bound=args.depth_bound)
    checker = strong_bisim if args.kind == "strong" else rooted_weak_bisim
    result = checker(lts_a, lts_b)
    if result.equivalent:
        print("equivalent")
        return 0
    print("NOT equivalent")
    if result.witness:
        print(result.witness.script())
    return 1


def cmd_refine(args) -> int:
    spec = _flatten(args.files, args.root)
    mapping = parse_mapping(open(args.map, encoding="utf-8").read(), args.map)
    out = apply_mapping(spec, mapping)
    for key in sorted(out.processes):
        d = out.processes[key]
        print(f"{d.display}{'(' + ', '.join(map(str, d.params)) + ')' if d.params else ''} =")
        from .semantics import normalize
        print(f"  {normalize(d.body)}")
    return 0


def cmd_verify(args) -> int:
    source = _flatten([args.source], args.root)
    target = _flatten([args.source, args.target] if args.shared else [args.target], args.root2)
    mapping = parse_mapping(open(args.map, encoding="utf-8").read(), args.map)
    result = verify_refinement(source, mapping, target, args.entry, args.entry2,
                               max_states=args.max_states, depth_bound=args.depth_bound)
    if result.equivalent:
        print("equivalent")
        return 0
    print("NOT equivalent")
    if result.witness:
        print(result.witness.script())
    return 1


def cmd_csgen(args) -> int:
    mods = _load_files(args.files)
    components = parse_manifest(open(args.manifest, encoding="utf-8").read())
    probe_root = args.root
    spec = flatten(mods, probe_root)
    gen = generate_interfaces(spec, components, data_module=args.data_module)
    for w in gen.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.emit:
        for m in gen.modules:
            sys.stdout.write(pretty_print(m))
            sys.stdout.write("\n")
        return 0
    composed = compose(mods, gen)
    diags = check(composed)
    for d in diags:
        print(d, file=sys.stderr)
    if diags:
        return 2
    lts = build_lts(composed, gen.root_process, max_states=args.max_states, depth_bound=args.depth_bound)
    report = quit_shutdown_closure(lts, len(components))
    print(f"generated {len(gen.modules)} modules; system has {lts.num_states} states, "
          f"{len(lts.transitions)} transitions{' (truncated)' if lts.truncated else ''}")
    print(f"shutdown closure: {'clean' if report.clean else 'VIOLATED'}")
    return 0 if report.clean else 1


def cmd_sim(args) -> int:
    if args.demo:
        session = calculator_session(seed=args.seed, depth_bound=args.depth_bound)
    else:
        spec = _flatten(args.files, args.root)
        session = new_session(spec, args.entry or args.root, seed=args.seed, depth_bound=args.depth_bound)
    if args.script:
        script = load_script(open(args.script, encoding="utf-8").read())
        run_auto(session, "script", script)
    elif args.policy == "random":
        run_auto(session, "random", max_steps=args.max_steps)
    else:
        return _interactive(session)
    for ev in session.trace:
        print(f"{ev.index}\t{ev.label}")
    return 0


def _interactive(session) -> int:
    print("interactive simulation; number fires, u undoes, r resets, t trace, q quits")
    while True:
        enabled = session.enabled()
        if session.terminated:
            print("-- terminated --")
        if session.error:
            print(f"-- error: {session.error}")
        for d in enabled:
            print(f"  [{d.index}] {d.label_text}")
        try:
            line = input("> ").strip()
        except EOFError:
            return 0
        if line == "q":
            return 0
        if line == "u":
            try:
                session.undo()
            except PsfError as exc:
                print(exc)
            continue
        if line == "r":
            session.reset()
            continue
        if line == "t":
            for ev in session.trace:
                print(f"{ev.index}\t{ev.label}")
            continue
        if line.isdigit() and int(line) < len(enabled):
            session.fire(int(line))
            continue
        if line:
            try:
                session.fire_label(line)
            except PsfError as exc:
                print(exc)


def cmd_serve(args) -> int:
    import threading

    catalog = default_catalog(args.specs)
    server = serve(args.port, catalog)
    host, port = server.server_address
    print(f"psfkit service on {host}:{port} (line-JSON and WebSocket)", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_demo(args) -> int:
    session = calculator_session(seed=args.seed, depth_bound=args.depth_bound)
    return _interactive(session)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="psfkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, files=True):
        if files:
            p.add_argument("files", nargs="+", help=".psf specification files")
        p.add_argument("--root", default="Application", help="root module to link")
        p.add_argument("--max-states", type=int, default=100_000)
        p.add_argument("--depth-bound", type=int, default=6)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("check", help="parse and link, reporting diagnostics")
    p.add_argument("files", nargs="+")
    p.add_argument("--root", default=None, help="link a single root (default: every module)")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("lts", help="emit the labeled transition system")
    common(p)
    p.add_argument("--entry", default=None, help="entry process (default: the root name)")
    p.add_argument("--minimize", choices=["strong", "weak"], default=None)
    p.set_defaults(fn=cmd_lts)

    p = sub.add_parser("bisim", help="compare two specifications")
    p.add_argument("files", nargs=2, help="two .psf files")
    p.add_argument("--kind", choices=["strong", "rweak"], default="strong")
    p.add_argument("--root", default="Application")
    p.add_argument("--root2", default=None)
    p.add_argument("--entry", default=None)
    p.add_argument("--entry2", default=None)
    p.add_argument("--max-states", type=int, default=100_000)
    p.add_argument("--depth-bound", type=int, default=6)
    p.set_defaults(fn=cmd_bisim)

    p = sub.add_parser("refine", help="apply a refinement mapping and print the result")
    common(p)
    p.add_argument("--map", required=True)
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("verify", help="verify a vertical implementation")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--map", required=True)
    p.add_argument("--root", default="Application")
    p.add_argument("--root2", required=True, help="root module of the target")
    p.add_argument("--entry", required=True, help="source process")
    p.add_argument("--entry2", required=True, help="target process")
    p.add_argument("--shared", action="store_true", help="target file extends the source universe")
    p.add_argument("--max-states", type=int, default=100_000)
    p.add_argument("--depth-bound", type=int, default=6)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("csgen", help="generate client/server interfaces from a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--data-module", default="ApplicationData")
    p.add_argument("--emit", action="store_true", help="print generated modules instead of linking")
    p.set_defaults(fn=cmd_csgen)

    p = sub.add_parser("sim", help="simulate: interactive, random, or scripted")
    p.add_argument("files", nargs="*", default=[])
    p.add_argument("--demo", action="store_true", help="simulate the calculator demo")
    p.add_argument("--root", default="Application")
    p.add_argument("--entry", default=None)
    p.add_argument("--policy", choices=["interactive", "random"], default="interactive")
    p.add_argument("--script", default=None, help="label script file")
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--max-states", type=int, default=100_000)
    p.add_argument("--depth-bound", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--port", type=int, default=8790)
    p.add_argument("--specs", default=None, help="directory of extra .psf files")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("demo", help="interactive calculator demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth-bound", type=int, default=9)
    p.set_defaults(fn=cmd_demo)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, LinkError) as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PsfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
