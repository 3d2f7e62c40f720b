"""Session service: animation views and a line-delimited JSON protocol.

The view mirrors the drawing convention of the simulator UIs: every
encapsulation is a box, every behavioral process is a node inside its box,
and a node is highlighted when it participates in at least one enabled
transition.  The box/node skeleton is computed once from the root process
and the evolving configuration is aligned against it, so nodes keep their
identity while the system runs (including after a disruptor takes over).

Transport: newline-delimited JSON over TCP.  A client speaking WebSocket
(the browser UI) is detected by its HTTP upgrade request on the same port;
each text frame then carries one JSON message.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Optional

from .linker import flatten
from .runtime import Session, new_session
from .semantics import PEnd, Stepper
from .syntax import ModuleDef, parse_spec
from .terms import PDisrupt, PEncaps, PHide, PInst, PPar, ProcExpr, PsfError

PROTOCOL_VERSION = 1


# ---------------------------------------------------------------------------
# static skeleton


@dataclass
class SkelBox:
    id: int
    label: str
    parent: Optional[int]


@dataclass
class SkelNode:
    id: int
    name: str
    box: int


@dataclass
class Skeleton:
    boxes: list[SkelBox] = field(default_factory=list)
    nodes: list[SkelNode] = field(default_factory=list)
    # static tree mirrored for alignment
    tree: Optional["SkelTree"] = None


@dataclass
class SkelTree:
    kind: str  # "box" | "par" | "disrupt" | "node"
    box_id: int = -1
    node_id: int = -1
    label: str = ""
    children: list["SkelTree"] = field(default_factory=list)


def _is_structural(e: ProcExpr) -> bool:
    return isinstance(e, (PPar, PEncaps, PDisrupt))


def _expand(stepper: Stepper, e: ProcExpr, depth: int = 0) -> ProcExpr:
    """Unfold instantiations whose bodies contribute box/parallel structure."""
    if isinstance(e, PInst) and depth < 64:
        try:
            body = stepper.unfold(e)
        except PsfError:
            return e
        if _is_structural(body) or isinstance(body, PInst):
            return _expand(stepper, body, depth + 1)
        return e
    if isinstance(e, PPar):
        return PPar(_expand(stepper, e.left, depth), _expand(stepper, e.right, depth))
    if isinstance(e, PEncaps):
        return PEncaps(e.atom_set, _expand(stepper, e.body, depth))
    if isinstance(e, PDisrupt):
        return PDisrupt(_expand(stepper, e.body, depth), _expand(stepper, e.disruptor, depth))
    return e


def build_skeleton(stepper: Stepper, root: ProcExpr) -> Skeleton:
    skel = Skeleton()
    expanded = _expand(stepper, root)
    outer = SkelBox(0, "system", None)
    skel.boxes.append(outer)

    def walk(e: ProcExpr, box: int) -> SkelTree:
        if isinstance(e, PEncaps):
            b = SkelBox(len(skel.boxes), e.atom_set, box)
            skel.boxes.append(b)
            t = SkelTree("box", box_id=b.id, label=e.atom_set)
            t.children.append(walk(e.body, b.id))
            return t
        if isinstance(e, PPar):
            t = SkelTree("par")
            t.children.append(walk(e.left, box))
            t.children.append(walk(e.right, box))
            return t
        if isinstance(e, PDisrupt):
            t = SkelTree("disrupt")
            t.children.append(walk(e.body, box))
            t.children.append(walk(e.disruptor, box))
            return t
        name = str(e) if isinstance(e, PInst) else _short(str(e))
        n = SkelNode(len(skel.nodes), name, box)
        skel.nodes.append(n)
        return SkelTree("node", node_id=n.id, label=name)

    skel.tree = walk(expanded, 0)
    return skel


def _short(s: str, n: int = 40) -> str:
    return s if len(s) <= n else s[: n - 1] + "…"


# ---------------------------------------------------------------------------
# alignment of the current configuration against the skeleton


@dataclass
class NodeState:
    terminated: bool = False
    dropped: bool = False
    current: str = ""


def align(skel: Skeleton, stepper: Stepper, current: ProcExpr):
    """Map step paths to skeleton nodes and report per-node liveness."""
    states: dict[int, NodeState] = {n.id: NodeState(dropped=True) for n in skel.nodes}
    path_map: dict[tuple, int] = {}

    def mark_dead(t: SkelTree) -> None:
        if t.kind == "node":
            states[t.node_id] = NodeState(terminated=True, current="<done>")
        for c in t.children:
            mark_dead(c)

    def walk(t: SkelTree, e: ProcExpr, path: tuple) -> None:
        if isinstance(e, PEnd):
            mark_dead(t)
            return
        if t.kind == "box":
            inner = e.body if isinstance(e, (PEncaps, PHide)) else e
            walk(t.children[0], inner, path + (("enc",),) if isinstance(e, (PEncaps, PHide)) else path)
            return
        if t.kind == "par":
            if isinstance(e, PPar):
                walk(t.children[0], e.left, path + (("par", 0),))
                walk(t.children[1], e.right, path + (("par", 1),))
            else:
                # one side gone entirely; align what remains with both slots dead-checked
                mark_dead(t)
            return
        if t.kind == "disrupt":
            if isinstance(e, PDisrupt):
                walk(t.children[0], e.body, path + (("dis", 0),))
                walk(t.children[1], e.disruptor, path + (("dis", 1),))
            else:
                # disruptor took over: the body subtree is gone
                mark_dead(t.children[0])
                walk(t.children[1], e, path)
            return
        # node
        expanded = _expand(stepper, e) if isinstance(e, PInst) else e
        if _is_structural(expanded) and t.kind == "node":
            states[t.node_id] = NodeState(current=_short(str(e)))
            path_map[path] = t.node_id
            return
        states[t.node_id] = NodeState(terminated=isinstance(e, PEnd), current=_short(str(e)))
        path_map[path] = t.node_id

    walk(skel.tree, _expand(stepper, current), ())
    return states, path_map


def _node_of_path(path_map: dict[tuple, int], path: tuple) -> Optional[int]:
    probe = tuple(path)
    while True:
        if probe in path_map:
            return path_map[probe]
        if not probe:
            return None
        probe = probe[:-1]


# ---------------------------------------------------------------------------
# the rendered view


def render_view(session: Session, skeleton: Optional[Skeleton] = None) -> dict:
    """Pure function of session state; equal sessions render equal views."""
    skel = skeleton or build_skeleton(session.stepper, session.config.expr)
    states, path_map = align(skel, session.stepper, session.config.expr)
    enabled = session.enabled()
    enabled_nodes: set[int] = set()
    rows = []
    for d in enabled:
        participants = sorted({nid for p in d.leaves if (nid := _node_of_path(path_map, p)) is not None})
        enabled_nodes.update(participants)
        rows.append({
            "index": d.index,
            "label": d.label_text,
            "participants": participants,
            "target": _short(d.target.key(), 120),
        })
    return {
        "boxes": [{"id": b.id, "label": b.label, "parent": b.parent} for b in skel.boxes],
        "nodes": [
            {
                "id": n.id,
                "name": n.name,
                "box": n.box,
                "enabled": n.id in enabled_nodes,
                "terminated": states[n.id].terminated,
                "current": states[n.id].current,
            }
            for n in skel.nodes
        ],
        "last_action": session.trace[-1].label if session.trace else None,
        "enabled": rows,
        "terminated": session.terminated,
        "error": session.error,
        "trace_length": len(session.trace),
    }


# ---------------------------------------------------------------------------
# the service


class ServiceError(PsfError):
    pass


@dataclass
class _Managed:
    session: Session
    skeleton: Skeleton
    lock: threading.Lock = field(default_factory=threading.Lock)


class SpecCatalog:
    """Named, linkable specifications the service can instantiate."""

    def __init__(self) -> None:
        self.entries: dict[str, tuple[list[ModuleDef], str, Optional[dict]]] = {}

    def add_demo(self) -> None:
        from .runtime import calculator_demo
        spec, _components, handlers = calculator_demo()
        self.entries["demo"] = ([], "Application", {"spec": spec, "handlers": handlers})

    def add_file(self, name: str, mods: list[ModuleDef], root: str) -> None:
        self.entries[name] = (mods, root, None)

    def names(self) -> list[str]:
        return sorted(self.entries)

    def instantiate(self, name: str, root: Optional[str], seed: int, depth_bound: int) -> Session:
        if name not in self.entries:
            raise ServiceError(f"unknown spec {name!r}; catalog: {', '.join(self.names())}")
        mods, default_root, extra = self.entries[name]
        if extra is not None:
            return new_session(extra["spec"], root or default_root, seed=seed,
                               handlers=extra["handlers"], depth_bound=depth_bound)
        spec = flatten(mods, root or default_root)
        return new_session(spec, root or default_root, seed=seed, depth_bound=depth_bound)


class SessionService:
    def __init__(self, catalog: SpecCatalog):
        self.catalog = catalog
        self.sessions: dict[str, _Managed] = {}
        self.lock = threading.Lock()
        self.counter = 0

    # -- message handling -----------------------------------------------------

    def handle(self, msg: dict) -> dict:
        try:
            op = msg.get("op")
            if op == "hello":
                return {"ok": True, "service": "psfkit", "protocol": PROTOCOL_VERSION,
                        "specs": self.catalog.names()}
            if op == "create":
                return self._create(msg)
            if op in ("view", "enabled", "fire", "undo", "reset", "trace"):
                managed = self._session_of(msg)
                with managed.lock:
                    return getattr(self, f"_{op}")(managed, msg)
            return {"ok": False, "error": f"unknown op {op!r}"}
        except PsfError as exc:
            return {"ok": False, "error": str(exc)}
        except (KeyError, TypeError, ValueError) as exc:
            return {"ok": False, "error": f"malformed message: {exc}"}

    def _create(self, msg: dict) -> dict:
        name = msg.get("spec", "demo")
        session = self.catalog.instantiate(
            name, msg.get("root"), int(msg.get("seed", 0)), int(msg.get("depth_bound", 9))
        )
        skeleton = build_skeleton(session.stepper, session.config.expr)
        with self.lock:
            self.counter += 1
            sid = f"s{self.counter}"
            self.sessions[sid] = _Managed(session, skeleton)
        view = render_view(session, skeleton)
        return {"ok": True, "session": sid, "view": view, "revision": session.revision}

    def _session_of(self, msg: dict) -> _Managed:
        sid = msg.get("session")
        managed = self.sessions.get(sid)
        if managed is None:
            raise ServiceError(f"unknown session id {sid!r}")
        return managed

    def _view(self, m: _Managed, msg: dict) -> dict:
        return {"ok": True, "view": render_view(m.session, m.skeleton), "revision": m.session.revision}

    def _enabled(self, m: _Managed, msg: dict) -> dict:
        rows = [{"index": d.index, "label": d.label_text} for d in m.session.enabled()]
        return {"ok": True, "enabled": rows, "revision": m.session.revision,
                "terminated": m.session.terminated}

    def _fire(self, m: _Managed, msg: dict) -> dict:
        if "revision" in msg and int(msg["revision"]) != m.session.revision:
            return {"ok": False, "error": "index out of date: session state changed"}
        if "label" in msg and "index" not in msg:
            m.session.fire_label(str(msg["label"]))
        else:
            m.session.fire(int(msg["index"]))
        return {"ok": True, "view": render_view(m.session, m.skeleton), "revision": m.session.revision}

    def _undo(self, m: _Managed, msg: dict) -> dict:
        m.session.undo()
        return {"ok": True, "view": render_view(m.session, m.skeleton), "revision": m.session.revision}

    def _reset(self, m: _Managed, msg: dict) -> dict:
        m.session.reset()
        return {"ok": True, "view": render_view(m.session, m.skeleton), "revision": m.session.revision}

    def _trace(self, m: _Managed, msg: dict) -> dict:
        events = [{"index": e.index, "label": e.label} for e in m.session.trace]
        return {"ok": True, "trace": events}


# ---------------------------------------------------------------------------
# transports


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        try:
            self._handle_inner()
        except (ConnectionResetError, BrokenPipeError):
            pass  # client went away mid-exchange

    def _handle_inner(self) -> None:
        service: SessionService = self.server.service  # type: ignore[attr-defined]
        first = self.rfile.peek(3)[:3]
        if first.startswith(b"GET"):
            self._handle_websocket(service)
            return
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
            except json.JSONDecodeError as exc:
                reply: dict = {"ok": False, "error": f"malformed message: {exc}"}
            else:
                reply = service.handle(msg)
            self.wfile.write((json.dumps(reply, sort_keys=True) + "\n").encode("utf-8"))
            self.wfile.flush()

    # -- minimal RFC6455 server (text frames only) ---------------------------

    def _handle_websocket(self, service: SessionService) -> None:
        request_line = self.rfile.readline()
        headers: dict[str, str] = {}
        while True:
            line = self.rfile.readline().decode("latin-1").strip()
            if not line:
                break
            k, _, v = line.partition(":")
            headers[k.strip().lower()] = v.strip()
        key = headers.get("sec-websocket-key")
        if request_line and key:
            accept = base64.b64encode(
                hashlib.sha1((key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest()
            ).decode()
            self.wfile.write(
                (
                    "HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                    f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
                ).encode("latin-1")
            )
        else:
            self.wfile.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return
        while True:
            payload = self._read_frame()
            if payload is None:
                return
            try:
                reply = service.handle(json.loads(payload.decode("utf-8")))
            except json.JSONDecodeError as exc:
                reply = {"ok": False, "error": f"malformed message: {exc}"}
            self._write_frame(json.dumps(reply, sort_keys=True).encode("utf-8"))

    def _read_frame(self) -> Optional[bytes]:
        head = self.rfile.read(2)
        if len(head) < 2:
            return None
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            length = struct.unpack(">H", self.rfile.read(2))[0]
        elif length == 127:
            length = struct.unpack(">Q", self.rfile.read(8))[0]
        mask = self.rfile.read(4) if masked else b"\x00" * 4
        data = self.rfile.read(length)
        if opcode == 0x8:  # close
            return None
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        if opcode == 0x9:  # ping -> pong
            self._write_frame(payload, opcode=0xA)
            return self._read_frame()
        return payload

    def _write_frame(self, payload: bytes, opcode: int = 0x1) -> None:
        header = bytearray([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header.append(n)
        elif n < 1 << 16:
            header.append(126)
            header += struct.pack(">H", n)
        else:
            header.append(127)
            header += struct.pack(">Q", n)
        self.wfile.write(bytes(header) + payload)
        self.wfile.flush()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve(port: int, catalog: SpecCatalog, host: str = "127.0.0.1") -> _Server:
    """Start the service; returns the running server (call shutdown() to stop)."""
    server = _Server((host, port), _Handler)
    server.service = SessionService(catalog)  # type: ignore[attr-defined]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def default_catalog(spec_dir: Optional[str] = None) -> SpecCatalog:
    import os
    from . import corpus_path
    from .cslib import architecture_modules, library_modules

    catalog = SpecCatalog()
    catalog.add_demo()
    libs = library_modules() + architecture_modules()
    dirs = [corpus_path()] + ([spec_dir] if spec_dir else [])
    for d in dirs:
        for fname in sorted(os.listdir(d)):
            if not fname.endswith(".psf") or fname == "calculator.psf":
                continue
            with open(os.path.join(d, fname), encoding="utf-8") as fh:
                try:
                    mods = parse_spec(fh.read(), fname)
                except PsfError:
                    continue
            roots = [m.name for m in mods if m.name == "Application"]
            if roots:
                catalog.add_file(fname[:-4], libs + mods, roots[0])
    return catalog
