import json
import socket

import pytest

from psfkit.runtime import calculator_session
from psfkit.service import (
    SessionService, build_skeleton, default_catalog, render_view, serve,
)


@pytest.fixture(scope="module")
def demo_session():
    return calculator_session(seed=0)


@pytest.fixture(scope="module")
def demo_view(demo_session):
    skel = build_skeleton(demo_session.stepper, demo_session.config.expr)
    return render_view(demo_session, skel)


def test_view_boxes_nest_like_the_encapsulations(demo_view):
    labels = [b["label"] for b in demo_view["boxes"]]
    assert labels[0] == "system"
    assert "ClientServerH" in labels
    assert "H" in labels
    assert labels.count("ClientH") == 3  # operator, basic-side, complex-side
    assert labels.count("ServerH") == 3
    by_id = {b["id"]: b for b in demo_view["boxes"]}
    h_box = next(b for b in demo_view["boxes"] if b["label"] == "H")
    assert by_id[h_box["parent"]]["label"] == "ClientServerH"


def test_view_nodes_match_the_figure(demo_view):
    names = {n["name"] for n in demo_view["nodes"]}
    assert {
        "Operator", "Primitive", "Basic", "Complex",
        "S-I(primitive)", "S-I(basic)", "S-I(complex)",
        "C-I(operator, primitive)", "C-I(operator, basic)", "C-I(operator, complex)",
        "C-I(basic, primitive)", "C-I(complex, primitive)", "C-I(complex, basic)",
        "ClientServerControl", "ClientServerShutdown",
    } <= names


def test_enabled_nodes_participate_in_some_transition(demo_view):
    enabled_ids = {n["id"] for n in demo_view["nodes"] if n["enabled"]}
    from_rows = {p for row in demo_view["enabled"] for p in row["participants"]}
    assert enabled_ids == from_rows
    op = next(n for n in demo_view["nodes"] if n["name"] == "Operator")
    assert op["id"] in enabled_ids


def test_view_is_a_pure_function_of_session_state(demo_session):
    skel = build_skeleton(demo_session.stepper, demo_session.config.expr)
    v0 = render_view(demo_session, skel)
    demo_session.fire_label("push(1)")
    v1 = render_view(demo_session, skel)
    assert v1["last_action"] == "push(1)"
    demo_session.undo()
    v2 = render_view(demo_session, skel)
    assert json.dumps(v2, sort_keys=True) == json.dumps(v0, sort_keys=True)


def test_terminated_view_keeps_last_action(demo_session):
    demo_session.reset()
    skel = build_skeleton(demo_session.stepper, demo_session.config.expr)
    for label in ("stop", "quit", "shutdown"):
        demo_session.fire_label(label)
    v = render_view(demo_session, skel)
    assert v["terminated"]
    assert v["last_action"] == "shutdown"
    assert not any(n["enabled"] for n in v["nodes"])
    demo_session.reset()


def test_message_round_trip_corpus():
    service = SessionService(default_catalog())
    created = service.handle({"op": "create", "spec": "demo", "seed": 3})
    sid = created["session"]
    corpus = [
        {"op": "hello"},
        {"op": "view", "session": sid},
        {"op": "enabled", "session": sid},
        {"op": "fire", "session": sid, "index": 0},
        {"op": "undo", "session": sid},
        {"op": "trace", "session": sid},
        {"op": "reset", "session": sid},
    ]
    for msg in corpus:
        encoded = json.dumps(msg, sort_keys=True)
        assert json.loads(encoded) == msg  # encode/decode identity
        reply = service.handle(json.loads(encoded))
        assert reply["ok"], (msg, reply)
        json.dumps(reply)  # replies must be serializable


def test_unknown_session_is_an_error_response():
    service = SessionService(default_catalog())
    reply = service.handle({"op": "view", "session": "missing"})
    assert reply == {"ok": False, "error": "unknown session id 'missing'"}


def test_malformed_message_gets_a_reason():
    service = SessionService(default_catalog())
    reply = service.handle({"op": "fire", "session": None})
    assert not reply["ok"] and "session" in reply["error"]


@pytest.fixture(scope="module")
def live_server():
    server = serve(0, default_catalog())
    yield server.server_address
    server.shutdown()


def rpc(f, sock, msg):
    sock.sendall((json.dumps(msg) + "\n").encode())
    return json.loads(f.readline())


def test_tcp_create_view_fire_undo(live_server):
    sock = socket.create_connection(live_server)
    f = sock.makefile("rb")
    try:
        created = rpc(f, sock, {"op": "create", "spec": "demo", "seed": 1})
        sid = created["session"]
        v0 = created["view"]
        enabled = rpc(f, sock, {"op": "enabled", "session": sid})
        fired = rpc(f, sock, {"op": "fire", "session": sid, "index": 2,
                              "revision": enabled["revision"]})
        assert fired["view"]["last_action"] == enabled["enabled"][2]["label"]
        undone = rpc(f, sock, {"op": "undo", "session": sid})
        assert json.dumps(undone["view"], sort_keys=True) == json.dumps(v0, sort_keys=True)
        stale = rpc(f, sock, {"op": "fire", "session": sid, "index": 0,
                              "revision": enabled["revision"] + 41})
        assert not stale["ok"] and "out of date" in stale["error"]
        fresh = rpc(f, sock, {"op": "create", "spec": "demo"})
        nothing = rpc(f, sock, {"op": "undo", "session": fresh["session"]})
        assert not nothing["ok"] and "nothing to undo" in nothing["error"]
    finally:
        sock.close()


def test_sessions_are_isolated(live_server):
    sock = socket.create_connection(live_server)
    f = sock.makefile("rb")
    try:
        a = rpc(f, sock, {"op": "create", "spec": "demo"})["session"]
        b = rpc(f, sock, {"op": "create", "spec": "demo"})["session"]
        rpc(f, sock, {"op": "fire", "session": a, "index": 0})
        tb = rpc(f, sock, {"op": "trace", "session": b})
        assert tb["trace"] == []
    finally:
        sock.close()


def test_websocket_transport(live_server):
    import base64
    import os
    import struct

    sock = socket.create_connection(live_server)
    try:
        key = base64.b64encode(os.urandom(16)).decode()
        sock.sendall(
            (
                "GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\n"
                f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\n"
                "Sec-WebSocket-Version: 13\r\n\r\n"
            ).encode()
        )
        handshake = b""
        while b"\r\n\r\n" not in handshake:
            handshake += sock.recv(1024)
        assert b"101" in handshake

        def send_frame(payload: bytes):
            mask = os.urandom(4)
            header = bytearray([0x81])
            n = len(payload)
            if n < 126:
                header.append(0x80 | n)
            else:
                header.append(0x80 | 126)
                header += struct.pack(">H", n)
            masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            sock.sendall(bytes(header) + mask + masked)

        def recv_exact(n: int) -> bytes:
            data = b""
            while len(data) < n:
                chunk = sock.recv(n - len(data))
                assert chunk
                data += chunk
            return data

        def recv_frame() -> bytes:
            head = recv_exact(2)
            length = head[1] & 0x7F
            if length == 126:
                length = struct.unpack(">H", recv_exact(2))[0]
            elif length == 127:
                length = struct.unpack(">Q", recv_exact(8))[0]
            return recv_exact(length)

        send_frame(json.dumps({"op": "hello"}).encode())
        reply = json.loads(recv_frame())
        assert reply["ok"] and reply["service"] == "psfkit"
        send_frame(json.dumps({"op": "create", "spec": "demo"}).encode())
        created = json.loads(recv_frame())
        assert created["ok"] and created["view"]["nodes"]
    finally:
        sock.close()


def test_catalog_lists_corpus_specs():
    catalog = default_catalog()
    names = catalog.names()
    assert "demo" in names
    assert "section2_architecture" in names


def test_section2_view_after_message_send():
    # Component1 has sent; Component2 is ready to acknowledge and is the
    # enabled (darker) node, with the communication shown as the last action
    from psfkit.service import SpecCatalog
    catalog = default_catalog()
    session = catalog.instantiate("section2_architecture", None, 0, 6)
    skel = build_skeleton(session.stepper, session.config.expr)
    session.fire_label("send-message")
    session.fire_label("comm(c1 >> c2, message)")
    view = render_view(session, skel)
    assert view["last_action"] == "comm(c1 >> c2, message)"
    nodes = {n["name"]: n for n in view["nodes"]}
    assert nodes["Component2"]["enabled"]
    assert not nodes["ApplicationSystem"] if "ApplicationSystem" in nodes else True
    assert nodes["Component1"]["enabled"] in (False, True)  # waiting for the ack
    participants = {p for row in view["enabled"] for p in row["participants"]}
    assert nodes["Component2"]["id"] in participants
