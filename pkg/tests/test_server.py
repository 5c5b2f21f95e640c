import json
import socket
import urllib.request

import pytest

from forge.engine import EngineConfig
from forge.server import ForgeServer

from corpusgen import Decl, TheorySpec, chain_corpus, write_corpus


class Client:
    def __init__(self, port: int):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=20)
        self.file = self.sock.makefile("rwb")
        self.log: list[dict] = []

    def send_raw(self, data: bytes):
        self.file.write(data + b"\n")
        self.file.flush()

    def send(self, obj: dict):
        self.send_raw(json.dumps(obj).encode())

    def recv(self) -> dict | None:
        line = self.file.readline()
        if not line:
            return None
        msg = json.loads(line)
        self.log.append(msg)
        return msg

    def recv_reply(self) -> dict:
        """Next non-event line (events may interleave)."""
        while True:
            msg = self.recv()
            assert msg is not None, "connection closed while awaiting reply"
            if "event" not in msg:
                return msg

    def drain_until(self, event: str) -> list[dict]:
        msgs = []
        while True:
            msg = self.recv()
            assert msg is not None
            msgs.append(msg)
            if msg.get("event") == event:
                return msgs

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


@pytest.fixture
def corpus(tmp_path):
    specs = chain_corpus(3, cost=5)
    write_corpus(tmp_path / "corpus", [("S", ["main"], None, list(specs))], specs)
    return tmp_path / "corpus", specs


@pytest.fixture
def server(tmp_path):
    srv = ForgeServer(0, EngineConfig(workers=2), http_port=0,
                      store_dir=str(tmp_path / "store"))
    srv.start()
    yield srv
    srv.stop()


def load_msg(directory, **selection):
    sel = {"all": True}
    sel.update(selection)
    return {"command": "load", "id": "L", "dir": str(directory), "selection": sel}


class TestProtocol:
    def test_echo_round_trip(self, server):
        c = Client(server.port)
        c.send({"command": "echo", "id": 7, "payload": {"deep": [1, "x", None]}})
        assert c.recv_reply() == {"result": "ok", "id": 7, "payload": {"deep": [1, "x", None]}}
        c.close()

    def test_malformed_json_keeps_connection_open(self, server):
        c = Client(server.port)
        c.send_raw(b"{nope")
        reply = c.recv_reply()
        assert reply["result"] == "error" and reply["kind"] == "parse"
        c.send({"command": "echo", "id": 1})
        assert c.recv_reply()["result"] == "ok"
        c.close()

    def test_edit_before_load_is_protocol_error(self, server):
        c = Client(server.port)
        c.send({"command": "edit", "id": 2, "theory": "A", "source": ""})
        reply = c.recv_reply()
        assert reply == {"result": "error", "id": 2, "kind": "protocol",
                         "message": "no corpus loaded"}
        c.close()

    def test_unknown_command(self, server):
        c = Client(server.port)
        c.send({"command": "frobnicate", "id": 3})
        assert c.recv_reply()["kind"] == "protocol"
        c.close()

    def test_non_object_line(self, server):
        c = Client(server.port)
        c.send_raw(b"[1,2,3]")
        assert c.recv_reply()["kind"] == "protocol"
        c.close()

    def test_load_missing_dir_is_reference_error(self, server, tmp_path):
        c = Client(server.port)
        c.send(load_msg(tmp_path / "missing"))
        reply = c.recv_reply()
        assert reply["result"] == "error" and reply["kind"] == "reference"
        c.close()

    def test_second_connection_refused(self, server, corpus):
        c1 = Client(server.port)
        c1.send({"command": "echo", "id": 1})
        c1.recv_reply()
        c2 = Client(server.port)
        refusal = c2.recv()
        assert refusal["result"] == "error" and refusal["kind"] == "protocol"
        assert c2.file.readline() == b""  # closed
        c2.close()
        c1.send({"command": "echo", "id": 2})
        assert c1.recv_reply()["result"] == "ok"
        c1.close()


class TestSession:
    def test_load_builds_and_streams_events(self, server, corpus):
        directory, specs = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        reply = c.recv_reply()
        assert reply["result"] == "ok" and reply["id"] == "L"
        assert reply["nodes"] == 3 and reply["edges"] == 2
        msgs = c.drain_until("build_finished")
        finished_ok = [m["theory"] for m in msgs
                       if m.get("event") == "node_status" and m["status"] == "finished_ok"]
        assert finished_ok == ["T0", "T1", "T2"]  # linear extension of the chain
        committed = [m for m in msgs if m.get("event") == "committed"]
        assert [m["theory"] for m in committed] == ["T0", "T1", "T2"]
        assert all(m["triples"] > 0 for m in committed)
        fin = msgs[-1]
        timing_sum = sum(m["cpu_ms"] for m in msgs if m.get("event") == "timing")
        assert fin["cpu_ms"] == timing_sum
        assert fin["ok"] == 3 and fin["failed"] == 0
        c.close()

    def test_double_load_rejected(self, server, corpus):
        directory, _ = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        c.recv_reply()
        c.drain_until("build_finished")
        c.send(load_msg(directory))
        assert c.recv_reply()["kind"] == "protocol"
        c.close()

    def test_edit_cycle(self, server, corpus):
        directory, specs = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        c.recv_reply()
        c.drain_until("build_finished")

        c.send({"command": "edit", "id": "E0", "theory": "T0",
                "source": (directory / "T0.thy").read_text()})
        assert c.recv_reply() == {"result": "ok", "id": "E0", "invalidated": []}

        new_source = "theory T1\n  imports T0\nbegin\nconst c1 :: \"*\"\nconst c1b :: \"*\"\nend\n"
        c.send({"command": "edit", "id": "E1", "theory": "T1", "source": new_source})
        reply = c.recv_reply()
        assert reply["invalidated"] == ["T1", "T2"]
        msgs = c.drain_until("build_finished")
        recommitted = [m["theory"] for m in msgs if m.get("event") == "committed"]
        assert recommitted == ["T1", "T2"]

        c.send({"command": "export_status", "id": "S"})
        status = c.recv_reply()
        assert status["nodes"]["T1"]["version"] == 2
        assert status["nodes"]["T0"]["version"] == 1
        c.close()

    def test_edit_unknown_theory_reference_error(self, server, corpus):
        directory, _ = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        c.recv_reply()
        c.drain_until("build_finished")
        c.send({"command": "edit", "id": 9, "theory": "Ghost", "source": "x"})
        assert c.recv_reply()["kind"] == "reference"
        c.close()

    def test_purge_and_shutdown(self, server, corpus):
        directory, _ = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        c.recv_reply()
        c.drain_until("build_finished")
        c.send({"command": "purge", "id": "P"})
        reply = c.recv_reply()
        assert reply["purged"] == ["T0", "T1", "T2"]
        c.send({"command": "shutdown", "id": "Z"})
        assert c.recv_reply() == {"result": "ok", "id": "Z"}
        assert server.wait(10)
        c.close()

    def test_ids_echoed_everywhere(self, server, corpus):
        directory, _ = corpus
        c = Client(server.port)
        for i, msg in enumerate([
            {"command": "echo"},
            {"command": "purge"},
            {"command": "export_status"},
        ]):
            msg["id"] = f"id-{i}"
            c.send(msg)
            assert c.recv_reply()["id"] == f"id-{i}"
        c.close()


class TestHttpFacet:
    def _get(self, server, path):
        url = f"http://127.0.0.1:{server.http_port}{path}"
        try:
            with urllib.request.urlopen(url, timeout=10) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()

    def test_before_load_empty(self, server):
        status, body = self._get(server, "/theories")
        assert status == 200 and json.loads(body) == []

    def test_serves_store_bytes(self, server, corpus):
        directory, _ = corpus
        c = Client(server.port)
        c.send(load_msg(directory))
        c.recv_reply()
        c.drain_until("build_finished")
        status, body = self._get(server, "/theories")
        assert json.loads(body) == ["T0", "T1", "T2"]
        status, omdoc = self._get(server, "/theory/T1.omdoc.xml")
        assert status == 200
        stored = (server.store.theory_dir("S") / "T1.omdoc.xml").read_bytes()
        assert omdoc == stored
        status, nt = self._get(server, "/rdf/corpus.nt")
        assert status == 200 and nt == server.store.read_corpus_nt()
        c.close()

    def test_unknown_path_404(self, server):
        status, _ = self._get(server, "/nonexistent")
        assert status == 404
        status, _ = self._get(server, "/theory/Ghost.omdoc.xml")
        assert status == 404


class TestFuzz:
    def test_garbage_lines_yield_only_parse_protocol_errors(self, server, corpus):
        import random

        rng = random.Random(99)
        directory, _ = corpus
        c = Client(server.port)
        alphabet = b'{}[]",:abcdef\\\x01 \t'
        for i in range(200):
            line = bytes(rng.choice(alphabet) for _ in range(rng.randrange(1, 30)))
            line = line.replace(b"\n", b" ")
            c.send_raw(line)
            reply = c.recv_reply()
            assert reply["result"] == "error"
            assert reply["kind"] in ("parse", "protocol")
        c.send({"command": "echo", "id": "alive"})
        assert c.recv_reply()["result"] == "ok"
        c.close()
