"""Headless session server.

One control connection at a time speaks line-delimited JSON over TCP:
requests carry "command" (and an optional "id" echoed back), asynchronous
events carry "event". A read-only HTTP facet serves the export store
verbatim. Requests are processed strictly in arrival order; events may
interleave between replies but lines are never split.
"""

from __future__ import annotations

import json
import socket
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from queue import Empty, Queue

from .depgraph import Selection
from .engine import Engine, EngineConfig, Event, load_corpus
from .errors import ForgeError, NotFoundError
from .store import Store

_CLOSE = object()  # writer sentinel


def _encode(obj) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), ensure_ascii=True) + "\n").encode()


class ForgeServer:
    """TCP/JSON control endpoint plus optional HTTP browsing facet."""

    def __init__(
        self,
        port: int = 0,
        cfg: EngineConfig | None = None,
        http_port: int | None = None,
        store_dir: str | None = None,
    ):
        self.cfg = cfg or EngineConfig()
        self.store_dir = store_dir or tempfile.mkdtemp(prefix="forge-store-")
        self.engine: Engine | None = None
        self.store: Store | None = None
        self._lock = threading.Lock()
        self._shutdown = threading.Event()
        self._listener = socket.create_server(("127.0.0.1", port), reuse_port=False)
        self.port = self._listener.getsockname()[1]
        self._accept_thread: threading.Thread | None = None
        self._conn_busy = threading.Lock()
        self.http_port: int | None = None
        self._http: ThreadingHTTPServer | None = None
        if http_port is not None:
            self._http = _make_http_server(self, http_port)
            self.http_port = self._http.server_address[1]

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        if self._http is not None:
            threading.Thread(target=self._http.serve_forever, daemon=True).start()

    def serve_forever(self) -> None:
        self.start()
        self._shutdown.wait()

    def stop(self) -> None:
        self._shutdown.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._http is not None:
            self._http.shutdown()

    def wait(self, timeout: float | None = None) -> bool:
        return self._shutdown.wait(timeout)

    # -- control connections -------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._shutdown.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            if not self._conn_busy.acquire(blocking=False):
                try:
                    conn.sendall(_encode({
                        "result": "error",
                        "kind": "protocol",
                        "message": "another control connection is active",
                    }))
                finally:
                    conn.close()
                continue
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        out: Queue = Queue()
        writer = threading.Thread(target=self._write_loop, args=(conn, out), daemon=True)
        writer.start()
        session = _ControlSession(self, out)
        try:
            rfile = conn.makefile("rb")
            lines: Queue = Queue()

            def read_loop() -> None:
                for raw in rfile:
                    lines.put(raw.rstrip(b"\r\n"))
                lines.put(None)

            threading.Thread(target=read_loop, daemon=True).start()
            session.run(lines)
        finally:
            out.put(_CLOSE)
            writer.join(timeout=5)
            try:
                conn.close()
            except OSError:
                pass
            self._conn_busy.release()
            if session.shutdown_requested:
                self.stop()

    @staticmethod
    def _write_loop(conn: socket.socket, out: Queue) -> None:
        while True:
            item = out.get()
            if item is _CLOSE:
                return
            try:
                conn.sendall(item)
            except OSError:
                return


class _ControlSession:
    """Processes one control connection's requests in arrival order; while
    a build wave runs, queued requests are drained at completion events."""

    def __init__(self, server: ForgeServer, out: Queue):
        self.server = server
        self.out = out
        self.shutdown_requested = False
        self._processing = False

    # -- output ---------------------------------------------------------

    def _send(self, obj: dict) -> None:
        self.out.put(_encode(obj))

    def _reply_ok(self, msg_id, extra: dict | None = None) -> None:
        obj = {"result": "ok"}
        if msg_id is not None:
            obj["id"] = msg_id
        obj.update(extra or {})
        self._send(obj)

    def _reply_error(self, msg_id, kind: str, message: str) -> None:
        obj = {"result": "error"}
        if msg_id is not None:
            obj["id"] = msg_id
        obj["kind"] = kind
        obj["message"] = message
        self._send(obj)

    def _on_event(self, event: Event) -> None:
        if event.kind == "node_status":
            self._send({
                "event": "node_status",
                "theory": event.theory,
                "status": event.status.value,
                "version": event.version,
            })
        elif event.kind == "committed":
            self._send({"event": "committed", "theory": event.theory,
                        "triples": event.triples})
        elif event.kind == "timing":
            self._send({"event": "timing", "theory": event.theory,
                        "elapsed_ms": event.elapsed_ms, "cpu_ms": event.cpu_ms})
        elif event.kind == "build_finished":
            self._send({"event": "build_finished", "ok": event.ok,
                        "failed": event.failed, "elapsed_ms": event.elapsed_ms,
                        "cpu_ms": event.cpu_ms})

    # -- request loop ---------------------------------------------------------

    def run(self, lines: Queue) -> None:
        while not self.shutdown_requested:
            raw = lines.get()
            if raw is None:
                return
            self.handle_line(raw)
            if self._needs_processing():
                self._process(lines)

    def _needs_processing(self) -> bool:
        engine = self.server.engine
        if engine is None or self._processing:
            return False
        return any(
            status.value in ("pending", "running")
            for status, _ in engine.statuses().values()
        )

    def _process(self, lines: Queue) -> None:
        engine = self.server.engine

        def poll() -> None:
            while not self.shutdown_requested:
                try:
                    raw = lines.get_nowait()
                except Empty:
                    return
                if raw is None:
                    return
                self.handle_line(raw)

        self._processing = True
        try:
            engine.process(poll=poll)
        finally:
            self._processing = False

    # -- request dispatch ---------------------------------------------------

    def handle_line(self, raw: bytes) -> None:
        try:
            msg = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._reply_error(None, "parse", f"malformed JSON: {exc}")
            return
        if not isinstance(msg, dict):
            self._reply_error(None, "protocol", "message must be a JSON object")
            return
        msg_id = msg.get("id")
        command = msg.get("command")
        if not isinstance(command, str):
            self._reply_error(msg_id, "protocol", "missing command")
            return
        handler = getattr(self, f"_cmd_{command}", None)
        if handler is None:
            self._reply_error(msg_id, "protocol", f"unknown command {command}")
            return
        try:
            handler(msg, msg_id)
        except NotFoundError as exc:
            self._reply_error(msg_id, "reference", exc.message)
        except ForgeError as exc:
            self._reply_error(msg_id, "reference", str(exc))
        except Exception as exc:  # never let a request kill the session
            self._reply_error(msg_id, "internal", f"{type(exc).__name__}: {exc}")

    def _require_loaded(self, msg_id) -> Engine | None:
        engine = self.server.engine
        if engine is None:
            self._reply_error(msg_id, "protocol", "no corpus loaded")
        return engine

    def _cmd_echo(self, msg: dict, msg_id) -> None:
        self._reply_ok(msg_id, {"payload": msg.get("payload")})

    def _cmd_load(self, msg: dict, msg_id) -> None:
        if self.server.engine is not None:
            self._reply_error(msg_id, "protocol", "corpus already loaded")
            return
        directory = msg.get("dir")
        if not isinstance(directory, str):
            self._reply_error(msg_id, "protocol", "load requires a dir string")
            return
        raw_sel = msg.get("selection") or {}
        if not isinstance(raw_sel, dict):
            self._reply_error(msg_id, "protocol", "selection must be an object")
            return
        sel = Selection.of(
            include_groups=raw_sel.get("include_groups") or (),
            exclude_groups=raw_sel.get("exclude_groups") or (),
            sessions=raw_sel.get("sessions") or (),
            all=bool(raw_sel.get("all")),
            requirements=bool(raw_sel.get("requirements")),
        )
        catalog, sources = load_corpus(directory)
        store = Store(self.server.store_dir)
        owner = catalog.theory_owner

        def on_commit(theory: str, payload) -> None:
            store.write(owner[theory], theory, payload)

        engine = Engine.load(catalog, sources, sel, self.server.cfg,
                             on_commit=on_commit, on_event=self._on_event)
        store.set_order(engine.canonical)
        with self.server._lock:
            self.server.engine = engine
            self.server.store = store
        self._reply_ok(msg_id, {
            "nodes": len(engine.graph.nodes),
            "edges": len(engine.graph.edges),
        })

    def _cmd_edit(self, msg: dict, msg_id) -> None:
        engine = self._require_loaded(msg_id)
        if engine is None:
            return
        theory = msg.get("theory")
        source = msg.get("source")
        if not isinstance(theory, str) or not isinstance(source, str):
            self._reply_error(msg_id, "protocol", "edit requires theory and source strings")
            return
        invalidated = engine.apply_edit(theory, source.encode("utf-8"))
        self._reply_ok(msg_id, {"invalidated": sorted(invalidated)})

    def _cmd_purge(self, msg: dict, msg_id) -> None:
        engine = self._require_loaded(msg_id)
        if engine is None:
            return
        self._reply_ok(msg_id, {"purged": engine.force_purge()})

    def _cmd_export_status(self, msg: dict, msg_id) -> None:
        engine = self._require_loaded(msg_id)
        if engine is None:
            return
        nodes = {
            theory: {"status": status.value, "version": version}
            for theory, (status, version) in sorted(engine.statuses().items())
        }
        self._reply_ok(msg_id, {"nodes": nodes})

    def _cmd_shutdown(self, msg: dict, msg_id) -> None:
        self._reply_ok(msg_id)
        self.shutdown_requested = True


# ---------------------------------------------------------------------------
# HTTP facet


def _make_http_server(server: ForgeServer, port: int) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet
            pass

        def _respond(self, status: int, content_type: str, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            engine = server.engine
            store = server.store
            if self.path == "/theories":
                names = engine.committed_theories() if engine is not None else []
                self._respond(200, "application/json",
                              _encode(names).rstrip(b"\n") + b"\n")
                return
            if self.path == "/rdf/corpus.nt":
                body = store.read_corpus_nt() if store is not None else b""
                self._respond(200, "application/n-triples", body)
                return
            if self.path.startswith("/theory/") and self.path.endswith(".omdoc.xml"):
                name = self.path[len("/theory/") : -len(".omdoc.xml")]
                if engine is not None and name in engine.plan.catalog.theory_owner:
                    session = engine.plan.catalog.theory_owner[name]
                    path = store.theory_dir(session) / f"{name}.omdoc.xml"
                    if path.is_file():
                        self._respond(200, "application/xml", path.read_bytes())
                        return
            self._respond(404, "text/plain", b"not found\n")

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)
