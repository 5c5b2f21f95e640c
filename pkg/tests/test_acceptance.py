"""Acceptance suite: one test per criterion, each printing a pass/fail line
and enforcing its runtime budget (run with -s to see the lines)."""

import functools
import json
import random
import socket
import time
from collections import Counter
from time import perf_counter

import pytest

from forge.cli import main as cli_main
from forge.depgraph import Selection, ancestors, build_graph, descendants, topo_order
from forge.engine import (
    Engine,
    EngineConfig,
    factor,
    format_factor,
    makespan_bounds,
    plan,
    run_build,
)
from forge.errors import CycleError
from forge.export import parse_ntriples
from forge.model import Status
from forge.server import ForgeServer
from forge.store import Store
from forge.syntax import parse_catalog, parse_theory, tokenize

from corpusgen import (
    Decl,
    TheorySpec,
    chain_corpus,
    diamond_corpus,
    random_corpus,
    render_root,
    render_theory,
    write_corpus,
)
from test_syntax import assert_tiling


def criterion(number, name, budget_s=None):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = perf_counter()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE {number} {name}: FAIL")
                raise
            dt = perf_counter() - t0
            if budget_s is not None and dt >= budget_s:
                print(f"\nACCEPTANCE {number} {name}: FAIL (over budget)")
                raise AssertionError(
                    f"criterion {number} exceeded runtime budget: {dt:.2f}s >= {budget_s}s"
                )
            print(f"\nACCEPTANCE {number} {name}: PASS ({dt:.3f}s)")

        return wrapper

    return deco


def make_plan(specs, sessions=None, selection=None):
    sessions = sessions or [("S", [], None, list(specs))]
    cat = parse_catalog(render_root(sessions).encode())
    sources = {n: render_theory(s).encode() for n, s in specs.items()}
    return plan(cat, selection or Selection.of(all=True), sources)


def store_tree(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for sub in ("sessions", "rdf")
        for p in sorted((root / sub).rglob("*"))
        if p.is_file()
    }


# -- criterion 1 -------------------------------------------------------------


@criterion(1, "factor arithmetic")
def test_factor_arithmetic():
    t0 = perf_counter()
    first = format_factor(factor(51, 1547))
    second = format_factor(factor(74, 2531))
    dt = perf_counter() - t0
    assert first == "30.3"
    assert second == "34.2"
    assert dt < 0.001, f"factor arithmetic took {dt*1000:.3f} ms"


# -- criterion 2 -------------------------------------------------------------


def warshall_closure(nodes, edges):
    order = sorted(nodes)
    idx = {n: i for i, n in enumerate(order)}
    n = len(order)
    reach = [[False] * n for _ in range(n)]
    for a, b in edges:
        reach[idx[a]][idx[b]] = True
    for k in range(n):
        rk = reach[k]
        for i in range(n):
            if reach[i][k]:
                ri = reach[i]
                for j in range(n):
                    if rk[j]:
                        ri[j] = True
    return {(order[i], order[j]) for i in range(n) for j in range(n) if reach[i][j]}


@criterion(2, "graph oracle equivalence", budget_s=10)
def test_graph_oracles():
    rng = random.Random(2024)
    for _ in range(500):
        n = rng.randrange(1, 13)
        names = [f"n{i:02d}" for i in range(n)]
        shuffled = list(names)
        rng.shuffle(shuffled)
        edges = [
            (shuffled[i], shuffled[j])
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < 0.3
        ]
        g = build_graph(names, edges)
        closure = warshall_closure(names, edges)
        order = topo_order(g)
        assert sorted(order) == sorted(names)
        position = {x: i for i, x in enumerate(order)}
        for a, b in edges:
            assert position[a] < position[b]
        for node in names:
            assert descendants(g, node) == {b for a, b in closure if a == node}
            assert ancestors(g, node) == {a for a, b in closure if b == node}
    for _ in range(500):
        n = rng.randrange(1, 13)
        names = [f"n{i:02d}" for i in range(n)]
        edges = [
            (a, b) for a in names for b in names if a != b and rng.random() < 0.2
        ]
        closure = warshall_closure(names, edges)
        brute_cyclic = any((x, x) in closure for x in names)
        try:
            build_graph(names, edges)
            assert not brute_cyclic
        except CycleError as exc:
            assert brute_cyclic
            assert exc.cycle[0] == exc.cycle[-1]


# -- criterion 3 -------------------------------------------------------------


def _determinism_corpus(rng):
    specs = random_corpus(rng, n_theories=50, max_decls=4, edge_prob=0.12, max_cost=20)
    names = list(specs)
    return specs, [
        ("Base", ["main"], None, names[:17]),
        ("Mid", ["main"], "Base", names[17:34]),
        ("Top", ["slow"], "Mid", names[34:]),
    ]


@criterion(3, "build determinism", budget_s=30)
def test_build_determinism(tmp_path):
    specs, sessions = _determinism_corpus(random.Random(50))
    corpus = write_corpus(tmp_path / "corpus", sessions, specs)
    trees = []
    for workers in (1, 4, 8):
        for attempt in ("a", "b"):
            out = tmp_path / f"out-{workers}-{attempt}"
            rc = cli_main(["build", "-d", str(corpus), "-o", str(out),
                           "-a", "-j", str(workers)])
            assert rc == 0
            trees.append(store_tree(out))
    assert all(t == trees[0] for t in trees[1:])
    assert any(name.endswith(".omdoc.xml") for name in trees[0])
    assert "rdf/corpus.nt" in trees[0]


# -- criterion 4 -------------------------------------------------------------


@criterion(4, "scheduler bounds", budget_s=10)
def test_scheduler_bounds():
    rng = random.Random(44)
    for _ in range(200):
        specs = random_corpus(rng, n_theories=rng.randrange(2, 11),
                              max_decls=2, max_cost=60)
        costs = {n: s.cost() for n, s in specs.items()}
        bplan = make_plan(specs)
        for workers in (1, 2, 4):
            lower, upper = makespan_bounds(bplan, costs, workers)
            report = run_build(bplan, EngineConfig(workers=workers))
            assert report.failed == 0
            assert lower <= report.makespan_ms <= upper
            if workers == 1:
                assert report.makespan_ms == upper


# -- criterion 5 -------------------------------------------------------------


@criterion(5, "incremental correctness", budget_s=60)
def test_incremental_correctness(tmp_path):
    rng = random.Random(55)
    for case in range(100):
        specs = random_corpus(rng, n_theories=rng.randrange(3, 8), max_decls=3)
        cat_sessions = [("S", [], None, list(specs))]
        bplan = make_plan(specs, cat_sessions)
        inc_dir = tmp_path / f"inc{case}"
        inc_store = Store(inc_dir)
        inc_store.set_order(bplan.canonical_order)
        engine = Engine(bplan, EngineConfig(workers=2),
                        on_commit=lambda t, p: inc_store.write("S", t, p))
        engine.process()

        victim = rng.choice(list(specs))
        specs[victim] = TheorySpec(
            victim, specs[victim].imports,
            specs[victim].decls + [Decl("const", f"edit{case}")],
        )
        expected = {victim} | descendants(engine.graph, victim)
        invalidated = engine.apply_edit(victim, render_theory(specs[victim]).encode())
        assert invalidated == expected
        engine.process()

        scratch_dir = tmp_path / f"scratch{case}"
        scratch_plan = make_plan(specs, cat_sessions)
        scratch_store = Store(scratch_dir)
        scratch_store.set_order(scratch_plan.canonical_order)
        run_build(scratch_plan, EngineConfig(workers=2),
                  on_commit=lambda t, p: scratch_store.write("S", t, p))
        assert store_tree(inc_dir) == store_tree(scratch_dir)


# -- criterion 6 -------------------------------------------------------------


@criterion(6, "commit/purge protocol", budget_s=1)
def test_commit_purge_protocol():
    specs = diamond_corpus({"A": 3, "B": 5, "C": 7, "D": 2})
    engine = Engine(make_plan(specs), EngineConfig(workers=2, purge_watermark=1))
    engine.process()
    graph = engine.graph
    status_now = {}
    commit_index = {}
    for i, ev in enumerate(engine.events):
        if ev.kind == "committed":
            assert ev.theory not in commit_index, "node committed twice"
            commit_index[ev.theory] = i
        elif ev.kind == "node_status":
            if ev.status is Status.PURGED:
                for dependent in graph.successors(ev.theory):
                    assert status_now.get(dependent) in (Status.COMMITTED, Status.PURGED), (
                        f"purged {ev.theory} before dependent {dependent} committed"
                    )
            status_now[ev.theory] = ev.status
    assert set(commit_index) == {"A", "B", "C", "D"}
    for a, b in graph.edges:
        assert commit_index[a] < commit_index[b], "commit order broke dependency"


# -- criterion 7 -------------------------------------------------------------


@criterion(7, "triple-count law", budget_s=5)
def test_triple_count_law(tmp_path):
    rng = random.Random(77)
    checked = 0
    for case in range(12):
        specs = random_corpus(rng, n_theories=rng.randrange(4, 12), max_decls=4)
        bplan = make_plan(specs)
        out = tmp_path / f"law{case}"
        store = Store(out)
        store.set_order(bplan.canonical_order)
        collected = {}
        report = run_build(bplan, EngineConfig(workers=2),
                           on_commit=lambda t, p: (store.write("S", t, p),
                                                   collected.__setitem__(t, p)))
        assert report.failed == 0
        for name, payload in collected.items():
            spec = specs[name]
            uses = sum(len(set(d.refs) | set(d.facts)) for d in spec.decls)
            expected = 1 + len(spec.imports) + 3 * len(spec.decls) + uses
            assert len(payload.triples) == expected, name
            checked += 1
        parsed = parse_ntriples(store.read_corpus_nt().decode())
        expected_multiset = Counter(
            t for payload in collected.values() for t in payload.triples
        )
        assert Counter(parsed) == expected_multiset
    assert checked >= 100, f"only {checked} theories exercised"


# -- criterion 8 -------------------------------------------------------------


class _Client:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=20)
        self.file = self.sock.makefile("rwb")

    def send_raw(self, data: bytes):
        self.file.write(data + b"\n")
        self.file.flush()

    def send(self, obj):
        self.send_raw(json.dumps(obj).encode())

    def recv(self):
        line = self.file.readline()
        if not line:
            return None
        return json.loads(line)  # every output line must parse as JSON

    def recv_reply(self):
        while True:
            msg = self.recv()
            assert msg is not None
            if "event" not in msg:
                return msg

    def drain_until(self, event):
        msgs = []
        while True:
            msg = self.recv()
            assert msg is not None
            msgs.append(msg)
            if msg.get("event") == event:
                return msgs

    def close(self):
        self.sock.close()


def _check_wave(msgs, import_edges):
    finished = msgs[-1]
    assert finished["event"] == "build_finished"
    timing_sum = sum(m["cpu_ms"] for m in msgs if m.get("event") == "timing")
    assert finished["cpu_ms"] == timing_sum, "per-node cpu must sum to the total"
    ok_order = [m["theory"] for m in msgs
                if m.get("event") == "node_status" and m["status"] == "finished_ok"]
    position = {t: i for i, t in enumerate(ok_order)}
    for a, b in import_edges:
        if a in position and b in position:
            assert position[a] < position[b], "finished_ok order broke imports"


@criterion(8, "server conformance", budget_s=10)
def test_server_conformance(tmp_path):
    specs = chain_corpus(5, cost=2)
    corpus = write_corpus(tmp_path / "corpus", [("S", [], None, list(specs))], specs)
    edges = [(f"T{i}", f"T{i+1}") for i in range(4)]

    server = ForgeServer(0, EngineConfig(workers=2), store_dir=str(tmp_path / "store"))
    server.start()
    try:
        client = _Client(server.port)
        client.send({"command": "echo", "id": 1, "payload": "ping"})
        reply = client.recv_reply()
        assert reply == {"result": "ok", "id": 1, "payload": "ping"}

        client.send({"command": "load", "id": 2, "dir": str(corpus),
                     "selection": {"all": True}})
        reply = client.recv_reply()
        assert reply["id"] == 2 and reply["nodes"] == 5
        _check_wave(client.drain_until("build_finished"), edges)

        head = TheorySpec("T0", [], [Decl("const", "c0"), Decl("const", "c0x")])
        client.send({"command": "edit", "id": 3, "theory": "T0",
                     "source": render_theory(head)})
        reply = client.recv_reply()
        assert reply["id"] == 3
        assert reply["invalidated"] == ["T0", "T1", "T2", "T3", "T4"]
        wave = client.drain_until("build_finished")
        _check_wave(wave, edges)
        recommitted = [m["theory"] for m in wave if m.get("event") == "committed"]
        assert recommitted == ["T0", "T1", "T2", "T3", "T4"]

        client.send({"command": "purge", "id": 4})
        reply = client.recv_reply()
        assert reply["id"] == 4 and set(reply["purged"]) == set(specs)

        client.send({"command": "shutdown", "id": 5})
        assert client.recv_reply() == {"result": "ok", "id": 5}
        assert server.wait(10)
        client.close()
    finally:
        server.stop()

    # fuzz a fresh server with 1000 malformed lines; it must answer each
    # with a parse/protocol error and stay alive
    fuzz_server = ForgeServer(0, EngineConfig(), store_dir=str(tmp_path / "fuzz-store"))
    fuzz_server.start()
    try:
        rng = random.Random(88)
        client = _Client(fuzz_server.port)
        alphabet = bytes(range(32, 127)) + b"\t\x00\xff"
        for _ in range(1000):
            line = bytes(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            line = line.replace(b"\n", b"?").replace(b"\r", b"?")
            client.send_raw(line)
            reply = client.recv_reply()
            assert reply["result"] == "error"
            assert reply["kind"] in ("parse", "protocol")
        client.send({"command": "echo", "id": "alive"})
        assert client.recv_reply()["result"] == "ok"
        client.close()
    finally:
        fuzz_server.stop()


# -- criterion 9 -------------------------------------------------------------


@criterion(9, "parser robustness", budget_s=60)
def test_parser_robustness():
    rng = random.Random(99)
    seed_texts = [
        b"",
        b"theory A begin end",
        b'theory B imports A begin const c :: "t" definition d = "c" end',
        b'theory C begin theorem t : "x" by (a b) cost 9 end',
        b'(* c *) theory D begin section "s" end',
    ]
    worst = 0.0
    for i in range(10_000):
        if i % 3 == 0:
            data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 120)))
        else:
            base = bytearray(rng.choice(seed_texts))
            for _ in range(rng.randrange(0, 8)):
                if base:
                    pos = rng.randrange(len(base))
                    op = rng.random()
                    if op < 0.4:
                        base[pos] = rng.randrange(256)
                    elif op < 0.7:
                        del base[pos]
                    else:
                        base.insert(pos, rng.randrange(256))
                else:
                    base.append(rng.randrange(256))
            data = bytes(base)
        t0 = perf_counter()
        try:
            tokenize(data)
            assert_tiling(data)
        except Exception as exc:
            assert type(exc).__name__ in (
                "LexError", "EncodingError"), f"tokenize crashed: {exc!r}"
        try:
            parse_theory(data)
        except Exception as exc:
            assert type(exc).__name__ in (
                "ParseError", "LexError", "SemanticError", "EncodingError",
            ), f"parse_theory crashed: {exc!r}"
        dt = perf_counter() - t0
        worst = max(worst, dt)
        assert dt < 0.1, f"input {i} took {dt*1000:.1f} ms (limit 100 ms)"
    assert worst < 0.1
