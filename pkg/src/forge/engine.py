"""Build engine.

Plans a session sub-graph, schedules theory nodes over a bounded worker
pool, resolves identifier occurrences against the accumulated environment,
records timing, applies incremental edits, and drives the commit-then-purge
lifecycle with a pluggable commit consumer.

Two execution modes share one scheduling policy (highest declared cost
first, then name): the default accounting mode advances a virtual clock by
declared costs and is fully deterministic; realtime mode burns declared
costs as wall time on real worker threads. Result bytes are identical in
both modes and for any worker count; only timing differs.

Commits are released in the lexicographically-least topological order of
the theory graph. Any such fixed linear extension satisfies the
dependency-consistency requirement and makes the triple store independent
of scheduling accidents.
"""

from __future__ import annotations

import heapq
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from queue import Empty, Queue

from . import syntax
from .depgraph import DepGraph, Selection, build_graph, descendants, select, session_graph, topo_order
from .errors import ForgeError, NotFoundError, ScopeError, SemanticError
from .export import (
    CommandResolution,
    ExportPayload,
    ResolvedRef,
    Resolution,
    UnresolvedRef,
    markup_of,
    omdoc_of,
    rdf_of,
)
from .model import (
    KIND_OF_COMMAND,
    Catalog,
    Diagnostic,
    NodeState,
    Position,
    Section,
    Status,
    Theorem,
    TheoryDoc,
    Timing,
    digest,
    payload_of,
)


def factor(elapsed: float, cpu: float) -> float:
    """CPU time over elapsed time, full precision."""
    if elapsed <= 0:
        raise ValueError("elapsed time must be positive")
    return cpu / elapsed


def format_factor(value: float) -> str:
    """One-decimal display form used in reports."""
    return f"{value:.1f}"


# ---------------------------------------------------------------------------
# Environment


@dataclass(frozen=True)
class EnvEntry:
    long_name: str  # Theory.decl
    kind: str  # const | definition | theorem
    pos: Position

    @property
    def short_name(self) -> str:
        return self.long_name.partition(".")[2]


class Environment:
    """Ordered declaration map. Long names are unique; for short names the
    most recently merged entry wins, so later imports and local
    declarations shadow earlier ones."""

    def __init__(self, entries=()):
        self._entries: dict[str, EnvEntry] = {}
        self._short: dict[str, str] = {}
        for entry in entries:
            self.add(entry)

    def add(self, entry: EnvEntry) -> None:
        if entry.long_name not in self._entries:
            self._entries[entry.long_name] = entry
        self._short[entry.short_name] = entry.long_name

    def lookup(self, short_name: str) -> EnvEntry | None:
        long_name = self._short.get(short_name)
        return self._entries[long_name] if long_name is not None else None

    def lookup_long(self, long_name: str) -> EnvEntry | None:
        return self._entries.get(long_name)

    def entries(self) -> list[EnvEntry]:
        return list(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, long_name: str) -> bool:
        return long_name in self._entries

    @classmethod
    def merge(cls, envs) -> "Environment":
        merged = cls()
        for env in envs:
            for entry in env._entries.values():
                merged.add(entry)
        return merged


@dataclass(frozen=True)
class CheckResult:
    delta: tuple[EnvEntry, ...]
    markup: object  # MarkupTree
    diagnostics: tuple[Diagnostic, ...]
    resolution: Resolution


def check_theory(doc: TheoryDoc, env: Environment) -> CheckResult:
    """Process commands in order: resolve identifier occurrences and by
    clause facts against imports plus earlier local declarations, then
    extend the environment. Failures are diagnostics, never exceptions."""
    local = Environment(env.entries())
    delta: list[EnvEntry] = []
    diagnostics: list[Diagnostic] = []
    resolutions: list[CommandResolution] = []
    for cmd in doc.commands:
        if isinstance(cmd, Section):
            resolutions.append(CommandResolution())
            continue
        payload_refs = []
        for name, pos in syntax.payload_occurrences(payload_of(cmd)):
            entry = local.lookup(name)
            if entry is None:
                payload_refs.append(UnresolvedRef(name, pos))
                diagnostics.append(Diagnostic(pos, "error", f"unresolved identifier {name}"))
            else:
                payload_refs.append(ResolvedRef(name, pos, entry.long_name, entry.pos, entry.kind))
        fact_refs = []
        if isinstance(cmd, Theorem):
            for fname, fpos in zip(cmd.facts, cmd.fact_positions):
                entry = local.lookup(fname)
                if entry is None:
                    fact_refs.append(UnresolvedRef(fname, fpos))
                    diagnostics.append(Diagnostic(fpos, "error", f"unknown fact {fname}"))
                else:
                    fact_refs.append(ResolvedRef(fname, fpos, entry.long_name, entry.pos, entry.kind))
        entry = EnvEntry(f"{doc.name}.{cmd.name}", KIND_OF_COMMAND[type(cmd)], cmd.name_pos)
        local.add(entry)
        delta.append(entry)
        resolutions.append(CommandResolution(tuple(payload_refs), tuple(fact_refs)))
    resolution = tuple(resolutions)
    markup = markup_of(doc, resolution)
    return CheckResult(tuple(delta), markup, tuple(diagnostics), resolution)


# ---------------------------------------------------------------------------
# Planning


@dataclass(frozen=True)
class EngineConfig:
    workers: int = 1
    purge_watermark: int = 64
    realtime: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.purge_watermark < 1:
            raise ValueError("purge_watermark must be >= 1")


@dataclass
class BuildPlan:
    selected_sessions: list[str]  # session topological order
    theory_graph: DepGraph
    initial_versions: dict[str, str]  # theory -> content digest
    catalog: Catalog
    sources: dict[str, bytes]
    docs: dict[str, TheoryDoc | None]  # None: body failed to parse
    parse_errors: dict[str, Diagnostic]
    parse_ms: dict[str, int]
    imports: dict[str, tuple[str, ...]]

    @property
    def canonical_order(self) -> list[str]:
        return topo_order(self.theory_graph)


def _source_file(theory: str) -> str:
    return f"{theory}.thy"


def _check_visibility(
    catalog: Catalog, theory: str, imp: str, selected: set[str]
) -> None:
    owner = catalog.theory_owner[imp]
    mine = catalog.theory_owner[theory]
    if owner != mine and owner not in catalog.ancestors_of(mine):
        raise ScopeError(
            f"theory {theory} (session {mine}) imports {imp} from "
            f"non-ancestor session {owner}"
        )
    if owner not in selected:
        raise NotFoundError(
            f"import {imp} of theory {theory} belongs to unselected session {owner}"
        )


def plan(catalog: Catalog, sel: Selection, sources: dict[str, bytes]) -> BuildPlan:
    """Parse selected sources and assemble the theory dependency graph.
    Header-level problems abort planning; body-level parse errors are kept
    as diagnostics and fail the node at build time."""
    sgraph = session_graph(catalog)
    selected = select(catalog, sgraph, sel)
    sub_edges = [
        (s.parent, s.name)
        for s in catalog.sessions.values()
        if s.name in selected and s.parent in selected
    ]
    selected_sessions = topo_order(build_graph(selected, sub_edges))

    theories: list[str] = []
    for session in selected_sessions:
        theories.extend(catalog.sessions[session].theories)

    docs: dict[str, TheoryDoc | None] = {}
    parse_errors: dict[str, Diagnostic] = {}
    parse_ms: dict[str, int] = {}
    imports: dict[str, tuple[str, ...]] = {}
    plan_sources: dict[str, bytes] = {}
    for theory in theories:
        source = sources.get(theory)
        if source is None:
            raise NotFoundError(f"missing source for theory {theory}")
        plan_sources[theory] = source
        name, doc, diag, ms = _parse_source(theory, source)
        if name != theory:
            raise SemanticError(
                f"source for theory {theory} declares theory {name}"
            )
        docs[theory] = doc
        if diag is not None:
            parse_errors[theory] = diag
        parse_ms[theory] = ms
        imports[theory] = doc.imports if doc is not None else _header_imports(source, theory)

    edges = []
    for theory in theories:
        for imp in imports[theory]:
            if imp not in catalog.theory_owner:
                raise NotFoundError(f"theory {theory} imports unknown theory {imp}")
            _check_visibility(catalog, theory, imp, selected)
            edges.append((imp, theory))
    graph = build_graph(theories, edges)
    return BuildPlan(
        selected_sessions=selected_sessions,
        theory_graph=graph,
        initial_versions={t: digest(src) for t, src in plan_sources.items()},
        catalog=catalog,
        sources=plan_sources,
        docs=docs,
        parse_errors=parse_errors,
        parse_ms=parse_ms,
        imports=imports,
    )


def _parse_source(
    theory: str, source: bytes
) -> tuple[str, TheoryDoc | None, Diagnostic | None, int]:
    """Full parse where possible; header-only fallback keeps the build
    planable when only the body is broken."""
    file = _source_file(theory)
    t0 = time.perf_counter()
    try:
        doc = syntax.parse_theory(source, file)
        ms = int((time.perf_counter() - t0) * 1000)
        return doc.name, doc, None, ms
    except ForgeError as exc:
        name, _ = syntax.parse_header(source, file)  # header errors propagate
        ms = int((time.perf_counter() - t0) * 1000)
        pos = exc.pos or Position(file, 0, 0, 1, 1)
        return name, None, Diagnostic(pos, "error", exc.message), ms


def _header_imports(source: bytes, theory: str) -> tuple[str, ...]:
    _, imps = syntax.parse_header(source, _source_file(theory))
    return imps


def load_corpus(directory: str | Path) -> tuple[Catalog, dict[str, bytes]]:
    """Read ROOT and every cataloged theory source present in a corpus
    directory. Missing files simply leave the theory without a source and
    surface at plan time if selected."""
    root = Path(directory)
    root_file = root / "ROOT"
    if not root_file.is_file():
        raise NotFoundError(f"no ROOT catalog in {root}")
    catalog = syntax.parse_catalog(root_file.read_bytes(), "ROOT")
    sources = {}
    for theory in catalog.theory_owner:
        path = root / _source_file(theory)
        if path.is_file():
            sources[theory] = path.read_bytes()
    return catalog, sources


def makespan_bounds(plan: BuildPlan, costs: dict[str, int], workers: int) -> tuple[int, int]:
    """[max(critical path, ceil(total/workers)), total]; any non-idling
    schedule of the DAG lands inside."""
    total = sum(costs[n] for n in plan.theory_graph.nodes)
    lower = max(critical_path(plan.theory_graph, costs), math.ceil(total / workers))
    return lower, total


def critical_path(graph: DepGraph, costs: dict[str, int]) -> int:
    best: dict[str, int] = {}
    for node in topo_order(graph):
        incoming = [best[p] for p in graph.predecessors(node)]
        best[node] = costs[node] + (max(incoming) if incoming else 0)
    return max(best.values(), default=0)


# ---------------------------------------------------------------------------
# Events and reports


@dataclass(frozen=True)
class Event:
    kind: str  # node_status | committed | timing | build_finished
    theory: str = ""
    status: Status | None = None
    version: int = 0
    triples: int = 0
    elapsed_ms: int = 0
    cpu_ms: int = 0
    ok: int = 0
    failed: int = 0


@dataclass
class BuildReport:
    statuses: dict[str, Status]
    timings: dict[str, Timing]
    diagnostics: dict[str, list[Diagnostic]]
    committed: list[str]
    purged: list[str]
    makespan_ms: int
    wall_ms: int
    cpu_ms: int
    ok: int
    failed: int

    @property
    def all_ok(self) -> bool:
        return self.failed == 0

    def factor(self) -> float:
        return factor(self.wall_ms, self.cpu_ms)


_OK_STATUSES = (Status.FINISHED_OK, Status.COMMITTED)
_TERMINAL = (Status.COMMITTED, Status.PURGED, Status.FINISHED_FAILED)


@dataclass
class _NodeResult:
    theory: str
    version: int
    ok: bool
    diagnostics: tuple[Diagnostic, ...]
    env: Environment | None
    exports: ExportPayload | None
    check_ms: int


@dataclass(frozen=True)
class _NodeInputs:
    theory: str
    version: int
    doc: TheoryDoc | None
    import_env: Environment | None
    parse_error: Diagnostic | None
    cost: int


class Engine:
    """Owns all mutable build state; mutations happen on the thread that
    runs process()/apply_edit(), reads are guarded by a lock so the server
    facets can snapshot concurrently."""

    def __init__(self, plan: BuildPlan, cfg: EngineConfig, on_commit=None, on_event=None):
        self.plan = plan
        self.cfg = cfg
        self.on_commit = on_commit
        self.on_event = on_event
        self.graph = plan.theory_graph
        self.canonical: list[str] = plan.canonical_order
        self.states = {t: NodeState(t) for t in sorted(self.graph.nodes)}
        self.sources = dict(plan.sources)
        self.digests = dict(plan.initial_versions)
        self.docs: dict[str, TheoryDoc | None] = dict(plan.docs)
        self.parse_errors = dict(plan.parse_errors)
        self.imports = dict(plan.imports)
        self.envs: dict[str, Environment] = {}
        self.committed_version: dict[str, int] = {t: 0 for t in sorted(self.graph.nodes)}
        self.events: list[Event] = []
        self.lock = threading.RLock()
        self._pending_parse_ms = dict(plan.parse_ms)

    @classmethod
    def load(
        cls,
        catalog: Catalog,
        sources: dict[str, bytes],
        sel: Selection,
        cfg: EngineConfig,
        on_commit=None,
        on_event=None,
    ) -> "Engine":
        return cls(plan(catalog, sel, sources), cfg, on_commit, on_event)

    # -- events ------------------------------------------------------------

    def _emit(self, event: Event) -> None:
        self.events.append(event)
        if self.on_event is not None:
            self.on_event(event)

    def _emit_status(self, theory: str) -> None:
        state = self.states[theory]
        self._emit(Event("node_status", theory, state.status, state.version))

    # -- snapshots (server facets) ------------------------------------------

    def statuses(self) -> dict[str, tuple[Status, int]]:
        with self.lock:
            return {t: (s.status, s.version) for t, s in self.states.items()}

    def committed_theories(self) -> list[str]:
        with self.lock:
            return sorted(t for t, v in self.committed_version.items() if v > 0)

    # -- incremental edits ---------------------------------------------------

    def apply_edit(self, theory: str, new_source: bytes) -> set[str]:
        """Invalidate the edited theory and everything downstream. Edits
        that would break the plan itself (header errors, unknown imports,
        cycles, visibility) are rejected and leave state untouched."""
        with self.lock:
            if theory not in self.graph.nodes:
                raise NotFoundError(f"unknown theory {theory}")
            if digest(new_source) == self.digests[theory]:
                return set()
            old_descendants = descendants(self.graph, theory)
            name, doc, diag, ms = _parse_source(theory, new_source)
            if name != theory:
                raise SemanticError(f"edit for theory {theory} declares theory {name}")
            new_imports = doc.imports if doc is not None else _header_imports(new_source, theory)
            graph = self.graph
            if new_imports != self.imports[theory]:
                selected = set(self.plan.selected_sessions)
                for imp in new_imports:
                    if imp not in self.graph.nodes:
                        raise NotFoundError(f"theory {theory} imports unknown theory {imp}")
                    _check_visibility(self.plan.catalog, theory, imp, selected)
                edges = [
                    (imp, t)
                    for t in self.graph.nodes
                    for imp in (new_imports if t == theory else self.imports[t])
                ]
                graph = build_graph(self.graph.nodes, edges)  # CycleError rejects
            # Commit the edit.
            self.graph = graph
            self.canonical = topo_order(graph)
            self.imports[theory] = new_imports
            self.sources[theory] = new_source
            self.digests[theory] = digest(new_source)
            self.docs[theory] = doc
            self.parse_errors.pop(theory, None)
            if diag is not None:
                self.parse_errors[theory] = diag
            self._pending_parse_ms[theory] = ms
            invalidated = {theory} | old_descendants | descendants(graph, theory)
            for name in sorted(invalidated):
                state = self.states[name]
                state.invalidate()
                self.envs.pop(name, None)
                self._emit_status(name)
            return invalidated

    # -- purging ---------------------------------------------------------

    def _purge_eligible(self, theory: str) -> bool:
        state = self.states[theory]
        if state.status is not Status.COMMITTED:
            return False
        return all(
            self.states[d].status in _TERMINAL for d in self.graph.successors(theory)
        )

    def _purge_one(self, theory: str) -> None:
        self.states[theory].transition(Status.PURGED)
        self.envs.pop(theory, None)
        self.docs.pop(theory, None)
        self._emit_status(theory)

    def _resident(self) -> list[str]:
        return [t for t, s in self.states.items() if s.status in _OK_STATUSES]

    def _auto_purge(self, purged: list[str]) -> None:
        if len(self._resident()) <= self.cfg.purge_watermark:
            return
        for theory in self.canonical:
            if len(self._resident()) <= self.cfg.purge_watermark:
                return
            if self._purge_eligible(theory):
                self._purge_one(theory)
                purged.append(theory)

    def force_purge(self) -> list[str]:
        """Evict every eligible committed node regardless of watermark."""
        with self.lock:
            purged = []
            for theory in self.canonical:
                if self._purge_eligible(theory):
                    self._purge_one(theory)
                    purged.append(theory)
            return purged

    # -- processing one node -------------------------------------------------

    def _ensure_doc(self, theory: str) -> None:
        """Reload a purged (or never parsed) document from source."""
        if theory in self.docs:
            return
        name, doc, diag, ms = _parse_source(theory, self.sources[theory])
        self.docs[theory] = doc
        self.parse_errors.pop(theory, None)
        if diag is not None:
            self.parse_errors[theory] = diag
        self._pending_parse_ms[theory] = ms

    def _declared_cost(self, theory: str) -> int:
        doc = self.docs.get(theory)
        return doc.total_cost() if doc is not None else 0

    def _import_env(self, theory: str) -> Environment:
        return Environment.merge(self.envs[i] for i in self.imports[theory])

    def _snapshot_inputs(self, theory: str) -> "_NodeInputs":
        """Immutable processing inputs, captured under the lock so realtime
        workers never touch shared dictionaries."""
        doc = self.docs[theory]
        return _NodeInputs(
            theory=theory,
            version=self.states[theory].version,
            doc=doc,
            import_env=self._import_env(theory) if doc is not None else None,
            parse_error=self.parse_errors.get(theory),
            cost=self._declared_cost(theory),
        )

    @staticmethod
    def _compute(inputs: "_NodeInputs") -> _NodeResult:
        """Pure node processing; safe on any thread."""
        t0 = time.perf_counter()
        if inputs.doc is None:
            return _NodeResult(inputs.theory, inputs.version, False, (inputs.parse_error,),
                               None, None, int((time.perf_counter() - t0) * 1000))
        result = check_theory(inputs.doc, inputs.import_env)
        ok = not any(d.severity == "error" for d in result.diagnostics)
        env = None
        exports = None
        if ok:
            env = Environment(inputs.import_env.entries())
            for entry in result.delta:
                env.add(entry)
            exports = ExportPayload(
                result.markup,
                omdoc_of(inputs.doc, result.resolution),
                tuple(rdf_of(inputs.doc, result.resolution)),
            )
        check_ms = int((time.perf_counter() - t0) * 1000)
        return _NodeResult(inputs.theory, inputs.version, ok, result.diagnostics, env, exports, check_ms)

    def _apply_result(self, res: _NodeResult, cost: int, elapsed_ms: int,
                      scheduled_at: int, finished_at: int, stats: "_WaveStats") -> None:
        state = self.states[res.theory]
        if state.status is not Status.RUNNING or state.version != res.version:
            return  # invalidated while in flight
        cpu = cost + res.check_ms + self._pending_parse_ms.pop(res.theory, 0)
        state.timing = Timing(elapsed_ms, cpu, scheduled_at, finished_at)
        state.diagnostics = list(res.diagnostics)
        if res.ok:
            state.transition(Status.FINISHED_OK)
            state.exports = res.exports
            self.envs[res.theory] = res.env
            stats.ok += 1
        else:
            state.transition(Status.FINISHED_FAILED)
            stats.failed += 1
        self._emit_status(res.theory)
        self._emit(Event("timing", res.theory, elapsed_ms=elapsed_ms, cpu_ms=cpu))
        stats.cpu_ms += cpu

    # -- commit gating ---------------------------------------------------

    def _release_commits(self, stats: "_WaveStats") -> None:
        for theory in self.canonical:
            state = self.states[theory]
            if state.status is Status.FINISHED_OK:
                if state.version > self.committed_version[theory]:
                    if self.on_commit is not None:
                        self.on_commit(theory, state.exports)
                    self.committed_version[theory] = state.version
                    stats.committed.append(theory)
                    self._emit(Event("committed", theory, version=state.version,
                                     triples=len(state.exports.triples)))
                state.transition(Status.COMMITTED)
                self._emit_status(theory)
            elif state.status not in _TERMINAL:
                return

    # -- skip propagation ---------------------------------------------------

    def _propagate_skips(self, stats: "_WaveStats") -> None:
        changed = True
        while changed:
            changed = False
            for theory, state in self.states.items():
                if state.status is not Status.PENDING:
                    continue
                failed = [i for i in self.imports[theory]
                          if self.states[i].status is Status.FINISHED_FAILED]
                if not failed:
                    continue
                doc = self.docs.get(theory)
                pos = doc.name_pos if doc is not None and doc.name_pos else Position(
                    _source_file(theory), 0, 0, 1, 1)
                state.transition(Status.RUNNING)
                self._emit_status(theory)
                state.transition(Status.FINISHED_FAILED)
                state.diagnostics = [
                    Diagnostic(pos, "error", f"skipped: import {i} failed") for i in failed
                ]
                state.timing = Timing()
                self._emit_status(theory)
                self._emit(Event("timing", theory, elapsed_ms=0, cpu_ms=0))
                stats.failed += 1
                changed = True

    def _expand_reloads(self) -> None:
        changed = True
        while changed:
            changed = False
            for theory, state in self.states.items():
                if state.status is not Status.PENDING:
                    continue
                for imp in self.imports[theory]:
                    if self.states[imp].status is Status.PURGED:
                        self.states[imp].transition(Status.PENDING)
                        self._emit_status(imp)
                        changed = True

    def _ready(self, busy: set[str]) -> list[str]:
        out = []
        for theory, state in self.states.items():
            if state.status is not Status.PENDING or theory in busy:
                continue
            if all(self.states[i].status in _OK_STATUSES for i in self.imports[theory]):
                out.append(theory)
        return out

    def _start(self, theory: str) -> None:
        assert all(
            self.states[i].status in _OK_STATUSES for i in self.imports[theory]
        ), f"{theory} started before its imports finished"
        self._ensure_doc(theory)
        self.states[theory].transition(Status.RUNNING)
        self._emit_status(theory)

    # -- the two drivers ---------------------------------------------------

    def process(self, poll=None) -> BuildReport:
        """Run every pending node to a terminal state; returns the wave
        report. `poll` is invoked between completion events so an external
        command queue can inject edits and purges mid-build."""
        t0 = time.perf_counter()
        stats = _WaveStats()
        if self.cfg.realtime:
            makespan = self._drive_realtime(poll, stats)
        else:
            makespan = self._drive_accounting(poll, stats)
        wall_ms = max(1, int((time.perf_counter() - t0) * 1000))
        with self.lock:
            report = BuildReport(
                statuses={t: s.status for t, s in self.states.items()},
                timings={t: s.timing for t, s in self.states.items()},
                diagnostics={t: list(s.diagnostics) for t, s in self.states.items()},
                committed=stats.committed,
                purged=stats.purged,
                makespan_ms=makespan,
                wall_ms=wall_ms,
                cpu_ms=stats.cpu_ms,
                ok=stats.ok,
                failed=stats.failed,
            )
            self._emit(Event("build_finished", ok=stats.ok, failed=stats.failed,
                             elapsed_ms=wall_ms, cpu_ms=stats.cpu_ms))
        return report

    def _schedule_starts(self, stats: "_WaveStats", in_flight: set[str]) -> list["_NodeInputs"]:
        """Housekeeping plus LPT start selection; returns the inputs of the
        nodes to launch. Caller must hold the lock."""
        self._expand_reloads()
        self._propagate_skips(stats)
        self._release_commits(stats)
        self._auto_purge(stats.purged)
        ready = self._ready(in_flight)
        ready.sort(key=lambda t: (-self._declared_cost(t), t))
        launches = []
        for theory in ready[: max(0, self.cfg.workers - len(in_flight))]:
            self._start(theory)
            in_flight.add(theory)
            launches.append(self._snapshot_inputs(theory))
        return launches

    def _drive_accounting(self, poll, stats: "_WaveStats") -> int:
        """Discrete-event simulation on a virtual millisecond clock; node
        durations are their declared costs."""
        now = 0
        busy: list[tuple[int, str, "_NodeInputs"]] = []  # (finish, theory, inputs)
        in_flight: set[str] = set()
        while True:
            if poll is not None:
                poll()
            with self.lock:
                for inputs in self._schedule_starts(stats, in_flight):
                    heapq.heappush(busy, (now + inputs.cost, inputs.theory, inputs))
            if not busy:
                break
            now, theory, inputs = heapq.heappop(busy)
            in_flight.discard(theory)
            with self.lock:
                state = self.states[theory]
                if state.status is Status.RUNNING and state.version == inputs.version:
                    result = self._compute(inputs)
                    self._apply_result(result, inputs.cost, inputs.cost,
                                       now - inputs.cost, now, stats)
        with self.lock:
            self._release_commits(stats)
            self._auto_purge(stats.purged)
        return now

    def _drive_realtime(self, poll, stats: "_WaveStats") -> int:
        """Real worker threads; declared cost burns as wall time inside the
        worker, so parallelism is observable."""
        t0 = time.perf_counter()
        done: Queue = Queue()

        def elapsed() -> int:
            return int((time.perf_counter() - t0) * 1000)

        def work(inputs: "_NodeInputs", started_ms: int) -> None:
            time.sleep(inputs.cost / 1000.0)
            try:
                result = self._compute(inputs)
            except Exception as exc:  # keep the coordinator alive
                pos = Position(_source_file(inputs.theory), 0, 0, 1, 1)
                result = _NodeResult(inputs.theory, inputs.version, False,
                                     (Diagnostic(pos, "error", f"internal error: {exc}"),),
                                     None, None, 0)
            done.put((result, inputs, started_ms))

        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            in_flight: set[str] = set()
            while True:
                if poll is not None:
                    poll()
                with self.lock:
                    for inputs in self._schedule_starts(stats, in_flight):
                        pool.submit(work, inputs, elapsed())
                if not in_flight:
                    break
                try:
                    result, inputs, started_ms = done.get(timeout=0.05)
                except Empty:
                    continue
                in_flight.discard(result.theory)
                finished_ms = elapsed()
                with self.lock:
                    self._apply_result(result, inputs.cost, finished_ms - started_ms,
                                       started_ms, finished_ms, stats)
        with self.lock:
            self._release_commits(stats)
            self._auto_purge(stats.purged)
        return max(1, elapsed())


@dataclass
class _WaveStats:
    ok: int = 0
    failed: int = 0
    cpu_ms: int = 0
    committed: list[str] = field(default_factory=list)
    purged: list[str] = field(default_factory=list)


def run_build(plan: BuildPlan, cfg: EngineConfig, on_commit=None, on_event=None) -> BuildReport:
    """One-shot batch build over a plan."""
    return Engine(plan, cfg, on_commit, on_event).process()
