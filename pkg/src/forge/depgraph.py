"""Generic acyclic dependency graph over opaque, orderable node ids.

An edge (a, b) means "b depends on a", so every topological order places
a before b. Used twice: sessions (parent edges) and theories (import
edges). Graphs are immutable; rebuild from sources on change.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Hashable, Iterable

from .errors import CycleError, NotFoundError
from .model import Catalog


@dataclass(frozen=True)
class DepGraph:
    nodes: frozenset
    edges: frozenset
    _succ: dict = field(repr=False, hash=False, compare=False, default_factory=dict)
    _pred: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    def successors(self, n: Hashable) -> set:
        self._require(n)
        return set(self._succ.get(n, ()))

    def predecessors(self, n: Hashable) -> set:
        self._require(n)
        return set(self._pred.get(n, ()))

    def _require(self, n: Hashable) -> None:
        if n not in self.nodes:
            raise NotFoundError(f"unknown node {n}")


def build_graph(nodes: Iterable[Hashable], edges: Iterable[tuple]) -> DepGraph:
    """Validate endpoints and acyclicity; cycles surface as CycleError
    carrying one witness cycle."""
    node_set = frozenset(nodes)
    edge_set = frozenset(edges)
    succ: dict = {n: set() for n in node_set}
    pred: dict = {n: set() for n in node_set}
    for a, b in edge_set:
        for endpoint in (a, b):
            if endpoint not in node_set:
                raise NotFoundError(f"edge ({a}, {b}) references unknown node {endpoint}")
        succ[a].add(b)
        pred[b].add(a)
    cycle = _find_cycle(node_set, succ)
    if cycle is not None:
        raise CycleError(cycle)
    return DepGraph(node_set, edge_set, succ, pred)


def _find_cycle(nodes: frozenset, succ: dict) -> list | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    for root in sorted(nodes):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(succ[root])))]
        color[root] = GREY
        path = [root]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    return path[path.index(nxt) :] + [nxt]
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    path.append(nxt)
                    stack.append((nxt, iter(sorted(succ[nxt]))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                path.pop()
                stack.pop()
    return None


def topo_order(g: DepGraph) -> list:
    """The lexicographically least topological order (deterministic)."""
    indegree = {n: len(g._pred.get(n, ())) for n in g.nodes}
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in g._succ.get(n, ()):
            indegree[m] -= 1
            if indegree[m] == 0:
                heapq.heappush(ready, m)
    assert len(order) == len(g.nodes)
    return order


def _reachable(start: Hashable, adjacency: dict) -> set:
    seen: set = set()
    frontier = [start]
    while frontier:
        n = frontier.pop()
        for m in adjacency.get(n, ()):
            if m not in seen:
                seen.add(m)
                frontier.append(m)
    return seen


def descendants(g: DepGraph, n: Hashable) -> set:
    """Everything reachable from n (n excluded)."""
    g._require(n)
    return _reachable(n, g._succ)


def ancestors(g: DepGraph, n: Hashable) -> set:
    """Everything n is reachable from (n excluded)."""
    g._require(n)
    return _reachable(n, g._pred)


@dataclass(frozen=True)
class Selection:
    """Which sessions a build covers. Exclusion beats inclusion; the
    requirements closure re-adds ancestors regardless of their groups."""

    include_groups: frozenset[str] = frozenset()
    exclude_groups: frozenset[str] = frozenset()
    sessions: tuple[str, ...] = ()
    all: bool = False
    requirements: bool = False

    @classmethod
    def of(
        cls,
        include_groups: Iterable[str] = (),
        exclude_groups: Iterable[str] = (),
        sessions: Iterable[str] = (),
        all: bool = False,
        requirements: bool = False,
    ) -> "Selection":
        return cls(
            frozenset(include_groups),
            frozenset(exclude_groups),
            tuple(sessions),
            all,
            requirements,
        )


def session_graph(catalog: Catalog) -> DepGraph:
    """Parent edges: a session depends on its parent."""
    edges = [
        (spec.parent, name)
        for name, spec in catalog.sessions.items()
        if spec.parent is not None
    ]
    return build_graph(catalog.sessions.keys(), edges)


def select(catalog: Catalog, graph: DepGraph, sel: Selection) -> set[str]:
    for name in sel.sessions:
        if name not in catalog.sessions:
            raise NotFoundError(f"unknown session {name}")
    chosen = set(sel.sessions)
    if sel.all:
        chosen |= set(catalog.sessions)
    if sel.include_groups:
        chosen |= {
            name
            for name, spec in catalog.sessions.items()
            if spec.groups & sel.include_groups
        }
    if sel.exclude_groups:
        chosen -= {
            name
            for name in chosen
            if catalog.sessions[name].groups & sel.exclude_groups
        }
    if sel.requirements:
        closure = set(chosen)
        for name in chosen:
            closure |= ancestors(graph, name)
        chosen = closure
    return chosen
