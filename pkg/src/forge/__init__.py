"""forge: a desk-scale theory build system.

Declarative theory sources and session catalogs are parsed into an acyclic
dependency graph, built incrementally over a bounded worker pool, and
exported per node as semantic markup, OMDoc-style XML, and RDF N-Triples.
A headless TCP/JSON server exposes the same engine to external programs,
with a read-only HTTP facet over the export store.
"""

from .depgraph import DepGraph, Selection, ancestors, build_graph, descendants, select, topo_order
from .engine import (
    BuildPlan,
    BuildReport,
    Engine,
    EngineConfig,
    Environment,
    check_theory,
    factor,
    format_factor,
    load_corpus,
    makespan_bounds,
    plan,
    run_build,
)
from .errors import (
    CycleError,
    EncodingError,
    ForgeError,
    LexError,
    NotFoundError,
    ParseError,
    ScopeError,
    SemanticError,
    StoreError,
)
from .export import ExportPayload, MarkupNode, MarkupTree, Triple, markup_of, omdoc_of, parse_ntriples, rdf_of
from .model import Catalog, NodeState, Position, SessionSpec, Status, TheoryDoc, Timing, digest, line_column_of
from .server import ForgeServer
from .store import Store, write_store
from .syntax import format_theory, identifier_occurrences, parse_catalog, parse_theory, tokenize

__version__ = "0.1.0"
