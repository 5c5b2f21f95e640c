"""Export representations of a checked theory.

Three views of the same node: a markup tree over the source bytes, a
canonical OMDoc-style XML document, and RDF triples under a minimal
ULO-like vocabulary, serialized as N-Triples. All three are pure,
deterministic functions of (TheoryDoc, resolution): equal inputs give
byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import (
    DECLARATIONS,
    KIND_OF_COMMAND,
    Position,
    Section,
    TheoryDoc,
    payload_of,
)

ULO_DECLARES = "ulo:declares"
ULO_TYPE = "ulo:type"
ULO_USES = "ulo:uses"
ULO_IMPORTS = "ulo:imports"
ULO_SOURCEREF = "ulo:sourceref"
ULO_THEORY = "ulo:theory"
ULO_KIND = {"const": "ulo:constant", "definition": "ulo:definition", "theorem": "ulo:theorem"}

XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"
OMDOC_NS = "http://omdoc.org/ns"


def theory_iri(theory: str) -> str:
    return f"corpus:/theory/{theory}"


def decl_iri(long_name: str) -> str:
    theory, _, name = long_name.partition(".")
    return f"corpus:/theory/{theory}#{name}"


# ---------------------------------------------------------------------------
# Resolution: what the checker found out about identifier occurrences.


@dataclass(frozen=True)
class ResolvedRef:
    name: str
    pos: Position
    target: str  # long name Theory.decl
    target_pos: Position
    kind: str  # const | definition | theorem


@dataclass(frozen=True)
class UnresolvedRef:
    name: str
    pos: Position


Ref = ResolvedRef | UnresolvedRef


@dataclass(frozen=True)
class CommandResolution:
    """Refs found in one command: inside its quoted payload, and in the
    by-clause fact list (theorems only)."""

    payload: tuple[Ref, ...] = ()
    facts: tuple[Ref, ...] = ()


Resolution = tuple  # tuple[CommandResolution, ...], parallel to doc.commands


# ---------------------------------------------------------------------------
# Markup


@dataclass(frozen=True)
class MarkupNode:
    range: Position
    kind: str  # keyword | string | entity-def | entity-ref | error
    properties: dict = field(default_factory=dict)
    children: tuple = ()

    def to_json(self) -> dict:
        return {
            "range": self.range.to_json(),
            "kind": self.kind,
            "properties": dict(self.properties),
            "children": [c.to_json() for c in self.children],
        }


@dataclass(frozen=True)
class MarkupTree:
    root: tuple[MarkupNode, ...]

    def validate(self, source_size: int) -> None:
        _validate_siblings(self.root, None, source_size)

    def to_json(self) -> list:
        return [n.to_json() for n in self.root]

    def walk(self):
        stack = list(reversed(self.root))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def _validate_siblings(nodes: tuple, parent: MarkupNode | None, size: int) -> None:
    prev_stop = None
    for node in nodes:
        r = node.range
        if not (0 <= r.start <= r.stop <= size):
            raise ValueError(f"markup range out of bounds: {r}")
        if prev_stop is not None and r.start < prev_stop:
            raise ValueError(f"overlapping sibling markup at {r}")
        if parent is not None:
            p = parent.range
            inside = p.start <= r.start and r.stop <= p.stop
            if not inside or (r.start == p.start and r.stop == p.stop):
                raise ValueError(f"child markup {r} not strictly inside parent {p}")
        prev_stop = r.stop
        _validate_siblings(node.children, node, size)


def _ref_node(ref: Ref) -> MarkupNode:
    if isinstance(ref, ResolvedRef):
        return MarkupNode(
            ref.pos,
            "entity-ref",
            {
                "target": ref.target,
                "kind": ref.kind,
                "target_file": ref.target_pos.file,
                "target_start": ref.target_pos.start,
                "target_stop": ref.target_pos.stop,
            },
        )
    return MarkupNode(ref.pos, "error", {"message": f"unresolved identifier {ref.name}"})


def markup_of(doc: TheoryDoc, resolution: Resolution) -> MarkupTree:
    """Keyword spans, declaration names as entity definitions, quoted
    payloads as string nodes holding entity references, unresolved
    occurrences as error nodes."""
    nodes: list[MarkupNode] = [MarkupNode(pos, "keyword") for pos in doc.keyword_spans]
    for cmd, res in zip(doc.commands, resolution):
        if isinstance(cmd, Section):
            nodes.append(MarkupNode(cmd.text.pos, "string"))
            continue
        long_name = f"{doc.name}.{cmd.name}"
        nodes.append(
            MarkupNode(
                cmd.name_pos,
                "entity-def",
                {"name": long_name, "kind": KIND_OF_COMMAND[type(cmd)]},
            )
        )
        payload = payload_of(cmd)
        children = tuple(
            _ref_node(ref) for ref in sorted(res.payload, key=lambda r: r.pos.start)
        )
        nodes.append(MarkupNode(payload.pos, "string", {}, children))
        for ref in res.facts:
            nodes.append(_ref_node(ref))
    nodes.sort(key=lambda n: (n.range.start, n.range.stop))
    tree = MarkupTree(tuple(nodes))
    tree.validate(doc.source_size)
    return tree


def markup_json(theory: str, tree: MarkupTree) -> bytes:
    obj = {"theory": theory, "markup": tree.to_json()}
    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=True) + "\n").encode()


# ---------------------------------------------------------------------------
# RDF


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    obj: str | int
    obj_is_iri: bool = True


def _nt_escape(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )


def _nt_unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"n": "\n", "r": "\r", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _nt_object(t: Triple) -> str:
    if t.obj_is_iri:
        return f"<{t.obj}>"
    if isinstance(t.obj, int):
        return f'"{t.obj}"^^<{XSD_INTEGER}>'
    return f'"{_nt_escape(t.obj)}"'


def nt_line(t: Triple) -> str:
    return f"<{t.subject}> <{t.predicate}> {_nt_object(t)} ."


def parse_ntriples(text: str) -> list[Triple]:
    """Strict-enough N-Triples reader used as the round-trip oracle; kept
    independent of the serializer above."""
    triples = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.endswith("."):
            raise ValueError(f"line {lineno}: missing terminating '.'")
        body = line[:-1].rstrip()
        subject, rest = _take_iri(body, lineno)
        predicate, rest = _take_iri(rest.lstrip(), lineno)
        triples.append(_take_object(subject, predicate, rest.lstrip(), lineno))
    return triples


def _take_iri(text: str, lineno: int) -> tuple[str, str]:
    if not text.startswith("<"):
        raise ValueError(f"line {lineno}: expected IRI, got {text[:20]!r}")
    end = text.index(">")
    return text[1:end], text[end + 1 :]


def _take_object(subject: str, predicate: str, text: str, lineno: int) -> Triple:
    if text.startswith("<"):
        iri, rest = _take_iri(text, lineno)
        if rest.strip():
            raise ValueError(f"line {lineno}: trailing data {rest!r}")
        return Triple(subject, predicate, iri)
    if not text.startswith('"'):
        raise ValueError(f"line {lineno}: expected IRI or literal, got {text[:20]!r}")
    i = 1
    while i < len(text):
        if text[i] == "\\":
            i += 2
            continue
        if text[i] == '"':
            break
        i += 1
    else:
        raise ValueError(f"line {lineno}: unterminated literal")
    value = _nt_unescape(text[1:i])
    rest = text[i + 1 :].strip()
    if rest == f"^^<{XSD_INTEGER}>":
        return Triple(subject, predicate, int(value), obj_is_iri=False)
    if rest:
        raise ValueError(f"line {lineno}: unsupported literal suffix {rest!r}")
    return Triple(subject, predicate, value, obj_is_iri=False)


def rdf_of(doc: TheoryDoc, resolution: Resolution) -> list[Triple]:
    """One type triple for the theory, one imports triple per import, and
    per declaration: declares + type + sourceref + one uses per distinct
    resolved target. Sorted for reproducible output."""
    t_iri = theory_iri(doc.name)
    triples = [Triple(t_iri, ULO_TYPE, ULO_THEORY)]
    for imp in doc.imports:
        triples.append(Triple(t_iri, ULO_IMPORTS, theory_iri(imp)))
    for cmd, res in zip(doc.commands, resolution):
        if not isinstance(cmd, DECLARATIONS):
            continue
        d_iri = decl_iri(f"{doc.name}.{cmd.name}")
        triples.append(Triple(t_iri, ULO_DECLARES, d_iri))
        triples.append(Triple(d_iri, ULO_TYPE, ULO_KIND[KIND_OF_COMMAND[type(cmd)]]))
        triples.append(Triple(d_iri, ULO_SOURCEREF, cmd.pos.sourceref(), obj_is_iri=False))
        targets = {
            ref.target for ref in (*res.payload, *res.facts) if isinstance(ref, ResolvedRef)
        }
        for target in targets:
            triples.append(Triple(d_iri, ULO_USES, decl_iri(target)))
    triples.sort(key=lambda t: (t.subject, t.predicate, _nt_object(t)))
    return triples


# ---------------------------------------------------------------------------
# OMDoc


@dataclass(frozen=True)
class OmdocDecl:
    kind: str
    long_name: str
    payload: str
    sourceref: str


@dataclass(frozen=True)
class OmdocDoc:
    theory: str
    declarations: tuple[OmdocDecl, ...]


def omdoc_doc_of(doc: TheoryDoc) -> OmdocDoc:
    decls = []
    for cmd in doc.commands:
        if not isinstance(cmd, DECLARATIONS):
            continue
        kind = KIND_OF_COMMAND[type(cmd)]
        decls.append(
            OmdocDecl(kind, f"{doc.name}.{cmd.name}", payload_of(cmd).text, cmd.pos.sourceref())
        )
    return OmdocDoc(doc.name, tuple(decls))


_OMDOC_ELEMENT = {"const": "omdoc:constant", "definition": "omdoc:definition", "theorem": "omdoc:theorem"}


def _xml_attr(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _cdata(text: str) -> str:
    # "]]>" must not appear inside a CDATA section; split it across two.
    return "<![CDATA[" + text.replace("]]>", "]]]]><![CDATA[>") + "]]>"


def omdoc_of(doc: TheoryDoc, resolution: Resolution | None = None) -> bytes:
    """Canonical serialization: fixed attribute order, 2-space indent, LF
    endings, UTF-8."""
    omdoc = omdoc_doc_of(doc)
    head = f'<omdoc:theory xmlns:omdoc="{OMDOC_NS}" name="{_xml_attr(omdoc.theory)}"'
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if not omdoc.declarations:
        lines.append(head + "/>")
    else:
        lines.append(head + ">")
        for decl in omdoc.declarations:
            element = _OMDOC_ELEMENT[decl.kind]
            lines.append(
                f'  <{element} name="{_xml_attr(decl.long_name)}"'
                f' sourceref="{_xml_attr(decl.sourceref)}">'
                f"{_cdata(decl.payload)}</{element}>"
            )
        lines.append("</omdoc:theory>")
    return ("\n".join(lines) + "\n").encode("utf-8")


@dataclass(frozen=True)
class ExportPayload:
    markup: MarkupTree
    omdoc: bytes
    triples: tuple[Triple, ...]
