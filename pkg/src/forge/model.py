"""Domain types shared by every other module.

Positions are byte ranges (encoding-independent); line/column are derived
1-based display values counting LF as the only line terminator. Theory
names are corpus-unique, so imports never need session qualification.
All values here are immutable once constructed except NodeState, which is
owned and serialized by the build engine.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field


def digest(data: bytes) -> str:
    """Content digest of raw bytes; stable across runs and platforms."""
    return hashlib.sha256(data).hexdigest()


def line_column_of(contents: bytes, offset: int) -> tuple[int, int]:
    """1-based (line, column) of a byte offset; column counts bytes since
    the last LF plus one. `offset` may equal len(contents)."""
    if offset < 0 or offset > len(contents):
        raise ValueError(f"offset {offset} out of range 0..{len(contents)}")
    line = contents.count(b"\n", 0, offset) + 1
    last_nl = contents.rfind(b"\n", 0, offset)
    return line, offset - last_nl if last_nl >= 0 else offset + 1


@dataclass(frozen=True, order=True)
class Position:
    """Byte range [start, stop) inside a source file."""

    file: str
    start: int
    stop: int
    line: int
    column: int

    @classmethod
    def make(cls, file: str, contents: bytes, start: int, stop: int) -> "Position":
        line, column = line_column_of(contents, start)
        return cls(file, start, stop, line, column)

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "start": self.start,
            "stop": self.stop,
            "line": self.line,
            "column": self.column,
        }

    def sourceref(self) -> str:
        return f"{self.file}:{self.start}:{self.stop}"


@dataclass(frozen=True)
class QuotedText:
    """A decoded string-literal payload.

    `pos` spans the literal including quotes. `char_offsets[i]` is the
    source byte offset of decoded character i (the backslash for escape
    sequences), so identifier occurrences inside the payload can be mapped
    back to exact file ranges.
    """

    text: str
    pos: Position
    char_offsets: tuple[int, ...]


@dataclass(frozen=True)
class Section:
    text: QuotedText
    pos: Position


@dataclass(frozen=True)
class Const:
    name: str
    type_text: QuotedText
    pos: Position
    name_pos: Position


@dataclass(frozen=True)
class Definition:
    name: str
    body: QuotedText
    pos: Position
    name_pos: Position


@dataclass(frozen=True)
class Theorem:
    name: str
    statement: QuotedText
    facts: tuple[str, ...]
    cost: int  # declared milliseconds, >= 0
    pos: Position
    name_pos: Position
    fact_positions: tuple[Position, ...] = ()


Command = Section | Const | Definition | Theorem

DECLARATIONS = (Const, Definition, Theorem)

KIND_OF_COMMAND = {Const: "const", Definition: "definition", Theorem: "theorem"}


def payload_of(cmd: Command) -> QuotedText:
    """The quoted payload of a declaration command."""
    if isinstance(cmd, Const):
        return cmd.type_text
    if isinstance(cmd, Definition):
        return cmd.body
    if isinstance(cmd, Theorem):
        return cmd.statement
    raise ValueError(f"{type(cmd).__name__} has no declaration payload")


@dataclass(frozen=True)
class TheoryDoc:
    """A parsed theory source file."""

    name: str
    imports: tuple[str, ...]
    commands: tuple[Command, ...]
    source_hash: str
    file: str = "<input>"
    source_size: int = 0
    keyword_spans: tuple[Position, ...] = ()
    name_pos: Position | None = None

    def declarations(self) -> list[Const | Definition | Theorem]:
        return [c for c in self.commands if isinstance(c, DECLARATIONS)]

    def total_cost(self) -> int:
        return sum(c.cost for c in self.commands if isinstance(c, Theorem))


@dataclass(frozen=True)
class SessionSpec:
    name: str
    groups: frozenset[str]
    parent: str | None
    theories: tuple[str, ...]


@dataclass(frozen=True)
class Catalog:
    """Session definitions plus the theory ownership index."""

    sessions: dict[str, SessionSpec]
    theory_owner: dict[str, str]

    def session_order(self) -> list[str]:
        return list(self.sessions)

    def ancestors_of(self, session: str) -> list[str]:
        """Parent chain of a session, nearest first."""
        chain = []
        cur = self.sessions[session].parent
        while cur is not None:
            chain.append(cur)
            cur = self.sessions[cur].parent
        return chain


class Status(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    FINISHED_OK = "finished_ok"
    FINISHED_FAILED = "finished_failed"
    COMMITTED = "committed"
    PURGED = "purged"


# The full transition relation; anything else is rejected. Invalidation
# may re-enter PENDING from any state.
LEGAL_TRANSITIONS: frozenset[tuple[Status, Status]] = frozenset(
    [
        (Status.PENDING, Status.RUNNING),
        (Status.RUNNING, Status.FINISHED_OK),
        (Status.RUNNING, Status.FINISHED_FAILED),
        (Status.FINISHED_OK, Status.COMMITTED),
        (Status.COMMITTED, Status.PURGED),
    ]
    + [(s, Status.PENDING) for s in Status]
)


def can_transition(old: Status, new: Status) -> bool:
    return (old, new) in LEGAL_TRANSITIONS


@dataclass(frozen=True)
class Timing:
    elapsed_ms: int = 0
    cpu_ms: int = 0
    scheduled_at: int = 0
    finished_at: int = 0


Severity = str  # "error" | "warning"


@dataclass(frozen=True)
class Diagnostic:
    pos: Position
    severity: Severity
    message: str


@dataclass
class NodeState:
    """Per-theory build lifecycle record, owned by the engine."""

    node: str
    version: int = 1
    status: Status = Status.PENDING
    timing: Timing = field(default_factory=Timing)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    exports: object | None = None  # ExportPayload when FINISHED_OK/COMMITTED

    def transition(self, new: Status) -> None:
        if not can_transition(self.status, new):
            raise ValueError(
                f"illegal transition {self.status.value} -> {new.value} for {self.node}"
            )
        self.status = new
        if new not in (Status.FINISHED_OK, Status.COMMITTED):
            self.exports = None

    def invalidate(self) -> None:
        """Any state back to PENDING with a version bump."""
        self.transition(Status.PENDING)
        self.version += 1
        self.diagnostics = []
        self.timing = Timing()


__all__ = [
    "digest",
    "line_column_of",
    "Position",
    "QuotedText",
    "Section",
    "Const",
    "Definition",
    "Theorem",
    "Command",
    "DECLARATIONS",
    "KIND_OF_COMMAND",
    "payload_of",
    "TheoryDoc",
    "SessionSpec",
    "Catalog",
    "Status",
    "LEGAL_TRANSITIONS",
    "can_transition",
    "Timing",
    "Diagnostic",
    "NodeState",
]
