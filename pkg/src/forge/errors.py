"""Exception taxonomy shared by all forge modules.

Every user-facing failure derives from ForgeError so the CLI and server can
map it to an exit code / wire error kind in one place. Positions are
attached where a source location is known.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .model import Position


class ForgeError(Exception):
    """Base class for all diagnosable failures."""

    def __init__(self, message: str, pos: "Position | None" = None):
        super().__init__(message)
        self.message = message
        self.pos = pos

    def __str__(self) -> str:
        if self.pos is not None:
            p = self.pos
            return f"{p.file}:{p.line}:{p.column}: {self.message}"
        return self.message


class EncodingError(ForgeError):
    """Input bytes are not valid UTF-8."""


class LexError(ForgeError):
    """Unterminated string/comment or byte outside the token alphabet."""


class ParseError(ForgeError):
    """Token stream does not match the grammar."""


class SemanticError(ForgeError):
    """Well-formed syntax violating a structural invariant (duplicates,
    self-imports, double theory ownership, unknown parents)."""


class CycleError(ForgeError):
    """A dependency relation that must be acyclic has a cycle.

    `cycle` holds one witness as a node sequence whose first and last
    elements coincide.
    """

    def __init__(self, cycle: list):
        super().__init__("dependency cycle: " + " -> ".join(str(n) for n in cycle))
        self.cycle = list(cycle)


class NotFoundError(ForgeError):
    """Reference to an unknown session, theory, node, or missing source."""


class ScopeError(ForgeError):
    """Import crossing session boundaries outside the parent chain."""


class StoreError(ForgeError):
    """I/O failure in the on-disk export store."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message}: {path}")
        self.path = path
