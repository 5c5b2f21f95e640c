"""Lexer and recursive-descent parser for theory files and ROOT catalogs.

Tokens tile the input: concatenating token texts plus skipped whitespace
and comments reconstructs the source byte-for-byte. All offsets are byte
offsets into the raw file; string payloads are decoded separately and keep
a per-character map back to source offsets so occurrences inside them get
exact file positions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CycleError, EncodingError, LexError, ParseError, SemanticError
from .model import (
    Catalog,
    Command,
    Const,
    Definition,
    Position,
    QuotedText,
    Section,
    SessionSpec,
    Theorem,
    TheoryDoc,
    digest,
    payload_of,
)

KEYWORDS = frozenset(
    "theory imports begin end section const definition theorem by cost theories session".split()
)

# Longest first so '::' wins over ':'.
DELIMITERS = ("::", "=", ":", "(", ")", "+")

_WHITESPACE = b" \t\n\r"
_NAME_START = frozenset(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
_NAME_CONT = _NAME_START | frozenset(b"0123456789_'")
_DIGITS = frozenset(b"0123456789")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | string | natural | delimiter
    text: str  # exact source substring, escapes and quotes included
    pos: Position


class _Lexer:
    def __init__(self, contents: bytes, file: str):
        try:
            contents.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"{file}: invalid UTF-8 at byte {exc.start}") from exc
        self.contents = contents
        self.file = file
        self.i = 0

    def _pos(self, start: int, stop: int) -> Position:
        return Position.make(self.file, self.contents, start, stop)

    def _skip_trivia(self) -> None:
        b = self.contents
        while self.i < len(b):
            c = b[self.i]
            if c in _WHITESPACE:
                self.i += 1
            elif b.startswith(b"(*", self.i):
                self._skip_comment()
            else:
                return

    def _skip_comment(self) -> None:
        b = self.contents
        open_at = self.i
        depth = 0
        while self.i < len(b):
            if b.startswith(b"(*", self.i):
                depth += 1
                self.i += 2
            elif b.startswith(b"*)", self.i):
                depth -= 1
                self.i += 2
                if depth == 0:
                    return
            else:
                self.i += 1
        raise LexError("unterminated comment", self._pos(open_at, open_at + 2))

    def _lex_string(self) -> Token:
        b = self.contents
        open_at = self.i
        self.i += 1
        while self.i < len(b):
            c = b[self.i]
            if c == ord('"'):
                self.i += 1
                text = b[open_at : self.i].decode("utf-8")
                return Token("string", text, self._pos(open_at, self.i))
            if c == ord("\\"):
                if self.i + 1 >= len(b) or b[self.i + 1] not in b'"\\':
                    raise LexError(
                        "invalid escape sequence (only \\\" and \\\\ are allowed)",
                        self._pos(self.i, min(self.i + 2, len(b))),
                    )
                self.i += 2
            else:
                self.i += 1
        raise LexError("unterminated string", self._pos(open_at, open_at + 1))

    def next_token(self) -> Token | None:
        self._skip_trivia()
        b = self.contents
        if self.i >= len(b):
            return None
        start = self.i
        c = b[start]
        if c == ord('"'):
            return self._lex_string()
        if c in _NAME_START:
            self.i += 1
            while self.i < len(b) and b[self.i] in _NAME_CONT:
                self.i += 1
            text = b[start : self.i].decode("utf-8")
            kind = "keyword" if text in KEYWORDS else "identifier"
            return Token(kind, text, self._pos(start, self.i))
        if c in _DIGITS:
            self.i += 1
            while self.i < len(b) and b[self.i] in _DIGITS:
                self.i += 1
            return Token("natural", b[start : self.i].decode(), self._pos(start, self.i))
        for delim in DELIMITERS:
            if b.startswith(delim.encode(), start):
                self.i = start + len(delim)
                return Token("delimiter", delim, self._pos(start, self.i))
        raise LexError(
            f"unexpected character {b[start:start + 1]!r}", self._pos(start, start + 1)
        )


def tokenize(contents: bytes, file: str = "<input>") -> list[Token]:
    lexer = _Lexer(contents, file)
    tokens = []
    while (tok := lexer.next_token()) is not None:
        tokens.append(tok)
    return tokens


def decode_quoted(contents: bytes, tok: Token) -> QuotedText:
    """Decode a string token, mapping every decoded character back to the
    source byte offset it starts at (the backslash for escapes)."""
    assert tok.kind == "string"
    chars: list[str] = []
    offsets: list[int] = []
    i = tok.pos.start + 1
    end = tok.pos.stop - 1
    while i < end:
        b = contents[i]
        if b == ord("\\"):
            chars.append(chr(contents[i + 1]))
            offsets.append(i)
            i += 2
        elif b < 0x80:
            chars.append(chr(b))
            offsets.append(i)
            i += 1
        else:
            # UTF-8 multi-byte sequence; length from the lead byte.
            width = 2 if b < 0xE0 else 3 if b < 0xF0 else 4
            chars.append(contents[i : i + width].decode("utf-8"))
            offsets.append(i)
            i += width
    return QuotedText("".join(chars), tok.pos, tuple(offsets))


class _Parser:
    def __init__(self, contents: bytes, file: str):
        self.contents = contents
        self.file = file
        self.tokens = tokenize(contents, file)
        self.i = 0

    def _eof_pos(self) -> Position:
        n = len(self.contents)
        return Position.make(self.file, self.contents, n, n)

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self._eof_pos())
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None, label: str | None = None) -> Token:
        tok = self.peek()
        want = label or text or kind
        if tok is None:
            raise ParseError(f"expected {want}, found end of input", self._eof_pos())
        if tok.kind != kind or (text is not None and tok.text != text):
            raise ParseError(f"expected {want}, found {tok.text!r}", tok.pos)
        self.i += 1
        return tok

    def at_keyword(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "keyword" and tok.text == text

    def expect_name(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"expected {what}, found end of input", self._eof_pos())
        if tok.kind != "identifier":
            raise ParseError(f"expected {what}, found {tok.text!r}", tok.pos)
        self.i += 1
        return tok

    def expect_string(self) -> QuotedText:
        tok = self.expect("string", label="string literal")
        return decode_quoted(self.contents, tok)

    def span(self, first: Token, last: Token) -> Position:
        return Position.make(self.file, self.contents, first.pos.start, last.pos.stop)


def _parse_theory_header(p: _Parser) -> tuple[Token, list[Token]]:
    p.expect("keyword", "theory")
    name = p.expect_name("theory name")
    imports: list[Token] = []
    if p.at_keyword("imports"):
        p.advance()
        imports.append(p.expect_name("imported theory name"))
        while (tok := p.peek()) is not None and tok.kind == "identifier":
            imports.append(p.advance())
    return name, imports


def _check_header(name: Token, imports: list[Token]) -> None:
    seen: set[str] = set()
    for tok in imports:
        if tok.text == name.text:
            raise SemanticError(f"theory {name.text} imports itself", tok.pos)
        if tok.text in seen:
            raise SemanticError(f"duplicate import {tok.text}", tok.pos)
        seen.add(tok.text)


def parse_header(contents: bytes, file: str = "<input>") -> tuple[str, tuple[str, ...]]:
    """Name and imports only; tolerates errors after `begin` so dependency
    planning can proceed even when a theory body will fail to parse."""
    lexer = _Lexer(contents, file)

    class _HeaderParser(_Parser):
        def __init__(self) -> None:
            self.contents = contents
            self.file = file
            self.tokens = []
            self.i = 0

        def peek(self) -> Token | None:  # pull tokens lazily
            while self.i >= len(self.tokens):
                tok = lexer.next_token()
                if tok is None:
                    return None
                self.tokens.append(tok)
            return self.tokens[self.i]

    p = _HeaderParser()
    name, imports = _parse_theory_header(p)
    _check_header(name, imports)
    return name.text, tuple(tok.text for tok in imports)


def _parse_command(p: _Parser) -> Command:
    tok = p.peek()
    assert tok is not None
    if tok.kind != "keyword" or tok.text not in ("section", "const", "definition", "theorem"):
        raise ParseError(
            f"expected command (section/const/definition/theorem) or end, found {tok.text!r}",
            tok.pos,
        )
    first = p.advance()
    if first.text == "section":
        payload = p.expect_string()
        return Section(payload, Position.make(p.file, p.contents, first.pos.start, payload.pos.stop))
    name = p.expect_name(f"{first.text} name")
    if first.text == "const":
        p.expect("delimiter", "::")
        payload = p.expect_string()
        pos = Position.make(p.file, p.contents, first.pos.start, payload.pos.stop)
        return Const(name.text, payload, pos, name.pos)
    if first.text == "definition":
        p.expect("delimiter", "=")
        payload = p.expect_string()
        pos = Position.make(p.file, p.contents, first.pos.start, payload.pos.stop)
        return Definition(name.text, payload, pos, name.pos)
    # theorem
    p.expect("delimiter", ":")
    payload = p.expect_string()
    stop = payload.pos.stop
    facts: list[Token] = []
    if p.at_keyword("by"):
        p.advance()
        p.expect("delimiter", "(")
        while (tok := p.peek()) is not None and tok.kind == "identifier":
            facts.append(p.advance())
        stop = p.expect("delimiter", ")").pos.stop
    cost = 0
    if p.at_keyword("cost"):
        p.advance()
        nat = p.expect("natural", label="cost value")
        cost = int(nat.text)
        stop = nat.pos.stop
    pos = Position.make(p.file, p.contents, first.pos.start, stop)
    return Theorem(
        name.text,
        payload,
        tuple(tok.text for tok in facts),
        cost,
        pos,
        name.pos,
        tuple(tok.pos for tok in facts),
    )


def parse_theory(contents: bytes, file: str = "<input>") -> TheoryDoc:
    p = _Parser(contents, file)
    name, imports = _parse_theory_header(p)
    _check_header(name, imports)
    p.expect("keyword", "begin")
    commands: list[Command] = []
    declared: dict[str, Position] = {}
    while not p.at_keyword("end"):
        cmd = _parse_command(p)
        if not isinstance(cmd, Section):
            if cmd.name in declared:
                raise SemanticError(f"duplicate declaration {cmd.name}", cmd.name_pos)
            declared[cmd.name] = cmd.name_pos
        commands.append(cmd)
    p.expect("keyword", "end")
    if (extra := p.peek()) is not None:
        raise ParseError(f"unexpected input after end: {extra.text!r}", extra.pos)
    keyword_spans = tuple(t.pos for t in p.tokens if t.kind == "keyword")
    return TheoryDoc(
        name=name.text,
        imports=tuple(tok.text for tok in imports),
        commands=tuple(commands),
        source_hash=digest(contents),
        file=file,
        source_size=len(contents),
        keyword_spans=keyword_spans,
        name_pos=name.pos,
    )


def parse_catalog(contents: bytes, file: str = "ROOT") -> Catalog:
    p = _Parser(contents, file)
    sessions: dict[str, SessionSpec] = {}
    session_pos: dict[str, Position] = {}
    theory_owner: dict[str, str] = {}
    while p.peek() is not None:
        p.expect("keyword", "session")
        name = p.expect_name("session name")
        if name.text in sessions:
            raise SemanticError(f"duplicate session {name.text}", name.pos)
        groups: set[str] = set()
        tok = p.peek()
        if tok is not None and tok.kind == "delimiter" and tok.text == "(":
            p.advance()
            while (tok := p.peek()) is not None and tok.kind == "identifier":
                groups.add(p.advance().text)
            p.expect("delimiter", ")")
        parent: str | None = None
        tok = p.peek()
        if tok is not None and tok.kind == "delimiter" and tok.text == "=":
            p.advance()
            parent = p.expect_name("parent session name").text
            p.expect("delimiter", "+")
        p.expect("keyword", "theories")
        theories: list[str] = []
        first_theory = p.expect_name("theory name")
        theory_toks = [first_theory]
        while (tok := p.peek()) is not None and tok.kind == "identifier":
            theory_toks.append(p.advance())
        for tok in theory_toks:
            if tok.text in theories:
                raise SemanticError(
                    f"duplicate theory {tok.text} in session {name.text}", tok.pos
                )
            if tok.text in theory_owner:
                raise SemanticError(
                    f"theory {tok.text} claimed by both {theory_owner[tok.text]} and {name.text}",
                    tok.pos,
                )
            theories.append(tok.text)
            theory_owner[tok.text] = name.text
        sessions[name.text] = SessionSpec(
            name.text, frozenset(groups), parent, tuple(theories)
        )
        session_pos[name.text] = name.pos
    for spec in sessions.values():
        if spec.parent is not None and spec.parent not in sessions:
            raise SemanticError(
                f"unknown parent session {spec.parent} of {spec.name}",
                session_pos[spec.name],
            )
    _check_parent_cycles(sessions)
    return Catalog(sessions=sessions, theory_owner=theory_owner)


def _check_parent_cycles(sessions: dict[str, SessionSpec]) -> None:
    for start in sessions:
        chain = [start]
        seen = {start}
        cur = sessions[start].parent
        while cur is not None:
            chain.append(cur)
            if cur in seen:
                tail = chain[chain.index(cur) :]
                raise CycleError(tail)
            seen.add(cur)
            cur = sessions[cur].parent


def identifier_occurrences(cmd: Command) -> list[tuple[str, Position]]:
    """Maximal NAME-shaped substrings inside a declaration's quoted payload,
    positioned in the original file. Runs of name characters that do not
    start with a letter (e.g. type variables like 'a) yield nothing."""
    if isinstance(cmd, Section):
        raise ValueError("identifier_occurrences requires a declaration command")
    return payload_occurrences(payload_of(cmd))


_NAME_CONT_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_'"
)
_NAME_START_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")


def payload_occurrences(payload: QuotedText) -> list[tuple[str, Position]]:
    occs: list[tuple[str, Position]] = []
    text = payload.text
    i = 0
    while i < len(text):
        if text[i] in _NAME_CONT_CHARS:
            j = i
            while j < len(text) and text[j] in _NAME_CONT_CHARS:
                j += 1
            if text[i] in _NAME_START_CHARS:
                occs.append((text[i:j], _payload_position(payload, i, j)))
            i = j
        else:
            i += 1
    return occs


def _payload_position(payload: QuotedText, i: int, j: int) -> Position:
    start = payload.char_offsets[i]
    stop = payload.char_offsets[j - 1] + 1  # name characters are single bytes
    line = payload.pos.line
    column = payload.pos.column + (start - payload.pos.start)
    for k in range(i):
        if payload.text[k] == "\n":
            line += 1
            column = start - payload.char_offsets[k]
    return Position(payload.pos.file, start, stop, line, column)


def escape_string(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_theory(doc: TheoryDoc) -> str:
    """Canonical printer; parsing the output yields a structurally equal
    TheoryDoc (positions aside)."""
    lines = [f"theory {doc.name}"]
    if doc.imports:
        lines.append("  imports " + " ".join(doc.imports))
    lines.append("begin")
    for cmd in doc.commands:
        lines.append("")
        if isinstance(cmd, Section):
            lines.append(f"section {escape_string(cmd.text.text)}")
        elif isinstance(cmd, Const):
            lines.append(f"const {cmd.name} :: {escape_string(cmd.type_text.text)}")
        elif isinstance(cmd, Definition):
            lines.append(f"definition {cmd.name} = {escape_string(cmd.body.text)}")
        else:
            part = f"theorem {cmd.name} : {escape_string(cmd.statement.text)}"
            if cmd.facts:
                part += " by (" + " ".join(cmd.facts) + ")"
            if cmd.cost:
                part += f" cost {cmd.cost}"
            lines.append(part)
    lines.append("")
    lines.append("end")
    return "\n".join(lines) + "\n"
